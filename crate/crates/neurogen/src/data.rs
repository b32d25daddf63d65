//! MNIST IDX ingestion and the train/validation/test split.
//!
//! The IDX container is read bit-exactly: big-endian headers, magic
//! 2051 for images and 2049 for labels. Pixels map from `0..=255` to
//! `[0, 1]` by division by 255; no centering is applied.
//!
//! The split is the first `train_count` / last `val_count` entries of a
//! seeded deterministic permutation of the training records. The split
//! permutation always uses [`SPLIT_SEED`], independent of the experiment
//! seed, so every experiment sees identical train/validation membership.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::rng::Rng;
use crate::tensor::Tensor;

pub const IMAGE_MAGIC: u32 = 2051;
pub const LABEL_MAGIC: u32 = 2049;

/// Canonical file names of the original distribution.
pub const TRAIN_IMAGES: &str = "train-images-idx3-ubyte";
pub const TRAIN_LABELS: &str = "train-labels-idx1-ubyte";
pub const TEST_IMAGES: &str = "t10k-images-idx3-ubyte";
pub const TEST_LABELS: &str = "t10k-labels-idx1-ubyte";

/// Seed of the permutation that defines train/validation membership.
pub const SPLIT_SEED: u64 = 0;

pub const TRAIN_COUNT: usize = 57_000;
pub const VAL_COUNT: usize = 3_000;
pub const CLASS_COUNT: usize = 10;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: bad magic {found} at offset 0, expected {expected}")]
    BadMagic {
        path: PathBuf,
        found: u32,
        expected: u32,
    },
    #[error("{path}: truncated at offset {offset}, needed {needed} more bytes")]
    Truncated {
        path: PathBuf,
        offset: usize,
        needed: usize,
    },
    #[error("item counts differ: {images} images vs {labels} labels")]
    CountMismatch { images: usize, labels: usize },
    #[error("label {label} out of range for {classes} classes at record {index}")]
    BadLabel {
        label: u8,
        classes: usize,
        index: usize,
    },
    #[error("split sizes {train} + {val} do not cover dataset of {total}")]
    SplitSize {
        train: usize,
        val: usize,
        total: usize,
    },
}

/// One image with its class id. Pixel values live in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledImage {
    pub pixels: Tensor,
    pub label: u8,
}

impl LabeledImage {
    pub fn rows(&self) -> usize {
        self.pixels.shape()[0]
    }

    pub fn cols(&self) -> usize {
        self.pixels.shape()[1]
    }
}

/// The three disjoint image sets of an experiment. The test set is loaded
/// separately and never reshuffled into train/validation.
#[derive(Debug, Clone)]
pub struct DataSplit {
    pub train: Vec<LabeledImage>,
    pub validation: Vec<LabeledImage>,
    pub test: Vec<LabeledImage>,
}

fn read_be_u32(bytes: &[u8], offset: usize, path: &Path) -> Result<u32, DataError> {
    let end = offset + 4;
    if bytes.len() < end {
        return Err(DataError::Truncated {
            path: path.to_path_buf(),
            offset,
            needed: end - bytes.len(),
        });
    }
    Ok(u32::from_be_bytes(bytes[offset..end].try_into().unwrap()))
}

fn read_file(path: &Path) -> Result<Vec<u8>, DataError> {
    std::fs::read(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Load one image file plus its label file into `LabeledImage` records.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Vec<LabeledImage>, DataError> {
    let img_bytes = read_file(images_path)?;
    let lbl_bytes = read_file(labels_path)?;

    let img_magic = read_be_u32(&img_bytes, 0, images_path)?;
    if img_magic != IMAGE_MAGIC {
        return Err(DataError::BadMagic {
            path: images_path.to_path_buf(),
            found: img_magic,
            expected: IMAGE_MAGIC,
        });
    }
    let lbl_magic = read_be_u32(&lbl_bytes, 0, labels_path)?;
    if lbl_magic != LABEL_MAGIC {
        return Err(DataError::BadMagic {
            path: labels_path.to_path_buf(),
            found: lbl_magic,
            expected: LABEL_MAGIC,
        });
    }

    let image_count = read_be_u32(&img_bytes, 4, images_path)? as usize;
    let rows = read_be_u32(&img_bytes, 8, images_path)? as usize;
    let cols = read_be_u32(&img_bytes, 12, images_path)? as usize;
    let label_count = read_be_u32(&lbl_bytes, 4, labels_path)? as usize;

    if image_count != label_count {
        return Err(DataError::CountMismatch {
            images: image_count,
            labels: label_count,
        });
    }

    let pixel_len = rows * cols;
    let img_payload = image_count * pixel_len;
    if img_bytes.len() < 16 + img_payload {
        return Err(DataError::Truncated {
            path: images_path.to_path_buf(),
            offset: img_bytes.len(),
            needed: 16 + img_payload - img_bytes.len(),
        });
    }
    if lbl_bytes.len() < 8 + label_count {
        return Err(DataError::Truncated {
            path: labels_path.to_path_buf(),
            offset: lbl_bytes.len(),
            needed: 8 + label_count - lbl_bytes.len(),
        });
    }

    let mut out = Vec::with_capacity(image_count);
    for i in 0..image_count {
        let label = lbl_bytes[8 + i];
        if label as usize >= CLASS_COUNT {
            return Err(DataError::BadLabel {
                label,
                classes: CLASS_COUNT,
                index: i,
            });
        }
        let start = 16 + i * pixel_len;
        let data: Vec<f32> = img_bytes[start..start + pixel_len]
            .iter()
            .map(|&b| b as f32 / 255.0)
            .collect();
        out.push(LabeledImage {
            pixels: Tensor::new(vec![rows, cols], data),
            label,
        });
    }
    Ok(out)
}

/// Serialize records back into IDX bytes (images file, labels file).
/// Loading and re-encoding an IDX file is byte-identical.
pub fn encode_idx(images: &[LabeledImage]) -> (Vec<u8>, Vec<u8>) {
    let (rows, cols) = if images.is_empty() {
        (0, 0)
    } else {
        (images[0].rows(), images[0].cols())
    };
    let mut img = Vec::with_capacity(16 + images.len() * rows * cols);
    img.extend_from_slice(&IMAGE_MAGIC.to_be_bytes());
    img.extend_from_slice(&(images.len() as u32).to_be_bytes());
    img.extend_from_slice(&(rows as u32).to_be_bytes());
    img.extend_from_slice(&(cols as u32).to_be_bytes());
    let mut lbl = Vec::with_capacity(8 + images.len());
    lbl.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    lbl.extend_from_slice(&(images.len() as u32).to_be_bytes());
    for image in images {
        for &p in image.pixels.data() {
            img.push((p * 255.0).round() as u8);
        }
        lbl.push(image.label);
    }
    (img, lbl)
}

/// Fisher-Yates, top down: element `i` swaps with a position in `0..=i`.
/// The permutation is a pure function of the generator state.
pub fn shuffle<T>(items: &mut [T], rng: &mut Rng) {
    for i in (1..items.len()).rev() {
        let j = rng.below(i + 1);
        items.swap(i, j);
    }
}

/// Split a dataset into train and validation parts: the first
/// `train_count` / last `val_count` entries of the seeded permutation.
pub fn split(
    mut dataset: Vec<LabeledImage>,
    train_count: usize,
    val_count: usize,
    seed: u64,
) -> Result<(Vec<LabeledImage>, Vec<LabeledImage>), DataError> {
    if train_count + val_count != dataset.len() {
        return Err(DataError::SplitSize {
            train: train_count,
            val: val_count,
            total: dataset.len(),
        });
    }
    let mut rng = Rng::new(seed);
    shuffle(&mut dataset, &mut rng);
    let validation = dataset.split_off(train_count);
    Ok((dataset, validation))
}

/// Load the four canonical files from `dir` and produce the experiment
/// split (57,000 train / 3,000 validation / 10,000 test by default).
pub fn load_mnist(dir: &Path) -> Result<DataSplit, DataError> {
    let all_train = load_idx(&dir.join(TRAIN_IMAGES), &dir.join(TRAIN_LABELS))?;
    let test = load_idx(&dir.join(TEST_IMAGES), &dir.join(TEST_LABELS))?;
    let (train, validation) = split(all_train, TRAIN_COUNT, VAL_COUNT, SPLIT_SEED)?;
    Ok(DataSplit {
        train,
        validation,
        test,
    })
}

/// Per-class record counts, for report payloads.
pub fn label_histogram(images: &[LabeledImage]) -> [usize; CLASS_COUNT] {
    let mut hist = [0usize; CLASS_COUNT];
    for image in images {
        hist[image.label as usize] += 1;
    }
    hist
}

/// Compact fingerprint of a record sequence (labels and pixel bits),
/// used by determinism checks.
pub fn fingerprint(images: &[LabeledImage]) -> String {
    let mut acc: u64 = 0xcbf2_9ce4_8422_2325;
    for image in images {
        acc = acc.wrapping_mul(0x100_0000_01b3) ^ image.label as u64;
        for &p in image.pixels.data() {
            acc = acc.wrapping_mul(0x100_0000_01b3) ^ p.to_bits() as u64;
        }
    }
    let mut s = String::new();
    write!(s, "{acc:016x}").unwrap();
    s
}

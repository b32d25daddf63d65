//! Binary model format.
//!
//! Layout: an 8-byte magic string, a format version, the network name,
//! then one record per layer (kind tag, hyperparameters, weight payload
//! as little-endian `f32`, sparse index lists as little-endian `u32`,
//! optional mask bytes), and a trailing CRC-32 of everything before it.
//! Serialization is byte-deterministic, so identical networks produce
//! identical files.

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::layers::{Activation, ConvLayer, DenseFcLayer, Layer, SparseFcLayer, SparsePerceptron};
use crate::network::Network;

pub const MODEL_MAGIC: &[u8; 8] = b"NGENMODL";
pub const MODEL_VERSION: u32 = 1;

const KIND_CONV: u8 = 0;
const KIND_DENSE: u8 = 1;
const KIND_SPARSE: u8 = 2;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("bad model magic")]
    BadMagic,
    #[error("unsupported model version {found} (supported: {supported})")]
    VersionMismatch { found: u32, supported: u32 },
    #[error("checksum mismatch: stored {stored:08x}, computed {computed:08x}")]
    Checksum { stored: u32, computed: u32 },
    #[error("model truncated at offset {offset}")]
    Truncated { offset: usize },
    #[error("corrupt model: {0}")]
    Corrupt(String),
}

/// CRC-32 (IEEE 802.3, reflected polynomial 0xEDB88320).
pub fn crc32(bytes: &[u8]) -> u32 {
    let mut table = [0u32; 256];
    for (i, slot) in table.iter_mut().enumerate() {
        let mut c = i as u32;
        for _ in 0..8 {
            c = if c & 1 != 0 {
                0xEDB8_8320 ^ (c >> 1)
            } else {
                c >> 1
            };
        }
        *slot = c;
    }
    let mut crc = 0xFFFF_FFFFu32;
    for &b in bytes {
        crc = table[((crc ^ b as u32) & 0xFF) as usize] ^ (crc >> 8);
    }
    crc ^ 0xFFFF_FFFF
}

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn new() -> Self {
        Writer { buf: Vec::new() }
    }

    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn f32(&mut self, v: f32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn f32s(&mut self, vs: &[f32]) {
        self.u32(vs.len() as u32);
        for &v in vs {
            self.f32(v);
        }
    }

    fn u32s(&mut self, vs: &[u32]) {
        self.u32(vs.len() as u32);
        for &v in vs {
            self.u32(v);
        }
    }

    fn mask(&mut self, mask: Option<&[bool]>) {
        match mask {
            None => self.u8(0),
            Some(m) => {
                self.u8(1);
                self.u32(m.len() as u32);
                self.buf.extend(m.iter().map(|&a| a as u8));
            }
        }
    }

    fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.buf.extend_from_slice(s.as_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ModelError> {
        if self.bytes.len() < self.pos + n {
            return Err(ModelError::Truncated { offset: self.pos });
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u8(&mut self) -> Result<u8, ModelError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, ModelError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32, ModelError> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32s(&mut self) -> Result<Vec<f32>, ModelError> {
        let n = self.u32()? as usize;
        let raw = self.take(n * 4)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn u32s(&mut self) -> Result<Vec<u32>, ModelError> {
        let n = self.u32()? as usize;
        let raw = self.take(n * 4)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn mask(&mut self) -> Result<Option<Vec<bool>>, ModelError> {
        match self.u8()? {
            0 => Ok(None),
            1 => {
                let n = self.u32()? as usize;
                Ok(Some(self.take(n)?.iter().map(|&b| b != 0).collect()))
            }
            other => Err(ModelError::Corrupt(format!("bad mask flag {other}"))),
        }
    }

    fn str(&mut self) -> Result<String, ModelError> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec())
            .map_err(|_| ModelError::Corrupt("name is not utf-8".into()))
    }
}

fn activation_tag(a: Activation) -> u8 {
    match a {
        Activation::Tanh => 0,
        Activation::Linear => 1,
    }
}

fn activation_from_tag(tag: u8) -> Result<Activation, ModelError> {
    match tag {
        0 => Ok(Activation::Tanh),
        1 => Ok(Activation::Linear),
        other => Err(ModelError::Corrupt(format!("bad activation tag {other}"))),
    }
}

/// Serialize a network to its byte representation.
pub fn to_bytes(net: &Network) -> Vec<u8> {
    let mut w = Writer::new();
    w.buf.extend_from_slice(MODEL_MAGIC);
    w.u32(MODEL_VERSION);
    w.str(&net.name);
    w.u32(net.layers.len() as u32);
    for layer in &net.layers {
        match layer {
            Layer::Conv(l) => {
                w.u8(KIND_CONV);
                for v in [
                    l.filters,
                    l.kernel,
                    l.depth,
                    l.stride,
                    l.pad_before,
                    l.pad_after,
                    l.in_rows,
                    l.in_cols,
                ] {
                    w.u32(v as u32);
                }
                w.f32s(l.weights());
                w.f32s(l.biases());
                w.mask(l.mask());
            }
            Layer::Dense(l) => {
                w.u8(KIND_DENSE);
                w.u32(l.perceptron_count() as u32);
                w.u32(l.inputs as u32);
                w.u8(activation_tag(l.activation));
                w.f32s(l.weights());
                w.f32s(l.biases());
                w.mask(l.mask());
            }
            Layer::Sparse(l) => {
                w.u8(KIND_SPARSE);
                w.u32(l.source_size as u32);
                w.u32(l.perceptron_count() as u32);
                w.u8(activation_tag(l.activation));
                for p in l.perceptrons() {
                    w.u32s(&p.indices);
                    w.f32s(&p.weights);
                    w.f32(p.bias);
                }
                w.mask(l.mask());
            }
        }
    }
    let digest = crc32(&w.buf);
    w.u32(digest);
    w.buf
}

/// Parse a network from bytes produced by [`to_bytes`].
pub fn from_bytes(bytes: &[u8]) -> Result<Network, ModelError> {
    if bytes.len() < MODEL_MAGIC.len() + 8 {
        return Err(ModelError::Truncated {
            offset: bytes.len(),
        });
    }
    if &bytes[..8] != MODEL_MAGIC {
        return Err(ModelError::BadMagic);
    }
    let payload_len = bytes.len() - 4;
    let stored = u32::from_le_bytes(bytes[payload_len..].try_into().unwrap());
    let computed = crc32(&bytes[..payload_len]);
    if stored != computed {
        return Err(ModelError::Checksum { stored, computed });
    }

    let mut r = Reader {
        bytes: &bytes[..payload_len],
        pos: 8,
    };
    let version = r.u32()?;
    if version != MODEL_VERSION {
        return Err(ModelError::VersionMismatch {
            found: version,
            supported: MODEL_VERSION,
        });
    }
    let name = r.str()?;
    let layer_count = r.u32()? as usize;
    let mut layers = Vec::with_capacity(layer_count);
    for _ in 0..layer_count {
        let kind = r.u8()?;
        let layer = match kind {
            KIND_CONV => {
                let mut dims = [0usize; 8];
                for d in &mut dims {
                    *d = r.u32()? as usize;
                }
                let [filters, kernel, depth, stride, pad_before, pad_after, in_rows, in_cols] =
                    dims;
                let weights = r.f32s()?;
                let biases = r.f32s()?;
                let mask = r.mask()?;
                if weights.len() != filters * kernel * kernel * depth || biases.len() != filters {
                    return Err(ModelError::Corrupt("conv payload size".into()));
                }
                if mask.as_ref().is_some_and(|m| m.len() != weights.len()) {
                    return Err(ModelError::Corrupt("conv mask size".into()));
                }
                Layer::Conv(ConvLayer::from_parts(
                    filters, kernel, depth, stride, pad_before, pad_after, in_rows, in_cols,
                    weights, biases, mask,
                ))
            }
            KIND_DENSE => {
                let perceptrons = r.u32()? as usize;
                let inputs = r.u32()? as usize;
                let activation = activation_from_tag(r.u8()?)?;
                let weights = r.f32s()?;
                let biases = r.f32s()?;
                let mask = r.mask()?;
                if weights.len() != perceptrons * inputs || biases.len() != perceptrons {
                    return Err(ModelError::Corrupt("dense payload size".into()));
                }
                if mask.as_ref().is_some_and(|m| m.len() != weights.len()) {
                    return Err(ModelError::Corrupt("dense mask size".into()));
                }
                Layer::Dense(DenseFcLayer::from_parts(
                    inputs, activation, weights, biases, mask,
                ))
            }
            KIND_SPARSE => {
                let source_size = r.u32()? as usize;
                let count = r.u32()? as usize;
                let activation = activation_from_tag(r.u8()?)?;
                let mut perceptrons = Vec::with_capacity(count);
                let mut total = 0usize;
                for _ in 0..count {
                    let indices = r.u32s()?;
                    let weights = r.f32s()?;
                    let bias = r.f32()?;
                    if weights.len() != indices.len() {
                        return Err(ModelError::Corrupt("sparse payload size".into()));
                    }
                    for pair in indices.windows(2) {
                        if pair[0] >= pair[1] {
                            return Err(ModelError::Corrupt(
                                "sparse indices not sorted unique".into(),
                            ));
                        }
                    }
                    if indices.last().is_some_and(|&i| i as usize >= source_size) {
                        return Err(ModelError::Corrupt("sparse index out of range".into()));
                    }
                    total += indices.len();
                    perceptrons.push(SparsePerceptron {
                        indices,
                        weights,
                        bias,
                    });
                }
                let mask = r.mask()?;
                if mask.as_ref().is_some_and(|m| m.len() != total) {
                    return Err(ModelError::Corrupt("sparse mask size".into()));
                }
                Layer::Sparse(SparseFcLayer::from_perceptrons(
                    source_size,
                    activation,
                    perceptrons,
                    mask,
                ))
            }
            other => return Err(ModelError::Corrupt(format!("bad layer kind {other}"))),
        };
        layers.push(layer);
    }
    if r.pos != payload_len {
        return Err(ModelError::Corrupt(format!(
            "{} trailing bytes",
            payload_len - r.pos
        )));
    }
    Ok(Network::new(name, layers))
}

pub fn save(net: &Network, path: &Path) -> Result<(), ModelError> {
    std::fs::write(path, to_bytes(net)).map_err(|source| ModelError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load(path: &Path) -> Result<Network, ModelError> {
    let bytes = std::fs::read(path).map_err(|source| ModelError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    from_bytes(&bytes)
}

//! Per-layer forward timings on the seed network.

use std::time::Instant;

use neurogen::network::build_seed;
use neurogen::rng::Rng;

fn main() {
    let mut rng = Rng::new(0);
    let net = build_seed(true, &mut rng);
    let input: Vec<f32> = (0..784).map(|_| rng.next_f32()).collect();

    let n = 5000;
    let mut current = input.clone();
    for (i, layer) in net.layers.iter().enumerate() {
        let mut out = Vec::new();
        let t = Instant::now();
        for _ in 0..n {
            layer.forward_into(&current, &mut out);
        }
        let dt = t.elapsed().as_secs_f64() / n as f64;
        println!("layer {i} ({}): {:.1} us", layer.label(), dt * 1e6);
        current = out;
    }

    // tanh cost in isolation
    let vals: Vec<f32> = (0..1314).map(|_| rng.uniform(2.0)).collect();
    let t = Instant::now();
    let mut sink = 0.0f32;
    for _ in 0..n {
        for &v in &vals {
            sink += std::hint::black_box(v).tanh();
        }
    }
    println!(
        "1314 tanh: {:.1} us (sink {sink})",
        t.elapsed().as_secs_f64() / n as f64 * 1e6
    );
}

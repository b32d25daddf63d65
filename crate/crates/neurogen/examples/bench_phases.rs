//! Rough phase timings for one training image on the seed network.

use std::time::Instant;

use neurogen::layers::LayerGrads;
use neurogen::network::build_seed;
use neurogen::rng::Rng;

fn main() {
    let mut rng = Rng::new(0);
    let net = build_seed(true, &mut rng);
    let input: Vec<f32> = (0..784).map(|_| rng.next_f32()).collect();

    let n = 2000;

    let t = Instant::now();
    let mut acts = vec![Vec::new(); net.layers.len() + 1];
    for _ in 0..n {
        acts[0].clear();
        acts[0].extend_from_slice(&input);
        for i in 0..net.layers.len() {
            let (a, b) = acts.split_at_mut(i + 1);
            net.layers[i].forward_into(&a[i], &mut b[0]);
        }
    }
    let fwd = t.elapsed().as_secs_f64() / n as f64;

    let upstreams: Vec<Vec<f32>> = net
        .layers
        .iter()
        .map(|l| (0..l.out_len()).map(|_| 0.01f32).collect())
        .collect();

    let mut per_layer = Vec::new();
    for i in 0..net.layers.len() {
        let mut grads = LayerGrads::default();
        let t = Instant::now();
        for _ in 0..n {
            net.layers[i].backward_into(&acts[i], &acts[i + 1], &upstreams[i], &mut grads, i > 0);
        }
        per_layer.push(t.elapsed().as_secs_f64() / n as f64);
    }

    let mut net2 = net.clone();
    let mut grads_all: Vec<LayerGrads> = Vec::new();
    for i in 0..net.layers.len() {
        let mut g = LayerGrads::default();
        net.layers[i].backward_into(&acts[i], &acts[i + 1], &upstreams[i], &mut g, i > 0);
        grads_all.push(g);
    }
    let t = Instant::now();
    for _ in 0..n {
        for i in 0..net2.layers.len() {
            net2.layers[i].apply_grads(&grads_all[i], 1e-9);
        }
    }
    let apply = t.elapsed().as_secs_f64() / n as f64;

    println!("forward  {:>8.1} us", fwd * 1e6);
    for (i, b) in per_layer.iter().enumerate() {
        println!("bwd L{i}   {:>8.1} us", b * 1e6);
    }
    println!("apply    {:>8.1} us", apply * 1e6);
    let total = fwd + per_layer.iter().sum::<f64>() + apply;
    println!(
        "total    {:>8.1} us -> {:.1} s/cycle",
        total * 1e6,
        total * 57000.0
    );
}

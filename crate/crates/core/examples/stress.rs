// temporary stress/bench harness (removed before finishing)
use cascade_core::nn::gradcheck::{gradient_check, kink_margin};
use cascade_core::nn::{LayerSpec, Network, Tensor};
use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use std::time::Instant;

fn random_stack(rng: &mut Xoshiro256PlusPlus) -> (Vec<LayerSpec>, (usize, usize, usize, usize)) {
    // random small net: input shape <= (2,4,8,8); stack: 1-2 conv blocks + optional pool + fc
    let b = rng.random_range(1..=2);
    let c = rng.random_range(1..=4);
    let mut h = [4usize, 6, 8][rng.random_range(0..3)];
    let mut w = [4usize, 6, 8][rng.random_range(0..3)];
    let mut layers = Vec::new();
    let mut ch = c;
    let n_conv = rng.random_range(1..=2);
    for _ in 0..n_conv {
        let oc = rng.random_range(1..=4);
        let k = if rng.random_bool(0.5) { 3 } else { 1 };
        let pad = if k == 3 && rng.random_bool(0.5) { 1 } else { 0 };
        if h + 2*pad < k || w + 2*pad < k { continue; }
        layers.push(LayerSpec::conv(ch, oc, k, pad));
        ch = oc;
        h = h + 2*pad - k + 1;
        w = w + 2*pad - k + 1;
        if rng.random_bool(0.7) { layers.push(LayerSpec::Relu); }
        if h >= 2 && w >= 2 && rng.random_bool(0.6) {
            layers.push(LayerSpec::MaxPool2);
            h /= 2; w /= 2;
        }
    }
    layers.push(LayerSpec::Flatten);
    layers.push(LayerSpec::Fc { in_dim: ch * h * w, out_dim: 2 });
    (layers, (b, c, [4usize,6,8].iter().position(|_| false).map(|_| 0).unwrap_or(0), 0))
}

fn main() {
    // 1) gradcheck stress over 200 random nets
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(999);
    let t0 = Instant::now();
    let mut checked = 0;
    let mut skipped = 0;
    let mut worst = 0.0f64;
    let mut attempts = 0u64;
    while checked < 200 {
        attempts += 1;
        let b = rng.random_range(1..=2);
        let c = rng.random_range(1..=4);
        let h = [4usize, 6, 8][rng.random_range(0..3)];
        let w = [4usize, 6, 8][rng.random_range(0..3)];
        let mut layers = Vec::new();
        let mut ch = c; let (mut hh, mut ww) = (h, w);
        for _ in 0..rng.random_range(1..=2) {
            let oc = rng.random_range(1..=4);
            let k = if rng.random_bool(0.5) { 3 } else { 1 };
            let pad = if k == 3 && rng.random_bool(0.5) { 1 } else { 0 };
            if hh + 2*pad < k || ww + 2*pad < k { continue; }
            layers.push(LayerSpec::conv(ch, oc, k, pad));
            ch = oc; hh = hh + 2*pad - k + 1; ww = ww + 2*pad - k + 1;
            if rng.random_bool(0.7) { layers.push(LayerSpec::Relu); }
            if hh >= 2 && ww >= 2 && rng.random_bool(0.6) { layers.push(LayerSpec::MaxPool2); hh /= 2; ww /= 2; }
        }
        layers.push(LayerSpec::Flatten);
        layers.push(LayerSpec::Fc { in_dim: ch * hh * ww, out_dim: 2 });
        let net = Network::new(layers, rng.random()).unwrap();
        let data: Vec<f32> = (0..b*c*h*w).map(|_| rng.random_range(-1.0..1.0)).collect();
        let input = Tensor::from_vec(&[b, c, h, w], data).unwrap();
        let labels: Vec<usize> = (0..b).map(|_| rng.random_range(0..2)).collect();
        if kink_margin(&net, &input).unwrap() < 1e-3 { skipped += 1; continue; }
        let err = gradient_check(&net, &input, &labels).unwrap();
        if err > worst { worst = err; }
        checked += 1;
    }
    println!("gradcheck: 200 nets in {:?} ({} skipped of {} attempts), worst rel err {:.3e}", t0.elapsed(), skipped, attempts, worst);

    // 2) conv throughput benchmark: HPN-ish layer conv3x3 16->16 on 64x64, batch 32
    let net = Network::new(vec![LayerSpec::conv(16, 16, 3, 1)], 1).unwrap();
    let input = Tensor::from_vec(&[32, 16, 64, 64], (0..32*16*64*64).map(|i| (i as f32 * 0.1).sin()).collect()).unwrap();
    let t0 = Instant::now();
    let mut n = 0;
    while t0.elapsed().as_secs_f64() < 2.0 { let _ = net.forward(&input).unwrap(); n += 1; }
    let flops = 2.0 * 32.0 * 16.0 * 64.0 * 64.0 * 16.0 * 9.0 * n as f64;
    println!("conv fwd throughput: {:.2} GFLOP/s ({n} iters)", flops / t0.elapsed().as_secs_f64() / 1e9);

    // 3) fwd+bwd throughput on the same layer
    let (_ake, tape) = net.forward_with_tape(&input).unwrap();
    let go = Tensor::from_vec(&[32, 16, 64, 64], vec![0.001; 32*16*64*64]).unwrap();
    let t0 = Instant::now();
    let mut n = 0;
    while t0.elapsed().as_secs_f64() < 2.0 { let _ = net.backward(&tape, &go).unwrap(); n += 1; }
    let flops = 2.0 * 2.0 * 32.0 * 16.0 * 64.0 * 64.0 * 16.0 * 9.0 * n as f64;
    println!("conv bwd throughput: {:.2} GFLOP/s ({n} iters)", flops / t0.elapsed().as_secs_f64() / 1e9);
}

// temporary full-network benchmark (removed before finishing)
use cascade_core::hpn::build_hpn;
use cascade_core::hrn::build_hrn;
use cascade_core::nn::{softmax_xent, SgdOptimizer, Tensor};
use std::time::Instant;

fn main() {
    // HPN batch 32
    let mut net = build_hpn(3, 1).unwrap();
    let mut opt = SgdOptimizer::new(&net, 0.01, 0.9);
    let input = Tensor::from_vec(&[32, 3, 64, 64], (0..32*3*64*64).map(|i| (i as f32 * 0.01).sin() * 0.2 + 0.5).collect()).unwrap();
    let labels: Vec<usize> = (0..32).map(|i| i % 2).collect();
    let flops_fwd = 44.3e6 * 32.0;
    let t = Instant::now();
    let mut n = 0;
    while t.elapsed().as_secs_f64() < 3.0 {
        let (logits, tape) = net.forward_with_tape(&input).unwrap();
        let (_, grad) = softmax_xent(&logits, &labels).unwrap();
        let (grads, _) = net.backward(&tape, &grad).unwrap();
        opt.step(&mut net, &grads).unwrap();
        n += 1;
    }
    let el = t.elapsed().as_secs_f64();
    println!("HPN fwd+bwd+step: {:.1} ms/batch32, effective {:.2} GF/s", el / n as f64 * 1e3, 3.0 * flops_fwd * n as f64 / el / 1e9);

    // timing breakdown
    let t = Instant::now(); let mut n = 0;
    let mut tape_keep = None;
    while t.elapsed().as_secs_f64() < 2.0 { tape_keep = Some(net.forward_with_tape(&input).unwrap()); n += 1; }
    println!("  forward_with_tape: {:.1} ms", t.elapsed().as_secs_f64() / n as f64 * 1e3);
    let (logits, tape) = tape_keep.unwrap();
    let (_, grad) = softmax_xent(&logits, &labels).unwrap();
    let t = Instant::now(); let mut n = 0;
    while t.elapsed().as_secs_f64() < 2.0 { let _ = net.backward(&tape, &grad).unwrap(); n += 1; }
    println!("  backward: {:.1} ms", t.elapsed().as_secs_f64() / n as f64 * 1e3);

    // HRN batch 64
    let net = build_hrn(3, 1).unwrap();
    let input = Tensor::from_vec(&[64, 3, 16, 16], (0..64*3*256).map(|i| (i as f32 * 0.01).sin() * 0.2 + 0.5).collect()).unwrap();
    let labels: Vec<usize> = (0..64).map(|i| i % 2).collect();
    let t = Instant::now();
    let mut n = 0;
    while t.elapsed().as_secs_f64() < 3.0 {
        let (logits, tape) = net.forward_with_tape(&input).unwrap();
        let logits2 = logits.reshape(&[64, 2]).unwrap();
        let (_, grad) = softmax_xent(&logits2, &labels).unwrap();
        let grad4 = grad.reshape(logits.shape()).unwrap();
        let _ = net.backward(&tape, &grad4).unwrap();
        n += 1;
    }
    let el = t.elapsed().as_secs_f64();
    let flops_fwd = 0.553e6 * 64.0;
    println!("HRN fwd+bwd: {:.2} ms/batch64, effective {:.2} GF/s", el / n as f64 * 1e3, 3.0 * flops_fwd * n as f64 / el / 1e9);
}

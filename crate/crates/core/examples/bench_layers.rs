// temporary per-layer benchmark (removed before finishing)
use cascade_core::nn::{LayerSpec, Network, Tensor};
use std::time::Instant;

fn main() {
    let specs: Vec<(String, LayerSpec, Vec<usize>)> = vec![
        ("conv 3->16 @64".into(), LayerSpec::conv(3, 16, 3, 1), vec![32, 3, 64, 64]),
        ("conv 16->16 @64".into(), LayerSpec::conv(16, 16, 3, 1), vec![32, 16, 64, 64]),
        ("conv 16->32 @32".into(), LayerSpec::conv(16, 32, 3, 1), vec![32, 16, 32, 32]),
        ("conv 32->32 @32".into(), LayerSpec::conv(32, 32, 3, 1), vec![32, 32, 32, 32]),
        ("conv 32->64 @16".into(), LayerSpec::conv(32, 64, 3, 1), vec![32, 32, 16, 16]),
        ("conv 64->64 @16".into(), LayerSpec::conv(64, 64, 3, 1), vec![32, 64, 16, 16]),
        ("conv 64->64 @8".into(), LayerSpec::conv(64, 64, 3, 1), vec![32, 64, 8, 8]),
        ("conv hrn 3->16 @16".into(), LayerSpec::conv(3, 16, 3, 1), vec![64, 3, 16, 16]),
        ("conv hrn 16->32 @8".into(), LayerSpec::conv(16, 32, 3, 1), vec![64, 16, 8, 8]),
        ("conv hrn 32->32 @4".into(), LayerSpec::conv(32, 32, 3, 1), vec![64, 32, 4, 4]),
    ];
    for (name, spec, shape) in specs {
        let net = Network::new(vec![spec], 1).unwrap();
        let n: usize = shape.iter().product();
        let input = Tensor::from_vec(&shape, (0..n).map(|i| (i as f32 * 0.01).sin()).collect()).unwrap();
        let (out, tape) = net.forward_with_tape(&input).unwrap();
        let (out_ch, k) = match spec { LayerSpec::Conv2d { out_ch, kernel, .. } => (out_ch, kernel), _ => unreachable!() };
        let flops = 2.0 * (shape[0] * out_ch * shape[2] * shape[3] * shape[1] * k * k) as f64;
        let go = Tensor::from_vec(out.shape(), vec![1e-3; out.len()]).unwrap();
        let t = Instant::now();
        let mut iters = 0;
        while t.elapsed().as_secs_f64() < 0.5 { let _ = net.forward(&input).unwrap(); iters += 1; }
        let fwd = flops * iters as f64 / t.elapsed().as_secs_f64() / 1e9;
        let t = Instant::now();
        let mut iters = 0;
        while t.elapsed().as_secs_f64() < 0.5 { let _ = net.backward(&tape, &go).unwrap(); iters += 1; }
        let bwd = 2.0 * flops * iters as f64 / t.elapsed().as_secs_f64() / 1e9;
        println!("{name:22} fwd {fwd:6.2} GF/s   bwd {bwd:6.2} GF/s");
    }
}

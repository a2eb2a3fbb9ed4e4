//! Verification harness: analytic gradients against float64 central
//! differences.
//!
//! Both routes run in f64 — the reverse pass is the same generic algorithm
//! the f32 network uses, re-instantiated at double precision, and the finite
//! differences difference-quotient the f64 forward map — so disagreement
//! measures the correctness of the backward algorithm rather than f32
//! rounding. Finite differences are only meaningful away from relu kinks and
//! maxpool ties; `kink_margin` reports how close an evaluation point is to
//! one so callers can avoid those points.

use crate::error::Result;
use crate::nn::kernels::softmax_xent_slices;
use crate::nn::layer::LayerSpec;
use crate::nn::network::Network;
use crate::nn::pass::{backward_pass, forward_pass, Activation};
use crate::nn::tensor::Tensor;

/// Central differences in f64 balance O(eps^2) truncation against roundoff
/// near eps ~ cbrt(machine epsilon); 1e-5 keeps both error terms around
/// 1e-11, far below the 1e-4 acceptance threshold even for small gradients.
const FD_EPSILON: f64 = 1e-5;

fn params_f64(net: &Network) -> Vec<Vec<f64>> {
    net.params()
        .iter()
        .map(|p| p.data().iter().map(|&v| f64::from(v)).collect())
        .collect()
}

fn input_f64(input: &Tensor) -> Vec<f64> {
    input.data().iter().map(|&v| f64::from(v)).collect()
}

fn slices(params: &[Vec<f64>]) -> Vec<&[f64]> {
    params.iter().map(Vec::as_slice).collect()
}

fn loss_of(acts: &[Activation<f64>], labels: &[usize]) -> f64 {
    let out = acts.last().expect("activations");
    let (bsz, classes) = (out.shape[0], out.shape[1]);
    let (loss, _) = softmax_xent_slices(&out.data, bsz, classes, labels);
    loss
}

/// Reverse-mode parameter gradients of the mean cross-entropy loss, computed
/// at f64 with the production backward algorithm.
pub fn analytic_gradients(
    net: &Network,
    input: &Tensor,
    labels: &[usize],
) -> Result<Vec<Vec<f64>>> {
    let params = params_f64(net);
    let acts = forward_pass(net.layers(), &slices(&params), &input_f64(input), input.shape())?;
    let out = acts.last().expect("activations");
    let (_, grad_logits) = softmax_xent_slices(&out.data, out.shape[0], out.shape[1], labels);
    let (grads, _) = backward_pass(net.layers(), &slices(&params), &acts, &grad_logits)?;
    Ok(grads)
}

/// Central-difference gradients of the f64 forward map.
/// One entry per parameter tensor, flattened.
pub fn numeric_gradients(net: &Network, input: &Tensor, labels: &[usize]) -> Result<Vec<Vec<f64>>> {
    let mut params = params_f64(net);
    let input64 = input_f64(input);
    let shape = input.shape();
    let mut grads = Vec::with_capacity(params.len());
    for t in 0..params.len() {
        let mut g = vec![0.0f64; params[t].len()];
        for k in 0..params[t].len() {
            let orig = params[t][k];
            params[t][k] = orig + FD_EPSILON;
            let acts = forward_pass(net.layers(), &slices(&params), &input64, shape)?;
            let plus = loss_of(&acts, labels);
            params[t][k] = orig - FD_EPSILON;
            let acts = forward_pass(net.layers(), &slices(&params), &input64, shape)?;
            let minus = loss_of(&acts, labels);
            params[t][k] = orig;
            g[k] = (plus - minus) / (2.0 * FD_EPSILON);
        }
        grads.push(g);
    }
    Ok(grads)
}

/// max over parameters of |analytic - numeric| / max(|analytic|, |numeric|, 1e-8)
pub fn max_rel_error(analytic: &[Vec<f64>], numeric: &[Vec<f64>]) -> f64 {
    let mut worst = 0.0f64;
    for (a, n) in analytic.iter().zip(numeric) {
        for (&av, &nv) in a.iter().zip(n) {
            let rel = (av - nv).abs() / av.abs().max(nv.abs()).max(1e-8);
            if rel > worst {
                worst = rel;
            }
        }
    }
    worst
}

/// Runs both gradient routes and returns the worst relative disagreement.
/// A network with no parameters vacuously returns 0.
pub fn gradient_check(net: &Network, input: &Tensor, labels: &[usize]) -> Result<f64> {
    let analytic = analytic_gradients(net, input, labels)?;
    let numeric = numeric_gradients(net, input, labels)?;
    Ok(max_rel_error(&analytic, &numeric))
}

/// Smallest distance to a non-differentiable point along the forward pass:
/// min over relu inputs of |x| and over maxpool windows of (max - runner-up).
/// Finite differences are unreliable when this is of the order of the
/// perturbation that the parameter epsilon induces.
pub fn kink_margin(net: &Network, input: &Tensor) -> Result<f64> {
    let params = params_f64(net);
    let acts = forward_pass(net.layers(), &slices(&params), &input_f64(input), input.shape())?;

    let mut margin = f64::INFINITY;
    for (i, spec) in net.layers().iter().enumerate() {
        let Activation { data: x, shape } = &acts[i];
        match spec {
            LayerSpec::Relu => {
                for &v in x {
                    margin = margin.min(v.abs());
                }
            }
            LayerSpec::MaxPool2 => {
                let (h, w) = (shape[2], shape[3]);
                let planes = shape[0] * shape[1];
                for p in 0..planes {
                    for y in 0..h / 2 {
                        for xx in 0..w / 2 {
                            let mut vals = [0.0f64; 4];
                            for (j, v) in vals.iter_mut().enumerate() {
                                let (dy, dx) = (j / 2, j % 2);
                                *v = x[(p * h + 2 * y + dy) * w + 2 * xx + dx];
                            }
                            vals.sort_by(|a, b| b.partial_cmp(a).unwrap());
                            margin = margin.min(vals[0] - vals[1]);
                        }
                    }
                }
            }
            _ => {}
        }
    }
    Ok(margin)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_net(seed: u64) -> Network {
        Network::new(
            vec![
                LayerSpec::conv(2, 3, 3, 1),
                LayerSpec::Relu,
                LayerSpec::MaxPool2,
                LayerSpec::Flatten,
                LayerSpec::Fc {
                    in_dim: 3 * 2 * 2,
                    out_dim: 2,
                },
            ],
            seed,
        )
        .unwrap()
    }

    fn fixed_input(salt: u64) -> Tensor {
        let data: Vec<f32> = (0..2 * 2 * 4 * 4)
            .map(|i| (((i as u64 * 37 + salt * 13) % 23) as f32 - 11.0) * 0.1)
            .collect();
        Tensor::from_vec(&[2, 2, 4, 4], data).unwrap()
    }

    /// Finite differences are only valid away from relu kinks and pool ties,
    /// so test points are rejection-sampled by kink margin.
    fn smooth_point(seed0: u64) -> (Network, Tensor) {
        for salt in 0..100 {
            let net = tiny_net(seed0 + salt);
            let input = fixed_input(salt);
            if kink_margin(&net, &input).unwrap() > 1e-2 {
                return (net, input);
            }
        }
        panic!("no smooth evaluation point found");
    }

    #[test]
    fn analytic_matches_numeric_on_small_net() {
        let (net, input) = smooth_point(11);
        let err = gradient_check(&net, &input, &[0, 1]).unwrap();
        assert!(err < 1e-4, "max relative error {err}");
    }

    #[test]
    fn f32_backward_agrees_with_f64_backward() {
        // the production f32 path is the same algorithm; allow f32 noise
        let (net, input) = smooth_point(29);
        let labels = [0usize, 1];
        let (logits, tape) = net.forward_with_tape(&input).unwrap();
        let (_, grad_logits) = crate::nn::loss::softmax_xent(&logits, &labels).unwrap();
        let (grads32, _) = net.backward(&tape, &grad_logits).unwrap();
        let grads64 = analytic_gradients(&net, &input, &labels).unwrap();
        for (a, b) in grads32.iter().zip(&grads64) {
            for (&x, &y) in a.data().iter().zip(b) {
                assert!(
                    (f64::from(x) - y).abs() < 1e-5 + 1e-3 * y.abs(),
                    "f32 {x} vs f64 {y}"
                );
            }
        }
    }

    #[test]
    fn corrupted_gradients_are_detected() {
        let (net, input) = smooth_point(11);
        let mut analytic = analytic_gradients(&net, &input, &[0, 1]).unwrap();
        let numeric = numeric_gradients(&net, &input, &[0, 1]).unwrap();
        // scale one conv weight gradient as a deliberately wrong backward
        for v in &mut analytic[0] {
            *v *= 1.5;
        }
        assert!(max_rel_error(&analytic, &numeric) > 1e-2);
    }

    #[test]
    fn parameterless_net_is_vacuous() {
        let net = Network::new(vec![LayerSpec::Relu, LayerSpec::Flatten], 0).unwrap();
        let input = Tensor::from_vec(&[1, 1, 2, 2], vec![0.5, -0.5, 1.0, 2.0]).unwrap();
        // relu/flatten only: forward ends in shape (1, 4); treat as 4 classes
        let err = gradient_check(&net, &input, &[0]).unwrap();
        assert_eq!(err, 0.0);
    }
}

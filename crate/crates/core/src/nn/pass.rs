//! Scalar-generic forward and reverse passes over a layer stack.
//!
//! This is the single implementation of the network algorithm; `Network`
//! instantiates it at f32 and the gradient checker re-instantiates it at f64.

use std::fmt::Debug;
use std::ops::AddAssign;

use num_traits::Float;

use crate::error::{Error, Result};
use crate::nn::kernels;
use crate::nn::layer::LayerSpec;

/// One activation buffer with its logical shape.
#[derive(Debug, Clone)]
pub struct Activation<T> {
    pub data: Vec<T>,
    pub shape: Vec<usize>,
}

/// Runs the stack, returning every activation: index 0 is the input, index
/// i + 1 is layer i's output. Every output is checked finite.
pub fn forward_pass<T: Float + AddAssign + Debug>(
    layers: &[LayerSpec],
    params: &[&[T]],
    input: &[T],
    input_shape: &[usize],
) -> Result<Vec<Activation<T>>> {
    if input.len() != input_shape.iter().product::<usize>() {
        return Err(Error::Validation(format!(
            "input has {} values for shape {input_shape:?}",
            input.len()
        )));
    }
    if !input.iter().all(|v| v.is_finite()) {
        return Err(Error::Numeric("non-finite value in network input".into()));
    }
    let mut acts = Vec::with_capacity(layers.len() + 1);
    acts.push(Activation {
        data: input.to_vec(),
        shape: input_shape.to_vec(),
    });
    let mut param_idx = 0;
    for (li, spec) in layers.iter().enumerate() {
        let prev = acts.last().unwrap();
        let out_shape = spec.output_shape(&prev.shape)?;
        let data = match *spec {
            LayerSpec::Conv2d {
                in_ch,
                out_ch,
                kernel,
                pad,
                ..
            } => kernels::conv2d_forward(
                &prev.data,
                prev.shape[0],
                in_ch,
                prev.shape[2],
                prev.shape[3],
                params[param_idx],
                params[param_idx + 1],
                out_ch,
                kernel,
                pad,
            ),
            LayerSpec::Relu => kernels::relu_forward(&prev.data),
            LayerSpec::MaxPool2 => kernels::maxpool2_forward(
                &prev.data,
                prev.shape[0] * prev.shape[1],
                prev.shape[2],
                prev.shape[3],
            ),
            LayerSpec::Flatten => prev.data.clone(),
            LayerSpec::Fc { in_dim, out_dim } => kernels::fc_forward(
                &prev.data,
                prev.shape[0],
                in_dim,
                params[param_idx],
                params[param_idx + 1],
                out_dim,
            ),
        };
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::Numeric(format!(
                "non-finite value after layer {li} ({spec:?})"
            )));
        }
        param_idx += spec.param_shapes().len();
        acts.push(Activation {
            data,
            shape: out_shape,
        });
    }
    Ok(acts)
}

/// Exact reverse-mode gradients through the stack. Returns one flat gradient
/// buffer per parameter buffer plus the input gradient.
pub fn backward_pass<T: Float + AddAssign + Debug>(
    layers: &[LayerSpec],
    params: &[&[T]],
    acts: &[Activation<T>],
    grad_out: &[T],
) -> Result<(Vec<Vec<T>>, Vec<T>)> {
    if acts.len() != layers.len() + 1 {
        return Err(Error::State("activation tape is incomplete".into()));
    }
    let out = acts.last().unwrap();
    if grad_out.len() != out.data.len() {
        return Err(Error::Validation(format!(
            "grad_out has {} values, output has {}",
            grad_out.len(),
            out.data.len()
        )));
    }

    let mut param_grads: Vec<Vec<T>> = params.iter().map(|p| vec![T::zero(); p.len()]).collect();
    let mut grad = grad_out.to_vec();

    let mut param_idx = params.len();
    for (li, spec) in layers.iter().enumerate().rev() {
        param_idx -= spec.param_shapes().len();
        let input = &acts[li];
        grad = match *spec {
            LayerSpec::Conv2d {
                in_ch,
                out_ch,
                kernel,
                pad,
                ..
            } => {
                let (gw, gb, gi) = kernels::conv2d_backward(
                    &input.data,
                    input.shape[0],
                    in_ch,
                    input.shape[2],
                    input.shape[3],
                    params[param_idx],
                    out_ch,
                    kernel,
                    pad,
                    &grad,
                );
                param_grads[param_idx] = gw;
                param_grads[param_idx + 1] = gb;
                gi
            }
            LayerSpec::Relu => kernels::relu_backward(&input.data, &grad),
            LayerSpec::MaxPool2 => kernels::maxpool2_backward(
                &input.data,
                input.shape[0] * input.shape[1],
                input.shape[2],
                input.shape[3],
                &grad,
            ),
            LayerSpec::Flatten => grad,
            LayerSpec::Fc { in_dim, out_dim } => {
                let (gw, gb, gi) = kernels::fc_backward(
                    &input.data,
                    input.shape[0],
                    in_dim,
                    params[param_idx],
                    out_dim,
                    &grad,
                );
                param_grads[param_idx] = gw;
                param_grads[param_idx + 1] = gb;
                gi
            }
        };
        if !grad.iter().all(|v| v.is_finite()) {
            return Err(Error::Numeric(format!(
                "non-finite gradient below layer {li}"
            )));
        }
    }
    Ok((param_grads, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_kernel_conv_reproduces_input() {
        // center-one 3x3 kernel with pad 1 and zero bias
        let layers = [LayerSpec::conv(1, 1, 3, 1)];
        let mut weight = vec![0.0f32; 9];
        weight[4] = 1.0;
        let bias = vec![0.0f32];
        let input: Vec<f32> = (1..=9).map(|v| v as f32).collect();
        let acts =
            forward_pass(&layers, &[&weight, &bias], &input, &[1, 1, 3, 3]).unwrap();
        assert_eq!(acts[1].data, input);
        assert_eq!(acts[1].shape, vec![1, 1, 3, 3]);
    }

    #[test]
    fn relu_clamps_negatives() {
        let layers = [LayerSpec::Relu];
        let acts = forward_pass::<f32>(&layers, &[], &[-1.0, 0.0, 2.0, 0.5], &[1, 1, 2, 2])
            .unwrap();
        assert_eq!(acts[1].data, vec![0.0, 0.0, 2.0, 0.5]);
    }

    #[test]
    fn maxpool_takes_window_max_and_routes_gradient() {
        let layers = [LayerSpec::MaxPool2];
        let input = vec![1.0f32, 5.0, 2.0, 2.0, 3.0, 0.0, 2.0, 9.0];
        let acts = forward_pass(&layers, &[], &input, &[1, 1, 2, 4]).unwrap();
        assert_eq!(acts[1].data, vec![5.0, 9.0]);
        let (grads, gi) = backward_pass(&layers, &[], &acts, &[1.0, 2.0]).unwrap();
        assert!(grads.is_empty());
        assert_eq!(gi, vec![0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 2.0]);
    }

    #[test]
    fn fc_weight_gradient_is_outer_product() {
        let layers = [LayerSpec::Fc {
            in_dim: 3,
            out_dim: 2,
        }];
        let weight = vec![0.0f32; 6];
        let bias = vec![0.0f32; 2];
        let input = vec![1.0f32, 2.0, 3.0];
        let acts = forward_pass(&layers, &[&weight, &bias], &input, &[1, 3]).unwrap();
        let (grads, _) = backward_pass(&layers, &[&weight, &bias], &acts, &[0.5, -1.0]).unwrap();
        assert_eq!(grads[0], vec![0.5, 1.0, 1.5, -1.0, -2.0, -3.0]);
        assert_eq!(grads[1], vec![0.5, -1.0]);
    }

    #[test]
    fn nan_input_fails_hard() {
        let layers = [LayerSpec::Relu];
        let err = forward_pass::<f32>(&layers, &[], &[f32::NAN], &[1, 1, 1, 1]);
        assert!(err.is_err());
    }
}

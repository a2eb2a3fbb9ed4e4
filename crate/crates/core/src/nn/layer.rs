//! Layer specifications: kinds, parameter shapes, and shape composition.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One layer of a network. Convolutions are stride 1 with square kernels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LayerSpec {
    Conv2d {
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
    },
    Relu,
    MaxPool2,
    Flatten,
    Fc {
        in_dim: usize,
        out_dim: usize,
    },
}

impl LayerSpec {
    pub fn conv(in_ch: usize, out_ch: usize, kernel: usize, pad: usize) -> LayerSpec {
        LayerSpec::Conv2d {
            in_ch,
            out_ch,
            kernel,
            stride: 1,
            pad,
        }
    }

    /// Shapes of this layer's parameter tensors, in declaration order.
    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        match *self {
            LayerSpec::Conv2d {
                in_ch,
                out_ch,
                kernel,
                ..
            } => vec![vec![out_ch, in_ch, kernel, kernel], vec![out_ch]],
            LayerSpec::Fc { in_dim, out_dim } => vec![vec![out_dim, in_dim], vec![out_dim]],
            _ => vec![],
        }
    }

    /// Fan-in used for He-scaled weight initialization.
    pub fn fan_in(&self) -> Option<usize> {
        match *self {
            LayerSpec::Conv2d { in_ch, kernel, .. } => Some(in_ch * kernel * kernel),
            LayerSpec::Fc { in_dim, .. } => Some(in_dim),
            _ => None,
        }
    }

    /// Output shape for a given input shape, or a validation error if the
    /// shapes do not compose.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        match *self {
            LayerSpec::Conv2d {
                in_ch,
                out_ch,
                kernel,
                stride,
                pad,
            } => {
                let [b, c, h, w] = four(input)?;
                if c != in_ch {
                    return Err(Error::Validation(format!(
                        "conv2d expects {in_ch} input channels, got {c}"
                    )));
                }
                if stride != 1 {
                    return Err(Error::Validation("conv2d stride must be 1".into()));
                }
                let h_p = h + 2 * pad;
                let w_p = w + 2 * pad;
                if h_p < kernel || w_p < kernel {
                    return Err(Error::Validation(format!(
                        "conv2d kernel {kernel} larger than padded input {h_p}x{w_p}"
                    )));
                }
                Ok(vec![b, out_ch, h_p - kernel + 1, w_p - kernel + 1])
            }
            LayerSpec::Relu => Ok(input.to_vec()),
            LayerSpec::MaxPool2 => {
                let [b, c, h, w] = four(input)?;
                if h < 2 || w < 2 {
                    return Err(Error::Validation(format!(
                        "maxpool2 needs spatial dims >= 2, got {h}x{w}"
                    )));
                }
                Ok(vec![b, c, h / 2, w / 2])
            }
            LayerSpec::Flatten => {
                let [b, c, h, w] = four(input)?;
                Ok(vec![b, c * h * w])
            }
            LayerSpec::Fc { in_dim, out_dim } => {
                let [b, d] = two(input)?;
                if d != in_dim {
                    return Err(Error::Validation(format!(
                        "fc expects {in_dim} input features, got {d}"
                    )));
                }
                Ok(vec![b, out_dim])
            }
        }
    }
}

fn four(shape: &[usize]) -> Result<[usize; 4]> {
    match shape {
        &[b, c, h, w] => Ok([b, c, h, w]),
        _ => Err(Error::Validation(format!(
            "expected 4-d input, got {shape:?}"
        ))),
    }
}

fn two(shape: &[usize]) -> Result<[usize; 2]> {
    match shape {
        &[b, d] => Ok([b, d]),
        _ => Err(Error::Validation(format!(
            "expected 2-d input, got {shape:?}"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_composition_errors() {
        let conv = LayerSpec::conv(3, 8, 3, 1);
        assert!(conv.output_shape(&[1, 4, 8, 8]).is_err());
        assert_eq!(conv.output_shape(&[1, 3, 8, 8]).unwrap(), vec![1, 8, 8, 8]);
        let fc = LayerSpec::Fc {
            in_dim: 10,
            out_dim: 2,
        };
        assert!(fc.output_shape(&[1, 9]).is_err());
        assert_eq!(
            LayerSpec::MaxPool2.output_shape(&[1, 2, 5, 7]).unwrap(),
            vec![1, 2, 2, 3]
        );
    }

    #[test]
    fn valid_conv_shrinks_without_padding() {
        let conv = LayerSpec::conv(1, 1, 3, 0);
        assert_eq!(conv.output_shape(&[2, 1, 5, 5]).unwrap(), vec![2, 1, 3, 3]);
    }
}

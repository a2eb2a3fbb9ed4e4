//! Network container: an ordered layer stack with its parameters.

use rand::SeedableRng;
use rand_distr::{Distribution, Normal};
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::error::{Error, Result};
use crate::nn::layer::LayerSpec;
use crate::nn::pass::{backward_pass, forward_pass, Activation};
use crate::nn::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct Network {
    layers: Vec<LayerSpec>,
    params: Vec<Tensor>,
    rng_seed: u64,
    /// Bumped on every parameter mutation; used to detect stale tapes.
    version: u64,
}

/// Cached activations from one forward pass, consumed by `backward`.
pub struct Tape {
    activations: Vec<Activation<f32>>,
    net_version: u64,
}

impl Tape {
    pub fn output(&self) -> &[f32] {
        &self.activations.last().expect("tape has activations").data
    }

    pub fn output_shape(&self) -> &[usize] {
        &self.activations.last().expect("tape has activations").shape
    }
}

impl Network {
    /// Builds a network with He-initialized weights (N(0, 2/fan_in)) and zero
    /// biases, drawn from a xoshiro stream seeded with `seed`. Channel/feature
    /// chaining between consecutive layers is validated here; spatial sizes
    /// are validated per forward call.
    pub fn new(layers: Vec<LayerSpec>, seed: u64) -> Result<Network> {
        if layers.is_empty() {
            return Err(Error::Validation("network needs at least one layer".into()));
        }
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
        let mut params = Vec::new();
        for spec in &layers {
            let shapes = spec.param_shapes();
            if shapes.is_empty() {
                continue;
            }
            let fan_in = spec.fan_in().expect("parameterized layers have fan-in");
            let sigma = (2.0 / fan_in as f64).sqrt();
            let normal = Normal::new(0.0f64, sigma).expect("valid sigma");
            let wshape = &shapes[0];
            let n: usize = wshape.iter().product();
            let data: Vec<f32> = (0..n).map(|_| normal.sample(&mut rng) as f32).collect();
            params.push(Tensor::from_vec(wshape, data)?);
            params.push(Tensor::zeros(&shapes[1]));
        }
        let net = Network {
            layers,
            params,
            rng_seed: seed,
            version: 0,
        };
        net.validate_chaining()?;
        Ok(net)
    }

    /// Reassembles a network from deserialized parts (checkpoint loading).
    pub fn from_parts(layers: Vec<LayerSpec>, params: Vec<Tensor>, seed: u64) -> Result<Network> {
        let expected: Vec<Vec<usize>> = layers.iter().flat_map(|l| l.param_shapes()).collect();
        if expected.len() != params.len() {
            return Err(Error::Format(format!(
                "layer specs declare {} parameter tensors, payload has {}",
                expected.len(),
                params.len()
            )));
        }
        for (shape, tensor) in expected.iter().zip(&params) {
            if shape != tensor.shape() {
                return Err(Error::Format(format!(
                    "parameter shape {:?} does not match spec {shape:?}",
                    tensor.shape()
                )));
            }
        }
        let net = Network {
            layers,
            params,
            rng_seed: seed,
            version: 0,
        };
        net.validate_chaining()?;
        Ok(net)
    }

    fn validate_chaining(&self) -> Result<()> {
        let mut prev_out_ch: Option<usize> = None;
        for spec in &self.layers {
            if let LayerSpec::Conv2d { in_ch, out_ch, .. } = spec {
                if let Some(p) = prev_out_ch {
                    if p != *in_ch {
                        return Err(Error::Validation(format!(
                            "conv2d input channels {in_ch} do not chain from previous {p}"
                        )));
                    }
                }
                prev_out_ch = Some(*out_ch);
            }
        }
        Ok(())
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn rng_seed(&self) -> u64 {
        self.rng_seed
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    /// Mutable access for the optimizer; invalidates outstanding tapes.
    pub fn params_mut(&mut self) -> &mut [Tensor] {
        self.version += 1;
        &mut self.params
    }

    fn param_slices(&self) -> Vec<&[f32]> {
        self.params.iter().map(Tensor::data).collect()
    }

    /// Expected output shape for an input shape, without running the network.
    pub fn output_shape(&self, input_shape: &[usize]) -> Result<Vec<usize>> {
        let mut shape = input_shape.to_vec();
        for spec in &self.layers {
            shape = spec.output_shape(&shape)?;
        }
        Ok(shape)
    }

    /// Inference pass; deterministic for a given input.
    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        let acts = forward_pass(&self.layers, &self.param_slices(), input.data(), input.shape())?;
        let out = acts.into_iter().last().unwrap();
        Tensor::from_vec(&out.shape, out.data)
    }

    /// Forward pass that records every activation for a later `backward`.
    pub fn forward_with_tape(&self, input: &Tensor) -> Result<(Tensor, Tape)> {
        let acts = forward_pass(&self.layers, &self.param_slices(), input.data(), input.shape())?;
        let out = acts.last().unwrap();
        let out = Tensor::from_vec(&out.shape, out.data.clone())?;
        Ok((
            out,
            Tape {
                activations: acts,
                net_version: self.version,
            },
        ))
    }

    /// Exact reverse-mode gradients of the forward map. Returns one gradient
    /// tensor per parameter tensor (in parameter order) plus the input
    /// gradient. The tape must come from this network at its current
    /// parameter version.
    pub fn backward(&self, tape: &Tape, grad_out: &Tensor) -> Result<(Vec<Tensor>, Tensor)> {
        if tape.net_version != self.version {
            return Err(Error::State(
                "activation tape is stale: parameters changed since forward".into(),
            ));
        }
        if grad_out.shape() != tape.output_shape() {
            return Err(Error::Validation(format!(
                "grad_out shape {:?} does not match output {:?}",
                grad_out.shape(),
                tape.output_shape()
            )));
        }
        let (grads, grad_in) = backward_pass(
            &self.layers,
            &self.param_slices(),
            &tape.activations,
            grad_out.data(),
        )?;
        let grads = grads
            .into_iter()
            .zip(&self.params)
            .map(|(g, p)| Tensor::from_vec(p.shape(), g))
            .collect::<Result<Vec<_>>>()?;
        let input_shape = tape.activations[0].shape.clone();
        Ok((grads, Tensor::from_vec(&input_shape, grad_in)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_net(seed: u64) -> Network {
        Network::new(
            vec![
                LayerSpec::conv(1, 2, 3, 1),
                LayerSpec::Relu,
                LayerSpec::MaxPool2,
                LayerSpec::Flatten,
                LayerSpec::Fc {
                    in_dim: 2 * 2 * 2,
                    out_dim: 2,
                },
            ],
            seed,
        )
        .unwrap()
    }

    #[test]
    fn forward_is_deterministic_and_seeded() {
        let net1 = small_net(7);
        let net2 = small_net(7);
        let input = Tensor::from_vec(&[1, 1, 4, 4], (0..16).map(|i| i as f32 * 0.1).collect())
            .unwrap();
        let a = net1.forward(&input).unwrap();
        let b = net2.forward(&input).unwrap();
        assert_eq!(a.data(), b.data());
        let net3 = small_net(8);
        let c = net3.forward(&input).unwrap();
        assert_ne!(a.data(), c.data());
    }

    #[test]
    fn zero_grad_out_gives_zero_gradients() {
        let net = small_net(3);
        let input = Tensor::from_vec(&[1, 1, 4, 4], (0..16).map(|i| i as f32 * 0.3).collect())
            .unwrap();
        let (out, tape) = net.forward_with_tape(&input).unwrap();
        let go = Tensor::zeros(out.shape());
        let (grads, gin) = net.backward(&tape, &go).unwrap();
        assert!(grads.iter().all(|g| g.data().iter().all(|&v| v == 0.0)));
        assert!(gin.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn stale_tape_is_rejected() {
        let mut net = small_net(3);
        let input = Tensor::from_vec(&[1, 1, 4, 4], vec![0.5; 16]).unwrap();
        let (out, tape) = net.forward_with_tape(&input).unwrap();
        net.params_mut()[0].data_mut()[0] += 1.0;
        let go = Tensor::zeros(out.shape());
        match net.backward(&tape, &go) {
            Err(crate::error::Error::State(_)) => {}
            other => panic!("expected state error, got {other:?}"),
        }
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let net = small_net(3);
        let input = Tensor::from_vec(&[1, 2, 4, 4], vec![0.5; 32]).unwrap();
        assert!(net.forward(&input).is_err());
    }

    #[test]
    fn nan_input_fails_hard() {
        let net = small_net(3);
        let mut data = vec![0.5f32; 16];
        data[7] = f32::NAN;
        let input = Tensor::from_vec(&[1, 1, 4, 4], data).unwrap();
        assert!(net.forward(&input).is_err());
    }

    #[test]
    fn param_count_sums_all_tensors() {
        let net = small_net(3);
        // conv: 2*1*3*3 + 2 = 20; fc: 2*8 + 2 = 18
        assert_eq!(net.param_count(), 38);
    }
}

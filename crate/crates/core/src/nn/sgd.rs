//! SGD with classical momentum: v <- momentum*v - lr*g; p <- p + v.

use crate::error::{Error, Result};
use crate::nn::network::Network;
use crate::nn::tensor::Tensor;

#[derive(Debug)]
pub struct SgdOptimizer {
    lr: f32,
    momentum: f32,
    velocity: Vec<Tensor>,
}

impl SgdOptimizer {
    pub fn new(net: &Network, lr: f32, momentum: f32) -> SgdOptimizer {
        SgdOptimizer {
            lr,
            momentum,
            velocity: net.params().iter().map(|p| Tensor::zeros(p.shape())).collect(),
        }
    }

    pub fn step(&mut self, net: &mut Network, grads: &[Tensor]) -> Result<()> {
        if grads.len() != self.velocity.len() || grads.len() != net.params().len() {
            return Err(Error::Validation(format!(
                "optimizer holds {} parameter tensors, got {} gradients",
                self.velocity.len(),
                grads.len()
            )));
        }
        for ((p, v), g) in net.params_mut().iter_mut().zip(&mut self.velocity).zip(grads) {
            if p.shape() != g.shape() {
                return Err(Error::Validation(format!(
                    "gradient shape {:?} does not match parameter {:?}",
                    g.shape(),
                    p.shape()
                )));
            }
            for ((pv, vv), gv) in p.data_mut().iter_mut().zip(v.data_mut()).zip(g.data()) {
                *vv = self.momentum * *vv - self.lr * *gv;
                *pv += *vv;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::layer::LayerSpec;

    fn one_param_net(value: f32) -> Network {
        let mut net = Network::new(
            vec![LayerSpec::Fc {
                in_dim: 1,
                out_dim: 1,
            }],
            0,
        )
        .unwrap();
        net.params_mut()[0].data_mut()[0] = value;
        net
    }

    fn unit_grads(net: &Network) -> Vec<Tensor> {
        net.params()
            .iter()
            .map(|p| {
                Tensor::from_vec(p.shape(), vec![if p.len() == 1 { 1.0 } else { 0.0 }; p.len()])
                    .unwrap()
            })
            .collect()
    }

    #[test]
    fn plain_sgd_step() {
        let mut net = one_param_net(1.0);
        let mut opt = SgdOptimizer::new(&net, 0.1, 0.0);
        let grads = unit_grads(&net);
        opt.step(&mut net, &grads).unwrap();
        assert!((net.params()[0].data()[0] - 0.9).abs() < 1e-7);
    }

    #[test]
    fn momentum_two_steps_hand_unrolled() {
        // v1 = -0.1, p1 = -0.1; v2 = 0.9*(-0.1) - 0.1 = -0.19, p2 = -0.29
        let mut net = one_param_net(0.0);
        let mut opt = SgdOptimizer::new(&net, 0.1, 0.9);
        let grads = unit_grads(&net);
        opt.step(&mut net, &grads).unwrap();
        opt.step(&mut net, &grads).unwrap();
        assert!((net.params()[0].data()[0] - (-0.29)).abs() < 1e-6);
    }

    #[test]
    fn zero_lr_is_a_no_op() {
        let mut net = one_param_net(1.5);
        let mut opt = SgdOptimizer::new(&net, 0.0, 0.9);
        let grads = unit_grads(&net);
        opt.step(&mut net, &grads).unwrap();
        assert_eq!(net.params()[0].data()[0], 1.5);
    }

    #[test]
    fn mismatched_grads_are_rejected() {
        let mut net = one_param_net(1.0);
        let mut opt = SgdOptimizer::new(&net, 0.1, 0.0);
        assert!(opt.step(&mut net, &[]).is_err());
    }
}

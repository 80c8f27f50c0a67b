use rand::Rng;

use super::gemm::{sgemm, View};
use super::tensor::Tensor;
use super::{uniform_fan_in, Layer};
use crate::error::{Error, Result};

/// Fully connected layer `y = W x + b` over `[batch, in]` inputs.
#[derive(Clone, Debug)]
pub struct Linear {
    /// `[out, in]`
    pub weight: Tensor,
    /// `[out]`
    pub bias: Tensor,
}

#[derive(Clone, Debug)]
pub struct LinearCache {
    input: Tensor,
}

impl Linear {
    pub fn new<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        Self {
            weight: uniform_fan_in(&[outputs, inputs], inputs, rng),
            bias: uniform_fan_in(&[outputs], inputs, rng),
        }
    }

    pub fn from_parts(weight: Tensor, bias: Tensor) -> Result<Self> {
        weight.expect_rank(2, "linear weight")?;
        if bias.shape() != [weight.shape()[0]] {
            return Err(Error::Shape {
                context: "linear bias",
                expected: vec![weight.shape()[0]],
                actual: bias.shape().to_vec(),
            });
        }
        let shape = weight.shape().to_vec();
        let weight = Tensor::parameter(&shape, weight.into_data())?;
        let shape = bias.shape().to_vec();
        let bias = Tensor::parameter(&shape, bias.into_data())?;
        Ok(Self { weight, bias })
    }

    pub fn inputs(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn outputs(&self) -> usize {
        self.weight.shape()[0]
    }

    fn check_input(&self, x: &Tensor) -> Result<usize> {
        if x.shape().len() != 2 || x.shape()[1] != self.inputs() {
            return Err(Error::Shape {
                context: "linear input",
                expected: vec![x.shape().first().copied().unwrap_or(0), self.inputs()],
                actual: x.shape().to_vec(),
            });
        }
        Ok(x.shape()[0])
    }

    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, LinearCache)> {
        let y = self.apply(x)?;
        Ok((y, LinearCache { input: x.clone() }))
    }

    /// Forward pass without keeping anything for backward.
    pub fn apply(&self, x: &Tensor) -> Result<Tensor> {
        let batch = self.check_input(x)?;
        let (i, o) = (self.inputs(), self.outputs());
        let mut out = Vec::with_capacity(batch * o);
        for _ in 0..batch {
            out.extend_from_slice(self.bias.data());
        }
        sgemm(
            1.0,
            View::new(x.data(), batch, i),
            View::transposed(self.weight.data(), o, i),
            1.0,
            &mut out,
        );
        Tensor::from_vec(&[batch, o], out)
    }

    pub fn backward(&mut self, cache: &LinearCache, grad_out: &Tensor) -> Result<Tensor> {
        let batch = self.check_input(&cache.input)?;
        let (i, o) = (self.inputs(), self.outputs());
        if grad_out.shape() != [batch, o] {
            return Err(Error::Shape {
                context: "linear grad_out",
                expected: vec![batch, o],
                actual: grad_out.shape().to_vec(),
            });
        }
        if let Some(gw) = self.weight.grad_mut() {
            // dW += dYᵀ · X
            sgemm(
                1.0,
                View::transposed(grad_out.data(), batch, o),
                View::new(cache.input.data(), batch, i),
                1.0,
                gw,
            );
        }
        if let Some(gb) = self.bias.grad_mut() {
            let mut sums = vec![0.0f64; o];
            for row in grad_out.data().chunks_exact(o) {
                for (s, &g) in sums.iter_mut().zip(row) {
                    *s += g as f64;
                }
            }
            for (b, s) in gb.iter_mut().zip(sums) {
                *b += s as f32;
            }
        }
        let mut grad_in = vec![0.0f32; batch * i];
        sgemm(
            1.0,
            View::new(grad_out.data(), batch, o),
            View::new(self.weight.data(), o, i),
            0.0,
            &mut grad_in,
        );
        Tensor::from_vec(&[batch, i], grad_in)
    }
}

impl Layer for Linear {
    fn tensors(&self) -> Vec<(&'static str, &Tensor)> {
        vec![("weight", &self.weight), ("bias", &self.bias)]
    }

    fn tensors_mut(&mut self) -> Vec<(&'static str, &mut Tensor)> {
        vec![("weight", &mut self.weight), ("bias", &mut self.bias)]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_weights_pass_through() {
        let w = Tensor::from_vec(&[3, 3], vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
        let layer = Linear::from_parts(w, Tensor::zeros(&[3])).unwrap();
        let x = Tensor::from_vec(&[2, 3], vec![1.0, -2.0, 3.5, 0.0, 4.0, -1.0]).unwrap();
        assert_eq!(layer.apply(&x).unwrap().data(), x.data());
    }

    #[test]
    fn sum_row() {
        let w = Tensor::from_vec(&[1, 2], vec![1.0, 1.0]).unwrap();
        let layer = Linear::from_parts(w, Tensor::zeros(&[1])).unwrap();
        let x = Tensor::from_vec(&[1, 2], vec![2.0, 3.0]).unwrap();
        assert_eq!(layer.apply(&x).unwrap().data(), &[5.0]);
    }

    #[test]
    fn wrong_width_rejected() {
        let layer = Linear::from_parts(Tensor::zeros(&[2, 3]), Tensor::zeros(&[2])).unwrap();
        assert!(layer.apply(&Tensor::zeros(&[1, 4])).is_err());
        assert!(Linear::from_parts(Tensor::zeros(&[2, 3]), Tensor::zeros(&[3])).is_err());
    }
}

use super::tensor::Tensor;
use super::{Layer, Mode};
use crate::error::{Error, Result};

pub const BN_MOMENTUM: f64 = 0.1;
pub const BN_EPS: f64 = 1e-5;

/// Per-channel batch normalization over `[N, C, H, W]` (or `[N, C]`) inputs.
#[derive(Clone, Debug)]
pub struct BatchNorm2d {
    pub gamma: Tensor,
    pub beta: Tensor,
    pub running_mean: Tensor,
    pub running_var: Tensor,
    pub momentum: f64,
    pub eps: f64,
}

#[derive(Clone, Debug)]
pub struct BatchNormCache {
    mode: Mode,
    shape: Vec<usize>,
    x_hat: Vec<f64>,
    inv_std: Vec<f64>,
}

impl BatchNorm2d {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: Tensor::parameter(&[channels], vec![1.0; channels]).expect("shape"),
            beta: Tensor::parameter(&[channels], vec![0.0; channels]).expect("shape"),
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::filled(&[channels], 1.0),
            momentum: BN_MOMENTUM,
            eps: BN_EPS,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.numel()
    }

    fn dims(&self, x: &Tensor) -> Result<(usize, usize, usize)> {
        let s = x.shape();
        if s.len() < 2 || s[1] != self.channels() {
            return Err(Error::Shape {
                context: "batch-norm input channels",
                expected: vec![0, self.channels()],
                actual: s.to_vec(),
            });
        }
        Ok((s[0], s[1], s[2..].iter().product()))
    }

    /// Train mode normalizes with batch statistics and updates the running
    /// estimates; eval mode uses the running estimates.
    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<(Tensor, BatchNormCache)> {
        match mode {
            Mode::Eval => self.forward_eval(x),
            Mode::Train => self.forward_train(x),
        }
    }

    pub fn forward_eval(&self, x: &Tensor) -> Result<(Tensor, BatchNormCache)> {
        let (_, c, _) = self.dims(x)?;
        let mean: Vec<f64> = self.running_mean.data().iter().map(|&v| v as f64).collect();
        let inv_std: Vec<f64> = self
            .running_var
            .data()
            .iter()
            .map(|&v| 1.0 / (v as f64 + self.eps).sqrt())
            .collect();
        debug_assert_eq!(mean.len(), c);
        Ok(self.normalize(x, &mean, inv_std, Mode::Eval))
    }

    fn forward_train(&mut self, x: &Tensor) -> Result<(Tensor, BatchNormCache)> {
        let (n, c, hw) = self.dims(x)?;
        let m = n * hw;
        if n < 2 {
            return Err(Error::InvalidArgument(
                "batch norm in train mode needs a batch of at least 2".into(),
            ));
        }
        let mut mean = vec![0.0f64; c];
        let mut var = vec![0.0f64; c];
        for (i, plane) in x.data().chunks_exact(hw).enumerate() {
            mean[i % c] += plane.iter().map(|&v| v as f64).sum::<f64>();
        }
        mean.iter_mut().for_each(|v| *v /= m as f64);
        for (i, plane) in x.data().chunks_exact(hw).enumerate() {
            let mu = mean[i % c];
            var[i % c] += plane.iter().map(|&v| (v as f64 - mu).powi(2)).sum::<f64>();
        }
        var.iter_mut().for_each(|v| *v /= m as f64);

        let mom = self.momentum;
        let unbias = m as f64 / (m as f64 - 1.0);
        for ch in 0..c {
            let rm = &mut self.running_mean.data_mut()[ch];
            *rm = ((1.0 - mom) * *rm as f64 + mom * mean[ch]) as f32;
            let rv = &mut self.running_var.data_mut()[ch];
            *rv = ((1.0 - mom) * *rv as f64 + mom * var[ch] * unbias) as f32;
        }

        let inv_std = var.iter().map(|v| 1.0 / (v + self.eps).sqrt()).collect();
        Ok(self.normalize(x, &mean, inv_std, Mode::Train))
    }

    fn normalize(&self, x: &Tensor, mean: &[f64], inv_std: Vec<f64>, mode: Mode) -> (Tensor, BatchNormCache) {
        let c = self.channels();
        let hw: usize = x.shape()[2..].iter().product();
        let mut x_hat = Vec::with_capacity(x.numel());
        let mut out = Vec::with_capacity(x.numel());
        for (i, plane) in x.data().chunks_exact(hw).enumerate() {
            let ch = i % c;
            let (g, b) = (self.gamma.data()[ch] as f64, self.beta.data()[ch] as f64);
            for &v in plane {
                let xh = (v as f64 - mean[ch]) * inv_std[ch];
                x_hat.push(xh);
                out.push((g * xh + b) as f32);
            }
        }
        let output = Tensor::from_vec(x.shape(), out).expect("same shape");
        (
            output,
            BatchNormCache {
                mode,
                shape: x.shape().to_vec(),
                x_hat,
                inv_std,
            },
        )
    }

    pub fn backward(&mut self, cache: &BatchNormCache, grad_out: &Tensor) -> Result<Tensor> {
        if grad_out.shape() != cache.shape.as_slice() {
            return Err(Error::Shape {
                context: "batch-norm grad_out",
                expected: cache.shape.clone(),
                actual: grad_out.shape().to_vec(),
            });
        }
        let c = self.channels();
        let n = cache.shape[0];
        let hw: usize = cache.shape[2..].iter().product();
        let m = (n * hw) as f64;

        let mut sum_dy = vec![0.0f64; c];
        let mut sum_dy_xhat = vec![0.0f64; c];
        for (i, (gy, xh)) in grad_out
            .data()
            .chunks_exact(hw)
            .zip(cache.x_hat.chunks_exact(hw))
            .enumerate()
        {
            let ch = i % c;
            for (&d, &x) in gy.iter().zip(xh) {
                sum_dy[ch] += d as f64;
                sum_dy_xhat[ch] += d as f64 * x;
            }
        }

        let mut grad_in = Vec::with_capacity(grad_out.numel());
        for (i, (gy, xh)) in grad_out
            .data()
            .chunks_exact(hw)
            .zip(cache.x_hat.chunks_exact(hw))
            .enumerate()
        {
            let ch = i % c;
            let g = self.gamma.data()[ch] as f64;
            let k = g * cache.inv_std[ch];
            match cache.mode {
                Mode::Train => {
                    for (&d, &x) in gy.iter().zip(xh) {
                        let dx = k * (d as f64 - sum_dy[ch] / m - x * sum_dy_xhat[ch] / m);
                        grad_in.push(dx as f32);
                    }
                }
                Mode::Eval => grad_in.extend(gy.iter().map(|&d| (k * d as f64) as f32)),
            }
        }

        if let Some(gg) = self.gamma.grad_mut() {
            for (g, s) in gg.iter_mut().zip(&sum_dy_xhat) {
                *g += *s as f32;
            }
        }
        if let Some(gb) = self.beta.grad_mut() {
            for (g, s) in gb.iter_mut().zip(&sum_dy) {
                *g += *s as f32;
            }
        }
        Tensor::from_vec(&cache.shape, grad_in)
    }
}

impl Layer for BatchNorm2d {
    fn tensors(&self) -> Vec<(&'static str, &Tensor)> {
        vec![
            ("gamma", &self.gamma),
            ("beta", &self.beta),
            ("running_mean", &self.running_mean),
            ("running_var", &self.running_var),
        ]
    }

    fn tensors_mut(&mut self) -> Vec<(&'static str, &mut Tensor)> {
        vec![
            ("gamma", &mut self.gamma),
            ("beta", &mut self.beta),
            ("running_mean", &mut self.running_mean),
            ("running_var", &mut self.running_var),
        ]
    }
}

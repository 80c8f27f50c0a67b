use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Bias-corrected Adam. Moment buffers are created on the first step and
/// bound to the order and shapes of the parameter list passed then.
#[derive(Clone, Debug)]
pub struct Adam {
    pub config: AdamConfig,
    first: Vec<Vec<f32>>,
    second: Vec<Vec<f32>>,
    shapes: Vec<Vec<usize>>,
    step: u64,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            first: Vec::new(),
            second: Vec::new(),
            shapes: Vec::new(),
            step: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn first_moments(&self) -> &[Vec<f32>] {
        &self.first
    }

    pub fn second_moments(&self) -> &[Vec<f32>] {
        &self.second
    }

    /// Applies one update to every parameter that tracks a gradient.
    ///
    /// Nothing is modified if any gradient is non-finite.
    pub fn step(&mut self, params: &mut [&mut Tensor]) -> Result<()> {
        if self.shapes.is_empty() {
            self.shapes = params.iter().map(|p| p.shape().to_vec()).collect();
            self.first = params.iter().map(|p| vec![0.0; p.numel()]).collect();
            self.second = params.iter().map(|p| vec![0.0; p.numel()]).collect();
        }
        if params.len() != self.shapes.len() {
            return Err(Error::InvalidArgument(format!(
                "optimizer tracks {} parameters, got {}",
                self.shapes.len(),
                params.len()
            )));
        }
        for (i, (p, shape)) in params.iter().zip(&self.shapes).enumerate() {
            if p.shape() != shape.as_slice() {
                return Err(Error::Shape {
                    context: "adam parameter",
                    expected: shape.clone(),
                    actual: p.shape().to_vec(),
                });
            }
            if let Some(g) = p.grad() {
                if let Some(bad) = g.iter().position(|v| !v.is_finite()) {
                    return Err(Error::TrainingDivergence {
                        context: format!("adam step {}", self.step + 1),
                        reason: format!("non-finite gradient {} in parameter {i} at index {bad}", g[bad]),
                    });
                }
            }
        }

        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let t = self.step as i32;
        let bc1 = (1.0 - beta1.powi(t)) as f32;
        let bc2 = (1.0 - beta2.powi(t)) as f32;
        let (lr, b1, b2, eps) = (lr as f32, beta1 as f32, beta2 as f32, eps as f32);

        for ((p, m), v) in params.iter_mut().zip(&mut self.first).zip(&mut self.second) {
            let (values, grad) = p.data_and_grad_mut();
            let Some(grad) = grad else { continue };
            for (((w, &g), m), v) in values.iter_mut().zip(grad.iter()).zip(m.iter_mut()).zip(v.iter_mut()) {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *w -= lr * m_hat / (v_hat.sqrt() + eps);
            }
            if let Some(bad) = values.iter().position(|v| !v.is_finite()) {
                return Err(Error::TrainingDivergence {
                    context: format!("adam step {}", self.step),
                    reason: format!("parameter became non-finite at index {bad}"),
                });
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f32) -> Tensor {
        Tensor::parameter(&[1], vec![v]).unwrap()
    }

    #[test]
    fn zero_gradient_from_fresh_state_keeps_params() {
        let mut p = scalar(0.7);
        let mut adam = Adam::new(AdamConfig::default());
        adam.step(&mut [&mut p]).unwrap();
        assert_eq!(p.data(), &[0.7]);
    }

    #[test]
    fn zero_gradient_decays_moments() {
        let mut p = scalar(0.0);
        let mut adam = Adam::new(AdamConfig::default());
        p.grad_mut().unwrap()[0] = 2.0;
        adam.step(&mut [&mut p]).unwrap();
        let (m0, v0) = (adam.first_moments()[0][0], adam.second_moments()[0][0]);
        p.zero_grad();
        adam.step(&mut [&mut p]).unwrap();
        assert!((adam.first_moments()[0][0] - 0.9 * m0).abs() < 1e-7);
        assert!((adam.second_moments()[0][0] - 0.999 * v0).abs() < 1e-7);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // m̂ = g, v̂ = g², so the step is lr · g / (|g| + ε) ≈ lr.
        let mut p = scalar(0.0);
        p.grad_mut().unwrap()[0] = 1.0;
        let mut adam = Adam::new(AdamConfig {
            lr: 0.1,
            ..AdamConfig::default()
        });
        adam.step(&mut [&mut p]).unwrap();
        assert!((p.data()[0] + 0.1).abs() < 1e-6);
    }

    #[test]
    fn minimizes_square() {
        let mut p = scalar(1.0);
        let mut adam = Adam::new(AdamConfig {
            lr: 0.1,
            ..AdamConfig::default()
        });
        for _ in 0..100 {
            p.zero_grad();
            let w = p.data()[0];
            p.grad_mut().unwrap()[0] = 2.0 * w;
            adam.step(&mut [&mut p]).unwrap();
        }
        assert!(p.data()[0].abs() < 0.05, "{}", p.data()[0]);
    }

    #[test]
    fn non_finite_gradient_is_divergence() {
        let mut p = scalar(1.0);
        p.grad_mut().unwrap()[0] = f32::NAN;
        let mut adam = Adam::new(AdamConfig::default());
        let err = adam.step(&mut [&mut p]).unwrap_err();
        assert!(matches!(err, Error::TrainingDivergence { .. }));
        assert_eq!(p.data(), &[1.0]);
    }
}

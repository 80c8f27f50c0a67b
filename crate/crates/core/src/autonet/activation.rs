use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Smallest row norm accepted by [`l2_normalize_forward`].
pub const MIN_NORMALIZE_NORM: f64 = 1e-12;

pub fn relu_forward(x: &Tensor) -> Tensor {
    let data = x.data().iter().map(|&v| v.max(0.0)).collect();
    Tensor::from_vec(x.shape(), data).expect("same shape")
}

/// Gradient of relu given its forward output.
pub fn relu_backward(output: &Tensor, grad_out: &Tensor) -> Result<Tensor> {
    if output.shape() != grad_out.shape() {
        return Err(Error::Shape {
            context: "relu grad_out",
            expected: output.shape().to_vec(),
            actual: grad_out.shape().to_vec(),
        });
    }
    let data = output
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&y, &g)| if y > 0.0 { g } else { 0.0 })
        .collect();
    Tensor::from_vec(output.shape(), data)
}

/// Concatenates two `[batch, n]` tensors along the feature axis.
pub fn concat_forward(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.shape().len() != 2 || b.shape().len() != 2 || a.shape()[0] != b.shape()[0] {
        return Err(Error::Shape {
            context: "concat operands",
            expected: a.shape().to_vec(),
            actual: b.shape().to_vec(),
        });
    }
    let (batch, na, nb) = (a.shape()[0], a.shape()[1], b.shape()[1]);
    let mut out = Vec::with_capacity(batch * (na + nb));
    for (ra, rb) in a.data().chunks_exact(na.max(1)).zip(b.data().chunks_exact(nb.max(1))) {
        out.extend_from_slice(ra);
        out.extend_from_slice(rb);
    }
    Tensor::from_vec(&[batch, na + nb], out)
}

/// Splits the gradient of a concatenation back into its two operands.
pub fn concat_backward(grad_out: &Tensor, left_width: usize) -> Result<(Tensor, Tensor)> {
    grad_out.expect_rank(2, "concat grad_out")?;
    let (batch, n) = (grad_out.shape()[0], grad_out.shape()[1]);
    if left_width > n {
        return Err(Error::Shape {
            context: "concat split",
            expected: vec![batch, left_width],
            actual: grad_out.shape().to_vec(),
        });
    }
    let mut ga = Vec::with_capacity(batch * left_width);
    let mut gb = Vec::with_capacity(batch * (n - left_width));
    for row in grad_out.data().chunks_exact(n) {
        ga.extend_from_slice(&row[..left_width]);
        gb.extend_from_slice(&row[left_width..]);
    }
    Ok((
        Tensor::from_vec(&[batch, left_width], ga)?,
        Tensor::from_vec(&[batch, n - left_width], gb)?,
    ))
}

/// Row norms saved by [`l2_normalize_forward`].
#[derive(Clone, Debug)]
pub struct NormalizeCache {
    norms: Vec<f64>,
}

/// Scales each row of a `[batch, d]` tensor to unit Euclidean norm.
pub fn l2_normalize_forward(x: &Tensor) -> Result<(Tensor, NormalizeCache)> {
    x.expect_rank(2, "l2_normalize input")?;
    let d = x.shape()[1];
    let mut norms = Vec::with_capacity(x.shape()[0]);
    let mut out = Vec::with_capacity(x.numel());
    for row in x.data().chunks_exact(d) {
        let n = row.iter().map(|&v| (v as f64).powi(2)).sum::<f64>().sqrt();
        if !(n > MIN_NORMALIZE_NORM) {
            return Err(Error::NumericDegeneracy(format!(
                "cannot unit-normalize a vector with norm {n:e}"
            )));
        }
        out.extend(row.iter().map(|&v| (v as f64 / n) as f32));
        norms.push(n);
    }
    Ok((Tensor::from_vec(x.shape(), out)?, NormalizeCache { norms }))
}

/// `dx = (g − y (y·g)) / ‖x‖`, with `y` the forward output.
pub fn l2_normalize_backward(output: &Tensor, cache: &NormalizeCache, grad_out: &Tensor) -> Result<Tensor> {
    if output.shape() != grad_out.shape() {
        return Err(Error::Shape {
            context: "l2_normalize grad_out",
            expected: output.shape().to_vec(),
            actual: grad_out.shape().to_vec(),
        });
    }
    let d = output.shape()[1];
    let mut grad = Vec::with_capacity(output.numel());
    for ((y, g), &n) in output
        .data()
        .chunks_exact(d)
        .zip(grad_out.data().chunks_exact(d))
        .zip(&cache.norms)
    {
        let yg: f64 = y.iter().zip(g).map(|(&a, &b)| a as f64 * b as f64).sum();
        grad.extend(
            y.iter()
                .zip(g)
                .map(|(&yv, &gv)| ((gv as f64 - yv as f64 * yg) / n) as f32),
        );
    }
    Tensor::from_vec(output.shape(), grad)
}

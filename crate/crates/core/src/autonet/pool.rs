use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Window argmax positions from a 2×2 max-pool forward pass.
#[derive(Clone, Debug)]
pub struct MaxPoolCache {
    input_shape: Vec<usize>,
    argmax: Vec<u32>,
}

/// 2×2 max pooling with stride 2 over `[N, C, H, W]`. Ties go to the first
/// element of the window in row-major order.
pub fn maxpool2x2_forward(x: &Tensor) -> Result<(Tensor, MaxPoolCache)> {
    x.expect_rank(4, "maxpool input")?;
    let s = x.shape();
    let (h, w) = (s[2], s[3]);
    if h % 2 != 0 || w % 2 != 0 || h == 0 || w == 0 {
        return Err(Error::Shape {
            context: "maxpool needs even spatial dims",
            expected: vec![s[0], s[1], h + h % 2, w + w % 2],
            actual: s.to_vec(),
        });
    }
    let (ho, wo) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(x.numel() / 4);
    let mut argmax = Vec::with_capacity(x.numel() / 4);
    for (p, plane) in x.data().chunks_exact(h * w).enumerate() {
        let base = p * h * w;
        for oy in 0..ho {
            for ox in 0..wo {
                let candidates = [
                    (2 * oy) * w + 2 * ox,
                    (2 * oy) * w + 2 * ox + 1,
                    (2 * oy + 1) * w + 2 * ox,
                    (2 * oy + 1) * w + 2 * ox + 1,
                ];
                let mut best = candidates[0];
                for &c in &candidates[1..] {
                    if plane[c] > plane[best] {
                        best = c;
                    }
                }
                out.push(plane[best]);
                argmax.push((base + best) as u32);
            }
        }
    }
    let output = Tensor::from_vec(&[s[0], s[1], ho, wo], out)?;
    Ok((
        output,
        MaxPoolCache {
            input_shape: s.to_vec(),
            argmax,
        },
    ))
}

pub fn maxpool2x2_backward(cache: &MaxPoolCache, grad_out: &Tensor) -> Result<Tensor> {
    if grad_out.numel() != cache.argmax.len() {
        return Err(Error::Shape {
            context: "maxpool grad_out",
            expected: vec![cache.argmax.len()],
            actual: grad_out.shape().to_vec(),
        });
    }
    let mut grad = vec![0.0f32; cache.input_shape.iter().product()];
    for (&idx, &g) in cache.argmax.iter().zip(grad_out.data()) {
        grad[idx as usize] += g;
    }
    Tensor::from_vec(&cache.input_shape, grad)
}

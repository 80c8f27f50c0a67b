use rand::Rng;

use super::gemm::{dgemm, View};
use super::tensor::Tensor;
use super::{uniform_fan_in, Layer};
use crate::error::{Error, Result};

/// 2-D cross-correlation over `[N, C, H, W]` inputs, computed as im2col
/// followed by a matrix product. Sums accumulate in `f64`.
#[derive(Clone, Debug)]
pub struct Conv2d {
    /// `[out_channels, in_channels, k, k]`
    pub weight: Tensor,
    /// `[out_channels]`
    pub bias: Tensor,
    pub stride: usize,
    pub padding: usize,
}

/// Saved input of a convolution forward pass.
#[derive(Clone, Debug)]
pub struct Conv2dCache {
    input: Tensor,
}

#[derive(Clone, Copy, Debug)]
struct Geometry {
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    o: usize,
    k: usize,
    ho: usize,
    wo: usize,
    stride: usize,
    pad: usize,
}

impl Geometry {
    fn patch(&self) -> usize {
        self.c * self.k * self.k
    }
    fn out_pixels(&self) -> usize {
        self.ho * self.wo
    }
}

impl Conv2d {
    pub fn new<R: Rng + ?Sized>(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        rng: &mut R,
    ) -> Self {
        let fan_in = in_channels * kernel * kernel;
        let weight = uniform_fan_in(&[out_channels, in_channels, kernel, kernel], fan_in, rng);
        let bias = uniform_fan_in(&[out_channels], fan_in, rng);
        Self {
            weight,
            bias,
            stride,
            padding,
        }
    }

    pub fn from_parts(weight: Tensor, bias: Tensor, stride: usize, padding: usize) -> Result<Self> {
        weight.expect_rank(4, "conv weight")?;
        let ws = weight.shape();
        if ws[2] != ws[3] || bias.shape() != [ws[0]] || stride == 0 {
            return Err(Error::Shape {
                context: "conv bias / square kernel",
                expected: vec![ws[0]],
                actual: bias.shape().to_vec(),
            });
        }
        let mut weight = weight;
        let mut bias = bias;
        if !weight.requires_grad() {
            let shape = weight.shape().to_vec();
            weight = Tensor::parameter(&shape, weight.into_data())?;
        }
        if !bias.requires_grad() {
            let shape = bias.shape().to_vec();
            bias = Tensor::parameter(&shape, bias.into_data())?;
        }
        Ok(Self {
            weight,
            bias,
            stride,
            padding,
        })
    }

    pub fn output_hw(&self, h: usize, w: usize) -> Option<(usize, usize)> {
        let k = self.weight.shape()[2];
        let (hp, wp) = (h + 2 * self.padding, w + 2 * self.padding);
        if hp < k || wp < k {
            return None;
        }
        Some(((hp - k) / self.stride + 1, (wp - k) / self.stride + 1))
    }

    fn geometry(&self, input: &Tensor) -> Result<Geometry> {
        input.expect_rank(4, "conv input")?;
        let s = input.shape();
        let ws = self.weight.shape();
        if s[1] != ws[1] {
            return Err(Error::Shape {
                context: "conv input channels vs weight",
                expected: vec![s[0], ws[1], s[2], s[3]],
                actual: s.to_vec(),
            });
        }
        let (ho, wo) = self.output_hw(s[2], s[3]).ok_or_else(|| Error::Shape {
            context: "conv spatial size smaller than kernel",
            expected: ws.to_vec(),
            actual: s.to_vec(),
        })?;
        Ok(Geometry {
            n: s[0],
            c: s[1],
            h: s[2],
            w: s[3],
            o: ws[0],
            k: ws[2],
            ho,
            wo,
            stride: self.stride,
            pad: self.padding,
        })
    }

    pub fn forward(&self, input: &Tensor) -> Result<(Tensor, Conv2dCache)> {
        let g = self.geometry(input)?;
        let weight: Vec<f64> = self.weight.data().iter().map(|&v| v as f64).collect();
        let mut cols = vec![0.0f64; g.patch() * g.out_pixels()];
        let mut acc = vec![0.0f64; g.o * g.out_pixels()];
        let mut out = Vec::with_capacity(g.n * g.o * g.out_pixels());
        let sample_len = g.c * g.h * g.w;
        for x in input.data().chunks_exact(sample_len) {
            im2col(x, &g, &mut cols);
            for (row, &b) in acc.chunks_exact_mut(g.out_pixels()).zip(self.bias.data()) {
                row.iter_mut().for_each(|v| *v = b as f64);
            }
            dgemm(
                1.0,
                View::new(&weight, g.o, g.patch()),
                View::new(&cols, g.patch(), g.out_pixels()),
                1.0,
                &mut acc,
            );
            out.extend(acc.iter().map(|&v| v as f32));
        }
        let output = Tensor::from_vec(&[g.n, g.o, g.ho, g.wo], out)?;
        Ok((output, Conv2dCache { input: input.clone() }))
    }

    /// Accumulates parameter gradients and returns the input gradient.
    pub fn backward(&mut self, cache: &Conv2dCache, grad_out: &Tensor) -> Result<Tensor> {
        let g = self.geometry(&cache.input)?;
        let expected = [g.n, g.o, g.ho, g.wo];
        if grad_out.shape() != expected {
            return Err(Error::Shape {
                context: "conv grad_out",
                expected: expected.to_vec(),
                actual: grad_out.shape().to_vec(),
            });
        }
        let weight: Vec<f64> = self.weight.data().iter().map(|&v| v as f64).collect();
        let mut grad_w = vec![0.0f64; g.o * g.patch()];
        let mut grad_b = vec![0.0f64; g.o];
        let mut cols = vec![0.0f64; g.patch() * g.out_pixels()];
        let mut dcols = vec![0.0f64; g.patch() * g.out_pixels()];
        let mut dy = vec![0.0f64; g.o * g.out_pixels()];
        let sample_len = g.c * g.h * g.w;
        let mut grad_in = vec![0.0f32; cache.input.numel()];

        for ((x, gy), gx) in cache
            .input
            .data()
            .chunks_exact(sample_len)
            .zip(grad_out.data().chunks_exact(g.o * g.out_pixels()))
            .zip(grad_in.chunks_exact_mut(sample_len))
        {
            for (d, &v) in dy.iter_mut().zip(gy) {
                *d = v as f64;
            }
            for (gb, row) in grad_b.iter_mut().zip(dy.chunks_exact(g.out_pixels())) {
                *gb += row.iter().sum::<f64>();
            }
            im2col(x, &g, &mut cols);
            // dW += dY · colsᵀ
            dgemm(
                1.0,
                View::new(&dy, g.o, g.out_pixels()),
                View::transposed(&cols, g.patch(), g.out_pixels()),
                1.0,
                &mut grad_w,
            );
            // dcols = Wᵀ · dY
            dgemm(
                1.0,
                View::transposed(&weight, g.o, g.patch()),
                View::new(&dy, g.o, g.out_pixels()),
                0.0,
                &mut dcols,
            );
            col2im(&dcols, &g, gx);
        }

        accumulate(&mut self.weight, &grad_w);
        accumulate(&mut self.bias, &grad_b);
        Tensor::from_vec(cache.input.shape(), grad_in)
    }
}

fn accumulate(param: &mut Tensor, grad: &[f64]) {
    if let Some(pg) = param.grad_mut() {
        for (p, &g) in pg.iter_mut().zip(grad) {
            *p += g as f32;
        }
    }
}

fn im2col(x: &[f32], g: &Geometry, cols: &mut [f64]) {
    let hw = g.out_pixels();
    for c in 0..g.c {
        let plane = &x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..g.k {
            for kj in 0..g.k {
                let row = &mut cols[((c * g.k + ki) * g.k + kj) * hw..][..hw];
                for oy in 0..g.ho {
                    let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                    let dst = &mut row[oy * g.wo..(oy + 1) * g.wo];
                    if iy < 0 || iy >= g.h as isize {
                        dst.iter_mut().for_each(|v| *v = 0.0);
                        continue;
                    }
                    let src = &plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for (ox, d) in dst.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                        *d = if ix < 0 || ix >= g.w as isize {
                            0.0
                        } else {
                            src[ix as usize] as f64
                        };
                    }
                }
            }
        }
    }
}

fn col2im(cols: &[f64], g: &Geometry, grad: &mut [f32]) {
    let hw = g.out_pixels();
    let mut acc = vec![0.0f64; g.c * g.h * g.w];
    for c in 0..g.c {
        let plane = &mut acc[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..g.k {
            for kj in 0..g.k {
                let row = &cols[((c * g.k + ki) * g.k + kj) * hw..][..hw];
                for oy in 0..g.ho {
                    let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for ox in 0..g.wo {
                        let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                        if ix >= 0 && ix < g.w as isize {
                            dst[ix as usize] += row[oy * g.wo + ox];
                        }
                    }
                }
            }
        }
    }
    for (o, a) in grad.iter_mut().zip(acc) {
        *o = a as f32;
    }
}

impl Layer for Conv2d {
    fn tensors(&self) -> Vec<(&'static str, &Tensor)> {
        vec![("weight", &self.weight), ("bias", &self.bias)]
    }

    fn tensors_mut(&mut self) -> Vec<(&'static str, &mut Tensor)> {
        vec![("weight", &mut self.weight), ("bias", &mut self.bias)]
    }
}

//! Shared oracles for the integration tests: a central finite-difference
//! gradient checker and per-layer check instances.
#![allow(dead_code)]

use quatrefine::autonet::{
    concat_backward, concat_forward, l2_normalize_backward, l2_normalize_forward, maxpool2x2_backward,
    maxpool2x2_forward, relu_backward, relu_forward, BatchNorm2d, Conv2d, Linear, Mode, Tensor,
};
use quatrefine::refine::{geodesic_loss, mse_loss};
use quatrefine::rotgeo::{geodesic_angle, UnitQuaternion};
use quatrefine::sampler::{rng_from_seed, SampleRng};
use rand::Rng;

/// Finite-difference step.
pub const H: f32 = 1e-3;

/// Per-component guard: components below this fraction of the tensor's
/// largest gradient are compared against that floor. Single-precision
/// outputs carry rounding noise of a few 1e-5 in a ±1e-3 difference
/// quotient, which swamps the relative error of small components.
pub const COMPONENT_FLOOR: f64 = 0.1;

#[derive(Clone, Copy, Debug, Default)]
pub struct CheckStats {
    /// Largest `‖a − n‖ / max(‖a‖, ‖n‖)` over the checked tensors.
    pub norm_rel_err: f64,
    /// Largest floored per-component relative error.
    pub component_rel_err: f64,
    pub coords: usize,
}

impl CheckStats {
    pub fn merge(self, o: CheckStats) -> CheckStats {
        CheckStats {
            norm_rel_err: self.norm_rel_err.max(o.norm_rel_err),
            component_rel_err: self.component_rel_err.max(o.component_rel_err),
            coords: self.coords + o.coords,
        }
    }

    fn from_pairs(pairs: &[(f64, f64)]) -> CheckStats {
        let scale = pairs.iter().fold(0.0f64, |m, &(a, _)| m.max(a.abs()));
        let floor = (COMPONENT_FLOOR * scale).max(f64::MIN_POSITIVE);
        let (mut diff, mut na, mut nn, mut worst) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
        for &(a, n) in pairs {
            diff += (a - n) * (a - n);
            na += a * a;
            nn += n * n;
            worst = worst.max((a - n).abs() / a.abs().max(n.abs()).max(floor));
        }
        CheckStats {
            norm_rel_err: diff.sqrt() / na.sqrt().max(nn.sqrt()).max(f64::MIN_POSITIVE),
            component_rel_err: worst,
            coords: pairs.len(),
        }
    }
}

/// Compares `analytic` with central differences of `objective` around
/// `x`, perturbing one coordinate at a time by ±H. The divisor is the
/// step actually realized in single precision.
pub fn check_coords(x: &[f32], analytic: &[f32], mut objective: impl FnMut(&[f32]) -> f64) -> CheckStats {
    assert_eq!(x.len(), analytic.len());
    let mut probe = x.to_vec();
    let mut pairs = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        probe[i] = x[i] + H;
        let (up, fp) = (probe[i], objective(&probe));
        probe[i] = x[i] - H;
        let (down, fm) = (probe[i], objective(&probe));
        probe[i] = x[i];
        pairs.push((analytic[i] as f64, (fp - fm) / (up as f64 - down as f64)));
    }
    CheckStats::from_pairs(&pairs)
}

fn uniform(rng: &mut SampleRng, n: usize, lo: f32, hi: f32) -> Vec<f32> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

/// Scalar objective `Σ w·y` accumulated in double precision.
fn project(y: &Tensor, w: &[f32]) -> f64 {
    y.data().iter().zip(w).map(|(&a, &b)| a as f64 * b as f64).sum()
}

fn tensor(shape: &[usize], data: Vec<f32>) -> Tensor {
    Tensor::from_vec(shape, data).unwrap()
}

fn param(shape: &[usize], data: Vec<f32>) -> Tensor {
    Tensor::parameter(shape, data).unwrap()
}

pub fn conv_instance(seed: u64) -> CheckStats {
    let mut rng = rng_from_seed(seed);
    let stride = 1 + (seed % 2) as usize;
    let (n, c, o, k, hw) = (2, 3, 4, 3, 8);
    let x = uniform(&mut rng, n * c * hw * hw, -1.0, 1.0);
    let w = uniform(&mut rng, o * c * k * k, -0.5, 0.5);
    let b = uniform(&mut rng, o, -0.5, 0.5);
    let build = |w: &[f32], b: &[f32]| {
        Conv2d::from_parts(param(&[o, c, k, k], w.to_vec()), param(&[o], b.to_vec()), stride, 1).unwrap()
    };
    let xs = [n, c, hw, hw];
    let layer = build(&w, &b);
    let (y, _) = layer.forward(&tensor(&xs, x.clone())).unwrap();
    let proj = uniform(&mut rng, y.numel(), -1.0, 1.0);

    let mut layer = build(&w, &b);
    let (y, cache) = layer.forward(&tensor(&xs, x.clone())).unwrap();
    let gx = layer.backward(&cache, &tensor(y.shape(), proj.clone())).unwrap();
    let gw = layer.weight.grad().unwrap().to_vec();
    let gb = layer.bias.grad().unwrap().to_vec();

    let f = |x: &[f32], w: &[f32], b: &[f32]| project(&build(w, b).forward(&tensor(&xs, x.to_vec())).unwrap().0, &proj);
    check_coords(&x, gx.data(), |p| f(p, &w, &b))
        .merge(check_coords(&w, &gw, |p| f(&x, p, &b)))
        .merge(check_coords(&b, &gb, |p| f(&x, &w, p)))
}

pub fn batchnorm_instance(seed: u64) -> CheckStats {
    let mut rng = rng_from_seed(seed);
    let (n, c, hw) = (4, 3, 2);
    let xs = [n, c, hw, hw];
    let x = uniform(&mut rng, n * c * hw * hw, -2.0, 2.0);
    let gamma = uniform(&mut rng, c, 0.5, 1.5);
    let beta = uniform(&mut rng, c, -0.5, 0.5);
    let proj = uniform(&mut rng, x.len(), -1.0, 1.0);
    let build = |g: &[f32], b: &[f32]| {
        let mut bn = BatchNorm2d::new(c);
        bn.gamma = param(&[c], g.to_vec());
        bn.beta = param(&[c], b.to_vec());
        bn
    };
    let mut layer = build(&gamma, &beta);
    let (y, cache) = layer.forward(&tensor(&xs, x.clone()), Mode::Train).unwrap();
    let gx = layer.backward(&cache, &tensor(y.shape(), proj.clone())).unwrap();
    let gg = layer.gamma.grad().unwrap().to_vec();
    let gb = layer.beta.grad().unwrap().to_vec();

    let f = |x: &[f32], g: &[f32], b: &[f32]| {
        project(
            &build(g, b).forward(&tensor(&xs, x.to_vec()), Mode::Train).unwrap().0,
            &proj,
        )
    };
    let train = check_coords(&x, gx.data(), |p| f(p, &gamma, &beta))
        .merge(check_coords(&gamma, &gg, |p| f(&x, p, &beta)))
        .merge(check_coords(&beta, &gb, |p| f(&x, &gamma, p)));

    let mut eval = build(&gamma, &beta);
    eval.running_mean = tensor(&[c], uniform(&mut rng, c, -0.5, 0.5));
    eval.running_var = tensor(&[c], uniform(&mut rng, c, 0.5, 2.0));
    let (y, cache) = eval.forward(&tensor(&xs, x.clone()), Mode::Eval).unwrap();
    let gx = eval.backward(&cache, &tensor(y.shape(), proj.clone())).unwrap();
    train.merge(check_coords(&x, gx.data(), |p| {
        project(&eval.forward_eval(&tensor(&xs, p.to_vec())).unwrap().0, &proj)
    }))
}

pub fn linear_instance(seed: u64) -> CheckStats {
    let mut rng = rng_from_seed(seed);
    let (n, i, o) = (3, 8, 5);
    let x = uniform(&mut rng, n * i, -1.0, 1.0);
    let w = uniform(&mut rng, o * i, -0.5, 0.5);
    let b = uniform(&mut rng, o, -0.5, 0.5);
    let proj = uniform(&mut rng, n * o, -1.0, 1.0);
    let build = |w: &[f32], b: &[f32]| Linear::from_parts(param(&[o, i], w.to_vec()), param(&[o], b.to_vec())).unwrap();
    let mut layer = build(&w, &b);
    let (y, cache) = layer.forward(&tensor(&[n, i], x.clone())).unwrap();
    let gx = layer.backward(&cache, &tensor(y.shape(), proj.clone())).unwrap();
    let gw = layer.weight.grad().unwrap().to_vec();
    let gb = layer.bias.grad().unwrap().to_vec();
    let f = |x: &[f32], w: &[f32], b: &[f32]| project(&build(w, b).apply(&tensor(&[n, i], x.to_vec())).unwrap(), &proj);
    check_coords(&x, gx.data(), |p| f(p, &w, &b))
        .merge(check_coords(&w, &gw, |p| f(&x, p, &b)))
        .merge(check_coords(&b, &gb, |p| f(&x, &w, p)))
}

/// Inputs are kept at least 0.05 from the kink at zero.
pub fn relu_instance(seed: u64) -> CheckStats {
    let mut rng = rng_from_seed(seed);
    let x: Vec<f32> = (0..24)
        .map(|_| {
            let m = rng.random_range(0.05f32..1.0);
            if rng.random::<bool>() {
                m
            } else {
                -m
            }
        })
        .collect();
    let proj = uniform(&mut rng, x.len(), -1.0, 1.0);
    let shape = [4, 6];
    let y = relu_forward(&tensor(&shape, x.clone()));
    let gx = relu_backward(&y, &tensor(&shape, proj.clone())).unwrap();
    check_coords(&x, gx.data(), |p| {
        project(&relu_forward(&tensor(&shape, p.to_vec())), &proj)
    })
}

/// Every window holds distinct values at least 0.05 apart, so no ±H step
/// changes which element is the maximum.
pub fn maxpool_instance(seed: u64) -> CheckStats {
    let mut rng = rng_from_seed(seed);
    let (n, c, hw) = (2, 2, 4);
    let shape = [n, c, hw, hw];
    let mut x = vec![0.0f32; n * c * hw * hw];
    for plane in x.chunks_exact_mut(hw * hw) {
        for wy in 0..hw / 2 {
            for wx in 0..hw / 2 {
                let base = rng.random_range(-1.0f32..1.0);
                let mut levels = [0.0f32, 0.05, 0.1, 0.15];
                for i in (1..4).rev() {
                    levels.swap(i, rng.random_range(0..=i));
                }
                for (k, l) in levels.iter().enumerate() {
                    plane[(2 * wy + k / 2) * hw + 2 * wx + k % 2] = base + l;
                }
            }
        }
    }
    let (y, cache) = maxpool2x2_forward(&tensor(&shape, x.clone())).unwrap();
    let proj = uniform(&mut rng, y.numel(), -1.0, 1.0);
    let gx = maxpool2x2_backward(&cache, &tensor(y.shape(), proj.clone())).unwrap();
    check_coords(&x, gx.data(), |p| {
        project(&maxpool2x2_forward(&tensor(&shape, p.to_vec())).unwrap().0, &proj)
    })
}

pub fn concat_instance(seed: u64) -> CheckStats {
    let mut rng = rng_from_seed(seed);
    let (n, na, nb) = (3, 4, 5);
    let a = uniform(&mut rng, n * na, -1.0, 1.0);
    let b = uniform(&mut rng, n * nb, -1.0, 1.0);
    let proj = uniform(&mut rng, n * (na + nb), -1.0, 1.0);
    let (ga, gb) = concat_backward(&tensor(&[n, na + nb], proj.clone()), na).unwrap();
    let f = |a: &[f32], b: &[f32]| {
        project(
            &concat_forward(&tensor(&[n, na], a.to_vec()), &tensor(&[n, nb], b.to_vec())).unwrap(),
            &proj,
        )
    };
    check_coords(&a, ga.data(), |p| f(p, &b)).merge(check_coords(&b, gb.data(), |p| f(&a, p)))
}

pub fn l2_normalize_instance(seed: u64) -> CheckStats {
    let mut rng = rng_from_seed(seed);
    let shape = [3, 4];
    let mut x = Vec::with_capacity(12);
    while x.len() < 12 {
        let row = uniform(&mut rng, 4, -1.0, 1.0);
        if row.iter().map(|v| v * v).sum::<f32>() >= 0.25 {
            x.extend(row);
        }
    }
    let proj = uniform(&mut rng, 12, -1.0, 1.0);
    let (y, cache) = l2_normalize_forward(&tensor(&shape, x.clone())).unwrap();
    let gx = l2_normalize_backward(&y, &cache, &tensor(&shape, proj.clone())).unwrap();
    check_coords(&x, gx.data(), |p| {
        project(&l2_normalize_forward(&tensor(&shape, p.to_vec())).unwrap().0, &proj)
    })
}

fn random_unit(rng: &mut SampleRng) -> UnitQuaternion {
    loop {
        let v: [f64; 4] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
        if let Ok(q) =
            UnitQuaternion::try_from_array(v).or_else(|_| UnitQuaternion::new_normalize(v[0], v[1], v[2], v[3]))
        {
            return q;
        }
    }
}

/// Central differences in double precision on the loss's raw 4-vector
/// input.
fn check_loss(
    q_out: UnitQuaternion,
    label: UnitQuaternion,
    loss: fn([f64; 4], UnitQuaternion) -> (f64, [f64; 4]),
) -> CheckStats {
    let x = q_out.to_array();
    let (_, g) = loss(x, label);
    let h = H as f64;
    let pairs: Vec<(f64, f64)> = (0..4)
        .map(|i| {
            let mut p = x;
            p[i] = x[i] + h;
            let fp = loss(p, label).0;
            p[i] = x[i] - h;
            let fm = loss(p, label).0;
            (g[i], (fp - fm) / (2.0 * h))
        })
        .collect();
    CheckStats::from_pairs(&pairs)
}

/// Random unit `q_out` and label with loss in [0.1, 3.0] rad.
pub fn geodesic_loss_instance(seed: u64) -> CheckStats {
    let mut rng = rng_from_seed(seed);
    loop {
        let (q, l) = (random_unit(&mut rng), random_unit(&mut rng));
        let angle = geodesic_angle(q, l);
        if (0.1..=3.0).contains(&angle) {
            assert!((geodesic_loss(q.to_array(), l).0 - angle).abs() < 1e-9);
            return check_loss(q, l, geodesic_loss);
        }
    }
}

pub fn mse_loss_instance(seed: u64) -> CheckStats {
    let mut rng = rng_from_seed(seed);
    let (q, l) = (random_unit(&mut rng), random_unit(&mut rng));
    check_loss(q, l, mse_loss)
}

pub type Instance = fn(u64) -> CheckStats;

/// Every differentiable layer and loss, with its check instance.
pub const GRADIENT_CHECKS: [(&str, Instance); 9] = [
    ("conv2d", conv_instance),
    ("batchnorm2d", batchnorm_instance),
    ("linear", linear_instance),
    ("relu", relu_instance),
    ("maxpool2x2", maxpool_instance),
    ("concat", concat_instance),
    ("l2_normalize", l2_normalize_instance),
    ("geodesic_loss", geodesic_loss_instance),
    ("mse_loss", mse_loss_instance),
];

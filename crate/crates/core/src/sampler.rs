//! Rotation-noise generation for coarse input poses and correction labels.
//!
//! A coarse estimate is produced by rotating the ground truth about a
//! uniformly random axis by a random angle: `q_in = q_gt * q_noise`. The
//! label is the rotation that undoes it, the same axis with the negated
//! angle, so `q_in * q_label` is the ground truth again.
//!
//! Randomness comes from [`SampleRng`] (ChaCha8), whose output stream is
//! fixed by its published algorithm and therefore identical across
//! platforms for a given seed.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::rotgeo::{axis_angle_to_quat, quat_mul, AxisAngle, UnitQuaternion};

/// Portable seeded generator used for every random stream in the crate.
pub type SampleRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> SampleRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Distribution of the perturbation angle, in degrees.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NoiseDistribution {
    Uniform { lo_deg: f64, hi_deg: f64 },
    Normal { mean_deg: f64, sd_deg: f64 },
}

impl NoiseDistribution {
    pub fn validate(&self) -> Result<()> {
        match *self {
            NoiseDistribution::Uniform { lo_deg, hi_deg } => {
                if !(0.0 <= lo_deg && lo_deg < hi_deg && hi_deg <= 180.0) {
                    return Err(Error::InvalidArgument(format!(
                        "uniform noise needs 0 <= lo < hi <= 180, got ({lo_deg}, {hi_deg})"
                    )));
                }
            }
            NoiseDistribution::Normal { mean_deg, sd_deg } => {
                if !(mean_deg >= 0.0 && sd_deg > 0.0 && mean_deg.is_finite() && sd_deg.is_finite()) {
                    return Err(Error::InvalidArgument(format!(
                        "normal noise needs mean >= 0 and sd > 0, got ({mean_deg}, {sd_deg})"
                    )));
                }
            }
        }
        Ok(())
    }
}

impl Default for NoiseDistribution {
    fn default() -> Self {
        NoiseDistribution::Uniform {
            lo_deg: 0.0,
            hi_deg: 30.0,
        }
    }
}

/// `uniform:LO:HI` or `normal:MEAN:SD`, degrees.
impl FromStr for NoiseDistribution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split(':').collect();
        let bad = || {
            Error::InvalidArgument(format!(
                "bad noise distribution {s:?}, expected uniform:LO:HI or normal:MEAN:SD"
            ))
        };
        if parts.len() != 3 {
            return Err(bad());
        }
        let a: f64 = parts[1].trim().parse().map_err(|_| bad())?;
        let b: f64 = parts[2].trim().parse().map_err(|_| bad())?;
        let dist = match parts[0].trim().to_ascii_lowercase().as_str() {
            "uniform" | "u" => NoiseDistribution::Uniform { lo_deg: a, hi_deg: b },
            "normal" | "n" => NoiseDistribution::Normal { mean_deg: a, sd_deg: b },
            _ => return Err(bad()),
        };
        dist.validate()?;
        Ok(dist)
    }
}

impl fmt::Display for NoiseDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NoiseDistribution::Uniform { lo_deg, hi_deg } => write!(f, "uniform:{lo_deg}:{hi_deg}"),
            NoiseDistribution::Normal { mean_deg, sd_deg } => write!(f, "normal:{mean_deg}:{sd_deg}"),
        }
    }
}

/// Noise settings for one sample stream.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseConfig {
    pub distribution: NoiseDistribution,
    pub seed: u64,
    /// Number of independent noise draws emitted per image (1 = no resampling).
    pub resample: usize,
}

impl NoiseConfig {
    pub fn new(distribution: NoiseDistribution, seed: u64) -> Self {
        Self {
            distribution,
            seed,
            resample: 1,
        }
    }

    pub fn with_resample(mut self, k: usize) -> Self {
        self.resample = k;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.distribution.validate()?;
        if self.resample == 0 {
            return Err(Error::InvalidArgument("resample factor must be >= 1".into()));
        }
        Ok(())
    }
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self::new(NoiseDistribution::default(), 0)
    }
}

/// A perturbed pose and the correction that undoes the perturbation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoisePair {
    pub q_in: UnitQuaternion,
    pub q_label: UnitQuaternion,
    pub q_noise: UnitQuaternion,
    /// Perturbation angle in radians.
    pub angle: f64,
}

/// Axis `(√(1−s²) cos α, √(1−s²) sin α, s)`.
pub fn noise_axis(alpha: f64, s: f64) -> [f64; 3] {
    let r = (1.0 - s * s).max(0.0).sqrt();
    [r * alpha.cos(), r * alpha.sin(), s]
}

/// Uniform direction on the unit sphere, `α ~ U(0, 2π)`, `s ~ U(−1, 1)`.
pub fn sample_noise_axis<R: Rng + ?Sized>(rng: &mut R) -> [f64; 3] {
    let alpha = rng.random_range(0.0..2.0 * PI);
    let s = rng.random_range(-1.0..=1.0);
    noise_axis(alpha, s)
}

/// Draws a perturbation angle, returned in radians and clamped to `[0, π]`.
pub fn sample_noise_angle<R: Rng + ?Sized>(dist: &NoiseDistribution, rng: &mut R) -> f64 {
    let deg = match *dist {
        NoiseDistribution::Uniform { lo_deg, hi_deg } => rng.random_range(lo_deg..hi_deg),
        NoiseDistribution::Normal { mean_deg, sd_deg } => {
            // Parameters are validated; Normal::new only fails for sd < 0 or NaN.
            let normal = Normal::new(mean_deg, sd_deg).expect("validated normal parameters");
            normal.sample(rng)
        }
    };
    deg.clamp(0.0, 180.0).to_radians()
}

pub fn sample_noise<R: Rng + ?Sized>(dist: &NoiseDistribution, rng: &mut R) -> AxisAngle {
    let axis = sample_noise_axis(rng);
    let angle = sample_noise_angle(dist, rng);
    AxisAngle { axis, angle }
}

/// Applies a known perturbation to `q_gt`.
pub fn perturb_with(q_gt: UnitQuaternion, noise: AxisAngle) -> Result<NoisePair> {
    let q_noise = axis_angle_to_quat(noise)?;
    let q_label = axis_angle_to_quat(AxisAngle {
        axis: noise.axis,
        angle: -noise.angle,
    })?;
    Ok(NoisePair {
        q_in: quat_mul(q_gt, q_noise),
        q_label,
        q_noise,
        angle: noise.angle,
    })
}

pub fn perturb<R: Rng + ?Sized>(q_gt: UnitQuaternion, dist: &NoiseDistribution, rng: &mut R) -> NoisePair {
    let noise = sample_noise(dist, rng);
    // The axis comes from `noise_axis` and is unit by construction.
    perturb_with(q_gt, noise).expect("sampled axis is unit length")
}

/// A seeded stream of perturbations.
#[derive(Clone, Debug)]
pub struct NoiseSampler {
    distribution: NoiseDistribution,
    rng: SampleRng,
}

impl NoiseSampler {
    pub fn new(cfg: &NoiseConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            distribution: cfg.distribution,
            rng: rng_from_seed(cfg.seed),
        })
    }

    pub fn distribution(&self) -> &NoiseDistribution {
        &self.distribution
    }

    pub fn perturb(&mut self, q_gt: UnitQuaternion) -> NoisePair {
        perturb(q_gt, &self.distribution, &mut self.rng)
    }

    pub fn rng_mut(&mut self) -> &mut SampleRng {
        &mut self.rng
    }
}

//! Experiment protocols: training-set size sweep, noise-distribution sweep
//! and test-noise resampling.

use std::fmt::Write as _;

use super::report::{evaluate, EvalReport, ReportFormat};
use crate::dataset::{DatasetSplit, LabeledImage};
use crate::error::{Error, Result};
use crate::refine::{build_network, train, EpochMetrics, RefinerWeights, TrainConfig};
use crate::sampler::{NoiseConfig, NoiseDistribution};

#[derive(Clone, Debug, PartialEq)]
pub enum ExperimentSpec {
    /// Train a fresh network on the first `n` training samples for each
    /// size and evaluate each on the test split.
    TrainingSize { sizes: Vec<usize> },
    /// Evaluate under each distribution. With `retrain`, a fresh network is
    /// trained with each distribution as its training noise; otherwise one
    /// model is evaluated under all of them.
    NoiseDistribution {
        distributions: Vec<NoiseDistribution>,
        retrain: bool,
    },
    /// Evaluate with one noise draw per test image and with `k` independent
    /// draws per image.
    Resampling { k: usize },
}

impl ExperimentSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentSpec::TrainingSize { .. } => "training-size",
            ExperimentSpec::NoiseDistribution { .. } => "noise-distribution",
            ExperimentSpec::Resampling { .. } => "resampling",
        }
    }

    /// U(0,30), N(30,5), N(10,5), one model evaluated under each.
    pub fn default_noise_sweep() -> Self {
        ExperimentSpec::NoiseDistribution {
            distributions: vec![
                NoiseDistribution::Uniform {
                    lo_deg: 0.0,
                    hi_deg: 30.0,
                },
                NoiseDistribution::Normal {
                    mean_deg: 30.0,
                    sd_deg: 5.0,
                },
                NoiseDistribution::Normal {
                    mean_deg: 10.0,
                    sd_deg: 5.0,
                },
            ],
            retrain: false,
        }
    }

    pub fn validate(&self, train_available: usize) -> Result<()> {
        match self {
            ExperimentSpec::TrainingSize { sizes } => {
                if sizes.is_empty() {
                    return Err(Error::InvalidArgument(
                        "training-size experiment needs at least one size".into(),
                    ));
                }
                for &n in sizes {
                    if n < 2 {
                        return Err(Error::InvalidArgument(format!("training size {n} is below 2")));
                    }
                    if n > train_available {
                        return Err(Error::InsufficientSamples {
                            requested: n,
                            available: train_available,
                        });
                    }
                }
            }
            ExperimentSpec::NoiseDistribution { distributions, .. } => {
                if distributions.is_empty() {
                    return Err(Error::InvalidArgument(
                        "noise-distribution experiment needs at least one distribution".into(),
                    ));
                }
                for d in distributions {
                    d.validate()?;
                }
            }
            ExperimentSpec::Resampling { k } => {
                if *k < 1 {
                    return Err(Error::InvalidArgument("resample factor must be >= 1".into()));
                }
            }
        }
        Ok(())
    }
}

/// Shared inputs for every experiment run.
pub struct ExperimentContext<'a> {
    pub samples: &'a [LabeledImage],
    pub names: &'a [(u32, String)],
    pub split: &'a DatasetSplit,
    pub train: TrainConfig,
    /// Seeds network initialization for every model trained here.
    pub network_seed: u64,
    /// Test-time noise; its distribution is overridden by the
    /// noise-distribution sweep and its resample factor by the resampling
    /// experiment.
    pub eval_noise: NoiseConfig,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentRow {
    pub label: String,
    pub report: EvalReport,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentReport {
    pub name: &'static str,
    pub rows: Vec<ExperimentRow>,
    /// Derived quantities, such as the resampling delta.
    pub summary: Vec<(String, f64)>,
}

impl ExperimentReport {
    pub fn row(&self, label: &str) -> Option<&EvalReport> {
        self.rows.iter().find(|r| r.label == label).map(|r| &r.report)
    }

    pub fn render(&self, format: ReportFormat) -> String {
        let mut s = String::new();
        match format {
            ReportFormat::Table => {
                let _ = writeln!(s, "experiment {}", self.name);
                let _ = writeln!(s, "{:<24} {:>7} {:>11} {:>11}", "run", "count", "mean_deg", "sd_deg");
                for r in &self.rows {
                    let o = &r.report.overall;
                    let _ = writeln!(
                        s,
                        "{:<24} {:>7} {:>11.6} {:>11.6}",
                        r.label, o.count, o.mean_deg, o.sd_deg
                    );
                }
                for (k, v) in &self.summary {
                    let _ = writeln!(s, "{k} {v:.6}");
                }
            }
            ReportFormat::KeyValue => {
                let _ = writeln!(s, "experiment={}", self.name);
                for (i, r) in self.rows.iter().enumerate() {
                    let _ = writeln!(s, "run.{i}.label={}", r.label);
                    s.push_str(&r.report.kv_lines(&format!("run.{i}.")));
                }
                for (k, v) in &self.summary {
                    let _ = writeln!(s, "summary.{k}={v:?}");
                }
            }
        }
        s
    }
}

fn train_fresh(
    ctx: &ExperimentContext<'_>,
    split: &DatasetSplit,
    cfg: &TrainConfig,
    on_epoch: &mut dyn FnMut(&str, &EpochMetrics),
    label: &str,
) -> Result<RefinerWeights> {
    let mut w = build_network(ctx.network_seed);
    train(&mut w, ctx.samples, split, cfg, |m| on_epoch(label, m))?;
    Ok(w)
}

/// Runs `spec`. Experiments that evaluate a single model use `model` when
/// given and otherwise train one with `ctx.train`. `on_epoch` observes
/// every training epoch together with the label of the run it belongs to.
pub fn run_experiment(
    spec: &ExperimentSpec,
    ctx: &ExperimentContext<'_>,
    model: Option<&RefinerWeights>,
    mut on_epoch: impl FnMut(&str, &EpochMetrics),
) -> Result<ExperimentReport> {
    spec.validate(ctx.split.train.len())?;
    if ctx.split.test.is_empty() {
        return Err(Error::InvalidArgument("experiment needs a non-empty test split".into()));
    }
    let eval = |w: &RefinerWeights, noise: &NoiseConfig| -> Result<EvalReport> {
        Ok(evaluate(w, ctx.samples, &ctx.split.test, noise, ctx.names)?.report)
    };
    let needs_shared = matches!(
        spec,
        ExperimentSpec::Resampling { .. } | ExperimentSpec::NoiseDistribution { retrain: false, .. }
    );
    let trained = match (needs_shared, model) {
        (true, None) => Some(train_fresh(ctx, ctx.split, &ctx.train, &mut on_epoch, "model")?),
        _ => None,
    };
    let shared = model.or(trained.as_ref());

    let mut rows = Vec::new();
    let mut summary = Vec::new();
    match spec {
        ExperimentSpec::TrainingSize { sizes } => {
            for &n in sizes {
                let label = format!("train_size={n}");
                let split = DatasetSplit {
                    train: ctx.split.train[..n].to_vec(),
                    ..ctx.split.clone()
                };
                let w = train_fresh(ctx, &split, &ctx.train, &mut on_epoch, &label)?;
                rows.push(ExperimentRow {
                    label,
                    report: eval(&w, &ctx.eval_noise)?,
                });
            }
        }
        ExperimentSpec::NoiseDistribution { distributions, retrain } => {
            let single = if *retrain { None } else { shared };
            for d in distributions {
                let label = format!("noise={d}");
                let noise = NoiseConfig {
                    distribution: *d,
                    ..ctx.eval_noise
                };
                let report = match single {
                    Some(w) => eval(w, &noise)?,
                    None => {
                        let mut cfg = ctx.train.clone();
                        cfg.noise.distribution = *d;
                        let w = train_fresh(ctx, ctx.split, &cfg, &mut on_epoch, &label)?;
                        eval(&w, &noise)?
                    }
                };
                rows.push(ExperimentRow { label, report });
            }
        }
        ExperimentSpec::Resampling { k } => {
            let w = shared.expect("resampling uses a shared model");
            let once = eval(w, &ctx.eval_noise.with_resample(1))?;
            let many = eval(w, &ctx.eval_noise.with_resample(*k))?;
            summary.push((
                "mean_delta_deg".to_string(),
                (many.overall.mean_deg - once.overall.mean_deg).abs(),
            ));
            rows.push(ExperimentRow {
                label: "resample=1".into(),
                report: once,
            });
            rows.push(ExperimentRow {
                label: format!("resample={k}"),
                report: many,
            });
        }
    }
    Ok(ExperimentReport {
        name: spec.name(),
        rows,
        summary,
    })
}

//! Evaluation over a test set and the report text formats.
//!
//! Table format (columns separated by runs of spaces, one row per object
//! id in ascending order, then an `all` row):
//!
//! ```text
//! object           count    mean_deg      sd_deg
//! 0:cuboid           500    6.123456    3.210000
//! all                500    6.123456    3.210000
//! ```
//!
//! Key-value format, one `key=value` per line, floats in shortest
//! round-trip form:
//!
//! ```text
//! noise=uniform:0:30
//! resample=1
//! object.0.name=cuboid
//! object.0.count=500
//! object.0.mean_deg=6.123456789
//! object.0.sd_deg=3.21
//! overall.count=500
//! overall.mean_deg=6.123456789
//! overall.sd_deg=3.21
//! ```
//!
//! `sd_deg` is the population standard deviation of the per-sample errors.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;
use std::time::{Duration, Instant};

use super::metrics::{angular_error, CorrectionModel};
use crate::dataset::{LabeledImage, PoseSample};
use crate::error::{Error, Result};
use crate::refine::refined_pose;
use crate::sampler::{NoiseConfig, NoiseDistribution, NoiseSampler};

/// Samples handed to the model per call.
pub const EVAL_BATCH: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Table,
    KeyValue,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "table" => Ok(ReportFormat::Table),
            "kv" => Ok(ReportFormat::KeyValue),
            _ => Err(Error::InvalidArgument(format!(
                "unknown report format {s:?}, expected table or kv"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ErrorStats {
    pub count: usize,
    pub mean_deg: f64,
    pub sd_deg: f64,
}

impl ErrorStats {
    /// Mean and population standard deviation; NaN for an empty list.
    pub fn from_errors(errors: &[f64]) -> Self {
        let n = errors.len() as f64;
        let mean = errors.iter().sum::<f64>() / n;
        let var = errors.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / n;
        Self {
            count: errors.len(),
            mean_deg: mean,
            sd_deg: var.sqrt(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ObjectStats {
    pub object_id: u32,
    pub name: Option<String>,
    pub stats: ErrorStats,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SampleError {
    /// Index into the sample list passed to [`evaluate`].
    pub sample: usize,
    pub object_id: u32,
    pub error_deg: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub noise: NoiseDistribution,
    pub resample: usize,
    pub objects: Vec<ObjectStats>,
    pub overall: ErrorStats,
    /// In evaluation order: each sample's `resample` draws are adjacent.
    pub errors: Vec<SampleError>,
}

impl EvalReport {
    pub fn from_errors(
        noise: NoiseDistribution,
        resample: usize,
        errors: Vec<SampleError>,
        names: &[(u32, String)],
    ) -> Self {
        let mut by_object: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
        for e in &errors {
            by_object.entry(e.object_id).or_default().push(e.error_deg);
        }
        let objects = by_object
            .into_iter()
            .map(|(id, errs)| ObjectStats {
                object_id: id,
                name: names.iter().find(|(i, _)| *i == id).map(|(_, n)| n.clone()),
                stats: ErrorStats::from_errors(&errs),
            })
            .collect();
        let all: Vec<f64> = errors.iter().map(|e| e.error_deg).collect();
        Self {
            noise,
            resample,
            objects,
            overall: ErrorStats::from_errors(&all),
            errors,
        }
    }

    pub fn render(&self, format: ReportFormat) -> String {
        match format {
            ReportFormat::Table => self.to_table(),
            ReportFormat::KeyValue => self.to_kv(),
        }
    }

    pub fn to_table(&self) -> String {
        let mut s = format!("{:<14} {:>7} {:>11} {:>11}\n", "object", "count", "mean_deg", "sd_deg");
        let row = |s: &mut String, label: &str, st: &ErrorStats| {
            let _ = writeln!(
                s,
                "{label:<14} {:>7} {:>11.6} {:>11.6}",
                st.count, st.mean_deg, st.sd_deg
            );
        };
        for o in &self.objects {
            let label = match &o.name {
                Some(n) => format!("{}:{n}", o.object_id),
                None => o.object_id.to_string(),
            };
            row(&mut s, &label, &o.stats);
        }
        row(&mut s, "all", &self.overall);
        s
    }

    pub fn to_kv(&self) -> String {
        self.kv_lines("")
    }

    /// Key-value lines with every key prefixed by `prefix`.
    pub fn kv_lines(&self, prefix: &str) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{prefix}noise={}", self.noise);
        let _ = writeln!(s, "{prefix}resample={}", self.resample);
        for o in &self.objects {
            let id = o.object_id;
            if let Some(n) = &o.name {
                let _ = writeln!(s, "{prefix}object.{id}.name={n}");
            }
            let _ = writeln!(s, "{prefix}object.{id}.count={}", o.stats.count);
            let _ = writeln!(s, "{prefix}object.{id}.mean_deg={:?}", o.stats.mean_deg);
            let _ = writeln!(s, "{prefix}object.{id}.sd_deg={:?}", o.stats.sd_deg);
        }
        let _ = writeln!(s, "{prefix}overall.count={}", self.overall.count);
        let _ = writeln!(s, "{prefix}overall.mean_deg={:?}", self.overall.mean_deg);
        let _ = writeln!(s, "{prefix}overall.sd_deg={:?}", self.overall.sd_deg);
        s
    }
}

/// Evaluation result plus model wall-clock time.
#[derive(Clone, Debug)]
pub struct TimedReport {
    pub report: EvalReport,
    pub model_time: Duration,
}

impl TimedReport {
    pub fn seconds_per_sample(&self) -> f64 {
        self.model_time.as_secs_f64() / self.report.errors.len().max(1) as f64
    }
}

/// Perturbs every selected sample `noise.resample` times, asks `model` for
/// corrections, and aggregates the angular errors of the refined poses.
///
/// Noise draws are sequential in (sample, draw) order from `noise.seed`, so
/// the report is a pure function of its inputs. Model calls are spread over
/// worker threads and their results gathered back in input order.
pub fn evaluate(
    model: &dyn CorrectionModel,
    samples: &[LabeledImage],
    indices: &[usize],
    noise: &NoiseConfig,
    names: &[(u32, String)],
) -> Result<TimedReport> {
    if indices.is_empty() {
        return Err(Error::InvalidArgument("evaluation set is empty".into()));
    }
    if let Some(&bad) = indices.iter().find(|&&i| i >= samples.len()) {
        return Err(Error::InvalidArgument(format!(
            "sample index {bad} out of range for {} samples",
            samples.len()
        )));
    }
    let mut sampler = NoiseSampler::new(noise)?;
    let mut inputs: Vec<(usize, PoseSample<'_>)> = Vec::with_capacity(indices.len() * noise.resample);
    for &i in indices {
        for _ in 0..noise.resample {
            let mut pair = sampler.perturb(samples[i].q_gt);
            pair.q_in = pair.q_in.canonical();
            inputs.push((i, samples[i].with_noise(&pair)));
        }
    }

    let chunks: Vec<&[(usize, PoseSample<'_>)]> = inputs.chunks(EVAL_BATCH).collect();
    let workers = std::thread::available_parallelism()
        .map_or(1, |n| n.get())
        .min(chunks.len());
    let start = Instant::now();
    let mut results: Vec<Option<Result<Vec<_>>>> = (0..chunks.len()).map(|_| None).collect();
    let run = |chunk: &[(usize, PoseSample<'_>)]| {
        let batch: Vec<PoseSample<'_>> = chunk.iter().map(|(_, p)| *p).collect();
        model.corrections(&batch)
    };
    if workers <= 1 {
        for (slot, chunk) in results.iter_mut().zip(&chunks) {
            *slot = Some(run(chunk));
        }
    } else {
        std::thread::scope(|scope| {
            let handles: Vec<_> = (0..workers)
                .map(|w| {
                    let chunks = &chunks;
                    let run = &run;
                    scope.spawn(move || {
                        (w..chunks.len())
                            .step_by(workers)
                            .map(|c| (c, run(chunks[c])))
                            .collect::<Vec<_>>()
                    })
                })
                .collect();
            for h in handles {
                for (c, r) in h.join().expect("evaluation worker panicked") {
                    results[c] = Some(r);
                }
            }
        });
    }
    let model_time = start.elapsed();

    let mut errors = Vec::with_capacity(inputs.len());
    for (chunk, result) in chunks.iter().zip(results) {
        let outs = result.expect("every chunk evaluated")?;
        if outs.len() != chunk.len() {
            return Err(Error::InvalidArgument(format!(
                "model returned {} corrections for {} samples",
                outs.len(),
                chunk.len()
            )));
        }
        for ((i, p), q_out) in chunk.iter().zip(outs) {
            errors.push(SampleError {
                sample: *i,
                object_id: p.object_id,
                error_deg: angular_error(refined_pose(p.q_in, q_out), p.q_gt),
            });
        }
    }
    Ok(TimedReport {
        report: EvalReport::from_errors(noise.distribution, noise.resample, errors, names),
        model_time,
    })
}

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use quatrefine::autonet::Checkpoint;
use quatrefine::dataset::{generate, load_dataset, make_split, Dataset, DatasetSplit, SynthConfig, INPUT_SIZE};
use quatrefine::eval::{
    apply_train_config, evaluate, read_config, run_experiment, CorrectionModel, ExperimentContext, ExperimentSpec,
    IdentityModel, OracleModel, ReportFormat,
};
use quatrefine::refine::{build_network, train as train_refiner, RefinerWeights, TrainConfig};
use quatrefine::sampler::{NoiseConfig, NoiseDistribution};

use crate::{
    DataArgs, EvalArgs, EvalNoiseArgs, ExperimentArgs, ExperimentKind, GenDataArgs, InspectArgs, ModelKind, Subset,
    TrainArgs, TrainOpts,
};

pub fn gen_data(a: GenDataArgs) -> Result<()> {
    let mut cfg = SynthConfig::new(a.count, a.seed);
    cfg.frame_size = a.frame_size;
    if let Some(s) = a.spread {
        cfg.spread_deg = s;
    }
    let frames = generate(&a.out, &cfg).with_context(|| format!("generating dataset in {}", a.out.display()))?;
    eprintln!("wrote {} frames to {}", frames.len(), a.out.display());
    Ok(())
}

fn load(data: &DataArgs) -> Result<(Dataset, DatasetSplit)> {
    let ds = load_dataset(&data.data, INPUT_SIZE).with_context(|| format!("loading {}", data.data.display()))?;
    for r in &ds.rejected {
        eprintln!("warning: skipped record: {}", r.error);
    }
    let split = make_split(ds.len(), data.split, data.split_seed)?;
    Ok((ds, split))
}

fn train_config(opts: &TrainOpts) -> Result<TrainConfig> {
    let mut cfg = TrainConfig::default();
    if let Some(path) = &opts.config {
        apply_train_config(&mut cfg, &read_config(path)?, path)?;
    }
    if let Some(v) = opts.epochs_mse {
        cfg.epochs_mse = v;
    }
    if let Some(v) = opts.epochs_geo {
        cfg.epochs_geodesic = v;
    }
    if let Some(v) = opts.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = opts.lr {
        cfg.lr = v;
    }
    if let Some(v) = &opts.noise {
        cfg.noise.distribution = v.parse()?;
    }
    if let Some(v) = opts.noise_seed {
        cfg.noise.seed = v;
    }
    if let Some(v) = opts.seed {
        cfg.seed = v;
    }
    if let Some(v) = opts.deterministic {
        cfg.deterministic = v;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_output(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn train(a: TrainArgs) -> Result<()> {
    let cfg = train_config(&a.opts)?;
    let (ds, split) = load(&a.data)?;
    let mut weights = match &a.init {
        Some(p) => RefinerWeights::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => build_network(a.opts.network_seed),
    };
    let format = a.format;
    if matches!(format, crate::Format::Table) {
        println!(
            "{:>5} {:>9} {:>12} {:>12} {:>14}",
            "epoch", "loss", "train_loss", "val_loss", "val_error_deg"
        );
    }
    let log = train_refiner(&mut weights, &ds.samples, &split, &cfg, |m| match format {
        crate::Format::Kv => println!("{m}"),
        crate::Format::Table => println!(
            "{:>5} {:>9} {:>12.6} {:>12.6} {:>14.4}",
            m.epoch,
            m.loss.name(),
            m.train_loss,
            m.val_loss,
            m.val_error_deg
        ),
    })?;
    weights
        .save(&a.out)
        .with_context(|| format!("writing {}", a.out.display()))?;
    if let Some(p) = &a.metrics {
        write_output(p, &log.to_string())?;
    }
    eprintln!("wrote checkpoint {}", a.out.display());
    Ok(())
}

fn eval_noise(n: &EvalNoiseArgs) -> Result<NoiseConfig> {
    let dist: NoiseDistribution = n.eval_noise.parse()?;
    Ok(NoiseConfig::new(dist, n.eval_seed))
}

pub fn eval(a: EvalArgs) -> Result<()> {
    let (ds, split) = load(&a.data)?;
    let indices: Vec<usize> = match a.subset {
        Subset::Train => split.train.clone(),
        Subset::Val => split.validation.clone(),
        Subset::Test => split.test.clone(),
        Subset::All => (0..ds.len()).collect(),
    };
    let noise = eval_noise(&a.noise)?.with_resample(a.resample);
    let loaded;
    let model: &dyn CorrectionModel = match (&a.checkpoint, a.model) {
        (Some(p), _) => {
            loaded = RefinerWeights::load(p).with_context(|| format!("loading {}", p.display()))?;
            &loaded
        }
        (None, Some(ModelKind::Identity)) => &IdentityModel,
        (None, Some(ModelKind::Oracle)) => &OracleModel,
        (None, None) => bail!("either --checkpoint or --model is required"),
    };
    let timed = evaluate(model, &ds.samples, &indices, &noise, &ds.object_names)?;
    print!("{}", timed.report.render(a.format.into()));
    if a.time {
        eprintln!(
            "time_per_inference_ms={:.4} samples={}",
            timed.seconds_per_sample() * 1e3,
            timed.report.errors.len()
        );
    }
    Ok(())
}

pub fn experiment(a: ExperimentArgs) -> Result<()> {
    let cfg = train_config(&a.opts)?;
    let (ds, split) = load(&a.data)?;
    let spec = match a.kind {
        ExperimentKind::TrainingSize => ExperimentSpec::TrainingSize { sizes: a.sizes.clone() },
        ExperimentKind::NoiseDistribution => ExperimentSpec::NoiseDistribution {
            distributions: a.noises.iter().map(|s| s.parse()).collect::<Result<_, _>>()?,
            retrain: a.retrain,
        },
        ExperimentKind::Resampling => ExperimentSpec::Resampling { k: a.k },
    };
    let model = a
        .checkpoint
        .as_ref()
        .map(|p| RefinerWeights::load(p).with_context(|| format!("loading {}", p.display())))
        .transpose()?;
    let ctx = ExperimentContext {
        samples: &ds.samples,
        names: &ds.object_names,
        split: &split,
        train: cfg,
        network_seed: a.opts.network_seed,
        eval_noise: eval_noise(&a.noise)?,
    };
    let report = run_experiment(&spec, &ctx, model.as_ref(), |label, m| eprintln!("[{label}] {m}"))?;
    print!("{}", report.render(a.format.into()));
    Ok(())
}

pub fn inspect(a: InspectArgs) -> Result<()> {
    let ckpt = Checkpoint::read(&a.checkpoint)?;
    let weights = RefinerWeights::from_checkpoint(&ckpt);
    let mut s = String::new();
    let digest = weights
        .as_ref()
        .map(|w| w.config_digest.iter().map(|b| format!("{b:02x}")).collect::<String>());
    let total: usize = ckpt
        .entries()
        .iter()
        .filter(|e| !e.name.starts_with("meta."))
        .map(|e| e.data.len())
        .sum();
    match ReportFormat::from(a.format) {
        ReportFormat::Table => {
            let _ = writeln!(s, "{:<24} {:<18} {:>10}", "entry", "shape", "values");
            for e in ckpt.entries() {
                let _ = writeln!(
                    s,
                    "{:<24} {:<18} {:>10}",
                    e.name,
                    format!("{:?}", e.shape),
                    e.data.len()
                );
            }
            let _ = writeln!(s, "total_parameter_values {total}");
            match &digest {
                Ok(d) => {
                    let _ = writeln!(s, "config_digest {d}");
                }
                Err(e) => {
                    let _ = writeln!(s, "not a refiner checkpoint: {e}");
                }
            }
        }
        ReportFormat::KeyValue => {
            for e in ckpt.entries() {
                let dims: Vec<String> = e.shape.iter().map(ToString::to_string).collect();
                let _ = writeln!(s, "entry.{}.shape={}", e.name, dims.join("x"));
            }
            let _ = writeln!(s, "total_parameter_values={total}");
            if let Ok(d) = &digest {
                let _ = writeln!(s, "config_digest={d}");
            }
        }
    }
    print!("{s}");
    Ok(())
}

//! Line-oriented `key = value` configuration files.
//!
//! Blank lines and lines starting with `#` are ignored. Keys and values are
//! trimmed; a value runs to the end of the line. Repeating a key overrides
//! the earlier value. Training keys match [`TrainConfig::to_kv`]:
//!
//! ```text
//! epochs_mse = 5
//! epochs_geodesic = 10
//! batch_size = 32
//! lr = 0.0001
//! noise = uniform:0:30
//! noise_seed = 0
//! seed = 0
//! deterministic = true
//! ```

use std::path::Path;

use crate::error::{Error, Result};
use crate::refine::TrainConfig;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfigEntry {
    pub line: usize,
    pub key: String,
    pub value: String,
}

/// Splits `text` into entries; `path` only labels errors.
pub fn parse_config(text: &str, path: &Path) -> Result<Vec<ConfigEntry>> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            line: idx + 1,
            msg: format!("expected `key = value`, found {line:?}"),
        })?;
        let key = key.trim();
        if key.is_empty() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: idx + 1,
                msg: "empty key".into(),
            });
        }
        out.push(ConfigEntry {
            line: idx + 1,
            key: key.to_string(),
            value: value.trim().to_string(),
        });
    }
    Ok(out)
}

pub fn read_config(path: &Path) -> Result<Vec<ConfigEntry>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text, path)
}

/// Applies training keys to `cfg`. Unknown keys are errors.
pub fn apply_train_config(cfg: &mut TrainConfig, entries: &[ConfigEntry], path: &Path) -> Result<()> {
    for e in entries {
        let err = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line: e.line,
            msg,
        };
        let bad = |what: &str| err(format!("{}: {:?} is not {what}", e.key, e.value));
        match e.key.as_str() {
            "epochs_mse" => cfg.epochs_mse = e.value.parse().map_err(|_| bad("a count"))?,
            "epochs_geodesic" => cfg.epochs_geodesic = e.value.parse().map_err(|_| bad("a count"))?,
            "batch_size" => cfg.batch_size = e.value.parse().map_err(|_| bad("a count"))?,
            "lr" => cfg.lr = e.value.parse().map_err(|_| bad("a number"))?,
            "noise" => cfg.noise.distribution = e.value.parse().map_err(|x: Error| err(x.to_string()))?,
            "noise_seed" => cfg.noise.seed = e.value.parse().map_err(|_| bad("a seed"))?,
            "seed" => cfg.seed = e.value.parse().map_err(|_| bad("a seed"))?,
            "deterministic" => cfg.deterministic = e.value.parse().map_err(|_| bad("true or false"))?,
            other => return Err(err(format!("unknown key {other:?}"))),
        }
    }
    cfg.validate()
}

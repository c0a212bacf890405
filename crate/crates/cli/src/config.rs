//! Layered run configuration addressed by dotted keys.
//!
//! Precedence, lowest first: built-in defaults, the `CLEEGN_SEED` environment
//! variable (seeds only), a `key = value` config file, command-line flags.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};

/// Every recognised key with its default. Command-line flags of a subcommand
/// map onto the keys of its group: `train --batch-size 32` sets
/// `train.batch_size`.
pub const KEYS: &[(&str, &str)] = &[
    ("synth.subjects", "8"),
    ("synth.duration", "300"),
    ("synth.channels", "8"),
    ("synth.fs", "128"),
    ("synth.seed", "0"),
    ("synth.blinks_per_min", "20"),
    ("synth.emg_per_min", "10"),
    ("synth.background_uv", "5"),
    ("synth.blink_uv", "100"),
    ("synth.emg_uv", "40"),
    ("synth.line_noise", "false"),
    ("synth.line_uv", "5"),
    ("preprocess.car", "true"),
    ("preprocess.filter", "true"),
    ("preprocess.lo_hz", "1"),
    ("preprocess.hi_hz", "40"),
    ("preprocess.taps", "513"),
    ("preprocess.decimate", "1"),
    ("preprocess.fs", "auto"),
    ("train.batch_size", "64"),
    ("train.epochs", "40"),
    ("train.lr", "0.001"),
    ("train.gamma", "0.8"),
    ("train.window_sec", "4"),
    ("train.stride", "0.5"),
    ("train.val_fraction", "0.2"),
    ("train.minutes", "full"),
    ("train.seed", "0"),
    ("train.filters", "auto"),
    ("train.scale", "auto"),
    ("train.folds", "4"),
    ("train.jobs", "1"),
    ("train.ablate", "none"),
    ("train.values", ""),
    ("train.draws", "3"),
    ("reconstruct.policy", "latest_hop"),
    ("eval.t0", "none"),
    ("eval.t1", "none"),
    ("psd.segment_sec", "2"),
    ("psd.overlap", "0.5"),
    ("psd.window", "hann"),
    ("pca.start", "0"),
    ("pca.len", "window"),
    ("model.channels", "56"),
    ("model.fs", "128"),
    ("model.filters", "auto"),
    ("model.window_sec", "4"),
];

pub fn default_of(key: &str) -> Option<&'static str> {
    KEYS.iter().find(|(k, _)| *k == key).map(|(_, v)| *v)
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    values: BTreeMap<&'static str, String>,
}

impl RunConfig {
    /// Defaults, with every `*.seed` taken from `seed_env` when it is set.
    pub fn new(seed_env: Option<&str>) -> Result<Self> {
        let mut values: BTreeMap<&'static str, String> =
            KEYS.iter().map(|(k, v)| (*k, v.to_string())).collect();
        if let Some(seed) = seed_env {
            seed.trim()
                .parse::<u64>()
                .map_err(|_| anyhow!("CLEEGN_SEED must be a non-negative integer, got {seed:?}"))?;
            for (k, v) in values.iter_mut() {
                if k.ends_with(".seed") {
                    *v = seed.trim().to_string();
                }
            }
        }
        Ok(RunConfig { values })
    }

    pub fn from_env() -> Result<Self> {
        Self::new(std::env::var("CLEEGN_SEED").ok().as_deref())
    }

    /// Apply `key = value` lines; `#` starts a comment.
    pub fn merge_str(&mut self, text: &str, origin: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("{origin}:{}: expected `key = value`, got {line:?}", n + 1))?;
            self.set(key.trim(), value.trim()).with_context(|| format!("{origin}:{}", n + 1))?;
        }
        Ok(())
    }

    pub fn merge_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        self.merge_str(&text, &path.display().to_string())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match self.values.keys().find(|k| **k == key).copied() {
            Some(k) => {
                self.values.insert(k, value.to_string());
                Ok(())
            }
            None => bail!("unknown config key `{key}`"),
        }
    }

    pub fn raw(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or_else(|| panic!("key {key} is not declared"))
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        let raw = self.raw(key);
        raw.parse::<T>().map_err(|e| anyhow!("config `{key}` = {raw:?}: {e}"))
    }

    /// `None` for the sentinel values `auto`, `none`, `full`, `window` or an
    /// empty string.
    pub fn get_opt<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.raw(key) {
            "auto" | "none" | "full" | "window" | "" => Ok(None),
            _ => self.get(key).map(Some),
        }
    }

    /// `key=value` for every key in `group`, one per line.
    pub fn resolved(&self, group: &str) -> String {
        self.group(group).map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    pub fn to_json(&self, group: &str) -> serde_json::Value {
        self.group(group).map(|(k, v)| (k.to_string(), serde_json::Value::String(v.clone()))).collect()
    }

    fn group<'a>(&'a self, group: &'a str) -> impl Iterator<Item = (&'static str, &'a String)> + 'a {
        self.values
            .iter()
            .filter(move |(k, _)| k.split_once('.').is_some_and(|(g, _)| g == group))
            .map(|(k, v)| (*k, v))
    }
}

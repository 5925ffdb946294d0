//! Flat `key = value` run configuration.
//!
//! Blank lines and `#` comments are ignored; unknown keys are rejected.
//! Model fields left unset take the variant's defaults (7 glimpses for RAM,
//! 10 otherwise; hybrid baseline for MRAM; context CNN for DRAM).

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use saccade_core::glimpse::GlimpseConfig;
use saccade_core::models::{BaselineMode, ModelSpec, Variant};
use saccade_core::training::TrainConfig;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Environment variable overriding the dataset root.
pub const DATA_ENV: &str = "SACCADE_DATA";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DatasetKind {
    Mnist,
    FashionMnist,
    Fer2013,
}

impl DatasetKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "mnist" => Ok(DatasetKind::Mnist),
            "fashion_mnist" | "fashion-mnist" | "fashionmnist" => Ok(DatasetKind::FashionMnist),
            "fer2013" | "fer" => Ok(DatasetKind::Fer2013),
            other => Err(Error::Usage(format!(
                "unknown dataset '{other}' (expected mnist, fashion_mnist or fer2013)"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DatasetKind::Mnist => "mnist",
            DatasetKind::FashionMnist => "fashion_mnist",
            DatasetKind::Fer2013 => "fer2013",
        }
    }

    pub fn side(self) -> usize {
        match self {
            DatasetKind::Fer2013 => 48,
            _ => 28,
        }
    }

    pub fn num_classes(self) -> usize {
        match self {
            DatasetKind::Fer2013 => 7,
            _ => 10,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub dataset: DatasetKind,
    pub variant: Variant,
    pub glimpses: Option<usize>,
    pub patch_size: usize,
    pub scales: usize,
    pub scale_factor: usize,
    pub hidden: usize,
    pub baseline: Option<BaselineMode>,
    pub context_cnn: Option<bool>,
    pub policy_sigma: f64,
    pub train: TrainConfig,
    /// Use only the first N training images (0 = all).
    pub train_limit: usize,
    /// Evaluate on the first N test images (0 = all).
    pub test_limit: usize,
    pub data_root: Option<PathBuf>,
    pub output_dir: PathBuf,
    /// Write a trace log of the test set after training.
    pub trace: bool,
    /// Number of test images traced (0 = all).
    pub trace_images: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            dataset: DatasetKind::Mnist,
            variant: Variant::Mram,
            glimpses: None,
            patch_size: 8,
            scales: 1,
            scale_factor: 2,
            hidden: 256,
            baseline: None,
            context_cnn: None,
            policy_sigma: 0.1,
            train: TrainConfig::default(),
            train_limit: 0,
            test_limit: 0,
            data_root: None,
            output_dir: PathBuf::from("runs"),
            trace: true,
            trace_images: 0,
        }
    }
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Usage(format!("config key '{key}': cannot parse '{v}'")))
}

fn boolean(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(Error::Usage(format!("config key '{key}': expected a boolean, got '{v}'"))),
    }
}

/// Keys accepted by [`RunConfig::set`].
pub const KEYS: &[&str] = &[
    "dataset",
    "model",
    "glimpses",
    "patch_size",
    "scales",
    "scale_factor",
    "hidden",
    "baseline",
    "context_cnn",
    "policy_sigma",
    "alpha",
    "batch_size",
    "max_epochs",
    "patience",
    "lr",
    "seed",
    "lr_decay",
    "lr_patience",
    "min_lr",
    "clip_norm",
    "val_fraction",
    "train_limit",
    "test_limit",
    "data_root",
    "output_dir",
    "trace",
    "trace_images",
];

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        let t = &mut self.train;
        match key.trim() {
            "dataset" => self.dataset = DatasetKind::parse(v)?,
            "model" => self.variant = Variant::parse(v).map_err(|e| Error::Usage(e.to_string()))?,
            "glimpses" => self.glimpses = if v == "auto" { None } else { Some(num(key, v)?) },
            "patch_size" => self.patch_size = num(key, v)?,
            "scales" => self.scales = num(key, v)?,
            "scale_factor" => self.scale_factor = num(key, v)?,
            "hidden" => self.hidden = num(key, v)?,
            "baseline" => {
                self.baseline = if v == "auto" {
                    None
                } else {
                    Some(BaselineMode::parse(v).map_err(|e| Error::Usage(e.to_string()))?)
                }
            }
            "context_cnn" => self.context_cnn = if v == "auto" { None } else { Some(boolean(key, v)?) },
            "policy_sigma" => self.policy_sigma = num(key, v)?,
            "alpha" => t.alpha = num(key, v)?,
            "batch_size" => t.batch_size = num(key, v)?,
            "max_epochs" => t.max_epochs = num(key, v)?,
            "patience" => t.patience = num(key, v)?,
            "lr" => t.lr = num(key, v)?,
            "seed" => t.seed = num(key, v)?,
            "lr_decay" => t.lr_decay = num(key, v)?,
            "lr_patience" => t.lr_patience = num(key, v)?,
            "min_lr" => t.min_lr = num(key, v)?,
            "clip_norm" => t.clip_norm = num(key, v)?,
            "val_fraction" => t.val_fraction = num(key, v)?,
            "train_limit" => self.train_limit = num(key, v)?,
            "test_limit" => self.test_limit = num(key, v)?,
            "data_root" => self.data_root = Some(PathBuf::from(v)),
            "output_dir" => self.output_dir = PathBuf::from(v),
            "trace" => self.trace = boolean(key, v)?,
            "trace_images" => self.trace_images = num(key, v)?,
            other => return Err(Error::Usage(format!("unknown config key '{other}'"))),
        }
        Ok(())
    }

    /// Applies `key=value` assignments in order.
    pub fn apply<'a>(&mut self, pairs: impl IntoIterator<Item = &'a str>) -> Result<()> {
        for p in pairs {
            let (k, v) = p
                .split_once('=')
                .ok_or_else(|| Error::Usage(format!("expected key=value, got '{p}'")))?;
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                what: "config".into(),
                line: i + 1,
                detail: format!("expected key = value, got '{line}'"),
            })?;
            cfg.set(k, v).map_err(|e| match e {
                Error::Usage(d) => Error::Usage(format!("line {}: {d}", i + 1)),
                other => other,
            })?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn model_spec(&self) -> Result<ModelSpec> {
        let mut s = ModelSpec::new(self.variant, self.dataset.side(), self.dataset.num_classes());
        if let Some(g) = self.glimpses {
            s.num_glimpses = g;
        }
        s.glimpse = GlimpseConfig {
            patch_size: self.patch_size,
            num_scales: self.scales,
            scale_factor: self.scale_factor,
        };
        s.hidden = self.hidden;
        if let Some(b) = self.baseline {
            s.baseline = b;
        }
        if let Some(c) = self.context_cnn {
            s.context_cnn = c;
        }
        s.policy_sigma = self.policy_sigma;
        s.validate().map_err(|e| Error::Usage(e.to_string()))?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        self.model_spec()?;
        self.train.validate().map_err(|e| Error::Usage(e.to_string()))?;
        Ok(())
    }

    /// Dataset root: the config value, else `$SACCADE_DATA`, else `./data`.
    pub fn data_root(&self) -> PathBuf {
        self.data_root
            .clone()
            .or_else(|| std::env::var_os(DATA_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("data"))
    }

    /// Every setting that affects results, resolved, one per line. Paths are
    /// left out so the same experiment hashes identically anywhere.
    pub fn snapshot(&self) -> Result<String> {
        let s = self.model_spec()?;
        let t = &self.train;
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        kv("dataset", self.dataset.name().into());
        kv("model", s.variant.name().into());
        kv("glimpses", s.num_glimpses.to_string());
        kv("patch_size", s.glimpse.patch_size.to_string());
        kv("scales", s.glimpse.num_scales.to_string());
        kv("scale_factor", s.glimpse.scale_factor.to_string());
        kv("hidden", s.hidden.to_string());
        kv("baseline", s.baseline.name().into());
        kv("context_cnn", s.context_cnn.to_string());
        kv("policy_sigma", s.policy_sigma.to_string());
        kv("alpha", t.alpha.to_string());
        kv("batch_size", t.batch_size.to_string());
        kv("max_epochs", t.max_epochs.to_string());
        kv("patience", t.patience.to_string());
        kv("lr", t.lr.to_string());
        kv("seed", t.seed.to_string());
        kv("lr_decay", t.lr_decay.to_string());
        kv("lr_patience", t.lr_patience.to_string());
        kv("min_lr", t.min_lr.to_string());
        kv("clip_norm", t.clip_norm.to_string());
        kv("val_fraction", t.val_fraction.to_string());
        kv("train_limit", self.train_limit.to_string());
        kv("test_limit", self.test_limit.to_string());
        kv("trace", self.trace.to_string());
        kv("trace_images", self.trace_images.to_string());
        Ok(out)
    }

    /// First 12 hex digits of the SHA-256 of [`RunConfig::snapshot`].
    pub fn hash(&self) -> Result<String> {
        let digest = Sha256::digest(self.snapshot()?.as_bytes());
        Ok(hex::encode(digest)[..12].to_string())
    }
}

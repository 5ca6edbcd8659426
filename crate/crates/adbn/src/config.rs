//! Flat `key = value` experiment configuration.
//!
//! Blank lines and `#` comments are ignored. Every key has a default, so an
//! empty file is a valid configuration. [`ExperimentConfig::to_text`] writes
//! every key and is parsed back to an identical value.

use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use adbn_core::knowledge::{MiningConfig, DEFAULT_THETA_FIRE};
use adbn_core::{AdaptiveConfig, LayerGenConfig, TrainingHyperparams};

use crate::error::{AdbnError, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSpec {
    BarsAndStripes { size: usize, count: usize },
    ConfusablePair { dim: usize, count: usize, overlap: f64 },
    Csv { path: PathBuf },
    Cifar10 {
        path: PathBuf,
        grayscale: bool,
        train_limit: Option<usize>,
        test_limit: Option<usize>,
        zca: bool,
        zca_epsilon: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    /// Fractions of a single-pool dataset held out for validation and test.
    /// For CIFAR-10 the validation share is taken from the training batches
    /// and the test split is the test batch.
    pub validation_fraction: f64,
    pub test_fraction: f64,
    pub adaptive: AdaptiveConfig,
    pub layers: LayerGenConfig,
    pub train: TrainingHyperparams,
    pub head_epochs: usize,
    pub head_learning_rate: f64,
    pub head_batch_size: usize,
    pub mining: MiningConfig,
    pub class_pair: (usize, usize),
    pub seed: u64,
    pub out: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetSpec::BarsAndStripes { size: 4, count: 1000 },
            validation_fraction: 0.2,
            test_fraction: 0.2,
            adaptive: AdaptiveConfig::default(),
            layers: LayerGenConfig::default(),
            train: TrainingHyperparams {
                initial_hidden: 300,
                ..TrainingHyperparams::default()
            },
            head_epochs: 50,
            head_learning_rate: 0.1,
            head_batch_size: 100,
            mining: MiningConfig {
                theta_fire: DEFAULT_THETA_FIRE,
                ..MiningConfig::default()
            },
            class_pair: (0, 1),
            seed: 1,
            out: PathBuf::from("run"),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> std::result::Result<T, String>
where
    T::Err: Display,
{
    value.parse().map_err(|e| format!("invalid value {value:?} for {key}: {e}"))
}

fn parse_opt(key: &str, value: &str) -> std::result::Result<Option<usize>, String> {
    if value == "none" || value.is_empty() {
        Ok(None)
    } else {
        parse(key, value).map(Some)
    }
}

fn opt_text(v: Option<usize>) -> String {
    v.map_or_else(|| "none".to_string(), |n| n.to_string())
}

pub fn parse_class_pair(text: &str) -> std::result::Result<(usize, usize), String> {
    let (a, b) = text
        .split_once(',')
        .ok_or_else(|| format!("class pair must look like A,B, got {text:?}"))?;
    Ok((parse("classes", a.trim())?, parse("classes", b.trim())?))
}

impl ExperimentConfig {
    pub fn from_text(text: &str) -> Result<Self> {
        let mut config = Self::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| AdbnError::Config {
                line: n + 1,
                message: format!("expected key = value, got {line:?}"),
            })?;
            config
                .set(key.trim(), value.trim())
                .map_err(|message| AdbnError::Config { line: n + 1, message })?;
        }
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| AdbnError::io(path, e))?;
        Self::from_text(&text)
    }

    /// Applies a single `key=value` override.
    pub fn apply_override(&mut self, pair: &str) -> Result<()> {
        let (key, value) = pair
            .split_once('=')
            .ok_or_else(|| AdbnError::Usage(format!("override must be key=value, got {pair:?}")))?;
        self.set(key.trim(), value.trim()).map_err(AdbnError::Usage)
    }

    fn set_dataset_kind(&mut self, kind: &str) -> std::result::Result<(), String> {
        self.dataset = match kind {
            "bars_and_stripes" => DatasetSpec::BarsAndStripes { size: 4, count: 1000 },
            "confusable_pair" => DatasetSpec::ConfusablePair {
                dim: 64,
                count: 2000,
                overlap: 0.8,
            },
            "csv" => DatasetSpec::Csv { path: PathBuf::new() },
            "cifar10" => DatasetSpec::Cifar10 {
                path: PathBuf::new(),
                grayscale: false,
                train_limit: None,
                test_limit: None,
                zca: true,
                zca_epsilon: crate::zca::DEFAULT_EPSILON,
            },
            other => return Err(format!("unknown dataset {other:?}")),
        };
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        let a = &mut self.adaptive;
        let t = &mut self.train;
        let l = &mut self.layers;
        match key {
            "dataset" => return self.set_dataset_kind(value),
            "data.size" | "data.count" | "data.dim" | "data.overlap" | "data.path" | "data.grayscale"
            | "data.train_limit" | "data.test_limit" | "data.zca" | "data.zca_epsilon" => {
                return self.set_data_field(key, value)
            }
            "split.validation" => self.validation_fraction = parse(key, value)?,
            "split.test" => self.test_fraction = parse(key, value)?,
            "theta_g" => a.theta_g = parse(key, value)?,
            "theta_a" => a.theta_a = parse(key, value)?,
            "alpha_c" => a.alpha_c = parse(key, value)?,
            "alpha_w" => a.alpha_w = parse(key, value)?,
            "eps1" => a.eps1 = parse(key, value)?,
            "eps2" => a.eps2 = parse(key, value)?,
            "eps3" => a.eps3 = parse(key, value)?,
            "theta_small" => a.theta_small = parse(key, value)?,
            "wd_window" => a.window = parse(key, value)?,
            "generation_epochs" => a.generation_phase_epochs = parse(key, value)?,
            "forgetting_epochs" => a.forgetting_phase_epochs = parse(key, value)?,
            "final_epochs" => a.final_phase_epochs = parse(key, value)?,
            "max_hidden" => a.max_hidden = parse(key, value)?,
            "learning_rate" => t.learning_rate = parse(key, value)?,
            "batch_size" => t.batch_size = parse(key, value)?,
            "cd_k" => t.cd_k = parse(key, value)?,
            "initial_hidden" => t.initial_hidden = parse(key, value)?,
            "theta_l1" => l.theta_l1 = parse(key, value)?,
            "theta_l2" => l.theta_l2 = parse(key, value)?,
            "alpha_wd" => l.alpha_wd = parse(key, value)?,
            "alpha_e" => l.alpha_e = parse(key, value)?,
            "max_layers" => l.max_layers = parse(key, value)?,
            "head_epochs" => self.head_epochs = parse(key, value)?,
            "head_learning_rate" => self.head_learning_rate = parse(key, value)?,
            "head_batch_size" => self.head_batch_size = parse(key, value)?,
            "theta_fire" => self.mining.theta_fire = parse(key, value)?,
            "max_antecedent" => self.mining.max_antecedent = parse(key, value)?,
            "classes" => self.class_pair = parse_class_pair(value)?,
            "seed" => self.seed = parse(key, value)?,
            "out" => self.out = PathBuf::from(value),
            other => return Err(format!("unknown key {other:?}")),
        }
        Ok(())
    }

    fn set_data_field(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        let mismatch = || format!("{key} does not apply to the selected dataset");
        match (&mut self.dataset, key) {
            (DatasetSpec::BarsAndStripes { size, .. }, "data.size") => *size = parse(key, value)?,
            (DatasetSpec::BarsAndStripes { count, .. }, "data.count")
            | (DatasetSpec::ConfusablePair { count, .. }, "data.count") => *count = parse(key, value)?,
            (DatasetSpec::ConfusablePair { dim, .. }, "data.dim") => *dim = parse(key, value)?,
            (DatasetSpec::ConfusablePair { overlap, .. }, "data.overlap") => *overlap = parse(key, value)?,
            (DatasetSpec::Csv { path }, "data.path") | (DatasetSpec::Cifar10 { path, .. }, "data.path") => {
                *path = PathBuf::from(value)
            }
            (DatasetSpec::Cifar10 { grayscale, .. }, "data.grayscale") => *grayscale = parse(key, value)?,
            (DatasetSpec::Cifar10 { train_limit, .. }, "data.train_limit") => *train_limit = parse_opt(key, value)?,
            (DatasetSpec::Cifar10 { test_limit, .. }, "data.test_limit") => *test_limit = parse_opt(key, value)?,
            (DatasetSpec::Cifar10 { zca, .. }, "data.zca") => *zca = parse(key, value)?,
            (DatasetSpec::Cifar10 { zca_epsilon, .. }, "data.zca_epsilon") => *zca_epsilon = parse(key, value)?,
            _ => return Err(mismatch()),
        }
        Ok(())
    }

    /// Every key with its current value, in a fixed order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let mut e: Vec<(&'static str, String)> = Vec::new();
        match &self.dataset {
            DatasetSpec::BarsAndStripes { size, count } => {
                e.push(("dataset", "bars_and_stripes".into()));
                e.push(("data.size", size.to_string()));
                e.push(("data.count", count.to_string()));
            }
            DatasetSpec::ConfusablePair { dim, count, overlap } => {
                e.push(("dataset", "confusable_pair".into()));
                e.push(("data.dim", dim.to_string()));
                e.push(("data.count", count.to_string()));
                e.push(("data.overlap", overlap.to_string()));
            }
            DatasetSpec::Csv { path } => {
                e.push(("dataset", "csv".into()));
                e.push(("data.path", path.display().to_string()));
            }
            DatasetSpec::Cifar10 {
                path,
                grayscale,
                train_limit,
                test_limit,
                zca,
                zca_epsilon,
            } => {
                e.push(("dataset", "cifar10".into()));
                e.push(("data.path", path.display().to_string()));
                e.push(("data.grayscale", grayscale.to_string()));
                e.push(("data.train_limit", opt_text(*train_limit)));
                e.push(("data.test_limit", opt_text(*test_limit)));
                e.push(("data.zca", zca.to_string()));
                e.push(("data.zca_epsilon", zca_epsilon.to_string()));
            }
        }
        let a = &self.adaptive;
        let t = &self.train;
        let l = &self.layers;
        e.extend([
            ("split.validation", self.validation_fraction.to_string()),
            ("split.test", self.test_fraction.to_string()),
            ("theta_g", a.theta_g.to_string()),
            ("theta_a", a.theta_a.to_string()),
            ("alpha_c", a.alpha_c.to_string()),
            ("alpha_w", a.alpha_w.to_string()),
            ("eps1", a.eps1.to_string()),
            ("eps2", a.eps2.to_string()),
            ("eps3", a.eps3.to_string()),
            ("theta_small", a.theta_small.to_string()),
            ("wd_window", a.window.to_string()),
            ("generation_epochs", a.generation_phase_epochs.to_string()),
            ("forgetting_epochs", a.forgetting_phase_epochs.to_string()),
            ("final_epochs", a.final_phase_epochs.to_string()),
            ("max_hidden", a.max_hidden.to_string()),
            ("learning_rate", t.learning_rate.to_string()),
            ("batch_size", t.batch_size.to_string()),
            ("cd_k", t.cd_k.to_string()),
            ("initial_hidden", t.initial_hidden.to_string()),
            ("theta_l1", l.theta_l1.to_string()),
            ("theta_l2", l.theta_l2.to_string()),
            ("alpha_wd", l.alpha_wd.to_string()),
            ("alpha_e", l.alpha_e.to_string()),
            ("max_layers", l.max_layers.to_string()),
            ("head_epochs", self.head_epochs.to_string()),
            ("head_learning_rate", self.head_learning_rate.to_string()),
            ("head_batch_size", self.head_batch_size.to_string()),
            ("theta_fire", self.mining.theta_fire.to_string()),
            ("max_antecedent", self.mining.max_antecedent.to_string()),
            ("classes", format!("{},{}", self.class_pair.0, self.class_pair.1)),
            ("seed", self.seed.to_string()),
            ("out", self.out.display().to_string()),
        ]);
        e
    }

    pub fn to_text(&self) -> String {
        self.entries().into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.adaptive.validate()?;
        self.train.validate()?;
        self.layers.validate()?;
        let (v, t) = (self.validation_fraction, self.test_fraction);
        if !(0.0..1.0).contains(&v) || !(0.0..1.0).contains(&t) || v + t >= 1.0 {
            return Err(AdbnError::Usage(format!(
                "split fractions must be in [0, 1) and leave training data (validation {v}, test {t})"
            )));
        }
        if self.head_epochs == 0 || self.head_batch_size == 0 || !(self.head_learning_rate > 0.0) {
            return Err(AdbnError::Usage("head epochs, batch size and learning rate must be positive".into()));
        }
        if let DatasetSpec::Csv { path } | DatasetSpec::Cifar10 { path, .. } = &self.dataset {
            if path.as_os_str().is_empty() {
                return Err(AdbnError::Usage("data.path is required for this dataset".into()));
            }
        }
        Ok(())
    }
}

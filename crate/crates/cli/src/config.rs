//! Run configuration: a JSON file merged with command-line flags, flags
//! taking precedence.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use fpp::optimizer::{LrSchedule, OptimizerKind, RetractionMode};
use fpp::pipeline::PipelineConfig;
use fpp::significance::{GridConfig, DEFAULT_THRESHOLD, DEFAULT_TRIALS};
use serde::{Deserialize, Serialize};

use crate::failure::Failure;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum SynthKind {
    Circle,
    Multi,
    Blobs,
    Noise,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub kind: Option<SynthKind>,
    pub n: Option<usize>,
    pub dim: Option<usize>,
    /// Gaussian noise added to the circle response.
    pub noise: f64,
    /// Number of responses for `multi`.
    pub responses: usize,
    /// Number of classes for `blobs`.
    pub classes: usize,
    /// Minimum distance between class means for `blobs`.
    pub separation: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            kind: None,
            n: None,
            dim: None,
            noise: 0.05,
            responses: 15,
            classes: 5,
            separation: 8.0,
            seed: 0,
        }
    }
}

/// Everything a command can be told, as one JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Dataset bundle directory.
    pub data: Option<PathBuf>,
    /// Output directory.
    pub out: Option<PathBuf>,
    /// A `fit.json` written by the fit command.
    pub fit_result: Option<PathBuf>,
    pub threads: Option<usize>,
    pub pipeline: PipelineConfig,
    pub trials: usize,
    pub threshold: f64,
    pub rotation_degrees: f64,
    pub grid: GridConfig,
    pub synth: SynthConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data: None,
            out: None,
            fit_result: None,
            threads: None,
            pipeline: PipelineConfig::default(),
            trials: DEFAULT_TRIALS,
            threshold: DEFAULT_THRESHOLD,
            rotation_degrees: 0.0,
            grid: GridConfig::default(),
            synth: SynthConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, Failure> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::validation(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| Failure::validation(format!("invalid config {}: {e}", path.display())))
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("."))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RetractionArg {
    Polar,
    PaperU,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OptimizerArg {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScheduleArg {
    Constant,
    Cosine,
}

/// Flags shared by every command.
#[derive(Debug, Clone, Default, Args)]
pub struct CommonFlags {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory (default: current directory).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads for parallel trials (default: available cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(long, global = true)]
    pub degree: Option<usize>,
    #[arg(long, global = true)]
    pub epochs: Option<usize>,
    #[arg(long, global = true)]
    pub batch: Option<usize>,
    #[arg(long, global = true)]
    pub lr: Option<f64>,
    #[arg(long, global = true, value_enum)]
    pub retraction: Option<RetractionArg>,
    /// Random pre-projection to this many dimensions before fitting.
    #[arg(long, global = true)]
    pub pre_dim: Option<usize>,
    #[arg(long, global = true)]
    pub test_fraction: Option<f64>,
    #[arg(long, global = true, value_enum)]
    pub optimizer: Option<OptimizerArg>,
    #[arg(long, global = true, value_enum)]
    pub schedule: Option<ScheduleArg>,
    /// Independent initializations per fit; the best is kept.
    #[arg(long, global = true)]
    pub restarts: Option<usize>,
}

impl CommonFlags {
    fn training_flags(&self) -> Vec<&'static str> {
        let mut v = Vec::new();
        let checks: [(&'static str, bool); 8] = [
            ("--degree", self.degree.is_some()),
            ("--epochs", self.epochs.is_some()),
            ("--batch", self.batch.is_some()),
            ("--lr", self.lr.is_some()),
            ("--retraction", self.retraction.is_some()),
            ("--optimizer", self.optimizer.is_some()),
            ("--schedule", self.schedule.is_some()),
            ("--restarts", self.restarts.is_some()),
        ];
        for (name, set) in checks {
            if set {
                v.push(name);
            }
        }
        v
    }

    fn pipeline_flags(&self) -> Vec<&'static str> {
        let mut v = Vec::new();
        if self.pre_dim.is_some() {
            v.push("--pre-dim");
        }
        if self.test_fraction.is_some() {
            v.push("--test-fraction");
        }
        v
    }

    /// Reject flags that a command would silently ignore.
    pub fn reject(&self, command: &str, training: bool, pipeline: bool) -> Result<(), Failure> {
        let mut unused = Vec::new();
        if training {
            unused.extend(self.training_flags());
        }
        if pipeline {
            unused.extend(self.pipeline_flags());
        }
        if unused.is_empty() {
            Ok(())
        } else {
            Err(Failure::validation(format!(
                "{} not used by `{command}`",
                unused.join(", ")
            )))
        }
    }

    /// Apply the training flags to a set of hyperparameters.
    pub fn apply_training(&self, hp: &mut fpp::optimizer::HyperParams) {
        if let Some(v) = self.degree {
            hp.degree = v;
        }
        if let Some(v) = self.epochs {
            hp.epochs = v;
        }
        if let Some(v) = self.batch {
            hp.batch_size = v;
        }
        if let Some(v) = self.lr {
            hp.learning_rate = v;
        }
        if let Some(v) = self.retraction {
            hp.retraction = match v {
                RetractionArg::Polar => RetractionMode::PolarFactor,
                RetractionArg::PaperU => RetractionMode::PaperU,
            };
        }
        if let Some(v) = self.optimizer {
            hp.optimizer = match v {
                OptimizerArg::Sgd => OptimizerKind::Sgd,
                OptimizerArg::Adam => OptimizerKind::Adam,
            };
        }
        if let Some(v) = self.schedule {
            hp.schedule = match v {
                ScheduleArg::Constant => LrSchedule::Constant,
                ScheduleArg::Cosine => LrSchedule::Cosine,
            };
        }
        if let Some(v) = self.restarts {
            hp.restarts = v;
        }
    }

    /// Merge flags that every command understands into the configuration.
    pub fn apply_common(&self, cfg: &mut RunConfig) {
        if let Some(seed) = self.seed {
            cfg.pipeline.hyperparams.seed = seed;
            cfg.grid.seed = seed;
            cfg.synth.seed = seed;
        }
        if let Some(out) = &self.out {
            cfg.out = Some(out.clone());
        }
        if let Some(t) = self.threads {
            cfg.threads = Some(t);
        }
        self.apply_training(&mut cfg.pipeline.hyperparams);
        self.apply_training(&mut cfg.grid.hyperparams);
        if let Some(d) = self.pre_dim {
            cfg.pipeline.pre_dim = Some(d);
        }
        if let Some(f) = self.test_fraction {
            cfg.pipeline.test_fraction = Some(f);
        }
    }
}

//! Experiment configuration: one TOML file plus command-line overrides.

use std::path::{Path, PathBuf};

use papr_core::dataset::{
    DatasetMeta, DEFAULT_MAX_TRIALS, DEFAULT_SPLIT_FRACTION, DEFAULT_TARGET_DB,
};
use papr_core::evaluation::DEFAULT_OPERATING_POINT;
use papr_core::neural::{Optimizer, TrainConfig, DEFAULT_HIDDEN};
use papr_core::seed;
use papr_core::signal::{default_pilot_indices, Modulation};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub out: PathBuf,
    pub seed: u64,
    /// Worker threads; 0 lets the runtime decide.
    pub threads: usize,
    pub dataset: DatasetSection,
    pub mcsa: McsaSection,
    pub train: TrainSection,
    pub eval: EvalSection,
    pub sweep: SweepSection,
    pub trace: TraceSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    pub k: usize,
    pub pilots: usize,
    /// Explicit pilot positions; evenly spaced when absent.
    pub pilot_indices: Option<Vec<usize>>,
    pub samples: usize,
    pub split: f64,
    pub modulation: Modulation,
    pub oversampling: usize,
    /// Also write the packed binary form.
    pub binary: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McsaSection {
    pub target_db: f64,
    pub max_trials: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub final_learning_rate: f64,
    pub weight_decay: f64,
    pub momentum: f64,
    pub validation_fraction: f64,
    pub hidden: usize,
    pub optimizer: Optimizer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub operating_points: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub targets_db: Vec<f64>,
    pub symbols: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TraceSection {
    pub k: usize,
    pub modulation: Modulation,
    pub oversampling: usize,
    pub all_ones: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            out: PathBuf::from("out"),
            seed: 0,
            threads: 0,
            dataset: DatasetSection::default(),
            mcsa: McsaSection::default(),
            train: TrainSection::default(),
            eval: EvalSection::default(),
            sweep: SweepSection::default(),
            trace: TraceSection::default(),
        }
    }
}

impl Default for DatasetSection {
    fn default() -> Self {
        DatasetSection {
            k: 15,
            pilots: 2,
            pilot_indices: None,
            samples: 200_000,
            split: DEFAULT_SPLIT_FRACTION,
            modulation: Modulation::Qpsk,
            oversampling: 1,
            binary: false,
        }
    }
}

impl Default for McsaSection {
    fn default() -> Self {
        McsaSection {
            target_db: DEFAULT_TARGET_DB,
            max_trials: DEFAULT_MAX_TRIALS,
        }
    }
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainSection {
            epochs: t.epochs,
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
            final_learning_rate: t.final_learning_rate,
            weight_decay: t.weight_decay,
            momentum: t.momentum,
            validation_fraction: t.validation_fraction,
            hidden: DEFAULT_HIDDEN,
            optimizer: t.optimizer,
        }
    }
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            operating_points: vec![DEFAULT_OPERATING_POINT, 1e-2],
        }
    }
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            targets_db: vec![9.0, 8.0, 7.0, 6.0, 5.5, 5.0, 4.5, 4.0],
            symbols: 10_000,
        }
    }
}

impl Default for TraceSection {
    fn default() -> Self {
        TraceSection {
            k: 32,
            modulation: Modulation::Qam16,
            oversampling: 1,
            all_ones: false,
        }
    }
}

/// Index of each derived seed stream under the master `--seed`.
pub mod streams {
    pub const TRAIN: u64 = 1;
    pub const EVAL: u64 = 2;
    pub const TRACE: u64 = 3;
    pub const SWEEP: u64 = 4;
}

impl ExperimentConfig {
    /// Reads a config file; returns the parsed config and the verbatim text.
    pub fn load(path: &Path) -> Result<(Self, String), CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let config = toml::from_str(&text)
            .map_err(|e| CliError::Usage(format!("config {}: {}", path.display(), e.message())))?;
        Ok((config, text))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// The dataset's master seed is `--seed` itself.
    pub fn dataset_meta(&self) -> Result<DatasetMeta, CliError> {
        self.dataset_meta_for(self.dataset.samples)
    }

    /// Same layout as the dataset section with a different row count.
    pub fn dataset_meta_for(&self, samples: usize) -> Result<DatasetMeta, CliError> {
        let d = &self.dataset;
        if samples == 0 {
            return Err(CliError::Usage("--samples must be positive".into()));
        }
        let mut meta = DatasetMeta::new(d.k, d.pilots, d.modulation, samples, self.seed);
        meta.pilot_indices = d
            .pilot_indices
            .clone()
            .unwrap_or_else(|| default_pilot_indices(d.k, d.pilots));
        meta.split_fraction = d.split;
        meta.oversampling = d.oversampling;
        meta.mcsa_target_db = self.mcsa.target_db;
        meta.mcsa_max_trials = self.mcsa.max_trials;
        meta.validate()
            .map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(meta)
    }

    pub fn train_config(&self) -> Result<TrainConfig, CliError> {
        let t = &self.train;
        let config = TrainConfig {
            epochs: t.epochs,
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
            validation_fraction: t.validation_fraction,
            seed: seed::derive(self.seed, streams::TRAIN),
            optimizer: t.optimizer,
            hidden: t.hidden,
            activation: Default::default(),
            momentum: t.momentum,
            final_learning_rate: t.final_learning_rate.min(t.learning_rate),
            weight_decay: t.weight_decay,
        };
        config
            .validate()
            .map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(config)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let c = ExperimentConfig::default();
        let back: ExperimentConfig = toml::from_str(&c.to_toml()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn partial_file_fills_defaults() {
        let c: ExperimentConfig = toml::from_str("seed = 7\n[dataset]\nk = 30\n").unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.dataset.k, 30);
        assert_eq!(c.dataset.pilots, 2);
        assert_eq!(c.train.epochs, 500);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<ExperimentConfig>("[dataset]\nkk = 3\n").is_err());
    }

    #[test]
    fn zero_samples_is_a_usage_error() {
        let mut c = ExperimentConfig::default();
        c.dataset.samples = 0;
        assert!(matches!(c.dataset_meta(), Err(CliError::Usage(_))));
    }
}

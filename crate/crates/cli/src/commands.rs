//! Subcommand bodies. Each writes the effective config next to its outputs.

use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use papr_core::dataset::{coverage_fraction, sample_space, sample_space_size, PaprDataset};
use papr_core::evaluation::{
    compare_methods, complexity_report, mean_trials, reduction_at, CcdfCurve, Method,
};
use papr_core::io::{self, fmt_f64, DatasetPaths};
use papr_core::mcsa::{mcsa_search, McsaConfig};
use papr_core::neural::{self, Provenance};
use papr_core::seed;
use papr_core::signal::{idft, papr_db, SpectrumSymbol};
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{streams, ExperimentConfig};
use crate::CliError;

pub const DATASET_NAME: &str = "dataset";
pub const MODEL_FILE: &str = "model.mlp";

pub struct Context {
    config: ExperimentConfig,
    verbatim: Option<String>,
}

impl Context {
    pub fn new(config: ExperimentConfig, verbatim: Option<String>) -> Self {
        Context { config, verbatim }
    }

    /// Replaces the effective config after flag overrides.
    pub fn with(self, config: ExperimentConfig) -> Self {
        Context { config, ..self }
    }

    fn out_dir(&self) -> Result<&Path, CliError> {
        let out = self.config.out.as_path();
        fs::create_dir_all(out)?;
        Ok(out)
    }

    fn echo_config(&self) -> Result<(), CliError> {
        let out = self.out_dir()?;
        fs::write(out.join("config.toml"), self.config.to_toml())?;
        if let Some(text) = &self.verbatim {
            fs::write(out.join("config.input.toml"), text)?;
        }
        Ok(())
    }

    fn data_dir(&self, data: Option<PathBuf>) -> PathBuf {
        data.unwrap_or_else(|| self.config.out.clone())
    }

    fn load_dataset(&self, dir: &Path) -> Result<PaprDataset, CliError> {
        let paths = DatasetPaths::new(dir, DATASET_NAME);
        let loaded = if paths.binary.exists() {
            io::load_binary(dir, DATASET_NAME)
        } else {
            io::load(dir, DATASET_NAME)
        };
        loaded.map_err(|e| with_path(e, dir))
    }

    pub fn gen(&self) -> Result<(), CliError> {
        let meta = self.config.dataset_meta()?;
        let out = self.out_dir()?;
        self.echo_config()?;
        let dataset = PaprDataset::generate(&meta)?;
        io::save(&dataset, out, DATASET_NAME)?;
        if self.config.dataset.binary {
            io::save_binary(&dataset, out, DATASET_NAME)?;
        }
        let meta = dataset.meta();
        let space = sample_space_size(meta);
        let full = sample_space(meta.modulation.order(), meta.k as u32);
        let coverage = coverage_fraction(dataset.train().len() as u64, &space)?;
        println!(
            "rows={} train={} test={} redraws={}",
            dataset.len(),
            dataset.train().len(),
            dataset.test().len(),
            meta.redraws.len()
        );
        println!(
            "data_sample_space={space} full_sample_space={full} train_coverage={coverage:.6e}"
        );
        Ok(())
    }

    pub fn train(&self, data: Option<PathBuf>) -> Result<(), CliError> {
        let config = self.config.train_config()?;
        let dataset = self.load_dataset(&self.data_dir(data))?;
        let out = self.out_dir()?;
        self.echo_config()?;
        let (model, trace) = neural::train(&dataset, &config)?;

        let mut w = csv::Writer::from_path(out.join("loss_trace.csv")).map_err(csv_error)?;
        w.write_record(["epoch", "train_loss", "val_loss"])
            .map_err(csv_error)?;
        for (epoch, (t, v)) in trace.train_loss.iter().zip(&trace.val_loss).enumerate() {
            w.write_record([epoch.to_string(), fmt_f64(*t), fmt_f64(*v)])
                .map_err(csv_error)?;
        }
        w.flush()?;

        let provenance = Provenance {
            train_config: config,
            dataset_meta_hash: dataset.meta().content_hash(),
            pilot_magnitude: dataset.meta().pilot_magnitude,
        };
        neural::save_model(&model, Some(&provenance), &out.join(MODEL_FILE))?;
        let last = trace.train_loss.len() - 1;
        println!(
            "epochs={} train_loss={:.6} val_loss={:.6}",
            trace.train_loss.len(),
            trace.train_loss[last],
            trace.val_loss[last]
        );
        if let Some(change) = trace.relative_change(50) {
            println!("relative_change_last50={change:.6}");
        }
        Ok(())
    }

    pub fn eval(&self, data: Option<PathBuf>, model: Option<PathBuf>) -> Result<(), CliError> {
        let dataset = self.load_dataset(&self.data_dir(data))?;
        let model_path = model.unwrap_or_else(|| self.config.out.join(MODEL_FILE));
        let (model, provenance) =
            neural::load_model(&model_path).map_err(|e| with_path(e, &model_path))?;
        let hash = dataset.meta().content_hash();
        match &provenance {
            Some(p) if p.dataset_meta_hash != hash => {
                return Err(papr_core::Error::Integrity(format!(
                    "model was trained on dataset {} but this dataset is {hash}",
                    p.dataset_meta_hash
                ))
                .into());
            }
            Some(_) => {}
            None => eprintln!("warning: model has no provenance; dataset match not checked"),
        }
        let mcsa = McsaConfig::new(self.config.mcsa.target_db, self.config.mcsa.max_trials)?;
        let out = self.out_dir()?;
        self.echo_config()?;

        let eval_seed = seed::derive(self.config.seed, streams::EVAL);
        let c = compare_methods(&dataset, &model, &mcsa, eval_seed)?;

        let mut w = csv::Writer::from_path(out.join("ccdf.csv")).map_err(csv_error)?;
        w.write_record(["method", "threshold_db", "probability"])
            .map_err(csv_error)?;
        for (name, curve) in [("original", &c.original), ("mcsa", &c.mcsa), ("nn", &c.nn)] {
            for (t, p) in curve.thresholds_db.iter().zip(&curve.probabilities) {
                w.write_record([name.to_string(), fmt_f64(*t), fmt_f64(*p)])
                    .map_err(csv_error)?;
            }
        }
        w.flush()?;

        let k = dataset.meta().k;
        let v = c.mean_trials();
        let mut points = Vec::new();
        for &p in &self.config.eval.operating_points {
            points.push(OperatingPoint {
                probability: p,
                original_db: c.original.threshold_at(p),
                mcsa_db: c.mcsa.threshold_at(p),
                nn_db: c.nn.threshold_at(p),
                mcsa_reduction_db: reduction(&c.original, &c.mcsa, p),
                nn_reduction_db: reduction(&c.original, &c.nn, p),
            });
        }
        let summary = Summary {
            test_rows: c.nn.sample_count,
            mean_trials_v: v,
            nn_op_count: complexity_report(Method::Nn, k, None)?.op_count,
            mcsa_op_count: complexity_report(Method::Mcsa, k, Some(v.max(1.0)))?.op_count,
            operating_points: points,
        };
        let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
        fs::write(out.join("summary.json"), json + "\n")?;
        for p in &summary.operating_points {
            println!(
                "p={} mcsa_reduction_db={} nn_reduction_db={}",
                p.probability,
                show(p.mcsa_reduction_db),
                show(p.nn_reduction_db)
            );
        }
        println!("mean_trials_v={v:.4}");
        Ok(())
    }

    pub fn trace(&self) -> Result<(), CliError> {
        let t = &self.config.trace;
        let values = if t.all_ones {
            vec![Complex64::new(1.0, 0.0); t.k]
        } else {
            let mut rng = seed::rng(seed::derive(self.config.seed, streams::TRACE));
            let bits: Vec<u8> = (0..t.k * t.modulation.bits_per_symbol())
                .map(|_| rng.random_range(0..2u8))
                .collect();
            SpectrumSymbol::from_bits(t.k, Vec::new(), t.modulation, &bits)?
                .values()
                .to_vec()
        };
        let signal = idft(&values, t.oversampling)?;
        let papr = papr_db(&signal)?;
        let out = self.out_dir()?;
        self.echo_config()?;
        let mut w = csv::Writer::from_path(out.join("trace.csv")).map_err(csv_error)?;
        w.write_record(["sample", "power"]).map_err(csv_error)?;
        for (n, p) in signal.power().iter().enumerate() {
            w.write_record([n.to_string(), fmt_f64(*p)])
                .map_err(csv_error)?;
        }
        w.flush()?;
        println!("papr_db={papr:.4}");
        Ok(())
    }

    pub fn sweep(&self) -> Result<(), CliError> {
        let c = &self.config;
        if c.sweep.symbols == 0 || c.sweep.targets_db.is_empty() {
            return Err(CliError::Usage(
                "sweep needs at least one symbol and one target".into(),
            ));
        }
        let mut meta = c.dataset_meta_for(c.sweep.symbols)?;
        meta.master_seed = seed::derive(c.seed, streams::SWEEP);
        let symbols = (0..c.sweep.symbols)
            .into_par_iter()
            .map(|r| papr_core::dataset::generate_row(&meta, r).map(|row| row.symbol))
            .collect::<Result<Vec<_>, _>>()?;
        let out = self.out_dir()?;
        self.echo_config()?;

        let mut w = csv::Writer::from_path(out.join("sweep.csv")).map_err(csv_error)?;
        w.write_record([
            "target_db",
            "mean_trials",
            "met_fraction",
            "mcsa_op_count",
            "nn_op_count",
        ])
        .map_err(csv_error)?;
        let nn_ops = complexity_report(Method::Nn, meta.k, None)?.op_count;
        for &target in &c.sweep.targets_db {
            let cfg = McsaConfig::new(target, c.mcsa.max_trials)?;
            let results = symbols
                .par_iter()
                .enumerate()
                .map(|(i, s)| mcsa_search(s, &cfg, meta.row_seed(i, 0) ^ seed::EVAL_SEARCH_SALT))
                .collect::<Result<Vec<_>, _>>()?;
            let v = mean_trials(&results)?;
            let met = results.iter().filter(|r| r.met_target).count() as f64 / results.len() as f64;
            let mcsa_ops = complexity_report(Method::Mcsa, meta.k, Some(v))?.op_count;
            w.write_record([
                fmt_f64(target),
                fmt_f64(v),
                fmt_f64(met),
                fmt_f64(mcsa_ops),
                fmt_f64(nn_ops),
            ])
            .map_err(csv_error)?;
            println!("target_db={target} mean_trials={v:.4} met_fraction={met:.4}");
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Serialize)]
struct OperatingPoint {
    probability: f64,
    original_db: Option<f64>,
    mcsa_db: Option<f64>,
    nn_db: Option<f64>,
    mcsa_reduction_db: Option<f64>,
    nn_reduction_db: Option<f64>,
}

#[derive(Serialize)]
struct Summary {
    test_rows: usize,
    mean_trials_v: f64,
    nn_op_count: f64,
    mcsa_op_count: f64,
    operating_points: Vec<OperatingPoint>,
}

/// `None` when the curve never drops to `p` on the grid.
fn reduction(baseline: &CcdfCurve, improved: &CcdfCurve, p: f64) -> Option<f64> {
    reduction_at(baseline, improved, p).ok()
}

fn show(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".into(), |x| format!("{x:.3}"))
}

/// Names the file in bare I/O errors.
fn with_path(e: papr_core::Error, path: &Path) -> CliError {
    match e {
        papr_core::Error::Io(io) => {
            let message = format!("{}: {io}", path.display());
            papr_core::Error::Io(std::io::Error::new(io.kind(), message)).into()
        }
        other => other.into(),
    }
}

fn csv_error(e: csv::Error) -> CliError {
    match e.into_kind() {
        csv::ErrorKind::Io(e) => e.into(),
        other => papr_core::Error::Parse(format!("{other:?}")).into(),
    }
}

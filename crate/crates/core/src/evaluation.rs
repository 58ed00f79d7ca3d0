//! Empirical CCDF estimation, the three-way method comparison and the
//! leading-order complexity accountant.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::PaprDataset;
use crate::error::{domain, Error, Result};
use crate::mcsa::{mcsa_search_oversampled, papr_with_pilots, McsaConfig, McsaResult, PilotConfig};
use crate::neural::{predict_pilots, MlpModel};
use crate::seed;

/// Default CCDF operating point for reduction figures.
pub const DEFAULT_OPERATING_POINT: f64 = 1e-3;
/// Threshold grid spacing in dB.
pub const GRID_STEP_DB: f64 = 0.05;

/// Empirical `Pr(PAPR > threshold)` on a threshold grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CcdfCurve {
    pub thresholds_db: Vec<f64>,
    pub probabilities: Vec<f64>,
    pub sample_count: usize,
}

impl CcdfCurve {
    /// Smallest grid threshold whose exceedance probability is at most `p`.
    ///
    /// This is the PAPR "read off" the curve at CCDF level `p`. Returns
    /// `None` when the grid never gets down to `p`.
    pub fn threshold_at(&self, p: f64) -> Option<f64> {
        self.probabilities
            .iter()
            .position(|&q| q <= p)
            .map(|i| self.thresholds_db[i])
    }
}

/// Thresholds `0, 0.05, ...` up to `10 log10(L K) + 1` dB.
pub fn threshold_grid(k: usize, oversampling: usize) -> Vec<f64> {
    let top = 10.0 * ((k * oversampling) as f64).log10() + 1.0;
    let per_db = (1.0 / GRID_STEP_DB).round();
    let steps = (top * per_db).ceil() as usize;
    // Dividing keeps grid points at the nearest double to each decimal.
    (0..=steps).map(|i| i as f64 / per_db).collect()
}

/// Empirical survival function with strict inequality.
pub fn ccdf(papr_samples_db: &[f64], thresholds_db: &[f64]) -> Result<CcdfCurve> {
    if papr_samples_db.is_empty() {
        return domain("CCDF of an empty sample");
    }
    if papr_samples_db.iter().any(|v| v.is_nan()) {
        return domain("CCDF sample contains NaN");
    }
    if thresholds_db.windows(2).any(|w| w[0] > w[1]) {
        return domain("thresholds must be ascending");
    }
    let mut sorted = papr_samples_db.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let probabilities = thresholds_db
        .iter()
        .map(|&t| {
            let at_or_below = sorted.partition_point(|&s| s <= t);
            (n - at_or_below) as f64 / n as f64
        })
        .collect();
    Ok(CcdfCurve {
        thresholds_db: thresholds_db.to_vec(),
        probabilities,
        sample_count: n,
    })
}

/// Per-row PAPRs and curves of the three transmission strategies.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodComparison {
    pub original_db: Vec<f64>,
    pub mcsa_db: Vec<f64>,
    pub nn_db: Vec<f64>,
    pub mcsa_trials: Vec<u64>,
    pub original: CcdfCurve,
    pub mcsa: CcdfCurve,
    pub nn: CcdfCurve,
}

impl MethodComparison {
    pub fn mean_trials(&self) -> f64 {
        self.mcsa_trials.iter().sum::<u64>() as f64 / self.mcsa_trials.len() as f64
    }
}

/// Compares the fixed `+sqrt(E)` baseline, a fresh MCSA search and the
/// network on every row of the test partition.
///
/// MCSA seeds derive from `eval_seed` and the row index under a salt
/// distinct from the one used for labels.
pub fn compare_methods(
    dataset: &PaprDataset,
    model: &MlpModel,
    mcsa_config: &McsaConfig,
    eval_seed: u64,
) -> Result<MethodComparison> {
    let meta = dataset.meta();
    if model.input_dim() != meta.feature_width() || model.output_dim() != meta.label_width() {
        return domain(format!(
            "model maps {} -> {} but the dataset has {} features and {} pilots",
            model.input_dim(),
            model.output_dim(),
            meta.feature_width(),
            meta.label_width()
        ));
    }
    mcsa_config.validate()?;
    let test = dataset.test();
    let first = test.first_row;
    let l = meta.oversampling;
    let rows: Vec<(f64, f64, f64, u64)> = (0..test.len())
        .into_par_iter()
        .map(|i| {
            let symbol = dataset.symbol(first + i)?;
            let magnitude = meta.pilot_magnitude;
            let original = papr_with_pilots(
                &symbol,
                &PilotConfig::all_plus(meta.num_pilots, magnitude)?,
                l,
            )?;
            let search_seed = seed::derive(eval_seed, (first + i) as u64) ^ seed::EVAL_SEARCH_SALT;
            let mcsa = mcsa_search_oversampled(&symbol, mcsa_config, search_seed, l)?;
            let nn_pilots = predict_pilots(model, test.feature_row(i), magnitude)?;
            let nn = papr_with_pilots(&symbol, &nn_pilots, l)?;
            Ok((original, mcsa.papr_db, nn, mcsa.trials_used))
        })
        .collect::<Result<_>>()?;
    let grid = threshold_grid(meta.k, l);
    let original_db: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let mcsa_db: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let nn_db: Vec<f64> = rows.iter().map(|r| r.2).collect();
    Ok(MethodComparison {
        original: ccdf(&original_db, &grid)?,
        mcsa: ccdf(&mcsa_db, &grid)?,
        nn: ccdf(&nn_db, &grid)?,
        mcsa_trials: rows.iter().map(|r| r.3).collect(),
        original_db,
        mcsa_db,
        nn_db,
    })
}

/// PAPR reduction of `improved` relative to `baseline` at CCDF level `p`.
pub fn reduction_at(baseline: &CcdfCurve, improved: &CcdfCurve, p: f64) -> Result<f64> {
    match (baseline.threshold_at(p), improved.threshold_at(p)) {
        (Some(a), Some(b)) => Ok(a - b),
        _ => domain(format!("threshold grid does not reach CCDF level {p}")),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Method {
    Nn,
    Mcsa,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexityReport {
    pub method: Method,
    pub k: usize,
    pub mean_trials_v: Option<f64>,
    pub op_count: f64,
}

/// Leading-order operation counts: `K^2 + K log2 K` for one network
/// inference, `v K^2 log2 K` for MCSA with mean trial count `v`.
pub fn complexity_report(
    method: Method,
    k: usize,
    mean_trials_v: Option<f64>,
) -> Result<ComplexityReport> {
    if k < 2 {
        return domain(format!("K must be at least 2, got {k}"));
    }
    let kf = k as f64;
    let log_k = kf.log2();
    let op_count = match method {
        Method::Nn => kf * kf + kf * log_k,
        Method::Mcsa => {
            let v = mean_trials_v.ok_or_else(|| {
                Error::Domain("MCSA complexity needs the mean trial count v".into())
            })?;
            if !(v.is_finite() && v >= 1.0) {
                return domain(format!("mean trial count v = {v} must be at least 1"));
            }
            v * kf * kf * log_k
        }
    };
    Ok(ComplexityReport {
        method,
        k,
        mean_trials_v: if method == Method::Mcsa {
            mean_trials_v
        } else {
            None
        },
        op_count,
    })
}

/// Arithmetic mean of `trials_used`.
pub fn mean_trials(results: &[McsaResult]) -> Result<f64> {
    if results.is_empty() {
        return domain("mean trial count of no searches");
    }
    Ok(results.iter().map(|r| r.trials_used as f64).sum::<f64>() / results.len() as f64)
}

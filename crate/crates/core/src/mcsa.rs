//! Randomized pilot-sign search (MCSA) and its exhaustive oracle.
//!
//! Pilots carry purely real values `±sqrt(E)`, where `E` is the mean energy
//! of the data subcarriers. The randomized search draws sign vectors until a
//! candidate meets the target PAPR or the trial budget runs out, keeping the
//! lowest-PAPR candidate seen. The first trial is always the all-plus vector,
//! so the search never does worse than the fixed-pilot baseline.

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::seed;
use crate::signal::{mean_energy, papr_db_of, IdftPlan, SpectrumSymbol};

/// Largest pilot count the exhaustive search accepts.
pub const EXHAUSTIVE_MAX_PILOTS: usize = 20;

/// Sign of one pilot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }

    /// Sign of `x`, with zero mapped to `Plus`.
    pub fn of(x: f64) -> Sign {
        if x < 0.0 {
            Sign::Minus
        } else {
            Sign::Plus
        }
    }
}

/// How the pilot magnitude is derived from the symbol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PilotMagnitudeMode {
    /// `sqrt(E)` with `E` the mean energy of the data subcarriers.
    #[default]
    DataMeanEnergy,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McsaConfig {
    pub target_papr_db: f64,
    pub max_trials: u32,
    #[serde(default)]
    pub pilot_magnitude_mode: PilotMagnitudeMode,
}

impl McsaConfig {
    pub fn new(target_papr_db: f64, max_trials: u32) -> Result<Self> {
        let config = McsaConfig {
            target_papr_db,
            max_trials,
            pilot_magnitude_mode: PilotMagnitudeMode::DataMeanEnergy,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_trials == 0 {
            return domain("MCSA needs at least one trial");
        }
        if self.target_papr_db.is_nan() {
            return domain("target PAPR is NaN");
        }
        Ok(())
    }
}

/// Pilot signs together with their common magnitude `sqrt(E)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotConfig {
    signs: Vec<Sign>,
    magnitude: f64,
}

impl PilotConfig {
    pub fn new(signs: Vec<Sign>, magnitude: f64) -> Result<Self> {
        if !(magnitude.is_finite() && magnitude > 0.0) {
            return domain(format!("pilot magnitude must be positive, got {magnitude}"));
        }
        Ok(PilotConfig { signs, magnitude })
    }

    pub fn all_plus(num_pilots: usize, magnitude: f64) -> Result<Self> {
        PilotConfig::new(vec![Sign::Plus; num_pilots], magnitude)
    }

    pub fn signs(&self) -> &[Sign] {
        &self.signs
    }

    pub fn magnitude(&self) -> f64 {
        self.magnitude
    }

    pub fn len(&self) -> usize {
        self.signs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.signs.is_empty()
    }

    /// Real pilot values `signs[i] * sqrt(E)`.
    pub fn values(&self) -> Vec<f64> {
        self.signs
            .iter()
            .map(|s| s.value() * self.magnitude)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct McsaResult {
    pub pilots: PilotConfig,
    pub papr_db: f64,
    pub trials_used: u64,
    pub met_target: bool,
}

/// `sqrt(E)` for the data subcarriers of `symbol`.
pub fn pilot_magnitude(symbol: &SpectrumSymbol) -> Result<f64> {
    let energy = mean_energy(&symbol.data_values())?;
    if energy <= 0.0 {
        return domain("data subcarriers carry no energy");
    }
    Ok(energy.sqrt())
}

/// Returns a copy of `symbol` with the pilot slots overwritten by `pilots`.
pub fn insert_pilots(symbol: &SpectrumSymbol, pilots: &PilotConfig) -> Result<SpectrumSymbol> {
    let mut out = symbol.clone();
    write_pilots(&mut out, pilots)?;
    Ok(out)
}

fn write_pilots(symbol: &mut SpectrumSymbol, pilots: &PilotConfig) -> Result<()> {
    if pilots.len() != symbol.num_pilots() {
        return domain(format!(
            "{} pilot signs for {} pilot subcarriers",
            pilots.len(),
            symbol.num_pilots()
        ));
    }
    let indices = symbol.pilot_indices().to_vec();
    let values = symbol.values_mut();
    for (&i, s) in indices.iter().zip(pilots.signs()) {
        values[i] = Complex64::new(s.value() * pilots.magnitude(), 0.0);
    }
    Ok(())
}

/// PAPR of `symbol` with `pilots` inserted, measured at oversampling `L`.
pub fn papr_with_pilots(
    symbol: &SpectrumSymbol,
    pilots: &PilotConfig,
    oversampling: usize,
) -> Result<f64> {
    let mut evaluator = CandidateEvaluator::new(symbol, oversampling)?;
    evaluator.papr(pilots.signs())
}

/// Reusable scratch for scoring many pilot candidates on one symbol.
struct CandidateEvaluator {
    symbol: SpectrumSymbol,
    plan: IdftPlan,
    magnitude: f64,
    time: Vec<Complex64>,
}

impl CandidateEvaluator {
    fn new(symbol: &SpectrumSymbol, oversampling: usize) -> Result<Self> {
        let plan = IdftPlan::new(symbol.len(), oversampling)?;
        Ok(CandidateEvaluator {
            symbol: symbol.clone(),
            time: vec![Complex64::new(0.0, 0.0); plan.output_len()],
            magnitude: pilot_magnitude(symbol)?,
            plan,
        })
    }

    fn pilots(&self, signs: &[Sign]) -> Result<PilotConfig> {
        PilotConfig::new(signs.to_vec(), self.magnitude)
    }

    /// insert_pilots + idft + papr_db, without reallocating.
    fn papr(&mut self, signs: &[Sign]) -> Result<f64> {
        let pilots = PilotConfig {
            signs: signs.to_vec(),
            magnitude: self.magnitude,
        };
        write_pilots(&mut self.symbol, &pilots)?;
        self.plan
            .execute_into(self.symbol.values(), &mut self.time)?;
        papr_db_of(&self.time)
    }
}

/// Randomized pilot search at Nyquist rate (`L = 1`).
pub fn mcsa_search(
    symbol: &SpectrumSymbol,
    config: &McsaConfig,
    rng_seed: u64,
) -> Result<McsaResult> {
    mcsa_search_oversampled(symbol, config, rng_seed, 1)
}

/// Randomized pilot search with PAPR measured at oversampling `L`.
///
/// Trial 1 uses the all-plus sign vector; later trials draw independent
/// uniform signs from a `ChaCha8Rng` seeded with `rng_seed`. The search stops
/// at the first candidate with PAPR at or below the target, otherwise it
/// returns the first-seen minimum over all trials.
pub fn mcsa_search_oversampled(
    symbol: &SpectrumSymbol,
    config: &McsaConfig,
    rng_seed: u64,
    oversampling: usize,
) -> Result<McsaResult> {
    config.validate()?;
    let num_pilots = symbol.num_pilots();
    if num_pilots == 0 {
        return domain("symbol has no pilot subcarriers to search over");
    }
    let mut evaluator = CandidateEvaluator::new(symbol, oversampling)?;
    let mut rng = seed::rng(rng_seed);

    let mut signs = vec![Sign::Plus; num_pilots];
    let mut best_signs = signs.clone();
    let mut best_papr = f64::INFINITY;
    let mut trials = 0u64;
    let mut met = false;
    while trials < config.max_trials as u64 {
        if trials > 0 {
            for s in signs.iter_mut() {
                *s = if rng.random_bool(0.5) {
                    Sign::Minus
                } else {
                    Sign::Plus
                };
            }
        }
        let papr = evaluator.papr(&signs)?;
        trials += 1;
        if papr < best_papr {
            best_papr = papr;
            best_signs.copy_from_slice(&signs);
        }
        if papr <= config.target_papr_db {
            met = true;
            break;
        }
    }
    Ok(McsaResult {
        pilots: evaluator.pilots(&best_signs)?,
        papr_db: best_papr,
        trials_used: trials,
        met_target: met,
    })
}

/// Evaluates all `2^N_p` sign vectors and returns the global minimum.
///
/// Enumeration is lexicographic with `+` before `-`, and the first minimum
/// wins ties.
pub fn exhaustive_search(symbol: &SpectrumSymbol) -> Result<McsaResult> {
    exhaustive_search_oversampled(symbol, 1)
}

pub fn exhaustive_search_oversampled(
    symbol: &SpectrumSymbol,
    oversampling: usize,
) -> Result<McsaResult> {
    let num_pilots = symbol.num_pilots();
    if num_pilots == 0 {
        return domain("symbol has no pilot subcarriers to search over");
    }
    if num_pilots > EXHAUSTIVE_MAX_PILOTS {
        return Err(Error::Budget(format!(
            "exhaustive search over 2^{num_pilots} candidates exceeds the 2^{EXHAUSTIVE_MAX_PILOTS} limit"
        )));
    }
    let mut evaluator = CandidateEvaluator::new(symbol, oversampling)?;
    let total = 1u64 << num_pilots;
    let mut signs = vec![Sign::Plus; num_pilots];
    let mut best_signs = signs.clone();
    let mut best_papr = f64::INFINITY;
    for code in 0..total {
        // most significant bit drives the first pilot
        for (i, s) in signs.iter_mut().enumerate() {
            let bit = (code >> (num_pilots - 1 - i)) & 1;
            *s = if bit == 1 { Sign::Minus } else { Sign::Plus };
        }
        let papr = evaluator.papr(&signs)?;
        if papr < best_papr {
            best_papr = papr;
            best_signs.copy_from_slice(&signs);
        }
    }
    Ok(McsaResult {
        pilots: evaluator.pilots(&best_signs)?,
        papr_db: best_papr,
        trials_used: total,
        met_target: true,
    })
}

//! Reproducible corpora of random OFDM symbols labelled by MCSA.
//!
//! Row `r` is a pure function of `(meta, r)`: its bits come from a stream
//! seeded with `seed::derive(master_seed, r)` and its label from
//! `mcsa_search` seeded with that row seed xor [`seed::LABEL_SEARCH_SALT`].
//! Rows below `split_index` form the training partition, the rest the test
//! partition.

use std::collections::{BTreeMap, HashSet};

use num_bigint::BigUint;
use num_traits::ToPrimitive;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{domain, Error, Result};
use crate::mcsa::{mcsa_search_oversampled, McsaConfig, McsaResult};
use crate::seed;
use crate::signal::{default_pilot_indices, validate_pilot_indices, Modulation, SpectrumSymbol};

pub const SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_SPLIT_FRACTION: f64 = 0.70;
pub const DEFAULT_MAX_TRIALS: u32 = 256;
/// Default label target: PAPR never drops below 0 dB for a non-constant
/// envelope, so labels are the best of the full trial budget.
pub const DEFAULT_TARGET_DB: f64 = 0.0;
pub const MIN_SAMPLES: usize = 10;
/// Redraw attempts allowed per test row that duplicates a training row.
pub const MAX_REDRAWS: u32 = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub schema_version: u32,
    pub k: usize,
    pub num_pilots: usize,
    pub pilot_indices: Vec<usize>,
    pub modulation: Modulation,
    pub num_samples: usize,
    pub split_fraction: f64,
    pub master_seed: u64,
    pub mcsa_target_db: f64,
    pub mcsa_max_trials: u32,
    pub pilot_magnitude: f64,
    /// Oversampling factor at which label PAPRs are measured.
    pub oversampling: usize,
    pub rng_family: String,
    /// Test rows regenerated because they duplicated a training row:
    /// row index to the redraw attempt that produced the stored row.
    #[serde(default)]
    pub redraws: BTreeMap<usize, u32>,
}

impl DatasetMeta {
    /// Defaults: evenly spaced pilots, 70/30 split, unit pilot magnitude,
    /// best-of-256 labels at Nyquist rate.
    pub fn new(
        k: usize,
        num_pilots: usize,
        modulation: Modulation,
        num_samples: usize,
        master_seed: u64,
    ) -> Self {
        DatasetMeta {
            schema_version: SCHEMA_VERSION,
            k,
            num_pilots,
            pilot_indices: default_pilot_indices(k, num_pilots),
            modulation,
            num_samples,
            split_fraction: DEFAULT_SPLIT_FRACTION,
            master_seed,
            mcsa_target_db: DEFAULT_TARGET_DB,
            mcsa_max_trials: DEFAULT_MAX_TRIALS,
            pilot_magnitude: 1.0,
            oversampling: 1,
            rng_family: seed::RNG_FAMILY.to_string(),
            redraws: BTreeMap::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Validation(format!(
                "unsupported schema version {}",
                self.schema_version
            )));
        }
        if self.num_pilots != self.pilot_indices.len() {
            return domain(format!(
                "num_pilots = {} but {} pilot indices given",
                self.num_pilots,
                self.pilot_indices.len()
            ));
        }
        validate_pilot_indices(self.k, &self.pilot_indices)?;
        if self.num_pilots == 0 {
            return domain("a labelled corpus needs at least one pilot");
        }
        if self.num_samples < MIN_SAMPLES {
            return domain(format!(
                "num_samples must be at least {MIN_SAMPLES}, got {}",
                self.num_samples
            ));
        }
        if !(self.split_fraction > 0.0 && self.split_fraction < 1.0) {
            return domain(format!(
                "split_fraction {} not in (0, 1)",
                self.split_fraction
            ));
        }
        let split = self.split_index();
        if split == 0 || split >= self.num_samples {
            return domain(format!(
                "split index {split} leaves an empty partition of {} rows",
                self.num_samples
            ));
        }
        if self.oversampling == 0 {
            return domain("oversampling factor must be at least 1");
        }
        self.mcsa_config().validate()?;
        // Unit-energy constellations give E = 1 for every symbol.
        if self.pilot_magnitude != 1.0 {
            return Err(Error::Validation(format!(
                "pilot magnitude {} does not match sqrt(E) = 1 of the {} constellation",
                self.pilot_magnitude, self.modulation
            )));
        }
        if let Some((&row, _)) = self
            .redraws
            .iter()
            .find(|(&r, _)| r < split || r >= self.num_samples)
        {
            return Err(Error::Validation(format!(
                "redraw recorded for non-test row {row}"
            )));
        }
        Ok(())
    }

    pub fn split_index(&self) -> usize {
        (self.split_fraction * self.num_samples as f64).round() as usize
    }

    pub fn feature_width(&self) -> usize {
        2 * (self.k - self.num_pilots)
    }

    pub fn label_width(&self) -> usize {
        self.num_pilots
    }

    pub fn mcsa_config(&self) -> McsaConfig {
        McsaConfig {
            target_papr_db: self.mcsa_target_db,
            max_trials: self.mcsa_max_trials,
            pilot_magnitude_mode: Default::default(),
        }
    }

    /// Seed of row `row` at redraw attempt `attempt`.
    pub fn row_seed(&self, row: usize, attempt: u32) -> u64 {
        let base = seed::derive(self.master_seed, row as u64);
        if attempt == 0 {
            base
        } else {
            seed::derive(base, attempt as u64)
        }
    }

    /// SHA-256 of the canonical JSON encoding, hex encoded.
    pub fn content_hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("meta serializes");
        hex::encode(Sha256::digest(&json))
    }
}

/// One generated row.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub symbol: SpectrumSymbol,
    pub features: Vec<f64>,
    pub labels: Vec<f64>,
    pub search: McsaResult,
}

/// Generates row `row` in isolation, honouring any recorded redraw.
pub fn generate_row(meta: &DatasetMeta, row: usize) -> Result<Row> {
    let attempt = meta.redraws.get(&row).copied().unwrap_or(0);
    generate_row_attempt(meta, row, attempt)
}

fn generate_row_attempt(meta: &DatasetMeta, row: usize, attempt: u32) -> Result<Row> {
    let row_seed = meta.row_seed(row, attempt);
    let mut rng = seed::rng(row_seed);
    let nbits = (meta.k - meta.num_pilots) * meta.modulation.bits_per_symbol();
    let bits: Vec<u8> = (0..nbits).map(|_| rng.random_range(0..2u8)).collect();
    let symbol =
        SpectrumSymbol::from_bits(meta.k, meta.pilot_indices.clone(), meta.modulation, &bits)?;
    let search = mcsa_search_oversampled(
        &symbol,
        &meta.mcsa_config(),
        row_seed ^ seed::LABEL_SEARCH_SALT,
        meta.oversampling,
    )?;
    Ok(Row {
        features: symbol.features(),
        labels: search.pilots.values(),
        symbol,
        search,
    })
}

fn row_key(features: &[f64]) -> Vec<u64> {
    features.iter().map(|v| v.to_bits()).collect()
}

/// Feature/label matrices (row-major) with their metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct PaprDataset {
    meta: DatasetMeta,
    features: Vec<f64>,
    labels: Vec<f64>,
}

/// Borrowed view of a contiguous range of rows.
#[derive(Debug, Clone, Copy)]
pub struct Partition<'a> {
    pub features: &'a [f64],
    pub labels: &'a [f64],
    pub feature_width: usize,
    pub label_width: usize,
    /// Index of the first row in the parent dataset.
    pub first_row: usize,
}

impl<'a> Partition<'a> {
    pub fn len(&self) -> usize {
        self.features.len() / self.feature_width
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn feature_row(&self, i: usize) -> &'a [f64] {
        &self.features[i * self.feature_width..(i + 1) * self.feature_width]
    }

    pub fn label_row(&self, i: usize) -> &'a [f64] {
        &self.labels[i * self.label_width..(i + 1) * self.label_width]
    }

    /// Rows `range` of this partition.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Partition<'a> {
        Partition {
            features: &self.features
                [range.start * self.feature_width..range.end * self.feature_width],
            labels: &self.labels[range.start * self.label_width..range.end * self.label_width],
            feature_width: self.feature_width,
            label_width: self.label_width,
            first_row: self.first_row + range.start,
        }
    }
}

impl PaprDataset {
    /// Generates the corpus described by `meta`.
    ///
    /// Rows are produced in parallel and assembled in index order. Test rows
    /// whose features exactly duplicate a training row are redrawn and the
    /// redraw is recorded in the returned metadata.
    pub fn generate(meta: &DatasetMeta) -> Result<Self> {
        let mut meta = meta.clone();
        meta.redraws.clear();
        meta.validate()?;
        let rows: Vec<Row> = (0..meta.num_samples)
            .into_par_iter()
            .map(|r| generate_row_attempt(&meta, r, 0))
            .collect::<Result<_>>()?;

        let split = meta.split_index();
        let train_keys: HashSet<Vec<u64>> =
            rows[..split].iter().map(|r| row_key(&r.features)).collect();
        let mut features = Vec::with_capacity(meta.num_samples * meta.feature_width());
        let mut labels = Vec::with_capacity(meta.num_samples * meta.label_width());
        for (r, mut row) in rows.into_iter().enumerate() {
            if r >= split {
                let mut attempt = 0;
                while train_keys.contains(&row_key(&row.features)) {
                    attempt += 1;
                    if attempt > MAX_REDRAWS {
                        return domain(format!(
                            "test row {r} still duplicates a training row after {MAX_REDRAWS} redraws; \
                             the symbol space is too small for {} samples",
                            meta.num_samples
                        ));
                    }
                    row = generate_row_attempt(&meta, r, attempt)?;
                }
                if attempt > 0 {
                    meta.redraws.insert(r, attempt);
                }
            }
            features.extend_from_slice(&row.features);
            labels.extend_from_slice(&row.labels);
        }
        Ok(PaprDataset {
            meta,
            features,
            labels,
        })
    }

    /// Assembles a dataset from raw matrices, enforcing the invariants.
    pub fn from_parts(meta: DatasetMeta, features: Vec<f64>, labels: Vec<f64>) -> Result<Self> {
        meta.validate()?;
        let n = meta.num_samples;
        if features.len() != n * meta.feature_width() {
            return Err(Error::Validation(format!(
                "feature matrix has {} entries, expected {n} x {}",
                features.len(),
                meta.feature_width()
            )));
        }
        if labels.len() != n * meta.label_width() {
            return Err(Error::Validation(format!(
                "label matrix has {} entries, expected {n} x {}",
                labels.len(),
                meta.label_width()
            )));
        }
        let magnitude = meta.pilot_magnitude;
        if let Some(i) = labels
            .iter()
            .position(|&v| v != magnitude && v != -magnitude)
        {
            return Err(Error::Validation(format!(
                "label at row {}, column {} is {}, expected ±{magnitude}",
                i / meta.label_width(),
                i % meta.label_width(),
                labels[i]
            )));
        }
        if let Some(i) = features.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "feature at row {}, column {} is not finite",
                i / meta.feature_width(),
                i % meta.feature_width()
            )));
        }
        Ok(PaprDataset {
            meta,
            features,
            labels,
        })
    }

    pub fn meta(&self) -> &DatasetMeta {
        &self.meta
    }

    pub fn len(&self) -> usize {
        self.meta.num_samples
    }

    pub fn is_empty(&self) -> bool {
        self.meta.num_samples == 0
    }

    pub fn split_index(&self) -> usize {
        self.meta.split_index()
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    /// Raw mutable access to the feature matrix. Callers own the invariants.
    pub fn features_mut(&mut self) -> &mut [f64] {
        &mut self.features
    }

    fn partition(&self, range: std::ops::Range<usize>) -> Partition<'_> {
        Partition {
            features: &self.features,
            labels: &self.labels,
            feature_width: self.meta.feature_width(),
            label_width: self.meta.label_width(),
            first_row: 0,
        }
        .slice(range)
    }

    pub fn all(&self) -> Partition<'_> {
        self.partition(0..self.len())
    }

    pub fn train(&self) -> Partition<'_> {
        self.partition(0..self.split_index())
    }

    pub fn test(&self) -> Partition<'_> {
        self.partition(self.split_index()..self.len())
    }

    /// Rebuilds the spectrum of row `row` (pilot slots zero).
    pub fn symbol(&self, row: usize) -> Result<SpectrumSymbol> {
        SpectrumSymbol::from_features(
            self.meta.k,
            self.meta.pilot_indices.clone(),
            self.meta.modulation,
            self.all().feature_row(row),
        )
    }

    /// Checks that no feature row occurs in both partitions.
    pub fn verify_disjoint(&self) -> Result<()> {
        let train = self.train();
        let keys: HashSet<Vec<u64>> = (0..train.len())
            .map(|i| row_key(train.feature_row(i)))
            .collect();
        let test = self.test();
        for i in 0..test.len() {
            if keys.contains(&row_key(test.feature_row(i))) {
                return Err(Error::Integrity(format!(
                    "test row {} duplicates a training row",
                    test.first_row + i
                )));
            }
        }
        Ok(())
    }
}

/// Exact size `order^exponent` of a discrete symbol space.
pub fn sample_space(order: u32, exponent: u32) -> BigUint {
    BigUint::from(order).pow(exponent)
}

/// Number of distinct data-subcarrier patterns, `m^(K - N_p)`.
pub fn sample_space_size(meta: &DatasetMeta) -> BigUint {
    sample_space(meta.modulation.order(), (meta.k - meta.num_pilots) as u32)
}

/// Fraction of the sample space covered by `train_rows` draws.
pub fn coverage_fraction(train_rows: u64, space: &BigUint) -> Result<f64> {
    if *space == BigUint::ZERO {
        return domain("sample space is empty");
    }
    let space = space
        .to_f64()
        .ok_or_else(|| Error::Domain("sample space too large for f64".into()))?;
    Ok(train_rows as f64 / space)
}

//! Complex baseband primitives: constellation mapping, the inverse DFT of
//! arbitrary length, and energy / PAPR measurement.
//!
//! The inverse transform uses the unitary convention
//!
//! ```text
//! x[n] = 1/sqrt(K) * sum_k s[k] * exp(+j 2 pi k n / N),   N = L * K
//! ```
//!
//! where the K-point spectrum is zero-padded beyond index K to N points. The
//! transform is evaluated by direct summation against a precomputed twiddle
//! table, which handles lengths such as 15 and 30 exactly.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

/// One complex baseband sample.
pub type ComplexSample = Complex64;

/// Constellation used on the data subcarriers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Modulation {
    Qpsk,
    Qam16,
}

impl Modulation {
    /// Number of constellation points.
    pub fn order(self) -> u32 {
        match self {
            Modulation::Qpsk => 4,
            Modulation::Qam16 => 16,
        }
    }

    pub fn bits_per_symbol(self) -> usize {
        match self {
            Modulation::Qpsk => 2,
            Modulation::Qam16 => 4,
        }
    }

    /// Maps a bit vector onto this constellation.
    pub fn map(self, bits: &[u8]) -> Result<Vec<ComplexSample>> {
        match self {
            Modulation::Qpsk => map_qpsk(bits),
            Modulation::Qam16 => map_qam16(bits),
        }
    }

    /// All constellation points, in bit-label order.
    pub fn points(self) -> Vec<ComplexSample> {
        let bps = self.bits_per_symbol();
        let bits: Vec<u8> = (0..self.order() as usize)
            .flat_map(|label| (0..bps).rev().map(move |b| ((label >> b) & 1) as u8))
            .collect();
        self.map(&bits).expect("complete label table")
    }

    /// Whether `value` is a point of this constellation (within `1e-9`).
    pub fn contains(self, value: ComplexSample) -> bool {
        let axis_ok = |v: f64| match self {
            Modulation::Qpsk => (v.abs() - FRAC_1_SQRT_2).abs() < 1e-9,
            Modulation::Qam16 => {
                let a = v.abs() * QAM16_SCALE_INV;
                (a - 1.0).abs() < 1e-9 || (a - 3.0).abs() < 1e-9
            }
        };
        axis_ok(value.re) && axis_ok(value.im)
    }
}

impl std::fmt::Display for Modulation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Modulation::Qpsk => "QPSK",
            Modulation::Qam16 => "QAM16",
        })
    }
}

impl std::str::FromStr for Modulation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "").as_str() {
            "qpsk" => Ok(Modulation::Qpsk),
            "qam16" | "16qam" => Ok(Modulation::Qam16),
            other => Err(Error::Parse(format!("unknown modulation `{other}`"))),
        }
    }
}

fn check_bits(bits: &[u8], group: usize) -> Result<()> {
    if !bits.len().is_multiple_of(group) {
        return Err(Error::Length(format!(
            "bit vector length {} is not a multiple of {group}",
            bits.len()
        )));
    }
    if let Some(pos) = bits.iter().position(|&b| b > 1) {
        return domain(format!(
            "bit {pos} has value {}, expected 0 or 1",
            bits[pos]
        ));
    }
    Ok(())
}

/// Gray-mapped unit-energy QPSK: `(b0, b1) -> ((1 - 2 b0) + j (1 - 2 b1)) / sqrt(2)`.
pub fn map_qpsk(bits: &[u8]) -> Result<Vec<ComplexSample>> {
    check_bits(bits, 2)?;
    Ok(bits
        .chunks_exact(2)
        .map(|p| {
            Complex64::new(
                (1.0 - 2.0 * p[0] as f64) * FRAC_1_SQRT_2,
                (1.0 - 2.0 * p[1] as f64) * FRAC_1_SQRT_2,
            )
        })
        .collect())
}

// 1 / sqrt(10)
const QAM16_SCALE: f64 = 0.316_227_766_016_837_94;
const QAM16_SCALE_INV: f64 = 3.162_277_660_168_379_5;

/// Gray-mapped 16-QAM with per-axis levels `{±1, ±3} / sqrt(10)`.
///
/// Each group of four bits is `(sign_i, mag_i, sign_q, mag_q)`; the sign bit
/// selects the half plane and the magnitude bit selects the outer level, so
/// along each axis the labels read `11, 10, 00, 01` from -3 to +3.
pub fn map_qam16(bits: &[u8]) -> Result<Vec<ComplexSample>> {
    check_bits(bits, 4)?;
    let level = |sign: u8, mag: u8| (1.0 - 2.0 * sign as f64) * (1.0 + 2.0 * mag as f64);
    Ok(bits
        .chunks_exact(4)
        .map(|q| {
            Complex64::new(
                level(q[0], q[1]) * QAM16_SCALE,
                level(q[2], q[3]) * QAM16_SCALE,
            )
        })
        .collect())
}

/// Frequency-domain OFDM symbol with a designated set of pilot subcarriers.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumSymbol {
    values: Vec<ComplexSample>,
    pilot_indices: Vec<usize>,
    modulation: Modulation,
}

/// Checks a pilot index set against the symbol length.
pub fn validate_pilot_indices(k: usize, pilot_indices: &[usize]) -> Result<()> {
    if k < 2 {
        return domain(format!("K must be at least 2, got {k}"));
    }
    if pilot_indices.len() >= k {
        return domain(format!(
            "{} pilots leave no data subcarrier out of K = {k}",
            pilot_indices.len()
        ));
    }
    if pilot_indices.windows(2).any(|w| w[0] >= w[1]) {
        return domain("pilot indices must be strictly increasing");
    }
    if let Some(&last) = pilot_indices.last() {
        if last >= k {
            return domain(format!("pilot index {last} out of range for K = {k}"));
        }
    }
    Ok(())
}

/// Evenly spaced pilot positions `i * floor(K / N_p)`.
pub fn default_pilot_indices(k: usize, num_pilots: usize) -> Vec<usize> {
    if num_pilots == 0 {
        return Vec::new();
    }
    let step = k / num_pilots;
    (0..num_pilots).map(|i| i * step).collect()
}

impl SpectrumSymbol {
    /// Builds a symbol from explicit values. Data subcarriers must hold
    /// constellation points; pilot slots may hold anything finite.
    pub fn new(
        values: Vec<ComplexSample>,
        pilot_indices: Vec<usize>,
        modulation: Modulation,
    ) -> Result<Self> {
        validate_pilot_indices(values.len(), &pilot_indices)?;
        let symbol = SpectrumSymbol {
            values,
            pilot_indices,
            modulation,
        };
        if let Some(i) = symbol.values.iter().position(|v| !v.is_finite()) {
            return domain(format!("subcarrier {i} is not finite"));
        }
        for i in symbol.data_indices() {
            if !modulation.contains(symbol.values[i]) {
                return domain(format!(
                    "subcarrier {i} value {} is not a {modulation} point",
                    symbol.values[i]
                ));
            }
        }
        Ok(symbol)
    }

    /// Maps `bits` onto the data subcarriers (ascending index order); pilot
    /// slots are left at zero.
    pub fn from_bits(
        k: usize,
        pilot_indices: Vec<usize>,
        modulation: Modulation,
        bits: &[u8],
    ) -> Result<Self> {
        validate_pilot_indices(k, &pilot_indices)?;
        let data_count = k - pilot_indices.len();
        let expected = data_count * modulation.bits_per_symbol();
        if bits.len() != expected {
            return Err(Error::Length(format!(
                "expected {expected} bits for {data_count} {modulation} subcarriers, got {}",
                bits.len()
            )));
        }
        let points = modulation.map(bits)?;
        let mut values = vec![Complex64::new(0.0, 0.0); k];
        let mut pilots = pilot_indices.iter().peekable();
        let mut data = points.into_iter();
        for (i, slot) in values.iter_mut().enumerate() {
            if pilots.peek() == Some(&&i) {
                pilots.next();
            } else {
                *slot = data.next().expect("bit count checked above");
            }
        }
        Ok(SpectrumSymbol {
            values,
            pilot_indices,
            modulation,
        })
    }

    /// Rebuilds a symbol from interleaved re/im data-subcarrier features.
    pub fn from_features(
        k: usize,
        pilot_indices: Vec<usize>,
        modulation: Modulation,
        features: &[f64],
    ) -> Result<Self> {
        validate_pilot_indices(k, &pilot_indices)?;
        let width = 2 * (k - pilot_indices.len());
        if features.len() != width {
            return Err(Error::Length(format!(
                "feature row has {} entries, expected {width}",
                features.len()
            )));
        }
        let mut values = vec![Complex64::new(0.0, 0.0); k];
        let data: Vec<usize> = data_indices(k, &pilot_indices).collect();
        for (pair, &i) in features.chunks_exact(2).zip(&data) {
            values[i] = Complex64::new(pair[0], pair[1]);
        }
        SpectrumSymbol::new(values, pilot_indices, modulation)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[ComplexSample] {
        &self.values
    }

    pub fn pilot_indices(&self) -> &[usize] {
        &self.pilot_indices
    }

    pub fn num_pilots(&self) -> usize {
        self.pilot_indices.len()
    }

    pub fn modulation(&self) -> Modulation {
        self.modulation
    }

    /// Indices of the data subcarriers in ascending order.
    pub fn data_indices(&self) -> impl Iterator<Item = usize> + '_ {
        data_indices(self.values.len(), &self.pilot_indices)
    }

    /// Data subcarrier values in ascending index order.
    pub fn data_values(&self) -> Vec<ComplexSample> {
        self.data_indices().map(|i| self.values[i]).collect()
    }

    /// Interleaved re/im of the data subcarriers, pilots excluded.
    pub fn features(&self) -> Vec<f64> {
        self.data_indices()
            .flat_map(|i| [self.values[i].re, self.values[i].im])
            .collect()
    }

    pub(crate) fn values_mut(&mut self) -> &mut [ComplexSample] {
        &mut self.values
    }
}

fn data_indices(k: usize, pilots: &[usize]) -> impl Iterator<Item = usize> + '_ {
    (0..k).filter(move |i| pilots.binary_search(i).is_err())
}

/// Complex time-domain samples produced by [`idft`].
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSignal {
    samples: Vec<ComplexSample>,
    oversampling: usize,
}

impl TimeSignal {
    pub fn new(samples: Vec<ComplexSample>, oversampling: usize) -> Result<Self> {
        if oversampling == 0 {
            return domain("oversampling factor must be at least 1");
        }
        if samples.is_empty() || !samples.len().is_multiple_of(oversampling) {
            return Err(Error::Length(format!(
                "{} samples is not a positive multiple of L = {oversampling}",
                samples.len()
            )));
        }
        Ok(TimeSignal {
            samples,
            oversampling,
        })
    }

    pub fn samples(&self) -> &[ComplexSample] {
        &self.samples
    }

    pub fn oversampling(&self) -> usize {
        self.oversampling
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Instantaneous power `|x[n]|^2` per sample.
    pub fn power(&self) -> Vec<f64> {
        self.samples.iter().map(|x| x.norm_sqr()).collect()
    }

    pub fn into_samples(self) -> Vec<ComplexSample> {
        self.samples
    }
}

/// Precomputed inverse DFT for a fixed spectrum length and oversampling.
#[derive(Debug, Clone)]
pub struct IdftPlan {
    k: usize,
    n: usize,
    oversampling: usize,
    /// `exp(+j 2 pi m / N)` for `m in 0..N`.
    twiddles: Vec<ComplexSample>,
    scale: f64,
}

impl IdftPlan {
    pub fn new(k: usize, oversampling: usize) -> Result<Self> {
        if k == 0 {
            return domain("empty spectrum");
        }
        if oversampling == 0 {
            return domain("oversampling factor must be at least 1");
        }
        let n = k * oversampling;
        let twiddles = (0..n)
            .map(|m| Complex64::from_polar(1.0, 2.0 * PI * m as f64 / n as f64))
            .collect();
        Ok(IdftPlan {
            k,
            n,
            oversampling,
            twiddles,
            scale: 1.0 / (k as f64).sqrt(),
        })
    }

    pub fn spectrum_len(&self) -> usize {
        self.k
    }

    pub fn output_len(&self) -> usize {
        self.n
    }

    /// Writes the transform of `spectrum` into `out` (length `L * K`).
    pub fn execute_into(
        &self,
        spectrum: &[ComplexSample],
        out: &mut [ComplexSample],
    ) -> Result<()> {
        if spectrum.len() != self.k {
            return Err(Error::Length(format!(
                "plan built for K = {}, got spectrum of length {}",
                self.k,
                spectrum.len()
            )));
        }
        if out.len() != self.n {
            return Err(Error::Length(format!(
                "output buffer has length {}, expected {}",
                out.len(),
                self.n
            )));
        }
        for (t, slot) in out.iter_mut().enumerate() {
            let mut acc = Complex64::new(0.0, 0.0);
            // index advances by t modulo N per subcarrier
            let mut m = 0usize;
            for s in spectrum {
                acc += s * self.twiddles[m];
                m += t;
                if m >= self.n {
                    m -= self.n;
                }
            }
            *slot = acc * self.scale;
        }
        Ok(())
    }

    pub fn execute(&self, spectrum: &[ComplexSample]) -> Result<TimeSignal> {
        let mut out = vec![Complex64::new(0.0, 0.0); self.n];
        self.execute_into(spectrum, &mut out)?;
        Ok(TimeSignal {
            samples: out,
            oversampling: self.oversampling,
        })
    }
}

/// Unitary inverse DFT of `spectrum`, zero-padded to `L * K` points.
pub fn idft(spectrum: &[ComplexSample], oversampling: usize) -> Result<TimeSignal> {
    IdftPlan::new(spectrum.len(), oversampling)?.execute(spectrum)
}

/// Mean energy `(1/M) * sum |c|^2`.
pub fn mean_energy(values: &[ComplexSample]) -> Result<f64> {
    if values.is_empty() {
        return domain("mean energy of an empty vector");
    }
    Ok(values.iter().map(|c| c.norm_sqr()).sum::<f64>() / values.len() as f64)
}

/// PAPR in dB of raw samples: `10 log10(max |x|^2 / mean |x|^2)`.
pub fn papr_db_of(samples: &[ComplexSample]) -> Result<f64> {
    if samples.is_empty() {
        return domain("PAPR of an empty signal");
    }
    let mut peak = 0.0f64;
    let mut total = 0.0f64;
    for x in samples {
        let p = x.norm_sqr();
        peak = peak.max(p);
        total += p;
    }
    if total == 0.0 {
        return domain("PAPR of an all-zero signal is undefined");
    }
    if !total.is_finite() {
        return domain("signal is not finite");
    }
    let mean = total / samples.len() as f64;
    Ok(10.0 * (peak / mean).log10())
}

/// PAPR in dB of a time-domain symbol, with the expectation taken as the
/// per-symbol sample mean.
pub fn papr_db(signal: &TimeSignal) -> Result<f64> {
    papr_db_of(&signal.samples)
}

use std::f64::consts::PI;

use num_complex::Complex64;
use papr_core::signal::{
    idft, mean_energy, papr_db, papr_db_of, IdftPlan, Modulation, SpectrumSymbol,
};
use proptest::prelude::*;

/// Direct O(K * N) inverse DFT evaluating every exponential afresh.
fn naive_idft(spectrum: &[Complex64], oversampling: usize) -> Vec<Complex64> {
    let k = spectrum.len();
    let n = k * oversampling;
    (0..n)
        .map(|t| {
            let acc: Complex64 = spectrum
                .iter()
                .enumerate()
                .map(|(f, s)| s * Complex64::from_polar(1.0, 2.0 * PI * (f * t) as f64 / n as f64))
                .sum();
            acc / (k as f64).sqrt()
        })
        .collect()
}

fn relative_error(a: &[Complex64], b: &[Complex64]) -> f64 {
    let num: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).norm_sqr())
        .sum::<f64>()
        .sqrt();
    let den: f64 = b.iter().map(|y| y.norm_sqr()).sum::<f64>().sqrt();
    num / den
}

fn qpsk_spectrum(bits: &[u8]) -> Vec<Complex64> {
    Modulation::Qpsk.map(bits).unwrap()
}

fn bits(len: usize) -> impl Strategy<Value = Vec<u8>> {
    proptest::collection::vec(0u8..2, len)
}

proptest! {
    #[test]
    fn idft_matches_direct_summation(
        k in prop::sample::select(vec![4usize, 15, 30]),
        seed_bits in bits(60),
        l in 1usize..5,
    ) {
        let spectrum = qpsk_spectrum(&seed_bits[..2 * k]);
        let fast = idft(&spectrum, l).unwrap();
        let slow = naive_idft(&spectrum, l);
        prop_assert!(relative_error(fast.samples(), &slow) < 1e-12);
    }

    #[test]
    fn parseval_holds_at_nyquist_rate(
        k in prop::sample::select(vec![4usize, 8, 15, 30, 64]),
        seed_bits in bits(128),
    ) {
        let spectrum = qpsk_spectrum(&seed_bits[..2 * k]);
        let x = idft(&spectrum, 1).unwrap();
        let ef = mean_energy(&spectrum).unwrap();
        let et = mean_energy(x.samples()).unwrap();
        prop_assert!((ef - et).abs() / ef < 1e-12);
    }

    #[test]
    fn papr_is_scale_invariant(
        seed_bits in bits(30),
        alpha_re in -50.0f64..50.0,
        alpha_im in -50.0f64..50.0,
    ) {
        let alpha = Complex64::new(alpha_re, alpha_im);
        prop_assume!(alpha.norm() > 1e-3);
        let x = idft(&qpsk_spectrum(&seed_bits), 1).unwrap();
        let scaled: Vec<Complex64> = x.samples().iter().map(|s| s * alpha).collect();
        let a = papr_db(&x).unwrap();
        let b = papr_db_of(&scaled).unwrap();
        prop_assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn papr_bounds(
        k in 2usize..40,
        l in 1usize..5,
        seed_bits in bits(160),
        qam in any::<bool>(),
    ) {
        let modulation = if qam { Modulation::Qam16 } else { Modulation::Qpsk };
        let nbits = k * modulation.bits_per_symbol();
        let s = SpectrumSymbol::from_bits(k, vec![], modulation, &seed_bits[..nbits]).unwrap();
        let p = papr_db(&idft(s.values(), l).unwrap()).unwrap();
        prop_assert!(p >= -1e-12);
        prop_assert!(p <= 10.0 * ((l * k) as f64).log10() + 1e-9);
    }

    #[test]
    fn plan_reuse_is_bit_identical(seed_bits in bits(30)) {
        let spectrum = qpsk_spectrum(&seed_bits);
        let plan = IdftPlan::new(15, 2).unwrap();
        prop_assert_eq!(plan.execute(&spectrum).unwrap(), idft(&spectrum, 2).unwrap());
    }
}

#[test]
fn impulse_in_time_has_papr_of_ten_log_k() {
    for k in [4usize, 8, 15, 30] {
        let ones = vec![Complex64::new(1.0, 0.0); k];
        let p = papr_db(&idft(&ones, 1).unwrap()).unwrap();
        assert!((p - 10.0 * (k as f64).log10()).abs() < 1e-9, "K = {k}: {p}");
    }
}

#[test]
fn qam16_symbols_keep_unit_energy_on_average() {
    let all: Vec<u8> = (0..16u8)
        .flat_map(|v| (0..4).rev().map(move |b| (v >> b) & 1))
        .collect();
    let pts = Modulation::Qam16.map(&all).unwrap();
    assert!((mean_energy(&pts).unwrap() - 1.0).abs() < 1e-15);
    assert!((mean_energy(&idft(&pts, 1).unwrap().into_samples()).unwrap() - 1.0).abs() < 1e-12);
}

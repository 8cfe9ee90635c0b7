mod support;

use std::f64::consts::PI;

use eqrep_core::audio::AudioBuffer;
use eqrep_core::eq::{
    apply_eq, design_biquad, eq_response, log_frequency_grid, standard_bands, EqBandSpec, EqSetting, FilterKind,
};
use eqrep_core::rng::SplitMix64;
use support::{cookbook, dtft_db, section_db, Shape};

const FS: u32 = 44_100;

fn shape(kind: FilterKind) -> Shape {
    match kind {
        FilterKind::LowShelf => Shape::LowShelf,
        FilterKind::Bell => Shape::Peaking,
        FilterKind::HighShelf => Shape::HighShelf,
    }
}

#[test]
fn bell_gain_at_center_for_random_draws() {
    let mut rng = SplitMix64::new(2024);
    let fs = f64::from(FS);
    for _ in 0..100 {
        let center = (rng.uniform(20f64.ln(), 20_000f64.ln())).exp();
        let gain = rng.uniform(-24.0, 24.0);
        let q = rng.uniform(0.3, 4.0);
        let spec = EqBandSpec::new(center, FilterKind::Bell, q);
        let c = design_biquad(&spec, gain, FS).unwrap();
        let w0 = 2.0 * PI * center / fs;
        let got = section_db(&[c.b0, c.b1, c.b2], &[1.0, c.a1, c.a2], w0);
        assert!((got - gain).abs() <= 1e-6, "center {center} q {q}: {got} vs {gain}");
        assert!((c.magnitude_db(w0) - gain).abs() <= 1e-6);
    }
}

#[test]
fn designs_match_the_cookbook_formulas() {
    let mut rng = SplitMix64::new(7);
    let fs = f64::from(FS);
    for _ in 0..300 {
        let kind = [FilterKind::LowShelf, FilterKind::Bell, FilterKind::HighShelf][rng.below(3)];
        let center = rng.uniform(11.0, 21_000.0);
        let gain = rng.uniform(-24.0, 24.0);
        let q = rng.uniform(0.3, 4.0);
        let c = design_biquad(&EqBandSpec::new(center, kind, q), gain, FS).unwrap();
        let (b, a) = cookbook(shape(kind), center, gain, q, fs);
        let expect = [b[0] / a[0], b[1] / a[0], b[2] / a[0], a[1] / a[0], a[2] / a[0]];
        for (got, want) in [c.b0, c.b1, c.b2, c.a1, c.a2].iter().zip(expect) {
            assert!(
                (got - want).abs() <= 1e-12 * want.abs().max(1.0),
                "{kind:?}: {got} vs {want}"
            );
        }
        assert!(c.is_stable());
    }
}

#[test]
fn shelf_asymptotes() {
    let fs = f64::from(FS);
    for gain in [-12.0, -3.0, 6.0, 12.0] {
        let (b, a) = cookbook(Shape::LowShelf, 80.0, gain, 0.707, fs);
        assert!((section_db(&b, &a, 1e-6) - gain).abs() < 1e-6);
        assert!(section_db(&b, &a, PI - 1e-6).abs() < 1e-3);
        let (b, a) = cookbook(Shape::HighShelf, 10_000.0, gain, 0.707, fs);
        assert!((section_db(&b, &a, PI - 1e-9) - gain).abs() < 0.1);
        assert!(section_db(&b, &a, 1e-6).abs() < 1e-6);
    }
}

#[test]
fn zero_cascade_is_identity() {
    let mut rng = SplitMix64::new(5);
    let samples: Vec<f32> = (0..4096).map(|_| rng.uniform(-1.0, 1.0) as f32).collect();
    let input = AudioBuffer::new(samples, FS).unwrap();
    let out = apply_eq(&input, &EqSetting::flat(), &standard_bands()).unwrap();
    for (a, b) in out.samples().iter().zip(input.samples()) {
        assert!((f64::from(*a) - f64::from(*b)).abs() <= 1e-9);
    }
}

fn impulse_response(setting: &EqSetting, len: usize) -> Vec<f64> {
    let mut x = vec![0f32; len];
    x[0] = 1.0;
    let buf = AudioBuffer::new(x, FS).unwrap();
    apply_eq(&buf, setting, &standard_bands()).unwrap().to_f64()
}

#[test]
fn impulse_response_matches_eq_response() {
    let mut rng = SplitMix64::new(11);
    let freqs = log_frequency_grid(20.0, 20_000.0, 60).unwrap();
    let bands = standard_bands();
    for trial in 0..6 {
        let gains: [f64; 5] = std::array::from_fn(|_| rng.uniform(-12.0, 12.0));
        let setting = EqSetting::new(gains).unwrap();
        let h = impulse_response(&setting, 1 << 15);
        let expect = eq_response(&setting, &bands, &freqs, FS).unwrap();
        for (&f, want) in freqs.iter().zip(expect) {
            let got = dtft_db(&h, f, f64::from(FS));
            assert!(
                (got - want).abs() <= 0.01,
                "trial {trial} at {f:.1} Hz: {got} vs {want}"
            );
        }
    }
}

#[test]
fn response_superposes_and_bells_are_reciprocal() {
    let bands = standard_bands();
    let freqs = log_frequency_grid(20.0, 20_000.0, 200).unwrap();
    let gains = [5.0, -3.0, 7.5, -12.0, 2.0];
    let total = eq_response(&EqSetting::new(gains).unwrap(), &bands, &freqs, FS).unwrap();
    let mut sum = vec![0.0; freqs.len()];
    for b in 0..5 {
        let mut g = [0.0; 5];
        g[b] = gains[b];
        let part = eq_response(&EqSetting::new(g).unwrap(), &bands, &freqs, FS).unwrap();
        sum.iter_mut().zip(part).for_each(|(s, p)| *s += p);
    }
    for (a, b) in total.iter().zip(&sum) {
        assert!((a - b).abs() < 1e-9);
    }

    let plus = eq_response(&EqSetting::new([0.0, 0.0, 9.0, 0.0, 0.0]).unwrap(), &bands, &freqs, FS).unwrap();
    let minus = eq_response(&EqSetting::new([0.0, 0.0, -9.0, 0.0, 0.0]).unwrap(), &bands, &freqs, FS).unwrap();
    for (p, m) in plus.iter().zip(&minus) {
        assert!((p + m).abs() < 1e-9);
    }
}

#[test]
fn response_errors_at_or_above_nyquist() {
    let bands = standard_bands();
    assert!(eq_response(&EqSetting::flat(), &bands, &[22_050.0], FS).is_err());
    assert!(eq_response(&EqSetting::flat(), &bands, &[-1.0], FS).is_err());
}

mod support;

use eqrep_core::audio::AudioBuffer;
use eqrep_core::features::{extract_features, stft_magnitudes, StftConfig};
use eqrep_core::rng::SplitMix64;

const FS: u32 = 44_100;

/// 0.2 s of a few random partials over white noise.
fn random_buffer(seed: u64) -> AudioBuffer {
    let mut rng = SplitMix64::new(seed);
    let n = (0.2 * f64::from(FS)) as usize;
    let tones: Vec<(f64, f64, f64)> = (0..3)
        .map(|_| {
            (
                rng.uniform(0.05, 0.4),
                rng.uniform(30.0, 18_000.0),
                rng.uniform(0.0, 2.0 * std::f64::consts::PI),
            )
        })
        .collect();
    let noise = rng.uniform(0.001, 0.2);
    let samples: Vec<f32> = (0..n)
        .map(|i| {
            let t = i as f64 / f64::from(FS);
            let tone: f64 = tones
                .iter()
                .map(|(a, f, p)| a * (2.0 * std::f64::consts::PI * f * t + p).sin())
                .sum();
            (tone + noise * rng.uniform(-1.0, 1.0)) as f32
        })
        .collect();
    AudioBuffer::new(samples, FS).unwrap()
}

#[test]
fn features_match_naive_oracle_on_random_buffers() {
    let cfg = StftConfig::default();
    for seed in 0..10 {
        let buf = random_buffer(1000 + seed);
        let got = extract_features(&buf, &cfg).unwrap().to_array();
        let want = support::features(&buf.to_f64(), f64::from(FS), 2048, 512).to_vec();
        for (j, (g, w)) in got.iter().zip(&want).enumerate() {
            let e = support::rel_err(*g, *w);
            assert!(e <= 1e-6, "buffer {seed}, feature {j}: {g} vs {w} (rel {e:e})");
        }
    }
}

#[test]
fn stft_matches_naive_dft() {
    let cfg = StftConfig::new(512, 128).unwrap();
    let buf = random_buffer(77);
    let got = stft_magnitudes(&buf, &cfg).unwrap();
    let want = support::naive_stft(&buf.to_f64(), 512, 128);
    assert_eq!(got.len(), want.len());
    assert_eq!(got.len(), (buf.len() - 512) / 128 + 1);
    for (gf, wf) in got.iter().zip(&want) {
        for (g, w) in gf.iter().zip(wf) {
            assert!((g - w).abs() <= 1e-9 * w.abs().max(1.0));
        }
    }
}

#[test]
fn other_frame_sizes_match_too() {
    let cfg = StftConfig::new(1024, 256).unwrap();
    let buf = random_buffer(5);
    let got = extract_features(&buf, &cfg).unwrap().to_array();
    let want = support::features(&buf.to_f64(), f64::from(FS), 1024, 256).to_vec();
    for (g, w) in got.iter().zip(&want) {
        assert!(support::rel_err(*g, *w) <= 1e-6, "{g} vs {w}");
    }
}

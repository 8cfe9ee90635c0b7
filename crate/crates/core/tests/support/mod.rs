//! Slow, direct reference implementations used as test oracles. Nothing
//! here calls into the library's DSP code.
#![allow(dead_code)]

use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shape {
    LowShelf,
    Peaking,
    HighShelf,
}

/// Unnormalized `(b, a)` straight from the cookbook formulas.
pub fn cookbook(shape: Shape, f0: f64, gain_db: f64, q: f64, fs: f64) -> ([f64; 3], [f64; 3]) {
    let big_a = 10f64.powf(gain_db / 40.0);
    let w0 = 2.0 * PI * f0 / fs;
    let c = w0.cos();
    let alpha = w0.sin() / (2.0 * q);
    let sq = big_a.sqrt();
    match shape {
        Shape::Peaking => (
            [1.0 + alpha * big_a, -2.0 * c, 1.0 - alpha * big_a],
            [1.0 + alpha / big_a, -2.0 * c, 1.0 - alpha / big_a],
        ),
        Shape::LowShelf => (
            [
                big_a * ((big_a + 1.0) - (big_a - 1.0) * c + 2.0 * sq * alpha),
                2.0 * big_a * ((big_a - 1.0) - (big_a + 1.0) * c),
                big_a * ((big_a + 1.0) - (big_a - 1.0) * c - 2.0 * sq * alpha),
            ],
            [
                (big_a + 1.0) + (big_a - 1.0) * c + 2.0 * sq * alpha,
                -2.0 * ((big_a - 1.0) + (big_a + 1.0) * c),
                (big_a + 1.0) + (big_a - 1.0) * c - 2.0 * sq * alpha,
            ],
        ),
        Shape::HighShelf => (
            [
                big_a * ((big_a + 1.0) + (big_a - 1.0) * c + 2.0 * sq * alpha),
                -2.0 * big_a * ((big_a - 1.0) + (big_a + 1.0) * c),
                big_a * ((big_a + 1.0) + (big_a - 1.0) * c - 2.0 * sq * alpha),
            ],
            [
                (big_a + 1.0) - (big_a - 1.0) * c + 2.0 * sq * alpha,
                2.0 * ((big_a - 1.0) - (big_a + 1.0) * c),
                (big_a + 1.0) - (big_a - 1.0) * c - 2.0 * sq * alpha,
            ],
        ),
    }
}

/// `20 log10 |H(e^{jw})|` for a second-order section, by direct complex
/// evaluation of numerator and denominator polynomials in `z^-1`.
pub fn section_db(b: &[f64; 3], a: &[f64; 3], w: f64) -> f64 {
    let poly = |c: &[f64; 3]| {
        let re = c[0] + c[1] * w.cos() + c[2] * (2.0 * w).cos();
        let im = -c[1] * w.sin() - c[2] * (2.0 * w).sin();
        (re * re + im * im).sqrt()
    };
    20.0 * (poly(b) / poly(a)).log10()
}

/// `20 log10 |sum h[n] e^{-j 2 pi f n / fs}|`.
pub fn dtft_db(h: &[f64], f: f64, fs: f64) -> f64 {
    let w = 2.0 * PI * f / fs;
    let (mut re, mut im) = (0.0, 0.0);
    for (n, &x) in h.iter().enumerate() {
        let ph = w * n as f64;
        re += x * ph.cos();
        im -= x * ph.sin();
    }
    20.0 * (re * re + im * im).sqrt().log10()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Features {
    pub centroid: f64,
    pub bandwidth: f64,
    pub rolloff: f64,
    pub mfcc: [f64; 13],
    pub rms: f64,
}

impl Features {
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = vec![self.centroid, self.bandwidth, self.rolloff];
        v.extend_from_slice(&self.mfcc);
        v.push(self.rms);
        v
    }
}

fn mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

fn inv_mel(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Naive O(N^2) DFT magnitudes of every full Hann-windowed frame.
pub fn naive_stft(x: &[f64], frame: usize, hop: usize) -> Vec<Vec<f64>> {
    let cos_t: Vec<f64> = (0..frame).map(|m| (2.0 * PI * m as f64 / frame as f64).cos()).collect();
    let sin_t: Vec<f64> = (0..frame).map(|m| (2.0 * PI * m as f64 / frame as f64).sin()).collect();
    let window: Vec<f64> = (0..frame).map(|n| 0.5 - 0.5 * cos_t[n]).collect();
    let mut frames = Vec::new();
    let mut start = 0;
    while start + frame <= x.len() {
        let seg: Vec<f64> = (0..frame).map(|n| x[start + n] * window[n]).collect();
        let mags = (0..=frame / 2)
            .map(|k| {
                let (mut re, mut im) = (0.0, 0.0);
                for (n, &v) in seg.iter().enumerate() {
                    let m = (k * n) % frame;
                    re += v * cos_t[m];
                    im -= v * sin_t[m];
                }
                (re * re + im * im).sqrt()
            })
            .collect();
        frames.push(mags);
        start += hop;
    }
    frames
}

/// The 17 features computed from first principles: naive DFT, triangular
/// HTK mel filters built in Hz, natural log with a 1e-10 floor and an
/// orthonormal DCT-II evaluated term by term.
pub fn features(x: &[f64], fs: f64, frame: usize, hop: usize) -> Features {
    let frames = naive_stft(x, frame, hop);
    assert!(!frames.is_empty());
    let n_bins = frame / 2 + 1;
    let freqs: Vec<f64> = (0..n_bins).map(|k| k as f64 * fs / frame as f64).collect();

    let n_mels = 40;
    let top = mel(fs / 2.0);
    let edges: Vec<f64> = (0..n_mels + 2)
        .map(|i| inv_mel(top * i as f64 / (n_mels + 1) as f64))
        .collect();
    let filters: Vec<Vec<f64>> = (0..n_mels)
        .map(|m| {
            let (l, c, r) = (edges[m], edges[m + 1], edges[m + 2]);
            let tri: Vec<f64> = freqs
                .iter()
                .map(|&f| {
                    if f > l && f <= c {
                        (f - l) / (c - l)
                    } else if f > c && f < r {
                        (r - f) / (r - c)
                    } else {
                        0.0
                    }
                })
                .collect();
            let peak = tri.iter().cloned().fold(0.0, f64::max);
            tri.iter().map(|w| w / peak).collect()
        })
        .collect();

    let mut acc = Features {
        centroid: 0.0,
        bandwidth: 0.0,
        rolloff: 0.0,
        mfcc: [0.0; 13],
        rms: 0.0,
    };
    for mags in &frames {
        let total: f64 = mags.iter().sum();
        let centroid = mags.iter().zip(&freqs).map(|(s, f)| s * f).sum::<f64>() / total;
        let var = mags
            .iter()
            .zip(&freqs)
            .map(|(s, f)| s * (f - centroid).powi(2))
            .sum::<f64>()
            / total;
        let energy: f64 = mags.iter().map(|s| s * s).sum();
        let mut run = 0.0;
        let mut rolloff = freqs[n_bins - 1];
        for (s, &f) in mags.iter().zip(&freqs) {
            run += s * s;
            if run >= 0.85 * energy {
                rolloff = f;
                break;
            }
        }
        let log_mel: Vec<f64> = filters
            .iter()
            .map(|w| (w.iter().zip(mags).map(|(w, s)| w * s * s).sum::<f64>() + 1e-10).ln())
            .collect();
        for k in 0..13 {
            let scale = if k == 0 {
                (1.0 / n_mels as f64).sqrt()
            } else {
                (2.0 / n_mels as f64).sqrt()
            };
            let sum: f64 = log_mel
                .iter()
                .enumerate()
                .map(|(i, v)| v * (PI * k as f64 * (i as f64 + 0.5) / n_mels as f64).cos())
                .sum();
            acc.mfcc[k] += scale * sum;
        }
        acc.centroid += centroid;
        acc.bandwidth += var.sqrt();
        acc.rolloff += rolloff;
    }
    let nf = frames.len() as f64;
    let mut rms = 0.0;
    for i in 0..frames.len() {
        let seg = &x[i * hop..i * hop + frame];
        rms += (seg.iter().map(|v| v * v).sum::<f64>() / frame as f64).sqrt();
    }
    Features {
        centroid: acc.centroid / nf,
        bandwidth: acc.bandwidth / nf,
        rolloff: acc.rolloff / nf,
        mfcc: acc.mfcc.map(|v| v / nf),
        rms: rms / nf,
    }
}

/// `|a - b| / |b|`, or `|a - b|` when `b` is exactly zero.
pub fn rel_err(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        (a - b).abs()
    } else {
        ((a - b) / b).abs()
    }
}

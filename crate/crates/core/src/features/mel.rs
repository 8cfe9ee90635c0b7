//! HTK mel filterbank and MFCCs.

use std::f64::consts::PI;

use crate::error::{Error, Result};

pub const MFCC_COUNT: usize = 13;
pub const DEFAULT_N_MELS: usize = 40;

/// Floor added to mel energies before the log.
pub const LOG_FLOOR: f64 = 1e-10;

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular filters over the `frame_size / 2 + 1` STFT bins.
#[derive(Debug, Clone)]
pub struct MelFilterbank {
    weights: Vec<Vec<f64>>,
    // first bin and one-past-last bin with nonzero weight, per filter
    support: Vec<(usize, usize)>,
}

impl MelFilterbank {
    pub fn n_mels(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    /// Filter energies of a power spectrum.
    pub fn apply(&self, power: &[f64], out: &mut [f64]) {
        for ((row, &(lo, hi)), o) in self.weights.iter().zip(&self.support).zip(out.iter_mut()) {
            *o = row[lo..hi].iter().zip(&power[lo..hi]).map(|(w, p)| w * p).sum();
        }
    }
}

/// `n_mels` triangles with centers evenly spaced in HTK mel between 0 Hz and
/// Nyquist, each scaled so its largest weight is exactly 1.
pub fn mel_filterbank(n_mels: usize, frame_size: usize, sample_rate: u32) -> Result<MelFilterbank> {
    if n_mels < MFCC_COUNT {
        return Err(Error::invalid(format!(
            "need at least {MFCC_COUNT} mel bands, got {n_mels}"
        )));
    }
    if frame_size < 2 || sample_rate == 0 {
        return Err(Error::invalid("frame size and sample rate must be positive"));
    }
    let n_bins = frame_size / 2 + 1;
    let sr = f64::from(sample_rate);
    let bin_hz = sr / frame_size as f64;
    let mel_max = hz_to_mel(sr / 2.0);
    let edges: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(mel_max * i as f64 / (n_mels + 1) as f64))
        .collect();

    let mut weights = Vec::with_capacity(n_mels);
    let mut support = Vec::with_capacity(n_mels);
    for m in 0..n_mels {
        let (left, center, right) = (edges[m], edges[m + 1], edges[m + 2]);
        if right - left < bin_hz {
            return Err(Error::invalid(format!(
                "{n_mels} mel bands too many for a {frame_size}-point frame: band {m} spans {:.2} Hz < one bin ({bin_hz:.2} Hz)",
                right - left
            )));
        }
        let mut row: Vec<f64> = (0..n_bins)
            .map(|k| {
                let f = k as f64 * bin_hz;
                let up = (f - left) / (center - left);
                let down = (right - f) / (right - center);
                up.min(down).max(0.0)
            })
            .collect();
        let peak = row.iter().cloned().fold(0.0, f64::max);
        if peak <= 0.0 {
            return Err(Error::invalid(format!(
                "mel band {m} covers no STFT bin at frame size {frame_size}"
            )));
        }
        row.iter_mut().for_each(|w| *w /= peak);
        let lo = row.iter().position(|&w| w > 0.0).unwrap_or(0);
        let hi = row.iter().rposition(|&w| w > 0.0).map_or(0, |i| i + 1);
        weights.push(row);
        support.push((lo, hi));
    }
    Ok(MelFilterbank { weights, support })
}

/// Precomputed orthonormal DCT-II, truncated to the first `n_out` outputs.
#[derive(Debug, Clone)]
pub struct Dct {
    basis: Vec<Vec<f64>>,
}

impl Dct {
    pub fn new(n_in: usize, n_out: usize) -> Self {
        let n = n_in as f64;
        let basis = (0..n_out)
            .map(|k| {
                let scale = if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
                (0..n_in)
                    .map(|i| scale * (PI * k as f64 * (2.0 * i as f64 + 1.0) / (2.0 * n)).cos())
                    .collect()
            })
            .collect();
        Self { basis }
    }

    pub fn apply(&self, input: &[f64], out: &mut [f64]) {
        for (row, o) in self.basis.iter().zip(out.iter_mut()) {
            *o = row.iter().zip(input).map(|(b, x)| b * x).sum();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mel_scale_points() {
        assert_eq!(hz_to_mel(0.0), 0.0);
        assert!((hz_to_mel(700.0) - 2595.0 * 2f64.log10()).abs() < 1e-12);
        assert!((hz_to_mel(700.0) - 781.17).abs() < 0.01);
        for hz in [10.0, 440.0, 8000.0] {
            assert!((mel_to_hz(hz_to_mel(hz)) - hz).abs() < 1e-9);
        }
    }

    #[test]
    fn triangles_have_unit_single_peak() {
        let fb = mel_filterbank(40, 2048, 44_100).unwrap();
        assert_eq!(fb.n_mels(), 40);
        for row in fb.weights() {
            assert_eq!(row.len(), 1025);
            assert!(row.iter().all(|&w| (0.0..=1.0).contains(&w)));
            let peaks = row.iter().filter(|&&w| w == 1.0).count();
            assert_eq!(peaks, 1);
            // unimodal: rises then falls
            let top = row.iter().position(|&w| w == 1.0).unwrap();
            assert!(row[..=top].windows(2).all(|p| p[1] >= p[0]));
            assert!(row[top..].windows(2).all(|p| p[1] <= p[0]));
        }
    }

    #[test]
    fn filterbank_limits() {
        assert!(mel_filterbank(12, 2048, 44_100).is_err());
        assert!(mel_filterbank(512, 2048, 44_100).is_err());
        assert!(mel_filterbank(128, 2048, 44_100).is_ok());
    }

    #[test]
    fn dct_of_constant_has_only_dc() {
        let dct = Dct::new(40, MFCC_COUNT);
        let mut out = [0.0; MFCC_COUNT];
        dct.apply(&[-3.0; 40], &mut out);
        assert!((out[0] + 3.0 * 40f64.sqrt()).abs() < 1e-12);
        assert!(out[1..].iter().all(|c| c.abs() < 1e-12));
    }

    #[test]
    fn dct_is_orthonormal() {
        let full = Dct::new(16, 16);
        for i in 0..16 {
            for j in 0..16 {
                let dot: f64 = full.basis[i].iter().zip(&full.basis[j]).map(|(a, b)| a * b).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((dot - want).abs() < 1e-12);
            }
        }
    }
}

//! File-level timbral features: means over Hann-windowed STFT frames of
//! spectral centroid, bandwidth and rolloff, MFCCs 0-12, and frame RMS.

mod mel;
mod spectral;

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::audio::AudioBuffer;
use crate::error::{Error, Result};

pub use mel::{hz_to_mel, mel_filterbank, mel_to_hz, Dct, MelFilterbank, DEFAULT_N_MELS, LOG_FLOOR, MFCC_COUNT};
pub use spectral::{spectral_bandwidth, spectral_centroid, spectral_rolloff, DEFAULT_ROLLOFF};

pub const FEATURE_DIM: usize = 3 + MFCC_COUNT + 1;

/// Column order of [`FeatureVector::to_array`].
pub const FEATURE_NAMES: [&str; FEATURE_DIM] = [
    "spectral_centroid",
    "spectral_bandwidth",
    "spectral_rolloff",
    "mfcc_0",
    "mfcc_1",
    "mfcc_2",
    "mfcc_3",
    "mfcc_4",
    "mfcc_5",
    "mfcc_6",
    "mfcc_7",
    "mfcc_8",
    "mfcc_9",
    "mfcc_10",
    "mfcc_11",
    "mfcc_12",
    "rms",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    Hann,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StftConfig {
    pub frame_size: usize,
    pub hop_size: usize,
    pub window: Window,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self {
            frame_size: 2048,
            hop_size: 512,
            window: Window::Hann,
        }
    }
}

impl StftConfig {
    pub fn new(frame_size: usize, hop_size: usize) -> Result<Self> {
        let cfg = Self {
            frame_size,
            hop_size,
            window: Window::Hann,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.frame_size.is_power_of_two() || self.frame_size < 2 {
            return Err(Error::invalid(format!(
                "frame size {} is not a power of two",
                self.frame_size
            )));
        }
        if self.hop_size == 0 || self.hop_size > self.frame_size {
            return Err(Error::invalid(format!(
                "hop size {} must be in 1..={}",
                self.hop_size, self.frame_size
            )));
        }
        Ok(())
    }

    pub fn n_bins(&self) -> usize {
        self.frame_size / 2 + 1
    }

    /// Full frames only; no padding past the last one.
    pub fn frame_count(&self, len: usize) -> usize {
        if len < self.frame_size {
            0
        } else {
            1 + (len - self.frame_size) / self.hop_size
        }
    }

    pub fn bin_freqs(&self, sample_rate: u32) -> Vec<f64> {
        let step = f64::from(sample_rate) / self.frame_size as f64;
        (0..self.n_bins()).map(|k| k as f64 * step).collect()
    }

    fn check_len(&self, buffer: &AudioBuffer) -> Result<()> {
        self.validate()?;
        if buffer.len() < self.frame_size {
            return Err(Error::TooShort {
                len: buffer.len(),
                frame_size: self.frame_size,
            });
        }
        Ok(())
    }
}

/// Periodic Hann window.
pub fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

/// The 17 file-level features.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub centroid_hz: f64,
    pub bandwidth_hz: f64,
    pub rolloff_hz: f64,
    pub mfcc_mean: [f64; MFCC_COUNT],
    pub rms: f64,
}

impl FeatureVector {
    /// `[centroid, bandwidth, rolloff, mfcc0..mfcc12, rms]`
    pub fn to_array(&self) -> [f64; FEATURE_DIM] {
        let mut out = [0.0; FEATURE_DIM];
        out[0] = self.centroid_hz;
        out[1] = self.bandwidth_hz;
        out[2] = self.rolloff_hz;
        out[3..3 + MFCC_COUNT].copy_from_slice(&self.mfcc_mean);
        out[FEATURE_DIM - 1] = self.rms;
        out
    }

    pub fn from_array(v: &[f64; FEATURE_DIM]) -> Self {
        let mut mfcc_mean = [0.0; MFCC_COUNT];
        mfcc_mean.copy_from_slice(&v[3..3 + MFCC_COUNT]);
        Self {
            centroid_hz: v[0],
            bandwidth_hz: v[1],
            rolloff_hz: v[2],
            mfcc_mean,
            rms: v[FEATURE_DIM - 1],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

/// Reusable plan for one (STFT config, sample rate, mel count) combination.
///
/// Cheap to share across threads; each call allocates its own scratch.
#[derive(Clone)]
pub struct FeatureExtractor {
    config: StftConfig,
    sample_rate: u32,
    fft: Arc<dyn Fft<f64>>,
    window: Vec<f64>,
    bin_freqs: Vec<f64>,
    filterbank: MelFilterbank,
    dct: Dct,
    rolloff: f64,
}

impl std::fmt::Debug for FeatureExtractor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FeatureExtractor")
            .field("config", &self.config)
            .field("sample_rate", &self.sample_rate)
            .field("n_mels", &self.filterbank.n_mels())
            .finish()
    }
}

impl FeatureExtractor {
    pub fn new(config: StftConfig, sample_rate: u32) -> Result<Self> {
        Self::with_mels(config, sample_rate, DEFAULT_N_MELS)
    }

    pub fn with_mels(config: StftConfig, sample_rate: u32, n_mels: usize) -> Result<Self> {
        config.validate()?;
        let filterbank = mel_filterbank(n_mels, config.frame_size, sample_rate)?;
        Ok(Self {
            config,
            sample_rate,
            fft: FftPlanner::new().plan_fft_forward(config.frame_size),
            window: hann(config.frame_size),
            bin_freqs: config.bin_freqs(sample_rate),
            filterbank,
            dct: Dct::new(n_mels, MFCC_COUNT),
            rolloff: DEFAULT_ROLLOFF,
        })
    }

    pub fn config(&self) -> StftConfig {
        self.config
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn bin_freqs(&self) -> &[f64] {
        &self.bin_freqs
    }

    fn check(&self, buffer: &AudioBuffer) -> Result<()> {
        if buffer.sample_rate() != self.sample_rate {
            return Err(Error::SampleRateMismatch {
                expected: self.sample_rate,
                found: buffer.sample_rate(),
            });
        }
        self.config.check_len(buffer)
    }

    /// Calls `f` with the magnitude spectrum of every frame, in order.
    fn for_each_frame(&self, samples: &[f64], mut f: impl FnMut(&[f64])) {
        let n = self.config.frame_size;
        let mut buf = vec![Complex::new(0.0, 0.0); n];
        let mut scratch = vec![Complex::new(0.0, 0.0); self.fft.get_inplace_scratch_len()];
        let mut mags = vec![0.0; self.config.n_bins()];
        for frame in 0..self.config.frame_count(samples.len()) {
            let start = frame * self.config.hop_size;
            for ((c, &x), &w) in buf.iter_mut().zip(&samples[start..start + n]).zip(&self.window) {
                *c = Complex::new(x * w, 0.0);
            }
            self.fft.process_with_scratch(&mut buf, &mut scratch);
            for (m, c) in mags.iter_mut().zip(&buf) {
                *m = c.norm();
            }
            f(&mags);
        }
    }

    pub fn stft_magnitudes(&self, buffer: &AudioBuffer) -> Result<Vec<Vec<f64>>> {
        self.check(buffer)?;
        let mut frames = Vec::with_capacity(self.config.frame_count(buffer.len()));
        self.for_each_frame(&buffer.to_f64(), |m| frames.push(m.to_vec()));
        Ok(frames)
    }

    fn mfcc_frame(&self, mags: &[f64], power: &mut [f64], mel: &mut [f64], out: &mut [f64; MFCC_COUNT]) {
        for (p, m) in power.iter_mut().zip(mags) {
            *p = m * m;
        }
        self.filterbank.apply(power, mel);
        mel.iter_mut().for_each(|e| *e = (*e + LOG_FLOOR).ln());
        self.dct.apply(mel, out);
    }

    pub fn mfcc_means(&self, buffer: &AudioBuffer) -> Result<[f64; MFCC_COUNT]> {
        self.check(buffer)?;
        let mut power = vec![0.0; self.config.n_bins()];
        let mut mel = vec![0.0; self.filterbank.n_mels()];
        let mut coeffs = [0.0; MFCC_COUNT];
        let mut sum = [0.0; MFCC_COUNT];
        let mut frames = 0usize;
        self.for_each_frame(&buffer.to_f64(), |mags| {
            self.mfcc_frame(mags, &mut power, &mut mel, &mut coeffs);
            sum.iter_mut().zip(&coeffs).for_each(|(s, c)| *s += c);
            frames += 1;
        });
        Ok(sum.map(|s| s / frames as f64))
    }

    pub fn extract(&self, buffer: &AudioBuffer) -> Result<FeatureVector> {
        self.check(buffer)?;
        let samples = buffer.to_f64();
        let mut power = vec![0.0; self.config.n_bins()];
        let mut mel = vec![0.0; self.filterbank.n_mels()];
        let mut coeffs = [0.0; MFCC_COUNT];

        let (mut centroid, mut bandwidth, mut rolloff) = (0.0, 0.0, 0.0);
        let mut mfcc = [0.0; MFCC_COUNT];
        let mut frames = 0usize;
        self.for_each_frame(&samples, |mags| {
            let c = spectral_centroid(mags, &self.bin_freqs);
            centroid += c;
            bandwidth += spectral_bandwidth(mags, &self.bin_freqs, c);
            rolloff += spectral_rolloff(mags, &self.bin_freqs, self.rolloff);
            self.mfcc_frame(mags, &mut power, &mut mel, &mut coeffs);
            mfcc.iter_mut().zip(&coeffs).for_each(|(s, c)| *s += c);
            frames += 1;
        });
        let n = frames as f64;
        Ok(FeatureVector {
            centroid_hz: centroid / n,
            bandwidth_hz: bandwidth / n,
            rolloff_hz: rolloff / n,
            mfcc_mean: mfcc.map(|s| s / n),
            rms: frame_rms_mean(&samples, &self.config),
        })
    }
}

fn frame_rms_mean(samples: &[f64], config: &StftConfig) -> f64 {
    let frames = config.frame_count(samples.len());
    let total: f64 = (0..frames)
        .map(|i| {
            let start = i * config.hop_size;
            let frame = &samples[start..start + config.frame_size];
            (frame.iter().map(|x| x * x).sum::<f64>() / frame.len() as f64).sqrt()
        })
        .sum();
    total / frames as f64
}

pub fn stft_magnitudes(buffer: &AudioBuffer, config: &StftConfig) -> Result<Vec<Vec<f64>>> {
    FeatureExtractor::new(*config, buffer.sample_rate())?.stft_magnitudes(buffer)
}

pub fn mfcc_means(buffer: &AudioBuffer, config: &StftConfig, n_mels: usize) -> Result<[f64; MFCC_COUNT]> {
    FeatureExtractor::with_mels(*config, buffer.sample_rate(), n_mels)?.mfcc_means(buffer)
}

/// Mean over frames of the unwindowed per-frame RMS.
pub fn rms_mean(buffer: &AudioBuffer, config: &StftConfig) -> Result<f64> {
    config.check_len(buffer)?;
    Ok(frame_rms_mean(&buffer.to_f64(), config))
}

pub fn extract_features(buffer: &AudioBuffer, config: &StftConfig) -> Result<FeatureVector> {
    FeatureExtractor::new(*config, buffer.sample_rate())?.extract(buffer)
}

//! Five-band parametric EQ built from audio-EQ-cookbook biquads.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::audio::AudioBuffer;
use crate::error::{Error, Result};

pub const BAND_COUNT: usize = 5;

/// Column names of the five gains, lowest band first.
pub const BAND_NAMES: [&str; BAND_COUNT] = ["eq_80", "eq_240", "eq_2500", "eq_4000", "eq_10000"];

/// Largest |gain| accepted anywhere in the engine.
pub const MAX_GAIN_DB: f64 = 24.0;

pub const BELL_Q: f64 = 1.0;
pub const SHELF_Q: f64 = std::f64::consts::FRAC_1_SQRT_2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterKind {
    LowShelf,
    Bell,
    HighShelf,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EqBandSpec {
    pub center_hz: f64,
    pub filter_kind: FilterKind,
    pub q: f64,
}

impl EqBandSpec {
    pub fn new(center_hz: f64, filter_kind: FilterKind, q: f64) -> Self {
        Self {
            center_hz,
            filter_kind,
            q,
        }
    }
}

/// 80 Hz low shelf, bells at 240/2500/4000 Hz, 10 kHz high shelf.
pub fn standard_bands() -> [EqBandSpec; BAND_COUNT] {
    [
        EqBandSpec::new(80.0, FilterKind::LowShelf, SHELF_Q),
        EqBandSpec::new(240.0, FilterKind::Bell, BELL_Q),
        EqBandSpec::new(2500.0, FilterKind::Bell, BELL_Q),
        EqBandSpec::new(4000.0, FilterKind::Bell, BELL_Q),
        EqBandSpec::new(10_000.0, FilterKind::HighShelf, SHELF_Q),
    ]
}

/// Gains in dB for the five bands: the regression target.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "[f64; BAND_COUNT]", into = "[f64; BAND_COUNT]")]
pub struct EqSetting {
    gains_db: [f64; BAND_COUNT],
}

impl EqSetting {
    pub fn new(gains_db: [f64; BAND_COUNT]) -> Result<Self> {
        if let Some(g) = gains_db.iter().find(|g| !g.is_finite() || g.abs() > MAX_GAIN_DB) {
            return Err(Error::invalid(format!(
                "gain {g} dB outside [-{MAX_GAIN_DB}, {MAX_GAIN_DB}]"
            )));
        }
        Ok(Self { gains_db })
    }

    pub fn from_slice(gains: &[f64]) -> Result<Self> {
        let arr: [f64; BAND_COUNT] = gains
            .try_into()
            .map_err(|_| Error::invalid(format!("expected {BAND_COUNT} gains, got {}", gains.len())))?;
        Self::new(arr)
    }

    pub fn flat() -> Self {
        Self::default()
    }

    pub fn gains_db(&self) -> &[f64; BAND_COUNT] {
        &self.gains_db
    }

    pub fn is_flat(&self) -> bool {
        self.gains_db.iter().all(|&g| g == 0.0)
    }
}

impl TryFrom<[f64; BAND_COUNT]> for EqSetting {
    type Error = Error;

    fn try_from(g: [f64; BAND_COUNT]) -> Result<Self> {
        Self::new(g)
    }
}

impl From<EqSetting> for [f64; BAND_COUNT] {
    fn from(s: EqSetting) -> Self {
        s.gains_db
    }
}

impl fmt::Display for EqSetting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.gains_db.iter().map(|g| g.to_string()).collect();
        write!(f, "({})", parts.join(", "))
    }
}

/// Second-order section with `a0` normalized to 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiquadCoeffs {
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    pub a1: f64,
    pub a2: f64,
}

impl BiquadCoeffs {
    pub const IDENTITY: BiquadCoeffs = BiquadCoeffs {
        b0: 1.0,
        b1: 0.0,
        b2: 0.0,
        a1: 0.0,
        a2: 0.0,
    };

    /// Stability triangle: both poles strictly inside the unit circle.
    pub fn is_stable(&self) -> bool {
        self.a2.abs() < 1.0 && self.a1.abs() < 1.0 + self.a2
    }

    /// |H(e^{jw})| for normalized angular frequency `w` (rad/sample).
    pub fn magnitude(&self, w: f64) -> f64 {
        let (c1, s1) = (w.cos(), w.sin());
        let (c2, s2) = ((2.0 * w).cos(), (2.0 * w).sin());
        let num_re = self.b0 + self.b1 * c1 + self.b2 * c2;
        let num_im = -(self.b1 * s1 + self.b2 * s2);
        let den_re = 1.0 + self.a1 * c1 + self.a2 * c2;
        let den_im = -(self.a1 * s1 + self.a2 * s2);
        ((num_re * num_re + num_im * num_im) / (den_re * den_re + den_im * den_im)).sqrt()
    }

    pub fn magnitude_db(&self, w: f64) -> f64 {
        20.0 * self.magnitude(w).log10()
    }
}

pub fn design_biquad(spec: &EqBandSpec, gain_db: f64, sample_rate: u32) -> Result<BiquadCoeffs> {
    let nyquist = f64::from(sample_rate) / 2.0;
    if !(spec.center_hz > 0.0) || spec.center_hz >= nyquist {
        return Err(Error::AboveNyquist {
            freq_hz: spec.center_hz,
            nyquist_hz: nyquist,
        });
    }
    if !(spec.q > 0.0) || !spec.q.is_finite() {
        return Err(Error::invalid(format!("q must be positive, got {}", spec.q)));
    }
    if !gain_db.is_finite() || gain_db.abs() > MAX_GAIN_DB {
        return Err(Error::invalid(format!("gain {gain_db} dB out of range")));
    }

    let a = 10f64.powf(gain_db / 40.0);
    let w0 = 2.0 * PI * spec.center_hz / f64::from(sample_rate);
    let (cos_w0, sin_w0) = (w0.cos(), w0.sin());
    let alpha = sin_w0 / (2.0 * spec.q);

    let (b0, b1, b2, a0, a1, a2) = match spec.filter_kind {
        FilterKind::Bell => (
            1.0 + alpha * a,
            -2.0 * cos_w0,
            1.0 - alpha * a,
            1.0 + alpha / a,
            -2.0 * cos_w0,
            1.0 - alpha / a,
        ),
        FilterKind::LowShelf => {
            let k = 2.0 * a.sqrt() * alpha;
            (
                a * ((a + 1.0) - (a - 1.0) * cos_w0 + k),
                2.0 * a * ((a - 1.0) - (a + 1.0) * cos_w0),
                a * ((a + 1.0) - (a - 1.0) * cos_w0 - k),
                (a + 1.0) + (a - 1.0) * cos_w0 + k,
                -2.0 * ((a - 1.0) + (a + 1.0) * cos_w0),
                (a + 1.0) + (a - 1.0) * cos_w0 - k,
            )
        }
        FilterKind::HighShelf => {
            let k = 2.0 * a.sqrt() * alpha;
            (
                a * ((a + 1.0) + (a - 1.0) * cos_w0 + k),
                -2.0 * a * ((a - 1.0) + (a + 1.0) * cos_w0),
                a * ((a + 1.0) + (a - 1.0) * cos_w0 - k),
                (a + 1.0) - (a - 1.0) * cos_w0 + k,
                2.0 * ((a - 1.0) - (a + 1.0) * cos_w0),
                (a + 1.0) - (a - 1.0) * cos_w0 - k,
            )
        }
    };

    let coeffs = BiquadCoeffs {
        b0: b0 / a0,
        b1: b1 / a0,
        b2: b2 / a0,
        a1: a1 / a0,
        a2: a2 / a0,
    };
    if !coeffs.is_stable() {
        return Err(Error::invalid(format!("unstable design for {spec:?} at {gain_db} dB")));
    }
    Ok(coeffs)
}

/// Transposed direct form II, zero initial state, in place.
pub(crate) fn filter_in_place(samples: &mut [f64], c: &BiquadCoeffs) {
    let (mut s1, mut s2) = (0.0, 0.0);
    for x in samples.iter_mut() {
        let input = *x;
        let y = c.b0 * input + s1;
        s1 = c.b1 * input - c.a1 * y + s2;
        s2 = c.b2 * input - c.a2 * y;
        *x = y;
    }
}

pub fn apply_biquad(buffer: &AudioBuffer, coeffs: &BiquadCoeffs) -> AudioBuffer {
    let mut samples = buffer.to_f64();
    filter_in_place(&mut samples, coeffs);
    AudioBuffer::from_f64(&samples, buffer.sample_rate()).expect("length and rate unchanged")
}

/// Band indices in ascending center frequency; the cascade order.
fn cascade_order(bands: &[EqBandSpec]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..bands.len()).collect();
    order.sort_by(|&i, &j| bands[i].center_hz.total_cmp(&bands[j].center_hz));
    order
}

/// Serial cascade of the five band filters. Bands at exactly 0 dB are skipped.
/// The cascade runs in `f64`; output is rounded once at the end.
pub fn apply_eq(buffer: &AudioBuffer, setting: &EqSetting, bands: &[EqBandSpec]) -> Result<AudioBuffer> {
    if bands.len() != BAND_COUNT {
        return Err(Error::invalid(format!(
            "expected {BAND_COUNT} bands, got {}",
            bands.len()
        )));
    }
    let mut samples = buffer.to_f64();
    for i in cascade_order(bands) {
        let gain = setting.gains_db[i];
        if gain == 0.0 {
            continue;
        }
        let coeffs = design_biquad(&bands[i], gain, buffer.sample_rate())?;
        filter_in_place(&mut samples, &coeffs);
    }
    AudioBuffer::from_f64(&samples, buffer.sample_rate())
}

/// Combined magnitude response in dB at each frequency.
pub fn eq_response(setting: &EqSetting, bands: &[EqBandSpec], freqs_hz: &[f64], sample_rate: u32) -> Result<Vec<f64>> {
    if bands.len() != BAND_COUNT {
        return Err(Error::invalid(format!(
            "expected {BAND_COUNT} bands, got {}",
            bands.len()
        )));
    }
    let nyquist = f64::from(sample_rate) / 2.0;
    if let Some(&f) = freqs_hz.iter().find(|&&f| !(0.0..nyquist).contains(&f)) {
        return Err(Error::AboveNyquist {
            freq_hz: f,
            nyquist_hz: nyquist,
        });
    }
    let coeffs: Vec<BiquadCoeffs> = bands
        .iter()
        .zip(setting.gains_db.iter())
        .map(|(b, &g)| design_biquad(b, g, sample_rate))
        .collect::<Result<_>>()?;
    let sr = f64::from(sample_rate);
    Ok(freqs_hz
        .iter()
        .map(|&f| {
            let w = 2.0 * PI * f / sr;
            coeffs.iter().map(|c| c.magnitude_db(w)).sum()
        })
        .collect())
}

/// `points` log-spaced frequencies from `f_min` to `f_max` inclusive.
pub fn log_frequency_grid(f_min: f64, f_max: f64, points: usize) -> Result<Vec<f64>> {
    if !(f_min > 0.0) || !(f_max > f_min) || points < 2 {
        return Err(Error::invalid("log grid needs 0 < f_min < f_max and at least 2 points"));
    }
    let (lo, hi) = (f_min.ln(), f_max.ln());
    Ok((0..points)
        .map(|i| {
            if i == 0 {
                f_min
            } else if i == points - 1 {
                f_max
            } else {
                (lo + (hi - lo) * i as f64 / (points - 1) as f64).exp()
            }
        })
        .collect())
}

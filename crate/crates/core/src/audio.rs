//! Mono audio buffers, WAV I/O and the synthetic note corpus.

use std::f64::consts::PI;
use std::path::Path;

use hound::{SampleFormat, WavSpec, WavWriter};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_SAMPLE_RATE: u32 = 44_100;
pub const DEFAULT_DURATION_S: f64 = 2.0;
pub const DEFAULT_PARTIALS: usize = 20;
pub const DEFAULT_DECAY_RATE: f64 = 1.5;

/// Peak level every synthesized note is normalized to.
pub const SYNTH_PEAK: f64 = 0.9;

/// C0, G0, C1, G1, ..., C7, G7.
pub fn default_pitch_list() -> Vec<String> {
    (0..=7).flat_map(|oct| [format!("C{oct}"), format!("G{oct}")]).collect()
}

/// Mono samples at a fixed rate.
///
/// Samples are stored as `f32` so anything held in a buffer round-trips
/// exactly through a float WAV file; processing happens in `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    samples: Vec<f32>,
    sample_rate: u32,
}

impl AudioBuffer {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::invalid("sample rate must be positive"));
        }
        if samples.is_empty() {
            return Err(Error::invalid("audio buffer is empty"));
        }
        Ok(Self { samples, sample_rate })
    }

    /// Rounds `f64` samples to the storage precision.
    pub fn from_f64(samples: &[f64], sample_rate: u32) -> Result<Self> {
        Self::new(samples.iter().map(|&s| s as f32).collect(), sample_rate)
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.samples.iter().map(|&s| f64::from(s)).collect()
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn nyquist(&self) -> f64 {
        f64::from(self.sample_rate) / 2.0
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate)
    }

    pub fn peak(&self) -> f32 {
        self.samples.iter().fold(0.0f32, |m, s| m.max(s.abs()))
    }
}

fn wav_err(path: &Path, e: impl ToString) -> Error {
    Error::Wav {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

/// Read a PCM16 or float32 WAV, mono or stereo. Stereo is averaged to mono.
pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioBuffer> {
    let path = path.as_ref();
    let mut reader = hound::WavReader::open(path).map_err(|e| match e {
        hound::Error::IoError(io) => Error::io(path, io),
        hound::Error::Unsupported => Error::UnsupportedFormat(format!("{}: unsupported codec", path.display())),
        other => wav_err(path, other),
    })?;
    let spec = reader.spec();
    let channels = usize::from(spec.channels);
    if !(1..=2).contains(&channels) {
        return Err(Error::UnsupportedFormat(format!(
            "{}: {channels} channels (expected 1 or 2)",
            path.display()
        )));
    }

    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => reader
            .samples::<i16>()
            .map(|s| s.map(|v| f64::from(v) / 32768.0))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| wav_err(path, e))?,
        (SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| wav_err(path, e))?,
        (fmt, bits) => {
            return Err(Error::UnsupportedFormat(format!(
                "{}: {fmt:?} {bits}-bit (expected PCM16 or float32)",
                path.display()
            )))
        }
    };
    if interleaved.is_empty() {
        return Err(wav_err(path, "data chunk is empty"));
    }

    let mono: Vec<f32> = interleaved
        .chunks_exact(channels)
        .map(|frame| (frame.iter().sum::<f64>() / channels as f64) as f32)
        .collect();
    AudioBuffer::new(mono, spec.sample_rate)
}

/// Write a mono float32 WAV.
pub fn write_wav(buffer: &AudioBuffer, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let spec = WavSpec {
        channels: 1,
        sample_rate: buffer.sample_rate,
        bits_per_sample: 32,
        sample_format: SampleFormat::Float,
    };
    let mut writer = WavWriter::create(path, spec).map_err(|e| match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => wav_err(path, other),
    })?;
    for &s in &buffer.samples {
        writer.write_sample(s).map_err(|e| wav_err(path, e))?;
    }
    writer.finalize().map_err(|e| wav_err(path, e))
}

/// Parse scientific pitch notation (`C4`, `F#3`, `Bb-1`) into a MIDI note
/// number, with C4 = 60.
pub fn parse_pitch(label: &str) -> Result<i32> {
    let bad = || Error::Pitch(label.to_string());
    let mut chars = label.trim().chars();
    let letter = chars.next().ok_or_else(bad)?;
    let base = match letter.to_ascii_uppercase() {
        'C' => 0,
        'D' => 2,
        'E' => 4,
        'F' => 5,
        'G' => 7,
        'A' => 9,
        'B' => 11,
        _ => return Err(bad()),
    };
    let rest: String = chars.collect();
    let (accidental, octave) = match rest.chars().next() {
        Some('#') => (1, &rest[1..]),
        Some('b') => (-1, &rest[1..]),
        _ => (0, rest.as_str()),
    };
    let octave: i32 = octave.parse().map_err(|_| bad())?;
    if !(-1..=9).contains(&octave) {
        return Err(bad());
    }
    Ok(12 * (octave + 1) + base + accidental)
}

/// Equal-tempered frequency, A4 = 440 Hz.
pub fn midi_to_hz(midi: i32) -> f64 {
    440.0 * 2f64.powf(f64::from(midi - 69) / 12.0)
}

/// Parameters of one additive-synthesis note.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoteSpec {
    pub pitch_name: String,
    pub fundamental_hz: f64,
    pub duration_s: f64,
    pub partial_count: usize,
    pub decay_rate: f64,
}

/// Largest partial count whose top partial lies strictly below Nyquist.
pub fn max_partials(fundamental_hz: f64, sample_rate: u32) -> usize {
    let nyquist = f64::from(sample_rate) / 2.0;
    ((nyquist / fundamental_hz).ceil() as usize).saturating_sub(1)
}

/// How many harmonics a synthesized note gets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartialCount {
    /// [`DEFAULT_PARTIALS`], capped below Nyquist.
    #[default]
    Default,
    /// Every harmonic below Nyquist.
    FullBand,
    Exact(usize),
}

impl std::str::FromStr for PartialCount {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "default" => Ok(PartialCount::Default),
            "full" | "full_band" => Ok(PartialCount::FullBand),
            n => match n.parse::<usize>() {
                Ok(k) if k > 0 => Ok(PartialCount::Exact(k)),
                _ => Err(Error::invalid(format!(
                    "partial count {s:?} is not \"default\", \"full\" or a positive integer"
                ))),
            },
        }
    }
}

impl std::fmt::Display for PartialCount {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PartialCount::Default => f.write_str("default"),
            PartialCount::FullBand => f.write_str("full"),
            PartialCount::Exact(k) => write!(f, "{k}"),
        }
    }
}

impl NoteSpec {
    /// Default timbre for a pitch label. The partial count is capped so that
    /// every partial stays strictly below Nyquist at `sample_rate`.
    pub fn from_pitch(label: &str, sample_rate: u32) -> Result<Self> {
        Self::with_partials(label, sample_rate, PartialCount::Default)
    }

    /// `Exact` counts are not capped; synthesis rejects them if they alias.
    pub fn with_partials(label: &str, sample_rate: u32, partials: PartialCount) -> Result<Self> {
        let fundamental_hz = midi_to_hz(parse_pitch(label)?);
        let fitting = max_partials(fundamental_hz, sample_rate).max(1);
        let partial_count = match partials {
            PartialCount::Default => DEFAULT_PARTIALS.min(fitting),
            PartialCount::FullBand => fitting,
            PartialCount::Exact(k) => k,
        };
        Ok(Self {
            pitch_name: label.trim().to_string(),
            fundamental_hz,
            duration_s: DEFAULT_DURATION_S,
            partial_count,
            decay_rate: DEFAULT_DECAY_RATE,
        })
    }

    fn validate(&self, sample_rate: u32) -> Result<()> {
        if sample_rate == 0 {
            return Err(Error::invalid("sample rate must be positive"));
        }
        if !(self.fundamental_hz > 0.0) || !(self.duration_s > 0.0) || self.partial_count == 0 {
            return Err(Error::invalid(format!(
                "note {}: fundamental, duration and partial count must be positive",
                self.pitch_name
            )));
        }
        if self.decay_rate < 0.0 || !self.decay_rate.is_finite() {
            return Err(Error::invalid("decay rate must be finite and non-negative"));
        }
        let top = self.fundamental_hz * self.partial_count as f64;
        let nyquist = f64::from(sample_rate) / 2.0;
        if top >= nyquist {
            return Err(Error::AboveNyquist {
                freq_hz: top,
                nyquist_hz: nyquist,
            });
        }
        Ok(())
    }
}

/// Harmonic tone with 1/k partial amplitudes under an exponential envelope,
/// peak-normalized to [`SYNTH_PEAK`].
pub fn synthesize_note(spec: &NoteSpec, sample_rate: u32) -> Result<AudioBuffer> {
    spec.validate(sample_rate)?;
    let sr = f64::from(sample_rate);
    let n = (spec.duration_s * sr).round().max(1.0) as usize;
    let samples: Vec<f64> = (0..n)
        .map(|i| {
            let t = i as f64 / sr;
            let env = (-spec.decay_rate * t).exp();
            let tone: f64 = (1..=spec.partial_count)
                .map(|k| {
                    let k = k as f64;
                    (2.0 * PI * k * spec.fundamental_hz * t).sin() / k
                })
                .sum();
            env * tone
        })
        .collect();
    let peak = samples.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    if peak == 0.0 {
        return Err(Error::invalid(format!("note {} rendered silent", spec.pitch_name)));
    }
    let gain = SYNTH_PEAK / peak;
    let scaled: Vec<f64> = samples.iter().map(|s| s * gain).collect();
    AudioBuffer::from_f64(&scaled, sample_rate)
}

/// One synthesized buffer per pitch label, in the given order.
pub fn note_corpus(pitches: &[impl AsRef<str>], sample_rate: u32) -> Result<Vec<(String, AudioBuffer)>> {
    note_corpus_with(pitches, sample_rate, PartialCount::Default)
}

pub fn note_corpus_with(
    pitches: &[impl AsRef<str>],
    sample_rate: u32,
    partials: PartialCount,
) -> Result<Vec<(String, AudioBuffer)>> {
    pitches
        .iter()
        .map(|label| {
            let spec = NoteSpec::with_partials(label.as_ref(), sample_rate, partials)?;
            Ok((spec.pitch_name.clone(), synthesize_note(&spec, sample_rate)?))
        })
        .collect()
}

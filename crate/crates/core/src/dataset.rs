//! Labeled datasets: gain grids, setting enumeration, EQ + feature
//! extraction over a note corpus, splits, and the manifest file format.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::audio::{write_wav, AudioBuffer};
use crate::eq::{apply_eq, EqBandSpec, EqSetting, BAND_COUNT, BAND_NAMES};
use crate::error::{Error, Result};
use crate::features::{FeatureExtractor, FeatureVector, StftConfig, FEATURE_DIM, FEATURE_NAMES};
use crate::par::Exec;
use crate::rng::SplitMix64;

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;
pub const GRID_LIMIT_DB: f64 = 12.0;

/// Strictly ascending gain values within ±12 dB.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainGrid {
    values_db: Vec<f64>,
}

impl GainGrid {
    pub fn new(values_db: Vec<f64>) -> Result<Self> {
        if values_db.is_empty() {
            return Err(Error::invalid("gain grid is empty"));
        }
        if values_db.iter().any(|v| !v.is_finite() || v.abs() > GRID_LIMIT_DB) {
            return Err(Error::invalid(format!(
                "gain grid values must lie in [-{GRID_LIMIT_DB}, {GRID_LIMIT_DB}] dB"
            )));
        }
        if values_db.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("gain grid must be strictly ascending"));
        }
        Ok(Self { values_db })
    }

    /// -12..=12 dB in steps of `step_db`. The step must divide 12.
    pub fn with_step(step_db: u32) -> Result<Self> {
        if step_db == 0 || 12 % step_db != 0 {
            return Err(Error::invalid(format!("grid step {step_db} dB must divide 12")));
        }
        let step = step_db as i32;
        Self::new((-12..=12).step_by(step as usize).map(f64::from).collect())
    }

    /// 25 values, 1 dB apart.
    pub fn fine() -> Self {
        Self::with_step(1).expect("valid")
    }

    /// {-12, -8, -4, 0, 4, 8, 12}
    pub fn coarse() -> Self {
        Self::with_step(4).expect("valid")
    }

    pub fn values(&self) -> &[f64] {
        &self.values_db
    }

    pub fn len(&self) -> usize {
        self.values_db.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values_db.is_empty()
    }

    pub fn contains(&self, gain_db: f64) -> bool {
        self.values_db.iter().any(|&v| (v - gain_db).abs() < 1e-9)
    }
}

/// Each band alone at each grid gain, others flat. Band-major, then ascending
/// gain. The flat setting repeats once per band when 0 is on the grid.
pub fn single_band_settings(grid: &GainGrid) -> Vec<EqSetting> {
    (0..BAND_COUNT)
        .flat_map(|band| {
            grid.values().iter().map(move |&g| {
                let mut gains = [0.0; BAND_COUNT];
                gains[band] = g;
                EqSetting::new(gains).expect("grid values are in range")
            })
        })
        .collect()
}

/// Cartesian product grid^5, lexicographic with band 0 varying slowest.
pub fn multi_band_settings(grid: &GainGrid) -> Vec<EqSetting> {
    let k = grid.len();
    let total = k.pow(BAND_COUNT as u32);
    (0..total)
        .map(|mut idx| {
            let mut gains = [0.0; BAND_COUNT];
            for slot in gains.iter_mut().rev() {
                *slot = grid.values()[idx % k];
                idx /= k;
            }
            EqSetting::new(gains).expect("grid values are in range")
        })
        .collect()
}

/// One (input, target) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSample {
    pub sample_id: String,
    pub base_label: String,
    pub setting: EqSetting,
    pub features: FeatureVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub schema_version: u32,
    pub sample_rate: u32,
    pub stft: StftConfig,
    pub bands: [EqBandSpec; BAND_COUNT],
    pub split_seed: u64,
    pub samples: Vec<DatasetSample>,
}

impl DatasetManifest {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn features(&self, indices: &[usize]) -> Vec<[f64; FEATURE_DIM]> {
        indices.iter().map(|&i| self.samples[i].features.to_array()).collect()
    }

    pub fn targets(&self, indices: &[usize]) -> Vec<[f64; BAND_COUNT]> {
        indices.iter().map(|&i| *self.samples[i].setting.gains_db()).collect()
    }

    pub fn sample_ids(&self, indices: &[usize]) -> Vec<String> {
        indices.iter().map(|&i| self.samples[i].sample_id.clone()).collect()
    }

    pub fn all_indices(&self) -> Vec<usize> {
        (0..self.samples.len()).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != MANIFEST_SCHEMA_VERSION {
            return Err(Error::SchemaVersion {
                found: u64::from(self.schema_version),
                expected: u64::from(MANIFEST_SCHEMA_VERSION),
            });
        }
        self.stft.validate()?;
        let mut ids: Vec<&str> = self.samples.iter().map(|s| s.sample_id.as_str()).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Dataset(format!("duplicate sample id {}", w[0])));
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_string_pretty(self)?;
        fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let value: serde_json::Value = serde_json::from_str(&text)?;
        let version = value.get("schema_version").and_then(|v| v.as_u64());
        if version != Some(u64::from(MANIFEST_SCHEMA_VERSION)) {
            return Err(Error::SchemaVersion {
                found: version.unwrap_or(0),
                expected: u64::from(MANIFEST_SCHEMA_VERSION),
            });
        }
        let manifest: Self = serde_json::from_value(value)?;
        manifest.validate()?;
        Ok(manifest)
    }

    /// Flat CSV: id, label, five gains, seventeen features.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["sample_id", "base_label"];
        header.extend(BAND_NAMES);
        header.extend(FEATURE_NAMES);
        w.write_record(&header)?;
        for s in &self.samples {
            let mut row = vec![s.sample_id.clone(), s.base_label.clone()];
            row.extend(s.setting.gains_db().iter().map(|g| g.to_string()));
            row.extend(s.features.to_array().iter().map(|v| v.to_string()));
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, Default)]
pub struct BuildOptions {
    /// Uniform random subset of (note, setting) pairs.
    pub limit: Option<usize>,
    pub seed: u64,
    /// Write each processed buffer as `<dir>/<sample_id>.wav`.
    pub keep_audio: Option<PathBuf>,
    pub exec: Exec,
}

/// Apply every setting to every corpus note and extract features.
pub fn build_dataset(
    corpus: &[(String, AudioBuffer)],
    settings: &[EqSetting],
    bands: &[EqBandSpec; BAND_COUNT],
    stft: &StftConfig,
    limit: Option<usize>,
    seed: u64,
) -> Result<DatasetManifest> {
    let opts = BuildOptions {
        limit,
        seed,
        ..BuildOptions::default()
    };
    build_dataset_with(corpus, settings, bands, stft, &opts)
}

pub fn build_dataset_with(
    corpus: &[(String, AudioBuffer)],
    settings: &[EqSetting],
    bands: &[EqBandSpec; BAND_COUNT],
    stft: &StftConfig,
    opts: &BuildOptions,
) -> Result<DatasetManifest> {
    let sample_rate = corpus
        .first()
        .ok_or_else(|| Error::Dataset("corpus is empty".into()))?
        .1
        .sample_rate();
    if let Some((label, buf)) = corpus.iter().find(|(_, b)| b.sample_rate() != sample_rate) {
        return Err(Error::Dataset(format!(
            "note {label} is at {} Hz, corpus is at {sample_rate} Hz",
            buf.sample_rate()
        )));
    }
    if settings.is_empty() {
        return Err(Error::Dataset("no EQ settings to apply".into()));
    }
    let pairs = select_pairs(corpus.len(), settings.len(), opts.limit, opts.seed)?;

    let extractor = FeatureExtractor::new(*stft, sample_rate)?;
    let width = settings.len().to_string().len().max(5);
    if let Some(dir) = &opts.keep_audio {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let samples = opts.exec.try_map(&pairs, |&(note, setting_idx)| {
        let (label, buffer) = &corpus[note];
        let setting = settings[setting_idx];
        let processed = apply_eq(buffer, &setting, bands)?;
        let sample_id = format!("{label}-{setting_idx:0width$}");
        if let Some(dir) = &opts.keep_audio {
            write_wav(&processed, dir.join(format!("{sample_id}.wav")))?;
        }
        Ok(DatasetSample {
            features: extractor.extract(&processed)?,
            sample_id,
            base_label: label.clone(),
            setting,
        })
    })?;

    let manifest = DatasetManifest {
        schema_version: MANIFEST_SCHEMA_VERSION,
        sample_rate,
        stft: *stft,
        bands: *bands,
        split_seed: opts.seed,
        samples,
    };
    manifest.validate()?;
    Ok(manifest)
}

/// (note index, setting index) pairs in note-major enumeration order,
/// optionally subsampled without replacement.
fn select_pairs(notes: usize, settings: usize, limit: Option<usize>, seed: u64) -> Result<Vec<(usize, usize)>> {
    let total = notes * settings;
    let chosen: Vec<usize> = match limit {
        None => (0..total).collect(),
        Some(0) => return Err(Error::Dataset("limit 0 yields an empty dataset".into())),
        Some(n) if n > total => {
            return Err(Error::Dataset(format!(
                "limit {n} exceeds the {total} available (note, setting) pairs"
            )))
        }
        Some(n) => {
            let mut idx: Vec<usize> = (0..total).collect();
            let mut rng = SplitMix64::new(seed);
            // partial Fisher-Yates: the first n slots are a uniform subset
            for i in 0..n {
                let j = i + rng.below(total - i);
                idx.swap(i, j);
            }
            idx.truncate(n);
            idx.sort_unstable();
            idx
        }
    };
    Ok(chosen.into_iter().map(|p| (p / settings, p % settings)).collect())
}

/// Seeded shuffle; the first `floor(n * train_fraction)` go to train.
pub fn split(manifest: &DatasetManifest, train_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    split_indices(manifest.len(), train_fraction, seed)
}

pub fn split_indices(n: usize, train_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::invalid(format!(
            "train fraction {train_fraction} must be in (0, 1)"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    SplitMix64::new(seed).shuffle(&mut idx);
    let n_train = (n as f64 * train_fraction).floor() as usize;
    if n_train == 0 || n_train == n {
        return Err(Error::Dataset(format!(
            "split of {n} samples at {train_fraction} leaves one side empty"
        )));
    }
    let test = idx.split_off(n_train);
    Ok((idx, test))
}

/// Train on samples whose active gain lies on `coarse_grid`, validate on
/// the rest. Flat settings go to train.
pub fn interpolation_split(manifest: &DatasetManifest, coarse_grid: &GainGrid) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut train = Vec::new();
    let mut validation = Vec::new();
    for (i, s) in manifest.samples.iter().enumerate() {
        let active: Vec<f64> = s.setting.gains_db().iter().copied().filter(|&g| g != 0.0).collect();
        match active.as_slice() {
            [] => train.push(i),
            [g] if coarse_grid.contains(*g) => train.push(i),
            [_] => validation.push(i),
            _ => {
                return Err(Error::Dataset(format!(
                    "sample {} has more than one active band; interpolation split needs a single-band sweep",
                    s.sample_id
                )))
            }
        }
    }
    if validation.is_empty() {
        return Err(Error::Dataset("interpolation split has an empty validation set".into()));
    }
    Ok((train, validation))
}

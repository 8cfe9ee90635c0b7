//! Metrics, scatter export and the four experiments.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::audio::{note_corpus_with, AudioBuffer, PartialCount};
use crate::dataset::{
    build_dataset_with, interpolation_split, multi_band_settings, single_band_settings, split, BuildOptions,
    DatasetManifest, GainGrid,
};
use crate::eq::{standard_bands, EqBandSpec, BAND_COUNT, BAND_NAMES};
use crate::error::{Error, Result};
use crate::features::StftConfig;
use crate::models::{
    train_forest_with, train_linear, train_mlp, ForestConfig, Model, ModelKind, TargetRow, TrainConfig,
};
use crate::par::Exec;

pub const SINGLE_BAND_FINE: &str = "single_band_fine";
pub const SINGLE_BAND_COARSE: &str = "single_band_coarse";
pub const INTERPOLATION: &str = "interpolation";
pub const MULTI_BAND: &str = "multi_band";

pub const TRAIN_FRACTION: f64 = 0.8;
pub const MIN_MULTI_BAND_LIMIT: usize = 500;
pub const DEFAULT_MULTI_BAND_LIMIT: usize = 3000;

/// Note used for the single-note reproduction runs. It is rendered with
/// every harmonic below Nyquist so that all five bands reach the features.
pub const REFERENCE_NOTE: &str = "C3";

pub const FINE_MSE_BOUND: f64 = 0.5;
pub const MLP_MSE_BOUND: f64 = 1.0;

/// Squared errors averaged per band and overall, in dB².
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MseBreakdown {
    pub overall: f64,
    pub per_band: [f64; BAND_COUNT],
}

/// Mean squared error over all (sample, band) pairs. `overall` is the mean
/// of the per-band values, which is the same quantity when every band has
/// the same sample count.
pub fn mse(predictions: &[TargetRow], targets: &[TargetRow]) -> Result<MseBreakdown> {
    if predictions.len() != targets.len() {
        return Err(Error::Shape(format!(
            "{} predictions vs {} targets",
            predictions.len(),
            targets.len()
        )));
    }
    if predictions.is_empty() {
        return Err(Error::invalid("cannot score an empty prediction set"));
    }
    let mut per_band = [0.0; BAND_COUNT];
    for (p, t) in predictions.iter().zip(targets) {
        for b in 0..BAND_COUNT {
            per_band[b] += (p[b] - t[b]).powi(2);
        }
    }
    let n = predictions.len() as f64;
    per_band.iter_mut().for_each(|v| *v /= n);
    let overall = per_band.iter().sum::<f64>() / BAND_COUNT as f64;
    Ok(MseBreakdown { overall, per_band })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub experiment_id: String,
    pub model_kind: ModelKind,
    pub overall_mse: f64,
    pub per_band_mse: [f64; BAND_COUNT],
    pub n_samples: usize,
    pub seed: u64,
    pub config_digest: String,
}

impl EvalReport {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Per-sample true and predicted gains on the evaluated set.
#[derive(Debug, Clone, PartialEq)]
pub struct Scatter {
    pub sample_ids: Vec<String>,
    pub targets: Vec<TargetRow>,
    pub predictions: Vec<TargetRow>,
}

impl Scatter {
    pub fn len(&self) -> usize {
        self.sample_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sample_ids.is_empty()
    }

    pub fn mse(&self) -> Result<MseBreakdown> {
        mse(&self.predictions, &self.targets)
    }

    /// One row per (sample, band): `sample_id,band_name,true_db,predicted_db`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        if self.targets.len() != self.len() || self.predictions.len() != self.len() {
            return Err(Error::Shape("scatter columns differ in length".into()));
        }
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["sample_id", "band_name", "true_db", "predicted_db"])?;
        for ((id, t), p) in self.sample_ids.iter().zip(&self.targets).zip(&self.predictions) {
            for b in 0..BAND_COUNT {
                w.write_record([id.as_str(), BAND_NAMES[b], &t[b].to_string(), &p[b].to_string()])?;
            }
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            sample_id: String,
            band_name: String,
            true_db: f64,
            predicted_db: f64,
        }
        let mut out = Scatter {
            sample_ids: Vec::new(),
            targets: Vec::new(),
            predictions: Vec::new(),
        };
        let mut rdr = csv::Reader::from_path(path.as_ref())?;
        let mut rows = 0;
        for (i, row) in rdr.deserialize::<Row>().enumerate() {
            let row = row?;
            rows += 1;
            let band = i % BAND_COUNT;
            if row.band_name != BAND_NAMES[band] {
                return Err(Error::Shape(format!(
                    "scatter row {} has band {:?}, expected {:?}",
                    i + 1,
                    row.band_name,
                    BAND_NAMES[band]
                )));
            }
            if band == 0 {
                out.sample_ids.push(row.sample_id);
                out.targets.push([0.0; BAND_COUNT]);
                out.predictions.push([0.0; BAND_COUNT]);
            } else if out.sample_ids.last() != Some(&row.sample_id) {
                return Err(Error::Shape(format!("scatter row {} breaks sample grouping", i + 1)));
            }
            let last = out.sample_ids.len() - 1;
            out.targets[last][band] = row.true_db;
            out.predictions[last][band] = row.predicted_db;
        }
        if rows == 0 || rows % BAND_COUNT != 0 {
            return Err(Error::Shape(format!(
                "scatter file has {rows} rows, expected a positive multiple of {BAND_COUNT}"
            )));
        }
        Ok(out)
    }
}

/// Report plus the scatter data it was computed from.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub report: EvalReport,
    pub scatter: Scatter,
}

impl ExperimentResult {
    /// Writes `<stem>.json` and `<stem>_scatter.csv` into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<(PathBuf, PathBuf)> {
        let dir = dir.as_ref();
        let stem = format!("{}_{}", self.report.experiment_id, self.report.model_kind);
        let json = dir.join(format!("{stem}.json"));
        let csv = dir.join(format!("{stem}_scatter.csv"));
        self.report.save(&json)?;
        self.scatter.write_csv(&csv)?;
        Ok((json, csv))
    }
}

/// Rebuild a report's MSE fields from its scatter file.
pub fn report_from_scatter(path: impl AsRef<Path>, template: &EvalReport) -> Result<EvalReport> {
    let scatter = Scatter::read_csv(path)?;
    let m = scatter.mse()?;
    Ok(EvalReport {
        overall_mse: m.overall,
        per_band_mse: m.per_band,
        n_samples: scatter.len(),
        ..template.clone()
    })
}

/// Hex SHA-256 of a JSON value's compact serialization.
pub fn config_digest(config: &serde_json::Value) -> String {
    let hash = Sha256::digest(config.to_string().as_bytes());
    hash.iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Evaluate `model` on `indices` of `manifest`.
pub fn evaluate(
    model: &Model,
    manifest: &DatasetManifest,
    indices: &[usize],
    experiment_id: &str,
    seed: u64,
    config_digest: &str,
    exec: Exec,
) -> Result<ExperimentResult> {
    let predictions = model.predict_batch(&manifest.features(indices), exec)?;
    let targets = manifest.targets(indices);
    let m = mse(&predictions, &targets)?;
    Ok(ExperimentResult {
        report: EvalReport {
            experiment_id: experiment_id.to_string(),
            model_kind: model.kind(),
            overall_mse: m.overall,
            per_band_mse: m.per_band,
            n_samples: indices.len(),
            seed,
            config_digest: config_digest.to_string(),
        },
        scatter: Scatter {
            sample_ids: manifest.sample_ids(indices),
            targets,
            predictions,
        },
    })
}

/// Shared inputs of every experiment.
#[derive(Debug, Clone)]
pub struct ExperimentContext {
    pub corpus: Vec<(String, AudioBuffer)>,
    pub stft: StftConfig,
    pub bands: [EqBandSpec; BAND_COUNT],
    pub exec: Exec,
}

impl ExperimentContext {
    pub fn new(corpus: Vec<(String, AudioBuffer)>, stft: StftConfig, exec: Exec) -> Result<Self> {
        stft.validate()?;
        if corpus.is_empty() {
            return Err(Error::Dataset("corpus is empty".into()));
        }
        Ok(Self {
            corpus,
            stft,
            bands: standard_bands(),
            exec,
        })
    }

    pub fn sample_rate(&self) -> u32 {
        self.corpus[0].1.sample_rate()
    }

    fn build(&self, grid: &GainGrid, multi: bool, limit: Option<usize>, seed: u64) -> Result<DatasetManifest> {
        let settings = if multi {
            multi_band_settings(grid)
        } else {
            single_band_settings(grid)
        };
        let opts = BuildOptions {
            limit,
            seed,
            keep_audio: None,
            exec: self.exec,
        };
        build_dataset_with(&self.corpus, &settings, &self.bands, &self.stft, &opts)
    }

    fn digest(&self, experiment_id: &str, grid: &GainGrid, extra: serde_json::Value, seed: u64) -> String {
        let labels: Vec<&str> = self.corpus.iter().map(|(l, _)| l.as_str()).collect();
        config_digest(&json!({
            "experiment_id": experiment_id,
            "corpus": labels,
            "sample_rate": self.sample_rate(),
            "stft": self.stft,
            "bands": self.bands,
            "grid": grid.values(),
            "train_fraction": TRAIN_FRACTION,
            "seed": seed,
            "extra": extra,
        }))
    }

    fn single_band(&self, id: &str, grid: &GainGrid, seed: u64) -> Result<ExperimentResult> {
        let manifest = self.build(grid, false, None, seed)?;
        let (train, test) = split(&manifest, TRAIN_FRACTION, seed)?;
        let model = Model::Linear(train_linear(&manifest.features(&train), &manifest.targets(&train))?);
        let digest = self.digest(id, grid, json!({"model": "linear"}), seed);
        evaluate(&model, &manifest, &test, id, seed, &digest, self.exec)
    }

    /// 1 dB single-band sweep, 80/20 split, linear regression.
    pub fn single_band_fine(&self, seed: u64) -> Result<ExperimentResult> {
        self.single_band(SINGLE_BAND_FINE, &GainGrid::fine(), seed)
    }

    /// Same as the fine sweep on the 4 dB grid.
    pub fn single_band_coarse(&self, seed: u64) -> Result<ExperimentResult> {
        self.single_band(SINGLE_BAND_COARSE, &GainGrid::coarse(), seed)
    }

    /// Train on the 4 dB grid points of the 1 dB sweep, score on the gains
    /// in between.
    pub fn interpolation(&self, seed: u64) -> Result<ExperimentResult> {
        let fine = GainGrid::fine();
        let coarse = GainGrid::coarse();
        let manifest = self.build(&fine, false, None, seed)?;
        let (train, validation) = interpolation_split(&manifest, &coarse)?;
        let model = Model::Linear(train_linear(&manifest.features(&train), &manifest.targets(&train))?);
        let digest = self.digest(
            INTERPOLATION,
            &fine,
            json!({"model": "linear", "train_grid": coarse.values()}),
            seed,
        );
        evaluate(&model, &manifest, &validation, INTERPOLATION, seed, &digest, self.exec)
    }

    /// Cartesian 4 dB grid over all bands, subsampled to `limit` (None for
    /// all 16807 per note). Linear, forest and MLP share one split.
    pub fn multi_band(&self, limit: Option<usize>, seed: u64) -> Result<Vec<ExperimentResult>> {
        if let Some(l) = limit {
            if l < MIN_MULTI_BAND_LIMIT {
                return Err(Error::invalid(format!(
                    "multi-band limit must be at least {MIN_MULTI_BAND_LIMIT}, got {l}"
                )));
            }
        }
        let grid = GainGrid::coarse();
        let manifest = self.build(&grid, true, limit, seed)?;
        let (train, test) = split(&manifest, TRAIN_FRACTION, seed)?;
        let x = manifest.features(&train);
        let y = manifest.targets(&train);

        let forest_cfg = ForestConfig {
            seed,
            ..ForestConfig::default()
        };
        let mlp_cfg = TrainConfig {
            seed,
            ..TrainConfig::default()
        };
        let digest = self.digest(
            MULTI_BAND,
            &grid,
            json!({"limit": limit, "forest": forest_cfg, "mlp": mlp_cfg}),
            seed,
        );
        let models = [
            Model::Linear(train_linear(&x, &y)?),
            Model::Forest(train_forest_with(&x, &y, &forest_cfg, self.exec)?),
            Model::Mlp(train_mlp(&x, &y, &mlp_cfg)?),
        ];
        models
            .iter()
            .map(|m| evaluate(m, &manifest, &test, MULTI_BAND, seed, &digest, self.exec))
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct ReproduceOptions {
    pub pitches: Vec<String>,
    pub partials: PartialCount,
    pub sample_rate: u32,
    pub stft: StftConfig,
    pub seed: u64,
    /// None runs the full multi-band enumeration.
    pub multi_band_limit: Option<usize>,
    pub exec: Exec,
}

impl Default for ReproduceOptions {
    fn default() -> Self {
        Self {
            pitches: vec![REFERENCE_NOTE.to_string()],
            partials: PartialCount::FullBand,
            sample_rate: crate::audio::DEFAULT_SAMPLE_RATE,
            stft: StftConfig::default(),
            seed: 42,
            multi_band_limit: Some(DEFAULT_MULTI_BAND_LIMIT),
            exec: Exec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReproduceSummary {
    pub results: Vec<ExperimentResult>,
    pub checks: Vec<Check>,
}

impl ReproduceSummary {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn find(&self, experiment_id: &str, kind: ModelKind) -> Option<&EvalReport> {
        self.results
            .iter()
            .map(|r| &r.report)
            .find(|r| r.experiment_id == experiment_id && r.model_kind == kind)
    }

    /// Plain-text table of every report followed by the check outcomes.
    pub fn table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<20} {:<8} {:>8} {:>12}",
            "experiment", "model", "n_test", "mse_db2"
        );
        for r in self.results.iter().map(|r| &r.report) {
            let _ = writeln!(
                s,
                "{:<20} {:<8} {:>8} {:>12.6}",
                r.experiment_id,
                r.model_kind.as_str(),
                r.n_samples,
                r.overall_mse
            );
        }
        s.push('\n');
        for c in &self.checks {
            let _ = writeln!(
                s,
                "[{}] {}: {}",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                c.detail
            );
        }
        s
    }
}

fn checks_for(results: &[ExperimentResult]) -> Result<Vec<Check>> {
    let get = |id: &str, kind: ModelKind| {
        results
            .iter()
            .find(|r| r.report.experiment_id == id && r.report.model_kind == kind)
            .map(|r| r.report.overall_mse)
            .ok_or_else(|| Error::invalid(format!("missing {id}/{kind} report")))
    };
    let fine = get(SINGLE_BAND_FINE, ModelKind::Linear)?;
    let coarse = get(SINGLE_BAND_COARSE, ModelKind::Linear)?;
    let interp = get(INTERPOLATION, ModelKind::Linear)?;
    let linear = get(MULTI_BAND, ModelKind::Linear)?;
    let mlp = get(MULTI_BAND, ModelKind::Mlp)?;
    let check = |name: &str, passed: bool, detail: String| Check {
        name: name.to_string(),
        passed,
        detail,
    };
    Ok(vec![
        check(
            "fine sweep held-out mse",
            fine <= FINE_MSE_BOUND,
            format!("{fine:.6} <= {FINE_MSE_BOUND}"),
        ),
        check("coarse vs fine", coarse >= fine, format!("{coarse:.6} >= {fine:.6}")),
        check(
            "interpolation vs coarse",
            interp <= coarse,
            format!("{interp:.6} <= {coarse:.6}"),
        ),
        check("mlp vs linear", mlp < linear, format!("{mlp:.6} < {linear:.6}")),
        check(
            "mlp bound",
            mlp <= MLP_MSE_BOUND,
            format!("{mlp:.6} <= {MLP_MSE_BOUND}"),
        ),
    ])
}

/// Run all four experiments. When `out_dir` is given, every report and
/// scatter file plus `summary.txt` is written there.
pub fn reproduce(opts: &ReproduceOptions, out_dir: Option<&Path>) -> Result<ReproduceSummary> {
    let corpus = note_corpus_with(&opts.pitches, opts.sample_rate, opts.partials)?;
    let ctx = ExperimentContext::new(corpus, opts.stft, opts.exec)?;
    let mut results = vec![
        ctx.single_band_fine(opts.seed)?,
        ctx.single_band_coarse(opts.seed)?,
        ctx.interpolation(opts.seed)?,
    ];
    results.extend(ctx.multi_band(opts.multi_band_limit, opts.seed)?);
    let summary = ReproduceSummary {
        checks: checks_for(&results)?,
        results,
    };
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for r in &summary.results {
            r.write(dir)?;
        }
        let path = dir.join("summary.txt");
        fs::write(&path, summary.table()).map_err(|e| Error::io(&path, e))?;
    }
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mse_examples() {
        let z = [[0.0; BAND_COUNT]];
        assert_eq!(mse(&z, &z).unwrap().overall, 0.0);
        assert_eq!(mse(&[[1.0; BAND_COUNT]], &z).unwrap().overall, 1.0);
        let m = mse(&[[0.0; 5], [2.0, 0.0, 0.0, 0.0, 0.0]], &[[0.0; 5]; 2]).unwrap();
        assert!((m.overall - 0.4).abs() < 1e-15);
        assert_eq!(m.per_band, [2.0, 0.0, 0.0, 0.0, 0.0]);
        assert!(mse(&z, &[]).is_err());
        assert!(mse(&[], &[]).is_err());
    }

    #[test]
    fn digest_is_hex_sha256() {
        let d = config_digest(&json!({"a": 1}));
        assert_eq!(d.len(), 64);
        assert!(d.chars().all(|c| c.is_ascii_hexdigit()));
        assert_ne!(d, config_digest(&json!({"a": 2})));
    }

    #[test]
    fn scatter_round_trip_is_lossless() {
        let mut rng = crate::rng::SplitMix64::new(3);
        let n = 125;
        let scatter = Scatter {
            sample_ids: (0..n).map(|i| format!("C4-{i:05}")).collect(),
            targets: (0..n)
                .map(|_| std::array::from_fn(|_| rng.uniform(-12.0, 12.0).round()))
                .collect(),
            predictions: (0..n)
                .map(|_| std::array::from_fn(|_| rng.uniform(-13.0, 13.0)))
                .collect(),
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        scatter.write_csv(&path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 1 + n * BAND_COUNT);
        let back = Scatter::read_csv(&path).unwrap();
        assert_eq!(back, scatter);
        assert_eq!(back.mse().unwrap(), scatter.mse().unwrap());
    }
}

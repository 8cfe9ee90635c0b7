//! Regressors from the 17 features to the 5 band gains: closed-form linear
//! regression, a bagged multi-output CART forest, and a two-hidden-layer MLP.
//! Targets stay in raw dB and predictions are never clamped.

mod artifact;
mod forest;
mod linear;
mod mlp;

use serde::{Deserialize, Serialize};

use crate::eq::BAND_COUNT;
use crate::error::{Error, Result};
use crate::features::{FeatureVector, FEATURE_DIM};
use crate::par::Exec;

pub use artifact::{FeatureConfig, ModelArtifact, ARTIFACT_SCHEMA_VERSION};
pub use forest::{train_forest, train_forest_with, ForestConfig, ForestModel, Node, RegressionTree};
pub use linear::{train_linear, LinearModel, RIDGE_LAMBDA};
pub use mlp::{train_mlp, MlpModel, Optimizer, TrainConfig};

pub type FeatureRow = [f64; FEATURE_DIM];
pub type TargetRow = [f64; BAND_COUNT];

/// Per-feature z-score statistics fitted on training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalization {
    /// Column means and population standard deviations. Columns whose spread
    /// is zero (to rounding) get std 1.
    pub fn fit<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        if rows.len() < 2 {
            return Err(Error::invalid(format!(
                "normalization needs at least 2 rows, got {}",
                rows.len()
            )));
        }
        let dim = rows[0].as_ref().len();
        if rows.iter().any(|r| r.as_ref().len() != dim) {
            return Err(Error::Shape("ragged feature matrix".into()));
        }
        let n = rows.len() as f64;
        let mut mean = vec![0.0; dim];
        for r in rows {
            mean.iter_mut().zip(r.as_ref()).for_each(|(m, v)| *m += v);
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; dim];
        for r in rows {
            var.iter_mut()
                .zip(r.as_ref())
                .zip(&mean)
                .for_each(|((s, v), m)| *s += (v - m).powi(2));
        }
        let std = var
            .iter()
            .zip(&mean)
            .map(|(s, m)| {
                let sd = (s / n).sqrt();
                if sd <= 1e-12 * m.abs().max(1.0) {
                    1.0
                } else {
                    sd
                }
            })
            .collect();
        Ok(Self { mean, std })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, row: &FeatureRow) -> FeatureRow {
        let mut out = [0.0; FEATURE_DIM];
        for (i, o) in out.iter_mut().enumerate() {
            *o = (row[i] - self.mean[i]) / self.std[i];
        }
        out
    }

    pub fn apply_all(&self, rows: &[FeatureRow]) -> Vec<FeatureRow> {
        rows.iter().map(|r| self.apply(r)).collect()
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.mean.len() != FEATURE_DIM || self.std.len() != FEATURE_DIM {
            return Err(Error::Shape(format!(
                "normalization has {}/{} entries, expected {FEATURE_DIM}",
                self.mean.len(),
                self.std.len()
            )));
        }
        if self.std.iter().any(|s| !(*s > 0.0) || !s.is_finite()) || self.mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::Shape(
                "normalization has non-finite or non-positive entries".into(),
            ));
        }
        Ok(())
    }
}

pub(crate) fn check_training_set(x: &[FeatureRow], y: &[TargetRow]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::Shape(format!(
            "{} feature rows vs {} target rows",
            x.len(),
            y.len()
        )));
    }
    if x.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    if x.iter().flatten().chain(y.iter().flatten()).any(|v| !v.is_finite()) {
        return Err(Error::invalid("training set contains non-finite values"));
    }
    Ok(())
}

/// Mean of squared errors over all (row, output) pairs.
pub fn mean_squared_error(pred: &[TargetRow], target: &[TargetRow]) -> f64 {
    let total: f64 = pred
        .iter()
        .zip(target)
        .flat_map(|(p, t)| p.iter().zip(t).map(|(a, b)| (a - b).powi(2)))
        .sum();
    total / (pred.len() * BAND_COUNT) as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Linear,
    Forest,
    Mlp,
}

impl ModelKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ModelKind::Linear => "linear",
            ModelKind::Forest => "forest",
            ModelKind::Mlp => "mlp",
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.pad(self.as_str())
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(ModelKind::Linear),
            "forest" => Ok(ModelKind::Forest),
            "mlp" => Ok(ModelKind::Mlp),
            other => Err(Error::invalid(format!("unknown model kind {other:?}"))),
        }
    }
}

/// Any trained predictor.
#[allow(clippy::large_enum_variant)]
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Linear(LinearModel),
    Forest(ForestModel),
    Mlp(MlpModel),
}

impl Model {
    pub fn kind(&self) -> ModelKind {
        match self {
            Model::Linear(_) => ModelKind::Linear,
            Model::Forest(_) => ModelKind::Forest,
            Model::Mlp(_) => ModelKind::Mlp,
        }
    }

    pub fn normalization(&self) -> &Normalization {
        match self {
            Model::Linear(m) => &m.norm,
            Model::Forest(m) => &m.norm,
            Model::Mlp(m) => &m.norm,
        }
    }

    /// Raw feature row in, gains in dB out.
    pub fn predict_row(&self, row: &FeatureRow) -> Result<TargetRow> {
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite feature value"));
        }
        Ok(match self {
            Model::Linear(m) => m.predict_row(row),
            Model::Forest(m) => m.predict_row(row),
            Model::Mlp(m) => m.predict_row(row),
        })
    }

    pub fn predict(&self, features: &FeatureVector) -> Result<TargetRow> {
        self.predict_row(&features.to_array())
    }

    pub fn predict_batch(&self, rows: &[FeatureRow], exec: Exec) -> Result<Vec<TargetRow>> {
        exec.try_map(rows, |r| self.predict_row(r))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalization_basics() {
        let n = Normalization::fit(&[[0.0], [2.0]]).unwrap();
        assert_eq!((n.mean[0], n.std[0]), (1.0, 1.0));
        let c = Normalization::fit(&[[5.0, 1.0], [5.0, 3.0], [5.0, 8.0]]).unwrap();
        assert_eq!(c.std[0], 1.0);
        assert!(Normalization::fit(&[[1.0]]).is_err());
    }

    #[test]
    fn normalized_columns_are_centered() {
        let mut rng = crate::rng::SplitMix64::new(4);
        let rows: Vec<FeatureRow> = (0..50)
            .map(|_| std::array::from_fn(|j| rng.uniform(-3.0, 3.0) * (j + 1) as f64 + j as f64))
            .collect();
        let norm = Normalization::fit(&rows).unwrap();
        let z = norm.apply_all(&rows);
        for j in 0..FEATURE_DIM {
            let m: f64 = z.iter().map(|r| r[j]).sum::<f64>() / z.len() as f64;
            assert!(m.abs() < 1e-9);
        }
    }

    #[test]
    fn mse_definition() {
        assert_eq!(mean_squared_error(&[[1.0; 5]], &[[0.0; 5]]), 1.0);
        assert_eq!(
            mean_squared_error(&[[0.0; 5], [2.0, 0.0, 0.0, 0.0, 0.0]], &[[0.0; 5]; 2]),
            0.4
        );
    }

    #[test]
    fn kind_parsing() {
        for k in [ModelKind::Linear, ModelKind::Forest, ModelKind::Mlp] {
            assert_eq!(k.as_str().parse::<ModelKind>().unwrap(), k);
        }
        assert!("svm".parse::<ModelKind>().is_err());
    }
}

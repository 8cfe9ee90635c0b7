//! Versioned JSON file for a trained model.
//!
//! ```json
//! { "schema_version": 1, "kind": "mlp", "params": {...},
//!   "normalization": {"mean": [...], "std": [...]},
//!   "train_config": {...}, "feature_config": {...}, "metrics": {...} }
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{ForestModel, LinearModel, MlpModel, Model, ModelKind, Normalization, RegressionTree};
use crate::eq::BAND_COUNT;
use crate::error::{Error, Result};
use crate::features::{StftConfig, FEATURE_DIM};

pub const ARTIFACT_SCHEMA_VERSION: u64 = 1;

/// How input audio must be analysed before prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub sample_rate: u32,
    pub stft: StftConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelArtifact {
    pub model: Model,
    pub train_config: Value,
    pub feature_config: FeatureConfig,
    pub metrics: BTreeMap<String, f64>,
}

#[derive(Serialize, Deserialize)]
struct ArtifactFile {
    schema_version: u64,
    kind: ModelKind,
    params: Value,
    normalization: Normalization,
    train_config: Value,
    feature_config: FeatureConfig,
    metrics: BTreeMap<String, f64>,
}

#[derive(Serialize, Deserialize)]
struct DenseParams {
    weights: Vec<Vec<f64>>,
    bias: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct MlpParams {
    hidden_dim: usize,
    layer1: DenseParams,
    layer2: DenseParams,
    layer3: DenseParams,
}

#[derive(Serialize, Deserialize)]
struct ForestParams {
    tree_count: usize,
    trees: Vec<RegressionTree>,
}

fn params_of(model: &Model) -> Result<Value> {
    Ok(match model {
        Model::Linear(m) => serde_json::to_value(DenseParams {
            weights: m.weights.iter().map(|r| r.to_vec()).collect(),
            bias: m.bias.to_vec(),
        })?,
        Model::Mlp(m) => {
            let layer = |i| {
                let (weights, bias) = m.layer(i);
                DenseParams { weights, bias }
            };
            serde_json::to_value(MlpParams {
                hidden_dim: m.hidden_dim(),
                layer1: layer(1),
                layer2: layer(2),
                layer3: layer(3),
            })?
        }
        Model::Forest(m) => serde_json::to_value(ForestParams {
            tree_count: m.tree_count,
            trees: m.trees.clone(),
        })?,
    })
}

fn model_from(kind: ModelKind, params: Value, norm: Normalization) -> Result<Model> {
    norm.validate()?;
    let model = match kind {
        ModelKind::Linear => {
            let p: DenseParams = serde_json::from_value(params)?;
            if p.weights.len() != BAND_COUNT
                || p.weights.iter().any(|r| r.len() != FEATURE_DIM)
                || p.bias.len() != BAND_COUNT
            {
                return Err(Error::Shape(format!(
                    "linear model must have {BAND_COUNT}x{FEATURE_DIM} weights and {BAND_COUNT} biases"
                )));
            }
            let m = LinearModel {
                weights: std::array::from_fn(|t| std::array::from_fn(|f| p.weights[t][f])),
                bias: std::array::from_fn(|t| p.bias[t]),
                norm,
            };
            m.validate()?;
            Model::Linear(m)
        }
        ModelKind::Mlp => {
            let p: MlpParams = serde_json::from_value(params)?;
            let m = MlpModel::from_layers(
                p.hidden_dim,
                [
                    (p.layer1.weights.as_slice(), p.layer1.bias.as_slice()),
                    (p.layer2.weights.as_slice(), p.layer2.bias.as_slice()),
                    (p.layer3.weights.as_slice(), p.layer3.bias.as_slice()),
                ],
                norm,
            )?;
            m.validate()?;
            Model::Mlp(m)
        }
        ModelKind::Forest => {
            let p: ForestParams = serde_json::from_value(params)?;
            let m = ForestModel {
                trees: p.trees,
                tree_count: p.tree_count,
                norm,
            };
            m.validate()?;
            Model::Forest(m)
        }
    };
    Ok(model)
}

impl ModelArtifact {
    pub fn new(model: Model, train_config: Value, feature_config: FeatureConfig) -> Self {
        Self {
            model,
            train_config,
            feature_config,
            metrics: BTreeMap::new(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let file = ArtifactFile {
            schema_version: ARTIFACT_SCHEMA_VERSION,
            kind: self.model.kind(),
            params: params_of(&self.model)?,
            normalization: self.model.normalization().clone(),
            train_config: self.train_config.clone(),
            feature_config: self.feature_config,
            metrics: self.metrics.clone(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text)?;
        let version = value.get("schema_version").and_then(Value::as_u64);
        if version != Some(ARTIFACT_SCHEMA_VERSION) {
            return Err(Error::SchemaVersion {
                found: version.unwrap_or(0),
                expected: ARTIFACT_SCHEMA_VERSION,
            });
        }
        let file: ArtifactFile = serde_json::from_value(value)?;
        file.feature_config.stft.validate()?;
        Ok(Self {
            model: model_from(file.kind, file.params, file.normalization)?,
            train_config: file.train_config,
            feature_config: file.feature_config,
            metrics: file.metrics,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{train_forest, train_linear, FeatureRow, ForestConfig, TargetRow};
    use crate::rng::SplitMix64;

    fn data(n: usize) -> (Vec<FeatureRow>, Vec<TargetRow>) {
        let mut rng = SplitMix64::new(12);
        let x: Vec<FeatureRow> = (0..n)
            .map(|_| std::array::from_fn(|j| rng.uniform(-1.0, 1.0) * (j + 1) as f64))
            .collect();
        let y = x.iter().map(|r| std::array::from_fn(|k| r[k] - r[16] * 0.3)).collect();
        (x, y)
    }

    fn fc() -> FeatureConfig {
        FeatureConfig {
            sample_rate: 44_100,
            stft: StftConfig::default(),
        }
    }

    fn round_trip(model: Model) {
        let mut art = ModelArtifact::new(model, serde_json::json!({"note": "test"}), fc());
        art.metrics.insert("test_mse".into(), 0.125);
        let back = ModelArtifact::from_json(&art.to_json().unwrap()).unwrap();
        assert_eq!(back, art);
        let (probe, _) = data(30);
        for r in &probe {
            let a = art.model.predict_row(r).unwrap();
            let b = back.model.predict_row(r).unwrap();
            assert_eq!(a.map(f64::to_bits), b.map(f64::to_bits));
        }
    }

    #[test]
    fn all_kinds_round_trip() {
        let (x, y) = data(40);
        round_trip(Model::Linear(train_linear(&x, &y).unwrap()));
        round_trip(Model::Forest(
            train_forest(
                &x,
                &y,
                &ForestConfig {
                    tree_count: 4,
                    ..Default::default()
                },
            )
            .unwrap(),
        ));
        let norm = Normalization::fit(&x).unwrap();
        round_trip(Model::Mlp(MlpModel::init(5, norm, 77)));
    }

    #[test]
    fn version_and_shape_errors() {
        let (x, _) = data(10);
        let art = ModelArtifact::new(
            Model::Mlp(MlpModel::init(4, Normalization::fit(&x).unwrap(), 1)),
            Value::Null,
            fc(),
        );
        let mut v: Value = serde_json::from_str(&art.to_json().unwrap()).unwrap();

        let mut bad_version = v.clone();
        bad_version["schema_version"] = 99.into();
        assert!(matches!(
            ModelArtifact::from_json(&bad_version.to_string()),
            Err(Error::SchemaVersion { found: 99, .. })
        ));

        v["params"]["hidden_dim"] = 5.into();
        assert!(matches!(ModelArtifact::from_json(&v.to_string()), Err(Error::Shape(_))));

        assert!(matches!(ModelArtifact::from_json("{not json"), Err(Error::Json(_))));
    }
}

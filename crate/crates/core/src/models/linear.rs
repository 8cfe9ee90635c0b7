use serde::{Deserialize, Serialize};

use super::{check_training_set, FeatureRow, Normalization, TargetRow};
use crate::eq::BAND_COUNT;
use crate::error::{Error, Result};
use crate::features::FEATURE_DIM;

/// Ridge damping added to the diagonal of the normal equations.
pub const RIDGE_LAMBDA: f64 = 1e-8;

const UNKNOWNS: usize = FEATURE_DIM + 1;

/// Affine map on normalized features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: [[f64; FEATURE_DIM]; BAND_COUNT],
    pub bias: TargetRow,
    pub norm: Normalization,
}

impl LinearModel {
    pub(crate) fn predict_normalized(&self, z: &FeatureRow) -> TargetRow {
        std::array::from_fn(|t| self.bias[t] + self.weights[t].iter().zip(z).map(|(w, x)| w * x).sum::<f64>())
    }

    pub fn predict_row(&self, row: &FeatureRow) -> TargetRow {
        self.predict_normalized(&self.norm.apply(row))
    }

    pub(crate) fn validate(&self) -> Result<()> {
        self.norm.validate()?;
        if self.weights.iter().flatten().chain(&self.bias).any(|v| !v.is_finite()) {
            return Err(Error::Shape("linear model has non-finite parameters".into()));
        }
        Ok(())
    }
}

/// Least squares on normalized features with an intercept, solved through
/// the damped normal equations `(A^T A + lambda I) w = A^T y` by Cholesky plus
/// one step of iterative refinement.
pub fn train_linear(x: &[FeatureRow], y: &[TargetRow]) -> Result<LinearModel> {
    check_training_set(x, y)?;
    if x.len() < UNKNOWNS {
        return Err(Error::invalid(format!(
            "linear regression needs at least {UNKNOWNS} rows, got {}",
            x.len()
        )));
    }
    let norm = Normalization::fit(x)?;
    let design: Vec<[f64; UNKNOWNS]> = x
        .iter()
        .map(|r| {
            let z = norm.apply(r);
            let mut a = [1.0; UNKNOWNS];
            a[..FEATURE_DIM].copy_from_slice(&z);
            a
        })
        .collect();

    let mut gram = [[0.0; UNKNOWNS]; UNKNOWNS];
    let mut rhs = [[0.0; BAND_COUNT]; UNKNOWNS];
    for (a, t) in design.iter().zip(y) {
        for i in 0..UNKNOWNS {
            for j in 0..UNKNOWNS {
                gram[i][j] += a[i] * a[j];
            }
            for k in 0..BAND_COUNT {
                rhs[i][k] += a[i] * t[k];
            }
        }
    }
    for (i, row) in gram.iter_mut().enumerate() {
        row[i] += RIDGE_LAMBDA;
    }

    let chol = cholesky(&gram)?;
    let mut sol = solve_cholesky(&chol, &rhs);
    // refine: w += G^-1 (b - G w)
    let mut resid = rhs;
    for i in 0..UNKNOWNS {
        for k in 0..BAND_COUNT {
            resid[i][k] -= (0..UNKNOWNS).map(|j| gram[i][j] * sol[j][k]).sum::<f64>();
        }
    }
    let delta = solve_cholesky(&chol, &resid);
    for i in 0..UNKNOWNS {
        for k in 0..BAND_COUNT {
            sol[i][k] += delta[i][k];
        }
    }

    let weights = std::array::from_fn(|t| std::array::from_fn(|f| sol[f][t]));
    let bias = std::array::from_fn(|t| sol[FEATURE_DIM][t]);
    let model = LinearModel { weights, bias, norm };
    model.validate().map_err(|_| Error::Singular)?;
    Ok(model)
}

type Square = [[f64; UNKNOWNS]; UNKNOWNS];

fn cholesky(m: &Square) -> Result<Square> {
    let mut l = [[0.0; UNKNOWNS]; UNKNOWNS];
    for i in 0..UNKNOWNS {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            if i == j {
                let d = m[i][i] - s;
                if !(d > 0.0) || !d.is_finite() {
                    return Err(Error::Singular);
                }
                l[i][i] = d.sqrt();
            } else {
                l[i][j] = (m[i][j] - s) / l[j][j];
            }
        }
    }
    Ok(l)
}

fn solve_cholesky(l: &Square, b: &[[f64; BAND_COUNT]; UNKNOWNS]) -> [[f64; BAND_COUNT]; UNKNOWNS] {
    let mut y = [[0.0; BAND_COUNT]; UNKNOWNS];
    for k in 0..BAND_COUNT {
        for i in 0..UNKNOWNS {
            let s: f64 = (0..i).map(|j| l[i][j] * y[j][k]).sum();
            y[i][k] = (b[i][k] - s) / l[i][i];
        }
        for i in (0..UNKNOWNS).rev() {
            let s: f64 = (i + 1..UNKNOWNS).map(|j| l[j][i] * y[j][k]).sum();
            y[i][k] = (y[i][k] - s) / l[i][i];
        }
    }
    y
}

//! 17 -> hidden -> hidden -> 5 network with ReLU on both hidden layers,
//! trained on mean squared error by mini-batch Adam or SGD with momentum.

use serde::{Deserialize, Serialize};

use super::{check_training_set, mean_squared_error, FeatureRow, Normalization, TargetRow};
use crate::eq::BAND_COUNT;
use crate::error::{Error, Result};
use crate::features::FEATURE_DIM;
use crate::rng::SplitMix64;

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;
const SGD_MOMENTUM: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    SgdMomentum,
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub hidden_dim: usize,
    pub seed: u64,
    pub optimizer: Optimizer,
    /// Share of the training rows held out to pick the best epoch.
    pub validation_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            epochs: 200,
            batch_size: 64,
            hidden_dim: 64,
            seed: 42,
            optimizer: Optimizer::Adam,
            validation_fraction: 0.1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::invalid("learning rate must be positive"));
        }
        if self.epochs == 0 || self.batch_size == 0 || self.hidden_dim == 0 {
            return Err(Error::invalid("epochs, batch size and hidden dim must be positive"));
        }
        if !(0.0..=0.5).contains(&self.validation_fraction) {
            return Err(Error::invalid("validation fraction must be in [0, 0.5]"));
        }
        Ok(())
    }
}

/// Parameters live in one flat vector:
/// `[W1 (h x 17), b1 (h), W2 (h x h), b2 (h), W3 (5 x h), b3 (5)]`,
/// weight matrices row-major with one row per output unit.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    hidden_dim: usize,
    params: Vec<f64>,
    pub norm: Normalization,
}

#[derive(Debug, Clone, Copy)]
struct Layout {
    h: usize,
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
    w3: usize,
    b3: usize,
    len: usize,
}

impl Layout {
    fn new(h: usize) -> Self {
        let w1 = 0;
        let b1 = w1 + h * FEATURE_DIM;
        let w2 = b1 + h;
        let b2 = w2 + h * h;
        let w3 = b2 + h;
        let b3 = w3 + BAND_COUNT * h;
        Self {
            h,
            w1,
            b1,
            w2,
            b2,
            w3,
            b3,
            len: b3 + BAND_COUNT,
        }
    }
}

/// Activations kept from the forward pass for backprop.
struct Trace {
    z1: Vec<f64>,
    a1: Vec<f64>,
    z2: Vec<f64>,
    a2: Vec<f64>,
    out: TargetRow,
}

impl Trace {
    fn new(h: usize) -> Self {
        Self {
            z1: vec![0.0; h],
            a1: vec![0.0; h],
            z2: vec![0.0; h],
            a2: vec![0.0; h],
            out: [0.0; BAND_COUNT],
        }
    }
}

fn dense(weights: &[f64], bias: &[f64], input: &[f64], out: &mut [f64]) {
    let n_in = input.len();
    for (o, (row, b)) in out.iter_mut().zip(weights.chunks_exact(n_in).zip(bias)) {
        *o = b + row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>();
    }
}

impl MlpModel {
    /// Uniform +-sqrt(6 / fan_in) weights, zero biases.
    pub fn init(hidden_dim: usize, norm: Normalization, seed: u64) -> Self {
        let lay = Layout::new(hidden_dim);
        let mut rng = SplitMix64::new(seed);
        let mut params = vec![0.0; lay.len];
        let mut fill = |range: std::ops::Range<usize>, fan_in: usize| {
            let limit = (6.0 / fan_in as f64).sqrt();
            for p in &mut params[range] {
                *p = rng.uniform(-limit, limit);
            }
        };
        fill(lay.w1..lay.b1, FEATURE_DIM);
        fill(lay.w2..lay.b2, hidden_dim);
        fill(lay.w3..lay.b3, hidden_dim);
        Self {
            hidden_dim,
            params,
            norm,
        }
    }

    /// All-zero weights and biases.
    pub fn zeros(hidden_dim: usize, norm: Normalization) -> Self {
        Self {
            hidden_dim,
            params: vec![0.0; Layout::new(hidden_dim).len],
            norm,
        }
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden_dim
    }

    pub fn parameters(&self) -> &[f64] {
        &self.params
    }

    pub fn parameters_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn parameter_count(hidden_dim: usize) -> usize {
        Layout::new(hidden_dim).len
    }

    /// `(weights, bias)` of layer 1, 2 or 3 as nested rows.
    pub fn layer(&self, index: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
        let lay = Layout::new(self.hidden_dim);
        let (w, b, end, n_in) = match index {
            1 => (lay.w1, lay.b1, lay.w2, FEATURE_DIM),
            2 => (lay.w2, lay.b2, lay.w3, lay.h),
            3 => (lay.w3, lay.b3, lay.len, lay.h),
            _ => panic!("layer index {index} out of range 1..=3"),
        };
        let rows = self.params[w..b].chunks_exact(n_in).map(<[f64]>::to_vec).collect();
        (rows, self.params[b..end].to_vec())
    }

    /// Rebuild from nested layers, checking every shape against `hidden_dim`.
    pub fn from_layers(hidden_dim: usize, layers: [(&[Vec<f64>], &[f64]); 3], norm: Normalization) -> Result<Self> {
        if hidden_dim == 0 {
            return Err(Error::Shape("hidden_dim must be positive".into()));
        }
        let expected = [
            (hidden_dim, FEATURE_DIM),
            (hidden_dim, hidden_dim),
            (BAND_COUNT, hidden_dim),
        ];
        let mut params = Vec::with_capacity(Layout::new(hidden_dim).len);
        for (i, ((w, b), (rows, cols))) in layers.iter().zip(expected).enumerate() {
            if w.len() != rows || w.iter().any(|r| r.len() != cols) || b.len() != rows {
                return Err(Error::Shape(format!(
                    "layer {} does not match hidden_dim {hidden_dim}: expected {rows}x{cols} weights and {rows} biases",
                    i + 1
                )));
            }
            w.iter().for_each(|r| params.extend_from_slice(r));
            params.extend_from_slice(b);
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Shape("MLP has non-finite parameters".into()));
        }
        norm.validate()?;
        Ok(Self {
            hidden_dim,
            params,
            norm,
        })
    }

    fn forward(&self, z: &FeatureRow, tr: &mut Trace) {
        let lay = Layout::new(self.hidden_dim);
        let p = &self.params;
        dense(&p[lay.w1..lay.b1], &p[lay.b1..lay.w2], z, &mut tr.z1);
        for (a, &v) in tr.a1.iter_mut().zip(&tr.z1) {
            *a = v.max(0.0);
        }
        dense(&p[lay.w2..lay.b2], &p[lay.b2..lay.w3], &tr.a1, &mut tr.z2);
        for (a, &v) in tr.a2.iter_mut().zip(&tr.z2) {
            *a = v.max(0.0);
        }
        dense(&p[lay.w3..lay.b3], &p[lay.b3..], &tr.a2, &mut tr.out);
    }

    pub(crate) fn predict_normalized(&self, z: &FeatureRow) -> TargetRow {
        let mut tr = Trace::new(self.hidden_dim);
        self.forward(z, &mut tr);
        tr.out
    }

    pub fn predict_row(&self, row: &FeatureRow) -> TargetRow {
        self.predict_normalized(&self.norm.apply(row))
    }

    /// MSE over a batch of already-normalized inputs.
    pub fn loss(&self, z: &[FeatureRow], y: &[TargetRow]) -> f64 {
        let pred: Vec<TargetRow> = z.iter().map(|r| self.predict_normalized(r)).collect();
        mean_squared_error(&pred, y)
    }

    /// MSE over a batch of normalized inputs and its gradient with respect to
    /// [`MlpModel::parameters`], by backpropagation.
    pub fn loss_and_gradient(&self, z: &[FeatureRow], y: &[TargetRow]) -> (f64, Vec<f64>) {
        let lay = Layout::new(self.hidden_dim);
        let mut grad = vec![0.0; lay.len];
        let loss = self.accumulate_gradient(z, y, &mut grad, &mut Trace::new(lay.h));
        (loss, grad)
    }

    fn accumulate_gradient(&self, z: &[FeatureRow], y: &[TargetRow], grad: &mut [f64], tr: &mut Trace) -> f64 {
        let lay = Layout::new(self.hidden_dim);
        let h = lay.h;
        let p = &self.params;
        grad.iter_mut().for_each(|g| *g = 0.0);
        let scale = 2.0 / (z.len() * BAND_COUNT) as f64;
        let mut sq = 0.0;
        let mut d2 = vec![0.0; h];
        let mut d1 = vec![0.0; h];

        for (x, t) in z.iter().zip(y) {
            self.forward(x, tr);
            let mut d_out = [0.0; BAND_COUNT];
            for k in 0..BAND_COUNT {
                let e = tr.out[k] - t[k];
                sq += e * e;
                d_out[k] = scale * e;
            }

            // layer 3
            d2.iter_mut().for_each(|d| *d = 0.0);
            for (k, &g) in d_out.iter().enumerate() {
                let row = lay.w3 + k * h;
                for j in 0..h {
                    grad[row + j] += g * tr.a2[j];
                    d2[j] += g * p[row + j];
                }
                grad[lay.b3 + k] += g;
            }
            for (d, &zv) in d2.iter_mut().zip(&tr.z2) {
                if zv <= 0.0 {
                    *d = 0.0;
                }
            }

            // layer 2
            d1.iter_mut().for_each(|d| *d = 0.0);
            for (i, &g) in d2.iter().enumerate() {
                if g == 0.0 {
                    continue;
                }
                let row = lay.w2 + i * h;
                for j in 0..h {
                    grad[row + j] += g * tr.a1[j];
                    d1[j] += g * p[row + j];
                }
                grad[lay.b2 + i] += g;
            }
            for (d, &zv) in d1.iter_mut().zip(&tr.z1) {
                if zv <= 0.0 {
                    *d = 0.0;
                }
            }

            // layer 1
            for (i, &g) in d1.iter().enumerate() {
                if g == 0.0 {
                    continue;
                }
                let row = lay.w1 + i * FEATURE_DIM;
                for (j, &xv) in x.iter().enumerate() {
                    grad[row + j] += g * xv;
                }
                grad[lay.b1 + i] += g;
            }
        }
        sq / (z.len() * BAND_COUNT) as f64
    }

    pub(crate) fn validate(&self) -> Result<()> {
        self.norm.validate()?;
        if self.params.len() != Layout::new(self.hidden_dim).len {
            return Err(Error::Shape("parameter count does not match hidden_dim".into()));
        }
        Ok(())
    }
}

enum OptState {
    Adam { m: Vec<f64>, v: Vec<f64>, step: i32 },
    Momentum { velocity: Vec<f64> },
}

impl OptState {
    fn new(kind: Optimizer, n: usize) -> Self {
        match kind {
            Optimizer::Adam => OptState::Adam {
                m: vec![0.0; n],
                v: vec![0.0; n],
                step: 0,
            },
            Optimizer::SgdMomentum => OptState::Momentum { velocity: vec![0.0; n] },
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        match self {
            OptState::Adam { m, v, step } => {
                *step += 1;
                let c1 = 1.0 - ADAM_BETA1.powi(*step);
                let c2 = 1.0 - ADAM_BETA2.powi(*step);
                for i in 0..params.len() {
                    m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * grad[i];
                    v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * grad[i] * grad[i];
                    params[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + ADAM_EPS);
                }
            }
            OptState::Momentum { velocity } => {
                for i in 0..params.len() {
                    velocity[i] = SGD_MOMENTUM * velocity[i] - lr * grad[i];
                    params[i] += velocity[i];
                }
            }
        }
    }
}

/// Mini-batch training; returns the parameters with the lowest
/// held-out loss seen (initialization included), or the lowest full
/// training loss when no rows are held out.
pub fn train_mlp(x: &[FeatureRow], y: &[TargetRow], config: &TrainConfig) -> Result<MlpModel> {
    check_training_set(x, y)?;
    config.validate()?;
    let norm = Normalization::fit(x)?;
    let z = norm.apply_all(x);

    let mut rng = SplitMix64::new(config.seed);
    let init_seed = rng.next_u64();
    let mut split_rng = rng.fork();
    let mut order_rng = rng.fork();

    let n_val = (z.len() as f64 * config.validation_fraction).floor() as usize;
    let (fit_idx, val_idx): (Vec<usize>, Vec<usize>) = if n_val > 0 {
        let mut idx: Vec<usize> = (0..z.len()).collect();
        split_rng.shuffle(&mut idx);
        let fit = idx.split_off(n_val);
        (fit, idx)
    } else {
        ((0..z.len()).collect(), Vec::new())
    };
    if fit_idx.is_empty() {
        return Err(Error::invalid("no rows left to fit after the validation hold-out"));
    }
    let gather = |idx: &[usize]| -> (Vec<FeatureRow>, Vec<TargetRow>) {
        (idx.iter().map(|&i| z[i]).collect(), idx.iter().map(|&i| y[i]).collect())
    };
    let (fit_x, fit_y) = gather(&fit_idx);
    let (sel_x, sel_y) = if val_idx.is_empty() {
        (fit_x.clone(), fit_y.clone())
    } else {
        gather(&val_idx)
    };

    let mut model = MlpModel::init(config.hidden_dim, norm, init_seed);
    let mut best_loss = model.loss(&sel_x, &sel_y);
    if !best_loss.is_finite() {
        return Err(Error::Diverged("non-finite loss at initialization".into()));
    }
    let mut best_params = model.params.clone();

    let lay = Layout::new(config.hidden_dim);
    let mut opt = OptState::new(config.optimizer, lay.len);
    let mut grad = vec![0.0; lay.len];
    let mut trace = Trace::new(lay.h);
    let mut order: Vec<usize> = (0..fit_x.len()).collect();
    let mut batch_x = Vec::with_capacity(config.batch_size);
    let mut batch_y = Vec::with_capacity(config.batch_size);

    for epoch in 0..config.epochs {
        order_rng.shuffle(&mut order);
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            batch_x.clear();
            batch_y.clear();
            batch_x.extend(chunk.iter().map(|&i| fit_x[i]));
            batch_y.extend(chunk.iter().map(|&i| fit_y[i]));
            let loss = model.accumulate_gradient(&batch_x, &batch_y, &mut grad, &mut trace);
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Diverged(format!(
                    "non-finite loss at epoch {epoch}, batch {b} (learning rate {})",
                    config.learning_rate
                )));
            }
            opt.step(&mut model.params, &grad, config.learning_rate);
        }
        let loss = model.loss(&sel_x, &sel_y);
        if !loss.is_finite() {
            return Err(Error::Diverged(format!(
                "non-finite selection loss after epoch {epoch} (learning rate {})",
                config.learning_rate
            )));
        }
        if loss < best_loss {
            best_loss = loss;
            best_params.copy_from_slice(&model.params);
        }
    }
    model.params = best_params;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(n: usize, seed: u64) -> (Vec<FeatureRow>, Vec<TargetRow>) {
        let mut rng = SplitMix64::new(seed);
        let x: Vec<FeatureRow> = (0..n)
            .map(|_| std::array::from_fn(|_| rng.uniform(-2.0, 2.0)))
            .collect();
        let y = x
            .iter()
            .map(|r| std::array::from_fn(|k| r[k] * 2.0 - r[k + 5].abs() + 0.5 * r[k + 10] * r[0]))
            .collect();
        (x, y)
    }

    #[test]
    fn zero_network_predicts_zero() {
        let norm = Normalization::fit(&toy(4, 1).0).unwrap();
        let m = MlpModel::zeros(8, norm);
        assert_eq!(m.predict_row(&[3.0; FEATURE_DIM]), [0.0; BAND_COUNT]);
    }

    #[test]
    fn layers_round_trip_and_shape_check() {
        let (x, _) = toy(10, 2);
        let m = MlpModel::init(6, Normalization::fit(&x).unwrap(), 9);
        let (w1, b1) = m.layer(1);
        let (w2, b2) = m.layer(2);
        let (w3, b3) = m.layer(3);
        assert_eq!((w1.len(), w1[0].len(), w3.len()), (6, 17, 5));
        let rebuilt = MlpModel::from_layers(6, [(&w1, &b1), (&w2, &b2), (&w3, &b3)], m.norm.clone()).unwrap();
        assert_eq!(rebuilt, m);
        let err = MlpModel::from_layers(7, [(&w1, &b1), (&w2, &b2), (&w3, &b3)], m.norm.clone());
        assert!(matches!(err, Err(Error::Shape(_))));
    }

    #[test]
    fn init_respects_fan_in_bounds() {
        let (x, _) = toy(10, 3);
        let m = MlpModel::init(16, Normalization::fit(&x).unwrap(), 1);
        let (w1, b1) = m.layer(1);
        let lim1 = (6.0f64 / 17.0).sqrt();
        assert!(w1.iter().flatten().all(|w| w.abs() <= lim1));
        assert!(b1.iter().all(|&b| b == 0.0));
        let (w2, _) = m.layer(2);
        let lim2 = (6.0f64 / 16.0).sqrt();
        assert!(w2.iter().flatten().all(|w| w.abs() <= lim2));
    }

    #[test]
    fn training_is_deterministic_and_improves() {
        let (x, y) = toy(200, 4);
        let cfg = TrainConfig {
            epochs: 30,
            hidden_dim: 16,
            batch_size: 16,
            seed: 3,
            ..TrainConfig::default()
        };
        let a = train_mlp(&x, &y, &cfg).unwrap();
        let b = train_mlp(&x, &y, &cfg).unwrap();
        assert_eq!(a.parameters(), b.parameters());

        let z = a.norm.apply_all(&x);
        let init = MlpModel::init(16, a.norm.clone(), SplitMix64::new(3).next_u64());
        assert!(a.loss(&z, &y) < init.loss(&z, &y));
    }

    #[test]
    fn momentum_variant_trains() {
        let (x, y) = toy(100, 6);
        let cfg = TrainConfig {
            epochs: 20,
            hidden_dim: 8,
            optimizer: Optimizer::SgdMomentum,
            learning_rate: 1e-3,
            validation_fraction: 0.0,
            ..TrainConfig::default()
        };
        let m = train_mlp(&x, &y, &cfg).unwrap();
        let z = m.norm.apply_all(&x);
        let init = MlpModel::init(8, m.norm.clone(), SplitMix64::new(42).next_u64());
        assert!(m.loss(&z, &y) <= init.loss(&z, &y));
    }

    #[test]
    fn divergence_is_reported() {
        let (x, mut y) = toy(50, 7);
        y.iter_mut().flatten().for_each(|v| *v *= 1e150);
        let cfg = TrainConfig {
            epochs: 50,
            hidden_dim: 8,
            learning_rate: 1e3,
            optimizer: Optimizer::SgdMomentum,
            ..TrainConfig::default()
        };
        assert!(matches!(train_mlp(&x, &y, &cfg), Err(Error::Diverged(_))));
    }

    #[test]
    fn config_validation() {
        let bad = TrainConfig {
            validation_fraction: 0.6,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
        assert!(TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        }
        .validate()
        .is_err());
        assert!(TrainConfig::default().validate().is_ok());
    }
}

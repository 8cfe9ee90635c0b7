use eqrep_core::models::{FeatureRow, MlpModel, Normalization, TargetRow};
use eqrep_core::rng::SplitMix64;

const EPS: f64 = 1e-4;
const TOL: f64 = 1e-4;
// Components smaller than this are compared absolutely; central differences
// carry O(EPS^2) truncation plus rounding of roughly 1e-16 / EPS.
const FLOOR: f64 = 1e-6;

fn batch(seed: u64, n: usize) -> (Vec<FeatureRow>, Vec<TargetRow>) {
    let mut rng = SplitMix64::new(seed);
    let x: Vec<FeatureRow> = (0..n)
        .map(|_| std::array::from_fn(|j| rng.uniform(-3.0, 3.0) * (j + 1) as f64 + 100.0 * j as f64))
        .collect();
    let y: Vec<TargetRow> = (0..n)
        .map(|_| std::array::from_fn(|_| rng.uniform(-12.0, 12.0)))
        .collect();
    (x, y)
}

/// Smallest |pre-activation| of either hidden layer over the batch.
fn kink_margin(model: &MlpModel, z: &[FeatureRow]) -> f64 {
    let (w1, b1) = model.layer(1);
    let (w2, b2) = model.layer(2);
    let dense = |w: &[Vec<f64>], b: &[f64], x: &[f64]| -> Vec<f64> {
        w.iter()
            .zip(b)
            .map(|(row, bi)| bi + row.iter().zip(x).map(|(a, v)| a * v).sum::<f64>())
            .collect()
    };
    let mut margin = f64::INFINITY;
    for x in z {
        let z1 = dense(&w1, &b1, x);
        let a1: Vec<f64> = z1.iter().map(|v| v.max(0.0)).collect();
        let z2 = dense(&w2, &b2, &a1);
        margin = z1.iter().chain(&z2).fold(margin, |m, v| m.min(v.abs()));
    }
    margin
}

/// `None` when some pre-activation is close enough to zero that a probe
/// could step across a ReLU kink.
fn max_relative_error(hidden: usize, seed: u64) -> Option<f64> {
    let (x, y) = batch(seed, 24);
    let norm = Normalization::fit(&x).unwrap();
    let z = norm.apply_all(&x);
    let mut model = MlpModel::init(hidden, norm, seed);
    // Fresh biases are exactly zero, which puts samples with a dead first
    // layer right on a ReLU kink. Move to a generic point.
    let mut rng = SplitMix64::new(seed ^ 0xabc);
    for p in model.parameters_mut() {
        *p += rng.uniform(-0.1, 0.1);
    }
    if kink_margin(&model, &z) < 1e-2 {
        return None;
    }
    let (loss, analytic) = model.loss_and_gradient(&z, &y);
    assert!((loss - model.loss(&z, &y)).abs() <= 1e-12 * loss);

    let mut probe = model.clone();
    let mut worst: f64 = 0.0;
    for (i, &a) in analytic.iter().enumerate() {
        let orig = probe.parameters()[i];
        probe.parameters_mut()[i] = orig + EPS;
        let up = probe.loss(&z, &y);
        probe.parameters_mut()[i] = orig - EPS;
        let down = probe.loss(&z, &y);
        probe.parameters_mut()[i] = orig;
        let numeric = (up - down) / (2.0 * EPS);
        let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(FLOOR);
        worst = worst.max(err);
    }
    Some(worst)
}

#[test]
fn backprop_matches_central_differences() {
    for hidden in [4, 8, 16] {
        let mut checked = 0;
        for seed in 1..200 {
            let Some(e) = max_relative_error(hidden, seed) else {
                continue;
            };
            assert!(e <= TOL, "h={hidden} seed={seed}: max relative error {e:e}");
            checked += 1;
            if checked == 3 {
                break;
            }
        }
        assert_eq!(checked, 3, "h={hidden}: too few smooth points");
    }
}

#[test]
fn gradient_is_zero_at_a_perfect_fit() {
    let (x, _) = batch(9, 10);
    let norm = Normalization::fit(&x).unwrap();
    let z = norm.apply_all(&x);
    let model = MlpModel::init(8, norm, 9);
    let y: Vec<TargetRow> = z
        .iter()
        .map(|r| model.predict_row(&unnormalize(&model.norm, r)))
        .collect();
    let (loss, grad) = model.loss_and_gradient(&z, &y);
    assert!(loss < 1e-20);
    assert!(grad.iter().all(|g| g.abs() < 1e-9));
}

fn unnormalize(norm: &Normalization, z: &FeatureRow) -> FeatureRow {
    std::array::from_fn(|j| z[j] * norm.std[j] + norm.mean[j])
}

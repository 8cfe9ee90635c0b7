use eqrep_core::models::{train_linear, FeatureRow, LinearModel, TargetRow, RIDGE_LAMBDA};
use eqrep_core::rng::SplitMix64;

const DIM: usize = 17;

fn data(seed: u64, n: usize, noise: f64) -> (Vec<FeatureRow>, Vec<TargetRow>) {
    let mut rng = SplitMix64::new(seed);
    let w: Vec<[f64; DIM]> = (0..5)
        .map(|_| std::array::from_fn(|_| rng.uniform(-2.0, 2.0)))
        .collect();
    let x: Vec<FeatureRow> = (0..n)
        .map(|_| std::array::from_fn(|j| 1000.0 * j as f64 + rng.uniform(-1.0, 1.0) * (1.0 + j as f64)))
        .collect();
    let y = x
        .iter()
        .map(|r| {
            std::array::from_fn(|t| {
                w[t].iter().zip(r).map(|(a, b)| a * b).sum::<f64>() + noise * rng.uniform(-1.0, 1.0)
            })
        })
        .collect();
    (x, y)
}

fn design(model: &LinearModel, x: &[FeatureRow]) -> Vec<[f64; DIM + 1]> {
    x.iter()
        .map(|r| {
            let z = model.norm.apply(r);
            let mut a = [1.0; DIM + 1];
            a[..DIM].copy_from_slice(&z);
            a
        })
        .collect()
}

/// Gradient of `0.5 |A w - y|^2 + 0.5 lambda |w|^2` for output `t`.
fn objective_gradient(a: &[[f64; DIM + 1]], y: &[TargetRow], w: &[f64; DIM + 1], t: usize) -> [f64; DIM + 1] {
    let mut g = [0.0; DIM + 1];
    for (row, target) in a.iter().zip(y) {
        let r = row.iter().zip(w).map(|(p, q)| p * q).sum::<f64>() - target[t];
        g.iter_mut().zip(row).for_each(|(gi, ai)| *gi += r * ai);
    }
    g.iter_mut().zip(w).for_each(|(gi, wi)| *gi += RIDGE_LAMBDA * wi);
    g
}

fn coefficients(model: &LinearModel, t: usize) -> [f64; DIM + 1] {
    let mut w = [model.bias[t]; DIM + 1];
    w[..DIM].copy_from_slice(&model.weights[t]);
    w
}

#[test]
fn solution_is_stationary() {
    let (x, y) = data(3, 400, 0.5);
    let model = train_linear(&x, &y).unwrap();
    let a = design(&model, &x);
    for t in 0..5 {
        let g = objective_gradient(&a, &y, &coefficients(&model, t), t);
        let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(norm <= 1e-6, "band {t}: gradient norm {norm:e}");
    }
}

#[test]
fn agrees_with_gradient_descent() {
    let (x, y) = data(4, 300, 0.3);
    let model = train_linear(&x, &y).unwrap();
    let a = design(&model, &x);
    let n = a.len() as f64;
    for t in 0..5 {
        // Standardized columns keep A^T A / n near the identity, so plain
        // gradient descent with step 0.5 converges fast.
        let mut w = [0.0; DIM + 1];
        for _ in 0..20_000 {
            let g = objective_gradient(&a, &y, &w, t);
            w.iter_mut().zip(&g).for_each(|(wi, gi)| *wi -= 0.5 * gi / n);
        }
        for (got, want) in coefficients(&model, t).iter().zip(&w) {
            assert!(
                (got - want).abs() <= 1e-8 * want.abs().max(1.0),
                "band {t}: {got} vs {want}"
            );
        }
    }
}

#[test]
fn noiseless_targets_are_recovered() {
    let (x, y) = data(5, 100, 0.0);
    let model = train_linear(&x, &y).unwrap();
    for (r, t) in x.iter().zip(&y) {
        let p = model.predict_row(r);
        for (a, b) in p.iter().zip(t) {
            assert!((a - b).abs() <= 1e-6 * b.abs().max(1.0));
        }
    }
}

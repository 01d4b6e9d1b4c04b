//! Regressor contract and the built-in baselines.
//!
//! Any model that can be fitted on a dense feature matrix and queried one
//! row at a time can back a predictor. The built-ins are ridge regression,
//! non-negative least squares and gradient-boosted decision stumps.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub trait Regressor: Send + Sync {
    fn fit(&mut self, features: &[Vec<f64>], targets: &[f64]) -> Result<()>;

    fn predict_one(&self, features: &[f64]) -> f64;
}

/// Serializable choice of built-in regressor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RegressorSpec {
    Ridge { alpha: f64 },
    Nnls,
    BoostedStumps { rounds: usize, learning_rate: f64 },
}

impl RegressorSpec {
    pub fn build(&self) -> Box<dyn Regressor> {
        match *self {
            RegressorSpec::Ridge { alpha } => Box::new(Ridge::new(alpha)),
            RegressorSpec::Nnls => Box::new(Nnls::default()),
            RegressorSpec::BoostedStumps { rounds, learning_rate } => Box::new(BoostedStumps::new(rounds, learning_rate)),
        }
    }
}

fn check_input(features: &[Vec<f64>], targets: &[f64]) -> Result<usize> {
    if features.is_empty() || features.len() != targets.len() {
        return Err(Error::Regressor(format!(
            "{} feature rows for {} targets",
            features.len(),
            targets.len()
        )));
    }
    let p = features[0].len();
    if features.iter().any(|r| r.len() != p) {
        return Err(Error::Regressor("ragged feature matrix".into()));
    }
    if targets.iter().any(|t| !t.is_finite()) || features.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("regression input"));
    }
    Ok(p)
}

/// Column standardization shared by the linear models. Constant columns are
/// dropped.
#[derive(Debug, Clone, Default)]
struct Standardizer {
    columns: Vec<usize>,
    means: Vec<f64>,
    scales: Vec<f64>,
    target_mean: f64,
}

impl Standardizer {
    fn fit(features: &[Vec<f64>], targets: &[f64], p: usize) -> (Self, DMatrix<f64>, DVector<f64>) {
        let n = features.len() as f64;
        let mut s = Standardizer {
            target_mean: targets.iter().sum::<f64>() / n,
            ..Default::default()
        };
        for j in 0..p {
            let mean = features.iter().map(|r| r[j]).sum::<f64>() / n;
            let var = features.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n;
            if var > 1e-24 {
                s.columns.push(j);
                s.means.push(mean);
                s.scales.push(var.sqrt());
            }
        }
        let x = DMatrix::from_fn(features.len(), s.columns.len(), |i, k| {
            (features[i][s.columns[k]] - s.means[k]) / s.scales[k]
        });
        let y = DVector::from_iterator(targets.len(), targets.iter().map(|t| t - s.target_mean));
        (s, x, y)
    }

    /// Maps standardized-space weights back to raw-feature weights + intercept.
    fn linear_model(&self, w: &DVector<f64>, p: usize) -> LinearModel {
        let mut weights = vec![0.0; p];
        let mut intercept = self.target_mean;
        for (k, &j) in self.columns.iter().enumerate() {
            weights[j] = w[k] / self.scales[k];
            intercept -= weights[j] * self.means[k];
        }
        LinearModel { weights, intercept }
    }
}

#[derive(Debug, Clone, Default)]
struct LinearModel {
    weights: Vec<f64>,
    intercept: f64,
}

impl LinearModel {
    fn predict(&self, x: &[f64]) -> f64 {
        self.intercept + self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
    }
}

/// L2-penalized least squares on standardized features; the intercept is
/// not penalized.
#[derive(Debug, Clone)]
pub struct Ridge {
    pub alpha: f64,
    model: LinearModel,
}

impl Ridge {
    pub fn new(alpha: f64) -> Self {
        Ridge {
            alpha,
            model: LinearModel::default(),
        }
    }

    pub fn weights(&self) -> (&[f64], f64) {
        (&self.model.weights, self.model.intercept)
    }
}

impl Regressor for Ridge {
    fn fit(&mut self, features: &[Vec<f64>], targets: &[f64]) -> Result<()> {
        let p = check_input(features, targets)?;
        let (s, x, y) = Standardizer::fit(features, targets, p);
        let k = x.ncols();
        let w = if k == 0 {
            DVector::zeros(0)
        } else {
            let mut gram = x.transpose() * &x;
            for i in 0..k {
                gram[(i, i)] += self.alpha;
            }
            let rhs = x.transpose() * &y;
            match gram.clone().cholesky() {
                Some(ch) => ch.solve(&rhs),
                None => gram
                    .svd(true, true)
                    .solve(&rhs, 1e-12)
                    .map_err(|e| Error::Regressor(e.to_string()))?,
            }
        };
        self.model = s.linear_model(&w, p);
        Ok(())
    }

    fn predict_one(&self, features: &[f64]) -> f64 {
        self.model.predict(features)
    }
}

/// Linear regression with non-negative coefficients (Lawson-Hanson active
/// set) and a free intercept.
#[derive(Debug, Clone, Default)]
pub struct Nnls {
    model: LinearModel,
}

impl Nnls {
    pub fn weights(&self) -> (&[f64], f64) {
        (&self.model.weights, self.model.intercept)
    }
}

/// Solves `min ||Ax - b||` subject to `x >= 0`.
pub fn nnls(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let n = a.ncols();
    let mut x = DVector::zeros(n);
    let mut passive = vec![false; n];
    let tol = 1e-10 * (1.0 + a.norm() * b.norm());
    let at = a.transpose();
    let solve_passive = |passive: &[bool]| -> DVector<f64> {
        let idx: Vec<usize> = (0..n).filter(|&j| passive[j]).collect();
        let sub = DMatrix::from_fn(a.nrows(), idx.len(), |i, k| a[(i, idx[k])]);
        let z = sub.svd(true, true).solve(b, 1e-12).unwrap_or_else(|_| DVector::zeros(idx.len()));
        let mut full = DVector::zeros(n);
        for (k, &j) in idx.iter().enumerate() {
            full[j] = z[k];
        }
        full
    };
    for _ in 0..(3 * n + 10) {
        let grad = &at * (b - a * &x);
        let candidate = (0..n)
            .filter(|&j| !passive[j] && grad[j] > tol)
            .max_by(|&i, &j| grad[i].total_cmp(&grad[j]));
        let Some(j) = candidate else { break };
        passive[j] = true;
        loop {
            let z = solve_passive(&passive);
            if (0..n).filter(|&k| passive[k]).all(|k| z[k] > 0.0) {
                x = z;
                break;
            }
            let mut alpha = f64::INFINITY;
            for k in 0..n {
                if passive[k] && z[k] <= 0.0 {
                    alpha = alpha.min(x[k] / (x[k] - z[k]));
                }
            }
            x += (z - &x) * alpha;
            for k in 0..n {
                if passive[k] && x[k] <= 1e-15 {
                    passive[k] = false;
                    x[k] = 0.0;
                }
            }
        }
    }
    x
}

impl Regressor for Nnls {
    fn fit(&mut self, features: &[Vec<f64>], targets: &[f64]) -> Result<()> {
        let p = check_input(features, targets)?;
        let (s, x, y) = Standardizer::fit(features, targets, p);
        let w = if x.ncols() == 0 { DVector::zeros(0) } else { nnls(&x, &y) };
        self.model = s.linear_model(&w, p);
        Ok(())
    }

    fn predict_one(&self, features: &[f64]) -> f64 {
        self.model.predict(features)
    }
}

#[derive(Debug, Clone, Copy)]
struct Stump {
    feature: usize,
    threshold: f64,
    left: f64,
    right: f64,
}

/// Squared-loss gradient boosting over depth-1 trees.
#[derive(Debug, Clone)]
pub struct BoostedStumps {
    pub rounds: usize,
    pub learning_rate: f64,
    base: f64,
    stumps: Vec<Stump>,
}

impl BoostedStumps {
    pub fn new(rounds: usize, learning_rate: f64) -> Self {
        BoostedStumps {
            rounds,
            learning_rate,
            base: 0.0,
            stumps: Vec::new(),
        }
    }
}

impl Regressor for BoostedStumps {
    fn fit(&mut self, features: &[Vec<f64>], targets: &[f64]) -> Result<()> {
        let p = check_input(features, targets)?;
        let n = targets.len();
        self.base = targets.iter().sum::<f64>() / n as f64;
        self.stumps.clear();
        let orders: Vec<Vec<usize>> = (0..p)
            .map(|j| {
                let mut o: Vec<usize> = (0..n).collect();
                o.sort_by(|&a, &b| features[a][j].total_cmp(&features[b][j]));
                o
            })
            .collect();
        let mut residual: Vec<f64> = targets.iter().map(|t| t - self.base).collect();
        for _ in 0..self.rounds {
            let total: f64 = residual.iter().sum();
            let mut best: Option<(f64, Stump)> = None;
            for (j, order) in orders.iter().enumerate() {
                let mut left_sum = 0.0;
                for (cut, pair) in order.windows(2).enumerate() {
                    left_sum += residual[pair[0]];
                    let (lo, hi) = (features[pair[0]][j], features[pair[1]][j]);
                    if lo == hi {
                        continue;
                    }
                    let nl = (cut + 1) as f64;
                    let nr = (n - cut - 1) as f64;
                    let right_sum = total - left_sum;
                    // SSE reduction of splitting here
                    let gain = left_sum * left_sum / nl + right_sum * right_sum / nr;
                    if best.is_none_or(|(g, _)| gain > g) {
                        best = Some((
                            gain,
                            Stump {
                                feature: j,
                                threshold: 0.5 * (lo + hi),
                                left: left_sum / nl,
                                right: right_sum / nr,
                            },
                        ));
                    }
                }
            }
            let Some((_, mut stump)) = best else { break };
            stump.left *= self.learning_rate;
            stump.right *= self.learning_rate;
            for (i, r) in residual.iter_mut().enumerate() {
                *r -= if features[i][stump.feature] <= stump.threshold {
                    stump.left
                } else {
                    stump.right
                };
            }
            self.stumps.push(stump);
        }
        Ok(())
    }

    fn predict_one(&self, features: &[f64]) -> f64 {
        self.base
            + self
                .stumps
                .iter()
                .map(|s| if features[s.feature] <= s.threshold { s.left } else { s.right })
                .sum::<f64>()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn linear_data(n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<Vec<f64>> = (0..n).map(|_| (0..4).map(|_| rng.random_range(0.0..10.0)).collect()).collect();
        let y = x.iter().map(|r| 5.0 + 2.0 * r[0] + 0.5 * r[1] + 3.0 * r[3]).collect();
        (x, y)
    }

    #[test]
    fn constant_targets_give_constant_predictions() {
        let (x, _) = linear_data(30, 1);
        let y = vec![7.25; 30];
        for spec in [
            RegressorSpec::Ridge { alpha: 1.0 },
            RegressorSpec::Nnls,
            RegressorSpec::BoostedStumps {
                rounds: 10,
                learning_rate: 0.3,
            },
        ] {
            let mut r = spec.build();
            r.fit(&x, &y).unwrap();
            for probe in [&x[0][..], &[100.0, -3.0, 0.0, 1.0][..]] {
                assert!((r.predict_one(probe) - 7.25).abs() < 1e-9, "{spec:?}");
            }
        }
    }

    #[test]
    fn ridge_and_nnls_recover_noise_free_linear_model() {
        let (x, y) = linear_data(50, 2);
        let mut ridge = Ridge::new(1e-9);
        ridge.fit(&x, &y).unwrap();
        let (w, b) = ridge.weights();
        for (got, want) in w.iter().zip([2.0, 0.5, 0.0, 3.0]) {
            assert!((got - want).abs() < 1e-6);
        }
        assert!((b - 5.0).abs() < 1e-5);

        let mut n = Nnls::default();
        n.fit(&x, &y).unwrap();
        let (w, b) = n.weights();
        for (got, want) in w.iter().zip([2.0, 0.5, 0.0, 3.0]) {
            assert!((got - want).abs() < 1e-6, "{w:?}");
        }
        assert!((b - 5.0).abs() < 1e-5);
    }

    #[test]
    fn nnls_clamps_negative_effects() {
        // y decreases with x1: the constrained fit zeroes that weight
        let x: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64, (i % 7) as f64]).collect();
        let y: Vec<f64> = x.iter().map(|r| 1.0 + r[0] - 2.0 * r[1]).collect();
        let mut n = Nnls::default();
        n.fit(&x, &y).unwrap();
        let (w, _) = n.weights();
        assert!(w.iter().all(|v| *v >= 0.0));
        assert_eq!(w[1], 0.0);
    }

    #[test]
    fn nnls_matches_known_solution() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let b = DVector::from_row_slice(&[2.0, -1.0, 1.0]);
        // unconstrained optimum has x1 = -1; constrained: x1 = 0, x0 = 1.5
        let x = nnls(&a, &b);
        assert!((x[0] - 1.5).abs() < 1e-12 && x[1] == 0.0, "{x}");
    }

    #[test]
    fn stumps_fit_a_step_function() {
        let x: Vec<Vec<f64>> = (0..40).map(|i| vec![i as f64]).collect();
        let y: Vec<f64> = (0..40).map(|i| if i < 20 { 1.0 } else { 3.0 }).collect();
        let mut s = BoostedStumps::new(60, 0.5);
        s.fit(&x, &y).unwrap();
        assert!((s.predict_one(&[5.0]) - 1.0).abs() < 1e-6);
        assert!((s.predict_one(&[30.0]) - 3.0).abs() < 1e-6);
    }

    #[test]
    fn rejects_bad_input() {
        let mut r = Ridge::new(1.0);
        assert!(r.fit(&[], &[]).is_err());
        assert!(r.fit(&[vec![1.0]], &[f64::NAN]).is_err());
        assert!(r.fit(&[vec![1.0], vec![1.0, 2.0]], &[1.0, 2.0]).is_err());
    }
}

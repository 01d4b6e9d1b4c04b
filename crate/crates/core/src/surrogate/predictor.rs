use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cell::CellSpec;
use crate::error::{Error, Result};
use crate::space::SearchSpaceConfig;

use super::features::{encode_accuracy_features, time_features};
use super::regressor::{Regressor, RegressorSpec};
use super::reindex::DynamicReindexTable;

pub const DEFAULT_FOLDS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PredictorKind {
    Accuracy,
    Time,
}

impl PredictorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PredictorKind::Accuracy => "accuracy",
            PredictorKind::Time => "time",
        }
    }

    fn clamp(self, v: f64) -> f64 {
        match self {
            PredictorKind::Accuracy => v.clamp(0.0, 1.0),
            PredictorKind::Time => v.max(0.0),
        }
    }
}

/// What a predictor needs to turn cells into feature rows.
#[derive(Debug, Clone, Copy)]
pub struct FeatureContext<'a> {
    pub config: &'a SearchSpaceConfig,
    /// Required for time features.
    pub reindex: Option<&'a DynamicReindexTable>,
}

impl FeatureContext<'_> {
    pub fn features(&self, kind: PredictorKind, cell: &CellSpec) -> Result<Vec<f64>> {
        match kind {
            PredictorKind::Accuracy => Ok(encode_accuracy_features(cell, self.config)?.feature_vector(self.config)),
            PredictorKind::Time => {
                let reindex = self
                    .reindex
                    .ok_or_else(|| Error::Regressor("time features need a reindex table".into()))?;
                let cells = if cell.is_empty() { 0 } else { self.config.stacked_cells() };
                Ok(time_features(cell, reindex, cells)?.to_array().to_vec())
            }
        }
    }

    pub fn feature_matrix(&self, kind: PredictorKind, cells: &[CellSpec]) -> Result<Vec<Vec<f64>>> {
        cells.par_iter().map(|c| self.features(kind, c)).collect()
    }
}

/// Ensemble of regressors fitted on k-fold splits; predicts the member mean.
pub struct TrainedPredictor {
    pub kind: PredictorKind,
    pub ensemble: Vec<Box<dyn Regressor>>,
    pub fold_count: usize,
}

impl std::fmt::Debug for TrainedPredictor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TrainedPredictor")
            .field("kind", &self.kind)
            .field("members", &self.ensemble.len())
            .field("fold_count", &self.fold_count)
            .finish()
    }
}

/// Fits `folds` members, member `k` on every record outside fold `k`.
/// Fold assignment is a seeded shuffle. With `folds == 1` the single member
/// sees all data.
pub fn fit_predictor_on(
    features: &[Vec<f64>],
    targets: &[f64],
    kind: PredictorKind,
    make: &(dyn Fn() -> Box<dyn Regressor> + Sync),
    folds: usize,
    seed: u64,
) -> Result<TrainedPredictor> {
    let folds = folds.max(1);
    if targets.len() < folds || targets.is_empty() {
        return Err(Error::TooFewRecords {
            needed: folds.max(1),
            got: targets.len(),
        });
    }
    if targets.iter().any(|t| !t.is_finite()) {
        return Err(Error::NonFinite("predictor targets"));
    }
    let mut order: Vec<usize> = (0..targets.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut fold_of = vec![0usize; targets.len()];
    for (pos, &i) in order.iter().enumerate() {
        fold_of[i] = pos * folds / targets.len();
    }
    let ensemble = (0..folds)
        .into_par_iter()
        .map(|k| {
            let (x, y): (Vec<Vec<f64>>, Vec<f64>) = (0..targets.len())
                .filter(|&i| folds == 1 || fold_of[i] != k)
                .map(|i| (features[i].clone(), targets[i]))
                .unzip();
            let mut member = make();
            member.fit(&x, &y)?;
            Ok(member)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TrainedPredictor {
        kind,
        ensemble,
        fold_count: folds,
    })
}

/// Fits a predictor of `kind` on `(cell, target)` records.
pub fn fit_predictor(
    records: &[(CellSpec, f64)],
    kind: PredictorKind,
    spec: &RegressorSpec,
    ctx: &FeatureContext<'_>,
    folds: usize,
    seed: u64,
) -> Result<TrainedPredictor> {
    if records.len() < folds {
        return Err(Error::TooFewRecords {
            needed: folds,
            got: records.len(),
        });
    }
    let cells: Vec<CellSpec> = records.iter().map(|(c, _)| c.clone()).collect();
    let targets: Vec<f64> = records.iter().map(|(_, t)| *t).collect();
    let x = ctx.feature_matrix(kind, &cells)?;
    fit_predictor_on(&x, &targets, kind, &|| spec.build(), folds, seed)
}

impl TrainedPredictor {
    pub fn predict_row(&self, features: &[f64]) -> f64 {
        let sum: f64 = self.ensemble.iter().map(|m| m.predict_one(features)).sum();
        self.kind.clamp(sum / self.ensemble.len() as f64)
    }

    pub fn predict_rows(&self, rows: &[Vec<f64>]) -> Result<Vec<f64>> {
        if self.ensemble.is_empty() {
            return Err(Error::Regressor("predictor has no fitted members".into()));
        }
        Ok(rows.par_iter().map(|r| self.predict_row(r)).collect())
    }

    /// Predictions in input order.
    pub fn predict(&self, cells: &[CellSpec], ctx: &FeatureContext<'_>) -> Result<Vec<f64>> {
        if self.ensemble.is_empty() {
            return Err(Error::Regressor("predictor has no fitted members".into()));
        }
        cells
            .par_iter()
            .map(|c| Ok(self.predict_row(&ctx.features(self.kind, c)?)))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surrogate::metrics::mape;
    use rand::Rng;

    struct Fixed(f64);

    impl Regressor for Fixed {
        fn fit(&mut self, _: &[Vec<f64>], _: &[f64]) -> Result<()> {
            Ok(())
        }
        fn predict_one(&self, _: &[f64]) -> f64 {
            self.0
        }
    }

    fn fixed(values: &[f64], kind: PredictorKind) -> TrainedPredictor {
        TrainedPredictor {
            kind,
            ensemble: values.iter().map(|v| Box::new(Fixed(*v)) as Box<dyn Regressor>).collect(),
            fold_count: values.len(),
        }
    }

    #[test]
    fn mean_and_clamp() {
        assert_eq!(fixed(&[0.42], PredictorKind::Accuracy).predict_row(&[]), 0.42);
        assert_eq!(fixed(&[0.2, 0.4], PredictorKind::Accuracy).predict_row(&[]), 0.30000000000000004);
        assert_eq!(fixed(&[1.3], PredictorKind::Accuracy).predict_row(&[]), 1.0);
        assert_eq!(fixed(&[-4.0], PredictorKind::Time).predict_row(&[]), 0.0);
        assert!(fixed(&[], PredictorKind::Time).predict_rows(&[vec![]]).is_err());
    }

    #[test]
    fn too_few_records() {
        let x = vec![vec![1.0]; 4];
        let y = vec![1.0; 4];
        let err = fit_predictor_on(&x, &y, PredictorKind::Time, &|| RegressorSpec::Nnls.build(), 5, 0).unwrap_err();
        assert!(matches!(err, Error::TooFewRecords { needed: 5, got: 4 }));
        let err = fit_predictor_on(&x, &[1.0, f64::INFINITY, 1.0, 1.0], PredictorKind::Time, &|| RegressorSpec::Nnls.build(), 2, 0)
            .unwrap_err();
        assert!(matches!(err, Error::NonFinite(_)));
    }

    #[test]
    fn constant_records_predict_constant() {
        let x: Vec<Vec<f64>> = (0..12).map(|i| vec![i as f64, (i * i) as f64]).collect();
        let y = vec![0.61; 12];
        let p = fit_predictor_on(&x, &y, PredictorKind::Accuracy, &|| RegressorSpec::Ridge { alpha: 1.0 }.build(), 5, 3)
            .unwrap();
        assert_eq!(p.ensemble.len(), 5);
        for r in p.predict_rows(&[vec![100.0, -1.0], vec![0.0, 0.0]]).unwrap() {
            assert!((r - 0.61).abs() < 1e-12);
        }
    }

    #[test]
    fn noise_free_linear_data_is_recovered_on_held_out_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let gen = |rng: &mut ChaCha8Rng| -> (Vec<f64>, f64) {
            let r: Vec<f64> = (0..9).map(|_| rng.random_range(0.0..5.0)).collect();
            let t = 60.0 + r.iter().enumerate().map(|(i, v)| (i as f64 + 1.0) * v).sum::<f64>();
            (r, t)
        };
        let (x, y): (Vec<_>, Vec<_>) = (0..200).map(|_| gen(&mut rng)).unzip();
        let (hx, hy): (Vec<_>, Vec<_>) = (0..100).map(|_| gen(&mut rng)).unzip();
        let p = fit_predictor_on(&x, &y, PredictorKind::Time, &|| RegressorSpec::Ridge { alpha: 1e-3 }.build(), 5, 1)
            .unwrap();
        let pred = p.predict_rows(&hx).unwrap();
        assert!(mape(&hy, &pred).unwrap() < 1.0);
    }

    #[test]
    fn fitting_is_deterministic_for_a_seed() {
        let x: Vec<Vec<f64>> = (0..30).map(|i| vec![(i % 7) as f64, (i % 3) as f64]).collect();
        let y: Vec<f64> = (0..30).map(|i| ((i * 37) % 11) as f64).collect();
        let fit = |seed| {
            fit_predictor_on(&x, &y, PredictorKind::Time, &|| RegressorSpec::Ridge { alpha: 0.5 }.build(), 5, seed)
                .unwrap()
                .predict_rows(&x)
                .unwrap()
        };
        assert_eq!(fit(9), fit(9));
        assert_ne!(fit(9), fit(10));
    }

    #[test]
    fn predictions_follow_input_order() {
        let cfg = SearchSpaceConfig {
            operators: vec!["a".into(), "b".into(), "c".into()],
            blocks: 2,
            ..SearchSpaceConfig::default()
        };
        let ctx = FeatureContext {
            config: &cfg,
            reindex: None,
        };
        let cells = crate::space::enumerate_initial_blocks(&cfg);
        let records: Vec<(CellSpec, f64)> = cells
            .iter()
            .enumerate()
            .map(|(i, c)| (c.clone(), 0.1 + 0.8 * ((i * 7) % 13) as f64 / 13.0))
            .collect();
        let p = fit_predictor(&records, PredictorKind::Accuracy, &RegressorSpec::Ridge { alpha: 1.0 }, &ctx, 5, 0).unwrap();
        let fwd = p.predict(&cells, &ctx).unwrap();
        let rev_cells: Vec<CellSpec> = cells.iter().rev().cloned().collect();
        let mut rev = p.predict(&rev_cells, &ctx).unwrap();
        rev.reverse();
        assert_eq!(fwd, rev);
        assert!(fit_predictor(&records, PredictorKind::Time, &RegressorSpec::Nnls, &ctx, 5, 0).is_err());
    }
}

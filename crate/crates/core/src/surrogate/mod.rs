//! Surrogate models for accuracy and training time.
//!
//! Time features build on a dynamic reindex: per-operator time weights
//! measured on flat single-block cells and normalized against the empty
//! cell. Accuracy features are a categorical encoding of the block grid.
//! Both predictors are k-fold ensembles over a pluggable [`Regressor`].

mod features;
mod metrics;
mod predictor;
mod regressor;
mod reindex;

use std::io::Write;

use serde::{Deserialize, Serialize};

pub use features::{
    encode_accuracy_features, extract_time_features, time_features, AccuracyEncoding, TimeFeatureVector,
    TIME_FEATURE_NAMES,
};
pub use metrics::{average_ranks, mape, spearman};
pub use predictor::{fit_predictor, fit_predictor_on, FeatureContext, PredictorKind, TrainedPredictor, DEFAULT_FOLDS};
pub use regressor::{nnls, BoostedStumps, Nnls, Regressor, RegressorSpec, Ridge};
pub use reindex::{init_dynamic_reindex, DynamicReindexTable};

use crate::error::Result;

/// Prediction quality on cells unseen at fit time. Metrics are `None` when
/// undefined (e.g. a single evaluated cell).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorEvaluation {
    pub step: usize,
    pub kind: PredictorKind,
    pub mape: Option<f64>,
    pub spearman: Option<f64>,
}

impl PredictorEvaluation {
    pub fn compute(step: usize, kind: PredictorKind, actual: &[f64], predicted: &[f64]) -> Self {
        PredictorEvaluation {
            step,
            kind,
            mape: mape(actual, predicted).ok(),
            spearman: spearman(actual, predicted).ok(),
        }
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// CSV with columns `step,kind,mape,spearman`; undefined metrics are empty.
pub fn write_evaluation_csv<W: Write>(rows: &[PredictorEvaluation], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["step", "kind", "mape", "spearman"])?;
    for r in rows {
        w.write_record([r.step.to_string(), r.kind.as_str().to_owned(), opt(r.mape), opt(r.spearman)])?;
    }
    w.flush()?;
    Ok(())
}

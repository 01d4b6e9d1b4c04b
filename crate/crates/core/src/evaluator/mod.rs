//! The training boundary: turn a cell plus network settings into a measured
//! `(accuracy, time_seconds)` pair.
//!
//! Implementations must be deterministic for a fixed canonical cell, network
//! settings and seed, and safe to call from several threads at once.

mod cache;
mod external;
mod synthetic;
mod table;

use serde::{Deserialize, Serialize};

pub use cache::CachedEvaluator;
pub use external::{ExternalConfig, ExternalEvaluator, WorkerReply, WorkerRequest, WORKER_CMD_ENV};
pub use synthetic::{OperatorModel, SyntheticEvaluator, SyntheticParams};
pub use table::TableEvaluator;

use crate::cell::CellSpec;
use crate::space::SearchSpaceConfig;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalRequest {
    pub request_id: String,
    pub cell: CellSpec,
    pub motifs: u32,
    pub normals_per_motif: u32,
    pub epochs: u32,
    pub seed: u64,
}

impl EvalRequest {
    pub fn new(request_id: impl Into<String>, cell: CellSpec, config: &SearchSpaceConfig, seed: u64) -> Self {
        EvalRequest {
            request_id: request_id.into(),
            cell,
            motifs: config.motifs as u32,
            normals_per_motif: config.normals_per_motif as u32,
            epochs: config.epochs,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", content = "reason", rename_all = "lowercase")]
pub enum EvalStatus {
    Ok,
    Failed(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalResult {
    pub request_id: String,
    pub accuracy: f64,
    pub time_seconds: f64,
    pub status: EvalStatus,
}

impl EvalResult {
    /// An `ok` result, downgraded to `failed` if the metrics are out of range.
    pub fn ok(request_id: impl Into<String>, accuracy: f64, time_seconds: f64) -> Self {
        let request_id = request_id.into();
        if !(accuracy.is_finite() && (0.0..=1.0).contains(&accuracy)) {
            return Self::failed(request_id, format!("accuracy {accuracy} outside [0, 1]"));
        }
        if !(time_seconds.is_finite() && time_seconds > 0.0) {
            return Self::failed(request_id, format!("time {time_seconds} is not positive"));
        }
        EvalResult {
            request_id,
            accuracy,
            time_seconds,
            status: EvalStatus::Ok,
        }
    }

    pub fn failed(request_id: impl Into<String>, reason: impl Into<String>) -> Self {
        EvalResult {
            request_id: request_id.into(),
            accuracy: f64::NAN,
            time_seconds: f64::NAN,
            status: EvalStatus::Failed(reason.into()),
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == EvalStatus::Ok
    }
}

pub trait Evaluator: Send + Sync {
    fn evaluate(&self, request: &EvalRequest) -> EvalResult;

    /// Short human-readable identity, recorded in run metadata.
    fn describe(&self) -> String;
}

impl<E: Evaluator + ?Sized> Evaluator for Box<E> {
    fn evaluate(&self, request: &EvalRequest) -> EvalResult {
        (**self).evaluate(request)
    }

    fn describe(&self) -> String {
        (**self).describe()
    }
}

impl<E: Evaluator + ?Sized> Evaluator for &E {
    fn evaluate(&self, request: &EvalRequest) -> EvalResult {
        (**self).evaluate(request)
    }

    fn describe(&self) -> String {
        (**self).describe()
    }
}

impl<E: Evaluator + ?Sized> Evaluator for std::sync::Arc<E> {
    fn evaluate(&self, request: &EvalRequest) -> EvalResult {
        (**self).evaluate(request)
    }

    fn describe(&self) -> String {
        (**self).describe()
    }
}

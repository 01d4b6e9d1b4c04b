use std::collections::HashMap;
use std::fmt::Write as _;

use crate::cell::{CellSpec, OperatorCatalog};
use crate::surrogate::{PredictorEvaluation, PredictorKind};

use super::{record_order, EvalRecord, RunState, SearchMode};

#[derive(Debug, Clone, PartialEq)]
pub struct StepSummary {
    pub step: usize,
    pub candidates: usize,
    pub trained: usize,
    pub failed: usize,
    pub exploration: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub mode: SearchMode,
    pub steps: Vec<StepSummary>,
    /// Training attempts, failures included.
    pub networks: usize,
    /// Sum of measured training time over successful records.
    pub total_time_seconds: f64,
    /// Per step `b >= 2`, surrogate quality on the cells trained at `b`,
    /// which the predictors had not seen.
    pub evaluations: Vec<PredictorEvaluation>,
    /// Up to five best successful records, accuracy descending.
    pub top: Vec<EvalRecord>,
}

impl RunReport {
    pub fn top1_accuracy(&self) -> Option<f64> {
        self.top.first().map(|r| r.accuracy)
    }

    pub fn summary_text(&self, catalog: &OperatorCatalog) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "mode: {}", self.mode);
        let _ = writeln!(s, "networks trained: {}", self.networks);
        let _ = writeln!(s, "total training time (s): {}", self.total_time_seconds);
        let _ = writeln!(s, "\nstep  candidates  trained  failed  exploration");
        for st in &self.steps {
            let _ = writeln!(
                s,
                "{:>4}  {:>10}  {:>7}  {:>6}  {:>11}",
                st.step, st.candidates, st.trained, st.failed, st.exploration
            );
        }
        let _ = writeln!(s, "\nstep  predictor  mape  spearman");
        for e in &self.evaluations {
            let f = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into());
            let _ = writeln!(s, "{:>4}  {:<9}  {}  {}", e.step, e.kind.as_str(), f(e.mape), f(e.spearman));
        }
        let _ = writeln!(s, "\ntop cells by accuracy:");
        for (i, r) in self.top.iter().enumerate() {
            let _ = writeln!(
                s,
                "{}. {} accuracy={} time_seconds={}",
                i + 1,
                r.cell.to_text(catalog),
                r.accuracy,
                r.time_seconds
            );
        }
        s
    }
}

pub fn report(state: &RunState) -> RunReport {
    let mut evaluations = Vec::new();
    for step in state.steps.iter().filter(|s| s.step >= 2) {
        let actual: HashMap<&CellSpec, &EvalRecord> =
            step.trained.iter().filter(|r| r.is_ok()).map(|r| (&r.cell, r)).collect();
        let mut acc = (Vec::new(), Vec::new());
        let mut time = (Vec::new(), Vec::new());
        for p in &step.predictions {
            let Some(r) = actual.get(&p.cell) else { continue };
            acc.0.push(r.accuracy);
            acc.1.push(p.a_hat);
            if let Some(t) = p.t_hat {
                time.0.push(r.time_seconds);
                time.1.push(t);
            }
        }
        evaluations.push(PredictorEvaluation::compute(step.step, PredictorKind::Accuracy, &acc.0, &acc.1));
        if state.options.mode == SearchMode::Popnas {
            evaluations.push(PredictorEvaluation::compute(step.step, PredictorKind::Time, &time.0, &time.1));
        }
    }
    let mut ok: Vec<&EvalRecord> = state.records().filter(|r| r.is_ok()).collect();
    ok.sort_by(|x, y| record_order(x, y));
    RunReport {
        mode: state.options.mode,
        steps: state
            .steps
            .iter()
            .map(|s| StepSummary {
                step: s.step,
                candidates: s.candidates,
                trained: s.trained.len(),
                failed: s.trained.iter().filter(|r| !r.is_ok()).count(),
                exploration: s
                    .trained
                    .iter()
                    .filter(|r| r.source == super::RecordSource::Exploration)
                    .count(),
            })
            .collect(),
        networks: state.networks_trained(),
        total_time_seconds: ok.iter().map(|r| r.time_seconds).sum(),
        evaluations,
        top: ok.into_iter().take(5).cloned().collect(),
    }
}

/// Side-by-side numbers of an accuracy-only run and a Pareto run.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeComparison {
    pub pnas_networks: usize,
    pub popnas_networks: usize,
    /// `1 - popnas / pnas` network count.
    pub network_reduction: f64,
    pub pnas_time_seconds: f64,
    pub popnas_time_seconds: f64,
    /// `pnas / popnas` total training time.
    pub speedup: f64,
    pub pnas_best_accuracy: Option<f64>,
    pub popnas_best_accuracy: Option<f64>,
    /// `|pnas - popnas| / pnas` best accuracy.
    pub best_accuracy_relative_gap: Option<f64>,
}

pub fn compare_reports(pnas: &RunReport, popnas: &RunReport) -> ModeComparison {
    let gap = match (pnas.top1_accuracy(), popnas.top1_accuracy()) {
        (Some(p), Some(q)) if p > 0.0 => Some((p - q).abs() / p),
        _ => None,
    };
    ModeComparison {
        pnas_networks: pnas.networks,
        popnas_networks: popnas.networks,
        network_reduction: 1.0 - popnas.networks as f64 / pnas.networks as f64,
        pnas_time_seconds: pnas.total_time_seconds,
        popnas_time_seconds: popnas.total_time_seconds,
        speedup: pnas.total_time_seconds / popnas.total_time_seconds,
        pnas_best_accuracy: pnas.top1_accuracy(),
        popnas_best_accuracy: popnas.top1_accuracy(),
        best_accuracy_relative_gap: gap,
    }
}

impl ModeComparison {
    pub fn summary_text(&self) -> String {
        let f = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_else(|| "-".into());
        format!(
            "networks: pnas={} popnas={} reduction={:.4}\n\
             total training time (s): pnas={} popnas={} speedup={:.4}\n\
             best accuracy: pnas={} popnas={} relative gap={}\n",
            self.pnas_networks,
            self.popnas_networks,
            self.network_reduction,
            self.pnas_time_seconds,
            self.popnas_time_seconds,
            self.speedup,
            f(self.pnas_best_accuracy),
            f(self.popnas_best_accuracy),
            f(self.best_accuracy_relative_gap),
        )
    }
}

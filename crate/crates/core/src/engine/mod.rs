//! The progressive search loop.
//!
//! Step 0 trains the empty cell, step 1 every unique single-block cell.
//! Each later step `b` fits the surrogates on everything trained so far,
//! expands the cells trained at `b - 1`, predicts every expansion and
//! trains the selected ones: the predicted Pareto front (capped at `K`) plus,
//! before the last step, up to `J` exploration cells. In [`SearchMode::Pnas`]
//! the selection is simply the `K` most accurate predictions.
//!
//! With a run directory, every completed step is persisted so an
//! interrupted run can be resumed (see [`resume`]).

mod persist;
mod report;

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cell::{canonicalize_cell, Block, CellSpec, InputRef};
use crate::error::{Error, Result};
use crate::evaluator::{CachedEvaluator, EvalRequest, EvalStatus, Evaluator};
use crate::exploration::{build_epf, build_exploration_sets, ExplorationLogRow, ExplorationSets};
use crate::pareto::{apply_time_constraint, build_pareto_front, ScoredCandidate};
use crate::space::{enumerate_initial_blocks, expand_cell, SearchSpaceConfig};
use crate::surrogate::{
    fit_predictor, init_dynamic_reindex, DynamicReindexTable, FeatureContext, PredictorKind, RegressorSpec,
    DEFAULT_FOLDS,
};

pub use persist::{config_hash, load_run, RUN_FORMAT_VERSION};
pub use report::{compare_reports, report, ModeComparison, RunReport, StepSummary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SearchMode {
    /// Pareto front plus exploration, with a time predictor.
    #[default]
    Popnas,
    /// Accuracy-only top-K selection.
    Pnas,
}

impl SearchMode {
    pub fn as_str(self) -> &'static str {
        match self {
            SearchMode::Popnas => "popnas",
            SearchMode::Pnas => "pnas",
        }
    }
}

impl fmt::Display for SearchMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SearchMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "popnas" => Ok(SearchMode::Popnas),
            "pnas" => Ok(SearchMode::Pnas),
            _ => Err(Error::Config(format!("unknown mode {s:?}, expected popnas or pnas"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecordSource {
    Initial,
    Pareto,
    Exploration,
}

impl RecordSource {
    pub fn as_str(self) -> &'static str {
        match self {
            RecordSource::Initial => "initial",
            RecordSource::Pareto => "pareto",
            RecordSource::Exploration => "exploration",
        }
    }
}

impl FromStr for RecordSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "initial" => Ok(RecordSource::Initial),
            "pareto" => Ok(RecordSource::Pareto),
            "exploration" => Ok(RecordSource::Exploration),
            _ => Err(Error::Config(format!("unknown record source {s:?}"))),
        }
    }
}

/// One training outcome. Failed records carry NaN metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRecord {
    /// Canonical form.
    pub cell: CellSpec,
    pub accuracy: f64,
    pub time_seconds: f64,
    pub step: usize,
    pub source: RecordSource,
    pub status: EvalStatus,
}

impl EvalRecord {
    pub fn is_ok(&self) -> bool {
        self.status == EvalStatus::Ok
    }
}

/// Surrogate output for one cell; `t_hat` is absent without a time predictor.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub cell: CellSpec,
    pub a_hat: f64,
    pub t_hat: Option<f64>,
}

impl From<&ScoredCandidate> for Prediction {
    fn from(c: &ScoredCandidate) -> Self {
        Prediction {
            cell: c.cell.clone(),
            a_hat: c.a_hat,
            t_hat: Some(c.t_hat),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepExploration {
    pub sets: ExplorationSets,
    pub log: Vec<ExplorationLogRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    /// Unique expansions scored by the surrogates (0 for steps 0 and 1).
    pub candidates: usize,
    /// The Pareto front, or the top-K selection in pnas mode.
    pub front: Vec<Prediction>,
    /// Predictions of every cell selected for training, in training order.
    pub predictions: Vec<Prediction>,
    pub exploration: Option<StepExploration>,
    pub trained: Vec<EvalRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchOptions {
    pub mode: SearchMode,
    /// Root seed for evaluator requests and fold shuffles.
    pub seed: u64,
    pub folds: usize,
    pub accuracy_regressor: RegressorSpec,
    pub time_regressor: RegressorSpec,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions {
            mode: SearchMode::Popnas,
            seed: 0,
            folds: DEFAULT_FOLDS,
            accuracy_regressor: RegressorSpec::Ridge { alpha: 1.0 },
            time_regressor: RegressorSpec::BoostedStumps {
                rounds: 150,
                learning_rate: 0.1,
            },
        }
    }
}

/// Execution knobs that do not affect results.
#[derive(Debug, Clone, Default)]
pub struct RunControl {
    /// Concurrent evaluations per step; 0 means one per available core.
    pub workers: usize,
    /// Stop once this step has completed.
    pub stop_after_step: Option<usize>,
    pub run_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunState {
    pub config: SearchSpaceConfig,
    pub options: SearchOptions,
    pub evaluator: String,
    pub reindex: Option<DynamicReindexTable>,
    /// Completed steps, `steps[b].step == b`.
    pub steps: Vec<StepRecord>,
}

impl RunState {
    pub fn new(config: SearchSpaceConfig, options: SearchOptions, evaluator: String) -> Self {
        RunState {
            config,
            options,
            evaluator,
            reindex: None,
            steps: Vec::new(),
        }
    }

    pub fn is_complete(&self) -> bool {
        self.steps.len() > self.config.blocks
    }

    pub fn records(&self) -> impl Iterator<Item = &EvalRecord> {
        self.steps.iter().flat_map(|s| s.trained.iter())
    }

    /// Every training attempt, failed ones included.
    pub fn networks_trained(&self) -> usize {
        self.records().count()
    }

    /// Most accurate successful record; ties go to the faster, then the
    /// smaller cell.
    pub fn best(&self) -> Option<&EvalRecord> {
        let mut ok: Vec<&EvalRecord> = self.records().filter(|r| r.is_ok()).collect();
        ok.sort_by(|x, y| record_order(x, y));
        ok.first().copied()
    }
}

pub(crate) fn record_order(x: &EvalRecord, y: &EvalRecord) -> std::cmp::Ordering {
    y.accuracy
        .total_cmp(&x.accuracy)
        .then(x.time_seconds.total_cmp(&y.time_seconds))
        .then_with(|| x.cell.cmp(&y.cell))
}

/// Runs a fresh search. With `control.run_dir` set, the directory must not
/// hold a previous run.
pub fn run_search(
    config: &SearchSpaceConfig,
    evaluator: &dyn Evaluator,
    options: SearchOptions,
    control: &RunControl,
) -> Result<RunState> {
    config.validate()?;
    if options.folds == 0 {
        return Err(Error::Config("folds must be >= 1".into()));
    }
    let mut state = RunState::new(config.clone(), options, evaluator.describe());
    if let Some(dir) = &control.run_dir {
        persist::init_run_dir(dir, &state)?;
    }
    drive(&mut state, evaluator, control)?;
    Ok(state)
}

/// Continues a persisted run from its first incomplete step. A supplied
/// `config` must hash identically to the stored snapshot. Resuming a
/// complete run changes nothing.
pub fn resume(
    run_dir: &Path,
    evaluator: &dyn Evaluator,
    config: Option<&SearchSpaceConfig>,
    control: &RunControl,
) -> Result<RunState> {
    let mut state = load_run(run_dir)?;
    if let Some(cfg) = config {
        let stored = config_hash(&state.config)?;
        if config_hash(cfg)? != stored {
            return Err(Error::run_state(run_dir, "configuration differs from the run's snapshot"));
        }
    }
    persist::discard_partial_steps(run_dir, state.steps.len())?;
    let control = RunControl {
        run_dir: Some(run_dir.to_path_buf()),
        ..control.clone()
    };
    drive(&mut state, evaluator, &control)?;
    Ok(state)
}

fn drive(state: &mut RunState, evaluator: &dyn Evaluator, control: &RunControl) -> Result<()> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(control.workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot build worker pool: {e}")))?;
    let cached = CachedEvaluator::new(evaluator);
    for r in state.records().filter(|r| r.is_ok()) {
        let req = EvalRequest::new("", r.cell.clone(), &state.config, state.options.seed);
        cached.insert(&req, crate::evaluator::EvalResult::ok("", r.accuracy, r.time_seconds));
    }
    while !state.is_complete() {
        if control.stop_after_step.is_some_and(|s| state.steps.len() > s) {
            break;
        }
        let b = state.steps.len();
        let record = match b {
            0 => {
                let trained = train(state, &cached, &pool, 0, vec![(CellSpec::empty(), RecordSource::Initial)])?;
                plain_step(0, trained)
            }
            1 => {
                let cells = enumerate_initial_blocks(&state.config)
                    .into_iter()
                    .map(|c| (c, RecordSource::Initial))
                    .collect();
                let trained = train(state, &cached, &pool, 1, cells)?;
                state.reindex = Some(reindex_from(state, &trained)?);
                plain_step(1, trained)
            }
            _ => search_step(state, &cached, &pool, b)?,
        };
        log::info!(
            "step {b}: {} candidates, {} trained",
            record.candidates,
            record.trained.len()
        );
        state.steps.push(record);
        if let Some(dir) = &control.run_dir {
            persist::write_step(dir, state)?;
        }
    }
    if state.is_complete() {
        if let Some(dir) = &control.run_dir {
            persist::write_report(dir, state)?;
        }
    }
    Ok(())
}

fn plain_step(step: usize, trained: Vec<EvalRecord>) -> StepRecord {
    StepRecord {
        step,
        candidates: 0,
        front: Vec::new(),
        predictions: Vec::new(),
        exploration: None,
        trained,
    }
}

fn reindex_from(state: &RunState, trained: &[EvalRecord]) -> Result<DynamicReindexTable> {
    let empty = &state.steps[0].trained[0];
    let catalog = state.config.catalog()?;
    let flat_times = catalog
        .ids()
        .map(|op| {
            let flat = CellSpec::new(vec![Block::new(InputRef(-1), op, InputRef(-1), op)]);
            trained
                .iter()
                .find(|r| r.cell == flat && r.is_ok())
                .map(|r| r.time_seconds)
                .ok_or_else(|| {
                    Error::Evaluator(format!(
                        "no successful flat cell for operator {:?}",
                        catalog.name(op).unwrap_or("?")
                    ))
                })
        })
        .collect::<Result<Vec<f64>>>()?;
    init_dynamic_reindex(&flat_times, empty.time_seconds)
}

fn fold_seed(root: u64, step: usize, kind: PredictorKind) -> u64 {
    let k = match kind {
        PredictorKind::Accuracy => 0,
        PredictorKind::Time => 1,
    };
    root.wrapping_add(2 * step as u64 + k)
}

fn search_step(
    state: &RunState,
    evaluator: &dyn Evaluator,
    pool: &rayon::ThreadPool,
    b: usize,
) -> Result<StepRecord> {
    let cfg = &state.config;
    let opts = &state.options;
    let ok: Vec<&EvalRecord> = state.records().filter(|r| r.is_ok()).collect();
    let parents: Vec<&CellSpec> = state.steps[b - 1]
        .trained
        .iter()
        .filter(|r| r.is_ok())
        .map(|r| &r.cell)
        .collect();
    let mut expansions = BTreeSet::new();
    for p in parents {
        for c in expand_cell(p, cfg)? {
            expansions.insert(canonicalize_cell(&c)?);
        }
    }
    let cells: Vec<CellSpec> = expansions.into_iter().collect();
    if cells.is_empty() || ok.is_empty() {
        let mut s = plain_step(b, Vec::new());
        s.candidates = cells.len();
        return Ok(s);
    }
    let ctx = FeatureContext {
        config: cfg,
        reindex: state.reindex.as_ref(),
    };
    let folds = opts.folds.min(ok.len());
    let fit = |kind: PredictorKind, spec: &RegressorSpec| {
        let data: Vec<(CellSpec, f64)> = ok
            .iter()
            .map(|r| {
                let y = match kind {
                    PredictorKind::Accuracy => r.accuracy,
                    PredictorKind::Time => r.time_seconds,
                };
                (r.cell.clone(), y)
            })
            .collect();
        fit_predictor(&data, kind, spec, &ctx, folds, fold_seed(opts.seed, b, kind))
    };
    let a_hat = fit(PredictorKind::Accuracy, &opts.accuracy_regressor)?.predict(&cells, &ctx)?;

    let (front, exploration, selected) = match opts.mode {
        SearchMode::Popnas => {
            let t_hat = fit(PredictorKind::Time, &opts.time_regressor)?.predict(&cells, &ctx)?;
            let scored: Vec<ScoredCandidate> = cells
                .iter()
                .zip(a_hat.iter().zip(&t_hat))
                .map(|(c, (&a, &t))| ScoredCandidate::new(c.clone(), a, t))
                .collect();
            let scored = apply_time_constraint(scored, cfg.time_constraint_seconds);
            let front = build_pareto_front(&scored, cfg.beam_size)?;
            let mut selected: Vec<(Prediction, RecordSource)> =
                front.members.iter().map(|m| (m.into(), RecordSource::Pareto)).collect();
            let exploration = if b < cfg.blocks {
                let sets = build_exploration_sets(&front, b, cfg);
                let epf = build_epf(&scored, &front, &sets, cfg.exploration_beam_size);
                selected.extend(epf.members().iter().map(|m| (m.into(), RecordSource::Exploration)));
                Some(StepExploration { sets, log: epf.log })
            } else {
                None
            };
            let front = front.members.iter().map(Prediction::from).collect();
            (front, exploration, selected)
        }
        SearchMode::Pnas => {
            let mut ranked: Vec<Prediction> = cells
                .iter()
                .zip(&a_hat)
                .map(|(c, &a)| Prediction {
                    cell: c.clone(),
                    a_hat: a,
                    t_hat: None,
                })
                .collect();
            ranked.sort_by(|x, y| y.a_hat.total_cmp(&x.a_hat).then_with(|| x.cell.cmp(&y.cell)));
            ranked.truncate(cfg.beam_size);
            let selected = ranked.iter().map(|p| (p.clone(), RecordSource::Pareto)).collect();
            (ranked, None, selected)
        }
    };
    let jobs = selected.iter().map(|(p, s)| (p.cell.clone(), *s)).collect();
    let trained = train(state, evaluator, pool, b, jobs)?;
    Ok(StepRecord {
        step: b,
        candidates: cells.len(),
        front,
        predictions: selected.into_iter().map(|(p, _)| p).collect(),
        exploration,
        trained,
    })
}

fn train(
    state: &RunState,
    evaluator: &dyn Evaluator,
    pool: &rayon::ThreadPool,
    step: usize,
    jobs: Vec<(CellSpec, RecordSource)>,
) -> Result<Vec<EvalRecord>> {
    let requests: Vec<(EvalRequest, RecordSource)> = jobs
        .into_iter()
        .enumerate()
        .map(|(i, (cell, source))| {
            let cell = canonicalize_cell(&cell)?;
            Ok((
                EvalRequest::new(format!("s{step}-{i}"), cell, &state.config, state.options.seed),
                source,
            ))
        })
        .collect::<Result<_>>()?;
    let results: Vec<_> = pool.install(|| requests.par_iter().map(|(r, _)| evaluator.evaluate(r)).collect());
    let records: Vec<EvalRecord> = requests
        .into_iter()
        .zip(results)
        .map(|((req, source), res)| {
            if let EvalStatus::Failed(reason) = &res.status {
                log::warn!("step {step}: request {} failed: {reason}", req.request_id);
            }
            EvalRecord {
                cell: req.cell,
                accuracy: res.accuracy,
                time_seconds: res.time_seconds,
                step,
                source,
                status: res.status,
            }
        })
        .collect();
    if !records.is_empty() && records.iter().all(|r| !r.is_ok()) {
        return Err(Error::EvaluatorCascade { step });
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluator::{EvalResult, SyntheticEvaluator, SyntheticParams};
    use std::collections::HashSet;

    pub(crate) fn tiny_config() -> SearchSpaceConfig {
        SearchSpaceConfig {
            operators: vec!["3x3 dconv".into(), "identity".into(), "2x2 maxpool".into()],
            blocks: 3,
            beam_size: 8,
            exploration_beam_size: 2,
            ..SearchSpaceConfig::default()
        }
    }

    pub(crate) fn synthetic(cfg: &SearchSpaceConfig) -> SyntheticEvaluator {
        SyntheticEvaluator::new(cfg.catalog().unwrap(), SyntheticParams::default())
    }

    fn run(cfg: &SearchSpaceConfig, mode: SearchMode) -> RunState {
        let opts = SearchOptions {
            mode,
            seed: 3,
            ..SearchOptions::default()
        };
        run_search(cfg, &synthetic(cfg), opts, &RunControl::default()).unwrap()
    }

    #[test]
    fn single_block_search_only_sweeps() {
        let cfg = SearchSpaceConfig {
            blocks: 1,
            ..tiny_config()
        };
        let s = run(&cfg, SearchMode::Popnas);
        assert_eq!(s.steps.len(), 2);
        assert_eq!(s.networks_trained(), 1 + 21);
        assert!(s.is_complete());
    }

    #[test]
    fn tiny_popnas_run_respects_budget() {
        let cfg = tiny_config();
        let s = run(&cfg, SearchMode::Popnas);
        assert_eq!(s.steps.len(), 4);
        assert_eq!(s.steps[1].trained.len(), 21);
        let mut seen = HashSet::new();
        for step in &s.steps {
            for r in &step.trained {
                assert!(seen.insert(r.cell.clone()), "retrained {:?}", r.cell);
                assert_eq!(canonicalize_cell(&r.cell).unwrap(), r.cell);
                assert_eq!(r.cell.len(), step.step);
            }
            if step.step >= 2 {
                assert!(step.trained.len() <= cfg.beam_size + cfg.exploration_beam_size);
                assert!(step.front.len() <= cfg.beam_size);
                let pareto = step.trained.iter().filter(|r| r.source == RecordSource::Pareto).count();
                assert_eq!(pareto, step.front.len());
            }
        }
        assert!(s.steps[3].exploration.is_none());
        assert!(s.steps[3].trained.iter().all(|r| r.source != RecordSource::Exploration));
        assert!(s.steps[2].exploration.is_some());
        let reindex = s.reindex.as_ref().unwrap();
        assert_eq!(reindex.indices.iter().cloned().fold(f64::MIN, f64::max), 1.0);
    }

    #[test]
    fn pnas_run_selects_top_k() {
        let cfg = tiny_config();
        let s = run(&cfg, SearchMode::Pnas);
        for step in &s.steps[2..] {
            assert!(step.exploration.is_none());
            assert_eq!(step.trained.len(), cfg.beam_size.min(step.candidates));
            assert!(step.predictions.iter().all(|p| p.t_hat.is_none()));
            for w in step.predictions.windows(2) {
                assert!(w[0].a_hat >= w[1].a_hat);
            }
        }
    }

    #[test]
    fn runs_are_deterministic_and_worker_count_is_irrelevant() {
        let cfg = tiny_config();
        let opts = SearchOptions {
            seed: 11,
            ..SearchOptions::default()
        };
        let one = RunControl {
            workers: 1,
            ..RunControl::default()
        };
        let four = RunControl {
            workers: 4,
            ..RunControl::default()
        };
        let a = run_search(&cfg, &synthetic(&cfg), opts.clone(), &one).unwrap();
        let b = run_search(&cfg, &synthetic(&cfg), opts, &four).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn time_constraint_limits_predictions() {
        let cfg = SearchSpaceConfig {
            time_constraint_seconds: Some(75.0),
            ..tiny_config()
        };
        let s = run(&cfg, SearchMode::Popnas);
        for step in &s.steps[2..] {
            for p in &step.predictions {
                assert!(p.t_hat.unwrap() <= 75.0);
            }
        }
    }

    struct Flaky<'a>(&'a SyntheticEvaluator, usize);

    impl Evaluator for Flaky<'_> {
        fn evaluate(&self, r: &EvalRequest) -> EvalResult {
            if r.cell.len() >= self.1 {
                return EvalResult::failed(&r.request_id, "out of memory");
            }
            let idx: usize = r.request_id.rsplit('-').next().unwrap().parse().unwrap();
            if r.cell.len() == 2 && idx.is_multiple_of(3) {
                return EvalResult::failed(&r.request_id, "flaky");
            }
            self.0.evaluate(r)
        }
        fn describe(&self) -> String {
            "flaky".into()
        }
    }

    #[test]
    fn failures_are_excluded_and_total_failure_aborts() {
        let cfg = tiny_config();
        let syn = synthetic(&cfg);
        let s = run_search(&cfg, &Flaky(&syn, 9), SearchOptions::default(), &RunControl::default()).unwrap();
        let failed: Vec<&EvalRecord> = s.records().filter(|r| !r.is_ok()).collect();
        assert!(!failed.is_empty());
        assert!(failed.iter().all(|r| r.accuracy.is_nan()));
        // only successful step-2 cells are expanded
        let parents: HashSet<CellSpec> = s.steps[2].trained.iter().filter(|r| r.is_ok()).map(|r| r.cell.clone()).collect();
        for r in &s.steps[3].trained {
            let prefix_ok = parents.iter().any(|p| {
                expand_cell(p, &cfg).unwrap().iter().any(|c| canonicalize_cell(c).unwrap() == r.cell)
            });
            assert!(prefix_ok);
        }
        let err = run_search(&cfg, &Flaky(&syn, 2), SearchOptions::default(), &RunControl::default()).unwrap_err();
        assert!(matches!(err, Error::EvaluatorCascade { step: 2 }));
    }

    #[test]
    fn stop_after_step_leaves_a_partial_state() {
        let cfg = tiny_config();
        let control = RunControl {
            stop_after_step: Some(1),
            ..RunControl::default()
        };
        let s = run_search(&cfg, &synthetic(&cfg), SearchOptions::default(), &control).unwrap();
        assert_eq!(s.steps.len(), 2);
        assert!(!s.is_complete());
    }

    #[test]
    fn mode_and_source_names() {
        assert_eq!("pnas".parse::<SearchMode>().unwrap(), SearchMode::Pnas);
        assert!("nas".parse::<SearchMode>().is_err());
        for s in [RecordSource::Initial, RecordSource::Pareto, RecordSource::Exploration] {
            assert_eq!(s.as_str().parse::<RecordSource>().unwrap(), s);
        }
    }
}

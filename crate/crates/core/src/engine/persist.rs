//! Run directory layout:
//!
//! ```text
//! config.snapshot          search-space TOML the run was started with
//! state.meta               JSON: options, config hash, completed steps, reindex
//! reindex.csv              operator,index (after step 1)
//! step_<b>/trained.csv     cell,accuracy,time_seconds,source,status,reason
//! step_<b>/predictions.csv cell,a_hat,t_hat          (b >= 2)
//! step_<b>/pareto.csv      rank,cell,a_hat,t_hat     (b >= 2)
//! step_<b>/exploration.csv cell,base_points,bonus_points,delta_points,accepted
//! report.csv               step,kind,mape,spearman   (complete runs)
//! summary.txt              human-readable report     (complete runs)
//! ```
//!
//! `state.meta` is rewritten atomically after each step's files, so a step
//! directory without a matching `completed_steps` entry is discarded on
//! resume.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cell::{CellSpec, InputRef, OperatorCatalog};
use crate::error::{Error, Result};
use crate::evaluator::EvalStatus;
use crate::exploration::{write_exploration_csv, ExplorationLogRow, ExplorationScore, ExplorationSets};
use crate::hash::fnv1a;
use crate::space::SearchSpaceConfig;
use crate::surrogate::{write_evaluation_csv, DynamicReindexTable};

use super::{report, EvalRecord, Prediction, RecordSource, RunState, SearchOptions, StepExploration, StepRecord};

pub const RUN_FORMAT_VERSION: u32 = 1;

const SNAPSHOT: &str = "config.snapshot";
const META: &str = "state.meta";

/// FNV-1a of the TOML serialization, as 16 hex digits.
pub fn config_hash(config: &SearchSpaceConfig) -> Result<String> {
    Ok(format!("{:016x}", fnv1a(config.to_toml()?.as_bytes())))
}

#[derive(Debug, Serialize, Deserialize)]
struct StepMeta {
    step: usize,
    candidates: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    exploration_operators: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    exploration_inputs: Option<Vec<i16>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct StateMeta {
    format_version: u32,
    config_hash: String,
    options: SearchOptions,
    evaluator: String,
    completed_steps: usize,
    reindex: Option<DynamicReindexTable>,
    steps: Vec<StepMeta>,
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(tmp, path)?;
    Ok(())
}

pub(super) fn init_run_dir(dir: &Path, state: &RunState) -> Result<()> {
    if dir.join(META).exists() || dir.join(SNAPSHOT).exists() {
        return Err(Error::run_state(dir, "already holds a run; resume it or pick another directory"));
    }
    fs::create_dir_all(dir)?;
    write_atomic(&dir.join(SNAPSHOT), state.config.to_toml()?.as_bytes())?;
    write_meta(dir, state)
}

fn write_meta(dir: &Path, state: &RunState) -> Result<()> {
    let catalog = state.config.catalog()?;
    let meta = StateMeta {
        format_version: RUN_FORMAT_VERSION,
        config_hash: config_hash(&state.config)?,
        options: state.options.clone(),
        evaluator: state.evaluator.clone(),
        completed_steps: state.steps.len(),
        reindex: state.reindex.clone(),
        steps: state
            .steps
            .iter()
            .map(|s| StepMeta {
                step: s.step,
                candidates: s.candidates,
                exploration_operators: s.exploration.as_ref().map(|e| {
                    e.sets
                        .operators
                        .iter()
                        .map(|o| catalog.name(*o).unwrap_or_default().to_owned())
                        .collect()
                }),
                exploration_inputs: s.exploration.as_ref().map(|e| e.sets.inputs.iter().map(|i| i.0).collect()),
            })
            .collect(),
    };
    let mut text = serde_json::to_string_pretty(&meta)?;
    text.push('\n');
    write_atomic(&dir.join(META), text.as_bytes())
}

fn step_dir(dir: &Path, step: usize) -> std::path::PathBuf {
    dir.join(format!("step_{step}"))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

pub(super) fn write_step(dir: &Path, state: &RunState) -> Result<()> {
    let step = state.steps.last().expect("a completed step");
    let catalog = state.config.catalog()?;
    let sd = step_dir(dir, step.step);
    fs::create_dir_all(&sd)?;

    let mut w = csv::Writer::from_path(sd.join("trained.csv"))?;
    w.write_record(["cell", "accuracy", "time_seconds", "source", "status", "reason"])?;
    for r in &step.trained {
        let (status, reason) = match &r.status {
            EvalStatus::Ok => ("ok", ""),
            EvalStatus::Failed(m) => ("failed", m.as_str()),
        };
        w.write_record([
            r.cell.to_text(&catalog),
            opt(finite(r.accuracy)),
            opt(finite(r.time_seconds)),
            r.source.as_str().to_owned(),
            status.to_owned(),
            reason.to_owned(),
        ])?;
    }
    w.flush()?;

    if step.step >= 2 {
        write_predictions(&sd.join("predictions.csv"), &step.predictions, &catalog, false)?;
        write_predictions(&sd.join("pareto.csv"), &step.front, &catalog, true)?;
    }
    if let Some(e) = &step.exploration {
        write_exploration_csv(&e.log, &catalog, fs::File::create(sd.join("exploration.csv"))?)?;
    }
    if step.step == 1 {
        if let Some(r) = &state.reindex {
            r.write_csv(&catalog, fs::File::create(dir.join("reindex.csv"))?)?;
        }
    }
    write_meta(dir, state)
}

fn write_predictions(path: &Path, rows: &[Prediction], catalog: &OperatorCatalog, ranked: bool) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    if ranked {
        w.write_record(["rank", "cell", "a_hat", "t_hat"])?;
    } else {
        w.write_record(["cell", "a_hat", "t_hat"])?;
    }
    for (i, p) in rows.iter().enumerate() {
        let mut rec = Vec::with_capacity(4);
        if ranked {
            rec.push((i + 1).to_string());
        }
        rec.extend([p.cell.to_text(catalog), p.a_hat.to_string(), opt(p.t_hat)]);
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub(super) fn write_report(dir: &Path, state: &RunState) -> Result<()> {
    let rep = report(state);
    write_evaluation_csv(&rep.evaluations, fs::File::create(dir.join("report.csv"))?)?;
    fs::write(dir.join("summary.txt"), rep.summary_text(&state.config.catalog()?))?;
    Ok(())
}

/// Removes step directories beyond the last completed step.
pub(super) fn discard_partial_steps(dir: &Path, completed: usize) -> Result<()> {
    for entry in fs::read_dir(dir)? {
        let entry = entry?;
        let name = entry.file_name();
        let Some(n) = name.to_str().and_then(|n| n.strip_prefix("step_")).and_then(|n| n.parse::<usize>().ok())
        else {
            continue;
        };
        if n >= completed {
            fs::remove_dir_all(entry.path())?;
        }
    }
    Ok(())
}

#[derive(Deserialize)]
struct TrainedRow {
    cell: String,
    accuracy: Option<f64>,
    time_seconds: Option<f64>,
    source: String,
    status: String,
    reason: String,
}

#[derive(Deserialize)]
struct PredictionRow {
    cell: String,
    a_hat: f64,
    t_hat: Option<f64>,
}

#[derive(Deserialize)]
struct ExplorationRow {
    cell: String,
    base_points: u32,
    bonus_points: u32,
    delta_points: u32,
    accepted: bool,
}

fn read_predictions(path: &Path, catalog: &OperatorCatalog) -> Result<Vec<Prediction>> {
    csv::Reader::from_path(path)?
        .deserialize::<PredictionRow>()
        .map(|row| {
            let row = row?;
            Ok(Prediction {
                cell: CellSpec::parse(&row.cell, catalog)?,
                a_hat: row.a_hat,
                t_hat: row.t_hat,
            })
        })
        .collect()
}

/// Loads every completed step of a run directory.
pub fn load_run(dir: &Path) -> Result<RunState> {
    let meta_text = fs::read_to_string(dir.join(META))
        .map_err(|e| Error::run_state(dir, format!("cannot read {META}: {e}")))?;
    let meta: StateMeta =
        serde_json::from_str(&meta_text).map_err(|e| Error::run_state(dir, format!("corrupt {META}: {e}")))?;
    if meta.format_version != RUN_FORMAT_VERSION {
        return Err(Error::run_state(
            dir,
            format!("format version {} is not {RUN_FORMAT_VERSION}", meta.format_version),
        ));
    }
    let snapshot = fs::read_to_string(dir.join(SNAPSHOT))
        .map_err(|e| Error::run_state(dir, format!("cannot read {SNAPSHOT}: {e}")))?;
    let config = SearchSpaceConfig::from_toml(&snapshot)?;
    if config_hash(&config)? != meta.config_hash {
        return Err(Error::run_state(dir, "config snapshot does not match the recorded hash"));
    }
    if meta.steps.len() != meta.completed_steps {
        return Err(Error::run_state(dir, "step metadata does not match completed_steps"));
    }
    let catalog = config.catalog()?;
    let mut state = RunState::new(config, meta.options, meta.evaluator);
    state.reindex = meta.reindex;
    for sm in &meta.steps {
        let b = sm.step;
        if b != state.steps.len() {
            return Err(Error::run_state(dir, format!("step {b} out of order")));
        }
        let sd = step_dir(dir, b);
        let trained = csv::Reader::from_path(sd.join("trained.csv"))?
            .deserialize::<TrainedRow>()
            .map(|row| {
                let row = row?;
                let status = match row.status.as_str() {
                    "ok" => EvalStatus::Ok,
                    "failed" => EvalStatus::Failed(row.reason),
                    s => return Err(Error::run_state(dir, format!("unknown status {s:?}"))),
                };
                Ok(EvalRecord {
                    cell: CellSpec::parse(&row.cell, &catalog)?,
                    accuracy: row.accuracy.unwrap_or(f64::NAN),
                    time_seconds: row.time_seconds.unwrap_or(f64::NAN),
                    step: b,
                    source: row.source.parse::<RecordSource>()?,
                    status,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let (front, predictions) = if b >= 2 {
            (
                read_predictions(&sd.join("pareto.csv"), &catalog)?,
                read_predictions(&sd.join("predictions.csv"), &catalog)?,
            )
        } else {
            (Vec::new(), Vec::new())
        };
        let exploration = match (&sm.exploration_operators, &sm.exploration_inputs) {
            (Some(ops), Some(inputs)) => {
                let operators = ops
                    .iter()
                    .map(|n| catalog.id(n).ok_or_else(|| Error::run_state(dir, format!("unknown operator {n:?}"))))
                    .collect::<Result<_>>()?;
                let log = csv::Reader::from_path(sd.join("exploration.csv"))?
                    .deserialize::<ExplorationRow>()
                    .map(|row| {
                        let row = row?;
                        Ok(ExplorationLogRow {
                            cell: CellSpec::parse(&row.cell, &catalog)?,
                            score: ExplorationScore {
                                base: row.base_points,
                                bonus: row.bonus_points,
                                delta: row.delta_points,
                            },
                            accepted: row.accepted,
                        })
                    })
                    .collect::<Result<_>>()?;
                Some(StepExploration {
                    sets: ExplorationSets {
                        operators,
                        inputs: inputs.iter().map(|&i| InputRef(i)).collect(),
                    },
                    log,
                })
            }
            _ => None,
        };
        state.steps.push(StepRecord {
            step: b,
            candidates: sm.candidates,
            front,
            predictions,
            exploration,
            trained,
        });
    }
    Ok(state)
}

//! Exploration step: pick up to `J` extra cells that exercise inputs and
//! operators underused in the Pareto front.
//!
//! Scoring (per candidate, against the running exploration front):
//!
//! * +1 per input slot holding an exploration input, +2 more if that input's
//!   share of exploration-input uses so far is `<= 1/|inputs|`, +1 more if
//!   `|i_exp| <= |o_exp|`;
//! * the same per operator slot, with `|i_exp| >= |o_exp|` for the last bonus;
//! * if the score is positive, one extra point per 4% relative accuracy
//!   difference and per 10% relative time difference from the last accepted
//!   member.
//!
//! The share bonus and the difference points only apply once the front
//! holds a member. A candidate is accepted with score >= 8 when both
//! exploration sets are populated, >= 4 when only one is.

use std::collections::{BTreeMap, HashSet};
use std::io::Write;

use crate::cell::{CellSpec, InputRef, OperatorCatalog, OperatorId};
use crate::error::Result;
use crate::pareto::{front_order, ParetoFront, ScoredCandidate};
use crate::space::SearchSpaceConfig;

/// Acceptance threshold when both exploration sets are non-empty.
pub const THRESHOLD_BOTH: u32 = 8;
/// Acceptance threshold when exactly one exploration set is non-empty.
pub const THRESHOLD_ONE: u32 = 4;
/// Relative accuracy difference worth one point.
pub const ACCURACY_STEP: f64 = 0.04;
/// Relative time difference worth one point.
pub const TIME_STEP: f64 = 0.10;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ExplorationSets {
    pub operators: Vec<OperatorId>,
    pub inputs: Vec<InputRef>,
}

impl ExplorationSets {
    pub fn is_empty(&self) -> bool {
        self.operators.is_empty() && self.inputs.is_empty()
    }

    /// Minimum accepted score, or `None` when both sets are empty.
    pub fn threshold(&self) -> Option<u32> {
        match (self.operators.is_empty(), self.inputs.is_empty()) {
            (true, true) => None,
            (false, false) => Some(THRESHOLD_BOTH),
            _ => Some(THRESHOLD_ONE),
        }
    }
}

/// Operators with front frequency below `1/(5|O|)` and inputs of position
/// `step` with frequency below `1/(5|I_step|)`. Frequencies are occurrence
/// counts over all operator (input) slots of the front cells.
pub fn build_exploration_sets(front: &ParetoFront, step: usize, config: &SearchSpaceConfig) -> ExplorationSets {
    let n_ops = config.operators.len();
    let universe: Vec<InputRef> = (1..=config.max_lookback)
        .rev()
        .map(InputRef::lookback)
        .chain((0..step.saturating_sub(1)).map(InputRef::block))
        .collect();
    let mut op_counts = vec![0usize; n_ops];
    let mut input_counts: BTreeMap<InputRef, usize> = BTreeMap::new();
    let mut slots = 0usize;
    for m in &front.members {
        for b in &m.cell.blocks {
            for op in b.operators() {
                if op.index() < n_ops {
                    op_counts[op.index()] += 1;
                }
            }
            for i in b.inputs() {
                *input_counts.entry(i).or_default() += 1;
            }
            slots += 2;
        }
    }
    if slots == 0 {
        return ExplorationSets::default();
    }
    // count / slots < 1 / (5 n)  <=>  5 n count < slots
    let operators = (0..n_ops)
        .filter(|&o| 5 * n_ops * op_counts[o] < slots)
        .map(|o| OperatorId(o as u16))
        .collect();
    let inputs = universe
        .iter()
        .copied()
        .filter(|i| 5 * universe.len() * input_counts.get(i).copied().unwrap_or(0) < slots)
        .collect();
    ExplorationSets { operators, inputs }
}

/// Running state of the exploration front.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EpfState {
    pub members: Vec<ScoredCandidate>,
    /// Total exploration-input slots among accepted members, `|i_exp|`.
    pub i_exp_count: usize,
    /// Total exploration-operator slots among accepted members, `|o_exp|`.
    pub o_exp_count: usize,
    pub input_uses: BTreeMap<InputRef, usize>,
    pub op_uses: BTreeMap<OperatorId, usize>,
}

impl EpfState {
    fn accept(&mut self, candidate: ScoredCandidate, sets: &ExplorationSets) {
        for b in &candidate.cell.blocks {
            for i in b.inputs() {
                if sets.inputs.contains(&i) {
                    *self.input_uses.entry(i).or_default() += 1;
                    self.i_exp_count += 1;
                }
            }
            for o in b.operators() {
                if sets.operators.contains(&o) {
                    *self.op_uses.entry(o).or_default() += 1;
                    self.o_exp_count += 1;
                }
            }
        }
        self.members.push(candidate);
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ExplorationScore {
    /// One point per slot using an exploration input or operator.
    pub base: u32,
    pub bonus: u32,
    pub delta: u32,
}

impl ExplorationScore {
    pub fn total(&self) -> u32 {
        self.base + self.bonus + self.delta
    }
}

fn steps(relative: f64, step: f64) -> u32 {
    if !relative.is_finite() {
        return 0;
    }
    // tolerance keeps exact multiples such as 0.08 / 0.04 on the upper side
    (relative / step + 1e-9).floor().max(0.0) as u32
}

pub fn exploration_score(candidate: &ScoredCandidate, sets: &ExplorationSets, state: &EpfState) -> ExplorationScore {
    let first = state.members.is_empty();
    let mut s = ExplorationScore::default();
    let (i_exp, o_exp) = (state.i_exp_count, state.o_exp_count);
    for b in &candidate.cell.blocks {
        for i in b.inputs() {
            if sets.inputs.contains(&i) {
                s.base += 1;
                // uses / i_exp <= 1 / |I~|
                let uses = state.input_uses.get(&i).copied().unwrap_or(0);
                if !first && uses * sets.inputs.len() <= i_exp {
                    s.bonus += 2;
                }
                if i_exp <= o_exp {
                    s.bonus += 1;
                }
            }
        }
        for o in b.operators() {
            if sets.operators.contains(&o) {
                s.base += 1;
                let uses = state.op_uses.get(&o).copied().unwrap_or(0);
                if !first && uses * sets.operators.len() <= o_exp {
                    s.bonus += 2;
                }
                if i_exp >= o_exp {
                    s.bonus += 1;
                }
            }
        }
    }
    if s.base > 0 {
        if let Some(last) = state.members.last() {
            if last.a_hat != 0.0 {
                s.delta += steps((candidate.a_hat - last.a_hat).abs() / last.a_hat, ACCURACY_STEP);
            }
            if last.t_hat != 0.0 {
                s.delta += steps((candidate.t_hat - last.t_hat).abs() / last.t_hat, TIME_STEP);
            }
        }
    }
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExplorationLogRow {
    pub cell: CellSpec,
    pub score: ExplorationScore,
    pub accepted: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EpfOutcome {
    pub state: EpfState,
    /// Every candidate scored with a positive base, in evaluation order.
    pub log: Vec<ExplorationLogRow>,
}

impl EpfOutcome {
    pub fn members(&self) -> &[ScoredCandidate] {
        &self.state.members
    }
}

/// Scans candidates outside the front in front order (accuracy descending,
/// time ascending, canonical encoding), accepting those that reach the
/// threshold, until `j` members are accepted.
pub fn build_epf(candidates: &[ScoredCandidate], front: &ParetoFront, sets: &ExplorationSets, j: usize) -> EpfOutcome {
    let mut outcome = EpfOutcome::default();
    let Some(threshold) = sets.threshold() else {
        return outcome;
    };
    if j == 0 {
        return outcome;
    }
    let in_front: HashSet<&CellSpec> = front.members.iter().map(|m| &m.cell).collect();
    let mut order: Vec<&ScoredCandidate> = candidates.iter().filter(|c| !in_front.contains(&c.cell)).collect();
    order.sort_by(|a, b| front_order(a, b));
    let mut seen: HashSet<&CellSpec> = HashSet::new();
    for c in order {
        if !seen.insert(&c.cell) {
            continue;
        }
        let score = exploration_score(c, sets, &outcome.state);
        if score.base == 0 {
            continue;
        }
        let accepted = score.total() >= threshold;
        outcome.log.push(ExplorationLogRow {
            cell: c.cell.clone(),
            score,
            accepted,
        });
        if accepted {
            outcome.state.accept(c.clone(), sets);
            if outcome.state.members.len() >= j {
                break;
            }
        }
    }
    outcome
}

/// CSV with columns `cell,base_points,bonus_points,delta_points,accepted`.
pub fn write_exploration_csv<W: Write>(log: &[ExplorationLogRow], catalog: &OperatorCatalog, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["cell", "base_points", "bonus_points", "delta_points", "accepted"])?;
    for r in log {
        w.write_record([
            r.cell.to_text(catalog),
            r.score.base.to_string(),
            r.score.bonus.to_string(),
            r.score.delta.to_string(),
            r.accepted.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

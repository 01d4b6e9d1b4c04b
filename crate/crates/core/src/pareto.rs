//! Time-constraint filtering and Pareto-front construction over predicted
//! `(accuracy, time)` pairs: maximize accuracy, minimize time.

use std::cmp::Ordering;
use std::collections::HashSet;
use std::io::{Read, Write};

use serde::Deserialize;

use crate::cell::{canonicalize_cell, CellSpec, OperatorCatalog};
use crate::error::{Error, Result};

/// An expanded cell with its predicted accuracy and training time.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredCandidate {
    /// Canonical form.
    pub cell: CellSpec,
    pub a_hat: f64,
    pub t_hat: f64,
}

impl ScoredCandidate {
    pub fn new(cell: CellSpec, a_hat: f64, t_hat: f64) -> Self {
        ScoredCandidate { cell, a_hat, t_hat }
    }
}

/// Front ordering: accuracy descending, then time ascending, then canonical
/// encoding ascending.
pub fn front_order(x: &ScoredCandidate, y: &ScoredCandidate) -> Ordering {
    y.a_hat
        .total_cmp(&x.a_hat)
        .then(x.t_hat.total_cmp(&y.t_hat))
        .then_with(|| x.cell.cmp(&y.cell))
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParetoFront {
    /// Accuracy descending, time strictly decreasing.
    pub members: Vec<ScoredCandidate>,
}

impl ParetoFront {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains_cell(&self, cell: &CellSpec) -> bool {
        self.members.iter().any(|m| &m.cell == cell)
    }
}

/// Drops candidates predicted slower than `limit`; the boundary is kept.
pub fn apply_time_constraint(candidates: Vec<ScoredCandidate>, limit: Option<f64>) -> Vec<ScoredCandidate> {
    match limit {
        None => candidates,
        Some(t) => candidates.into_iter().filter(|c| c.t_hat <= t).collect(),
    }
}

/// `x` is at least as accurate and at most as slow as `y`, strictly better
/// on one of the two.
pub fn dominates(x: &ScoredCandidate, y: &ScoredCandidate) -> bool {
    x.a_hat >= y.a_hat && x.t_hat <= y.t_hat && (x.a_hat > y.a_hat || x.t_hat < y.t_hat)
}

/// Non-dominated candidates, seeded from the most accurate one and truncated
/// to the `k` most accurate. Equivalent cells are collapsed first; among
/// exact `(a_hat, t_hat)` ties the canonically smallest cell is kept.
pub fn build_pareto_front(candidates: &[ScoredCandidate], k: usize) -> Result<ParetoFront> {
    if candidates.iter().any(|c| !c.a_hat.is_finite() || !c.t_hat.is_finite()) {
        return Err(Error::NonFinite("candidate predictions"));
    }
    let mut sorted: Vec<ScoredCandidate> = candidates
        .iter()
        .map(|c| {
            Ok(ScoredCandidate {
                cell: canonicalize_cell(&c.cell)?,
                ..c.clone()
            })
        })
        .collect::<Result<_>>()?;
    sorted.sort_by(front_order);
    let mut seen = HashSet::new();
    let mut members = Vec::new();
    let mut best_time = f64::INFINITY;
    for c in sorted {
        if !seen.insert(c.cell.clone()) {
            continue;
        }
        if c.t_hat < best_time {
            best_time = c.t_hat;
            members.push(c);
        }
    }
    members.truncate(k);
    Ok(ParetoFront { members })
}

#[derive(Deserialize)]
struct PredictionRow {
    cell: String,
    a_hat: f64,
    t_hat: f64,
}

/// Reads candidates from a CSV with (at least) columns `cell,a_hat,t_hat`.
pub fn read_candidates_csv<R: Read>(input: R, catalog: &OperatorCatalog) -> Result<Vec<ScoredCandidate>> {
    csv::Reader::from_reader(input)
        .deserialize::<PredictionRow>()
        .map(|row| {
            let row = row?;
            Ok(ScoredCandidate::new(CellSpec::parse(&row.cell, catalog)?, row.a_hat, row.t_hat))
        })
        .collect()
}

/// CSV with columns `rank,cell,a_hat,t_hat`, rank starting at 1.
pub fn write_front_csv<W: Write>(front: &ParetoFront, catalog: &OperatorCatalog, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["rank", "cell", "a_hat", "t_hat"])?;
    for (i, m) in front.members.iter().enumerate() {
        w.write_record([
            (i + 1).to_string(),
            m.cell.to_text(catalog),
            m.a_hat.to_string(),
            m.t_hat.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::cell::Block;
    use proptest::prelude::*;

    pub(crate) fn flat(op: u16) -> CellSpec {
        CellSpec::new(vec![Block::raw(-1, op, -1, op)])
    }

    fn cand(op: u16, a: f64, t: f64) -> ScoredCandidate {
        ScoredCandidate::new(flat(op), a, t)
    }

    /// O(n^2) reference: classical non-dominated set, collapsing equivalent
    /// cells and exact (a, t) ties to the canonically smallest cell.
    pub(crate) fn brute_force_front(cands: &[ScoredCandidate]) -> Vec<ScoredCandidate> {
        let mut uniq: Vec<ScoredCandidate> = Vec::new();
        let mut canon: Vec<ScoredCandidate> = cands
            .iter()
            .map(|c| ScoredCandidate::new(canonicalize_cell(&c.cell).unwrap(), c.a_hat, c.t_hat))
            .collect();
        canon.sort_by(front_order);
        for c in canon {
            if !uniq.iter().any(|u| u.cell == c.cell) {
                uniq.push(c);
            }
        }
        let mut out: Vec<ScoredCandidate> = Vec::new();
        for y in &uniq {
            if uniq.iter().any(|x| dominates(x, y)) {
                continue;
            }
            let tie_winner = uniq
                .iter()
                .filter(|x| x.a_hat == y.a_hat && x.t_hat == y.t_hat)
                .map(|x| &x.cell)
                .min()
                .unwrap();
            if tie_winner == &y.cell {
                out.push(y.clone());
            }
        }
        out.sort_by(front_order);
        out
    }

    #[test]
    fn time_constraint() {
        let cs = vec![cand(0, 0.5, 50.0), cand(1, 0.6, 100.0), cand(2, 0.7, 150.0)];
        assert_eq!(apply_time_constraint(cs.clone(), None), cs);
        assert!(apply_time_constraint(cs.clone(), Some(0.0)).is_empty());
        let kept: Vec<f64> = apply_time_constraint(cs, Some(100.0)).iter().map(|c| c.t_hat).collect();
        assert_eq!(kept, vec![50.0, 100.0]);
    }

    #[test]
    fn domination() {
        assert!(dominates(&cand(0, 0.9, 50.0), &cand(1, 0.8, 60.0)));
        assert!(!dominates(&cand(0, 0.9, 50.0), &cand(1, 0.9, 50.0)));
        assert!(!dominates(&cand(0, 0.9, 80.0), &cand(1, 0.8, 50.0)));
        assert!(!dominates(&cand(1, 0.8, 50.0), &cand(0, 0.9, 80.0)));
    }

    #[test]
    fn four_candidate_example() {
        let cs = vec![
            cand(0, 0.9, 100.0),
            cand(1, 0.85, 120.0),
            cand(2, 0.8, 50.0),
            cand(3, 0.7, 60.0),
        ];
        let front = build_pareto_front(&cs, 10).unwrap();
        let pts: Vec<(f64, f64)> = front.members.iter().map(|m| (m.a_hat, m.t_hat)).collect();
        assert_eq!(pts, vec![(0.9, 100.0), (0.8, 50.0)]);
        assert_eq!(front.members, brute_force_front(&cs));
        assert_eq!(build_pareto_front(&cs, 1).unwrap().members.len(), 1);
        assert_eq!(build_pareto_front(&cs, 1).unwrap().members[0].a_hat, 0.9);
    }

    #[test]
    fn edge_cases() {
        assert!(build_pareto_front(&[], 5).unwrap().is_empty());
        assert_eq!(build_pareto_front(&[cand(4, 0.1, 1.0)], 5).unwrap().len(), 1);
        let ties = vec![cand(3, 0.5, 10.0), cand(1, 0.5, 10.0), cand(2, 0.5, 10.0)];
        let front = build_pareto_front(&ties, 5).unwrap();
        assert_eq!(front.members, vec![cand(1, 0.5, 10.0)]);
        assert!(build_pareto_front(&[cand(0, f64::NAN, 1.0)], 5).is_err());
        // equal accuracy: only the fastest survives
        let front = build_pareto_front(&[cand(0, 0.5, 12.0), cand(1, 0.5, 10.0)], 5).unwrap();
        assert_eq!(front.members, vec![cand(1, 0.5, 10.0)]);
    }

    #[test]
    fn equivalent_cells_are_collapsed() {
        let x = CellSpec::new(vec![Block::raw(-1, 0, -1, 0), Block::raw(-2, 1, -2, 1)]);
        let y = CellSpec::new(vec![Block::raw(-2, 1, -2, 1), Block::raw(-1, 0, -1, 0)]);
        let front = build_pareto_front(
            &[ScoredCandidate::new(x, 0.9, 10.0), ScoredCandidate::new(y.clone(), 0.9, 10.0)],
            5,
        )
        .unwrap();
        assert_eq!(front.members, vec![ScoredCandidate::new(y, 0.9, 10.0)]);
    }

    #[test]
    fn csv_round_trip() {
        let cat = crate::space::SearchSpaceConfig::default().catalog().unwrap();
        let cs = vec![
            cand(0, 0.9, 100.0),
            cand(1, 0.85, 120.0),
            cand(2, 0.8, 50.0),
            cand(3, 0.7, 60.0),
        ];
        let mut input = String::from("cell,a_hat,t_hat\n");
        for c in &cs {
            input.push_str(&format!("\"{}\",{},{}\n", c.cell.to_text(&cat), c.a_hat, c.t_hat));
        }
        let read = read_candidates_csv(input.as_bytes(), &cat).unwrap();
        assert_eq!(read, cs);
        let mut out = Vec::new();
        write_front_csv(&build_pareto_front(&read, 128).unwrap(), &cat, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.starts_with("rank,cell,a_hat,t_hat\n1,\"[(-1,3x3 dconv,-1,3x3 dconv)]\",0.9,100\n"));
    }

    pub(crate) fn arb_candidates(max: usize) -> impl Strategy<Value = Vec<ScoredCandidate>> {
        // coarse grids force duplicate and tied values
        prop::collection::vec((0u16..12, 0u32..40, 0u32..40), 0..max).prop_map(|v| {
            v.into_iter()
                .map(|(op, a, t)| cand(op, a as f64 / 40.0, t as f64 * 5.0))
                .collect()
        })
    }

    proptest! {
        #[test]
        fn matches_brute_force(cs in arb_candidates(200)) {
            let front = build_pareto_front(&cs, usize::MAX).unwrap();
            prop_assert_eq!(&front.members, &brute_force_front(&cs));
            for w in front.members.windows(2) {
                prop_assert!(w[0].a_hat > w[1].a_hat && w[0].t_hat > w[1].t_hat);
            }
            // a cell listed twice is judged by its best-ordered entry
            let mut firsts: Vec<ScoredCandidate> = cs.clone();
            firsts.sort_by(front_order);
            let mut seen = HashSet::new();
            firsts.retain(|c| seen.insert(c.cell.clone()));
            for c in &firsts {
                prop_assert!(!front.members.iter().any(|m| dominates(c, m)));
            }
            prop_assert_eq!(build_pareto_front(&front.members, usize::MAX).unwrap(), front);
        }

        #[test]
        fn truncation_keeps_most_accurate(cs in arb_candidates(100), k in 1usize..6) {
            let full = build_pareto_front(&cs, usize::MAX).unwrap();
            let cut = build_pareto_front(&cs, k).unwrap();
            prop_assert_eq!(&cut.members[..], &full.members[..full.len().min(k)]);
        }
    }
}

//! Closed-form stand-in for network training.
//!
//! ```text
//! scale    = (E / E_ref) * (cells / cells_ref)      cells = M*N + M - 1
//! time     = (E / E_ref) * t0 + scale * (sum_slots cost(op) * (1 + level_factor * (level - 1))
//!                                        + unused_penalty * unused_outputs)
//! quality  = sum_slots quality(op) + depth_bonus * (depth - 1) + lookback_bonus * [both lookbacks]
//! accuracy = a0 + (a_max - a0) * (1 - exp(-quality / quality_scale)) + noise * u
//! ```
//!
//! `level` is the block's depth in the cell DAG (1 for blocks reading only
//! lookbacks). `u` is uniform in `[-1, 1)`, derived from the FNV-1a hash of
//! the canonical cell text followed by the seed as 8 little-endian bytes:
//! `u = (h >> 11) / 2^53 * 2 - 1`. The empty cell gets `(a0, t0)` scaled by
//! epochs only, with no noise. Everything is computed on the canonical form.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::cell::{canonicalize_cell, CellSpec, OperatorCatalog};
use crate::hash::{fnv1a, Fnv1a};
use crate::netgraph::analyze_cell_dag;

use super::{EvalRequest, EvalResult, Evaluator};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatorModel {
    /// Seconds per operator slot in the reference network.
    pub cost: f64,
    pub quality: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticParams {
    pub a0: f64,
    pub a_max: f64,
    pub t0: f64,
    pub quality_scale: f64,
    pub depth_bonus: f64,
    pub lookback_bonus: f64,
    pub noise: f64,
    pub level_factor: f64,
    /// Must stay below twice the cheapest operator cost so that appending a
    /// block always adds time.
    pub unused_penalty: f64,
    pub reference_epochs: u32,
    pub reference_cells: u32,
    /// Keyed by operator name; names not listed get a hash-derived model.
    pub operators: BTreeMap<String, OperatorModel>,
}

impl Default for SyntheticParams {
    fn default() -> Self {
        // depthwise-separable convolutions are the efficient choice, full
        // and stacked convolutions pay more for similar quality
        let ops = [
            ("3x3 dconv", 4.0, 0.82),
            ("5x5 dconv", 5.0, 0.90),
            ("7x7 dconv", 7.0, 0.88),
            ("1x3-3x1 conv", 6.0, 0.66),
            ("1x5-5x1 conv", 8.0, 0.70),
            ("1x7-7x1 conv", 10.0, 0.72),
            ("identity", 1.0, 0.28),
            ("1x1 conv", 3.0, 0.42),
            ("3x3 conv", 10.0, 0.86),
            ("5x5 conv", 18.0, 0.89),
            ("2x2 maxpool", 2.0, 0.46),
            ("2x2 avgpool", 2.0, 0.40),
        ];
        SyntheticParams {
            a0: 0.3,
            a_max: 0.95,
            t0: 60.0,
            quality_scale: 4.0,
            depth_bonus: 0.15,
            lookback_bonus: 0.1,
            noise: 0.01,
            level_factor: 0.1,
            unused_penalty: 1.5,
            reference_epochs: 21,
            reference_cells: 8,
            operators: ops
                .iter()
                .map(|&(n, cost, quality)| (n.to_owned(), OperatorModel { cost, quality }))
                .collect(),
        }
    }
}

impl SyntheticParams {
    /// Model for `name`; unknown names get cost in `[1, 16)` and quality in
    /// `[0.2, 1.0)` from the FNV-1a hash of the name.
    pub fn operator(&self, name: &str) -> OperatorModel {
        self.operators.get(name).copied().unwrap_or_else(|| {
            let h = fnv1a(name.as_bytes());
            OperatorModel {
                cost: 1.0 + (h % 1500) as f64 / 100.0,
                quality: 0.2 + ((h >> 16) % 800) as f64 / 1000.0,
            }
        })
    }
}

pub struct SyntheticEvaluator {
    catalog: OperatorCatalog,
    params: SyntheticParams,
}

impl SyntheticEvaluator {
    pub fn new(catalog: OperatorCatalog, params: SyntheticParams) -> Self {
        SyntheticEvaluator { catalog, params }
    }

    pub fn params(&self) -> &SyntheticParams {
        &self.params
    }

    /// `(accuracy, time_seconds)`; the cell must reference only catalog
    /// operators.
    pub fn measure(&self, cell: &CellSpec, motifs: u32, normals: u32, epochs: u32, seed: u64) -> Result<(f64, f64), String> {
        let p = &self.params;
        let cell = canonicalize_cell(cell).map_err(|e| e.to_string())?;
        let epoch_scale = epochs as f64 / p.reference_epochs as f64;
        if cell.is_empty() {
            return Ok((p.a0, epoch_scale * p.t0));
        }
        let cells = motifs * normals + motifs - 1;
        let scale = epoch_scale * cells as f64 / p.reference_cells as f64;
        let mut level = vec![1usize; cell.len()];
        let mut cost = 0.0;
        let mut quality = 0.0;
        for (k, b) in cell.blocks.iter().enumerate() {
            for i in b.inputs() {
                if let Some(j) = i.block_index() {
                    level[k] = level[k].max(level[j] + 1);
                }
            }
            let mult = 1.0 + p.level_factor * (level[k] - 1) as f64;
            for op in b.operators() {
                let name = self.catalog.name(op).ok_or_else(|| format!("unknown operator id {}", op.0))?;
                let m = p.operator(name);
                cost += m.cost * mult;
                quality += m.quality;
            }
        }
        let dag = analyze_cell_dag(&cell);
        let time = epoch_scale * p.t0 + scale * (cost + p.unused_penalty * dag.unused_outputs as f64);
        quality += p.depth_bonus * (dag.depth_blocks - 1) as f64;
        if dag.uses_multiple_lookbacks {
            quality += p.lookback_bonus;
        }
        let mut h = Fnv1a::default();
        h.update(cell.to_text(&self.catalog).as_bytes()).update(&seed.to_le_bytes());
        let u = (h.finish() >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0;
        let acc = p.a0 + (p.a_max - p.a0) * (1.0 - (-quality / p.quality_scale).exp()) + p.noise * u;
        Ok((acc.clamp(0.0, 1.0), time))
    }
}

impl Evaluator for SyntheticEvaluator {
    fn evaluate(&self, r: &EvalRequest) -> EvalResult {
        match self.measure(&r.cell, r.motifs, r.normals_per_motif, r.epochs, r.seed) {
            Ok((a, t)) => EvalResult::ok(&r.request_id, a, t),
            Err(e) => EvalResult::failed(&r.request_id, e),
        }
    }

    fn describe(&self) -> String {
        "synthetic".into()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cell::Block;
    use crate::pareto::{build_pareto_front, ScoredCandidate};
    use crate::space::{enumerate_initial_blocks, SearchSpaceConfig};
    use proptest::prelude::*;

    fn eval() -> SyntheticEvaluator {
        SyntheticEvaluator::new(SearchSpaceConfig::default().catalog().unwrap(), SyntheticParams::default())
    }

    fn measure(cell: &CellSpec) -> (f64, f64) {
        eval().measure(cell, 3, 2, 21, 7).unwrap()
    }

    #[test]
    fn empty_cell_is_the_baseline() {
        assert_eq!(measure(&CellSpec::empty()), (0.3, 60.0));
    }

    #[test]
    fn hand_computed_single_block() {
        // (-1, identity, -1, 1x1 conv): cost 1 + 3, one unused output
        let (a, t) = measure(&CellSpec::new(vec![Block::raw(-1, 6, -1, 7)]));
        assert!((t - (60.0 + 4.0 + 1.5)).abs() < 1e-12);
        let base = 0.3 + 0.65 * (1.0 - (-(0.28 + 0.42) / 4.0f64).exp());
        assert!((a - base).abs() <= 0.01);
    }

    #[test]
    fn network_settings_scale_time() {
        let cell = CellSpec::new(vec![Block::raw(-1, 6, -1, 7)]);
        let (_, t) = eval().measure(&cell, 3, 2, 42, 7).unwrap();
        assert!((t - 2.0 * 65.5).abs() < 1e-9);
        let (_, t) = eval().measure(&cell, 2, 2, 21, 7).unwrap();
        assert!((t - (60.0 + 5.5 * 5.0 / 8.0)).abs() < 1e-9);
    }

    #[test]
    fn equivalent_cells_measure_identically() {
        let x = CellSpec::new(vec![Block::raw(-1, 0, -2, 5), Block::raw(-2, 3, 0, 9)]);
        let y = CellSpec::new(vec![Block::raw(-2, 5, -1, 0), Block::raw(0, 9, -2, 3)]);
        assert_eq!(measure(&x), measure(&y));
        let r = |id: &str, c: &CellSpec| EvalRequest {
            request_id: id.into(),
            cell: c.clone(),
            motifs: 3,
            normals_per_motif: 2,
            epochs: 21,
            seed: 1,
        };
        let (ra, rb) = (eval().evaluate(&r("a", &x)), eval().evaluate(&r("b", &y)));
        assert_eq!((ra.accuracy, ra.time_seconds), (rb.accuracy, rb.time_seconds));
        assert_eq!(eval().evaluate(&r("a", &x)), ra);
    }

    #[test]
    fn unknown_operator_fails() {
        let r = EvalRequest {
            request_id: "z".into(),
            cell: CellSpec::new(vec![Block::raw(-1, 40, -1, 40)]),
            motifs: 3,
            normals_per_motif: 2,
            epochs: 21,
            seed: 1,
        };
        assert!(!eval().evaluate(&r).is_ok());
    }

    #[test]
    fn hash_fallback_is_stable_and_bounded() {
        let p = SyntheticParams::default();
        let m = p.operator("sep 9x9");
        assert_eq!(m, p.operator("sep 9x9"));
        assert!((1.0..16.0).contains(&m.cost) && (0.2..1.0).contains(&m.quality));
    }

    #[test]
    fn single_block_front_is_non_degenerate() {
        let cfg = SearchSpaceConfig::default();
        let cands: Vec<ScoredCandidate> = enumerate_initial_blocks(&cfg)
            .into_iter()
            .map(|c| {
                let (a, t) = measure(&c);
                ScoredCandidate::new(c, a, t)
            })
            .collect();
        let front = build_pareto_front(&cands, usize::MAX).unwrap();
        assert!(front.len() >= 3, "front has {} members", front.len());
    }

    proptest! {
        #[test]
        fn appending_a_block_adds_time(cell in crate::cell::tests::arb_cell(5, 12, 2), seed in 0u64..4) {
            let e = eval();
            for n in 0..cell.len() {
                let short = CellSpec::new(cell.blocks[..n].to_vec());
                let long = CellSpec::new(cell.blocks[..n + 1].to_vec());
                let (_, ts) = e.measure(&short, 3, 2, 21, seed).unwrap();
                let (_, tl) = e.measure(&long, 3, 2, 21, seed).unwrap();
                prop_assert!(ts < tl);
            }
        }

        #[test]
        fn accuracy_in_range(cell in crate::cell::tests::arb_cell(5, 12, 2), seed in any::<u64>()) {
            let (a, t) = eval().measure(&cell, 3, 2, 21, seed).unwrap();
            prop_assert!((0.0..=1.0).contains(&a) && t > 0.0);
        }
    }
}

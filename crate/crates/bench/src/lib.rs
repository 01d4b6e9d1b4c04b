//! Deterministic fixtures for the benchmarks, built from the default search
//! space and the synthetic evaluator.

use cellnas::{
    enumerate_initial_blocks, expand_cell, init_dynamic_reindex, Block, CellSpec, DynamicReindexTable, InputRef,
    ScoredCandidate, SearchSpaceConfig, SyntheticEvaluator, SyntheticParams,
};

pub struct Fixture {
    pub config: SearchSpaceConfig,
    pub evaluator: SyntheticEvaluator,
    pub reindex: DynamicReindexTable,
}

impl Fixture {
    pub fn new() -> Self {
        let config = SearchSpaceConfig::default();
        let catalog = config.catalog().expect("default catalog");
        let evaluator = SyntheticEvaluator::new(catalog.clone(), SyntheticParams::default());
        let time = |c: &CellSpec| evaluator.measure(c, 3, 2, 21, 0).expect("catalog cell").1;
        let flat: Vec<f64> = catalog
            .ids()
            .map(|op| time(&CellSpec::new(vec![Block::new(InputRef(-1), op, InputRef(-1), op)])))
            .collect();
        let reindex = init_dynamic_reindex(&flat, time(&CellSpec::empty())).expect("non-degenerate");
        Fixture {
            config,
            evaluator,
            reindex,
        }
    }

    /// A parent with `blocks` blocks, grown by always taking the
    /// `pick`-th expansion modulo the expansion count.
    pub fn cell(&self, blocks: usize, pick: usize) -> CellSpec {
        let mut cell = CellSpec::empty();
        for _ in 0..blocks {
            let next = if cell.is_empty() {
                enumerate_initial_blocks(&self.config)
            } else {
                expand_cell(&cell, &self.config).expect("expandable")
            };
            cell = next[pick % next.len()].clone();
        }
        cell
    }

    /// Synthetic `(accuracy, time)` scores of the expansions of a few
    /// `blocks - 1` parents, at least `n` candidates, truncated to `n`.
    pub fn candidates(&self, blocks: usize, n: usize) -> Vec<ScoredCandidate> {
        let mut out = Vec::with_capacity(n);
        let mut pick = 0;
        while out.len() < n {
            let parent = self.cell(blocks - 1, pick);
            for c in expand_cell(&parent, &self.config).expect("expandable") {
                let (a, t) = self.evaluator.measure(&c, 3, 2, 21, 0).expect("catalog cell");
                out.push(ScoredCandidate::new(c, a, t));
            }
            pick += 97;
        }
        out.truncate(n);
        out
    }
}

impl Default for Fixture {
    fn default() -> Self {
        Self::new()
    }
}

use crate::cell::{canonicalize_cell, CellSpec};
use crate::error::{Error, Result};
use crate::netgraph::{analyze_cell_dag, heaviest_path, NetworkSpec};
use crate::space::SearchSpaceConfig;

use super::reindex::DynamicReindexTable;

pub const TIME_FEATURE_NAMES: [&str; 9] = [
    "num_blocks",
    "num_cells",
    "op_score",
    "concat_outputs",
    "multiple_lookbacks",
    "dag_depth",
    "block_dependencies",
    "heaviest_path_op_pct",
    "lookback_op_pct",
];

/// Inputs of the time predictor, in the fixed order of
/// [`TIME_FEATURE_NAMES`].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TimeFeatureVector {
    pub num_blocks: usize,
    pub num_cells: usize,
    /// Sum of the reindex values of all `2b` operators.
    pub op_score: f64,
    pub concat_outputs: usize,
    pub multiple_lookbacks: bool,
    pub dag_depth: usize,
    pub block_dependencies: usize,
    pub heaviest_path_op_pct: f64,
    pub lookback_op_pct: f64,
}

impl TimeFeatureVector {
    pub fn to_array(&self) -> [f64; 9] {
        [
            self.num_blocks as f64,
            self.num_cells as f64,
            self.op_score,
            self.concat_outputs as f64,
            if self.multiple_lookbacks { 1.0 } else { 0.0 },
            self.dag_depth as f64,
            self.block_dependencies as f64,
            self.heaviest_path_op_pct,
            self.lookback_op_pct,
        ]
    }
}

/// Time features of `cell` inside `net`.
pub fn extract_time_features(
    cell: &CellSpec,
    reindex: &DynamicReindexTable,
    net: &NetworkSpec,
) -> Result<TimeFeatureVector> {
    time_features(cell, reindex, net.total_cells)
}

/// Same as [`extract_time_features`] with the stacked-cell count given
/// directly. Computed on the canonical form so equivalent encodings yield
/// bit-identical vectors.
///
/// When every operator of the cell has reindex 0 the two percentages fall
/// back to block-count fractions.
pub fn time_features(cell: &CellSpec, reindex: &DynamicReindexTable, num_cells: usize) -> Result<TimeFeatureVector> {
    if cell.is_empty() {
        return Ok(TimeFeatureVector {
            num_cells,
            ..Default::default()
        });
    }
    let cell = canonicalize_cell(cell)?;
    let b = cell.len();
    let weights = cell
        .blocks
        .iter()
        .map(|blk| Ok(reindex.index(blk.op1)? + reindex.index(blk.op2)?))
        .collect::<Result<Vec<f64>>>()?;
    let op_score: f64 = weights.iter().sum();
    let dag = analyze_cell_dag(&cell);
    let (path, path_score) = heaviest_path(&cell, |j| weights[j]);
    let lookback_score: f64 = cell
        .blocks
        .iter()
        .zip(&weights)
        .filter(|(blk, _)| blk.uses_lookback())
        .map(|(_, w)| w)
        .sum();
    let lookback_blocks = cell.blocks.iter().filter(|blk| blk.uses_lookback()).count();
    let (heaviest_path_op_pct, lookback_op_pct) = if op_score > 0.0 {
        (path_score / op_score, lookback_score / op_score)
    } else {
        (path.len() as f64 / b as f64, lookback_blocks as f64 / b as f64)
    };
    Ok(TimeFeatureVector {
        num_blocks: b,
        num_cells,
        op_score,
        concat_outputs: dag.unused_outputs,
        multiple_lookbacks: dag.uses_multiple_lookbacks,
        dag_depth: dag.depth_blocks,
        block_dependencies: dag.block_dependencies,
        heaviest_path_op_pct: heaviest_path_op_pct.clamp(0.0, 1.0),
        lookback_op_pct: lookback_op_pct.clamp(0.0, 1.0),
    })
}

/// Accuracy-predictor input: two `(B, 2)` grids of 1-indexed categorical
/// codes, zero-padded for missing blocks.
///
/// Input codes: lookback `-L` maps to 1, ..., `-1` to `L`, block `j` to
/// `L + 1 + j`. Operator codes are catalog id + 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AccuracyEncoding {
    pub inputs: Vec<[u16; 2]>,
    pub operators: Vec<[u16; 2]>,
}

pub fn encode_accuracy_features(cell: &CellSpec, config: &SearchSpaceConfig) -> Result<AccuracyEncoding> {
    if cell.len() > config.blocks {
        return Err(Error::invalid(config.blocks, "cell longer than the configured block count"));
    }
    let lookback = config.max_lookback as i32;
    let code = |v: i16| (lookback + 1 + v as i32) as u16;
    let mut inputs = vec![[0u16; 2]; config.blocks];
    let mut operators = vec![[0u16; 2]; config.blocks];
    for (row, blk) in cell.blocks.iter().enumerate() {
        inputs[row] = [code(blk.in1.0), code(blk.in2.0)];
        operators[row] = [blk.op1.0 + 1, blk.op2.0 + 1];
    }
    Ok(AccuracyEncoding { inputs, operators })
}

impl AccuracyEncoding {
    /// Flattened one-hot expansion, one group per grid slot. Padding (code 0)
    /// gets its own category.
    pub fn one_hot(&self, config: &SearchSpaceConfig) -> Vec<f64> {
        let input_cats = config.max_lookback as usize + config.blocks;
        let op_cats = config.operators.len() + 1;
        let mut out = vec![0.0; self.inputs.len() * 2 * (input_cats + op_cats)];
        let mut base = 0;
        for (ins, ops) in self.inputs.iter().zip(&self.operators) {
            for k in 0..2 {
                out[base + ins[k] as usize] = 1.0;
                base += input_cats;
                out[base + ops[k] as usize] = 1.0;
                base += op_cats;
            }
        }
        out
    }

    /// Position-independent counts: uses of each operator, uses of each
    /// input code, and the block count. Lets a linear model share weights
    /// across block positions, so what it learned on shorter cells carries
    /// over to the block being added.
    pub fn pooled(&self, config: &SearchSpaceConfig) -> Vec<f64> {
        let input_cats = config.max_lookback as usize + config.blocks;
        let n_ops = config.operators.len();
        let mut out = vec![0.0; n_ops + input_cats + 1];
        for (ins, ops) in self.inputs.iter().zip(&self.operators) {
            for k in 0..2 {
                if ops[k] > 0 {
                    out[ops[k] as usize - 1] += 1.0;
                    out[n_ops + ins[k] as usize - 1] += 1.0;
                }
            }
        }
        out[n_ops + input_cats] = self.operators.iter().filter(|o| o[0] > 0).count() as f64;
        out
    }

    /// [`one_hot`](Self::one_hot) followed by [`pooled`](Self::pooled).
    pub fn feature_vector(&self, config: &SearchSpaceConfig) -> Vec<f64> {
        let mut v = self.one_hot(config);
        v.extend(self.pooled(config));
        v
    }
}

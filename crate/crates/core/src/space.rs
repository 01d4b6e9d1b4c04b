//! Search-space configuration, per-position input sets, enumeration of
//! single-block cells, progressive expansion and cardinality accounting.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cell::{canonicalize_block, canonicalize_cell, Block, CellSpec, InputRef, OperatorCatalog};
use crate::error::{Error, Result};

/// The twelve operators of the default catalog, in id order.
pub const DEFAULT_OPERATORS: [&str; 12] = [
    "3x3 dconv",
    "5x5 dconv",
    "7x7 dconv",
    "1x3-3x1 conv",
    "1x5-5x1 conv",
    "1x7-7x1 conv",
    "identity",
    "1x1 conv",
    "3x3 conv",
    "5x5 conv",
    "2x2 maxpool",
    "2x2 avgpool",
];

/// Search parameters, read from a TOML file.
///
/// ```toml
/// operators = ["3x3 conv", "identity"]
/// max_lookback = 2
/// blocks = 5
/// beam_size = 128
/// exploration_beam_size = 16
/// time_constraint_seconds = 900.0   # optional
/// motifs = 3
/// normals_per_motif = 2
/// epochs = 21
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchSpaceConfig {
    pub operators: Vec<String>,
    pub max_lookback: u8,
    /// Target block count `B`.
    pub blocks: usize,
    /// Beam size `K`.
    pub beam_size: usize,
    /// Exploration beam size `J`.
    pub exploration_beam_size: usize,
    /// Optional time constraint `T` in seconds.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub time_constraint_seconds: Option<f64>,
    /// Motifs `M`.
    pub motifs: usize,
    /// Normal cells per motif `N`.
    pub normals_per_motif: usize,
    /// Training epochs `E`, forwarded to evaluators.
    pub epochs: u32,
}

impl Default for SearchSpaceConfig {
    fn default() -> Self {
        SearchSpaceConfig {
            operators: DEFAULT_OPERATORS.iter().map(|s| s.to_string()).collect(),
            max_lookback: 2,
            blocks: 5,
            beam_size: 128,
            exploration_beam_size: 16,
            time_constraint_seconds: None,
            motifs: 3,
            normals_per_motif: 2,
            epochs: 21,
        }
    }
}

impl SearchSpaceConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: SearchSpaceConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_owned()));
        if self.blocks < 1 {
            return fail("blocks must be >= 1");
        }
        if self.beam_size < 1 {
            return fail("beam_size must be >= 1");
        }
        if self.motifs < 1 {
            return fail("motifs must be >= 1");
        }
        if self.max_lookback < 1 {
            return fail("max_lookback must be >= 1");
        }
        if self.epochs < 1 {
            return fail("epochs must be >= 1");
        }
        if let Some(t) = self.time_constraint_seconds {
            if !t.is_finite() || t < 0.0 {
                return fail("time_constraint_seconds must be a non-negative number");
            }
        }
        self.catalog().map(|_| ())
    }

    pub fn catalog(&self) -> Result<OperatorCatalog> {
        OperatorCatalog::new(self.operators.iter().cloned())
    }

    /// Number of stacked cells in the assembled network (non-empty cell).
    pub fn stacked_cells(&self) -> usize {
        self.motifs * self.normals_per_motif + self.motifs - 1
    }
}

/// Legal inputs of the block at 1-based position `c`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InputSet {
    pub position: usize,
    pub members: Vec<InputRef>,
}

impl InputSet {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

pub fn input_set(position: usize, config: &SearchSpaceConfig) -> Result<InputSet> {
    if position < 1 || position > config.blocks {
        return Err(Error::PositionOutOfRange {
            position,
            max: config.blocks,
        });
    }
    Ok(input_set_unchecked(position, config.max_lookback))
}

fn input_set_unchecked(position: usize, max_lookback: u8) -> InputSet {
    let members = (1..=max_lookback)
        .rev()
        .map(InputRef::lookback)
        .chain((0..position - 1).map(InputRef::block))
        .collect();
    InputSet { position, members }
}

/// All canonical blocks buildable at a position: unordered pairs (with
/// repetition) of `(input, operator)` choices, sorted.
fn canonical_blocks(inputs: &[InputRef], n_ops: usize) -> Vec<Block> {
    let pairs: Vec<(InputRef, u16)> = inputs
        .iter()
        .flat_map(|&i| (0..n_ops as u16).map(move |o| (i, o)))
        .collect();
    let mut out = Vec::with_capacity(pairs.len() * (pairs.len() + 1) / 2);
    for (x, &(i1, o1)) in pairs.iter().enumerate() {
        for &(i2, o2) in &pairs[x..] {
            out.push(canonicalize_block(Block::new(
                i1,
                crate::cell::OperatorId(o1),
                i2,
                crate::cell::OperatorId(o2),
            )));
        }
    }
    out.sort();
    out
}

/// Every canonical single-block cell; `n(n+1)/2` of them with
/// `n = |inputs at position 1| * |operators|`.
pub fn enumerate_initial_blocks(config: &SearchSpaceConfig) -> Vec<CellSpec> {
    let inputs = input_set_unchecked(1, config.max_lookback);
    canonical_blocks(&inputs.members, config.operators.len())
        .into_iter()
        .map(|b| CellSpec::new(vec![b]))
        .collect()
}

/// Appends every canonical block at the next position. Results keep the
/// parent as prefix, are deduplicated by canonical form and sorted by it.
pub fn expand_cell(cell: &CellSpec, config: &SearchSpaceConfig) -> Result<Vec<CellSpec>> {
    if cell.len() >= config.blocks {
        return Err(Error::CellFull(config.blocks));
    }
    let inputs = input_set_unchecked(cell.len() + 1, config.max_lookback);
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for block in canonical_blocks(&inputs.members, config.operators.len()) {
        let child = cell.with_block(block);
        let canon = canonicalize_cell(&child)?;
        if seen.insert(canon.clone()) {
            out.push((canon, child));
        }
    }
    out.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(out.into_iter().map(|(_, child)| child).collect())
}

/// Exact block-sequence count `prod_c n_c (n_c + 1) / 2`, ignoring
/// equivalences between cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Cardinality {
    pub exact: u128,
}

impl Cardinality {
    /// `floor(log10(exact))`, or `None` for zero.
    pub fn order_of_magnitude(&self) -> Option<u32> {
        self.exact.checked_ilog10()
    }

    pub fn approx(&self) -> f64 {
        self.exact as f64
    }
}

pub fn cardinality_upper_bound(config: &SearchSpaceConfig) -> Cardinality {
    let n_ops = config.operators.len() as u128;
    let mut exact: u128 = 1;
    for c in 1..=config.blocks {
        let n = (config.max_lookback as u128 + c as u128 - 1) * n_ops;
        exact = exact.saturating_mul(n * (n + 1) / 2);
    }
    Cardinality { exact }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cell::{cells_equivalent, validate_cell};

    fn cfg(ops: usize, lookback: u8, blocks: usize) -> SearchSpaceConfig {
        SearchSpaceConfig {
            operators: (0..ops).map(|i| format!("op{i}")).collect(),
            max_lookback: lookback,
            blocks,
            ..SearchSpaceConfig::default()
        }
    }

    /// Ordered 4-tuples at a position, deduplicated by block canonicalization.
    fn brute_force_blocks(inputs: &[InputRef], n_ops: u16) -> usize {
        let mut set = HashSet::new();
        for &i1 in inputs {
            for o1 in 0..n_ops {
                for &i2 in inputs {
                    for o2 in 0..n_ops {
                        set.insert(canonicalize_block(Block::raw(i1.0, o1, i2.0, o2)));
                    }
                }
            }
        }
        set.len()
    }

    #[test]
    fn input_set_examples() {
        let c = SearchSpaceConfig::default();
        let s1 = input_set(1, &c).unwrap();
        assert_eq!(s1.members, vec![InputRef(-2), InputRef(-1)]);
        assert_eq!(input_set(2, &c).unwrap().members, vec![InputRef(-2), InputRef(-1), InputRef(0)]);
        assert_eq!(input_set(5, &c).unwrap().len(), 6);
        assert!(input_set(0, &c).is_err());
        assert!(input_set(6, &c).is_err());
    }

    #[test]
    fn initial_block_counts() {
        assert_eq!(enumerate_initial_blocks(&SearchSpaceConfig::default()).len(), 300);
        assert_eq!(enumerate_initial_blocks(&cfg(1, 1, 1)).len(), 1);
        let two = cfg(2, 2, 1);
        let inputs = input_set(1, &two).unwrap();
        let brute = brute_force_blocks(&inputs.members, 2);
        assert_eq!(brute, 10);
        assert_eq!(enumerate_initial_blocks(&two).len(), brute);
    }

    #[test]
    fn initial_counts_match_brute_force_for_many_shapes() {
        for ops in 1..=5 {
            for lb in 1..=3u8 {
                let c = cfg(ops, lb, 1);
                let brute = brute_force_blocks(&input_set(1, &c).unwrap().members, ops as u16);
                let n = lb as usize * ops;
                assert_eq!(brute, n * (n + 1) / 2);
                assert_eq!(enumerate_initial_blocks(&c).len(), brute);
            }
        }
    }

    #[test]
    fn initial_blocks_are_pairwise_inequivalent() {
        let cells = enumerate_initial_blocks(&cfg(3, 2, 1));
        for (i, a) in cells.iter().enumerate() {
            for b in &cells[i + 1..] {
                assert!(!cells_equivalent(a, b).unwrap());
            }
        }
    }

    #[test]
    fn expansion_counts() {
        let c = SearchSpaceConfig::default();
        let parent = CellSpec::new(vec![Block::raw(-1, 8, -1, 8)]);
        let kids = expand_cell(&parent, &c).unwrap();
        let brute = brute_force_blocks(&input_set(2, &c).unwrap().members, 12);
        assert_eq!(brute, 666);
        assert_eq!(kids.len(), 666);
        for k in &kids {
            assert_eq!(k.len(), 2);
            assert_eq!(k.blocks[0], parent.blocks[0]);
            validate_cell(k, &c).unwrap();
        }

        let tiny = cfg(1, 1, 3);
        let kids = expand_cell(&CellSpec::new(vec![Block::raw(-1, 0, -1, 0)]), &tiny).unwrap();
        assert_eq!(kids.len(), 3);

        assert!(expand_cell(&CellSpec::empty(), &cfg(0, 2, 3)).unwrap().is_empty());
        assert!(matches!(expand_cell(&parent, &cfg(2, 2, 1)), Err(Error::CellFull(1))));
    }

    #[test]
    fn expansion_dedups_symmetric_parents() {
        // parent with two identical independent blocks: appending a block that
        // reads b0 or b1 gives equivalent cells
        let c = cfg(1, 1, 3);
        let parent = CellSpec::new(vec![Block::raw(-1, 0, -1, 0), Block::raw(-1, 0, -1, 0)]);
        let kids = expand_cell(&parent, &c).unwrap();
        let canon: HashSet<_> = kids.iter().map(|k| canonicalize_cell(k).unwrap()).collect();
        assert_eq!(canon.len(), kids.len());
        // inputs {-1, b0, b1}: 6 canonical blocks, (b0,b0)~(b1,b1) and (-1,b0)~(-1,b1)
        assert_eq!(kids.len(), 4);
    }

    #[test]
    fn cardinality_examples() {
        let c = SearchSpaceConfig::default();
        let card = cardinality_upper_bound(&c);
        assert_eq!(card.exact, 300u128 * 666 * 1176 * 1830 * 2628);
        assert_eq!(card.exact, 1_130_002_114_752_000);
        assert_eq!(card.order_of_magnitude(), Some(15));
        assert_eq!(cardinality_upper_bound(&SearchSpaceConfig { blocks: 1, ..c }).exact, 300);
        assert_eq!(cardinality_upper_bound(&cfg(1, 1, 1)).exact, 1);
    }

    #[test]
    fn cardinality_is_monotone() {
        for ops in 1..5 {
            for lb in 1..4u8 {
                for b in 1..5 {
                    let base = cardinality_upper_bound(&cfg(ops, lb, b)).exact;
                    assert!(cardinality_upper_bound(&cfg(ops + 1, lb, b)).exact >= base);
                    assert!(cardinality_upper_bound(&cfg(ops, lb + 1, b)).exact >= base);
                    assert!(cardinality_upper_bound(&cfg(ops, lb, b + 1)).exact >= base);
                }
            }
        }
    }

    #[test]
    fn config_toml_round_trip_and_validation() {
        let text = r#"
            operators = ["a", "b", "c"]
            max_lookback = 2
            blocks = 3
            beam_size = 8
            exploration_beam_size = 2
            motifs = 2
            normals_per_motif = 1
            epochs = 3
        "#;
        let c = SearchSpaceConfig::from_toml(text).unwrap();
        assert_eq!(c.operators.len(), 3);
        assert_eq!(c.time_constraint_seconds, None);
        assert_eq!(SearchSpaceConfig::from_toml(&c.to_toml().unwrap()).unwrap(), c);
        assert!(SearchSpaceConfig::from_toml("blocks = 0").is_err());
        assert!(SearchSpaceConfig::from_toml("bogus = 1").is_err());
        assert!(SearchSpaceConfig::from_toml(r#"operators = ["a", "a"]"#).is_err());
        // missing keys fall back to defaults
        assert_eq!(SearchSpaceConfig::from_toml("").unwrap(), SearchSpaceConfig::default());
    }
}

//! Cell genotypes: blocks, cells, operator catalogs and equivalence.
//!
//! A block is the tuple `(in1, op1, in2, op2)`: two operators applied to two
//! inputs, joined by addition. A cell is an ordered list of blocks forming a
//! DAG. Internal block references are 0-based; negative inputs are
//! lookbacks to the outputs of preceding cells.
//!
//! Two encodings describe the same network when one can be turned into the
//! other by swapping the `(input, operator)` pairs of a block (addition is
//! commutative) or by reordering blocks without breaking dependencies,
//! remapping internal references consistently. [`canonicalize_cell`] picks
//! the lexicographically smallest encoding in that class.
//!
//! # Text encoding
//!
//! ```text
//! cell   := "[" [ block { ";" block } ] "]"
//! block  := "(" input "," op-name "," input "," op-name ")"
//! input  := "-" digit+          lookback, e.g. -1, -2
//!         | "b" digit+          earlier block, e.g. b0
//! ```
//!
//! Whitespace around tokens is ignored; operator names may contain inner
//! spaces but not `,` `;` `(` `)` `[` `]`. The empty cell is `[]`.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::space::SearchSpaceConfig;

/// Largest cell [`canonicalize_cell`] accepts; the order search is factorial.
pub const MAX_CANON_BLOCKS: usize = 8;

/// Index into an [`OperatorCatalog`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct OperatorId(pub u16);

impl OperatorId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Input of a block operator: negative values are lookbacks, non-negative
/// values index earlier blocks of the same cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct InputRef(pub i16);

impl InputRef {
    pub fn lookback(depth: u8) -> Self {
        InputRef(-(depth as i16))
    }

    pub fn block(index: usize) -> Self {
        InputRef(index as i16)
    }

    pub fn is_lookback(self) -> bool {
        self.0 < 0
    }

    /// Index of the referenced block, if this is an internal reference.
    pub fn block_index(self) -> Option<usize> {
        (self.0 >= 0).then_some(self.0 as usize)
    }
}

impl fmt::Display for InputRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0 < 0 {
            write!(f, "{}", self.0)
        } else {
            write!(f, "b{}", self.0)
        }
    }
}

/// Ordered list of operator names; an operator's id is its position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OperatorCatalog {
    names: Vec<String>,
    by_name: HashMap<String, OperatorId>,
}

impl OperatorCatalog {
    pub fn new<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Result<Self> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.len() > u16::MAX as usize {
            return Err(Error::Config("operator catalog too large".into()));
        }
        let mut by_name = HashMap::with_capacity(names.len());
        for (i, name) in names.iter().enumerate() {
            if name.trim().is_empty() || name.contains([',', ';', '(', ')', '[', ']']) {
                return Err(Error::Config(format!("illegal operator name {name:?}")));
            }
            if by_name.insert(name.clone(), OperatorId(i as u16)).is_some() {
                return Err(Error::Config(format!("duplicate operator name {name:?}")));
            }
        }
        Ok(OperatorCatalog { names, by_name })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, id: OperatorId) -> Option<&str> {
        self.names.get(id.index()).map(String::as_str)
    }

    pub fn id(&self, name: &str) -> Option<OperatorId> {
        self.by_name.get(name).copied()
    }

    pub fn ids(&self) -> impl Iterator<Item = OperatorId> + '_ {
        (0..self.names.len()).map(|i| OperatorId(i as u16))
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

/// One `(in1, op1, in2, op2)` tuple. Field order is the ordering key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Block {
    pub in1: InputRef,
    pub op1: OperatorId,
    pub in2: InputRef,
    pub op2: OperatorId,
}

impl Block {
    pub fn new(in1: InputRef, op1: OperatorId, in2: InputRef, op2: OperatorId) -> Self {
        Block { in1, op1, in2, op2 }
    }

    /// Shorthand used heavily in tests: raw input values and operator ids.
    pub fn raw(in1: i16, op1: u16, in2: i16, op2: u16) -> Self {
        Block::new(InputRef(in1), OperatorId(op1), InputRef(in2), OperatorId(op2))
    }

    pub fn inputs(&self) -> [InputRef; 2] {
        [self.in1, self.in2]
    }

    pub fn operators(&self) -> [OperatorId; 2] {
        [self.op1, self.op2]
    }

    pub fn uses_lookback(&self) -> bool {
        self.in1.is_lookback() || self.in2.is_lookback()
    }

    fn map_inputs(self, mut f: impl FnMut(InputRef) -> InputRef) -> Self {
        Block::new(f(self.in1), self.op1, f(self.in2), self.op2)
    }
}

/// Sorts the two `(input, operator)` pairs of a block.
pub fn canonicalize_block(block: Block) -> Block {
    if (block.in2, block.op2) < (block.in1, block.op1) {
        Block::new(block.in2, block.op2, block.in1, block.op1)
    } else {
        block
    }
}

/// The searchable genotype. `b = 0` is the empty cell of the initial thrust.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CellSpec {
    pub blocks: Vec<Block>,
}

impl CellSpec {
    pub fn new(blocks: Vec<Block>) -> Self {
        CellSpec { blocks }
    }

    pub fn empty() -> Self {
        CellSpec::default()
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// Appends a block, returning the extended cell.
    pub fn with_block(&self, block: Block) -> Self {
        let mut blocks = Vec::with_capacity(self.blocks.len() + 1);
        blocks.extend_from_slice(&self.blocks);
        blocks.push(block);
        CellSpec { blocks }
    }

    /// Checks structural constraints that do not depend on a configuration:
    /// every internal reference points to a strictly earlier block.
    pub fn check_references(&self) -> Result<()> {
        for (pos, block) in self.blocks.iter().enumerate() {
            for input in block.inputs() {
                if let Some(j) = input.block_index() {
                    if j >= pos {
                        return Err(Error::invalid(
                            pos,
                            format!("input {input} does not reference an earlier block"),
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn to_text(&self, catalog: &OperatorCatalog) -> String {
        let mut out = String::from("[");
        for (i, b) in self.blocks.iter().enumerate() {
            if i > 0 {
                out.push(';');
            }
            let name = |op: OperatorId| catalog.name(op).map(str::to_owned).unwrap_or_else(|| format!("#{}", op.0));
            out.push_str(&format!("({},{},{},{})", b.in1, name(b.op1), b.in2, name(b.op2)));
        }
        out.push(']');
        out
    }

    pub fn parse(text: &str, catalog: &OperatorCatalog) -> Result<Self> {
        let err = |reason: &str| Error::CellParse {
            text: text.to_owned(),
            reason: reason.to_owned(),
        };
        let inner = text
            .trim()
            .strip_prefix('[')
            .and_then(|s| s.strip_suffix(']'))
            .ok_or_else(|| err("expected [...]"))?
            .trim();
        if inner.is_empty() {
            return Ok(CellSpec::empty());
        }
        let mut blocks = Vec::new();
        for part in inner.split(';') {
            let body = part
                .trim()
                .strip_prefix('(')
                .and_then(|s| s.strip_suffix(')'))
                .ok_or_else(|| err("expected (in,op,in,op)"))?;
            let fields: Vec<&str> = body.split(',').map(str::trim).collect();
            if fields.len() != 4 {
                return Err(err("block needs exactly 4 fields"));
            }
            let input = |s: &str| -> Result<InputRef> {
                if let Some(idx) = s.strip_prefix('b') {
                    idx.parse::<i16>()
                        .ok()
                        .filter(|v| *v >= 0)
                        .map(InputRef)
                        .ok_or_else(|| err("bad block reference"))
                } else {
                    s.parse::<i16>()
                        .ok()
                        .filter(|v| *v < 0)
                        .map(InputRef)
                        .ok_or_else(|| err("bad lookback"))
                }
            };
            let op = |s: &str| catalog.id(s).ok_or_else(|| err(&format!("unknown operator {s:?}")));
            blocks.push(Block::new(
                input(fields[0])?,
                op(fields[1])?,
                input(fields[2])?,
                op(fields[3])?,
            ));
        }
        Ok(CellSpec { blocks })
    }

    /// JSON wire form: an array of `[in1, "op1", in2, "op2"]` arrays with
    /// negative lookbacks and non-negative block indices.
    pub fn to_wire(&self, catalog: &OperatorCatalog) -> Vec<WireBlock> {
        self.blocks
            .iter()
            .map(|b| {
                let name = |op: OperatorId| catalog.name(op).unwrap_or("").to_owned();
                WireBlock(b.in1.0 as i32, name(b.op1), b.in2.0 as i32, name(b.op2))
            })
            .collect()
    }

    pub fn from_wire(wire: &[WireBlock], catalog: &OperatorCatalog) -> Result<Self> {
        let err = |reason: String| Error::CellParse {
            text: format!("{wire:?}"),
            reason,
        };
        let input = |v: i32| i16::try_from(v).map(InputRef).map_err(|_| err(format!("input {v} out of range")));
        let op = |s: &str| catalog.id(s).ok_or_else(|| err(format!("unknown operator {s:?}")));
        let blocks = wire
            .iter()
            .map(|w| Ok(Block::new(input(w.0)?, op(&w.1)?, input(w.2)?, op(&w.3)?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(CellSpec { blocks })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireBlock(pub i32, pub String, pub i32, pub String);

/// Accepts iff all operators are in the catalog, every input is legal for its
/// position and the cell has at most `B` blocks.
pub fn validate_cell(cell: &CellSpec, config: &SearchSpaceConfig) -> Result<()> {
    if cell.len() > config.blocks {
        return Err(Error::invalid(
            config.blocks,
            format!("cell has {} blocks, maximum is {}", cell.len(), config.blocks),
        ));
    }
    let n_ops = config.operators.len();
    let max_lookback = config.max_lookback as i16;
    for (pos, block) in cell.blocks.iter().enumerate() {
        for op in block.operators() {
            if op.index() >= n_ops {
                return Err(Error::invalid(pos, format!("operator id {} not in catalog", op.0)));
            }
        }
        for input in block.inputs() {
            if input.0 < -max_lookback {
                return Err(Error::invalid(pos, format!("lookback {input} deeper than -{max_lookback}")));
            }
            if let Some(j) = input.block_index() {
                if j >= pos {
                    return Err(Error::invalid(pos, format!("input {input} does not reference an earlier block")));
                }
            }
        }
    }
    Ok(())
}

/// Lexicographically minimal encoding over dependency-respecting block
/// orders (with index remapping) and within-block pair swaps.
pub fn canonicalize_cell(cell: &CellSpec) -> Result<CellSpec> {
    let b = cell.len();
    if b > MAX_CANON_BLOCKS {
        return Err(Error::CellTooLarge {
            blocks: b,
            max: MAX_CANON_BLOCKS,
        });
    }
    cell.check_references()?;
    let mut search = CanonSearch {
        blocks: &cell.blocks,
        new_pos: vec![usize::MAX; b],
        prefix: Vec::with_capacity(b),
        best: None,
    };
    search.run();
    Ok(CellSpec {
        blocks: search.best.unwrap_or_default(),
    })
}

/// Builds the minimum position by position. At every position only the ready
/// blocks whose remapped encoding is smallest can start a minimal sequence,
/// so the search branches only on exact ties.
struct CanonSearch<'a> {
    blocks: &'a [Block],
    new_pos: Vec<usize>,
    prefix: Vec<Block>,
    best: Option<Vec<Block>>,
}

impl CanonSearch<'_> {
    fn run(&mut self) {
        let depth = self.prefix.len();
        if depth == self.blocks.len() {
            if self.best.as_ref().is_none_or(|best| self.prefix < *best) {
                self.best = Some(self.prefix.clone());
            }
            return;
        }
        let mut min: Option<Block> = None;
        let mut ties: Vec<usize> = Vec::new();
        for (j, block) in self.blocks.iter().enumerate() {
            if self.new_pos[j] != usize::MAX {
                continue;
            }
            let ready = block
                .inputs()
                .iter()
                .all(|i| i.block_index().is_none_or(|k| self.new_pos[k] != usize::MAX));
            if !ready {
                continue;
            }
            let enc = self.remap(*block);
            match min {
                Some(m) if enc > m => {}
                Some(m) if enc == m => ties.push(j),
                _ => {
                    min = Some(enc);
                    ties.clear();
                    ties.push(j);
                }
            }
        }
        let Some(min) = min else { return };
        if let Some(best) = &self.best {
            let mut candidate = self.prefix.iter().copied().chain(std::iter::once(min));
            if best[..=depth].iter().copied().cmp(&mut candidate).is_lt() {
                return;
            }
        }
        for j in ties {
            self.new_pos[j] = depth;
            self.prefix.push(min);
            self.run();
            self.prefix.pop();
            self.new_pos[j] = usize::MAX;
        }
    }

    fn remap(&self, block: Block) -> Block {
        canonicalize_block(block.map_inputs(|i| match i.block_index() {
            Some(k) => InputRef::block(self.new_pos[k]),
            None => i,
        }))
    }
}

/// True iff the canonical forms are identical.
pub fn cells_equivalent(a: &CellSpec, b: &CellSpec) -> Result<bool> {
    if a.len() != b.len() {
        return Ok(false);
    }
    Ok(canonicalize_cell(a)? == canonicalize_cell(b)?)
}

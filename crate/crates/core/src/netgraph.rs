//! Cell DAG analysis and macro-architecture assembly.
//!
//! The network is `M` motifs of `N` normal cells followed by one reduction
//! cell, except the last motif which has none, then GAP and Softmax. Every
//! cell instance uses the same genotype; in reduction cells the operators
//! reading lookback inputs are flagged stride-2. Channel counts are not
//! modelled.

use std::fmt::Write as _;

use serde::Serialize;

use crate::cell::{CellSpec, OperatorCatalog};
use crate::error::{Error, Result};
use crate::space::SearchSpaceConfig;

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CellDagAnalysis {
    pub depth_blocks: usize,
    /// Internal block-to-block input edges; a block reading two earlier
    /// blocks contributes two.
    pub block_dependencies: usize,
    /// Blocks whose output feeds no other block; concatenated at cell output.
    pub unused_outputs: usize,
    pub uses_multiple_lookbacks: bool,
    pub heaviest_path_blocks: Vec<usize>,
}

/// Structural analysis, with the heaviest path taken as the longest one.
pub fn analyze_cell_dag(cell: &CellSpec) -> CellDagAnalysis {
    if cell.is_empty() {
        return CellDagAnalysis::default();
    }
    let b = cell.len();
    let mut depth = vec![1usize; b];
    let mut referenced = vec![false; b];
    let mut deps = 0;
    let mut lookbacks = Vec::new();
    for (k, block) in cell.blocks.iter().enumerate() {
        for input in block.inputs() {
            match input.block_index() {
                Some(j) => {
                    deps += 1;
                    referenced[j] = true;
                    depth[k] = depth[k].max(depth[j] + 1);
                }
                None => {
                    if !lookbacks.contains(&input.0) {
                        lookbacks.push(input.0);
                    }
                }
            }
        }
    }
    let (path, _) = heaviest_path(cell, |_| 1.0);
    CellDagAnalysis {
        depth_blocks: depth.into_iter().max().unwrap_or(0),
        block_dependencies: deps,
        unused_outputs: referenced.iter().filter(|r| !**r).count(),
        uses_multiple_lookbacks: lookbacks.len() >= 2,
        heaviest_path_blocks: path,
    }
}

/// Maximum-weight chain of blocks from a block reading a lookback to a block
/// feeding the cell output. Ties go to the lexicographically smallest index
/// sequence. Returns the path and its weight sum.
pub fn heaviest_path(cell: &CellSpec, weight: impl Fn(usize) -> f64) -> (Vec<usize>, f64) {
    let b = cell.len();
    if b == 0 {
        return (Vec::new(), 0.0);
    }
    let mut consumers: Vec<Vec<usize>> = vec![Vec::new(); b];
    for (k, block) in cell.blocks.iter().enumerate() {
        for input in block.inputs() {
            if let Some(j) = input.block_index() {
                if !consumers[j].contains(&k) {
                    consumers[j].push(k);
                }
            }
        }
    }
    let weights: Vec<f64> = (0..b).map(&weight).collect();
    let mut best: Option<(Vec<usize>, f64)> = None;
    let mut stack = Vec::with_capacity(b);
    for start in 0..b {
        if cell.blocks[start].uses_lookback() {
            walk(start, 0.0, &consumers, &weights, &mut stack, &mut best);
        }
    }
    best.unwrap_or_default()
}

fn walk(
    node: usize,
    acc: f64,
    consumers: &[Vec<usize>],
    weights: &[f64],
    stack: &mut Vec<usize>,
    best: &mut Option<(Vec<usize>, f64)>,
) {
    stack.push(node);
    let acc = acc + weights[node];
    if consumers[node].is_empty() {
        let better = match best {
            None => true,
            Some((path, w)) => acc > *w || (acc == *w && stack.as_slice() < path.as_slice()),
        };
        if better {
            *best = Some((stack.clone(), acc));
        }
    } else {
        for &next in &consumers[node] {
            walk(next, acc, consumers, weights, stack, best);
        }
    }
    stack.pop();
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CellKind {
    Normal,
    Reduction,
}

/// Where a lookback input of a stacked cell comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    Input,
    Cell(usize),
}

impl Source {
    fn node_id(self) -> String {
        match self {
            Source::Input => "input".to_owned(),
            Source::Cell(i) => format!("cell_{i}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LookbackEdge {
    pub lookback: i16,
    pub source: Source,
    /// A reduction cell lies strictly between source and consumer, so the
    /// tensors differ in spatial size. How to adapt them is left to trainers.
    pub needs_shape_adaptation: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StackedCell {
    pub index: usize,
    pub motif: usize,
    pub kind: CellKind,
    pub inputs: Vec<LookbackEdge>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkSpec {
    pub cell: CellSpec,
    pub motifs: usize,
    pub normals_per_motif: usize,
    /// `M*N + M - 1`, or 0 for the empty cell.
    pub total_cells: usize,
    pub cells: Vec<StackedCell>,
    pub head_source: Source,
}

pub fn assemble_network(cell: &CellSpec, config: &SearchSpaceConfig) -> NetworkSpec {
    let (m, n) = (config.motifs, config.normals_per_motif);
    let mut lookbacks: Vec<i16> = cell
        .blocks
        .iter()
        .flat_map(|b| b.inputs())
        .filter(|i| i.is_lookback())
        .map(|i| i.0)
        .collect();
    lookbacks.sort_unstable_by(|a, b| b.cmp(a));
    lookbacks.dedup();

    let mut cells = Vec::new();
    if !cell.is_empty() {
        let mut kinds = Vec::new();
        for motif in 0..m {
            for _ in 0..n {
                kinds.push((motif, CellKind::Normal));
            }
            if motif + 1 < m {
                kinds.push((motif, CellKind::Reduction));
            }
        }
        for (index, &(motif, kind)) in kinds.iter().enumerate() {
            let inputs = lookbacks
                .iter()
                .map(|&lb| {
                    let src = index as i64 + lb as i64;
                    let source = if src < 0 { Source::Input } else { Source::Cell(src as usize) };
                    let lo = src.max(-1);
                    let needs_shape_adaptation = kinds
                        .iter()
                        .enumerate()
                        .any(|(r, (_, k))| *k == CellKind::Reduction && (r as i64) > lo && r < index);
                    LookbackEdge {
                        lookback: lb,
                        source,
                        needs_shape_adaptation,
                    }
                })
                .collect();
            cells.push(StackedCell {
                index,
                motif,
                kind,
                inputs,
            });
        }
    }
    let head_source = cells.last().map_or(Source::Input, |c| Source::Cell(c.index));
    NetworkSpec {
        cell: cell.clone(),
        motifs: m,
        normals_per_motif: n,
        total_cells: cells.len(),
        cells,
        head_source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Dot,
    Json,
}

impl std::str::FromStr for ExportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dot" => Ok(ExportFormat::Dot),
            "json" => Ok(ExportFormat::Json),
            other => Err(Error::UnknownFormat(other.to_owned())),
        }
    }
}

#[derive(Serialize)]
struct JsonGraph<'a> {
    motifs: usize,
    normals_per_motif: usize,
    total_cells: usize,
    cell: Vec<crate::cell::WireBlock>,
    nodes: Vec<JsonNode<'a>>,
    edges: Vec<JsonEdge>,
}

#[derive(Serialize)]
struct JsonNode<'a> {
    id: String,
    kind: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    motif: Option<usize>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    blocks: Vec<JsonBlock<'a>>,
    /// Unused block outputs joined by concat + pointwise conv when > 1.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    outputs: Vec<usize>,
}

#[derive(Serialize)]
struct JsonBlock<'a> {
    index: usize,
    ops: [JsonOp<'a>; 2],
}

#[derive(Serialize)]
struct JsonOp<'a> {
    input: i32,
    op: &'a str,
    stride: u8,
}

#[derive(Serialize)]
struct JsonEdge {
    from: String,
    to: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    lookback: Option<i16>,
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    needs_shape_adaptation: bool,
}

fn cell_outputs(cell: &CellSpec) -> Vec<usize> {
    let mut used = vec![false; cell.len()];
    for b in &cell.blocks {
        for i in b.inputs() {
            if let Some(j) = i.block_index() {
                used[j] = true;
            }
        }
    }
    (0..cell.len()).filter(|&j| !used[j]).collect()
}

/// Deterministic serialization; see `docs/formats.md` for the schemas.
pub fn export_graph(spec: &NetworkSpec, format: ExportFormat, catalog: &OperatorCatalog) -> String {
    match format {
        ExportFormat::Json => export_json(spec, catalog),
        ExportFormat::Dot => export_dot(spec, catalog),
    }
}

fn export_json(spec: &NetworkSpec, catalog: &OperatorCatalog) -> String {
    let outputs = cell_outputs(&spec.cell);
    let mut nodes = Vec::new();
    let mut edges = Vec::new();
    for sc in &spec.cells {
        let stride = |input: i16| if sc.kind == CellKind::Reduction && input < 0 { 2 } else { 1 };
        let blocks = spec
            .cell
            .blocks
            .iter()
            .enumerate()
            .map(|(index, b)| JsonBlock {
                index,
                ops: [
                    JsonOp {
                        input: b.in1.0 as i32,
                        op: catalog.name(b.op1).unwrap_or(""),
                        stride: stride(b.in1.0),
                    },
                    JsonOp {
                        input: b.in2.0 as i32,
                        op: catalog.name(b.op2).unwrap_or(""),
                        stride: stride(b.in2.0),
                    },
                ],
            })
            .collect();
        nodes.push(JsonNode {
            id: format!("cell_{}", sc.index),
            kind: match sc.kind {
                CellKind::Normal => "normal",
                CellKind::Reduction => "reduction",
            },
            motif: Some(sc.motif),
            blocks,
            outputs: outputs.clone(),
        });
        for e in &sc.inputs {
            edges.push(JsonEdge {
                from: e.source.node_id(),
                to: format!("cell_{}", sc.index),
                lookback: Some(e.lookback),
                needs_shape_adaptation: e.needs_shape_adaptation,
            });
        }
    }
    for (id, kind) in [("gap", "gap"), ("softmax", "softmax")] {
        nodes.push(JsonNode {
            id: id.to_owned(),
            kind,
            motif: None,
            blocks: Vec::new(),
            outputs: Vec::new(),
        });
    }
    for (from, to) in [(spec.head_source.node_id(), "gap"), ("gap".to_owned(), "softmax")] {
        edges.push(JsonEdge {
            from,
            to: to.to_owned(),
            lookback: None,
            needs_shape_adaptation: false,
        });
    }
    let graph = JsonGraph {
        motifs: spec.motifs,
        normals_per_motif: spec.normals_per_motif,
        total_cells: spec.total_cells,
        cell: spec.cell.to_wire(catalog),
        nodes,
        edges,
    };
    let mut out = serde_json::to_string_pretty(&graph).expect("graph serializes");
    out.push('\n');
    out
}

fn export_dot(spec: &NetworkSpec, catalog: &OperatorCatalog) -> String {
    let name = |op| catalog.name(op).unwrap_or("?");
    let outputs = cell_outputs(&spec.cell);
    let mut s = String::from("digraph network {\n  rankdir=TB;\n  input [shape=box,label=\"input\"];\n");
    for sc in &spec.cells {
        let c = format!("cell_{}", sc.index);
        let kind = match sc.kind {
            CellKind::Normal => "normal",
            CellKind::Reduction => "reduction",
        };
        let _ = writeln!(s, "  subgraph cluster_{c} {{");
        let _ = writeln!(s, "    label=\"{c} ({kind}, motif {})\";", sc.motif);
        for (j, b) in spec.cell.blocks.iter().enumerate() {
            let stride = |i: i16| if sc.kind == CellKind::Reduction && i < 0 { "/2" } else { "" };
            let _ = writeln!(
                s,
                "    {c}_b{j} [shape=box,label=\"b{j}: {}({}){} + {}({}){}\"];",
                name(b.op1),
                b.in1,
                stride(b.in1.0),
                name(b.op2),
                b.in2,
                stride(b.in2.0)
            );
            for i in b.inputs() {
                if let Some(k) = i.block_index() {
                    let _ = writeln!(s, "    {c}_b{k} -> {c}_b{j};");
                }
            }
        }
        let join = if outputs.len() > 1 { "concat+1x1" } else { "out" };
        let _ = writeln!(s, "    {c} [shape=ellipse,label=\"{join}\"];");
        for j in &outputs {
            let _ = writeln!(s, "    {c}_b{j} -> {c};");
        }
        s.push_str("  }\n");
        for e in &sc.inputs {
            let style = if e.needs_shape_adaptation { ",style=dashed" } else { "" };
            let _ = writeln!(
                s,
                "  {} -> {c} [label=\"{}\"{style}];",
                e.source.node_id(),
                e.lookback
            );
        }
    }
    s.push_str("  gap [shape=box,label=\"GAP\"];\n  softmax [shape=box,label=\"Softmax\"];\n");
    let _ = writeln!(s, "  {} -> gap;", spec.head_source.node_id());
    s.push_str("  gap -> softmax;\n}\n");
    s
}

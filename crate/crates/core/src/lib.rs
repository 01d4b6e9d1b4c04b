//! Progressive, Pareto-guided search over cell-based convolutional
//! architectures.
//!
//! A cell is a small DAG of blocks, each combining two inputs through two
//! operators. The search grows cells one block at a time, scoring every
//! expansion with surrogate accuracy and training-time predictors and
//! training only the predicted Pareto front plus a few exploration picks.

pub mod cell;
pub mod engine;
pub mod error;
pub mod evaluator;
pub mod exploration;
pub mod hash;
pub mod netgraph;
pub mod pareto;
pub mod space;
pub mod surrogate;

pub use cell::{
    canonicalize_block, canonicalize_cell, cells_equivalent, validate_cell, Block, CellSpec, InputRef,
    OperatorCatalog, OperatorId, WireBlock, MAX_CANON_BLOCKS,
};
pub use error::{Error, Result};
pub use exploration::{build_epf, build_exploration_sets, exploration_score, EpfOutcome, ExplorationSets};
pub use netgraph::{assemble_network, export_graph, ExportFormat, NetworkSpec};
pub use pareto::{apply_time_constraint, build_pareto_front, ParetoFront, ScoredCandidate};
pub use space::{cardinality_upper_bound, enumerate_initial_blocks, expand_cell, input_set, SearchSpaceConfig};
pub use surrogate::{
    fit_predictor, init_dynamic_reindex, mape, spearman, DynamicReindexTable, PredictorKind, RegressorSpec,
    TrainedPredictor,
};
pub use evaluator::{
    CachedEvaluator, EvalRequest, EvalResult, EvalStatus, Evaluator, ExternalConfig, ExternalEvaluator,
    SyntheticEvaluator, SyntheticParams, TableEvaluator,
};
pub use engine::{
    compare_reports, load_run, report, resume, run_search, EvalRecord, RecordSource, RunControl, RunReport, RunState,
    SearchMode, SearchOptions,
};

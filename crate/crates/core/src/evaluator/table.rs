use std::collections::HashMap;
use std::io::Read;
use std::path::Path;

use serde::Deserialize;

use crate::cell::{canonicalize_cell, CellSpec, OperatorCatalog};
use crate::error::{Error, Result};

use super::{EvalRequest, EvalResult, Evaluator};

#[derive(Deserialize)]
struct Row {
    canonical_cell: String,
    accuracy: f64,
    time_seconds: f64,
}

/// Replays recorded results from a CSV with columns
/// `canonical_cell,accuracy,time_seconds`. Lookup is by canonical form, so
/// any equivalent encoding hits the same row. Network settings and seed are
/// ignored.
#[derive(Debug, Clone)]
pub struct TableEvaluator {
    rows: HashMap<CellSpec, (f64, f64)>,
    source: String,
}

impl TableEvaluator {
    pub fn from_reader<R: Read>(input: R, catalog: &OperatorCatalog, source: impl Into<String>) -> Result<Self> {
        let mut rows = HashMap::new();
        for (line, row) in csv::Reader::from_reader(input).deserialize::<Row>().enumerate() {
            let row = row?;
            let cell = canonicalize_cell(&CellSpec::parse(&row.canonical_cell, catalog)?)?;
            if !row.accuracy.is_finite() || !row.time_seconds.is_finite() {
                return Err(Error::NonFinite("table row"));
            }
            if rows.insert(cell, (row.accuracy, row.time_seconds)).is_some() {
                return Err(Error::Evaluator(format!(
                    "table row {} repeats cell {}",
                    line + 2,
                    row.canonical_cell
                )));
            }
        }
        Ok(TableEvaluator {
            rows,
            source: source.into(),
        })
    }

    pub fn load(path: &Path, catalog: &OperatorCatalog) -> Result<Self> {
        Self::from_reader(std::fs::File::open(path)?, catalog, path.display().to_string())
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

impl Evaluator for TableEvaluator {
    fn evaluate(&self, r: &EvalRequest) -> EvalResult {
        let found = canonicalize_cell(&r.cell).ok().and_then(|c| self.rows.get(&c).copied());
        match found {
            Some((a, t)) => EvalResult::ok(&r.request_id, a, t),
            None => EvalResult::failed(&r.request_id, "cell not in table"),
        }
    }

    fn describe(&self) -> String {
        format!("table:{}", self.source)
    }
}

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::cell::{OperatorCatalog, OperatorId};
use crate::error::{Error, Result};

/// Per-operator training-time weight, normalized against the empty cell.
///
/// `index_o = (t_o - t0) / (max_o t_o - t0)` where `t_o` is the training
/// time of the flat cell `[(-1, o, -1, o)]` and `t0` that of the empty cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicReindexTable {
    pub t0: f64,
    /// Indexed by operator id.
    pub indices: Vec<f64>,
}

pub fn init_dynamic_reindex(flat_cell_times: &[f64], t0: f64) -> Result<DynamicReindexTable> {
    if !t0.is_finite() || flat_cell_times.iter().any(|t| !t.is_finite()) {
        return Err(Error::NonFinite("reindex times"));
    }
    let max_time = flat_cell_times.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if flat_cell_times.is_empty() || max_time <= t0 {
        return Err(Error::DegenerateReindex { max_time, t0 });
    }
    let span = max_time - t0;
    let indices = flat_cell_times.iter().map(|t| (t - t0) / span).collect();
    Ok(DynamicReindexTable { t0, indices })
}

impl DynamicReindexTable {
    pub fn index(&self, op: OperatorId) -> Result<f64> {
        self.indices.get(op.index()).copied().ok_or(Error::MissingReindex(op.index()))
    }

    /// CSV with header `operator,index`, one row per catalog operator.
    pub fn write_csv<W: Write>(&self, catalog: &OperatorCatalog, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["operator", "index"])?;
        for (id, v) in catalog.ids().zip(&self.indices) {
            w.write_record([catalog.name(id).unwrap_or(""), &v.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the CSV form. `t0` is not part of the file and is set to 0.
    pub fn read_csv<R: Read>(catalog: &OperatorCatalog, input: R) -> Result<Self> {
        let mut indices = vec![f64::NAN; catalog.len()];
        for row in csv::Reader::from_reader(input).records() {
            let row = row?;
            let name = row.get(0).unwrap_or("");
            let id = catalog
                .id(name)
                .ok_or_else(|| Error::Config(format!("reindex names unknown operator {name:?}")))?;
            indices[id.index()] = row
                .get(1)
                .and_then(|v| v.trim().parse().ok())
                .ok_or_else(|| Error::Config(format!("bad reindex value for {name:?}")))?;
        }
        if let Some(missing) = indices.iter().position(|v| v.is_nan()) {
            return Err(Error::MissingReindex(missing));
        }
        Ok(DynamicReindexTable { t0: 0.0, indices })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn direct_arithmetic() {
        let t = init_dynamic_reindex(&[200.0, 300.0, 500.0], 100.0).unwrap();
        assert_eq!(t.indices, vec![0.25, 0.5, 1.0]);
        let t = init_dynamic_reindex(&[100.0, 150.0], 100.0).unwrap();
        assert_eq!(t.indices[0], 0.0);
        assert_eq!(t.indices[1], 1.0);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(matches!(
            init_dynamic_reindex(&[100.0, 90.0], 100.0),
            Err(Error::DegenerateReindex { .. })
        ));
        assert!(init_dynamic_reindex(&[], 1.0).is_err());
        assert!(init_dynamic_reindex(&[f64::NAN, 2.0], 1.0).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let cat = OperatorCatalog::new(["a", "b", "c"]).unwrap();
        let t = init_dynamic_reindex(&[200.0, 300.0, 500.0], 100.0).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&cat, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), "operator,index\na,0.25\nb,0.5\nc,1\n");
        let back = DynamicReindexTable::read_csv(&cat, buf.as_slice()).unwrap();
        assert_eq!(back.indices, t.indices);
        assert!(DynamicReindexTable::read_csv(&cat, "operator,index\na,1\n".as_bytes()).is_err());
    }

    proptest! {
        #[test]
        fn shift_and_scale_invariance(
            times in prop::collection::vec(1.0f64..1000.0, 2..12),
            shift in -500.0f64..500.0,
            scale in 0.1f64..10.0,
        ) {
            let t0 = times.iter().copied().fold(f64::INFINITY, f64::min) - 1.0;
            let base = init_dynamic_reindex(&times, t0).unwrap();
            let shifted: Vec<f64> = times.iter().map(|t| t + shift).collect();
            let s = init_dynamic_reindex(&shifted, t0 + shift).unwrap();
            let scaled: Vec<f64> = times.iter().map(|t| t0 + (t - t0) * scale).collect();
            let k = init_dynamic_reindex(&scaled, t0).unwrap();
            for i in 0..times.len() {
                prop_assert!((base.indices[i] - s.indices[i]).abs() < 1e-9);
                prop_assert!((base.indices[i] - k.indices[i]).abs() < 1e-9);
            }
        }
    }
}

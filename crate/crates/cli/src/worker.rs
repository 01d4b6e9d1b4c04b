use std::io::{BufRead, Write};

use cellnas::evaluator::{WorkerReply, WorkerRequest};
use cellnas::{CellSpec, OperatorCatalog, SyntheticEvaluator};

fn failed(id: String, reason: String) -> WorkerReply {
    WorkerReply {
        id,
        accuracy: None,
        time_seconds: None,
        status: Some("failed".into()),
        reason: Some(reason),
    }
}

fn answer(evaluator: &SyntheticEvaluator, catalog: &OperatorCatalog, line: &str) -> WorkerReply {
    let req: WorkerRequest = match serde_json::from_str(line) {
        Ok(r) => r,
        Err(e) => {
            let id = serde_json::from_str::<serde_json::Value>(line)
                .ok()
                .and_then(|v| v.get("id").and_then(|i| i.as_str()).map(str::to_owned))
                .unwrap_or_default();
            return failed(id, format!("malformed request: {e}"));
        }
    };
    let cell = match CellSpec::from_wire(&req.cell, catalog) {
        Ok(c) => c,
        Err(e) => return failed(req.id, e.to_string()),
    };
    match evaluator.measure(&cell, req.motifs, req.normals, req.epochs, req.seed) {
        Ok((a, t)) => WorkerReply {
            id: req.id,
            accuracy: Some(a),
            time_seconds: Some(t),
            status: None,
            reason: None,
        },
        Err(e) => failed(req.id, e),
    }
}

/// Answers one reply line per non-blank request line until end of input.
pub fn serve(
    evaluator: &SyntheticEvaluator,
    catalog: &OperatorCatalog,
    input: impl BufRead,
    mut output: impl Write,
) -> std::io::Result<()> {
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let reply = answer(evaluator, catalog, &line);
        let text = serde_json::to_string(&reply).map_err(std::io::Error::other)?;
        writeln!(output, "{text}")?;
        output.flush()?;
    }
    Ok(())
}

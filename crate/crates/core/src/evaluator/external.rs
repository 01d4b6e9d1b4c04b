//! Pool of worker processes speaking line-delimited JSON over stdio.
//!
//! Each request is one line `{"id","cell","motifs","normals","epochs","seed"}`
//! on the worker's stdin; the worker answers with one line
//! `{"id","accuracy","time_seconds"}` on stdout, optionally with
//! `"status":"failed"` and a `"reason"`. Workers are started lazily with
//! `sh -c <command>`. A transport failure (timeout, exit, unparsable or
//! mismatched reply) restarts the worker and retries once.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::{Condvar, Mutex};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::cell::{OperatorCatalog, WireBlock};
use crate::error::{Error, Result};

use super::{EvalRequest, EvalResult, Evaluator};

/// Environment variable holding the worker command line.
pub const WORKER_CMD_ENV: &str = "CELLNAS_WORKER_CMD";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkerRequest {
    pub id: String,
    pub cell: Vec<WireBlock>,
    pub motifs: u32,
    pub normals: u32,
    pub epochs: u32,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkerReply {
    pub id: String,
    #[serde(default)]
    pub accuracy: Option<f64>,
    #[serde(default)]
    pub time_seconds: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub status: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExternalConfig {
    /// Shell command line for one worker.
    pub command: String,
    pub workers: usize,
    pub timeout: Duration,
}

impl ExternalConfig {
    /// Reads the command from [`WORKER_CMD_ENV`].
    pub fn from_env(workers: usize, timeout: Duration) -> Result<Self> {
        let command = std::env::var(WORKER_CMD_ENV)
            .map_err(|_| Error::Evaluator(format!("{WORKER_CMD_ENV} is not set")))?;
        Ok(ExternalConfig {
            command,
            workers,
            timeout,
        })
    }
}

struct Worker {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<String>,
}

impl Worker {
    fn spawn(command: &str) -> std::result::Result<Self, String> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| format!("cannot start worker: {e}"))?;
        let stdin = child.stdin.take().ok_or("worker stdin unavailable")?;
        let stdout = child.stdout.take().ok_or("worker stdout unavailable")?;
        let (tx, lines) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                let Ok(line) = line else { break };
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        Ok(Worker { child, stdin, lines })
    }

    fn call(&mut self, line: &str, id: &str, timeout: Duration) -> std::result::Result<WorkerReply, String> {
        writeln!(self.stdin, "{line}")
            .and_then(|_| self.stdin.flush())
            .map_err(|e| format!("transport: write failed: {e}"))?;
        let reply = match self.lines.recv_timeout(timeout) {
            Ok(l) => l,
            Err(RecvTimeoutError::Timeout) => return Err(format!("transport: no reply within {timeout:?}")),
            Err(RecvTimeoutError::Disconnected) => return Err("transport: worker exited".into()),
        };
        let reply: WorkerReply =
            serde_json::from_str(&reply).map_err(|e| format!("transport: malformed reply: {e}"))?;
        if reply.id != id {
            return Err(format!("transport: reply id {} does not match {id}", reply.id));
        }
        Ok(reply)
    }
}

impl Drop for Worker {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

pub struct ExternalEvaluator {
    catalog: OperatorCatalog,
    config: ExternalConfig,
    slots: Vec<Mutex<Option<Worker>>>,
    free: Mutex<Vec<usize>>,
    available: Condvar,
}

impl ExternalEvaluator {
    pub fn new(catalog: OperatorCatalog, config: ExternalConfig) -> Result<Self> {
        if config.workers == 0 {
            return Err(Error::Config("external evaluator needs at least one worker".into()));
        }
        if config.command.trim().is_empty() {
            return Err(Error::Config("external worker command is empty".into()));
        }
        Ok(ExternalEvaluator {
            catalog,
            slots: (0..config.workers).map(|_| Mutex::new(None)).collect(),
            free: Mutex::new((0..config.workers).rev().collect()),
            available: Condvar::new(),
            config,
        })
    }

    fn acquire(&self) -> usize {
        let mut free = self.free.lock().unwrap();
        loop {
            if let Some(i) = free.pop() {
                return i;
            }
            free = self.available.wait(free).unwrap();
        }
    }

    fn release(&self, i: usize) {
        self.free.lock().unwrap().push(i);
        self.available.notify_one();
    }

    fn attempt(&self, slot: &mut Option<Worker>, line: &str, id: &str) -> std::result::Result<WorkerReply, String> {
        if slot.is_none() {
            *slot = Some(Worker::spawn(&self.config.command)?);
        }
        let out = slot.as_mut().unwrap().call(line, id, self.config.timeout);
        if out.is_err() {
            // a timed-out or broken worker may still emit stale lines
            *slot = None;
        }
        out
    }
}

fn to_result(reply: WorkerReply) -> EvalResult {
    if reply.status.as_deref().is_some_and(|s| s != "ok") {
        let reason = reply.reason.unwrap_or_else(|| "worker reported failure".into());
        return EvalResult::failed(reply.id, reason);
    }
    match (reply.accuracy, reply.time_seconds) {
        (Some(a), Some(t)) => EvalResult::ok(reply.id, a, t),
        _ => EvalResult::failed(reply.id, "reply lacks accuracy or time_seconds"),
    }
}

impl Evaluator for ExternalEvaluator {
    fn evaluate(&self, r: &EvalRequest) -> EvalResult {
        let request = WorkerRequest {
            id: r.request_id.clone(),
            cell: r.cell.to_wire(&self.catalog),
            motifs: r.motifs,
            normals: r.normals_per_motif,
            epochs: r.epochs,
            seed: r.seed,
        };
        let line = match serde_json::to_string(&request) {
            Ok(l) => l,
            Err(e) => return EvalResult::failed(&r.request_id, e.to_string()),
        };
        let i = self.acquire();
        let result = {
            let mut slot = self.slots[i].lock().unwrap();
            match self.attempt(&mut slot, &line, &r.request_id) {
                Ok(reply) => to_result(reply),
                Err(first) => {
                    log::warn!("worker {i}: {first}; retrying request {}", r.request_id);
                    match self.attempt(&mut slot, &line, &r.request_id) {
                        Ok(reply) => to_result(reply),
                        Err(second) => EvalResult::failed(&r.request_id, second),
                    }
                }
            }
        };
        self.release(i);
        result
    }

    fn describe(&self) -> String {
        format!("external:{}", self.config.command)
    }
}

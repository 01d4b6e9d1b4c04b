use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use crate::cell::{canonicalize_cell, CellSpec};

use super::{EvalRequest, EvalResult, Evaluator};

type Key = (CellSpec, u32, u32, u32, u64);

/// Memoizes an evaluator by (canonical cell, network settings, seed).
///
/// Concurrent requests for the same key block on a single evaluation. Failed
/// results are not cached.
pub struct CachedEvaluator<E> {
    inner: E,
    slots: Mutex<HashMap<Key, Arc<OnceLock<EvalResult>>>>,
}

impl<E: Evaluator> CachedEvaluator<E> {
    pub fn new(inner: E) -> Self {
        CachedEvaluator {
            inner,
            slots: Mutex::new(HashMap::new()),
        }
    }

    pub fn inner(&self) -> &E {
        &self.inner
    }

    pub fn len(&self) -> usize {
        self.slots.lock().unwrap().values().filter(|s| s.get().is_some()).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Seeds the cache with a known result, e.g. from a persisted ledger.
    pub fn insert(&self, request: &EvalRequest, result: EvalResult) {
        let Some(key) = key_of(request) else { return };
        let slot = OnceLock::new();
        let _ = slot.set(result);
        self.slots.lock().unwrap().insert(key, Arc::new(slot));
    }
}

fn key_of(r: &EvalRequest) -> Option<Key> {
    let cell = canonicalize_cell(&r.cell).ok()?;
    Some((cell, r.motifs, r.normals_per_motif, r.epochs, r.seed))
}

impl<E: Evaluator> Evaluator for CachedEvaluator<E> {
    fn evaluate(&self, request: &EvalRequest) -> EvalResult {
        let Some(key) = key_of(request) else {
            return self.inner.evaluate(request);
        };
        let slot = self.slots.lock().unwrap().entry(key.clone()).or_default().clone();
        let result = slot.get_or_init(|| self.inner.evaluate(request));
        if !result.is_ok() {
            self.slots.lock().unwrap().remove(&key);
        }
        EvalResult {
            request_id: request.request_id.clone(),
            ..result.clone()
        }
    }

    fn describe(&self) -> String {
        self.inner.describe()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cell::Block;
    use std::sync::atomic::{AtomicUsize, Ordering};

    struct Counting(AtomicUsize);

    impl Evaluator for Counting {
        fn evaluate(&self, r: &EvalRequest) -> EvalResult {
            let n = self.0.fetch_add(1, Ordering::SeqCst);
            if r.seed == 99 {
                return EvalResult::failed(&r.request_id, "boom");
            }
            EvalResult::ok(&r.request_id, 0.5, 1.0 + n as f64)
        }
        fn describe(&self) -> String {
            "counting".into()
        }
    }

    fn req(id: &str, blocks: Vec<Block>, seed: u64) -> EvalRequest {
        EvalRequest {
            request_id: id.into(),
            cell: CellSpec::new(blocks),
            motifs: 3,
            normals_per_motif: 2,
            epochs: 21,
            seed,
        }
    }

    #[test]
    fn equivalent_cells_hit_the_cache() {
        let c = CachedEvaluator::new(Counting(AtomicUsize::new(0)));
        let a = c.evaluate(&req("a", vec![Block::raw(-1, 0, -2, 1)], 1));
        let b = c.evaluate(&req("b", vec![Block::raw(-2, 1, -1, 0)], 1));
        assert_eq!(a.time_seconds, b.time_seconds);
        assert_eq!(b.request_id, "b");
        assert_eq!(c.inner().0.load(Ordering::SeqCst), 1);
        // a different seed is a different key
        c.evaluate(&req("c", vec![Block::raw(-1, 0, -2, 1)], 2));
        assert_eq!(c.inner().0.load(Ordering::SeqCst), 2);
        assert_eq!(c.len(), 2);
    }

    #[test]
    fn failures_are_retried() {
        let c = CachedEvaluator::new(Counting(AtomicUsize::new(0)));
        assert!(!c.evaluate(&req("a", vec![], 99)).is_ok());
        assert!(!c.evaluate(&req("a", vec![], 99)).is_ok());
        assert_eq!(c.inner().0.load(Ordering::SeqCst), 2);
        assert!(c.is_empty());
    }

    #[test]
    fn concurrent_requests_train_once() {
        let c = CachedEvaluator::new(Counting(AtomicUsize::new(0)));
        std::thread::scope(|s| {
            for i in 0..8 {
                let c = &c;
                s.spawn(move || c.evaluate(&req(&i.to_string(), vec![Block::raw(-1, 3, -1, 3)], 5)));
            }
        });
        assert_eq!(c.inner().0.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn seeded_entries_are_served() {
        let c = CachedEvaluator::new(Counting(AtomicUsize::new(0)));
        let r = req("a", vec![Block::raw(-1, 3, -1, 3)], 5);
        c.insert(&r, EvalResult::ok("old", 0.7, 42.0));
        let got = c.evaluate(&r);
        assert_eq!((got.request_id.as_str(), got.accuracy, got.time_seconds), ("a", 0.7, 42.0));
        assert_eq!(c.inner().0.load(Ordering::SeqCst), 0);
    }
}

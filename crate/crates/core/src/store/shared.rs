use std::sync::{Arc, Condvar, Mutex, MutexGuard};

use super::{ClockDecision, ReadReport, SspTable, StalenessConfig, StoreError};
use crate::engine::UpdateDelta;

/// Thread-safe SSP store for real-thread runs.
///
/// Commits are pushed to every other view's inbox immediately; `clock`
/// waits on a condition variable until the caller may proceed. A worker
/// blocked in `clock` holds no lock, so the slowest worker can always make
/// progress.
pub struct SharedStore {
    table: Mutex<SspTable>,
    advanced: Condvar,
}

impl SharedStore {
    pub fn new(workers: usize, staleness: StalenessConfig, initial: Vec<f64>) -> Self {
        Self {
            table: Mutex::new(SspTable::new(workers, staleness, initial)),
            advanced: Condvar::new(),
        }
    }

    fn lock(&self) -> MutexGuard<'_, SspTable> {
        self.table.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn commit(&self, worker: usize, delta: UpdateDelta) -> Result<(), StoreError> {
        let mut t = self.lock();
        let d: Arc<UpdateDelta> = t.commit(worker, delta)?;
        for q in 0..t.workers() {
            if q != worker {
                t.deliver(q, &d);
            }
        }
        Ok(())
    }

    /// Advances the clock and waits until the worker is within `s` of the
    /// slowest. Returns whether it had to wait.
    pub fn clock(&self, worker: usize) -> Result<ClockDecision, StoreError> {
        let mut t = self.lock();
        let decision = t.clock(worker)?;
        self.advanced.notify_all();
        while !t.can_proceed(worker) {
            t = self.advanced.wait(t).unwrap_or_else(|e| e.into_inner());
        }
        Ok(decision)
    }

    /// Syncs the worker's view and returns a copy of it.
    pub fn read(&self, worker: usize) -> Result<(Vec<f64>, ReadReport), StoreError> {
        let mut t = self.lock();
        let r = t.read(worker)?;
        Ok((t.view(worker).to_vec(), r))
    }

    pub fn clocks(&self) -> Vec<u64> {
        self.lock().clocks().to_vec()
    }

    pub fn master(&self) -> Vec<f64> {
        self.lock().master().to_vec()
    }

    pub fn snapshot(&self) -> (u64, Vec<f64>) {
        let t = self.lock();
        (t.snapshot_clock(), t.snapshot().to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{Payload, SparseVec};
    use std::thread;

    #[test]
    fn threads_never_drift_more_than_s() {
        let p = 4;
        let s = 1;
        let store = Arc::new(SharedStore::new(p, StalenessConfig::new(s).unwrap(), vec![0.0; p]));
        let handles: Vec<_> = (0..p)
            .map(|w| {
                let store = Arc::clone(&store);
                thread::spawn(move || {
                    for c in 0..50u64 {
                        let (_, r) = store.read(w).unwrap();
                        assert_eq!(r.clock, c);
                        let clocks = store.clocks();
                        let min = *clocks.iter().min().unwrap();
                        assert!(clocks[w] - min <= s as u64);
                        let delta: SparseVec = [(w, 1.0)].into_iter().collect();
                        store
                            .commit(w, UpdateDelta::new(Payload::Sparse(delta), c, w))
                            .unwrap();
                        store.clock(w).unwrap();
                    }
                })
            })
            .collect();
        for h in handles {
            h.join().unwrap();
        }
        assert_eq!(store.master(), vec![50.0; p]);
        assert_eq!(store.snapshot().0, 50);
    }
}

//! Data-parallel helpers with a sequential fallback.
//!
//! Work is always split into the same fixed chunks and results are returned
//! in chunk order, so outputs never depend on the worker count.

/// Worker configuration for parallel sections.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Exec {
    threads: usize,
}

impl Default for Exec {
    fn default() -> Self {
        Self::sequential()
    }
}

impl Exec {
    pub fn sequential() -> Self {
        Self { threads: 1 }
    }

    /// `threads == 0` means one worker per available core.
    pub fn with_threads(threads: usize) -> Self {
        let threads = if threads == 0 {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        } else {
            threads
        };
        Self { threads }
    }

    pub fn threads(&self) -> usize {
        self.threads
    }

    /// Map `f` over `items`, preserving order.
    pub fn map<T, R, F>(&self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.threads > 1 {
            use rayon::prelude::*;
            return self.install(|| items.par_iter().map(&f).collect());
        }
        items.iter().map(f).collect()
    }

    /// Run `f` on each `(item, scratch)` pair; scratch buffers are reused
    /// across calls by the caller.
    pub fn for_each_zip<T, S, F>(&self, items: &[T], scratch: &mut [S], f: F)
    where
        T: Sync,
        S: Send,
        F: Fn(&T, &mut S) + Sync + Send,
    {
        assert_eq!(items.len(), scratch.len());
        #[cfg(feature = "parallel")]
        if self.threads > 1 {
            use rayon::prelude::*;
            self.install(|| {
                items
                    .par_iter()
                    .zip(scratch.par_iter_mut())
                    .for_each(|(t, s)| f(t, s))
            });
            return;
        }
        for (t, s) in items.iter().zip(scratch.iter_mut()) {
            f(t, s);
        }
    }

    #[cfg(feature = "parallel")]
    fn install<R: Send>(&self, op: impl FnOnce() -> R + Send) -> R {
        pool(self.threads).install(op)
    }
}

#[cfg(feature = "parallel")]
fn pool(threads: usize) -> std::sync::Arc<rayon::ThreadPool> {
    use std::collections::HashMap;
    use std::sync::{Arc, Mutex, OnceLock};
    static POOLS: OnceLock<Mutex<HashMap<usize, Arc<rayon::ThreadPool>>>> = OnceLock::new();
    let pools = POOLS.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = pools.lock().unwrap_or_else(|e| e.into_inner());
    guard
        .entry(threads)
        .or_insert_with(|| {
            Arc::new(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(threads)
                    .build()
                    .expect("failed to build thread pool"),
            )
        })
        .clone()
}

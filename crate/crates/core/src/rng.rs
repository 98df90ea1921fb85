//! Counter-based substreams and the worker pool handle.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::atomic::{AtomicBool, Ordering};

use crate::error::{Error, Result};

/// Independent stream for one sample: the seed keys the generator, the
/// sample index selects the stream, so results never depend on scheduling.
pub fn substream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Uniform on the open interval (0,1).
#[inline]
pub fn open01<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

#[inline]
pub fn exp1<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    -open01(rng).ln()
}

/// Number of worker threads used for a run. The work decomposition is
/// fixed (see `CHUNK`), so the worker count never changes results.
#[derive(Clone, Copy, Debug)]
pub struct Parallelism {
    pub workers: usize,
    /// set from outside to stop scheduling new chunks
    pub cancel: Option<&'static AtomicBool>,
}

/// Samples per work unit.
pub const CHUNK: usize = 256;

impl Default for Parallelism {
    fn default() -> Self {
        Parallelism {
            workers: 1,
            cancel: None,
        }
    }
}

impl Parallelism {
    pub fn new(workers: usize) -> Self {
        Parallelism {
            workers: workers.max(1),
            cancel: None,
        }
    }

    pub fn with_cancel(self, flag: &'static AtomicBool) -> Self {
        Parallelism {
            cancel: Some(flag),
            ..self
        }
    }

    pub fn cancelled(&self) -> bool {
        self.cancel.is_some_and(|c| c.load(Ordering::Relaxed))
    }

    /// Run `op` inside a pool with the configured worker count.
    pub fn install<T: Send, F: FnOnce() -> T + Send>(&self, op: F) -> T {
        if self.workers <= 1 {
            return op();
        }
        match rayon::ThreadPoolBuilder::new().num_threads(self.workers).build() {
            Ok(pool) => pool.install(op),
            Err(_) => op(),
        }
    }

    /// Map every chunk of `0..n` through `f` in parallel; output keeps
    /// chunk order. Chunks not started before cancellation make the whole
    /// call return `Interrupted`.
    pub fn map_chunks<T, F>(&self, n: usize, f: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(std::ops::Range<usize>) -> T + Sync + Send,
    {
        use rayon::prelude::*;
        let chunks = n.div_ceil(CHUNK);
        let out: Vec<Option<T>> = self.install(|| {
            (0..chunks)
                .into_par_iter()
                .map(|c| {
                    if self.cancelled() {
                        None
                    } else {
                        Some(f(c * CHUNK..((c + 1) * CHUNK).min(n)))
                    }
                })
                .collect()
        });
        out.into_iter().map(|x| x.ok_or(Error::Interrupted)).collect()
    }

    /// Per-sample map, results in sample order.
    pub fn map_samples<T, F>(&self, n: usize, f: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        Ok(self
            .map_chunks(n, |r| r.map(&f).collect::<Vec<_>>())?
            .into_iter()
            .flatten()
            .collect())
    }
}

//! Execution strategy for data-parallel loops over independent rows.
//!
//! Results are always reduced in index order, so sequential and parallel
//! execution are bitwise identical. Without the `parallel` feature every
//! strategy runs sequentially.

use std::sync::atomic::{AtomicU8, Ordering};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Strategy {
    Sequential,
    Parallel,
}

static STRATEGY: AtomicU8 = AtomicU8::new(1);

pub fn set_strategy(s: Strategy) {
    STRATEGY.store(matches!(s, Strategy::Parallel) as u8, Ordering::Relaxed);
}

pub fn strategy() -> Strategy {
    if cfg!(feature = "parallel") && STRATEGY.load(Ordering::Relaxed) == 1 {
        Strategy::Parallel
    } else {
        Strategy::Sequential
    }
}

/// `(0..n).map(f).collect()`, possibly on the rayon pool; output order is by index.
pub fn map_indexed<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if strategy() == Strategy::Parallel {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    (0..n).map(f).collect()
}

/// Runs two closures, concurrently when parallel execution is enabled.
pub fn join<A, B, RA, RB>(a: A, b: B) -> (RA, RB)
where
    A: FnOnce() -> RA + Send,
    B: FnOnce() -> RB + Send,
    RA: Send,
    RB: Send,
{
    #[cfg(feature = "parallel")]
    if strategy() == Strategy::Parallel {
        return rayon::join(a, b);
    }
    (a(), b())
}

//! Time measurement and work distribution hooks.
//!
//! The core crate has no access to an OS clock or threads. Callers that do
//! (the `gridsurv` crate) plug in a [`Clock`] for time limits and runtime
//! breakdowns and an [`Executor`] for independent subproblem solves.

use alloc::vec::Vec;

/// Monotonic seconds since some fixed origin.
pub trait Clock: Sync {
    fn now(&self) -> f64;
}

/// A clock that never advances: time limits never trigger and every
/// measured duration is zero.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoClock;

impl Clock for NoClock {
    fn now(&self) -> f64 {
        0.0
    }
}

/// Evaluates `f(0..n)` and returns the results in index order.
pub trait Executor: Sync {
    fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync;
}

/// Runs every job on the calling thread.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl Executor for Sequential {
    fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync,
    {
        (0..n).map(f).collect()
    }
}

//! Data-parallel helpers with a sequential fallback.
//!
//! Work is split into fixed-size chunks whose partial results are combined
//! in chunk order by a fixed pairwise tree, so every result is bit-identical
//! whether it runs sequentially or on any number of threads.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// How a data-parallel operation is executed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    /// Uses the rayon pool when the `parallel` feature is enabled and runs
    /// sequentially otherwise.
    Parallel,
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }
}

/// Runs `f` on a dedicated pool of `workers` threads; `0` keeps the global
/// pool. Results do not depend on the pool size.
pub fn with_workers<R, F>(workers: usize, f: F) -> R
where
    R: Send,
    F: FnOnce() -> R + Send,
{
    #[cfg(feature = "parallel")]
    if workers > 0 {
        if let Ok(pool) = rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
            return pool.install(f);
        }
    }
    let _ = workers;
    f()
}

/// Default number of items per chunk for reductions.
pub const CHUNK: usize = 1024;

/// `f(0), …, f(n-1)` in index order.
pub fn map<T, F>(exec: Execution, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => (0..n).into_par_iter().map(f).collect(),
        _ => (0..n).map(f).collect(),
    }
}

/// Fallible [`map`]; returns the error of the lowest failing index.
pub fn try_map<T, E, F>(exec: Execution, n: usize, f: F) -> Result<Vec<T>, E>
where
    T: Send,
    E: Send,
    F: Fn(usize) -> Result<T, E> + Sync + Send,
{
    map(exec, n, f).into_iter().collect()
}

/// Sum of a slice by a fixed balanced binary tree.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    match v.len() {
        0 => 0.0,
        1 => v[0],
        2 => v[0] + v[1],
        n => {
            let (a, b) = v.split_at(n / 2);
            pairwise_sum(a) + pairwise_sum(b)
        }
    }
}

/// Deterministic sum of `f(i)` over `0..n`.
///
/// Each chunk of `chunk` consecutive indices owns a scratch value built by
/// `init`, sums its terms in order, and the chunk totals are added pairwise.
pub fn chunked_sum<S, E, I, F>(exec: Execution, n: usize, chunk: usize, init: I, f: F) -> Result<f64, E>
where
    E: Send,
    I: Fn() -> S + Sync + Send,
    F: Fn(&mut S, usize) -> Result<f64, E> + Sync + Send,
{
    let chunk = chunk.max(1);
    let n_chunks = n.div_ceil(chunk);
    let partial = try_map(exec, n_chunks, |c| {
        let mut scratch = init();
        let mut acc = 0.0;
        for i in c * chunk..((c + 1) * chunk).min(n) {
            acc += f(&mut scratch, i)?;
        }
        Ok(acc)
    })?;
    Ok(pairwise_sum(&partial))
}

/// Deterministic element-wise sum of vector-valued chunk results.
pub fn chunked_vec_sum<F>(exec: Execution, n_chunks: usize, len: usize, f: F) -> Vec<f64>
where
    F: Fn(usize) -> Vec<f64> + Sync + Send,
{
    let parts = map(exec, n_chunks, f);
    (0..len)
        .map(|j| {
            let col: Vec<f64> = parts.iter().map(|p| p[j]).collect();
            pairwise_sum(&col)
        })
        .collect()
}

//! Execution strategy for the data-parallel inner loops.
//!
//! Every parallel loop in the crate splits its index range into fixed-size
//! chunks, maps each chunk independently and combines the partial results in
//! chunk order. Results are therefore bit-identical between [`Execution::Parallel`]
//! and [`Execution::Sequential`], and independent of the rayon thread count.
//!
//! Without the `parallel` feature, `Execution::Parallel` runs sequentially.

use std::ops::Range;

use serde::{Deserialize, Serialize};

/// Rows per chunk for trace-length loops.
pub const CHUNK_LEN: usize = 2048;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Execution {
    #[default]
    Parallel,
    Sequential,
}

impl Execution {
    /// Whether this build can actually run loops on the rayon pool.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }
}

/// Maps `f` over `0..len` split into chunks of `chunk` indices, returning the
/// per-chunk results in order.
pub fn map_chunks<R, F>(exec: Execution, len: usize, chunk: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(Range<usize>) -> R + Sync + Send,
{
    let chunk = chunk.max(1);
    let n_chunks = len.div_ceil(chunk);
    let range = move |c: usize| c * chunk..((c + 1) * chunk).min(len);
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        return (0..n_chunks).into_par_iter().map(|c| f(range(c))).collect();
    }
    let _ = exec;
    (0..n_chunks).map(|c| f(range(c))).collect()
}

/// Maps `f` over `0..n`, preserving order. Used for batches of independent
/// jobs (one simulation or fit per index).
pub fn map_indexed<R, F>(exec: Execution, n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = exec;
    (0..n).map(f).collect()
}

/// Fills `out[i] = f(i)` chunk-wise.
pub fn fill<F>(exec: Execution, out: &mut [f64], f: F)
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        out.par_chunks_mut(CHUNK_LEN)
            .enumerate()
            .for_each(|(c, block)| {
                let base = c * CHUNK_LEN;
                for (k, slot) in block.iter_mut().enumerate() {
                    *slot = f(base + k);
                }
            });
        return;
    }
    let _ = exec;
    for (i, slot) in out.iter_mut().enumerate() {
        *slot = f(i);
    }
}

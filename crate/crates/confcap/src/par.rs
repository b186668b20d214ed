//! Data-parallel kernels with a sequential fallback.
//!
//! Everything hot in this crate (stencil sweeps, reductions, voxel counts)
//! funnels through these helpers. With the default `parallel` feature the
//! work is distributed with rayon; without it the same code paths run
//! sequentially. The `*_seq` variants are always compiled so benchmarks can
//! compare both on one build.
//!
//! Reductions are *deterministic by construction*: sums are accumulated per
//! fixed-size chunk and the chunk partials are folded in index order, so the
//! result is bit-identical no matter how many threads run. That property is
//! what lets a "deterministic" run mean byte-identical output files rather
//! than "identical up to reduction order".

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Chunk length for deterministic reductions. Fixed — never derive this from
/// the thread count, or determinism across machines is lost.
const CHUNK: usize = 4096;

/// Sum `f(i)` for `i in 0..n` deterministically.
pub fn sum<F>(n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync,
{
    let partials = chunk_partials(n, &f);
    partials.into_iter().sum()
}

/// Sequential reference implementation of [`sum`].
pub fn sum_seq<F>(n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64,
{
    let mut chunks = Vec::with_capacity(n / CHUNK + 1);
    let mut start = 0;
    while start < n {
        let end = (start + CHUNK).min(n);
        let mut acc = 0.0;
        for i in start..end {
            acc += f(i);
        }
        chunks.push(acc);
        start = end;
    }
    chunks.into_iter().sum()
}

#[cfg(feature = "parallel")]
fn chunk_partials<F>(n: usize, f: &F) -> Vec<f64>
where
    F: Fn(usize) -> f64 + Sync,
{
    let n_chunks = n.div_ceil(CHUNK);
    (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let start = c * CHUNK;
            let end = (start + CHUNK).min(n);
            let mut acc = 0.0;
            for i in start..end {
                acc += f(i);
            }
            acc
        })
        .collect()
}

#[cfg(not(feature = "parallel"))]
fn chunk_partials<F>(n: usize, f: &F) -> Vec<f64>
where
    F: Fn(usize) -> f64 + Sync,
{
    let n_chunks = n.div_ceil(CHUNK);
    (0..n_chunks)
        .map(|c| {
            let start = c * CHUNK;
            let end = (start + CHUNK).min(n);
            let mut acc = 0.0;
            for i in start..end {
                acc += f(i);
            }
            acc
        })
        .collect()
}

/// Overwrite `out[i] = f(i)` for all `i`, in parallel when enabled.
pub fn fill<T, F>(out: &mut [T], f: F)
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    #[cfg(feature = "parallel")]
    {
        out.par_iter_mut().enumerate().for_each(|(i, v)| *v = f(i));
    }
    #[cfg(not(feature = "parallel"))]
    {
        fill_seq(out, f);
    }
}

/// Sequential reference implementation of [`fill`].
pub fn fill_seq<T, F>(out: &mut [T], f: F)
where
    F: Fn(usize) -> T,
{
    for (i, v) in out.iter_mut().enumerate() {
        *v = f(i);
    }
}

/// Run `f` over index chunks of size `chunk` and concatenate the produced
/// vectors in chunk order. Output order is independent of the thread count,
/// so variable-yield kernels (like surface extraction) stay deterministic.
pub fn map_chunks<T, F>(n: usize, chunk: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(std::ops::Range<usize>) -> Vec<T> + Sync,
{
    let ranges: Vec<std::ops::Range<usize>> = (0..n)
        .step_by(chunk.max(1))
        .map(|start| start..(start + chunk).min(n))
        .collect();
    #[cfg(feature = "parallel")]
    let parts: Vec<Vec<T>> = ranges.into_par_iter().map(&f).collect();
    #[cfg(not(feature = "parallel"))]
    let parts: Vec<Vec<T>> = ranges.into_iter().map(&f).collect();
    parts.into_iter().flatten().collect()
}

/// Deterministic dot product of two equally long slices.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    sum(a.len(), |i| a[i] * b[i])
}

/// Deterministic squared Euclidean norm.
pub fn norm_sq(a: &[f64]) -> f64 {
    sum(a.len(), |i| a[i] * a[i])
}

/// Cap the number of worker threads. Must run before the first parallel
/// kernel; later calls are ignored. No-op without the `parallel` feature.
#[cfg(feature = "parallel")]
pub fn configure_threads(n: usize) {
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global();
}

#[cfg(not(feature = "parallel"))]
pub fn configure_threads(_n: usize) {}

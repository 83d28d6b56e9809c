//! Data-parallel helpers with a sequential fallback.
//!
//! Compiled with the `parallel` feature (default) these dispatch to rayon;
//! without it, or after [`set_sequential`]`(true)`, they run plain loops.
//! Every call site either writes disjoint outputs or reduces in index order,
//! so results are bitwise identical whichever path runs.

use std::sync::atomic::{AtomicBool, Ordering};

static FORCE_SEQUENTIAL: AtomicBool = AtomicBool::new(false);

/// Force sequential execution at runtime (used by benches and honored for
/// `DOT_DETERMINISTIC=1`, although outputs do not depend on it).
pub fn set_sequential(seq: bool) {
    FORCE_SEQUENTIAL.store(seq, Ordering::SeqCst);
}

pub fn threads() -> usize {
    #[cfg(feature = "parallel")]
    if is_parallel() {
        return rayon::current_num_threads();
    }
    1
}

pub fn is_parallel() -> bool {
    cfg!(feature = "parallel") && !FORCE_SEQUENTIAL.load(Ordering::SeqCst)
}

/// Maps `f` over `0..n`, collecting results in index order.
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if is_parallel() {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    (0..n).map(f).collect()
}

/// Applies `f` to equal consecutive chunks of `data`, passing the chunk's
/// starting index.
pub fn for_each_chunk<T, F>(data: &mut [T], chunk: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    assert!(chunk > 0);
    #[cfg(feature = "parallel")]
    if is_parallel() {
        use rayon::prelude::*;
        data.par_chunks_mut(chunk)
            .enumerate()
            .for_each(|(i, c)| f(i * chunk, c));
        return;
    }
    for (i, c) in data.chunks_mut(chunk).enumerate() {
        f(i * chunk, c);
    }
}

/// Splits `0..n` into contiguous blocks, runs `f` per block into a local
/// accumulator, then folds the accumulators in block order. The fixed fold
/// order keeps floating-point reductions deterministic.
pub fn block_accumulate<A, F, M>(n: usize, blocks: usize, init: impl Fn() -> A + Sync, f: F, merge: M) -> A
where
    A: Send,
    F: Fn(std::ops::Range<usize>, &mut A) + Sync,
    M: Fn(A, A) -> A,
{
    let blocks = blocks.clamp(1, n.max(1));
    let size = n.div_ceil(blocks);
    let ranges: Vec<_> = (0..blocks)
        .map(|b| (b * size).min(n)..((b + 1) * size).min(n))
        .filter(|r| !r.is_empty())
        .collect();
    let partials = map_indexed(ranges.len(), |i| {
        let mut acc = init();
        f(ranges[i].clone(), &mut acc);
        acc
    });
    let mut it = partials.into_iter();
    let first = it.next().unwrap_or_else(init);
    it.fold(first, merge)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_indexed_preserves_order() {
        let v = map_indexed(100, |i| i * i);
        assert_eq!(v[7], 49);
        assert_eq!(v.len(), 100);
    }

    #[test]
    fn sequential_switch_matches_parallel() {
        let par = map_indexed(1000, |i| (i as f64).sqrt());
        set_sequential(true);
        let seq = map_indexed(1000, |i| (i as f64).sqrt());
        set_sequential(false);
        assert_eq!(par, seq);
    }

    #[test]
    fn block_accumulate_deterministic_sum() {
        let data: Vec<f64> = (0..999).map(|i| (i as f64).sin()).collect();
        let sum = |r: std::ops::Range<usize>, acc: &mut f64| {
            for i in r {
                *acc += data[i];
            }
        };
        let a = block_accumulate(999, 8, || 0.0, sum, |x, y| x + y);
        let b = block_accumulate(999, 8, || 0.0, sum, |x, y| x + y);
        assert_eq!(a, b);
    }
}

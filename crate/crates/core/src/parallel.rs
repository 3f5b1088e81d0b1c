//! Deterministic chunked work splitting.
//!
//! [`map_chunks`] cuts a work list into `workers` contiguous chunks whose
//! results are returned in chunk order. [`fold_chunks`] uses chunks of a
//! fixed length instead and folds them strictly in order, so floating-point
//! reductions do not depend on the worker count. With `std` chunks run on
//! scoped threads; without it they run in sequence with the same results.

use alloc::vec::Vec;
use core::ops::Range;

pub fn chunk_ranges(len: usize, workers: usize) -> Vec<Range<usize>> {
    let workers = workers.max(1).min(len.max(1));
    let base = len / workers;
    let extra = len % workers;
    let mut out = Vec::with_capacity(workers);
    let mut start = 0;
    for w in 0..workers {
        let size = base + usize::from(w < extra);
        out.push(start..start + size);
        start += size;
    }
    out
}

pub fn map_chunks<T, R, F>(items: &[T], workers: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&[T]) -> R + Sync,
{
    let ranges = chunk_ranges(items.len(), workers);
    #[cfg(feature = "std")]
    {
        if ranges.len() > 1 {
            return std::thread::scope(|scope| {
                let handles: Vec<_> = ranges
                    .iter()
                    .map(|r| {
                        let chunk = &items[r.clone()];
                        let f = &f;
                        scope.spawn(move || f(chunk))
                    })
                    .collect();
                handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
            });
        }
    }
    ranges.into_iter().map(|r| f(&items[r])).collect()
}

/// Maps fixed-length chunks on up to `workers` threads at a time and folds
/// the results in chunk order.
pub fn fold_chunks<T, R, A, F, G>(items: &[T], chunk_len: usize, workers: usize, init: A, f: F, mut fold: G) -> A
where
    T: Sync,
    R: Send,
    F: Fn(&[T]) -> R + Sync,
    G: FnMut(A, R) -> A,
{
    let chunks: Vec<&[T]> = items.chunks(chunk_len.max(1)).collect();
    let mut acc = init;
    for wave in chunks.chunks(workers.max(1)) {
        let results = map_chunks(wave, wave.len(), |group| group.iter().map(|c| f(c)).collect::<Vec<R>>());
        for r in results.into_iter().flatten() {
            acc = fold(acc, r);
        }
    }
    acc
}

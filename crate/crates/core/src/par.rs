//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature these dispatch to rayon; without it they are
//! ordinary iterator chains. Reductions are always performed over fixed-size
//! chunks whose partial results are combined left to right, so floating
//! point sums do not depend on the thread count or on the feature flag.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Chunk length used by [`chunked_fold`].
pub const REDUCE_CHUNK: usize = 4;

/// Order-preserving map over a slice.
pub fn map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

/// Order-preserving map over `0..n`.
pub fn map_range<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Folds `items` in chunks of [`REDUCE_CHUNK`], then merges the chunk
/// accumulators sequentially in chunk order.
///
/// `fold` is applied to items in their original order within each chunk.
/// Returns `None` for an empty slice.
pub fn chunked_fold<T, A, I, F, M>(items: &[T], init: I, fold: F, merge: M) -> Option<A>
where
    T: Sync,
    A: Send,
    I: Fn() -> A + Sync + Send,
    F: Fn(&mut A, &T) + Sync + Send,
    M: Fn(&mut A, A),
{
    let per_chunk = |chunk: &[T]| {
        let mut acc = init();
        for item in chunk {
            fold(&mut acc, item);
        }
        acc
    };
    #[cfg(feature = "parallel")]
    let partials: Vec<A> = items.par_chunks(REDUCE_CHUNK).map(per_chunk).collect();
    #[cfg(not(feature = "parallel"))]
    let partials: Vec<A> = items.chunks(REDUCE_CHUNK).map(per_chunk).collect();

    let mut iter = partials.into_iter();
    let mut total = iter.next()?;
    for part in iter {
        merge(&mut total, part);
    }
    Some(total)
}

/// Deterministic sum of `f` over the slice.
pub fn sum<T, F>(items: &[T], f: F) -> f64
where
    T: Sync,
    F: Fn(&T) -> f64 + Sync + Send,
{
    chunked_fold(items, || 0.0, |acc, t| *acc += f(t), |a, b| *a += b).unwrap_or(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_preserves_order() {
        let v: Vec<usize> = (0..1000).collect();
        assert_eq!(map(&v, |x| x * 2), (0..1000).map(|x| x * 2).collect::<Vec<_>>());
        assert_eq!(map_range(5, |i| i + 1), vec![1, 2, 3, 4, 5]);
    }

    #[test]
    fn chunked_sum_matches_explicit_chunking() {
        let v: Vec<f64> = (0..103).map(|i| 1.0 / (i as f64 + 0.3)).collect();
        let mut expected = 0.0;
        for (k, chunk) in v.chunks(REDUCE_CHUNK).enumerate() {
            let s: f64 = chunk.iter().fold(0.0, |a, b| a + b);
            if k == 0 {
                expected = s;
            } else {
                expected += s;
            }
        }
        assert_eq!(sum(&v, |x| *x).to_bits(), expected.to_bits());
        assert!(chunked_fold(&[] as &[f64], || 0.0, |_, _| {}, |_, _| {}).is_none());
    }
}

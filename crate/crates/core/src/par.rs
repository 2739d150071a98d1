//! Thread-count independent parallel reductions.
//!
//! Work over `0..n` is cut into fixed-size chunks; each chunk is reduced
//! sequentially and the partial results are combined in chunk order. The
//! floating-point result therefore depends only on `n`, never on how many
//! worker threads happened to run.

use std::ops::Range;

use rayon::prelude::*;

pub const CHUNK: usize = 256;

/// Maps every chunk of `0..n` through `f`, returning the partials in order.
pub fn chunked<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(Range<usize>) -> T + Sync,
{
    let chunks = n.div_ceil(CHUNK);
    (0..chunks)
        .into_par_iter()
        .map(|c| f(c * CHUNK..((c + 1) * CHUNK).min(n)))
        .collect()
}

/// Fallible variant of [`chunked`]; the first error in chunk order wins.
pub fn try_chunked<T, E, F>(n: usize, f: F) -> Result<Vec<T>, E>
where
    T: Send,
    E: Send,
    F: Fn(Range<usize>) -> Result<T, E> + Sync,
{
    chunked(n, f).into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partials_cover_range_in_order() {
        let parts = chunked(1000, |r| r.clone());
        assert_eq!(parts.first().unwrap().start, 0);
        assert_eq!(parts.last().unwrap().end, 1000);
        for w in parts.windows(2) {
            assert_eq!(w[0].end, w[1].start);
        }
        assert!(chunked(0, |r| r).is_empty());
    }

    #[test]
    fn sum_is_independent_of_pool_size() {
        let xs: Vec<f64> = (0..10_000).map(|i| ((i * 7919) % 1000) as f64 * 1e-3 + 1e-9 * i as f64).collect();
        let total = |threads| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            pool.install(|| chunked(xs.len(), |r| xs[r].iter().sum::<f64>()).into_iter().sum::<f64>())
        };
        assert_eq!(total(1).to_bits(), total(8).to_bits());
    }
}

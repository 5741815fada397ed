//! Deterministic data-parallel helpers.
//!
//! Every reduction in this crate is map-then-ordered-fold: per-item results
//! are collected into an index-ordered buffer (in parallel when the
//! `parallel` feature is on) and summed left to right. Results are therefore
//! bit-identical for any rayon thread count and for the sequential fallback
//! build.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Map over a slice, preserving index order.
pub fn map_slice<T, R, F>(items: &[T], f: F) -> Vec<R>
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

/// Map over `0..n`, preserving index order.
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

/// Sequential twin of [`map_slice`], kept unconditionally so benchmarks can
/// compare both paths within one build.
pub fn map_slice_seq<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    F: Fn(&T) -> R,
{
    items.iter().map(f).collect()
}

/// Sequential twin of [`map_range`].
pub fn map_range_seq<R, F>(n: usize, f: F) -> Vec<R>
where
    F: Fn(usize) -> R,
{
    (0..n).map(f).collect()
}

/// Left-to-right sum; the fixed reduction order behind bit-stable reports.
pub fn ordered_sum(values: &[f64]) -> f64 {
    values.iter().fold(0.0, |acc, v| acc + v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_and_sequential_maps_agree_bitwise() {
        let xs: Vec<f64> = (0..1000).map(|i| (i as f64).sin() * 1e3).collect();
        let f = |x: &f64| x.exp().ln_1p() / 3.0;
        let a = map_slice(&xs, f);
        let b = map_slice_seq(&xs, f);
        assert!(a
            .iter()
            .zip(&b)
            .all(|(u, v)| u.to_bits() == v.to_bits()));
        assert_eq!(
            ordered_sum(&a).to_bits(),
            ordered_sum(&b).to_bits()
        );
    }

    #[test]
    fn map_range_matches_indices() {
        let v = map_range(5, |i| i * i);
        assert_eq!(v, vec![0, 1, 4, 9, 16]);
    }
}

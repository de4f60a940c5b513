//! Data-parallel map helpers.
//!
//! Outer loops over energies, grid nodes, and ensemble members funnel
//! through these functions. With the `parallel` feature (default) they use
//! rayon; without it they run sequentially. Results are collected in index
//! order either way, so outputs are bitwise identical across both builds
//! and any thread count.

/// Map `f` over `0..n`, preserving order.
#[cfg(feature = "parallel")]
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

/// Map `f` over `0..n`, preserving order (sequential build).
#[cfg(not(feature = "parallel"))]
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).map(f).collect()
}

/// Fallible variant: first error wins, order preserved on success.
#[cfg(feature = "parallel")]
pub fn try_map_indexed<T, E, F>(n: usize, f: F) -> Result<Vec<T>, E>
where
    T: Send,
    E: Send,
    F: Fn(usize) -> Result<T, E> + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

/// Fallible variant (sequential build).
#[cfg(not(feature = "parallel"))]
pub fn try_map_indexed<T, E, F>(n: usize, f: F) -> Result<Vec<T>, E>
where
    T: Send,
    E: Send,
    F: Fn(usize) -> Result<T, E> + Sync + Send,
{
    (0..n).map(f).collect()
}

#[cfg(test)]
mod tests {
    #[test]
    fn order_is_preserved() {
        let v = super::map_indexed(100, |i| i * i);
        assert_eq!(v[7], 49);
        assert_eq!(v.len(), 100);
    }

    #[test]
    fn errors_propagate() {
        let r: Result<Vec<usize>, &str> =
            super::try_map_indexed(10, |i| if i == 5 { Err("boom") } else { Ok(i) });
        assert!(r.is_err());
    }
}

//! Batch helpers that fan out over rayon when the `parallel` feature is on
//! and fall back to plain iterators otherwise. Results keep input order.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

pub fn try_map<T, R, E, F>(items: &[T], f: F) -> Result<Vec<R>, E>
where
    T: Sync,
    R: Send,
    E: Send,
    F: Fn(&T) -> Result<R, E> + Sync + Send,
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

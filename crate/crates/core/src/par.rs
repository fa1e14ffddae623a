//! Order-preserving map over trial indices, on rayon when the `parallel`
//! feature is enabled and sequentially otherwise.

/// `f(0), f(1), …, f(n−1)` in index order. `threads = Some(1)` forces the
/// calling thread; `Some(k)` uses a dedicated pool of `k` workers.
pub fn map_indexed<T, F>(n: usize, threads: Option<usize>, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        match threads {
            Some(1) => (0..n).map(f).collect(),
            Some(k) => match rayon::ThreadPoolBuilder::new().num_threads(k).build() {
                Ok(pool) => pool.install(|| (0..n).into_par_iter().map(&f).collect()),
                Err(_) => (0..n).map(f).collect(),
            },
            None => (0..n).into_par_iter().map(f).collect(),
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
        (0..n).map(f).collect()
    }
}

/// Whether batches can fan out in this build.
pub const PARALLEL: bool = cfg!(feature = "parallel");

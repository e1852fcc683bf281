//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature (default) work is spread over a rayon pool;
//! without it every [`Execution`] runs sequentially. Results are always
//! returned in input order.

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    /// Use the global rayon pool.
    #[default]
    Parallel,
    /// Use a dedicated pool of exactly this many threads.
    Bounded(usize),
}

impl Execution {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && !matches!(self, Execution::Sequential | Execution::Bounded(0 | 1))
    }
}

/// Map `f` over `items`, keeping input order in the output.
pub fn map_ordered<T, R, F>(items: &[T], exec: Execution, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> R + Sync + Send,
{
    if !exec.is_parallel() {
        return items.iter().enumerate().map(|(i, t)| f(i, t)).collect();
    }
    parallel_map(items, exec, f)
}

#[cfg(feature = "parallel")]
fn parallel_map<T, R, F>(items: &[T], exec: Execution, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> R + Sync + Send,
{
    use rayon::prelude::*;

    let run = || items.par_iter().enumerate().map(|(i, t)| f(i, t)).collect();
    match exec {
        Execution::Bounded(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(run),
            Err(e) => {
                log::warn!("could not build a {n}-thread pool ({e}); running sequentially");
                items.iter().enumerate().map(|(i, t)| f(i, t)).collect()
            }
        },
        _ => run(),
    }
}

#[cfg(not(feature = "parallel"))]
fn parallel_map<T, R, F>(items: &[T], _exec: Execution, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> R + Sync + Send,
{
    items.iter().enumerate().map(|(i, t)| f(i, t)).collect()
}

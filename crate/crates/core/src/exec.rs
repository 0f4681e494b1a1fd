//! Data-parallel execution of independent trials.
//!
//! Work is split into a fixed number of chunks that does not depend on the
//! thread count. Each chunk derives its own seed, and results come back in
//! chunk order, so sequential and parallel execution give bit-identical
//! output. Without the `parallel` feature [`Exec::Parallel`] runs
//! sequentially.

use serde::Deserialize;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Exec {
    Sequential,
    #[default]
    Parallel,
}

impl Exec {
    /// `f(0), f(1), ..., f(n - 1)`, in order.
    pub fn map<T, F>(self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        match self {
            Exec::Sequential => (0..n).map(f).collect(),
            Exec::Parallel => par_map(n, f),
        }
    }

    /// Splits `n_trials` into chunks of at most `chunk` trials and calls
    /// `f(chunk_index, trials_in_chunk)` on each.
    pub fn map_chunks<T, F>(self, n_trials: usize, chunk: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize, usize) -> T + Sync + Send,
    {
        let chunk = chunk.max(1);
        let n_chunks = n_trials.div_ceil(chunk);
        self.map(n_chunks, |c| {
            let start = c * chunk;
            f(c, chunk.min(n_trials - start))
        })
    }
}

/// Runs `f` with parallel work limited to `workers` threads.
#[cfg(feature = "parallel")]
pub fn with_workers<R: Send>(workers: usize, f: impl FnOnce() -> R + Send) -> R {
    match rayon::ThreadPoolBuilder::new().num_threads(workers.max(1)).build() {
        Ok(pool) => pool.install(f),
        Err(_) => f(),
    }
}

#[cfg(not(feature = "parallel"))]
pub fn with_workers<R: Send>(_workers: usize, f: impl FnOnce() -> R + Send) -> R {
    f()
}

#[cfg(feature = "parallel")]
fn par_map<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn par_map<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).map(f).collect()
}

/// Pairwise (tree) reduction in index order.
pub fn pairwise_reduce<T>(mut items: Vec<T>, merge: impl Fn(T, T) -> T) -> Option<T> {
    while items.len() > 1 {
        let mut next = Vec::with_capacity(items.len().div_ceil(2));
        let mut it = items.into_iter();
        while let Some(a) = it.next() {
            match it.next() {
                Some(b) => next.push(merge(a, b)),
                None => next.push(a),
            }
        }
        items = next;
    }
    items.pop()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chunks_cover_all_trials() {
        let sizes = Exec::Sequential.map_chunks(10, 4, |_, n| n);
        assert_eq!(sizes, vec![4, 4, 2]);
    }

    #[test]
    fn parallel_matches_sequential() {
        let f = |c: usize, n: usize| (c as f64).sqrt() * n as f64;
        assert_eq!(
            Exec::Sequential.map_chunks(1000, 7, f),
            Exec::Parallel.map_chunks(1000, 7, f)
        );
    }

    #[test]
    fn pairwise_sum() {
        assert_eq!(pairwise_reduce(vec![1, 2, 3, 4, 5], |a, b| a + b), Some(15));
        assert_eq!(pairwise_reduce(Vec::<i32>::new(), |a, b| a + b), None);
    }
}

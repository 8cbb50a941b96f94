//! Data-parallel execution with a sequential fallback.
//!
//! Every batch operation in the crate goes through [`Exec`], so results never
//! depend on which variant ran: work items are indexed and collected in order,
//! and randomness is derived from item indices rather than from a shared
//! generator.

/// How batch work is scheduled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exec {
    Sequential,
    /// Rayon work stealing on the current thread pool. Without the `parallel`
    /// feature this behaves exactly like `Sequential`.
    Parallel,
}

impl Default for Exec {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Exec::Parallel
        } else {
            Exec::Sequential
        }
    }
}

impl Exec {
    /// `(0..n).map(f).collect()`, possibly in parallel. Output order is always
    /// index order.
    pub fn map_indexed<T, F>(self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Exec::Parallel => {
                use rayon::prelude::*;
                (0..n).into_par_iter().map(f).collect()
            }
            _ => (0..n).map(f).collect(),
        }
    }

    /// Maps over a slice, preserving order.
    pub fn map_slice<S, T, F>(self, items: &[S], f: F) -> Vec<T>
    where
        S: Sync,
        T: Send,
        F: Fn(usize, &S) -> T + Sync + Send,
    {
        self.map_indexed(items.len(), |i| f(i, &items[i]))
    }

    /// Fills `out` in chunks of `chunk` elements; `f` receives the index of the
    /// first element of its chunk.
    pub fn fill_chunks<T, F>(self, out: &mut [T], chunk: usize, f: F)
    where
        T: Send,
        F: Fn(usize, &mut [T]) + Sync + Send,
    {
        let chunk = chunk.max(1);
        match self {
            #[cfg(feature = "parallel")]
            Exec::Parallel => {
                use rayon::prelude::*;
                out.par_chunks_mut(chunk)
                    .enumerate()
                    .for_each(|(k, c)| f(k * chunk, c));
            }
            _ => out
                .chunks_mut(chunk)
                .enumerate()
                .for_each(|(k, c)| f(k * chunk, c)),
        }
    }
}

/// Runs `f` inside a pool with exactly `threads` workers. Falls back to a
/// plain call when `threads` is `None` or the `parallel` feature is off.
pub fn with_threads<R: Send>(threads: Option<usize>, f: impl FnOnce() -> R + Send) -> R {
    #[cfg(feature = "parallel")]
    if let Some(n) = threads {
        if let Ok(pool) = rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
        {
            return pool.install(f);
        }
    }
    let _ = threads;
    f()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variants_agree() {
        let a = Exec::Sequential.map_indexed(1000, |i| i * i);
        let b = Exec::Parallel.map_indexed(1000, |i| i * i);
        assert_eq!(a, b);

        let mut x = vec![0usize; 1001];
        let mut y = vec![0usize; 1001];
        Exec::Sequential.fill_chunks(&mut x, 64, |s, c| {
            for (k, v) in c.iter_mut().enumerate() {
                *v = s + k;
            }
        });
        with_threads(Some(3), || {
            Exec::Parallel.fill_chunks(&mut y, 64, |s, c| {
                for (k, v) in c.iter_mut().enumerate() {
                    *v = s + k;
                }
            })
        });
        assert_eq!(x, y);
        assert_eq!(x[1000], 1000);
    }
}

//! Data-parallel helpers. With the `parallel` feature (default) work is
//! spread over a rayon pool; without it everything runs sequentially.
//! Results always come back in index order, so reductions over them are
//! independent of the thread count.

use crate::error::{FawpError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

impl Execution {
    /// Whether this build can actually run work in parallel.
    pub fn parallel_available() -> bool {
        cfg!(feature = "parallel")
    }
}

/// `(0..n).map(f)` collected in order, possibly in parallel.
pub fn map_indexed<T, F>(n: usize, exec: Execution, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            (0..n).into_par_iter().map(f).collect()
        }
        _ => (0..n).map(f).collect(),
    }
}

/// Like [`map_indexed`] for fallible work; the first error in index order
/// is returned.
pub fn try_map_indexed<T, F>(n: usize, exec: Execution, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    map_indexed(n, exec, f).into_iter().collect()
}

/// Run `f` with parallel work capped at `threads` workers.
pub fn with_threads<T: Send, F: FnOnce() -> T + Send>(threads: Option<usize>, f: F) -> Result<T> {
    match threads {
        Some(0) => Err(FawpError::InvalidArgument("thread count must be positive".into())),
        #[cfg(feature = "parallel")]
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| FawpError::InvalidArgument(e.to_string()))?;
            Ok(pool.install(f))
        }
        _ => Ok(f()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved() {
        let seq = map_indexed(100, Execution::Sequential, |i| i * i);
        let par = map_indexed(100, Execution::Parallel, |i| i * i);
        assert_eq!(seq, par);
        let par4 = with_threads(Some(4), || map_indexed(100, Execution::Parallel, |i| i * i)).unwrap();
        assert_eq!(seq, par4);
    }

    #[test]
    fn first_error_wins() {
        let r: Result<Vec<usize>> = try_map_indexed(10, Execution::Parallel, |i| {
            if i >= 3 {
                Err(FawpError::InvalidArgument(format!("{i}")))
            } else {
                Ok(i)
            }
        });
        assert!(matches!(r, Err(FawpError::InvalidArgument(m)) if m == "3"));
        assert!(with_threads(Some(0), || ()).is_err());
    }
}

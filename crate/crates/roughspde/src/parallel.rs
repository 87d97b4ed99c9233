//! Deterministic parallel Monte Carlo.
//!
//! Paths are cut into fixed chunks of [`PATH_CHUNK`] consecutive indices. Each
//! chunk is accumulated sequentially by whichever worker picks it up, and the
//! chunk results come back in chunk order, so every reduction sees the same
//! sequence of floating-point operations for any worker count.

use std::ops::Range;

use rayon::prelude::*;
use roughspde_core::error::{Error as CoreError, Result as CoreResult};

use crate::error::{CliError, Result};

pub const PATH_CHUNK: usize = 8;

pub fn chunks(paths: usize) -> Vec<Range<u64>> {
    (0..paths.div_ceil(PATH_CHUNK))
        .map(|c| (c * PATH_CHUNK) as u64..((c + 1) * PATH_CHUNK).min(paths) as u64)
        .collect()
}

pub fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// Run `step` for every path on `workers` threads.
///
/// `init` builds per-thread scratch state, `fresh` an empty accumulator per
/// chunk. Returns one accumulator per chunk, in path order.
pub fn run_chunks<S, A, I, F, P>(paths: usize, workers: usize, init: I, fresh: F, step: P) -> Result<Vec<A>>
where
    A: Send,
    I: Fn() -> CoreResult<S> + Sync + Send,
    F: Fn() -> A + Sync + Send,
    P: Fn(&mut S, &mut A, u64) -> CoreResult<()> + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| CliError::config("workers", e))?;
    let results: Vec<std::result::Result<A, (u64, CoreError)>> = pool.install(|| {
        chunks(paths)
            .into_par_iter()
            .map_init(&init, |state, range| {
                let state = state.as_mut().map_err(|e| (range.start, e.clone()))?;
                let mut acc = fresh();
                for path in range {
                    step(state, &mut acc, path).map_err(|e| (path, e))?;
                }
                Ok(acc)
            })
            .collect()
    });
    let mut out = Vec::with_capacity(results.len());
    for r in results {
        match r {
            Ok(a) => out.push(a),
            Err((path, source)) => {
                return Err(CliError::Worker { path, completed: out.len() * PATH_CHUNK, source });
            }
        }
    }
    Ok(out)
}

/// [`run_chunks`] collecting one value per path, in path order.
pub fn map_paths<S, T, I, P>(paths: usize, workers: usize, init: I, f: P) -> Result<Vec<T>>
where
    T: Send,
    I: Fn() -> CoreResult<S> + Sync + Send,
    P: Fn(&mut S, u64) -> CoreResult<T> + Sync + Send,
{
    let parts = run_chunks(paths, workers, init, Vec::new, |s, acc: &mut Vec<T>, path| {
        acc.push(f(s, path)?);
        Ok(())
    })?;
    Ok(parts.into_iter().flatten().collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chunks_cover_paths_in_order() {
        let c = chunks(19);
        assert_eq!(c, vec![0..8, 8..16, 16..19]);
        assert!(chunks(0).is_empty());
    }

    #[test]
    fn results_are_in_path_order_for_any_worker_count() {
        let sq = |_: &mut (), p: u64| Ok((p * p) as f64 + 0.1);
        let one = map_paths(37, 1, || Ok(()), sq).unwrap();
        let many = map_paths(37, 5, || Ok(()), sq).unwrap();
        assert_eq!(one, many);
        assert_eq!(one[36], 1296.1);
    }

    #[test]
    fn failing_path_is_reported() {
        let r = map_paths(20, 3, || Ok(()), |_, p| {
            if p == 13 {
                Err(CoreError::Instability { step: 4 })
            } else {
                Ok(p)
            }
        });
        match r {
            Err(CliError::Worker { path, completed, .. }) => {
                assert_eq!(path, 13);
                assert_eq!(completed, 8);
            }
            other => panic!("{other:?}"),
        }
    }
}

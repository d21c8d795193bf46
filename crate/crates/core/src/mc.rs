//! Deterministic parallel map over sample indices.
//!
//! Every task receives only its index, from which it derives its own random
//! stream, and results are reduced in index order. The outcome is therefore
//! independent of the number of worker threads and of scheduling.

use std::panic::{catch_unwind, AssertUnwindSafe};

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Run `task(i)` for `i` in `0..n` on the current rayon pool, in index order.
pub fn mc_collect<T, F>(n: u64, task: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync,
{
    let out: Vec<Result<T>> = (0..n)
        .into_par_iter()
        .map(|i| match catch_unwind(AssertUnwindSafe(|| task(i))) {
            Ok(r) => r,
            Err(payload) => {
                let message = payload
                    .downcast_ref::<&str>()
                    .map(|s| s.to_string())
                    .or_else(|| payload.downcast_ref::<String>().cloned())
                    .unwrap_or_else(|| "panic".into());
                Err(Error::Worker { index: i, message })
            }
        })
        .collect();
    out.into_iter().collect()
}

/// Map then fold in index order, starting from `identity`.
pub fn mc_map<T, A, F, R>(n: u64, task: F, identity: A, reduce: R) -> Result<A>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync,
    R: Fn(A, T) -> A,
{
    Ok(mc_collect(n, task)?.into_iter().fold(identity, reduce))
}

/// Run `f` on a dedicated pool with `threads` workers (0 = rayon default).
pub fn with_threads<R: Send>(threads: usize, f: impl FnOnce() -> R + Send) -> Result<R> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().map_err(|e| Error::Internal(e.to_string()))?;
    Ok(pool.install(f))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn noisy(i: u64) -> Result<f64> {
        Ok(((i as f64) * 0.7311).sin() * 1e-3 + 1.0 / (i as f64 + 1.0))
    }

    #[test]
    fn sum_is_thread_count_invariant() {
        let serial: f64 = (0..1000).map(|i| noisy(i).unwrap()).fold(0.0, |a, b| a + b);
        for t in [1, 2, 3, 8] {
            let s = with_threads(t, || mc_map(1000, noisy, 0.0, |a, b| a + b)).unwrap().unwrap();
            assert_eq!(s.to_bits(), serial.to_bits());
        }
    }

    #[test]
    fn empty_gives_identity() {
        assert_eq!(mc_map(0, noisy, 42.0, |a, b| a + b).unwrap(), 42.0);
    }

    #[test]
    fn panic_reports_index() {
        let r = mc_collect(20, |i| if i == 13 { panic!("boom") } else { Ok(i) });
        assert_eq!(r, Err(Error::Worker { index: 13, message: "boom".into() }));
    }
}

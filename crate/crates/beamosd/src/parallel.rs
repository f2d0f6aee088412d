//! Order-preserving parallel map over independent items.

use rayon::prelude::*;

use crate::{Error, Result};

/// Caps the worker count when set to a positive integer.
pub const THREADS_ENV: &str = "BEAMOSD_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Workers {
    threads: usize,
}

impl Workers {
    pub fn serial() -> Self {
        Self { threads: 1 }
    }

    pub fn new(threads: usize) -> Result<Self> {
        if threads == 0 {
            return Err(Error::usage("worker count must be positive"));
        }
        Ok(Self { threads })
    }

    /// One worker with `serial`, else `BEAMOSD_THREADS` or all cores.
    pub fn from_env(serial: bool) -> Result<Self> {
        if serial {
            return Ok(Self::serial());
        }
        let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
        match std::env::var(THREADS_ENV) {
            Ok(v) => match v.trim().parse::<usize>() {
                Ok(n) if n > 0 => Self::new(n),
                _ => Err(Error::usage(format!("{THREADS_ENV} must be a positive integer, got {v:?}"))),
            },
            Err(_) => Self::new(cores),
        }
    }

    pub fn threads(&self) -> usize {
        self.threads
    }

    /// `f` over `items`, results in input order. The first error wins.
    pub fn map<T, U, F>(&self, items: &[T], f: F) -> Result<Vec<U>>
    where
        T: Sync,
        U: Send,
        F: Fn(&T) -> Result<U> + Sync + Send,
    {
        if self.threads == 1 || items.len() < 2 {
            return items.iter().map(f).collect();
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.threads)
            .build()
            .map_err(|e| Error::usage(format!("cannot start {} workers: {e}", self.threads)))?;
        pool.install(|| items.par_iter().map(f).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_map_keeps_order() {
        let items: Vec<u64> = (0..200).collect();
        let f = |x: &u64| Ok(x * x + 1);
        let a = Workers::serial().map(&items, f).unwrap();
        let b = Workers::new(4).unwrap().map(&items, f).unwrap();
        assert_eq!(a, b);
        assert_eq!(a[10], 101);
    }

    #[test]
    fn errors_propagate() {
        let items = [1, 2, 3];
        let r = Workers::new(2).unwrap().map(&items, |&x| {
            if x == 2 {
                Err(Error::data("two"))
            } else {
                Ok(x)
            }
        });
        assert!(r.is_err());
        assert!(Workers::new(0).is_err());
    }
}

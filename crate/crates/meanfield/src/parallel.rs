use rayon::prelude::*;

use meanfield_core::Executor;

use crate::error::{AppError, Result};

/// Rows per block handed to one worker.
const BLOCK_ROWS: usize = 512;

/// Runs per-particle kernels on the current rayon pool.
#[derive(Debug, Clone, Copy, Default)]
pub struct RayonExecutor;

impl Executor for RayonExecutor {
    fn for_each_block(&self, data: &mut [f64], width: usize, op: &(dyn Fn(usize, &mut [f64]) + Sync)) {
        let chunk = width * BLOCK_ROWS;
        if data.len() <= chunk {
            op(0, data);
            return;
        }
        data.par_chunks_mut(chunk)
            .enumerate()
            .for_each(|(b, block)| op(b * BLOCK_ROWS, block));
    }

    fn map_indices(&self, count: usize, op: &(dyn Fn(usize) -> f64 + Sync)) -> Vec<f64> {
        (0..count).into_par_iter().map(op).collect()
    }
}

/// A dedicated pool with `threads` workers, or the global pool.
pub fn pool(threads: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(k) = threads {
        if k == 0 {
            return Err(AppError::Config("--threads must be positive".into()));
        }
        builder = builder.num_threads(k);
    }
    builder.build().map_err(|e| AppError::Config(format!("cannot start thread pool: {e}")))
}

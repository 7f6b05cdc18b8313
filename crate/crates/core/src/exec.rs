//! Execution strategy for per-particle work.
//!
//! All stepping kernels write each particle's row independently from
//! read-only inputs, so a parallel executor produces bit-identical output to
//! [`Sequential`]. Reductions (means, distances) are never delegated here.

use alloc::vec::Vec;

pub trait Executor: Sync {
    /// Splits `data` into blocks of whole `width`-sized rows and calls
    /// `op(first_row, block)` once per block. Blocks may run concurrently.
    fn for_each_block(&self, data: &mut [f64], width: usize, op: &(dyn Fn(usize, &mut [f64]) + Sync));

    /// Evaluates `op(i)` for `i in 0..count`, results in index order.
    fn map_indices(&self, count: usize, op: &(dyn Fn(usize) -> f64 + Sync)) -> Vec<f64>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl Executor for Sequential {
    fn for_each_block(&self, data: &mut [f64], _width: usize, op: &(dyn Fn(usize, &mut [f64]) + Sync)) {
        op(0, data);
    }

    fn map_indices(&self, count: usize, op: &(dyn Fn(usize) -> f64 + Sync)) -> Vec<f64> {
        (0..count).map(op).collect()
    }
}

//! Crate-global worker count for batch-parallel convolution.
//!
//! Parallelism is deterministic: samples are assigned to workers in fixed
//! contiguous blocks and weight-gradient partials are reduced in worker order,
//! so results are bit-identical to the serial path.

use std::sync::atomic::{AtomicUsize, Ordering};

static NUM_THREADS: AtomicUsize = AtomicUsize::new(1);

pub fn set_num_threads(n: usize) {
    NUM_THREADS.store(n.max(1), Ordering::Relaxed);
}

pub fn num_threads() -> usize {
    NUM_THREADS.load(Ordering::Relaxed)
}

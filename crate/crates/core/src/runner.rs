//! Chunked execution of independent work items.
//!
//! Monte-Carlo sums are split into fixed-size chunks of atoms. A runner only
//! decides *where* chunks are evaluated; the chunk boundaries and the order in
//! which partial results are combined are fixed by the caller, so any runner
//! yields bit-identical sums.

use alloc::vec::Vec;

/// Atoms per Monte-Carlo chunk.
pub const CHUNK_LEN: usize = 4096;

pub trait ChunkRunner: Sync {
    /// Evaluate `f(0..count)` and return the results in index order.
    fn map_indexed<T, F>(&self, count: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send;
}

/// Runs every chunk on the calling thread.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl ChunkRunner for Sequential {
    fn map_indexed<T, F>(&self, count: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        (0..count).map(f).collect()
    }
}

/// Number of chunks needed to cover `len` items.
pub fn chunk_count(len: usize) -> usize {
    len.div_ceil(CHUNK_LEN)
}

/// Index range of chunk `i` over `len` items.
pub fn chunk_range(i: usize, len: usize) -> core::ops::Range<usize> {
    let start = i * CHUNK_LEN;
    start..(start + CHUNK_LEN).min(len)
}

use coldmem_core::runner::ChunkRunner;
use rayon::prelude::*;
use rayon::ThreadPool;

/// Evaluates Monte-Carlo chunks and curve points on a rayon pool.
///
/// Results come back in index order, so the fixed-order reduction in the core
/// crate gives the same bits for any thread count.
pub struct PoolRunner {
    pool: ThreadPool,
}

impl PoolRunner {
    /// `threads == 0` lets rayon pick the number of threads.
    pub fn new(threads: usize) -> anyhow::Result<Self> {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build()?;
        Ok(Self { pool })
    }

    pub fn threads(&self) -> usize {
        self.pool.current_num_threads()
    }
}

impl ChunkRunner for PoolRunner {
    fn map_indexed<T, F>(&self, count: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        self.pool.install(|| (0..count).into_par_iter().map(f).collect())
    }
}

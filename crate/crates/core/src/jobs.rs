//! Tile jobs: the schedulable unit of CONV work.
//!
//! A CONV layer's matrix product `C = A*B` is split into square output
//! tiles; computing one tile is a [`Job`]. Jobs of one layer write disjoint
//! regions of `C`, so any number of them may execute concurrently, on any
//! processing engine, in any order, and the result is bitwise identical:
//! within a job the reduction runs over ascending tile index with a fixed
//! i/j/k loop nest.
//!
//! Tile fetches zero-fill positions outside the matrix borders and tile
//! stores silently drop out-of-border writes, so dimensions that are not
//! multiples of the tile size work unchanged.

use std::sync::atomic::{AtomicU32, Ordering};
use std::sync::{Arc, RwLock, RwLockReadGuard, RwLockWriteGuard};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Matrix;

/// Side length of a square tile. 32 unless overridden by the hardware config.
pub const DEFAULT_TILE_SIZE: usize = 32;

/// Identifies the layer that owns a job, so completion acknowledgments
/// route correctly even when a job finishes on a foreign cluster.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LayerId(pub usize);

impl std::fmt::Display for LayerId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "layer-{}", self.0)
    }
}

/// Tiling configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TilingParams {
    pub tile_size: usize,
}

impl TilingParams {
    pub fn new(tile_size: usize) -> Result<Self> {
        if tile_size < 1 {
            return Err(Error::shape("tile size must be >= 1".to_string()));
        }
        Ok(TilingParams { tile_size })
    }
}

impl Default for TilingParams {
    fn default() -> Self {
        TilingParams {
            tile_size: DEFAULT_TILE_SIZE,
        }
    }
}

/// Shared handle to a matrix. Jobs carry handles, not copies; the buffer
/// lives as long as any outstanding job references it.
#[derive(Debug)]
pub struct SharedMatrix<S> {
    inner: Arc<RwLock<Matrix<S>>>,
}

impl<S> Clone for SharedMatrix<S> {
    fn clone(&self) -> Self {
        SharedMatrix {
            inner: Arc::clone(&self.inner),
        }
    }
}

impl<S: Scalar> SharedMatrix<S> {
    pub fn new(matrix: Matrix<S>) -> Self {
        SharedMatrix {
            inner: Arc::new(RwLock::new(matrix)),
        }
    }

    pub fn read(&self) -> RwLockReadGuard<'_, Matrix<S>> {
        self.inner.read().expect("matrix lock poisoned")
    }

    pub fn write(&self) -> RwLockWriteGuard<'_, Matrix<S>> {
        self.inner.write().expect("matrix lock poisoned")
    }

    /// Clones the current contents out of the handle.
    pub fn snapshot(&self) -> Matrix<S> {
        self.read().clone()
    }
}

/// One output tile of one CONV layer's matrix product.
#[derive(Debug, Clone)]
pub struct Job<S> {
    pub a: SharedMatrix<S>,
    pub b: SharedMatrix<S>,
    pub c: SharedMatrix<S>,
    /// Loop bounds of the full product: `A` is `m×k`, `B` is `k×n`, `C` is `m×n`.
    pub m: usize,
    pub n: usize,
    pub k: usize,
    /// Row index of the output tile: `0 <= tile_row < ceil(m/TS)`.
    pub tile_row: usize,
    /// Column index of the output tile: `0 <= tile_col < ceil(n/TS)`.
    pub tile_col: usize,
    pub layer_id: LayerId,
    executions: Arc<AtomicU32>,
}

impl<S: Scalar> Job<S> {
    /// Times this job has been executed. 1 after a correct run.
    pub fn execution_count(&self) -> u32 {
        self.executions.load(Ordering::SeqCst)
    }

    /// Checks the job's fields against its matrices. A malformed job is a
    /// protocol violation; workers treat it as fatal.
    pub fn validate(&self, tile_size: usize) -> Result<()> {
        let (a, b, c) = (self.a.read(), self.b.read(), self.c.read());
        if a.rows() != self.m || a.cols() != self.k {
            return Err(Error::shape(format!(
                "job A is {}x{}, expected {}x{}",
                a.rows(),
                a.cols(),
                self.m,
                self.k
            )));
        }
        if b.rows() != self.k || b.cols() != self.n {
            return Err(Error::shape(format!(
                "job B is {}x{}, expected {}x{}",
                b.rows(),
                b.cols(),
                self.k,
                self.n
            )));
        }
        if c.rows() != self.m || c.cols() != self.n {
            return Err(Error::shape(format!(
                "job C is {}x{}, expected {}x{}",
                c.rows(),
                c.cols(),
                self.m,
                self.n
            )));
        }
        if self.tile_row >= ceil_div(self.m, tile_size)
            || self.tile_col >= ceil_div(self.n, tile_size)
        {
            return Err(Error::shape(format!(
                "job tile ({}, {}) outside {}x{} tile grid",
                self.tile_row,
                self.tile_col,
                ceil_div(self.m, tile_size),
                ceil_div(self.n, tile_size)
            )));
        }
        Ok(())
    }
}

#[inline]
pub fn ceil_div(a: usize, b: usize) -> usize {
    a.div_ceil(b)
}

/// Splits `C = A*B` into one job per output tile.
///
/// Returns exactly `ceil(m/TS) * ceil(n/TS)` jobs, row-major over
/// `(tile_row, tile_col)`. Dimensions are taken from the matrices.
pub fn generate_jobs<S: Scalar>(
    a: &SharedMatrix<S>,
    b: &SharedMatrix<S>,
    c: &SharedMatrix<S>,
    layer_id: LayerId,
    tiling: TilingParams,
) -> Result<Vec<Job<S>>> {
    let (m, k, n) = {
        let (ag, bg, cg) = (a.read(), b.read(), c.read());
        if ag.cols() != bg.rows() {
            return Err(Error::shape(format!(
                "job generation: A is {}x{} but B is {}x{}",
                ag.rows(),
                ag.cols(),
                bg.rows(),
                bg.cols()
            )));
        }
        if cg.rows() != ag.rows() || cg.cols() != bg.cols() {
            return Err(Error::shape(format!(
                "job generation: C is {}x{}, expected {}x{}",
                cg.rows(),
                cg.cols(),
                ag.rows(),
                bg.cols()
            )));
        }
        (ag.rows(), ag.cols(), bg.cols())
    };
    if m < 1 || n < 1 || k < 1 {
        return Err(Error::shape(format!(
            "job generation requires positive dimensions, got m={m} n={n} k={k}"
        )));
    }
    let ts = tiling.tile_size;
    let mut jobs = Vec::with_capacity(ceil_div(m, ts) * ceil_div(n, ts));
    for tile_row in 0..ceil_div(m, ts) {
        for tile_col in 0..ceil_div(n, ts) {
            jobs.push(Job {
                a: a.clone(),
                b: b.clone(),
                c: c.clone(),
                m,
                n,
                k,
                tile_row,
                tile_col,
                layer_id,
                executions: Arc::new(AtomicU32::new(0)),
            });
        }
    }
    Ok(jobs)
}

/// Copies the `TS×TS` block starting at `(row0, col0)` into a fresh buffer.
/// Positions outside the matrix borders are set to zero.
pub fn fetch_tile<S: Scalar>(mat: &Matrix<S>, row0: usize, col0: usize, ts: usize) -> Vec<S> {
    let mut tile = vec![S::zero(); ts * ts];
    fetch_tile_into(mat, row0, col0, ts, &mut tile);
    tile
}

fn fetch_tile_into<S: Scalar>(mat: &Matrix<S>, row0: usize, col0: usize, ts: usize, tile: &mut [S]) {
    debug_assert!(
        row0.is_multiple_of(ts) && col0.is_multiple_of(ts),
        "tile origin must be TS-aligned"
    );
    debug_assert_eq!(tile.len(), ts * ts);
    let valid_rows = mat.rows().saturating_sub(row0).min(ts);
    let valid_cols = mat.cols().saturating_sub(col0).min(ts);
    for r in 0..ts {
        let dst = &mut tile[r * ts..(r + 1) * ts];
        if r < valid_rows {
            let src = &mat.row(row0 + r)[col0..col0 + valid_cols];
            dst[..valid_cols].copy_from_slice(src);
            dst[valid_cols..].fill(S::zero());
        } else {
            dst.fill(S::zero());
        }
    }
}

/// Writes a `TS×TS` tile back starting at `(row0, col0)`. Writes that fall
/// outside the matrix borders are silently dropped.
pub fn store_tile<S: Scalar>(tile: &[S], mat: &mut Matrix<S>, row0: usize, col0: usize, ts: usize) {
    debug_assert!(
        row0.is_multiple_of(ts) && col0.is_multiple_of(ts),
        "tile origin must be TS-aligned"
    );
    debug_assert_eq!(tile.len(), ts * ts);
    let valid_rows = mat.rows().saturating_sub(row0).min(ts);
    let valid_cols = mat.cols().saturating_sub(col0).min(ts);
    for r in 0..valid_rows {
        for c in 0..valid_cols {
            mat.set(row0 + r, col0 + c, tile[r * ts + c]);
        }
    }
}

/// Computes one output tile: `C(t1,t2) = sum over t3 of A(t1,t3)*B(t3,t2)`.
///
/// The local accumulator starts at zero, the reduction runs over ascending
/// `t3` with the fixed i/j/k loop nest, input tiles are fetched with zero
/// fill and the result is stored with border clipping. The fixed order makes
/// repeated runs bitwise identical no matter which engine executes the job.
pub fn execute_job<S: Scalar>(job: &Job<S>, tiling: TilingParams) {
    let prev = job.executions.fetch_add(1, Ordering::SeqCst);
    debug_assert_eq!(prev, 0, "job executed more than once");

    let ts = tiling.tile_size;
    let row0 = job.tile_row * ts;
    let col0 = job.tile_col * ts;
    let mut acc = vec![S::zero(); ts * ts];
    let mut a_tile = vec![S::zero(); ts * ts];
    let mut b_tile = vec![S::zero(); ts * ts];
    {
        let a = job.a.read();
        let b = job.b.read();
        for t3 in 0..ceil_div(job.k, ts) {
            fetch_tile_into(&a, row0, t3 * ts, ts, &mut a_tile);
            fetch_tile_into(&b, t3 * ts, col0, ts, &mut b_tile);
            for i in 0..ts {
                let acc_row = &mut acc[i * ts..(i + 1) * ts];
                let a_row = &a_tile[i * ts..(i + 1) * ts];
                for j in 0..ts {
                    let mut sum = acc_row[j];
                    for l in 0..ts {
                        sum += a_row[l] * b_tile[l * ts + j];
                    }
                    acc_row[j] = sum;
                }
            }
        }
    }
    let mut c = job.c.write();
    store_tile(&acc, &mut c, row0, col0, ts);
}

/// Runs every job on the current thread. Convenience for tests and the
/// host-only execution path.
pub fn execute_all<S: Scalar>(jobs: &[Job<S>], tiling: TilingParams) {
    for job in jobs {
        execute_job(job, tiling);
    }
}

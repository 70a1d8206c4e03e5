//! Gaussian RBF kernel, kernel-row caching and the exact k-NN index.

use std::collections::HashMap;
use std::sync::Arc;

use ndarray::{Array2, ArrayView1};
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Largest `n` for which [`KernelMode::auto`] stores the full matrix.
pub const FULL_MATRIX_MAX_N: usize = 8000;

/// Default memory budget for row caching, in bytes.
pub const DEFAULT_CACHE_BYTES: usize = 512 << 20;

#[inline]
pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[inline]
pub(crate) fn rbf(a: &[f64], b: &[f64], gamma: f64) -> f64 {
    (-(gamma * gamma) * squared_distance(a, b)).exp()
}

/// `exp(-gamma^2 * ||x - x2||^2)`.
pub fn gauss_kernel(x: ArrayView1<'_, f64>, x2: ArrayView1<'_, f64>, gamma: f64) -> Result<f64> {
    if x.len() != x2.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            found: x2.len(),
        });
    }
    crate::error::positive("gamma", gamma)?;
    let d2: f64 = x.iter().zip(x2.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((-(gamma * gamma) * d2).exp())
}

/// Storage strategy for kernel rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelMode {
    /// Precompute and keep all `n` rows.
    FullMatrix,
    /// Compute rows on demand, keeping at most `budget` of them.
    RowLru { budget: usize },
}

impl KernelMode {
    /// Full matrix up to [`FULL_MATRIX_MAX_N`] points, row cache otherwise.
    pub fn auto(n: usize) -> Self {
        if n <= FULL_MATRIX_MAX_N {
            KernelMode::FullMatrix
        } else {
            KernelMode::RowLru {
                budget: (DEFAULT_CACHE_BYTES / (8 * n.max(1))).max(2),
            }
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CacheStats {
    pub hits: u64,
    pub misses: u64,
}

#[derive(Debug)]
enum Storage {
    Full(Vec<Arc<[f64]>>),
    Lru {
        budget: usize,
        clock: u64,
        rows: HashMap<usize, (Arc<[f64]>, u64)>,
    },
}

/// Serves rows of the Gram matrix `K_ij = k(x_i, x_j)` of one point set.
#[derive(Debug)]
pub struct KernelCache<'a> {
    points: &'a Array2<f64>,
    gamma: f64,
    storage: Storage,
    stats: CacheStats,
}

impl<'a> KernelCache<'a> {
    /// `points` must be in standard (row-major) layout.
    pub fn new(points: &'a Array2<f64>, gamma: f64, mode: KernelMode) -> Result<Self> {
        crate::error::positive("gamma", gamma)?;
        assert!(points.is_standard_layout(), "kernel points must be row-major");
        let n = points.nrows();
        let storage = match mode {
            KernelMode::FullMatrix => Storage::Full((0..n).into_par_iter().map(|i| compute_row(points, gamma, i)).collect()),
            KernelMode::RowLru { budget } => Storage::Lru {
                budget: budget.max(1),
                clock: 0,
                rows: HashMap::new(),
            },
        };
        Ok(KernelCache {
            points,
            gamma,
            storage,
            stats: CacheStats::default(),
        })
    }

    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn points(&self) -> &'a Array2<f64> {
        self.points
    }

    pub fn stats(&self) -> CacheStats {
        self.stats
    }

    pub fn mode(&self) -> KernelMode {
        match &self.storage {
            Storage::Full(_) => KernelMode::FullMatrix,
            Storage::Lru { budget, .. } => KernelMode::RowLru { budget: *budget },
        }
    }

    /// Row `i` of the Gram matrix.
    pub fn row(&mut self, i: usize) -> Result<Arc<[f64]>> {
        let n = self.len();
        if i >= n {
            return Err(Error::IndexOutOfRange { index: i, len: n });
        }
        match &mut self.storage {
            Storage::Full(rows) => {
                self.stats.hits += 1;
                Ok(Arc::clone(&rows[i]))
            }
            Storage::Lru { budget, clock, rows } => {
                *clock += 1;
                if let Some((row, stamp)) = rows.get_mut(&i) {
                    *stamp = *clock;
                    self.stats.hits += 1;
                    return Ok(Arc::clone(row));
                }
                self.stats.misses += 1;
                if rows.len() >= *budget {
                    // eviction scans the cache; a miss costs O(n d) anyway
                    let victim = rows
                        .iter()
                        .min_by_key(|(_, (_, stamp))| *stamp)
                        .map(|(&k, _)| k)
                        .expect("budget >= 1 implies a cached row");
                    rows.remove(&victim);
                }
                let row = compute_row(self.points, self.gamma, i);
                rows.insert(i, (Arc::clone(&row), *clock));
                Ok(row)
            }
        }
    }

    /// Single entry `K_ij`, bitwise equal to the corresponding row entry.
    pub fn entry(&self, i: usize, j: usize) -> Result<f64> {
        let n = self.len();
        for index in [i, j] {
            if index >= n {
                return Err(Error::IndexOutOfRange { index, len: n });
            }
        }
        Ok(match &self.storage {
            Storage::Full(rows) => rows[i][j],
            Storage::Lru { .. } => self.compute_entry(i, j),
        })
    }

    #[inline]
    fn compute_entry(&self, i: usize, j: usize) -> f64 {
        let a = self.points.row(i);
        let b = self.points.row(j);
        rbf(a.as_slice().expect("row-major"), b.as_slice().expect("row-major"), self.gamma)
    }
}

fn compute_row(points: &Array2<f64>, gamma: f64, i: usize) -> Arc<[f64]> {
    let xi = points.row(i);
    let xi = xi.as_slice().expect("row-major");
    points
        .rows()
        .into_iter()
        .map(|xj| rbf(xi, xj.as_slice().expect("row-major"), gamma))
        .collect()
}

/// Exact Euclidean nearest-neighbor lists, self excluded.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KnnIndex {
    neighbors: Vec<Vec<usize>>,
    k: usize,
}

impl KnnIndex {
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.neighbors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }
}

/// Builds the `k` nearest neighbors of every point by a full distance scan.
///
/// Lists are sorted by ascending distance; ties go to the lower index.
pub fn build_knn(points: &Array2<f64>, k: usize) -> Result<KnnIndex> {
    if k == 0 {
        return Err(Error::InvalidParameter {
            name: "knn",
            value: 0.0,
            reason: "need at least one neighbor",
        });
    }
    let points = points.as_standard_layout();
    let n = points.nrows();
    let take = k.min(n.saturating_sub(1));
    let neighbors = (0..n)
        .into_par_iter()
        .map(|i| {
            let xi = points.row(i);
            let xi = xi.as_slice().expect("row-major");
            let mut cand: Vec<(f64, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| {
                    let xj = points.row(j);
                    (squared_distance(xi, xj.as_slice().expect("row-major")), j)
                })
                .collect();
            let by_distance = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
            if take > 0 && take < cand.len() {
                cand.select_nth_unstable_by(take - 1, by_distance);
                cand.truncate(take);
            }
            cand.sort_unstable_by(by_distance);
            cand.into_iter().map(|(_, j)| j).collect()
        })
        .collect();
    Ok(KnnIndex { neighbors, k })
}

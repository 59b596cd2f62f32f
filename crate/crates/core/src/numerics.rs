//! Dense matrices, sparse mixing application, norms, and keyed random
//! streams.
//!
//! Reductions here run in a fixed (ascending-index) order so that two code
//! paths computing the same quantity agree bit-for-bit. Nothing in this
//! module is allowed to depend on thread count or iteration scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::topology::MixingMatrix;

/// Row-major dense matrix of f64. Small and boring on purpose: the state
/// matrices in this crate are n x p with n, p in the hundreds, and we care
/// more about a pinned summation order than about BLAS throughput.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Build from a closure over (row, col).
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = DenseMatrix::zeros(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                m.data[r * cols + c] = f(r, c);
            }
        }
        m
    }

    /// Build from row slices; every row must have the same length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, |r| r.len());
        for (i, r) in rows.iter().enumerate() {
            if r.len() != ncols {
                return Err(Error::DimMismatch {
                    op: "from_rows",
                    detail: format!("row 0 has {} entries, row {} has {}", ncols, i, r.len()),
                });
            }
        }
        let mut data = Vec::with_capacity(nrows * ncols);
        for r in rows {
            data.extend_from_slice(r);
        }
        Ok(DenseMatrix {
            rows: nrows,
            cols: ncols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn fill_row(&mut self, r: usize, src: &[f64]) {
        assert_eq!(src.len(), self.cols, "row length mismatch");
        self.row_mut(r).copy_from_slice(src);
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// out = self * other, accumulating over the inner index in ascending
    /// order for every output entry.
    pub fn matmul(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols != other.rows {
            return Err(Error::DimMismatch {
                op: "matmul",
                detail: format!(
                    "{}x{} * {}x{}",
                    self.rows, self.cols, other.rows, other.cols
                ),
            });
        }
        let mut out = DenseMatrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                let orow = &other.data[k * other.cols..(k + 1) * other.cols];
                let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (o, b) in out_row.iter_mut().zip(orow) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn transpose(&self) -> DenseMatrix {
        DenseMatrix::from_fn(self.cols, self.rows, |r, c| self.get(c, r))
    }

    pub fn sub(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::DimMismatch {
                op: "sub",
                detail: format!(
                    "{}x{} - {}x{}",
                    self.rows, self.cols, other.rows, other.cols
                ),
            });
        }
        let mut out = self.clone();
        for (o, b) in out.data.iter_mut().zip(&other.data) {
            *o -= *b;
        }
        Ok(out)
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Index of the first row containing a non-finite entry, if any.
    pub fn first_non_finite_row(&self) -> Option<usize> {
        (0..self.rows).find(|&r| self.row(r).iter().any(|v| !v.is_finite()))
    }
}

/// Sum of squared entries.
pub fn frobenius_norm_sq(m: &DenseMatrix) -> f64 {
    m.data.iter().map(|v| v * v).sum()
}

/// Squared Euclidean norm of a vector.
pub fn norm_sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Sum over all rows of the squared distance to row 0. Equals the squared
/// Frobenius norm of the consensus projection of `x` (see the topology
/// module); kept here so the simulator can report consensus error without
/// materializing the projected matrix.
pub fn deviation_from_row_zero_sq(x: &DenseMatrix) -> f64 {
    let anchor = x.row(0).to_vec();
    let mut total = 0.0;
    for r in 0..x.rows() {
        for (v, a) in x.row(r).iter().zip(&anchor) {
            let d = v - a;
            total += d * d;
        }
    }
    total
}

/// Apply a 0/1 mixing matrix on the left: out = m * x. Row i of the output
/// is the sum of the source rows listed for row i, added in ascending
/// source order. This is the one place where mixing touches state, and the
/// message engine reproduces exactly this order.
pub fn sparse_apply(m: &MixingMatrix, x: &DenseMatrix) -> Result<DenseMatrix> {
    if m.dim() != x.rows() {
        return Err(Error::DimMismatch {
            op: "sparse_apply",
            detail: format!("matrix is {0}x{0}, state has {1} rows", m.dim(), x.rows()),
        });
    }
    let mut out = DenseMatrix::zeros(x.rows(), x.cols());
    for i in 0..m.dim() {
        for &src in m.row_sources(i) {
            let src_row = x.row(src);
            let dst = out.row_mut(i);
            for (d, s) in dst.iter_mut().zip(src_row) {
                *d += *s;
            }
        }
    }
    Ok(out)
}

/// Named stream purposes; part of the reproducibility contract. Two draws
/// collide only if seed, agent, purpose, and iteration all match.
pub mod purpose {
    /// Shared ground-truth model of a synthetic data set.
    pub const GROUND_MODEL: u64 = 1;
    /// Per-agent shift applied to the ground model.
    pub const AGENT_SHIFT: u64 = 2;
    /// Feature matrix of one agent.
    pub const FEATURES: u64 = 3;
    /// Label coin flips of one agent.
    pub const LABELS: u64 = 4;
    /// Diagonal curvature of one agent's quadratic.
    pub const QUAD_CURVATURE: u64 = 5;
    /// Linear target term of one agent's quadratic.
    pub const QUAD_TARGET: u64 = 6;
    /// Stochastic gradient draws during a run.
    pub const ORACLE: u64 = 7;
    /// Restart vectors inside the spectral-norm power iteration.
    pub const SPECTRAL_RESTART: u64 = 8;
}

/// Deterministic random stream keyed by (root seed, agent, purpose,
/// iteration). Every random draw in the crate names its key explicitly, so
/// the values an agent sees do not depend on scheduling, engine choice, or
/// how many other agents exist.
#[derive(Debug, Clone)]
pub struct RngStream {
    rng: ChaCha12Rng,
}

impl RngStream {
    pub fn new(root_seed: u64, agent: u64, purpose: u64, iteration: u64) -> Self {
        let mut seed = [0u8; 32];
        seed[0..8].copy_from_slice(&root_seed.to_le_bytes());
        seed[8..16].copy_from_slice(&agent.to_le_bytes());
        seed[16..24].copy_from_slice(&purpose.to_le_bytes());
        seed[24..32].copy_from_slice(&iteration.to_le_bytes());
        RngStream {
            rng: ChaCha12Rng::from_seed(seed),
        }
    }

    /// Vector of independent N(mean, stddev^2) draws. stddev = 0 yields the
    /// constant mean vector without consuming entropy differently per call
    /// site.
    pub fn gaussian_vector(&mut self, dim: usize, mean: f64, stddev: f64) -> Vec<f64> {
        assert!(stddev >= 0.0, "negative standard deviation");
        if stddev == 0.0 {
            return vec![mean; dim];
        }
        let normal = Normal::new(mean, stddev).expect("validated parameters");
        (0..dim).map(|_| normal.sample(&mut self.rng)).collect()
    }

    /// Uniform draw in [0, 1).
    pub fn uniform01(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// Uniform index in 0..bound.
    pub fn index(&mut self, bound: usize) -> usize {
        assert!(bound > 0, "empty index range");
        self.rng.random_range(0..bound)
    }
}

const POWER_ITER_CAP: usize = 200_000;
/// Consecutive sub-tolerance updates required before the estimate counts as
/// settled; guards against transient plateaus of the power iteration.
const SETTLE_STREAK: usize = 50;

/// Largest singular value of a square matrix via power iteration on the
/// Gram product. Deterministic: starts from the all-ones vector, then takes
/// the max with one deterministically re-seeded restart so a start vector
/// orthogonal to the top singular direction cannot go unnoticed.
pub fn spectral_norm(m: &DenseMatrix, tol: f64) -> Result<f64> {
    if m.rows() != m.cols() {
        return Err(Error::DimMismatch {
            op: "spectral_norm",
            detail: format!("{}x{} is not square", m.rows(), m.cols()),
        });
    }
    assert!(tol > 0.0 && tol.is_finite(), "tolerance must be positive");
    let n = m.rows();
    if n == 0 {
        return Ok(0.0);
    }

    let first = power_pass(m, vec![1.0; n], tol)?;
    // Restart vector keyed by the matrix dimension; any fixed full-support
    // random direction works, it just must not be chosen by the caller.
    let mut stream = RngStream::new(n as u64, 0, purpose::SPECTRAL_RESTART, 1);
    let restart = stream.gaussian_vector(n, 0.0, 1.0);
    let second = power_pass(m, restart, tol)?;
    Ok(first.max(second))
}

fn power_pass(m: &DenseMatrix, start: Vec<f64>, tol: f64) -> Result<f64> {
    let n = m.rows();
    let mut v = start;
    let nv = norm_sq(&v).sqrt();
    if nv == 0.0 {
        return Ok(0.0);
    }
    for x in v.iter_mut() {
        *x /= nv;
    }

    let mut sigma = 0.0f64;
    let mut streak = 0;
    for _ in 0..POWER_ITER_CAP {
        // w = M v; with unit v, |w| estimates the singular value along v.
        let w = apply_dense(m, &v);
        let sigma_new = norm_sq(&w).sqrt();
        if sigma_new == 0.0 {
            // v is in the null space; the iteration cannot recover from an
            // exact zero, and for the 0/1 matrices used here this means the
            // ones vector genuinely maps to zero.
            return Ok(0.0);
        }
        // z = M^T w drives v toward the top right-singular direction.
        let z = apply_dense_transposed(m, &w);
        let nz = norm_sq(&z).sqrt();
        if nz == 0.0 {
            return Ok(sigma_new);
        }
        v = z;
        for x in v.iter_mut() {
            *x /= nz;
        }

        if (sigma_new - sigma).abs() <= tol * sigma_new.max(f64::MIN_POSITIVE) {
            streak += 1;
            if streak >= SETTLE_STREAK {
                return Ok(sigma_new);
            }
        } else {
            streak = 0;
        }
        sigma = sigma_new;
    }
    let _ = n;
    Err(Error::NoConvergence {
        iters: POWER_ITER_CAP,
        estimate: sigma,
    })
}

fn apply_dense(m: &DenseMatrix, v: &[f64]) -> Vec<f64> {
    (0..m.rows()).map(|r| dot(m.row(r), v)).collect()
}

fn apply_dense_transposed(m: &DenseMatrix, v: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; m.cols()];
    for r in 0..m.rows() {
        let vr = v[r];
        if vr == 0.0 {
            continue;
        }
        for (o, a) in out.iter_mut().zip(m.row(r)) {
            *o += vr * a;
        }
    }
    out
}

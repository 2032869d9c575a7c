//! Dense vector/matrix primitives for primal-dual iterations.
//!
//! Everything is plain `f64` storage at desk scale; no sparsity, no BLAS.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Iteration cap for the operator-norm power iteration.
const POWER_ITER_CAP: usize = 500;
/// Relative tolerance on the singular value estimate.
const POWER_ITER_TOL: f64 = 1e-10;

/// A primal-dual pair u = (x, y).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrimalDualPoint {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl PrimalDualPoint {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("primal-dual point"));
        }
        Ok(Self { x, y })
    }

    pub fn zeros(n: usize, m: usize) -> Self {
        Self {
            x: vec![0.0; n],
            y: vec![0.0; m],
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.x.len(), self.y.len())
    }

    fn check_dims(&self, other: &Self, context: &'static str) -> Result<()> {
        if self.x.len() != other.x.len() {
            return Err(Error::DimensionMismatch {
                context,
                expected: self.x.len(),
                got: other.x.len(),
            });
        }
        if self.y.len() != other.y.len() {
            return Err(Error::DimensionMismatch {
                context,
                expected: self.y.len(),
                got: other.y.len(),
            });
        }
        Ok(())
    }

    /// Stacked inner product <u.x, v.x> + <u.y, v.y>.
    pub fn dot(&self, other: &Self) -> Result<f64> {
        self.check_dims(other, "dot")?;
        Ok(dot(&self.x, &other.x) + dot(&self.y, &other.y))
    }

    pub fn norm(&self) -> f64 {
        (dot(&self.x, &self.x) + dot(&self.y, &self.y)).sqrt()
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_dims(other, "sub")?;
        Ok(Self {
            x: self.x.iter().zip(&other.x).map(|(a, b)| a - b).collect(),
            y: self.y.iter().zip(&other.y).map(|(a, b)| a - b).collect(),
        })
    }

    /// self + s * other, componentwise.
    pub fn add_scaled(&self, s: f64, other: &Self) -> Result<Self> {
        self.check_dims(other, "add_scaled")?;
        Ok(Self {
            x: self
                .x
                .iter()
                .zip(&other.x)
                .map(|(a, b)| a + s * b)
                .collect(),
            y: self
                .y
                .iter()
                .zip(&other.y)
                .map(|(a, b)| a + s * b)
                .collect(),
        })
    }

    pub fn dist(&self, other: &Self) -> Result<f64> {
        Ok(self.sub(other)?.norm())
    }

    pub fn is_finite(&self) -> bool {
        self.x.iter().chain(self.y.iter()).all(|v| v.is_finite())
    }

    /// Concatenated (x, y) vector over the stacked (n+m)-dimensional space.
    pub fn stacked(&self) -> Vec<f64> {
        let mut v = self.x.clone();
        v.extend_from_slice(&self.y);
        v
    }

    pub fn from_stacked(n: usize, m: usize, v: &[f64]) -> Result<Self> {
        if v.len() != n + m {
            return Err(Error::DimensionMismatch {
                context: "from_stacked",
                expected: n + m,
                got: v.len(),
            });
        }
        Ok(Self {
            x: v[..n].to_vec(),
            y: v[n..].to_vec(),
        })
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Dense real matrix in row-major order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearMap {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl LinearMap {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        let mut data = Vec::with_capacity(r * c);
        for row in &rows {
            if row.len() != c {
                return Err(Error::DimensionMismatch {
                    context: "from_rows",
                    expected: c,
                    got: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("matrix entries"));
        }
        Ok(Self {
            rows: r,
            cols: c,
            data,
        })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&v| v == 0.0)
    }

    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.cols {
            return Err(Error::DimensionMismatch {
                context: "apply",
                expected: self.cols,
                got: v.len(),
            });
        }
        Ok((0..self.rows)
            .map(|i| dot(&self.data[i * self.cols..(i + 1) * self.cols], v))
            .collect())
    }

    pub fn apply_transpose(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.rows {
            return Err(Error::DimensionMismatch {
                context: "apply_transpose",
                expected: self.rows,
                got: v.len(),
            });
        }
        let mut out = vec![0.0; self.cols];
        for (row, vi) in self.data.chunks_exact(self.cols).zip(v) {
            for (o, a) in out.iter_mut().zip(row) {
                *o += a * vi;
            }
        }
        Ok(out)
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        t
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::DimensionMismatch {
                context: "matrix add",
                expected: self.rows * self.cols,
                got: other.rows * other.cols,
            });
        }
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a + b)
                .collect(),
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.scale(-1.0))
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch {
                context: "matmul",
                expected: self.cols,
                got: other.rows,
            });
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out.data[i * other.cols + j] += a * other.data[k * other.cols + j];
                }
            }
        }
        Ok(out)
    }

    /// Quadratic form v^T A v (valid for square A).
    pub fn quadratic_form(&self, v: &[f64]) -> f64 {
        self.apply(v).map_or(f64::NAN, |av| dot(v, &av))
    }

    /// Largest singular value via power iteration on A^T A.
    ///
    /// Deterministic all-ones start, 500 iteration cap, relative tolerance
    /// 1e-10 so repeated runs produce identical constants.
    pub fn operator_norm(&self) -> Result<f64> {
        if self.rows == 0 || self.cols == 0 || self.is_zero() {
            return Ok(0.0);
        }
        let n = self.cols;
        let mut v = vec![1.0 / (n as f64).sqrt(); n];
        let mut sigma = f64::NAN;
        for _ in 0..POWER_ITER_CAP {
            let w = self.apply(&v)?;
            let z = self.apply_transpose(&w)?;
            let rayleigh = dot(&v, &z);
            if rayleigh <= 0.0 {
                // start vector fell in the kernel; the map is zero on it
                return Ok(0.0);
            }
            let next = rayleigh.sqrt();
            if sigma.is_finite() && (next - sigma).abs() <= POWER_ITER_TOL * next.max(1e-300) {
                return Ok(next);
            }
            sigma = next;
            let zn = norm(&z);
            for (vi, zi) in v.iter_mut().zip(&z) {
                *vi = zi / zn;
            }
        }
        Err(Error::PowerIterationDiverged(POWER_ITER_CAP))
    }
}

/// Diagonal map with strictly positive entries.
///
/// Self-adjoint and invertible by construction; doubles as the anchoring
/// operator of generalized resolvents and as a preconditioner block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagonalMap {
    d: Vec<f64>,
}

impl DiagonalMap {
    pub fn from_diagonal(d: Vec<f64>) -> Result<Self> {
        for &v in &d {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::NonPositiveDiagonal(v));
            }
        }
        Ok(Self { d })
    }

    /// nu * I on `dim` coordinates.
    pub fn scaled_identity(dim: usize, nu: f64) -> Result<Self> {
        Self::from_diagonal(vec![nu; dim])
    }

    pub fn dim(&self) -> usize {
        self.d.len()
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.d
    }

    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.d.len() {
            return Err(Error::DimensionMismatch {
                context: "diagonal apply",
                expected: self.d.len(),
                got: v.len(),
            });
        }
        Ok(self.d.iter().zip(v).map(|(d, x)| d * x).collect())
    }

    pub fn apply_inverse(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.d.len() {
            return Err(Error::DimensionMismatch {
                context: "diagonal apply_inverse",
                expected: self.d.len(),
                got: v.len(),
            });
        }
        Ok(self.d.iter().zip(v).map(|(d, x)| x / d).collect())
    }

    /// Strong monotonicity constant (smallest diagonal entry).
    pub fn min_entry(&self) -> f64 {
        self.d.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Lipschitz constant (largest diagonal entry).
    pub fn max_entry(&self) -> f64 {
        self.d.iter().cloned().fold(0.0, f64::max)
    }

    pub fn to_matrix(&self) -> LinearMap {
        let n = self.d.len();
        let mut m = LinearMap::zeros(n, n);
        for i in 0..n {
            m.set(i, i, self.d[i]);
        }
        m
    }
}

//! Dense linear algebra and verification helpers shared by the estimator.
//!
//! Every matrix inverted by this crate is symmetric positive semi-definite up
//! to rounding, so the pseudoinverse is computed from a symmetric
//! eigendecomposition with a relative spectral cutoff.

use faer::{Mat, MatRef, Side};

use crate::error::{Error, Result};

/// Relative cutoff below which eigenvalues are treated as zero.
pub const PINV_RCOND: f64 = 1e-10;

/// Absolute per-entry tolerance for symmetry checks on caller-supplied matrices.
pub const SYMMETRY_TOL: f64 = 1e-10;

/// A square symmetric real matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(Mat<f64>);

impl SymMatrix {
    /// Wraps `m`, rejecting non-square input or entries asymmetric by more
    /// than [`SYMMETRY_TOL`].
    pub fn new(m: Mat<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::NotSymmetric(format!(
                "{}x{} matrix is not square",
                m.nrows(),
                m.ncols()
            )));
        }
        let n = m.nrows();
        for j in 0..n {
            for i in (j + 1)..n {
                let d = (m[(i, j)] - m[(j, i)]).abs();
                if !(d <= SYMMETRY_TOL) {
                    return Err(Error::NotSymmetric(format!(
                        "entries ({i},{j}) and ({j},{i}) differ by {d:e}"
                    )));
                }
            }
        }
        Ok(SymMatrix(m))
    }

    /// Averages `m` with its transpose. Used for products that are symmetric
    /// in exact arithmetic but not after rounding.
    pub fn symmetrized(m: Mat<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::NotSymmetric(format!(
                "{}x{} matrix is not square",
                m.nrows(),
                m.ncols()
            )));
        }
        let n = m.nrows();
        let mut out = m;
        for j in 0..n {
            for i in (j + 1)..n {
                let avg = 0.5 * (out[(i, j)] + out[(j, i)]);
                out[(i, j)] = avg;
                out[(j, i)] = avg;
            }
        }
        Ok(SymMatrix(out))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::NotSymmetric("rows do not form a square matrix".into()));
        }
        Self::new(Mat::from_fn(n, n, |i, j| rows[i][j]))
    }

    pub fn identity(n: usize) -> Self {
        SymMatrix(Mat::identity(n, n))
    }

    pub fn zeros(n: usize) -> Self {
        SymMatrix(Mat::zeros(n, n))
    }

    pub fn diagonal(d: &[f64]) -> Self {
        let n = d.len();
        SymMatrix(Mat::from_fn(n, n, |i, j| if i == j { d[i] } else { 0.0 }))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_mat(&self) -> &Mat<f64> {
        &self.0
    }

    pub fn as_ref(&self) -> MatRef<'_, f64> {
        self.0.as_ref()
    }

    pub fn into_inner(self) -> Mat<f64> {
        self.0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        mat_to_rows(self.0.as_ref())
    }

    /// `self · v`.
    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        mat_vec(self.0.as_ref(), v)
    }

    /// `vᵀ · self · v`.
    pub fn quad_form(&self, v: &[f64]) -> f64 {
        dot(v, &self.mul_vec(v))
    }

    /// Symmetric eigendecomposition, eigenvalues ascending.
    pub fn eigen(&self) -> Result<SymEigen> {
        let evd = self
            .0
            .self_adjoint_eigen(Side::Lower)
            .map_err(|_| Error::EigenFailure)?;
        let s = evd.S().column_vector();
        let values = (0..self.dim()).map(|i| s[i]).collect();
        Ok(SymEigen {
            values,
            vectors: evd.U().to_owned(),
        })
    }
}

/// Eigenpairs of a symmetric matrix: `A = V diag(values) Vᵀ`.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: Vec<f64>,
    pub vectors: Mat<f64>,
}

impl SymEigen {
    pub fn spectral_radius(&self) -> f64 {
        self.values.iter().fold(0.0f64, |acc, v| acc.max(v.abs()))
    }

    /// Eigenvalues kept by the pseudoinverse, inverted; truncated ones are zero.
    pub fn inverted_spectrum(&self) -> Vec<f64> {
        let cutoff = PINV_RCOND * self.spectral_radius();
        self.values
            .iter()
            .map(|&v| if v.abs() > cutoff { 1.0 / v } else { 0.0 })
            .collect()
    }

    /// Applies the Moore–Penrose pseudoinverse to `b` without forming it.
    pub fn pinv_apply(&self, b: &[f64]) -> Vec<f64> {
        let inv = self.inverted_spectrum();
        let v = self.vectors.as_ref();
        let n = v.nrows();
        let mut coeffs = vec![0.0; n];
        for (k, c) in coeffs.iter_mut().enumerate() {
            if inv[k] != 0.0 {
                let mut acc = 0.0;
                for i in 0..n {
                    acc += v[(i, k)] * b[i];
                }
                *c = acc * inv[k];
            }
        }
        let mut out = vec![0.0; n];
        for (k, &c) in coeffs.iter().enumerate() {
            if c != 0.0 {
                for (i, o) in out.iter_mut().enumerate() {
                    *o += v[(i, k)] * c;
                }
            }
        }
        out
    }

    pub fn pinv_matrix(&self) -> Result<SymMatrix> {
        let inv = self.inverted_spectrum();
        let v = self.vectors.as_ref();
        let scaled = Mat::from_fn(v.nrows(), v.ncols(), |i, k| v[(i, k)] * inv[k]);
        SymMatrix::symmetrized(&scaled * v.transpose())
    }
}

/// Moore–Penrose pseudoinverse via symmetric eigendecomposition, truncating
/// eigenvalues below `PINV_RCOND` times the spectral radius.
pub fn pseudo_inverse(m: &SymMatrix) -> Result<SymMatrix> {
    if m.dim() == 0 {
        return Ok(SymMatrix::zeros(0));
    }
    m.eigen()?.pinv_matrix()
}

/// Central-difference gradient of `f` at `x` with step `h`.
pub fn finite_difference_gradient<F>(f: F, x: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> f64,
{
    let mut probe = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        probe[i] = x[i] + h;
        let fp = f(&probe);
        probe[i] = x[i] - h;
        let fm = f(&probe);
        probe[i] = x[i];
        if !fp.is_finite() || !fm.is_finite() {
            return Err(Error::NonFiniteEvaluation(i));
        }
        grad.push((fp - fm) / (2.0 * h));
    }
    Ok(grad)
}

/// Percentile with linear interpolation between order statistics
/// (`p = 0` is the minimum, `p = 100` the maximum).
pub fn percentile(values: &[f64], p: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptySample);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = (p.clamp(0.0, 100.0) / 100.0) * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    Ok(sorted[lo] + frac * (sorted[hi] - sorted[lo]))
}

pub fn mean(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptySample);
    }
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn mat_vec(m: MatRef<'_, f64>, v: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; m.nrows()];
    for j in 0..m.ncols() {
        let vj = v[j];
        if vj != 0.0 {
            for (i, o) in out.iter_mut().enumerate() {
                *o += m[(i, j)] * vj;
            }
        }
    }
    out
}

pub fn mat_to_rows(m: MatRef<'_, f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

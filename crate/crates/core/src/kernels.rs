//! RBF kernel, Gram matrices, and Riesz vectors of linear queries.

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::SymMatrix;

/// Kernel entries with `rho·‖x − x′‖²` above this are stored as exact zeros.
/// `exp(-184) ≈ 1e-80`; products of three such entries stay in the normal
/// floating-point range, which keeps dense products off the subnormal path.
const FLUSH_EXPONENT: f64 = 184.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    /// Inverse squared length-scale.
    pub rho: f64,
}

impl Default for KernelConfig {
    fn default() -> Self {
        KernelConfig { rho: 1.0 }
    }
}

impl KernelConfig {
    pub fn new(rho: f64) -> Result<Self> {
        if !(rho > 0.0) || !rho.is_finite() {
            return Err(Error::invalid("rho", format!("must be positive, got {rho}")));
        }
        Ok(KernelConfig { rho })
    }

    #[inline]
    fn entry(&self, sq_dist: f64) -> f64 {
        let a = self.rho * sq_dist;
        if a > FLUSH_EXPONENT {
            0.0
        } else {
            (-a).exp()
        }
    }
}

/// A bounded linear functional on hypotheses, expressed through its action on
/// kernel sections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Query {
    /// `∂f/∂x_index` at `x_star`.
    PartialDerivative { index: usize, x_star: Vec<f64> },
    /// `f(x_star)`.
    PointEvaluation { x_star: Vec<f64> },
    /// Weighted sum of leaf queries.
    LinearCombination { terms: Vec<(f64, Query)> },
}

impl Query {
    pub fn partial_derivative(index: usize, x_star: Vec<f64>) -> Self {
        Query::PartialDerivative { index, x_star }
    }

    pub fn point_evaluation(x_star: Vec<f64>) -> Self {
        Query::PointEvaluation { x_star }
    }

    /// Checks coordinate indices and base-point dimensions against `d_x`, and
    /// that combinations only nest leaf queries.
    pub fn validate(&self, d_x: usize) -> Result<()> {
        match self {
            Query::PartialDerivative { index, x_star } => {
                if x_star.len() != d_x {
                    return Err(Error::DimensionMismatch {
                        expected: d_x,
                        found: x_star.len(),
                    });
                }
                if *index >= d_x {
                    return Err(Error::invalid(
                        "query.index",
                        format!("coordinate {index} outside [0, {d_x})"),
                    ));
                }
                Ok(())
            }
            Query::PointEvaluation { x_star } => {
                if x_star.len() != d_x {
                    return Err(Error::DimensionMismatch {
                        expected: d_x,
                        found: x_star.len(),
                    });
                }
                Ok(())
            }
            Query::LinearCombination { terms } => {
                for (_, q) in terms {
                    if matches!(q, Query::LinearCombination { .. }) {
                        return Err(Error::invalid(
                            "query.terms",
                            "linear combinations may only contain leaf queries",
                        ));
                    }
                    q.validate(d_x)?;
                }
                Ok(())
            }
        }
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn check_dims(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    Ok(())
}

fn common_dim(points: &[Vec<f64>]) -> Result<usize> {
    let d = points.first().ok_or(Error::EmptySample)?.len();
    if let Some(p) = points.iter().find(|p| p.len() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: p.len(),
        });
    }
    Ok(d)
}

/// `exp(-rho · ‖x − x′‖²)`.
pub fn rbf(x: &[f64], x_prime: &[f64], cfg: &KernelConfig) -> Result<f64> {
    check_dims(x, x_prime)?;
    Ok((-cfg.rho * sq_dist(x, x_prime)).exp())
}

/// Cross Gram matrix with entry `(i, j) = k(a_i, b_j)`.
pub fn gram(a: &[Vec<f64>], b: &[Vec<f64>], cfg: &KernelConfig) -> Result<Mat<f64>> {
    let da = common_dim(a)?;
    let db = common_dim(b)?;
    if da != db {
        return Err(Error::DimensionMismatch {
            expected: da,
            found: db,
        });
    }
    Ok(Mat::from_fn(a.len(), b.len(), |i, j| {
        cfg.entry(sq_dist(&a[i], &b[j]))
    }))
}

/// Gram matrix of a single point set; symmetric with unit diagonal.
pub fn gram_sym(a: &[Vec<f64>], cfg: &KernelConfig) -> Result<SymMatrix> {
    common_dim(a)?;
    let n = a.len();
    let mut m = Mat::<f64>::zeros(n, n);
    for j in 0..n {
        m[(j, j)] = 1.0;
        for i in (j + 1)..n {
            let v = cfg.entry(sq_dist(&a[i], &a[j]));
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    SymMatrix::new(m)
}

/// Vector whose `j`-th entry is the query applied to the section `k(x_j, ·)`.
pub fn query_vector(q: &Query, x: &[Vec<f64>], cfg: &KernelConfig) -> Result<Vec<f64>> {
    let d = common_dim(x)?;
    q.validate(d)?;
    Ok(query_vector_unchecked(q, x, cfg))
}

fn query_vector_unchecked(q: &Query, x: &[Vec<f64>], cfg: &KernelConfig) -> Vec<f64> {
    match q {
        Query::PointEvaluation { x_star } => x
            .iter()
            .map(|xj| cfg.entry(sq_dist(xj, x_star)))
            .collect(),
        Query::PartialDerivative { index, x_star } => x
            .iter()
            .map(|xj| {
                let k = cfg.entry(sq_dist(xj, x_star));
                2.0 * cfg.rho * (xj[*index] - x_star[*index]) * k
            })
            .collect(),
        Query::LinearCombination { terms } => {
            let mut out = vec![0.0; x.len()];
            for (w, leaf) in terms {
                let v = query_vector_unchecked(leaf, x, cfg);
                for (o, vi) in out.iter_mut().zip(v) {
                    *o += w * vi;
                }
            }
            out
        }
    }
}

//! Closed-form upper and lower bounds on a linear query of the structural
//! function.
//!
//! Hypotheses are kernel expansions `f_θ = Σ_j θ_j k(x_j, ·)` over the
//! observed treatments. The two extremal hypotheses solve
//!
//! ```text
//! θ = (K_XX K_ZZ K_XX + 4 λ_s K_XX)⁺ (K_XX K_ZZ y ∓ q / λ_c)
//! ```
//!
//! where `q` is the Riesz vector of the query over the anchors. The bound
//! values are `qᵀθ` for each sign, and their difference has the closed form
//! `(2/λ_c) qᵀ M⁺ q`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{gram_sym, query_vector, rbf, KernelConfig, Query};
use crate::numerics::{dot, SymEigen, SymMatrix};

/// Clamp threshold for slightly negative MMR quadratic forms.
const MMR_NEGATIVE_TOL: f64 = 1e-12;

/// Largest sample the numerical oracle accepts.
pub const ORACLE_MAX_N: usize = 200;
const ORACLE_MAX_ITERS: usize = 1_000_000;
const ORACLE_GRAD_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    /// Weight of the moment restriction relative to the query.
    pub lambda_c: f64,
    /// Smoothness weight (`λ_g λ_f / λ_c`).
    pub lambda_s: f64,
    pub kernel: KernelConfig,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            lambda_c: 0.04,
            lambda_s: 0.01,
            kernel: KernelConfig::default(),
        }
    }
}

impl EstimatorConfig {
    pub fn new(lambda_c: f64, lambda_s: f64, rho: f64) -> Result<Self> {
        let cfg = EstimatorConfig {
            lambda_c,
            lambda_s,
            kernel: KernelConfig::new(rho)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_c > 0.0) || !self.lambda_c.is_finite() {
            return Err(Error::invalid(
                "estimator.lambda_c",
                format!("must be positive, got {}", self.lambda_c),
            ));
        }
        if !(self.lambda_s >= 0.0) || !self.lambda_s.is_finite() {
            return Err(Error::invalid(
                "estimator.lambda_s",
                format!("must be nonnegative, got {}", self.lambda_s),
            ));
        }
        KernelConfig::new(self.kernel.rho).map_err(|_| {
            Error::invalid(
                "estimator.rho",
                format!("must be positive, got {}", self.kernel.rho),
            )
        })?;
        Ok(())
    }
}

/// Samples `(z, x, y)` tagged with the round that collected them.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub z: Vec<Vec<f64>>,
    pub x: Vec<Vec<f64>>,
    pub y: Vec<f64>,
    pub round: Vec<usize>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.y.len();
        for (name, len) in [
            ("z", self.z.len()),
            ("x", self.x.len()),
            ("round", self.round.len()),
        ] {
            if len != n {
                return Err(Error::ShapeMismatch(format!(
                    "dataset column {name} has {len} rows, y has {n}"
                )));
            }
        }
        Ok(())
    }

    pub fn push(&mut self, z: Vec<f64>, x: Vec<f64>, y: f64, round: usize) {
        self.z.push(z);
        self.x.push(x);
        self.y.push(y);
        self.round.push(round);
    }

    pub fn extend(&mut self, other: &Dataset) {
        self.z.extend(other.z.iter().cloned());
        self.x.extend(other.x.iter().cloned());
        self.y.extend_from_slice(&other.y);
        self.round.extend_from_slice(&other.round);
    }

    /// Rows at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        Dataset {
            z: indices.iter().map(|&i| self.z[i].clone()).collect(),
            x: indices.iter().map(|&i| self.x[i].clone()).collect(),
            y: indices.iter().map(|&i| self.y[i]).collect(),
            round: indices.iter().map(|&i| self.round[i]).collect(),
        }
    }

    /// Sorted distinct round indices present in the data.
    pub fn rounds(&self) -> Vec<usize> {
        let mut r = self.round.clone();
        r.sort_unstable();
        r.dedup();
        r
    }
}

/// Lower and upper bound on the query together with the extremal hypotheses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsEstimate {
    pub lower: f64,
    pub upper: f64,
    pub gap: f64,
    pub theta_lower: Vec<f64>,
    pub theta_upper: Vec<f64>,
    /// Treatment samples the coefficient vectors expand over.
    pub anchors: Vec<Vec<f64>>,
}

impl BoundsEstimate {
    pub fn contains(&self, value: f64) -> bool {
        self.lower <= value && value <= self.upper
    }

    pub fn is_finite(&self) -> bool {
        self.lower.is_finite() && self.upper.is_finite()
    }
}

/// Sign of the query term in the extremal objective `±qᵀθ + …`.
///
/// Minimizing with `Plus` pushes `qᵀθ` down and yields the lower bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    fn factor(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }
}

/// Kernelized maximum moment restriction: `((1/n²) rᵀ K_ZZ r)^{1/2}`.
pub fn mmr_objective(residuals: &[f64], k_zz: &SymMatrix) -> Result<f64> {
    let n = residuals.len();
    if k_zz.dim() != n {
        return Err(Error::ShapeMismatch(format!(
            "{n} residuals against a {0}x{0} witness gram",
            k_zz.dim()
        )));
    }
    if n == 0 {
        return Err(Error::EmptySample);
    }
    let form = k_zz.quad_form(residuals) / (n * n) as f64;
    if form < -MMR_NEGATIVE_TOL {
        return Err(Error::IndefiniteWitnessGram(form));
    }
    Ok(form.max(0.0).sqrt())
}

fn check_system(k_xx: &SymMatrix, k_zz: &SymMatrix, vecs: &[(&str, usize)]) -> Result<usize> {
    let n = k_xx.dim();
    if k_zz.dim() != n {
        return Err(Error::ShapeMismatch(format!(
            "K_XX is {n}x{n} but K_ZZ is {0}x{0}",
            k_zz.dim()
        )));
    }
    for (name, len) in vecs {
        if *len != n {
            return Err(Error::ShapeMismatch(format!(
                "{name} has length {len}, expected {n}"
            )));
        }
    }
    Ok(n)
}

/// Eigendecomposed `M = K_XX K_ZZ K_XX + 4 λ_s K_XX` shared by both bounds.
struct MomentSystem {
    eigen: SymEigen,
}

impl MomentSystem {
    fn new(k_xx: &SymMatrix, k_zz: &SymMatrix, lambda_s: f64) -> Result<Self> {
        let kx = k_xx.as_ref();
        let zx = k_zz.as_ref() * kx;
        let mut m = kx * &zx;
        let reg = 4.0 * lambda_s;
        if reg != 0.0 {
            let n = m.nrows();
            for j in 0..n {
                for i in 0..n {
                    m[(i, j)] += reg * kx[(i, j)];
                }
            }
        }
        let m = SymMatrix::symmetrized(m)?;
        Ok(MomentSystem { eigen: m.eigen()? })
    }

    fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        self.eigen.pinv_apply(rhs)
    }
}

fn fit_target(k_xx: &SymMatrix, k_zz: &SymMatrix, y: &[f64]) -> Vec<f64> {
    k_xx.mul_vec(&k_zz.mul_vec(y))
}

fn offset(b: &[f64], q: &[f64], scale: f64) -> Vec<f64> {
    b.iter().zip(q).map(|(bi, qi)| bi + scale * qi).collect()
}

/// Center and half-width coefficients `(M⁺b, M⁺q / λ_c)`; the extremal
/// hypotheses are their difference and sum.
fn split_coefficients(
    k_xx: &SymMatrix,
    k_zz: &SymMatrix,
    y: &[f64],
    q: &[f64],
    cfg: &EstimatorConfig,
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_system(k_xx, k_zz, &[("y", y.len()), ("q", q.len())])?;
    let system = MomentSystem::new(k_xx, k_zz, cfg.lambda_s)?;
    let center = system.solve(&fit_target(k_xx, k_zz, y));
    let mut half = system.solve(q);
    half.iter_mut().for_each(|v| *v /= cfg.lambda_c);
    Ok((center, half))
}

/// Coefficients of the two extremal hypotheses, `(θ_a, θ_b)` for the `∓`
/// signs respectively. `qᵀθ_a ≤ qᵀθ_b` always holds.
pub fn bound_coefficients(
    k_xx: &SymMatrix,
    k_zz: &SymMatrix,
    y: &[f64],
    q: &[f64],
    cfg: &EstimatorConfig,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let (center, half) = split_coefficients(k_xx, k_zz, y, q, cfg)?;
    Ok((offset(&center, &half, -1.0), offset(&center, &half, 1.0)))
}

/// `f_θ(x) = Σ_j θ_j k(anchor_j, x)`.
pub fn evaluate_hypothesis(
    theta: &[f64],
    anchors: &[Vec<f64>],
    x: &[f64],
    cfg: &KernelConfig,
) -> Result<f64> {
    if theta.len() != anchors.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} coefficients for {} anchors",
            theta.len(),
            anchors.len()
        )));
    }
    let mut acc = 0.0;
    for (t, a) in theta.iter().zip(anchors) {
        acc += t * rbf(a, x, cfg)?;
    }
    Ok(acc)
}

/// Estimates `[Q⁻, Q⁺]` from a dataset.
pub fn query_bounds(data: &Dataset, query: &Query, cfg: &EstimatorConfig) -> Result<BoundsEstimate> {
    data.validate()?;
    if data.is_empty() {
        return Err(Error::EmptySample);
    }
    let k_xx = gram_sym(&data.x, &cfg.kernel)?;
    let k_zz = gram_sym(&data.z, &cfg.kernel)?;
    let q = query_vector(query, &data.x, &cfg.kernel)?;
    let (center, half) = split_coefficients(&k_xx, &k_zz, &data.y, &q, cfg)?;
    // Center and half-width are combined only at the end: with outcomes of
    // large magnitude, `upper - lower` would lose the width to cancellation.
    let c = dot(&q, &center);
    let h = dot(&q, &half);
    let sign = if h >= 0.0 { 1.0 } else { -1.0 };
    Ok(BoundsEstimate {
        lower: c - h.abs(),
        upper: c + h.abs(),
        gap: 2.0 * h.abs(),
        theta_lower: offset(&center, &half, -sign),
        theta_upper: offset(&center, &half, sign),
        anchors: data.x.clone(),
    })
}

/// Width of the bound interval, `(2/λ_c) |qᵀ M⁺ q|`.
pub fn gap_closed_form(
    k_xx: &SymMatrix,
    k_zz: &SymMatrix,
    q: &[f64],
    cfg: &EstimatorConfig,
) -> Result<f64> {
    check_system(k_xx, k_zz, &[("q", q.len())])?;
    if q.iter().all(|&v| v == 0.0) {
        return Ok(0.0);
    }
    let system = MomentSystem::new(k_xx, k_zz, cfg.lambda_s)?;
    Ok(2.0 / cfg.lambda_c * dot(&system.solve(q), q).abs())
}

/// Gap of the bounds estimated on `data`, without forming the coefficients.
pub fn dataset_gap(data: &Dataset, query: &Query, cfg: &EstimatorConfig) -> Result<f64> {
    data.validate()?;
    let k_xx = gram_sym(&data.x, &cfg.kernel)?;
    let k_zz = gram_sym(&data.z, &cfg.kernel)?;
    let q = query_vector(query, &data.x, &cfg.kernel)?;
    gap_closed_form(&k_xx, &k_zz, &q, cfg)
}

/// Bound value obtained by minimizing the extremal objective numerically.
///
/// Minimizes
/// `J(θ) = ±qᵀθ + (λ_c/2)[(y − K_XX θ)ᵀ K_ZZ (y − K_XX θ) + 4 λ_s θᵀ K_XX θ]`
/// with conjugate gradient iterations driven only by kernel matrix-vector
/// products, and returns `qᵀθ` at the minimizer.
pub fn oracle_bound_value(
    data: &Dataset,
    query: &Query,
    cfg: &EstimatorConfig,
    sign: Sign,
) -> Result<f64> {
    data.validate()?;
    let n = data.len();
    if n == 0 {
        return Err(Error::EmptySample);
    }
    if n > ORACLE_MAX_N {
        return Err(Error::ShapeMismatch(format!(
            "oracle supports at most {ORACLE_MAX_N} samples, got {n}"
        )));
    }
    let k_xx = gram_sym(&data.x, &cfg.kernel)?;
    let k_zz = gram_sym(&data.z, &cfg.kernel)?;
    let q = query_vector(query, &data.x, &cfg.kernel)?;
    let s = sign.factor();
    let lc = cfg.lambda_c;
    let ls4 = 4.0 * cfg.lambda_s;

    // ∇J(θ) = ±q − λ_c K_XX K_ZZ (y − K_XX θ) + 4 λ_s λ_c K_XX θ
    let gradient = |theta: &[f64]| -> Vec<f64> {
        let kt = k_xx.mul_vec(theta);
        let resid: Vec<f64> = data.y.iter().zip(&kt).map(|(y, f)| y - f).collect();
        let kzr = k_xx.mul_vec(&k_zz.mul_vec(&resid));
        (0..n)
            .map(|i| s * q[i] - lc * kzr[i] + lc * ls4 * kt[i])
            .collect()
    };
    // Hessian-vector product λ_c (K_XX K_ZZ K_XX + 4 λ_s K_XX) v.
    let hess = |v: &[f64]| -> Vec<f64> {
        let kv = k_xx.mul_vec(v);
        let kzkv = k_xx.mul_vec(&k_zz.mul_vec(&kv));
        (0..n).map(|i| lc * (kzkv[i] + ls4 * kv[i])).collect()
    };

    let mut theta = vec![0.0; n];
    let mut iters = 0usize;
    let mut gnorm = f64::INFINITY;
    // Rounding in the matrix-vector chain leaves a gradient residual of order
    // ε‖K_XX‖²‖K_ZZ‖‖θ‖ even at the exact minimizer, which can exceed the
    // absolute tolerance when θ is large; never demand less than that.
    let ones = vec![1.0; n];
    let norm_inf = |m: &SymMatrix| m.mul_vec(&ones).iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let (kx_norm, kz_norm) = (norm_inf(&k_xx), norm_inf(&k_zz));
    let floor = |theta: &[f64]| {
        let t = dot(theta, theta).sqrt();
        let yn = dot(&data.y, &data.y).sqrt();
        16.0 * f64::EPSILON
            * (dot(&q, &q).sqrt()
                + lc * kx_norm * kz_norm * (yn + kx_norm * t)
                + lc * ls4 * kx_norm * t)
    };
    let mut tol;
    // Restarted conjugate gradient on the quadratic; every restart recomputes
    // the exact gradient so rounding drift in the recurrences cannot stall it.
    while iters < ORACLE_MAX_ITERS {
        let mut r: Vec<f64> = gradient(&theta).iter().map(|g| -g).collect();
        let mut rr = dot(&r, &r);
        gnorm = rr.sqrt();
        tol = ORACLE_GRAD_TOL.max(floor(&theta));
        if gnorm <= tol {
            return Ok(dot(&q, &theta));
        }
        let mut p = r.clone();
        for _ in 0..n.max(1) {
            iters += 1;
            let hp = hess(&p);
            let php = dot(&p, &hp);
            if !(php > 0.0) {
                break;
            }
            let step = rr / php;
            for i in 0..n {
                theta[i] += step * p[i];
                r[i] -= step * hp[i];
            }
            let rr_new = dot(&r, &r);
            if rr_new.sqrt() <= tol {
                break;
            }
            let beta = rr_new / rr;
            for i in 0..n {
                p[i] = r[i] + beta * p[i];
            }
            rr = rr_new;
        }
    }
    Err(Error::OracleDidNotConverge(gnorm, iters))
}

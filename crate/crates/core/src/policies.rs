//! Gaussian-mixture experimentation policies over the instrument.
//!
//! Parameters are stored unconstrained: mixture weights as softmax logits and
//! diagonal covariances as log-variances, so any finite gradient step yields
//! a valid policy. Scores are the usual mixture gradients in (γ, μ, Σ)
//! chained through those two maps.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scm::PolicySampler;

const LN_2PI: f64 = 1.837_877_066_409_345_5;
/// Bound on log-variances after a gradient step.
pub const LOG_VAR_LIMIT: f64 = 600.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmPolicy {
    pub weight_logits: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    /// Log of the diagonal covariance entries.
    pub log_diag_covs: Vec<Vec<f64>>,
}

/// Gradient with respect to the unconstrained parameters of a [`GmmPolicy`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmGradient {
    pub weight_logits: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub log_diag_covs: Vec<Vec<f64>>,
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

impl GmmPolicy {
    pub fn new(
        weight_logits: Vec<f64>,
        means: Vec<Vec<f64>>,
        log_diag_covs: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let p = GmmPolicy {
            weight_logits,
            means,
            log_diag_covs,
        };
        p.validate()?;
        Ok(p)
    }

    /// Single Gaussian `N(mean, variance · I)`.
    pub fn gaussian(mean: Vec<f64>, variance: f64) -> Result<Self> {
        if !(variance > 0.0) {
            return Err(Error::invalid("variance", format!("must be positive, got {variance}")));
        }
        let d = mean.len();
        Self::new(vec![0.0], vec![mean], vec![vec![variance.ln(); d]])
    }

    /// `m` equally weighted unit-covariance components with means drawn from
    /// `N(0, I)`.
    pub fn random_init<R: Rng + ?Sized>(m: usize, d_z: usize, rng: &mut R) -> Result<Self> {
        if m == 0 || d_z == 0 {
            return Err(Error::invalid("strategy.M", "mixture needs at least one component"));
        }
        let means = (0..m)
            .map(|_| (0..d_z).map(|_| rng.sample(StandardNormal)).collect())
            .collect();
        Self::new(vec![0.0; m], means, vec![vec![0.0; d_z]; m])
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.weight_logits.len();
        if m == 0 {
            return Err(Error::ShapeMismatch("policy has no components".into()));
        }
        if self.means.len() != m || self.log_diag_covs.len() != m {
            return Err(Error::ShapeMismatch(format!(
                "{m} weights, {} means, {} covariances",
                self.means.len(),
                self.log_diag_covs.len()
            )));
        }
        let d = self.means[0].len();
        if self.means.iter().chain(&self.log_diag_covs).any(|v| v.len() != d) {
            return Err(Error::ShapeMismatch("component dimensions differ".into()));
        }
        let all = self
            .weight_logits
            .iter()
            .chain(self.means.iter().flatten())
            .chain(self.log_diag_covs.iter().flatten());
        if all.clone().any(|v| !v.is_finite()) {
            return Err(Error::ShapeMismatch("non-finite policy parameter".into()));
        }
        Ok(())
    }

    pub fn n_components(&self) -> usize {
        self.weight_logits.len()
    }

    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    /// Mixture weights `softmax(weight_logits)`.
    pub fn weights(&self) -> Vec<f64> {
        let lse = log_sum_exp(&self.weight_logits);
        self.weight_logits.iter().map(|a| (a - lse).exp()).collect()
    }

    pub fn variances(&self) -> Vec<Vec<f64>> {
        self.log_diag_covs
            .iter()
            .map(|c| c.iter().map(|s| s.exp()).collect())
            .collect()
    }

    fn check_z(&self, z: &[f64]) -> Result<()> {
        if z.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: z.len(),
            });
        }
        Ok(())
    }

    /// `log γ_m + log N(z; μ_m, Σ_m)` per component.
    fn joint_log_terms(&self, z: &[f64]) -> Vec<f64> {
        let lse = log_sum_exp(&self.weight_logits);
        (0..self.n_components())
            .map(|m| {
                let mut acc = 0.0;
                for k in 0..z.len() {
                    let s = self.log_diag_covs[m][k];
                    let d = z[k] - self.means[m][k];
                    acc += LN_2PI + s + d * d * (-s).exp();
                }
                self.weight_logits[m] - lse - 0.5 * acc
            })
            .collect()
    }

    pub fn sample_policy<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<Vec<f64>> {
        (0..n).map(|_| self.draw(rng)).collect()
    }

    /// `log Σ_m γ_m N(z; μ_m, Σ_m)`.
    pub fn log_density(&self, z: &[f64]) -> Result<f64> {
        self.check_z(z)?;
        Ok(log_sum_exp(&self.joint_log_terms(z)))
    }

    /// Posterior component probabilities for `z`.
    pub fn responsibilities(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.check_z(z)?;
        let terms = self.joint_log_terms(z);
        let lse = log_sum_exp(&terms);
        if !lse.is_finite() {
            return Err(Error::DensityUnderflow);
        }
        Ok(terms.iter().map(|t| (t - lse).exp()).collect())
    }

    /// Gradient of `log_density(z)` with respect to the unconstrained
    /// parameters.
    pub fn score(&self, z: &[f64]) -> Result<GmmGradient> {
        let resp = self.responsibilities(z)?;
        let weights = self.weights();
        let d = self.dim();
        let mut g = GmmGradient::zeros(self.n_components(), d);
        for m in 0..self.n_components() {
            g.weight_logits[m] = resp[m] - weights[m];
            for k in 0..d {
                let inv_var = (-self.log_diag_covs[m][k]).exp();
                let diff = z[k] - self.means[m][k];
                g.means[m][k] = resp[m] * diff * inv_var;
                g.log_diag_covs[m][k] = -0.5 * resp[m] * (1.0 - diff * diff * inv_var);
            }
        }
        Ok(g)
    }

    /// `p − alpha · grad` on the unconstrained parameters.
    /// Log-variances are clamped to `±LOG_VAR_LIMIT` so the variance stays
    /// a positive finite double.
    pub fn gradient_step(&self, grad: &GmmGradient, alpha: f64) -> Result<GmmPolicy> {
        if !grad.is_finite() || !alpha.is_finite() {
            return Err(Error::NonFiniteGradient);
        }
        if grad.weight_logits.len() != self.n_components() || grad.dim() != self.dim() {
            return Err(Error::ShapeMismatch("gradient shape differs from policy".into()));
        }
        let step = |p: &[f64], g: &[f64]| -> Vec<f64> {
            p.iter().zip(g).map(|(p, g)| p - alpha * g).collect()
        };
        let next = GmmPolicy {
            weight_logits: step(&self.weight_logits, &grad.weight_logits),
            means: self
                .means
                .iter()
                .zip(&grad.means)
                .map(|(p, g)| step(p, g))
                .collect(),
            log_diag_covs: self
                .log_diag_covs
                .iter()
                .zip(&grad.log_diag_covs)
                .map(|(p, g)| {
                    step(p, g)
                        .into_iter()
                        .map(|v| v.clamp(-LOG_VAR_LIMIT, LOG_VAR_LIMIT))
                        .collect()
                })
                .collect(),
        };
        if next.validate().is_err() {
            return Err(Error::NonFiniteGradient);
        }
        Ok(next)
    }

    /// Parameters flattened as logits, then means, then log-variances.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = self.weight_logits.clone();
        v.extend(self.means.iter().flatten());
        v.extend(self.log_diag_covs.iter().flatten());
        v
    }

    /// Inverse of [`GmmPolicy::to_flat`] for a policy of this shape.
    pub fn with_flat(&self, flat: &[f64]) -> GmmPolicy {
        let (m, d) = (self.n_components(), self.dim());
        let chunk = |start: usize| -> Vec<Vec<f64>> {
            (0..m)
                .map(|i| flat[start + i * d..start + (i + 1) * d].to_vec())
                .collect()
        };
        GmmPolicy {
            weight_logits: flat[..m].to_vec(),
            means: chunk(m),
            log_diag_covs: chunk(m + m * d),
        }
    }

    /// Compact single-line description without commas, for CSV cells.
    pub fn summary(&self) -> String {
        let w = self.weights();
        let vars = self.variances();
        let fmt = |v: &[f64]| {
            v.iter()
                .map(|x| format!("{x:.16e}"))
                .collect::<Vec<_>>()
                .join(" ")
        };
        (0..self.n_components())
            .map(|m| {
                format!(
                    "w={:.16e}|mu={}|var={}",
                    w[m],
                    fmt(&self.means[m]),
                    fmt(&vars[m])
                )
            })
            .collect::<Vec<_>>()
            .join(";")
    }
}

impl PolicySampler for GmmPolicy {
    fn dim(&self) -> usize {
        GmmPolicy::dim(self)
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let weights = self.weights();
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut comp = weights.len() - 1;
        for (m, w) in weights.iter().enumerate() {
            acc += w;
            if u < acc {
                comp = m;
                break;
            }
        }
        let mean = &self.means[comp];
        let logv = &self.log_diag_covs[comp];
        (0..mean.len())
            .map(|k| {
                let e: f64 = rng.sample(StandardNormal);
                mean[k] + (0.5 * logv[k]).exp() * e
            })
            .collect()
    }
}

impl GmmGradient {
    pub fn zeros(m: usize, d: usize) -> Self {
        GmmGradient {
            weight_logits: vec![0.0; m],
            means: vec![vec![0.0; d]; m],
            log_diag_covs: vec![vec![0.0; d]; m],
        }
    }

    pub fn dim(&self) -> usize {
        self.means.first().map_or(0, |v| v.len())
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = self.weight_logits.clone();
        v.extend(self.means.iter().flatten());
        v.extend(self.log_diag_covs.iter().flatten());
        v
    }

    pub fn is_finite(&self) -> bool {
        self.to_flat().iter().all(|v| v.is_finite())
    }

    pub fn norm(&self) -> f64 {
        self.to_flat().iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// `self += scale · other`.
    pub fn add_scaled(&mut self, other: &GmmGradient, scale: f64) {
        let axpy = |a: &mut [f64], b: &[f64]| {
            for (x, y) in a.iter_mut().zip(b) {
                *x += scale * y;
            }
        };
        axpy(&mut self.weight_logits, &other.weight_logits);
        for (a, b) in self.means.iter_mut().zip(&other.means) {
            axpy(a, b);
        }
        for (a, b) in self.log_diag_covs.iter_mut().zip(&other.log_diag_covs) {
            axpy(a, b);
        }
    }
}

/// Batch-level score-function estimate of `∇ E[objective]`:
/// `(1/B) Σ_b objective_b · mean_{i ∈ b} score(z_i)`.
pub fn reinforce_gradient(
    policy: &GmmPolicy,
    z_samples: &[Vec<f64>],
    batch_objectives: &[f64],
    batches: &[Vec<usize>],
) -> Result<GmmGradient> {
    if batches.is_empty() {
        return Err(Error::EmptyBatch(0));
    }
    if batches.len() != batch_objectives.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} batches but {} objectives",
            batches.len(),
            batch_objectives.len()
        )));
    }
    let mut seen = vec![false; z_samples.len()];
    let mut grad = GmmGradient::zeros(policy.n_components(), policy.dim());
    let b = batches.len() as f64;
    for (bi, (batch, &obj)) in batches.iter().zip(batch_objectives).enumerate() {
        if batch.is_empty() {
            return Err(Error::EmptyBatch(bi));
        }
        let weight = obj / (b * batch.len() as f64);
        for &i in batch {
            match seen.get_mut(i) {
                Some(s) if !*s => *s = true,
                _ => {
                    return Err(Error::ShapeMismatch(format!(
                        "sample {i} missing or assigned to more than one batch"
                    )))
                }
            }
            if weight != 0.0 {
                grad.add_scaled(&policy.score(&z_samples[i])?, weight);
            }
        }
    }
    if seen.iter().any(|s| !s) {
        return Err(Error::ShapeMismatch("some samples are not assigned to a batch".into()));
    }
    Ok(grad)
}

/// Single Gaussian centred on the mean of `z_points` with covariance
/// `sigma_e · I`.
pub fn fit_exploit_policy(z_points: &[Vec<f64>], sigma_e: f64) -> Result<GmmPolicy> {
    let first = z_points.first().ok_or(Error::EmptySample)?;
    let d = first.len();
    let mut mean = vec![0.0; d];
    for z in z_points {
        if z.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: z.len(),
            });
        }
        for (m, v) in mean.iter_mut().zip(z) {
            *m += v;
        }
    }
    let n = z_points.len() as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    GmmPolicy::gaussian(mean, sigma_e)
}

/// Distribution over single-Gaussian exploration policies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetaDistribution {
    /// Standard deviation of the policy means around the origin.
    pub mean_scale: f64,
    /// Covariance scale of each sampled policy.
    pub exploit_var: f64,
    pub d_z: usize,
}

impl MetaDistribution {
    pub fn new(mean_scale: f64, exploit_var: f64, d_z: usize) -> Result<Self> {
        if !(mean_scale > 0.0) {
            return Err(Error::invalid("strategy.mean_scale", "must be positive"));
        }
        if !(exploit_var > 0.0) {
            return Err(Error::invalid("strategy.sigma_e", "must be positive"));
        }
        Ok(MetaDistribution {
            mean_scale,
            exploit_var,
            d_z,
        })
    }

    /// Draws `N(μ, exploit_var · I)` with `μ ~ N(0, mean_scale² · I)`.
    pub fn sample_meta<R: Rng + ?Sized>(&self, rng: &mut R) -> GmmPolicy {
        let mean = (0..self.d_z)
            .map(|_| self.mean_scale * rng.sample::<f64, _>(StandardNormal))
            .collect();
        GmmPolicy::gaussian(mean, self.exploit_var).expect("validated meta distribution")
    }
}

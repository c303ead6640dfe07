//! Synthetic structural causal models `X = h(Z, U)`, `Y = f0(X) + U`.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::Dataset;
use crate::kernels::Query;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    /// `h_j = α sin(z_j)(1 + u)`, `f0 = β Σ_j exp(x_j) sin(x_j)`, `d_z = d_x = 2`.
    LowDim,
    /// As `LowDim` for the first `d_z` coordinates; the remaining treatment
    /// coordinates are `1 + u`.
    HighDim,
    /// `X = (z + u, u)`, `f0 = 0.5 x₁ + 2 x₂`.
    LinearUnderspecified,
    /// `X = (z + u, u)`, `f0 = x₁² + x₂`.
    QuadraticIdentifiable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub kind: ScenarioKind,
    pub d_z: usize,
    pub d_x: usize,
    pub alpha: f64,
    pub beta: f64,
    pub x_star: Vec<f64>,
}

/// How the confounder enters a sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseMode {
    /// `u ~ N(0, 1)` in both the treatment and the outcome.
    Standard,
    /// `u = 0` everywhere.
    Zero,
    /// `u ~ N(0, 1)` in the outcome only; treatments are unconfounded.
    OutcomeOnly,
}

/// A distribution over instrument values.
pub trait PolicySampler {
    fn dim(&self) -> usize;
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64>;
}

impl Scenario {
    pub fn low_dim(alpha: f64, beta: f64) -> Self {
        Scenario {
            kind: ScenarioKind::LowDim,
            d_z: 2,
            d_x: 2,
            alpha,
            beta,
            x_star: vec![0.0; 2],
        }
    }

    pub fn high_dim(d_z: usize, d_x: usize, alpha: f64, beta: f64) -> Self {
        Scenario {
            kind: ScenarioKind::HighDim,
            d_z,
            d_x,
            alpha,
            beta,
            x_star: vec![0.0; d_x],
        }
    }

    pub fn linear_underspecified(x_star: Vec<f64>) -> Self {
        Scenario {
            kind: ScenarioKind::LinearUnderspecified,
            d_z: 1,
            d_x: 2,
            alpha: 1.0,
            beta: 1.0,
            x_star,
        }
    }

    pub fn quadratic_identifiable(x_star: Vec<f64>) -> Self {
        Scenario {
            kind: ScenarioKind::QuadraticIdentifiable,
            d_z: 1,
            d_x: 2,
            alpha: 1.0,
            beta: 1.0,
            x_star,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims_ok = match self.kind {
            ScenarioKind::LowDim => self.d_z == 2 && self.d_x == 2,
            ScenarioKind::HighDim => self.d_z >= 1 && self.d_z <= self.d_x,
            ScenarioKind::LinearUnderspecified | ScenarioKind::QuadraticIdentifiable => {
                self.d_z == 1 && self.d_x == 2
            }
        };
        if !dims_ok {
            return Err(Error::invalid(
                "scenario.d_z",
                format!(
                    "dimensions d_z={}, d_x={} not allowed for {:?}",
                    self.d_z, self.d_x, self.kind
                ),
            ));
        }
        if self.x_star.len() != self.d_x {
            return Err(Error::invalid(
                "scenario.x_star",
                format!("length {} but d_x = {}", self.x_star.len(), self.d_x),
            ));
        }
        if !self.alpha.is_finite() || !self.beta.is_finite() {
            return Err(Error::invalid("scenario.alpha", "alpha and beta must be finite"));
        }
        Ok(())
    }

    /// Treatment `h(z, u)`.
    pub fn treatment(&self, z: &[f64], u: f64) -> Vec<f64> {
        match self.kind {
            ScenarioKind::LowDim | ScenarioKind::HighDim => (0..self.d_x)
                .map(|j| {
                    if j < self.d_z {
                        self.alpha * z[j].sin() * (1.0 + u)
                    } else {
                        1.0 + u
                    }
                })
                .collect(),
            ScenarioKind::LinearUnderspecified | ScenarioKind::QuadraticIdentifiable => {
                vec![z[0] + u, u]
            }
        }
    }

    fn f0(&self, x: &[f64]) -> f64 {
        match self.kind {
            ScenarioKind::LowDim | ScenarioKind::HighDim => {
                self.beta * x.iter().map(|v| v.exp() * v.sin()).sum::<f64>()
            }
            ScenarioKind::LinearUnderspecified => 0.5 * x[0] + 2.0 * x[1],
            ScenarioKind::QuadraticIdentifiable => x[0] * x[0] + x[1],
        }
    }

    fn f0_gradient(&self, x: &[f64]) -> Vec<f64> {
        match self.kind {
            ScenarioKind::LowDim | ScenarioKind::HighDim => x
                .iter()
                .map(|v| self.beta * v.exp() * (v.sin() + v.cos()))
                .collect(),
            ScenarioKind::LinearUnderspecified => vec![0.5, 2.0],
            ScenarioKind::QuadraticIdentifiable => vec![2.0 * x[0], 1.0],
        }
    }

    fn check_x(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.d_x {
            return Err(Error::DimensionMismatch {
                expected: self.d_x,
                found: x.len(),
            });
        }
        Ok(())
    }

    /// Noiseless structural value `f0(x)`.
    pub fn structural_f(&self, x: &[f64]) -> Result<f64> {
        self.check_x(x)?;
        Ok(self.f0(x))
    }

    /// Analytic gradient of `f0` at `x`.
    pub fn structural_gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_x(x)?;
        Ok(self.f0_gradient(x))
    }

    /// Ground-truth `Q[f0]` for a leaf query.
    pub fn true_query(&self, query: &Query) -> Result<f64> {
        match query {
            Query::PartialDerivative { index, x_star } => {
                query.validate(self.d_x)?;
                Ok(self.f0_gradient(x_star)[*index])
            }
            Query::PointEvaluation { x_star } => self.structural_f(x_star),
            Query::LinearCombination { .. } => Err(Error::NoGroundTruth),
        }
    }

    /// Draws `n` samples with `z` from `policy`, tagged with `round`.
    pub fn sample<P, R>(&self, policy: &P, n: usize, round: usize, rng: &mut R) -> Result<Dataset>
    where
        P: PolicySampler,
        R: Rng + ?Sized,
    {
        self.sample_with_noise(policy, n, round, NoiseMode::Standard, rng)
    }

    /// As [`Scenario::sample`], with control over the confounder. Only the
    /// standard mode reflects the modelled data-generating process; the
    /// others exist for structural diagnostics.
    pub fn sample_with_noise<P, R>(
        &self,
        policy: &P,
        n: usize,
        round: usize,
        noise: NoiseMode,
        rng: &mut R,
    ) -> Result<Dataset>
    where
        P: PolicySampler,
        R: Rng + ?Sized,
    {
        if policy.dim() != self.d_z {
            return Err(Error::DimensionMismatch {
                expected: self.d_z,
                found: policy.dim(),
            });
        }
        let mut data = Dataset::default();
        for _ in 0..n {
            let z = policy.draw(rng);
            let u: f64 = match noise {
                NoiseMode::Zero => 0.0,
                _ => rng.sample(StandardNormal),
            };
            let x = match noise {
                NoiseMode::OutcomeOnly => self.treatment(&z, 0.0),
                _ => self.treatment(&z, u),
            };
            let y = self.f0(&x) + u;
            data.push(z, x, y, round);
        }
        Ok(data)
    }
}

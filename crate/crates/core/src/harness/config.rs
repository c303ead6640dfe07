use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::EstimatorConfig;
use crate::kernels::Query;
use crate::policies::MetaDistribution;
use crate::scm::{Scenario, ScenarioKind};
use crate::strategies::{AdaptiveSchedule, StrategyKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub kind: ScenarioKind,
    pub d_z: usize,
    pub d_x: usize,
    #[serde(default = "one")]
    pub alpha: f64,
    #[serde(default = "one")]
    pub beta: f64,
    pub x_star: Vec<f64>,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorSpec {
    pub lambda_c: f64,
    pub lambda_s: f64,
    #[serde(default = "one")]
    pub rho: f64,
}

/// Strategy selection and hyperparameters. Unset values are filled in by
/// [`RunConfig::resolve`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategySpec {
    /// `random`, `ee`, `aee`, `adaptive`, or `all`.
    pub name: String,
    #[serde(rename = "T")]
    pub t: usize,
    #[serde(rename = "T1", default, skip_serializing_if = "Option::is_none")]
    pub t1: Option<usize>,
    #[serde(rename = "T2", default, skip_serializing_if = "Option::is_none")]
    pub t2: Option<usize>,
    #[serde(rename = "K", default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default = "default_lr")]
    pub alpha_lr: f64,
    #[serde(default = "default_batches")]
    pub batches: usize,
    #[serde(rename = "M", default = "default_components")]
    pub m: usize,
    #[serde(default = "default_sigma_e")]
    pub sigma_e: f64,
    #[serde(default = "one")]
    pub mean_scale: f64,
}

fn default_lr() -> f64 {
    0.01
}
fn default_batches() -> usize {
    10
}
fn default_components() -> usize {
    3
}
fn default_sigma_e() -> f64 {
    0.001
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    pub n: usize,
    pub n_seeds: usize,
    pub master_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<String>,
}

/// Hyperparameter grid; the sweep runs the cartesian product.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepGrid {
    pub lambda_c: Vec<f64>,
    pub lambda_s: Vec<f64>,
    pub alpha_lr: Vec<f64>,
}

impl SweepGrid {
    pub fn points(&self) -> Vec<(f64, f64, f64)> {
        let mut out = Vec::new();
        for &lc in &self.lambda_c {
            for &ls in &self.lambda_s {
                for &a in &self.alpha_lr {
                    out.push((lc, ls, a));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: ScenarioSpec,
    pub query: Query,
    pub estimator: EstimatorSpec,
    pub strategy: StrategySpec,
    pub run: RunSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepGrid>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }

    pub fn scenario(&self) -> Scenario {
        let s = &self.scenario;
        Scenario {
            kind: s.kind,
            d_z: s.d_z,
            d_x: s.d_x,
            alpha: s.alpha,
            beta: s.beta,
            x_star: s.x_star.clone(),
        }
    }

    pub fn estimator(&self) -> Result<EstimatorConfig> {
        let e = &self.estimator;
        EstimatorConfig::new(e.lambda_c, e.lambda_s, e.rho)
    }

    pub fn meta(&self) -> Result<MetaDistribution> {
        MetaDistribution::new(
            self.strategy.mean_scale,
            self.strategy.sigma_e,
            self.scenario.d_z,
        )
    }

    pub fn strategies(&self) -> Result<Vec<StrategyKind>> {
        if self.strategy.name == "all" {
            return Ok(StrategyKind::ALL.to_vec());
        }
        StrategyKind::parse(&self.strategy.name)
            .map(|k| vec![k])
            .ok_or_else(|| {
                Error::invalid(
                    "strategy.name",
                    format!(
                        "unknown strategy {:?}; expected random, ee, aee, adaptive or all",
                        self.strategy.name
                    ),
                )
            })
    }

    /// Exploration/learning and exploitation round counts for the two-phase
    /// strategies. Explicit `T1`/`T2` must sum to `T`; a missing one is
    /// `T` minus the other; with neither, the default split is scaled from
    /// its 16-round form.
    pub fn phase_split(&self, kind: StrategyKind) -> Result<(usize, usize)> {
        let t = self.strategy.t;
        let default_t1 = match kind {
            StrategyKind::Ee => 10,
            StrategyKind::Adaptive => 12,
            _ => return Ok((t, 0)),
        };
        let (t1, t2) = match (self.strategy.t1, self.strategy.t2) {
            (Some(a), Some(b)) => (a, b),
            (Some(a), None) => (a, t.saturating_sub(a)),
            (None, Some(b)) => (t.saturating_sub(b), b),
            (None, None) => {
                let a = (t * default_t1 / 16).clamp(1, t.saturating_sub(1).max(1));
                (a, t.saturating_sub(a))
            }
        };
        if t1 == 0 || t2 == 0 || t1 + t2 != t {
            return Err(Error::invalid(
                "strategy.T1",
                format!("{} needs T1, T2 >= 1 with T1 + T2 = T (got T1={t1}, T2={t2}, T={t})", kind.name()),
            ));
        }
        Ok((t1, t2))
    }

    pub fn adaptive_schedule(&self) -> Result<AdaptiveSchedule> {
        let (learn_rounds, exploit_rounds) = self.phase_split(StrategyKind::Adaptive)?;
        Ok(AdaptiveSchedule {
            learn_rounds,
            exploit_rounds,
            learning_rate: self.strategy.alpha_lr,
            batches: self.strategy.batches,
        })
    }

    pub fn k(&self) -> usize {
        self.strategy.k.unwrap_or(self.run.n)
    }

    /// Fills defaulted values and checks every invariant, naming the
    /// offending key on failure.
    pub fn resolve(mut self) -> Result<Self> {
        if self.strategy.k.is_none() {
            self.strategy.k = Some(self.run.n);
        }
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.run.n == 0 {
            return Err(Error::invalid("run.n", "must be at least 1"));
        }
        if self.run.n_seeds == 0 {
            return Err(Error::invalid("run.n_seeds", "must be at least 1"));
        }
        if self.strategy.t == 0 {
            return Err(Error::invalid("strategy.T", "must be at least 1"));
        }
        if self.k() == 0 {
            return Err(Error::invalid("strategy.K", "must be at least 1"));
        }
        if !(self.strategy.alpha_lr >= 0.0) || !self.strategy.alpha_lr.is_finite() {
            return Err(Error::invalid("strategy.alpha_lr", "must be finite and nonnegative"));
        }
        if self.strategy.m == 0 {
            return Err(Error::invalid("strategy.M", "must be at least 1"));
        }
        if self.strategy.batches == 0 || self.strategy.batches > self.run.n {
            return Err(Error::invalid("strategy.batches", "must lie in [1, n]"));
        }
        self.scenario().validate()?;
        self.query
            .validate(self.scenario.d_x)
            .map_err(|e| Error::invalid("query", e.to_string()))?;
        self.estimator()?;
        self.meta()?;
        for kind in self.strategies()? {
            match kind {
                StrategyKind::Ee | StrategyKind::Adaptive => {
                    self.phase_split(kind)?;
                }
                StrategyKind::Aee if self.strategy.t < 2 => {
                    return Err(Error::invalid("strategy.T", "aee needs T >= 2"));
                }
                _ => {}
            }
        }
        if let Some((t1, _)) = self
            .strategies()?
            .contains(&StrategyKind::Ee)
            .then(|| self.phase_split(StrategyKind::Ee))
            .transpose()?
        {
            if self.k() > t1 * self.run.n {
                return Err(Error::invalid(
                    "strategy.K",
                    format!("K = {} exceeds the {} exploration samples", self.k(), t1 * self.run.n),
                ));
            }
        }
        if let Some(grid) = &self.sweep {
            if grid.points().is_empty() {
                return Err(Error::invalid("sweep", "grid has no points"));
            }
        }
        Ok(())
    }
}

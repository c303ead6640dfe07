//! Multi-seed experiment orchestration, aggregation, sweeps, and output
//! files.

mod config;
mod output;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub use config::{EstimatorSpec, RunConfig, RunSpec, ScenarioSpec, StrategySpec, SweepGrid};
pub use output::{emit_outputs, emit_sweep, format_float, RAW_HEADER, SUMMARY_HEADER};

use crate::error::Result;
use crate::numerics::{mean, percentile};
use crate::policies::GmmPolicy;
use crate::strategies::{
    run_adaptive, run_aee, run_ee, run_random, Problem, RoundRecord, StrategyKind,
};

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of the `index`-th run derived from the master seed.
pub fn split_seed(master_seed: u64, index: u64) -> u64 {
    splitmix64(master_seed ^ splitmix64(index))
}

/// Random stream owned by one (strategy, seed) run.
pub fn run_rng(master_seed: u64, index: u64, strategy: StrategyKind) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(split_seed(master_seed, index));
    rng.set_stream(strategy as u64);
    rng
}

/// Runs one strategy for one seed.
pub fn run_single(cfg: &RunConfig, strategy: StrategyKind, seed: usize) -> Result<Vec<RoundRecord>> {
    let scenario = cfg.scenario();
    let estimator = cfg.estimator()?;
    let problem = Problem {
        scenario: &scenario,
        query: &cfg.query,
        estimator: &estimator,
    };
    let meta = cfg.meta()?;
    let n = cfg.run.n;
    let t = cfg.strategy.t;
    let mut rng = run_rng(cfg.run.master_seed, seed as u64, strategy);
    match strategy {
        StrategyKind::Random => run_random(problem, &meta, t, n, &mut rng),
        StrategyKind::Ee => {
            let (t1, t2) = cfg.phase_split(strategy)?;
            run_ee(problem, &meta, t1, t2, cfg.k(), n, &mut rng)
        }
        StrategyKind::Aee => run_aee(problem, &meta, t, cfg.k(), n, &mut rng),
        StrategyKind::Adaptive => {
            let init = GmmPolicy::random_init(cfg.strategy.m, scenario.d_z, &mut rng)?;
            run_adaptive(problem, init, cfg.adaptive_schedule()?, n, &mut rng)
        }
    }
}

/// One (strategy, seed) run; failures keep the error message.
#[derive(Debug, Clone)]
pub struct SeedRun {
    pub strategy: StrategyKind,
    pub seed: usize,
    pub outcome: std::result::Result<Vec<RoundRecord>, String>,
}

impl SeedRun {
    pub fn records(&self) -> Option<&[RoundRecord]> {
        self.outcome.as_deref().ok()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundAggregate {
    pub strategy: StrategyKind,
    pub t: usize,
    /// Successful seeds that reported bounds this round.
    pub count: usize,
    pub mean_lower: Option<f64>,
    pub mean_upper: Option<f64>,
    pub mean_gap: Option<f64>,
    pub p10_lower: Option<f64>,
    pub p90_lower: Option<f64>,
    pub p10_upper: Option<f64>,
    pub p90_upper: Option<f64>,
    pub mean_elapsed: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrategyOutcome {
    pub strategy: StrategyKind,
    pub succeeded: usize,
    pub failed: usize,
    /// Fraction of successful seeds whose final interval contains the true
    /// query value; absent when no ground truth exists.
    pub final_coverage: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateSummary {
    /// Sorted by strategy name, then round.
    pub rounds: Vec<RoundAggregate>,
    pub strategies: Vec<StrategyOutcome>,
    pub truth: Option<f64>,
}

impl AggregateSummary {
    pub fn round(&self, strategy: StrategyKind, t: usize) -> Option<&RoundAggregate> {
        self.rounds.iter().find(|r| r.strategy == strategy && r.t == t)
    }

    pub fn outcome(&self, strategy: StrategyKind) -> Option<&StrategyOutcome> {
        self.strategies.iter().find(|s| s.strategy == strategy)
    }

    pub fn failures(&self) -> usize {
        self.strategies.iter().map(|s| s.failed).sum()
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub config: RunConfig,
    /// Sorted by strategy name, then seed.
    pub runs: Vec<SeedRun>,
    pub summary: AggregateSummary,
}

fn by_name(kinds: &mut [StrategyKind]) {
    kinds.sort_by_key(|k| k.name());
}

/// Runs every configured strategy for every seed, in parallel, and
/// aggregates. Per-seed failures are recorded rather than propagated.
pub fn run_experiment(cfg: &RunConfig) -> Result<ExperimentResult> {
    let cfg = cfg.clone().resolve()?;
    let mut kinds = cfg.strategies()?;
    by_name(&mut kinds);
    let jobs: Vec<(StrategyKind, usize)> = kinds
        .iter()
        .flat_map(|&k| (0..cfg.run.n_seeds).map(move |s| (k, s)))
        .collect();
    let runs: Vec<SeedRun> = jobs
        .into_par_iter()
        .map(|(strategy, seed)| SeedRun {
            strategy,
            seed,
            outcome: run_single(&cfg, strategy, seed).map_err(|e| e.to_string()),
        })
        .collect();
    let truth = cfg.scenario().true_query(&cfg.query).ok();
    let summary = aggregate(&runs, &kinds, truth);
    Ok(ExperimentResult {
        config: cfg,
        runs,
        summary,
    })
}

fn opt_percentile(values: &[f64], p: f64) -> Option<f64> {
    percentile(values, p).ok()
}

/// Aggregates runs in seed order. `strategies` fixes the output order.
pub fn aggregate(runs: &[SeedRun], strategies: &[StrategyKind], truth: Option<f64>) -> AggregateSummary {
    let mut rounds = Vec::new();
    let mut outcomes = Vec::new();
    for &kind in strategies {
        let mut mine: Vec<&SeedRun> = runs.iter().filter(|r| r.strategy == kind).collect();
        mine.sort_by_key(|r| r.seed);
        let ok: Vec<&[RoundRecord]> = mine.iter().filter_map(|r| r.records()).collect();
        let n_rounds = ok.iter().map(|r| r.len()).max().unwrap_or(0);
        for t in 1..=n_rounds {
            let present: Vec<&RoundRecord> = ok.iter().filter_map(|r| r.get(t - 1)).collect();
            let bounds: Vec<_> = present.iter().filter_map(|r| r.bounds.as_ref()).collect();
            let lower: Vec<f64> = bounds.iter().map(|b| b.lower).collect();
            let upper: Vec<f64> = bounds.iter().map(|b| b.upper).collect();
            let gap: Vec<f64> = bounds.iter().map(|b| b.gap).collect();
            let elapsed: Vec<f64> = present.iter().map(|r| r.elapsed_seconds).collect();
            rounds.push(RoundAggregate {
                strategy: kind,
                t,
                count: bounds.len(),
                mean_lower: mean(&lower).ok(),
                mean_upper: mean(&upper).ok(),
                mean_gap: mean(&gap).ok(),
                p10_lower: opt_percentile(&lower, 10.0),
                p90_lower: opt_percentile(&lower, 90.0),
                p10_upper: opt_percentile(&upper, 10.0),
                p90_upper: opt_percentile(&upper, 90.0),
                mean_elapsed: mean(&elapsed).unwrap_or(0.0),
            });
        }
        let final_coverage = truth.and_then(|v| {
            let finals: Vec<bool> = ok
                .iter()
                .filter_map(|r| r.last().and_then(|rec| rec.bounds.as_ref()))
                .map(|b| b.contains(v))
                .collect();
            (!finals.is_empty())
                .then(|| finals.iter().filter(|&&c| c).count() as f64 / finals.len() as f64)
        });
        outcomes.push(StrategyOutcome {
            strategy: kind,
            succeeded: ok.len(),
            failed: mine.len() - ok.len(),
            final_coverage,
        });
    }
    AggregateSummary {
        rounds,
        strategies: outcomes,
        truth,
    }
}

/// One grid point of a sweep.
#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub lambda_c: f64,
    pub lambda_s: f64,
    pub alpha_lr: f64,
    pub result: ExperimentResult,
}

/// Independent experiments over the configured grid, all sharing the
/// master seed.
pub fn run_sweep(cfg: &RunConfig) -> Result<Vec<SweepPoint>> {
    let cfg = cfg.clone().resolve()?;
    let grid = cfg.sweep.clone().ok_or_else(|| {
        crate::error::Error::invalid("sweep", "config has no sweep grid")
    })?;
    grid.points()
        .into_iter()
        .map(|(lambda_c, lambda_s, alpha_lr)| {
            let mut point = cfg.clone();
            point.sweep = None;
            point.estimator.lambda_c = lambda_c;
            point.estimator.lambda_s = lambda_s;
            point.strategy.alpha_lr = alpha_lr;
            Ok(SweepPoint {
                lambda_c,
                lambda_s,
                alpha_lr,
                result: run_experiment(&point)?,
            })
        })
        .collect()
}

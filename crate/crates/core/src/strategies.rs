//! Round-by-round experiment selection: random exploration, explore then
//! exploit, alternating explore/exploit, and the gradient-based adaptive
//! strategy.
//!
//! Every strategy collects exactly `n` samples per round and records which
//! rounds' data fed each reported bound.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{dataset_gap, query_bounds, BoundsEstimate, Dataset, EstimatorConfig};
use crate::kernels::Query;
use crate::policies::{fit_exploit_policy, reinforce_gradient, GmmPolicy, MetaDistribution};
use crate::scm::Scenario;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    Random,
    Ee,
    Aee,
    Adaptive,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 4] = [
        StrategyKind::Random,
        StrategyKind::Ee,
        StrategyKind::Aee,
        StrategyKind::Adaptive,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::Random => "random",
            StrategyKind::Ee => "ee",
            StrategyKind::Aee => "aee",
            StrategyKind::Adaptive => "adaptive",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        StrategyKind::ALL.into_iter().find(|k| k.name() == s)
    }
}

/// Outcome of one round.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    /// Round index, starting at 1.
    pub t: usize,
    /// Policy the round's instruments were drawn from.
    pub policy: GmmPolicy,
    /// Samples collected in this round.
    pub data: Dataset,
    pub bounds: Option<BoundsEstimate>,
    /// Rounds whose samples were used for `bounds`.
    pub estimation_rounds: Vec<usize>,
    pub elapsed_seconds: f64,
}

/// The estimation problem shared by every round of a run.
#[derive(Debug, Clone, Copy)]
pub struct Problem<'a> {
    pub scenario: &'a Scenario,
    pub query: &'a Query,
    pub estimator: &'a EstimatorConfig,
}

impl Problem<'_> {
    fn bounds(&self, data: &Dataset) -> Result<BoundsEstimate> {
        query_bounds(data, self.query, self.estimator)
    }
}

/// A collected sample with its distance to the target treatment.
#[derive(Debug, Clone, PartialEq)]
pub struct BufferEntry {
    pub z: Vec<f64>,
    pub x: Vec<f64>,
    pub y: f64,
    pub round: usize,
    pub distance: f64,
}

/// Samples kept in ascending order of Euclidean distance between their
/// treatment and a fixed target; equal distances keep insertion order.
#[derive(Debug, Clone)]
pub struct SortedBuffer {
    target: Vec<f64>,
    entries: Vec<BufferEntry>,
}

impl SortedBuffer {
    pub fn new(target: Vec<f64>) -> Self {
        SortedBuffer {
            target,
            entries: Vec::new(),
        }
    }

    pub fn insert(&mut self, z: Vec<f64>, x: Vec<f64>, y: f64, round: usize) {
        let distance = x
            .iter()
            .zip(&self.target)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let at = self.entries.partition_point(|e| e.distance <= distance);
        self.entries.insert(
            at,
            BufferEntry {
                z,
                x,
                y,
                round,
                distance,
            },
        );
    }

    pub fn insert_dataset(&mut self, data: &Dataset) {
        for i in 0..data.len() {
            self.insert(data.z[i].clone(), data.x[i].clone(), data.y[i], data.round[i]);
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[BufferEntry] {
        &self.entries
    }
}

/// The first `min(k, len)` entries of the buffer.
pub fn nearest_k(buffer: &SortedBuffer, k: usize) -> Result<&[BufferEntry]> {
    if buffer.is_empty() {
        return Err(Error::EmptyBuffer);
    }
    Ok(&buffer.entries[..k.min(buffer.len())])
}

fn fit_to_nearest(buffer: &SortedBuffer, k: usize, sigma_e: f64) -> Result<GmmPolicy> {
    let z: Vec<Vec<f64>> = nearest_k(buffer, k)?.iter().map(|e| e.z.clone()).collect();
    fit_exploit_policy(&z, sigma_e)
}

fn positive(name: &str, v: usize) -> Result<()> {
    if v == 0 {
        return Err(Error::invalid(name, "must be at least 1"));
    }
    Ok(())
}

/// Fresh exploration policy every round; bounds on all data collected so far.
pub fn run_random<R: Rng + ?Sized>(
    problem: Problem<'_>,
    meta: &MetaDistribution,
    rounds: usize,
    n: usize,
    rng: &mut R,
) -> Result<Vec<RoundRecord>> {
    positive("strategy.T", rounds)?;
    positive("run.n", n)?;
    let mut all = Dataset::default();
    let mut records = Vec::with_capacity(rounds);
    for t in 1..=rounds {
        let start = Instant::now();
        let policy = meta.sample_meta(rng);
        let data = problem.scenario.sample(&policy, n, t, rng)?;
        all.extend(&data);
        let bounds = problem.bounds(&all)?;
        records.push(RoundRecord {
            t,
            policy,
            data,
            bounds: Some(bounds),
            estimation_rounds: (1..=t).collect(),
            elapsed_seconds: start.elapsed().as_secs_f64(),
        });
    }
    Ok(records)
}

/// Explore with `explore_rounds` meta-sampled policies, fit one policy to
/// the `k` samples nearest the target, then exploit it for `exploit_rounds`
/// rounds. Exploration rounds report no bounds.
pub fn run_ee<R: Rng + ?Sized>(
    problem: Problem<'_>,
    meta: &MetaDistribution,
    explore_rounds: usize,
    exploit_rounds: usize,
    k: usize,
    n: usize,
    rng: &mut R,
) -> Result<Vec<RoundRecord>> {
    positive("strategy.T1", explore_rounds)?;
    positive("strategy.T2", exploit_rounds)?;
    positive("strategy.K", k)?;
    positive("run.n", n)?;
    if k > explore_rounds * n {
        return Err(Error::InsufficientExplorationData {
            requested: k,
            available: explore_rounds * n,
        });
    }
    let mut buffer = SortedBuffer::new(problem.scenario.x_star.clone());
    let mut records = Vec::with_capacity(explore_rounds + exploit_rounds);
    for t in 1..=explore_rounds {
        let start = Instant::now();
        let policy = meta.sample_meta(rng);
        let data = problem.scenario.sample(&policy, n, t, rng)?;
        buffer.insert_dataset(&data);
        records.push(RoundRecord {
            t,
            policy,
            data,
            bounds: None,
            estimation_rounds: Vec::new(),
            elapsed_seconds: start.elapsed().as_secs_f64(),
        });
    }

    let exploit = fit_to_nearest(&buffer, k, meta.exploit_var)?;
    let mut pooled = Dataset::default();
    for t in (explore_rounds + 1)..=(explore_rounds + exploit_rounds) {
        let start = Instant::now();
        let data = problem.scenario.sample(&exploit, n, t, rng)?;
        pooled.extend(&data);
        let bounds = problem.bounds(&pooled)?;
        records.push(RoundRecord {
            t,
            policy: exploit.clone(),
            data,
            bounds: Some(bounds),
            estimation_rounds: ((explore_rounds + 1)..=t).collect(),
            elapsed_seconds: start.elapsed().as_secs_f64(),
        });
    }
    Ok(records)
}

/// Odd rounds (other than the last) explore; even rounds and the last round
/// fit a policy to the `min(k, n·t)` samples nearest the target and report
/// bounds from the pooled exploitation rounds.
pub fn run_aee<R: Rng + ?Sized>(
    problem: Problem<'_>,
    meta: &MetaDistribution,
    rounds: usize,
    k: usize,
    n: usize,
    rng: &mut R,
) -> Result<Vec<RoundRecord>> {
    if rounds < 2 {
        return Err(Error::invalid("strategy.T", "alternating schedule needs T >= 2"));
    }
    positive("strategy.K", k)?;
    positive("run.n", n)?;
    let mut buffer = SortedBuffer::new(problem.scenario.x_star.clone());
    let mut pooled = Dataset::default();
    let mut exploit_rounds = Vec::new();
    let mut records = Vec::with_capacity(rounds);
    for t in 1..=rounds {
        let start = Instant::now();
        let explore = t % 2 == 1 && t != rounds;
        let policy = if explore {
            meta.sample_meta(rng)
        } else {
            fit_to_nearest(&buffer, k.min(n * t), meta.exploit_var)?
        };
        let data = problem.scenario.sample(&policy, n, t, rng)?;
        buffer.insert_dataset(&data);
        let bounds = if explore {
            None
        } else {
            pooled.extend(&data);
            exploit_rounds.push(t);
            Some(problem.bounds(&pooled)?)
        };
        records.push(RoundRecord {
            t,
            policy,
            data,
            estimation_rounds: if bounds.is_some() {
                exploit_rounds.clone()
            } else {
                Vec::new()
            },
            bounds,
            elapsed_seconds: start.elapsed().as_secs_f64(),
        });
    }
    Ok(records)
}

/// Random partition of `0..n` into `batches` groups whose sizes differ by at
/// most one.
pub fn random_batches<R: Rng + ?Sized>(n: usize, batches: usize, rng: &mut R) -> Result<Vec<Vec<usize>>> {
    if batches == 0 || batches > n {
        return Err(Error::invalid(
            "strategy.batches",
            format!("need 1 <= batches <= n, got {batches} batches for n = {n}"),
        ));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let base = n / batches;
    let extra = n % batches;
    let mut out = Vec::with_capacity(batches);
    let mut start = 0;
    for b in 0..batches {
        let len = base + usize::from(b < extra);
        out.push(idx[start..start + len].to_vec());
        start += len;
    }
    Ok(out)
}

/// Hyperparameters of the adaptive strategy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptiveSchedule {
    /// Rounds with policy-gradient updates.
    pub learn_rounds: usize,
    /// Rounds with the frozen final policy.
    pub exploit_rounds: usize,
    pub learning_rate: f64,
    pub batches: usize,
}

/// Policy-gradient descent on the estimated gap for `learn_rounds` rounds,
/// then exploitation of the learned policy with bounds on the pooled
/// exploitation data. Learning rounds report bounds from their own data.
pub fn run_adaptive<R: Rng + ?Sized>(
    problem: Problem<'_>,
    initial_policy: GmmPolicy,
    schedule: AdaptiveSchedule,
    n: usize,
    rng: &mut R,
) -> Result<Vec<RoundRecord>> {
    positive("strategy.T1", schedule.learn_rounds)?;
    positive("strategy.T2", schedule.exploit_rounds)?;
    positive("run.n", n)?;
    if !(schedule.learning_rate >= 0.0) {
        return Err(Error::invalid("strategy.alpha_lr", "must be nonnegative"));
    }
    let mut policy = initial_policy;
    let mut records = Vec::with_capacity(schedule.learn_rounds + schedule.exploit_rounds);
    for t in 1..=schedule.learn_rounds {
        let start = Instant::now();
        let data = problem.scenario.sample(&policy, n, t, rng)?;
        let bounds = problem.bounds(&data)?;
        let batches = random_batches(n, schedule.batches, rng)?;
        let objectives = batches
            .iter()
            .map(|b| dataset_gap(&data.select(b), problem.query, problem.estimator))
            .collect::<Result<Vec<f64>>>()?;
        let grad = reinforce_gradient(&policy, &data.z, &objectives, &batches)?;
        let next = policy.gradient_step(&grad, schedule.learning_rate)?;
        records.push(RoundRecord {
            t,
            policy: std::mem::replace(&mut policy, next),
            data,
            bounds: Some(bounds),
            estimation_rounds: vec![t],
            elapsed_seconds: start.elapsed().as_secs_f64(),
        });
    }
    let mut pooled = Dataset::default();
    let first = schedule.learn_rounds + 1;
    for t in first..(first + schedule.exploit_rounds) {
        let start = Instant::now();
        let data = problem.scenario.sample(&policy, n, t, rng)?;
        pooled.extend(&data);
        let bounds = problem.bounds(&pooled)?;
        records.push(RoundRecord {
            t,
            policy: policy.clone(),
            data,
            bounds: Some(bounds),
            estimation_rounds: (first..=t).collect(),
            elapsed_seconds: start.elapsed().as_secs_f64(),
        });
    }
    Ok(records)
}

/// Fixed policy every round; bounds on all data collected so far.
pub fn run_fixed<R: Rng + ?Sized>(
    problem: Problem<'_>,
    policy: &GmmPolicy,
    rounds: usize,
    n: usize,
    rng: &mut R,
) -> Result<Vec<RoundRecord>> {
    positive("strategy.T", rounds)?;
    positive("run.n", n)?;
    let mut all = Dataset::default();
    let mut records = Vec::with_capacity(rounds);
    for t in 1..=rounds {
        let start = Instant::now();
        let data = problem.scenario.sample(policy, n, t, rng)?;
        all.extend(&data);
        let bounds = problem.bounds(&all)?;
        records.push(RoundRecord {
            t,
            policy: policy.clone(),
            data,
            bounds: Some(bounds),
            estimation_rounds: (1..=t).collect(),
            elapsed_seconds: start.elapsed().as_secs_f64(),
        });
    }
    Ok(records)
}

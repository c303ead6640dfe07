use std::fs;
use std::path::Path;

use super::{ExperimentResult, SweepPoint};
use crate::error::{Error, Result};

pub const RAW_HEADER: [&str; 8] = [
    "seed",
    "strategy",
    "t",
    "lower",
    "upper",
    "gap",
    "estimation_rounds",
    "policy_summary",
];

pub const SUMMARY_HEADER: [&str; 11] = [
    "strategy",
    "t",
    "count",
    "mean_lower",
    "mean_upper",
    "mean_gap",
    "p10_lower",
    "p90_lower",
    "p10_upper",
    "p90_upper",
    "final_coverage",
];

const TIMINGS_HEADER: [&str; 5] = ["strategy", "seed", "t", "n_estimate", "elapsed_seconds"];
const FAILURES_HEADER: [&str; 3] = ["strategy", "seed", "error"];
const SWEEP_HEADER: [&str; 9] = [
    "point",
    "lambda_c",
    "lambda_s",
    "alpha_lr",
    "strategy",
    "final_mean_lower",
    "final_mean_upper",
    "final_mean_gap",
    "final_coverage",
];

/// 17 significant digits, enough to round-trip any `f64`.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

fn cell(v: Option<f64>) -> String {
    v.map(format_float).unwrap_or_default()
}

fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let io = |e: std::io::Error| Error::io(path, e);
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(|e| Error::io(path, e.into()))?;
    w.write_record(header).map_err(|e| Error::io(path, e.into()))?;
    for row in rows {
        w.write_record(row).map_err(|e| Error::io(path, e.into()))?;
    }
    w.flush().map_err(io)
}

/// Writes `raw.csv`, `summary.csv`, `timings.csv`, `failures.csv` and
/// `config.json` into `dir`, creating it if needed.
pub fn emit_outputs(result: &ExperimentResult, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let mut raw = Vec::new();
    let mut timings = Vec::new();
    let mut failures = Vec::new();
    for run in &result.runs {
        let name = run.strategy.name();
        match &run.outcome {
            Ok(records) => {
                for r in records {
                    let b = r.bounds.as_ref();
                    let rounds: Vec<String> =
                        r.estimation_rounds.iter().map(|t| t.to_string()).collect();
                    raw.push(vec![
                        run.seed.to_string(),
                        name.to_string(),
                        r.t.to_string(),
                        cell(b.map(|b| b.lower)),
                        cell(b.map(|b| b.upper)),
                        cell(b.map(|b| b.gap)),
                        rounds.join(";"),
                        r.policy.summary(),
                    ]);
                    timings.push(vec![
                        name.to_string(),
                        run.seed.to_string(),
                        r.t.to_string(),
                        (r.estimation_rounds.len() * r.data.len()).to_string(),
                        format_float(r.elapsed_seconds),
                    ]);
                }
            }
            Err(msg) => failures.push(vec![name.to_string(), run.seed.to_string(), msg.clone()]),
        }
    }

    let mut summary = Vec::new();
    for (i, a) in result.summary.rounds.iter().enumerate() {
        let last = result
            .summary
            .rounds
            .get(i + 1)
            .is_none_or(|next| next.strategy != a.strategy);
        let coverage = if last {
            result
                .summary
                .outcome(a.strategy)
                .and_then(|o| o.final_coverage)
        } else {
            None
        };
        summary.push(vec![
            a.strategy.name().to_string(),
            a.t.to_string(),
            a.count.to_string(),
            cell(a.mean_lower),
            cell(a.mean_upper),
            cell(a.mean_gap),
            cell(a.p10_lower),
            cell(a.p90_lower),
            cell(a.p10_upper),
            cell(a.p90_upper),
            cell(coverage),
        ]);
    }

    write_csv(&dir.join("raw.csv"), &RAW_HEADER, &raw)?;
    write_csv(&dir.join("summary.csv"), &SUMMARY_HEADER, &summary)?;
    write_csv(&dir.join("timings.csv"), &TIMINGS_HEADER, &timings)?;
    write_csv(&dir.join("failures.csv"), &FAILURES_HEADER, &failures)?;
    let config_path = dir.join("config.json");
    fs::write(&config_path, result.config.to_json()).map_err(|e| Error::io(&config_path, e))
}

/// Writes one output directory per grid point (`point_000`, ...) and a
/// `sweep.csv` index with the final-round aggregates.
pub fn emit_sweep(points: &[SweepPoint], dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut rows = Vec::new();
    for (i, p) in points.iter().enumerate() {
        let label = format!("point_{i:03}");
        emit_outputs(&p.result, &dir.join(&label))?;
        for outcome in &p.result.summary.strategies {
            let last = p
                .result
                .summary
                .rounds
                .iter()
                .filter(|r| r.strategy == outcome.strategy)
                .next_back();
            rows.push(vec![
                label.clone(),
                format_float(p.lambda_c),
                format_float(p.lambda_s),
                format_float(p.alpha_lr),
                outcome.strategy.name().to_string(),
                cell(last.and_then(|r| r.mean_lower)),
                cell(last.and_then(|r| r.mean_upper)),
                cell(last.and_then(|r| r.mean_gap)),
                cell(outcome.final_coverage),
            ]);
        }
    }
    write_csv(&dir.join("sweep.csv"), &SWEEP_HEADER, &rows)
}

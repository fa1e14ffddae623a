//! Monte-Carlo batches and the dropout / corruption sweeps.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::par;
use crate::sim::DropoutSchedule;

use super::metrics::Moments;
use super::scenario::Scenario;
use super::trial::{run_trial, RunOptions, TrialResult};

/// Interval between dropout windows used by the sweep.
pub const DROPOUT_INTERVAL_S: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BatchReport {
    pub n_trials: usize,
    pub n_success: usize,
    /// `"k/n"`.
    pub success: String,
    pub success_rate: f64,
    pub final_pos_m: Moments,
    pub final_along_m: Moments,
    pub final_cross_m: Moments,
    pub final_ang_rad: Moments,
    pub sk_pos_mean_m: Moments,
    pub sk_pos_std_m: Moments,
    pub sk_ang_mean_rad: Moments,
    pub sk_ang_std_rad: Moments,
    /// Station-keeping samples of all trials taken together.
    pub sk_pos_pooled: Moments,
    pub sk_ang_pooled: Moments,
    pub trials: Vec<TrialResult>,
}

fn across(trials: &[TrialResult], f: impl Fn(&TrialResult) -> f64) -> Moments {
    let xs: Vec<f64> = trials.iter().map(f).filter(|x| x.is_finite()).collect();
    Moments::of(&xs)
}

impl BatchReport {
    pub fn from_trials(trials: Vec<TrialResult>) -> BatchReport {
        let n = trials.len();
        let k = trials.iter().filter(|t| t.success).count();
        let pos: Vec<Moments> = trials.iter().map(TrialResult::sk_pos).collect();
        let ang: Vec<Moments> = trials.iter().map(TrialResult::sk_ang).collect();
        BatchReport {
            n_trials: n,
            n_success: k,
            success: format!("{k}/{n}"),
            success_rate: if n == 0 { 0.0 } else { k as f64 / n as f64 },
            final_pos_m: across(&trials, |t| t.final_pos_m),
            final_along_m: across(&trials, |t| t.final_along_m),
            final_cross_m: across(&trials, |t| t.final_cross_m),
            final_ang_rad: across(&trials, |t| t.final_ang_rad),
            sk_pos_mean_m: across(&trials, |t| t.sk_pos_mean_m),
            sk_pos_std_m: across(&trials, |t| t.sk_pos_std_m),
            sk_ang_mean_rad: across(&trials, |t| t.sk_ang_mean_rad),
            sk_ang_std_rad: across(&trials, |t| t.sk_ang_std_rad),
            sk_pos_pooled: Moments::pool(&pos),
            sk_ang_pooled: Moments::pool(&ang),
            trials,
        }
    }
}

/// Trials with seeds `base_seed + i`, reported in seed order. `threads`
/// selects the worker count; `Some(1)` runs on the calling thread.
pub fn run_batch(s: &Scenario, n: usize, base_seed: u64, threads: Option<usize>) -> Result<BatchReport> {
    if n == 0 {
        return Err(Error::InvalidArgument("a batch needs at least one trial".into()));
    }
    s.validate()?;
    let results = par::map_indexed(n, threads, |i| {
        run_trial(&s.with_seed(base_seed.wrapping_add(i as u64)), &RunOptions::default()).map(|o| o.result)
    });
    Ok(BatchReport::from_trials(results.into_iter().collect::<Result<Vec<_>>>()?))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    /// Cell coordinates, e.g. `[("duration_s", 7.0)]`.
    pub params: Vec<(String, f64)>,
    pub prediction: bool,
    pub n_trials: usize,
    pub n_success: usize,
    pub success_rate: f64,
    pub sk_pos_mean: f64,
    pub sk_pos_std: f64,
    pub sk_ang_mean: f64,
    pub sk_ang_std: f64,
}

/// Run every `(cell, arm)` pair with `n_per_cell` seeded trials. Seeds are
/// shared across cells and arms so comparisons are paired.
fn sweep(
    cells: Vec<(Vec<(String, f64)>, Scenario)>,
    n_per_cell: usize,
    base_seed: u64,
    threads: Option<usize>,
) -> Result<Vec<SweepRow>> {
    if n_per_cell == 0 {
        return Err(Error::InvalidArgument("n_per_cell must be positive".into()));
    }
    let mut jobs = Vec::new();
    for (ci, (_, sc)) in cells.iter().enumerate() {
        sc.validate()?;
        for arm in [true, false] {
            for i in 0..n_per_cell {
                jobs.push((ci, arm, i));
            }
        }
    }
    let results = par::map_indexed(jobs.len(), threads, |j| {
        let (ci, arm, i) = jobs[j];
        let mut sc = cells[ci].1.with_seed(base_seed.wrapping_add(i as u64));
        sc.run.prediction_enabled = arm;
        run_trial(&sc, &RunOptions::default()).map(|o| o.result)
    });
    let results = results.into_iter().collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    for (chunk, &(ci, arm, _)) in results.chunks(n_per_cell).zip(jobs.iter().step_by(n_per_cell)) {
        let report = BatchReport::from_trials(chunk.to_vec());
        rows.push(SweepRow {
            params: cells[ci].0.clone(),
            prediction: arm,
            n_trials: report.n_trials,
            n_success: report.n_success,
            success_rate: report.success_rate,
            sk_pos_mean: report.sk_pos_pooled.mean,
            sk_pos_std: report.sk_pos_pooled.std,
            sk_ang_mean: report.sk_ang_pooled.mean,
            sk_ang_std: report.sk_ang_pooled.std,
        });
    }
    Ok(rows)
}

/// Dropout windows of each duration, every [`DROPOUT_INTERVAL_S`] of
/// visibility, with prediction on and off. Duration 0 disables dropout.
pub fn dropout_sweep(s: &Scenario, durations: &[f64], n_per_cell: usize, base_seed: u64, threads: Option<usize>) -> Result<Vec<SweepRow>> {
    if durations.is_empty() {
        return Err(Error::InvalidArgument("no dropout durations given".into()));
    }
    let cells = durations
        .iter()
        .map(|&d| {
            let mut sc = s.clone();
            sc.sensor.dropout = (d > 0.0).then_some(DropoutSchedule { window_s: d, interval_s: DROPOUT_INTERVAL_S });
            (vec![("duration_s".to_string(), d)], sc)
        })
        .collect();
    sweep(cells, n_per_cell, base_seed, threads)
}

/// Grid over sensor rate and corruption probability, both prediction arms.
pub fn corruption_sweep(
    s: &Scenario,
    rates_hz: &[f64],
    p_corrupts: &[f64],
    n_per_cell: usize,
    base_seed: u64,
    threads: Option<usize>,
) -> Result<Vec<SweepRow>> {
    if rates_hz.is_empty() || p_corrupts.is_empty() {
        return Err(Error::InvalidArgument("corruption grid needs rates and probabilities".into()));
    }
    let mut cells = Vec::new();
    for &r in rates_hz {
        for &p in p_corrupts {
            let mut sc = s.clone();
            sc.sensor.rate_hz = r;
            sc.sensor.p_corrupt = p;
            cells.push((vec![("rate_hz".to_string(), r), ("p_corrupt".to_string(), p)], sc));
        }
    }
    sweep(cells, n_per_cell, base_seed, threads)
}

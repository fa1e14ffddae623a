//! File formats: per-tick CSV, sweep CSV, and versioned result JSON.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};

use super::batch::{BatchReport, SweepRow};
use super::trial::{TickRecord, TrialResult};

pub const SCHEMA_VERSION: u32 = 1;

pub const TICK_COLUMNS: [&str; 29] = [
    "t_s",
    "truth_obs_x",
    "truth_obs_y",
    "truth_obs_z",
    "truth_obs_yaw",
    "truth_tgt_x",
    "truth_tgt_y",
    "truth_tgt_yaw",
    "meas_valid",
    "meas_corrupt",
    "est_x",
    "est_y",
    "est_theta",
    "cov_trace",
    "vhat_t",
    "omegahat_t",
    "t_star",
    "intercept_feasible",
    "goal_x",
    "goal_y",
    "goal_theta",
    "cmd_v_or_vx",
    "cmd_vy",
    "cmd_vz",
    "cmd_omega",
    "along_err",
    "cross_err",
    "ang_err",
    "tick_latency_ms",
];

/// Nine significant digits, formatted like C's `%.9g`.
pub fn fmt_g9(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return if v.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let sci = format!("{v:.8e}");
    let (mant, exp) = sci.split_once('e').expect("exponent marker");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..9).contains(&exp) {
        let decimals = (8 - exp) as usize;
        trim_zeros(format!("{v:.decimals$}"))
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim_zeros(mant.to_string()), exp.abs())
    }
}

fn trim_zeros(s: String) -> String {
    if !s.contains('.') {
        return s;
    }
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

fn flag(b: bool) -> String {
    if b { "1" } else { "0" }.to_string()
}

fn tick_fields(r: &TickRecord) -> [String; 29] {
    let g = fmt_g9;
    [
        g(r.t_s),
        g(r.truth_obs_x),
        g(r.truth_obs_y),
        g(r.truth_obs_z),
        g(r.truth_obs_yaw),
        g(r.truth_tgt_x),
        g(r.truth_tgt_y),
        g(r.truth_tgt_yaw),
        flag(r.meas_valid),
        flag(r.meas_corrupt),
        g(r.est_x),
        g(r.est_y),
        g(r.est_theta),
        g(r.cov_trace),
        g(r.vhat_t),
        g(r.omegahat_t),
        g(r.t_star),
        flag(r.intercept_feasible),
        g(r.goal_x),
        g(r.goal_y),
        g(r.goal_theta),
        g(r.cmd_v_or_vx),
        g(r.cmd_vy),
        g(r.cmd_vz),
        g(r.cmd_omega),
        g(r.along_err),
        g(r.cross_err),
        g(r.ang_err),
        g(r.tick_latency_ms),
    ]
}

fn csv_err(e: csv::Error) -> Error {
    Error::InvalidArgument(format!("csv: {e}"))
}

pub fn write_ticks_csv<W: Write>(w: W, ticks: &[TickRecord]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(TICK_COLUMNS).map_err(csv_err)?;
    for r in ticks {
        out.write_record(tick_fields(r)).map_err(csv_err)?;
    }
    out.flush().map_err(|e| Error::InvalidArgument(format!("csv: {e}")))
}

/// Sweep rows with one leading column per cell parameter.
pub fn write_sweep_csv<W: Write>(w: W, rows: &[SweepRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let params: Vec<String> = rows.first().map(|r| r.params.iter().map(|p| p.0.clone()).collect()).unwrap_or_default();
    let mut header = params.clone();
    header.extend(
        ["prediction", "n_trials", "success_rate", "sk_pos_mean", "sk_pos_std", "sk_ang_mean", "sk_ang_std"].map(String::from),
    );
    out.write_record(&header).map_err(csv_err)?;
    for r in rows {
        if r.params.len() != params.len() {
            return Err(Error::DimensionMismatch("sweep rows disagree on cell parameters".into()));
        }
        let mut rec: Vec<String> = r.params.iter().map(|p| fmt_g9(p.1)).collect();
        rec.push(flag(r.prediction));
        rec.push(r.n_trials.to_string());
        rec.extend([r.success_rate, r.sk_pos_mean, r.sk_pos_std, r.sk_ang_mean, r.sk_ang_std].map(fmt_g9));
        out.write_record(&rec).map_err(csv_err)?;
    }
    out.flush().map_err(|e| Error::InvalidArgument(format!("csv: {e}")))
}

#[derive(Serialize)]
struct Versioned<'a, T: Serialize> {
    schema_version: u32,
    #[serde(flatten)]
    body: &'a T,
}

fn versioned_json<T: Serialize>(body: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(&Versioned { schema_version: SCHEMA_VERSION, body })
        .map_err(|e| Error::InvalidArgument(format!("json: {e}")))?;
    s.push('\n');
    Ok(s)
}

/// `result.json` contents. Non-finite numbers serialize as `null`.
pub fn result_json(r: &TrialResult) -> Result<String> {
    versioned_json(r)
}

/// `batch.json` contents.
pub fn batch_json(b: &BatchReport) -> Result<String> {
    versioned_json(b)
}

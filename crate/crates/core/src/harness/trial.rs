//! One closed-loop trial.

use std::time::Instant;

use serde::Serialize;

use crate::error::Result;
use crate::sim::{step_observer, substream, Sensor, Stream, TargetMotion, WorldState};

use super::autonomy::{Autonomy, Observation, Stage};
use super::metrics::{error_decompose, quantile, Moments};
use super::scenario::Scenario;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RunOptions {
    /// Time the pipeline per tick. Off by default so outputs stay
    /// byte-identical across runs.
    pub measure_latency: bool,
    /// Keep the per-tick log.
    pub record_ticks: bool,
    /// Keep each tick's stage trace (testing aid).
    pub record_stages: bool,
}

/// One row of the per-tick log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TickRecord {
    pub t_s: f64,
    pub truth_obs_x: f64,
    pub truth_obs_y: f64,
    pub truth_obs_z: f64,
    pub truth_obs_yaw: f64,
    pub truth_tgt_x: f64,
    pub truth_tgt_y: f64,
    pub truth_tgt_yaw: f64,
    pub meas_valid: bool,
    pub meas_corrupt: bool,
    pub est_x: f64,
    pub est_y: f64,
    pub est_theta: f64,
    pub cov_trace: f64,
    pub vhat_t: f64,
    pub omegahat_t: f64,
    pub t_star: f64,
    pub intercept_feasible: bool,
    pub goal_x: f64,
    pub goal_y: f64,
    pub goal_theta: f64,
    pub cmd_v_or_vx: f64,
    pub cmd_vy: f64,
    pub cmd_vz: f64,
    pub cmd_omega: f64,
    pub along_err: f64,
    pub cross_err: f64,
    pub ang_err: f64,
    pub tick_latency_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LatencyStats {
    pub median: f64,
    pub p95: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialResult {
    pub seed: u64,
    pub success: bool,
    pub failure_reason: Option<String>,
    pub final_along_m: f64,
    pub final_cross_m: f64,
    pub final_ang_rad: f64,
    pub final_pos_m: f64,
    pub sk_pos_mean_m: f64,
    pub sk_pos_std_m: f64,
    pub sk_ang_mean_rad: f64,
    pub sk_ang_std_rad: f64,
    pub sk_samples: usize,
    /// False when the error never came within twice the tolerances; the
    /// station-keeping window then spans the whole motion phase.
    pub sk_attained: bool,
    pub target_lost: bool,
    pub target_halted_at: Option<f64>,
    /// Target at rest for the settling time before the end of the run.
    pub settled: bool,
    pub tick_latency_ms: LatencyStats,
    pub ticks: usize,
    pub measurements: usize,
    pub corrupted_measurements: usize,
    pub planner_errors: usize,
}

impl TrialResult {
    pub fn sk_pos(&self) -> Moments {
        Moments { n: self.sk_samples, mean: self.sk_pos_mean_m, std: self.sk_pos_std_m }
    }

    pub fn sk_ang(&self) -> Moments {
        Moments { n: self.sk_samples, mean: self.sk_ang_mean_rad, std: self.sk_ang_std_rad }
    }
}

#[derive(Debug, Clone)]
pub struct TrialOutcome {
    pub result: TrialResult,
    pub ticks: Vec<TickRecord>,
    pub stages: Vec<Vec<Stage>>,
}

pub fn run_trial(s: &Scenario, opts: &RunOptions) -> Result<TrialOutcome> {
    s.validate()?;
    let dt = s.tick_dt();
    let n_ticks = (s.run.duration * s.run.tick_hz).round() as usize;
    let seed = s.run.seed;
    let mut target_rng = substream(seed, Stream::Target);
    let mut sensor = Sensor::new(s.sensor, substream(seed, Stream::SensorNoise), substream(seed, Stream::SensorCorruption));
    let mut motion = TargetMotion::new(s.profile.clone(), s.target_start);
    let mut observer = s.observer_start;
    let mut autonomy = Autonomy::new(s.platform, s.limits, s.planner, dt, s.run.prediction_enabled, observer.z);
    let standoff = s.planner.standoff;

    let mut ticks = Vec::with_capacity(if opts.record_ticks { n_ticks + 1 } else { 0 });
    let mut stages = Vec::new();
    let mut latencies = Vec::new();
    let (mut sk_pos, mut sk_ang) = (Vec::new(), Vec::new());
    let mut sk_started = false;
    let (mut all_pos, mut all_ang) = (Vec::new(), Vec::new());
    let (mut lost_timer, mut lost) = (0.0, false);
    let (mut n_meas, mut n_corrupt, mut planner_errors) = (0, 0, 0);
    let mut failure = None;
    let mut last_err = (0.0, 0.0, 0.0);

    for k in 0..=n_ticks {
        let t = k as f64 * dt;
        let world = WorldState { observer, target: motion.pose(), t };
        let meas = sensor.poll(&world);
        let obs: Vec<Observation> = meas.iter().map(|m| Observation { pose: m.pose, t: m.t }).collect();
        n_meas += meas.len();
        n_corrupt += meas.iter().filter(|m| m.corrupted).count();

        let started = opts.measure_latency.then(Instant::now);
        let out = autonomy.tick(&obs);
        let latency = started.map(|s| s.elapsed().as_secs_f64() * 1e3).unwrap_or(0.0);
        if opts.measure_latency {
            latencies.push(latency);
        }
        if let Some(e) = &out.error {
            planner_errors += 1;
            failure.get_or_insert_with(|| format!("t = {t:.1} s: {e}"));
        }
        let cmd = s.limits.clamp(&out.cmd, s.platform);

        let err = error_decompose(&observer.planar(), &world.target, standoff);
        last_err = err;
        let pos_err = err.0.hypot(err.1);
        let moving = motion.halted_at().is_none_or(|h| t < h);
        if moving {
            all_pos.push(pos_err);
            all_ang.push(err.2.abs());
            if !sk_started && pos_err < 2.0 * s.success.pos_tol && err.2.abs() < 2.0 * s.success.ang_tol {
                sk_started = true;
            }
            if sk_started {
                sk_pos.push(pos_err);
                sk_ang.push(err.2.abs());
            }
        }

        let trace = out.estimate.map_or(f64::INFINITY, |e| e.position_trace());
        if obs.is_empty() && trace > s.success.lost_trace {
            lost_timer += dt;
            if lost_timer > s.success.lost_after_s {
                lost = true;
            }
        } else {
            lost_timer = 0.0;
        }

        if opts.record_ticks {
            let est = out.estimate;
            let nan = f64::NAN;
            let goal = out.goal;
            ticks.push(TickRecord {
                t_s: t,
                truth_obs_x: observer.x,
                truth_obs_y: observer.y,
                truth_obs_z: observer.z,
                truth_obs_yaw: observer.yaw,
                truth_tgt_x: world.target.x,
                truth_tgt_y: world.target.y,
                truth_tgt_yaw: world.target.theta,
                meas_valid: !obs.is_empty(),
                meas_corrupt: meas.iter().any(|m| m.corrupted),
                est_x: est.map_or(nan, |e| e.mean.x),
                est_y: est.map_or(nan, |e| e.mean.y),
                est_theta: est.map_or(nan, |e| e.mean.theta),
                cov_trace: est.map_or(nan, |e| e.cov.trace()),
                vhat_t: out.twist.v_t,
                omegahat_t: out.twist.omega_t,
                t_star: out.intercept.map_or(nan, |i| i.t_star),
                intercept_feasible: out.intercept.is_some_and(|i| i.feasible),
                goal_x: goal.map_or(nan, |g| g.x),
                goal_y: goal.map_or(nan, |g| g.y),
                goal_theta: goal.map_or(nan, |g| g.yaw),
                cmd_v_or_vx: cmd.vx,
                cmd_vy: cmd.vy,
                cmd_vz: cmd.vz,
                cmd_omega: cmd.omega,
                along_err: err.0,
                cross_err: err.1,
                ang_err: err.2,
                tick_latency_ms: latency,
            });
        }
        if opts.record_stages {
            stages.push(out.stages.clone());
        }
        if k == n_ticks {
            break;
        }
        observer = step_observer(&observer, s.platform, &s.limits, &cmd, dt);
        motion.step(dt, &mut target_rng);
    }

    let sk_attained = sk_started;
    let (pos_m, ang_m) = if sk_attained {
        (Moments::of(&sk_pos), Moments::of(&sk_ang))
    } else {
        (Moments::of(&all_pos), Moments::of(&all_ang))
    };
    let (along, cross, ang) = last_err;
    let final_pos = along.hypot(cross);
    let halted = motion.halted_at();
    let settled = halted.is_some_and(|h| s.run.duration - h >= s.success.settle_s - 1e-9);
    let within = final_pos <= s.success.pos_tol && ang.abs() <= s.success.ang_tol;
    if failure.is_none() {
        if lost {
            failure = Some("target lost".into());
        } else if !within {
            failure = Some(format!("final error {final_pos:.3} m / {:.3} rad outside tolerance", ang.abs()));
        }
    }
    let success = within && !lost && planner_errors == 0;
    let result = TrialResult {
        seed,
        success,
        failure_reason: if success { None } else { failure },
        final_along_m: along,
        final_cross_m: cross,
        final_ang_rad: ang,
        final_pos_m: final_pos,
        sk_pos_mean_m: pos_m.mean,
        sk_pos_std_m: pos_m.std,
        sk_ang_mean_rad: ang_m.mean,
        sk_ang_std_rad: ang_m.std,
        sk_samples: pos_m.n,
        sk_attained,
        target_lost: lost,
        target_halted_at: halted,
        settled,
        tick_latency_ms: LatencyStats { median: quantile(&latencies, 0.5).max(0.0), p95: quantile(&latencies, 0.95).max(0.0) },
        ticks: n_ticks + 1,
        measurements: n_meas,
        corrupted_measurements: n_corrupt,
        planner_errors,
    };
    Ok(TrialOutcome { result, ticks, stages })
}

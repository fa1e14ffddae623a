//! The onboard pipeline. Its only inputs are relative-pose observations and
//! its own commands; it never sees world coordinates.
//!
//! Per tick, in order: ingest observations, estimate the target twist, EKF
//! predict and update, fit the predictor, solve for the intercept time, plan,
//! and emit the first control.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::estimator::{
    ekf_predict, ekf_update, estimate_target_twist, innovation_nis, EkfState, HistoryEntry, StateHistory,
    TargetTwistEstimate,
};
use crate::geometry::{normalize_angle, PlatformClass, PlatformLimits, Pose2, Pose3, Twist};
use crate::intercept::{solve_intercept, InterceptSolution, ReachabilityModel};
use crate::planner::poly::{min_snap_segment, BoundaryState};
use crate::planner::scp::{solve_scp, PlanTrajectory};
use crate::predictor::{eval, eval_derivative, fit, PolyTraj, PoseHistory};

use super::scenario::{PlannerConfig, YawMode};

/// How far back a new observation looks for a partner to confirm a track.
pub const CONFIRM_WINDOW_S: f64 = 1.0;

/// A relative-pose observation as delivered to the pipeline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub pose: Pose2,
    pub t: f64,
}

/// Pipeline stages, recorded per tick in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Sense,
    TwistEstimate,
    EkfPredict,
    EkfUpdate,
    PredictorFit,
    InterceptSolve,
    Plan,
    Command,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TickOutput {
    pub cmd: Twist,
    pub estimate: Option<EkfState>,
    pub twist: TargetTwistEstimate,
    pub intercept: Option<InterceptSolution>,
    /// Goal in the body frame (`z` absolute for 3D platforms).
    pub goal: Option<Pose3>,
    pub accepted: usize,
    pub stages: Vec<Stage>,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct Autonomy {
    class: PlatformClass,
    limits: PlatformLimits,
    cfg: PlannerConfig,
    dt: f64,
    prediction: bool,
    ekf: Option<EkfState>,
    twist: TargetTwistEstimate,
    means: StateHistory,
    /// Filter means re-expressed in the odometry frame, for the predictor.
    window: PoseHistory,
    /// Dead-reckoned own pose from commanded twists.
    odom: Pose2,
    z: f64,
    last_cmd: Twist,
    warm: Option<PlanTrajectory>,
    /// Acceleration and jerk of the last polynomial segment one tick in,
    /// carried into the next segment's start so it can build up speed.
    seg_carry: ([f64; 3], [f64; 3]),
    t: f64,
    ticks: u64,
    last_accept: f64,
    /// Twist held while the estimator window refills after a re-anchor.
    held_twist: Option<TargetTwistEstimate>,
    /// Updates until this time are spliced in rather than appended.
    reanchor_until: f64,
    /// With gating on, recent unconfirmed observations (time, odometry-frame
    /// pose); a track starts once a new observation agrees with one of them.
    candidates: VecDeque<(f64, Pose2)>,
}

fn compose_traj(origin_inv: &Pose2, tr: &PolyTraj) -> PolyTraj {
    let (s, c) = origin_inv.theta.sin_cos();
    let mut out = *tr;
    for i in 0..4 {
        out.eta_x[i] = c * tr.eta_x[i] - s * tr.eta_y[i];
        out.eta_y[i] = s * tr.eta_x[i] + c * tr.eta_y[i];
    }
    out.eta_x[3] += origin_inv.x;
    out.eta_y[3] += origin_inv.y;
    out.eta_theta[3] += origin_inv.theta;
    out
}

fn unicycle_step(u: &Twist, dt: f64) -> Pose2 {
    Pose2::new(u.vx * dt, u.vy * dt, u.omega * dt)
}

impl Autonomy {
    pub fn new(class: PlatformClass, limits: PlatformLimits, cfg: PlannerConfig, dt: f64, prediction: bool, z0: f64) -> Self {
        Autonomy {
            class,
            limits,
            cfg,
            dt,
            prediction,
            ekf: None,
            twist: TargetTwistEstimate::NONE,
            means: StateHistory::new(cfg.twist_window + 1),
            window: PoseHistory::new(cfg.history_len, dt),
            odom: Pose2::IDENTITY,
            z: z0,
            last_cmd: Twist::ZERO,
            warm: None,
            seg_carry: ([0.0; 3], [0.0; 3]),
            t: 0.0,
            ticks: 0,
            last_accept: 0.0,
            held_twist: None,
            reanchor_until: f64::NEG_INFINITY,
            candidates: VecDeque::new(),
        }
    }

    pub fn estimate(&self) -> Option<&EkfState> {
        self.ekf.as_ref()
    }

    /// Run one tick on the observations that arrived since the last one.
    pub fn tick(&mut self, obs: &[Observation]) -> TickOutput {
        let mut stages = vec![Stage::Sense];
        // Own motion over the elapsed interval.
        let step = if self.ticks > 0 { Some(unicycle_step(&self.last_cmd, self.dt)) } else { None };
        if let Some(st) = step {
            self.t += self.dt;
            self.odom = self.odom.compose(&st);
            self.z = (self.z + self.last_cmd.vz * self.dt).max(0.0);
        }
        self.ticks += 1;

        // The twist belongs to the filter, so both prediction arms estimate it.
        let fresh = estimate_target_twist(&self.means, self.cfg.twist_window, self.dt);
        self.twist = match self.held_twist {
            Some(h) if !fresh.valid => h,
            _ => {
                self.held_twist = None;
                fresh
            }
        };
        stages.push(Stage::TwistEstimate);

        let mut out = TickOutput {
            cmd: Twist::ZERO,
            estimate: None,
            twist: self.twist,
            intercept: None,
            goal: None,
            accepted: 0,
            stages: Vec::new(),
            error: None,
        };
        match self.estimate_step(obs, step.is_some(), &mut stages) {
            Ok(n) => out.accepted = n,
            Err(e) => {
                out.error = Some(format!("estimator: {e}"));
                self.ekf = None;
            }
        }
        let Some(ekf) = self.ekf else {
            // Nothing to track yet: hold still.
            self.last_cmd = Twist::ZERO;
            self.seg_carry = ([0.0; 3], [0.0; 3]);
            stages.push(Stage::Command);
            out.stages = stages;
            return out;
        };
        out.estimate = Some(ekf);
        let _ = self.means.push(HistoryEntry { mean: ekf.mean, u_obs: self.last_cmd, t: self.t });
        self.window.push(self.odom.compose(&ekf.mean));

        match self.plan_step(&ekf, &mut stages, &mut out) {
            Ok(cmd) => out.cmd = cmd,
            Err(e) => {
                out.error = Some(format!("planner: {e}"));
                out.cmd = Twist::ZERO;
                self.warm = None;
                self.seg_carry = ([0.0; 3], [0.0; 3]);
            }
        }
        self.last_cmd = out.cmd;
        stages.push(Stage::Command);
        out.stages = stages;
        out
    }

    fn estimate_step(&mut self, obs: &[Observation], propagate: bool, stages: &mut Vec<Stage>) -> Result<usize> {
        let noise = self.cfg.noise;
        if propagate {
            if let Some(ekf) = self.ekf {
                self.ekf = Some(ekf_predict(&ekf, &self.last_cmd, &self.twist, self.dt, &noise)?);
                stages.push(Stage::EkfPredict);
            }
        }
        let mut accepted = 0;
        for o in obs {
            match self.ekf {
                None => {
                    if !self.confirm(&o.pose)? {
                        continue;
                    }
                    self.ekf = Some(EkfState::from_measurement(o.pose, &noise));
                    self.last_accept = self.t;
                    accepted += 1;
                }
                Some(ekf) => {
                    let gated = match self.cfg.innovation_gate {
                        Some(g) => innovation_nis(&ekf, &o.pose, &noise)? > g,
                        None => false,
                    };
                    if !gated {
                        // After a long coast the covariance understates the
                        // drift, so restart on the measurement and keep
                        // splicing while the filter settles.
                        let post = if self.t - self.last_accept >= self.cfg.reanchor_gap_s {
                            self.reanchor_until = self.t + self.cfg.reanchor_gap_s;
                            EkfState::from_measurement(o.pose, &noise)
                        } else {
                            ekf_update(&ekf, &o.pose, &noise)?
                        };
                        if self.t <= self.reanchor_until {
                            self.reanchor(&ekf.mean, &post.mean);
                        }
                        self.ekf = Some(post);
                        self.last_accept = self.t;
                        accepted += 1;
                    } else if self.t - self.last_accept > self.cfg.gate_reset_s && self.confirm(&o.pose)? {
                        // Everything rejected for too long: the filter has
                        // drifted, so restart it on the newest observation.
                        self.ekf = Some(EkfState::from_measurement(o.pose, &noise));
                        self.means.clear();
                        self.window.clear();
                        self.last_accept = self.t;
                        accepted += 1;
                    }
                }
            }
        }
        if !obs.is_empty() {
            stages.push(Stage::EkfUpdate);
        }
        Ok(accepted)
    }

    /// Track confirmation. Without a gate every observation may start a
    /// track; with one, a start needs two observations within
    /// [`CONFIRM_WINDOW_S`] that pass the gate against each other, so a lone
    /// outlier cannot seed the filter.
    fn confirm(&mut self, pose: &Pose2) -> Result<bool> {
        let Some(g) = self.cfg.innovation_gate else {
            return Ok(true);
        };
        while self.candidates.front().is_some_and(|(t, _)| self.t - t > CONFIRM_WINDOW_S) {
            self.candidates.pop_front();
        }
        let to_body = self.odom.inverse();
        for (_, c) in &self.candidates {
            let seed = EkfState::from_measurement(to_body.compose(c), &self.cfg.noise);
            if innovation_nis(&seed, pose, &self.cfg.noise)? <= g {
                self.candidates.clear();
                return Ok(true);
            }
        }
        self.candidates.push_back((self.t, self.odom.compose(pose)));
        Ok(false)
    }

    /// Move the coasted history onto the corrected estimate so neither the
    /// predictor nor the twist estimator sees the correction as motion.
    fn reanchor(&mut self, prior: &Pose2, post: &Pose2) {
        let (a, b) = (self.odom.compose(prior), self.odom.compose(post));
        self.window.shift(b.x - a.x, b.y - a.y, normalize_angle(b.theta - a.theta));
        if self.twist.valid {
            self.held_twist = Some(self.twist);
        }
        self.means.clear();
    }

    /// Predicted target trajectory in the current body frame.
    fn predict(&self, ekf: &EkfState) -> Result<PolyTraj> {
        let t_max = self.cfg.intercept.t_max;
        if !self.window.is_full() {
            return Ok(PolyTraj::constant(ekf.mean, t_max));
        }
        let odom_traj = fit(&self.window, t_max)?;
        Ok(compose_traj(&self.odom.inverse(), &odom_traj))
    }

    fn plan_step(&mut self, ekf: &EkfState, stages: &mut Vec<Stage>, out: &mut TickOutput) -> Result<Twist> {
        let standoff = Pose2::new(-self.cfg.standoff, 0.0, 0.0);
        let (target_at, target_vel, t_star) = if self.prediction {
            let traj = self.predict(ekf)?;
            stages.push(Stage::PredictorFit);
            let model = ReachabilityModel { class: self.class, limits: self.limits };
            let sol = solve_intercept(&traj, &model, &self.cfg.intercept)?;
            stages.push(Stage::InterceptSolve);
            out.intercept = Some(sol);
            let p = eval(&traj, sol.t_star)?;
            let v = eval_derivative(&traj, sol.t_star)?;
            (Pose2::new(sol.point.0, sol.point.1, p.theta), v, sol.t_star)
        } else {
            // Ablation: the current estimate is a static goal.
            out.intercept = Some(InterceptSolution { t_star: 0.0, point: (ekf.mean.x, ekf.mean.y), feasible: true });
            (ekf.mean, Twist::ZERO, 0.0)
        };
        let goal2 = target_at.compose(&standoff);
        stages.push(Stage::Plan);
        let cmd = match self.class {
            PlatformClass::CoupledGround => {
                out.goal = Some(Pose3 { x: goal2.x, y: goal2.y, z: 0.0, yaw: goal2.theta });
                self.plan_coupled(&goal2)?
            }
            PlatformClass::Holonomic2D | PlatformClass::Holonomic3D => {
                let (cmd, goal) = self.plan_holonomic(&goal2, &target_vel, t_star)?;
                out.goal = Some(goal);
                cmd
            }
        };
        Ok(self.limits.clamp(&cmd, self.class))
    }

    fn plan_coupled(&mut self, goal: &Pose2) -> Result<Twist> {
        let scp = &self.cfg.scp;
        // Shifting by one stage only lines up when stages match ticks.
        let warm = self.warm.take().filter(|_| (scp.dt - self.dt).abs() < 1e-12);
        let warm = warm.map(|w| w.shifted(&unicycle_step(&self.last_cmd, self.dt)));
        let plan = match warm.as_ref().map(|w| solve_scp(goal, &self.limits, scp, Some(w))) {
            Some(Ok(p)) => p,
            _ => solve_scp(goal, &self.limits, scp, None)?,
        };
        let (v, w) = plan.controls[0];
        self.warm = Some(plan);
        Ok(Twist::unicycle(v, w))
    }

    fn plan_holonomic(&mut self, goal: &Pose2, target_vel: &Twist, t_star: f64) -> Result<(Twist, Pose3)> {
        let cfg = &self.cfg;
        let dt = self.dt;
        let three_d = self.class == PlatformClass::Holonomic3D;
        let mut gz = if three_d { cfg.altitude } else { 0.0 };
        let landing = three_d
            && cfg.land
            && self.prediction_speed() < cfg.land_speed
            && goal.norm() < cfg.land_radius;
        if landing {
            gz = 0.0;
        }
        let yaw = match cfg.yaw_mode {
            YawMode::TargetHeading => goal.theta,
            YawMode::VelocityDirection if target_vel.vx.hypot(target_vel.vy) > 0.05 => target_vel.vy.atan2(target_vel.vx),
            YawMode::VelocityDirection => goal.theta,
        };
        // Last tick's quantities, rotated into the current body frame.
        let (s, c) = (-self.last_cmd.omega * dt).sin_cos();
        let rot = |v: [f64; 3]| [c * v[0] - s * v[1], s * v[0] + c * v[1], v[2]];
        let (acc, jerk) = self.seg_carry;
        let start = BoundaryState {
            pos: [0.0, 0.0, self.z],
            vel: rot([self.last_cmd.vx, self.last_cmd.vy, self.last_cmd.vz]),
            acc: rot(acc),
            jerk: rot(jerk),
            yaw: 0.0,
            yaw_rate: self.last_cmd.omega,
        };
        let end = BoundaryState {
            pos: [goal.x, goal.y, gz],
            vel: [target_vel.vx, target_vel.vy, 0.0],
            acc: [0.0; 3],
            jerk: [0.0; 3],
            yaw: normalize_angle(yaw),
            yaw_rate: if cfg.yaw_mode == YawMode::TargetHeading { target_vel.omega } else { 0.0 },
        };
        let duration = t_star.max(cfg.min_segment_s);
        let dims = if three_d { 3 } else { 2 };
        let seg = min_snap_segment(&start, &end, duration, dims)?;
        if dt > duration {
            return Err(Error::InvalidArgument("tick longer than segment".into()));
        }
        let d = |a: usize| if a < seg.dims() { seg.axis_derivative(a, dt, 0) } else { self.z };
        let cmd = Twist {
            vx: d(0) / dt,
            vy: d(1) / dt,
            vz: if three_d { (d(2) - self.z) / dt } else { 0.0 },
            omega: seg.yaw_derivative(dt, 0) / dt,
        };
        let mut carry = ([0.0; 3], [0.0; 3]);
        for a in 0..dims {
            carry.0[a] = seg.axis_derivative(a, dt, 2);
            carry.1[a] = seg.axis_derivative(a, dt, 3);
        }
        self.seg_carry = carry;
        Ok((cmd, Pose3 { x: goal.x, y: goal.y, z: gz, yaw: normalize_angle(yaw) }))
    }

    fn prediction_speed(&self) -> f64 {
        if self.twist.valid {
            self.twist.v_t.abs()
        } else {
            0.0
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trajectory_reframing_matches_pointwise() {
        let tr = PolyTraj { eta_x: [0.1, -0.2, 0.5, 1.0], eta_y: [0.0, 0.3, -0.1, 2.0], eta_theta: [0.0, 0.0, 0.2, 0.4], t_max: 3.0, t0_offset: 0.9 };
        let origin = Pose2::new(0.7, -1.2, 2.5);
        let moved = compose_traj(&origin.inverse(), &tr);
        for t in [0.0, 1.0, 2.5] {
            let a = origin.relative(&eval(&tr, t).unwrap());
            let b = eval(&moved, t).unwrap();
            assert!((a.x - b.x).abs() < 1e-12 && (a.y - b.y).abs() < 1e-12);
            assert!(normalize_angle(a.theta - b.theta).abs() < 1e-12);
        }
    }

    #[test]
    fn holds_still_until_first_observation() {
        let mut a = Autonomy::new(PlatformClass::CoupledGround, PlatformLimits::default(), PlannerConfig::default(), 0.1, true, 0.0);
        let out = a.tick(&[]);
        assert_eq!(out.cmd, Twist::ZERO);
        assert!(out.estimate.is_none());
        let out = a.tick(&[Observation { pose: Pose2::new(3.0, 0.0, 0.0), t: 0.1 }]);
        assert!(out.estimate.is_some());
        assert!(out.cmd.vx > 0.0);
    }

    #[test]
    fn stage_order() {
        let mut a = Autonomy::new(PlatformClass::Holonomic2D, PlatformLimits::default(), PlannerConfig::default(), 0.1, true, 0.0);
        a.tick(&[Observation { pose: Pose2::new(3.0, 0.0, 0.0), t: 0.0 }]);
        let out = a.tick(&[Observation { pose: Pose2::new(2.9, 0.0, 0.0), t: 0.1 }]);
        use Stage::*;
        assert_eq!(out.stages, vec![Sense, TwistEstimate, EkfPredict, EkfUpdate, PredictorFit, InterceptSolve, Plan, Command]);
    }
}

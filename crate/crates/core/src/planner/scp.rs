//! Receding-horizon sequential convex program for unicycle-like platforms.
//!
//! Decision vector, stage-major: `[x₀ y₀ θ₀ v₀ ω₀, x₁ y₁ θ₁ v₁ ω₁, …, x_N y_N θ_N]`,
//! `n = 5N + 3`. Each SCP iteration linearizes the Euler-discretized unicycle
//! about the previous iterate and solves one QP.
//!
//! Plan headings are continuous (not wrapped) so that a plan can sweep
//! through ±π without a jump in the decision variables.

use std::f64::consts::FRAC_PI_3;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{normalize_angle, PlatformLimits, Pose2};
use crate::qp::{self, QProblem, QpSettings, QpStatus};

/// Linearization speeds at or below this count as stopped.
pub const V_STOPPED: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageDeviationMode {
    /// Goal deviation penalized at every stage state.
    Stage,
    /// Stage weights folded into the terminal weights (`N·w_ip`, `N·w_iθ`).
    Terminal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScpConfig {
    pub n_steps: usize,
    pub dt: f64,
    pub w_v: f64,
    pub w_omega: f64,
    pub w_ip: f64,
    pub w_itheta: f64,
    pub w_p: f64,
    pub w_theta: f64,
    pub eps_converge: f64,
    pub max_scp_iters: usize,
    pub trust_radius: Option<f64>,
    /// Weight of the dynamics residual in the step-acceptance merit.
    pub merit_penalty: f64,
    /// Add the dynamics curvature, weighted by the previous QP's
    /// multipliers, to each QP Hessian after the first.
    pub second_order: bool,
    pub w_rev: f64,
    pub k_bias: usize,
    /// Goals closer than this never trigger the reverse bias, so jitter
    /// around the origin while station-keeping does not back the vehicle up.
    pub bias_deadband: f64,
    pub stage_deviation_mode: StageDeviationMode,
    pub qp_tol: f64,
    pub qp_max_iter: usize,
}

impl Default for ScpConfig {
    fn default() -> Self {
        ScpConfig {
            n_steps: 20,
            dt: 0.1,
            w_v: 0.1,
            w_omega: 0.1,
            w_ip: 0.5,
            w_itheta: 0.1,
            w_p: 50.0,
            w_theta: 10.0,
            eps_converge: 1e-3,
            max_scp_iters: 15,
            trust_radius: Some(2.0),
            merit_penalty: 100.0,
            second_order: true,
            w_rev: 1.0,
            bias_deadband: 0.3,
            k_bias: 3,
            stage_deviation_mode: StageDeviationMode::Stage,
            qp_tol: 1e-8,
            qp_max_iter: 5000,
        }
    }
}

impl ScpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_steps < 2 {
            return Err(Error::InvalidArgument(format!("n_steps must be at least 2, got {}", self.n_steps)));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidArgument(format!("dt must be positive, got {}", self.dt)));
        }
        let weights = [self.w_v, self.w_omega, self.w_ip, self.w_itheta, self.w_p, self.w_theta, self.w_rev, self.merit_penalty, self.bias_deadband];
        if weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(Error::InvalidArgument("SCP weights must be finite and non-negative".into()));
        }
        if !(self.eps_converge > 0.0) {
            return Err(Error::InvalidArgument("eps_converge must be positive".into()));
        }
        if self.max_scp_iters == 0 {
            return Err(Error::InvalidArgument("max_scp_iters must be at least 1".into()));
        }
        if let Some(r) = self.trust_radius {
            if !(r > 0.0) {
                return Err(Error::InvalidArgument("trust_radius must be positive".into()));
            }
        }
        Ok(())
    }

    pub fn n_vars(&self) -> usize {
        5 * self.n_steps + 3
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlanTrajectory {
    /// `N + 1` states; headings continuous.
    pub states: Vec<Pose2>,
    /// `N` controls `(v, ω)`.
    pub controls: Vec<(f64, f64)>,
    pub objective: f64,
    pub scp_iters: usize,
    pub converged: bool,
    /// Cost after each SCP iteration.
    pub objective_trace: Vec<f64>,
}

impl PlanTrajectory {
    pub fn n_steps(&self) -> usize {
        self.controls.len()
    }

    pub fn from_z(z: &DVector<f64>, n: usize) -> Self {
        let states = (0..=n).map(|k| Pose2 { x: z[5 * k], y: z[5 * k + 1], theta: z[5 * k + 2] }).collect();
        let controls = (0..n).map(|k| (z[5 * k + 3], z[5 * k + 4])).collect();
        PlanTrajectory { states, controls, objective: 0.0, scp_iters: 0, converged: false, objective_trace: Vec::new() }
    }

    pub fn to_z(&self) -> DVector<f64> {
        let n = self.n_steps();
        let mut z = DVector::zeros(5 * n + 3);
        for (k, s) in self.states.iter().enumerate() {
            z[5 * k] = s.x;
            z[5 * k + 1] = s.y;
            z[5 * k + 2] = s.theta;
        }
        for (k, &(v, w)) in self.controls.iter().enumerate() {
            z[5 * k + 3] = v;
            z[5 * k + 4] = w;
        }
        z
    }

    /// Receding-horizon shift: drop the first stage, duplicate the last, and
    /// re-express the plan in a new body frame located at `origin` (given in
    /// the current plan's frame).
    pub fn shifted(&self, origin: &Pose2) -> PlanTrajectory {
        let (s, c) = origin.theta.sin_cos();
        let reframe = |p: &Pose2| {
            let (dx, dy) = (p.x - origin.x, p.y - origin.y);
            Pose2 { x: c * dx + s * dy, y: -s * dx + c * dy, theta: p.theta - origin.theta }
        };
        let mut states: Vec<Pose2> = self.states.iter().skip(1).map(reframe).collect();
        states.push(*states.last().expect("plan has states"));
        states[0] = Pose2::IDENTITY;
        let mut controls: Vec<(f64, f64)> = self.controls.iter().skip(1).copied().collect();
        controls.push(*self.controls.last().expect("plan has controls"));
        PlanTrajectory { states, controls, objective: 0.0, scp_iters: 0, converged: false, objective_trace: Vec::new() }
    }

    /// Nonlinear forward integration of the controls from the origin.
    pub fn rollout(&self, dt: f64) -> Vec<Pose2> {
        let mut p = Pose2::IDENTITY;
        let mut out = vec![p];
        for &(v, w) in &self.controls {
            p = Pose2 { x: p.x + v * p.theta.cos() * dt, y: p.y + v * p.theta.sin() * dt, theta: p.theta + w * dt };
            out.push(p);
        }
        out
    }
}

/// True when the goal is behind the vehicle, or too close and too far off
/// the nose to reach with forward arcs.
pub fn lateral_correction_active(goal: &Pose2, r_min: f64) -> bool {
    if goal.x < 0.0 {
        return true;
    }
    let d = goal.norm();
    if d < r_min && d > 0.0 && goal.y.atan2(goal.x).abs() > FRAC_PI_3 {
        return true;
    }
    // Inside either minimum-radius turning circle.
    goal.x.hypot(goal.y - r_min) < r_min || goal.x.hypot(goal.y + r_min) < r_min
}

struct Weights {
    stage_p: f64,
    stage_th: f64,
    term_p: f64,
    term_th: f64,
}

fn weights(cfg: &ScpConfig) -> Weights {
    match cfg.stage_deviation_mode {
        StageDeviationMode::Stage => {
            Weights { stage_p: cfg.w_ip, stage_th: cfg.w_itheta, term_p: cfg.w_p, term_th: cfg.w_theta }
        }
        StageDeviationMode::Terminal => {
            let n = cfg.n_steps as f64;
            Weights { stage_p: 0.0, stage_th: 0.0, term_p: cfg.w_p + n * cfg.w_ip, term_th: cfg.w_theta + n * cfg.w_itheta }
        }
    }
}

/// Cost of a plan against `goal`, excluding the reverse bias.
pub fn plan_cost(plan: &PlanTrajectory, goal: &Pose2, cfg: &ScpConfig) -> f64 {
    let w = weights(cfg);
    let n = plan.n_steps();
    let dev = |s: &Pose2| ((s.x - goal.x).powi(2) + (s.y - goal.y).powi(2), (s.theta - goal.theta).powi(2));
    let mut cost = 0.0;
    for k in 0..n {
        let (v, om) = plan.controls[k];
        let (dp, dth) = dev(&plan.states[k]);
        cost += cfg.w_v * v * v + cfg.w_omega * om * om + w.stage_p * dp + w.stage_th * dth;
    }
    let (dp, dth) = dev(&plan.states[n]);
    cost + w.term_p * dp + w.term_th * dth
}

/// QP for one SCP iteration about `lin`. `reverse` adds the lateral-correction
/// bias on the first `k_bias` speed variables.
pub fn build_qp(goal: &Pose2, limits: &PlatformLimits, cfg: &ScpConfig, lin: &PlanTrajectory, reverse: bool) -> Result<QProblem> {
    let n = cfg.n_steps;
    if lin.controls.len() != n || lin.states.len() != n + 1 {
        return Err(Error::DimensionMismatch(format!(
            "linearization has {} states and {} controls, expected {} and {n}",
            lin.states.len(),
            lin.controls.len(),
            n + 1
        )));
    }
    let nv = cfg.n_vars();
    let w = weights(cfg);
    let dt = cfg.dt;

    let mut hd = DVector::zeros(nv);
    let mut g = DVector::zeros(nv);
    let set_state = |k: usize, wp: f64, wth: f64, hd: &mut DVector<f64>, g: &mut DVector<f64>| {
        hd[5 * k] = 2.0 * wp;
        hd[5 * k + 1] = 2.0 * wp;
        hd[5 * k + 2] = 2.0 * wth;
        g[5 * k] = -2.0 * wp * goal.x;
        g[5 * k + 1] = -2.0 * wp * goal.y;
        g[5 * k + 2] = -2.0 * wth * goal.theta;
    };
    for k in 0..n {
        set_state(k, w.stage_p, w.stage_th, &mut hd, &mut g);
        hd[5 * k + 3] = 2.0 * cfg.w_v;
        hd[5 * k + 4] = 2.0 * cfg.w_omega;
    }
    set_state(n, w.term_p, w.term_th, &mut hd, &mut g);
    if reverse {
        for k in 0..cfg.k_bias.min(n) {
            g[5 * k + 3] += cfg.w_rev;
        }
    }
    let z_lin = lin.to_z();

    // x₀ = 0 and 3N dynamics rows.
    let mut a_eq = DMatrix::zeros(3 + 3 * n, nv);
    let mut b_eq = DVector::zeros(3 + 3 * n);
    for i in 0..3 {
        a_eq[(i, i)] = 1.0;
    }
    for k in 0..n {
        let (th, v) = (lin.states[k].theta, lin.controls[k].0);
        let (s, c) = th.sin_cos();
        let (r, xk, xn) = (3 + 3 * k, 5 * k, 5 * (k + 1));
        a_eq[(r, xn)] = 1.0;
        a_eq[(r, xk)] = -1.0;
        a_eq[(r, xk + 3)] = -c * dt;
        a_eq[(r, xk + 2)] = v * s * dt;
        b_eq[r] = v * s * dt * th;

        a_eq[(r + 1, xn + 1)] = 1.0;
        a_eq[(r + 1, xk + 1)] = -1.0;
        a_eq[(r + 1, xk + 3)] = -s * dt;
        a_eq[(r + 1, xk + 2)] = -v * c * dt;
        b_eq[r + 1] = -v * c * dt * th;

        a_eq[(r + 2, xn + 2)] = 1.0;
        a_eq[(r + 2, xk + 2)] = -1.0;
        a_eq[(r + 2, xk + 4)] = -dt;
    }

    // One box row per variable: control limits intersected with the trust
    // region. Then two turning-radius rows per stage, |ω_k| ≤ σ_k·v_k/R_min
    // with σ_k the sign of the linearization speed; a stopped stage cannot turn.
    let mut a_in = DMatrix::zeros(nv + 2 * n, nv);
    for i in 0..nv {
        a_in[(i, i)] = 1.0;
    }
    let mut lb = DVector::from_element(nv + 2 * n, f64::NEG_INFINITY);
    let mut ub = DVector::from_element(nv + 2 * n, f64::INFINITY);
    for k in 0..n {
        let (iv, iw) = (5 * k + 3, 5 * k + 4);
        let v_lin = lin.controls[k].0;
        lb[iv] = -limits.v_max;
        ub[iv] = limits.v_max;
        if v_lin.abs() <= V_STOPPED {
            lb[iw] = 0.0;
            ub[iw] = 0.0;
            continue;
        }
        lb[iw] = -limits.omega_max;
        ub[iw] = limits.omega_max;
        let sv = v_lin.signum() / limits.r_min;
        let (r1, r2) = (nv + 2 * k, nv + 2 * k + 1);
        a_in[(r1, iw)] = 1.0;
        a_in[(r1, iv)] = -sv;
        ub[r1] = 0.0;
        a_in[(r2, iw)] = 1.0;
        a_in[(r2, iv)] = sv;
        lb[r2] = 0.0;
    }
    if let Some(tr) = cfg.trust_radius {
        // Positions enter the dynamics linearly and are left unboxed, so a
        // distant goal cannot make the first QP infeasible.
        for i in (0..nv).filter(|i| i % 5 >= 2) {
            let (l, u) = (lb[i].max(z_lin[i] - tr), ub[i].min(z_lin[i] + tr));
            if l <= u {
                lb[i] = l;
                ub[i] = u;
            } else {
                // Linearization outside the hard limits: keep the nearest hard limit.
                let edge = z_lin[i].clamp(lb[i], ub[i]);
                lb[i] = edge;
                ub[i] = edge;
            }
        }
    }
    Ok(QProblem { h: DMatrix::from_diagonal(&hd), g, a_eq, b_eq, a_in, lb, ub })
}

/// Straight-line cold start towards `goal`.
pub fn cold_start(goal: &Pose2, limits: &PlatformLimits, cfg: &ScpConfig) -> PlanTrajectory {
    let n = cfg.n_steps;
    let dist = goal.norm();
    let v0 = if dist == 0.0 && goal.theta == 0.0 {
        0.0
    } else {
        let speed = (dist / (n as f64 * cfg.dt)).clamp(0.1 * limits.v_max, limits.v_max);
        if goal.x < 0.0 {
            -speed
        } else {
            speed
        }
    };
    let om0 = goal.theta / (n as f64 * cfg.dt);
    let states = (0..=n)
        .map(|k| {
            let f = k as f64 / n as f64;
            Pose2 { x: f * goal.x, y: f * goal.y, theta: f * goal.theta }
        })
        .collect();
    PlanTrajectory {
        states,
        controls: vec![(v0, om0); n],
        objective: 0.0,
        scp_iters: 0,
        converged: false,
        objective_trace: Vec::new(),
    }
}

fn reverse_bias(plan: &PlanTrajectory, cfg: &ScpConfig, reverse: bool) -> f64 {
    if !reverse {
        return 0.0;
    }
    cfg.w_rev * plan.controls.iter().take(cfg.k_bias).map(|c| c.0).sum::<f64>()
}

/// Add the dynamics' second-order terms, weighted by the equality
/// multipliers, to the Hessian. Each stage contributes a 2×2 block on
/// `(θ_k, v_k)`, clipped to be positive semidefinite.
pub fn add_curvature(p: &mut QProblem, lin: &PlanTrajectory, lambda_eq: &DVector<f64>, dt: f64) {
    for (k, &(v, _)) in lin.controls.iter().enumerate() {
        let (s, c) = lin.states[k].theta.sin_cos();
        let (th0, v0) = (lin.states[k].theta, v);
        let old = (p.h[(5 * k + 2, 5 * k + 2)], p.h[(5 * k + 2, 5 * k + 3)], p.h[(5 * k + 3, 5 * k + 3)]);
        let (lx, ly) = (lambda_eq[3 + 3 * k], lambda_eq[4 + 3 * k]);
        let (it, iv) = (5 * k + 2, 5 * k + 3);
        let a = p.h[(it, it)] + dt * v * (lx * c + ly * s);
        let b = p.h[(it, iv)] + dt * (lx * s - ly * c);
        let d = p.h[(iv, iv)];
        let floor = 1e-6;
        let (m, r) = (0.5 * (a + d), (0.25 * (a - d) * (a - d) + b * b).sqrt());
        let (e1, e2) = (m + r, m - r);
        if e2 >= floor {
            p.h[(it, it)] = a;
            p.h[(it, iv)] = b;
            p.h[(iv, it)] = b;
        } else {
        // Eigenvector of e1 is (b, e1 − a) or, when b = 0, an axis.
        let (ux, uy) = if b.abs() > 1e-300 {
            let n = b.hypot(e1 - a);
            (b / n, (e1 - a) / n)
        } else if a >= d {
            (1.0, 0.0)
        } else {
            (0.0, 1.0)
        };
        let (f1, f2) = (e1.max(floor), e2.max(floor));
        p.h[(it, it)] = f1 * ux * ux + f2 * uy * uy;
        p.h[(iv, iv)] = f1 * uy * uy + f2 * ux * ux;
        let off = (f1 - f2) * ux * uy;
        p.h[(it, iv)] = off;
        p.h[(iv, it)] = off;
        }
        // Keep the model's gradient at the linearization point unchanged.
        let (da, db, dd) = (p.h[(it, it)] - old.0, p.h[(it, iv)] - old.1, p.h[(iv, iv)] - old.2);
        p.g[it] -= da * th0 + db * v0;
        p.g[iv] -= db * th0 + dd * v0;
    }
}

/// L1 norm of the nonlinear Euler dynamics residual along `plan`.
pub fn dynamics_defect(plan: &PlanTrajectory, dt: f64) -> f64 {
    plan.states
        .windows(2)
        .zip(&plan.controls)
        .map(|(w, &(v, om))| {
            let (a, b) = (w[0], w[1]);
            (b.x - a.x - v * a.theta.cos() * dt).abs()
                + (b.y - a.y - v * a.theta.sin() * dt).abs()
                + (b.theta - a.theta - om * dt).abs()
        })
        .sum()
}

/// Iterate linearize → QP until the iterate change drops below `ε` or the
/// iteration cap is hit.
///
/// With a trust region, a QP step is kept only if it reduces the merit
/// `cost + μ·defect` by at least a tenth of the reduction the QP model
/// predicted; otherwise the box shrinks and the QP is re-solved about the
/// same linearization. Without one, every step is taken.
pub fn solve_scp(goal: &Pose2, limits: &PlatformLimits, cfg: &ScpConfig, warm: Option<&PlanTrajectory>) -> Result<PlanTrajectory> {
    cfg.validate()?;
    limits.validate()?;
    if !goal.is_finite() {
        return Err(Error::NonFinite("SCP goal"));
    }
    let n = cfg.n_steps;
    let mut lin = match warm {
        Some(w) if w.n_steps() == n && w.states.len() == n + 1 => w.clone(),
        Some(_) => return Err(Error::DimensionMismatch("warm start horizon does not match n_steps".into())),
        None => cold_start(goal, limits, cfg),
    };
    // Goal heading on the branch nearest the warm plan's terminal heading.
    let th_ref = if warm.is_some() { lin.states[n].theta } else { 0.0 };
    let goal = Pose2 { x: goal.x, y: goal.y, theta: th_ref + normalize_angle(goal.theta - th_ref) };
    let reverse = cfg.w_rev > 0.0 && goal.norm() > cfg.bias_deadband && lateral_correction_active(&goal, limits.r_min);
    let settings = QpSettings { tol: cfg.qp_tol, max_iter: cfg.qp_max_iter };
    let merit = |p: &PlanTrajectory| plan_cost(p, &goal, cfg) + reverse_bias(p, cfg, reverse) + cfg.merit_penalty * dynamics_defect(p, cfg.dt);

    let mut radius = cfg.trust_radius;
    let mut z_lin = lin.to_z();
    let mut phi_lin = merit(&lin);
    let mut lin_from_qp = false;
    let mut trace = Vec::new();
    let mut last = None;
    let mut lambda: Option<DVector<f64>> = None;
    for it in 1..=cfg.max_scp_iters {
        let boxed = ScpConfig { trust_radius: radius, ..*cfg };
        let mut p = build_qp(&goal, limits, &boxed, &lin, reverse)?;
        if let (true, Some(l)) = (cfg.second_order, &lambda) {
            add_curvature(&mut p, &lin, l, cfg.dt);
        }
        let sol = qp::solve_warm(&p, &settings, Some(&z_lin))?;
        if sol.status == QpStatus::Infeasible {
            return Err(Error::ScpInfeasible { iteration: it });
        }
        let dz = &sol.z - &z_lin;
        let step = dz.norm();
        // Only θ, v and ω are boxed, so only they size the trust region.
        let boxed_step = dz.iter().enumerate().filter(|(i, _)| i % 5 >= 2).fold(0.0f64, |a, (_, d)| a.max(d.abs()));
        let cand = PlanTrajectory::from_z(&sol.z, n);
        let model = plan_cost(&cand, &goal, cfg) + reverse_bias(&cand, cfg, reverse);
        let phi = model + cfg.merit_penalty * dynamics_defect(&cand, cfg.dt);
        let (predicted, actual) = (phi_lin - model, phi_lin - phi);
        let accept = match radius {
            None => true,
            Some(_) if predicted > 1e-10 => actual >= 0.1 * predicted,
            Some(_) => actual >= 0.0,
        };
        if step < cfg.eps_converge {
            let mut plan = cand;
            plan.states[0] = Pose2::IDENTITY;
            trace.push(phi.min(phi_lin));
            plan.objective = plan_cost(&plan, &goal, cfg);
            plan.scp_iters = it;
            plan.converged = true;
            plan.objective_trace = trace;
            return Ok(plan);
        }
        if accept {
            if let (Some(r), Some(r_max)) = (radius.as_mut(), cfg.trust_radius) {
                if actual > 0.75 * predicted && boxed_step > 0.9 * *r {
                    *r = (2.0 * *r).min(r_max);
                }
            }
            trace.push(phi);
            lambda = Some(sol.lambda_eq.clone());
            lin = cand;
            z_lin = sol.z;
            phi_lin = phi;

            lin_from_qp = true;
        } else {
            if let Some(r) = radius.as_mut() {
                *r = 0.5 * r.min(boxed_step);
            }
            last = Some(cand);
        }
    }
    let mut plan = if lin_from_qp { lin } else { last.expect("at least one QP was solved") };
    plan.states[0] = Pose2::IDENTITY;
    plan.objective = plan_cost(&plan, &goal, cfg);
    plan.scp_iters = cfg.max_scp_iters;
    plan.converged = false;
    plan.objective_trace = trace;
    Ok(plan)
}

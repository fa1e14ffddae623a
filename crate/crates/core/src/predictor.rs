//! Cubic least-squares regression over a sliding window of filter estimates.
//!
//! Sample `i` of a full window of length `L` sits at `t_i = i·dt`, so the
//! oldest sample is the time origin and the newest is at `(L−1)·dt`. The fitted
//! [`PolyTraj`] is evaluated in "time from now": `eval(traj, 0)` is the newest
//! sample time.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::geometry::{normalize_angle, Pose2, Twist};

pub const MIN_SAMPLES: usize = 4;

/// Window of recent relative poses with headings stored unwrapped.
#[derive(Debug, Clone)]
pub struct PoseHistory {
    samples: VecDeque<Pose2>,
    len: usize,
    dt: f64,
}

impl PoseHistory {
    pub fn new(len: usize, dt: f64) -> Self {
        Self { samples: VecDeque::with_capacity(len), len, dt }
    }

    /// Append a pose, unwrapping its heading against the previous sample.
    pub fn push(&mut self, pose: Pose2) {
        let theta = match self.samples.back() {
            Some(prev) => prev.theta + normalize_angle(pose.theta - prev.theta),
            None => pose.theta,
        };
        if self.samples.len() == self.len {
            self.samples.pop_front();
        }
        self.samples.push_back(Pose2 { x: pose.x, y: pose.y, theta });
    }

    /// Replace the whole window, unwrapping headings in order.
    pub fn from_poses(poses: impl IntoIterator<Item = Pose2>, dt: f64) -> Self {
        let poses: Vec<Pose2> = poses.into_iter().collect();
        let mut h = Self::new(poses.len(), dt);
        for p in poses {
            h.push(p);
        }
        h
    }

    /// Offset every sample, e.g. to splice in a correction that arrived
    /// after a long coast.
    pub fn shift(&mut self, dx: f64, dy: f64, dtheta: f64) {
        for p in &mut self.samples {
            p.x += dx;
            p.y += dy;
            p.theta += dtheta;
        }
    }

    pub fn is_full(&self) -> bool {
        self.samples.len() == self.len
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.len
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn samples(&self) -> impl Iterator<Item = &Pose2> {
        self.samples.iter()
    }

    pub fn clear(&mut self) {
        self.samples.clear();
    }
}

/// Per-axis cubic coefficients, highest degree first, in fit-window time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolyTraj {
    pub eta_x: [f64; 4],
    pub eta_y: [f64; 4],
    pub eta_theta: [f64; 4],
    /// Prediction horizon measured from the newest sample.
    pub t_max: f64,
    /// Fit-window time of the newest sample, `(L−1)·dt`.
    pub t0_offset: f64,
}

fn horner(c: &[f64; 4], t: f64) -> f64 {
    ((c[0] * t + c[1]) * t + c[2]) * t + c[3]
}

fn horner_deriv(c: &[f64; 4], t: f64) -> f64 {
    (3.0 * c[0] * t + 2.0 * c[1]) * t + c[2]
}

impl PolyTraj {
    /// A trajectory holding `pose` for the whole horizon.
    pub fn constant(pose: Pose2, t_max: f64) -> Self {
        PolyTraj {
            eta_x: [0.0, 0.0, 0.0, pose.x],
            eta_y: [0.0, 0.0, 0.0, pose.y],
            eta_theta: [0.0, 0.0, 0.0, pose.theta],
            t_max,
            t0_offset: 0.0,
        }
    }

    fn check(&self, t: f64) -> Result<f64> {
        if !(0.0..=self.t_max).contains(&t) {
            return Err(Error::OutOfRange { t, t_max: self.t_max });
        }
        Ok(t + self.t0_offset)
    }

    /// Unchecked position evaluation, `t` measured from the newest sample.
    #[inline]
    pub fn position(&self, t: f64) -> (f64, f64) {
        let s = t + self.t0_offset;
        (horner(&self.eta_x, s), horner(&self.eta_y, s))
    }

    /// Heading without wrapping.
    pub fn heading_unwrapped(&self, t: f64) -> f64 {
        horner(&self.eta_theta, t + self.t0_offset)
    }
}

/// Least-squares cubic fit per axis via a thin QR of the Vandermonde matrix.
pub fn fit(hist: &PoseHistory, t_max: f64) -> Result<PolyTraj> {
    let l = hist.len();
    if l < MIN_SAMPLES {
        return Err(Error::InvalidArgument(format!("need at least {MIN_SAMPLES} samples, got {l}")));
    }
    if !hist.is_full() {
        return Err(Error::InvalidArgument("history window is not full".into()));
    }
    if !(hist.dt > 0.0 && hist.dt.is_finite()) {
        return Err(Error::RankDeficient(format!("sample spacing {} gives duplicate times", hist.dt)));
    }
    // Scale time to [0, 1] for conditioning; coefficients are rescaled below.
    let span = (l - 1) as f64 * hist.dt;
    let vander = DMatrix::from_fn(l, 4, |i, j| {
        let tau = i as f64 * hist.dt / span;
        tau.powi(3 - j as i32)
    });
    let qr = vander.qr();
    let r = qr.r();
    let diag_max = r.diagonal().amax();
    if r.diagonal().iter().any(|d| d.abs() <= 1e-12 * diag_max) {
        return Err(Error::RankDeficient("Vandermonde matrix is rank deficient".into()));
    }
    let q = qr.q();
    let solve = |d: DVector<f64>| -> Result<[f64; 4]> {
        let rhs = q.transpose() * d;
        let c = r
            .solve_upper_triangular(&rhs)
            .ok_or_else(|| Error::RankDeficient("triangular solve failed".into()))?;
        // c_j multiplies tau^(3-j) = (t/span)^(3-j).
        let mut out = [0.0; 4];
        for j in 0..4 {
            out[j] = c[j] / span.powi(3 - j as i32);
        }
        Ok(out)
    };
    let col = |f: fn(&Pose2) -> f64| DVector::from_iterator(l, hist.samples.iter().map(f));
    let traj = PolyTraj {
        eta_x: solve(col(|p| p.x))?,
        eta_y: solve(col(|p| p.y))?,
        eta_theta: solve(col(|p| p.theta))?,
        t_max,
        t0_offset: span,
    };
    if traj.eta_x.iter().chain(&traj.eta_y).chain(&traj.eta_theta).any(|c| !c.is_finite()) {
        return Err(Error::NonFinite("polynomial coefficient"));
    }
    Ok(traj)
}

/// Predicted pose `t` seconds after the newest sample.
pub fn eval(traj: &PolyTraj, t: f64) -> Result<Pose2> {
    let s = traj.check(t)?;
    Ok(Pose2::new(horner(&traj.eta_x, s), horner(&traj.eta_y, s), horner(&traj.eta_theta, s)))
}

/// Analytic time derivative of the prediction, as a planar twist in the
/// frame the history was expressed in (not the target's body frame).
pub fn eval_derivative(traj: &PolyTraj, t: f64) -> Result<Twist> {
    let s = traj.check(t)?;
    Ok(Twist::planar(
        horner_deriv(&traj.eta_x, s),
        horner_deriv(&traj.eta_y, s),
        horner_deriv(&traj.eta_theta, s),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cubic(c: [f64; 4]) -> impl Fn(f64) -> f64 {
        move |t| horner(&c, t)
    }

    fn history_from(fx: impl Fn(f64) -> f64, fy: impl Fn(f64) -> f64, l: usize, dt: f64) -> PoseHistory {
        PoseHistory::from_poses((0..l).map(|i| i as f64 * dt).map(|t| Pose2::new(fx(t), fy(t), 0.0)), dt)
    }

    #[test]
    fn constant_fit() {
        let h = history_from(|_| 2.0, |_| -1.0, 8, 0.1);
        let tr = fit(&h, 3.0).unwrap();
        for (a, b) in tr.eta_x.iter().zip([0.0, 0.0, 0.0, 2.0]) {
            assert!((a - b).abs() < 1e-10);
        }
        let p = eval(&tr, 1.7).unwrap();
        assert!((p.x - 2.0).abs() < 1e-10 && (p.y + 1.0).abs() < 1e-10);
        let d = eval_derivative(&tr, 0.3).unwrap();
        assert!(d.vx.abs() < 1e-9 && d.vy.abs() < 1e-9 && d.omega.abs() < 1e-9);
    }

    #[test]
    fn exact_cubic_recovery_and_extrapolation() {
        let gen = [0.1, -0.4, 0.5, 1.0];
        let (l, dt) = (10, 0.1);
        let tr = fit(&history_from(cubic(gen), |_| 0.0, l, dt), 3.0).unwrap();
        for (a, b) in tr.eta_x.iter().zip(gen) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
        // One step past the newest sample is fit-window time L·dt.
        let p = eval(&tr, dt).unwrap();
        assert!((p.x - horner(&gen, l as f64 * dt)).abs() < 1e-8);
        let t = 0.7;
        let s = t + (l - 1) as f64 * dt;
        let d = eval_derivative(&tr, t).unwrap();
        assert!((d.vx - (3.0 * gen[0] * s * s + 2.0 * gen[1] * s + gen[2])).abs() < 1e-8);
    }

    #[test]
    fn linear_collapses_degree() {
        let tr = fit(&history_from(|t| 0.5 * t, |_| 0.0, 12, 0.1), 3.0).unwrap();
        for (a, b) in tr.eta_x.iter().zip([0.0, 0.0, 0.5, 0.0]) {
            assert!((a - b).abs() < 1e-9);
        }
        assert!((eval_derivative(&tr, 2.0).unwrap().vx - 0.5).abs() < 1e-9);
    }

    #[test]
    fn newest_sample_is_time_zero() {
        let h = history_from(|t| 1.0 + t * t, |t| -t, 6, 0.2);
        let tr = fit(&h, 2.0).unwrap();
        let p = eval(&tr, 0.0).unwrap();
        assert!((p.x - (1.0 + 1.0)).abs() < 1e-10 && (p.y + 1.0).abs() < 1e-10);
    }

    #[test]
    fn errors() {
        let h = history_from(|t| t, |t| t, 3, 0.1);
        assert!(fit(&h, 1.0).is_err());
        let h = history_from(|t| t, |t| t, 6, 0.0);
        assert!(matches!(fit(&h, 1.0), Err(Error::RankDeficient(_))));
        let tr = fit(&history_from(|t| t, |t| t, 6, 0.1), 1.0).unwrap();
        assert!(eval(&tr, 1.5).is_err());
        assert!(eval(&tr, -0.1).is_err());
        assert!(eval_derivative(&tr, 1.01).is_err());
    }

    #[test]
    fn heading_fit_on_unwrapped_sequence() {
        // Heading sweeps through the branch cut at constant rate.
        let dt = 0.1;
        let poses = (0..10).map(|i| Pose2::new(0.0, 0.0, 3.0 + 0.05 * i as f64));
        let tr = fit(&PoseHistory::from_poses(poses, dt), 1.0).unwrap();
        let d = eval_derivative(&tr, 0.5).unwrap();
        assert!((d.omega - 0.5).abs() < 1e-9);
        let p = eval(&tr, 0.0).unwrap();
        assert!((p.theta - normalize_angle(3.45)).abs() < 1e-9);
    }

    #[test]
    fn shift_equivariance() {
        let gen = [0.2, 0.1, -0.3, 0.4];
        let a = fit(&history_from(cubic(gen), |_| 0.0, 10, 0.1), 1.0).unwrap();
        let b = fit(&history_from(|t| horner(&gen, t) + 5.0, |_| 0.0, 10, 0.1), 1.0).unwrap();
        for j in 0..3 {
            assert!((a.eta_x[j] - b.eta_x[j]).abs() < 1e-9);
        }
        assert!((b.eta_x[3] - a.eta_x[3] - 5.0).abs() < 1e-9);
    }
}

//! Body-frame EKF over the relative target pose, and target twist estimation
//! from the filter's own state history.
//!
//! The state is the target pose `(x_r, y_r, θ_r)` in the observer body frame.
//! The target is a unicycle moving at `v_t` along its heading and turning at
//! `ω_t`; the observer's own twist enters through the frame motion:
//!
//! ```text
//! ẋ_r = v_t cos θ_r − v_x + ω_o y_r
//! ẏ_r = v_t sin θ_r − v_y − ω_o x_r
//! θ̇_r = ω_t − ω_o
//! ```
//!
//! Both the mean and the Jacobian use a forward-Euler step.

use std::collections::VecDeque;

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{normalize_angle, Pose2, Twist};

pub type RelativeState = Pose2;

const SYMMETRY_TOL: f64 = 1e-10;
const PSD_TOL: f64 = -1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EkfState {
    pub mean: RelativeState,
    pub cov: Matrix3<f64>,
}

impl EkfState {
    pub fn new(mean: RelativeState, cov: Matrix3<f64>) -> Self {
        Self { mean, cov }
    }

    /// Initial state centred on a first measurement with the measurement noise
    /// as its covariance.
    pub fn from_measurement(meas: Pose2, noise: &NoiseConfig) -> Self {
        Self { mean: meas, cov: Matrix3::from_diagonal(&Vector3::from(noise.r_diag)) }
    }

    pub fn position_trace(&self) -> f64 {
        self.cov[(0, 0)] + self.cov[(1, 1)]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseConfig {
    /// Process noise spectral density per axis, per second.
    pub q_diag: [f64; 3],
    /// Measurement noise variance per axis.
    pub r_diag: [f64; 3],
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig { q_diag: [5e-5, 5e-5, 1e-4], r_diag: [0.005, 0.005, 0.01] }
    }
}

impl NoiseConfig {
    pub fn validate(&self) -> Result<()> {
        if self.q_diag.iter().chain(&self.r_diag).all(|v| v.is_finite() && *v > 0.0) {
            Ok(())
        } else {
            Err(Error::InvalidArgument("noise diagonals must be positive".into()))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TargetTwistEstimate {
    pub v_t: f64,
    pub omega_t: f64,
    pub valid: bool,
}

impl TargetTwistEstimate {
    pub const NONE: TargetTwistEstimate = TargetTwistEstimate { v_t: 0.0, omega_t: 0.0, valid: false };

    /// The twist the prediction step should use; zero until the estimate is valid.
    fn effective(&self) -> (f64, f64) {
        if self.valid {
            (self.v_t, self.omega_t)
        } else {
            (0.0, 0.0)
        }
    }
}

/// Euler step of the relative kinematics.
pub fn propagate_mean(mean: &RelativeState, u_obs: &Twist, v_t: f64, omega_t: f64, dt: f64) -> RelativeState {
    let (s, c) = mean.theta.sin_cos();
    Pose2::new(
        mean.x + dt * (v_t * c - u_obs.vx + u_obs.omega * mean.y),
        mean.y + dt * (v_t * s - u_obs.vy - u_obs.omega * mean.x),
        mean.theta + dt * (omega_t - u_obs.omega),
    )
}

fn jacobian(mean: &RelativeState, u_obs: &Twist, v_t: f64, dt: f64) -> Matrix3<f64> {
    let (s, c) = mean.theta.sin_cos();
    let w = u_obs.omega * dt;
    Matrix3::new(
        1.0, w, -v_t * s * dt, //
        -w, 1.0, v_t * c * dt, //
        0.0, 0.0, 1.0,
    )
}

fn check_psd(p: &Matrix3<f64>) -> Result<()> {
    if p.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("covariance"));
    }
    if (p - p.transpose()).amax() > SYMMETRY_TOL * p.amax().max(1.0) {
        return Err(Error::NotPsd);
    }
    let eig = SymmetricEigen::new(*p);
    if eig.eigenvalues.min() < PSD_TOL {
        return Err(Error::NotPsd);
    }
    Ok(())
}

/// Symmetrize and floor the spectrum at zero.
fn repair_psd(p: &Matrix3<f64>) -> Matrix3<f64> {
    let sym = (p + p.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    if eig.eigenvalues.min() >= 0.0 {
        return sym;
    }
    let floored = eig.eigenvalues.map(|l| l.max(0.0));
    let r = eig.eigenvectors * Matrix3::from_diagonal(&floored) * eig.eigenvectors.transpose();
    (r + r.transpose()) * 0.5
}

pub fn ekf_predict(
    state: &EkfState,
    u_obs: &Twist,
    u_tgt: &TargetTwistEstimate,
    dt: f64,
    noise: &NoiseConfig,
) -> Result<EkfState> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
    }
    check_psd(&state.cov)?;
    let (v_t, omega_t) = u_tgt.effective();
    let f = jacobian(&state.mean, u_obs, v_t, dt);
    let q = Matrix3::from_diagonal(&Vector3::from(noise.q_diag)) * dt;
    let cov = repair_psd(&(f * state.cov * f.transpose() + q));
    Ok(EkfState { mean: propagate_mean(&state.mean, u_obs, v_t, omega_t, dt), cov })
}

/// Innovation with the angular component wrapped.
pub fn innovation(state: &EkfState, meas: &Pose2) -> Vector3<f64> {
    Vector3::new(meas.x - state.mean.x, meas.y - state.mean.y, normalize_angle(meas.theta - state.mean.theta))
}

/// Squared Mahalanobis distance of a measurement against the predicted state.
pub fn innovation_nis(state: &EkfState, meas: &Pose2, noise: &NoiseConfig) -> Result<f64> {
    let s = state.cov + Matrix3::from_diagonal(&Vector3::from(noise.r_diag));
    let y = innovation(state, meas);
    let chol = s.cholesky().ok_or(Error::SingularInnovation)?;
    Ok(y.dot(&chol.solve(&y)))
}

/// Kalman correction with an identity measurement model.
pub fn ekf_update(state: &EkfState, meas: &Pose2, noise: &NoiseConfig) -> Result<EkfState> {
    check_psd(&state.cov)?;
    let r = Matrix3::from_diagonal(&Vector3::from(noise.r_diag));
    let s = state.cov + r;
    let s_inv = s
        .cholesky()
        .map(|c| c.inverse())
        .filter(|m| m.iter().all(|v| v.is_finite()))
        .ok_or(Error::SingularInnovation)?;
    let k = state.cov * s_inv;
    let dx = k * innovation(state, meas);
    let mean = Pose2::new(state.mean.x + dx[0], state.mean.y + dx[1], state.mean.theta + dx[2]);
    // Joseph form keeps the posterior symmetric PSD.
    let ikh = Matrix3::identity() - k;
    let cov = repair_psd(&(ikh * state.cov * ikh.transpose() + k * r * k.transpose()));
    Ok(EkfState { mean, cov })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistoryEntry {
    pub mean: RelativeState,
    /// Observer twist applied over the interval ending at this entry.
    pub u_obs: Twist,
    pub t: f64,
}

/// Fixed-capacity ring buffer of filter means with the observer controls that
/// produced them.
#[derive(Debug, Clone)]
pub struct StateHistory {
    entries: VecDeque<HistoryEntry>,
    capacity: usize,
}

impl StateHistory {
    pub fn new(capacity: usize) -> Self {
        Self { entries: VecDeque::with_capacity(capacity), capacity: capacity.max(2) }
    }

    pub fn push(&mut self, entry: HistoryEntry) -> Result<()> {
        if let Some(last) = self.entries.back() {
            if entry.t <= last.t {
                return Err(Error::InvalidArgument("history timestamps must increase".into()));
            }
        }
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back(entry);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }

    pub fn iter(&self) -> impl Iterator<Item = &HistoryEntry> {
        self.entries.iter()
    }
}

/// Estimate the target's forward speed and yaw rate from the last `w` steps
/// of the history, cancelling the observer's own motion.
pub fn estimate_target_twist(hist: &StateHistory, w: usize, dt: f64) -> TargetTwistEstimate {
    if w == 0 || hist.len() < w + 1 || !(dt > 0.0) {
        return TargetTwistEstimate::NONE;
    }
    let start = hist.len() - (w + 1);
    let window: Vec<&HistoryEntry> = hist.entries.range(start..).collect();
    if window.windows(2).any(|p| ((p[1].t - p[0].t) - dt).abs() > 1e-9) {
        return TargetTwistEstimate::NONE;
    }
    let (mut sx, mut sy, mut sth) = (0.0, 0.0, 0.0);
    for pair in window.windows(2) {
        let (prev, cur) = (pair[0], pair[1]);
        let observer_only = propagate_mean(&prev.mean, &cur.u_obs, 0.0, 0.0, dt);
        sx += cur.mean.x - observer_only.x;
        sy += cur.mean.y - observer_only.y;
        sth += normalize_angle(cur.mean.theta - observer_only.theta);
    }
    let n = w as f64;
    TargetTwistEstimate { v_t: (sx / n).hypot(sy / n) / dt, omega_t: sth / n / dt, valid: true }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn diag(a: f64, b: f64, c: f64) -> Matrix3<f64> {
        Matrix3::from_diagonal(&Vector3::new(a, b, c))
    }

    #[test]
    fn predict_stationary_adds_process_noise() {
        let noise = NoiseConfig::default();
        let s = EkfState::new(Pose2::new(2.0, 1.0, 0.3), diag(0.1, 0.2, 0.05));
        let p = ekf_predict(&s, &Twist::ZERO, &TargetTwistEstimate::NONE, 0.1, &noise).unwrap();
        assert_eq!(p.mean, s.mean);
        let expect = s.cov.trace() + noise.q_diag.iter().sum::<f64>() * 0.1;
        assert!((p.cov.trace() - expect).abs() < 1e-14);
    }

    #[test]
    fn predict_pure_translation() {
        let s = EkfState::new(Pose2::new(2.0, 0.0, 0.0), diag(0.1, 0.1, 0.1));
        let p = ekf_predict(&s, &Twist::unicycle(1.0, 0.0), &TargetTwistEstimate::NONE, 0.1, &NoiseConfig::default())
            .unwrap();
        assert!((p.mean.x - 1.9).abs() < 1e-12 && p.mean.y.abs() < 1e-15 && p.mean.theta == 0.0);
    }

    #[test]
    fn predict_rotation_matches_exact_within_euler_error() {
        let s = EkfState::new(Pose2::new(1.0, 0.0, 0.0), diag(0.1, 0.1, 0.1));
        let p = ekf_predict(&s, &Twist::unicycle(0.0, 0.1), &TargetTwistEstimate::NONE, 1.0, &NoiseConfig::default())
            .unwrap();
        assert!((p.mean.x - 1.0).abs() < 1e-12);
        assert!((p.mean.y + 0.1).abs() < 1e-12);
        assert!((p.mean.theta + 0.1).abs() < 1e-12);
        // Exact: the fixed point rotates by −0.1 rad in the body frame.
        let exact = Pose2::new(0.1f64.cos(), -(0.1f64.sin()), -0.1);
        assert!((p.mean.x - exact.x).abs() < 0.005 && (p.mean.y - exact.y).abs() < 0.005);
    }

    #[test]
    fn predict_rejects_bad_input() {
        let noise = NoiseConfig::default();
        let s = EkfState::new(Pose2::IDENTITY, diag(0.1, 0.1, 0.1));
        assert!(ekf_predict(&s, &Twist::ZERO, &TargetTwistEstimate::NONE, 0.0, &noise).is_err());
        let bad = EkfState::new(Pose2::IDENTITY, diag(0.1, -0.5, 0.1));
        assert_eq!(ekf_predict(&bad, &Twist::ZERO, &TargetTwistEstimate::NONE, 0.1, &noise), Err(Error::NotPsd));
    }

    #[test]
    fn update_perfect_sensor() {
        let noise = NoiseConfig { q_diag: [0.01; 3], r_diag: [1e-12; 3] };
        let s = EkfState::new(Pose2::new(1.0, 2.0, 0.5), diag(0.3, 0.3, 0.3));
        let z = Pose2::new(1.4, 1.7, -0.2);
        let u = ekf_update(&s, &z, &noise).unwrap();
        assert!((u.mean.x - z.x).abs() < 1e-6 && (u.mean.y - z.y).abs() < 1e-6);
        assert!((u.mean.theta - z.theta).abs() < 1e-6);
    }

    #[test]
    fn update_equal_variance_is_midpoint() {
        let noise = NoiseConfig { q_diag: [0.01; 3], r_diag: [0.2; 3] };
        let s = EkfState::new(Pose2::new(1.0, 2.0, 0.5), diag(0.2, 0.2, 0.2));
        let u = ekf_update(&s, &Pose2::new(2.0, 0.0, 0.7), &noise).unwrap();
        assert!((u.mean.x - 1.5).abs() < 1e-12 && (u.mean.y - 1.0).abs() < 1e-12);
        assert!((u.mean.theta - 0.6).abs() < 1e-12);
        assert!(u.cov.trace() <= s.cov.trace());
    }

    #[test]
    fn update_wraps_angular_innovation() {
        let noise = NoiseConfig { q_diag: [0.01; 3], r_diag: [0.1; 3] };
        let s = EkfState::new(Pose2::new(1.0, 0.0, 3.1), diag(0.1, 0.1, 0.1));
        let u = ekf_update(&s, &Pose2::new(1.0, 0.0, -3.1), &noise).unwrap();
        // Midpoint across the branch cut is ±π, not 0.
        assert!((u.mean.theta.abs() - PI).abs() < 1e-3, "theta {}", u.mean.theta);
    }

    #[test]
    fn update_singular_innovation() {
        let noise = NoiseConfig { q_diag: [0.01; 3], r_diag: [0.0; 3] };
        let s = EkfState::new(Pose2::IDENTITY, Matrix3::zeros());
        assert_eq!(ekf_update(&s, &Pose2::IDENTITY, &noise), Err(Error::SingularInnovation));
    }

    fn scripted_history(u_obs: Twist, v_t: f64, omega_t: f64, n: usize, dt: f64) -> StateHistory {
        // Noiseless world advanced with the same Euler relative kinematics.
        let mut h = StateHistory::new(n + 1);
        let mut m = Pose2::new(3.0, 1.0, 0.4);
        h.push(HistoryEntry { mean: m, u_obs, t: 0.0 }).unwrap();
        for k in 1..=n {
            m = propagate_mean(&m, &u_obs, v_t, omega_t, dt);
            h.push(HistoryEntry { mean: m, u_obs, t: k as f64 * dt }).unwrap();
        }
        h
    }

    #[test]
    fn twist_from_static_observer() {
        let h = scripted_history(Twist::ZERO, 0.5, 0.0, 10, 0.1);
        let e = estimate_target_twist(&h, 10, 0.1);
        assert!(e.valid);
        assert!((e.v_t - 0.5).abs() < 1e-9 && e.omega_t.abs() < 1e-12);
    }

    #[test]
    fn twist_cancels_observer_motion() {
        let h = scripted_history(Twist::planar(1.0, 0.3, 0.4), 0.0, 0.0, 10, 0.1);
        let e = estimate_target_twist(&h, 10, 0.1);
        assert!(e.valid && e.v_t <= 1e-6 && e.omega_t.abs() < 1e-9);
    }

    #[test]
    fn twist_turning_target() {
        let h = scripted_history(Twist::ZERO, 0.3, 0.2, 10, 0.1);
        let e = estimate_target_twist(&h, 10, 0.1);
        assert!((e.omega_t - 0.2).abs() < 1e-6);
    }

    #[test]
    fn twist_needs_full_window() {
        let h = scripted_history(Twist::ZERO, 0.5, 0.0, 5, 0.1);
        assert!(!estimate_target_twist(&h, 10, 0.1).valid);
        assert!(estimate_target_twist(&h, 5, 0.1).valid);
    }

    #[test]
    fn history_rejects_non_increasing_time() {
        let mut h = StateHistory::new(4);
        let e = HistoryEntry { mean: Pose2::IDENTITY, u_obs: Twist::ZERO, t: 1.0 };
        h.push(e).unwrap();
        assert!(h.push(e).is_err());
    }
}

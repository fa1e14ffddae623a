//! Reachability-based earliest intercept time.
//!
//! The observer's reachable set after `t` seconds is a disc of radius
//! `v_max·t` for holonomic platforms. Coupled (Dubins-like) platforms pay for
//! steering: the radius toward a point at absolute bearing `α` shrinks to
//! `v_max·t·cos(α/2)`. The earliest intercept is the smallest `t` where
//! `F(t) = x(t)² + y(t)² − r_eff(t)² < δ`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{PlatformClass, PlatformLimits};
use crate::predictor::{eval, PolyTraj};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReachabilityModel {
    pub class: PlatformClass,
    pub limits: PlatformLimits,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InterceptConfig {
    pub t_max: f64,
    /// Tolerance on `F(t)`, m².
    pub delta: f64,
    pub scan_dt: f64,
}

impl Default for InterceptConfig {
    fn default() -> Self {
        InterceptConfig { t_max: 5.0, delta: 1e-3, scan_dt: 0.05 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InterceptSolution {
    pub t_star: f64,
    pub point: (f64, f64),
    /// False when no crossing exists and `t_star` fell back to `t_max`.
    pub feasible: bool,
}

pub fn effective_radius(model: &ReachabilityModel, t: f64, alpha: f64) -> Result<f64> {
    if !(0.0..=PI).contains(&alpha) {
        return Err(Error::InvalidArgument(format!("heading deviation {alpha} outside [0, π]")));
    }
    Ok(radius(model, t, alpha))
}

#[inline]
fn radius(model: &ReachabilityModel, t: f64, alpha: f64) -> f64 {
    let r = model.limits.v_max * t;
    match model.class {
        PlatformClass::CoupledGround => r * (0.5 * alpha).cos(),
        PlatformClass::Holonomic2D | PlatformClass::Holonomic3D => r,
    }
}

#[inline]
fn deviation(x: f64, y: f64) -> f64 {
    if x == 0.0 && y == 0.0 {
        0.0
    } else {
        y.atan2(x).abs().min(PI)
    }
}

/// Absolute bearing from the body +x axis to the predicted point.
pub fn bearing_deviation(traj: &PolyTraj, t: f64) -> Result<f64> {
    let p = eval(traj, t)?;
    Ok(deviation(p.x, p.y))
}

/// `F(t)` for a trajectory; unchecked in `t`.
pub fn reach_margin(traj: &PolyTraj, model: &ReachabilityModel, t: f64) -> f64 {
    let (x, y) = traj.position(t);
    let r = radius(model, t, deviation(x, y));
    x * x + y * y - r * r
}

/// Forward grid scan for the first `F < δ`, refined by bisection.
///
/// Between grid points the scan also looks for a local minimum of `F`
/// (slope changing sign from negative to positive); if the golden-section
/// minimum there dips below `δ`, the crossing before it is taken. This keeps
/// brief tangential entries into the reachable set from being skipped.
pub fn solve_intercept(traj: &PolyTraj, model: &ReachabilityModel, cfg: &InterceptConfig) -> Result<InterceptSolution> {
    let InterceptConfig { t_max, delta, scan_dt } = *cfg;
    if !(scan_dt > 0.0) || !(delta > 0.0) {
        return Err(Error::InvalidArgument("scan_dt and delta must be positive".into()));
    }
    if t_max < scan_dt {
        return Err(Error::InvalidArgument(format!("empty scan: t_max {t_max} < scan_dt {scan_dt}")));
    }
    if t_max > traj.t_max + 1e-12 {
        return Err(Error::InvalidArgument(format!("t_max {t_max} exceeds prediction horizon {}", traj.t_max)));
    }
    let f = |t: f64| reach_margin(traj, model, t);
    let done = |t: f64| -> Result<InterceptSolution> {
        let p = eval(traj, t)?;
        Ok(InterceptSolution { t_star: t, point: (p.x, p.y), feasible: true })
    };

    if f(0.0) < delta {
        return done(0.0);
    }
    let steps = (t_max / scan_dt).floor() as usize;
    let mut grid: Vec<f64> = (0..=steps).map(|k| k as f64 * scan_dt).collect();
    if t_max - grid[steps] > 1e-12 {
        grid.push(t_max);
    }
    let h = scan_dt * 1e-3;
    let slope = |t: f64| f((t + h).min(t_max)) - f((t - h).max(0.0));

    for w in grid.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        if f(hi) < delta {
            return done(bisect(&f, lo, hi, delta, scan_dt / 100.0));
        }
        if slope(lo) < 0.0 && slope(hi) > 0.0 {
            let (t_min, f_min) = golden_min(&f, lo, hi, scan_dt * 1e-4);
            if f_min < delta {
                return done(bisect(&f, lo, t_min, delta, scan_dt / 100.0));
            }
        }
    }
    let p = eval(traj, t_max)?;
    Ok(InterceptSolution { t_star: t_max, point: (p.x, p.y), feasible: false })
}

/// Shrink `[lo, hi]` with `F(lo) ≥ δ > F(hi)` until narrower than `width`;
/// returns the upper end, where the condition holds.
fn bisect(f: &impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, delta: f64, width: f64) -> f64 {
    while hi - lo >= width {
        let mid = 0.5 * (lo + hi);
        if f(mid) < delta {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

fn golden_min(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    if fc < fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Pose2;

    fn model(class: PlatformClass, v_max: f64) -> ReachabilityModel {
        ReachabilityModel { class, limits: PlatformLimits { v_max, omega_max: 1.0, r_min: 0.5 } }
    }

    fn linear_traj(x0: f64, vx: f64, y0: f64, vy: f64) -> PolyTraj {
        PolyTraj {
            eta_x: [0.0, 0.0, vx, x0],
            eta_y: [0.0, 0.0, vy, y0],
            eta_theta: [0.0; 4],
            t_max: 10.0,
            t0_offset: 0.0,
        }
    }

    #[test]
    fn radius_examples() {
        let m = model(PlatformClass::CoupledGround, 1.0);
        assert!((effective_radius(&m, 2.0, 0.0).unwrap() - 2.0).abs() < 1e-15);
        assert!(effective_radius(&m, 3.0, PI).unwrap().abs() < 1e-15);
        assert!((effective_radius(&m, 2.0, PI / 2.0).unwrap() - std::f64::consts::SQRT_2).abs() < 1e-12);
        assert!(effective_radius(&m, 2.0, -0.1).is_err());
        assert!(effective_radius(&m, 2.0, 3.2).is_err());
        let h = model(PlatformClass::Holonomic2D, 1.0);
        assert_eq!(effective_radius(&h, 2.0, 2.5).unwrap(), 2.0);
    }

    #[test]
    fn bearing_examples() {
        let d = 2.5;
        assert_eq!(bearing_deviation(&PolyTraj::constant(Pose2::new(d, 0.0, 0.0), 1.0), 0.0).unwrap(), 0.0);
        let abeam = bearing_deviation(&PolyTraj::constant(Pose2::new(0.0, d, 0.0), 1.0), 0.0).unwrap();
        assert!((abeam - PI / 2.0).abs() < 1e-15);
        let astern = bearing_deviation(&PolyTraj::constant(Pose2::new(-d, 1e-12, 0.0), 1.0), 0.0).unwrap();
        assert!((astern - PI).abs() < 1e-9);
        let origin = bearing_deviation(&PolyTraj::constant(Pose2::IDENTITY, 1.0), 0.0).unwrap();
        assert_eq!(origin, 0.0);
    }

    #[test]
    fn stationary_target() {
        let cfg = InterceptConfig::default();
        let s = solve_intercept(&linear_traj(3.0, 0.0, 0.0, 0.0), &model(PlatformClass::Holonomic2D, 1.0), &cfg).unwrap();
        assert!(s.feasible);
        assert!((s.t_star - 3.0).abs() <= cfg.scan_dt);
        assert_eq!(s.point, (3.0, 0.0));
    }

    #[test]
    fn receding_target_falls_back() {
        let cfg = InterceptConfig::default();
        let s = solve_intercept(&linear_traj(1.0, 1.5, 0.0, 0.0), &model(PlatformClass::Holonomic2D, 1.0), &cfg).unwrap();
        assert!(!s.feasible);
        assert_eq!(s.t_star, cfg.t_max);
    }

    #[test]
    fn approaching_target_closed_form() {
        let cfg = InterceptConfig::default();
        let (d, u, v) = (4.0, 0.6, 1.0);
        let s = solve_intercept(&linear_traj(d, -u, 0.0, 0.0), &model(PlatformClass::Holonomic2D, v), &cfg).unwrap();
        assert!(s.feasible);
        assert!((s.t_star - d / (v + u)).abs() <= cfg.scan_dt);
    }

    #[test]
    fn already_inside_returns_zero() {
        let s = solve_intercept(
            &linear_traj(0.01, 0.0, 0.0, 0.0),
            &model(PlatformClass::CoupledGround, 1.0),
            &InterceptConfig::default(),
        )
        .unwrap();
        assert_eq!(s.t_star, 0.0);
        assert!(s.feasible);
    }

    #[test]
    fn target_astern_unreachable_for_coupled() {
        let cfg = InterceptConfig::default();
        let s = solve_intercept(&linear_traj(-2.0, 0.0, 0.0, 0.0), &model(PlatformClass::CoupledGround, 1.0), &cfg).unwrap();
        assert!(!s.feasible);
    }

    #[test]
    fn config_errors() {
        let tr = linear_traj(3.0, 0.0, 0.0, 0.0);
        let m = model(PlatformClass::Holonomic2D, 1.0);
        let cfg = InterceptConfig { t_max: 0.01, ..Default::default() };
        assert!(solve_intercept(&tr, &m, &cfg).is_err());
        let cfg = InterceptConfig { t_max: 20.0, ..Default::default() };
        assert!(solve_intercept(&tr, &m, &cfg).is_err());
    }

    #[test]
    fn brief_tangential_entry_is_found() {
        // Holonomic, target passes close by and then recedes; the dip below δ
        // is narrower than the grid spacing.
        let m = model(PlatformClass::Holonomic2D, 0.2);
        let cfg = InterceptConfig::default();
        let tr = linear_traj(-3.0, 3.0, 0.205, 0.0);
        let s = solve_intercept(&tr, &m, &cfg).unwrap();
        let dense = (0..=1_000_000)
            .map(|k| k as f64 * 5e-6)
            .find(|&t| reach_margin(&tr, &m, t) < cfg.delta);
        match dense {
            Some(t) => assert!(s.feasible && (s.t_star - t).abs() <= cfg.scan_dt),
            None => assert!(!s.feasible),
        }
    }
}

//! Single-segment polynomial planner for holonomic platforms.
//!
//! Translation uses the degree-7 polynomial matching position, velocity,
//! acceleration and jerk at both ends, which is the minimum-snap curve for
//! pinned endpoints. Yaw uses the boundary-matching cubic (minimum angular
//! acceleration). Both are solved on normalized time `τ = t/T ∈ [0, 1]`.

use nalgebra::{Matrix4, Vector4};

use crate::error::{Error, Result};
use crate::geometry::{normalize_angle, Pose3, Twist};

/// Shortest segment duration accepted.
pub const T_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BoundaryState {
    pub pos: [f64; 3],
    pub vel: [f64; 3],
    pub acc: [f64; 3],
    pub jerk: [f64; 3],
    pub yaw: f64,
    pub yaw_rate: f64,
}

impl BoundaryState {
    pub fn at_rest(pos: [f64; 3], yaw: f64) -> Self {
        BoundaryState { pos, yaw: normalize_angle(yaw), ..Default::default() }
    }

    fn is_finite(&self) -> bool {
        self.pos
            .iter()
            .chain(&self.vel)
            .chain(&self.acc)
            .chain(&self.jerk)
            .chain([&self.yaw, &self.yaw_rate])
            .all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolySegment {
    /// Per-axis coefficients in `τ`, ascending degree. Two or three axes.
    pub axes: Vec<[f64; 8]>,
    /// Yaw coefficients in `τ`, ascending degree.
    pub yaw: [f64; 4],
    pub duration: f64,
}

/// One evaluated setpoint. Velocity and acceleration are world-frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Setpoint {
    pub t: f64,
    pub pose: Pose3,
    pub twist: Twist,
    pub acc: [f64; 3],
}

fn check_duration(t: f64) -> Result<()> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::InvalidArgument(format!("segment duration must be positive, got {t}")));
    }
    if t < T_FLOOR {
        return Err(Error::InvalidArgument(format!("segment duration {t} below {T_FLOOR} s")));
    }
    Ok(())
}

/// Degree-7 coefficients in `τ` for one axis.
fn snap_axis(b0: [f64; 4], b1: [f64; 4], t: f64) -> [f64; 8] {
    let (t2, t3) = (t * t, t * t * t);
    let mut c = [0.0; 8];
    c[0] = b0[0];
    c[1] = b0[1] * t;
    c[2] = b0[2] * t2 / 2.0;
    c[3] = b0[3] * t3 / 6.0;
    // Rows: p, p', p'', p''' at τ = 1 restricted to degrees 4..7.
    let m = Matrix4::from_fn(|r, k| {
        let i = (k + 4) as f64;
        (0..r).fold(1.0, |acc, j| acc * (i - j as f64))
    });
    let target = [b1[0], b1[1] * t, b1[2] * t2, b1[3] * t3];
    let mut rhs = Vector4::zeros();
    for r in 0..4 {
        let known: f64 = (0..4)
            .map(|i| c[i] * (0..r).fold(1.0, |acc, j| acc * (i as f64 - j as f64)))
            .sum();
        rhs[r] = target[r] - known;
    }
    let x = m.lu().solve(&rhs).expect("boundary matrix is nonsingular");
    c[4..].copy_from_slice(x.as_slice());
    c
}

/// Minimum-snap translation with minimum-acceleration yaw. `dims = 2` leaves
/// out the z axis entirely.
pub fn min_snap_segment(start: &BoundaryState, end: &BoundaryState, t: f64, dims: usize) -> Result<PolySegment> {
    check_duration(t)?;
    if dims != 2 && dims != 3 {
        return Err(Error::InvalidArgument(format!("dims must be 2 or 3, got {dims}")));
    }
    if !start.is_finite() || !end.is_finite() {
        return Err(Error::NonFinite("boundary state"));
    }
    let axes = (0..dims)
        .map(|a| {
            snap_axis(
                [start.pos[a], start.vel[a], start.acc[a], start.jerk[a]],
                [end.pos[a], end.vel[a], end.acc[a], end.jerk[a]],
                t,
            )
        })
        .collect();
    let yaw = min_accel_yaw(start.yaw, start.yaw_rate, end.yaw, end.yaw_rate, t)?;
    Ok(PolySegment { axes, yaw, duration: t })
}

/// Boundary-matching cubic in `τ`, ascending. The heading change is taken
/// along the shorter arc.
pub fn min_accel_yaw(psi0: f64, psidot0: f64, psi1: f64, psidot1: f64, t: f64) -> Result<[f64; 4]> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::InvalidArgument(format!("segment duration must be positive, got {t}")));
    }
    let d = normalize_angle(psi1 - psi0);
    let (r0, r1) = (psidot0 * t, psidot1 * t);
    Ok([psi0, r0, 3.0 * d - 2.0 * r0 - r1, -2.0 * d + r0 + r1])
}

/// `k`-th derivative with respect to `τ` of an ascending polynomial.
fn eval_tau<const N: usize>(c: &[f64; N], tau: f64, k: usize) -> f64 {
    let mut acc = 0.0;
    for i in (k..N).rev() {
        let f = (0..k).fold(1.0, |p, j| p * (i - j) as f64);
        acc = acc * tau + f * c[i];
    }
    acc
}

impl PolySegment {
    pub fn dims(&self) -> usize {
        self.axes.len()
    }

    /// `k`-th time derivative of axis `a` at time `t`.
    pub fn axis_derivative(&self, a: usize, t: f64, k: usize) -> f64 {
        eval_tau(&self.axes[a], t / self.duration, k) / self.duration.powi(k as i32)
    }

    /// Unwrapped yaw and its `k`-th time derivative.
    pub fn yaw_derivative(&self, t: f64, k: usize) -> f64 {
        eval_tau(&self.yaw, t / self.duration, k) / self.duration.powi(k as i32)
    }

    /// Coefficients of axis `a` in physical time `t`, ascending.
    pub fn physical_coefficients(&self, a: usize) -> [f64; 8] {
        let mut out = self.axes[a];
        for (i, c) in out.iter_mut().enumerate() {
            *c /= self.duration.powi(i as i32);
        }
        out
    }

    pub fn eval(&self, t: f64) -> Setpoint {
        let d = |a: usize, k: usize| if a < self.dims() { self.axis_derivative(a, t, k) } else { 0.0 };
        Setpoint {
            t,
            pose: Pose3::new(d(0, 0), d(1, 0), d(2, 0), self.yaw_derivative(t, 0)),
            twist: Twist { vx: d(0, 1), vy: d(1, 1), vz: d(2, 1), omega: self.yaw_derivative(t, 1) },
            acc: [d(0, 2), d(1, 2), d(2, 2)],
        }
    }
}

/// Setpoints at `0, dt, 2dt, …`, always ending exactly at `T`.
pub fn sample(seg: &PolySegment, dt: f64) -> Result<Vec<Setpoint>> {
    if !(dt > 0.0) || dt > seg.duration * (1.0 + 1e-12) {
        return Err(Error::InvalidArgument(format!("sample spacing {dt} outside (0, {}]", seg.duration)));
    }
    let mut out = Vec::new();
    let mut k = 0usize;
    loop {
        let t = k as f64 * dt;
        if t >= seg.duration - 1e-9 * seg.duration {
            break;
        }
        out.push(seg.eval(t));
        k += 1;
    }
    out.push(seg.eval(seg.duration));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rest(x: f64) -> BoundaryState {
        BoundaryState::at_rest([x, 0.0, 0.0], 0.0)
    }

    #[test]
    fn rest_to_rest_unit() {
        let seg = min_snap_segment(&rest(0.0), &rest(1.0), 1.0, 3).unwrap();
        let expect = [0.0, 0.0, 0.0, 0.0, 35.0, -84.0, 70.0, -20.0];
        for (a, b) in seg.axes[0].iter().zip(expect) {
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
    }

    #[test]
    fn zero_displacement() {
        let seg = min_snap_segment(&rest(0.0), &rest(0.0), 2.0, 3).unwrap();
        assert!(seg.axes.iter().flatten().all(|c| *c == 0.0));
        assert!(seg.yaw.iter().all(|c| *c == 0.0));
    }

    #[test]
    fn planar_matches_spatial() {
        let mut a = rest(0.3);
        a.vel = [0.2, -0.1, 0.5];
        let mut b = BoundaryState::at_rest([2.0, 1.0, 1.5], 0.4);
        b.acc = [0.1, 0.0, 0.0];
        let s2 = min_snap_segment(&a, &b, 3.0, 2).unwrap();
        let s3 = min_snap_segment(&a, &b, 3.0, 3).unwrap();
        assert_eq!(s2.dims(), 2);
        assert_eq!(s2.axes[..], s3.axes[..2]);
    }

    #[test]
    fn boundary_reproduction() {
        let a = BoundaryState { pos: [1.0, -2.0, 0.5], vel: [0.3, 0.1, 0.0], acc: [0.0, 0.2, -0.1], jerk: [0.1, 0.0, 0.0], yaw: 0.2, yaw_rate: 0.1 };
        let b = BoundaryState { pos: [-4.0, 7.0, 2.0], vel: [0.5, -0.2, 0.1], acc: [0.0; 3], jerk: [0.0; 3], yaw: -1.0, yaw_rate: 0.0 };
        let t = 7.5;
        let seg = min_snap_segment(&a, &b, t, 3).unwrap();
        for ax in 0..3 {
            for (k, (s, e)) in [(a.pos, b.pos), (a.vel, b.vel), (a.acc, b.acc), (a.jerk, b.jerk)].iter().enumerate() {
                assert!((seg.axis_derivative(ax, 0.0, k) - s[ax]).abs() < 1e-8);
                assert!((seg.axis_derivative(ax, t, k) - e[ax]).abs() < 1e-8);
            }
        }
        assert!((seg.yaw_derivative(t, 1) - b.yaw_rate).abs() < 1e-10);
        assert!((normalize_angle(seg.yaw_derivative(t, 0)) - b.yaw).abs() < 1e-10);
    }

    #[test]
    fn duration_errors() {
        assert!(min_snap_segment(&rest(0.0), &rest(1.0), 0.0, 3).is_err());
        assert!(min_snap_segment(&rest(0.0), &rest(1.0), -1.0, 3).is_err());
        assert!(min_snap_segment(&rest(0.0), &rest(1.0), 5e-4, 3).is_err());
        assert!(min_snap_segment(&rest(0.0), &rest(1.0), 1.0, 4).is_err());
        assert!(min_accel_yaw(0.0, 0.0, 1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn yaw_examples() {
        let c = min_accel_yaw(0.0, 0.0, 1.0, 0.0, 1.0).unwrap();
        assert!((c[2] - 3.0).abs() < 1e-10 && (c[3] + 2.0).abs() < 1e-10);
        assert_eq!(min_accel_yaw(0.7, 0.0, 0.7, 0.0, 2.0).unwrap(), [0.7, 0.0, 0.0, 0.0]);
        let c = min_accel_yaw(3.0, 0.0, -3.0, 0.0, 1.0).unwrap();
        let sweep = c[1] + c[2] + c[3];
        assert!((sweep - (std::f64::consts::TAU - 6.0)).abs() < 1e-12);
        let mid = eval_tau(&c, 0.5, 0);
        assert!(mid > 3.0, "passes through π: {mid}");
    }

    #[test]
    fn sampling() {
        let seg = min_snap_segment(&rest(0.0), &rest(1.0), 2.0, 3).unwrap();
        let s = sample(&seg, 2.0).unwrap();
        assert_eq!(s.len(), 2);
        assert!(s[0].pose.x.abs() < 1e-10 && (s[1].pose.x - 1.0).abs() < 1e-10);
        let s = sample(&seg, 0.3).unwrap();
        assert_eq!(s.last().unwrap().t, 2.0);
        assert_eq!(s.len(), 8);
        let peak = s.iter().max_by(|a, b| a.twist.vx.total_cmp(&b.twist.vx)).unwrap();
        let fine = sample(&seg, 0.01).unwrap();
        let peak_fine = fine.iter().max_by(|a, b| a.twist.vx.total_cmp(&b.twist.vx)).unwrap();
        assert!((peak_fine.t - 1.0).abs() < 1e-9);
        assert!(peak.twist.vx <= peak_fine.twist.vx);
        assert!(sample(&seg, 0.0).is_err());
        assert!(sample(&seg, 3.0).is_err());
    }

    #[test]
    fn time_scaling() {
        let seg_t = min_snap_segment(&rest(0.0), &rest(3.0), 4.0, 2).unwrap();
        let seg_1 = min_snap_segment(&rest(0.0), &rest(3.0), 1.0, 2).unwrap();
        for i in 0..=10 {
            let tau = i as f64 / 10.0;
            assert!((seg_t.eval(tau * 4.0).pose.x - seg_1.eval(tau).pose.x).abs() < 1e-7);
        }
    }
}

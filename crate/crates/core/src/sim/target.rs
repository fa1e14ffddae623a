//! Non-cooperative target motion profiles.

use std::f64::consts::TAU;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{normalize_angle, Pose2};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Waypoint {
    pub pose: Pose2,
    pub speed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TargetProfile {
    /// Straight line; `heading` defaults to the start pose heading.
    Linear {
        speed: f64,
        #[serde(default)]
        heading: Option<f64>,
        distance: f64,
    },
    /// Sine-wave path about a straight centerline. `s` is arc length along
    /// the centerline; lateral offset is `(p2p/2)·sin(2π s / wavelength)`.
    Sinusoid {
        p2p: f64,
        wavelength: f64,
        speed: f64,
        #[serde(default)]
        heading: Option<f64>,
        #[serde(default)]
        distance: Option<f64>,
    },
    /// Unicycle with twist redrawn uniformly at `resample_hz`.
    StochasticTwist {
        v_range: [f64; 2],
        omega_range: [f64; 2],
        resample_hz: f64,
        stop_after: f64,
    },
    /// Straight legs to each waypoint at that waypoint's speed.
    Waypoints { points: Vec<Waypoint> },
    Static,
}

impl TargetProfile {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Scenario(m.to_string()));
        match self {
            TargetProfile::Linear { speed, distance, .. } => {
                if !(*speed >= 0.0) || !(*distance >= 0.0) {
                    return bad("linear speed and distance must be non-negative");
                }
            }
            TargetProfile::Sinusoid { p2p, wavelength, speed, distance, .. } => {
                if !(*p2p >= 0.0) || !(*wavelength > 0.0) || !(*speed >= 0.0) {
                    return bad("sinusoid needs p2p ≥ 0, wavelength > 0, speed ≥ 0");
                }
                if distance.is_some_and(|d| !(d >= 0.0)) {
                    return bad("sinusoid distance must be non-negative");
                }
            }
            TargetProfile::StochasticTwist { v_range, omega_range, resample_hz, stop_after } => {
                if !(v_range[0] <= v_range[1]) || !(omega_range[0] <= omega_range[1]) {
                    return bad("stochastic ranges must be ordered [lo, hi]");
                }
                if v_range[0] < 0.0 {
                    return bad("stochastic speeds must be non-negative");
                }
                if !(*resample_hz > 0.0) || !(*stop_after >= 0.0) {
                    return bad("resample_hz must be positive and stop_after non-negative");
                }
            }
            TargetProfile::Waypoints { points } => {
                if points.iter().any(|w| !(w.speed >= 0.0) || !w.pose.is_finite()) {
                    return bad("waypoint speeds must be non-negative and poses finite");
                }
            }
            TargetProfile::Static => {}
        }
        Ok(())
    }
}

/// Running state of one target.
#[derive(Debug, Clone)]
pub struct TargetMotion {
    profile: TargetProfile,
    start: Pose2,
    pose: Pose2,
    t: f64,
    travelled: f64,
    twist: (f64, f64),
    next_resample: f64,
    leg: usize,
    halted_at: Option<f64>,
}

impl TargetMotion {
    pub fn new(profile: TargetProfile, start: Pose2) -> Self {
        let mut pose = start;
        match &profile {
            TargetProfile::Linear { heading: Some(h), .. } => pose.theta = normalize_angle(*h),
            TargetProfile::Sinusoid { p2p, wavelength, heading, .. } => {
                let h = heading.unwrap_or(start.theta);
                let slope = 0.5 * p2p * TAU / wavelength;
                pose.theta = normalize_angle(h + slope.atan());
            }
            _ => {}
        }
        let halted_at = matches!(profile, TargetProfile::Static).then_some(0.0);
        TargetMotion { profile, start, pose, t: 0.0, travelled: 0.0, twist: (0.0, 0.0), next_resample: 0.0, leg: 0, halted_at }
    }

    pub fn pose(&self) -> Pose2 {
        self.pose
    }

    /// Time at which the target came to rest for good, if it has.
    pub fn halted_at(&self) -> Option<f64> {
        self.halted_at
    }

    fn halt(&mut self) {
        if self.halted_at.is_none() {
            self.halted_at = Some(self.t);
        }
    }

    /// Advance by `dt`. Stochastic draws come from `rng` only when a resample
    /// is due.
    pub fn step<R: Rng>(&mut self, dt: f64, rng: &mut R) -> Pose2 {
        let t_end = self.t + dt;
        match self.profile.clone() {
            TargetProfile::Static => {}
            TargetProfile::Linear { speed, heading, distance } => {
                let h = heading.unwrap_or(self.start.theta);
                let step = (speed * dt).min(distance - self.travelled).max(0.0);
                self.travelled += step;
                self.pose = Pose2 {
                    x: self.start.x + self.travelled * h.cos(),
                    y: self.start.y + self.travelled * h.sin(),
                    theta: normalize_angle(h),
                };
                if self.travelled >= distance {
                    self.t = t_end;
                    self.halt();
                }
            }
            TargetProfile::Sinusoid { p2p, wavelength, speed, heading, distance } => {
                let h = heading.unwrap_or(self.start.theta);
                let limit = distance.unwrap_or(f64::INFINITY);
                let step = (speed * dt).min(limit - self.travelled).max(0.0);
                self.travelled += step;
                let s = self.travelled;
                let k = TAU / wavelength;
                let lat = 0.5 * p2p * (k * s).sin();
                let slope = 0.5 * p2p * k * (k * s).cos();
                let (sh, ch) = h.sin_cos();
                self.pose = Pose2 {
                    x: self.start.x + s * ch - lat * sh,
                    y: self.start.y + s * sh + lat * ch,
                    theta: normalize_angle(h + slope.atan()),
                };
                if s >= limit {
                    self.t = t_end;
                    self.halt();
                }
            }
            TargetProfile::StochasticTwist { v_range, omega_range, resample_hz, stop_after } => {
                if self.t >= stop_after - 1e-9 {
                    self.t = t_end;
                    self.halt();
                    return self.pose;
                }
                if self.t >= self.next_resample - 1e-9 {
                    let v = rng.random_range(v_range[0]..=v_range[1]);
                    let w = rng.random_range(omega_range[0]..=omega_range[1]);
                    self.twist = (v, w);
                    self.next_resample += 1.0 / resample_hz;
                }
                let (v, w) = self.twist;
                let (s, c) = self.pose.theta.sin_cos();
                self.pose = Pose2::new(self.pose.x + v * c * dt, self.pose.y + v * s * dt, self.pose.theta + w * dt);
            }
            TargetProfile::Waypoints { points } => {
                let mut budget = dt;
                while self.leg < points.len() && budget > 0.0 {
                    let wp = points[self.leg];
                    let (dx, dy) = (wp.pose.x - self.pose.x, wp.pose.y - self.pose.y);
                    let d = dx.hypot(dy);
                    if wp.speed == 0.0 {
                        break;
                    }
                    let reach = wp.speed * budget;
                    if reach >= d {
                        budget -= d / wp.speed;
                        let theta = if d > 0.0 { dy.atan2(dx) } else { self.pose.theta };
                        self.pose = Pose2::new(wp.pose.x, wp.pose.y, theta);
                        self.leg += 1;
                    } else {
                        let theta = dy.atan2(dx);
                        self.pose = Pose2::new(self.pose.x + reach * dx / d, self.pose.y + reach * dy / d, theta);
                        budget = 0.0;
                    }
                }
                if self.leg >= points.len() {
                    self.t = t_end;
                    self.halt();
                }
            }
        }
        self.t = t_end;
        self.pose
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(7)
    }

    #[test]
    fn linear_advances_and_halts() {
        let mut m = TargetMotion::new(TargetProfile::Linear { speed: 0.25, heading: None, distance: 0.1 }, Pose2::IDENTITY);
        let p = m.step(0.1, &mut rng());
        assert!((p.x - 0.025).abs() < 1e-15);
        for _ in 0..10 {
            m.step(0.1, &mut rng());
        }
        assert!((m.pose().x - 0.1).abs() < 1e-12);
        assert!(m.halted_at().is_some());
    }

    #[test]
    fn sinusoid_amplitude() {
        let profile = TargetProfile::Sinusoid { p2p: 1.0, wavelength: 2.0, speed: 0.5, heading: Some(0.0), distance: None };
        let mut m = TargetMotion::new(profile, Pose2::IDENTITY);
        let mut r = rng();
        let max_lat = (0..400).map(|_| m.step(0.01, &mut r).y.abs()).fold(0.0, f64::max);
        assert!((max_lat - 0.5).abs() < 1e-3);
    }

    #[test]
    fn degenerate_stochastic_is_linear() {
        let st = TargetProfile::StochasticTwist { v_range: [0.3, 0.3], omega_range: [0.0, 0.0], resample_hz: 10.0, stop_after: 100.0 };
        let li = TargetProfile::Linear { speed: 0.3, heading: None, distance: 100.0 };
        let start = Pose2::new(1.0, 2.0, 0.4);
        let (mut a, mut b) = (TargetMotion::new(st, start), TargetMotion::new(li, start));
        let mut r = rng();
        for _ in 0..50 {
            let (pa, pb) = (a.step(0.1, &mut r), b.step(0.1, &mut r));
            assert!((pa.x - pb.x).abs() < 1e-12 && (pa.y - pb.y).abs() < 1e-12);
        }
    }

    #[test]
    fn stochastic_stops() {
        let st = TargetProfile::StochasticTwist { v_range: [0.1, 0.5], omega_range: [-0.5, 0.5], resample_hz: 10.0, stop_after: 1.0 };
        let mut m = TargetMotion::new(st, Pose2::IDENTITY);
        let mut r = rng();
        for _ in 0..10 {
            m.step(0.1, &mut r);
        }
        let p = m.pose();
        assert!(m.halted_at().is_none());
        m.step(0.1, &mut r);
        assert_eq!(m.pose(), p);
        assert!(m.halted_at().is_some());
    }

    #[test]
    fn waypoints_pursuit() {
        let pts = vec![
            Waypoint { pose: Pose2::new(1.0, 0.0, 0.0), speed: 1.0 },
            Waypoint { pose: Pose2::new(1.0, 1.0, 0.0), speed: 0.5 },
        ];
        let mut m = TargetMotion::new(TargetProfile::Waypoints { points: pts }, Pose2::IDENTITY);
        let mut r = rng();
        m.step(1.5, &mut r);
        let p = m.pose();
        assert!((p.x - 1.0).abs() < 1e-12 && (p.y - 0.25).abs() < 1e-12);
        m.step(10.0, &mut r);
        assert!(m.halted_at().is_some());
        assert!((m.pose().y - 1.0).abs() < 1e-12);
    }

    #[test]
    fn validation() {
        let bad = TargetProfile::StochasticTwist { v_range: [0.5, 0.1], omega_range: [0.0, 0.0], resample_hz: 10.0, stop_after: 1.0 };
        assert!(bad.validate().is_err());
        assert!(TargetProfile::Linear { speed: -1.0, heading: None, distance: 1.0 }.validate().is_err());
    }
}

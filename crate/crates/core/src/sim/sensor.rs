//! Relative-pose sensor with field of view, range limit, Gaussian noise,
//! scheduled dropout and outright corruption.
//!
//! Sensor slots fall at `j / rate_hz`. Each slot consumes a fixed number of
//! draws from the noise and corruption streams whether or not it emits, so
//! changing visibility or the autonomy stack never shifts later draws.

use std::collections::VecDeque;
use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{normalize_angle, Pose2};

use super::world::WorldState;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DropoutSchedule {
    /// Length of each blackout.
    pub window_s: f64,
    /// Visible time between blackouts.
    pub interval_s: f64,
}

impl DropoutSchedule {
    /// Visible for `interval_s`, then dark for `window_s`, repeating.
    pub fn is_dark(&self, t: f64) -> bool {
        if self.window_s <= 0.0 {
            return false;
        }
        let period = self.interval_s + self.window_s;
        t.rem_euclid(period) >= self.interval_s - 1e-9
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SensorConfig {
    pub rate_hz: f64,
    pub fov_half_angle: f64,
    pub max_range: f64,
    pub noise_sigma: [f64; 3],
    pub dropout: Option<DropoutSchedule>,
    pub p_corrupt: f64,
    pub latency_ticks: usize,
}

impl Default for SensorConfig {
    fn default() -> Self {
        SensorConfig {
            rate_hz: 10.0,
            fov_half_angle: PI / 3.0,
            max_range: 8.0,
            noise_sigma: [0.02, 0.02, 0.02],
            dropout: None,
            p_corrupt: 0.0,
            latency_ticks: 0,
        }
    }
}

impl SensorConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Scenario(m));
        if !(5.0..=30.0).contains(&self.rate_hz) {
            return bad(format!("sensor rate_hz {} outside [5, 30]", self.rate_hz));
        }
        if !(self.fov_half_angle > 0.0 && self.fov_half_angle <= PI) {
            return bad(format!("fov_half_angle {} outside (0, π]", self.fov_half_angle));
        }
        if !(self.max_range > 0.0) {
            return bad("max_range must be positive".into());
        }
        if self.noise_sigma.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
            return bad("noise_sigma entries must be non-negative".into());
        }
        if !(0.0..=1.0).contains(&self.p_corrupt) {
            return bad(format!("p_corrupt {} outside [0, 1]", self.p_corrupt));
        }
        if let Some(d) = self.dropout {
            if !(d.window_s >= 0.0) || !(d.interval_s > 0.0) {
                return bad("dropout needs window_s ≥ 0 and interval_s > 0".into());
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measurement {
    /// Target pose in the observer body frame.
    pub pose: Pose2,
    pub t: f64,
    /// Ground-truth marker for analysis; never passed to the estimator.
    pub corrupted: bool,
}

/// Pure sensing model for one slot. `noise` and `corrupt` carry the slot's
/// pre-drawn randomness.
pub fn sense_slot(world: &WorldState, cfg: &SensorConfig, t: f64, noise: [f64; 3], corrupt: [f64; 4]) -> Option<Measurement> {
    if cfg.dropout.is_some_and(|d| d.is_dark(t)) {
        return None;
    }
    let truth = world.observer.planar().relative(&world.target);
    let range = truth.norm();
    let bearing = if range > 0.0 { truth.y.atan2(truth.x) } else { 0.0 };
    if bearing.abs() > cfg.fov_half_angle || range > cfg.max_range {
        return None;
    }
    if corrupt[0] < cfg.p_corrupt {
        let r = corrupt[1] * cfg.max_range;
        let b = (2.0 * corrupt[2] - 1.0) * cfg.fov_half_angle;
        let th = normalize_angle(PI - 2.0 * PI * corrupt[3]);
        return Some(Measurement { pose: Pose2::new(r * b.cos(), r * b.sin(), th), t, corrupted: true });
    }
    let [sx, sy, st] = cfg.noise_sigma;
    let pose = Pose2::new(truth.x + sx * noise[0], truth.y + sy * noise[1], truth.theta + st * noise[2]);
    Some(Measurement { pose, t, corrupted: false })
}

/// Stateful sensor: cadence, latency queue and random streams.
#[derive(Debug, Clone)]
pub struct Sensor<R> {
    cfg: SensorConfig,
    next_slot: u64,
    noise_rng: R,
    corrupt_rng: R,
    queue: VecDeque<Vec<Measurement>>,
    slots_total: u64,
    slots_dark: u64,
}

impl<R: Rng> Sensor<R> {
    pub fn new(cfg: SensorConfig, noise_rng: R, corrupt_rng: R) -> Self {
        Sensor { cfg, next_slot: 0, noise_rng, corrupt_rng, queue: VecDeque::new(), slots_total: 0, slots_dark: 0 }
    }

    pub fn config(&self) -> &SensorConfig {
        &self.cfg
    }

    /// All slots with time ≤ `world.t`, sensed against `world`, delayed by
    /// `latency_ticks` calls.
    pub fn poll(&mut self, world: &WorldState) -> Vec<Measurement> {
        let mut out = Vec::new();
        loop {
            let ts = self.next_slot as f64 / self.cfg.rate_hz;
            if ts > world.t + 1e-9 {
                break;
            }
            self.next_slot += 1;
            self.slots_total += 1;
            let noise: [f64; 3] = std::array::from_fn(|_| StandardNormal.sample(&mut self.noise_rng));
            let corrupt: [f64; 4] = std::array::from_fn(|_| self.corrupt_rng.random::<f64>());
            if self.cfg.dropout.is_some_and(|d| d.is_dark(ts)) {
                self.slots_dark += 1;
            }
            if let Some(m) = sense_slot(world, &self.cfg, ts, noise, corrupt) {
                out.push(m);
            }
        }
        self.queue.push_back(out);
        if self.queue.len() > self.cfg.latency_ticks {
            self.queue.pop_front().unwrap_or_default()
        } else {
            Vec::new()
        }
    }

    /// `(slots elapsed, slots inside a dropout window)`.
    pub fn slot_counts(&self) -> (u64, u64) {
        (self.slots_total, self.slots_dark)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Pose3;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn world(target: Pose2, t: f64) -> WorldState {
        WorldState { observer: Pose3::default(), target, t }
    }

    fn noiseless() -> SensorConfig {
        SensorConfig { noise_sigma: [0.0; 3], fov_half_angle: PI / 4.0, ..Default::default() }
    }

    fn sensor(cfg: SensorConfig) -> Sensor<ChaCha8Rng> {
        Sensor::new(cfg, ChaCha8Rng::seed_from_u64(1), ChaCha8Rng::seed_from_u64(2))
    }

    #[test]
    fn astern_is_invisible() {
        let w = world(Pose2::new(-2.0, 0.0, 0.0), 0.0);
        assert!(sense_slot(&w, &noiseless(), 0.0, [0.0; 3], [1.0; 4]).is_none());
    }

    #[test]
    fn noiseless_is_exact() {
        let mut w = world(Pose2::new(3.0, 0.5, 0.3), 0.0);
        w.observer = Pose3::new(1.0, 0.0, 0.0, 0.1);
        let m = sense_slot(&w, &noiseless(), 0.0, [1.0, -1.0, 0.5], [1.0; 4]).unwrap();
        assert_eq!(m.pose, w.observer.planar().relative(&w.target));
        assert!(!m.corrupted);
    }

    #[test]
    fn cadence_count() {
        for rate in [5.0, 10.0, 30.0] {
            let mut s = sensor(SensorConfig { rate_hz: rate, ..noiseless() });
            let mut n = 0;
            for k in 0..=600 {
                n += s.poll(&world(Pose2::new(2.0, 0.0, 0.0), k as f64 * 0.1)).len();
            }
            let expect = (60.0 * rate) as usize;
            assert!(n.abs_diff(expect) <= 1, "rate {rate}: {n} vs {expect}");
        }
    }

    #[test]
    fn dropout_fraction() {
        let d = DropoutSchedule { window_s: 7.0, interval_s: 5.0 };
        let mut s = sensor(SensorConfig { rate_hz: 10.0, dropout: Some(d), ..noiseless() });
        let mut emitted = 0;
        // Exactly five full periods.
        for k in 0..600 {
            emitted += s.poll(&world(Pose2::new(2.0, 0.0, 0.0), k as f64 * 0.1)).len();
        }
        let (total, dark) = s.slot_counts();
        assert_eq!(total, 600);
        assert_eq!(dark, 350);
        assert_eq!(emitted, 250);
    }

    #[test]
    fn latency_delays_delivery() {
        let mut s = sensor(SensorConfig { latency_ticks: 2, ..noiseless() });
        let w = world(Pose2::new(2.0, 0.0, 0.0), 0.0);
        assert!(s.poll(&w).is_empty());
        assert!(s.poll(&WorldState { t: 0.1, ..w }).is_empty());
        let got = s.poll(&WorldState { t: 0.2, ..w });
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].t, 0.0);
    }

    #[test]
    fn full_corruption_decorrelates() {
        let cfg = SensorConfig { p_corrupt: 1.0, max_range: 8.0, fov_half_angle: PI / 2.0, ..noiseless() };
        let mut s = sensor(cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (mut truth, mut meas) = (Vec::new(), Vec::new());
        for k in 0..1000 {
            let r = rng.random_range(0.5..7.5);
            let w = world(Pose2::new(r, 0.0, 0.0), k as f64 * 0.1);
            for m in s.poll(&w) {
                assert!(m.corrupted);
                truth.push(r);
                meas.push(m.pose.norm());
            }
        }
        assert_eq!(truth.len(), 1000);
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let (mt, mm) = (mean(&truth), mean(&meas));
        let cov: f64 = truth.iter().zip(&meas).map(|(a, b)| (a - mt) * (b - mm)).sum();
        let vt: f64 = truth.iter().map(|a| (a - mt).powi(2)).sum();
        let vm: f64 = meas.iter().map(|b| (b - mm).powi(2)).sum();
        assert!((cov / (vt * vm).sqrt()).abs() < 0.1);
    }
}

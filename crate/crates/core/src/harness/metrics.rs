//! Error decomposition and summary statistics.

use serde::{Deserialize, Serialize};

use crate::geometry::{normalize_angle, Pose2};

/// Observer error relative to the standoff pose behind `target`, resolved in
/// the target frame. `along` is positive ahead of the desired point, `cross`
/// positive to the right of the target heading, `ang` is the wrapped heading
/// difference.
pub fn error_decompose(observer: &Pose2, target: &Pose2, standoff: f64) -> (f64, f64, f64) {
    let desired = target.compose(&Pose2::new(-standoff, 0.0, 0.0));
    let (ex, ey) = (observer.x - desired.x, observer.y - desired.y);
    let (s, c) = target.theta.sin_cos();
    let along = c * ex + s * ey;
    let cross = s * ex - c * ey;
    (along, cross, normalize_angle(observer.theta - target.theta))
}

/// Population mean and standard deviation with the sample count, so cells
/// can pool trials exactly.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Moments {
    pub n: usize,
    pub mean: f64,
    pub std: f64,
}

impl Moments {
    pub fn of(xs: &[f64]) -> Moments {
        if xs.is_empty() {
            return Moments { n: 0, mean: f64::NAN, std: f64::NAN };
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        Moments { n: xs.len(), mean, std: var.sqrt() }
    }

    /// Moments of the union of the underlying samples.
    pub fn pool(parts: &[Moments]) -> Moments {
        let total: usize = parts.iter().map(|m| m.n).sum();
        if total == 0 {
            return Moments { n: 0, mean: f64::NAN, std: f64::NAN };
        }
        let nt = total as f64;
        let nonempty = parts.iter().filter(|m| m.n > 0);
        let mean = nonempty.clone().map(|m| m.n as f64 * m.mean).sum::<f64>() / nt;
        let second = nonempty.map(|m| m.n as f64 * (m.std * m.std + m.mean * m.mean)).sum::<f64>() / nt;
        Moments { n: total, mean, std: (second - mean * mean).max(0.0).sqrt() }
    }
}

/// `q`-quantile by linear interpolation between order statistics.
pub fn quantile(xs: &[f64], q: f64) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

//! Accuracy and timing summaries of an estimation run.

use std::f64::consts::PI;
use std::fmt::Write as _;

use legmhe::pipeline::{Estimate, Truth};

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MetricsReport {
    pub ticks: usize,
    /// Ticks that had ground truth.
    pub compared: usize,
    /// Body-frame velocity (m/s).
    pub rmse_velocity: f64,
    /// All three ZYX angles (rad).
    pub rmse_euler: f64,
    pub rmse_roll_pitch: f64,
    pub rmse_yaw: f64,
    pub rmse_height: f64,
    pub rmse_position: f64,
    pub max_orientation_error: f64,
    pub max_velocity_error: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct TimingStats {
    pub mean_us: f64,
    pub p99_us: f64,
    pub max_us: f64,
}

fn wrap(a: f64) -> f64 {
    let r = (a + PI).rem_euclid(2.0 * PI) - PI;
    if r <= -PI {
        r + 2.0 * PI
    } else {
        r
    }
}

/// Compares each estimate with the truth at the same tick.
pub fn compute_metrics(estimates: &[Estimate], truth: &[Option<Truth>]) -> MetricsReport {
    let mut r = MetricsReport { ticks: estimates.len(), ..Default::default() };
    let (mut sv, mut se, mut srp, mut sy, mut sh, mut sp) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for (est, gt) in estimates.iter().zip(truth) {
        let Some(gt) = gt else { continue };
        r.compared += 1;
        let v_est = est.q.conjugate().rotate(&est.state.v);
        let v_true = gt.q.conjugate().rotate(&gt.v);
        let dv = (v_est - v_true).norm_squared();
        sv += dv;
        r.max_velocity_error = r.max_velocity_error.max(dv.sqrt());
        let (a, b) = (est.q.euler_zyx(), gt.q.euler_zyx());
        let d: Vec<f64> = (0..3).map(|i| wrap(a[i] - b[i])).collect();
        srp += d[0] * d[0] + d[1] * d[1];
        sy += d[2] * d[2];
        se += d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
        r.max_orientation_error = r.max_orientation_error.max(est.q.angle_to(&gt.q));
        let dz = est.state.p[2] - gt.p[2];
        sh += dz * dz;
        sp += (est.state.p - gt.p).norm_squared();
    }
    if r.compared > 0 {
        let n = r.compared as f64;
        r.rmse_velocity = (sv / n).sqrt();
        r.rmse_euler = (se / n).sqrt();
        r.rmse_roll_pitch = (srp / n).sqrt();
        r.rmse_yaw = (sy / n).sqrt();
        r.rmse_height = (sh / n).sqrt();
        r.rmse_position = (sp / n).sqrt();
    }
    r
}

/// Mean, 99th percentile (nearest rank) and maximum.
pub fn timing_stats(samples_us: &[f64]) -> TimingStats {
    if samples_us.is_empty() {
        return TimingStats::default();
    }
    let mut s = samples_us.to_vec();
    s.sort_by(f64::total_cmp);
    let rank = ((0.99 * s.len() as f64).ceil() as usize).clamp(1, s.len());
    TimingStats { mean_us: s.iter().sum::<f64>() / s.len() as f64, p99_us: s[rank - 1], max_us: s[s.len() - 1] }
}

impl MetricsReport {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "ticks={}", self.ticks);
        let _ = writeln!(s, "compared={}", self.compared);
        for (k, v) in [
            ("rmse_velocity_body", self.rmse_velocity),
            ("rmse_euler", self.rmse_euler),
            ("rmse_roll_pitch", self.rmse_roll_pitch),
            ("rmse_yaw", self.rmse_yaw),
            ("rmse_height", self.rmse_height),
            ("rmse_position", self.rmse_position),
            ("max_orientation_error", self.max_orientation_error),
            ("max_velocity_error", self.max_velocity_error),
        ] {
            let _ = writeln!(s, "{k}={v:.12e}");
        }
        s
    }
}

impl TimingStats {
    pub fn to_text(&self) -> String {
        format!("solve_us_mean={:.3}\nsolve_us_p99={:.3}\nsolve_us_max={:.3}\n", self.mean_us, self.p99_us, self.max_us)
    }
}

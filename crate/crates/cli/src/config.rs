//! Flat TOML configuration shared by every command.
//!
//! Simulator keys and estimator keys live side by side. Covariances take a
//! list of 3 (diagonal) or 9 (row-major) numbers.

use std::path::Path;

use legmhe::math::{Pose, UnitQuat};
use legmhe::mhe::LoMode;
use legmhe::pipeline::EstimatorConfig;
use legmhe::sim::{Scenario, SimConfig};
use nalgebra::{Matrix3, Vector3};
use serde::Deserialize;

use crate::error::CliError;
use crate::log::LogHeader;

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConfigFile {
    pub scenario: Option<String>,
    pub duration: Option<f64>,
    pub imu_rate: Option<f64>,
    pub vo_rate: Option<f64>,
    pub vo_latency: Option<f64>,
    pub seed: Option<u64>,
    /// Drops every noise source and bias from the simulator.
    pub noise_free: Option<bool>,
    pub accel_noise: Option<f64>,
    pub gyro_noise: Option<f64>,
    pub accel_bias_walk: Option<f64>,
    pub gyro_bias_walk: Option<f64>,
    pub accel_bias: Option<f64>,
    pub gyro_bias: Option<f64>,
    pub lo_position_noise: Option<f64>,
    pub lo_velocity_noise: Option<f64>,
    pub vo_translation_noise: Option<f64>,
    pub vo_rotation_noise: Option<f64>,
    pub vo_orientation_noise: Option<f64>,
    /// qx, qy, qz, qw, tx, ty, tz of the camera in the body frame.
    pub camera: Option<Vec<f64>>,

    pub window: Option<usize>,
    pub lo_mode: Option<String>,
    pub use_vo: Option<bool>,
    pub q_a: Option<Vec<f64>>,
    pub q_omega: Option<Vec<f64>>,
    pub q_ba: Option<Vec<f64>>,
    pub q_bomega: Option<Vec<f64>>,
    pub q_p: Option<Vec<f64>>,
    pub q_foot: Option<Vec<f64>>,
    pub q_pf: Option<Vec<f64>>,
    pub q_vf: Option<Vec<f64>>,
    pub q_slip: Option<Vec<f64>>,
    pub q_vo: Option<Vec<f64>>,
    pub q_yqc: Option<Vec<f64>>,
    /// Gravity-update noise; defaults to `q_a`.
    pub q_gravity: Option<Vec<f64>>,
    pub p0_position: Option<f64>,
    pub p0_velocity: Option<f64>,
    pub p0_foot: Option<f64>,
    pub p0_accel_bias: Option<f64>,
    pub p0_attitude: Option<f64>,
    pub p0_gyro_bias: Option<f64>,
    pub ekf_buffer: Option<usize>,
}

pub fn parse_lo_mode(s: &str) -> Option<LoMode> {
    match s {
        "position" => Some(LoMode::Position),
        "velocity" => Some(LoMode::Velocity),
        "both" => Some(LoMode::Both),
        _ => None,
    }
}

fn covariance(key: &str, v: &[f64]) -> Result<Matrix3<f64>, String> {
    let m = match v.len() {
        3 => Matrix3::from_diagonal(&Vector3::new(v[0], v[1], v[2])),
        9 => Matrix3::from_row_slice(v),
        n => return Err(format!("{key}: expected 3 or 9 numbers, got {n}")),
    };
    if m.iter().any(|x| !x.is_finite()) {
        return Err(format!("{key}: non-finite entry"));
    }
    if (m - m.transpose()).amax() > 1e-12 * m.amax().max(1.0) {
        return Err(format!("{key}: matrix is not symmetric"));
    }
    if m.symmetric_eigenvalues().min() < 0.0 {
        return Err(format!("{key}: matrix is not positive semidefinite"));
    }
    Ok(m)
}

fn non_negative(key: &str, x: f64) -> Result<f64, String> {
    if x.is_finite() && x >= 0.0 {
        Ok(x)
    } else {
        Err(format!("{key}: must be a finite non-negative number"))
    }
}

fn positive(key: &str, x: f64) -> Result<f64, String> {
    if x.is_finite() && x > 0.0 {
        Ok(x)
    } else {
        Err(format!("{key}: must be positive"))
    }
}

macro_rules! apply {
    ($src:expr, $dst:expr, $check:ident: $($key:ident),+) => {
        $(if let Some(x) = $src.$key {
            $dst.$key = $check(stringify!($key), x)?;
        })+
    };
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.message().to_string())
    }

    /// Reads `path`, or returns the defaults when no path is given.
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text).map_err(|message| CliError::ConfigParse { path: path.display().to_string(), message })
    }

    pub fn sim_config(&self) -> Result<SimConfig, String> {
        let mut c = SimConfig::default();
        if let Some(s) = &self.scenario {
            c.scenario = Scenario::from_name(s).ok_or_else(|| format!("scenario: unknown value {s:?}"))?;
        }
        if self.noise_free == Some(true) {
            c = c.noise_free();
        }
        apply!(self, c, positive: imu_rate, vo_rate);
        apply!(self, c, non_negative: duration, vo_latency, accel_noise, gyro_noise, accel_bias_walk, gyro_bias_walk,
            accel_bias, gyro_bias, lo_position_noise, lo_velocity_noise, vo_translation_noise, vo_rotation_noise,
            vo_orientation_noise);
        if let Some(seed) = self.seed {
            c.seed = seed;
        }
        if let Some(v) = &self.camera {
            c.camera = camera(v)?;
        }
        Ok(c)
    }

    /// Estimator settings for a log; rate and camera come from its header.
    pub fn estimator_config(&self, header: &LogHeader) -> Result<EstimatorConfig, String> {
        let mut c = EstimatorConfig::default();
        let n = &mut c.noise;
        if let Some(w) = self.window {
            if w == 0 {
                return Err("window: must be at least 1".into());
            }
            n.window_size = w;
        }
        if let Some(s) = &self.lo_mode {
            n.lo_mode = parse_lo_mode(s).ok_or_else(|| format!("lo_mode: unknown value {s:?}"))?;
        }
        if let Some(b) = self.use_vo {
            n.use_vo = b;
        }
        let covs = [
            ("q_a", &self.q_a, &mut n.q_a),
            ("q_omega", &self.q_omega, &mut n.q_omega),
            ("q_ba", &self.q_ba, &mut n.q_ba),
            ("q_bomega", &self.q_bomega, &mut n.q_bomega),
            ("q_p", &self.q_p, &mut n.q_p),
            ("q_foot", &self.q_foot, &mut n.q_foot),
            ("q_pf", &self.q_pf, &mut n.q_pf),
            ("q_vf", &self.q_vf, &mut n.q_vf),
            ("q_slip", &self.q_slip, &mut n.q_slip),
            ("q_vo", &self.q_vo, &mut n.q_vo),
            ("q_yqc", &self.q_yqc, &mut n.q_yqc),
        ];
        for (key, src, dst) in covs {
            if let Some(v) = src {
                *dst = covariance(key, v)?;
            }
        }
        if let Some(v) = &self.q_gravity {
            c.gravity_noise = Some(covariance("q_gravity", v)?);
        }
        let n = &mut c.noise;
        n.rate = positive("imu_rate", header.imu_rate)?;
        apply!(self, c, non_negative: p0_position, p0_velocity, p0_foot, p0_accel_bias, p0_attitude, p0_gyro_bias);
        if let Some(b) = self.ekf_buffer {
            if b < 2 {
                return Err("ekf_buffer: must be at least 2".into());
            }
            c.ekf_buffer = b;
        }
        c.camera = header.camera;
        Ok(c)
    }
}

fn camera(v: &[f64]) -> Result<Pose, String> {
    if v.len() != 7 || v.iter().any(|x| !x.is_finite()) {
        return Err("camera: expected 7 finite numbers".into());
    }
    if v[..4].iter().map(|x| x * x).sum::<f64>() < 1e-6 {
        return Err("camera: zero quaternion".into());
    }
    Ok(Pose::new(UnitQuat::new(v[0], v[1], v[2], v[3]), Vector3::new(v[4], v[5], v[6])))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header() -> LogHeader {
        LogHeader::from_sim(&SimConfig::default())
    }

    #[test]
    fn empty_file_gives_defaults() {
        let c = ConfigFile::parse("").unwrap();
        assert_eq!(c.sim_config().unwrap(), SimConfig::default());
        let e = c.estimator_config(&header()).unwrap();
        assert_eq!(e.noise.window_size, 20);
    }

    #[test]
    fn diagonal_and_full_covariances() {
        let c = ConfigFile::parse("q_pf = [1e-4, 2e-4, 3e-4]\nq_vf = [1, 0.5, 0, 0.5, 2, 0, 0, 0, 3]\nwindow = 7\nlo_mode = \"velocity\"\n")
            .unwrap();
        let e = c.estimator_config(&header()).unwrap();
        assert_eq!(e.noise.q_pf[(1, 1)], 2e-4);
        assert_eq!(e.noise.q_vf[(0, 1)], 0.5);
        assert_eq!(e.noise.window_size, 7);
        assert_eq!(e.noise.lo_mode, LoMode::Velocity);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(ConfigFile::parse("bogus = 1").is_err());
        assert!(ConfigFile::parse("window = \"x\"").is_err());
        let bad = |s: &str| ConfigFile::parse(s).unwrap().estimator_config(&header()).is_err();
        assert!(bad("q_a = [1, 2]"));
        assert!(bad("q_a = [1, 2, 0, 0, 1, 0, 0, 0, 1]"));
        assert!(bad("q_a = [-1, 1, 1]"));
        assert!(bad("window = 0"));
        assert!(bad("lo_mode = \"sideways\""));
        let sim_bad = |s: &str| ConfigFile::parse(s).unwrap().sim_config().is_err();
        assert!(sim_bad("scenario = \"biped\""));
        assert!(sim_bad("imu_rate = 0"));
        assert!(sim_bad("duration = -1"));
    }

    #[test]
    fn noise_free_then_overrides() {
        let c = ConfigFile::parse("noise_free = true\nlo_position_noise = 0.5\nscenario = \"trot\"\nseed = 9").unwrap();
        let s = c.sim_config().unwrap();
        assert_eq!(s.accel_noise, 0.0);
        assert_eq!(s.lo_position_noise, 0.5);
        assert_eq!(s.scenario, Scenario::Trot);
        assert_eq!(s.seed, 9);
    }
}

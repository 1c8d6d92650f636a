//! Tick-by-tick fusion: the orientation filter runs first, its attitude
//! feeds the linear estimator.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, Matrix3, Matrix6, Vector3};

use crate::ekf::{EkfError, OrientationEkf, OrientationState};
use crate::math::{Pose, RotationMatrix, UnitQuat};
use crate::mhe::{align_vo, state_dim, LegSample, Mhe, MheError, MheState, NoiseConfig, VoIncrement, WindowNode};
use crate::sim::SensorRecord;

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorConfig {
    pub noise: NoiseConfig,
    /// Prior standard deviations.
    pub p0_position: f64,
    pub p0_velocity: f64,
    pub p0_foot: f64,
    pub p0_accel_bias: f64,
    pub p0_attitude: f64,
    pub p0_gyro_bias: f64,
    /// Ticks of attitude history kept for delayed fixes.
    pub ekf_buffer: usize,
    /// Accelerometer noise of the gravity update, before the κ² scaling.
    /// `None` uses `noise.q_a`, which ignores non-gravitational
    /// acceleration and lets stance impulses tilt the estimate.
    pub gravity_noise: Option<Matrix3<f64>>,
    /// Camera pose in the body frame.
    pub camera: Pose,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            noise: NoiseConfig::default(),
            p0_position: 0.01,
            p0_velocity: 0.1,
            p0_foot: 0.05,
            p0_accel_bias: 0.1,
            p0_attitude: 0.02,
            p0_gyro_bias: 0.01,
            ekf_buffer: 400,
            gravity_noise: Some(Matrix3::identity()),
            camera: crate::sim::default_camera(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PipelineError {
    #[error("tick {tick}: {source}")]
    Ekf { tick: usize, source: EkfError },
    #[error("tick {tick}: {source}")]
    Mhe { tick: usize, source: MheError },
    #[error("prior has {got} feet, expected {expected}")]
    FootCount { expected: usize, got: usize },
}

/// Everything delivered at one IMU timestamp.
#[derive(Debug, Clone, PartialEq)]
pub struct Tick {
    pub t: f64,
    pub gyro: Vector3<f64>,
    pub accel: Vector3<f64>,
    pub legs: Vec<Option<LegSample>>,
    pub contact: Option<Vec<bool>>,
    /// Camera-frame motions `(t_from, t_to, motion)`.
    pub vo_increments: Vec<(f64, f64, Pose)>,
    /// World←camera attitudes `(t_frame, q)`.
    pub vo_absolute: Vec<(f64, UnitQuat)>,
    pub truth: Option<Truth>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Truth {
    pub p: Vector3<f64>,
    pub v: Vector3<f64>,
    pub q: UnitQuat,
    pub feet: Vec<Vector3<f64>>,
}

/// Groups records by IMU tick. Leg, contact and truth records attach to the
/// IMU sample with the same time stamp; VO records to the first tick at or
/// after their delivery. Records with no tick are dropped.
pub fn group_ticks(records: &[SensorRecord], n_feet: usize) -> Vec<Tick> {
    let mut ticks: Vec<Tick> = Vec::new();
    let mut pending_inc = Vec::new();
    let mut pending_abs = Vec::new();
    let mut pending_truth = None;
    for r in records {
        match r {
            SensorRecord::Imu { t, gyro, accel } => ticks.push(Tick {
                t: *t,
                gyro: *gyro,
                accel: *accel,
                legs: vec![None; n_feet],
                contact: None,
                vo_increments: core::mem::take(&mut pending_inc),
                vo_absolute: core::mem::take(&mut pending_abs),
                truth: pending_truth.take().filter(|(tt, _)| tt == t).map(|(_, tr)| tr),
            }),
            SensorRecord::Lo { t, foot, position, velocity } => {
                if let Some(tick) = ticks.last_mut().filter(|k| k.t == *t) {
                    if let Some(slot) = tick.legs.get_mut(*foot) {
                        *slot = Some(LegSample { rel_position: *position, rel_velocity: *velocity });
                    }
                }
            }
            SensorRecord::Contact { t, flags } => {
                if let Some(tick) = ticks.last_mut().filter(|k| k.t == *t) {
                    tick.contact = Some(flags.clone());
                }
            }
            SensorRecord::VoIncrement { t, t_from, t_to, translation, rotation } => {
                let inc = (*t_from, *t_to, Pose::new(*rotation, *translation));
                match ticks.last_mut().filter(|k| k.t == *t) {
                    Some(tick) => tick.vo_increments.push(inc),
                    None => pending_inc.push(inc),
                }
            }
            SensorRecord::VoAbsolute { t, t_frame, orientation } => match ticks.last_mut().filter(|k| k.t == *t) {
                Some(tick) => tick.vo_absolute.push((*t_frame, *orientation)),
                None => pending_abs.push((*t_frame, *orientation)),
            },
            SensorRecord::GroundTruth { t, p, v, q, feet } => {
                let truth = Truth { p: *p, v: *v, q: *q, feet: feet.clone() };
                match ticks.last_mut().filter(|k| k.t == *t) {
                    Some(tick) => tick.truth = Some(truth),
                    None => pending_truth = Some((*t, truth)),
                }
            }
        }
    }
    ticks
}

#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub t: f64,
    pub state: MheState,
    pub q: UnitQuat,
    pub gyro_bias: Vector3<f64>,
}

/// Starting point of both filters.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialState {
    pub p: Vector3<f64>,
    pub v: Vector3<f64>,
    pub q: UnitQuat,
    pub feet: Vec<Vector3<f64>>,
}

impl From<&Truth> for InitialState {
    fn from(t: &Truth) -> Self {
        InitialState { p: t.p, v: t.v, q: t.q, feet: t.feet.clone() }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PipelineStats {
    pub vo_increments_used: usize,
    pub vo_increments_skipped: usize,
    pub vo_absolute_used: usize,
    pub vo_absolute_skipped: usize,
}

#[derive(Debug, Clone)]
pub struct Pipeline {
    cfg: EstimatorConfig,
    init: InitialState,
    n_feet: usize,
    keep_history: bool,
    ekf: OrientationEkf,
    mhe: Option<Mhe>,
    contact: Vec<bool>,
    ticks: usize,
    stats: PipelineStats,
}

impl Pipeline {
    pub fn new(cfg: EstimatorConfig, init: InitialState, keep_history: bool) -> Self {
        let n_feet = init.feet.len();
        let mut ekf_cfg = cfg.noise.ekf_config();
        if let Some(r) = cfg.gravity_noise {
            ekf_cfg.accel_noise = r;
        }
        let ekf = OrientationEkf::new(ekf_cfg, cfg.ekf_buffer);
        Pipeline { cfg, init, n_feet, keep_history, ekf, mhe: None, contact: vec![false; n_feet], ticks: 0, stats: PipelineStats::default() }
    }

    pub fn mhe(&self) -> Option<&Mhe> {
        self.mhe.as_ref()
    }

    pub fn mhe_mut(&mut self) -> Option<&mut Mhe> {
        self.mhe.as_mut()
    }

    pub fn ekf(&self) -> &OrientationEkf {
        &self.ekf
    }

    pub fn stats(&self) -> PipelineStats {
        self.stats
    }

    fn prior_covariance(&self) -> DMatrix<f64> {
        let c = &self.cfg;
        let n = state_dim(self.n_feet);
        DMatrix::from_fn(n, n, |i, j| {
            if i != j {
                return 0.0;
            }
            let s = match i {
                0..=2 => c.p0_position,
                3..=5 => c.p0_velocity,
                _ if i < n - 3 => c.p0_foot,
                _ => c.p0_accel_bias,
            };
            s * s
        })
    }

    fn start(&mut self, tick: &Tick) -> Result<(), PipelineError> {
        let t = self.ticks;
        let mut p = Matrix6::zeros();
        for i in 0..3 {
            p[(i, i)] = self.cfg.p0_attitude * self.cfg.p0_attitude;
            p[(i + 3, i + 3)] = self.cfg.p0_gyro_bias * self.cfg.p0_gyro_bias;
        }
        let prior = OrientationState::new(self.init.q, Vector3::zeros(), p);
        self.ekf.initialize(tick.t, prior, tick.gyro, tick.accel).map_err(|source| PipelineError::Ekf { tick: t, source })?;
        let x0 = MheState { p: self.init.p, v: self.init.v, feet: self.init.feet.clone(), accel_bias: Vector3::zeros() };
        let mhe = Mhe::new(self.cfg.noise.clone(), x0, self.prior_covariance(), tick.t, self.keep_history)
            .map_err(|source| PipelineError::Mhe { tick: t, source })?;
        self.mhe = Some(mhe);
        Ok(())
    }

    /// Processes one tick and returns the estimate at its time stamp.
    pub fn step(&mut self, tick: &Tick) -> Result<Estimate, PipelineError> {
        let k = self.ticks;
        let ekf_err = |source| PipelineError::Ekf { tick: k, source };
        let mhe_err = |source| PipelineError::Mhe { tick: k, source };
        if self.mhe.is_none() {
            self.start(tick)?;
        } else {
            self.ekf.process_imu(tick.t, tick.gyro, tick.accel).map_err(ekf_err)?;
        }

        let camera_inv = self.cfg.camera.rotation.conjugate();
        let mut refreshed = false;
        for (t_frame, q_wc) in &tick.vo_absolute {
            match self.ekf.apply_vo(*t_frame, &(*q_wc * camera_inv)) {
                Ok(_) => {
                    self.stats.vo_absolute_used += 1;
                    refreshed = true;
                }
                Err(EkfError::VoTimestampTooOld { .. }) | Err(EkfError::VoTimestampInFuture { .. }) => {
                    self.stats.vo_absolute_skipped += 1
                }
                Err(e) => return Err(ekf_err(e)),
            }
        }

        let mhe = self.mhe.as_mut().unwrap();
        if refreshed {
            for node in mhe.nodes_mut().iter_mut() {
                if let Some(s) = self.ekf.posterior_at(node.t) {
                    node.rotation = s.q.to_rotation();
                    node.gyro_bias = s.gyro_bias;
                }
            }
        }

        if let Some(c) = &tick.contact {
            if c.len() == self.n_feet {
                self.contact.clone_from(c);
            }
        }
        let post = *self.ekf.state().unwrap();
        let node = WindowNode {
            t: tick.t,
            rotation: post.q.to_rotation(),
            gyro_bias: post.gyro_bias,
            accel: tick.accel,
            gyro: tick.gyro,
            legs: tick.legs.clone(),
            contact: self.contact.clone(),
            vo_increment: None,
        };
        mhe.push_node(node).map_err(mhe_err)?;

        if self.cfg.noise.use_vo && !tick.vo_increments.is_empty() {
            let (times, rotations): (Vec<f64>, Vec<RotationMatrix>) =
                self.ekf.buffer().entries().map(|e| (e.t, e.posterior.q.to_rotation())).unzip();
            for (t_from, t_to, motion) in &tick.vo_increments {
                let body = self.cfg.camera.conjugate_motion(motion);
                let inc = VoIncrement { t_from: *t_from, t_to: *t_to, translation: body.translation };
                match align_vo(&inc, &times, &rotations).and_then(|a| mhe.add_vo(a)) {
                    Ok(()) => self.stats.vo_increments_used += 1,
                    Err(MheError::VoGapExceedsWindow { .. }) | Err(MheError::UnsortedVoFrames) => {
                        self.stats.vo_increments_skipped += 1
                    }
                    Err(e) => return Err(mhe_err(e)),
                }
            }
        }

        let state = mhe.solve().map_err(mhe_err)?;
        self.ticks += 1;
        Ok(Estimate { t: tick.t, state, q: post.q, gyro_bias: post.gyro_bias })
    }
}

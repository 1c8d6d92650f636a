//! Iterated error-state EKF for base orientation and gyroscope bias.
//!
//! The true attitude is `q = q̂ ⊗ Exp(δθ)` with `δθ` in the body frame; the
//! error state is `[δθ, δb_ω]`. The accelerometer observes gravity, which
//! fixes roll and pitch; yaw only moves through absolute orientation fixes
//! from visual odometry. Those arrive late, so the filter keeps a short
//! history and replays the samples that followed the fix.

use alloc::collections::VecDeque;

use nalgebra::{Matrix3, Matrix3x6, Matrix6, Matrix6x3, Vector3, Vector6};

use crate::math::{quat_exp, skew, UnitQuat, GRAVITY};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrientationState {
    /// World←body attitude.
    pub q: UnitQuat,
    /// Gyroscope bias (rad/s).
    pub gyro_bias: Vector3<f64>,
    /// Covariance of `[δθ, δb_ω]`.
    pub covariance: Matrix6<f64>,
}

impl OrientationState {
    pub fn new(q: UnitQuat, gyro_bias: Vector3<f64>, covariance: Matrix6<f64>) -> Self {
        OrientationState { q, gyro_bias, covariance }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EkfConfig {
    /// Gyroscope white noise `Q_ω` ((rad/s)²).
    pub gyro_noise: Matrix3<f64>,
    /// Gyroscope bias random walk `Q_bω` ((rad/s)² per second).
    pub gyro_bias_walk: Matrix3<f64>,
    /// Accelerometer noise `Q_a` ((m/s²)²), scaled by κ² at each update.
    pub accel_noise: Matrix3<f64>,
    /// Absolute orientation noise `Q_yqc` (rad²).
    pub vo_orientation_noise: Matrix3<f64>,
    pub iterations: usize,
    /// Relinearization stops once the correction changes by less than this.
    pub tolerance: f64,
    /// Accelerometer samples outside `[low, high]·‖g‖` skip the gravity update.
    pub accel_gate: (f64, f64),
}

impl Default for EkfConfig {
    fn default() -> Self {
        EkfConfig {
            gyro_noise: Matrix3::identity() * (0.002 * 0.002),
            gyro_bias_walk: Matrix3::identity() * (1e-4 * 1e-4),
            accel_noise: Matrix3::identity() * (0.02 * 0.02),
            vo_orientation_noise: Matrix3::identity() * (0.01 * 0.01),
            iterations: 3,
            tolerance: 1e-10,
            accel_gate: (0.1, 3.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EkfError {
    #[error("time step must be positive, got {0}")]
    NonPositiveDt(f64),
    #[error("accelerometer reads {0} g, too close to free fall for a gravity update")]
    FreeFallSample(f64),
    #[error("accelerometer reads {0} g, too large for a gravity update")]
    ImpactSample(f64),
    #[error("orientation fix at {vo_time} s predates the history buffer (oldest {oldest} s)")]
    VoTimestampTooOld { vo_time: f64, oldest: f64 },
    #[error("orientation fix at {vo_time} s is newer than the latest sample ({newest} s)")]
    VoTimestampInFuture { vo_time: f64, newest: f64 },
    #[error("history buffer is empty")]
    EmptyBuffer,
    #[error("sample time {t} s does not advance past {last} s")]
    ClockRegression { t: f64, last: f64 },
}

fn symmetrize(p: &Matrix6<f64>) -> Matrix6<f64> {
    (p + p.transpose()) * 0.5
}

/// Propagates attitude and covariance through one gyroscope sample.
pub fn ekf_predict(
    state: &OrientationState,
    omega_meas: &Vector3<f64>,
    dt: f64,
    q_omega: &Matrix3<f64>,
    q_bias: &Matrix3<f64>,
) -> Result<OrientationState, EkfError> {
    if !(dt > 0.0) {
        return Err(EkfError::NonPositiveDt(dt));
    }
    let omega = omega_meas - state.gyro_bias;
    let dq = quat_exp(&omega, dt);
    let q = state.q * dq;

    let mut f = Matrix6::identity();
    f.fixed_view_mut::<3, 3>(0, 0).copy_from(&dq.to_rotation().0.transpose());
    f.fixed_view_mut::<3, 3>(0, 3).copy_from(&(Matrix3::identity() * -dt));
    let mut qd = Matrix6::zeros();
    qd.fixed_view_mut::<3, 3>(0, 0).copy_from(&(q_omega * (dt * dt)));
    qd.fixed_view_mut::<3, 3>(3, 3).copy_from(&(q_bias * dt));
    let covariance = symmetrize(&(f * state.covariance * f.transpose() + qd));
    Ok(OrientationState { q, gyro_bias: state.gyro_bias, covariance })
}

fn apply_correction(prior: &OrientationState, delta: &Vector6<f64>) -> (UnitQuat, Vector3<f64>) {
    let dtheta = delta.fixed_rows::<3>(0).into_owned();
    let db = delta.fixed_rows::<3>(3).into_owned();
    (prior.q * UnitQuat::exp(&dtheta), prior.gyro_bias + db)
}

fn joseph(p: &Matrix6<f64>, k: &Matrix6x3<f64>, h: &Matrix3x6<f64>, r: &Matrix3<f64>) -> Matrix6<f64> {
    let a = Matrix6::identity() - k * h;
    symmetrize(&(a * p * a.transpose() + k * r * k.transpose()))
}

/// Iterated gravity update from one accelerometer sample.
///
/// The correction is restricted to leave heading untouched: its component
/// along the world vertical is projected out of the gain.
pub fn ekf_update_gravity(
    state: &OrientationState,
    accel_meas: &Vector3<f64>,
    cfg: &EkfConfig,
) -> Result<OrientationState, EkfError> {
    let g = GRAVITY.norm();
    let kappa = accel_meas.norm() / g;
    if kappa < cfg.accel_gate.0 {
        return Err(EkfError::FreeFallSample(kappa));
    }
    if kappa > cfg.accel_gate.1 {
        return Err(EkfError::ImpactSample(kappa));
    }
    let r = cfg.accel_noise * (kappa * kappa);
    let up = -GRAVITY;
    let r_prior = state.q.to_rotation().0;
    let vertical_body = r_prior.transpose() * Vector3::z();
    let mut proj = Matrix6::identity();
    proj.fixed_view_mut::<3, 3>(0, 0)
        .copy_from(&(Matrix3::identity() - vertical_body * vertical_body.transpose()));

    let p = &state.covariance;
    let mut delta = Vector6::zeros();
    let mut gain = Matrix6x3::zeros();
    let mut jac = Matrix3x6::zeros();
    for _ in 0..cfg.iterations.max(1) {
        let (q_i, _) = apply_correction(state, &delta);
        let predicted = q_i.to_rotation().0.transpose() * up;
        jac = Matrix3x6::zeros();
        jac.fixed_view_mut::<3, 3>(0, 0).copy_from(&skew(&predicted));
        let s = jac * p * jac.transpose() + r;
        let s_inv = match s.try_inverse() {
            Some(v) => v,
            None => return Ok(*state),
        };
        let raw = p * jac.transpose() * s_inv;
        gain = proj * raw;
        let innovation = accel_meas - predicted + jac * delta;
        // Projecting the vector (twice) rather than trusting the projected
        // gain keeps the vertical component at rounding level even when the
        // unprojected correction is large along it.
        let mut next = raw * innovation;
        for _ in 0..2 {
            let along = vertical_body.dot(&next.fixed_rows::<3>(0));
            let mut theta = next.fixed_rows_mut::<3>(0);
            theta -= vertical_body * along;
        }
        let change = (next - delta).norm();
        delta = next;
        if change < cfg.tolerance {
            break;
        }
    }
    let (q, gyro_bias) = apply_correction(state, &delta);
    Ok(OrientationState { q, gyro_bias, covariance: joseph(p, &gain, &jac, &r) })
}

/// Iterated update from an absolute attitude measurement.
pub fn ekf_update_vo_orientation(state: &OrientationState, q_vo: &UnitQuat, cfg: &EkfConfig) -> OrientationState {
    let q_vo = if q_vo.dot(&state.q) < 0.0 { -*q_vo } else { *q_vo };
    let mut jac = Matrix3x6::zeros();
    jac.fixed_view_mut::<3, 3>(0, 0).copy_from(&Matrix3::identity());
    let p = &state.covariance;
    let r = cfg.vo_orientation_noise;
    let s = jac * p * jac.transpose() + r;
    let gain = match s.try_inverse() {
        Some(s_inv) => p * jac.transpose() * s_inv,
        None => return *state,
    };
    let mut delta = Vector6::zeros();
    for _ in 0..cfg.iterations.max(1) {
        let (q_i, _) = apply_correction(state, &delta);
        let residual = (q_i.conjugate() * q_vo).log();
        let next = gain * (residual + jac * delta);
        let change = (next - delta).norm();
        delta = next;
        if change < cfg.tolerance {
            break;
        }
    }
    let (q, gyro_bias) = apply_correction(state, &delta);
    OrientationState { q, gyro_bias, covariance: joseph(p, &gain, &jac, &r) }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistoryEntry {
    pub t: f64,
    pub gyro: Vector3<f64>,
    pub accel: Vector3<f64>,
    pub posterior: OrientationState,
}

/// Ring buffer of recent samples and the posteriors computed from them.
#[derive(Debug, Clone, PartialEq)]
pub struct EkfHistoryBuffer {
    capacity: usize,
    entries: VecDeque<HistoryEntry>,
}

impl EkfHistoryBuffer {
    pub fn new(capacity: usize) -> Self {
        EkfHistoryBuffer { capacity: capacity.max(1), entries: VecDeque::with_capacity(capacity.max(1)) }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn head(&self) -> Option<&HistoryEntry> {
        self.entries.back()
    }

    pub fn entries(&self) -> impl Iterator<Item = &HistoryEntry> {
        self.entries.iter()
    }

    pub fn push(&mut self, entry: HistoryEntry) -> Result<(), EkfError> {
        if let Some(last) = self.entries.back() {
            if !(entry.t > last.t) {
                return Err(EkfError::ClockRegression { t: entry.t, last: last.t });
            }
        }
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back(entry);
        Ok(())
    }

    /// Posterior stored for the sample at exactly time `t`.
    pub fn posterior_at(&self, t: f64) -> Option<&OrientationState> {
        let i = self.entries.partition_point(|e| e.t < t);
        self.entries.get(i).filter(|e| e.t == t).map(|e| &e.posterior)
    }

    // Index of the sample nearest `t`; ties go to the earlier sample.
    fn nearest(&self, t: f64) -> Result<usize, EkfError> {
        let (first, last) = match (self.entries.front(), self.entries.back()) {
            (Some(f), Some(l)) => (f.t, l.t),
            _ => return Err(EkfError::EmptyBuffer),
        };
        let half = if self.entries.len() > 1 { 0.5 * (last - first) / (self.entries.len() - 1) as f64 } else { 0.0 };
        if t < first - half {
            return Err(EkfError::VoTimestampTooOld { vo_time: t, oldest: first });
        }
        if t > last + half {
            return Err(EkfError::VoTimestampInFuture { vo_time: t, newest: last });
        }
        let i = self.entries.partition_point(|e| e.t < t);
        if i == 0 {
            return Ok(0);
        }
        if i == self.entries.len() {
            return Ok(i - 1);
        }
        let (before, after) = (t - self.entries[i - 1].t, self.entries[i].t - t);
        Ok(if after < before { i } else { i - 1 })
    }
}

// Posterior at `t` from the previous entry: gyro propagation, then gravity.
fn advance(prev: &HistoryEntry, t: f64, accel: &Vector3<f64>, cfg: &EkfConfig) -> Result<OrientationState, EkfError> {
    let predicted = ekf_predict(&prev.posterior, &prev.gyro, t - prev.t, &cfg.gyro_noise, &cfg.gyro_bias_walk)?;
    match ekf_update_gravity(&predicted, accel, cfg) {
        Ok(s) => Ok(s),
        Err(EkfError::FreeFallSample(_)) | Err(EkfError::ImpactSample(_)) => Ok(predicted),
        Err(e) => Err(e),
    }
}

/// Applies an absolute attitude fix at the buffered sample nearest
/// `vo_time` and recomputes every later posterior. Returns the new head.
pub fn ekf_replay(
    buffer: &mut EkfHistoryBuffer,
    vo_time: f64,
    q_vo: &UnitQuat,
    cfg: &EkfConfig,
) -> Result<OrientationState, EkfError> {
    let idx = buffer.nearest(vo_time)?;
    let fixed = ekf_update_vo_orientation(&buffer.entries[idx].posterior, q_vo, cfg);
    buffer.entries[idx].posterior = fixed;
    for j in idx + 1..buffer.entries.len() {
        let prev = buffer.entries[j - 1];
        let cur = buffer.entries[j];
        buffer.entries[j].posterior = advance(&prev, cur.t, &cur.accel, cfg)?;
    }
    Ok(buffer.entries.back().unwrap().posterior)
}

/// Orientation filter driven one IMU sample at a time.
#[derive(Debug, Clone)]
pub struct OrientationEkf {
    cfg: EkfConfig,
    buffer: EkfHistoryBuffer,
}

impl OrientationEkf {
    pub fn new(cfg: EkfConfig, buffer_capacity: usize) -> Self {
        OrientationEkf { cfg, buffer: EkfHistoryBuffer::new(buffer_capacity) }
    }

    pub fn config(&self) -> &EkfConfig {
        &self.cfg
    }

    pub fn buffer(&self) -> &EkfHistoryBuffer {
        &self.buffer
    }

    pub fn state(&self) -> Option<&OrientationState> {
        self.buffer.head().map(|e| &e.posterior)
    }

    pub fn is_initialized(&self) -> bool {
        !self.buffer.is_empty()
    }

    /// Starts the filter at `t` with a known prior; the first sample only
    /// contributes a gravity update.
    pub fn initialize(
        &mut self,
        t: f64,
        prior: OrientationState,
        gyro: Vector3<f64>,
        accel: Vector3<f64>,
    ) -> Result<OrientationState, EkfError> {
        let posterior = match ekf_update_gravity(&prior, &accel, &self.cfg) {
            Ok(s) => s,
            Err(EkfError::FreeFallSample(_)) | Err(EkfError::ImpactSample(_)) => prior,
            Err(e) => return Err(e),
        };
        self.buffer = EkfHistoryBuffer::new(self.buffer.capacity());
        self.buffer.push(HistoryEntry { t, gyro, accel, posterior })?;
        Ok(posterior)
    }

    pub fn process_imu(&mut self, t: f64, gyro: Vector3<f64>, accel: Vector3<f64>) -> Result<OrientationState, EkfError> {
        let prev = *self.buffer.head().ok_or(EkfError::EmptyBuffer)?;
        if !(t > prev.t) {
            return Err(EkfError::ClockRegression { t, last: prev.t });
        }
        let posterior = advance(&prev, t, &accel, &self.cfg)?;
        self.buffer.push(HistoryEntry { t, gyro, accel, posterior })?;
        Ok(posterior)
    }

    pub fn apply_vo(&mut self, vo_time: f64, q_vo: &UnitQuat) -> Result<OrientationState, EkfError> {
        ekf_replay(&mut self.buffer, vo_time, q_vo, &self.cfg)
    }

    pub fn posterior_at(&self, t: f64) -> Option<&OrientationState> {
        self.buffer.posterior_at(t)
    }
}

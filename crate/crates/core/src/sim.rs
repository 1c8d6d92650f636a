//! Synthetic legged locomotion with ground truth and sensor streams.
//!
//! Motion is generated at the IMU rate with world acceleration and body rate
//! held constant over each tick, so the discrete process model of the
//! estimator is exact on noise-free data.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::math::{quat_exp, Pose, UnitQuat, GRAVITY};
use crate::window::{ConstraintBlock, ConstraintKind, NodeBlock, NoiseTerm};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    /// One leg, long ballistic flights between short stances.
    Hopper,
    /// Four legs, diagonal pairs alternating.
    Trot,
    /// Four legs standing still.
    Static,
}

impl Scenario {
    pub fn n_feet(self) -> usize {
        match self {
            Scenario::Hopper => 1,
            Scenario::Trot | Scenario::Static => 4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Hopper => "hopper",
            Scenario::Trot => "trot",
            Scenario::Static => "static",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "hopper" => Some(Scenario::Hopper),
            "trot" => Some(Scenario::Trot),
            "static" => Some(Scenario::Static),
            _ => None,
        }
    }
}

/// Standard deviations are per sample unless a unit says otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub scenario: Scenario,
    /// Seconds.
    pub duration: f64,
    pub imu_rate: f64,
    pub vo_rate: f64,
    /// Delay between a camera frame and its delivery (s).
    pub vo_latency: f64,
    pub seed: u64,
    /// m/s².
    pub accel_noise: f64,
    /// rad/s.
    pub gyro_noise: f64,
    /// m/s² per √s.
    pub accel_bias_walk: f64,
    /// rad/s per √s.
    pub gyro_bias_walk: f64,
    /// Spread of the initial accelerometer bias per axis (m/s²).
    pub accel_bias: f64,
    /// Spread of the initial gyroscope bias per axis (rad/s).
    pub gyro_bias: f64,
    /// m.
    pub lo_position_noise: f64,
    /// m/s.
    pub lo_velocity_noise: f64,
    /// Per increment and axis (m).
    pub vo_translation_noise: f64,
    /// Per increment and axis (rad).
    pub vo_rotation_noise: f64,
    /// Absolute camera attitude (rad per axis).
    pub vo_orientation_noise: f64,
    /// Camera pose in the body frame, `T_BC`.
    pub camera: Pose,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            scenario: Scenario::Hopper,
            duration: 10.0,
            imu_rate: 200.0,
            vo_rate: 30.0,
            vo_latency: 0.05,
            seed: 1,
            accel_noise: 0.02,
            gyro_noise: 0.002,
            accel_bias_walk: 1e-3,
            gyro_bias_walk: 1e-4,
            accel_bias: 0.05,
            gyro_bias: 0.005,
            lo_position_noise: 0.01,
            lo_velocity_noise: 0.04,
            vo_translation_noise: 0.001,
            vo_rotation_noise: 0.002,
            vo_orientation_noise: 0.01,
            camera: default_camera(),
        }
    }
}

/// Camera looking forward: optical axis along body x, mounted ahead of
/// and above the IMU.
pub fn default_camera() -> Pose {
    let r = UnitQuat::new(-0.5, 0.5, -0.5, 0.5);
    Pose::new(r, Vector3::new(0.2, 0.0, 0.05))
}

impl SimConfig {
    /// Same motion, every noise source and bias removed.
    pub fn noise_free(mut self) -> Self {
        self.accel_noise = 0.0;
        self.gyro_noise = 0.0;
        self.accel_bias_walk = 0.0;
        self.gyro_bias_walk = 0.0;
        self.accel_bias = 0.0;
        self.gyro_bias = 0.0;
        self.lo_position_noise = 0.0;
        self.lo_velocity_noise = 0.0;
        self.vo_translation_noise = 0.0;
        self.vo_rotation_noise = 0.0;
        self.vo_orientation_noise = 0.0;
        self
    }

    pub fn num_ticks(&self) -> usize {
        if self.duration <= 0.0 {
            return 0;
        }
        libm::ceil(self.duration * self.imu_rate - 1e-9) as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrueState {
    pub t: f64,
    pub p: Vector3<f64>,
    pub v: Vector3<f64>,
    pub q: UnitQuat,
    pub feet: Vec<Vector3<f64>>,
    pub contact: Vec<bool>,
    pub accel_bias: Vector3<f64>,
    pub gyro_bias: Vector3<f64>,
    /// World acceleration held over `[t, t + dt)`.
    pub accel: Vector3<f64>,
    /// Body rate held over `[t, t + dt)`.
    pub omega: Vector3<f64>,
    /// World foot velocities at `t`.
    pub foot_velocity: Vec<Vector3<f64>>,
}

/// Records carry values rounded to 1e-9, the resolution of the log format.
#[derive(Debug, Clone, PartialEq)]
pub enum SensorRecord {
    Imu { t: f64, gyro: Vector3<f64>, accel: Vector3<f64> },
    /// Leg odometry in the body frame: foot position `fk` and `J α̇`.
    Lo { t: f64, foot: usize, position: Vector3<f64>, velocity: Vector3<f64> },
    Contact { t: f64, flags: Vec<bool> },
    /// Camera motion from frame `t_from` to `t_to`, expressed in the camera
    /// frame at `t_from`; delivered at `t`.
    VoIncrement { t: f64, t_from: f64, t_to: f64, translation: Vector3<f64>, rotation: UnitQuat },
    /// World←camera attitude of the frame at `t_frame`; delivered at `t`.
    VoAbsolute { t: f64, t_frame: f64, orientation: UnitQuat },
    GroundTruth { t: f64, p: Vector3<f64>, v: Vector3<f64>, q: UnitQuat, feet: Vec<Vector3<f64>> },
}

impl SensorRecord {
    /// Delivery time.
    pub fn time(&self) -> f64 {
        match self {
            SensorRecord::Imu { t, .. }
            | SensorRecord::Lo { t, .. }
            | SensorRecord::Contact { t, .. }
            | SensorRecord::VoIncrement { t, .. }
            | SensorRecord::VoAbsolute { t, .. }
            | SensorRecord::GroundTruth { t, .. } => *t,
        }
    }

    fn rank(&self) -> u8 {
        match self {
            SensorRecord::GroundTruth { .. } => 0,
            SensorRecord::Imu { .. } => 1,
            SensorRecord::Contact { .. } => 2,
            SensorRecord::Lo { .. } => 3,
            SensorRecord::VoIncrement { .. } => 4,
            SensorRecord::VoAbsolute { .. } => 5,
        }
    }
}

pub fn quantize(x: f64) -> f64 {
    let r = libm::round(x * 1e9) / 1e9;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

pub fn quantize_vec(v: &Vector3<f64>) -> Vector3<f64> {
    v.map(quantize)
}

pub fn quantize_quat(q: &UnitQuat) -> UnitQuat {
    let c = q.canonical();
    UnitQuat::from_raw(quantize(c.x), quantize(c.y), quantize(c.z), quantize(c.w))
}

fn gauss<R: Rng>(rng: &mut R, sigma: f64) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    z * sigma
}

fn gauss3<R: Rng>(rng: &mut R, sigma: f64) -> Vector3<f64> {
    Vector3::new(gauss(rng, sigma), gauss(rng, sigma), gauss(rng, sigma))
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn blend(u: f64) -> f64 {
    0.5 * (1.0 - libm::cos(PI * u))
}

fn sin2pi(f: f64, t: f64, phase: f64) -> f64 {
    libm::sin(2.0 * PI * f * t + phase)
}

fn yaw_rotate(q: &UnitQuat, xy: (f64, f64)) -> Vector3<f64> {
    let yaw = q.euler_zyx()[2];
    let (s, c) = (libm::sin(yaw), libm::cos(yaw));
    Vector3::new(c * xy.0 - s * xy.1, s * xy.0 + c * xy.1, 0.0)
}

const HIPS: [(f64, f64); 4] = [(0.19, 0.05), (0.19, -0.05), (-0.19, 0.05), (-0.19, -0.05)];

struct Base {
    p: Vec<Vector3<f64>>,
    v: Vec<Vector3<f64>>,
    q: Vec<UnitQuat>,
    a: Vec<Vector3<f64>>,
    w: Vec<Vector3<f64>>,
}

// Integrates per-tick accelerations and rates from an initial pose.
fn integrate(p0: Vector3<f64>, v0: Vector3<f64>, q0: UnitQuat, a: Vec<Vector3<f64>>, w: Vec<Vector3<f64>>, dt: f64) -> Base {
    let n = a.len();
    let (mut p, mut v, mut q) = (Vec::with_capacity(n + 1), Vec::with_capacity(n + 1), Vec::with_capacity(n + 1));
    p.push(p0);
    v.push(v0);
    q.push(q0);
    for k in 0..n {
        p.push(p[k] + v[k] * dt + a[k] * (0.5 * dt * dt));
        v.push(v[k] + a[k] * dt);
        q.push(q[k] * quat_exp(&w[k], dt));
    }
    Base { p, v, q, a, w }
}

fn hopper_base(n: usize, dt: f64, rng: &mut ChaCha8Rng) -> (Base, usize, usize) {
    let n_s = libm::round(0.15 / dt) as usize;
    let n_f = libm::round(0.35 / dt) as usize;
    let cycle = n_s + n_f;
    let lift = -GRAVITY[2] * n_f as f64 * dt / 2.0;
    let s: Vec<f64> = (0..n_s).map(|j| libm::sin(PI * (j as f64 + 0.5) / n_s as f64)).collect();
    let s_sum: f64 = s.iter().sum();
    let thrust = (2.0 * lift - GRAVITY[2] * n_s as f64 * dt) / (dt * s_sum);

    let q0 = UnitQuat::exp(&Vector3::new(0.02, -0.03, 0.1));
    let mut v = Vector3::new(0.3, 0.0, -lift);
    let mut a = Vec::with_capacity(n);
    let mut w = Vec::with_capacity(n);
    let mut push_xy = (0.0, 0.0);
    for k in 0..n {
        let c = k % cycle;
        let t = k as f64 * dt;
        if c == 0 {
            let target = (rng.random_range(0.2..0.8), rng.random_range(-0.3..0.3));
            push_xy = ((target.0 - v[0]) / (dt * s_sum), (target.1 - v[1]) / (dt * s_sum));
        }
        let acc = if c < n_s {
            Vector3::new(push_xy.0 * s[c], push_xy.1 * s[c], GRAVITY[2] + thrust * s[c])
        } else {
            GRAVITY
        };
        v += acc * dt;
        a.push(acc);
        w.push(Vector3::new(0.3 * sin2pi(0.7, t, 0.0), 0.25 * sin2pi(0.5, t, 1.0), 0.15));
    }
    (integrate(Vector3::new(0.0, 0.0, 0.5), Vector3::new(0.3, 0.0, -lift), q0, a, w, dt), n_s, n_f)
}

fn trot_velocity(t: f64) -> Vector3<f64> {
    Vector3::new(0.5 + 0.2 * sin2pi(0.2, t, 0.0), 0.1 * sin2pi(0.13, t, 0.0), 0.04 * PI * libm::cos(4.0 * PI * t))
}

fn trot_base(n: usize, dt: f64) -> Base {
    let a = (0..n).map(|k| (trot_velocity((k + 1) as f64 * dt) - trot_velocity(k as f64 * dt)) / dt).collect();
    let w = (0..n)
        .map(|k| {
            let t = k as f64 * dt;
            Vector3::new(0.05 * sin2pi(1.3, t, 0.0), 0.05 * sin2pi(1.1, t, 0.5), 0.1 + 0.15 * sin2pi(0.1, t, 0.0))
        })
        .collect();
    integrate(Vector3::new(0.0, 0.0, 0.3), trot_velocity(0.0), UnitQuat::exp(&Vector3::new(0.01, 0.02, 0.0)), a, w, dt)
}

/// Ground-truth trajectory at the IMU rate.
pub fn generate_trajectory(cfg: &SimConfig) -> Vec<TrueState> {
    let n = cfg.num_ticks();
    let dt = 1.0 / cfg.imu_rate;
    let mut rng = stream(cfg.seed, 1);
    let nf = cfg.scenario.n_feet();

    // Base motion, a cycle past the end so swing targets exist.
    let extra = libm::round(0.6 / dt) as usize;
    let total = n + extra + 1;
    let mut feet: Vec<Vec<Vector3<f64>>> = vec![vec![Vector3::zeros(); nf]; total + 1];
    let mut contact: Vec<Vec<bool>> = vec![vec![true; nf]; total + 1];
    let base = match cfg.scenario {
        Scenario::Hopper => {
            let (base, n_s, n_f) = hopper_base(total, dt, &mut rng);
            let cycle = n_s + n_f;
            let touch = |k: usize| {
                let p = base.p[k];
                Vector3::new(p[0], p[1], 0.0)
            };
            for k in 0..=total {
                let c = k % cycle;
                let td = k - c;
                if c <= n_s {
                    feet[k][0] = touch(td);
                    // Lift-off tick: still on the ground, moving by the next one.
                    contact[k][0] = c < n_s;
                } else {
                    let u = (c - n_s) as f64 / n_f as f64;
                    let (f0, f1) = (touch(td), touch((td + cycle).min(total)));
                    feet[k][0] = f0 + (f1 - f0) * blend(u) + Vector3::new(0.0, 0.0, 0.1 * libm::sin(PI * u));
                    contact[k][0] = false;
                }
            }
            base
        }
        Scenario::Trot => {
            let base = trot_base(total, dt);
            let n_cycle = libm::round(0.5 / dt) as usize;
            let n_st = libm::round(0.3 / dt) as usize;
            let half = n_cycle / 2;
            let touch = |start: isize, hip: (f64, f64)| {
                let k = start.clamp(0, total as isize) as usize;
                let p = base.p[k];
                let lead = base.v[k] * (n_st as f64 * dt / 2.0);
                Vector3::new(p[0] + lead[0], p[1] + lead[1], 0.0) + yaw_rotate(&base.q[k], hip)
            };
            for (foot, &hip) in HIPS.iter().enumerate() {
                let offset = if foot == 0 || foot == 3 { 0 } else { half };
                for k in 0..=total {
                    let c = (k + offset) % n_cycle;
                    let start = k as isize - c as isize;
                    if c <= n_st {
                        feet[k][foot] = touch(start, hip);
                        contact[k][foot] = c < n_st;
                    } else {
                        let u = (c - n_st) as f64 / (n_cycle - n_st) as f64;
                        let (f0, f1) = (touch(start, hip), touch(start + n_cycle as isize, hip));
                        feet[k][foot] = f0 + (f1 - f0) * blend(u) + Vector3::new(0.0, 0.0, 0.08 * libm::sin(PI * u));
                        contact[k][foot] = false;
                    }
                }
            }
            base
        }
        Scenario::Static => {
            let q0 = UnitQuat::exp(&Vector3::new(0.02, -0.01, 0.3));
            let base = integrate(Vector3::new(0.0, 0.0, 0.3), Vector3::zeros(), q0, vec![Vector3::zeros(); total], vec![Vector3::zeros(); total], dt);
            for k in 0..=total {
                for (foot, &hip) in HIPS.iter().enumerate() {
                    feet[k][foot] = Vector3::new(0.0, 0.0, 0.0) + yaw_rotate(&q0, hip);
                }
            }
            base
        }
    };

    let mut ba = gauss3(&mut rng, cfg.accel_bias);
    let mut bw = gauss3(&mut rng, cfg.gyro_bias);
    let sq = libm::sqrt(dt);
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let foot_velocity = (0..nf).map(|i| (feet[k + 1][i] - feet[k][i]) / dt).collect();
        out.push(TrueState {
            t: k as f64 * dt,
            p: base.p[k],
            v: base.v[k],
            q: base.q[k],
            feet: feet[k].clone(),
            contact: contact[k].clone(),
            accel_bias: ba,
            gyro_bias: bw,
            accel: base.a[k],
            omega: base.w[k],
            foot_velocity,
        });
        ba += gauss3(&mut rng, cfg.accel_bias_walk * sq);
        bw += gauss3(&mut rng, cfg.gyro_bias_walk * sq);
    }
    out
}

// Body pose between two ticks: position linear, attitude along the geodesic.
fn pose_at(traj: &[TrueState], t: f64, dt: f64) -> Pose {
    let f = t / dt;
    let k = (libm::floor(f + 1e-9) as usize).min(traj.len() - 1);
    let u = (f - k as f64).max(0.0);
    if u < 1e-9 || k + 1 >= traj.len() {
        return Pose::new(traj[k].q, traj[k].p);
    }
    let (a, b) = (&traj[k], &traj[k + 1]);
    let dq = (a.q.conjugate() * b.q).log();
    Pose::new(a.q * UnitQuat::exp(&(dq * u)), a.p + (b.p - a.p) * u)
}

/// Sensor streams for a trajectory, sorted by delivery time. Ground truth
/// is not included; see [`ground_truth_records`].
pub fn synthesize_sensors(traj: &[TrueState], cfg: &SimConfig) -> Vec<SensorRecord> {
    let mut imu_rng = stream(cfg.seed, 2);
    let mut lo_rng = stream(cfg.seed, 3);
    let mut vo_rng = stream(cfg.seed, 4);
    let dt = 1.0 / cfg.imu_rate;
    let mut out = Vec::new();
    for s in traj {
        let t = quantize(s.t);
        let r = s.q.to_rotation().0;
        let accel = r.transpose() * (s.accel - GRAVITY) + s.accel_bias + gauss3(&mut imu_rng, cfg.accel_noise);
        let gyro = s.omega + s.gyro_bias + gauss3(&mut imu_rng, cfg.gyro_noise);
        out.push(SensorRecord::Imu { t, gyro: quantize_vec(&gyro), accel: quantize_vec(&accel) });
        out.push(SensorRecord::Contact { t, flags: s.contact.clone() });
        for (i, f) in s.feet.iter().enumerate() {
            let fk = r.transpose() * (f - s.p);
            let jv = r.transpose() * (s.foot_velocity[i] - s.v) - s.omega.cross(&fk);
            let position = fk + gauss3(&mut lo_rng, cfg.lo_position_noise);
            let velocity = jv + gauss3(&mut lo_rng, cfg.lo_velocity_noise);
            out.push(SensorRecord::Lo { t, foot: i, position: quantize_vec(&position), velocity: quantize_vec(&velocity) });
        }
    }

    if let Some(last) = traj.last() {
        let mut prev: Option<(f64, Pose)> = None;
        let mut j = 0usize;
        loop {
            let tf = j as f64 / cfg.vo_rate;
            if tf > last.t + 1e-9 {
                break;
            }
            let tq = quantize(tf);
            let wc = pose_at(traj, tf, dt) * cfg.camera;
            let arrival = quantize(tf + cfg.vo_latency);
            if let Some((tp, pc)) = prev {
                let rel = pc.inverse() * wc;
                let translation = rel.translation + gauss3(&mut vo_rng, cfg.vo_translation_noise);
                let rotation = rel.rotation * UnitQuat::exp(&gauss3(&mut vo_rng, cfg.vo_rotation_noise));
                out.push(SensorRecord::VoIncrement {
                    t: arrival,
                    t_from: tp,
                    t_to: tq,
                    translation: quantize_vec(&translation),
                    rotation: quantize_quat(&rotation),
                });
            }
            let orientation = wc.rotation * UnitQuat::exp(&gauss3(&mut vo_rng, cfg.vo_orientation_noise));
            out.push(SensorRecord::VoAbsolute { t: arrival, t_frame: tq, orientation: quantize_quat(&orientation) });
            prev = Some((tq, wc));
            j += 1;
        }
    }
    sort_records(&mut out);
    out
}

pub fn ground_truth_records(traj: &[TrueState]) -> Vec<SensorRecord> {
    traj.iter()
        .map(|s| SensorRecord::GroundTruth {
            t: quantize(s.t),
            p: quantize_vec(&s.p),
            v: quantize_vec(&s.v),
            q: quantize_quat(&s.q),
            feet: s.feet.iter().map(quantize_vec).collect(),
        })
        .collect()
}

/// Stable order by delivery time, then record type.
pub fn sort_records(records: &mut [SensorRecord]) {
    records.sort_by(|a, b| a.time().total_cmp(&b.time()).then(a.rank().cmp(&b.rank())));
}

/// Sensor streams merged with ground truth.
pub fn simulate(cfg: &SimConfig) -> Vec<SensorRecord> {
    let traj = generate_trajectory(cfg);
    let mut records = synthesize_sensors(&traj, cfg);
    records.extend(ground_truth_records(&traj));
    sort_records(&mut records);
    records
}

/// A random chain of linear-Gaussian nodes for exactness checks.
#[derive(Debug, Clone)]
pub struct LinearInstance {
    pub state_dim: usize,
    pub window: usize,
    pub prior_mean: DVector<f64>,
    pub prior_covariance: DMatrix<f64>,
    pub nodes: Vec<NodeBlock>,
}

fn random_spd(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| gauss(rng, 1.0));
    (&a * a.transpose() + DMatrix::identity(n, n) * n as f64) * (scale / n as f64)
}

/// Random dynamics and measurements, with hard equality rows on some
/// nodes. State dimension 1..=8, window 2..=6.
pub fn random_linear_instance(seed: u64, num_nodes: usize, hard_constraints: bool) -> LinearInstance {
    let mut rng = stream(seed, 7);
    let n = rng.random_range(1..=8usize);
    let window = rng.random_range(2..=6usize);
    let prior_mean = DVector::from_fn(n, |_, _| gauss(&mut rng, 1.0));
    let prior_covariance = random_spd(&mut rng, n, 1.0);
    let mut nodes = Vec::with_capacity(num_nodes);
    for k in 0..num_nodes {
        let mut block = NodeBlock::new(k as f64, n);
        if k + 1 < num_nodes {
            let a = DMatrix::identity(n, n) + DMatrix::from_fn(n, n, |_, _| gauss(&mut rng, 0.2));
            block.constraints.push(ConstraintBlock {
                kind: ConstraintKind::Dynamics,
                current: -a,
                next: Some(DMatrix::identity(n, n)),
                rhs: DVector::from_fn(n, |_, _| gauss(&mut rng, 0.5)),
                noise: Some(NoiseTerm { sign: -1.0, covariance: random_spd(&mut rng, n, 0.1) }),
            });
        }
        let m = rng.random_range(1..=n);
        block.constraints.push(ConstraintBlock {
            kind: ConstraintKind::Measurement,
            current: DMatrix::from_fn(m, n, |_, _| gauss(&mut rng, 1.0)),
            next: None,
            rhs: DVector::from_fn(m, |_, _| gauss(&mut rng, 1.0)),
            noise: Some(NoiseTerm { sign: 1.0, covariance: random_spd(&mut rng, m, 0.5) }),
        });
        if hard_constraints && n > 1 && rng.random_bool(0.4) {
            let rows = rng.random_range(1..n);
            block.constraints.push(ConstraintBlock {
                kind: ConstraintKind::Contact,
                current: DMatrix::from_fn(rows, n, |_, _| gauss(&mut rng, 1.0)),
                next: None,
                rhs: DVector::from_fn(rows, |_, _| gauss(&mut rng, 1.0)),
                noise: None,
            });
        }
        nodes.push(block);
    }
    LinearInstance { state_dim: n, window, prior_mean, prior_covariance, nodes }
}

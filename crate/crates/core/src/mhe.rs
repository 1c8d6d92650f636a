//! Legged-robot moving horizon estimator.
//!
//! State `x = [p, v, p_foot_1 .. p_foot_n, b_a]` (world position, world
//! velocity, world foot positions, body accelerometer bias). The attitude is
//! not estimated here: every node carries the orientation filter's `R̂` and
//! gyro bias, which makes all constraints linear in `x`.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};

use crate::ekf::EkfConfig;
use crate::marginalization::{prior_arrival, ArrivalCost, MarginalizationError};
use crate::math::{bezier_through_knots, skew, BezierError, RotationMatrix, GRAVITY};
use crate::qp::{QpOptions, QpProblem};
use crate::window::{
    assemble_window, marginalize_front, solve_window, ConstraintBlock, ConstraintKind, NodeBlock, NoiseTerm,
    WindowError, WindowSolution,
};

#[derive(Debug, Clone, PartialEq)]
pub struct MheState {
    pub p: Vector3<f64>,
    pub v: Vector3<f64>,
    pub feet: Vec<Vector3<f64>>,
    pub accel_bias: Vector3<f64>,
}

pub const fn state_dim(n_feet: usize) -> usize {
    9 + 3 * n_feet
}

impl MheState {
    pub fn zeros(n_feet: usize) -> Self {
        MheState { p: Vector3::zeros(), v: Vector3::zeros(), feet: vec![Vector3::zeros(); n_feet], accel_bias: Vector3::zeros() }
    }

    pub fn n_feet(&self) -> usize {
        self.feet.len()
    }

    pub fn dim(&self) -> usize {
        state_dim(self.n_feet())
    }

    pub fn to_vector(&self) -> DVector<f64> {
        let mut x = DVector::zeros(self.dim());
        x.fixed_rows_mut::<3>(0).copy_from(&self.p);
        x.fixed_rows_mut::<3>(3).copy_from(&self.v);
        for (i, f) in self.feet.iter().enumerate() {
            x.fixed_rows_mut::<3>(6 + 3 * i).copy_from(f);
        }
        x.fixed_rows_mut::<3>(6 + 3 * self.n_feet()).copy_from(&self.accel_bias);
        x
    }

    pub fn from_vector(x: &DVector<f64>, n_feet: usize) -> Self {
        assert_eq!(x.len(), state_dim(n_feet));
        MheState {
            p: x.fixed_rows::<3>(0).into_owned(),
            v: x.fixed_rows::<3>(3).into_owned(),
            feet: (0..n_feet).map(|i| x.fixed_rows::<3>(6 + 3 * i).into_owned()).collect(),
            accel_bias: x.fixed_rows::<3>(6 + 3 * n_feet).into_owned(),
        }
    }
}

/// Leg kinematics for one foot, body frame: the forward-kinematics foot
/// position `fk(α)` and the joint-rate term `J(α) α̇`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LegSample {
    pub rel_position: Vector3<f64>,
    pub rel_velocity: Vector3<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowNode {
    pub t: f64,
    /// Attitude estimate `R̂_WB` at this tick.
    pub rotation: RotationMatrix,
    /// Gyro bias estimate at this tick.
    pub gyro_bias: Vector3<f64>,
    pub accel: Vector3<f64>,
    pub gyro: Vector3<f64>,
    pub legs: Vec<Option<LegSample>>,
    pub contact: Vec<bool>,
    /// World-frame VO displacement from this tick to the next.
    pub vo_increment: Option<Vector3<f64>>,
}

impl WindowNode {
    pub fn n_feet(&self) -> usize {
        self.contact.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LoForm {
    Position,
    Velocity,
}

/// Which leg-odometry rows the estimator adds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LoMode {
    Position,
    Velocity,
    /// Position rows whenever a sample exists, velocity rows in contact.
    Both,
}

/// Noise model and window settings. Dynamics covariances are per tick unless
/// noted.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseConfig {
    /// Accelerometer white noise ((m/s²)²).
    pub q_a: Matrix3<f64>,
    /// Gyroscope white noise ((rad/s)²).
    pub q_omega: Matrix3<f64>,
    /// Accelerometer bias walk per tick ((m/s²)²).
    pub q_ba: Matrix3<f64>,
    /// Gyroscope bias walk ((rad/s)² per second).
    pub q_bomega: Matrix3<f64>,
    /// Position process noise per tick (m²).
    pub q_p: Matrix3<f64>,
    /// Foot relocation noise per tick (m²).
    pub q_foot: Matrix3<f64>,
    /// Leg-odometry position noise (m²).
    pub q_pf: Matrix3<f64>,
    /// Leg-odometry velocity noise ((m/s)²).
    pub q_vf: Matrix3<f64>,
    /// Foot slip allowance added to `q_vf` ((m/s)²).
    pub q_slip: Matrix3<f64>,
    /// VO displacement noise per tick (m²).
    pub q_vo: Matrix3<f64>,
    /// Absolute VO attitude noise (rad²).
    pub q_yqc: Matrix3<f64>,
    pub window_size: usize,
    /// Estimator rate (Hz).
    pub rate: f64,
    pub lo_mode: LoMode,
    pub use_vo: bool,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        let d = |s: f64| Matrix3::identity() * (s * s);
        NoiseConfig {
            q_a: d(0.02),
            q_omega: d(0.002),
            q_ba: d(1e-4),
            q_bomega: d(1e-4),
            q_p: d(1e-4),
            q_foot: Matrix3::identity() * 1e2,
            q_pf: d(0.01),
            q_vf: d(0.04),
            q_slip: d(0.03),
            q_vo: d(0.001),
            q_yqc: d(0.01),
            window_size: 20,
            rate: 200.0,
            lo_mode: LoMode::Both,
            use_vo: true,
        }
    }
}

impl NoiseConfig {
    pub fn ekf_config(&self) -> EkfConfig {
        EkfConfig {
            gyro_noise: self.q_omega,
            gyro_bias_walk: self.q_bomega,
            accel_noise: self.q_a,
            vo_orientation_noise: self.q_yqc,
            ..EkfConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MheError {
    #[error("nodes at {t0} s and {t1} s are not one tick apart")]
    NonConsecutiveNodes { t0: f64, t1: f64 },
    #[error("foot {0} is out of range")]
    FootOutOfRange(usize),
    #[error("no leg sample for foot {0}")]
    NoSampleForFoot(usize),
    #[error("velocity leg odometry for foot {0} needs contact")]
    VelocityFormWithoutContact(usize),
    #[error("foot {0} is not in contact")]
    NotInContact(usize),
    #[error("node time {t} s does not advance past {last} s")]
    ClockRegression { t: f64, last: f64 },
    #[error("VO frames are not in time order")]
    UnsortedVoFrames,
    #[error("VO span {t_from}..{t_to} s does not fit the estimator history")]
    VoGapExceedsWindow { t_from: f64, t_to: f64 },
    #[error("node has {got} feet, expected {expected}")]
    FootCountMismatch { expected: usize, got: usize },
    #[error("estimator has no nodes")]
    Empty,
    #[error(transparent)]
    Window(#[from] WindowError),
    #[error(transparent)]
    Marginalization(#[from] MarginalizationError),
    #[error(transparent)]
    Bezier(#[from] BezierError),
}

fn rotated(r: &RotationMatrix, q: &Matrix3<f64>) -> Matrix3<f64> {
    let m = r.0 * q * r.0.transpose();
    (m + m.transpose()) * 0.5
}

fn put(m: &mut DMatrix<f64>, row: usize, col: usize, block: &Matrix3<f64>) {
    m.fixed_view_mut::<3, 3>(row, col).copy_from(block);
}

/// `x_{k+1} = A_k x_k + b_k + δx_k` with the attitude frozen at node `k`.
pub fn build_dynamics_constraint(
    node_k: &WindowNode,
    node_k1: &WindowNode,
    cfg: &NoiseConfig,
) -> Result<ConstraintBlock, MheError> {
    let dt = node_k1.t - node_k.t;
    if !(dt > 0.0) || (dt - 1.0 / cfg.rate).abs() > 1e-6 {
        return Err(MheError::NonConsecutiveNodes { t0: node_k.t, t1: node_k1.t });
    }
    let nf = node_k.n_feet();
    if node_k1.n_feet() != nf {
        return Err(MheError::FootCountMismatch { expected: nf, got: node_k1.n_feet() });
    }
    let n = state_dim(nf);
    let ba = 6 + 3 * nf;
    let r = node_k.rotation.0;
    let i3 = Matrix3::identity();

    let mut a = DMatrix::identity(n, n);
    put(&mut a, 0, 3, &(i3 * dt));
    put(&mut a, 0, ba, &(r * (-0.5 * dt * dt)));
    put(&mut a, 3, ba, &(r * -dt));

    let acc = r * node_k.accel + GRAVITY;
    let mut b = DVector::zeros(n);
    b.fixed_rows_mut::<3>(0).copy_from(&(acc * (0.5 * dt * dt)));
    b.fixed_rows_mut::<3>(3).copy_from(&(acc * dt));

    let qa = rotated(&node_k.rotation, &cfg.q_a);
    let mut q = DMatrix::zeros(n, n);
    put(&mut q, 0, 0, &(rotated(&node_k.rotation, &cfg.q_p) + qa * (0.25 * dt * dt * dt * dt)));
    put(&mut q, 0, 3, &(qa * (0.5 * dt * dt * dt)));
    put(&mut q, 3, 0, &(qa * (0.5 * dt * dt * dt)));
    put(&mut q, 3, 3, &(qa * (dt * dt)));
    let qf = rotated(&node_k.rotation, &cfg.q_foot);
    for i in 0..nf {
        put(&mut q, 6 + 3 * i, 6 + 3 * i, &qf);
    }
    put(&mut q, ba, ba, &cfg.q_ba);

    Ok(ConstraintBlock {
        kind: ConstraintKind::Dynamics,
        current: -a,
        next: Some(DMatrix::identity(n, n)),
        rhs: b,
        noise: Some(NoiseTerm { sign: -1.0, covariance: q }),
    })
}

/// Leg-odometry rows for one foot.
///
/// Position form: `p − p_foot + δ = −R̂ fk`. Velocity form (contact only):
/// `v + δ = −R̂ J α̇ − R̂ (ω̃ − b̂_ω)× fk`.
pub fn build_lo_constraint(
    node: &WindowNode,
    foot: usize,
    form: LoForm,
    cfg: &NoiseConfig,
) -> Result<ConstraintBlock, MheError> {
    let nf = node.n_feet();
    if foot >= nf || node.legs.len() != nf {
        return Err(MheError::FootOutOfRange(foot));
    }
    let leg = node.legs[foot].ok_or(MheError::NoSampleForFoot(foot))?;
    let n = state_dim(nf);
    let r = node.rotation.0;
    let mut current = DMatrix::zeros(3, n);
    let (rhs, cov) = match form {
        LoForm::Position => {
            put(&mut current, 0, 0, &Matrix3::identity());
            put(&mut current, 0, 6 + 3 * foot, &-Matrix3::identity());
            (-(r * leg.rel_position), rotated(&node.rotation, &cfg.q_pf))
        }
        LoForm::Velocity => {
            if !node.contact[foot] {
                return Err(MheError::VelocityFormWithoutContact(foot));
            }
            put(&mut current, 0, 3, &Matrix3::identity());
            let omega = node.gyro - node.gyro_bias;
            let y = -(r * leg.rel_velocity) - r * skew(&omega) * leg.rel_position;
            (y, rotated(&node.rotation, &(cfg.q_vf + cfg.q_slip)))
        }
    };
    Ok(ConstraintBlock {
        kind: ConstraintKind::LegOdometry,
        current,
        next: None,
        rhs: DVector::from_column_slice(rhs.as_slice()),
        noise: Some(NoiseTerm { sign: 1.0, covariance: DMatrix::from_column_slice(3, 3, cov.as_slice()) }),
    })
}

/// Hard no-slip rows `p_foot,k+1 − p_foot,k = 0`. Contact at node k means the
/// foot holds still until node k+1, so only node k's flag matters.
pub fn build_contact_constraint(node: &WindowNode, node_next: &WindowNode, foot: usize) -> Result<ConstraintBlock, MheError> {
    let nf = node.n_feet();
    if foot >= nf || node_next.n_feet() != nf {
        return Err(MheError::FootOutOfRange(foot));
    }
    if !node.contact[foot] {
        return Err(MheError::NotInContact(foot));
    }
    let n = state_dim(nf);
    let mut current = DMatrix::zeros(3, n);
    put(&mut current, 0, 6 + 3 * foot, &-Matrix3::identity());
    let mut next = DMatrix::zeros(3, n);
    put(&mut next, 0, 6 + 3 * foot, &Matrix3::identity());
    Ok(ConstraintBlock { kind: ConstraintKind::Contact, current, next: Some(next), rhs: DVector::zeros(3), noise: None })
}

/// `p_{k+1} − p_k + δc = ỹ_c` for a node that carries a VO displacement.
pub fn build_vo_constraint(node: &WindowNode, cfg: &NoiseConfig) -> Option<ConstraintBlock> {
    let y = node.vo_increment?;
    let n = state_dim(node.n_feet());
    let mut current = DMatrix::zeros(3, n);
    put(&mut current, 0, 0, &-Matrix3::identity());
    let mut next = DMatrix::zeros(3, n);
    put(&mut next, 0, 0, &Matrix3::identity());
    Some(ConstraintBlock {
        kind: ConstraintKind::VisualOdometry,
        current,
        next: Some(next),
        rhs: DVector::from_column_slice(y.as_slice()),
        noise: Some(NoiseTerm { sign: 1.0, covariance: DMatrix::from_column_slice(3, 3, cfg.q_vo.as_slice()) }),
    })
}

/// All constraints owned by `node`; `next` is the following node, if any.
pub fn node_block(node: &WindowNode, next: Option<&WindowNode>, cfg: &NoiseConfig) -> Result<NodeBlock, MheError> {
    let nf = node.n_feet();
    if node.legs.len() != nf {
        return Err(MheError::FootCountMismatch { expected: nf, got: node.legs.len() });
    }
    let mut block = NodeBlock::new(node.t, state_dim(nf));
    if let Some(nx) = next {
        block.constraints.push(build_dynamics_constraint(node, nx, cfg)?);
    }
    for foot in 0..nf {
        if node.legs[foot].is_none() {
            continue;
        }
        let position = matches!(cfg.lo_mode, LoMode::Position | LoMode::Both);
        let velocity = matches!(cfg.lo_mode, LoMode::Velocity | LoMode::Both) && node.contact[foot];
        if position {
            block.constraints.push(build_lo_constraint(node, foot, LoForm::Position, cfg)?);
        }
        if velocity {
            block.constraints.push(build_lo_constraint(node, foot, LoForm::Velocity, cfg)?);
        }
    }
    if let Some(nx) = next {
        for foot in 0..nf {
            match build_contact_constraint(node, nx, foot) {
                Ok(c) => block.constraints.push(c),
                Err(MheError::NotInContact(_)) => {}
                Err(e) => return Err(e),
            }
        }
        if cfg.use_vo {
            block.constraints.extend(build_vo_constraint(node, cfg));
        }
    }
    Ok(block)
}

/// Node blocks of a chain of nodes; the last node owns no link constraints.
pub fn window_blocks(nodes: &[WindowNode], cfg: &NoiseConfig) -> Result<Vec<NodeBlock>, MheError> {
    (0..nodes.len()).map(|k| node_block(&nodes[k], nodes.get(k + 1), cfg)).collect()
}

/// Dense QP of a window: states and noise variables node by node.
pub fn assemble_qp(window: &[WindowNode], arrival: &ArrivalCost, cfg: &NoiseConfig) -> Result<QpProblem, MheError> {
    let blocks = window_blocks(window, cfg)?;
    Ok(assemble_window(&blocks, arrival)?.to_dense())
}

/// A VO translation between two camera frames, in the body frame of the
/// first frame (`trans(T_BC T_C T_BC⁻¹)`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VoIncrement {
    pub t_from: f64,
    pub t_to: f64,
    pub translation: Vector3<f64>,
}

/// A VO translation snapped to IMU ticks and expressed in the world frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlignedVo {
    /// Nearest ticks to the two frames.
    pub t_from: f64,
    pub t_to: f64,
    /// Frame times as delivered.
    pub frame_from: f64,
    pub frame_to: f64,
    pub translation: Vector3<f64>,
}

/// Tick time nearest `t`; ties go to the earlier tick.
pub fn snap_to_tick(times: &[f64], t: f64) -> Option<usize> {
    if times.is_empty() {
        return None;
    }
    let i = times.partition_point(|&x| x < t);
    if i == 0 {
        return Some(0);
    }
    if i == times.len() {
        return Some(i - 1);
    }
    Some(if times[i] - t < t - times[i - 1] { i } else { i - 1 })
}

/// Snaps `inc` to the ticks in `times` and rotates it with the attitude at
/// its first frame. Both frames must fall within the covered span.
pub fn align_vo(inc: &VoIncrement, times: &[f64], rotations: &[RotationMatrix]) -> Result<AlignedVo, MheError> {
    let gap = MheError::VoGapExceedsWindow { t_from: inc.t_from, t_to: inc.t_to };
    if !(inc.t_to > inc.t_from) {
        return Err(MheError::UnsortedVoFrames);
    }
    let (first, last) = match (times.first(), times.last()) {
        (Some(&f), Some(&l)) => (f, l),
        _ => return Err(gap),
    };
    let half = if times.len() > 1 { 0.5 * (last - first) / (times.len() - 1) as f64 } else { 0.0 };
    if inc.t_from < first - half || inc.t_to > last + half {
        return Err(gap);
    }
    let i = snap_to_tick(times, inc.t_from).ok_or(gap.clone())?;
    let j = snap_to_tick(times, inc.t_to).ok_or(gap.clone())?;
    if j <= i {
        return Err(gap);
    }
    Ok(AlignedVo {
        t_from: times[i],
        t_to: times[j],
        frame_from: inc.t_from,
        frame_to: inc.t_to,
        translation: rotations[i].0 * inc.translation,
    })
}

/// Per-node displacements from aligned VO spans.
///
/// Spans that chain end to start are joined into cumulative positions and
/// fitted with a cubic Bézier path through every camera position at its
/// frame time. Nodes between the ticks nearest the first and last frame get
/// `B(t_{k+1}) − B(t_k)`, extrapolating up to half a tick past the end
/// frames. Other nodes get `None`.
pub fn interpolate_vo(spans: &[AlignedVo], node_times: &[f64]) -> Result<Vec<Option<Vector3<f64>>>, MheError> {
    let mut out = vec![None; node_times.len()];
    if spans.windows(2).any(|w| !(w[1].t_from >= w[0].t_to)) {
        return Err(MheError::UnsortedVoFrames);
    }
    let mut start = 0;
    while start < spans.len() {
        let mut end = start + 1;
        while end < spans.len() && spans[end].frame_from == spans[end - 1].frame_to {
            end += 1;
        }
        let chain = &spans[start..end];
        let mut knots = Vec::with_capacity(chain.len() + 1);
        let mut times = Vec::with_capacity(chain.len() + 1);
        let mut pos = Vector3::zeros();
        knots.push(pos);
        times.push(chain[0].frame_from);
        for s in chain {
            pos += s.translation;
            knots.push(pos);
            times.push(s.frame_to);
        }
        let path = bezier_through_knots(&knots, &times)?;
        let (t0, t1) = (chain[0].t_from, chain[chain.len() - 1].t_to);
        for k in 0..node_times.len().saturating_sub(1) {
            let (a, b) = (node_times[k], node_times[k + 1]);
            if a >= t0 && b <= t1 {
                out[k] = Some(path.evaluate_extrapolated(b) - path.evaluate_extrapolated(a));
            }
        }
        start = end;
    }
    Ok(out)
}

/// Aligns raw VO increments against the window and returns per-node
/// displacements. Increments that do not fit are skipped and reported.
pub fn align_and_interpolate_vo(
    increments: &[VoIncrement],
    nodes: &[WindowNode],
) -> Result<(Vec<Option<Vector3<f64>>>, Vec<VoIncrement>), MheError> {
    if increments.windows(2).any(|w| !(w[1].t_from >= w[0].t_from)) {
        return Err(MheError::UnsortedVoFrames);
    }
    let times: Vec<f64> = nodes.iter().map(|n| n.t).collect();
    let rotations: Vec<RotationMatrix> = nodes.iter().map(|n| n.rotation).collect();
    let mut spans = Vec::new();
    let mut skipped = Vec::new();
    for inc in increments {
        match align_vo(inc, &times, &rotations) {
            Ok(a) => spans.push(a),
            Err(MheError::VoGapExceedsWindow { .. }) => skipped.push(*inc),
            Err(e) => return Err(e),
        }
    }
    Ok((interpolate_vo(&spans, &times)?, skipped))
}

/// Sliding-window estimator with an exact arrival cost.
#[derive(Debug, Clone)]
pub struct Mhe {
    cfg: NoiseConfig,
    n_feet: usize,
    prior_state: MheState,
    prior_covariance: DMatrix<f64>,
    arrival: ArrivalCost,
    nodes: VecDeque<WindowNode>,
    frozen: Option<Vec<WindowNode>>,
    vo_spans: Vec<AlignedVo>,
    options: QpOptions,
    last: Option<WindowSolution>,
}

impl Mhe {
    /// `keep_history` retains marginalized nodes so the full problem can be
    /// re-solved later.
    pub fn new(
        cfg: NoiseConfig,
        prior: MheState,
        prior_covariance: DMatrix<f64>,
        t0: f64,
        keep_history: bool,
    ) -> Result<Self, MheError> {
        let n_feet = prior.n_feet();
        let arrival = prior_arrival(&prior.to_vector(), &prior_covariance, state_dim(n_feet), t0)?;
        Ok(Mhe {
            cfg,
            n_feet,
            prior_state: prior,
            prior_covariance,
            arrival,
            nodes: VecDeque::new(),
            frozen: keep_history.then(Vec::new),
            vo_spans: Vec::new(),
            options: QpOptions::default(),
            last: None,
        })
    }

    pub fn config(&self) -> &NoiseConfig {
        &self.cfg
    }

    pub fn n_feet(&self) -> usize {
        self.n_feet
    }

    pub fn arrival(&self) -> &ArrivalCost {
        &self.arrival
    }

    /// Scales the arrival cost; only useful to check that exactness tests can fail.
    #[doc(hidden)]
    pub fn perturb_arrival(&mut self, factor: f64) {
        self.arrival.hessian *= factor;
    }

    pub fn prior(&self) -> (&MheState, &DMatrix<f64>) {
        (&self.prior_state, &self.prior_covariance)
    }

    pub fn nodes(&self) -> &VecDeque<WindowNode> {
        &self.nodes
    }

    /// In-window nodes; their attitude may be refreshed after a delayed fix.
    pub fn nodes_mut(&mut self) -> &mut VecDeque<WindowNode> {
        &mut self.nodes
    }

    /// Marginalized nodes followed by the current window, if history is kept.
    pub fn history(&self) -> Option<Vec<WindowNode>> {
        self.frozen.as_ref().map(|f| f.iter().chain(self.nodes.iter()).cloned().collect())
    }

    pub fn last_solution(&self) -> Option<&WindowSolution> {
        self.last.as_ref()
    }

    pub fn push_node(&mut self, node: WindowNode) -> Result<(), MheError> {
        if node.n_feet() != self.n_feet || node.legs.len() != self.n_feet {
            return Err(MheError::FootCountMismatch { expected: self.n_feet, got: node.n_feet() });
        }
        if let Some(last) = self.nodes.back() {
            if !(node.t > last.t) {
                return Err(MheError::ClockRegression { t: node.t, last: last.t });
            }
        }
        self.nodes.push_back(node);
        Ok(())
    }

    /// Records a VO span already snapped and rotated into the world frame.
    pub fn add_vo(&mut self, span: AlignedVo) -> Result<(), MheError> {
        if let Some(last) = self.vo_spans.last() {
            if span.t_from < last.t_to {
                return Err(MheError::UnsortedVoFrames);
            }
        }
        self.vo_spans.push(span);
        Ok(())
    }

    fn refresh_vo(&mut self) -> Result<(), MheError> {
        let front = match self.nodes.front() {
            Some(n) => n.t,
            None => return Ok(()),
        };
        // Spans ending well before the window can no longer touch it; keep
        // two extra so tangents at the oldest knots stay put.
        let mut keep_from = self.vo_spans.partition_point(|s| s.t_to < front);
        keep_from = keep_from.saturating_sub(2);
        self.vo_spans.drain(..keep_from);
        let times: Vec<f64> = self.nodes.iter().map(|n| n.t).collect();
        let inc = interpolate_vo(&self.vo_spans, &times)?;
        for (node, y) in self.nodes.iter_mut().zip(inc) {
            node.vo_increment = y;
        }
        Ok(())
    }

    fn blocks(&self, range: core::ops::Range<usize>) -> Result<Vec<NodeBlock>, MheError> {
        range.map(|k| node_block(&self.nodes[k], self.nodes.get(k + 1), &self.cfg)).collect()
    }

    /// Folds nodes beyond the window into the arrival cost and solves the
    /// window. Returns the newest state.
    pub fn solve(&mut self) -> Result<MheState, MheError> {
        if self.nodes.is_empty() {
            return Err(MheError::Empty);
        }
        self.refresh_vo()?;
        while self.nodes.len() > self.cfg.window_size.max(1) + 1 {
            let front = self.blocks(0..2)?;
            self.arrival = marginalize_front(&front, &self.arrival)?;
            let old = self.nodes.pop_front().unwrap();
            if let Some(f) = self.frozen.as_mut() {
                f.push(old);
            }
        }
        let blocks = self.blocks(0..self.nodes.len())?;
        let sol = solve_window(&blocks, &self.arrival, &self.options)?;
        let x = MheState::from_vector(sol.states.last().unwrap(), self.n_feet);
        self.last = Some(sol);
        Ok(x)
    }

    /// Window estimates, oldest first.
    pub fn window_states(&self) -> Vec<MheState> {
        self.last
            .as_ref()
            .map(|s| s.states.iter().map(|x| MheState::from_vector(x, self.n_feet)).collect())
            .unwrap_or_default()
    }
}

/// Adds the node for tick T and any VO spans that arrived with it, then
/// solves.
pub fn mhe_step(estimator: &mut Mhe, node: WindowNode, vo: &[AlignedVo]) -> Result<MheState, MheError> {
    estimator.push_node(node)?;
    for s in vo {
        estimator.add_vo(*s)?;
    }
    estimator.solve()
}

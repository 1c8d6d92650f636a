//! Linear-Gaussian estimation windows in node form.
//!
//! A window is a chain of [`NodeBlock`]s. Node `k` owns a state `x_k` and a
//! list of constraints
//!
//! ```text
//! C x_k + D x_{k+1} + s·δ = r,     δ ~ N(0, Q)
//! ```
//!
//! where the noise term is optional (hard constraints have none). In the
//! full form every noise term is a decision variable, node `k`'s variable
//! group is `X_k = [x_k, δ_1, δ_2, ...]` and the cost is `½ Σ δᵀ Q⁻¹ δ` plus
//! an arrival cost on the first group. Because a constraint reaches at most
//! one node ahead, eliminating the first group only touches the second one.
//!
//! The solver works on the reduced form: each noise variable is minimized out
//! in closed form (`δ = s⁻¹ (r − C x_k − D x_{k+1})`), which leaves a
//! least-squares cost on the states and only the hard constraints as rows.
//! Both forms have the same minimizer and the same arrival costs.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::marginalization::{build_kkt, marginalize, reorder_kkt, ArrivalCost, MarginalizationError};
use crate::qp::{solve_staged_with, QpError, QpOptions, QpStage, StagedQp};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintKind {
    Dynamics,
    LegOdometry,
    Contact,
    VisualOdometry,
    Measurement,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseTerm {
    /// Coefficient of the noise variable in the constraint, `±1`.
    pub sign: f64,
    pub covariance: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintBlock {
    pub kind: ConstraintKind,
    /// Coefficient on the node's own state.
    pub current: DMatrix<f64>,
    /// Coefficient on the following node's state, if the constraint links them.
    pub next: Option<DMatrix<f64>>,
    pub rhs: DVector<f64>,
    /// `None` for hard constraints.
    pub noise: Option<NoiseTerm>,
}

impl ConstraintBlock {
    pub fn rows(&self) -> usize {
        self.rhs.len()
    }

    /// `r − C x_k − D x_{k+1}`, i.e. `s·δ` at the given states.
    pub fn residual(&self, x: &DVector<f64>, x_next: Option<&DVector<f64>>) -> DVector<f64> {
        let mut r = &self.rhs - &self.current * x;
        if let (Some(d), Some(xn)) = (&self.next, x_next) {
            r -= d * xn;
        }
        r
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeBlock {
    pub time: f64,
    pub state_dim: usize,
    pub constraints: Vec<ConstraintBlock>,
}

impl NodeBlock {
    pub fn new(time: f64, state_dim: usize) -> Self {
        NodeBlock { time, state_dim, constraints: Vec::new() }
    }

    /// Sizes of the noise variables, in constraint order.
    pub fn noise_dims(&self) -> Vec<usize> {
        self.constraints.iter().filter(|c| c.noise.is_some()).map(ConstraintBlock::rows).collect()
    }

    /// Size of the variable group `[x, δ...]`.
    pub fn group_dim(&self) -> usize {
        self.state_dim + self.noise_dims().iter().sum::<usize>()
    }

    pub fn num_rows(&self) -> usize {
        self.constraints.iter().map(ConstraintBlock::rows).sum()
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum WindowError {
    #[error("window has no nodes")]
    EmptyWindow,
    #[error("node {node}: {what}")]
    DimensionMismatch { node: usize, what: &'static str },
    #[error("node {node}: constraint links to a node that is not in the window")]
    DanglingConstraint { node: usize },
    #[error("node {node}: {kind:?} covariance is not symmetric positive definite")]
    NonSpdCovariance { node: usize, kind: ConstraintKind },
    #[error("arrival cost does not fit the oldest variable group")]
    ArrivalLayout,
    #[error("solver failed{}: {source}", node_suffix(.node))]
    Solver { node: Option<usize>, source: QpError },
    #[error(transparent)]
    Marginalization(#[from] MarginalizationError),
}

fn node_suffix(node: &Option<usize>) -> alloc::string::String {
    match node {
        Some(n) => alloc::format!(" at window node {n}"),
        None => alloc::string::String::new(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowSolution {
    pub states: Vec<DVector<f64>>,
    /// Noise variables of each node, stacked in constraint order.
    pub noise: Vec<DVector<f64>>,
    pub multipliers: Vec<DVector<f64>>,
    pub kkt_residual: f64,
    /// `‖G X − g‖∞`.
    pub primal_residual: f64,
    /// `‖g‖∞`.
    pub rhs_norm: f64,
}

fn information(node: usize, c: &ConstraintBlock, cov: &DMatrix<f64>) -> Result<DMatrix<f64>, WindowError> {
    let err = WindowError::NonSpdCovariance { node, kind: c.kind };
    if cov.shape() != (c.rows(), c.rows()) {
        return Err(WindowError::DimensionMismatch { node, what: "noise covariance size" });
    }
    if (cov - cov.transpose()).amax() > 1e-12 * cov.amax().max(1.0) {
        return Err(err);
    }
    let inv = cov.clone().cholesky().ok_or(err)?.inverse();
    Ok((&inv + inv.transpose()) * 0.5)
}

fn full_stage(
    index: usize,
    block: &NodeBlock,
    next_state_dim: Option<usize>,
    arrival: Option<&ArrivalCost>,
) -> Result<QpStage, WindowError> {
    let n = block.state_dim;
    let gdim = block.group_dim();
    let m = block.num_rows();
    let mut hessian = DMatrix::zeros(gdim, gdim);
    let mut gradient = DVector::zeros(gdim);
    if let Some(a) = arrival {
        let (h, g) = a.embed(gdim).ok_or(WindowError::ArrivalLayout)?;
        if a.state_dim != n {
            return Err(WindowError::ArrivalLayout);
        }
        hessian += h;
        gradient += g;
    }
    let next_cols = next_state_dim.unwrap_or(0);
    let mut constraints = DMatrix::zeros(m, gdim);
    let mut next = DMatrix::zeros(m, next_cols);
    let mut rhs = DVector::zeros(m);
    let (mut row, mut slot) = (0, n);
    for c in &block.constraints {
        let r = c.rows();
        if c.current.shape() != (r, n) {
            return Err(WindowError::DimensionMismatch { node: index, what: "state coefficient shape" });
        }
        constraints.view_mut((row, 0), (r, n)).copy_from(&c.current);
        if let Some(d) = &c.next {
            let nd = next_state_dim.ok_or(WindowError::DanglingConstraint { node: index })?;
            if d.shape() != (r, nd) {
                return Err(WindowError::DimensionMismatch { node: index, what: "next-state coefficient shape" });
            }
            next.view_mut((row, 0), (r, nd)).copy_from(d);
        }
        if let Some(noise) = &c.noise {
            let info = information(index, c, &noise.covariance)?;
            hessian.view_mut((slot, slot), (r, r)).copy_from(&info);
            for i in 0..r {
                constraints[(row + i, slot + i)] = noise.sign;
            }
            slot += r;
        }
        rhs.rows_mut(row, r).copy_from(&c.rhs);
        row += r;
    }
    let cross_hessian = DMatrix::zeros(gdim, 0);
    Ok(QpStage { hessian, gradient, constraints, next, rhs, cross_hessian })
}

/// Full-form QP of a window, one stage per node: noise variables with
/// inverse-covariance cost blocks plus the arrival cost on the first group.
pub fn assemble_window(blocks: &[NodeBlock], arrival: &ArrivalCost) -> Result<StagedQp, WindowError> {
    if blocks.is_empty() {
        return Err(WindowError::EmptyWindow);
    }
    let stages = blocks
        .iter()
        .enumerate()
        .map(|(k, b)| {
            let next_dim = blocks.get(k + 1).map(|nb| nb.state_dim);
            full_stage(k, b, next_dim, if k == 0 { Some(arrival) } else { None })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(StagedQp { stages })
}

// Soft terms of one node in reduced form.
struct Reduced {
    own: DMatrix<f64>,
    own_grad: DVector<f64>,
    cross: DMatrix<f64>,
    next: DMatrix<f64>,
    next_grad: DVector<f64>,
    hard: Vec<usize>,
    weights: Vec<Option<DMatrix<f64>>>,
}

fn check_shapes(index: usize, c: &ConstraintBlock, n: usize, next_dim: Option<usize>) -> Result<(), WindowError> {
    let r = c.rows();
    if c.current.shape() != (r, n) {
        return Err(WindowError::DimensionMismatch { node: index, what: "state coefficient shape" });
    }
    if let Some(d) = &c.next {
        let nd = next_dim.ok_or(WindowError::DanglingConstraint { node: index })?;
        if d.shape() != (r, nd) {
            return Err(WindowError::DimensionMismatch { node: index, what: "next-state coefficient shape" });
        }
    }
    Ok(())
}

fn reduce(index: usize, block: &NodeBlock, next_dim: Option<usize>) -> Result<Reduced, WindowError> {
    let n = block.state_dim;
    let nd = next_dim.unwrap_or(0);
    let mut out = Reduced {
        own: DMatrix::zeros(n, n),
        own_grad: DVector::zeros(n),
        cross: DMatrix::zeros(n, nd),
        next: DMatrix::zeros(nd, nd),
        next_grad: DVector::zeros(nd),
        hard: Vec::new(),
        weights: Vec::with_capacity(block.constraints.len()),
    };
    for (i, c) in block.constraints.iter().enumerate() {
        check_shapes(index, c, n, next_dim)?;
        let noise = match &c.noise {
            Some(noise) => noise,
            None => {
                out.hard.push(i);
                out.weights.push(None);
                continue;
            }
        };
        let w = information(index, c, &noise.covariance)? / (noise.sign * noise.sign);
        let ctw = c.current.transpose() * &w;
        out.own += &ctw * &c.current;
        out.own_grad -= &ctw * &c.rhs;
        if let Some(d) = &c.next {
            let dtw = d.transpose() * &w;
            out.cross += &ctw * d;
            out.next += &dtw * d;
            out.next_grad -= &dtw * &c.rhs;
        }
        out.weights.push(Some(w));
    }
    Ok(out)
}

fn hard_rows(block: &NodeBlock, hard: &[usize], next_dim: usize) -> (DMatrix<f64>, DMatrix<f64>, DVector<f64>) {
    let n = block.state_dim;
    let m: usize = hard.iter().map(|&i| block.constraints[i].rows()).sum();
    let mut g = DMatrix::zeros(m, n);
    let mut next = DMatrix::zeros(m, next_dim);
    let mut rhs = DVector::zeros(m);
    let mut row = 0;
    for &i in hard {
        let c = &block.constraints[i];
        let r = c.rows();
        g.view_mut((row, 0), (r, n)).copy_from(&c.current);
        if let Some(d) = &c.next {
            next.view_mut((row, 0), d.shape()).copy_from(d);
        }
        rhs.rows_mut(row, r).copy_from(&c.rhs);
        row += r;
    }
    (g, next, rhs)
}

fn arrival_on_state(arrival: &ArrivalCost, n: usize) -> Result<(DMatrix<f64>, DVector<f64>), WindowError> {
    if arrival.state_dim != n {
        return Err(WindowError::ArrivalLayout);
    }
    arrival.embed(n).ok_or(WindowError::ArrivalLayout)
}

/// Reduced-form QP of a window: states only, hard constraints as rows.
pub fn assemble_reduced(blocks: &[NodeBlock], arrival: &ArrivalCost) -> Result<StagedQp, WindowError> {
    Ok(reduced_qp(blocks, arrival)?.0)
}

fn reduced_qp(blocks: &[NodeBlock], arrival: &ArrivalCost) -> Result<(StagedQp, Vec<Layout>), WindowError> {
    if blocks.is_empty() {
        return Err(WindowError::EmptyWindow);
    }
    let mut stages = Vec::with_capacity(blocks.len());
    let mut kept = Vec::with_capacity(blocks.len());
    let (mut carry_h, mut carry_g) = arrival_on_state(arrival, blocks[0].state_dim)?;
    for (k, b) in blocks.iter().enumerate() {
        let next_dim = blocks.get(k + 1).map(|nb| nb.state_dim);
        let red = reduce(k, b, next_dim)?;
        let (constraints, next, rhs) = hard_rows(b, &red.hard, next_dim.unwrap_or(0));
        stages.push(QpStage {
            hessian: carry_h + &red.own,
            gradient: carry_g + &red.own_grad,
            constraints,
            next,
            rhs,
            cross_hessian: red.cross,
        });
        carry_h = red.next;
        carry_g = red.next_grad;
        kept.push(Layout { hard: red.hard, weights: red.weights });
    }
    Ok((StagedQp { stages }, kept))
}

// Per node: which constraints stayed as rows, and the soft-term weights.
struct Layout {
    hard: Vec<usize>,
    weights: Vec<Option<DMatrix<f64>>>,
}

fn solver_error(e: QpError) -> WindowError {
    let node = match &e {
        QpError::RankDeficientConstraints { stage } => *stage,
        _ => None,
    };
    WindowError::Solver { node, source: e }
}

pub fn solve_window(blocks: &[NodeBlock], arrival: &ArrivalCost, opts: &QpOptions) -> Result<WindowSolution, WindowError> {
    let (qp, kept) = reduced_qp(blocks, arrival)?;
    let sol = solve_staged_with(&qp, opts).map_err(solver_error)?;
    let mut rhs_norm: f64 = 0.0;
    let mut noise = Vec::with_capacity(blocks.len());
    let mut multipliers = Vec::with_capacity(blocks.len());
    for (k, (b, info)) in blocks.iter().zip(&kept).enumerate() {
        let x = &sol.primal[k];
        let x_next = sol.primal.get(k + 1);
        let mut delta = Vec::new();
        let mut lambda = Vec::new();
        let mut hard = sol.dual[k].iter().copied();
        for (c, w) in b.constraints.iter().zip(&info.weights) {
            rhs_norm = rhs_norm.max(c.rhs.amax());
            match (&c.noise, w) {
                (Some(noise), Some(w)) => {
                    let d = c.residual(x, x_next) / noise.sign;
                    let l = -(w * &d) * noise.sign;
                    delta.extend(d.iter().copied());
                    lambda.extend(l.iter().copied());
                }
                _ => lambda.extend(hard.by_ref().take(c.rows())),
            }
        }
        debug_assert_eq!(info.hard.len(), b.constraints.iter().filter(|c| c.noise.is_none()).count());
        noise.push(DVector::from_vec(delta));
        multipliers.push(DVector::from_vec(lambda));
    }
    Ok(WindowSolution {
        states: sol.primal,
        noise,
        multipliers,
        kkt_residual: sol.kkt_residual,
        primal_residual: sol.primal_residual,
        rhs_norm,
    })
}

/// Arrival cost on the second node's state after eliminating the first
/// node's state and the multipliers of its hard constraints.
///
/// The eliminated problem holds only what node 0 contributes: the current
/// arrival cost, node 0's soft terms (which also reach the second state) and
/// node 0's hard constraints. The second state enters with no cost of its
/// own, so the Schur complement is exactly the increment the remaining window
/// needs.
pub fn marginalize_front(blocks: &[NodeBlock], arrival: &ArrivalCost) -> Result<ArrivalCost, WindowError> {
    if blocks.len() < 2 {
        return Err(WindowError::EmptyWindow);
    }
    let (b0, b1) = (&blocks[0], &blocks[1]);
    let n1 = b1.state_dim;
    let (h0, g0) = arrival_on_state(arrival, b0.state_dim)?;
    let red = reduce(0, b0, Some(n1))?;
    let (constraints, next, rhs) = hard_rows(b0, &red.hard, n1);
    let s0 = QpStage { hessian: h0 + &red.own, gradient: g0 + &red.own_grad, constraints, next, rhs, cross_hessian: red.cross };
    let s1 = QpStage {
        hessian: red.next,
        gradient: red.next_grad,
        constraints: DMatrix::zeros(0, n1),
        next: DMatrix::zeros(0, 0),
        rhs: DVector::zeros(0),
        cross_hessian: DMatrix::zeros(n1, 0),
    };
    let (n0, m0) = (s0.num_variables(), s0.num_constraints());
    let sub = StagedQp { stages: vec![s0, s1] }.to_dense();
    let kkt = build_kkt(&sub)?;
    let group0: Vec<usize> = (0..n0).chain(n0 + n1..n0 + n1 + m0).collect();
    let group1: Vec<usize> = (n0..n0 + n1).collect();
    let reordered = reorder_kkt(&kkt, &group0, &group1)?;
    Ok(marginalize(&reordered, b1.time, n1)?)
}

/// Same increment computed on the full form, with the noise variables of
/// node 0 eliminated alongside its state. The arrival cost is stated on the
/// second node's whole variable group.
pub fn marginalize_front_full(blocks: &[NodeBlock], arrival: &ArrivalCost) -> Result<ArrivalCost, WindowError> {

    if blocks.len() < 2 {
        return Err(WindowError::EmptyWindow);
    }
    let (b0, b1) = (&blocks[0], &blocks[1]);
    let s0 = full_stage(0, b0, Some(b1.state_dim), Some(arrival))?;
    let g1 = b1.group_dim();
    let s1 = QpStage {
        hessian: DMatrix::zeros(g1, g1),
        gradient: DVector::zeros(g1),
        constraints: DMatrix::zeros(0, g1),
        next: DMatrix::zeros(0, 0),
        rhs: DVector::zeros(0),
        cross_hessian: DMatrix::zeros(g1, 0),
    };
    let g0 = s0.num_variables();
    let m0 = s0.num_constraints();
    let sub = StagedQp { stages: vec![s0, s1] }.to_dense();
    let kkt = build_kkt(&sub)?;
    let group0: Vec<usize> = (0..g0).chain(g0 + g1..g0 + g1 + m0).collect();
    let group1: Vec<usize> = (g0..g0 + g1).collect();
    let reordered = reorder_kkt(&kkt, &group0, &group1)?;
    Ok(marginalize(&reordered, b1.time, b1.state_dim)?)
}

/// Generic moving-horizon driver over node blocks.
///
/// Nodes still inside the window may be edited through
/// [`Horizon::nodes_mut`] (late measurements attach to older nodes); once a
/// node is marginalized its content is frozen.
#[derive(Debug, Clone)]
pub struct Horizon {
    window_size: usize,
    arrival: ArrivalCost,
    nodes: VecDeque<NodeBlock>,
    history: Option<Vec<NodeBlock>>,
    options: QpOptions,
}

impl Horizon {
    /// `window_size` is N: at most N + 1 nodes stay after each step.
    pub fn new(window_size: usize, prior: ArrivalCost, keep_history: bool) -> Self {
        Horizon {
            window_size: window_size.max(1),
            arrival: prior,
            nodes: VecDeque::new(),
            history: keep_history.then(Vec::new),
            options: QpOptions::default(),
        }
    }

    pub fn push(&mut self, node: NodeBlock) {
        self.nodes.push_back(node);
    }

    pub fn nodes(&self) -> &VecDeque<NodeBlock> {
        &self.nodes
    }

    pub fn nodes_mut(&mut self) -> &mut VecDeque<NodeBlock> {
        &mut self.nodes
    }

    pub fn arrival(&self) -> &ArrivalCost {
        &self.arrival
    }

    #[doc(hidden)]
    pub fn arrival_mut(&mut self) -> &mut ArrivalCost {
        &mut self.arrival
    }

    /// Frozen nodes followed by the current window.
    pub fn history(&self) -> Option<Vec<NodeBlock>> {
        self.history.as_ref().map(|h| h.iter().chain(self.nodes.iter()).cloned().collect())
    }

    /// Marginalizes until the window holds N + 1 nodes, then solves it.
    pub fn step(&mut self) -> Result<WindowSolution, WindowError> {
        while self.nodes.len() > self.window_size + 1 {
            let front: Vec<NodeBlock> = self.nodes.iter().take(2).cloned().collect();
            self.arrival = marginalize_front(&front, &self.arrival)?;
            let old = self.nodes.pop_front().unwrap();
            if let Some(h) = self.history.as_mut() {
                h.push(old);
            }
        }
        let window: Vec<NodeBlock> = self.nodes.iter().cloned().collect();
        solve_window(&window, &self.arrival, &self.options)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::marginalization::prior_arrival;

    fn scalar_node(t: f64, meas: Option<f64>, dynamics: bool) -> NodeBlock {
        let mut b = NodeBlock::new(t, 1);
        if let Some(y) = meas {
            b.constraints.push(ConstraintBlock {
                kind: ConstraintKind::Measurement,
                current: DMatrix::identity(1, 1),
                next: None,
                rhs: DVector::from_element(1, y),
                noise: Some(NoiseTerm { sign: 1.0, covariance: DMatrix::identity(1, 1) }),
            });
        }
        if dynamics {
            b.constraints.push(ConstraintBlock {
                kind: ConstraintKind::Dynamics,
                current: -DMatrix::identity(1, 1),
                next: Some(DMatrix::identity(1, 1)),
                rhs: DVector::zeros(1),
                noise: Some(NoiseTerm { sign: -1.0, covariance: DMatrix::identity(1, 1) }),
            });
        }
        b
    }

    #[test]
    fn front_marginalization_is_kalman_prediction() {
        let prior = prior_arrival(&DVector::zeros(1), &DMatrix::identity(1, 1), 3, 0.0).unwrap();
        let blocks = [scalar_node(0.0, Some(2.0), true), scalar_node(1.0, None, false)];
        let a = marginalize_front(&blocks, &prior).unwrap();
        let (mean, cov) = a.state_moments().unwrap();
        assert!((mean[0] - 1.0).abs() < 1e-14);
        assert!((cov[(0, 0)] - 1.5).abs() < 1e-14);
    }

    #[test]
    fn single_dynamics_pair_structure() {
        let prior = prior_arrival(&DVector::zeros(1), &DMatrix::identity(1, 1), 2, 0.0).unwrap();
        let blocks = [scalar_node(0.0, None, true), scalar_node(1.0, None, false)];
        let qp = assemble_window(&blocks, &prior).unwrap().to_dense();
        assert_eq!(qp.hessian, DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1.0, 0.0])));
        assert_eq!(qp.constraints, DMatrix::from_row_slice(1, 3, &[-1.0, -1.0, 1.0]));
    }

    #[test]
    fn dangling_link_rejected() {
        let prior = prior_arrival(&DVector::zeros(1), &DMatrix::identity(1, 1), 2, 0.0).unwrap();
        let err = assemble_window(&[scalar_node(0.0, None, true)], &prior).unwrap_err();
        assert_eq!(err, WindowError::DanglingConstraint { node: 0 });
    }

    #[test]
    fn horizon_keeps_window_size() {
        let prior = prior_arrival(&DVector::zeros(1), &DMatrix::identity(1, 1), 3, 0.0).unwrap();
        let mut h = Horizon::new(2, prior, true);
        h.push(scalar_node(0.0, Some(1.0), false));
        for k in 1..8 {
            let last = h.nodes_mut().back_mut().unwrap();
            last.constraints.push(scalar_node(0.0, None, true).constraints.remove(0));
            h.push(scalar_node(k as f64, Some(1.0), false));
            h.step().unwrap();
            assert!(h.nodes().len() <= 3);
        }
        assert_eq!(h.history().unwrap().len(), 8);
    }
}

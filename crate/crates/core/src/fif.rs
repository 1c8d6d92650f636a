//! Full-information estimate: the same problem as the moving horizon
//! estimator, solved over every node since the start.

use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::marginalization::prior_arrival;
use crate::mhe::{state_dim, window_blocks, Mhe, MheError, MheState, NoiseConfig, WindowNode};
use crate::qp::QpOptions;
use crate::window::{solve_window, WindowSolution};

#[derive(Debug, Clone)]
pub struct FifProblem {
    pub cfg: NoiseConfig,
    pub prior: MheState,
    pub prior_covariance: DMatrix<f64>,
    pub nodes: Vec<WindowNode>,
}

impl FifProblem {
    /// Snapshot of everything an estimator has seen so far. `None` unless
    /// the estimator keeps its history.
    pub fn from_estimator(mhe: &Mhe) -> Option<Self> {
        let (prior, cov) = mhe.prior();
        Some(FifProblem {
            cfg: mhe.config().clone(),
            prior: prior.clone(),
            prior_covariance: cov.clone(),
            nodes: mhe.history()?,
        })
    }
}

/// Solves over nodes `0..=last` and returns every state estimate.
pub fn solve_fif_full(problem: &FifProblem, last: usize) -> Result<WindowSolution, MheError> {
    let nodes = problem.nodes.get(..=last).ok_or(MheError::Empty)?;
    let nf = problem.prior.n_feet();
    let arrival = prior_arrival(&problem.prior.to_vector(), &problem.prior_covariance, state_dim(nf), nodes[0].t)?;
    let blocks = window_blocks(nodes, &problem.cfg)?;
    Ok(solve_window(&blocks, &arrival, &QpOptions::default())?)
}

/// Estimate of the state at node `last` given nodes `0..=last`.
pub fn solve_fif(problem: &FifProblem, last: usize) -> Result<MheState, MheError> {
    let sol = solve_fif_full(problem, last)?;
    Ok(MheState::from_vector(sol.states.last().unwrap(), problem.prior.n_feet()))
}

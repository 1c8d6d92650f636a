//! Closed-form arrival cost.
//!
//! The oldest variable group of a window, together with the multipliers of
//! the constraints that touch it, is eliminated from the KKT system by a Schur
//! complement. What is left is a quadratic `½ Xᵀ M X + mᵀ X` on the next group
//! that carries every bit of information the eliminated part held.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::linalg::{BlockTridiagonal, LdltFactor};
use crate::qp::{dense_kkt, QpProblem};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MarginalizationError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(&'static str),
    #[error("group index {0} is out of range or repeated")]
    InvalidGroup(usize),
    #[error("the eliminated group couples to index {0}, beyond the next group")]
    Group0NotClosed(usize),
    #[error("the eliminated block of the KKT matrix is singular")]
    SingularK00,
    #[error("prior covariance is not symmetric positive definite")]
    NonSpdPrior,
}

/// KKT matrix and right-hand side with the size of the leading eliminated
/// block and of the block kept after it.
#[derive(Debug, Clone, PartialEq)]
pub struct KktSystem {
    pub matrix: DMatrix<f64>,
    pub rhs: DVector<f64>,
    /// Number of primal variables of the underlying QP.
    pub num_primal: usize,
    /// `order[i]` is the original KKT index now stored at position `i`.
    pub order: Vec<usize>,
    /// Size of the leading block `[X₀, λ₀]`.
    pub group0_len: usize,
    /// Size of the block `[X₁, λ₁]` that follows it.
    pub group1_len: usize,
}

/// Quadratic prior `½ Xᵀ M X + mᵀ X` on the oldest variable group of a window.
///
/// Only the leading `state_dim` entries (the state itself) are ever nonzero
/// when produced by [`marginalize`] on a window; the remaining entries cover
/// the noise variables that share the group.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrivalCost {
    pub hessian: DMatrix<f64>,
    pub gradient: DVector<f64>,
    pub state_dim: usize,
    pub anchor_time: f64,
}

impl ArrivalCost {
    pub fn dim(&self) -> usize {
        self.gradient.len()
    }

    /// Mean and covariance of the state block, when its Hessian is invertible.
    pub fn state_moments(&self) -> Option<(DVector<f64>, DMatrix<f64>)> {
        let n = self.state_dim;
        let h = self.hessian.view((0, 0), (n, n)).into_owned();
        let cov = h.cholesky()?.inverse();
        let mean = -(&cov * self.gradient.rows(0, n));
        Some((mean, cov))
    }

    /// Cost restated over a group of `group_dim` variables whose leading
    /// `state_dim` entries are the state. Returns `None` if noise entries
    /// carry weight and the group size differs.
    pub fn embed(&self, group_dim: usize) -> Option<(DMatrix<f64>, DVector<f64>)> {
        let n = self.state_dim;
        let d = self.dim();
        let slots_empty = d == n
            || (self.hessian.columns(n, d - n).iter().all(|&v| v == 0.0) && self.gradient.rows(n, d - n).iter().all(|&v| v == 0.0));
        if group_dim == d {
            return Some((self.hessian.clone(), self.gradient.clone()));
        }
        if !slots_empty || group_dim < n {
            return None;
        }
        let mut h = DMatrix::zeros(group_dim, group_dim);
        h.view_mut((0, 0), (n, n)).copy_from(&self.hessian.view((0, 0), (n, n)));
        let mut g = DVector::zeros(group_dim);
        g.rows_mut(0, n).copy_from(&self.gradient.rows(0, n));
        Some((h, g))
    }

    /// Value of the cost at `x` (state entries only).
    pub fn evaluate_state(&self, x: &DVector<f64>) -> f64 {
        let n = self.state_dim;
        let h = self.hessian.view((0, 0), (n, n));
        let g = self.gradient.rows(0, n);
        0.5 * x.dot(&(h * x)) + g.dot(x)
    }
}

pub fn build_kkt(qp: &QpProblem) -> Result<KktSystem, MarginalizationError> {
    qp.validate().map_err(|_| MarginalizationError::DimensionMismatch("QP blocks disagree"))?;
    let (matrix, rhs) = dense_kkt(qp, 0.0);
    let n = matrix.nrows();
    Ok(KktSystem { matrix, rhs, num_primal: qp.num_variables(), order: (0..n).collect(), group0_len: 0, group1_len: 0 })
}

/// Symmetric permutation that puts `group0` first, then `group1`, then the
/// rest in their current order. Indices refer to the current ordering of
/// `kkt`.
pub fn reorder_kkt(kkt: &KktSystem, group0: &[usize], group1: &[usize]) -> Result<KktSystem, MarginalizationError> {
    let n = kkt.matrix.nrows();
    let mut seen = vec![false; n];
    for &i in group0.iter().chain(group1) {
        if i >= n || seen[i] {
            return Err(MarginalizationError::InvalidGroup(i));
        }
        seen[i] = true;
    }
    let mut perm: Vec<usize> = group0.iter().chain(group1).copied().collect();
    perm.extend((0..n).filter(|&i| !seen[i]));

    // Nothing in group 0 may reach past group 1.
    for &r in group0 {
        for &c in &perm[group0.len() + group1.len()..] {
            if kkt.matrix[(r, c)] != 0.0 {
                return Err(MarginalizationError::Group0NotClosed(c));
            }
        }
    }

    let matrix = kkt.matrix.select_rows(&perm).select_columns(&perm);
    let rhs = kkt.rhs.select_rows(&perm);
    let order = perm.iter().map(|&p| kkt.order[p]).collect();
    Ok(KktSystem {
        matrix,
        rhs,
        num_primal: kkt.num_primal,
        order,
        group0_len: group0.len(),
        group1_len: group1.len(),
    })
}

/// Schur complement of the leading block:
/// `M₁ = K₁₁ − K₁₀ K₀₀⁻¹ K₀₁`, `m₁ = −k₁ + K₁₀ K₀₀⁻¹ k₀`.
///
/// Only the `group0_len + group1_len` leading rows and columns are read.
pub fn marginalize(kkt: &KktSystem, anchor_time: f64, state_dim: usize) -> Result<ArrivalCost, MarginalizationError> {
    let (n0, n1) = (kkt.group0_len, kkt.group1_len);
    if n0 + n1 > kkt.matrix.nrows() || state_dim > n1 {
        return Err(MarginalizationError::DimensionMismatch("groups exceed the KKT system"));
    }
    let k00 = kkt.matrix.view((0, 0), (n0, n0)).into_owned();
    let k10 = kkt.matrix.view((n0, 0), (n1, n0));
    let k11 = kkt.matrix.view((n0, n0), (n1, n1));
    let mut scaled = BlockTridiagonal { diag: vec![k00], upper: Vec::new() };
    let d = scaled.equilibrate(10).pop().unwrap();
    let k00 = scaled.diag.pop().unwrap();
    let norm_inf = k00.row_iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
    let f = LdltFactor::new(&k00, 1e-12 * norm_inf);
    if f.is_singular() {
        return Err(MarginalizationError::SingularK00);
    }
    // K00⁻¹ = D (D K00 D)⁻¹ D
    let mut rhs = k10.transpose();
    for (i, mut row) in rhs.row_iter_mut().enumerate() {
        row *= d[i];
    }
    let mut solved = f.solve_matrix(&rhs);
    for (i, mut row) in solved.row_iter_mut().enumerate() {
        row *= d[i];
    }
    let mut hessian = k11 - k10 * &solved;
    hessian = (&hessian + hessian.transpose()) * 0.5;
    let gradient = -kkt.rhs.rows(n0, n1) + solved.transpose() * kkt.rhs.rows(0, n0);
    Ok(ArrivalCost { hessian, gradient, state_dim, anchor_time })
}

/// Arrival cost of the initial prior `½ (x − x̄)ᵀ P₀⁻¹ (x − x̄)` (constant
/// dropped) on a group of `group_dim` variables led by the state.
pub fn prior_arrival(
    x_prior: &DVector<f64>,
    p0: &DMatrix<f64>,
    group_dim: usize,
    anchor_time: f64,
) -> Result<ArrivalCost, MarginalizationError> {
    let n = x_prior.len();
    if p0.shape() != (n, n) || group_dim < n {
        return Err(MarginalizationError::DimensionMismatch("prior covariance must match the state"));
    }
    if (p0 - p0.transpose()).amax() > 1e-12 * p0.amax().max(1.0) {
        return Err(MarginalizationError::NonSpdPrior);
    }
    let info = p0.clone().cholesky().ok_or(MarginalizationError::NonSpdPrior)?.inverse();
    let info = (&info + info.transpose()) * 0.5;
    let mut hessian = DMatrix::zeros(group_dim, group_dim);
    hessian.view_mut((0, 0), (n, n)).copy_from(&info);
    let mut gradient = DVector::zeros(group_dim);
    gradient.rows_mut(0, n).copy_from(&(-(&info * x_prior)));
    Ok(ArrivalCost { hessian, gradient, state_dim: n, anchor_time })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qp::solve_eq_qp;

    fn scalar_walk(prior_weight: f64) -> QpProblem {
        // variables [x0, w0, v0, x1]
        QpProblem {
            hessian: DMatrix::from_diagonal(&DVector::from_vec(vec![prior_weight, 1.0, 1.0, 0.0])),
            gradient: DVector::zeros(4),
            constraints: DMatrix::from_row_slice(2, 4, &[-1.0, -1.0, 0.0, 1.0, 1.0, 0.0, 1.0, 0.0]),
            rhs: DVector::from_vec(vec![0.0, 2.0]),
        }
    }

    #[test]
    fn kkt_of_unconstrained_scalar() {
        let qp = QpProblem {
            hessian: DMatrix::identity(1, 1),
            gradient: DVector::from_element(1, 0.7),
            constraints: DMatrix::zeros(0, 1),
            rhs: DVector::zeros(0),
        };
        let k = build_kkt(&qp).unwrap();
        assert_eq!(k.matrix, DMatrix::identity(1, 1));
        assert_eq!(k.rhs[0], -0.7);
    }

    #[test]
    fn kkt_of_pinned_scalar() {
        let qp = QpProblem {
            hessian: DMatrix::identity(1, 1),
            gradient: DVector::zeros(1),
            constraints: DMatrix::identity(1, 1),
            rhs: DVector::from_element(1, 3.0),
        };
        let k = build_kkt(&qp).unwrap();
        assert_eq!(k.matrix, DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 0.0]));
        assert_eq!(k.rhs, DVector::from_vec(vec![0.0, 3.0]));
        let s = solve_eq_qp(&qp).unwrap();
        assert!((s.primal[0] - 3.0).abs() < 1e-15 && (s.dual[0] + 3.0).abs() < 1e-15);
    }

    #[test]
    fn identity_reorder_is_noop() {
        let k = build_kkt(&scalar_walk(1.0)).unwrap();
        let r = reorder_kkt(&k, &[0, 1, 2, 3, 4, 5], &[]).unwrap();
        assert_eq!(r.matrix, k.matrix);
        assert_eq!(r.rhs, k.rhs);
    }

    #[test]
    fn reorder_matches_hand_permutation() {
        // Two variables stored as [x1, x0] with the constraint x1 - x0 = 1.
        let qp = QpProblem {
            hessian: DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 3.0])),
            gradient: DVector::from_vec(vec![0.5, -0.5]),
            constraints: DMatrix::from_row_slice(1, 2, &[1.0, -1.0]),
            rhs: DVector::from_element(1, 1.0),
        };
        let k = build_kkt(&qp).unwrap();
        let r = reorder_kkt(&k, &[1, 2], &[0]).unwrap();
        let expected = DMatrix::from_row_slice(3, 3, &[3.0, -1.0, 0.0, -1.0, 0.0, 1.0, 0.0, 1.0, 2.0]);
        assert_eq!(r.matrix, expected);
        assert_eq!(r.rhs, DVector::from_vec(vec![0.5, 1.0, -0.5]));
        assert_eq!(r.order, vec![1, 2, 0]);
    }

    #[test]
    fn coupling_past_next_group_is_rejected() {
        // x0 linked straight to x2.
        let qp = QpProblem {
            hessian: DMatrix::identity(3, 3),
            gradient: DVector::zeros(3),
            constraints: DMatrix::from_row_slice(1, 3, &[1.0, 0.0, -1.0]),
            rhs: DVector::zeros(1),
        };
        let k = build_kkt(&qp).unwrap();
        assert_eq!(reorder_kkt(&k, &[0, 3], &[1]), Err(MarginalizationError::Group0NotClosed(2)));
    }

    #[test]
    fn scalar_kalman_example() {
        // prior N(0, 1), x1 = x0 + w (Q = 1), y0 = x0 + v (R = 1), y0 = 2
        let k = build_kkt(&scalar_walk(1.0)).unwrap();
        let r = reorder_kkt(&k, &[0, 1, 2, 4, 5], &[3]).unwrap();
        let a = marginalize(&r, 1.0, 1).unwrap();
        assert!((a.hessian[(0, 0)] - 1.0 / 1.5).abs() < 1e-15);
        assert!((a.gradient[0] + 1.0 / 1.5).abs() < 1e-15);
        let (mean, cov) = a.state_moments().unwrap();
        assert!((mean[0] - 1.0).abs() < 1e-14 && (cov[(0, 0)] - 1.5).abs() < 1e-14);
    }

    #[test]
    fn missing_prior_makes_k00_singular() {
        // Second state component has neither prior nor any constraint.
        let qp = QpProblem {
            hessian: DMatrix::from_diagonal(&DVector::from_vec(vec![0.0, 0.0, 1.0, 0.0])),
            gradient: DVector::zeros(4),
            constraints: DMatrix::from_row_slice(1, 4, &[-1.0, 0.0, -1.0, 1.0]),
            rhs: DVector::zeros(1),
        };
        let k = build_kkt(&qp).unwrap();
        let r = reorder_kkt(&k, &[0, 1, 2, 4], &[3]).unwrap();
        assert_eq!(marginalize(&r, 0.0, 1), Err(MarginalizationError::SingularK00));
    }

    #[test]
    fn prior_cases() {
        let z = prior_arrival(&DVector::zeros(3), &DMatrix::identity(3, 3), 5, 0.0).unwrap();
        assert!(z.gradient.iter().all(|&v| v == 0.0));
        let s = prior_arrival(&DVector::zeros(2), &(DMatrix::identity(2, 2) * 0.25), 2, 0.0).unwrap();
        assert_eq!(s.hessian, DMatrix::identity(2, 2) * 4.0);
        assert_eq!(
            prior_arrival(&DVector::zeros(2), &DMatrix::from_diagonal_element(2, 2, -1.0), 2, 0.0),
            Err(MarginalizationError::NonSpdPrior)
        );
    }

    #[test]
    fn prior_minimum_is_at_prior_mean() {
        let x = DVector::from_vec(vec![0.3, -1.2, 2.0]);
        let p0 = DMatrix::from_row_slice(3, 3, &[2.0, 0.3, 0.1, 0.3, 1.0, -0.2, 0.1, -0.2, 0.5]);
        let a = prior_arrival(&x, &p0, 3, 0.0).unwrap();
        let at_mean = a.evaluate_state(&x);
        for i in -3..=3 {
            for j in 0..3 {
                let mut y = x.clone();
                y[j] += 0.01 * i as f64;
                assert!(a.evaluate_state(&y) >= at_mean - 1e-15);
            }
        }
    }
}

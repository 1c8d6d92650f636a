//! Equality-constrained quadratic programs
//!
//! ```text
//! min ½ Xᵀ H X + hᵀ X   s.t.   G X = g
//! ```
//!
//! solved through the KKT system `[[H, Gᵀ], [G, 0]] [X; λ] = [−h; g]`.
//! [`solve_eq_qp`] factors the dense system; [`solve_staged`] handles the
//! chained structure of estimation windows, where the constraints of stage `k`
//! only reach into the leading columns of stage `k + 1`, so the KKT matrix in
//! stage order is block tridiagonal.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::linalg::{BlockTridiagonal, Coupling, Inertia, LdltFactor};

#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    /// Cost matrix `H`.
    pub hessian: DMatrix<f64>,
    /// Cost vector `h`.
    pub gradient: DVector<f64>,
    /// Constraint matrix `G`.
    pub constraints: DMatrix<f64>,
    /// Constraint vector `g`.
    pub rhs: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub primal: DVector<f64>,
    pub dual: DVector<f64>,
    /// `‖K [X; λ] − k‖∞` against the unregularized KKT system.
    pub kkt_residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QpOptions {
    /// Static regularization: the zero block of the KKT matrix becomes `−δ I`.
    pub regularization: f64,
    /// Pivots below `pivot_tolerance · max|K|` count as zero.
    pub pivot_tolerance: f64,
}

impl Default for QpOptions {
    fn default() -> Self {
        QpOptions { regularization: 0.0, pivot_tolerance: 1e-12 }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum QpError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(&'static str),
    #[error("cost matrix is not symmetric (max asymmetry {0:e})")]
    AsymmetricHessian(f64),
    #[error("constraint rows are linearly dependent{}", stage_suffix(.stage))]
    RankDeficientConstraints { stage: Option<usize> },
    #[error("cost is not positive definite on the constraint null space")]
    IndefiniteReducedHessian,
}

fn stage_suffix(stage: &Option<usize>) -> alloc::string::String {
    match stage {
        Some(s) => alloc::format!(" (stage {s})"),
        None => alloc::string::String::new(),
    }
}

impl QpProblem {
    pub fn num_variables(&self) -> usize {
        self.hessian.nrows()
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.nrows()
    }

    pub fn validate(&self) -> Result<(), QpError> {
        let n = self.hessian.nrows();
        if self.hessian.ncols() != n {
            return Err(QpError::DimensionMismatch("H must be square"));
        }
        if self.gradient.len() != n {
            return Err(QpError::DimensionMismatch("h must match H"));
        }
        if self.constraints.ncols() != n {
            return Err(QpError::DimensionMismatch("G columns must match H"));
        }
        if self.rhs.len() != self.constraints.nrows() {
            return Err(QpError::DimensionMismatch("g must match G rows"));
        }
        let asym = (&self.hessian - self.hessian.transpose()).amax();
        if asym > 1e-12 * self.hessian.amax().max(1.0) {
            return Err(QpError::AsymmetricHessian(asym));
        }
        Ok(())
    }

    /// `‖G X − g‖∞`.
    pub fn primal_residual(&self, x: &DVector<f64>) -> f64 {
        (&self.constraints * x - &self.rhs).amax()
    }

    /// `‖H X + h + Gᵀ λ‖∞`.
    pub fn stationarity_residual(&self, x: &DVector<f64>, lambda: &DVector<f64>) -> f64 {
        (&self.hessian * x + &self.gradient + self.constraints.transpose() * lambda).amax()
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.hessian * x)) + self.gradient.dot(x)
    }
}

/// Dense KKT matrix `[[H, Gᵀ], [G, −δI]]` and right-hand side `[−h; g]`.
pub(crate) fn dense_kkt(qp: &QpProblem, regularization: f64) -> (DMatrix<f64>, DVector<f64>) {
    let (n, m) = (qp.num_variables(), qp.num_constraints());
    let mut k = DMatrix::zeros(n + m, n + m);
    k.view_mut((0, 0), (n, n)).copy_from(&qp.hessian);
    k.view_mut((n, 0), (m, n)).copy_from(&qp.constraints);
    k.view_mut((0, n), (n, m)).copy_from(&qp.constraints.transpose());
    for i in 0..m {
        k[(n + i, n + i)] = -regularization;
    }
    let mut rhs = DVector::zeros(n + m);
    rhs.rows_mut(0, n).copy_from(&(-&qp.gradient));
    rhs.rows_mut(n, m).copy_from(&qp.rhs);
    (k, rhs)
}

pub fn solve_eq_qp(qp: &QpProblem) -> Result<QpSolution, QpError> {
    solve_eq_qp_with(qp, &QpOptions::default())
}

pub fn solve_eq_qp_with(qp: &QpProblem, opts: &QpOptions) -> Result<QpSolution, QpError> {
    qp.validate()?;
    let (n, m) = (qp.num_variables(), qp.num_constraints());
    let (kkt, rhs) = dense_kkt(qp, opts.regularization);
    let mut scaled = BlockTridiagonal { diag: vec![kkt.clone()], upper: Vec::new() };
    let d = scaled.equilibrate(EQUILIBRATION_SWEEPS).pop().unwrap();
    let ks = scaled.diag.pop().unwrap();
    let f = LdltFactor::new(&ks, opts.pivot_tolerance * ks.amax());
    if f.inertia() != (Inertia { positive: n, negative: m, zero: 0 }) {
        return Err(classify_dense(&qp.constraints, opts.pivot_tolerance));
    }
    let z = f.solve(&rhs.component_mul(&d)).component_mul(&d);
    let (exact, _) = dense_kkt(qp, 0.0);
    let kkt_residual = (&exact * &z - &rhs).amax();
    Ok(QpSolution { primal: z.rows(0, n).into_owned(), dual: z.rows(n, m).into_owned(), kkt_residual })
}

const EQUILIBRATION_SWEEPS: usize = 10;

fn classify_dense(g: &DMatrix<f64>, rel_tol: f64) -> QpError {
    let ggt = g * g.transpose();
    let f = LdltFactor::new(&ggt, rank_tolerance(rel_tol) * ggt.amax());
    if f.inertia().zero > 0 {
        QpError::RankDeficientConstraints { stage: None }
    } else {
        QpError::IndefiniteReducedHessian
    }
}

// G Gᵀ squares the conditioning of G, so its zero test is looser than the
// pivot test on K.
fn rank_tolerance(rel_tol: f64) -> f64 {
    libm::sqrt(rel_tol) * 1e-4
}

/// One stage of a chained QP. Variables of the stage are local; rows of the
/// stage may additionally touch the leading `next.ncols()` variables of the
/// following stage, and `cross_hessian` couples the stage's variables to the
/// leading variables of the following stage in the cost.
#[derive(Debug, Clone, PartialEq)]
pub struct QpStage {
    pub hessian: DMatrix<f64>,
    pub gradient: DVector<f64>,
    pub constraints: DMatrix<f64>,
    pub next: DMatrix<f64>,
    pub rhs: DVector<f64>,
    pub cross_hessian: DMatrix<f64>,
}

impl QpStage {
    pub fn num_variables(&self) -> usize {
        self.hessian.nrows()
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.nrows()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct StagedQp {
    pub stages: Vec<QpStage>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StagedSolution {
    pub primal: Vec<DVector<f64>>,
    pub dual: Vec<DVector<f64>>,
    pub kkt_residual: f64,
    /// `‖G X − g‖∞`.
    pub primal_residual: f64,
}

impl StagedQp {
    pub fn num_variables(&self) -> usize {
        self.stages.iter().map(QpStage::num_variables).sum()
    }

    pub fn num_constraints(&self) -> usize {
        self.stages.iter().map(QpStage::num_constraints).sum()
    }

    pub fn validate(&self) -> Result<(), QpError> {
        for (k, s) in self.stages.iter().enumerate() {
            let n = s.num_variables();
            let m = s.num_constraints();
            if s.hessian.ncols() != n || s.gradient.len() != n || s.constraints.ncols() != n {
                return Err(QpError::DimensionMismatch("stage cost and constraint columns disagree"));
            }
            if s.rhs.len() != m || s.next.nrows() != m {
                return Err(QpError::DimensionMismatch("stage constraint rows disagree"));
            }
            let next_dim = self.stages.get(k + 1).map_or(0, QpStage::num_variables);
            if s.next.ncols() > next_dim || s.cross_hessian.ncols() > next_dim {
                return Err(QpError::DimensionMismatch("coupling reaches past the next stage"));
            }
            if s.cross_hessian.nrows() != n {
                return Err(QpError::DimensionMismatch("cross Hessian rows disagree"));
            }
            let asym = (&s.hessian - s.hessian.transpose()).amax();
            if asym > 1e-12 * s.hessian.amax().max(1.0) {
                return Err(QpError::AsymmetricHessian(asym));
            }
        }
        Ok(())
    }

    /// Dense equivalent, stages stacked in order.
    pub fn to_dense(&self) -> QpProblem {
        let (n, m) = (self.num_variables(), self.num_constraints());
        let mut qp = QpProblem {
            hessian: DMatrix::zeros(n, n),
            gradient: DVector::zeros(n),
            constraints: DMatrix::zeros(m, n),
            rhs: DVector::zeros(m),
        };
        let (mut col, mut row) = (0, 0);
        for s in &self.stages {
            let (nk, mk) = (s.num_variables(), s.num_constraints());
            qp.hessian.view_mut((col, col), (nk, nk)).copy_from(&s.hessian);
            qp.gradient.rows_mut(col, nk).copy_from(&s.gradient);
            qp.constraints.view_mut((row, col), (mk, nk)).copy_from(&s.constraints);
            qp.constraints.view_mut((row, col + nk), s.next.shape()).copy_from(&s.next);
            qp.hessian.view_mut((col, col + nk), s.cross_hessian.shape()).copy_from(&s.cross_hessian);
            qp.hessian.view_mut((col + nk, col), (s.cross_hessian.ncols(), nk)).copy_from(&s.cross_hessian.transpose());
            qp.rhs.rows_mut(row, mk).copy_from(&s.rhs);
            col += nk;
            row += mk;
        }
        qp
    }

    // KKT in stage order [X_0, λ_0, X_1, λ_1, ...].
    fn kkt(&self, regularization: f64) -> (BlockTridiagonal, Vec<DVector<f64>>) {
        let mut diag = Vec::with_capacity(self.stages.len());
        let mut upper = Vec::with_capacity(self.stages.len().saturating_sub(1));
        let mut rhs = Vec::with_capacity(self.stages.len());
        for (k, s) in self.stages.iter().enumerate() {
            let (n, m) = (s.num_variables(), s.num_constraints());
            let mut d = DMatrix::zeros(n + m, n + m);
            d.view_mut((0, 0), (n, n)).copy_from(&s.hessian);
            d.view_mut((n, 0), (m, n)).copy_from(&s.constraints);
            d.view_mut((0, n), (n, m)).copy_from(&s.constraints.transpose());
            for i in 0..m {
                d[(n + i, n + i)] = -regularization;
            }
            diag.push(d);
            let mut r = DVector::zeros(n + m);
            r.rows_mut(0, n).copy_from(&(-&s.gradient));
            r.rows_mut(n, m).copy_from(&s.rhs);
            rhs.push(r);
            if k + 1 < self.stages.len() {
                let cols = s.next.ncols().max(s.cross_hessian.ncols());
                let mut block = DMatrix::zeros(n + m, cols);
                block.view_mut((0, 0), s.cross_hessian.shape()).copy_from(&s.cross_hessian);
                block.view_mut((n, 0), s.next.shape()).copy_from(&s.next);
                upper.push(Coupling { row_offset: 0, col_offset: 0, block });
            }
        }
        (BlockTridiagonal { diag, upper }, rhs)
    }

    // G Gᵀ in stage order; block tridiagonal as well.
    fn gram(&self) -> BlockTridiagonal {
        let mut diag = Vec::with_capacity(self.stages.len());
        let mut upper = Vec::new();
        for (k, s) in self.stages.iter().enumerate() {
            diag.push(&s.constraints * s.constraints.transpose() + &s.next * s.next.transpose());
            if let Some(n) = self.stages.get(k + 1) {
                let c = s.next.ncols();
                let block = &s.next * n.constraints.columns(0, c).transpose();
                upper.push(Coupling { row_offset: 0, col_offset: 0, block });
            }
        }
        BlockTridiagonal { diag, upper }
    }
}

pub fn solve_staged(qp: &StagedQp) -> Result<StagedSolution, QpError> {
    solve_staged_with(qp, &QpOptions::default())
}

pub fn solve_staged_with(qp: &StagedQp, opts: &QpOptions) -> Result<StagedSolution, QpError> {
    qp.validate()?;
    let (kkt, rhs) = qp.kkt(opts.regularization);
    let mut scaled = kkt.clone();
    let d = scaled.equilibrate(EQUILIBRATION_SWEEPS);
    let tol = opts.pivot_tolerance * scaled.max_abs();
    let expected = Inertia { positive: qp.num_variables(), negative: qp.num_constraints(), zero: 0 };
    let factor = match scaled.factor(tol) {
        Ok(f) if f.inertia() == expected => f,
        _ => return Err(classify_staged(qp, opts.pivot_tolerance)),
    };
    let rs: Vec<DVector<f64>> = rhs.iter().zip(&d).map(|(r, s)| r.component_mul(s)).collect();
    let z: Vec<DVector<f64>> = factor.solve(&rs).into_iter().zip(&d).map(|(y, s)| y.component_mul(s)).collect();

    let (exact, _) = if opts.regularization == 0.0 { (kkt, ()) } else { (qp.kkt(0.0).0, ()) };
    let back = exact.mul_blocks(&z);
    let mut kkt_residual: f64 = 0.0;
    let mut primal_residual: f64 = 0.0;
    let mut primal = Vec::with_capacity(z.len());
    let mut dual = Vec::with_capacity(z.len());
    for (k, (zk, (bk, rk))) in z.into_iter().zip(back.iter().zip(&rhs)).enumerate() {
        let n = qp.stages[k].num_variables();
        let m = qp.stages[k].num_constraints();
        let diff = bk - rk;
        kkt_residual = kkt_residual.max(diff.amax());
        if m > 0 {
            primal_residual = primal_residual.max(diff.rows(n, m).amax());
        }
        primal.push(zk.rows(0, n).into_owned());
        dual.push(zk.rows(n, m).into_owned());
    }
    Ok(StagedSolution { primal, dual, kkt_residual, primal_residual })
}

fn classify_staged(qp: &StagedQp, rel_tol: f64) -> QpError {
    let gram = qp.gram();
    let tol = rank_tolerance(rel_tol) * gram.max_abs();
    match gram.factor(tol) {
        Err(e) => QpError::RankDeficientConstraints { stage: Some(e.block) },
        Ok(_) => QpError::IndefiniteReducedHessian,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    // Null-space reference: X = X_p + Z y with Z spanning null(G), then
    // (Zᵀ H Z) y = −Zᵀ(H X_p + h). Uses SVD only, no KKT matrix.
    fn null_space_solve(qp: &QpProblem) -> DVector<f64> {
        let (m, n) = qp.constraints.shape();
        let x_p = if m == 0 {
            DVector::zeros(n)
        } else {
            qp.constraints.clone().svd(true, true).solve(&qp.rhs, 1e-12).unwrap()
        };
        // Padding G to square keeps the null-space directions in the trailing rows of Vᵀ.
        let vt = qp.constraints.clone().insert_rows(m, n - m, 0.0).svd(false, true).v_t.unwrap();
        let z = vt.rows(m, n - m).transpose();
        let reduced = z.transpose() * &qp.hessian * &z;
        let rhs = -(z.transpose() * (&qp.hessian * &x_p + &qp.gradient));
        let y = reduced.cholesky().unwrap().solve(&rhs);
        x_p + z * y
    }

    fn random_qp(rng: &mut ChaCha8Rng, n: usize, m: usize) -> QpProblem {
        let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        // PSD but possibly singular H; the constraints must make it well posed.
        let rank = rng.random_range(n.saturating_sub(m).max(1)..=n);
        let b = a.columns(0, rank).into_owned();
        let hessian = &b * b.transpose() + DMatrix::identity(n, n) * 1e-3;
        QpProblem {
            hessian,
            gradient: DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0)),
            constraints: DMatrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0)),
            rhs: DVector::from_fn(m, |_, _| rng.random_range(-1.0..1.0)),
        }
    }

    #[test]
    fn unit_norm_with_one_equality() {
        let qp = QpProblem {
            hessian: DMatrix::identity(2, 2),
            gradient: DVector::zeros(2),
            constraints: DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            rhs: DVector::from_element(1, 1.0),
        };
        let s = solve_eq_qp(&qp).unwrap();
        assert!((s.primal[0] - 1.0).abs() < 1e-15 && s.primal[1].abs() < 1e-15);
    }

    #[test]
    fn unconstrained_minimum() {
        let qp = QpProblem {
            hessian: DMatrix::identity(1, 1),
            gradient: DVector::from_element(1, -2.0),
            constraints: DMatrix::zeros(0, 1),
            rhs: DVector::zeros(0),
        };
        assert!((solve_eq_qp(&qp).unwrap().primal[0] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn duplicate_row_is_rank_deficient() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut qp = random_qp(&mut rng, 6, 3);
        let row = qp.constraints.row(1).into_owned();
        qp.constraints = qp.constraints.insert_row(3, 0.0);
        qp.constraints.row_mut(3).copy_from(&row);
        let dup = qp.rhs[1];
        qp.rhs = qp.rhs.insert_row(3, dup);
        assert_eq!(solve_eq_qp(&qp), Err(QpError::RankDeficientConstraints { stage: None }));
    }

    #[test]
    fn negative_curvature_is_indefinite() {
        let qp = QpProblem {
            hessian: DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -1.0])),
            gradient: DVector::zeros(2),
            constraints: DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            rhs: DVector::from_element(1, 1.0),
        };
        assert_eq!(solve_eq_qp(&qp), Err(QpError::IndefiniteReducedHessian));
    }

    #[test]
    fn regularization_stays_close() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let qp = random_qp(&mut rng, 8, 3);
        let exact = solve_eq_qp(&qp).unwrap();
        let reg = solve_eq_qp_with(&qp, &QpOptions { regularization: 1e-10, ..Default::default() }).unwrap();
        assert!((exact.primal - reg.primal).amax() < 1e-6);
    }

    #[test]
    fn asymmetric_hessian_rejected() {
        let qp = QpProblem {
            hessian: DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]),
            gradient: DVector::zeros(2),
            constraints: DMatrix::zeros(0, 2),
            rhs: DVector::zeros(0),
        };
        assert!(matches!(solve_eq_qp(&qp), Err(QpError::AsymmetricHessian(_))));
    }

    proptest! {
        #[test]
        fn matches_null_space_reference(seed in any::<u64>(), n in 2usize..50) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = rng.random_range(0..n.min(30));
            let qp = random_qp(&mut rng, n, m);
            let s = solve_eq_qp(&qp).unwrap();
            let reference = null_space_solve(&qp);
            let (a, b) = (qp.objective(&s.primal), qp.objective(&reference));
            prop_assert!((a - b).abs() <= 1e-10 * (1.0 + b.abs()));
            prop_assert!(qp.primal_residual(&s.primal) <= 1e-9 * (1.0 + qp.rhs.amax()));
            prop_assert!(qp.stationarity_residual(&s.primal, &s.dual) <= 1e-9 * (1.0 + qp.gradient.amax()));
        }

        #[test]
        fn invariant_under_permutation(seed in any::<u64>(), n in 2usize..20) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = rng.random_range(0..n);
            let qp = random_qp(&mut rng, n, m);
            let mut perm: Vec<usize> = (0..n).collect();
            for i in (1..n).rev() {
                perm.swap(i, rng.random_range(0..=i));
            }
            let p = DMatrix::from_fn(n, n, |i, j| if perm[i] == j { 1.0 } else { 0.0 });
            let permuted = QpProblem {
                hessian: &p * &qp.hessian * p.transpose(),
                gradient: &p * &qp.gradient,
                constraints: &qp.constraints * p.transpose(),
                rhs: qp.rhs.clone(),
            };
            let a = solve_eq_qp(&qp).unwrap().primal;
            let b = p.transpose() * solve_eq_qp(&permuted).unwrap().primal;
            prop_assert!((&a - &b).amax() < 1e-10 * (1.0 + b.amax()));
        }

        #[test]
        fn staged_matches_dense(seed in any::<u64>(), stages in 1usize..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let dims: Vec<usize> = (0..stages).map(|_| rng.random_range(2..7)).collect();
            let staged = StagedQp {
                stages: (0..stages).map(|k| {
                    let n = dims[k];
                    let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
                    let m = rng.random_range(0..n);
                    let c = if k + 1 < stages { rng.random_range(0..=dims[k + 1]) } else { 0 };
                    QpStage {
                        hessian: &a * a.transpose() + DMatrix::identity(n, n) * 0.1,
                        gradient: DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0)),
                        constraints: DMatrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0)),
                        next: DMatrix::from_fn(m, c, |_, _| rng.random_range(-1.0..1.0)),
                        rhs: DVector::from_fn(m, |_, _| rng.random_range(-1.0..1.0)),
                        cross_hessian: DMatrix::zeros(n, 0),
                    }
                }).collect(),
            };
            let dense = solve_eq_qp(&staged.to_dense()).unwrap();
            let s = solve_staged(&staged).unwrap();
            let flat: Vec<f64> = s.primal.iter().flat_map(|v| v.iter().copied()).collect();
            prop_assert!((DVector::from_vec(flat) - &dense.primal).amax() < 1e-9 * (1.0 + dense.primal.amax()));
            prop_assert!(s.kkt_residual < 1e-9);
        }
    }

    #[test]
    fn staged_duplicate_row_reports_stage() {
        let stage = |m: DMatrix<f64>, next: DMatrix<f64>, rhs: DVector<f64>| QpStage {
            hessian: DMatrix::identity(2, 2),
            gradient: DVector::zeros(2),
            constraints: m,
            next,
            rhs,
            cross_hessian: DMatrix::zeros(2, 0),
        };
        let qp = StagedQp {
            stages: vec![
                stage(DMatrix::zeros(0, 2), DMatrix::zeros(0, 2), DVector::zeros(0)),
                stage(
                    DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]),
                    DMatrix::zeros(2, 0),
                    DVector::from_vec(vec![1.0, 1.0]),
                ),
                stage(DMatrix::zeros(0, 2), DMatrix::zeros(0, 0), DVector::zeros(0)),
            ],
        };
        assert_eq!(solve_staged(&qp), Err(QpError::RankDeficientConstraints { stage: Some(1) }));
    }
}

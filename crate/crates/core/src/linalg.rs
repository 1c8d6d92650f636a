//! Symmetric indefinite factorizations.
//!
//! [`LdltFactor`] is a dense Bunch–Kaufman `P A Pᵀ = L D Lᵀ` with 1×1 and 2×2
//! pivots. [`BlockTridiagonal`] chains one of those per diagonal block for
//! matrices whose off-diagonal coupling only links neighbouring blocks, which
//! is the shape a windowed estimation problem takes once its KKT system is
//! ordered node by node.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

/// Counts of positive, negative and zero pivots (eigenvalue signs by Sylvester's law).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Inertia {
    pub positive: usize,
    pub negative: usize,
    pub zero: usize,
}

impl core::ops::AddAssign for Inertia {
    fn add_assign(&mut self, rhs: Inertia) {
        self.positive += rhs.positive;
        self.negative += rhs.negative;
        self.zero += rhs.zero;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Pivot {
    One,
    TwoFirst,
    TwoSecond,
    Zero,
}

/// Bunch–Kaufman factorization of a symmetric matrix.
///
/// Pivots whose magnitude falls below the tolerance given to [`LdltFactor::new`]
/// are recorded as zero rather than failing; check [`LdltFactor::inertia`]
/// before trusting a solve.
#[derive(Debug, Clone)]
pub struct LdltFactor {
    n: usize,
    // Column-major. Strict lower part holds L, diagonal and the 2×2
    // sub-diagonal entries hold D.
    a: Vec<f64>,
    pivots: Vec<Pivot>,
    perm: Vec<usize>,
}

const ALPHA: f64 = 0.640_388_203_202_208; // (1 + √17) / 8

impl LdltFactor {
    /// Factors the symmetric matrix `m`. Only the lower triangle is read.
    pub fn new(m: &DMatrix<f64>, tol: f64) -> Self {
        assert_eq!(m.nrows(), m.ncols(), "factorization needs a square matrix");
        let n = m.nrows();
        let mut a = m.as_slice().to_vec();
        let mut pivots = vec![Pivot::One; n];
        let mut perm: Vec<usize> = (0..n).collect();

        let mut k = 0;
        while k < n {
            let absakk = a[k + k * n].abs();
            let mut imax = k;
            let mut colmax = 0.0;
            for i in k + 1..n {
                let v = a[i + k * n].abs();
                if v > colmax {
                    colmax = v;
                    imax = i;
                }
            }
            if absakk.max(colmax) <= tol {
                pivots[k] = Pivot::Zero;
                for i in k..n {
                    a[i + k * n] = 0.0;
                }
                k += 1;
                continue;
            }

            let (kp, kstep) = if absakk >= ALPHA * colmax {
                (k, 1)
            } else {
                let mut rowmax = 0.0f64;
                for j in k..imax {
                    rowmax = rowmax.max(a[imax + j * n].abs());
                }
                for j in imax + 1..n {
                    rowmax = rowmax.max(a[j + imax * n].abs());
                }
                if absakk >= ALPHA * colmax * (colmax / rowmax) {
                    (k, 1)
                } else if a[imax + imax * n].abs() >= ALPHA * rowmax {
                    (imax, 1)
                } else {
                    (imax, 2)
                }
            };

            let kk = k + kstep - 1;
            if kp != kk {
                symmetric_swap(&mut a, n, kk, kp);
                perm.swap(kk, kp);
            }

            if kstep == 1 {
                let d = a[k + k * n];
                for j in k + 1..n {
                    let wj = a[j + k * n] / d;
                    if wj == 0.0 {
                        continue;
                    }
                    for i in j..n {
                        a[i + j * n] -= a[i + k * n] * wj;
                    }
                }
                for i in k + 1..n {
                    a[i + k * n] /= d;
                }
            } else {
                let d11 = a[k + k * n];
                let d21 = a[k + 1 + k * n];
                let d22 = a[k + 1 + (k + 1) * n];
                let det = d11 * d22 - d21 * d21;
                for j in k + 2..n {
                    let (w1, w2) = (a[j + k * n], a[j + (k + 1) * n]);
                    let l1 = (w1 * d22 - w2 * d21) / det;
                    let l2 = (w2 * d11 - w1 * d21) / det;
                    for i in j..n {
                        a[i + j * n] -= a[i + k * n] * l1 + a[i + (k + 1) * n] * l2;
                    }
                }
                for j in k + 2..n {
                    let (w1, w2) = (a[j + k * n], a[j + (k + 1) * n]);
                    a[j + k * n] = (w1 * d22 - w2 * d21) / det;
                    a[j + (k + 1) * n] = (w2 * d11 - w1 * d21) / det;
                }
                pivots[k] = Pivot::TwoFirst;
                pivots[k + 1] = Pivot::TwoSecond;
            }
            k += kstep;
        }
        LdltFactor { n, a, pivots, perm }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn inertia(&self) -> Inertia {
        let n = self.n;
        let mut out = Inertia::default();
        for k in 0..n {
            match self.pivots[k] {
                Pivot::Zero => out.zero += 1,
                Pivot::One => {
                    if self.a[k + k * n] > 0.0 {
                        out.positive += 1;
                    } else {
                        out.negative += 1;
                    }
                }
                Pivot::TwoFirst => {
                    let (d11, d21, d22) = (self.a[k + k * n], self.a[k + 1 + k * n], self.a[k + 1 + (k + 1) * n]);
                    if d11 * d22 - d21 * d21 < 0.0 {
                        out.positive += 1;
                        out.negative += 1;
                    } else if d11 + d22 > 0.0 {
                        out.positive += 2;
                    } else {
                        out.negative += 2;
                    }
                }
                Pivot::TwoSecond => {}
            }
        }
        out
    }

    pub fn is_singular(&self) -> bool {
        self.pivots.contains(&Pivot::Zero)
    }

    /// Solves `A x = b` in place. Components behind zero pivots are set to zero.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.n;
        assert_eq!(b.len(), n);
        let a = &self.a;
        let mut y: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();

        let mut k = 0;
        while k < n {
            match self.pivots[k] {
                Pivot::TwoFirst => {
                    let (y0, y1) = (y[k], y[k + 1]);
                    for i in k + 2..n {
                        y[i] -= a[i + k * n] * y0 + a[i + (k + 1) * n] * y1;
                    }
                    k += 2;
                }
                _ => {
                    let yk = y[k];
                    if yk != 0.0 {
                        for i in k + 1..n {
                            y[i] -= a[i + k * n] * yk;
                        }
                    }
                    k += 1;
                }
            }
        }

        let mut k = 0;
        while k < n {
            match self.pivots[k] {
                Pivot::Zero => {
                    y[k] = 0.0;
                    k += 1;
                }
                Pivot::One => {
                    y[k] /= a[k + k * n];
                    k += 1;
                }
                _ => {
                    let (d11, d21, d22) = (a[k + k * n], a[k + 1 + k * n], a[k + 1 + (k + 1) * n]);
                    let det = d11 * d22 - d21 * d21;
                    let (y0, y1) = (y[k], y[k + 1]);
                    y[k] = (d22 * y0 - d21 * y1) / det;
                    y[k + 1] = (d11 * y1 - d21 * y0) / det;
                    k += 2;
                }
            }
        }

        let mut k = n;
        while k > 0 {
            k -= 1;
            match self.pivots[k] {
                Pivot::TwoSecond => {
                    let f = k - 1;
                    let (mut s0, mut s1) = (0.0, 0.0);
                    for i in k + 1..n {
                        s0 += a[i + f * n] * y[i];
                        s1 += a[i + k * n] * y[i];
                    }
                    y[f] -= s0;
                    y[k] -= s1;
                    k = f;
                }
                _ => {
                    let mut s = 0.0;
                    for i in k + 1..n {
                        s += a[i + k * n] * y[i];
                    }
                    y[k] -= s;
                }
            }
        }

        for (i, &p) in self.perm.iter().enumerate() {
            b[p] = y[i];
        }
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut x = b.clone();
        self.solve_in_place(x.as_mut_slice());
        x
    }

    pub fn solve_matrix(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut x = b.clone();
        for mut col in x.column_iter_mut() {
            self.solve_in_place(col.as_mut_slice());
        }
        x
    }
}

// Symmetric interchange of rows/columns p < q in a lower-stored matrix,
// including the already computed L columns.
fn symmetric_swap(a: &mut [f64], n: usize, p: usize, q: usize) {
    debug_assert!(p < q);
    for j in 0..p {
        a.swap(p + j * n, q + j * n);
    }
    a.swap(p + p * n, q + q * n);
    for i in p + 1..q {
        a.swap(i + p * n, q + i * n);
    }
    for i in q + 1..n {
        a.swap(i + p * n, i + q * n);
    }
}

/// Nonzero part of the coupling block between diagonal blocks `k` and `k + 1`:
/// entries `(row_offset + i, col_offset + j)` of the upper off-diagonal block.
#[derive(Debug, Clone, PartialEq)]
pub struct Coupling {
    pub row_offset: usize,
    pub col_offset: usize,
    pub block: DMatrix<f64>,
}

/// Symmetric block-tridiagonal matrix given by its diagonal blocks and the
/// upper couplings between neighbours (`upper.len() == diag.len() - 1`).
#[derive(Debug, Clone, PartialEq)]
pub struct BlockTridiagonal {
    pub diag: Vec<DMatrix<f64>>,
    pub upper: Vec<Coupling>,
}

/// A diagonal block became singular during elimination.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SingularBlock {
    pub block: usize,
    pub inertia: Inertia,
}

#[derive(Debug, Clone)]
pub struct BlockTridiagonalFactor {
    factors: Vec<LdltFactor>,
    // S_k⁻¹ E_k, restricted to the coupling's nonzero columns.
    gains: Vec<DMatrix<f64>>,
    upper: Vec<Coupling>,
    inertia: Inertia,
}

impl BlockTridiagonal {
    pub fn dims(&self) -> Vec<usize> {
        self.diag.iter().map(|d| d.nrows()).collect()
    }

    pub fn dim(&self) -> usize {
        self.diag.iter().map(|d| d.nrows()).sum()
    }

    /// Symmetric Ruiz scaling: replaces `K` by `D K D` with every row's
    /// largest entry near one, and returns the diagonal of `D` per block.
    /// The congruence keeps the inertia.
    pub fn equilibrate(&mut self, iterations: usize) -> Vec<DVector<f64>> {
        let mut scale: Vec<DVector<f64>> = self.diag.iter().map(|d| DVector::from_element(d.nrows(), 1.0)).collect();
        let mut step: Vec<DVector<f64>> = scale.clone();
        for _ in 0..iterations {
            // Diagonal blocks are symmetric, so column maxima are row maxima.
            for (n, d) in step.iter_mut().zip(&self.diag) {
                let rows = d.nrows();
                for (j, col) in d.as_slice().chunks_exact(rows.max(1)).enumerate() {
                    n[j] = col.iter().fold(0.0, |m, v| m.max(v.abs()));
                }
            }
            for (k, c) in self.upper.iter().enumerate() {
                let (r, co, rows) = (c.row_offset, c.col_offset, c.block.nrows());
                if rows == 0 {
                    continue;
                }
                let (head, tail) = step.split_at_mut(k + 1);
                let (above, below) = (head[k].as_mut_slice(), tail[0].as_mut_slice());
                for (j, col) in c.block.as_slice().chunks_exact(rows).enumerate() {
                    let mut m = below[co + j];
                    for (e, v) in above[r..r + rows].iter_mut().zip(col) {
                        let a = v.abs();
                        m = m.max(a);
                        *e = e.max(a);
                    }
                    below[co + j] = m;
                }
            }
            let mut converged = true;
            for n in step.iter_mut() {
                for v in n.iter_mut() {
                    *v = if *v > 0.0 { 1.0 / libm::sqrt(*v) } else { 1.0 };
                    converged &= (*v - 1.0).abs() < 1e-3;
                }
            }
            if converged {
                break;
            }
            for (d, s) in self.diag.iter_mut().zip(&step) {
                let rows = d.nrows();
                let s = s.as_slice();
                for (col, &sj) in d.as_mut_slice().chunks_exact_mut(rows.max(1)).zip(s) {
                    for (x, si) in col.iter_mut().zip(s) {
                        *x *= si * sj;
                    }
                }
            }
            for (k, c) in self.upper.iter_mut().enumerate() {
                let (r, co, rows) = (c.row_offset, c.col_offset, c.block.nrows());
                if rows == 0 {
                    continue;
                }
                let (si, sj) = (&step[k].as_slice()[r..r + rows], &step[k + 1].as_slice()[co..]);
                for (col, &b) in c.block.as_mut_slice().chunks_exact_mut(rows).zip(sj) {
                    for (x, a) in col.iter_mut().zip(si) {
                        *x *= a * b;
                    }
                }
            }
            for (s, t) in scale.iter_mut().zip(&step) {
                s.component_mul_assign(t);
            }
        }
        scale
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        let d = self.diag.iter().map(|m| m.amax()).fold(0.0, f64::max);
        self.upper.iter().map(|c| c.block.amax()).fold(d, f64::max)
    }

    /// Block LDLᵀ: each step factors the current Schur complement of one
    /// block and folds it into the next.
    pub fn factor(&self, tol: f64) -> Result<BlockTridiagonalFactor, SingularBlock> {
        assert_eq!(self.upper.len() + 1, self.diag.len().max(1));
        let mut factors = Vec::with_capacity(self.diag.len());
        let mut gains = Vec::with_capacity(self.upper.len());
        let mut inertia = Inertia::default();
        let mut schur = self.diag.first().cloned().unwrap_or_else(|| DMatrix::zeros(0, 0));

        for k in 0..self.diag.len() {
            let f = LdltFactor::new(&schur, tol);
            inertia += f.inertia();
            if f.is_singular() {
                return Err(SingularBlock { block: k, inertia });
            }
            if k + 1 < self.diag.len() {
                let c = &self.upper[k];
                let (r, cols) = c.block.shape();
                let mut rhs = DMatrix::zeros(schur.nrows(), cols);
                rhs.view_mut((c.row_offset, 0), (r, cols)).copy_from(&c.block);
                let w = f.solve_matrix(&rhs);
                let mut next = self.diag[k + 1].clone();
                let update = c.block.transpose() * w.rows(c.row_offset, r);
                let mut target = next.view_mut((c.col_offset, c.col_offset), (cols, cols));
                target -= update;
                schur = next;
                gains.push(w);
            }
            factors.push(f);
        }
        Ok(BlockTridiagonalFactor { factors, gains, upper: self.upper.clone(), inertia })
    }

    /// `self * x` with `x` split per block.
    pub fn mul_blocks(&self, x: &[DVector<f64>]) -> Vec<DVector<f64>> {
        let mut out: Vec<DVector<f64>> = self.diag.iter().zip(x).map(|(d, xk)| d * xk).collect();
        for (k, c) in self.upper.iter().enumerate() {
            let (r, cols) = c.block.shape();
            let up = &c.block * x[k + 1].rows(c.col_offset, cols);
            let mut a = out[k].rows_mut(c.row_offset, r);
            a += up;
            let down = c.block.transpose() * x[k].rows(c.row_offset, r);
            let mut b = out[k + 1].rows_mut(c.col_offset, cols);
            b += down;
        }
        out
    }

    /// Dense copy, for tests and small problems.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let dims = self.dims();
        let n: usize = dims.iter().sum();
        let mut m = DMatrix::zeros(n, n);
        let mut off = 0;
        for (k, d) in self.diag.iter().enumerate() {
            m.view_mut((off, off), d.shape()).copy_from(d);
            if k < self.upper.len() {
                let c = &self.upper[k];
                let (r0, c0) = (off + c.row_offset, off + dims[k] + c.col_offset);
                m.view_mut((r0, c0), c.block.shape()).copy_from(&c.block);
                m.view_mut((c0, r0), (c.block.ncols(), c.block.nrows())).copy_from(&c.block.transpose());
            }
            off += dims[k];
        }
        m
    }
}

impl BlockTridiagonalFactor {
    pub fn inertia(&self) -> Inertia {
        self.inertia
    }

    pub fn solve(&self, rhs: &[DVector<f64>]) -> Vec<DVector<f64>> {
        let n = self.factors.len();
        assert_eq!(rhs.len(), n);
        let mut y: Vec<DVector<f64>> = Vec::with_capacity(n);
        let mut carry: Option<DVector<f64>> = None;
        for k in 0..n {
            let mut r = rhs[k].clone();
            if let Some(c) = carry.take() {
                let cp = &self.upper[k - 1];
                let mut seg = r.rows_mut(cp.col_offset, cp.block.ncols());
                seg -= c;
            }
            self.factors[k].solve_in_place(r.as_mut_slice());
            if k + 1 < n {
                let cp = &self.upper[k];
                carry = Some(cp.block.transpose() * r.rows(cp.row_offset, cp.block.nrows()));
            }
            y.push(r);
        }
        for k in (0..n.saturating_sub(1)).rev() {
            let cp = &self.upper[k];
            let next = y[k + 1].rows(cp.col_offset, cp.block.ncols()).into_owned();
            let corr = &self.gains[k] * next;
            y[k] -= corr;
        }
        y
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_symmetric(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
        let m = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        (&m + m.transpose()) * 0.5
    }

    fn reconstruct_error(m: &DMatrix<f64>) -> f64 {
        let f = LdltFactor::new(m, 1e-14);
        let n = m.nrows();
        let mut worst: f64 = 0.0;
        for j in 0..n {
            let mut e = DVector::zeros(n);
            e[j] = 1.0;
            let x = f.solve(&e);
            worst = worst.max((m * x - e).amax());
        }
        worst
    }

    #[test]
    fn solves_indefinite_kkt() {
        // min ½x² s.t. x = 3
        let k = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 0.0]);
        let f = LdltFactor::new(&k, 1e-12);
        let x = f.solve(&DVector::from_vec(vec![0.0, 3.0]));
        assert!((x[0] - 3.0).abs() < 1e-15 && (x[1] + 3.0).abs() < 1e-15);
        assert_eq!(f.inertia(), Inertia { positive: 1, negative: 1, zero: 0 });
    }

    #[test]
    fn zero_diagonal_needs_two_by_two_pivot() {
        let k = DMatrix::from_row_slice(3, 3, &[0.0, 2.0, 0.0, 2.0, 0.0, 1.0, 0.0, 1.0, 1.0]);
        assert!(reconstruct_error(&k) < 1e-14);
    }

    #[test]
    fn detects_zero_pivot() {
        let k = DMatrix::from_row_slice(3, 3, &[1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0]);
        let f = LdltFactor::new(&k, 1e-12);
        assert_eq!(f.inertia(), Inertia { positive: 1, negative: 0, zero: 2 });
    }

    #[test]
    fn inertia_matches_eigenvalues() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in 1..20 {
            let m = random_symmetric(&mut rng, n);
            let eig = m.clone().symmetric_eigenvalues();
            let pos = eig.iter().filter(|&&e| e > 0.0).count();
            let f = LdltFactor::new(&m, 1e-14);
            assert_eq!(f.inertia().positive, pos);
            assert_eq!(f.inertia().negative, n - pos);
        }
    }

    proptest! {
        #[test]
        fn random_symmetric_solves(seed in any::<u64>(), n in 1usize..30) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = random_symmetric(&mut rng, n);
            let cond = {
                let e = m.clone().symmetric_eigenvalues();
                let mx = e.amax();
                let mn = e.iter().map(|v| v.abs()).fold(f64::INFINITY, f64::min);
                mx / mn
            };
            prop_assume!(cond < 1e6);
            prop_assert!(reconstruct_error(&m) < 1e-12 * cond.max(1.0));
        }

        #[test]
        fn block_tridiagonal_matches_dense(seed in any::<u64>(), blocks in 1usize..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let dims: Vec<usize> = (0..blocks).map(|_| rng.random_range(1..6)).collect();
            let diag: Vec<_> = dims.iter().map(|&d| random_symmetric(&mut rng, d) + DMatrix::identity(d, d) * 4.0).collect();
            let upper: Vec<_> = (0..blocks - 1).map(|k| {
                let r = rng.random_range(1..=dims[k]);
                let c = rng.random_range(1..=dims[k + 1]);
                Coupling {
                    row_offset: rng.random_range(0..=dims[k] - r),
                    col_offset: rng.random_range(0..=dims[k + 1] - c),
                    block: DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0)),
                }
            }).collect();
            let bt = BlockTridiagonal { diag, upper };
            let dense = bt.to_dense();
            let rhs: Vec<DVector<f64>> = dims.iter().map(|&d| DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0))).collect();
            let f = bt.factor(1e-14).unwrap();
            let x = f.solve(&rhs);
            let back = bt.mul_blocks(&x);
            for (b, r) in back.iter().zip(&rhs) {
                prop_assert!((b - r).amax() < 1e-10);
            }
            let flat: Vec<f64> = x.iter().flat_map(|v| v.iter().copied()).collect();
            let flat_rhs: Vec<f64> = rhs.iter().flat_map(|v| v.iter().copied()).collect();
            let resid = &dense * DVector::from_vec(flat) - DVector::from_vec(flat_rhs);
            prop_assert!(resid.amax() < 1e-10);
            let eig = dense.symmetric_eigenvalues();
            prop_assert_eq!(f.inertia().positive, eig.iter().filter(|&&e| e > 0.0).count());
        }
    }
}

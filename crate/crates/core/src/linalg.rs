//! Dense linear-algebra kernels: SVD, null spaces, sampling masks and the
//! Frobenius geometry of `ℝ^{m×n}`.
//!
//! Everything here is a pure function of its inputs. The SVD is a one-sided
//! Jacobi iteration, which keeps full accuracy on the rank-deficient inputs
//! that null-space and truncation code feeds it. Results are sorted and
//! sign-canonicalized (the largest magnitude entry of every left singular
//! vector is positive).

use nalgebra::{DMatrix, DVector};

use crate::error::{shape_error, Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

const JACOBI_MAX_SWEEPS: usize = 100;

/// Relative rank threshold used when none is given: `max(m, n) · ε · 1e3`.
pub fn default_rank_tol(rows: usize, cols: usize) -> f64 {
    rows.max(cols).max(1) as f64 * f64::EPSILON * 1e3
}

pub fn ensure_finite(a: &Matrix, what: &'static str) -> Result<()> {
    if a.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

pub fn ensure_shape(a: &Matrix, rows: usize, cols: usize) -> Result<()> {
    if a.shape() == (rows, cols) {
        Ok(())
    } else {
        Err(shape_error((rows, cols), a.shape()))
    }
}

/// Compact singular value decomposition `A ≈ U diag(σ) Vᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdFactors {
    pub u: Matrix,
    pub sigma: Vector,
    pub v: Matrix,
}

impl SvdFactors {
    pub fn len(&self) -> usize {
        self.sigma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigma.is_empty()
    }

    /// Multiplies the factors back out.
    pub fn reconstruct(&self) -> Matrix {
        let mut us = self.u.clone();
        for (k, s) in self.sigma.iter().enumerate() {
            us.column_mut(k).scale_mut(*s);
        }
        us * self.v.transpose()
    }

    /// Keeps the leading `k` triplets.
    pub fn truncate(&self, k: usize) -> SvdFactors {
        let k = k.min(self.len());
        SvdFactors {
            u: self.u.columns(0, k).into_owned(),
            sigma: self.sigma.rows(0, k).into_owned(),
            v: self.v.columns(0, k).into_owned(),
        }
    }

    /// Number of singular values strictly above `rel_tol · σ₁`.
    pub fn numerical_rank(&self, rel_tol: f64) -> usize {
        let s1 = self.sigma.iter().copied().fold(0.0, f64::max);
        if s1 == 0.0 {
            return 0;
        }
        self.sigma.iter().filter(|&&s| s > rel_tol * s1).count()
    }

    fn canonicalize_signs(&mut self) {
        for k in 0..self.len() {
            let col = self.u.column(k);
            let mut best = 0.0f64;
            let mut sign = 1.0;
            for &x in col.iter() {
                if x.abs() > best {
                    best = x.abs();
                    sign = x.signum();
                }
            }
            if sign < 0.0 {
                self.u.column_mut(k).neg_mut();
                self.v.column_mut(k).neg_mut();
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SvdRank {
    /// All `min(m, n)` triplets.
    Full,
    /// The leading `k` triplets, `1 ≤ k ≤ min(m, n)`.
    Top(usize),
}

pub fn svd(a: &Matrix, rank: SvdRank) -> Result<SvdFactors> {
    ensure_finite(a, "svd input")?;
    let (m, n) = a.shape();
    let p = m.min(n);
    if p == 0 {
        return Err(shape_error((1, 1), (m, n)));
    }
    let k = match rank {
        SvdRank::Full => p,
        SvdRank::Top(k) if (1..=p).contains(&k) => k,
        SvdRank::Top(k) => {
            return Err(Error::InvalidArgument(format!(
                "truncation rank {k} outside 1..={p}"
            )))
        }
    };
    let (u, sv, v) = if m >= n {
        jacobi_svd(a)?
    } else {
        let (u, s, v) = jacobi_svd(&a.transpose())?;
        (v, s, u)
    };
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&i, &j| sv[j].total_cmp(&sv[i]).then(i.cmp(&j)));
    let order = &order[..k];

    let mut f = SvdFactors {
        u: Matrix::from_fn(m, k, |i, c| u[(i, order[c])]),
        sigma: Vector::from_fn(k, |c, _| sv[order[c]].max(0.0)),
        v: Matrix::from_fn(n, k, |i, c| v[(i, order[c])]),
    };
    f.canonicalize_signs();
    Ok(f)
}

/// SVD of a tall matrix, `m ≥ n`. Strictly tall inputs are reduced to their
/// `n×n` triangular QR factor first.
///
/// Returns `U` (`m×n`), unsorted `σ` and `V` (`n×n`).
fn jacobi_svd(a: &Matrix) -> Result<(Matrix, Vector, Matrix)> {
    let (m, n) = a.shape();
    debug_assert!(m >= n);
    if m == n {
        return hestenes(a);
    }
    let qr = a.clone().qr();
    // A = Q R and Rᵀ = U₁ Σ V₁ᵀ give A = (Q V₁) Σ U₁ᵀ.
    let (u1, sigma, v1) = hestenes(&qr.r().transpose())?;
    Ok((qr.q() * v1, sigma, u1))
}

/// One-sided (Hestenes) Jacobi SVD of a tall matrix. Columns whose norm
/// collapses below `n·ε·σ_max` get their `U` column replaced by a
/// Gram–Schmidt completion so `U` stays orthonormal.
fn hestenes(a: &Matrix) -> Result<(Matrix, Vector, Matrix)> {
    let (m, n) = a.shape();
    let mut g = a.clone();
    let mut v = Matrix::identity(n, n);
    // Columns below ε‖A‖_F are numerically zero; rotating them only churns.
    let negligible = (f64::EPSILON * a.norm()).powi(2);
    let orth_tol = (m as f64).sqrt() * f64::EPSILON;
    let mut norms = vec![0.0; n];
    let mut converged = false;
    for _ in 0..JACOBI_MAX_SWEEPS {
        for (j, x) in norms.iter_mut().enumerate() {
            *x = g.column(j).norm_squared();
        }
        let mut rotated = false;
        for p in 0..n.saturating_sub(1) {
            for q in p + 1..n {
                let (alpha, beta) = (norms[p], norms[q]);
                if alpha <= negligible || beta <= negligible {
                    continue;
                }
                let gamma = g.column(p).dot(&g.column(q));
                if gamma.abs() <= orth_tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_columns(&mut g, p, q, c, s);
                rotate_columns(&mut v, p, q, c, s);
                norms[p] = alpha - t * gamma;
                norms[q] = beta + t * gamma;
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NumericalFailure(format!(
            "Jacobi SVD of {m}x{n} matrix did not converge"
        )));
    }
    let sigma = Vector::from_fn(n, |j, _| g.column(j).norm());
    let smax = sigma.iter().copied().fold(0.0, f64::max);
    let floor = n as f64 * f64::EPSILON * smax;
    let mut u = Matrix::zeros(m, n);
    let mut deficient = Vec::new();
    for j in 0..n {
        if sigma[j] > floor && sigma[j] > 0.0 {
            u.set_column(j, &(g.column(j) / sigma[j]));
        } else {
            deficient.push(j);
        }
    }
    complete_orthonormal(&mut u, &deficient);
    Ok((u, sigma, v))
}

fn rotate_columns(a: &mut Matrix, p: usize, q: usize, c: f64, s: f64) {
    let m = a.nrows();
    let (head, tail) = a.as_mut_slice().split_at_mut(q * m);
    let xs = &mut head[p * m..(p + 1) * m];
    let ys = &mut tail[..m];
    for (x, y) in xs.iter_mut().zip(ys.iter_mut()) {
        let (a, b) = (*x, *y);
        *x = c * a - s * b;
        *y = s * a + c * b;
    }
}

/// Fills the listed columns with unit vectors orthogonal to all other columns.
fn complete_orthonormal(u: &mut Matrix, missing: &[usize]) {
    if missing.is_empty() {
        return;
    }
    let m = u.nrows();
    let mut filled: Vec<usize> = (0..u.ncols()).filter(|j| !missing.contains(j)).collect();
    let mut candidate = 0;
    for &j in missing {
        while candidate < m {
            let mut e = Vector::zeros(m);
            e[candidate] = 1.0;
            candidate += 1;
            // two passes of Gram–Schmidt
            for _ in 0..2 {
                for &k in &filled {
                    let proj = u.column(k).dot(&e);
                    e -= u.column(k) * proj;
                }
            }
            let nrm = e.norm();
            if nrm > 1e-8 {
                u.set_column(j, &(e / nrm));
                filled.push(j);
                break;
            }
        }
    }
}

/// Orthonormal basis `W` of `ker(A)` together with the numerical rank `q`.
///
/// `q` counts singular values above `rank_tol · σ₁`; `W` has `n − q` columns.
pub fn null_space_basis(a: &Matrix, rank_tol: f64) -> Result<(Matrix, usize)> {
    ensure_finite(a, "null space input")?;
    if !(rank_tol > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "rank tolerance must be positive, got {rank_tol}"
        )));
    }
    let (p, n) = a.shape();
    if n == 0 {
        return Err(shape_error((1, 1), (p, n)));
    }
    // Zero rows leave the right singular vectors unchanged but force a full V.
    let rows = p.max(n);
    let mut padded = Matrix::zeros(rows, n);
    padded.rows_mut(0, p).copy_from(a);
    let f = svd(&padded, SvdRank::Full)?;
    let q = f.numerical_rank(rank_tol);
    Ok((f.v.columns(q, n - q).into_owned(), q))
}

pub fn frobenius_norm(a: &Matrix) -> f64 {
    a.norm()
}

/// `⟨A, B⟩ = tr(AᵀB)`.
pub fn inner_product(a: &Matrix, b: &Matrix) -> Result<f64> {
    ensure_shape(b, a.nrows(), a.ncols())?;
    Ok(a.dot(b))
}

/// Orthonormal basis of the column space of a tall matrix (thin QR).
pub fn orthonormal_columns(a: &Matrix) -> Matrix {
    a.clone().qr().q()
}

/// Index set Ω of observed entries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SamplingPattern {
    rows: usize,
    cols: usize,
    mask: Vec<bool>,
    observed: usize,
}

impl SamplingPattern {
    /// Builds a pattern from a row-major mask.
    pub fn from_mask(rows: usize, cols: usize, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: format!("{} mask cells", rows * cols),
                got: format!("{}", mask.len()),
            });
        }
        let observed = mask.iter().filter(|&&b| b).count();
        Ok(SamplingPattern {
            rows,
            cols,
            mask,
            observed,
        })
    }

    pub fn from_indices(
        rows: usize,
        cols: usize,
        indices: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self> {
        let mut mask = vec![false; rows * cols];
        for (i, j) in indices {
            if i >= rows || j >= cols {
                return Err(Error::InvalidArgument(format!(
                    "index ({i}, {j}) outside {rows}x{cols}"
                )));
            }
            mask[i * cols + j] = true;
        }
        Self::from_mask(rows, cols, mask)
    }

    pub fn full(rows: usize, cols: usize) -> Self {
        SamplingPattern {
            rows,
            cols,
            mask: vec![true; rows * cols],
            observed: rows * cols,
        }
    }

    pub fn empty(rows: usize, cols: usize) -> Self {
        SamplingPattern {
            rows,
            cols,
            mask: vec![false; rows * cols],
            observed: 0,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn observed_count(&self) -> usize {
        self.observed
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.mask[i * self.cols + j]
    }

    /// Observed `(i, j)` pairs in row-major order.
    pub fn indices(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let cols = self.cols;
        self.mask
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(k, _)| (k / cols, k % cols))
    }

    /// `P_Ω(A)`: observed entries kept, everything else zeroed.
    pub fn apply(&self, a: &Matrix) -> Result<Matrix> {
        ensure_shape(a, self.rows, self.cols)?;
        Ok(Matrix::from_fn(self.rows, self.cols, |i, j| {
            if self.contains(i, j) {
                a[(i, j)]
            } else {
                0.0
            }
        }))
    }
}

/// Free-function form of [`SamplingPattern::apply`].
pub fn apply_mask(a: &Matrix, pattern: &SamplingPattern) -> Result<Matrix> {
    pattern.apply(a)
}


#[cfg(test)]
mod proptests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn low_rank_svd_multiplies_back(seed in any::<u64>(), m in 2usize..12, n in 2usize..12, k in 1usize..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let k = k.min(m).min(n);
            let l = Matrix::from_fn(m, k, |_, _| rng.random_range(-1.0..1.0));
            let r = Matrix::from_fn(k, n, |_, _| rng.random_range(-1.0..1.0));
            let a = l * r;
            let f = svd(&a, SvdRank::Full).unwrap();
            prop_assert!((f.reconstruct() - &a).norm() <= 1e-10 * a.norm());
            let t = f.truncate(k);
            prop_assert!((t.reconstruct() - &a).norm() <= 1e-10 * a.norm());
            let eye = Matrix::identity(f.len(), f.len());
            prop_assert!((f.u.transpose() * &f.u - &eye).norm() <= 1e-10);
            prop_assert!((f.v.transpose() * &f.v - &eye).norm() <= 1e-10);
        }

        #[test]
        fn mask_is_linear(seed in any::<u64>(), alpha in -3.0f64..3.0, beta in -3.0f64..3.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = Matrix::from_fn(4, 6, |_, _| rng.random_range(-1.0..1.0));
            let b = Matrix::from_fn(4, 6, |_, _| rng.random_range(-1.0..1.0));
            let mask: Vec<bool> = (0..24).map(|_| rng.random_bool(0.4)).collect();
            let p = SamplingPattern::from_mask(4, 6, mask).unwrap();
            let lhs = p.apply(&(&a * alpha + &b * beta)).unwrap();
            let rhs = p.apply(&a).unwrap() * alpha + p.apply(&b).unwrap() * beta;
            prop_assert!((&lhs - &rhs).norm() <= 1e-12 * lhs.norm().max(1.0));
        }

        #[test]
        fn null_space_bound(seed in any::<u64>(), p in 1usize..8, n in 2usize..8, k in 1usize..5) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let k = k.min(p).min(n);
            let a = Matrix::from_fn(p, k, |_, _| rng.random_range(-1.0..1.0))
                * Matrix::from_fn(k, n, |_, _| rng.random_range(-1.0..1.0));
            let tol = default_rank_tol(p, n);
            let (w, q) = null_space_basis(&a, tol).unwrap();
            prop_assert_eq!(q, k);
            let s1 = svd(&a, SvdRank::Full).unwrap().sigma[0];
            prop_assert!((&a * &w).norm() <= 10.0 * tol * s1 * (n as f64).sqrt());
            let eye = Matrix::identity(w.ncols(), w.ncols());
            prop_assert!((w.transpose() * &w - eye).norm() <= 1e-10);
        }
    }

    /// Eckart–Young spot check against random rank-k competitors.
    #[test]
    fn truncation_beats_random_rank_k_fits() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..50 {
            let (m, n) = (rng.random_range(2..=5), rng.random_range(2..=5));
            let a = Matrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0));
            let k = rng.random_range(1..=m.min(n));
            let best = (svd(&a, SvdRank::Top(k)).unwrap().reconstruct() - &a).norm();
            for _ in 0..40 {
                let r = Matrix::from_fn(m, k, |_, _| rng.random_range(-1.0..1.0))
                    * Matrix::from_fn(k, n, |_, _| rng.random_range(-1.0..1.0));
                // best least-squares rescaling of the competitor
                let t = a.dot(&r) / r.norm_squared();
                assert!(best <= (&a - r * t).norm() + 1e-12);
            }
        }
    }
}

//! Sparse self-expression: for every column `d_j` of a dictionary `D`,
//!
//! ```text
//! min ‖c‖₁  s.t.  ‖D c − d_j‖₂ ≤ ε‖d_j‖₂,  c_j = 0
//! ```
//!
//! solved by ADMM on the split `x = z`, with `x` constrained to the ball and
//! `z` carrying the l1 term. The ball projection is exact (thin SVD plus a
//! scalar secular equation). Periodically a simplex crossover, seeded with
//! the largest entries of `z`, moves to an exact vertex; its dual vector
//! bounds the optimum from below and stops the iteration once the duality
//! gap is small.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{default_rank_tol, ensure_finite, svd, Matrix, SvdRank, Vector};

const CHECK_EVERY: usize = 20;
const SECULAR_MAX_ITERS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExpressionSettings {
    /// Relative feasibility slack `ε`.
    pub eps_rel: f64,
    pub max_iters: usize,
    /// Initial ADMM penalty (on the unit-normalized column).
    pub rho: f64,
    pub abs_tol: f64,
    pub rel_tol: f64,
    /// Accept once the duality gap falls below `gap_tol · max(1, ‖c‖₁)`
    /// (on the column scaled to unit norm).
    pub gap_tol: f64,
    pub polish: bool,
    /// Weight of the cardinality term in the joint objective. It has no
    /// effect on the alternating updates and is carried for completeness.
    pub lambda: f64,
}

impl Default for ExpressionSettings {
    fn default() -> Self {
        ExpressionSettings {
            eps_rel: 1e-8,
            max_iters: 10_000,
            rho: 1.0,
            abs_tol: 1e-10,
            rel_tol: 1e-9,
            gap_tol: 1e-7,
            polish: true,
            lambda: 1.0,
        }
    }
}

impl ExpressionSettings {
    /// Slack suited to noisy dictionaries.
    pub fn noisy() -> Self {
        ExpressionSettings {
            eps_rel: 1e-3,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.eps_rel >= 0.0
            && self.eps_rel.is_finite()
            && self.rho > 0.0
            && self.abs_tol > 0.0
            && self.rel_tol > 0.0
            && self.gap_tol > 0.0
            && self.max_iters > 0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "expression settings out of range: {self:?}"
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ColumnStatus {
    /// Duality gap or ADMM residuals within tolerance.
    Converged,
    /// Iteration budget exhausted; the returned vector is still feasible.
    MaxIterations,
    /// Even the least-squares residual exceeds the slack; the column solves
    /// the problem with the slack widened to that residual.
    Infeasible,
    /// `d_j = 0`, so `c_j = 0`.
    ZeroColumn,
}

impl fmt::Display for ColumnStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ColumnStatus::Converged => "converged",
            ColumnStatus::MaxIterations => "max-iterations",
            ColumnStatus::Infeasible => "infeasible",
            ColumnStatus::ZeroColumn => "zero-column",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ColumnSolution {
    /// Length `n`, with a structural zero at the solved index.
    pub coeffs: Vector,
    /// `‖D c − d_j‖₂`.
    pub residual: f64,
    pub l1: f64,
    /// Upper bound on `l1 − optimum` (unnormalized).
    pub gap: f64,
    pub iterations: usize,
    pub status: ColumnStatus,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExpressionMatrix {
    pub c: Matrix,
    pub columns: Vec<ColumnSolution>,
}

impl ExpressionMatrix {
    pub fn n(&self) -> usize {
        self.c.ncols()
    }

    /// Vectorized `‖C‖₁`.
    pub fn objective(&self) -> f64 {
        self.c.iter().map(|x| x.abs()).sum()
    }

    pub fn residuals(&self) -> Vec<f64> {
        self.columns.iter().map(|c| c.residual).collect()
    }

    pub fn max_residual(&self) -> f64 {
        self.columns.iter().map(|c| c.residual).fold(0.0, f64::max)
    }

    pub fn infeasible_columns(&self) -> Vec<usize> {
        self.columns
            .iter()
            .enumerate()
            .filter(|(_, c)| c.status == ColumnStatus::Infeasible)
            .map(|(j, _)| j)
            .collect()
    }

    /// Replaces the listed columns with those of `previous`.
    pub fn keep_columns_from(&mut self, previous: &Matrix, columns: &[usize]) {
        for &j in columns {
            self.c.set_column(j, &previous.column(j));
        }
    }

    /// `column,l1,residual,flag`
    pub fn diagnostics_csv(&self) -> String {
        let mut out = String::from("column,l1,residual,flag\n");
        for (j, c) in self.columns.iter().enumerate() {
            out.push_str(&format!("{},{:e},{:e},{}\n", j, c.l1, c.residual, c.status));
        }
        out
    }
}

/// Thin SVD restricted to the numerical range.
struct Range {
    u: Matrix,
    sigma: Vector,
    v: Matrix,
}

impl Range {
    fn new(a: &Matrix) -> Result<Range> {
        let (k, n) = a.shape();
        if k == 0 || n == 0 || a.iter().all(|&x| x == 0.0) {
            return Ok(Range {
                u: Matrix::zeros(k, 0),
                sigma: Vector::zeros(0),
                v: Matrix::zeros(n, 0),
            });
        }
        let f = svd(a, SvdRank::Full)?;
        let s = f.numerical_rank(default_rank_tol(k, n)).max(1);
        let f = f.truncate(s);
        Ok(Range {
            u: f.u,
            sigma: f.sigma,
            v: f.v,
        })
    }

    /// Minimum-norm least-squares solution of `A x = b`.
    fn pinv_apply(&self, b: &Vector) -> Vector {
        let mut beta = self.u.tr_mul(b);
        for (bi, s) in beta.iter_mut().zip(self.sigma.iter()) {
            *bi /= s;
        }
        &self.v * beta
    }
}

/// Exact Euclidean projection onto `{c : ‖A c − b‖ ≤ δ}`.
struct BallProjector<'a> {
    a: &'a Matrix,
    range: Range,
    beta: Vector,
    /// `‖b − U Uᵀ b‖`, the least-squares residual.
    ls_residual: f64,
    delta: f64,
}

impl<'a> BallProjector<'a> {
    fn new(a: &'a Matrix, b: &Vector, delta: f64) -> Result<Self> {
        let range = Range::new(a)?;
        let beta = range.u.tr_mul(b);
        let ls_residual = (b - &range.u * &beta).norm();
        Ok(BallProjector {
            a,
            range,
            beta,
            ls_residual,
            delta,
        })
    }

    fn residual(&self, c: &Vector, b: &Vector) -> f64 {
        (self.a * c - b).norm()
    }

    fn project(&self, v: &Vector, b: &Vector) -> Vector {
        if self.residual(v, b) <= self.delta {
            return v.clone();
        }
        let alpha = self.range.v.tr_mul(v);
        let sig = &self.range.sigma;
        // e_i = σ_i α_i − β_i ; ‖r(μ)‖² = Σ e_i² / (1 + μσ_i²)² + ρ_ls²
        let e: Vec<f64> = (0..sig.len())
            .map(|i| sig[i] * alpha[i] - self.beta[i])
            .collect();
        let floor = self.ls_residual * self.ls_residual;
        let target = self.delta * self.delta;
        let coeff = |mu: f64| -> Vector {
            Vector::from_fn(sig.len(), |i, _| {
                (alpha[i] + mu * sig[i] * self.beta[i]) / (1.0 + mu * sig[i] * sig[i])
            })
        };
        let perp = v - &self.range.v * &alpha;
        if target <= floor * (1.0 + 1e-12) + f64::MIN_POSITIVE {
            // μ → ∞: affine least-squares projection.
            let inf = Vector::from_fn(sig.len(), |i, _| self.beta[i] / sig[i]);
            return perp + &self.range.v * inf;
        }
        let r2 = |mu: f64| -> f64 {
            floor
                + (0..sig.len())
                    .map(|i| (e[i] / (1.0 + mu * sig[i] * sig[i])).powi(2))
                    .sum::<f64>()
        };
        // Newton on ψ(μ) = 1/‖r(μ)‖ − 1/δ, which is concave and increasing.
        let psi = |mu: f64| -> (f64, f64) {
            let rr = r2(mu);
            let d: f64 = (0..sig.len())
                .map(|i| {
                    let w = 1.0 + mu * sig[i] * sig[i];
                    -2.0 * e[i] * e[i] * sig[i] * sig[i] / (w * w * w)
                })
                .sum();
            let norm = rr.sqrt();
            (1.0 / norm - 1.0 / self.delta, -0.5 * d / (rr * norm))
        };
        let mut lo = 0.0;
        let mut hi = f64::INFINITY;
        let mut mu = 0.0;
        for _ in 0..SECULAR_MAX_ITERS {
            let (val, der) = psi(mu);
            if val.abs() <= 1e-14 / self.delta {
                break;
            }
            if val < 0.0 {
                lo = mu;
            } else {
                hi = mu;
            }
            let mut next = if der > 0.0 { mu - val / der } else { f64::NAN };
            if !(next > lo && next < hi) {
                next = if hi.is_finite() {
                    0.5 * (lo + hi)
                } else {
                    (2.0 * mu).max(1.0)
                };
            }
            if next == mu {
                break;
            }
            mu = next;
        }
        // Guard feasibility against the last rounding.
        let mut c = &perp + &self.range.v * coeff(mu);
        let mut bumped = mu;
        for k in 0..60 {
            if self.residual(&c, b) <= self.delta {
                return c;
            }
            bumped = bumped.max(f64::MIN_POSITIVE) * (1.0 + 1e-10 * 2f64.powi(k));
            c = &perp + &self.range.v * coeff(bumped);
        }
        let inf = Vector::from_fn(sig.len(), |i, _| self.beta[i] / sig[i]);
        perp + &self.range.v * inf
    }
}

fn soft_threshold(v: &Vector, t: f64) -> Vector {
    v.map(|x| x.signum() * (x.abs() - t).max(0.0))
}

fn l1(v: &Vector) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

/// Dictionary with column `j` removed.
fn without_column(d: &Matrix, j: usize) -> Matrix {
    d.clone().remove_column(j)
}

fn with_zero_at(c: &Vector, j: usize) -> Vector {
    c.clone().insert_row(j, 0.0)
}

/// Lower bound `yᵀb − δ‖y‖` on the optimum, after scaling `y` so that
/// `‖Aᵀy‖_∞ ≤ 1` (weak duality).
fn dual_bound(a: &Matrix, b: &Vector, delta: f64, mut y: Vector) -> f64 {
    let scale = a.tr_mul(&y).amax();
    if scale == 0.0 || !scale.is_finite() {
        return f64::NEG_INFINITY;
    }
    if scale > 1.0 {
        y /= scale;
    }
    y.dot(b) - delta * y.norm()
}

/// `(Aᵀ)⁺ w = U Σ⁻¹ Vᵀ w`.
fn transpose_pinv_apply(range: &Range, w: &Vector) -> Vector {
    let mut t = range.v.tr_mul(w);
    for (ti, s) in t.iter_mut().zip(range.sigma.iter()) {
        *ti /= s;
    }
    &range.u * t
}

/// Exact vertex of `min ‖c‖₁ s.t. A c = P_range(A) b` reached by simplex
/// pivots from a basis seeded with the largest entries of `z`. Returns the
/// vertex and its optimal dual vector.
fn crossover(proj: &BallProjector<'_>, b: &Vector, z: &Vector) -> Option<(Vector, Vector)> {
    let range = &proj.range;
    let s = range.sigma.len();
    let dim = z.len();
    if s == 0 {
        return None;
    }
    // Full-row-rank reduction: A' = Σ Vᵀ, b' = Uᵀ b.
    let mut ar = range.v.transpose();
    for k in 0..s {
        ar.row_mut(k).scale_mut(range.sigma[k]);
    }
    let br = range.u.tr_mul(b);

    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&i, &j| z[j].abs().total_cmp(&z[i].abs()).then(i.cmp(&j)));
    let mut q: Vec<Vector> = Vec::with_capacity(s);
    let mut basis: Vec<(usize, f64)> = Vec::with_capacity(s);
    for &i in &order {
        let col = ar.column(i).into_owned();
        let norm = col.norm();
        if norm == 0.0 {
            continue;
        }
        let mut r = col;
        for _ in 0..2 {
            for qk in &q {
                let proj_k = qk.dot(&r);
                r.axpy(-proj_k, qk, 1.0);
            }
        }
        let rn = r.norm();
        if rn > 1e-10 * norm {
            q.push(r / rn);
            basis.push((i, 1.0));
            if basis.len() == s {
                break;
            }
        }
    }
    if basis.len() < s {
        return None;
    }
    let build = |basis: &[(usize, f64)]| -> Matrix {
        Matrix::from_fn(s, s, |r, k| basis[k].1 * ar[(r, basis[k].0)])
    };
    let xb = build(&basis).lu().solve(&br)?;
    for (k, v) in xb.iter().enumerate() {
        if *v < 0.0 {
            basis[k].1 = -1.0;
        }
    }

    let max_pivots = 50 * (s + dim);
    let mut degenerate = 0;
    for _ in 0..max_pivots {
        let bm = build(&basis);
        let lu = bm.clone().lu();
        let xb = lu.solve(&br)?;
        let y = bm.transpose().lu().solve(&Vector::from_element(s, 1.0))?;
        let scores = ar.tr_mul(&y);
        let in_basis = |i: usize| basis.iter().any(|&(j, _)| j == i);
        let bland = degenerate > 2 * s;
        let mut enter: Option<(usize, f64, f64)> = None;
        for i in 0..dim {
            if in_basis(i) {
                continue;
            }
            let (d, sign) = if scores[i] > 0.0 {
                (1.0 - scores[i], 1.0)
            } else {
                (1.0 + scores[i], -1.0)
            };
            if d < -1e-12 && enter.is_none_or(|(_, _, best)| !bland && d < best) {
                enter = Some((i, sign, d));
            }
        }
        let Some((e, sign, _)) = enter else {
            let mut c = Vector::zeros(dim);
            for (k, &(i, sg)) in basis.iter().enumerate() {
                c[i] = sg * xb[k].max(0.0);
            }
            return Some((c, &range.u * y));
        };
        let w = lu.solve(&(ar.column(e) * sign))?;
        let mut leave: Option<(usize, f64)> = None;
        for k in 0..s {
            if w[k] > 1e-12 {
                let t = xb[k].max(0.0) / w[k];
                let better = match leave {
                    None => true,
                    Some((l, best)) => t < best || (t == best && basis[k].0 < basis[l].0),
                };
                if better {
                    leave = Some((k, t));
                }
            }
        }
        let (k, t) = leave?;
        degenerate = if t == 0.0 { degenerate + 1 } else { 0 };
        basis[k] = (e, sign);
    }
    None
}

/// Sparsest self-expression of column `j` of `d`.
pub fn solve_column(d: &Matrix, j: usize, settings: &ExpressionSettings) -> Result<ColumnSolution> {
    solve_column_from(d, j, settings, None)
}

/// As [`solve_column`], starting the iteration from `start` (length `n`,
/// entry `j` ignored) instead of the least-squares solution.
pub fn solve_column_from(
    d: &Matrix,
    j: usize,
    settings: &ExpressionSettings,
    start: Option<&Vector>,
) -> Result<ColumnSolution> {
    settings.validate()?;
    ensure_finite(d, "dictionary")?;
    let n = d.ncols();
    if j >= n {
        return Err(Error::InvalidArgument(format!("column {j} out of range for {n} columns")));
    }
    let target = d.column(j).into_owned();
    let scale = target.norm();
    if scale == 0.0 {
        return Ok(ColumnSolution {
            coeffs: Vector::zeros(n),
            residual: 0.0,
            l1: 0.0,
            gap: 0.0,
            iterations: 0,
            status: ColumnStatus::ZeroColumn,
        });
    }
    let a = without_column(d, j);
    let b = &target / scale;
    let mut proj = BallProjector::new(&a, &b, settings.eps_rel)?;
    let infeasible = proj.ls_residual > settings.eps_rel + 1e-12 / scale;
    if infeasible {
        proj.delta = proj.ls_residual;
    } else {
        proj.delta = proj.delta.max(proj.ls_residual);
    }

    let dim = a.ncols();
    let sqrt_dim = (dim.max(1) as f64).sqrt();
    let mut rho = settings.rho;
    let mut z = match start {
        Some(s) if s.len() == n => s.clone().remove_row(j) / scale,
        Some(s) => {
            return Err(Error::DimensionMismatch {
                expected: format!("{n}"),
                got: format!("{}", s.len()),
            })
        }
        None => proj.range.pinv_apply(&b),
    };
    let mut x = z.clone();
    let within = |c: &Vector, lower: f64| l1(c) - lower <= settings.gap_tol * l1(c).max(1.0);
    let mut u = Vector::zeros(dim);
    let mut polished: Option<Vector> = None;
    let mut lower = f64::NEG_INFINITY;
    let mut converged = false;
    let mut certified = false;
    let mut iterations = 0;

    let refine = |z: &Vector, w: &Vector, polished: &mut Option<Vector>, lower: &mut f64| -> Result<()> {
        *lower = lower.max(dual_bound(&a, &b, proj.delta, transpose_pinv_apply(&proj.range, w)));
        if let Some((c, y)) = crossover(&proj, &b, z) {
            *lower = lower.max(dual_bound(&a, &b, proj.delta, y));
            if polished.as_ref().is_none_or(|p| l1(&c) < l1(p)) {
                *polished = Some(c);
            }
        }
        Ok(())
    };

    for it in 1..=settings.max_iters {
        iterations = it;
        x = proj.project(&(&z - &u), &b);
        let z_prev = z.clone();
        z = soft_threshold(&(&x + &u), 1.0 / rho);
        u += &x - &z;

        let primal = (&x - &z).norm();
        let dual = rho * (&z - &z_prev).norm();
        let eps_pri = settings.abs_tol * sqrt_dim + settings.rel_tol * x.norm().max(z.norm());
        let eps_dual = settings.abs_tol * sqrt_dim + settings.rel_tol * rho * u.norm();

        if settings.polish && it % CHECK_EVERY == 0 {
            refine(&z, &(&u * rho), &mut polished, &mut lower)?;
            if polished.as_ref().is_some_and(|p| within(p, lower)) {
                converged = true;
                certified = true;
                break;
            }
        }
        if primal <= eps_pri && dual <= eps_dual {
            converged = true;
            break;
        }
        if it % CHECK_EVERY == 0 {
            // Residual balancing; the scaled dual rescales with ρ.
            if primal > 10.0 * dual {
                rho *= 2.0;
                u /= 2.0;
            } else if dual > 10.0 * primal {
                rho /= 2.0;
                u *= 2.0;
            }
        }
    }
    if settings.polish && !certified {
        refine(&z, &(&u * rho), &mut polished, &mut lower)?;
    } else if !settings.polish {
        lower = lower.max(dual_bound(&a, &b, proj.delta, transpose_pinv_apply(&proj.range, &(&u * rho))));
    }

    // A certified support solution wins: it satisfies the constraint to
    // rounding, which keeps rank(C − I) well defined downstream.
    let chosen = match polished {
        Some(p) if within(&p, lower) || l1(&p) <= l1(&x) => p,
        _ => x,
    };
    let gap = (l1(&chosen) - lower).max(0.0);

    // The problem is homogeneous in d_j: undo the normalization.
    let coeffs = with_zero_at(&chosen, j) * scale;
    let residual = (d * &coeffs - &target).norm();
    let status = if infeasible {
        ColumnStatus::Infeasible
    } else if converged || within(&chosen, lower) {
        ColumnStatus::Converged
    } else {
        ColumnStatus::MaxIterations
    };
    Ok(ColumnSolution {
        l1: l1(&coeffs),
        coeffs,
        residual,
        gap: gap * scale,
        iterations,
        status,
    })
}

/// Solves every column of `d` independently (in parallel) and assembles `C`.
pub fn update_expression(d: &Matrix, settings: &ExpressionSettings) -> Result<ExpressionMatrix> {
    update_expression_from(d, settings, None)
}

/// As [`update_expression`], starting column `j` from column `j` of
/// `previous`.
pub fn update_expression_from(
    d: &Matrix,
    settings: &ExpressionSettings,
    previous: Option<&Matrix>,
) -> Result<ExpressionMatrix> {
    settings.validate()?;
    ensure_finite(d, "dictionary")?;
    let n = d.ncols();
    if let Some(p) = previous {
        crate::linalg::ensure_shape(p, n, n)?;
    }
    let columns = (0..n)
        .into_par_iter()
        .map(|j| {
            let start = previous.map(|p| p.column(j).into_owned());
            solve_column_from(d, j, settings, start.as_ref())
        })
        .collect::<Result<Vec<_>>>()?;
    let mut c = Matrix::zeros(n, n);
    for (j, col) in columns.iter().enumerate() {
        c.set_column(j, &col.coeffs);
        c[(j, j)] = 0.0;
    }
    Ok(ExpressionMatrix { c, columns })
}

/// `C₀` from side information `B′` (`n × r`): the dictionary is `B′ᵀ`.
pub fn init_expression(bprime: &Matrix, settings: &ExpressionSettings) -> Result<ExpressionMatrix> {
    update_expression(&bprime.transpose(), settings)
}

/// Minimum-norm least-squares self-expression of every column. Dense, but
/// cheap and exact whenever each column lies in the span of the others.
pub fn min_norm_expression(d: &Matrix) -> Matrix {
    let n = d.ncols();
    let mut c = Matrix::zeros(n, n);
    for j in 0..n {
        let a = without_column(d, j);
        let coeffs = Range::new(&a)
            .map(|r| r.pinv_apply(&d.column(j).into_owned()))
            .unwrap_or_else(|_| Vector::zeros(n - 1));
        c.set_column(j, &with_zero_at(&coeffs, j));
    }
    c
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
        Matrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
    }

    #[test]
    fn duplicate_column_is_paired() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let base = gaussian(3, 2, &mut rng);
        let d = Matrix::from_columns(&[base.column(0), base.column(0), base.column(1)]);
        let s = solve_column(&d, 0, &ExpressionSettings::default()).unwrap();
        assert!((&s.coeffs - Vector::from_vec(vec![0.0, 1.0, 0.0])).amax() < 1e-7, "{s:?}");
        assert!(s.iterations < 200);
        assert_eq!(s.status, ColumnStatus::Converged);
    }

    #[test]
    fn zero_column_has_zero_coefficients() {
        let mut d = Matrix::from_element(3, 4, 1.0);
        d.column_mut(2).fill(0.0);
        let s = solve_column(&d, 2, &ExpressionSettings::default()).unwrap();
        assert_eq!(s.coeffs, Vector::zeros(4));
        assert_eq!(s.residual, 0.0);
        assert_eq!(s.status, ColumnStatus::ZeroColumn);
    }

    #[test]
    fn full_spark_dictionary_is_infeasible() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let d = gaussian(6, 5, &mut rng);
        let settings = ExpressionSettings {
            eps_rel: 1e-6,
            ..Default::default()
        };
        let e = update_expression(&d, &settings).unwrap();
        assert_eq!(e.infeasible_columns(), vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn duplicate_pair_with_zeros() {
        let mut d = Matrix::zeros(4, 5);
        let v = Vector::from_vec(vec![1.0, -2.0, 0.5, 3.0]);
        d.set_column(1, &v);
        d.set_column(3, &v);
        let e = update_expression(&d, &ExpressionSettings::default()).unwrap();
        let mut expected = Matrix::zeros(5, 5);
        expected[(3, 1)] = 1.0;
        expected[(1, 3)] = 1.0;
        assert!((&e.c - expected).amax() < 1e-8);
    }

    #[test]
    fn diagonal_is_exactly_zero_and_feasible() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = gaussian(3, 8, &mut rng);
        let e = update_expression(&d, &ExpressionSettings::default()).unwrap();
        for j in 0..8 {
            assert_eq!(e.c[(j, j)], 0.0);
            assert!(e.columns[j].residual <= 1e-8 * d.column(j).norm() + 1e-12);
        }
        assert!((&d * &e.c - &d).norm() <= 1e-8 * d.norm());
        let csv = e.diagnostics_csv();
        assert_eq!(csv.lines().count(), 9);
    }

    #[test]
    fn column_scaling_is_homogeneous() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let d = gaussian(3, 7, &mut rng);
        let mut d2 = d.clone();
        d2.column_mut(2).scale_mut(5.0);
        let a = solve_column(&d, 2, &ExpressionSettings::default()).unwrap();
        let b = solve_column(&d2, 2, &ExpressionSettings::default()).unwrap();
        assert!((a.coeffs * 5.0 - b.coeffs).amax() < 1e-7);
    }

    #[test]
    fn min_norm_expression_reproduces_dictionary() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let d = gaussian(3, 7, &mut rng);
        let c = min_norm_expression(&d);
        assert!((&d * &c - &d).norm() < 1e-10 * d.norm());
        assert!((0..7).all(|j| c[(j, j)] == 0.0));
    }

    #[test]
    fn ball_projection_is_feasible_and_optimal() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let a = gaussian(3, 6, &mut rng);
        let b = Vector::from_fn(3, |_, _| StandardNormal.sample(&mut rng));
        let proj = BallProjector::new(&a, &b, 0.1).unwrap();
        for _ in 0..20 {
            let v = Vector::from_fn(6, |_, _| { let x: f64 = StandardNormal.sample(&mut rng); 3.0 * x });
            let p = proj.project(&v, &b);
            let r = proj.residual(&p, &b);
            assert!(r <= 0.1 * (1.0 + 1e-12));
            // KKT: v − p = μ Aᵀ(Ap − b) with μ ≥ 0.
            let g = a.tr_mul(&(&a * &p - &b));
            let w = &v - &p;
            if w.norm() > 1e-12 {
                let cos = w.dot(&g) / (w.norm() * g.norm());
                assert!((cos - 1.0).abs() < 1e-8, "cos {cos}");
                assert!((r - 0.1).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn rejects_bad_settings() {
        let d = Matrix::identity(2, 2);
        let s = ExpressionSettings { eps_rel: -1.0, ..Default::default() };
        assert!(solve_column(&d, 0, &s).is_err());
        assert!(solve_column(&d, 2, &ExpressionSettings::default()).is_err());
    }
}

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use sxmc::expression::{update_expression, ExpressionSettings};
use sxmc::{FixedRankPoint, Matrix, SamplingPattern, SelfExpressiveManifold};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Numerical rank via nalgebra's own SVD.
pub fn oracle_rank(a: &DMatrix<f64>, rel_tol: f64) -> usize {
    let s = a.clone().svd(false, false).singular_values;
    let top = s.iter().cloned().fold(0.0, f64::max);
    s.iter().filter(|&&x| x > rel_tol * top).count()
}

/// A point on a self-expressive manifold: an `m × n` rank-`r` matrix whose
/// rows lie in the row space of a random rank-`k` dictionary, with `C` the
/// sparsest self-expression of that dictionary. `q = n − k` generically.
pub struct Instance {
    pub mfd: SelfExpressiveManifold,
    pub x: FixedRankPoint,
    pub c: Matrix,
}

pub fn self_expressive_instance<R: Rng>(m: usize, n: usize, r: usize, k: usize, rng: &mut R) -> Instance {
    assert!(r <= k && k < n);
    let dict = gaussian(k, k, rng) * gaussian(k, n, rng);
    let exact = ExpressionSettings {
        eps_rel: 0.0,
        ..ExpressionSettings::default()
    };
    let c = update_expression(&dict, &exact).unwrap().c;
    let mfd = SelfExpressiveManifold::new(&c, r, m, Some(1e-6)).unwrap();
    let x = mfd
        .point_from_ambient(&(gaussian(m, r, rng) * gaussian(r, k, rng) * &dict))
        .unwrap();
    Instance { mfd, x, c }
}

pub fn fixed_rank_instance<R: Rng>(m: usize, n: usize, r: usize, rng: &mut R) -> (SelfExpressiveManifold, FixedRankPoint) {
    let mfd = SelfExpressiveManifold::fixed_rank(m, n, r).unwrap();
    let x = FixedRankPoint::from_matrix(&(gaussian(m, r, rng) * gaussian(r, n, rng)), r).unwrap();
    (mfd, x)
}

pub fn bernoulli_pattern<R: Rng>(m: usize, n: usize, p: f64, rng: &mut R) -> SamplingPattern {
    let mask = (0..m * n).map(|_| rng.random_bool(p)).collect();
    SamplingPattern::from_mask(m, n, mask).unwrap()
}

pub fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            if n - i < k - cur.len() {
                break;
            }
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::new(), &mut out);
    out
}

/// Optimum of `min ‖x‖₁ s.t. A x = b` by enumerating basic solutions of the
/// split LP `min 1ᵀ(u + v)`, `A(u − v) = b`, `u, v ≥ 0`. Every vertex has
/// support on a column basis of `A`, so the minimum over bases is the LP
/// optimum. `None` when `b` is outside the range of `A`.
pub fn l1_lp_oracle(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<f64> {
    if b.norm() == 0.0 {
        return Some(0.0);
    }
    let k = oracle_rank(a, 1e-10);
    let mut best: Option<f64> = None;
    for cols in combinations(a.ncols(), k) {
        let sub = a.select_columns(&cols);
        let svd = sub.clone().svd(true, true);
        let s = &svd.singular_values;
        if s.min() <= 1e-10 * s.max() {
            continue;
        }
        let x = svd.solve(b, 0.0).ok()?;
        if (&sub * &x - b).norm() > 1e-9 * b.norm().max(1.0) {
            continue;
        }
        let l1 = x.iter().map(|v| v.abs()).sum::<f64>();
        best = Some(best.map_or(l1, |bst: f64| bst.min(l1)));
    }
    best
}

/// `A` with column `j` removed.
pub fn drop_column(a: &Matrix, j: usize) -> DMatrix<f64> {
    a.clone().remove_column(j)
}

/// Tangent projections at `x` of `count` random directions, vectorized one
/// per column.
pub fn projector_images<R: Rng>(
    mfd: &SelfExpressiveManifold,
    x: &FixedRankPoint,
    count: usize,
    rng: &mut R,
) -> DMatrix<f64> {
    let (m, n) = x.shape();
    let mut out = DMatrix::zeros(m * n, count);
    for c in 0..count {
        let z = gaussian(m, n, rng);
        let p = mfd.project_tangent(x, &z).unwrap().into_ambient();
        out.set_column(c, &DVector::from_column_slice(p.as_slice()));
    }
    out
}

/// Entrywise loop versions of the error metrics.
pub fn loop_nmse(m: &Matrix, mh: &Matrix) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            num += (m[(i, j)] - mh[(i, j)]).powi(2);
            den += m[(i, j)].powi(2);
        }
    }
    num / den
}

pub fn loop_rnmse(m: &Matrix, mh: &Matrix, omega: &SamplingPattern) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for (i, j) in omega.indices() {
        num += (m[(i, j)] - mh[(i, j)]).powi(2);
        den += m[(i, j)].powi(2);
    }
    num / den
}

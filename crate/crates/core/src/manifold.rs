//! Geometry of the fixed-rank manifold `M^(r)` and of its self-expressive
//! submanifold `M^(r)(C) = {X : rank X = r, XC = X}`.
//!
//! Points are stored as compact SVD triples, tangent vectors in ambient
//! `m×n` form. The tangent projector is
//!
//! ```text
//! P(Z) = (P_U Z P_V + (I − P_U) Z P_V + P_U Z (I − P_V)) P_W
//! ```
//!
//! where `W` is an orthonormal basis of `ker((C − I)ᵀ)`. Every point of
//! `M^(r)(C)` has its row space inside `range(W)`, so `P_V` and `P_W`
//! commute and the composite above is an orthogonal projector. The
//! retraction is the metric projection: the rank-`r` truncated SVD of
//! `X + ξ`. Because `X + ξ = (X + ξ) P_W`, the truncation never leaves the
//! self-expressive set.
//!
//! The fixed-rank manifold itself is the same type with the `W` factor
//! dropped ([`SelfExpressiveManifold::fixed_rank`]).

use crate::error::{shape_error, Error, Result};
use crate::linalg::{
    default_rank_tol, ensure_finite, null_space_basis, svd, Matrix, SvdFactors, SvdRank, Vector,
};

/// Relative `‖X(C − I)‖_F / ‖X‖_F` above which a base point is rejected.
pub const OFF_MANIFOLD_TOL: f64 = 1e-6;

/// Relative singular gap `(σ_r − σ_{r+1}) / σ₁` below which a truncation is
/// flagged as non-unique.
pub const DEGENERATE_GAP_TOL: f64 = 1e-10;

/// A rank-`r` matrix `U diag(σ) Vᵀ` with `σ_i > 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedRankPoint {
    factors: SvdFactors,
}

impl FixedRankPoint {
    pub fn from_factors(factors: SvdFactors) -> Result<Self> {
        let r = factors.sigma.len();
        if r == 0 || factors.u.ncols() != r || factors.v.ncols() != r {
            return Err(Error::InvalidArgument(format!(
                "inconsistent factor shapes: U {:?}, sigma {}, V {:?}",
                factors.u.shape(),
                r,
                factors.v.shape()
            )));
        }
        if factors.sigma.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::InfeasibleRank {
                required: r,
                available: factors.sigma.iter().filter(|&&s| s > 0.0).count(),
                q: 0,
            });
        }
        Ok(FixedRankPoint { factors })
    }

    /// Best rank-`r` approximation of `a` viewed as a point of `M^(r)`.
    pub fn from_matrix(a: &Matrix, r: usize) -> Result<Self> {
        let tol = default_rank_tol(a.nrows(), a.ncols());
        truncate_to_rank(a, r, tol, 0).map(|(p, _)| p)
    }

    pub fn rank(&self) -> usize {
        self.factors.sigma.len()
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.factors.u.nrows(), self.factors.v.nrows())
    }

    pub fn u(&self) -> &Matrix {
        &self.factors.u
    }

    pub fn sigma(&self) -> &Vector {
        &self.factors.sigma
    }

    pub fn v(&self) -> &Matrix {
        &self.factors.v
    }

    pub fn factors(&self) -> &SvdFactors {
        &self.factors
    }

    pub fn embed(&self) -> Matrix {
        self.factors.reconstruct()
    }

    /// `‖X‖_F`, read off the singular values.
    pub fn norm(&self) -> f64 {
        self.factors.sigma.norm()
    }
}

/// Ambient representative of a tangent vector at `base`.
#[derive(Debug, Clone)]
pub struct TangentVector<'a> {
    ambient: Matrix,
    base: &'a FixedRankPoint,
}

impl<'a> TangentVector<'a> {
    pub fn zero(base: &'a FixedRankPoint) -> Self {
        let (m, n) = base.shape();
        TangentVector {
            ambient: Matrix::zeros(m, n),
            base,
        }
    }

    pub fn ambient(&self) -> &Matrix {
        &self.ambient
    }

    pub fn into_ambient(self) -> Matrix {
        self.ambient
    }

    pub fn base(&self) -> &'a FixedRankPoint {
        self.base
    }

    pub fn norm(&self) -> f64 {
        self.ambient.norm()
    }

    pub fn scaled(&self, t: f64) -> TangentVector<'a> {
        TangentVector {
            ambient: &self.ambient * t,
            base: self.base,
        }
    }

    /// Riemannian metric: the Frobenius inner product restricted to the
    /// tangent space.
    pub fn inner(&self, other: &TangentVector<'_>) -> f64 {
        self.ambient.dot(&other.ambient)
    }
}

/// Outcome of a retraction.
#[derive(Debug, Clone)]
pub struct Retraction {
    pub point: FixedRankPoint,
    /// The `r`-th and `(r+1)`-th singular values of `X + ξ` nearly coincide,
    /// so the truncation is not unique.
    pub near_degenerate: bool,
}

#[derive(Debug, Clone, PartialEq)]
enum Constraint {
    FixedRank,
    SelfExpressive { c: Matrix, w: Matrix },
}

/// `M^(r)(C)`, or plain `M^(r)` when built with [`Self::fixed_rank`].
#[derive(Debug, Clone, PartialEq)]
pub struct SelfExpressiveManifold {
    m: usize,
    n: usize,
    r: usize,
    q: usize,
    rank_tol: f64,
    constraint: Constraint,
}

impl SelfExpressiveManifold {
    /// Builds `M^(r)(C)` for an `n×n` expression matrix with zero diagonal.
    ///
    /// `q = rank(C − I)` and `W` come from the null space of `(C − I)ᵀ`
    /// at relative tolerance `rank_tol` (default [`default_rank_tol`]).
    pub fn new(c: &Matrix, r: usize, m: usize, rank_tol: Option<f64>) -> Result<Self> {
        ensure_finite(c, "expression matrix")?;
        let n = c.nrows();
        if c.ncols() != n {
            return Err(shape_error((n, n), c.shape()));
        }
        check_rank(m, n, r)?;
        if let Some(index) = (0..n).find(|&i| c[(i, i)] != 0.0) {
            return Err(Error::NonzeroDiagonal {
                index,
                value: c[(index, index)],
            });
        }
        let rank_tol = rank_tol.unwrap_or_else(|| default_rank_tol(n, n));
        let shifted_t = (c - Matrix::identity(n, n)).transpose();
        let (w, q) = null_space_basis(&shifted_t, rank_tol)?;
        if n - q < r || (m + n - r) * r < q {
            return Err(Error::InfeasibleRank {
                required: r,
                available: n - q,
                q,
            });
        }
        Ok(SelfExpressiveManifold {
            m,
            n,
            r,
            q,
            rank_tol,
            constraint: Constraint::SelfExpressive { c: c.clone(), w },
        })
    }

    /// The fixed-rank manifold `M^(r)` with no self-expressive constraint.
    pub fn fixed_rank(m: usize, n: usize, r: usize) -> Result<Self> {
        check_rank(m, n, r)?;
        Ok(SelfExpressiveManifold {
            m,
            n,
            r,
            q: 0,
            rank_tol: default_rank_tol(m, n),
            constraint: Constraint::FixedRank,
        })
    }

    pub fn is_fixed_rank(&self) -> bool {
        matches!(self.constraint, Constraint::FixedRank)
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.m, self.n)
    }

    pub fn rank(&self) -> usize {
        self.r
    }

    /// `rank(C − I)`; zero for the fixed-rank manifold.
    pub fn q(&self) -> usize {
        self.q
    }

    pub fn rank_tol(&self) -> f64 {
        self.rank_tol
    }

    pub fn expression(&self) -> Option<&Matrix> {
        match &self.constraint {
            Constraint::SelfExpressive { c, .. } => Some(c),
            Constraint::FixedRank => None,
        }
    }

    /// Orthonormal basis of `ker((C − I)ᵀ)`, `n × (n − q)`.
    pub fn null_basis(&self) -> Option<&Matrix> {
        match &self.constraint {
            Constraint::SelfExpressive { w, .. } => Some(w),
            Constraint::FixedRank => None,
        }
    }

    /// Nominal dimension `(m + n − r) r − q`.
    pub fn dimension(&self) -> usize {
        (self.m + self.n - self.r) * self.r - self.q
    }

    /// Rank of [`Self::project_tangent`] as a linear map, `(m + n − q − r) r`.
    ///
    /// Rows of a point are confined to an `(n − q)`-dimensional subspace,
    /// which removes `r·q` directions from the fixed-rank tangent space
    /// rather than `q`. The two values agree only when `q = 0`.
    pub fn tangent_dimension(&self) -> usize {
        (self.m + self.n - self.q - self.r) * self.r
    }

    /// `‖X(C − I)‖_F`; zero on the fixed-rank manifold.
    pub fn self_expressive_residual(&self, x: &Matrix) -> f64 {
        match &self.constraint {
            Constraint::FixedRank => 0.0,
            Constraint::SelfExpressive { c, .. } => (x * c - x).norm(),
        }
    }

    /// `‖X(C − I)‖_F / ‖X‖_F`.
    pub fn relative_residual(&self, x: &FixedRankPoint) -> f64 {
        let nx = x.norm();
        if nx == 0.0 {
            return 0.0;
        }
        self.self_expressive_residual(&x.embed()) / nx
    }

    /// `‖X − X W Wᵀ‖_F / ‖X‖_F`: distance of the rows of `X` from `range(W)`.
    pub fn row_space_residual(&self, x: &FixedRankPoint) -> f64 {
        let nx = x.norm();
        if nx == 0.0 {
            return 0.0;
        }
        let dense = x.embed();
        (&dense - self.apply_w(dense.clone())).norm() / nx
    }

    fn check_point(&self, x: &FixedRankPoint) -> Result<()> {
        if x.shape() != (self.m, self.n) {
            return Err(shape_error((self.m, self.n), x.shape()));
        }
        if x.rank() != self.r {
            return Err(Error::InvalidArgument(format!(
                "point has rank {}, manifold rank is {}",
                x.rank(),
                self.r
            )));
        }
        let rel = self.row_space_residual(x);
        if rel > OFF_MANIFOLD_TOL {
            return Err(Error::OffManifold(rel));
        }
        Ok(())
    }

    fn apply_w(&self, z: Matrix) -> Matrix {
        match &self.constraint {
            Constraint::FixedRank => z,
            Constraint::SelfExpressive { w, .. } => {
                let zw = &z * w;
                zw * w.transpose()
            }
        }
    }

    /// Orthogonal projection of an ambient matrix onto `T_X`.
    pub fn project_tangent<'a>(
        &self,
        x: &'a FixedRankPoint,
        z: &Matrix,
    ) -> Result<TangentVector<'a>> {
        self.check_point(x)?;
        if z.shape() != (self.m, self.n) {
            return Err(shape_error((self.m, self.n), z.shape()));
        }
        let (u, v) = (x.u(), x.v());
        let zv = z * v;
        let utz = u.transpose() * z;
        let utzv = &utz * v;
        // P_U Z P_V + (I − P_U) Z P_V + P_U Z (I − P_V) = Z P_V + P_U Z − P_U Z P_V
        let fixed = &zv * v.transpose() + u * utz - u * utzv * v.transpose();
        Ok(TangentVector {
            ambient: self.apply_w(fixed),
            base: x,
        })
    }

    /// Residuals of the two tangency conditions for an ambient matrix at `x`:
    /// `‖(I − P_U) Z (I − P_V)‖_F` and `‖Z(C − I)‖_F`.
    pub fn tangency_residuals(&self, x: &FixedRankPoint, z: &Matrix) -> (f64, f64) {
        let (u, v) = (x.u(), x.v());
        let left = z - u * (u.transpose() * z);
        let both = &left - (&left * v) * v.transpose();
        (both.norm(), self.self_expressive_residual(z))
    }

    /// Metric-projection retraction `R_X(ξ)`: rank-`r` truncated SVD of `X + ξ`.
    pub fn retract(&self, xi: &TangentVector<'_>) -> Result<Retraction> {
        let x = xi.base();
        if x.shape() != (self.m, self.n) || x.rank() != self.r {
            return Err(shape_error((self.m, self.n), x.shape()));
        }
        if xi.ambient.iter().all(|&e| e == 0.0) {
            return Ok(Retraction {
                point: x.clone(),
                near_degenerate: false,
            });
        }
        let y = x.embed() + &xi.ambient;
        let (point, gap) = self.truncate_rows(&y).map_err(|e| {
            match e {
                Error::InfeasibleRank { .. } => {
                    let f = svd(&y, SvdRank::Full);
                    let ratio = f
                        .map(|f| {
                            if f.sigma[0] > 0.0 {
                                f.sigma[self.r - 1] / f.sigma[0]
                            } else {
                                0.0
                            }
                        })
                        .unwrap_or(0.0);
                    Error::RankDeficientStep(ratio)
                }
                other => other,
            }
        })?;
        Ok(Retraction {
            point,
            near_degenerate: gap < DEGENERATE_GAP_TOL,
        })
    }

    /// Rank-`r` truncation of `A · P_W`.
    pub fn point_from_ambient(&self, a: &Matrix) -> Result<FixedRankPoint> {
        ensure_finite(a, "ambient matrix")?;
        if a.shape() != (self.m, self.n) {
            return Err(shape_error((self.m, self.n), a.shape()));
        }
        self.truncate_rows(a).map(|(p, _)| p)
    }

    /// Rank-`r` truncation of `A · P_W`, computed from the SVD of the
    /// `m × (n − q)` matrix `A W`.
    fn truncate_rows(&self, a: &Matrix) -> Result<(FixedRankPoint, f64)> {
        let w = match &self.constraint {
            Constraint::FixedRank => return truncate_to_rank(a, self.r, self.rank_tol, self.q),
            Constraint::SelfExpressive { w, .. } => w,
        };
        let (mut factors, gap) = truncated_factors(&(a * w), self.r, self.rank_tol, self.q)?;
        factors.v = w * &factors.v;
        Ok((FixedRankPoint::from_factors(factors)?, gap))
    }

    /// Projects columns through `P_W`; identity on the fixed-rank manifold.
    pub fn project_rows(&self, a: &Matrix) -> Matrix {
        self.apply_w(a.clone())
    }
}

fn check_rank(m: usize, n: usize, r: usize) -> Result<()> {
    if r == 0 || r > m.min(n) {
        return Err(Error::InvalidArgument(format!(
            "rank {r} outside 1..={} for a {m}x{n} manifold",
            m.min(n)
        )));
    }
    Ok(())
}

/// Rank-`r` truncation plus the relative gap `(σ_r − σ_{r+1}) / σ₁`.
fn truncate_to_rank(a: &Matrix, r: usize, rank_tol: f64, q: usize) -> Result<(FixedRankPoint, f64)> {
    let (factors, gap) = truncated_factors(a, r, rank_tol, q)?;
    Ok((FixedRankPoint::from_factors(factors)?, gap))
}

fn truncated_factors(a: &Matrix, r: usize, rank_tol: f64, q: usize) -> Result<(SvdFactors, f64)> {
    let (m, n) = a.shape();
    if r == 0 || r > m.min(n) {
        return Err(Error::InvalidArgument(format!("rank {r} for {m}x{n} matrix")));
    }
    let full = svd(a, SvdRank::Full)?;
    let s1 = full.sigma[0];
    let available = full.numerical_rank(rank_tol);
    if s1 == 0.0 || full.sigma[r - 1] <= rank_tol * s1 {
        return Err(Error::InfeasibleRank {
            required: r,
            available,
            q,
        });
    }
    let next = if r < full.len() { full.sigma[r] } else { 0.0 };
    let gap = (full.sigma[r - 1] - next) / s1;
    Ok((full.truncate(r), gap))
}

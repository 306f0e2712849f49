//! Alternating completion: `C₀` from side information, then repeated
//! descent on `M^(r)(C_k)` followed by a sparse re-expression of the
//! iterate. The baseline skips the expression machinery and runs plain
//! descent on `M^(r)`.

use std::fmt;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{shape_error, Error, Result};
use crate::expression::{init_expression, update_expression_from, ExpressionMatrix, ExpressionSettings};
use crate::linalg::{default_rank_tol, ensure_finite, svd, Matrix, SamplingPattern, SvdRank};
use crate::manifold::{FixedRankPoint, SelfExpressiveManifold};
use crate::solver::{solve, InnerTermination, SolveTrace, SolverConfig};

const AUGMENT_SCALE: f64 = 1e-6;
const AUGMENT_TRIES: usize = 10;
/// Largest relative singular value of `C − I` that may still be treated as
/// zero when the default threshold leaves fewer than `r` free directions.
const RANK_FALLBACK_TOL: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CompletionConfig {
    pub r: usize,
    pub outer_max_iters: usize,
    pub outer_tol_rel: f64,
    pub solver: SolverConfig,
    pub expression: ExpressionSettings,
    /// Run plain fixed-rank descent.
    pub baseline: bool,
    pub seed: u64,
    /// Relative threshold for `rank(C − I)`; defaults to
    /// `max(default_rank_tol, 100·eps_rel)`.
    pub rank_tol: Option<f64>,
}

impl Default for CompletionConfig {
    fn default() -> Self {
        CompletionConfig {
            r: 1,
            outer_max_iters: 50,
            outer_tol_rel: 1e-6,
            solver: SolverConfig::default(),
            expression: ExpressionSettings::default(),
            baseline: false,
            seed: 0,
            rank_tol: None,
        }
    }
}

impl CompletionConfig {
    pub fn with_rank(r: usize) -> Self {
        CompletionConfig {
            r,
            ..Default::default()
        }
    }

    /// Parses a (possibly partial) TOML table; missing fields take defaults.
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse {
            line: 0,
            msg: e.to_string(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.r == 0 {
            return Err(Error::InvalidArgument("rank must be at least 1".into()));
        }
        if !(self.outer_tol_rel > 0.0) || self.outer_max_iters == 0 {
            return Err(Error::InvalidArgument(
                "outer tolerance and iteration budget must be positive".into(),
            ));
        }
        if let Some(t) = self.rank_tol {
            if !(t > 0.0) {
                return Err(Error::InvalidArgument(format!("rank tolerance {t}")));
            }
        }
        self.solver.validate()?;
        self.expression.validate()
    }

    fn manifold_rank_tol(&self, n: usize) -> f64 {
        self.rank_tol
            .unwrap_or_else(|| default_rank_tol(n, n).max(100.0 * self.expression.eps_rel))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CompletionTermination {
    /// Relative change of `X` below the outer tolerance.
    Converged,
    MaxIterations,
    /// The updated `C` admits no rank-`r` point; the previous `C` is kept.
    ExpressionRejected,
    /// Baseline mode: one solve on the fixed-rank manifold.
    SingleSolve,
}

impl fmt::Display for CompletionTermination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CompletionTermination::Converged => "converged",
            CompletionTermination::MaxIterations => "max-iterations",
            CompletionTermination::ExpressionRejected => "expression-rejected",
            CompletionTermination::SingleSolve => "single-solve",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OuterRecord {
    pub iter: usize,
    /// `q` of the manifold the inner solve ran on.
    pub q: usize,
    pub inner_objective: f64,
    pub inner_iterations: usize,
    pub inner_termination: InnerTermination,
    /// `‖C_k‖₁` of the constraint in force (zero for the baseline).
    pub c_l1: f64,
    /// `‖X_{k+1} − X_k‖_F / ‖X_k‖_F`.
    pub x_change: f64,
    /// Largest relative self-expressive residual over all inner iterates.
    pub max_self_expressive_residual: f64,
    /// Columns of the next `C` that fell back to the previous one.
    pub infeasible_columns: usize,
    /// `‖X_{k+1}(C_{k+1} − I)‖_F / ‖X_{k+1}‖_F`, when `C_{k+1}` was formed.
    pub next_feasibility: Option<f64>,
    pub elapsed: Duration,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionReport {
    pub m: usize,
    pub n: usize,
    pub r: usize,
    pub q: usize,
    pub dimension: usize,
    pub tangent_dimension: usize,
    pub observed: usize,
    /// `dimension / observed`.
    pub dof_ratio: f64,
}

impl fmt::Display for DimensionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "m={} n={} r={} q={} dimension={} tangent_dimension={} observed={} dof_ratio={:.4}",
            self.m,
            self.n,
            self.r,
            self.q,
            self.dimension,
            self.tangent_dimension,
            self.observed,
            self.dof_ratio
        )
    }
}

pub fn dimension_report(mfd: &SelfExpressiveManifold, observed: usize) -> DimensionReport {
    let (m, n) = mfd.shape();
    let dimension = mfd.dimension();
    DimensionReport {
        m,
        n,
        r: mfd.rank(),
        q: mfd.q(),
        dimension,
        tangent_dimension: mfd.tangent_dimension(),
        observed,
        dof_ratio: if observed == 0 {
            f64::INFINITY
        } else {
            dimension as f64 / observed as f64
        },
    }
}

#[derive(Debug, Clone)]
pub struct CompletionResult {
    pub x_hat: FixedRankPoint,
    /// The constraint `X̂` satisfies; `None` in baseline mode.
    pub c_hat: Option<ExpressionMatrix>,
    pub outer: Vec<OuterRecord>,
    pub inner: Vec<SolveTrace>,
    pub termination: CompletionTermination,
    /// Report for the first manifold.
    pub dimension: DimensionReport,
}

impl CompletionResult {
    pub fn outer_iterations(&self) -> usize {
        self.outer.len()
    }

    pub fn max_self_expressive_residual(&self) -> f64 {
        self.outer
            .iter()
            .map(|o| o.max_self_expressive_residual)
            .fold(0.0, f64::max)
    }

    /// `iter,q,innerObjective,innerIters,innerTermination,cL1,xChange,maxSelfExpressiveResidual,infeasibleColumns`
    pub fn outer_csv(&self) -> String {
        let mut out = String::from(
            "iter,q,innerObjective,innerIters,innerTermination,cL1,xChange,maxSelfExpressiveResidual,infeasibleColumns\n",
        );
        for o in &self.outer {
            out.push_str(&format!(
                "{},{},{:e},{},{},{:e},{:e},{:e},{}\n",
                o.iter,
                o.q,
                o.inner_objective,
                o.inner_iterations,
                o.inner_termination,
                o.c_l1,
                o.x_change,
                o.max_self_expressive_residual,
                o.infeasible_columns
            ));
        }
        out
    }
}

/// `M^(r)(C)` at `rank_tol`. If that leaves fewer than `r` free directions
/// but `σ_{n−r+1}(C − I) ≤ RANK_FALLBACK_TOL · σ₁`, the threshold is moved
/// into the gap below `σ_{n−r}` so that `q = n − r`.
pub fn expression_manifold(c: &Matrix, r: usize, m: usize, rank_tol: f64) -> Result<SelfExpressiveManifold> {
    let err = match SelfExpressiveManifold::new(c, r, m, Some(rank_tol)) {
        Err(e @ Error::InfeasibleRank { .. }) => e,
        other => return other,
    };
    let n = c.nrows();
    if r == 0 || r >= n {
        return Err(err);
    }
    let s = svd(&(c - Matrix::identity(n, n)), SvdRank::Full)?;
    let s1 = s.sigma[0];
    let (kept, dropped) = (s.sigma[n - r - 1] / s1, s.sigma[n - r] / s1);
    if !(dropped <= RANK_FALLBACK_TOL && kept > dropped) {
        return Err(err);
    }
    SelfExpressiveManifold::new(c, r, m, Some((kept * dropped.max(f64::MIN_POSITIVE)).sqrt()))
}

/// Rank-`r` point of `mfd` near `a`. If `a·P_W` has rank below `r`, small
/// random components inside `range(W)` are added until it does not.
pub fn initial_point(mfd: &SelfExpressiveManifold, a: &Matrix, seed: u64) -> Result<FixedRankPoint> {
    match mfd.point_from_ambient(a) {
        Err(Error::InfeasibleRank { .. }) => {}
        other => return other,
    }
    let (m, n) = mfd.shape();
    let projected = mfd.project_rows(a);
    let s1 = if projected.iter().all(|&x| x == 0.0) {
        a.norm().max(1.0)
    } else {
        svd(&projected, SvdRank::Top(1))?.sigma[0]
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut current = projected;
    for _ in 0..AUGMENT_TRIES {
        let g = Matrix::from_fn(m, n, |_, _| StandardNormal.sample(&mut rng));
        current += mfd.project_rows(&g) * (AUGMENT_SCALE * s1);
        match mfd.point_from_ambient(&current) {
            Err(Error::InfeasibleRank { .. }) => continue,
            other => return other,
        }
    }
    Err(Error::InfeasibleRank {
        required: mfd.rank(),
        available: n - mfd.q(),
        q: mfd.q(),
    })
}

fn relative_change(new: &Matrix, old: &Matrix) -> f64 {
    let den = old.norm();
    let num = (new - old).norm();
    if den == 0.0 {
        if num == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        num / den
    }
}

/// Completes `observed` (masked by `pattern`) using side information `B′`
/// (`n × k`, any `k`).
pub fn complete(
    observed: &Matrix,
    pattern: &SamplingPattern,
    bprime: &Matrix,
    cfg: &CompletionConfig,
) -> Result<CompletionResult> {
    cfg.validate()?;
    ensure_finite(observed, "observed matrix")?;
    let (m, n) = observed.shape();
    if pattern.shape() != (m, n) {
        return Err(shape_error((m, n), pattern.shape()));
    }
    let observed = pattern.apply(observed)?;
    if cfg.baseline {
        return complete_baseline(&observed, pattern, cfg);
    }
    ensure_finite(bprime, "side information")?;
    if bprime.nrows() != n {
        return Err(shape_error((n, cfg.r), bprime.shape()));
    }

    let rank_tol = cfg.manifold_rank_tol(n);
    let mut expr = init_expression(bprime, &cfg.expression)?;
    let mut mfd = expression_manifold(&expr.c, cfg.r, m, rank_tol)?;
    let dimension = dimension_report(&mfd, pattern.observed_count());
    let mut x = initial_point(&mfd, &observed, cfg.seed)?;
    let mut reference = x.embed();
    let mut outer = Vec::new();
    let mut inner = Vec::new();

    let mut k = 0;
    let termination = loop {
        let start = Instant::now();
        let (next, trace) = solve(&mfd, &x, &observed, pattern, &cfg.solver)?;
        let next_dense = next.embed();
        let x_change = relative_change(&next_dense, &reference);
        let mut record = OuterRecord {
            iter: k,
            q: mfd.q(),
            inner_objective: trace.final_objective(),
            inner_iterations: trace.iterations(),
            inner_termination: trace.termination,
            c_l1: expr.objective(),
            x_change,
            max_self_expressive_residual: trace.max_self_expressive_residual(),
            infeasible_columns: 0,
            next_feasibility: None,
            elapsed: Duration::ZERO,
        };
        inner.push(trace);
        x = next;
        k += 1;

        let stop = if x_change <= cfg.outer_tol_rel {
            Some(CompletionTermination::Converged)
        } else if k >= cfg.outer_max_iters {
            Some(CompletionTermination::MaxIterations)
        } else {
            None
        };
        if let Some(reason) = stop {
            record.elapsed = start.elapsed();
            outer.push(record);
            break reason;
        }

        let mut next_expr = update_expression_from(&next_dense, &cfg.expression, Some(&expr.c))?;
        let fallback = next_expr.infeasible_columns();
        next_expr.keep_columns_from(&expr.c, &fallback);
        record.infeasible_columns = fallback.len();
        let nx = next_dense.norm();
        record.next_feasibility = Some(if nx > 0.0 {
            (&next_dense * &next_expr.c - &next_dense).norm() / nx
        } else {
            0.0
        });
        let next_mfd = match SelfExpressiveManifold::new(&next_expr.c, cfg.r, m, Some(rank_tol)) {
            Ok(mf) => mf,
            Err(Error::InfeasibleRank { .. }) => {
                record.elapsed = start.elapsed();
                outer.push(record);
                break CompletionTermination::ExpressionRejected;
            }
            Err(e) => return Err(e),
        };
        let warm = match initial_point(&next_mfd, &next_dense, cfg.seed.wrapping_add(k as u64)) {
            Ok(p) => p,
            Err(Error::InfeasibleRank { .. }) => {
                record.elapsed = start.elapsed();
                outer.push(record);
                break CompletionTermination::ExpressionRejected;
            }
            Err(e) => return Err(e),
        };
        record.elapsed = start.elapsed();
        outer.push(record);
        reference = next_dense;
        expr = next_expr;
        mfd = next_mfd;
        x = warm;
    };

    Ok(CompletionResult {
        x_hat: x,
        c_hat: Some(expr),
        outer,
        inner,
        termination,
        dimension,
    })
}

fn complete_baseline(
    observed: &Matrix,
    pattern: &SamplingPattern,
    cfg: &CompletionConfig,
) -> Result<CompletionResult> {
    let (m, n) = observed.shape();
    let mfd = SelfExpressiveManifold::fixed_rank(m, n, cfg.r)?;
    let dimension = dimension_report(&mfd, pattern.observed_count());
    let x0 = initial_point(&mfd, observed, cfg.seed)?;
    let start = Instant::now();
    let (x, trace) = solve(&mfd, &x0, observed, pattern, &cfg.solver)?;
    let record = OuterRecord {
        iter: 0,
        q: 0,
        inner_objective: trace.final_objective(),
        inner_iterations: trace.iterations(),
        inner_termination: trace.termination,
        c_l1: 0.0,
        x_change: relative_change(&x.embed(), &x0.embed()),
        max_self_expressive_residual: 0.0,
        infeasible_columns: 0,
        next_feasibility: None,
        elapsed: start.elapsed(),
    };
    Ok(CompletionResult {
        x_hat: x,
        c_hat: None,
        outer: vec![record],
        inner: vec![trace],
        termination: CompletionTermination::SingleSolve,
        dimension,
    })
}

//! Riemannian steepest descent with Armijo backtracking for
//! `f(X) = ½‖P_Ω(X) − P_Ω(M)‖²_F` on a (self-expressive) fixed-rank manifold.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{ensure_shape, Matrix, SamplingPattern};
use crate::manifold::{FixedRankPoint, SelfExpressiveManifold, TangentVector};

/// Gradient-norm stopping threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Tolerance {
    /// Multiplied by `‖P_Ω(M)‖_F`.
    Relative(f64),
    Absolute(f64),
}

impl Tolerance {
    pub fn resolve(&self, observed_norm: f64) -> f64 {
        match *self {
            Tolerance::Absolute(t) => t,
            Tolerance::Relative(t) if observed_norm > 0.0 => t * observed_norm,
            Tolerance::Relative(t) => t,
        }
    }

    fn value(&self) -> f64 {
        match *self {
            Tolerance::Relative(t) | Tolerance::Absolute(t) => t,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Initial trial step `ᾱ`.
    pub alpha_bar: f64,
    /// Backtracking contraction `β`.
    pub beta: f64,
    /// Sufficient-decrease constant `σ`.
    pub sigma: f64,
    pub tau: Tolerance,
    pub max_iters: usize,
    pub max_backtracks: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            alpha_bar: 1.0,
            beta: 0.5,
            sigma: 1e-4,
            tau: Tolerance::Relative(1e-6),
            max_iters: 500,
            max_backtracks: 50,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.alpha_bar > 0.0
            && self.beta > 0.0
            && self.beta < 1.0
            && self.sigma > 0.0
            && self.sigma < 1.0
            && self.tau.value() > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "solver config out of range: {self:?}"
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InnerTermination {
    GradientTolerance,
    MaxIterations,
    StalledStep,
}

impl fmt::Display for InnerTermination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InnerTermination::GradientTolerance => "gradient-tolerance",
            InnerTermination::MaxIterations => "max-iterations",
            InnerTermination::StalledStep => "stalled-step",
        })
    }
}

/// One gradient evaluation. `step` and `backtracks` describe the move that
/// left this iterate; both are zero on the terminal record.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iter: usize,
    pub objective: f64,
    pub grad_norm: f64,
    pub step: f64,
    pub backtracks: usize,
    /// `‖X(C − I)‖_F / ‖X‖_F` at this iterate.
    pub self_expressive_residual: f64,
    pub near_degenerate: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveTrace {
    pub records: Vec<IterationRecord>,
    pub termination: InnerTermination,
}

impl SolveTrace {
    pub fn final_objective(&self) -> f64 {
        self.records.last().map(|r| r.objective).unwrap_or(f64::NAN)
    }

    pub fn iterations(&self) -> usize {
        self.records.iter().filter(|r| r.step > 0.0).count()
    }

    pub fn max_self_expressive_residual(&self) -> f64 {
        self.records
            .iter()
            .map(|r| r.self_expressive_residual)
            .fold(0.0, f64::max)
    }

    /// `iter,objective,gradNorm,step,backtracks`
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iter,objective,gradNorm,step,backtracks\n");
        for r in &self.records {
            out.push_str(&format!(
                "{},{:e},{:e},{:e},{}\n",
                r.iter, r.objective, r.grad_norm, r.step, r.backtracks
            ));
        }
        out
    }
}

/// `½‖P_Ω(X) − M_obs‖²_F` for a masked observation matrix.
pub fn objective(x: &Matrix, observed: &Matrix, pattern: &SamplingPattern) -> Result<f64> {
    let r = pattern.apply(x)? - observed;
    Ok(0.5 * r.norm_squared())
}

/// `grad f(X) = P_{T_X}(P_Ω(X) − M_obs)`.
pub fn riemannian_gradient<'a>(
    mfd: &SelfExpressiveManifold,
    x: &'a FixedRankPoint,
    observed: &Matrix,
    pattern: &SamplingPattern,
) -> Result<TangentVector<'a>> {
    let residual = pattern.apply(&x.embed())? - observed;
    mfd.project_tangent(x, &residual)
}

#[derive(Debug, Clone)]
pub struct ArmijoStep {
    pub point: FixedRankPoint,
    pub value: f64,
    /// Smallest `m` that passed the sufficient-decrease test.
    pub backtracks: usize,
    pub step: f64,
    pub near_degenerate: bool,
}

/// Finds the smallest `m ≥ 0` with
/// `f(X) − f(R_X(ᾱβᵐξ)) ≥ σ ᾱ βᵐ ‖ξ‖²` and returns the retracted point.
///
/// Trials whose retraction loses rank are skipped and count toward
/// `max_backtracks`.
pub fn armijo_step<F>(
    mfd: &SelfExpressiveManifold,
    xi: &TangentVector<'_>,
    f: F,
    f_x: f64,
    cfg: &SolverConfig,
) -> Result<ArmijoStep>
where
    F: Fn(&FixedRankPoint) -> Result<f64>,
{
    let xi_sq = xi.norm().powi(2);
    let mut step = cfg.alpha_bar;
    for m in 0..=cfg.max_backtracks {
        match mfd.retract(&xi.scaled(step)) {
            Ok(ret) => {
                let value = f(&ret.point)?;
                if f_x - value >= cfg.sigma * step * xi_sq {
                    return Ok(ArmijoStep {
                        point: ret.point,
                        value,
                        backtracks: m,
                        step,
                        near_degenerate: ret.near_degenerate,
                    });
                }
            }
            Err(Error::RankDeficientStep(_)) => {}
            Err(e) => return Err(e),
        }
        step *= cfg.beta;
    }
    Err(Error::BacktrackExhausted(cfg.max_backtracks + 1))
}

/// Runs gradient descent from `x0` until the gradient norm drops below
/// `τ`, the iteration budget runs out, or backtracking stalls.
pub fn solve(
    mfd: &SelfExpressiveManifold,
    x0: &FixedRankPoint,
    observed: &Matrix,
    pattern: &SamplingPattern,
    cfg: &SolverConfig,
) -> Result<(FixedRankPoint, SolveTrace)> {
    cfg.validate()?;
    let (m, n) = mfd.shape();
    ensure_shape(observed, m, n)?;
    if pattern.shape() != (m, n) {
        return Err(crate::error::shape_error((m, n), pattern.shape()));
    }
    let observed = pattern.apply(observed)?;
    let tau = cfg.tau.resolve(observed.norm());
    let f = |p: &FixedRankPoint| objective(&p.embed(), &observed, pattern);

    let mut x = x0.clone();
    let mut fx = f(&x)?;
    let mut near_degenerate = false;
    let mut records = Vec::new();
    let mut iter = 0;
    let termination = loop {
        let grad = riemannian_gradient(mfd, &x, &observed, pattern)?;
        let grad_norm = grad.norm();
        let mut record = IterationRecord {
            iter,
            objective: fx,
            grad_norm,
            step: 0.0,
            backtracks: 0,
            self_expressive_residual: mfd.relative_residual(&x),
            near_degenerate,
        };
        if grad_norm < tau {
            records.push(record);
            break InnerTermination::GradientTolerance;
        }
        if iter >= cfg.max_iters {
            records.push(record);
            break InnerTermination::MaxIterations;
        }
        let xi = grad.scaled(-1.0);
        let step = match armijo_step(mfd, &xi, f, fx, cfg) {
            Ok(s) => s,
            Err(Error::BacktrackExhausted(_)) => {
                records.push(record);
                break InnerTermination::StalledStep;
            }
            Err(e) => return Err(e),
        };
        record.step = step.step;
        record.backtracks = step.backtracks;
        records.push(record);
        near_degenerate = step.near_degenerate;
        x = step.point;
        fx = step.value;
        iter += 1;
    };
    Ok((
        x,
        SolveTrace {
            records,
            termination,
        },
    ))
}

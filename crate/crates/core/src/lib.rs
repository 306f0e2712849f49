//! Low-rank matrix completion over self-expressive fixed-rank manifolds.

pub mod completion;
pub mod error;
pub mod io;
pub mod experiment;
pub mod expression;
pub mod linalg;
pub mod manifold;
pub mod metrics;
pub mod solver;
pub mod synth;

pub use error::{Error, Result};
pub use linalg::{Matrix, SamplingPattern, SvdFactors, SvdRank, Vector};
pub use manifold::{FixedRankPoint, Retraction, SelfExpressiveManifold, TangentVector};

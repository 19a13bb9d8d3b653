//! Statistical kernel shared by all suites: least-squares fits, 1-D metric
//! MDS and rank/product-moment correlation.

mod correlation;
mod fit;
mod mds;

pub use correlation::{mean, pearson, rank_average, spearman, std_dev};
pub use fit::{
    fit_linear, fit_neg_exponential, fit_neg_exponential_traced, neg_exponential, r_squared,
    FitKind, FitResult, NegExpTrace, NEG_EXP_GRADIENT_TOL, NEG_EXP_MAX_ITER,
};
pub use mds::{kruskal_stress, mds_1d, mds_1d_with, MdsOptions, MdsRestart, MdsResult};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("degenerate predictor: all x values are equal")]
    DegeneratePredictor,
    #[error("degenerate response: all y values are equal")]
    DegenerateResponse,
    #[error("constant input has no defined correlation")]
    ConstantInput,
    #[error("zero vector has no direction")]
    ZeroVector,
    #[error("non-finite input value")]
    NonFinite,
    #[error("ratio {0} is below 1")]
    RatioBelowOne(f64),
    #[error("dissimilarity matrix is not square")]
    NotSquare,
    #[error("dissimilarity matrix is not symmetric at ({0}, {1})")]
    NotSymmetric(usize, usize),
    #[error("negative dissimilarity at ({0}, {1})")]
    NegativeDissimilarity(usize, usize),
    #[error("dissimilarity matrix has non-zero diagonal at {0}")]
    NonZeroDiagonal(usize),
}

//! Reference programs: Lasso coordinate descent, collapsed Gibbs LDA and
//! multiclass logistic regression, plus synthetic data generators.

pub mod lasso;
pub mod lda;
pub mod mlr;
pub mod synthetic;

use thiserror::Error;

pub use lasso::{
    lasso_delta, lasso_delta_data_parallel, lasso_objective, soft_threshold, LassoData,
    LassoProgram,
};
pub use lda::{
    conditional_topic_distribution, gibbs_token_update, lda_log_likelihood, Corpus, LdaLayout,
    LdaProgram,
};
pub use mlr::{mlr_loss, mlr_sufficient_factors, MlrData, MlrProgram};

#[derive(Debug, Error, PartialEq)]
pub enum AlgoError {
    #[error("index {index} out of range (size {len})")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("state corruption: {0}")]
    State(String),
}

use alloc::boxed::Box;

use crate::fit::FitResult;
use crate::photon::CountRecord;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(&'static str),

    #[error("degenerate geometry: small-angle wave vector vanishes at zero detection angle")]
    DegenerateGeometry,

    #[error("model out of range: {0}")]
    ModelOutOfRange(&'static str),

    #[error("degenerate model: {0}")]
    DegenerateModel(&'static str),

    #[error("insufficient statistics: {record:?}")]
    InsufficientStatistics { record: CountRecord },

    #[error("fit did not converge after {iterations} iterations")]
    FitFailure { iterations: usize, best: Box<FitResult> },

    #[error("degenerate fit: {0}")]
    DegenerateFit(&'static str),
}

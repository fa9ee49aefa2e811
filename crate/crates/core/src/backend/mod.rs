//! Verification back-end: mean and length normalization, LDA, and a
//! two-covariance PLDA with EM training, LLR scoring and unsupervised
//! adaptation.

mod lda;
mod normalize;
mod plda;

pub use lda::{lda_apply, lda_fit, LdaTransform, WITHIN_RIDGE};
pub use normalize::{length_normalize, mean_normalize, subtract_mean, MIN_NORM};
pub use plda::{
    plda_adapt, plda_fit, PldaFit, PldaModel, DEFAULT_BETWEEN_SCALE, DEFAULT_EM_ITERS,
    DEFAULT_WITHIN_SCALE,
};

//! Proxy SUR labels from an ensemble of full-reference quality scorers.
//!
//! Each scorer's outputs over one ladder are put on a higher-is-better scale,
//! min-max normalized over the ladder, and averaged across scorers.

mod ensemble;
mod scorers;
mod table;

pub use ensemble::{
    canonicalize_polarity, monotonicity_report, normalize_over_ladder, proxy_sur, proxy_sur_all,
    LabelGenConfig, MonotonicityViolation, ProxyLabelSet,
};
pub use scorers::{psnr, score_builtin, ssim, BuiltinScorer, SSIM_SIGMA, SSIM_WINDOW};
pub use table::{ingest_external_scores, Polarity, ScoreTable, ScorerDescriptor, ScorerOrigin};

//! Evaluation statistics: SSIM, mean +/- SD, and the Wilcoxon signed-rank
//! test used for every model comparison.

mod evaluate;
mod ssim;
mod stats;
mod wilcoxon;

pub use evaluate::{evaluate_model, Synthesizer};
pub use ssim::{ssim, SsimParams};
pub use stats::mean_sd;
pub use wilcoxon::{wilcoxon_signed_rank, wilcoxon_signed_rank_approx, WilcoxonMethod, WilcoxonResult};

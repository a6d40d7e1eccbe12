mod adam;
mod loss;
mod objective;
mod sample;
mod train;

pub use adam::{adam_step, project, AdamConfig, AdamState};
pub use loss::{loss_del, loss_geo, loss_pho, loss_vol, LossWeights};
pub use objective::{evaluate, Evaluation, LossTerms, RayBatch};
pub use sample::{sample_rays, View};
pub use train::{evaluate_view, fit, write_log_csv, FitConfig, FitOptions, FitOutcome, LogRow, LOG_HEADER};

//! Synthetic data, training, evaluation and diagnostics for the mask
//! selection model.

pub mod config;
mod error;
pub mod eval;
pub mod gradcheck;
pub mod render;
pub mod synth;
pub mod train;

pub use config::{Preset, RunConfig, DESK_LR};
pub use error::HarnessError;
pub use eval::{evaluate, selection_ceiling, EvalOutcome, SamplePrediction};
pub use gradcheck::{run_gradcheck, GradCheckRun, GRADCHECK_TOLERANCE};
pub use render::{read_pgm, render_pgm, write_pgm};
pub use synth::{read_dataset, synth_generate, write_dataset, SynthConfig, SyntheticSample};
pub use train::{loss_drop, mean_loss, train, write_log, LogEntry, TrainOutcome};

//! Training loop, warm start, evaluation and run directories.

mod run;
mod trainer;
mod warm;

#[cfg(test)]
mod tests;

pub use run::{
    run_dir, run_id, run_regime, warm_start_path, EvalSummary, RunInfo, RunOptions, RunSummary, BEST_CKPT, CONFIG_FILE, EVAL_FILE,
    LAST_CKPT, METRICS_FILE, RUN_FILE,
};
pub use trainer::{build_dataset, model_spec, slice_mask, EpochLog, Prepared, TrainState, Trainer};
pub use warm::{warm_start, WarmStartReport};

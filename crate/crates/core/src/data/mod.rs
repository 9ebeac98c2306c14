//! Dataset loading, normalization, fold planning, batching and synthesis.

mod batch;
mod folds;
mod png_io;
mod sample;
pub mod synth;

pub use batch::{for_each_prefetched, make_batches, Batch, PREFETCH_DEPTH};
pub use folds::{kfold_split, Fold, FoldPlan};
pub use sample::{load_dataset, NormalizationSpec, Sample};
pub use synth::{synth_generate, synth_samples, SynthOptions};

//! Training one fold to completion or early stop.

use std::path::{Path, PathBuf};
use std::time::Instant;

use super::checkpoint::Checkpoint;
use super::config::{InitSource, TrainConfig};
use super::early_stop::EarlyStopState;
use super::step::{batch_gradients, evaluate_batch};
use crate::data::{for_each_prefetched, make_batches, Batch, Fold, NormalizationSpec, Sample, PREFETCH_DEPTH};
use crate::error::{Error, Result};
use crate::metrics::{MetricRecord, PerceptualDistance};
use crate::model::{load_weights, ModelParams, SegFormer};
use crate::optim::AdamW;
use crate::rng::Rng;

/// Stream offsets under the run seed.
pub const TRAIN_STREAM: u64 = 1000;
pub const INIT_STREAM: u64 = 2000;

/// Outcome of a fold that ran to completion or early stop.
#[derive(Clone, Debug)]
pub struct FoldResult {
    pub fold: usize,
    /// One record per completed epoch.
    pub records: Vec<MetricRecord>,
    /// 1-based epoch with the lowest validation loss.
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub best_dice: f64,
    pub best_params: ModelParams<f32>,
    pub duration_secs: f64,
}

impl FoldResult {
    /// The record of the best epoch.
    pub fn best_record(&self) -> &MetricRecord {
        &self.records[self.best_epoch - 1]
    }

    fn from_checkpoint(ckpt: Checkpoint) -> Self {
        let best_epoch = ckpt.early_stop.best_epoch;
        let best = &ckpt.history[best_epoch - 1];
        Self {
            fold: ckpt.fold,
            best_epoch,
            best_val_loss: best.val_loss,
            best_dice: best.dice,
            records: ckpt.history,
            best_params: ckpt.best_params,
            duration_secs: ckpt.elapsed_secs,
        }
    }
}

#[derive(Clone, Debug)]
pub enum FoldOutcome {
    Finished(FoldResult),
    /// Stopped on request after `epoch`; the checkpoint holds the state.
    Halted { epoch: usize },
}

/// Everything a fold needs besides its configuration.
pub struct FoldContext<'a> {
    pub samples: &'a [Sample],
    pub norm: NormalizationSpec,
    pub lpips: Option<&'a dyn PerceptualDistance>,
    /// Written after every epoch when set.
    pub checkpoint: Option<PathBuf>,
    /// Continue from `checkpoint` if it exists.
    pub resume: bool,
    /// Return [`FoldOutcome::Halted`] after this epoch.
    pub halt_after_epoch: Option<usize>,
}

/// Validation pass over `indices`. Loss and metrics are per-image means,
/// accumulated batch by batch with each batch weighted by its size.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_epoch(
    model: &SegFormer,
    params: &ModelParams<f32>,
    samples: &[Sample],
    norm: &NormalizationSpec,
    indices: &[usize],
    batch_size: usize,
    lpips: Option<&dyn PerceptualDistance>,
    fold: usize,
    epoch: usize,
    train_loss: f64,
) -> Result<MetricRecord> {
    if indices.is_empty() {
        return Err(Error::Data(format!("fold {fold}: empty validation set")));
    }
    let batches = make_batches(indices, batch_size, false, &mut Rng::new(0))?;
    let mut sums = [0.0f64; 6];
    let mut n = 0usize;
    for idx in &batches {
        let batch = Batch::assemble(samples, idx, norm)?;
        let evals = evaluate_batch(model, params, &batch, lpips)?;
        let len = evals.len() as f64;
        let mean = |f: &dyn Fn(&super::step::SampleEval) -> f64| evals.iter().map(f).sum::<f64>() / len;
        let means = [
            mean(&|e| e.loss),
            mean(&|e| e.metrics.iou),
            mean(&|e| e.metrics.dice),
            mean(&|e| e.metrics.psnr_db),
            mean(&|e| e.metrics.ssim),
            mean(&|e| e.metrics.lpips.unwrap_or(0.0)),
        ];
        for (s, m) in sums.iter_mut().zip(means) {
            *s += m * len;
        }
        n += evals.len();
    }
    let [loss, iou, dice, psnr_db, ssim, lp] = sums.map(|s| s / n as f64);
    if !loss.is_finite() {
        return Err(Error::NonFinite(format!("fold {fold} epoch {epoch}: validation loss {loss}")));
    }
    Ok(MetricRecord {
        fold,
        epoch,
        train_loss,
        val_loss: loss,
        iou,
        dice,
        psnr_db,
        ssim,
        lpips: lpips.map(|_| lp),
    })
}

fn initial_params(model: &SegFormer, config: &TrainConfig, fold: usize) -> Result<ModelParams<f32>> {
    match &config.init {
        InitSource::Random => Ok(model.init_params(&mut Rng::with_stream(config.seed, INIT_STREAM + fold as u64))),
        InitSource::Weights(path) => load_weights(path, model.config()),
    }
}

fn diagnostic_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".nonfinite");
    path.with_file_name(name)
}

/// Train `fold` until early stop or `max_epochs`, checkpointing each epoch.
pub fn train_fold(config: &TrainConfig, ctx: &FoldContext<'_>, fold_index: usize, fold: &Fold) -> Result<FoldOutcome> {
    config.validate()?;
    ctx.norm.validate()?;
    if fold.train.is_empty() || fold.val.is_empty() {
        return Err(Error::Data(format!("fold {fold_index}: empty train or validation split")));
    }
    let model = SegFormer::new(config.model_config()?)?;
    let started = Instant::now();

    let resumed = match (&ctx.checkpoint, ctx.resume) {
        (Some(path), true) if path.exists() => Some(Checkpoint::load(path, config)?),
        _ => None,
    };
    let mut state = match resumed {
        Some(c) if c.fold != fold_index => {
            return Err(Error::Contract(format!(
                "checkpoint holds fold {}, expected fold {fold_index}",
                c.fold
            )))
        }
        Some(c) if c.completed => {
            log::info!("fold {fold_index}: already complete, loaded from checkpoint");
            return Ok(FoldOutcome::Finished(FoldResult::from_checkpoint(c)));
        }
        Some(c) => {
            log::info!("fold {fold_index}: resuming after epoch {}", c.epoch);
            c
        }
        None => {
            let params = initial_params(&model, config, fold_index)?;
            Checkpoint {
                config_hash: config.hash(),
                fold: fold_index,
                epoch: 0,
                completed: false,
                elapsed_secs: 0.0,
                rng: Rng::with_stream(config.seed, TRAIN_STREAM + fold_index as u64).state(),
                early_stop: EarlyStopState::new(config.patience),
                optimizer: AdamW::for_params(config.optimizer(), &params)?,
                best_params: params.clone(),
                params,
                history: Vec::new(),
            }
        }
    };
    let base_elapsed = state.elapsed_secs;
    let mut rng = Rng::from_state(state.rng);

    while !state.completed {
        let epoch = state.epoch + 1;
        let batches = make_batches(&fold.train, config.batch_size, true, &mut rng)?;
        let seeds: Vec<u64> = batches.iter().map(|_| rng.next_u64()).collect();
        let mut loss_sum = 0.0;
        let mut seen = 0usize;
        let mut step = 0usize;
        let result = for_each_prefetched(
            &batches,
            PREFETCH_DEPTH,
            |idx| Batch::assemble(ctx.samples, idx, &ctx.norm),
            |batch| {
                let out = batch_gradients(&model, &state.params, &batch, seeds[step])?;
                if !out.loss.is_finite() {
                    return Err(Error::NonFinite(format!(
                        "fold {fold_index} epoch {epoch} step {}: training loss {}",
                        step + 1,
                        out.loss
                    )));
                }
                state.optimizer.step(state.params.tensors_mut(), &out.grads)?;
                loss_sum += out.loss * batch.len() as f64;
                seen += batch.len();
                step += 1;
                Ok(())
            },
        );
        if let Err(e @ Error::NonFinite(_)) = result {
            if let Some(path) = &ctx.checkpoint {
                let diag = diagnostic_path(path);
                state.rng = rng.state();
                state.save(&diag)?;
                log::error!("{e}; diagnostic checkpoint written to {}", diag.display());
            }
            return Err(e);
        }
        result?;
        let train_loss = loss_sum / seen as f64;

        let lpips = ctx.lpips.filter(|_| epoch % config.lpips_every == 0);
        let record = evaluate_epoch(
            &model,
            &state.params,
            ctx.samples,
            &ctx.norm,
            &fold.val,
            config.batch_size,
            lpips,
            fold_index,
            epoch,
            train_loss,
        )?;
        log::info!(
            "fold {fold_index} epoch {epoch}: train {:.4} val {:.4} dice {:.4} iou {:.4}",
            record.train_loss,
            record.val_loss,
            record.dice,
            record.iou
        );
        if state.early_stop.update(record.val_loss)? {
            state.best_params = state.params.clone();
        }
        state.history.push(record);
        state.epoch = epoch;
        state.completed = state.early_stop.stopped || epoch >= config.max_epochs;
        state.rng = rng.state();
        state.elapsed_secs = base_elapsed + started.elapsed().as_secs_f64();
        if let Some(path) = &ctx.checkpoint {
            state.save(path)?;
        }
        if !state.completed && ctx.halt_after_epoch == Some(epoch) {
            return Ok(FoldOutcome::Halted { epoch });
        }
    }
    Ok(FoldOutcome::Finished(FoldResult::from_checkpoint(state)))
}

//! k-fold cross-validation and the ablation study.

use std::path::{Path, PathBuf};
use std::time::Instant;

use super::config::{InitSource, TrainConfig};
use super::fold::{train_fold, FoldContext, FoldOutcome, FoldResult};
use crate::data::{kfold_split, NormalizationSpec, Sample};
use crate::error::{Error, Result};
use crate::metrics::{aggregate, Aggregate, ConvFeatureNet, MetricRecord, PerceptualDistance};

/// Run-level options that do not affect results.
#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Directory for per-fold checkpoints.
    pub checkpoint_dir: Option<PathBuf>,
    pub resume: bool,
    /// Stop after this (fold, epoch), leaving a resumable checkpoint.
    pub halt_after: Option<(usize, usize)>,
}

#[derive(Clone, Debug)]
pub struct CvResult {
    pub folds: Vec<FoldResult>,
    /// Over each fold's best-validation-loss epoch.
    pub aggregate: Aggregate,
    pub total_secs: f64,
}

impl CvResult {
    /// The best-epoch record of every fold, in fold order.
    pub fn best_records(&self) -> Vec<MetricRecord> {
        self.folds.iter().map(|f| f.best_record().clone()).collect()
    }

    /// Every epoch record of every fold, in fold order.
    pub fn all_records(&self) -> Vec<MetricRecord> {
        self.folds.iter().flat_map(|f| f.records.iter().cloned()).collect()
    }
}

#[derive(Clone, Debug)]
pub enum RunOutcome<T> {
    Completed(T),
    Halted { fold: usize, epoch: usize },
}

pub fn checkpoint_path(dir: &Path, fold: usize) -> PathBuf {
    dir.join(format!("fold{fold:02}.ckpt"))
}

/// Load the configured perceptual network. A missing file leaves the
/// metric absent with a warning; a malformed one is an error.
pub fn load_perceptual(config: &TrainConfig) -> Result<Option<ConvFeatureNet>> {
    let Some(path) = &config.lpips_weights else {
        return Ok(None);
    };
    match ConvFeatureNet::load(path) {
        Ok(net) => Ok(Some(net)),
        Err(Error::MissingFile(p)) => {
            log::warn!("perceptual weights {} not found, LPIPS will be reported as n/a", p.display());
            Ok(None)
        }
        Err(e) => Err(e),
    }
}

/// Train and validate every fold of a k-fold split of `samples`.
pub fn run_cross_validation(
    config: &TrainConfig,
    samples: &[Sample],
    lpips: Option<&dyn PerceptualDistance>,
    opts: &RunOptions,
) -> Result<RunOutcome<CvResult>> {
    config.validate()?;
    let plan = kfold_split(samples.len(), config.k, config.seed)?;
    if let Some(dir) = &opts.checkpoint_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let started = Instant::now();
    let mut folds = Vec::with_capacity(plan.k);
    for (i, fold) in plan.folds.iter().enumerate() {
        let ctx = FoldContext {
            samples,
            norm: NormalizationSpec::default(),
            lpips,
            checkpoint: opts.checkpoint_dir.as_deref().map(|d| checkpoint_path(d, i)),
            resume: opts.resume,
            halt_after_epoch: opts.halt_after.filter(|&(f, _)| f == i).map(|(_, e)| e),
        };
        match train_fold(config, &ctx, i, fold)? {
            FoldOutcome::Finished(r) => {
                log::info!(
                    "fold {i}: best epoch {} val loss {:.4} dice {:.4}",
                    r.best_epoch,
                    r.best_val_loss,
                    r.best_dice
                );
                folds.push(r);
            }
            FoldOutcome::Halted { epoch } => return Ok(RunOutcome::Halted { fold: i, epoch }),
        }
    }
    let best: Vec<MetricRecord> = folds.iter().map(|f| f.best_record().clone()).collect();
    Ok(RunOutcome::Completed(CvResult {
        aggregate: aggregate(&best)?,
        folds,
        total_secs: started.elapsed().as_secs_f64(),
    }))
}

/// One arm of the ablation study.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variant {
    Full,
    NoDropout,
    NoPretraining,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Full, Variant::NoDropout, Variant::NoPretraining];

    pub fn label(self) -> &'static str {
        match self {
            Variant::Full => "Full",
            Variant::NoDropout => "No Dropout",
            Variant::NoPretraining => "No Pretraining",
        }
    }

    pub fn slug(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoDropout => "no_dropout",
            Variant::NoPretraining => "no_pretraining",
        }
    }

    pub fn from_label(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.label() == s || v.slug() == s)
    }

    pub fn apply(self, base: &TrainConfig) -> TrainConfig {
        let mut c = base.clone();
        match self {
            Variant::Full => {}
            Variant::NoDropout => c.dropout_p = 0.0,
            Variant::NoPretraining => c.init = InitSource::Random,
        }
        c
    }
}

/// Cross-validate each variant under identical folds and seeds.
pub fn run_ablation(
    config: &TrainConfig,
    samples: &[Sample],
    lpips: Option<&dyn PerceptualDistance>,
    opts: &RunOptions,
) -> Result<RunOutcome<Vec<(Variant, CvResult)>>> {
    if config.init == InitSource::Random {
        log::warn!("base config already uses random init, so \"No Pretraining\" matches \"Full\"");
    }
    let mut out = Vec::with_capacity(Variant::ALL.len());
    for v in Variant::ALL {
        log::info!("ablation variant: {}", v.label());
        let sub = RunOptions {
            checkpoint_dir: opts.checkpoint_dir.as_ref().map(|d| d.join(v.slug())),
            ..opts.clone()
        };
        match run_cross_validation(&v.apply(config), samples, lpips, &sub)? {
            RunOutcome::Completed(r) => out.push((v, r)),
            RunOutcome::Halted { fold, epoch } => return Ok(RunOutcome::Halted { fold, epoch }),
        }
    }
    Ok(RunOutcome::Completed(out))
}

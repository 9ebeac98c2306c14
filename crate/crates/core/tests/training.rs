use std::collections::BTreeSet;

use hairseg::data::{synth_samples, Fold, NormalizationSpec, Sample, SynthOptions};
use hairseg::io::bytes::sha256;
use hairseg::metrics::{ConvFeatureNet, FeatureLayer, MetricRecord, PerceptualDistance};
use hairseg::model::SegFormer;
use hairseg::tensor::Tensor;
use hairseg::train::{
    evaluate_batch, evaluate_epoch, run_cross_validation, train_fold, Checkpoint, FoldContext, FoldOutcome,
    InitSource, RunOptions, RunOutcome, TrainConfig, Variant,
};
use hairseg::Error;

fn samples(n: usize) -> Vec<Sample> {
    synth_samples(n, 32, 7, &SynthOptions::default()).unwrap()
}

fn small_config() -> TrainConfig {
    TrainConfig {
        k: 2,
        max_epochs: 3,
        batch_size: 2,
        ..TrainConfig::default()
    }
}

fn ctx<'a>(samples: &'a [Sample], ckpt: Option<std::path::PathBuf>, lpips: Option<&'a dyn PerceptualDistance>) -> FoldContext<'a> {
    FoldContext {
        samples,
        norm: NormalizationSpec::default(),
        lpips,
        checkpoint: ckpt,
        resume: true,
        halt_after_epoch: None,
    }
}

fn finished(o: FoldOutcome) -> hairseg::train::FoldResult {
    match o {
        FoldOutcome::Finished(r) => r,
        FoldOutcome::Halted { epoch } => panic!("halted at {epoch}"),
    }
}

fn completed<T>(o: RunOutcome<T>) -> T {
    match o {
        RunOutcome::Completed(r) => r,
        RunOutcome::Halted { fold, epoch } => panic!("halted at {fold}:{epoch}"),
    }
}

fn toy_lpips() -> ConvFeatureNet {
    let t = |shape: &[usize], v: &[f64]| Tensor::from_f64(shape, v).unwrap();
    ConvFeatureNet::new(vec![FeatureLayer {
        weight: t(&[2, 1, 3, 3], &[0.1, 0.2, 0.1, 0.0, 0.5, 0.0, -0.1, -0.2, -0.1, 0.3, 0.0, -0.3, 0.3, 0.0, -0.3, 0.3, 0.0, -0.3]),
        bias: t(&[2], &[0.0, 0.1]),
        lin: t(&[2], &[1.0, 0.5]),
    }])
    .unwrap()
}

#[test]
fn two_folds_over_four_samples() {
    let data = samples(4);
    let config = TrainConfig {
        max_epochs: 1,
        ..small_config()
    };
    let cv = completed(run_cross_validation(&config, &data, None, &RunOptions::default()).unwrap());
    assert_eq!(cv.folds.len(), 2);
    let a: BTreeSet<_> = cv.folds[0].records.iter().map(|r| r.fold).collect();
    assert_eq!(a, BTreeSet::from([0]));
    let plan = hairseg::data::kfold_split(4, 2, config.seed).unwrap();
    let v0: BTreeSet<_> = plan.folds[0].val.iter().collect();
    assert!(plan.folds[1].val.iter().all(|i| !v0.contains(i)));
    assert!(cv.total_secs >= 0.0);
    for f in &cv.folds {
        assert_eq!(f.records.len(), 1);
        let r = f.best_record();
        for v in [r.train_loss, r.val_loss, r.iou, r.dice, r.psnr_db, r.ssim] {
            assert!(v.is_finite());
        }
    }
}

#[test]
fn runs_are_deterministic() {
    let data = samples(6);
    let config = small_config();
    let a = completed(run_cross_validation(&config, &data, None, &RunOptions::default()).unwrap());
    let b = completed(run_cross_validation(&config, &data, None, &RunOptions::default()).unwrap());
    assert_eq!(a.all_records(), b.all_records());
    assert_eq!(a.folds[1].best_params, b.folds[1].best_params);
}

#[test]
fn resume_after_any_epoch_matches_uninterrupted() {
    let data = samples(6);
    let config = small_config();
    let dir = tempfile::tempdir().unwrap();
    let reference = completed(
        run_cross_validation(
            &config,
            &data,
            None,
            &RunOptions {
                checkpoint_dir: Some(dir.path().join("ref")),
                ..Default::default()
            },
        )
        .unwrap(),
    );
    for (fold, epoch) in [(0, 1), (0, 2), (1, 1), (1, 2)] {
        let ckpt_dir = dir.path().join(format!("halt{fold}{epoch}"));
        let opts = RunOptions {
            checkpoint_dir: Some(ckpt_dir.clone()),
            resume: false,
            halt_after: Some((fold, epoch)),
        };
        let first = run_cross_validation(&config, &data, None, &opts).unwrap();
        if reference.folds[fold].records.len() > epoch {
            assert!(matches!(first, RunOutcome::Halted { .. }), "{fold}:{epoch}");
        }
        let resumed = completed(
            run_cross_validation(
                &config,
                &data,
                None,
                &RunOptions {
                    checkpoint_dir: Some(ckpt_dir),
                    resume: true,
                    halt_after: None,
                },
            )
            .unwrap(),
        );
        let bits = |rs: Vec<MetricRecord>| -> Vec<Vec<u64>> {
            rs.iter()
                .map(|r| [r.train_loss, r.val_loss, r.iou, r.dice, r.psnr_db, r.ssim].map(f64::to_bits).to_vec())
                .collect()
        };
        assert_eq!(bits(resumed.all_records()), bits(reference.all_records()), "halt {fold}:{epoch}");
        assert_eq!(resumed.folds[1].best_params, reference.folds[1].best_params);
    }
}

fn one_epoch_checkpoint(dir: &std::path::Path, config: &TrainConfig, data: &[Sample]) -> std::path::PathBuf {
    let path = dir.join("f.ckpt");
    let fold = Fold {
        train: vec![0, 1, 2],
        val: vec![3],
    };
    finished(train_fold(config, &ctx(data, Some(path.clone()), None), 0, &fold).unwrap());
    path
}

#[test]
fn checkpoint_round_trip_and_failures() {
    let data = samples(4);
    let config = TrainConfig {
        max_epochs: 1,
        ..small_config()
    };
    let dir = tempfile::tempdir().unwrap();
    let path = one_epoch_checkpoint(dir.path(), &config, &data);
    let ckpt = Checkpoint::load(&path, &config).unwrap();
    assert_eq!(ckpt.epoch, 1);
    assert!(ckpt.completed);
    assert_eq!(ckpt.history.len(), 1);
    let copy = dir.path().join("copy.ckpt");
    ckpt.save(&copy).unwrap();
    assert_eq!(Checkpoint::load(&copy, &config).unwrap(), ckpt);
    assert_eq!(std::fs::read(&copy).unwrap(), std::fs::read(&path).unwrap());

    let changed = TrainConfig { lr: 2e-3, ..config.clone() };
    assert!(matches!(Checkpoint::load(&path, &changed), Err(Error::ConfigMismatch { .. })));

    let bytes = std::fs::read(&path).unwrap();
    let p = std::path::Path::new("mem");
    let mut flipped = bytes.clone();
    let mid = flipped.len() / 2;
    flipped[mid] ^= 1;
    assert!(matches!(Checkpoint::decode(&flipped, p, &config), Err(Error::Corrupt { .. })));
    assert!(matches!(Checkpoint::decode(&bytes[..bytes.len() - 5], p, &config), Err(Error::Corrupt { .. })));

    let mut v2 = bytes[..bytes.len() - 32].to_vec();
    v2[8] = 2;
    let digest = sha256(&v2);
    v2.extend_from_slice(&digest);
    assert!(matches!(Checkpoint::decode(&v2, p, &config), Err(Error::VersionMismatch { found: 2, .. })));

    assert!(matches!(Checkpoint::load(&dir.path().join("none"), &config), Err(Error::MissingFile(_))));
}

#[test]
fn records_track_epochs_and_best_params() {
    let data = samples(6);
    let config = TrainConfig {
        max_epochs: 4,
        patience: 1,
        ..small_config()
    };
    let fold = Fold {
        train: vec![0, 1, 2, 3],
        val: vec![4, 5],
    };
    let r = finished(train_fold(&config, &ctx(&data, None, None), 0, &fold).unwrap());
    assert!((1..=4).contains(&r.records.len()));
    for (i, rec) in r.records.iter().enumerate() {
        assert_eq!(rec.epoch, i + 1);
    }
    let min = r.records.iter().map(|x| x.val_loss).fold(f64::INFINITY, f64::min);
    assert_eq!(r.best_val_loss, min);
    let model = SegFormer::new(config.model_config().unwrap()).unwrap();
    let again = evaluate_epoch(&model, &r.best_params, &data, &NormalizationSpec::default(), &fold.val, 2, None, 0, r.best_epoch, 0.0)
        .unwrap();
    assert_eq!(again.val_loss, r.best_val_loss);
}

#[test]
fn lpips_only_on_even_epochs() {
    let data = samples(4);
    let net = toy_lpips();
    let config = TrainConfig {
        max_epochs: 3,
        patience: 3,
        ..small_config()
    };
    let fold = Fold {
        train: vec![0, 1],
        val: vec![2, 3],
    };
    let r = finished(train_fold(&config, &ctx(&data, None, Some(&net)), 0, &fold).unwrap());
    let present: Vec<bool> = r.records.iter().map(|x| x.lpips.is_some()).collect();
    assert_eq!(present, [false, true, false][..r.records.len()]);
    assert!(r.records.iter().filter_map(|x| x.lpips).all(|v| v.is_finite() && v >= 0.0));
    let none = finished(train_fold(&config, &ctx(&data, None, None), 0, &fold).unwrap());
    assert!(none.records.iter().all(|x| x.lpips.is_none()));
}

#[test]
fn validation_batches_are_size_weighted() {
    let data = samples(64);
    let config = small_config();
    let model = SegFormer::new(config.model_config().unwrap()).unwrap();
    let params = model.init_params(&mut hairseg::rng::Rng::new(4));
    let idx: Vec<usize> = (0..64).collect();
    let norm = NormalizationSpec::default();
    let split = evaluate_epoch(&model, &params, &data, &norm, &idx, 50, None, 0, 1, 0.0).unwrap();
    let batch = hairseg::data::Batch::assemble(&data, &idx, &norm).unwrap();
    let all = evaluate_batch(&model, &params, &batch, None).unwrap();
    let mean = |f: fn(&hairseg::train::SampleEval) -> f64| all.iter().map(f).sum::<f64>() / 64.0;
    assert!((split.val_loss - mean(|e| e.loss)).abs() < 1e-6);
    assert!((split.dice - mean(|e| e.metrics.dice)).abs() < 1e-6);
    assert!((split.iou - mean(|e| e.metrics.iou)).abs() < 1e-6);
    assert!((split.psnr_db - mean(|e| e.metrics.psnr_db)).abs() < 1e-6);
    assert!((split.ssim - mean(|e| e.metrics.ssim)).abs() < 1e-6);
    assert!(matches!(
        evaluate_epoch(&model, &params, &data, &norm, &[], 50, None, 0, 1, 0.0),
        Err(Error::Data(_))
    ));
}

#[test]
fn non_finite_loss_aborts_with_diagnostic_checkpoint() {
    let data = samples(4);
    let config = TrainConfig {
        lr: 1e30,
        max_epochs: 3,
        ..small_config()
    };
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("f.ckpt");
    let fold = Fold {
        train: vec![0, 1, 2],
        val: vec![3],
    };
    let err = train_fold(&config, &ctx(&data, Some(path.clone()), None), 0, &fold).unwrap_err();
    assert!(matches!(err, Error::NonFinite(_)), "{err}");
    assert!(dir.path().join("f.ckpt.nonfinite").exists());
}

#[test]
fn ablation_variants_change_only_their_field() {
    let base = TrainConfig {
        init: InitSource::Weights("w.bin".into()),
        ..TrainConfig::default()
    };
    assert_eq!(Variant::Full.apply(&base), base);
    assert_eq!(Variant::NoDropout.apply(&base), TrainConfig { dropout_p: 0.0, ..base.clone() });
    assert_eq!(Variant::NoPretraining.apply(&base), TrainConfig { init: InitSource::Random, ..base.clone() });
    let labels: Vec<_> = Variant::ALL.iter().map(|v| v.label()).collect();
    assert_eq!(labels, ["Full", "No Dropout", "No Pretraining"]);
}

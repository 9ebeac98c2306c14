use std::fmt::Display;
use std::path::Path;

use hairseg::data::{load_dataset, synth_generate, NormalizationSpec, SynthOptions};
use hairseg::metrics::ConvFeatureNet;
use hairseg::model::{load_weights, save_weights, ModelConfig, SegFormer};
use hairseg::report::{learning_curve_csv, parse_csv, render_report, to_csv, CsvRow};
use hairseg::train::{
    evaluate_epoch, load_perceptual, run_ablation, run_cross_validation, CvResult, RunOptions, RunOutcome,
    TrainConfig,
};
use hairseg::verify::{self, TOLERANCE};
use hairseg::Error;

use crate::exit;
use crate::{EvalArgs, GradcheckArgs, ReportArgs, SynthArgs, TrainArgs};

pub struct Failure {
    pub code: u8,
    pub message: String,
}

type CmdResult = Result<u8, Failure>;

fn usage(message: impl Display) -> Failure {
    Failure {
        code: exit::USAGE,
        message: message.to_string(),
    }
}

/// Map library errors onto exit statuses: bad settings are usage errors,
/// everything about files and data is a data error.
impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Config(_) | Error::Parameter(_) => exit::USAGE,
            _ => exit::DATA,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

pub fn configure_threads(threads: Option<usize>) -> Result<(), String> {
    let Some(n) = threads else { return Ok(()) };
    if n == 0 {
        return Err("--threads must be ≥ 1".into());
    }
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())?;
    #[cfg(not(feature = "parallel"))]
    log::warn!("built without the parallel feature, --threads {n} ignored");
    Ok(())
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Failure {
            code: exit::DATA,
            message: format!("cannot create {}: {e}", dir.display()),
        })?;
    }
    std::fs::write(path, text).map_err(|e| Failure {
        code: exit::DATA,
        message: format!("cannot write {}: {e}", path.display()),
    })
}

pub fn synth(a: &SynthArgs) -> CmdResult {
    let ids = synth_generate(&a.out, a.count, a.extent, a.seed, &SynthOptions::default())?;
    println!("wrote {} synthetic samples to {}", ids.len(), a.out.display());
    Ok(exit::OK)
}

fn load_config(path: &Path) -> Result<TrainConfig, Failure> {
    TrainConfig::load(path).map_err(|e| usage(format!("config {}: {e}", path.display())))
}

fn emit_outputs(out: &Path, rows: &[CsvRow]) -> Result<String, Failure> {
    let md = render_report(rows)?;
    write(&out.join("metrics.csv"), &to_csv(rows))?;
    write(&out.join("report.md"), &md)?;
    write(&out.join("learning_curves.csv"), &learning_curve_csv(rows))?;
    Ok(md)
}

fn save_fold_weights(dir: &Path, config: &TrainConfig, cv: &CvResult) -> Result<(), Failure> {
    let model = config.model_config()?;
    for f in &cv.folds {
        save_weights(&dir.join(format!("fold{:02}.weights", f.fold)), &model, &f.best_params)?;
    }
    Ok(())
}

pub fn train(a: &TrainArgs) -> CmdResult {
    let config = load_config(&a.config)?;
    config.validate()?;
    let samples = load_dataset(&a.data)?;
    log::info!("loaded {} samples from {}", samples.len(), a.data.display());
    let lpips = load_perceptual(&config)?;
    let lpips_ref = lpips.as_ref().map(|n| n as &dyn hairseg::metrics::PerceptualDistance);
    let opts = RunOptions {
        checkpoint_dir: Some(a.out.join("checkpoints")),
        resume: a.resume,
        halt_after: a.halt_after,
    };
    let halted = |fold, epoch| {
        println!("halted after fold {fold} epoch {epoch}; rerun with --resume to continue");
        Ok(exit::OK)
    };
    let rows: Vec<CsvRow> = if a.ablation {
        match run_ablation(&config, &samples, lpips_ref, &opts)? {
            RunOutcome::Halted { fold, epoch } => return halted(fold, epoch),
            RunOutcome::Completed(variants) => {
                let mut rows = Vec::new();
                for (v, cv) in &variants {
                    save_fold_weights(&a.out.join("weights").join(v.slug()), &v.apply(&config), cv)?;
                    println!("{}: {:.1} s", v.label(), cv.total_secs);
                    rows.extend(cv.all_records().into_iter().map(|r| CsvRow::new(Some(v.label()), r)));
                }
                rows
            }
        }
    } else {
        match run_cross_validation(&config, &samples, lpips_ref, &opts)? {
            RunOutcome::Halted { fold, epoch } => return halted(fold, epoch),
            RunOutcome::Completed(cv) => {
                save_fold_weights(&a.out.join("weights"), &config, &cv)?;
                println!("cross-validation finished in {:.1} s", cv.total_secs);
                cv.all_records().into_iter().map(|r| CsvRow::new(None, r)).collect()
            }
        }
    };
    let md = emit_outputs(&a.out, &rows)?;
    println!("{md}");
    Ok(exit::OK)
}

pub fn eval(a: &EvalArgs) -> CmdResult {
    if a.batch_size == 0 {
        return Err(usage("--batch-size must be ≥ 1"));
    }
    let config = ModelConfig::preset(&a.preset)?;
    let params = load_weights(&a.weights, &config)?;
    let model = SegFormer::new(config)?;
    let samples = load_dataset(&a.data)?;
    let lpips = a.lpips_weights.as_deref().map(ConvFeatureNet::load).transpose()?;
    let indices: Vec<usize> = (0..samples.len()).collect();
    let record = evaluate_epoch(
        &model,
        &params,
        &samples,
        &NormalizationSpec::default(),
        &indices,
        a.batch_size,
        lpips.as_ref().map(|n| n as &dyn hairseg::metrics::PerceptualDistance),
        0,
        1,
        f64::NAN,
    )?;
    println!("images   {}", samples.len());
    println!("loss     {:.3}", record.val_loss);
    println!("iou      {:.3}", record.iou);
    println!("dice     {:.3}", record.dice);
    println!("psnr_db  {:.1}", record.psnr_db);
    println!("ssim     {:.3}", record.ssim);
    match record.lpips {
        Some(v) => println!("lpips    {v:.3}"),
        None => println!("lpips    n/a"),
    }
    if let Some(out) = &a.out {
        write(out, &to_csv(&[CsvRow::new(None, record)]))?;
    }
    Ok(exit::OK)
}

pub fn report(a: &ReportArgs) -> CmdResult {
    let text = std::fs::read_to_string(&a.csv).map_err(|e| Failure {
        code: exit::DATA,
        message: format!("cannot read {}: {e}", a.csv.display()),
    })?;
    let rows = parse_csv(&text).map_err(|e| Failure {
        code: exit::DATA,
        message: format!("{}: {e}", a.csv.display()),
    })?;
    let md = render_report(&rows)?;
    write(&a.out.join("report.md"), &md)?;
    write(&a.out.join("learning_curves.csv"), &learning_curve_csv(&rows))?;
    print!("{md}");
    Ok(exit::OK)
}

pub fn gradcheck(a: &GradcheckArgs) -> CmdResult {
    let outcomes = verify::gradcheck_suite(&a.preset, a.corrupt_backward)?;
    let mut failed = 0;
    for o in &outcomes {
        let status = if o.passed() { "ok" } else { "FAIL" };
        println!("{status:>4}  {:<28} max rel error {:.3e}  (worst input: {})", o.name, o.report.worst(), o.worst_input);
        failed += usize::from(!o.passed());
    }
    println!("{} checks, {failed} failed, tolerance {TOLERANCE:e}", outcomes.len());
    Ok(if failed == 0 { exit::OK } else { exit::VERIFY })
}

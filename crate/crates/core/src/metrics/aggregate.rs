use crate::error::{Error, Result};

/// Validation metrics and losses for one (fold, epoch).
#[derive(Clone, Debug, PartialEq)]
pub struct MetricRecord {
    pub fold: usize,
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub iou: f64,
    pub dice: f64,
    pub psnr_db: f64,
    pub ssim: f64,
    /// Absent when not computed this epoch or no weights were loaded.
    pub lpips: Option<f64>,
}

/// Arithmetic mean and sample standard deviation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

/// Mean and sample std of `values`, or `None` for fewer than two. Values are
/// summed in sorted order so the result does not depend on input order.
pub fn mean_std(values: &[f64]) -> Option<Stat> {
    let n = values.len();
    if n < 2 {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mean = v.iter().sum::<f64>() / n as f64;
    let mut dev: Vec<f64> = v.iter().map(|x| (x - mean).powi(2)).collect();
    dev.sort_by(f64::total_cmp);
    let var = dev.iter().sum::<f64>() / (n - 1) as f64;
    Some(Stat { mean, std: var.sqrt(), n })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Aggregate {
    pub train_loss: Stat,
    pub val_loss: Stat,
    pub iou: Stat,
    pub dice: Stat,
    pub psnr_db: Stat,
    pub ssim: Stat,
    /// Over records that carry a value; `None` if fewer than two do.
    pub lpips: Option<Stat>,
}

pub fn aggregate(records: &[MetricRecord]) -> Result<Aggregate> {
    if records.len() < 2 {
        return Err(Error::Data(format!(
            "aggregation needs at least 2 records, got {}",
            records.len()
        )));
    }
    let stat = |f: fn(&MetricRecord) -> f64| {
        let v: Vec<f64> = records.iter().map(f).collect();
        mean_std(&v).expect("at least two records")
    };
    let lpips: Vec<f64> = records.iter().filter_map(|r| r.lpips).collect();
    Ok(Aggregate {
        train_loss: stat(|r| r.train_loss),
        val_loss: stat(|r| r.val_loss),
        iou: stat(|r| r.iou),
        dice: stat(|r| r.dice),
        psnr_db: stat(|r| r.psnr_db),
        ssim: stat(|r| r.ssim),
        lpips: mean_std(&lpips),
    })
}

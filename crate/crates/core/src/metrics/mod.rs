//! Segmentation quality metrics and their aggregation.

mod aggregate;
mod image;
pub mod lpips;
mod overlap;

pub use aggregate::{aggregate, mean_std, Aggregate, MetricRecord, Stat};
pub use image::{psnr, ssim, SsimParams, MSE_FLOOR};
pub use lpips::{ConvFeatureNet, FeatureLayer, PerceptualDistance};
pub use overlap::{dice, iou, MaskPair};

use crate::error::Result;

/// All per-image metrics for one prediction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ImageMetrics {
    pub iou: f64,
    pub dice: f64,
    pub psnr_db: f64,
    pub ssim: f64,
    pub lpips: Option<f64>,
}

pub fn evaluate_pair(
    pair: &MaskPair,
    ssim_params: &SsimParams,
    lpips: Option<&dyn PerceptualDistance>,
) -> Result<ImageMetrics> {
    let (p, t) = pair.as_real();
    let (h, w) = (pair.height(), pair.width());
    Ok(ImageMetrics {
        iou: iou(pair)?,
        dice: dice(pair)?,
        psnr_db: psnr(&p, &t)?,
        ssim: ssim(&p, &t, h, w, ssim_params)?,
        lpips: lpips.map(|net| net.distance(&p, &t, h, w)).transpose()?,
    })
}

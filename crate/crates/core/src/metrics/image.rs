use crate::error::{Error, Result};

/// Smallest mean squared error used by [`psnr`]; caps the result at 100 dB.
pub const MSE_FLOOR: f64 = 1e-10;

/// Peak signal-to-noise ratio in dB for maps with data range 1.
pub fn psnr(pred: &[f64], target: &[f64]) -> Result<f64> {
    if pred.len() != target.len() || pred.is_empty() {
        return Err(Error::Dimension(format!(
            "psnr on maps of {} and {} values",
            pred.len(),
            target.len()
        )));
    }
    let mse = pred.iter().zip(target).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / pred.len() as f64;
    Ok(20.0 * (1.0 / mse.max(MSE_FLOOR).sqrt()).log10())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SsimParams {
    pub window: usize,
    pub sigma: f64,
    pub data_range: f64,
    pub k1: f64,
    pub k2: f64,
}

impl Default for SsimParams {
    fn default() -> Self {
        Self {
            window: 11,
            sigma: 1.5,
            data_range: 1.0,
            k1: 0.01,
            k2: 0.03,
        }
    }
}

impl SsimParams {
    pub fn c1(&self) -> f64 {
        (self.k1 * self.data_range).powi(2)
    }

    pub fn c2(&self) -> f64 {
        (self.k2 * self.data_range).powi(2)
    }

    pub fn validate(&self) -> Result<()> {
        if self.window.is_multiple_of(2) || self.sigma <= 0.0 || self.c1() <= 0.0 || self.c2() <= 0.0 {
            return Err(Error::Parameter(format!("invalid SSIM parameters {self:?}")));
        }
        Ok(())
    }

    /// Normalized 1-D Gaussian taps.
    pub fn kernel(&self) -> Vec<f64> {
        let r = (self.window / 2) as f64;
        let raw: Vec<f64> = (0..self.window)
            .map(|i| (-((i as f64 - r).powi(2)) / (2.0 * self.sigma * self.sigma)).exp())
            .collect();
        let s: f64 = raw.iter().sum();
        raw.into_iter().map(|v| v / s).collect()
    }
}

/// Valid-region separable filtering of an `h×w` map: rows then columns.
fn filter_valid(x: &[f64], h: usize, w: usize, k: &[f64]) -> Vec<f64> {
    let n = k.len();
    let (oh, ow) = (h - n + 1, w - n + 1);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        let src = &x[y * w..(y + 1) * w];
        for ox in 0..ow {
            rows[y * ow + ox] = k.iter().zip(&src[ox..ox + n]).map(|(a, b)| a * b).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for oy in 0..oh {
        for ox in 0..ow {
            out[oy * ow + ox] = k.iter().enumerate().map(|(i, a)| a * rows[(oy + i) * ow + ox]).sum();
        }
    }
    out
}

/// Mean structural similarity over all window positions fully inside the map.
pub fn ssim(pred: &[f64], target: &[f64], h: usize, w: usize, params: &SsimParams) -> Result<f64> {
    params.validate()?;
    if pred.len() != h * w || target.len() != h * w {
        return Err(Error::Dimension(format!(
            "ssim on {h}×{w} needs {} values, got {} / {}",
            h * w,
            pred.len(),
            target.len()
        )));
    }
    if h < params.window || w < params.window {
        return Err(Error::Data(format!(
            "image {h}×{w} smaller than the {0}×{0} SSIM window",
            params.window
        )));
    }
    let k = params.kernel();
    let prod = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).collect::<Vec<_>>();
    let mu_p = filter_valid(pred, h, w, &k);
    let mu_t = filter_valid(target, h, w, &k);
    let e_pp = filter_valid(&prod(pred, pred), h, w, &k);
    let e_tt = filter_valid(&prod(target, target), h, w, &k);
    let e_pt = filter_valid(&prod(pred, target), h, w, &k);
    let (c1, c2) = (params.c1(), params.c2());
    let n = mu_p.len();
    let total: f64 = (0..n)
        .map(|i| {
            let (mp, mt) = (mu_p[i], mu_t[i]);
            let var_p = e_pp[i] - mp * mp;
            let var_t = e_tt[i] - mt * mt;
            let cov = e_pt[i] - mp * mt;
            ((2.0 * mp * mt + c1) * (2.0 * cov + c2)) / ((mp * mp + mt * mt + c1) * (var_p + var_t + c2))
        })
        .sum();
    Ok(total / n as f64)
}

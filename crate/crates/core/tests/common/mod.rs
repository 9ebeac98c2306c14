//! Independent reference implementations shared by the test targets.
#![allow(dead_code)]

use std::collections::BTreeSet;

/// Per-class pixel coordinate sets.
fn pixel_set(mask: &[u8], w: usize, class: u8) -> BTreeSet<(usize, usize)> {
    mask.iter()
        .enumerate()
        .filter(|(_, &v)| v == class)
        .map(|(i, _)| (i / w, i % w))
        .collect()
}

/// IoU and Dice by explicit set algebra, averaged over classes whose union
/// is non-empty.
pub fn brute_overlap(pred: &[u8], target: &[u8], w: usize) -> (f64, f64) {
    let (mut iou, mut dice, mut n) = (0.0, 0.0, 0);
    for class in 0..2u8 {
        let p = pixel_set(pred, w, class);
        let t = pixel_set(target, w, class);
        let inter = p.intersection(&t).count();
        let union = p.union(&t).count();
        if union == 0 {
            continue;
        }
        iou += inter as f64 / union as f64;
        dice += (2 * inter) as f64 / (p.len() + t.len()) as f64;
        n += 1;
    }
    (iou / n as f64, dice / n as f64)
}

/// SSIM with an explicit 2-D Gaussian window at every valid position.
#[allow(clippy::too_many_arguments)]
pub fn ssim_direct(x: &[f64], y: &[f64], h: usize, w: usize, win: usize, sigma: f64, c1: f64, c2: f64) -> f64 {
    let r = (win / 2) as f64;
    let mut kern = vec![0.0; win * win];
    for i in 0..win {
        for j in 0..win {
            let d2 = (i as f64 - r).powi(2) + (j as f64 - r).powi(2);
            kern[i * win + j] = (-d2 / (2.0 * sigma * sigma)).exp();
        }
    }
    let s: f64 = kern.iter().sum();
    kern.iter_mut().for_each(|k| *k /= s);
    let mut total = 0.0;
    let mut count = 0;
    for oy in 0..=h - win {
        for ox in 0..=w - win {
            let (mut mx, mut my) = (0.0, 0.0);
            for i in 0..win {
                for j in 0..win {
                    let k = kern[i * win + j];
                    mx += k * x[(oy + i) * w + ox + j];
                    my += k * y[(oy + i) * w + ox + j];
                }
            }
            let (mut vx, mut vy, mut cxy) = (0.0, 0.0, 0.0);
            for i in 0..win {
                for j in 0..win {
                    let k = kern[i * win + j];
                    let dx = x[(oy + i) * w + ox + j] - mx;
                    let dy = y[(oy + i) * w + ox + j] - my;
                    vx += k * dx * dx;
                    vy += k * dy * dy;
                    cxy += k * dx * dy;
                }
            }
            total += ((2.0 * mx * my + c1) * (2.0 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
            count += 1;
        }
    }
    total / count as f64
}

/// Stop epoch (if any) and best epoch, both 1-based, by direct simulation.
pub fn early_stop_oracle(losses: &[f64], patience: usize) -> (Option<usize>, usize) {
    let (mut best, mut best_epoch, mut wait) = (f64::INFINITY, 0, 0);
    for (i, &l) in losses.iter().enumerate() {
        if l < best {
            (best, best_epoch, wait) = (l, i + 1, 0);
        } else {
            wait += 1;
            if wait == patience {
                return (Some(i + 1), best_epoch);
            }
        }
    }
    (None, best_epoch)
}

/// Scalar AdamW with decoupled decay applied to the pre-update value.
pub fn adamw_reference(theta0: f64, grads: &[f64], lr: f64, b1: f64, b2: f64, eps: f64, wd: f64) -> Vec<f64> {
    let (mut theta, mut m, mut v) = (theta0, 0.0, 0.0);
    let mut out = Vec::new();
    for (t, &g) in grads.iter().enumerate() {
        let t = (t + 1) as i32;
        m = b1 * m + (1.0 - b1) * g;
        v = b2 * v + (1.0 - b2) * g * g;
        let mhat = m / (1.0 - b1.powi(t));
        let vhat = v / (1.0 - b2.powi(t));
        theta = theta - lr * wd * theta - lr * mhat / (vhat.sqrt() + eps);
        out.push(theta);
    }
    out
}

/// The ten per-fold rows of the reference results table:
/// train loss, val loss, IoU, Dice, PSNR, SSIM, LPIPS.
pub const REFERENCE_FOLDS: [[f64; 7]; 10] = [
    [0.082, 0.095, 0.935, 0.965, 34.5, 0.975, 0.058],
    [0.078, 0.092, 0.940, 0.968, 35.1, 0.978, 0.055],
    [0.085, 0.098, 0.928, 0.960, 33.8, 0.970, 0.065],
    [0.080, 0.094, 0.933, 0.964, 34.2, 0.973, 0.060],
    [0.077, 0.090, 0.942, 0.970, 35.3, 0.980, 0.052],
    [0.083, 0.096, 0.930, 0.962, 34.0, 0.971, 0.063],
    [0.079, 0.093, 0.936, 0.966, 34.7, 0.976, 0.057],
    [0.084, 0.097, 0.927, 0.959, 33.5, 0.968, 0.068],
    [0.081, 0.095, 0.934, 0.965, 34.4, 0.974, 0.059],
    [0.076, 0.089, 0.944, 0.971, 35.5, 0.981, 0.050],
];

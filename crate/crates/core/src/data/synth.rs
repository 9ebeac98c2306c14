//! Synthetic dermoscopy-like images with hair strokes and exact masks.

use std::path::Path;

use super::png_io;
use super::Sample;
use crate::error::{Error, Result};
use crate::io::bytes::write_atomic;
use crate::rng::Rng;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SynthOptions {
    /// Strokes per image are drawn uniformly from `0..=max_strokes`.
    pub max_strokes: usize,
    /// Stroke half-width range in pixels at a 64-pixel extent; scaled with
    /// the extent.
    pub half_width: (f64, f64),
}

impl Default for SynthOptions {
    fn default() -> Self {
        Self {
            max_strokes: 4,
            half_width: (2.0, 3.5),
        }
    }
}

/// One generated sample: interleaved RGB and a 0/1 mask, both row-major.
pub struct SynthImage {
    pub rgb: Vec<u8>,
    pub mask: Vec<u8>,
    pub strokes: usize,
}

type Point = (f64, f64);

fn bezier(p: [Point; 4], t: f64) -> Point {
    let u = 1.0 - t;
    let (a, b, c, d) = (u * u * u, 3.0 * u * u * t, 3.0 * u * t * t, t * t * t);
    (
        a * p[0].0 + b * p[1].0 + c * p[2].0 + d * p[3].0,
        a * p[0].1 + b * p[1].1 + c * p[2].1 + d * p[3].1,
    )
}

fn segment_distance(q: Point, a: Point, b: Point) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((q.0 - a.0) * dx + (q.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (px, py) = (a.0 + t * dx - q.0, a.1 + t * dy - q.1);
    (px * px + py * py).sqrt()
}

/// Render one sample of `extent × extent` pixels from `rng`.
pub fn render(extent: usize, rng: &mut Rng, opts: &SynthOptions) -> SynthImage {
    let n = extent * extent;
    let size = extent as f64;
    let scale = size / 64.0;
    let base_r = rng.range(0.72, 0.95);
    let base = [base_r, base_r * rng.range(0.62, 0.8), base_r * rng.range(0.45, 0.65)];
    let mut img = vec![[0.0f64; 3]; n];
    for px in img.iter_mut() {
        let grain = rng.normal(0.0, 0.025);
        for c in 0..3 {
            px[c] = base[c] + grain;
        }
    }

    for _ in 0..1 + rng.below(2) {
        let (cx, cy) = (rng.range(0.2, 0.8) * size, rng.range(0.2, 0.8) * size);
        let (rx, ry) = (rng.range(0.12, 0.32) * size, rng.range(0.12, 0.32) * size);
        let angle = rng.range(0.0, std::f64::consts::PI);
        let darken = rng.range(0.45, 0.75);
        let (sin, cos) = angle.sin_cos();
        for y in 0..extent {
            for x in 0..extent {
                let (dx, dy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
                let (u, v) = ((dx * cos + dy * sin) / rx, (-dx * sin + dy * cos) / ry);
                let r = (u * u + v * v).sqrt();
                let blend = (1.0 - (r - 0.85) / 0.3).clamp(0.0, 1.0);
                if blend > 0.0 {
                    let px = &mut img[y * extent + x];
                    let tint = [darken, darken * 0.85, darken * 0.8];
                    for c in 0..3 {
                        px[c] *= 1.0 - blend * (1.0 - tint[c]);
                    }
                }
            }
        }
    }

    let mut mask = vec![0u8; n];
    let strokes = rng.below(opts.max_strokes + 1);
    for _ in 0..strokes {
        let mut ctrl = [(0.0, 0.0); 4];
        for p in ctrl.iter_mut() {
            *p = (rng.range(-0.1, 1.1) * size, rng.range(-0.1, 1.1) * size);
        }
        let hw = rng.range(opts.half_width.0, opts.half_width.1) * scale;
        let shade = rng.range(0.05, 0.22);
        let steps = 64 + 4 * extent;
        let poly: Vec<Point> = (0..=steps).map(|i| bezier(ctrl, i as f64 / steps as f64)).collect();
        let reach = hw + 1.0;
        let lo = |v: f64| ((v - reach).floor().max(0.0)) as usize;
        let hi = |v: f64| ((v + reach).ceil().max(0.0) as usize).min(extent);
        for seg in poly.windows(2) {
            let (a, b) = (seg[0], seg[1]);
            for y in lo(a.1.min(b.1))..hi(a.1.max(b.1)) {
                for x in lo(a.0.min(b.0))..hi(a.0.max(b.0)) {
                    let q = (x as f64 + 0.5, y as f64 + 0.5);
                    let d = segment_distance(q, a, b);
                    if d <= hw {
                        mask[y * extent + x] = 1;
                    }
                    let alpha = (hw + 0.5 - d).clamp(0.0, 1.0);
                    if alpha > 0.0 {
                        let px = &mut img[y * extent + x];
                        let target = [shade, shade * 0.8, shade * 0.7];
                        for c in 0..3 {
                            // Overlapping segments may revisit a pixel; keep the darkest.
                            px[c] = px[c].min(px[c] * (1.0 - alpha) + target[c] * alpha);
                        }
                    }
                }
            }
        }
    }

    let rgb = img
        .iter()
        .flat_map(|px| px.map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8))
        .collect();
    SynthImage { rgb, mask, strokes }
}

pub fn synth_id(i: usize) -> String {
    format!("synth_{i:04}")
}

impl SynthImage {
    /// Convert to a [`Sample`] with `3×H×W` values in [0, 1].
    pub fn into_sample(self, id: impl Into<String>, extent: usize) -> Result<Sample> {
        let plane = extent * extent;
        let image = Tensor::from_fn(&[3, extent, extent], |i| {
            let (c, p) = (i / plane, i % plane);
            f32::from(self.rgb[3 * p + c]) / 255.0
        });
        Sample::new(id, image, self.mask)
    }
}

fn check_args(extent: usize, opts: &SynthOptions) -> Result<()> {
    if extent == 0 || !extent.is_multiple_of(32) {
        return Err(Error::Parameter(format!("synthetic extent {extent} must be a positive multiple of 32")));
    }
    if opts.half_width.0 <= 0.0 || opts.half_width.1 < opts.half_width.0 {
        return Err(Error::Parameter(format!("bad stroke half-width range {:?}", opts.half_width)));
    }
    Ok(())
}

/// The samples [`synth_generate`] would write, built in memory.
pub fn synth_samples(count: usize, extent: usize, seed: u64, opts: &SynthOptions) -> Result<Vec<Sample>> {
    check_args(extent, opts)?;
    (0..count)
        .map(|i| render(extent, &mut Rng::with_stream(seed, i as u64), opts).into_sample(synth_id(i), extent))
        .collect()
}

/// Write `count` image/mask pairs under `root/images` and `root/masks`.
/// Sample `i` is drawn from its own stream of `seed`, so output is
/// byte-identical for a given seed. Returns the sample ids.
pub fn synth_generate(root: &Path, count: usize, extent: usize, seed: u64, opts: &SynthOptions) -> Result<Vec<String>> {
    check_args(extent, opts)?;
    let mut ids = Vec::with_capacity(count);
    for i in 0..count {
        let mut rng = Rng::with_stream(seed, i as u64);
        let s = render(extent, &mut rng, opts);
        let id = synth_id(i);
        let img = png_io::encode(extent, extent, 3, &s.rgb).map_err(Error::Data)?;
        let mask: Vec<u8> = s.mask.iter().map(|&m| m * 255).collect();
        let msk = png_io::encode(extent, extent, 1, &mask).map_err(Error::Data)?;
        write_atomic(&root.join("images").join(format!("{id}.png")), &img)?;
        write_atomic(&root.join("masks").join(format!("{id}.png")), &msk)?;
        ids.push(id);
    }
    Ok(ids)
}

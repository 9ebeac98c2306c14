use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use super::png_io;
use crate::error::{Error, Result};
use crate::par;
use crate::tensor::Tensor;

/// One image with its binary hair mask.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub id: String,
    /// `3×H×W`, values in [0, 1].
    pub image: Tensor<f32>,
    /// `H×W` row-major class ids in {0, 1}.
    pub mask: Vec<u8>,
}

impl Sample {
    pub fn new(id: impl Into<String>, image: Tensor<f32>, mask: Vec<u8>) -> Result<Self> {
        let id = id.into();
        let &[3, h, w] = image.shape() else {
            return Err(Error::Dimension(format!("{id}: image shape {:?}, expected 3×H×W", image.shape())));
        };
        if mask.len() != h * w {
            return Err(Error::Dimension(format!("{id}: mask has {} pixels, image {h}×{w}", mask.len())));
        }
        if mask.iter().any(|&v| v > 1) {
            return Err(Error::Data(format!("{id}: mask values must be 0 or 1")));
        }
        Ok(Self { id, image, mask })
    }

    pub fn height(&self) -> usize {
        self.image.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.image.shape()[2]
    }
}

fn png_stems(dir: &Path) -> Result<BTreeMap<String, PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = BTreeMap::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().and_then(|e| e.to_str()).is_some_and(|e| e.eq_ignore_ascii_case("png")) {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                out.insert(stem.to_string(), path);
            }
        }
    }
    Ok(out)
}

fn read_image(path: &Path) -> std::result::Result<(usize, usize, Tensor<f32>), String> {
    let bytes = std::fs::read(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let r = png_io::decode(&bytes).map_err(|e| format!("{}: {e}", path.display()))?;
    let plane = r.height * r.width;
    let mut data = vec![0.0f32; 3 * plane];
    for p in 0..plane {
        let px = &r.data[p * r.channels..(p + 1) * r.channels];
        for c in 0..3 {
            // Gray and gray+alpha replicate their single channel.
            let v = if r.channels < 3 { px[0] } else { px[c] };
            data[c * plane + p] = f32::from(v) / 255.0;
        }
    }
    let t = Tensor::new(vec![3, r.height, r.width], data).map_err(|e| e.to_string())?;
    Ok((r.height, r.width, t))
}

fn read_mask(path: &Path) -> std::result::Result<(usize, usize, Vec<u8>), String> {
    let bytes = std::fs::read(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let r = png_io::decode(&bytes).map_err(|e| format!("{}: {e}", path.display()))?;
    let colour = if r.channels >= 3 { 3 } else { 1 };
    let mut soft = false;
    let mask = r
        .data
        .chunks(r.channels)
        .map(|px| {
            let v = px[..colour].iter().copied().max().unwrap_or(0);
            soft |= !matches!(v, 0 | 1 | 255);
            u8::from(v != 0)
        })
        .collect();
    if soft {
        log::warn!("{}: mask has intermediate values, binarized as nonzero → 1", path.display());
    }
    Ok((r.height, r.width, mask))
}

/// Load `<root>/images/<id>.png` with `<root>/masks/<id>.png`, sorted by id.
///
/// Every unmatched, undecodable or inconsistent file is reported together in
/// one [`Error::Dataset`].
pub fn load_dataset(root: &Path) -> Result<Vec<Sample>> {
    let images = png_stems(&root.join("images"))?;
    let masks = png_stems(&root.join("masks"))?;
    let mut problems = Vec::new();
    for (id, path) in &masks {
        if !images.contains_key(id) {
            problems.push(format!("mask {} has no matching image", path.display()));
        }
    }
    let pairs: Vec<(&String, &PathBuf, &PathBuf)> = images
        .iter()
        .filter_map(|(id, img)| match masks.get(id) {
            Some(m) => Some((id, img, m)),
            None => {
                problems.push(format!("missing mask for image {}", img.display()));
                None
            }
        })
        .collect();
    let decoded = par::map_range(pairs.len(), |i| {
        let (id, img, msk) = pairs[i];
        let (ih, iw, image) = read_image(img)?;
        let (mh, mw, mask) = read_mask(msk)?;
        if (ih, iw) != (mh, mw) {
            return Err(format!("{id}: image is {ih}×{iw} but mask is {mh}×{mw}"));
        }
        Sample::new(id.clone(), image, mask).map_err(|e| e.to_string())
    });
    let mut samples = Vec::with_capacity(decoded.len());
    for d in decoded {
        match d {
            Ok(s) => samples.push(s),
            Err(e) => problems.push(e),
        }
    }
    if let Some(first) = samples.first() {
        let extent = (first.height(), first.width());
        for s in &samples[1..] {
            if (s.height(), s.width()) != extent {
                problems.push(format!(
                    "{}: extent {}×{} differs from {}×{} of {}",
                    s.id,
                    s.height(),
                    s.width(),
                    extent.0,
                    extent.1,
                    first.id
                ));
            }
        }
    } else if problems.is_empty() {
        problems.push(format!("no image/mask pairs under {}", root.display()));
    }
    if problems.is_empty() {
        Ok(samples)
    } else {
        Err(Error::Dataset(problems))
    }
}

/// Per-channel standardization applied to images, never to masks.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormalizationSpec {
    pub mean: [f32; 3],
    pub std: [f32; 3],
}

impl Default for NormalizationSpec {
    fn default() -> Self {
        Self {
            mean: [0.485, 0.456, 0.406],
            std: [0.229, 0.224, 0.225],
        }
    }
}

impl NormalizationSpec {
    pub fn validate(&self) -> Result<()> {
        if self.std.iter().all(|&s| s > 0.0) {
            Ok(())
        } else {
            Err(Error::Parameter(format!("normalization std must be positive, got {:?}", self.std)))
        }
    }

    fn map(&self, image: &Tensor<f32>, f: impl Fn(f32, f32, f32) -> f32) -> Result<Tensor<f32>> {
        let &[3, h, w] = image.shape() else {
            return Err(Error::Dimension(format!("expected 3×H×W image, got {:?}", image.shape())));
        };
        let plane = h * w;
        let mut out = image.clone();
        for (i, v) in out.data_mut().iter_mut().enumerate() {
            let c = i / plane;
            *v = f(*v, self.mean[c], self.std[c]);
        }
        Ok(out)
    }

    pub fn normalize(&self, image: &Tensor<f32>) -> Result<Tensor<f32>> {
        self.map(image, |v, m, s| (v - m) / s)
    }

    pub fn denormalize(&self, image: &Tensor<f32>) -> Result<Tensor<f32>> {
        self.map(image, |v, m, s| v * s + m)
    }
}

use crate::error::{Error, Result};

/// Predicted and target binary masks of equal extent.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MaskPair {
    height: usize,
    width: usize,
    pred: Vec<u8>,
    target: Vec<u8>,
}

impl MaskPair {
    pub fn new(height: usize, width: usize, pred: Vec<u8>, target: Vec<u8>) -> Result<Self> {
        let n = height * width;
        if pred.len() != n || target.len() != n {
            return Err(Error::Dimension(format!(
                "mask pair {height}×{width} needs {n} pixels, got {} / {}",
                pred.len(),
                target.len()
            )));
        }
        if let Some(i) = pred.iter().chain(&target).position(|&v| v > 1) {
            let which = if i < n { "predicted" } else { "target" };
            return Err(Error::Data(format!("{which} mask has non-binary value at pixel {}", i % n)));
        }
        Ok(Self { height, width, pred, target })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pred(&self) -> &[u8] {
        &self.pred
    }

    pub fn target(&self) -> &[u8] {
        &self.target
    }

    /// Masks as real-valued maps in {0, 1}.
    pub fn as_real(&self) -> (Vec<f64>, Vec<f64>) {
        let f = |m: &[u8]| m.iter().map(|&v| f64::from(v)).collect();
        (f(&self.pred), f(&self.target))
    }

    fn counts(&self) -> Result<[ClassCounts; 2]> {
        if self.pred.is_empty() {
            return Err(Error::Data("overlap metric on an empty mask".into()));
        }
        let mut c = [ClassCounts::default(); 2];
        for (&p, &t) in self.pred.iter().zip(&self.target) {
            c[p as usize].pred += 1;
            c[t as usize].target += 1;
            if p == t {
                c[p as usize].both += 1;
            }
        }
        Ok(c)
    }
}

#[derive(Clone, Copy, Default, Debug)]
struct ClassCounts {
    pred: u64,
    target: u64,
    both: u64,
}

fn class_mean(terms: [Option<f64>; 2], metric: &str) -> f64 {
    let mut sum = 0.0;
    let mut n = 0;
    for (class, t) in terms.iter().enumerate() {
        match t {
            Some(v) => {
                sum += v;
                n += 1;
            }
            None => log::debug!("{metric}: class {class} absent from both masks, excluded"),
        }
    }
    sum / n as f64
}

/// Intersection over union averaged over the classes present in either mask.
pub fn iou(pair: &MaskPair) -> Result<f64> {
    let c = pair.counts()?;
    let term = |k: &ClassCounts| {
        let union = k.pred + k.target - k.both;
        (union > 0).then(|| k.both as f64 / union as f64)
    };
    Ok(class_mean([term(&c[0]), term(&c[1])], "iou"))
}

/// Dice coefficient averaged over the classes present in either mask.
pub fn dice(pair: &MaskPair) -> Result<f64> {
    let c = pair.counts()?;
    let term = |k: &ClassCounts| {
        let denom = k.pred + k.target;
        (denom > 0).then(|| (2 * k.both) as f64 / denom as f64)
    };
    Ok(class_mean([term(&c[0]), term(&c[1])], "dice"))
}

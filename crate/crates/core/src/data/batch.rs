use std::sync::mpsc;

use super::{NormalizationSpec, Sample};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

/// How many assembled batches may be buffered ahead of the consumer.
pub const PREFETCH_DEPTH: usize = 4;

/// Split `indices` into batches of `batch_size`, keeping a short final batch.
/// With `shuffle`, the order is first permuted by `rng`.
pub fn make_batches(indices: &[usize], batch_size: usize, shuffle: bool, rng: &mut Rng) -> Result<Vec<Vec<usize>>> {
    if batch_size == 0 {
        return Err(Error::Parameter("batch_size must be ≥ 1".into()));
    }
    let mut order = indices.to_vec();
    if shuffle {
        rng.shuffle(&mut order);
    }
    Ok(order.chunks(batch_size).map(<[usize]>::to_vec).collect())
}

/// Normalized images and masks of several samples.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub indices: Vec<usize>,
    /// `B×3×H×W`.
    pub images: Tensor<f32>,
    /// `B×H×W` class ids.
    pub masks: Vec<u8>,
}

impl Batch {
    pub fn assemble(samples: &[Sample], indices: &[usize], norm: &NormalizationSpec) -> Result<Self> {
        let mut images = Vec::with_capacity(indices.len());
        let mut masks = Vec::new();
        for &i in indices {
            let s = samples
                .get(i)
                .ok_or_else(|| Error::Dimension(format!("sample index {i} out of range")))?;
            images.push(norm.normalize(&s.image)?);
            masks.extend_from_slice(&s.mask);
        }
        Ok(Self {
            indices: indices.to_vec(),
            images: Tensor::stack(&images)?,
            masks,
        })
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn pixels_per_sample(&self) -> usize {
        self.masks.len() / self.indices.len().max(1)
    }

    pub fn image(&self, b: usize) -> Result<Tensor<f32>> {
        self.images.index_axis0(b)
    }

    pub fn mask(&self, b: usize) -> &[u8] {
        let n = self.pixels_per_sample();
        &self.masks[b * n..(b + 1) * n]
    }
}

/// Build batches on a background thread up to `depth` ahead and hand them to
/// `consume` in the order of `batches`. Stops at the first error from either
/// side.
pub fn for_each_prefetched<B, F, C>(batches: &[Vec<usize>], depth: usize, build: F, mut consume: C) -> Result<()>
where
    B: Send,
    F: Fn(&[usize]) -> Result<B> + Sync,
    C: FnMut(B) -> Result<()>,
{
    let (tx, rx) = mpsc::sync_channel::<Result<B>>(depth.max(1));
    let build = &build;
    std::thread::scope(|scope| {
        scope.spawn(move || {
            for b in batches {
                let item = build(b);
                let failed = item.is_err();
                if tx.send(item).is_err() || failed {
                    break;
                }
            }
        });
        for item in rx {
            consume(item?)?;
        }
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn batch_counts() {
        let idx: Vec<usize> = (0..450).collect();
        let b = make_batches(&idx, 16, true, &mut Rng::new(1)).unwrap();
        assert_eq!(b.len(), 29);
        assert_eq!(b.last().unwrap().len(), 2);
        let mut all: Vec<usize> = b.concat();
        all.sort_unstable();
        assert_eq!(all, idx);
        let fixed = make_batches(&idx, 16, false, &mut Rng::new(1)).unwrap();
        assert_eq!(fixed.concat(), idx);
        assert!(make_batches(&idx, 0, false, &mut Rng::new(1)).is_err());
    }

    #[test]
    fn prefetch_preserves_order_and_stops_on_error() {
        let batches: Vec<Vec<usize>> = (0..20).map(|i| vec![i]).collect();
        let mut seen = Vec::new();
        for_each_prefetched(&batches, 4, |b| Ok(b[0]), |v| {
            seen.push(v);
            Ok(())
        })
        .unwrap();
        assert_eq!(seen, (0..20).collect::<Vec<_>>());

        let mut seen = Vec::new();
        let r = for_each_prefetched(
            &batches,
            4,
            |b| if b[0] == 5 { Err(Error::Data("boom".into())) } else { Ok(b[0]) },
            |v| {
                seen.push(v);
                Ok(())
            },
        );
        assert!(r.is_err());
        assert_eq!(seen, vec![0, 1, 2, 3, 4]);
    }
}

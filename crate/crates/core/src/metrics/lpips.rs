//! Learned perceptual distance over a small convolutional feature network
//! whose weights are loaded from a tensor container file.

use std::path::Path;

use crate::error::{Error, Result};
use crate::io::bytes::hash64;
use crate::io::container::{self, NamedTensor};
use crate::tensor::kernels::{conv2d_forward, ConvGeom};
use crate::tensor::Tensor;

/// Added to feature norms before channel normalization.
pub const NORM_EPS: f64 = 1e-10;

/// Distance between two single-channel maps with values in [0, 1].
pub trait PerceptualDistance: Send + Sync {
    fn distance(&self, pred: &[f64], target: &[f64], h: usize, w: usize) -> Result<f64>;
}

/// One stride-1, same-padded convolution followed by ReLU, whose output is
/// tapped with per-channel weights `lin`.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureLayer {
    pub weight: Tensor<f64>,
    pub bias: Tensor<f64>,
    pub lin: Tensor<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvFeatureNet {
    layers: Vec<FeatureLayer>,
}

fn file_tag() -> u64 {
    hash64(b"conv-feature-net/1")
}

impl ConvFeatureNet {
    pub fn new(layers: Vec<FeatureLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Parameter("feature network needs at least one layer".into()));
        }
        let mut c_prev = None;
        for (i, l) in layers.iter().enumerate() {
            let &[co, ci, kh, kw] = l.weight.shape() else {
                return Err(Error::Dimension(format!("layer {i}: weight shape {:?}", l.weight.shape())));
            };
            if kh % 2 == 0 || kw % 2 == 0 {
                return Err(Error::Dimension(format!("layer {i}: kernel {kh}×{kw} must be odd")));
            }
            if l.bias.shape() != [co] || l.lin.shape() != [co] {
                return Err(Error::Dimension(format!("layer {i}: bias/lin must have {co} entries")));
            }
            if c_prev.is_some_and(|c| c != ci) {
                return Err(Error::Dimension(format!(
                    "layer {i} expects {ci} channels, previous layer produces {}",
                    c_prev.unwrap_or(0)
                )));
            }
            c_prev = Some(co);
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[FeatureLayer] {
        &self.layers
    }

    pub fn in_channels(&self) -> usize {
        self.layers[0].weight.shape()[1]
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (_, named) = container::read(path, Some(file_tag()))?;
        let mut it = named.into_iter();
        let mut layers = Vec::new();
        loop {
            let i = layers.len();
            let mut next = |suffix: &str| -> Result<Option<Tensor<f64>>> {
                match it.next() {
                    None => Ok(None),
                    Some(t) if t.name == format!("layer{i}.{suffix}") => Ok(Some(t.tensor.cast())),
                    Some(t) => Err(Error::corrupt(path, format!("unexpected tensor {}", t.name))),
                }
            };
            let Some(weight) = next("weight")? else { break };
            let (Some(bias), Some(lin)) = (next("bias")?, next("lin")?) else {
                return Err(Error::corrupt(path, format!("layer {i} incomplete")));
            };
            layers.push(FeatureLayer { weight, bias, lin });
        }
        Self::new(layers).map_err(|e| Error::corrupt(path, e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut named = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            for (suffix, t) in [("weight", &l.weight), ("bias", &l.bias), ("lin", &l.lin)] {
                named.push(NamedTensor {
                    name: format!("layer{i}.{suffix}"),
                    tensor: t.cast(),
                });
            }
        }
        container::write(path, file_tag(), &named)
    }

    /// Tapped activations for a `C×H×W` input.
    pub fn features(&self, x: &Tensor<f64>) -> Result<Vec<Tensor<f64>>> {
        let mut cur = x.clone();
        let mut taps = Vec::with_capacity(self.layers.len());
        for l in &self.layers {
            let k = l.weight.shape()[2];
            let g = ConvGeom::new(cur.shape(), l.weight.shape(), 1, k / 2, 1)?;
            let mut y = conv2d_forward(cur.data(), l.weight.data(), Some(l.bias.data()), &g);
            y.iter_mut().for_each(|v| *v = v.max(0.0));
            cur = Tensor::new(vec![g.c_out, g.out_h, g.out_w], y)?;
            taps.push(cur.clone());
        }
        Ok(taps)
    }

    fn prepare(&self, map: &[f64], h: usize, w: usize) -> Result<Tensor<f64>> {
        let c = self.in_channels();
        let scaled: Vec<f64> = map.iter().map(|v| 2.0 * v - 1.0).collect();
        Tensor::new(vec![c, h, w], scaled.repeat(c))
    }
}

fn unit_normalize(f: &Tensor<f64>) -> Vec<f64> {
    let (c, plane) = (f.shape()[0], f.shape()[1] * f.shape()[2]);
    let d = f.data();
    let mut out = d.to_vec();
    for p in 0..plane {
        let norm = (0..c).map(|ch| d[ch * plane + p].powi(2)).sum::<f64>().sqrt() + NORM_EPS;
        for ch in 0..c {
            out[ch * plane + p] /= norm;
        }
    }
    out
}

impl PerceptualDistance for ConvFeatureNet {
    fn distance(&self, pred: &[f64], target: &[f64], h: usize, w: usize) -> Result<f64> {
        let fp = self.features(&self.prepare(pred, h, w)?)?;
        let ft = self.features(&self.prepare(target, h, w)?)?;
        let mut total = 0.0;
        for ((a, b), layer) in fp.iter().zip(&ft).zip(&self.layers) {
            let (c, plane) = (a.shape()[0], a.shape()[1] * a.shape()[2]);
            let (na, nb) = (unit_normalize(a), unit_normalize(b));
            let lin = layer.lin.data();
            let mut acc = 0.0;
            for ch in 0..c {
                let s: f64 = (0..plane).map(|p| (na[ch * plane + p] - nb[ch * plane + p]).powi(2)).sum();
                acc += lin[ch] * s;
            }
            total += acc / plane as f64;
        }
        Ok(total)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], v: &[f64]) -> Tensor<f64> {
        Tensor::from_f64(shape, v).unwrap()
    }

    /// Layer 0 splits a mask into "on" and "off" channels; layer 1 keeps the
    /// "on" channel and adds a constant channel.
    fn toy(lin0: [f64; 2], lin1: [f64; 2]) -> ConvFeatureNet {
        ConvFeatureNet::new(vec![
            FeatureLayer {
                weight: t(&[2, 1, 1, 1], &[1.0, -1.0]),
                bias: t(&[2], &[0.0, 0.0]),
                lin: t(&[2], &lin0),
            },
            FeatureLayer {
                weight: t(&[2, 2, 1, 1], &[1.0, 0.0, 0.0, 0.0]),
                bias: t(&[2], &[0.0, 1.0]),
                lin: t(&[2], &lin1),
            },
        ])
        .unwrap()
    }

    #[test]
    fn toy_network_matches_hand_evaluation() {
        let net = toy([0.3, 0.7], [2.0, 5.0]);
        let target = [0.0; 16];
        let mut pred = [0.0; 16];
        pred[5] = 1.0;
        pred[10] = 1.0;
        // Layer 0: a differing pixel moves (0,1) to (1,0): squared diffs 1 and 1.
        let l0 = (0.3 + 0.7) * 2.0 / 16.0;
        // Layer 1: (1,1)/√2 against (0,1): squared diffs 1/2 and (1 − 1/√2)².
        let r = 1.0 / 2f64.sqrt();
        let l1 = (2.0 * 0.5 + 5.0 * (1.0 - r).powi(2)) * 2.0 / 16.0;
        let d = net.distance(&pred, &target, 4, 4).unwrap();
        assert!((d - (l0 + l1)).abs() < 1e-9, "{d} vs {}", l0 + l1);
        assert_eq!(net.distance(&pred, &pred, 4, 4).unwrap(), 0.0);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("lpips.bin");
        let net = toy([0.25, 0.5], [1.0, 2.0]);
        net.save(&path).unwrap();
        assert_eq!(ConvFeatureNet::load(&path).unwrap(), net);
        assert!(matches!(
            ConvFeatureNet::load(&dir.path().join("absent.bin")),
            Err(Error::MissingFile(_))
        ));
    }

    #[test]
    fn rejects_unchained_layers() {
        let l = FeatureLayer {
            weight: t(&[2, 1, 1, 1], &[1.0, 1.0]),
            bias: t(&[2], &[0.0, 0.0]),
            lin: t(&[2], &[1.0, 1.0]),
        };
        assert!(ConvFeatureNet::new(vec![l.clone(), l]).is_err());
    }
}

//! Batch gradients and evaluation passes.

use crate::data::Batch;
use crate::error::{Error, Result};
use crate::loss::cross_entropy_loss;
use crate::metrics::{evaluate_pair, ImageMetrics, MaskPair, PerceptualDistance, SsimParams};
use crate::model::{ModelParams, SegFormer};
use crate::par;
use crate::rng::Rng;
use crate::tensor::{Graph, Mode, Tensor};

/// Mean loss over the batch and gradients averaged over its samples.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchGradients {
    pub loss: f64,
    pub grads: Vec<Tensor<f32>>,
}

fn sample_gradients(
    model: &SegFormer,
    params: &ModelParams<f32>,
    image: &Tensor<f32>,
    mask: &[u8],
    mut rng: Rng,
) -> Result<(f64, Vec<Tensor<f32>>)> {
    let mut g = Graph::new();
    let p = params.bind(&mut g);
    let x = g.input(image);
    let logits = model.forward(&mut g, &p, x, Mode::Train, &mut rng)?;
    let loss = cross_entropy_loss(&mut g, logits, mask)?;
    g.backward(loss)?;
    let grads = p
        .iter()
        .map(|&v| g.grad_tensor(v).ok_or_else(|| Error::Contract("parameter without gradient".into())))
        .collect::<Result<Vec<_>>>()?;
    Ok((f64::from(g.value(loss).item()?), grads))
}

/// Per-sample forward/backward passes, run data-parallel, then summed in
/// sample order and divided by the batch size. Sample `b` draws dropout
/// masks from stream `b` of `step_seed`, so the result does not depend on
/// thread count.
pub fn batch_gradients(
    model: &SegFormer,
    params: &ModelParams<f32>,
    batch: &Batch,
    step_seed: u64,
) -> Result<BatchGradients> {
    if batch.is_empty() {
        return Err(Error::Data("empty batch".into()));
    }
    let per_sample = par::map_range(batch.len(), |b| {
        let image = batch.image(b)?;
        sample_gradients(model, params, &image, batch.mask(b), Rng::with_stream(step_seed, b as u64))
    });
    let mut loss = 0.0;
    let mut grads: Option<Vec<Tensor<f32>>> = None;
    for r in per_sample {
        let (l, g) = r?;
        loss += l;
        match grads.as_mut() {
            None => grads = Some(g),
            Some(acc) => {
                for (a, gi) in acc.iter_mut().zip(&g) {
                    a.data_mut().iter_mut().zip(gi.data()).for_each(|(x, y)| *x += *y);
                }
            }
        }
    }
    let n = batch.len() as f32;
    let mut grads = grads.unwrap_or_default();
    for t in &mut grads {
        t.data_mut().iter_mut().for_each(|v| *v /= n);
    }
    Ok(BatchGradients {
        loss: loss / batch.len() as f64,
        grads,
    })
}

/// Class map from `C×H×W` logits; ties go to the lower class.
pub fn argmax_mask(logits: &Tensor<f32>) -> Result<Vec<u8>> {
    let &[c, h, w] = logits.shape() else {
        return Err(Error::Dimension(format!("expected C×H×W logits, got {:?}", logits.shape())));
    };
    let plane = h * w;
    let d = logits.data();
    Ok((0..plane)
        .map(|p| {
            let mut best = 0;
            for k in 1..c {
                if d[k * plane + p] > d[best * plane + p] {
                    best = k;
                }
            }
            best as u8
        })
        .collect())
}

/// Eval-mode loss and metrics of one sample.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SampleEval {
    pub loss: f64,
    pub metrics: ImageMetrics,
}

/// Evaluate every sample of `batch` in eval mode, data-parallel.
pub fn evaluate_batch(
    model: &SegFormer,
    params: &ModelParams<f32>,
    batch: &Batch,
    lpips: Option<&dyn PerceptualDistance>,
) -> Result<Vec<SampleEval>> {
    let (h, w) = (batch.images.shape()[2], batch.images.shape()[3]);
    let ssim = SsimParams::default();
    par::map_range(batch.len(), |b| -> Result<SampleEval> {
        let image = batch.image(b)?;
        let mut g = Graph::new();
        let p = params.bind(&mut g);
        let x = g.input(&image);
        let logits = model.forward(&mut g, &p, x, Mode::Eval, &mut Rng::new(0))?;
        let loss_var = cross_entropy_loss(&mut g, logits, batch.mask(b))?;
        let loss = f64::from(g.value(loss_var).item()?);
        let pred = argmax_mask(g.value(logits))?;
        let pair = MaskPair::new(h, w, pred, batch.mask(b).to_vec())?;
        Ok(SampleEval {
            loss,
            metrics: evaluate_pair(&pair, &ssim, lpips)?,
        })
    })
    .into_iter()
    .collect()
}

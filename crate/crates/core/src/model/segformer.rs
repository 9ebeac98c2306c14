//! Hierarchical transformer encoder and all-MLP decoder.

use super::config::{ModelConfig, STAGES};
use super::params::{
    AttentionParams, Bind, BlockParams, DecoderParams, FfnParams, Layout, Linear, ModelParams, Norm,
};
use crate::error::{Error, Result};
use crate::par;
use crate::rng::Rng;
use crate::tensor::{Graph, Mode, Real, Tensor, Var};

fn linear<T: Real>(g: &mut Graph<'_, T>, x: Var, p: &Linear<Var>) -> Result<Var> {
    let y = g.matmul(x, p.weight)?;
    match p.bias {
        Some(b) => g.add_row_bias(y, b),
        None => Ok(y),
    }
}

fn norm<T: Real>(g: &mut Graph<'_, T>, x: Var, p: &Norm<Var>, eps: f64) -> Result<Var> {
    g.layer_norm(x, p.gamma, p.beta, eps)
}

/// `C×h×w` map to `N×C` tokens.
fn to_tokens<T: Real>(g: &mut Graph<'_, T>, map: Var) -> Result<(Var, usize, usize)> {
    let &[c, h, w] = g.shape(map) else {
        return Err(Error::Dimension(format!("expected C×H×W map, got {:?}", g.shape(map))));
    };
    let flat = g.reshape(map, &[c, h * w])?;
    Ok((g.transpose(flat)?, h, w))
}

/// `N×C` tokens to a `C×h×w` map.
fn to_map<T: Real>(g: &mut Graph<'_, T>, tokens: Var, h: usize, w: usize) -> Result<Var> {
    let t = g.transpose(tokens)?;
    let c = g.shape(t)[0];
    g.reshape(t, &[c, h, w])
}

fn check_tokens<T: Real>(g: &Graph<'_, T>, x: Var, h: usize, w: usize) -> Result<usize> {
    let &[n, c] = g.shape(x) else {
        return Err(Error::Dimension(format!("expected N×C tokens, got {:?}", g.shape(x))));
    };
    if n != h * w {
        return Err(Error::Dimension(format!("{n} tokens do not form a {h}×{w} grid")));
    }
    Ok(c)
}

/// Multi-head attention whose keys and values come from a spatially reduced
/// copy of the token grid.
#[allow(clippy::too_many_arguments)]
pub fn efficient_self_attention<T: Real>(
    g: &mut Graph<'_, T>,
    x: Var,
    h: usize,
    w: usize,
    heads: usize,
    sr_ratio: usize,
    p: &AttentionParams<Var>,
    eps: f64,
) -> Result<Var> {
    let c = check_tokens(g, x, h, w)?;
    if heads == 0 || c % heads != 0 {
        return Err(Error::Dimension(format!("{c} channels not divisible by {heads} heads")));
    }
    let q = linear(g, x, &p.q)?;
    let kv_src = match (&p.reduction, sr_ratio) {
        (Some(r), s) if s > 1 => {
            let map = to_map(g, x, h, w)?;
            let reduced = g.conv2d(map, r.conv.weight, Some(r.conv.bias), s, 0, 1)?;
            let (tokens, _, _) = to_tokens(g, reduced)?;
            norm(g, tokens, &r.norm, eps)?
        }
        (None, 1) => x,
        _ => {
            return Err(Error::Contract(format!(
                "spatial reduction parameters inconsistent with sr_ratio {sr_ratio}"
            )))
        }
    };
    let k = linear(g, kv_src, &p.k)?;
    let v = linear(g, kv_src, &p.v)?;
    let d = c / heads;
    let scale = T::of(1.0 / (d as f64).sqrt());
    let mut outs = Vec::with_capacity(heads);
    for head in 0..heads {
        let (qh, kh, vh) = if heads == 1 {
            (q, k, v)
        } else {
            (
                g.slice_cols(q, head * d, d)?,
                g.slice_cols(k, head * d, d)?,
                g.slice_cols(v, head * d, d)?,
            )
        };
        let kt = g.transpose(kh)?;
        let scores = g.matmul(qh, kt)?;
        let scores = g.scale(scores, scale);
        let attn = g.softmax(scores, 1)?;
        outs.push(g.matmul(attn, vh)?);
    }
    let merged = if heads == 1 { outs[0] } else { g.concat_cols(&outs)? };
    linear(g, merged, &p.proj)
}

/// Feed-forward block with a 3×3 depthwise convolution between its
/// expansion and contraction.
pub fn mix_ffn<T: Real>(g: &mut Graph<'_, T>, x: Var, h: usize, w: usize, p: &FfnParams<Var>) -> Result<Var> {
    check_tokens(g, x, h, w)?;
    let hidden = linear(g, x, &p.fc1)?;
    let channels = g.shape(hidden)[1];
    let map = to_map(g, hidden, h, w)?;
    let mixed = g.conv2d(map, p.depthwise.weight, Some(p.depthwise.bias), 1, 1, channels)?;
    let act = g.gelu(mixed);
    let (tokens, _, _) = to_tokens(g, act)?;
    linear(g, tokens, &p.fc2)
}

#[allow(clippy::too_many_arguments)]
fn block<T: Real>(
    g: &mut Graph<'_, T>,
    x: Var,
    h: usize,
    w: usize,
    heads: usize,
    sr: usize,
    p: &BlockParams<Var>,
    eps: f64,
) -> Result<Var> {
    let y = norm(g, x, &p.norm1, eps)?;
    let a = efficient_self_attention(g, y, h, w, heads, sr, &p.attn, eps)?;
    let x = g.add(x, a)?;
    let y = norm(g, x, &p.norm2, eps)?;
    let f = mix_ffn(g, y, h, w, &p.ffn)?;
    g.add(x, f)
}

/// The segmentation network: a configuration plus its parameter layout.
#[derive(Clone, Debug)]
pub struct SegFormer {
    config: ModelConfig,
    layout: Layout,
}

impl SegFormer {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(&config);
        Ok(Self { config, layout })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    /// Truncated-normal weights (std 0.02), zero biases, unit norm gains.
    pub fn init_params<T: Real>(&self, rng: &mut Rng) -> ModelParams<T> {
        ModelParams::init(&self.layout, rng)
    }

    fn check_input(&self, shape: &[usize]) -> Result<(usize, usize)> {
        let &[c, h, w] = shape else {
            return Err(Error::Dimension(format!("expected a C×H×W image, got {shape:?}")));
        };
        if c != self.config.in_channels {
            return Err(Error::Dimension(format!(
                "image has {c} channels, model expects {}",
                self.config.in_channels
            )));
        }
        let div = self.config.spatial_divisor();
        for (axis, extent) in [("height", h), ("width", w)] {
            if extent == 0 || extent % div != 0 {
                return Err(Error::Dimension(format!(
                    "image {axis} {extent} is not a positive multiple of {div}"
                )));
            }
        }
        Ok((h, w))
    }

    /// Four feature maps at 1/4, 1/8, 1/16 and 1/32 of the input extent.
    pub fn encode<T: Real>(&self, g: &mut Graph<'_, T>, p: &[Var], x: Var) -> Result<Vec<Var>> {
        self.check_input(g.shape(x))?;
        let eps = self.config.norm_eps;
        let mut cur = x;
        let mut feats = Vec::with_capacity(STAGES);
        for (i, stage) in self.layout.stages.iter().enumerate() {
            let sp = stage.bind(p);
            let pe = self.config.patch_embed[i];
            let emb = g.conv2d(cur, sp.patch.weight, Some(sp.patch.bias), pe.stride, pe.padding, 1)?;
            let (tokens, h, w) = to_tokens(g, emb)?;
            let mut t = norm(g, tokens, &sp.patch_norm, eps)?;
            for bp in &sp.blocks {
                t = block(
                    g,
                    t,
                    h,
                    w,
                    self.config.stage_heads[i],
                    self.config.sr_ratios[i],
                    bp,
                    eps,
                )?;
            }
            let t = norm(g, t, &sp.norm, eps)?;
            cur = to_map(g, t, h, w)?;
            feats.push(cur);
        }
        Ok(feats)
    }

    /// Project, align and fuse the four maps, apply dropout, classify, and
    /// resample the logits to `out_h × out_w`.
    #[allow(clippy::too_many_arguments)]
    pub fn decode<T: Real>(
        &self,
        g: &mut Graph<'_, T>,
        p: &[Var],
        feats: &[Var],
        out_h: usize,
        out_w: usize,
        mode: Mode,
        rng: &mut Rng,
    ) -> Result<Var> {
        if feats.len() != STAGES {
            return Err(Error::Dimension(format!("decoder needs {STAGES} feature maps, got {}", feats.len())));
        }
        let dp: DecoderParams<Var> = self.layout.decoder.bind(p);
        let eps = self.config.norm_eps;
        let (h0, w0) = match *g.shape(feats[0]) {
            [_, h, w] => (h, w),
            ref s => return Err(Error::Dimension(format!("feature map 0 has shape {s:?}"))),
        };
        let mut aligned = Vec::with_capacity(STAGES);
        for (i, &f) in feats.iter().enumerate() {
            let expect = [self.config.stage_dims[i], h0 >> i, w0 >> i];
            if g.shape(f) != expect {
                return Err(Error::Dimension(format!(
                    "feature map {i} has shape {:?}, expected {expect:?}",
                    g.shape(f)
                )));
            }
            let (tokens, h, w) = to_tokens(g, f)?;
            let proj = linear(g, tokens, &dp.proj[i])?;
            let map = to_map(g, proj, h, w)?;
            let up = if (h, w) == (h0, w0) { map } else { g.upsample(map, h0, w0)? };
            aligned.push(up);
        }
        aligned.reverse();
        let cat = g.concat_leading(&aligned)?;
        let (tokens, _, _) = to_tokens(g, cat)?;
        let fused = linear(g, tokens, &dp.fuse)?;
        let fused = norm(g, fused, &dp.fuse_norm, eps)?;
        let fused = g.gelu(fused);
        let dropped = g.dropout(fused, self.config.dropout_p, mode, rng)?;
        let logits = linear(g, dropped, &dp.head)?;
        let map = to_map(g, logits, h0, w0)?;
        if (h0, w0) == (out_h, out_w) {
            Ok(map)
        } else {
            g.upsample(map, out_h, out_w)
        }
    }

    /// Logits `num_classes × H × W` for one `C×H×W` image.
    pub fn forward<T: Real>(
        &self,
        g: &mut Graph<'_, T>,
        p: &[Var],
        x: Var,
        mode: Mode,
        rng: &mut Rng,
    ) -> Result<Var> {
        let (h, w) = self.check_input(g.shape(x))?;
        let feats = self.encode(g, p, x)?;
        self.decode(g, p, &feats, h, w, mode, rng)
    }

    fn check_batch(&self, images: &Tensor<impl Real>) -> Result<usize> {
        match images.shape() {
            [b, rest @ ..] => {
                self.check_input(rest)?;
                Ok(*b)
            }
            [] => Err(Error::Dimension("expected a B×C×H×W batch, got a scalar".into())),
        }
    }

    /// Four `B×C_i×h_i×w_i` feature maps for a `B×C×H×W` batch.
    pub fn encode_batch<T: Real>(&self, params: &ModelParams<T>, images: &Tensor<T>) -> Result<Vec<Tensor<T>>> {
        let b = self.check_batch(images)?;
        let per_sample = par::map_range(b, |i| -> Result<Vec<Tensor<T>>> {
            let x = images.index_axis0(i)?;
            let mut g = Graph::new();
            let p = params.bind(&mut g);
            let xv = g.input(&x);
            let feats = self.encode(&mut g, &p, xv)?;
            Ok(feats.iter().map(|&f| g.value(f).clone()).collect())
        });
        let per_sample = per_sample.into_iter().collect::<Result<Vec<_>>>()?;
        (0..STAGES)
            .map(|s| Tensor::stack(&per_sample.iter().map(|f| f[s].clone()).collect::<Vec<_>>()))
            .collect()
    }

    /// Eval-mode logits `B×num_classes×H×W`. Samples are independent, so the
    /// batch is processed data-parallel.
    pub fn predict_batch<T: Real>(&self, params: &ModelParams<T>, images: &Tensor<T>) -> Result<Tensor<T>> {
        let b = self.check_batch(images)?;
        let outs = par::map_range(b, |i| -> Result<Tensor<T>> {
            let x = images.index_axis0(i)?;
            let mut g = Graph::new();
            let p = params.bind(&mut g);
            let xv = g.input(&x);
            let y = self.forward(&mut g, &p, xv, Mode::Eval, &mut Rng::new(0))?;
            Ok(g.value(y).clone())
        });
        Tensor::stack(&outs.into_iter().collect::<Result<Vec<_>>>()?)
    }
}

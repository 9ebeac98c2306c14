//! Finite-difference verification suite for every differentiable operation
//! and for the end-to-end model.

use crate::error::{Error, Result};
use crate::model::{
    efficient_self_attention, mix_ffn, AttentionParams, Bind, Conv, FfnParams, Linear, ModelConfig, ModelParams,
    Norm, Reduction, SegFormer,
};
use crate::rng::Rng;
use crate::tensor::gradcheck::{self, Coords, GradCheckReport, ScalarFn};
use crate::tensor::{Graph, Mode, Tensor, Var};

/// Largest relative error a check may show.
pub const TOLERANCE: f64 = 1e-4;
/// Central-difference step.
pub const STEP: f64 = 1e-5;

#[derive(Clone, Debug)]
pub struct CheckOutcome {
    pub name: String,
    pub report: GradCheckReport,
    /// Input with the largest per-coordinate error.
    pub worst_input: String,
}

impl CheckOutcome {
    pub fn passed(&self) -> bool {
        self.report.worst() < TOLERANCE
    }
}

fn random(shape: &[usize], rng: &mut Rng, scale: f64) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.range(-scale, scale))
}

/// `Σ out ⊙ R` for a fixed random `R`, so every output element carries a
/// distinct weight.
fn project(g: &mut Graph<'_, f64>, out: Var, seed: u64) -> Result<Var> {
    let r = random(g.shape(out), &mut Rng::with_stream(seed, 0x9e), 1.0);
    let rv = g.constant(r);
    let prod = g.mul(out, rv)?;
    Ok(g.sum(prod))
}

fn run<F: ScalarFn>(
    name: &str,
    inputs: Vec<Tensor<f64>>,
    labels: &[&str],
    coords: Coords,
    fault: bool,
    f: F,
) -> Result<CheckOutcome> {
    let report = if fault {
        gradcheck::check_with_fault(f, &inputs, STEP, coords)?
    } else {
        gradcheck::check(f, &inputs, STEP, coords)?
    };
    let worst = report
        .per_input
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| labels.get(i).map_or_else(|| format!("input{i}"), |s| s.to_string()))
        .unwrap_or_default();
    Ok(CheckOutcome {
        name: name.to_string(),
        report,
        worst_input: worst,
    })
}

/// One check per graph operation, plus the attention and feed-forward blocks.
pub fn primitive_checks(fault: bool) -> Result<Vec<CheckOutcome>> {
    let mut rng = Rng::with_stream(2024, 1);
    let mut r = |shape: &[usize]| random(shape, &mut rng, 1.0);
    let all = Coords::All;
    let mut out = Vec::new();

    out.push(run("matmul", vec![r(&[3, 4]), r(&[4, 2])], &["a", "b"], all, fault, |g, v| {
        let y = g.matmul(v[0], v[1])?;
        project(g, y, 1)
    })?);
    out.push(run("add", vec![r(&[2, 3]), r(&[2, 3])], &["a", "b"], all, fault, |g, v| {
        let y = g.add(v[0], v[1])?;
        project(g, y, 2)
    })?);
    out.push(run("mul", vec![r(&[2, 3]), r(&[2, 3])], &["a", "b"], all, fault, |g, v| {
        let y = g.mul(v[0], v[1])?;
        project(g, y, 3)
    })?);
    out.push(run("add_row_bias", vec![r(&[3, 4]), r(&[4])], &["x", "bias"], all, fault, |g, v| {
        let y = g.add_row_bias(v[0], v[1])?;
        project(g, y, 4)
    })?);
    out.push(run("scale", vec![r(&[2, 3])], &["x"], all, fault, |g, v| {
        let y = g.scale(v[0], 1.7);
        project(g, y, 5)
    })?);
    out.push(run("transpose", vec![r(&[3, 4])], &["x"], all, fault, |g, v| {
        let y = g.transpose(v[0])?;
        project(g, y, 6)
    })?);
    out.push(run("reshape", vec![r(&[2, 6])], &["x"], all, fault, |g, v| {
        let y = g.reshape(v[0], &[3, 4])?;
        project(g, y, 7)
    })?);
    out.push(run("slice_cols", vec![r(&[3, 5])], &["x"], all, fault, |g, v| {
        let y = g.slice_cols(v[0], 1, 3)?;
        project(g, y, 8)
    })?);
    out.push(run("concat_cols", vec![r(&[3, 2]), r(&[3, 3])], &["a", "b"], all, fault, |g, v| {
        let y = g.concat_cols(&[v[0], v[1]])?;
        project(g, y, 9)
    })?);
    out.push(run("concat_leading", vec![r(&[2, 3, 3]), r(&[1, 3, 3])], &["a", "b"], all, fault, |g, v| {
        let y = g.concat_leading(&[v[0], v[1]])?;
        project(g, y, 10)
    })?);
    out.push(run(
        "conv2d",
        vec![r(&[2, 5, 5]), r(&[3, 2, 3, 3]), r(&[3])],
        &["x", "weight", "bias"],
        all,
        fault,
        |g, v| {
            let y = g.conv2d(v[0], v[1], Some(v[2]), 2, 1, 1)?;
            project(g, y, 11)
        },
    )?);
    out.push(run(
        "conv2d_depthwise",
        vec![r(&[4, 4, 4]), r(&[4, 1, 3, 3]), r(&[4])],
        &["x", "weight", "bias"],
        all,
        fault,
        |g, v| {
            let y = g.conv2d(v[0], v[1], Some(v[2]), 1, 1, 4)?;
            project(g, y, 12)
        },
    )?);
    out.push(run("softmax", vec![r(&[2, 3, 4])], &["x"], all, fault, |g, v| {
        let y = g.softmax(v[0], 1)?;
        project(g, y, 13)
    })?);
    out.push(run(
        "layer_norm",
        vec![r(&[3, 5]), r(&[5]), r(&[5])],
        &["x", "gamma", "beta"],
        all,
        fault,
        |g, v| {
            let y = g.layer_norm(v[0], v[1], v[2], 1e-6)?;
            project(g, y, 14)
        },
    )?);
    out.push(run("gelu", vec![random(&[10], &mut Rng::new(15), 3.0)], &["x"], all, fault, |g, v| {
        let y = g.gelu(v[0]);
        project(g, y, 15)
    })?);
    out.push(run("dropout", vec![r(&[4, 5])], &["x"], all, fault, |g, v| {
        let y = g.dropout(v[0], 0.3, Mode::Train, &mut Rng::new(16))?;
        project(g, y, 16)
    })?);
    out.push(run("upsample", vec![r(&[2, 3, 3])], &["x"], all, fault, |g, v| {
        let y = g.upsample(v[0], 7, 5)?;
        project(g, y, 17)
    })?);
    out.push(run("sum", vec![r(&[2, 3])], &["x"], all, fault, |g, v| {
        let sq = g.mul(v[0], v[0])?;
        Ok(g.sum(sq))
    })?);
    out.push(run("mean", vec![r(&[2, 3])], &["x"], all, fault, |g, v| {
        let sq = g.mul(v[0], v[0])?;
        Ok(g.mean(sq))
    })?);
    let targets: Vec<u8> = {
        let mut t = Rng::new(18);
        (0..2 * 9).map(|_| t.below(2) as u8).collect()
    };
    out.push(run("cross_entropy", vec![r(&[2, 2, 3, 3])], &["logits"], all, fault, move |g, v| {
        g.cross_entropy(v[0], &targets)
    })?);

    let (c, heads, sr, hh, ww) = (4usize, 2usize, 2usize, 4usize, 4usize);
    let mut shapes: Vec<(&str, Vec<usize>)> = Vec::new();
    let mut add = |name: &'static str, shape: &[usize]| {
        shapes.push((name, shape.to_vec()));
        shapes.len() - 1
    };
    let lin = |add: &mut dyn FnMut(&'static str, &[usize]) -> usize, w: &'static str, b: &'static str| Linear {
        weight: add(w, &[c, c]),
        bias: Some(add(b, &[c])),
    };
    let attn = AttentionParams {
        q: lin(&mut add, "q.weight", "q.bias"),
        k: lin(&mut add, "k.weight", "k.bias"),
        v: lin(&mut add, "v.weight", "v.bias"),
        proj: lin(&mut add, "proj.weight", "proj.bias"),
        reduction: Some(Reduction {
            conv: Conv {
                weight: add("sr.weight", &[c, c, sr, sr]),
                bias: add("sr.bias", &[c]),
            },
            norm: Norm {
                gamma: add("sr_norm.gamma", &[c]),
                beta: add("sr_norm.beta", &[c]),
            },
        }),
    };
    let x_idx = add("x", &[hh * ww, c]);
    let labels: Vec<&str> = shapes.iter().map(|s| s.0).collect();
    let inputs: Vec<Tensor<f64>> = shapes.iter().map(|s| r(&s.1)).collect();
    out.push(run("efficient_self_attention", inputs, &labels, all, fault, move |g, v| {
        let y = efficient_self_attention(g, v[x_idx], hh, ww, heads, sr, &attn.bind(v), 1e-6)?;
        project(g, y, 19)
    })?);

    let (e, fh, fw) = (2usize, 3usize, 2usize);
    let ffn = FfnParams {
        fc1: Linear { weight: 0usize, bias: Some(1) },
        depthwise: Conv { weight: 2, bias: 3 },
        fc2: Linear { weight: 4, bias: Some(5) },
    };
    let inputs = vec![
        r(&[c, c * e]),
        r(&[c * e]),
        r(&[c * e, 1, 3, 3]),
        r(&[c * e]),
        r(&[c * e, c]),
        r(&[c]),
        r(&[fh * fw, c]),
    ];
    let labels = ["fc1.weight", "fc1.bias", "dw.weight", "dw.bias", "fc2.weight", "fc2.bias", "x"];
    out.push(run("mix_ffn", inputs, &labels, all, fault, move |g, v| {
        let y = mix_ffn(g, v[6], fh, fw, &ffn.bind(v))?;
        project(g, y, 20)
    })?);
    Ok(out)
}

/// Cross-entropy of the whole network on one random `3×extent×extent` image
/// with train-mode dropout under a fixed mask, checked on a seeded sample of
/// coordinates per parameter tensor plus one random direction over all of
/// them.
pub fn model_check(config: &ModelConfig, extent: usize, per_tensor: usize, fault: bool) -> Result<CheckOutcome> {
    let model = SegFormer::new(config.clone())?;
    let mut rng = Rng::with_stream(7, 3);
    let mut params: ModelParams<f64> = model.init_params(&mut rng);
    // Move off the symmetric initial point (zero biases, unit gains).
    for t in params.tensors_mut() {
        t.data_mut().iter_mut().for_each(|v| *v += rng.normal(0.0, 0.05));
    }
    let image = random(&[config.in_channels, extent, extent], &mut rng, 2.0);
    let targets: Vec<u8> = (0..extent * extent).map(|_| rng.below(config.num_classes) as u8).collect();
    let mut inputs = params.tensors().to_vec();
    inputs.push(image);
    let mut labels: Vec<String> = params.names().to_vec();
    labels.push("image".into());
    let labels: Vec<&str> = labels.iter().map(String::as_str).collect();
    let n = params.len();
    run(
        &format!("model:{extent}x{extent}"),
        inputs,
        &labels,
        Coords::Sampled { per_tensor, seed: 11 },
        fault,
        move |g, v| {
            let logits = model.forward(g, &v[..n], v[n], Mode::Train, &mut Rng::new(99))?;
            g.cross_entropy(logits, &targets)
        },
    )
}

/// Primitives plus the end-to-end model for a named preset. Only presets
/// small enough to difference in reasonable time are accepted.
pub fn gradcheck_suite(preset: &str, fault: bool) -> Result<Vec<CheckOutcome>> {
    let config = ModelConfig::preset(preset)?;
    if preset != "tiny" {
        return Err(Error::Config(format!(
            "preset {preset:?} is too large for finite-difference checking; use \"tiny\""
        )));
    }
    let mut out = primitive_checks(fault)?;
    out.push(model_check(&config, 32, 16, fault)?);
    Ok(out)
}

//! Parameter layout and storage.
//!
//! Every parameter's name and shape is a pure function of [`ModelConfig`];
//! [`Layout`] records them in a fixed order together with typed index
//! structs the forward pass uses to find its tensors.

use super::config::{ModelConfig, STAGES};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{Graph, Real, Tensor, Var};

pub const INIT_STD: f64 = 0.02;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Init {
    TruncNormal,
    Zeros,
    Ones,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: Init,
}

impl ParamSpec {
    /// Weight decay applies to weight matrices and kernels only.
    pub fn decays(&self) -> bool {
        self.name.ends_with(".weight")
    }
}

/// Affine parameters of a layer normalization.
#[derive(Clone, Copy, Debug)]
pub struct Norm<I> {
    pub gamma: I,
    pub beta: I,
}

/// Dense layer `x·W + b` with `W` stored `in × out`.
#[derive(Clone, Copy, Debug)]
pub struct Linear<I> {
    pub weight: I,
    pub bias: Option<I>,
}

#[derive(Clone, Copy, Debug)]
pub struct Conv<I> {
    pub weight: I,
    pub bias: I,
}

/// Spatial-reduction branch of the attention: strided conv plus norm.
#[derive(Clone, Copy, Debug)]
pub struct Reduction<I> {
    pub conv: Conv<I>,
    pub norm: Norm<I>,
}

#[derive(Clone, Copy, Debug)]
pub struct AttentionParams<I> {
    pub q: Linear<I>,
    pub k: Linear<I>,
    pub v: Linear<I>,
    pub proj: Linear<I>,
    pub reduction: Option<Reduction<I>>,
}

#[derive(Clone, Copy, Debug)]
pub struct FfnParams<I> {
    pub fc1: Linear<I>,
    pub depthwise: Conv<I>,
    pub fc2: Linear<I>,
}

#[derive(Clone, Copy, Debug)]
pub struct BlockParams<I> {
    pub norm1: Norm<I>,
    pub attn: AttentionParams<I>,
    pub norm2: Norm<I>,
    pub ffn: FfnParams<I>,
}

#[derive(Clone, Debug)]
pub struct StageParams<I> {
    pub patch: Conv<I>,
    pub patch_norm: Norm<I>,
    pub blocks: Vec<BlockParams<I>>,
    pub norm: Norm<I>,
}

#[derive(Clone, Debug)]
pub struct DecoderParams<I> {
    pub proj: Vec<Linear<I>>,
    pub fuse: Linear<I>,
    pub fuse_norm: Norm<I>,
    pub head: Linear<I>,
}

/// Map index structs onto graph handles.
pub trait Bind {
    type Out;
    fn bind(&self, vars: &[Var]) -> Self::Out;
}

impl Bind for usize {
    type Out = Var;
    fn bind(&self, vars: &[Var]) -> Var {
        vars[*self]
    }
}

impl<B: Bind> Bind for Option<B> {
    type Out = Option<B::Out>;
    fn bind(&self, vars: &[Var]) -> Self::Out {
        self.as_ref().map(|b| b.bind(vars))
    }
}

impl<B: Bind> Bind for Vec<B> {
    type Out = Vec<B::Out>;
    fn bind(&self, vars: &[Var]) -> Self::Out {
        self.iter().map(|b| b.bind(vars)).collect()
    }
}

macro_rules! bind_struct {
    ($name:ident { $($field:ident),* }) => {
        impl Bind for $name<usize> {
            type Out = $name<Var>;
            fn bind(&self, vars: &[Var]) -> $name<Var> {
                $name { $($field: self.$field.bind(vars)),* }
            }
        }
    };
}

bind_struct!(Norm { gamma, beta });
bind_struct!(Linear { weight, bias });
bind_struct!(Conv { weight, bias });
bind_struct!(Reduction { conv, norm });
bind_struct!(AttentionParams { q, k, v, proj, reduction });
bind_struct!(FfnParams { fc1, depthwise, fc2 });
bind_struct!(BlockParams { norm1, attn, norm2, ffn });
bind_struct!(StageParams { patch, patch_norm, blocks, norm });
bind_struct!(DecoderParams { proj, fuse, fuse_norm, head });

#[derive(Default)]
struct Builder {
    specs: Vec<ParamSpec>,
}

impl Builder {
    fn add(&mut self, name: String, shape: Vec<usize>, init: Init) -> usize {
        self.specs.push(ParamSpec { name, shape, init });
        self.specs.len() - 1
    }

    fn norm(&mut self, prefix: &str, dim: usize) -> Norm<usize> {
        Norm {
            gamma: self.add(format!("{prefix}.gamma"), vec![dim], Init::Ones),
            beta: self.add(format!("{prefix}.beta"), vec![dim], Init::Zeros),
        }
    }

    fn linear(&mut self, prefix: &str, fan_in: usize, fan_out: usize, bias: bool) -> Linear<usize> {
        Linear {
            weight: self.add(format!("{prefix}.weight"), vec![fan_in, fan_out], Init::TruncNormal),
            bias: bias.then(|| self.add(format!("{prefix}.bias"), vec![fan_out], Init::Zeros)),
        }
    }

    fn conv(&mut self, prefix: &str, c_out: usize, c_in_per_group: usize, k: usize) -> Conv<usize> {
        Conv {
            weight: self.add(
                format!("{prefix}.weight"),
                vec![c_out, c_in_per_group, k, k],
                Init::TruncNormal,
            ),
            bias: self.add(format!("{prefix}.bias"), vec![c_out], Init::Zeros),
        }
    }
}

/// Names, shapes and typed indices of every parameter for one config.
#[derive(Clone, Debug)]
pub struct Layout {
    pub specs: Vec<ParamSpec>,
    pub stages: Vec<StageParams<usize>>,
    pub decoder: DecoderParams<usize>,
}

impl Layout {
    pub fn new(config: &ModelConfig) -> Self {
        let mut b = Builder::default();
        let mut stages = Vec::with_capacity(STAGES);
        let mut c_prev = config.in_channels;
        for i in 0..STAGES {
            let c = config.stage_dims[i];
            let pe = config.patch_embed[i];
            let s = format!("stage{i}");
            let patch = b.conv(&format!("{s}.patch"), c, c_prev, pe.kernel);
            let patch_norm = b.norm(&format!("{s}.patch_norm"), c);
            let hidden = c * config.ffn_expansion;
            let blocks = (0..config.stage_depths[i])
                .map(|j| {
                    let p = format!("{s}.block{j}");
                    let norm1 = b.norm(&format!("{p}.norm1"), c);
                    let q = b.linear(&format!("{p}.attn.q"), c, c, true);
                    let k = b.linear(&format!("{p}.attn.k"), c, c, true);
                    let v = b.linear(&format!("{p}.attn.v"), c, c, true);
                    let proj = b.linear(&format!("{p}.attn.proj"), c, c, true);
                    let sr = config.sr_ratios[i];
                    let reduction = (sr > 1).then(|| Reduction {
                        conv: b.conv(&format!("{p}.attn.sr"), c, c, sr),
                        norm: b.norm(&format!("{p}.attn.sr_norm"), c),
                    });
                    let norm2 = b.norm(&format!("{p}.norm2"), c);
                    let fc1 = b.linear(&format!("{p}.ffn.fc1"), c, hidden, true);
                    let depthwise = b.conv(&format!("{p}.ffn.dw"), hidden, 1, 3);
                    let fc2 = b.linear(&format!("{p}.ffn.fc2"), hidden, c, true);
                    BlockParams {
                        norm1,
                        attn: AttentionParams { q, k, v, proj, reduction },
                        norm2,
                        ffn: FfnParams { fc1, depthwise, fc2 },
                    }
                })
                .collect();
            let norm = b.norm(&format!("{s}.norm"), c);
            stages.push(StageParams { patch, patch_norm, blocks, norm });
            c_prev = c;
        }
        let d = config.decoder_dim;
        let proj = (0..STAGES)
            .map(|i| b.linear(&format!("decoder.proj{i}"), config.stage_dims[i], d, true))
            .collect();
        let fuse = b.linear("decoder.fuse", STAGES * d, d, false);
        let fuse_norm = b.norm("decoder.fuse_norm", d);
        let head = b.linear("head", d, config.num_classes, true);
        Self {
            specs: b.specs,
            stages,
            decoder: DecoderParams { proj, fuse, fuse_norm, head },
        }
    }

    pub fn param_count(&self) -> usize {
        self.specs.iter().map(|s| s.shape.iter().product::<usize>()).sum()
    }
}

/// The full learnable parameter set, in [`Layout`] order.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<T: Real = f32> {
    names: Vec<String>,
    tensors: Vec<Tensor<T>>,
}

impl<T: Real> ModelParams<T> {
    pub fn init(layout: &Layout, rng: &mut Rng) -> Self {
        let tensors = layout
            .specs
            .iter()
            .map(|s| match s.init {
                Init::Zeros => Tensor::zeros(&s.shape),
                Init::Ones => Tensor::full(&s.shape, T::one()),
                Init::TruncNormal => Tensor::from_fn(&s.shape, |_| T::of(rng.truncated_normal(INIT_STD))),
            })
            .collect();
        Self {
            names: layout.specs.iter().map(|s| s.name.clone()).collect(),
            tensors,
        }
    }

    /// Assemble from named tensors, checking names and shapes against `layout`.
    pub fn from_named(layout: &Layout, named: Vec<(String, Tensor<T>)>) -> Result<Self> {
        if named.len() != layout.specs.len() {
            return Err(Error::Data(format!(
                "expected {} parameter tensors, got {}",
                layout.specs.len(),
                named.len()
            )));
        }
        for (spec, (name, t)) in layout.specs.iter().zip(&named) {
            if *name != spec.name || t.shape() != spec.shape.as_slice() {
                return Err(Error::Data(format!(
                    "parameter {name} {:?} does not match layout entry {} {:?}",
                    t.shape(),
                    spec.name,
                    spec.shape
                )));
            }
        }
        let (names, tensors) = named.into_iter().unzip();
        Ok(Self { names, tensors })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor<T>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.tensors
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.names.iter().position(|n| n == name).map(|i| &self.tensors[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        let i = self.names.iter().position(|n| n == name)?;
        Some(&mut self.tensors[i])
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn numel(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    /// Register every tensor as a borrowed, gradient-receiving leaf.
    pub fn bind<'a>(&'a self, g: &mut Graph<'a, T>) -> Vec<Var> {
        self.tensors.iter().map(|t| g.param(t)).collect()
    }

    pub fn cast<U: Real>(&self) -> ModelParams<U> {
        ModelParams {
            names: self.names.clone(),
            tensors: self.tensors.iter().map(Tensor::cast).collect(),
        }
    }
}

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::io::bytes::hash64;

/// Overlapping patch embedding convolution of one encoder stage.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PatchEmbed {
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

/// Architecture hyperparameters of the segmentation network.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub in_channels: usize,
    pub num_classes: usize,
    pub stage_dims: Vec<usize>,
    pub stage_depths: Vec<usize>,
    pub stage_heads: Vec<usize>,
    pub sr_ratios: Vec<usize>,
    pub ffn_expansion: usize,
    pub decoder_dim: usize,
    /// Dropout ahead of the 1×1 classifier.
    pub dropout_p: f64,
    pub patch_embed: Vec<PatchEmbed>,
    pub norm_eps: f64,
}

pub const STAGES: usize = 4;

fn standard_patch_embed() -> Vec<PatchEmbed> {
    let first = PatchEmbed {
        kernel: 7,
        stride: 4,
        padding: 3,
    };
    let rest = PatchEmbed {
        kernel: 3,
        stride: 2,
        padding: 1,
    };
    vec![first, rest, rest, rest]
}

impl ModelConfig {
    /// Desk-scale preset used for training runs and gradient checks.
    pub fn tiny() -> Self {
        Self {
            in_channels: 3,
            num_classes: 2,
            stage_dims: vec![16, 32, 64, 128],
            stage_depths: vec![1, 1, 1, 1],
            stage_heads: vec![1, 2, 4, 8],
            sr_ratios: vec![8, 4, 2, 1],
            ffn_expansion: 4,
            decoder_dim: 64,
            dropout_p: 0.3,
            patch_embed: standard_patch_embed(),
            norm_eps: 1e-6,
        }
    }

    /// Encoder shaped like MiT-B2.
    pub fn b2() -> Self {
        Self {
            stage_dims: vec![64, 128, 320, 512],
            stage_depths: vec![3, 4, 6, 3],
            stage_heads: vec![1, 2, 5, 8],
            decoder_dim: 768,
            ..Self::tiny()
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "tiny" => Ok(Self::tiny()),
            "b2" => Ok(Self::b2()),
            other => Err(Error::Config(format!(
                "unknown model preset {other:?} (expected \"tiny\" or \"b2\")"
            ))),
        }
    }

    pub fn with_dropout(mut self, p: f64) -> Self {
        self.dropout_p = p;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let lists = [
            ("stage_dims", self.stage_dims.len()),
            ("stage_depths", self.stage_depths.len()),
            ("stage_heads", self.stage_heads.len()),
            ("sr_ratios", self.sr_ratios.len()),
            ("patch_embed", self.patch_embed.len()),
        ];
        for (name, len) in lists {
            if len != STAGES {
                return Err(Error::Config(format!("{name} has {len} entries, expected {STAGES}")));
            }
        }
        for i in 0..STAGES {
            let (d, h) = (self.stage_dims[i], self.stage_heads[i]);
            if d == 0 || h == 0 || d % h != 0 {
                return Err(Error::Config(format!(
                    "stage {i}: width {d} not divisible by {h} heads"
                )));
            }
            if self.sr_ratios[i] == 0 || self.patch_embed[i].stride == 0 {
                return Err(Error::Config(format!("stage {i}: strides must be ≥ 1")));
            }
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(Error::Config(format!(
                "dropout_p {} outside [0, 1)",
                self.dropout_p
            )));
        }
        if self.in_channels == 0 || self.num_classes == 0 || self.decoder_dim == 0 || self.ffn_expansion == 0 {
            return Err(Error::Config("channel counts must be ≥ 1".into()));
        }
        Ok(())
    }

    /// Input extents must be multiples of this.
    pub fn spatial_divisor(&self) -> usize {
        self.patch_embed.iter().map(|p| p.stride).product()
    }

    /// Fingerprint of everything that determines parameter shapes. Dropout is
    /// excluded so one weight file serves both dropout variants.
    pub fn structural_hash(&self) -> u64 {
        let mut s = String::new();
        let _ = write!(
            s,
            "in={};classes={};dims={:?};depths={:?};heads={:?};sr={:?};ffn={};dec={};",
            self.in_channels,
            self.num_classes,
            self.stage_dims,
            self.stage_depths,
            self.stage_heads,
            self.sr_ratios,
            self.ffn_expansion,
            self.decoder_dim
        );
        for p in &self.patch_embed {
            let _ = write!(s, "pe={}/{}/{};", p.kernel, p.stride, p.padding);
        }
        hash64(s.as_bytes())
    }
}

//! Segmentation network definition, parameters and weight files.

mod config;
mod params;
mod segformer;
mod weights;

pub use config::{ModelConfig, PatchEmbed, STAGES};
pub use params::{
    AttentionParams, Bind, BlockParams, Conv, DecoderParams, FfnParams, Init, Layout, Linear, ModelParams,
    Norm, ParamSpec, Reduction, StageParams, INIT_STD,
};
pub use segformer::{efficient_self_attention, mix_ffn, SegFormer};
pub use weights::{load_weights, save_weights};

//! Patch-based transformer classifier.
//!
//! Each patch keeps its own residual stream. Blocks are pre-norm: attention
//! heads read the normalised stream, each head's value aggregation is routed
//! through its own bottleneck channel, the decoded head outputs are
//! concatenated and projected, and the result is added back. A pointwise MLP
//! follows. Classification is a linear head over the global average of the
//! final-norm patch representations; there is no class token.

mod config;
mod forward;
mod model;

pub use config::ViTConfig;
pub use forward::{patchify, unpatchify, ForwardGraph, ForwardTrace, HeadMatrix, HeadVars, LAYER_NORM_EPS};
pub use forward::argmax;
pub use model::{BlockIds, ChannelIds, HeadIds, Layout, ModelVars, Param, ParamId, ViTModel};

#[cfg(test)]
mod tests;

//! Transformer decoders over the `n + m` Tanner-graph node positions.
//!
//! Logits are confidences that a bit is 1, the opposite orientation of the
//! channel LLRs fed in.

mod checkpoint;
mod mask;
mod model;

use thiserror::Error;

pub use checkpoint::{load_model, model_container, model_from_container, save_model, Container, FORMAT_VERSION};
pub use mask::{build_mask, low_rank_width, resize_mask, AttentionMask, LowRankMask};
pub use model::{
    attention, attention_flops, attention_weights, batch_tensor, embed, linear_attention, linear_attention_flops,
    model_forward_flops, threshold, transformer_block, AttentionKind, BlockNodes, Model, ModelConfig, ModelParams,
    LAYER_NORM_EPS,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TransformerError {
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error(transparent)]
    Autodiff(#[from] autodiff::AutodiffError),
    #[error("unsupported checkpoint version `{0}`")]
    Version(String),
    #[error("checkpoint is truncated")]
    Truncated,
    #[error("malformed checkpoint: {0}")]
    Format(String),
    #[error("i/o error: {0}")]
    Io(String),
}

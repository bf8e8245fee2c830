//! Multi-head attention baselines: self, causal and cross attention with an
//! explicitly materialized score matrix, key/value caching for incremental
//! decoding, and pre-norm transformer layers.

mod cache;
mod layer;
mod mha;
mod positional;

pub use cache::{attn_step, KvCache};
pub use layer::{TransformerDecoderLayer, TransformerDecoderState, TransformerEncoderLayer};
pub use mha::{MaskMode, MultiHeadAttention, DEFAULT_HEADS};
pub use positional::{add_positions, add_position_row};

//! Mamba blocks and the encoder/decoder layers built from them.
//!
//! A unidirectional block runs `in_proj → split(main, gate) → causal conv →
//! SiLU → SSM → main ⊙ SiLU(gate) → out_proj`. The bidirectional block shares
//! the projections and runs a second conv+SSM branch over the reversed main
//! path; the two SSM outputs are averaged before gating. CrossMamba runs a
//! unidirectional block over `cat(memory, query)` and keeps the query-length
//! suffix.

mod cross;
mod feedforward;
mod layer;
mod mamba;

pub use cross::{cross_mamba, cross_mamba_multi};
pub use feedforward::{FeedForward, FfSublayer, FF_MULT};
pub use layer::{CrossSublayer, DecoderLayerState, MambaDecoderLayer, MambaEncoderLayer};
pub use mamba::{BiMambaBlock, BranchState, MambaBranch, MambaStepState, UniMambaBlock, EXPANSION};

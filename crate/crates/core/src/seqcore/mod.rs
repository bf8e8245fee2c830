//! Dense numeric primitives shared by every layer: the token-sequence
//! container, projections, normalization, activations, convolutions,
//! embeddings and the seeded generator used for initialization.

mod activation;
mod conv;
mod embedding;
pub mod fixture;
mod linear;
mod norm;
mod rng;
mod sequence;

pub use activation::{gated_mult, relu, relu_in_place, sigmoid, silu, silu_in_place, silu_scalar, softplus};
pub use conv::{causal_conv1d, Conv1d, DepthwiseConv1d, Padding, DEFAULT_CONV_WIDTH};
pub use embedding::Embedding;
pub use linear::{linear, Linear};
pub use norm::{layer_norm, LayerNorm, DEFAULT_LN_EPS};
pub use rng::Rng;
pub use sequence::FeatureSequence;

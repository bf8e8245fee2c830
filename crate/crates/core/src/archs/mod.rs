//! Skeletal speech models assembled from the Mamba and attention layers:
//! a TasNet-style separator, ConMamba/Conformer recognizers, and codec
//! language models with autoregressive and non-autoregressive stages.
//! Weights are random; these exist for shape contracts and scaling runs.

mod asr;
mod backbone;
mod codec_lm;
mod tasnet;
mod tokens;

pub use asr::{AsrDecoder, AsrEncoder, AsrModel, ConMambaBlock, ConformerBlock, ConvModule, Frontend, CONV_MODULE_WIDTH, MEL_BINS, TEXT_VOCAB};
pub use backbone::{ArBackbone, DecodeSession, MambaArStack, TransformerArStack};
pub use codec_lm::{ar_generate, nar_infer, CodecLm, Generation, NarStack, Sampler, BOS, CODEBOOKS, CODES, EOS, NAR_STAGES, PHONEMES};
pub use tasnet::{MaskNet, TasNetModel, SAMPLE_RATE, WINDOW, STRIDE};
pub use tokens::{tokens_for_duration, tokens_for_seconds, TokenResolution};

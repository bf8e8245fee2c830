use crate::attention::{add_positions, MultiHeadAttention, TransformerDecoderLayer, MaskMode};
use crate::error::{Error, Result};
use crate::layers::{BiMambaBlock, FfSublayer, MambaDecoderLayer};
use crate::params::{impl_params, Params};
use crate::seqcore::{
    relu_in_place, sigmoid, silu_in_place, Conv1d, DepthwiseConv1d, Embedding, FeatureSequence, LayerNorm, Linear,
    Padding, Rng,
};
use crate::ssm::{SharedEvaluator, UsesSsm};

/// Log-mel bins per 10 ms frame.
pub const MEL_BINS: usize = 80;
/// Depthwise kernel width of the convolution module.
pub const CONV_MODULE_WIDTH: usize = 31;
/// Output vocabulary of the recognizer heads.
pub const TEXT_VOCAB: usize = 1000;

/// Two stride-2 convolutions over time and a projection: four spectrogram
/// frames per token.
#[derive(Clone, Debug)]
pub struct Frontend {
    pub conv1: Conv1d,
    pub conv2: Conv1d,
    pub proj: Linear,
}

impl_params!(Frontend { conv1, conv2, proj });

impl Frontend {
    pub fn random(dim: usize, rng: &mut Rng) -> Self {
        Self {
            conv1: Conv1d::random(MEL_BINS, dim, 3, 2, 1, rng),
            conv2: Conv1d::random(dim, dim, 3, 2, 1, rng),
            proj: Linear::random(dim, dim, true, rng),
        }
    }

    /// Token count for `frames` spectrogram frames: `ceil(frames / 4)`.
    pub fn tokens_for(&self, frames: usize) -> usize {
        self.conv2.out_len(self.conv1.out_len(frames))
    }

    pub fn forward(&self, spec: &FeatureSequence) -> Result<FeatureSequence> {
        let mut h = self.conv1.forward(spec)?;
        relu_in_place(h.as_mut_slice());
        let mut h = self.conv2.forward(&h)?;
        relu_in_place(h.as_mut_slice());
        self.proj.forward(&h)
    }
}

/// `pw2(SiLU(LN(depthwise(GLU(pw1(LN(x)))))))`.
#[derive(Clone, Debug)]
pub struct ConvModule {
    pub norm: LayerNorm,
    pub pw1: Linear,
    pub depthwise: DepthwiseConv1d,
    pub norm2: LayerNorm,
    pub pw2: Linear,
}

impl_params!(ConvModule { norm, pw1, depthwise, norm2, pw2 });

impl ConvModule {
    pub fn random(dim: usize, rng: &mut Rng) -> Self {
        Self {
            norm: LayerNorm::new(dim),
            pw1: Linear::random(dim, 2 * dim, true, rng),
            depthwise: DepthwiseConv1d::random(dim, CONV_MODULE_WIDTH, Padding::Same, true, rng),
            norm2: LayerNorm::new(dim),
            pw2: Linear::random(dim, dim, true, rng),
        }
    }

    pub fn forward(&self, x: &FeatureSequence) -> Result<FeatureSequence> {
        let dim = x.dim();
        let h = self.pw1.forward(&self.norm.forward(x)?)?;
        let mut glu = FeatureSequence::zeros(h.len(), dim);
        for (o, r) in glu.rows_mut().zip(h.rows()) {
            let (a, g) = r.split_at(dim);
            o.iter_mut().zip(a.iter().zip(g)).for_each(|(o, (&a, &g))| *o = a * sigmoid(g));
        }
        let mut h = self.norm2.forward(&self.depthwise.forward(&glu)?)?;
        silu_in_place(h.as_mut_slice());
        self.pw2.forward(&h)
    }
}

/// `x₁ = x + s·FF₁(x)`, `x₂ = x₁ + BiMamba(LN(x₁))`, `x₃ = x₂ + Conv(x₂)`,
/// `y = LN(x₃ + s·FF₂(x₃))` with `s = ff_scale` (one half).
#[derive(Clone, Debug)]
pub struct ConMambaBlock {
    pub ff1: FfSublayer,
    pub mamba_norm: LayerNorm,
    pub mamba: BiMambaBlock,
    pub conv: ConvModule,
    pub ff2: FfSublayer,
    pub final_norm: LayerNorm,
    pub ff_scale: f32,
}

impl_params!(ConMambaBlock { ff1, mamba_norm, mamba, conv, ff2, final_norm });

impl ConMambaBlock {
    pub fn random(dim: usize, rng: &mut Rng) -> Self {
        Self {
            ff1: FfSublayer::random(dim, rng),
            mamba_norm: LayerNorm::new(dim),
            mamba: BiMambaBlock::random(dim, rng),
            conv: ConvModule::random(dim, rng),
            ff2: FfSublayer::random(dim, rng),
            final_norm: LayerNorm::new(dim),
            ff_scale: 0.5,
        }
    }

    /// The value after the first half-feedforward residual.
    pub fn first_residual(&self, x: &FeatureSequence) -> Result<FeatureSequence> {
        let mut h = x.clone();
        self.ff1.apply(&mut h, self.ff_scale)?;
        Ok(h)
    }

    pub fn forward(&self, x: &FeatureSequence) -> Result<FeatureSequence> {
        let mut h = self.first_residual(x)?;
        let m = self.mamba.forward(&self.mamba_norm.forward(&h)?)?;
        h.add_scaled(&m, 1.0)?;
        let c = self.conv.forward(&h)?;
        h.add_scaled(&c, 1.0)?;
        self.ff2.apply(&mut h, self.ff_scale)?;
        self.final_norm.forward(&h)
    }
}

impl UsesSsm for ConMambaBlock {
    fn set_evaluator(&mut self, eval: &SharedEvaluator) {
        self.mamba.set_evaluator(eval);
    }
}

/// The same sandwich with multi-head self-attention in place of the
/// bidirectional Mamba.
#[derive(Clone, Debug)]
pub struct ConformerBlock {
    pub ff1: FfSublayer,
    pub attn_norm: LayerNorm,
    pub attn: MultiHeadAttention,
    pub conv: ConvModule,
    pub ff2: FfSublayer,
    pub final_norm: LayerNorm,
    pub ff_scale: f32,
}

impl_params!(ConformerBlock { ff1, attn_norm, attn, conv, ff2, final_norm });

impl ConformerBlock {
    pub fn random(dim: usize, heads: usize, rng: &mut Rng) -> Result<Self> {
        Ok(Self {
            ff1: FfSublayer::random(dim, rng),
            attn_norm: LayerNorm::new(dim),
            attn: MultiHeadAttention::random(dim, heads, rng)?,
            conv: ConvModule::random(dim, rng),
            ff2: FfSublayer::random(dim, rng),
            final_norm: LayerNorm::new(dim),
            ff_scale: 0.5,
        })
    }

    pub fn forward(&self, x: &FeatureSequence) -> Result<FeatureSequence> {
        let mut h = x.clone();
        self.ff1.apply(&mut h, self.ff_scale)?;
        let a = self.attn.self_attention(&self.attn_norm.forward(&h)?, MaskMode::None)?;
        h.add_scaled(&a, 1.0)?;
        let c = self.conv.forward(&h)?;
        h.add_scaled(&c, 1.0)?;
        self.ff2.apply(&mut h, self.ff_scale)?;
        self.final_norm.forward(&h)
    }
}

#[derive(Clone, Debug)]
pub enum AsrEncoder {
    ConMamba(Vec<ConMambaBlock>),
    Conformer(Vec<ConformerBlock>),
}

impl Params for AsrEncoder {
    fn visit_params(&self, f: &mut dyn FnMut(&[f32])) {
        match self {
            AsrEncoder::ConMamba(b) => b.visit_params(f),
            AsrEncoder::Conformer(b) => b.visit_params(f),
        }
    }
    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut [f32])) {
        match self {
            AsrEncoder::ConMamba(b) => b.visit_params_mut(f),
            AsrEncoder::Conformer(b) => b.visit_params_mut(f),
        }
    }
}

impl AsrEncoder {
    pub fn depth(&self) -> usize {
        match self {
            AsrEncoder::ConMamba(b) => b.len(),
            AsrEncoder::Conformer(b) => b.len(),
        }
    }

    pub fn forward(&self, x: &FeatureSequence) -> Result<FeatureSequence> {
        let mut h = x.clone();
        match self {
            AsrEncoder::ConMamba(blocks) => {
                for b in blocks {
                    h = b.forward(&h)?;
                }
            }
            AsrEncoder::Conformer(blocks) => {
                add_positions(&mut h, 0);
                for b in blocks {
                    h = b.forward(&h)?;
                }
            }
        }
        Ok(h)
    }
}

/// Attention-style decoder over text tokens, reading the encoder output as
/// memory through CrossMamba or cross-attention.
#[derive(Clone, Debug)]
pub enum AsrDecoder {
    Mamba(Vec<MambaDecoderLayer>),
    Transformer(Vec<TransformerDecoderLayer>),
}

impl Params for AsrDecoder {
    fn visit_params(&self, f: &mut dyn FnMut(&[f32])) {
        match self {
            AsrDecoder::Mamba(l) => l.visit_params(f),
            AsrDecoder::Transformer(l) => l.visit_params(f),
        }
    }
    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut [f32])) {
        match self {
            AsrDecoder::Mamba(l) => l.visit_params_mut(f),
            AsrDecoder::Transformer(l) => l.visit_params_mut(f),
        }
    }
}

impl AsrDecoder {
    pub fn depth(&self) -> usize {
        match self {
            AsrDecoder::Mamba(l) => l.len(),
            AsrDecoder::Transformer(l) => l.len(),
        }
    }

    pub fn forward(&self, x: &FeatureSequence, memory: &FeatureSequence) -> Result<FeatureSequence> {
        let mut h = x.clone();
        match self {
            AsrDecoder::Mamba(layers) => {
                for l in layers {
                    h = l.forward(&h, Some(memory))?;
                }
            }
            AsrDecoder::Transformer(layers) => {
                add_positions(&mut h, 0);
                for l in layers {
                    h = l.forward(&h, Some(memory))?;
                }
            }
        }
        Ok(h)
    }
}

/// Spectrogram recognizer: frontend, encoder, a per-token output head, and
/// optionally a text decoder.
#[derive(Clone, Debug)]
pub struct AsrModel {
    pub frontend: Frontend,
    pub encoder: AsrEncoder,
    pub ctc_head: Linear,
    pub decoder: Option<(Embedding, AsrDecoder, LayerNorm, Linear)>,
}

impl Params for AsrModel {
    fn visit_params(&self, f: &mut dyn FnMut(&[f32])) {
        self.frontend.visit_params(f);
        self.encoder.visit_params(f);
        self.ctc_head.visit_params(f);
        if let Some((e, d, n, h)) = &self.decoder {
            e.visit_params(f);
            d.visit_params(f);
            n.visit_params(f);
            h.visit_params(f);
        }
    }
    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut [f32])) {
        self.frontend.visit_params_mut(f);
        self.encoder.visit_params_mut(f);
        self.ctc_head.visit_params_mut(f);
        if let Some((e, d, n, h)) = &mut self.decoder {
            e.visit_params_mut(f);
            d.visit_params_mut(f);
            n.visit_params_mut(f);
            h.visit_params_mut(f);
        }
    }
}

impl AsrModel {
    /// ConMamba encoder, with a Mamba decoder when `decoder_layers > 0`.
    pub fn conmamba(dim: usize, encoder_layers: usize, decoder_layers: usize, rng: &mut Rng) -> Self {
        let frontend = Frontend::random(dim, rng);
        let encoder = AsrEncoder::ConMamba((0..encoder_layers).map(|_| ConMambaBlock::random(dim, rng)).collect());
        let ctc_head = Linear::random(dim, TEXT_VOCAB, true, rng);
        let decoder = (decoder_layers > 0).then(|| {
            let layers = (0..decoder_layers).map(|_| MambaDecoderLayer::random(dim, true, true, rng)).collect();
            (
                Embedding::random(TEXT_VOCAB, dim, rng),
                AsrDecoder::Mamba(layers),
                LayerNorm::new(dim),
                Linear::random(dim, TEXT_VOCAB, true, rng),
            )
        });
        Self { frontend, encoder, ctc_head, decoder }
    }

    /// Conformer encoder, with a transformer decoder when `decoder_layers > 0`.
    pub fn conformer(dim: usize, heads: usize, encoder_layers: usize, decoder_layers: usize, rng: &mut Rng) -> Result<Self> {
        let frontend = Frontend::random(dim, rng);
        let blocks = (0..encoder_layers).map(|_| ConformerBlock::random(dim, heads, rng)).collect::<Result<_>>()?;
        let ctc_head = Linear::random(dim, TEXT_VOCAB, true, rng);
        let decoder = if decoder_layers > 0 {
            let layers = (0..decoder_layers)
                .map(|_| TransformerDecoderLayer::random(dim, heads, true, rng))
                .collect::<Result<_>>()?;
            Some((
                Embedding::random(TEXT_VOCAB, dim, rng),
                AsrDecoder::Transformer(layers),
                LayerNorm::new(dim),
                Linear::random(dim, TEXT_VOCAB, true, rng),
            ))
        } else {
            None
        };
        Ok(Self { frontend, encoder: AsrEncoder::Conformer(blocks), ctc_head, decoder })
    }

    /// Encoder output for a `frames × 80` spectrogram.
    pub fn encode(&self, spec: &FeatureSequence) -> Result<FeatureSequence> {
        self.encoder.forward(&self.frontend.forward(spec)?)
    }

    /// Per-token output logits from the encoder alone.
    pub fn ctc_logits(&self, spec: &FeatureSequence) -> Result<FeatureSequence> {
        self.ctc_head.forward(&self.encode(spec)?)
    }

    /// Teacher-forced decoder logits for `text` given the encoder output.
    pub fn decoder_logits(&self, memory: &FeatureSequence, text: &[u32]) -> Result<FeatureSequence> {
        let (emb, dec, norm, head) = self
            .decoder
            .as_ref()
            .ok_or_else(|| Error::Usage("model has no decoder".into()))?;
        let h = dec.forward(&emb.lookup(text)?, memory)?;
        head.forward(&norm.forward(&h)?)
    }
}

impl UsesSsm for AsrModel {
    fn set_evaluator(&mut self, eval: &SharedEvaluator) {
        if let AsrEncoder::ConMamba(b) = &mut self.encoder {
            b.set_evaluator(eval);
        }
        if let Some((_, AsrDecoder::Mamba(l), _, _)) = &mut self.decoder {
            l.set_evaluator(eval);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frontend_quarters_frames() {
        let mut rng = Rng::new(0);
        let f = Frontend::random(8, &mut rng);
        for frames in [1, 4, 5, 7, 8, 1000, 1001] {
            assert_eq!(f.tokens_for(frames), frames.div_ceil(4));
            let spec = FeatureSequence::random(frames, MEL_BINS, 1.0, &mut rng);
            assert_eq!(f.forward(&spec).unwrap().len(), frames.div_ceil(4));
        }
    }

    #[test]
    fn zeroed_submodules_reduce_to_layer_norm() {
        let mut rng = Rng::new(1);
        let mut b = ConMambaBlock::random(8, &mut rng);
        b.ff1.ff.zero_params();
        b.mamba.zero_params();
        b.conv.zero_params();
        b.ff2.ff.zero_params();
        let x = FeatureSequence::random(6, 8, 1.0, &mut rng);
        assert!(b.forward(&x).unwrap().bit_eq(&b.final_norm.forward(&x).unwrap()));
    }

    #[test]
    fn half_feedforward_scaling_identity() {
        let mut rng = Rng::new(2);
        let b = ConMambaBlock::random(8, &mut rng);
        let x = FeatureSequence::random(5, 8, 1.0, &mut rng);
        let mut b2 = b.clone();
        b2.ff1.ff.down.scale_params(2.0);
        b2.ff_scale = 0.25;
        let d = b.first_residual(&x).unwrap().max_abs_diff(&b2.first_residual(&x).unwrap());
        assert!(d < 1e-6);
    }

    #[test]
    fn encoders_and_decoders_shapes() {
        let mut rng = Rng::new(3);
        let spec = FeatureSequence::random(40, MEL_BINS, 1.0, &mut rng);
        let cm = AsrModel::conmamba(16, 2, 1, &mut rng);
        let cf = AsrModel::conformer(16, 2, 2, 1, &mut rng).unwrap();
        for m in [&cm, &cf] {
            let enc = m.encode(&spec).unwrap();
            assert_eq!((enc.len(), enc.dim()), (10, 16));
            assert_eq!(m.ctc_logits(&spec).unwrap().dim(), TEXT_VOCAB);
            assert_eq!(m.decoder_logits(&enc, &[1, 2, 3]).unwrap().len(), 3);
        }
    }
}

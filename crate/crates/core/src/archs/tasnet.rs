use crate::attention::{add_positions, TransformerEncoderLayer};
use crate::error::{Error, Result};
use crate::layers::MambaEncoderLayer;
use crate::params::{impl_params, Params};
use crate::seqcore::{relu_in_place, FeatureSequence, LayerNorm, Linear, Rng};
use crate::ssm::{SharedEvaluator, UsesSsm};

pub const SAMPLE_RATE: usize = 8000;
/// Encoder basis length in samples.
pub const WINDOW: usize = 16;
/// Encoder hop in samples: one token per millisecond at 8 kHz.
pub const STRIDE: usize = 8;

/// The mask estimation network between encoder and decoder.
#[derive(Clone, Debug)]
pub enum MaskNet {
    /// Single-path stack of bidirectional Mamba layers.
    Mamba(Vec<MambaEncoderLayer>),
    /// Single-path stack of transformer encoder layers with sinusoidal
    /// positions added to the encoded mixture.
    Transformer(Vec<TransformerEncoderLayer>),
}

impl Params for MaskNet {
    fn visit_params(&self, f: &mut dyn FnMut(&[f32])) {
        match self {
            MaskNet::Mamba(l) => l.visit_params(f),
            MaskNet::Transformer(l) => l.visit_params(f),
        }
    }
    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut [f32])) {
        match self {
            MaskNet::Mamba(l) => l.visit_params_mut(f),
            MaskNet::Transformer(l) => l.visit_params_mut(f),
        }
    }
}

impl MaskNet {
    pub fn depth(&self) -> usize {
        match self {
            MaskNet::Mamba(l) => l.len(),
            MaskNet::Transformer(l) => l.len(),
        }
    }

    pub fn forward(&self, x: &FeatureSequence) -> Result<FeatureSequence> {
        let mut h = x.clone();
        match self {
            MaskNet::Mamba(layers) => {
                for l in layers {
                    h = l.forward(&h)?;
                }
            }
            MaskNet::Transformer(layers) => {
                add_positions(&mut h, 0);
                for l in layers {
                    h = l.forward(&h)?;
                }
            }
        }
        Ok(h)
    }
}

/// Waveform separator: linear encoder, mask network, ReLU mask head and a
/// linear overlap-add decoder.
#[derive(Clone, Debug)]
pub struct TasNetModel {
    dim: usize,
    sources: usize,
    pub encoder: Linear,
    pub masknet: MaskNet,
    pub norm: LayerNorm,
    pub mask_head: Linear,
    pub decoder: Linear,
}

impl_params!(TasNetModel { encoder, masknet, norm, mask_head, decoder });

impl TasNetModel {
    pub fn new(dim: usize, sources: usize, masknet: MaskNet, rng: &mut Rng) -> Result<Self> {
        if sources < 1 {
            return Err(Error::Config("separation needs at least one source".into()));
        }
        Ok(Self {
            dim,
            sources,
            encoder: Linear::random(WINDOW, dim, true, rng),
            masknet,
            norm: LayerNorm::new(dim),
            mask_head: Linear::random(dim, sources * dim, true, rng),
            decoder: Linear::random(dim, WINDOW, false, rng),
        })
    }

    pub fn mamba(dim: usize, depth: usize, sources: usize, rng: &mut Rng) -> Result<Self> {
        let layers = (0..depth).map(|_| MambaEncoderLayer::random(dim, false, rng)).collect();
        Self::new(dim, sources, MaskNet::Mamba(layers), rng)
    }

    pub fn transformer(dim: usize, depth: usize, heads: usize, sources: usize, rng: &mut Rng) -> Result<Self> {
        let layers = (0..depth)
            .map(|_| TransformerEncoderLayer::random(dim, heads, rng))
            .collect::<Result<_>>()?;
        Self::new(dim, sources, MaskNet::Transformer(layers), rng)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn sources(&self) -> usize {
        self.sources
    }

    /// Token count for a waveform of `samples` samples.
    pub fn frames_for(samples: usize) -> usize {
        samples.div_ceil(STRIDE)
    }

    /// Encoded mixture: frame `t` covers samples `[8t, 8t + 16)`, zero padded.
    pub fn encode(&self, mix: &[f32]) -> Result<FeatureSequence> {
        if mix.len() < STRIDE {
            return Err(Error::Usage(format!("waveform needs at least {STRIDE} samples")));
        }
        let frames = Self::frames_for(mix.len());
        let mut out = FeatureSequence::zeros(frames, self.dim);
        let mut win = [0.0f32; WINDOW];
        for (t, row) in out.rows_mut().enumerate() {
            let start = t * STRIDE;
            for (i, w) in win.iter_mut().enumerate() {
                *w = mix.get(start + i).copied().unwrap_or(0.0);
            }
            self.encoder.forward_row(&win, row);
        }
        relu_in_place(out.as_mut_slice());
        Ok(out)
    }

    /// One non-negative mask per source, each `frames × dim`.
    pub fn masks(&self, encoded: &FeatureSequence) -> Result<Vec<FeatureSequence>> {
        let h = self.norm.forward(&self.masknet.forward(encoded)?)?;
        let mut m = self.mask_head.forward(&h)?;
        relu_in_place(m.as_mut_slice());
        let mut out: Vec<FeatureSequence> = Vec::with_capacity(self.sources);
        let mut rest = m;
        for _ in 1..self.sources {
            let (head, tail) = rest.split_channels(self.dim);
            out.push(head);
            rest = tail;
        }
        out.push(rest);
        Ok(out)
    }

    /// Overlap-add decoding truncated to `samples`.
    pub fn decode(&self, frames: &FeatureSequence, samples: usize) -> Result<Vec<f32>> {
        frames.check_dim(self.dim)?;
        let mut wave = vec![0.0f32; frames.len() * STRIDE + WINDOW];
        let mut seg = [0.0f32; WINDOW];
        for (t, row) in frames.rows().enumerate() {
            self.decoder.forward_row(row, &mut seg);
            for (w, s) in wave[t * STRIDE..t * STRIDE + WINDOW].iter_mut().zip(&seg) {
                *w += s;
            }
        }
        wave.truncate(samples);
        Ok(wave)
    }

    pub fn separate(&self, mix: &[f32]) -> Result<Vec<Vec<f32>>> {
        let enc = self.encode(mix)?;
        let masks = self.masks(&enc)?;
        self.apply_masks(mix.len(), &enc, &masks)
    }

    /// Separate with externally supplied masks in place of the mask network.
    pub fn separate_with_masks(&self, mix: &[f32], masks: &[FeatureSequence]) -> Result<Vec<Vec<f32>>> {
        let enc = self.encode(mix)?;
        self.apply_masks(mix.len(), &enc, masks)
    }

    fn apply_masks(&self, samples: usize, enc: &FeatureSequence, masks: &[FeatureSequence]) -> Result<Vec<Vec<f32>>> {
        masks
            .iter()
            .map(|m| {
                enc.check_same_shape(m)?;
                let mut masked = enc.clone();
                masked.as_mut_slice().iter_mut().zip(m.as_slice()).for_each(|(e, &k)| *e *= k);
                self.decode(&masked, samples)
            })
            .collect()
    }
}

impl UsesSsm for TasNetModel {
    fn set_evaluator(&mut self, eval: &SharedEvaluator) {
        if let MaskNet::Mamba(l) = &mut self.masknet {
            l.set_evaluator(eval);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wave(n: usize, rng: &mut Rng) -> Vec<f32> {
        (0..n).map(|_| rng.normal_f32() * 0.1).collect()
    }

    #[test]
    fn output_count_and_lengths() {
        let mut rng = Rng::new(0);
        let m = TasNetModel::mamba(8, 2, 2, &mut rng).unwrap();
        for n in [8, 13, 800, 8001] {
            let out = m.separate(&wave(n, &mut rng)).unwrap();
            assert_eq!(out.len(), 2);
            assert!(out.iter().all(|w| w.len() == n));
        }
        assert!(m.separate(&[0.0; 7]).unwrap_err().is_usage());
        assert!(matches!(TasNetModel::mamba(8, 1, 0, &mut rng), Err(Error::Config(_))));
    }

    #[test]
    fn masks_are_non_negative() {
        let mut rng = Rng::new(1);
        let m = TasNetModel::transformer(8, 1, 2, 3, &mut rng).unwrap();
        let enc = m.encode(&wave(400, &mut rng)).unwrap();
        let masks = m.masks(&enc).unwrap();
        assert_eq!(masks.len(), 3);
        assert!(masks.iter().all(|k| k.len() == 50 && k.as_slice().iter().all(|&v| v >= 0.0)));
    }

    #[test]
    fn forced_masks() {
        let mut rng = Rng::new(2);
        let m = TasNetModel::mamba(8, 1, 2, &mut rng).unwrap();
        let mix = wave(1000, &mut rng);
        let frames = TasNetModel::frames_for(mix.len());
        let ones = FeatureSequence::from_vec(frames, 8, vec![1.0; frames * 8]).unwrap();
        let zeros = FeatureSequence::zeros(frames, 8);
        let out = m.separate_with_masks(&mix, &[ones, zeros]).unwrap();
        let recon = m.decode(&m.encode(&mix).unwrap(), mix.len()).unwrap();
        assert_eq!(out[0], recon);
        assert!(out[1].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn ten_seconds_is_ten_thousand_tokens() {
        assert_eq!(TasNetModel::frames_for(10 * SAMPLE_RATE), 10_000);
    }
}

use std::fmt::Debug;

use crate::attention::{add_position_row, add_positions, TransformerDecoderLayer, TransformerDecoderState};
use crate::error::Result;
use crate::layers::{DecoderLayerState, MambaDecoderLayer};
use crate::params::{impl_params, Params};
use crate::seqcore::{FeatureSequence, LayerNorm, Rng};
use crate::ssm::{SharedEvaluator, UsesSsm};

/// Token-by-token evaluation of an autoregressive stack.
pub trait DecodeSession {
    /// Consume one embedded token and return the stack's output for it.
    fn step(&mut self, x: &[f32]) -> Result<Vec<f32>>;

    /// Tokens consumed so far.
    fn position(&self) -> usize;
}

/// A causal stack usable for autoregressive generation.
pub trait ArBackbone: Params + UsesSsm + Send + Sync + Debug {
    fn kind(&self) -> &'static str;

    fn dim(&self) -> usize;

    fn depth(&self) -> usize;

    /// Whole-sequence causal evaluation.
    fn forward(&self, x: &FeatureSequence) -> Result<FeatureSequence>;

    fn start(&self) -> Result<Box<dyn DecodeSession + '_>>;
}

/// Mamba decoder layers (with feedforward) and a final norm. Incremental
/// state per layer is a fixed-size SSM state plus a short conv window.
#[derive(Clone, Debug)]
pub struct MambaArStack {
    pub layers: Vec<MambaDecoderLayer>,
    pub norm: LayerNorm,
}

impl_params!(MambaArStack { layers, norm });

impl MambaArStack {
    pub fn random(dim: usize, depth: usize, feedforward: bool, rng: &mut Rng) -> Self {
        Self {
            layers: (0..depth).map(|_| MambaDecoderLayer::random(dim, false, feedforward, rng)).collect(),
            norm: LayerNorm::new(dim),
        }
    }
}

struct MambaSession<'a> {
    stack: &'a MambaArStack,
    states: Vec<DecoderLayerState>,
    position: usize,
}

impl DecodeSession for MambaSession<'_> {
    fn step(&mut self, x: &[f32]) -> Result<Vec<f32>> {
        let mut h = x.to_vec();
        for (l, st) in self.stack.layers.iter().zip(&mut self.states) {
            h = l.step(st, &h)?;
        }
        self.stack.norm.normalize_row(&mut h);
        self.position += 1;
        Ok(h)
    }

    fn position(&self) -> usize {
        self.position
    }
}

impl ArBackbone for MambaArStack {
    fn kind(&self) -> &'static str {
        "mamba"
    }

    fn dim(&self) -> usize {
        self.norm.dim()
    }

    fn depth(&self) -> usize {
        self.layers.len()
    }

    fn forward(&self, x: &FeatureSequence) -> Result<FeatureSequence> {
        let mut h = x.clone();
        for l in &self.layers {
            h = l.forward(&h, None)?;
        }
        self.norm.forward(&h)
    }

    fn start(&self) -> Result<Box<dyn DecodeSession + '_>> {
        let states = self.layers.iter().map(|l| l.start(None)).collect::<Result<_>>()?;
        Ok(Box::new(MambaSession { stack: self, states, position: 0 }))
    }
}

impl UsesSsm for MambaArStack {
    fn set_evaluator(&mut self, eval: &SharedEvaluator) {
        self.layers.set_evaluator(eval);
    }
}

/// Transformer decoder layers and a final norm, with sinusoidal positions
/// added at the input. Incremental state per layer is a growing KV cache.
#[derive(Clone, Debug)]
pub struct TransformerArStack {
    pub layers: Vec<TransformerDecoderLayer>,
    pub norm: LayerNorm,
}

impl_params!(TransformerArStack { layers, norm });

impl TransformerArStack {
    pub fn random(dim: usize, depth: usize, heads: usize, rng: &mut Rng) -> Result<Self> {
        Ok(Self {
            layers: (0..depth)
                .map(|_| TransformerDecoderLayer::random(dim, heads, false, rng))
                .collect::<Result<_>>()?,
            norm: LayerNorm::new(dim),
        })
    }
}

struct TransformerSession<'a> {
    stack: &'a TransformerArStack,
    states: Vec<TransformerDecoderState>,
    position: usize,
}

impl DecodeSession for TransformerSession<'_> {
    fn step(&mut self, x: &[f32]) -> Result<Vec<f32>> {
        let mut h = x.to_vec();
        add_position_row(&mut h, self.position);
        for (l, st) in self.stack.layers.iter().zip(&mut self.states) {
            h = l.step(st, &h)?;
        }
        self.stack.norm.normalize_row(&mut h);
        self.position += 1;
        Ok(h)
    }

    fn position(&self) -> usize {
        self.position
    }
}

impl ArBackbone for TransformerArStack {
    fn kind(&self) -> &'static str {
        "transformer"
    }

    fn dim(&self) -> usize {
        self.norm.dim()
    }

    fn depth(&self) -> usize {
        self.layers.len()
    }

    fn forward(&self, x: &FeatureSequence) -> Result<FeatureSequence> {
        let mut h = x.clone();
        add_positions(&mut h, 0);
        for l in &self.layers {
            h = l.forward(&h, None)?;
        }
        self.norm.forward(&h)
    }

    fn start(&self) -> Result<Box<dyn DecodeSession + '_>> {
        let states = self.layers.iter().map(|l| l.start(None)).collect::<Result<_>>()?;
        Ok(Box::new(TransformerSession { stack: self, states, position: 0 }))
    }
}

impl UsesSsm for TransformerArStack {
    fn set_evaluator(&mut self, _: &SharedEvaluator) {}
}

//! Sequence mixers behind one trait, registered by name and chosen at run
//! time: `uni_mamba`, `bi_mamba`, `self_attention`, `causal_attention`.

use std::fmt::Debug;

use crate::archs::DecodeSession;
use crate::attention::{attn_step, KvCache, MaskMode, MultiHeadAttention};
use crate::error::{Error, Result};
use crate::layers::{BiMambaBlock, MambaStepState, UniMambaBlock};
use crate::params::Params;
use crate::seqcore::{FeatureSequence, Rng};
use crate::ssm::{SharedEvaluator, UsesSsm};

/// A shape-preserving `L × D → L × D` token mixer.
pub trait SequenceModule: Params + UsesSsm + Send + Sync + Debug {
    fn name(&self) -> &'static str;

    fn dim(&self) -> usize;

    /// Whether output `t` depends only on inputs `..=t`.
    fn causal(&self) -> bool;

    fn forward(&self, x: &FeatureSequence) -> Result<FeatureSequence>;

    /// Token-by-token evaluation; only causal mixers support it.
    fn start_decode(&self) -> Result<Box<dyn DecodeSession + '_>> {
        Err(Error::Usage(format!("{} cannot decode incrementally", self.name())))
    }
}

impl SequenceModule for UniMambaBlock {
    fn name(&self) -> &'static str {
        "uni_mamba"
    }
    fn dim(&self) -> usize {
        UniMambaBlock::dim(self)
    }
    fn causal(&self) -> bool {
        true
    }
    fn forward(&self, x: &FeatureSequence) -> Result<FeatureSequence> {
        UniMambaBlock::forward(self, x)
    }
    fn start_decode(&self) -> Result<Box<dyn DecodeSession + '_>> {
        Ok(Box::new(UniSession { block: self, state: self.start() }))
    }
}

struct UniSession<'a> {
    block: &'a UniMambaBlock,
    state: MambaStepState,
}

impl DecodeSession for UniSession<'_> {
    fn step(&mut self, x: &[f32]) -> Result<Vec<f32>> {
        self.block.step(&mut self.state, x)
    }
    fn position(&self) -> usize {
        self.state.position()
    }
}

impl SequenceModule for BiMambaBlock {
    fn name(&self) -> &'static str {
        "bi_mamba"
    }
    fn dim(&self) -> usize {
        BiMambaBlock::dim(self)
    }
    fn causal(&self) -> bool {
        false
    }
    fn forward(&self, x: &FeatureSequence) -> Result<FeatureSequence> {
        BiMambaBlock::forward(self, x)
    }
}

/// Multi-head self-attention as a mixer, with or without the causal mask.
#[derive(Clone, Debug)]
pub struct AttentionMixer {
    pub attn: MultiHeadAttention,
    pub mask: MaskMode,
}

impl Params for AttentionMixer {
    fn visit_params(&self, f: &mut dyn FnMut(&[f32])) {
        self.attn.visit_params(f)
    }
    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut [f32])) {
        self.attn.visit_params_mut(f)
    }
}

impl UsesSsm for AttentionMixer {
    fn set_evaluator(&mut self, _: &SharedEvaluator) {}
}

impl SequenceModule for AttentionMixer {
    fn name(&self) -> &'static str {
        match self.mask {
            MaskMode::None => "self_attention",
            MaskMode::Causal => "causal_attention",
        }
    }
    fn dim(&self) -> usize {
        self.attn.dim()
    }
    fn causal(&self) -> bool {
        self.mask == MaskMode::Causal
    }
    fn forward(&self, x: &FeatureSequence) -> Result<FeatureSequence> {
        self.attn.self_attention(x, self.mask)
    }
    fn start_decode(&self) -> Result<Box<dyn DecodeSession + '_>> {
        if self.mask != MaskMode::Causal {
            return Err(Error::Usage("self_attention cannot decode incrementally".into()));
        }
        Ok(Box::new(AttnSession { attn: &self.attn, cache: KvCache::new(self.attn.dim()) }))
    }
}

struct AttnSession<'a> {
    attn: &'a MultiHeadAttention,
    cache: KvCache,
}

impl DecodeSession for AttnSession<'_> {
    fn step(&mut self, x: &[f32]) -> Result<Vec<f32>> {
        attn_step(self.attn, &mut self.cache, x)
    }
    fn position(&self) -> usize {
        self.cache.len()
    }
}

/// Construction parameters shared by all mixers.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MixerConfig {
    pub dim: usize,
    pub heads: usize,
}

pub type MixerFactory = fn(&MixerConfig, &mut Rng) -> Result<Box<dyn SequenceModule>>;

/// Name → constructor table for mixers.
#[derive(Clone)]
pub struct MixerRegistry {
    entries: Vec<(&'static str, MixerFactory)>,
}

impl Default for MixerRegistry {
    fn default() -> Self {
        Self::builtin()
    }
}

impl MixerRegistry {
    pub fn empty() -> Self {
        Self { entries: Vec::new() }
    }

    pub fn builtin() -> Self {
        let mut r = Self::empty();
        r.register("uni_mamba", |c, rng| Ok(Box::new(UniMambaBlock::random(c.dim, rng))));
        r.register("bi_mamba", |c, rng| Ok(Box::new(BiMambaBlock::random(c.dim, rng))));
        r.register("self_attention", |c, rng| {
            Ok(Box::new(AttentionMixer { attn: MultiHeadAttention::random(c.dim, c.heads, rng)?, mask: MaskMode::None }))
        });
        r.register("causal_attention", |c, rng| {
            Ok(Box::new(AttentionMixer { attn: MultiHeadAttention::random(c.dim, c.heads, rng)?, mask: MaskMode::Causal }))
        });
        r
    }

    /// Add or replace an entry.
    pub fn register(&mut self, name: &'static str, factory: MixerFactory) {
        match self.entries.iter_mut().find(|(n, _)| *n == name) {
            Some(e) => e.1 = factory,
            None => self.entries.push((name, factory)),
        }
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.iter().map(|(n, _)| *n).collect()
    }

    pub fn build(&self, name: &str, cfg: &MixerConfig, rng: &mut Rng) -> Result<Box<dyn SequenceModule>> {
        let (_, f) = self
            .entries
            .iter()
            .find(|(n, _)| *n == name)
            .ok_or_else(|| Error::Usage(format!("unknown mixer '{name}' (known: {})", self.names().join(", "))))?;
        f(cfg, rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_mixers_preserve_shape_and_report_causality() {
        let reg = MixerRegistry::builtin();
        let cfg = MixerConfig { dim: 8, heads: 2 };
        let mut rng = Rng::new(0);
        let x = FeatureSequence::random(12, 8, 1.0, &mut rng);
        for name in reg.names() {
            let m = reg.build(name, &cfg, &mut rng).unwrap();
            assert_eq!(m.name(), name);
            let y = m.forward(&x).unwrap();
            assert_eq!((y.len(), y.dim()), (12, 8));
            let mut x2 = x.clone();
            x2.row_mut(11)[0] += 1.0;
            let y2 = m.forward(&x2).unwrap();
            assert_eq!(m.causal(), y.prefix_bit_eq(&y2, 11), "{name}");
            assert_eq!(m.causal(), m.start_decode().is_ok());
        }
        assert!(reg.build("rnn", &cfg, &mut rng).unwrap_err().is_usage());
    }

    #[test]
    fn sessions_track_position() {
        let reg = MixerRegistry::builtin();
        let mut rng = Rng::new(1);
        for name in ["uni_mamba", "causal_attention"] {
            let m = reg.build(name, &MixerConfig { dim: 4, heads: 1 }, &mut rng).unwrap();
            let mut s = m.start_decode().unwrap();
            for _ in 0..5 {
                s.step(&[0.5; 4]).unwrap();
            }
            assert_eq!(s.position(), 5);
        }
    }
}

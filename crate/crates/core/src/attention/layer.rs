use super::cache::{attend_cached, attn_step, KvCache};
use super::mha::{MaskMode, MultiHeadAttention};
use crate::error::{shape_err, Error, Result};
use crate::layers::FfSublayer;
use crate::params::impl_params;
use crate::seqcore::{FeatureSequence, LayerNorm, Rng};

/// Pre-norm transformer encoder layer: `x + MHSA(LN(x))`, `x + FF(LN(x))`.
#[derive(Clone, Debug)]
pub struct TransformerEncoderLayer {
    pub norm: LayerNorm,
    pub attn: MultiHeadAttention,
    pub ff: FfSublayer,
}

impl_params!(TransformerEncoderLayer { norm, attn, ff });

impl TransformerEncoderLayer {
    pub fn random(dim: usize, heads: usize, rng: &mut Rng) -> Result<Self> {
        Ok(Self {
            norm: LayerNorm::new(dim),
            attn: MultiHeadAttention::random(dim, heads, rng)?,
            ff: FfSublayer::random(dim, rng),
        })
    }

    pub fn dim(&self) -> usize {
        self.attn.dim()
    }

    pub fn forward(&self, x: &FeatureSequence) -> Result<FeatureSequence> {
        let mut out = x.clone();
        let y = self.attn.self_attention(&self.norm.forward(x)?, MaskMode::None)?;
        out.add_scaled(&y, 1.0)?;
        self.ff.apply(&mut out, 1.0)?;
        Ok(out)
    }
}

/// Pre-norm transformer decoder layer: causal self-attention, optional
/// cross-attention over a memory, feedforward.
#[derive(Clone, Debug)]
pub struct TransformerDecoderLayer {
    pub norm: LayerNorm,
    pub attn: MultiHeadAttention,
    pub cross: Option<(LayerNorm, MultiHeadAttention)>,
    pub ff: FfSublayer,
}

impl_params!(TransformerDecoderLayer { norm, attn, cross, ff });

/// Incremental state of a transformer decoder layer.
#[derive(Clone, Debug)]
pub struct TransformerDecoderState {
    cache: KvCache,
    memory: Option<(FeatureSequence, FeatureSequence)>,
}

impl TransformerDecoderState {
    pub fn cache(&self) -> &KvCache {
        &self.cache
    }
}

impl TransformerDecoderLayer {
    pub fn random(dim: usize, heads: usize, cross: bool, rng: &mut Rng) -> Result<Self> {
        Ok(Self {
            norm: LayerNorm::new(dim),
            attn: MultiHeadAttention::random(dim, heads, rng)?,
            cross: if cross { Some((LayerNorm::new(dim), MultiHeadAttention::random(dim, heads, rng)?)) } else { None },
            ff: FfSublayer::random(dim, rng),
        })
    }

    pub fn dim(&self) -> usize {
        self.attn.dim()
    }

    pub fn forward(&self, x: &FeatureSequence, memory: Option<&FeatureSequence>) -> Result<FeatureSequence> {
        let mut out = x.clone();
        let y = self.attn.self_attention(&self.norm.forward(x)?, MaskMode::Causal)?;
        out.add_scaled(&y, 1.0)?;
        match (&self.cross, memory) {
            (Some((norm, attn)), Some(m)) => {
                let y = attn.cross_attention(&norm.forward(&out)?, m)?;
                out.add_scaled(&y, 1.0)?;
            }
            (None, Some(_)) => return Err(Error::Usage("decoder layer has no cross attention for memory".into())),
            _ => {}
        }
        self.ff.apply(&mut out, 1.0)?;
        Ok(out)
    }

    pub fn start(&self, memory: Option<&FeatureSequence>) -> Result<TransformerDecoderState> {
        let memory = match (&self.cross, memory) {
            (Some((_, attn)), Some(m)) => {
                if m.is_empty() {
                    return Err(Error::Usage("cross attention over an empty memory".into()));
                }
                Some(attn.project_memory(m)?)
            }
            (None, Some(_)) => return Err(Error::Usage("decoder layer has no cross attention for memory".into())),
            _ => None,
        };
        Ok(TransformerDecoderState { cache: KvCache::new(self.dim()), memory })
    }

    pub fn step(&self, st: &mut TransformerDecoderState, x: &[f32]) -> Result<Vec<f32>> {
        let d = self.dim();
        if x.len() != d {
            return Err(shape_err!("decoder step: token width {} for dim {d}", x.len()));
        }
        let mut out = x.to_vec();
        let mut n = out.clone();
        self.norm.normalize_row(&mut n);
        let y = attn_step(&self.attn, &mut st.cache, &n)?;
        out.iter_mut().zip(&y).for_each(|(a, b)| *a += b);
        if let (Some((norm, attn)), Some((k, v))) = (&self.cross, &st.memory) {
            let mut n = out.clone();
            norm.normalize_row(&mut n);
            let mut q = vec![0.0; d];
            attn.wq.forward_row(&n, &mut q);
            let mut ctx = vec![0.0; d];
            attend_cached(attn, &q, k.as_slice(), v.as_slice(), k.len(), &mut ctx);
            let mut y = vec![0.0; d];
            attn.wo.forward_row(&ctx, &mut y);
            out.iter_mut().zip(&y).for_each(|(a, b)| *a += b);
        }
        self.ff.apply_row(&mut out, 1.0);
        Ok(out)
    }
}

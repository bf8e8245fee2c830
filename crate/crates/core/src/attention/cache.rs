use super::mha::{mix_row, score_row, softmax_in_place, MultiHeadAttention};
use crate::error::{shape_err, Result};

/// Keys and values of every token consumed so far.
#[derive(Clone, Debug, Default)]
pub struct KvCache {
    dim: usize,
    keys: Vec<f32>,
    values: Vec<f32>,
    len: usize,
}

impl KvCache {
    pub fn new(dim: usize) -> Self {
        Self { dim, ..Self::default() }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Bytes held by stored keys and values.
    pub fn bytes(&self) -> usize {
        (self.keys.len() + self.values.len()) * std::mem::size_of::<f32>()
    }

    fn push(&mut self, k: &[f32], v: &[f32]) {
        self.keys.extend_from_slice(k);
        self.values.extend_from_slice(v);
        self.len += 1;
    }
}

/// Consume one token: append its key and value, attend over the whole cache.
/// Folding this over a sequence reproduces causal self-attention.
pub fn attn_step(attn: &MultiHeadAttention, cache: &mut KvCache, x: &[f32]) -> Result<Vec<f32>> {
    let d = attn.dim();
    if x.len() != d || cache.dim != d {
        return Err(shape_err!("attention step: token width {}, cache width {}, dim {d}", x.len(), cache.dim));
    }
    let (mut q, mut k, mut v) = (vec![0.0; d], vec![0.0; d], vec![0.0; d]);
    attn.wq.forward_row(x, &mut q);
    attn.wk.forward_row(x, &mut k);
    attn.wv.forward_row(x, &mut v);
    cache.push(&k, &v);
    let mut ctx = vec![0.0; d];
    attend_cached(attn, &q, &cache.keys, &cache.values, cache.len, &mut ctx);
    let mut y = vec![0.0; d];
    attn.wo.forward_row(&ctx, &mut y);
    Ok(y)
}

/// Context for one projected query over `n` stored keys/values.
pub(crate) fn attend_cached(attn: &MultiHeadAttention, q: &[f32], keys: &[f32], values: &[f32], n: usize, ctx: &mut [f32]) {
    let (d, dh) = (attn.dim(), attn.head_dim());
    let mut row = vec![0.0f32; n];
    for h in 0..attn.heads() {
        score_row(&q[h * dh..(h + 1) * dh], keys, d, h * dh, &mut row);
        softmax_in_place(&mut row);
        mix_row(&row, values, d, h * dh, &mut ctx[h * dh..(h + 1) * dh]);
    }
}

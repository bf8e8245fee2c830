use crate::error::{Error, Result};
use crate::params::impl_params;
use crate::seqcore::{FeatureSequence, Linear, Rng};

pub const DEFAULT_HEADS: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MaskMode {
    None,
    /// Query `i` sees keys `0..=i`.
    Causal,
}

/// Multi-head scaled dot-product attention with Q/K/V/output projections.
#[derive(Clone, Debug)]
pub struct MultiHeadAttention {
    dim: usize,
    heads: usize,
    pub wq: Linear,
    pub wk: Linear,
    pub wv: Linear,
    pub wo: Linear,
}

impl_params!(MultiHeadAttention { wq, wk, wv, wo });

impl MultiHeadAttention {
    pub fn random(dim: usize, heads: usize, rng: &mut Rng) -> Result<Self> {
        if heads == 0 || dim % heads != 0 {
            return Err(Error::Config(format!("dim {dim} is not divisible by {heads} heads")));
        }
        Ok(Self {
            dim,
            heads,
            wq: Linear::random(dim, dim, true, rng),
            wk: Linear::random(dim, dim, true, rng),
            wv: Linear::random(dim, dim, true, rng),
            wo: Linear::random(dim, dim, true, rng),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn heads(&self) -> usize {
        self.heads
    }

    pub fn head_dim(&self) -> usize {
        self.dim / self.heads
    }

    pub fn self_attention(&self, x: &FeatureSequence, mask: MaskMode) -> Result<FeatureSequence> {
        x.check_dim(self.dim)?;
        let q = self.wq.forward(x)?;
        let k = self.wk.forward(x)?;
        let v = self.wv.forward(x)?;
        let ctx = self.attend(&q, &k, &v, mask)?;
        self.wo.forward(&ctx)
    }

    /// Queries from `q_seq`, keys and values from `kv_seq`.
    pub fn cross_attention(&self, q_seq: &FeatureSequence, kv_seq: &FeatureSequence) -> Result<FeatureSequence> {
        if kv_seq.is_empty() {
            return Err(Error::Usage("cross attention over an empty key sequence".into()));
        }
        let (k, v) = self.project_memory(kv_seq)?;
        self.cross_attention_projected(q_seq, &k, &v)
    }

    /// Key and value projections of a memory sequence, for reuse across calls.
    pub fn project_memory(&self, m: &FeatureSequence) -> Result<(FeatureSequence, FeatureSequence)> {
        m.check_dim(self.dim)?;
        Ok((self.wk.forward(m)?, self.wv.forward(m)?))
    }

    pub(crate) fn cross_attention_projected(
        &self,
        q_seq: &FeatureSequence,
        k: &FeatureSequence,
        v: &FeatureSequence,
    ) -> Result<FeatureSequence> {
        q_seq.check_dim(self.dim)?;
        let q = self.wq.forward(q_seq)?;
        let ctx = self.attend(&q, k, v, MaskMode::None)?;
        self.wo.forward(&ctx)
    }

    /// Attention context before the output projection. The full
    /// `heads × Lq × Lk` score matrix is allocated and filled.
    fn attend(&self, q: &FeatureSequence, k: &FeatureSequence, v: &FeatureSequence, mask: MaskMode) -> Result<FeatureSequence> {
        let (lq, lk, dh) = (q.len(), k.len(), self.head_dim());
        let mut scores = vec![0.0f32; self.heads * lq * lk];
        let mut ctx = FeatureSequence::zeros(lq, self.dim);
        if lk == 0 {
            return Ok(ctx);
        }
        for h in 0..self.heads {
            for i in 0..lq {
                let row = &mut scores[(h * lq + i) * lk..(h * lq + i + 1) * lk];
                let n = match mask {
                    MaskMode::None => lk,
                    MaskMode::Causal => (i + 1).min(lk),
                };
                let qh = &q.row(i)[h * dh..(h + 1) * dh];
                score_row(qh, k.as_slice(), self.dim, h * dh, &mut row[..n]);
                softmax_in_place(&mut row[..n]);
                mix_row(&row[..n], v.as_slice(), self.dim, h * dh, &mut ctx.row_mut(i)[h * dh..(h + 1) * dh]);
            }
        }
        Ok(ctx)
    }
}

/// `row[j] = q · keys[j][off..off+len(q)] / √len(q)`.
pub(crate) fn score_row(q: &[f32], keys: &[f32], stride: usize, off: usize, row: &mut [f32]) {
    let scale = 1.0 / (q.len() as f64).sqrt();
    for (j, s) in row.iter_mut().enumerate() {
        let kj = &keys[j * stride + off..j * stride + off + q.len()];
        let dot: f64 = q.iter().zip(kj).map(|(&a, &b)| a as f64 * b as f64).sum();
        *s = (dot * scale) as f32;
    }
}

pub(crate) fn softmax_in_place(row: &mut [f32]) {
    let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max) as f64;
    let mut sum = 0.0f64;
    for s in row.iter_mut() {
        let e = (*s as f64 - max).exp();
        sum += e;
        *s = e as f32;
    }
    let inv = 1.0 / sum;
    row.iter_mut().for_each(|s| *s = (*s as f64 * inv) as f32);
}

/// `out = Σ_j p[j] · values[j][off..off+len(out)]`.
pub(crate) fn mix_row(p: &[f32], values: &[f32], stride: usize, off: usize, out: &mut [f32]) {
    let mut acc = vec![0.0f64; out.len()];
    for (j, &pj) in p.iter().enumerate() {
        let vj = &values[j * stride + off..j * stride + off + out.len()];
        acc.iter_mut().zip(vj).for_each(|(a, &v)| *a += pj as f64 * v as f64);
    }
    out.iter_mut().zip(&acc).for_each(|(o, &a)| *o = a as f32);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::naive_attention;

    #[test]
    fn heads_must_divide_dim() {
        let mut rng = Rng::new(0);
        assert!(matches!(MultiHeadAttention::random(10, 3, &mut rng), Err(Error::Config(_))));
    }

    #[test]
    fn single_token_returns_projected_value() {
        let mut rng = Rng::new(1);
        let m = MultiHeadAttention::random(8, 2, &mut rng).unwrap();
        let x = FeatureSequence::random(1, 8, 1.0, &mut rng);
        let y = m.self_attention(&x, MaskMode::None).unwrap();
        let want = m.wo.forward(&m.wv.forward(&x).unwrap()).unwrap();
        assert!(y.max_abs_diff(&want) < 1e-6);
    }

    #[test]
    fn uniform_values_give_equal_rows() {
        let mut rng = Rng::new(2);
        let mut m = MultiHeadAttention::random(8, 2, &mut rng).unwrap();
        m.wv.weight.fill(0.0);
        let x = FeatureSequence::random(5, 8, 1.0, &mut rng);
        let y = m.self_attention(&x, MaskMode::None).unwrap();
        for t in 1..5 {
            for (a, b) in y.row(t).iter().zip(y.row(0)) {
                assert!((a - b).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn matches_naive_oracle() {
        let mut rng = Rng::new(3);
        let m = MultiHeadAttention::random(8, 2, &mut rng).unwrap();
        let x = FeatureSequence::random(6, 8, 1.0, &mut rng);
        for mask in [MaskMode::None, MaskMode::Causal] {
            let y = m.self_attention(&x, mask).unwrap();
            let want = naive_attention(&m, &x, &x, mask == MaskMode::Causal);
            assert!(y.max_abs_diff(&want) < 1e-5);
        }
        let q = FeatureSequence::random(3, 8, 1.0, &mut rng);
        let kv = FeatureSequence::random(5, 8, 1.0, &mut rng);
        let y = m.cross_attention(&q, &kv).unwrap();
        assert_eq!(y.len(), 3);
        assert!(y.max_abs_diff(&naive_attention(&m, &q, &kv, false)) < 1e-5);
    }

    #[test]
    fn cross_attention_edge_cases() {
        let mut rng = Rng::new(4);
        let m = MultiHeadAttention::random(4, 1, &mut rng).unwrap();
        let q = FeatureSequence::random(3, 4, 1.0, &mut rng);
        assert!(m.cross_attention(&q, &FeatureSequence::zeros(0, 4)).unwrap_err().is_usage());
        let kv = FeatureSequence::random(1, 4, 1.0, &mut rng);
        let y = m.cross_attention(&q, &kv).unwrap();
        let v = m.wo.forward(&m.wv.forward(&kv).unwrap()).unwrap();
        for t in 0..3 {
            for (a, b) in y.row(t).iter().zip(v.row(0)) {
                assert!((a - b).abs() < 1e-6);
            }
        }
        for (lq, lk) in [(0, 2), (1, 7), (9, 3)] {
            let q = FeatureSequence::random(lq, 4, 1.0, &mut rng);
            let kv = FeatureSequence::random(lk, 4, 1.0, &mut rng);
            assert_eq!(m.cross_attention(&q, &kv).unwrap().len(), lq);
        }
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut rng = Rng::new(5);
        for n in [1, 2, 17, 300] {
            let mut row: Vec<f32> = (0..n).map(|_| 5.0 * rng.normal_f32()).collect();
            softmax_in_place(&mut row);
            let s: f64 = row.iter().map(|&v| v as f64).sum();
            assert!((s - 1.0).abs() < 1e-6);
        }
    }
}

//! Deliberately naive reference implementations, written for clarity and
//! independence from the optimized paths they check.

use crate::attention::MultiHeadAttention;
use crate::seqcore::{FeatureSequence, Linear};
use crate::ssm::SelectiveSsmParams;

/// Triple-loop `x·W + b` in `f64`.
pub fn naive_linear(x: &FeatureSequence, lin: &Linear) -> FeatureSequence {
    let (din, dout) = (lin.d_in(), lin.d_out());
    let mut out = FeatureSequence::zeros(x.len(), dout);
    for t in 0..x.len() {
        for o in 0..dout {
            let mut s = lin.bias.as_ref().map_or(0.0, |b| b[o] as f64);
            for i in 0..din {
                s += x.row(t)[i] as f64 * lin.weight[i * dout + o] as f64;
            }
            out.row_mut(t)[o] = s as f32;
        }
    }
    out
}

/// Per-head attention loop computed entirely in `f64`.
pub fn naive_attention(m: &MultiHeadAttention, q_seq: &FeatureSequence, kv_seq: &FeatureSequence, causal: bool) -> FeatureSequence {
    let f64s = |s: &FeatureSequence| -> Vec<Vec<f64>> { s.rows().map(|r| r.iter().map(|&v| v as f64).collect()).collect() };
    let proj = |x: &Vec<Vec<f64>>, lin: &Linear| -> Vec<Vec<f64>> {
        x.iter()
            .map(|r| {
                (0..lin.d_out())
                    .map(|o| {
                        lin.bias.as_ref().map_or(0.0, |b| b[o] as f64)
                            + (0..lin.d_in()).map(|i| r[i] * lin.weight[i * lin.d_out() + o] as f64).sum::<f64>()
                    })
                    .collect()
            })
            .collect()
    };
    let (xq, xkv) = (f64s(q_seq), f64s(kv_seq));
    let (q, k, v) = (proj(&xq, &m.wq), proj(&xkv, &m.wk), proj(&xkv, &m.wv));
    let (d, dh) = (m.dim(), m.head_dim());
    let mut ctx = vec![vec![0.0f64; d]; q.len()];
    for h in 0..m.heads() {
        let cols = h * dh..(h + 1) * dh;
        for i in 0..q.len() {
            let n = if causal { i + 1 } else { k.len() };
            let logits: Vec<f64> = (0..n)
                .map(|j| cols.clone().map(|c| q[i][c] * k[j][c]).sum::<f64>() / (dh as f64).sqrt())
                .collect();
            let mx = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = logits.iter().map(|l| (l - mx).exp()).sum();
            for (j, l) in logits.iter().enumerate() {
                let p = (l - mx).exp() / z;
                for c in cols.clone() {
                    ctx[i][c] += p * v[j][c];
                }
            }
        }
    }
    let y = proj(&ctx, &m.wo);
    let rows: Vec<Vec<f32>> = y.iter().map(|r| r.iter().map(|&v| v as f32).collect()).collect();
    if rows.is_empty() {
        return FeatureSequence::zeros(0, d);
    }
    FeatureSequence::from_rows(&rows).expect("rectangular")
}

/// Selective SSM computed from the raw parameters in `f64`: projections,
/// softplus, discretization and the recurrence, one token at a time.
pub fn naive_selective_ssm(x: &FeatureSequence, p: &SelectiveSsmParams) -> FeatureSequence {
    let (dim, n_st) = (p.dim(), p.state());
    let proj = |r: &[f32], lin: &Linear| -> Vec<f64> {
        (0..lin.d_out())
            .map(|o| {
                lin.bias.as_ref().map_or(0.0, |b| b[o] as f64)
                    + (0..lin.d_in()).map(|i| r[i] as f64 * lin.weight[i * lin.d_out() + o] as f64).sum::<f64>()
            })
            .collect()
    };
    let mut h = vec![vec![0.0f64; n_st]; dim];
    let mut y = FeatureSequence::zeros(x.len(), dim);
    for t in 0..x.len() {
        let r = x.row(t);
        let delta: Vec<f64> = proj(r, &p.w_delta).into_iter().map(|v| (1.0 + v.exp()).ln()).collect();
        let (b, c) = (proj(r, &p.w_b), proj(r, &p.w_c));
        for d in 0..dim {
            let mut acc = p.d_skip[d] as f64 * r[d] as f64;
            for n in 0..n_st {
                let a = -(p.a_log[d * n_st + n] as f64).exp();
                h[d][n] = (delta[d] * a).exp() * h[d][n] + delta[d] * b[n] * r[d] as f64;
                acc += c[n] * h[d][n];
            }
            y.row_mut(t)[d] = acc as f32;
        }
    }
    y
}

/// Causal depthwise convolution by direct summation; `kernel` is
/// `channels × width` with the last tap on the newest input.
pub fn naive_causal_conv(x: &FeatureSequence, kernel: &[f32], width: usize) -> FeatureSequence {
    let mut y = FeatureSequence::zeros(x.len(), x.dim());
    for t in 0..x.len() {
        for c in 0..x.dim() {
            let mut s = 0.0f64;
            for tap in 0..width {
                let back = width - 1 - tap;
                if t >= back {
                    s += kernel[c * width + tap] as f64 * x.row(t - back)[c] as f64;
                }
            }
            y.row_mut(t)[c] = s as f32;
        }
    }
    y
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seqcore::Rng;
    use crate::ssm::ssm_recurrence;

    #[test]
    fn naive_ssm_agrees_with_recurrence() {
        let mut rng = Rng::new(0);
        let p = SelectiveSsmParams::random(8, 16, &mut rng);
        let x = FeatureSequence::random(64, 8, 1.0, &mut rng);
        let err = naive_selective_ssm(&x, &p).max_abs_diff(&ssm_recurrence(&x, &p).unwrap());
        assert!(err < 1e-4, "{err}");
    }
}

use super::state::advance;
use crate::error::{Error, Result};
use crate::seqcore::FeatureSequence;

/// Time-invariant diagonal SSM with already discretized parameters:
/// `a_bar`, `b_bar` are `dim × state`, `c` is shared across channels.
#[derive(Clone, Debug)]
pub struct LtiSsm {
    pub dim: usize,
    pub state: usize,
    pub a_bar: Vec<f32>,
    pub b_bar: Vec<f32>,
    pub c: Vec<f32>,
    pub d_skip: Vec<f32>,
}

impl LtiSsm {
    pub fn new(dim: usize, state: usize, a_bar: Vec<f32>, b_bar: Vec<f32>, c: Vec<f32>, d_skip: Vec<f32>) -> Result<Self> {
        if dim == 0 || state == 0 || a_bar.len() != dim * state || b_bar.len() != dim * state || c.len() != state || d_skip.len() != dim {
            return Err(Error::Shape(format!("LTI SSM needs {dim}x{state} a/b, {state} c, {dim} skip")));
        }
        Ok(Self { dim, state, a_bar, b_bar, c, d_skip })
    }

    /// One channel, one mode: `h = a h + b x`, `y = c h + d x`.
    pub fn scalar(a: f32, b: f32, c: f32, d: f32) -> Self {
        Self { dim: 1, state: 1, a_bar: vec![a], b_bar: vec![b], c: vec![c], d_skip: vec![d] }
    }

    /// Sequential evaluation from a zero state.
    pub fn recurrence(&self, x: &FeatureSequence) -> Result<FeatureSequence> {
        x.check_dim(self.dim)?;
        let mut h = vec![0.0f64; self.dim * self.state];
        let mut y = FeatureSequence::zeros(x.len(), self.dim);
        for (xr, yr) in x.rows().zip(y.rows_mut()) {
            advance(&mut h, &self.a_bar, &self.b_bar, &self.c, &self.d_skip, xr, yr, self.state);
        }
        Ok(y)
    }
}

/// Unrolled kernel `K[d][k] = Σ_n c[n]·a[d][n]^k·b[d][n]` for `k < len`,
/// `dim × len` row-major.
pub fn lti_kernel(p: &LtiSsm, len: usize) -> Vec<f64> {
    let mut k = vec![0.0f64; p.dim * len];
    for d in 0..p.dim {
        let lane = d * p.state..(d + 1) * p.state;
        let a: Vec<f64> = p.a_bar[lane.clone()].iter().map(|&v| v as f64).collect();
        let mut pw: Vec<f64> = p.b_bar[lane].iter().zip(&p.c).map(|(&b, &c)| b as f64 * c as f64).collect();
        for j in 0..len {
            k[d * len + j] = pw.iter().sum();
            pw.iter_mut().zip(&a).for_each(|(v, &a)| *v *= a);
        }
    }
    k
}

/// Evaluate a time-invariant SSM as a causal convolution of `x` with its
/// unrolled kernel. Quadratic in `len`; a cross-check, not a fast path.
pub fn ssm_kernel_conv(x: &FeatureSequence, p: &LtiSsm) -> Result<FeatureSequence> {
    x.check_dim(p.dim)?;
    let len = x.len();
    let k = lti_kernel(p, len);
    let mut y = FeatureSequence::zeros(len, p.dim);
    for t in 0..len {
        for d in 0..p.dim {
            let kd = &k[d * len..(d + 1) * len];
            let mut acc = p.d_skip[d] as f64 * x.row(t)[d] as f64;
            for j in 0..=t {
                acc += kd[j] * x.row(t - j)[d] as f64;
            }
            y.row_mut(t)[d] = acc as f32;
        }
    }
    Ok(y)
}

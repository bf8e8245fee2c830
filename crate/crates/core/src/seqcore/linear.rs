use crate::error::{shape_err, Result};
use crate::params::Params;
use crate::seqcore::{FeatureSequence, Rng};

/// Dense projection `out[t] = x[t] · W + b`, with `W` stored `d_in × d_out`
/// row-major. Dot products accumulate in `f64`.
#[derive(Clone, Debug)]
pub struct Linear {
    d_in: usize,
    d_out: usize,
    pub weight: Vec<f32>,
    pub bias: Option<Vec<f32>>,
}

impl Linear {
    pub fn new(d_in: usize, d_out: usize, weight: Vec<f32>, bias: Option<Vec<f32>>) -> Result<Self> {
        if d_in == 0 || d_out == 0 {
            return Err(shape_err!("linear dimensions must be positive"));
        }
        if weight.len() != d_in * d_out {
            return Err(shape_err!(
                "weight has {} entries, expected {d_in}x{d_out}",
                weight.len()
            ));
        }
        if let Some(b) = &bias {
            if b.len() != d_out {
                return Err(shape_err!("bias has {} entries, expected {d_out}", b.len()));
            }
        }
        Ok(Self { d_in, d_out, weight, bias })
    }

    pub fn zeros(d_in: usize, d_out: usize, with_bias: bool) -> Self {
        Self::new(d_in, d_out, vec![0.0; d_in * d_out], with_bias.then(|| vec![0.0; d_out]))
            .expect("positive dimensions")
    }

    /// Weights `N(0, 1/d_in)`, zero bias.
    pub fn random(d_in: usize, d_out: usize, with_bias: bool, rng: &mut Rng) -> Self {
        let std = 1.0 / (d_in as f64).sqrt();
        let mut l = Self::zeros(d_in, d_out, with_bias);
        l.weight.iter_mut().for_each(|w| *w = (rng.normal() * std) as f32);
        l
    }

    pub fn d_in(&self) -> usize {
        self.d_in
    }

    pub fn d_out(&self) -> usize {
        self.d_out
    }

    pub fn forward(&self, x: &FeatureSequence) -> Result<FeatureSequence> {
        x.check_dim(self.d_in)?;
        let mut out = FeatureSequence::zeros(x.len(), self.d_out);
        let mut acc = vec![0.0f64; self.d_out];
        for (xr, or) in x.rows().zip(out.rows_mut()) {
            self.row_with(xr, or, &mut acc);
        }
        Ok(out)
    }

    /// Single-token projection. Produces exactly the bits `forward` produces
    /// for the same row.
    pub fn forward_row(&self, x: &[f32], out: &mut [f32]) {
        let mut acc = vec![0.0f64; self.d_out];
        self.row_with(x, out, &mut acc);
    }

    pub(crate) fn row_with(&self, x: &[f32], out: &mut [f32], acc: &mut [f64]) {
        debug_assert_eq!(x.len(), self.d_in);
        debug_assert_eq!(out.len(), self.d_out);
        match &self.bias {
            Some(b) => acc.iter_mut().zip(b).for_each(|(a, &b)| *a = b as f64),
            None => acc.fill(0.0),
        }
        for (&xi, wrow) in x.iter().zip(self.weight.chunks_exact(self.d_out)) {
            let xi = xi as f64;
            for (a, &w) in acc.iter_mut().zip(wrow) {
                *a += xi * w as f64;
            }
        }
        out.iter_mut().zip(acc.iter()).for_each(|(o, &a)| *o = a as f32);
    }
}

impl Params for Linear {
    fn visit_params(&self, f: &mut dyn FnMut(&[f32])) {
        f(&self.weight);
        if let Some(b) = &self.bias {
            f(b);
        }
    }
    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut [f32])) {
        f(&mut self.weight);
        if let Some(b) = &mut self.bias {
            f(b);
        }
    }
}

/// Free-function form of [`Linear::forward`] over borrowed weights.
pub fn linear(x: &FeatureSequence, weight: &[f32], d_out: usize, bias: Option<&[f32]>) -> Result<FeatureSequence> {
    let layer = Linear::new(x.dim(), d_out, weight.to_vec(), bias.map(<[f32]>::to_vec))?;
    layer.forward(x)
}

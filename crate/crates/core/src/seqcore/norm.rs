use crate::error::{shape_err, Result};
use crate::params::Params;
use crate::seqcore::FeatureSequence;

pub const DEFAULT_LN_EPS: f32 = 1e-5;

/// Per-token layer normalization with learned gain and bias.
#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub gain: Vec<f32>,
    pub bias: Vec<f32>,
    pub eps: f32,
}

impl LayerNorm {
    pub fn new(dim: usize) -> Self {
        Self {
            gain: vec![1.0; dim],
            bias: vec![0.0; dim],
            eps: DEFAULT_LN_EPS,
        }
    }

    pub fn dim(&self) -> usize {
        self.gain.len()
    }

    pub fn forward(&self, x: &FeatureSequence) -> Result<FeatureSequence> {
        x.check_dim(self.dim())?;
        let mut out = x.clone();
        for row in out.rows_mut() {
            self.normalize_row(row);
        }
        Ok(out)
    }

    pub fn normalize_row(&self, row: &mut [f32]) {
        let n = row.len() as f64;
        let mean = row.iter().map(|&v| v as f64).sum::<f64>() / n;
        let var = row.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n;
        let inv = 1.0 / (var + self.eps as f64).sqrt();
        for ((v, &g), &b) in row.iter_mut().zip(&self.gain).zip(&self.bias) {
            *v = ((*v as f64 - mean) * inv * g as f64 + b as f64) as f32;
        }
    }
}

impl Params for LayerNorm {
    fn visit_params(&self, f: &mut dyn FnMut(&[f32])) {
        f(&self.gain);
        f(&self.bias);
    }
    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut [f32])) {
        f(&mut self.gain);
        f(&mut self.bias);
    }
}

pub fn layer_norm(x: &FeatureSequence, gain: &[f32], bias: &[f32], eps: f32) -> Result<FeatureSequence> {
    if gain.len() != bias.len() {
        return Err(shape_err!("gain/bias length mismatch"));
    }
    if eps <= 0.0 {
        return Err(crate::Error::Usage("layer_norm eps must be positive".into()));
    }
    LayerNorm {
        gain: gain.to_vec(),
        bias: bias.to_vec(),
        eps,
    }
    .forward(x)
}

use crate::error::{shape_err, Result};
use crate::seqcore::FeatureSequence;

#[inline]
pub fn sigmoid(x: f32) -> f32 {
    1.0 / (1.0 + (-x).exp())
}

#[inline]
pub fn silu_scalar(x: f32) -> f32 {
    x * sigmoid(x)
}

/// `ln(1 + e^x)`, evaluated in `f64` and clamped to the smallest positive
/// normal `f32` so the result is always strictly positive.
#[inline]
pub fn softplus(x: f32) -> f32 {
    let x = x as f64;
    let y = if x > 30.0 { x } else { x.exp().ln_1p() };
    (y as f32).max(f32::MIN_POSITIVE)
}

pub fn silu(x: &FeatureSequence) -> FeatureSequence {
    x.map(silu_scalar)
}

pub fn silu_in_place(x: &mut [f32]) {
    x.iter_mut().for_each(|v| *v = silu_scalar(*v));
}

pub fn relu(x: &FeatureSequence) -> FeatureSequence {
    x.map(|v| v.max(0.0))
}

pub fn relu_in_place(x: &mut [f32]) {
    x.iter_mut().for_each(|v| *v = v.max(0.0));
}

/// `a ⊙ silu(b)`: the multiplicative gate of a Mamba block.
pub fn gated_mult(a: &FeatureSequence, gate: &FeatureSequence) -> Result<FeatureSequence> {
    if a.len() != gate.len() || a.dim() != gate.dim() {
        return Err(shape_err!(
            "gated_mult: {}x{} vs {}x{}",
            a.len(),
            a.dim(),
            gate.len(),
            gate.dim()
        ));
    }
    let data = a
        .as_slice()
        .iter()
        .zip(gate.as_slice())
        .map(|(&v, &g)| v * silu_scalar(g))
        .collect();
    FeatureSequence::from_vec(a.len(), a.dim(), data)
}

use crate::error::Result;
use crate::params::impl_params;
use crate::seqcore::{silu_in_place, FeatureSequence, LayerNorm, Linear, Rng};

/// Hidden width of a feedforward module relative to the model width.
pub const FF_MULT: usize = 4;

/// `down(SiLU(up(x)))` with hidden width `FF_MULT · dim`.
#[derive(Clone, Debug)]
pub struct FeedForward {
    pub up: Linear,
    pub down: Linear,
}

impl_params!(FeedForward { up, down });

impl FeedForward {
    pub fn random(dim: usize, rng: &mut Rng) -> Self {
        Self {
            up: Linear::random(dim, FF_MULT * dim, true, rng),
            down: Linear::random(FF_MULT * dim, dim, true, rng),
        }
    }

    pub fn forward(&self, x: &FeatureSequence) -> Result<FeatureSequence> {
        let mut h = self.up.forward(x)?;
        silu_in_place(h.as_mut_slice());
        self.down.forward(&h)
    }

    pub fn forward_row(&self, x: &[f32]) -> Vec<f32> {
        let mut h = vec![0.0; self.up.d_out()];
        self.up.forward_row(x, &mut h);
        silu_in_place(&mut h);
        let mut y = vec![0.0; self.down.d_out()];
        self.down.forward_row(&h, &mut y);
        y
    }
}

/// Pre-norm residual feedforward: `x + scale · FF(LN(x))`.
#[derive(Clone, Debug)]
pub struct FfSublayer {
    pub norm: LayerNorm,
    pub ff: FeedForward,
}

impl_params!(FfSublayer { norm, ff });

impl FfSublayer {
    pub fn random(dim: usize, rng: &mut Rng) -> Self {
        Self { norm: LayerNorm::new(dim), ff: FeedForward::random(dim, rng) }
    }

    pub fn apply(&self, x: &mut FeatureSequence, scale: f32) -> Result<()> {
        let y = self.ff.forward(&self.norm.forward(x)?)?;
        x.add_scaled(&y, scale)
    }

    pub fn apply_row(&self, x: &mut [f32], scale: f32) {
        let mut n = x.to_vec();
        self.norm.normalize_row(&mut n);
        let y = self.ff.forward_row(&n);
        add_row(x, &y, scale);
    }
}

/// Row form of [`FeatureSequence::add_scaled`], with the same arithmetic.
pub(crate) fn add_row(x: &mut [f32], y: &[f32], scale: f32) {
    if scale == 1.0 {
        x.iter_mut().zip(y).for_each(|(a, b)| *a += b);
    } else {
        x.iter_mut().zip(y).for_each(|(a, b)| *a += scale * b);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::Params;

    #[test]
    fn row_matches_batch() {
        let mut rng = Rng::new(0);
        let sub = FfSublayer::random(8, &mut rng);
        let x = FeatureSequence::random(4, 8, 1.0, &mut rng);
        let mut batch = x.clone();
        sub.apply(&mut batch, 0.5).unwrap();
        for t in 0..4 {
            let mut r = x.row(t).to_vec();
            sub.apply_row(&mut r, 0.5);
            assert_eq!(r.as_slice(), batch.row(t));
        }
        assert_eq!(sub.ff.param_count(), 8 * 32 + 32 + 32 * 8 + 8);
    }
}

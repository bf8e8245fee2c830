use super::cross::cross_mamba;
use super::feedforward::{add_row, FfSublayer};
use super::mamba::{BiMambaBlock, MambaStepState, UniMambaBlock};
use crate::error::{shape_err, Error, Result};
use crate::params::impl_params;
use crate::seqcore::{FeatureSequence, LayerNorm, Rng};
use crate::ssm::{SharedEvaluator, UsesSsm};

/// Pre-norm bidirectional Mamba layer: `x + BiMamba(LN(x))`, then optionally
/// `x + FF(LN(x))`.
#[derive(Clone, Debug)]
pub struct MambaEncoderLayer {
    pub norm: LayerNorm,
    pub block: BiMambaBlock,
    pub ff: Option<FfSublayer>,
}

impl_params!(MambaEncoderLayer { norm, block, ff });

impl MambaEncoderLayer {
    pub fn random(dim: usize, feedforward: bool, rng: &mut Rng) -> Self {
        Self {
            norm: LayerNorm::new(dim),
            block: BiMambaBlock::random(dim, rng),
            ff: feedforward.then(|| FfSublayer::random(dim, rng)),
        }
    }

    pub fn dim(&self) -> usize {
        self.block.dim()
    }

    pub fn forward(&self, x: &FeatureSequence) -> Result<FeatureSequence> {
        let mut out = x.clone();
        let y = self.block.forward(&self.norm.forward(x)?)?;
        out.add_scaled(&y, 1.0)?;
        if let Some(ff) = &self.ff {
            ff.apply(&mut out, 1.0)?;
        }
        Ok(out)
    }
}

impl UsesSsm for MambaEncoderLayer {
    fn set_evaluator(&mut self, eval: &SharedEvaluator) {
        self.block.set_evaluator(eval);
    }
}

/// Normalization plus the CrossMamba block of a decoder layer.
#[derive(Clone, Debug)]
pub struct CrossSublayer {
    pub norm: LayerNorm,
    pub block: UniMambaBlock,
}

impl_params!(CrossSublayer { norm, block });

/// Pre-norm unidirectional Mamba layer: `x + Mamba(LN(x))`, then with memory
/// `x + CrossMamba(memory, LN(x))`, then optionally `x + FF(LN(x))`.
#[derive(Clone, Debug)]
pub struct MambaDecoderLayer {
    pub norm: LayerNorm,
    pub block: UniMambaBlock,
    pub cross: Option<CrossSublayer>,
    pub ff: Option<FfSublayer>,
}

impl_params!(MambaDecoderLayer { norm, block, cross, ff });

/// Incremental state of a decoder layer.
#[derive(Clone, Debug)]
pub struct DecoderLayerState {
    self_state: MambaStepState,
    cross_state: Option<MambaStepState>,
}

impl DecoderLayerState {
    pub fn position(&self) -> usize {
        self.self_state.position()
    }
}

impl MambaDecoderLayer {
    pub fn random(dim: usize, cross: bool, feedforward: bool, rng: &mut Rng) -> Self {
        Self {
            norm: LayerNorm::new(dim),
            block: UniMambaBlock::random(dim, rng),
            cross: cross.then(|| CrossSublayer { norm: LayerNorm::new(dim), block: UniMambaBlock::random(dim, rng) }),
            ff: feedforward.then(|| FfSublayer::random(dim, rng)),
        }
    }

    pub fn dim(&self) -> usize {
        self.block.dim()
    }

    /// Without memory the cross sub-block is skipped.
    pub fn forward(&self, x: &FeatureSequence, memory: Option<&FeatureSequence>) -> Result<FeatureSequence> {
        let mut out = x.clone();
        let y = self.block.forward(&self.norm.forward(x)?)?;
        out.add_scaled(&y, 1.0)?;
        match (&self.cross, memory) {
            (Some(c), Some(m)) => {
                let y = cross_mamba(&c.block, m, &c.norm.forward(&out)?)?;
                out.add_scaled(&y, 1.0)?;
            }
            (None, Some(_)) => return Err(Error::Usage("decoder layer has no cross block for memory".into())),
            _ => {}
        }
        if let Some(ff) = &self.ff {
            ff.apply(&mut out, 1.0)?;
        }
        Ok(out)
    }

    /// Fresh incremental state; memory, if any, is absorbed into the cross
    /// block's state up front.
    pub fn start(&self, memory: Option<&FeatureSequence>) -> Result<DecoderLayerState> {
        let cross_state = match (&self.cross, memory) {
            (Some(c), Some(m)) => {
                m.check_dim(self.dim())?;
                let mut st = c.block.start();
                for row in m.rows() {
                    c.block.step(&mut st, row)?;
                }
                Some(st)
            }
            (None, Some(_)) => return Err(Error::Usage("decoder layer has no cross block for memory".into())),
            _ => None,
        };
        Ok(DecoderLayerState { self_state: self.block.start(), cross_state })
    }

    pub fn step(&self, st: &mut DecoderLayerState, x: &[f32]) -> Result<Vec<f32>> {
        if x.len() != self.dim() {
            return Err(shape_err!("decoder step: token width {} for dim {}", x.len(), self.dim()));
        }
        let mut out = x.to_vec();
        let mut n = out.clone();
        self.norm.normalize_row(&mut n);
        let y = self.block.step(&mut st.self_state, &n)?;
        add_row(&mut out, &y, 1.0);
        if let (Some(c), Some(cs)) = (&self.cross, st.cross_state.as_mut()) {
            let mut n = out.clone();
            c.norm.normalize_row(&mut n);
            let y = c.block.step(cs, &n)?;
            add_row(&mut out, &y, 1.0);
        }
        if let Some(ff) = &self.ff {
            ff.apply_row(&mut out, 1.0);
        }
        Ok(out)
    }
}

impl UsesSsm for MambaDecoderLayer {
    fn set_evaluator(&mut self, eval: &SharedEvaluator) {
        self.block.set_evaluator(eval);
        if let Some(c) = &mut self.cross {
            c.block.set_evaluator(eval);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::Params;
    use crate::ssm::Recurrence;
    use std::sync::Arc;

    #[test]
    fn zeroed_blocks_are_identity() {
        let mut rng = Rng::new(0);
        let x = FeatureSequence::random(9, 8, 1.0, &mut rng);
        let mut enc = MambaEncoderLayer::random(8, true, &mut rng);
        enc.block.zero_params();
        enc.ff.as_mut().unwrap().ff.zero_params();
        assert!(enc.forward(&x).unwrap().bit_eq(&x));
        let mut dec = MambaDecoderLayer::random(8, true, true, &mut rng);
        dec.zero_params();
        let m = FeatureSequence::random(4, 8, 1.0, &mut rng);
        assert!(dec.forward(&x, Some(&m)).unwrap().bit_eq(&x));
    }

    #[test]
    fn decoder_without_memory_is_plain_residual_mamba() {
        let mut rng = Rng::new(1);
        let dec = MambaDecoderLayer::random(6, true, false, &mut rng);
        let x = FeatureSequence::random(7, 6, 1.0, &mut rng);
        let mut want = x.clone();
        want.add_scaled(&dec.block.forward(&dec.norm.forward(&x).unwrap()).unwrap(), 1.0).unwrap();
        assert!(dec.forward(&x, None).unwrap().bit_eq(&want));
    }

    #[test]
    fn step_fold_matches_batch_with_memory() {
        let mut rng = Rng::new(2);
        let mut dec = MambaDecoderLayer::random(6, true, true, &mut rng);
        dec.set_evaluator(&(Arc::new(Recurrence) as SharedEvaluator));
        let x = FeatureSequence::random(10, 6, 1.0, &mut rng);
        let m = FeatureSequence::random(5, 6, 1.0, &mut rng);
        let batch = dec.forward(&x, Some(&m)).unwrap();
        let mut st = dec.start(Some(&m)).unwrap();
        for t in 0..10 {
            assert_eq!(dec.step(&mut st, x.row(t)).unwrap().as_slice(), batch.row(t));
        }
    }

    #[test]
    fn memory_without_cross_block_is_rejected() {
        let mut rng = Rng::new(3);
        let dec = MambaDecoderLayer::random(4, false, false, &mut rng);
        let x = FeatureSequence::random(2, 4, 1.0, &mut rng);
        assert!(dec.forward(&x, Some(&x)).unwrap_err().is_usage());
    }
}

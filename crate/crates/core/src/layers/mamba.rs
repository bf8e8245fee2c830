use crate::error::{shape_err, Result};
use crate::params::impl_params;
use crate::seqcore::{silu_in_place, silu_scalar, DepthwiseConv1d, FeatureSequence, Linear, Padding, Rng, DEFAULT_CONV_WIDTH};
use crate::ssm::{default_evaluator, SelectiveSsmParams, SharedEvaluator, SsmState, UsesSsm, DEFAULT_STATE_SIZE};

/// Inner width of a Mamba block relative to the model width.
pub const EXPANSION: usize = 2;

/// Causal conv → SiLU → selective SSM over the inner channels.
#[derive(Clone, Debug)]
pub struct MambaBranch {
    pub conv: DepthwiseConv1d,
    pub ssm: SelectiveSsmParams,
}

impl_params!(MambaBranch { conv, ssm });

/// Incremental state of one branch: the conv look-back window and the SSM
/// hidden state.
#[derive(Clone, Debug)]
pub struct BranchState {
    window: Vec<f32>,
    ssm: SsmState,
}

impl BranchState {
    pub fn ssm(&self) -> &SsmState {
        &self.ssm
    }
}

impl MambaBranch {
    pub fn random(inner: usize, state: usize, conv_width: usize, rng: &mut Rng) -> Self {
        Self {
            conv: DepthwiseConv1d::random(inner, conv_width, Padding::Causal, true, rng),
            ssm: SelectiveSsmParams::random(inner, state, rng),
        }
    }

    pub fn forward(&self, u: &FeatureSequence, eval: &SharedEvaluator) -> Result<FeatureSequence> {
        let mut c = self.conv.forward(u)?;
        silu_in_place(c.as_mut_slice());
        eval.selective(&c, &self.ssm)
    }

    pub fn start(&self) -> BranchState {
        BranchState {
            window: vec![0.0; (self.conv.width() - 1) * self.conv.channels()],
            ssm: SsmState::new(&self.ssm),
        }
    }

    pub fn step(&self, st: &mut BranchState, u: &[f32]) -> Result<Vec<f32>> {
        let mut c = vec![0.0; u.len()];
        self.conv.step(&mut st.window, u, &mut c);
        silu_in_place(&mut c);
        st.ssm.step(&self.ssm, &c)
    }
}

fn check_width(x: &FeatureSequence, dim: usize) -> Result<()> {
    x.check_dim(dim)
}

fn gate_into(main: &mut [f32], gate: &[f32]) {
    main.iter_mut().zip(gate).for_each(|(v, &g)| *v *= silu_scalar(g));
}

/// Unidirectional (causal) Mamba block.
#[derive(Clone, Debug)]
pub struct UniMambaBlock {
    dim: usize,
    inner: usize,
    pub in_proj: Linear,
    pub branch: MambaBranch,
    pub out_proj: Linear,
    eval: SharedEvaluator,
}

impl_params!(UniMambaBlock { in_proj, branch, out_proj });

/// Incremental state of a unidirectional block.
#[derive(Clone, Debug)]
pub struct MambaStepState {
    branch: BranchState,
}

impl MambaStepState {
    /// Tokens absorbed so far.
    pub fn position(&self) -> usize {
        self.branch.ssm.position()
    }

    pub fn branch(&self) -> &BranchState {
        &self.branch
    }
}

impl UniMambaBlock {
    pub fn random(dim: usize, rng: &mut Rng) -> Self {
        Self::with_sizes(dim, EXPANSION * dim, DEFAULT_STATE_SIZE, DEFAULT_CONV_WIDTH, rng)
    }

    pub fn with_sizes(dim: usize, inner: usize, state: usize, conv_width: usize, rng: &mut Rng) -> Self {
        Self {
            dim,
            inner,
            in_proj: Linear::random(dim, 2 * inner, false, rng),
            branch: MambaBranch::random(inner, state, conv_width, rng),
            out_proj: Linear::random(inner, dim, false, rng),
            eval: default_evaluator(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn inner(&self) -> usize {
        self.inner
    }

    pub fn evaluator(&self) -> &SharedEvaluator {
        &self.eval
    }

    pub fn forward(&self, x: &FeatureSequence) -> Result<FeatureSequence> {
        check_width(x, self.dim)?;
        let (main, gate) = self.in_proj.forward(x)?.split_channels(self.inner);
        let mut s = self.branch.forward(&main, &self.eval)?;
        gate_into(s.as_mut_slice(), gate.as_slice());
        self.out_proj.forward(&s)
    }

    pub fn start(&self) -> MambaStepState {
        MambaStepState { branch: self.branch.start() }
    }

    /// Absorb one token. Folding `step` over a sequence reproduces `forward`
    /// bit for bit when the block's evaluator is the sequential recurrence.
    pub fn step(&self, st: &mut MambaStepState, x: &[f32]) -> Result<Vec<f32>> {
        if x.len() != self.dim {
            return Err(shape_err!("mamba step: token width {} for dim {}", x.len(), self.dim));
        }
        let mut h = vec![0.0; 2 * self.inner];
        self.in_proj.forward_row(x, &mut h);
        let (main, gate) = h.split_at(self.inner);
        let mut s = self.branch.step(&mut st.branch, main)?;
        gate_into(&mut s, gate);
        let mut y = vec![0.0; self.dim];
        self.out_proj.forward_row(&s, &mut y);
        Ok(y)
    }
}

impl UsesSsm for UniMambaBlock {
    fn set_evaluator(&mut self, eval: &SharedEvaluator) {
        self.eval = eval.clone();
    }
}

/// Bidirectional Mamba block: forward and backward conv+SSM branches between
/// shared projections, SSM outputs averaged before the gate.
#[derive(Clone, Debug)]
pub struct BiMambaBlock {
    dim: usize,
    inner: usize,
    pub in_proj: Linear,
    pub forward_branch: MambaBranch,
    pub backward_branch: MambaBranch,
    pub out_proj: Linear,
    eval: SharedEvaluator,
}

impl_params!(BiMambaBlock { in_proj, forward_branch, backward_branch, out_proj });

impl BiMambaBlock {
    pub fn random(dim: usize, rng: &mut Rng) -> Self {
        Self::with_sizes(dim, EXPANSION * dim, DEFAULT_STATE_SIZE, DEFAULT_CONV_WIDTH, rng)
    }

    pub fn with_sizes(dim: usize, inner: usize, state: usize, conv_width: usize, rng: &mut Rng) -> Self {
        Self {
            dim,
            inner,
            in_proj: Linear::random(dim, 2 * inner, false, rng),
            forward_branch: MambaBranch::random(inner, state, conv_width, rng),
            backward_branch: MambaBranch::random(inner, state, conv_width, rng),
            out_proj: Linear::random(inner, dim, false, rng),
            eval: default_evaluator(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn inner(&self) -> usize {
        self.inner
    }

    /// Exchange the two branches' parameters.
    pub fn swap_branches(&mut self) {
        std::mem::swap(&mut self.forward_branch, &mut self.backward_branch);
    }

    pub fn forward(&self, x: &FeatureSequence) -> Result<FeatureSequence> {
        check_width(x, self.dim)?;
        let (main, gate) = self.in_proj.forward(x)?.split_channels(self.inner);
        let mut s = self.forward_branch.forward(&main, &self.eval)?;
        let b = self.backward_branch.forward(&main.reversed(), &self.eval)?.reversed();
        drop(main);
        s.as_mut_slice()
            .iter_mut()
            .zip(b.as_slice())
            .for_each(|(f, &b)| *f = (*f + b) * 0.5);
        drop(b);
        gate_into(s.as_mut_slice(), gate.as_slice());
        self.out_proj.forward(&s)
    }
}

impl UsesSsm for BiMambaBlock {
    fn set_evaluator(&mut self, eval: &SharedEvaluator) {
        self.eval = eval.clone();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::Params;
    use crate::ssm::{evaluator, Recurrence};
    use std::sync::Arc;

    #[test]
    fn empty_input() {
        let mut rng = Rng::new(0);
        let b = UniMambaBlock::random(4, &mut rng);
        let y = b.forward(&FeatureSequence::zeros(0, 4)).unwrap();
        assert_eq!((y.len(), y.dim()), (0, 4));
        let bi = BiMambaBlock::random(4, &mut rng);
        assert_eq!(bi.forward(&FeatureSequence::zeros(0, 4)).unwrap().len(), 0);
    }

    #[test]
    fn step_fold_matches_recurrence_forward_bitwise() {
        let mut rng = Rng::new(1);
        let mut b = UniMambaBlock::random(6, &mut rng);
        b.set_evaluator(&(Arc::new(Recurrence) as SharedEvaluator));
        let x = FeatureSequence::random(30, 6, 1.0, &mut rng);
        let batch = b.forward(&x).unwrap();
        let mut st = b.start();
        for t in 0..30 {
            assert_eq!(b.step(&mut st, x.row(t)).unwrap().as_slice(), batch.row(t));
        }
        assert_eq!(st.position(), 30);
    }

    #[test]
    fn scan_and_recurrence_paths_agree() {
        let mut rng = Rng::new(2);
        let mut b = UniMambaBlock::random(8, &mut rng);
        let x = FeatureSequence::random(300, 8, 1.0, &mut rng);
        let scan = b.forward(&x).unwrap();
        b.set_evaluator(&Arc::from(evaluator("recurrence").unwrap()));
        let rec = b.forward(&x).unwrap();
        assert!(scan.max_abs_diff(&rec) < 1e-5);
    }

    #[test]
    fn output_shape_preserved() {
        let mut rng = Rng::new(3);
        let b = BiMambaBlock::random(5, &mut rng);
        let x = FeatureSequence::random(11, 5, 1.0, &mut rng);
        let y = b.forward(&x).unwrap();
        assert_eq!((y.len(), y.dim()), (11, 5));
        assert!(b.forward(&FeatureSequence::zeros(3, 4)).is_err());
        assert_eq!(b.param_count(), b.in_proj.param_count() + 2 * b.forward_branch.param_count() + b.out_proj.param_count());
    }
}

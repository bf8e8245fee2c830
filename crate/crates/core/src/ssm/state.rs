use super::params::{Discretizer, SelectiveSsmParams};
use crate::error::{Error, Result};
use crate::seqcore::FeatureSequence;

/// One recurrence update `h = Ā h + B̄ x`, then `y = C h + D x`.
/// Shared by every sequential path so they agree bit for bit.
#[allow(clippy::too_many_arguments)]
#[inline]
pub(crate) fn advance(
    h: &mut [f64],
    a_bar: &[f32],
    b_bar: &[f32],
    c: &[f32],
    d_skip: &[f32],
    x: &[f32],
    y: &mut [f32],
    state: usize,
) {
    for (d, (&xv, yv)) in x.iter().zip(y.iter_mut()).enumerate() {
        let xd = xv as f64;
        let mut acc = 0.0f64;
        for (n, &cn) in c.iter().enumerate() {
            let i = d * state + n;
            h[i] = a_bar[i] as f64 * h[i] + b_bar[i] as f64 * xd;
            acc += cn as f64 * h[i];
        }
        *yv = (acc + d_skip[d] as f64 * xd) as f32;
    }
}

/// Recurrent state of one selective SSM, for token-by-token evaluation.
#[derive(Clone, Debug)]
pub struct SsmState {
    h: Vec<f64>,
    position: usize,
    disc: Discretizer,
    a_bar: Vec<f32>,
    b_bar: Vec<f32>,
    c: Vec<f32>,
}

impl SsmState {
    pub fn new(p: &SelectiveSsmParams) -> Self {
        let lane = p.dim() * p.state();
        Self {
            h: vec![0.0; lane],
            position: 0,
            disc: Discretizer::new(p),
            a_bar: vec![0.0; lane],
            b_bar: vec![0.0; lane],
            c: vec![0.0; p.state()],
        }
    }

    /// Hidden state, `dim × state` row-major.
    pub fn h(&self) -> &[f64] {
        &self.h
    }

    /// Number of tokens absorbed so far.
    pub fn position(&self) -> usize {
        self.position
    }

    /// Absorb `x` (length `dim`) and write the output into `y`.
    pub fn step_into(&mut self, p: &SelectiveSsmParams, x: &[f32], y: &mut [f32]) -> Result<()> {
        if x.len() != p.dim() || y.len() != p.dim() || self.h.len() != p.dim() * p.state() {
            return Err(Error::Shape(format!(
                "ssm step: state for {} entries, params {}x{}, x {}, y {}",
                self.h.len(),
                p.dim(),
                p.state(),
                x.len(),
                y.len()
            )));
        }
        self.disc.step(p, x, &mut self.a_bar, &mut self.b_bar, &mut self.c);
        advance(&mut self.h, &self.a_bar, &self.b_bar, &self.c, &p.d_skip, x, y, p.state());
        self.position += 1;
        Ok(())
    }

    pub fn step(&mut self, p: &SelectiveSsmParams, x: &[f32]) -> Result<Vec<f32>> {
        let mut y = vec![0.0; p.dim()];
        self.step_into(p, x, &mut y)?;
        Ok(y)
    }
}

/// Functional form of [`SsmState::step`].
pub fn ssm_step(mut state: SsmState, x: &[f32], p: &SelectiveSsmParams) -> Result<(SsmState, Vec<f32>)> {
    let y = state.step(p, x)?;
    Ok((state, y))
}

/// Strictly sequential evaluation from a zero state. The reference every
/// other path is checked against.
pub fn ssm_recurrence(x: &FeatureSequence, p: &SelectiveSsmParams) -> Result<FeatureSequence> {
    x.check_dim(p.dim())?;
    let mut state = SsmState::new(p);
    let mut y = FeatureSequence::zeros(x.len(), p.dim());
    for (xr, yr) in x.rows().zip(y.rows_mut()) {
        state.step_into(p, xr, yr)?;
    }
    Ok(y)
}

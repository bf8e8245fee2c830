use std::sync::Arc;

use super::kernel::{ssm_kernel_conv, LtiSsm};
use super::params::SelectiveSsmParams;
use super::scan::{blelloch_inclusive, ssm_scan_with, ScanOptions};
use super::state::ssm_recurrence;
use crate::error::{Error, Result};
use crate::seqcore::FeatureSequence;

/// A way of evaluating the SSM over a whole sequence.
pub trait SsmEvaluator: Send + Sync + std::fmt::Debug {
    fn name(&self) -> &'static str;

    fn selective(&self, x: &FeatureSequence, p: &SelectiveSsmParams) -> Result<FeatureSequence>;

    fn lti(&self, x: &FeatureSequence, p: &LtiSsm) -> Result<FeatureSequence>;
}

#[derive(Clone, Copy, Debug, Default)]
pub struct Recurrence;

impl SsmEvaluator for Recurrence {
    fn name(&self) -> &'static str {
        "recurrence"
    }
    fn selective(&self, x: &FeatureSequence, p: &SelectiveSsmParams) -> Result<FeatureSequence> {
        ssm_recurrence(x, p)
    }
    fn lti(&self, x: &FeatureSequence, p: &LtiSsm) -> Result<FeatureSequence> {
        p.recurrence(x)
    }
}

#[derive(Clone, Debug, Default)]
pub struct BlellochScan {
    pub options: ScanOptions,
}

impl SsmEvaluator for BlellochScan {
    fn name(&self) -> &'static str {
        "scan"
    }
    fn selective(&self, x: &FeatureSequence, p: &SelectiveSsmParams) -> Result<FeatureSequence> {
        ssm_scan_with(x, p, &self.options)
    }
    fn lti(&self, x: &FeatureSequence, p: &LtiSsm) -> Result<FeatureSequence> {
        x.check_dim(p.dim)?;
        let (len, lane) = (x.len(), p.dim * p.state);
        let mut a = Vec::with_capacity(len * lane);
        let mut b = Vec::with_capacity(len * lane);
        for xr in x.rows() {
            for d in 0..p.dim {
                for i in d * p.state..(d + 1) * p.state {
                    a.push(p.a_bar[i] as f64);
                    b.push(p.b_bar[i] as f64 * xr[d] as f64);
                }
            }
        }
        blelloch_inclusive(&mut a, &mut b, lane, &self.options);
        let mut y = FeatureSequence::zeros(len, p.dim);
        for (t, (yr, xr)) in y.rows_mut().zip(x.rows()).enumerate() {
            let h = &b[t * lane..(t + 1) * lane];
            for d in 0..p.dim {
                let mut acc = 0.0f64;
                for (n, &c) in p.c.iter().enumerate() {
                    acc += c as f64 * h[d * p.state + n];
                }
                yr[d] = (acc + p.d_skip[d] as f64 * xr[d] as f64) as f32;
            }
        }
        Ok(y)
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct KernelConvolution;

impl SsmEvaluator for KernelConvolution {
    fn name(&self) -> &'static str {
        "kernel"
    }
    fn selective(&self, _: &FeatureSequence, _: &SelectiveSsmParams) -> Result<FeatureSequence> {
        Err(Error::Usage(
            "kernel convolution needs time-invariant parameters; selective parameters change every step".into(),
        ))
    }
    fn lti(&self, x: &FeatureSequence, p: &LtiSsm) -> Result<FeatureSequence> {
        ssm_kernel_conv(x, p)
    }
}

/// Shared handle to an evaluator, as held by Mamba blocks.
pub type SharedEvaluator = Arc<dyn SsmEvaluator>;

/// The evaluator blocks use unless told otherwise: the scan on the calling
/// thread.
pub fn default_evaluator() -> SharedEvaluator {
    Arc::new(BlellochScan::default())
}

/// Modules containing Mamba blocks can have their SSM evaluator swapped.
pub trait UsesSsm {
    fn set_evaluator(&mut self, eval: &SharedEvaluator);
}

impl<T: UsesSsm> UsesSsm for Vec<T> {
    fn set_evaluator(&mut self, eval: &SharedEvaluator) {
        self.iter_mut().for_each(|m| m.set_evaluator(eval));
    }
}

impl<T: UsesSsm> UsesSsm for Option<T> {
    fn set_evaluator(&mut self, eval: &SharedEvaluator) {
        if let Some(m) = self {
            m.set_evaluator(eval);
        }
    }
}

const NAMES: [&str; 3] = ["recurrence", "scan", "kernel"];

pub fn evaluator_names() -> &'static [&'static str] {
    &NAMES
}

/// Look up an evaluator by name.
pub fn evaluator(name: &str) -> Result<Box<dyn SsmEvaluator>> {
    match name {
        "recurrence" => Ok(Box::new(Recurrence)),
        "scan" => Ok(Box::new(BlellochScan::default())),
        "kernel" => Ok(Box::new(KernelConvolution)),
        other => Err(Error::Usage(format!("unknown SSM evaluator '{other}' (known: {})", NAMES.join(", ")))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seqcore::Rng;

    #[test]
    fn registry_round_trip() {
        for &n in evaluator_names() {
            assert_eq!(evaluator(n).unwrap().name(), n);
        }
        assert!(evaluator("fft").is_err());
    }

    #[test]
    fn kernel_rejects_selective() {
        let mut rng = Rng::new(0);
        let p = SelectiveSsmParams::random(2, 4, &mut rng);
        let x = FeatureSequence::zeros(3, 2);
        assert!(evaluator("kernel").unwrap().selective(&x, &p).unwrap_err().is_usage());
    }

    #[test]
    fn all_paths_agree_on_lti() {
        let mut rng = Rng::new(1);
        let p = LtiSsm::new(
            2,
            3,
            (0..6).map(|_| rng.uniform_range(0.0, 0.95) as f32).collect(),
            (0..6).map(|_| rng.normal_f32()).collect(),
            (0..3).map(|_| rng.normal_f32()).collect(),
            vec![0.5, -0.5],
        )
        .unwrap();
        let x = FeatureSequence::random(40, 2, 1.0, &mut rng);
        let r = Recurrence.lti(&x, &p).unwrap();
        for &n in evaluator_names() {
            let y = evaluator(n).unwrap().lti(&x, &p).unwrap();
            assert!(y.max_abs_diff(&r) < 1e-5, "{n}");
        }
    }
}

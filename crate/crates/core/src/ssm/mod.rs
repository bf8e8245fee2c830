//! Selective state space core.
//!
//! The diagonal recurrence `h_t = Ā_t h_{t-1} + B̄_t x_t`, `y_t = C_t h_t + D x_t`
//! is evaluated three ways: strictly sequentially ([`ssm_recurrence`], the
//! reference), by a work-efficient associative prefix scan ([`ssm_scan`]),
//! and, for time-invariant parameters only, as a causal convolution with the
//! unrolled kernel `(CB̄, CĀB̄, …, CĀ^{L-1}B̄)` ([`ssm_kernel_conv`]).
//! [`SsmState`] advances the recurrence one token at a time with constant
//! memory for incremental decoding.

mod evaluator;
mod kernel;
mod params;
mod scan;
mod state;

pub use evaluator::{
    default_evaluator, evaluator, evaluator_names, BlellochScan, KernelConvolution, Recurrence, SharedEvaluator,
    SsmEvaluator, UsesSsm,
};
pub use kernel::{lti_kernel, ssm_kernel_conv, LtiSsm};
pub use params::{selectivize, DiscreteParams, SelectiveSsmParams, DEFAULT_STATE_SIZE};
pub use scan::{blelloch_inclusive, ssm_scan, ssm_scan_with, CombineOrder, ScanElement, ScanOptions};
pub use state::{ssm_recurrence, ssm_step, SsmState};

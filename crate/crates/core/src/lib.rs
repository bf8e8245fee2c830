//! Selective state space (Mamba) sequence kernels for speech, their attention
//! baselines, skeletal speech architectures built from both, and a harness that
//! measures how memory and wall time scale with token count.
//!
//! Everything runs on the CPU in `f32` with `f64` accumulation inside
//! reductions. Model weights are random (seeded); the point is structure and
//! scaling, not quality.

pub mod archs;
pub mod attention;
pub mod bench;
pub mod error;
pub mod layers;
pub mod memtrack;
pub mod oracle;
pub mod params;
pub mod presets;
pub mod registry;
pub mod seqcore;
pub mod ssm;
pub mod verify;

pub use error::{Error, Result};
pub use params::Params;
pub use seqcore::{FeatureSequence, Rng};

#[cfg(test)]
#[global_allocator]
static ALLOC: memtrack::TrackingAllocator = memtrack::TrackingAllocator;

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::archs::tokens_for_seconds;
use crate::error::{Error, Result};
use crate::memtrack;
use crate::presets::{Mode, ModelRegistry, PresetOverrides, SpeechModel};
use crate::ssm::{BlellochScan, ScanOptions, SharedEvaluator};

/// One benchmark sweep: a preset over a grid of durations.
#[derive(Clone, Debug)]
pub struct BenchConfig {
    pub preset: String,
    /// Seconds of speech, strictly increasing.
    pub durations: Vec<f64>,
    pub reps: usize,
    pub warmup: usize,
    pub mode: Mode,
    pub seed: u64,
    /// Threads for the parallel scan; 1 keeps the run on the calling thread.
    pub workers: usize,
    pub overrides: PresetOverrides,
}

impl BenchConfig {
    pub fn new(preset: impl Into<String>, durations: Vec<f64>, mode: Mode) -> Self {
        Self {
            preset: preset.into(),
            durations,
            reps: 3,
            warmup: 1,
            mode,
            seed: 0,
            workers: 1,
            overrides: PresetOverrides::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.durations.is_empty() {
            return Err(Error::Usage("empty duration grid".into()));
        }
        if self.durations.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
            return Err(Error::Usage("durations must be positive and finite".into()));
        }
        if self.durations.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Usage("durations must be strictly increasing".into()));
        }
        if self.reps < 3 {
            return Err(Error::Usage(format!("need at least 3 repetitions, got {}", self.reps)));
        }
        if self.workers == 0 {
            return Err(Error::Usage("worker count must be positive".into()));
        }
        Ok(())
    }
}

/// One measured grid point. Wall times are over the timed repetitions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    pub preset: String,
    pub mode: Mode,
    pub seed: u64,
    pub duration_s: f64,
    pub tokens: usize,
    /// Largest allocation high-water mark seen in any repetition.
    pub peak_bytes: u64,
    pub wall_s_median: f64,
    pub wall_s_p10: f64,
    pub wall_s_p90: f64,
    /// Raw per-repetition wall times; not carried by the CSV.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub wall_samples: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    PeakBytes,
    WallTime,
}

impl Metric {
    pub const ALL: [Metric; 2] = [Metric::PeakBytes, Metric::WallTime];

    pub fn of(&self, r: &BenchRecord) -> f64 {
        match self {
            Metric::PeakBytes => r.peak_bytes as f64,
            Metric::WallTime => r.wall_s_median,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Metric::PeakBytes => "peak memory (bytes)",
            Metric::WallTime => "wall time (s)",
        }
    }
}

/// Linear-interpolated quantile of sorted data.
pub(crate) fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub(crate) fn median(samples: &[f64]) -> f64 {
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    quantile(&s, 0.5)
}

/// Build the preset named in `config` and sweep its grid.
pub fn measure(config: &BenchConfig) -> Result<Vec<BenchRecord>> {
    config.validate()?;
    let mut model = ModelRegistry::builtin().build_named(&config.preset, &config.overrides, config.seed)?;
    if config.workers > 1 {
        let eval: SharedEvaluator = std::sync::Arc::new(BlellochScan { options: ScanOptions::with_workers(config.workers)? });
        model.set_evaluator(&eval);
    }
    measure_model(model.as_ref(), config)
}

/// Sweep an already-built model. `config.preset`, `overrides` and `workers`
/// are ignored; the record names come from the model.
pub fn measure_model(model: &dyn SpeechModel, config: &BenchConfig) -> Result<Vec<BenchRecord>> {
    config.validate()?;
    if !memtrack::is_active() {
        return Err(Error::Config("allocation tracking is not installed as the global allocator".into()));
    }
    let res = model.preset().resolution()?;
    let mut out = Vec::with_capacity(config.durations.len());
    for &duration_s in &config.durations {
        let tokens = tokens_for_seconds(duration_s, res)?;
        if tokens == 0 {
            return Err(Error::Usage(format!("{duration_s} s is shorter than one token at {res} ms")));
        }
        let mut work = model.prepare(config.mode, tokens, config.seed)?;
        for _ in 0..config.warmup {
            work.run()?;
        }
        let mut peak = 0usize;
        let mut samples = Vec::with_capacity(config.reps);
        for _ in 0..config.reps {
            let (elapsed, p) = memtrack::measure_peak(|| {
                let t = Instant::now();
                work.run().map(|_| t.elapsed().as_secs_f64())
            });
            samples.push(elapsed?);
            peak = peak.max(p);
        }
        let mut sorted = samples.clone();
        sorted.sort_by(f64::total_cmp);
        out.push(BenchRecord {
            preset: model.preset().name.clone(),
            mode: config.mode,
            seed: config.seed,
            duration_s,
            tokens,
            peak_bytes: peak as u64,
            wall_s_median: quantile(&sorted, 0.5),
            wall_s_p10: quantile(&sorted, 0.1),
            wall_s_p90: quantile(&sorted, 0.9),
            wall_samples: samples,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantiles() {
        let s = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile(&s, 0.5), 3.0);
        assert_eq!(quantile(&s, 0.1), 1.4);
        assert_eq!(median(&[4.0, 1.0, 3.0, 2.0]), 2.5);
    }

    #[test]
    fn config_validation() {
        let ok = BenchConfig::new("mamba-tasnet-m", vec![1.0, 2.0], Mode::Forward);
        assert!(ok.validate().is_ok());
        let mut c = ok.clone();
        c.durations = vec![2.0, 2.0];
        assert!(c.validate().unwrap_err().is_usage());
        let mut c = ok.clone();
        c.reps = 2;
        assert!(c.validate().unwrap_err().is_usage());
        let mut c = ok;
        c.durations = vec![];
        assert!(c.validate().is_err());
    }

    #[test]
    fn token_counts_follow_resolution() {
        let mut c = BenchConfig::new("mamba-tasnet-m", vec![0.001, 0.002, 0.004, 0.008], Mode::Forward);
        c.overrides = PresetOverrides { dim: Some(8), depth_divisor: Some(32), heads: None };
        c.warmup = 0;
        let recs = measure(&c).unwrap();
        let tokens: Vec<_> = recs.iter().map(|r| r.tokens).collect();
        assert_eq!(tokens, [1, 2, 4, 8]);
        assert!(recs.iter().all(|r| r.peak_bytes > 0 && r.wall_samples.len() == 3));
        assert!(recs.iter().all(|r| r.wall_s_p10 <= r.wall_s_median && r.wall_s_median <= r.wall_s_p90));
    }

    #[test]
    fn sub_token_duration_is_usage_error() {
        let mut c = BenchConfig::new("conmamba-s", vec![0.01], Mode::Forward);
        c.overrides = PresetOverrides { dim: Some(8), depth_divisor: Some(12), heads: None };
        assert!(measure(&c).unwrap_err().is_usage());
    }

    #[test]
    fn workers_do_not_change_peak_bytes() {
        let mut c = BenchConfig::new("layer:uni_mamba", vec![0.064, 0.128], Mode::Forward);
        c.warmup = 0;
        let one = measure(&c).unwrap();
        c.workers = 3;
        let three = measure(&c).unwrap();
        for (a, b) in one.iter().zip(&three) {
            assert_eq!(a.peak_bytes, b.peak_bytes);
        }
    }
}

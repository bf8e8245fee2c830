use std::fmt;

use serde::{Deserialize, Serialize};

use super::fit::{fit_exponent, ExponentFit};
use super::measure::{BenchRecord, Metric};
use crate::error::{Error, Result};
use crate::presets::Mode;

/// Where two cost curves intersect.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Crossover {
    pub duration_s: f64,
    /// Interpolated in log space like the duration, so fractional.
    pub tokens: f64,
    /// True if the first model (`a`) is the cheaper one beyond the crossover.
    pub a_cheaper_after: bool,
}

/// First strict sign change of `ln a − ln b` along the shared grid, located by
/// linear interpolation in log-log space. Grid points where the curves touch
/// without crossing are not reported.
pub fn detect_crossover(a: &[BenchRecord], b: &[BenchRecord], metric: Metric) -> Result<Option<Crossover>> {
    if a.len() != b.len()
        || a.iter().zip(b).any(|(x, y)| x.duration_s.to_bits() != y.duration_s.to_bits() || x.tokens != y.tokens)
    {
        return Err(Error::Usage("crossover needs both models measured on the same grid".into()));
    }
    let mut diff = Vec::with_capacity(a.len());
    for (x, y) in a.iter().zip(b) {
        let (u, v) = (metric.of(x), metric.of(y));
        if !(u > 0.0 && v > 0.0) {
            return Err(Error::Usage(format!("non-positive metric at {} s", x.duration_s)));
        }
        diff.push(u.ln() - v.ln());
    }
    let mut prev: Option<usize> = None;
    for (j, &d) in diff.iter().enumerate() {
        if d == 0.0 {
            continue;
        }
        if let Some(p) = prev {
            if diff[p].signum() != d.signum() {
                let a_cheaper_after = d < 0.0;
                if j > p + 1 {
                    // Exact touch at p+1 between opposite signs.
                    let r = &a[p + 1];
                    return Ok(Some(Crossover { duration_s: r.duration_s, tokens: r.tokens as f64, a_cheaper_after }));
                }
                let t = diff[p] / (diff[p] - d);
                let lerp = |lo: f64, hi: f64| (lo.ln() + t * (hi.ln() - lo.ln())).exp();
                return Ok(Some(Crossover {
                    duration_s: lerp(a[p].duration_s, a[j].duration_s),
                    tokens: lerp(a[p].tokens as f64, a[j].tokens as f64),
                    a_cheaper_after,
                }));
            }
        }
        prev = Some(j);
    }
    Ok(None)
}

/// One metric of a two-model comparison.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricComparison {
    pub metric: Metric,
    /// `None` when the grid is too small to fit.
    pub slope_a: Option<ExponentFit>,
    pub slope_b: Option<ExponentFit>,
    pub crossover: Option<Crossover>,
}

/// Exponents and crossovers of model `a` against model `b`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossoverReport {
    pub a: String,
    pub b: String,
    pub mode: Mode,
    pub metrics: Vec<MetricComparison>,
}

impl CrossoverReport {
    pub fn compare(a: &[BenchRecord], b: &[BenchRecord]) -> Result<Self> {
        let (Some(ra), Some(rb)) = (a.first(), b.first()) else {
            return Err(Error::Usage("crossover needs records for both models".into()));
        };
        let mut metrics = Vec::new();
        for metric in Metric::ALL {
            metrics.push(MetricComparison {
                metric,
                slope_a: fit_exponent(a, metric).ok(),
                slope_b: fit_exponent(b, metric).ok(),
                crossover: detect_crossover(a, b, metric)?,
            });
        }
        Ok(Self { a: ra.preset.clone(), b: rb.preset.clone(), mode: ra.mode, metrics })
    }

    pub fn get(&self, metric: Metric) -> Option<&MetricComparison> {
        self.metrics.iter().find(|m| m.metric == metric)
    }
}

impl fmt::Display for CrossoverReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} vs {} ({})", self.a, self.b, self.mode.as_str())?;
        let slope = |s: &Option<ExponentFit>| match s {
            Some(s) => format!("{:.3} [{:.3}, {:.3}]", s.slope, s.lo, s.hi),
            None => "n/a".to_string(),
        };
        for m in &self.metrics {
            let cross = match &m.crossover {
                Some(c) => format!(
                    "crossover at {:.3} s ({:.0} tokens), {} cheaper after",
                    c.duration_s,
                    c.tokens,
                    if c.a_cheaper_after { &self.a } else { &self.b }
                ),
                None => "no crossover in range".to_string(),
            };
            writeln!(f, "  {:<20} slope {} {}, {} {}; {}", m.metric.label(), self.a, slope(&m.slope_a), self.b, slope(&m.slope_b), cross)?;
        }
        Ok(())
    }
}

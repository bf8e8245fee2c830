use serde::{Deserialize, Serialize};

use super::measure::{median, BenchRecord, Metric};
use crate::error::{Error, Result};
use crate::seqcore::Rng;

pub const BOOTSTRAP_RESAMPLES: usize = 1000;
const BOOTSTRAP_SEED: u64 = 0x5ca1_ab1e;
const MIN_RECORDS: usize = 4;
const MIN_SPAN: f64 = 8.0;

/// Log-log slope of a metric against token count with a 95% interval.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    pub slope: f64,
    pub lo: f64,
    pub hi: f64,
    /// Grid points that entered the fit.
    pub points: usize,
}

fn ols_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
    }
    sxy / sxx
}

fn log_metric(v: f64, r: &BenchRecord) -> Result<f64> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(Error::Usage(format!("non-positive metric {v} at {} tokens", r.tokens)));
    }
    Ok(v.ln())
}

/// Least-squares slope of `ln metric` on `ln tokens` over the upper half of
/// the grid, where fixed costs no longer hide the asymptote.
///
/// Wall-time intervals resample each point's repetitions with replacement;
/// records without raw samples (or the memory metric, which does not vary
/// between repetitions) get a zero-width interval.
pub fn fit_exponent(records: &[BenchRecord], metric: Metric) -> Result<ExponentFit> {
    let mut recs: Vec<&BenchRecord> = records.iter().collect();
    recs.sort_by_key(|r| r.tokens);
    if recs.len() < MIN_RECORDS {
        return Err(Error::Usage(format!("need at least {MIN_RECORDS} records to fit, got {}", recs.len())));
    }
    if recs.windows(2).any(|w| w[0].tokens == w[1].tokens) || recs[0].tokens == 0 {
        return Err(Error::Usage("token counts must be distinct and positive".into()));
    }
    let span = recs[recs.len() - 1].tokens as f64 / recs[0].tokens as f64;
    if span < MIN_SPAN {
        return Err(Error::Usage(format!("token counts span {span:.2}x, need {MIN_SPAN}x")));
    }
    let upper = &recs[recs.len() / 2..];
    let xs: Vec<f64> = upper.iter().map(|r| (r.tokens as f64).ln()).collect();
    let ys = upper.iter().map(|r| log_metric(metric.of(r), r)).collect::<Result<Vec<_>>>()?;
    let slope = ols_slope(&xs, &ys);

    let resamplable = metric == Metric::WallTime && upper.iter().all(|r| !r.wall_samples.is_empty());
    if !resamplable {
        return Ok(ExponentFit { slope, lo: slope, hi: slope, points: upper.len() });
    }
    let mut rng = Rng::new(BOOTSTRAP_SEED);
    let mut slopes = Vec::with_capacity(BOOTSTRAP_RESAMPLES);
    let mut ys = vec![0.0; upper.len()];
    let mut pick = Vec::new();
    for _ in 0..BOOTSTRAP_RESAMPLES {
        for (y, r) in ys.iter_mut().zip(upper) {
            let n = r.wall_samples.len();
            pick.clear();
            pick.extend((0..n).map(|_| r.wall_samples[rng.below(n as u64) as usize]));
            *y = log_metric(median(&pick), r)?;
        }
        slopes.push(ols_slope(&xs, &ys));
    }
    slopes.sort_by(f64::total_cmp);
    let lo = super::measure::quantile(&slopes, 0.025).min(slope);
    let hi = super::measure::quantile(&slopes, 0.975).max(slope);
    Ok(ExponentFit { slope, lo, hi, points: upper.len() })
}

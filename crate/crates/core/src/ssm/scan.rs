use std::sync::Arc;

use rayon::prelude::*;
use rayon::ThreadPool;

use super::params::{Discretizer, SelectiveSsmParams};
use crate::error::{Error, Result};
use crate::seqcore::FeatureSequence;

/// One affine map `h ↦ a·h + b` per state lane.
///
/// Composition `later ∘ earlier = (a₂a₁, a₂b₁ + b₂)` is associative, which is
/// what lets the recurrence be evaluated as a prefix scan.
#[derive(Clone, Debug, PartialEq)]
pub struct ScanElement {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl ScanElement {
    pub fn identity(lanes: usize) -> Self {
        Self { a: vec![1.0; lanes], b: vec![0.0; lanes] }
    }

    /// `self` applied after `earlier`.
    pub fn compose(&self, earlier: &ScanElement) -> ScanElement {
        let mut out = self.clone();
        combine(CombineOrder::Correct, &earlier.a, &earlier.b, &mut out.a, &mut out.b);
        out
    }

    /// Apply the map to a state.
    pub fn apply(&self, h: &mut [f64]) {
        for ((h, &a), &b) in h.iter_mut().zip(&self.a).zip(&self.b) {
            *h = a * *h + b;
        }
    }
}

/// Operand order used by the scan's combine step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum CombineOrder {
    #[default]
    Correct,
    /// Swaps the operands of every combine. Used to check that the
    /// verification suites notice a broken scan.
    #[doc(hidden)]
    Scrambled,
}

#[derive(Clone, Debug, Default)]
pub struct ScanOptions {
    pub pool: Option<Arc<ThreadPool>>,
    pub order: CombineOrder,
}

impl ScanOptions {
    /// Options that split each tree level across `workers` threads.
    /// `workers <= 1` keeps everything on the calling thread.
    pub fn with_workers(workers: usize) -> Result<Self> {
        if workers <= 1 {
            return Ok(Self::default());
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        Ok(Self { pool: Some(Arc::new(pool)), order: CombineOrder::Correct })
    }
}

#[inline]
fn combine(order: CombineOrder, ea: &[f64], eb: &[f64], la: &mut [f64], lb: &mut [f64]) {
    match order {
        CombineOrder::Correct => {
            for i in 0..la.len() {
                lb[i] = la[i] * eb[i] + lb[i];
                la[i] *= ea[i];
            }
        }
        CombineOrder::Scrambled => {
            for i in 0..la.len() {
                lb[i] = ea[i] * lb[i] + eb[i];
                la[i] *= ea[i];
            }
        }
    }
}

// Combine element `i - s` into element `i` for every complete chunk of
// `2s` elements, where `i` is the last element of the chunk.
fn level(a: &mut [f64], b: &mut [f64], lane: usize, s: usize, opts: &ScanOptions) {
    let chunk = 2 * s * lane;
    let order = opts.order;
    let body = |(ca, cb): (&mut [f64], &mut [f64])| {
        if ca.len() < chunk {
            return;
        }
        let (ea, la) = ca.split_at_mut(s * lane);
        let (eb, lb) = cb.split_at_mut(s * lane);
        let off = (s - 1) * lane;
        combine(
            order,
            &ea[off..off + lane],
            &eb[off..off + lane],
            &mut la[off..off + lane],
            &mut lb[off..off + lane],
        );
    };
    match &opts.pool {
        Some(pool) if a.len() >= 2 * chunk => crate::memtrack::untracked(|| {
            pool.install(|| a.par_chunks_mut(chunk).zip(b.par_chunks_mut(chunk)).for_each(body))
        }),
        _ => a.chunks_mut(chunk).zip(b.chunks_mut(chunk)).for_each(body),
    }
}

/// In-place inclusive prefix scan over `a.len() / lane` elements stored
/// contiguously, `lane` values each. After the call element `t` holds the
/// composition of elements `0..=t`.
///
/// Up-sweep then down-sweep over a balanced tree, with no padding to a power
/// of two. The set and order of combines depends only on the element count,
/// so the result is the same for any worker count.
pub fn blelloch_inclusive(a: &mut [f64], b: &mut [f64], lane: usize, opts: &ScanOptions) {
    assert_eq!(a.len(), b.len());
    if lane == 0 {
        return;
    }
    let n = a.len() / lane;
    let mut s = 1;
    while 2 * s <= n {
        level(a, b, lane, s, opts);
        s *= 2;
    }
    s /= 2;
    while s >= 1 {
        let off = s * lane;
        level(&mut a[off..], &mut b[off..], lane, s, opts);
        s /= 2;
    }
}

/// Evaluate the selective SSM by prefix scan on the calling thread.
pub fn ssm_scan(x: &FeatureSequence, p: &SelectiveSsmParams) -> Result<FeatureSequence> {
    ssm_scan_with(x, p, &ScanOptions::default())
}

pub fn ssm_scan_with(x: &FeatureSequence, p: &SelectiveSsmParams, opts: &ScanOptions) -> Result<FeatureSequence> {
    x.check_dim(p.dim())?;
    let (len, dim, state) = (x.len(), p.dim(), p.state());
    let lane = dim * state;
    let mut a = vec![0.0f64; len * lane];
    let mut b = vec![0.0f64; len * lane];
    let mut c = vec![0.0f32; len * state];
    let mut disc = Discretizer::new(p);
    let mut a_bar = vec![0.0f32; lane];
    let mut b_bar = vec![0.0f32; lane];
    for (t, xr) in x.rows().enumerate() {
        disc.step(p, xr, &mut a_bar, &mut b_bar, &mut c[t * state..(t + 1) * state]);
        let (ta, tb) = (&mut a[t * lane..(t + 1) * lane], &mut b[t * lane..(t + 1) * lane]);
        for d in 0..dim {
            let xd = xr[d] as f64;
            for i in d * state..(d + 1) * state {
                ta[i] = a_bar[i] as f64;
                tb[i] = b_bar[i] as f64 * xd;
            }
        }
    }
    blelloch_inclusive(&mut a, &mut b, lane, opts);
    drop(a);
    let mut y = FeatureSequence::zeros(len, dim);
    for (t, (yr, xr)) in y.rows_mut().zip(x.rows()).enumerate() {
        let h = &b[t * lane..(t + 1) * lane];
        let ct = &c[t * state..(t + 1) * state];
        for d in 0..dim {
            let mut acc = 0.0f64;
            for (n, &cn) in ct.iter().enumerate() {
                acc += cn as f64 * h[d * state + n];
            }
            yr[d] = (acc + p.d_skip[d] as f64 * xr[d] as f64) as f32;
        }
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seqcore::Rng;

    fn random_elements(n: usize, lane: usize, rng: &mut Rng) -> (Vec<f64>, Vec<f64>) {
        let a = (0..n * lane).map(|_| rng.uniform_range(0.0, 1.0)).collect();
        let b = (0..n * lane).map(|_| rng.normal()).collect();
        (a, b)
    }

    fn sequential(a: &[f64], b: &[f64], lane: usize) -> Vec<f64> {
        let mut h = vec![0.0; lane];
        let mut out = Vec::with_capacity(b.len());
        for (ta, tb) in a.chunks(lane).zip(b.chunks(lane)) {
            for i in 0..lane {
                h[i] = ta[i] * h[i] + tb[i];
            }
            out.extend_from_slice(&h);
        }
        out
    }

    #[test]
    fn inclusive_scan_matches_fold_for_all_small_lengths() {
        let mut rng = Rng::new(5);
        for n in 0..70 {
            let (mut a, mut b) = random_elements(n, 3, &mut rng);
            let expect = sequential(&a, &b, 3);
            blelloch_inclusive(&mut a, &mut b, 3, &ScanOptions::default());
            for (x, y) in b.iter().zip(&expect) {
                assert!((x - y).abs() < 1e-12, "n={n}");
            }
        }
    }

    #[test]
    fn worker_count_does_not_change_bits() {
        let mut rng = Rng::new(6);
        let (a0, b0) = random_elements(1000, 16, &mut rng);
        let (mut a1, mut b1) = (a0.clone(), b0.clone());
        blelloch_inclusive(&mut a1, &mut b1, 16, &ScanOptions::default());
        for workers in [2, 3, 8] {
            let (mut a2, mut b2) = (a0.clone(), b0.clone());
            blelloch_inclusive(&mut a2, &mut b2, 16, &ScanOptions::with_workers(workers).unwrap());
            assert_eq!(b1, b2);
            assert_eq!(a1, a2);
        }
    }

    #[test]
    fn composition_is_associative() {
        let mut rng = Rng::new(7);
        for _ in 0..50 {
            let mk = |rng: &mut Rng| {
                let (a, b) = random_elements(1, 8, rng);
                ScanElement { a, b }
            };
            let (e1, e2, e3) = (mk(&mut rng), mk(&mut rng), mk(&mut rng));
            let left = e3.compose(&e2.compose(&e1));
            let right = e3.compose(&e2).compose(&e1);
            for i in 0..8 {
                assert!((left.a[i] - right.a[i]).abs() < 1e-6);
                assert!((left.b[i] - right.b[i]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn compose_matches_sequential_application() {
        let e1 = ScanElement { a: vec![0.5], b: vec![2.0] };
        let e2 = ScanElement { a: vec![0.25], b: vec![-1.0] };
        let mut h = vec![3.0];
        e1.apply(&mut h);
        e2.apply(&mut h);
        let mut g = vec![3.0];
        e2.compose(&e1).apply(&mut g);
        assert_eq!(h, g);
        assert_eq!(ScanElement::identity(1).compose(&e1), e1);
    }

    #[test]
    fn scrambled_order_is_wrong() {
        let mut rng = Rng::new(8);
        let (a0, b0) = random_elements(64, 2, &mut rng);
        let expect = sequential(&a0, &b0, 2);
        let (mut a, mut b) = (a0, b0);
        let opts = ScanOptions { pool: None, order: CombineOrder::Scrambled };
        blelloch_inclusive(&mut a, &mut b, 2, &opts);
        let err = b.iter().zip(&expect).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(err > 1e-3);
    }
}

//! Memory and wall-time scaling of single mixer layers.

use mamba_speech::bench::{detect_crossover, measure_model, BenchConfig, BenchRecord, Metric};
use mamba_speech::memtrack::{self, TrackingAllocator};
use mamba_speech::presets::{Mode, ModelRegistry, PresetOverrides};

#[global_allocator]
static ALLOC: TrackingAllocator = TrackingAllocator;

const DIM: usize = 16;

fn run(mixer: &str, heads: usize, tokens: &[usize], reps: usize) -> Vec<BenchRecord> {
    run_at(mixer, DIM, heads, tokens, reps)
}

fn run_at(mixer: &str, dim: usize, heads: usize, tokens: &[usize], reps: usize) -> Vec<BenchRecord> {
    let o = PresetOverrides { dim: Some(dim), depth_divisor: None, heads: Some(heads) };
    let model = ModelRegistry::builtin().build_named(&format!("layer:{mixer}"), &o, 0).unwrap();
    let mut c = BenchConfig::new(mixer, tokens.iter().map(|&l| l as f64 / 1000.0).collect(), Mode::Forward);
    c.reps = reps;
    c.warmup = 1;
    let recs = measure_model(model.as_ref(), &c).unwrap();
    assert_eq!(recs.iter().map(|r| r.tokens).collect::<Vec<_>>(), tokens);
    recs
}

#[test]
fn allocator_is_tracking() {
    assert!(memtrack::is_active());
}

#[test]
fn attention_memory_quadruples_and_covers_score_matrix() {
    let heads = 4;
    let recs = run("self_attention", heads, &[1024, 2048, 4096], 3);
    for r in &recs {
        let scores = (heads * r.tokens * r.tokens * 4) as u64;
        assert!(r.peak_bytes >= scores, "L={} peak {} < {scores}", r.tokens, r.peak_bytes);
    }
    for w in recs.windows(2) {
        let ratio = w[1].peak_bytes as f64 / w[0].peak_bytes as f64;
        assert!((3.2..=4.8).contains(&ratio), "L {} -> {}: ratio {ratio:.3}", w[0].tokens, w[1].tokens);
    }
}

#[test]
fn mamba_memory_is_linear_and_bounded() {
    let state = mamba_speech::ssm::DEFAULT_STATE_SIZE;
    let recs = run("uni_mamba", 1, &[2048, 4096, 8192], 3);
    for r in &recs {
        let bound = (24 * r.tokens * DIM * state * 4) as u64;
        assert!(r.peak_bytes <= bound, "L={} peak {} > {bound}", r.tokens, r.peak_bytes);
    }
    for w in recs.windows(2) {
        assert!(w[1].peak_bytes > w[0].peak_bytes);
        let ratio = w[1].peak_bytes as f64 / w[0].peak_bytes as f64;
        assert!((1.6..=2.4).contains(&ratio), "ratio {ratio:.3}");
    }
}

#[test]
fn peak_bytes_repeat_exactly() {
    for mixer in ["uni_mamba", "bi_mamba", "self_attention"] {
        let a = run(mixer, 1, &[512, 1024], 3);
        let b = run(mixer, 1, &[512, 1024], 3);
        let pa: Vec<u64> = a.iter().map(|r| r.peak_bytes).collect();
        let pb: Vec<u64> = b.iter().map(|r| r.peak_bytes).collect();
        assert_eq!(pa, pb, "{mixer}");
    }
}

#[test]
fn mamba_wall_time_doubles_with_length() {
    let recs = run("uni_mamba", 1, &[8192, 16384], 5);
    let ratio = recs[1].wall_s_median / recs[0].wall_s_median;
    assert!((1.6..=2.6).contains(&ratio), "ratio {ratio:.3}");
}

#[test]
fn attention_overtakes_mamba_in_wall_time() {
    // At full model width the per-token cost of the selective scan is large
    // enough to push the intersection well past the short end of the grid.
    let grid: Vec<usize> = (0..5).map(|k| 256 << k).collect();
    let attn = run_at("self_attention", 256, 1, &grid, 3);
    let mamba = run_at("uni_mamba", 256, 1, &grid, 3);
    let c = detect_crossover(&attn, &mamba, Metric::WallTime)
        .unwrap()
        .unwrap_or_else(|| panic!("no crossover: attn {:?} mamba {:?}", walls(&attn), walls(&mamba)));
    assert!(!c.a_cheaper_after, "attention should be the costlier one at length");
    assert!((256.0..=65536.0).contains(&c.tokens), "crossover at {}", c.tokens);
    eprintln!("wall crossover at L = {:.0}", c.tokens);
}

fn walls(r: &[BenchRecord]) -> Vec<f64> {
    r.iter().map(|r| r.wall_s_median).collect()
}

use std::process::Command;

use mamba_speech::bench::read_csv;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_mamba-bench"));
    c.env_remove("MAMBA_BENCH_OUT").env_remove("MAMBA_BENCH_FAULT");
    c
}

#[test]
fn verify_passes_and_fault_hook_fails_it() {
    let ok = bin().args(["verify", "ssm"]).output().unwrap();
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stdout));
    let bad = bin().args(["verify", "ssm"]).env("MAMBA_BENCH_FAULT", "scan-order").output().unwrap();
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn usage_errors_exit_two() {
    for args in [
        &["verify", "nothing"][..],
        &["bench", "--presets", "no-such-preset", "--durations", "0.1", "--out-dir", "/tmp"],
        &["bench", "--presets", "layer:uni_mamba", "--durations", "0.1"],
        &["frobnicate"],
    ] {
        let o = bin().args(args).output().unwrap();
        assert_eq!(o.status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn bench_writes_one_row_per_preset_and_duration() {
    let dir = tempfile::tempdir().unwrap();
    let durations = ["0.016", "0.032", "0.064"];
    let o = bin()
        .args(["bench", "--presets", "layer:uni_mamba,layer:causal_attention", "--durations", &durations.join(",")])
        .env("MAMBA_BENCH_OUT", dir.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = read_csv(&dir.path().join("bench.csv")).unwrap();
    assert_eq!(rows.len(), 2 * durations.len());
    assert!(rows.iter().all(|r| r.peak_bytes > 0 && r.wall_s_median > 0.0));
    assert!(dir.path().join("bench.svg").exists());
    assert!(dir.path().join("report.json").exists());
}

use proptest::prelude::{any, prop_assert, prop_assert_eq, prop_oneof, proptest, Just, ProptestConfig, Strategy};

use mamba_speech::oracle::naive_selective_ssm;
use mamba_speech::presets::{Layers, ModelPreset, Task};
use mamba_speech::registry::{MixerConfig, MixerRegistry};
use mamba_speech::ssm::{ssm_recurrence, ssm_scan, ssm_scan_with, ScanOptions, SelectiveSsmParams};
use mamba_speech::{FeatureSequence, Rng};

fn case(len: usize, dim: usize, state: usize, seed: u64) -> (SelectiveSsmParams, FeatureSequence) {
    let mut rng = Rng::new(seed);
    let p = SelectiveSsmParams::random(dim, state, &mut rng);
    let x = FeatureSequence::random(len, dim, 1.0, &mut rng);
    (p, x)
}

fn preset() -> impl Strategy<Value = ModelPreset> {
    let layers = prop_oneof![
        (0usize..40, 0usize..40).prop_map(|(encoder, decoder)| Layers::EncoderDecoder { encoder, decoder }),
        (0usize..40, 0usize..40).prop_map(|(ar, nar)| Layers::ArNar { ar, nar }),
    ];
    let res = prop_oneof![Just(1.0), Just(40.0), Just(40.0 / 3.0), Just(20.0)];
    ("[a-z][a-z0-9-]{0,12}", 1usize..2048, layers, res, any::<bool>()).prop_map(|(name, dim, layers, token_res_ms, feedforward)| {
        let task = match layers {
            Layers::ArNar { .. } => Task::Tts,
            Layers::EncoderDecoder { encoder, .. } if encoder % 2 == 0 => Task::Asr,
            Layers::EncoderDecoder { .. } => Task::Separation,
        };
        ModelPreset { name, dim, layers, token_res_ms, task, feedforward }
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn scan_recurrence_and_oracle_agree(len in 1usize..160, dim in 1usize..10, state in 1usize..20, seed in any::<u64>()) {
        let (p, x) = case(len, dim, state, seed);
        let reference = naive_selective_ssm(&x, &p);
        let scan = ssm_scan(&x, &p).unwrap();
        let rec = ssm_recurrence(&x, &p).unwrap();
        prop_assert!(scan.max_abs_diff(&rec) < 1e-5, "scan vs recurrence {}", scan.max_abs_diff(&rec));
        // The f64 reference is rounded once to f32 on the way out, so large
        // outputs may sit an ulp away from it.
        for (name, y) in [("scan", &scan), ("recurrence", &rec)] {
            for (a, b) in y.as_slice().iter().zip(reference.as_slice()) {
                let tol = 1e-5 * b.abs().max(1.0);
                prop_assert!((a - b).abs() <= tol, "{} {} vs {}", name, a, b);
            }
        }
    }

    #[test]
    fn scan_is_bit_identical_across_workers(len in 1usize..300, dim in 1usize..6, seed in any::<u64>()) {
        let (p, x) = case(len, dim, 8, seed);
        let serial = ssm_scan(&x, &p).unwrap();
        for workers in [2, 3, 4] {
            let par = ssm_scan_with(&x, &p, &ScanOptions::with_workers(workers).unwrap()).unwrap();
            prop_assert!(par.bit_eq(&serial), "workers = {}", workers);
        }
    }

    #[test]
    fn causal_mixers_ignore_the_future(len in 2usize..48, cut in 0usize..47, seed in any::<u64>()) {
        let t = cut % (len - 1);
        let reg = MixerRegistry::builtin();
        let cfg = MixerConfig { dim: 8, heads: 2 };
        let mut rng = Rng::new(seed);
        let x = FeatureSequence::random(len, 8, 1.0, &mut rng);
        let mut y = x.clone();
        for r in t + 1..len {
            for (i, v) in y.row_mut(r).iter_mut().enumerate() {
                *v += if i % 2 == 0 { 1.0 } else { -0.7 };
            }
        }
        for name in ["uni_mamba", "causal_attention"] {
            let m = reg.build(name, &cfg, &mut rng).unwrap();
            prop_assert!(m.causal());
            let (a, b) = (m.forward(&x).unwrap(), m.forward(&y).unwrap());
            prop_assert!(a.prefix_bit_eq(&b, t + 1), "{} leaked into position {}", name, t);
        }
    }

    #[test]
    fn preset_json_round_trip(p in preset()) {
        prop_assert_eq!(ModelPreset::from_json(&p.to_json()).unwrap(), p);
    }
}

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::archs::TokenResolution;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Separation,
    Asr,
    Tts,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Separation => "separation",
            Task::Asr => "asr",
            Task::Tts => "tts",
        })
    }
}

/// Layer counts; serialized as `{"encoder", "decoder"}` or `{"ar", "nar"}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "LayersRepr", into = "LayersRepr")]
pub enum Layers {
    EncoderDecoder { encoder: usize, decoder: usize },
    ArNar { ar: usize, nar: usize },
}

#[derive(Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EncDecRepr {
    encoder: usize,
    decoder: usize,
}

#[derive(Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ArNarRepr {
    ar: usize,
    nar: usize,
}

#[derive(Clone, Copy, Serialize, Deserialize)]
#[serde(untagged)]
enum LayersRepr {
    EncoderDecoder(EncDecRepr),
    ArNar(ArNarRepr),
}

impl From<LayersRepr> for Layers {
    fn from(r: LayersRepr) -> Self {
        match r {
            LayersRepr::EncoderDecoder(EncDecRepr { encoder, decoder }) => Layers::EncoderDecoder { encoder, decoder },
            LayersRepr::ArNar(ArNarRepr { ar, nar }) => Layers::ArNar { ar, nar },
        }
    }
}

impl From<Layers> for LayersRepr {
    fn from(l: Layers) -> Self {
        match l {
            Layers::EncoderDecoder { encoder, decoder } => LayersRepr::EncoderDecoder(EncDecRepr { encoder, decoder }),
            Layers::ArNar { ar, nar } => LayersRepr::ArNar(ArNarRepr { ar, nar }),
        }
    }
}

/// One model configuration: width, depth, token resolution and task.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelPreset {
    pub name: String,
    pub dim: usize,
    pub layers: Layers,
    pub token_res_ms: f64,
    pub task: Task,
    pub feedforward: bool,
}

impl ModelPreset {
    fn new(name: &str, dim: usize, layers: Layers, token_res_ms: f64, task: Task, feedforward: bool) -> Self {
        Self { name: name.into(), dim, layers, token_res_ms, task, feedforward }
    }

    pub fn resolution(&self) -> Result<TokenResolution> {
        TokenResolution::from_ms_f64(self.token_res_ms)
    }

    /// Depth as usually written: `32`, `12 + 4`, `12 + 12`, and `16 × 2` for
    /// the dual-path separator whose stack is two 16-layer halves.
    pub fn layer_label(&self) -> String {
        match self.layers {
            Layers::EncoderDecoder { encoder, decoder: 0 } if self.name.starts_with("sepformer") => {
                format!("{encoder} × 2")
            }
            Layers::EncoderDecoder { encoder, decoder: 0 } => encoder.to_string(),
            Layers::EncoderDecoder { encoder, decoder } => format!("{encoder} + {decoder}"),
            Layers::ArNar { ar, nar } => format!("{ar} + {nar}"),
        }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let p: Self = serde_json::from_str(s)?;
        p.validate()?;
        Ok(p)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("preset serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::Config(format!("{}: dim must be positive", self.name)));
        }
        self.resolution()?;
        match (self.task, self.layers) {
            (Task::Tts, Layers::ArNar { .. }) | (Task::Separation | Task::Asr, Layers::EncoderDecoder { .. }) => Ok(()),
            _ => Err(Error::Config(format!("{}: layer layout does not fit task {}", self.name, self.task))),
        }
    }

    /// A copy with width and depth changed for desk-scale runs.
    pub fn with_overrides(&self, o: &PresetOverrides) -> Result<Self> {
        let mut p = self.clone();
        if let Some(d) = o.dim {
            p.dim = d;
        }
        if let Some(k) = o.depth_divisor {
            if k == 0 {
                return Err(Error::Usage("depth divisor must be positive".into()));
            }
            let div = |n: usize| n.div_ceil(k);
            p.layers = match p.layers {
                Layers::EncoderDecoder { encoder, decoder } => Layers::EncoderDecoder { encoder: div(encoder), decoder: div(decoder) },
                Layers::ArNar { ar, nar } => Layers::ArNar { ar: div(ar), nar: div(nar) },
            };
        }
        p.validate()?;
        Ok(p)
    }
}

/// Width and depth adjustments applied to a catalog preset.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct PresetOverrides {
    pub dim: Option<usize>,
    /// Every layer count becomes `ceil(count / divisor)`.
    pub depth_divisor: Option<usize>,
    pub heads: Option<usize>,
}

/// The built-in configurations.
pub fn catalog() -> Vec<ModelPreset> {
    use Layers::*;
    use Task::*;
    let ed = |encoder, decoder| EncoderDecoder { encoder, decoder };
    let vall = ArNar { ar: 12, nar: 12 };
    let tts_res = 40.0 / 3.0;
    vec![
        ModelPreset::new("sepformer", 256, ed(16, 0), 1.0, Separation, true),
        ModelPreset::new("mamba-tasnet-m", 256, ed(32, 0), 1.0, Separation, false),
        ModelPreset::new("mamba-tasnet-l", 512, ed(32, 0), 1.0, Separation, false),
        ModelPreset::new("conformer-s", 144, ed(12, 4), 40.0, Asr, true),
        ModelPreset::new("conmamba-s", 144, ed(12, 4), 40.0, Asr, true),
        ModelPreset::new("conformer-l", 512, ed(12, 6), 40.0, Asr, true),
        ModelPreset::new("conmamba-l", 512, ed(12, 6), 40.0, Asr, true),
        ModelPreset::new("conformer-ctc", 256, ed(18, 0), 40.0, Asr, true),
        ModelPreset::new("conmamba-ctc", 256, ed(18, 0), 40.0, Asr, true),
        ModelPreset::new("vall-e", 1024, vall, tts_res, Tts, true),
        ModelPreset::new("vall-m", 1024, vall, tts_res, Tts, true),
        ModelPreset::new("vall-me", 1024, vall, tts_res, Tts, true),
    ]
}

pub fn load_preset(name: &str) -> Result<ModelPreset> {
    catalog().into_iter().find(|p| p.name == name).ok_or_else(|| {
        let names: Vec<String> = catalog().into_iter().map(|p| p.name).collect();
        Error::Usage(format!("unknown preset '{name}' (known: {})", names.join(", ")))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::archs::tokens_for_seconds;

    #[test]
    fn table_rows() {
        let rows = [
            ("sepformer", 256, "16 × 2", 10_000),
            ("mamba-tasnet-m", 256, "32", 10_000),
            ("mamba-tasnet-l", 512, "32", 10_000),
            ("conformer-s", 144, "12 + 4", 250),
            ("conmamba-s", 144, "12 + 4", 250),
            ("conformer-l", 512, "12 + 6", 250),
            ("conmamba-l", 512, "12 + 6", 250),
            ("conformer-ctc", 256, "18", 250),
            ("conmamba-ctc", 256, "18", 250),
            ("vall-e", 1024, "12 + 12", 750),
            ("vall-m", 1024, "12 + 12", 750),
            ("vall-me", 1024, "12 + 12", 750),
        ];
        assert_eq!(catalog().len(), rows.len());
        for (name, dim, label, tokens) in rows {
            let p = load_preset(name).unwrap();
            assert_eq!(p.dim, dim, "{name}");
            assert_eq!(p.layer_label(), label, "{name}");
            assert_eq!(tokens_for_seconds(10.0, p.resolution().unwrap()).unwrap(), tokens, "{name}");
        }
        assert!(!load_preset("mamba-tasnet-m").unwrap().feedforward);
        assert!(load_preset("vall-m").unwrap().feedforward);
        assert!(load_preset("nope").unwrap_err().is_usage());
    }

    #[test]
    fn json_round_trip_and_schema() {
        for p in catalog() {
            assert_eq!(ModelPreset::from_json(&p.to_json()).unwrap(), p);
        }
        let ok = r#"{"name":"x","dim":8,"layers":{"ar":1,"nar":2},"token_res_ms":20,"task":"tts","feedforward":true}"#;
        assert_eq!(ModelPreset::from_json(ok).unwrap().layers, Layers::ArNar { ar: 1, nar: 2 });
        let extra = r#"{"name":"x","dim":8,"layers":{"ar":1,"nar":2,"x":1},"token_res_ms":20,"task":"tts","feedforward":true}"#;
        assert!(ModelPreset::from_json(extra).is_err());
        let mixed = r#"{"name":"x","dim":8,"layers":{"encoder":1,"nar":2},"token_res_ms":20,"task":"tts","feedforward":true}"#;
        assert!(ModelPreset::from_json(mixed).is_err());
        let wrong_task = r#"{"name":"x","dim":8,"layers":{"encoder":1,"decoder":0},"token_res_ms":20,"task":"tts","feedforward":true}"#;
        assert!(ModelPreset::from_json(wrong_task).is_err());
    }

    #[test]
    fn overrides() {
        let p = load_preset("conmamba-l").unwrap();
        let o = PresetOverrides { dim: Some(32), depth_divisor: Some(4), heads: None };
        let q = p.with_overrides(&o).unwrap();
        assert_eq!(q.dim, 32);
        assert_eq!(q.layers, Layers::EncoderDecoder { encoder: 3, decoder: 2 });
        assert!(p.with_overrides(&PresetOverrides { depth_divisor: Some(0), ..o }).is_err());
    }
}

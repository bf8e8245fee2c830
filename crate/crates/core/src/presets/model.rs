use serde::{Deserialize, Serialize};

use super::catalog::{load_preset, Layers, ModelPreset, PresetOverrides, Task};
use crate::archs::{
    ar_generate, ArBackbone, AsrModel, CodecLm, MambaArStack, NarStack, Sampler, TasNetModel, TransformerArStack,
    CODES, MEL_BINS, PHONEMES, STRIDE,
};
use crate::attention::DEFAULT_HEADS;
use crate::error::{Error, Result};
use crate::params::Params;
use crate::registry::{MixerConfig, MixerRegistry, SequenceModule};
use crate::seqcore::{FeatureSequence, Rng};
use crate::ssm::{SharedEvaluator, UsesSsm};

/// Preset names starting with this select a single mixer layer.
pub const LAYER_PREFIX: &str = "layer:";
/// Phoneme and enrollment prompt length used by synthetic TTS workloads.
pub const TTS_PROMPT_LEN: usize = 8;

const LAYER_DEFAULT_DIM: usize = 16;
const FRAMES_PER_TOKEN: usize = 4;

/// What a benchmark run exercises.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// One whole-sequence pass.
    Forward,
    /// Token-by-token generation.
    ArDecode,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Forward => "forward",
            Mode::ArDecode => "ar_decode",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "forward" => Ok(Mode::Forward),
            "ar_decode" => Ok(Mode::ArDecode),
            _ => Err(Error::Usage(format!("unknown mode '{s}' (forward, ar_decode)"))),
        }
    }
}

/// A prepared unit of work: inputs are synthesized up front so that `run`
/// measures only the model.
pub trait Workload {
    fn run(&mut self) -> Result<()>;
}

struct FnWorkload<F>(F);

impl<F: FnMut() -> Result<()>> Workload for FnWorkload<F> {
    fn run(&mut self) -> Result<()> {
        (self.0)()
    }
}

fn workload<'a>(f: impl FnMut() -> Result<()> + 'a) -> Box<dyn Workload + 'a> {
    Box::new(FnWorkload(f))
}

/// A built model that can produce benchmark workloads.
pub trait SpeechModel: Params + UsesSsm + Send + Sync {
    fn preset(&self) -> &ModelPreset;

    /// Work covering `tokens` tokens in the given mode.
    fn prepare(&self, mode: Mode, tokens: usize, seed: u64) -> Result<Box<dyn Workload + '_>>;

    fn codec_lm(&self) -> Option<&CodecLm> {
        None
    }
}

fn unsupported(p: &ModelPreset, mode: Mode) -> Error {
    Error::Usage(format!("{} does not support mode {}", p.name, mode.as_str()))
}

struct SeparationModel {
    preset: ModelPreset,
    model: TasNetModel,
}

impl SpeechModel for SeparationModel {
    fn preset(&self) -> &ModelPreset {
        &self.preset
    }

    /// Separates a waveform of `tokens · 8` samples.
    fn prepare(&self, mode: Mode, tokens: usize, seed: u64) -> Result<Box<dyn Workload + '_>> {
        if mode != Mode::Forward {
            return Err(unsupported(&self.preset, mode));
        }
        let mut rng = Rng::new(seed);
        let mix: Vec<f32> = (0..tokens * STRIDE).map(|_| 0.1 * rng.normal_f32()).collect();
        Ok(workload(move || self.model.separate(&mix).map(drop)))
    }
}

struct AsrSpeechModel {
    preset: ModelPreset,
    model: AsrModel,
}

impl SpeechModel for AsrSpeechModel {
    fn preset(&self) -> &ModelPreset {
        &self.preset
    }

    /// Encodes a spectrogram of `tokens · 4` frames. The decoder is not run.
    fn prepare(&self, mode: Mode, tokens: usize, seed: u64) -> Result<Box<dyn Workload + '_>> {
        if mode != Mode::Forward {
            return Err(unsupported(&self.preset, mode));
        }
        let spec = FeatureSequence::random(tokens * FRAMES_PER_TOKEN, MEL_BINS, 1.0, &mut Rng::new(seed));
        Ok(workload(move || self.model.encode(&spec).map(drop)))
    }
}

struct TtsModel {
    preset: ModelPreset,
    lm: CodecLm,
}

impl SpeechModel for TtsModel {
    fn preset(&self) -> &ModelPreset {
        &self.preset
    }

    /// Forward: teacher-forced AR pass over the prompt plus `tokens` codes.
    /// Decode: greedy generation of exactly `tokens` codes after the prompt.
    fn prepare(&self, mode: Mode, tokens: usize, seed: u64) -> Result<Box<dyn Workload + '_>> {
        let mut rng = Rng::new(seed);
        let phonemes: Vec<u32> = (0..TTS_PROMPT_LEN).map(|_| rng.below(PHONEMES as u64) as u32).collect();
        let enroll: Vec<u32> = (0..TTS_PROMPT_LEN).map(|_| rng.below(CODES as u64) as u32).collect();
        match mode {
            Mode::Forward => {
                let codes: Vec<u32> = (0..tokens).map(|_| rng.below(CODES as u64) as u32).collect();
                Ok(workload(move || self.lm.ar_logits(&phonemes, &enroll, &codes).map(drop)))
            }
            Mode::ArDecode => Ok(workload(move || {
                ar_generate(&self.lm, &phonemes, &enroll, tokens, &mut Sampler::Greedy, false).map(drop)
            })),
        }
    }

    fn codec_lm(&self) -> Option<&CodecLm> {
        Some(&self.lm)
    }
}

/// A single registered mixer, benchmarked at a nominal 1 ms per token.
pub struct LayerModel {
    preset: ModelPreset,
    pub mixer: Box<dyn SequenceModule>,
}

impl Params for LayerModel {
    fn visit_params(&self, f: &mut dyn FnMut(&[f32])) {
        self.mixer.visit_params(f)
    }
    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut [f32])) {
        self.mixer.visit_params_mut(f)
    }
}

impl UsesSsm for LayerModel {
    fn set_evaluator(&mut self, eval: &SharedEvaluator) {
        self.mixer.set_evaluator(eval)
    }
}

impl SpeechModel for LayerModel {
    fn preset(&self) -> &ModelPreset {
        &self.preset
    }

    fn prepare(&self, mode: Mode, tokens: usize, seed: u64) -> Result<Box<dyn Workload + '_>> {
        let x = FeatureSequence::random(tokens, self.mixer.dim(), 1.0, &mut Rng::new(seed));
        match mode {
            Mode::Forward => Ok(workload(move || self.mixer.forward(&x).map(drop))),
            Mode::ArDecode => {
                self.mixer.start_decode()?;
                Ok(workload(move || {
                    let mut s = self.mixer.start_decode()?;
                    for row in x.rows() {
                        s.step(row)?;
                    }
                    Ok(())
                }))
            }
        }
    }
}

macro_rules! forward_params {
    ($ty:ty, $field:ident) => {
        impl Params for $ty {
            fn visit_params(&self, f: &mut dyn FnMut(&[f32])) {
                self.$field.visit_params(f)
            }
            fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut [f32])) {
                self.$field.visit_params_mut(f)
            }
        }
        impl UsesSsm for $ty {
            fn set_evaluator(&mut self, eval: &SharedEvaluator) {
                self.$field.set_evaluator(eval)
            }
        }
    };
}

forward_params!(SeparationModel, model);
forward_params!(AsrSpeechModel, model);
forward_params!(TtsModel, lm);

/// Builds the models of one family (`sepformer`, `conmamba`, …).
pub trait ModelBuilder: Send + Sync {
    fn family(&self) -> &'static str;

    fn build(&self, preset: &ModelPreset, heads: usize, rng: &mut Rng) -> Result<Box<dyn SpeechModel>>;
}

type BuildFn = fn(&ModelPreset, usize, &mut Rng) -> Result<Box<dyn SpeechModel>>;

struct FnBuilder {
    family: &'static str,
    build: BuildFn,
}

impl ModelBuilder for FnBuilder {
    fn family(&self) -> &'static str {
        self.family
    }
    fn build(&self, preset: &ModelPreset, heads: usize, rng: &mut Rng) -> Result<Box<dyn SpeechModel>> {
        (self.build)(preset, heads, rng)
    }
}

fn enc_dec(p: &ModelPreset) -> Result<(usize, usize)> {
    match p.layers {
        Layers::EncoderDecoder { encoder, decoder } => Ok((encoder, decoder)),
        Layers::ArNar { .. } => Err(Error::Config(format!("{}: expected encoder/decoder layers", p.name))),
    }
}

fn ar_nar(p: &ModelPreset) -> Result<(usize, usize)> {
    match p.layers {
        Layers::ArNar { ar, nar } => Ok((ar, nar)),
        Layers::EncoderDecoder { .. } => Err(Error::Config(format!("{}: expected ar/nar layers", p.name))),
    }
}

fn build_sepformer(p: &ModelPreset, heads: usize, rng: &mut Rng) -> Result<Box<dyn SpeechModel>> {
    let (enc, _) = enc_dec(p)?;
    // The two 16-layer halves of the dual-path stack run as one single-path stack.
    let model = TasNetModel::transformer(p.dim, 2 * enc, heads, 2, rng)?;
    Ok(Box::new(SeparationModel { preset: p.clone(), model }))
}

fn build_mamba_tasnet(p: &ModelPreset, _: usize, rng: &mut Rng) -> Result<Box<dyn SpeechModel>> {
    let (enc, _) = enc_dec(p)?;
    let layers = (0..enc)
        .map(|_| crate::layers::MambaEncoderLayer::random(p.dim, p.feedforward, rng))
        .collect();
    let model = TasNetModel::new(p.dim, 2, crate::archs::MaskNet::Mamba(layers), rng)?;
    Ok(Box::new(SeparationModel { preset: p.clone(), model }))
}

fn build_conformer(p: &ModelPreset, heads: usize, rng: &mut Rng) -> Result<Box<dyn SpeechModel>> {
    let (enc, dec) = enc_dec(p)?;
    let model = AsrModel::conformer(p.dim, heads, enc, dec, rng)?;
    Ok(Box::new(AsrSpeechModel { preset: p.clone(), model }))
}

fn build_conmamba(p: &ModelPreset, _: usize, rng: &mut Rng) -> Result<Box<dyn SpeechModel>> {
    let (enc, dec) = enc_dec(p)?;
    let model = AsrModel::conmamba(p.dim, enc, dec, rng);
    Ok(Box::new(AsrSpeechModel { preset: p.clone(), model }))
}

fn build_codec_lm(p: &ModelPreset, ar: Box<dyn ArBackbone>, nar: NarStack, rng: &mut Rng) -> Result<Box<dyn SpeechModel>> {
    let lm = CodecLm::new(p.dim, ar, nar, rng)?;
    Ok(Box::new(TtsModel { preset: p.clone(), lm }))
}

fn build_vall_e(p: &ModelPreset, heads: usize, rng: &mut Rng) -> Result<Box<dyn SpeechModel>> {
    let (ar, nar) = ar_nar(p)?;
    let ar = Box::new(TransformerArStack::random(p.dim, ar, heads, rng)?);
    let nar = NarStack::transformer(p.dim, nar, heads, rng)?;
    build_codec_lm(p, ar, nar, rng)
}

fn build_vall_m(p: &ModelPreset, _: usize, rng: &mut Rng) -> Result<Box<dyn SpeechModel>> {
    let (ar, nar) = ar_nar(p)?;
    let ar = Box::new(MambaArStack::random(p.dim, ar, p.feedforward, rng));
    let nar = NarStack::mamba(p.dim, nar, rng);
    build_codec_lm(p, ar, nar, rng)
}

fn build_vall_me(p: &ModelPreset, heads: usize, rng: &mut Rng) -> Result<Box<dyn SpeechModel>> {
    let (ar, nar) = ar_nar(p)?;
    let ar = Box::new(TransformerArStack::random(p.dim, ar, heads, rng)?);
    let nar = NarStack::mamba(p.dim, nar, rng);
    build_codec_lm(p, ar, nar, rng)
}

/// Model builders keyed by family; a preset resolves to the family that is
/// the longest prefix of its name.
pub struct ModelRegistry {
    builders: Vec<Box<dyn ModelBuilder>>,
    mixers: MixerRegistry,
}

impl Default for ModelRegistry {
    fn default() -> Self {
        Self::builtin()
    }
}

impl ModelRegistry {
    pub fn builtin() -> Self {
        let mut r = Self { builders: Vec::new(), mixers: MixerRegistry::builtin() };
        let table: [(&'static str, BuildFn); 7] = [
            ("sepformer", build_sepformer),
            ("mamba-tasnet", build_mamba_tasnet),
            ("conformer", build_conformer),
            ("conmamba", build_conmamba),
            ("vall-e", build_vall_e),
            ("vall-m", build_vall_m),
            ("vall-me", build_vall_me),
        ];
        for (family, build) in table {
            r.register(Box::new(FnBuilder { family, build }));
        }
        r
    }

    pub fn register(&mut self, builder: Box<dyn ModelBuilder>) {
        self.builders.retain(|b| b.family() != builder.family());
        self.builders.push(builder);
    }

    pub fn mixers(&self) -> &MixerRegistry {
        &self.mixers
    }

    pub fn families(&self) -> Vec<&'static str> {
        self.builders.iter().map(|b| b.family()).collect()
    }

    fn builder_for(&self, name: &str) -> Result<&dyn ModelBuilder> {
        self.builders
            .iter()
            .filter(|b| name.starts_with(b.family()))
            .max_by_key(|b| b.family().len())
            .map(|b| b.as_ref())
            .ok_or_else(|| Error::Usage(format!("no model family for preset '{name}'")))
    }

    /// Build from an explicit preset.
    pub fn build(&self, preset: &ModelPreset, heads: Option<usize>, seed: u64) -> Result<Box<dyn SpeechModel>> {
        preset.validate()?;
        let heads = heads.unwrap_or_else(|| default_heads(preset.dim));
        self.builder_for(&preset.name)?.build(preset, heads, &mut Rng::new(seed))
    }

    /// Build a catalog preset or a `layer:<mixer>` by name, with overrides.
    pub fn build_named(&self, name: &str, o: &PresetOverrides, seed: u64) -> Result<Box<dyn SpeechModel>> {
        if let Some(mixer) = name.strip_prefix(LAYER_PREFIX) {
            let cfg = MixerConfig { dim: o.dim.unwrap_or(LAYER_DEFAULT_DIM), heads: o.heads.unwrap_or(1) };
            let preset = ModelPreset {
                name: name.to_string(),
                dim: cfg.dim,
                layers: Layers::EncoderDecoder { encoder: 1, decoder: 0 },
                token_res_ms: 1.0,
                task: Task::Separation,
                feedforward: false,
            };
            let mixer = self.mixers.build(mixer, &cfg, &mut Rng::new(seed))?;
            return Ok(Box::new(LayerModel { preset, mixer }));
        }
        let preset = load_preset(name)?.with_overrides(o)?;
        self.build(&preset, o.heads, seed)
    }
}

/// Eight heads when the width allows it, otherwise the largest of 4, 2, 1.
fn default_heads(dim: usize) -> usize {
    [DEFAULT_HEADS, 4, 2, 1].into_iter().find(|h| dim % h == 0).unwrap_or(1)
}

/// Build a catalog preset with seeded random weights.
pub fn build_model(preset: &ModelPreset, seed: u64) -> Result<Box<dyn SpeechModel>> {
    ModelRegistry::builtin().build(preset, None, seed)
}

/// Number of scalar parameters.
pub fn param_count(model: &dyn SpeechModel) -> usize {
    model.param_count()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(name: &str) -> ModelPreset {
        load_preset(name)
            .unwrap()
            .with_overrides(&PresetOverrides { dim: Some(16), depth_divisor: Some(12), heads: None })
            .unwrap()
    }

    #[test]
    fn every_family_builds_and_runs() {
        let reg = ModelRegistry::builtin();
        for p in crate::presets::catalog() {
            let p = small(&p.name);
            let m = reg.build(&p, None, 0).unwrap();
            assert_eq!(m.preset().name, p.name);
            m.prepare(Mode::Forward, 12, 1).unwrap().run().unwrap();
            let decode = m.prepare(Mode::ArDecode, 5, 1);
            assert_eq!(decode.is_ok(), p.task == Task::Tts, "{}", p.name);
            if let Ok(mut w) = decode {
                w.run().unwrap();
            }
            assert!(param_count(m.as_ref()) > 0);
        }
    }

    #[test]
    fn longest_prefix_wins() {
        let reg = ModelRegistry::builtin();
        assert_eq!(reg.builder_for("vall-me").unwrap().family(), "vall-me");
        assert_eq!(reg.builder_for("vall-m").unwrap().family(), "vall-m");
        assert_eq!(reg.builder_for("vall-e").unwrap().family(), "vall-e");
        assert!(reg.builder_for("wavenet").is_err());
    }

    #[test]
    fn same_seed_same_outputs_and_counts() {
        let p = small("conmamba-s");
        let a = build_model(&p, 3).unwrap();
        let b = build_model(&p, 3).unwrap();
        let c = build_model(&p, 4).unwrap();
        let mut pa = Vec::new();
        a.visit_params(&mut |s| pa.extend_from_slice(s));
        let mut pb = Vec::new();
        b.visit_params(&mut |s| pb.extend_from_slice(s));
        assert_eq!(pa, pb);
        assert_eq!(param_count(a.as_ref()), param_count(c.as_ref()));
    }

    #[test]
    fn layer_presets() {
        let reg = ModelRegistry::builtin();
        let o = PresetOverrides::default();
        let m = reg.build_named("layer:uni_mamba", &o, 0).unwrap();
        assert_eq!(m.preset().dim, 16);
        m.prepare(Mode::ArDecode, 4, 0).unwrap().run().unwrap();
        let a = reg.build_named("layer:self_attention", &o, 0).unwrap();
        assert!(a.prepare(Mode::ArDecode, 4, 0).is_err());
        assert!(reg.build_named("layer:lstm", &o, 0).is_err_and(|e| e.is_usage()));
    }
}

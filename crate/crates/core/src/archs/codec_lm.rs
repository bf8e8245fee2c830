use std::time::Instant;

use super::backbone::ArBackbone;
use crate::attention::{add_positions, TransformerEncoderLayer};
use crate::error::{Error, Result};
use crate::layers::MambaEncoderLayer;
use crate::params::Params;
use crate::seqcore::{Embedding, FeatureSequence, LayerNorm, Linear, Rng};
use crate::ssm::{SharedEvaluator, UsesSsm};

/// Residual codebooks per frame.
pub const CODEBOOKS: usize = 8;
/// Codes per codebook.
pub const CODES: usize = 1024;
/// Separator between the phoneme prompt and the audio tokens.
pub const BOS: u32 = CODES as u32;
pub const EOS: u32 = CODES as u32 + 1;
/// Phoneme vocabulary size.
pub const PHONEMES: usize = 128;
/// Non-autoregressive stages, one per codebook after the first.
pub const NAR_STAGES: usize = CODEBOOKS - 1;

const AR_VOCAB: usize = CODES + 2;

/// Bidirectional stack used by the non-autoregressive stages.
#[derive(Clone, Debug)]
pub enum NarStack {
    Mamba(Vec<MambaEncoderLayer>),
    /// Transformer encoder layers with sinusoidal positions at the input.
    Transformer(Vec<TransformerEncoderLayer>),
}

impl Params for NarStack {
    fn visit_params(&self, f: &mut dyn FnMut(&[f32])) {
        match self {
            NarStack::Mamba(l) => l.visit_params(f),
            NarStack::Transformer(l) => l.visit_params(f),
        }
    }
    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut [f32])) {
        match self {
            NarStack::Mamba(l) => l.visit_params_mut(f),
            NarStack::Transformer(l) => l.visit_params_mut(f),
        }
    }
}

impl NarStack {
    pub fn mamba(dim: usize, depth: usize, rng: &mut Rng) -> Self {
        NarStack::Mamba((0..depth).map(|_| MambaEncoderLayer::random(dim, true, rng)).collect())
    }

    pub fn transformer(dim: usize, depth: usize, heads: usize, rng: &mut Rng) -> Result<Self> {
        Ok(NarStack::Transformer(
            (0..depth).map(|_| TransformerEncoderLayer::random(dim, heads, rng)).collect::<Result<_>>()?,
        ))
    }

    pub fn depth(&self) -> usize {
        match self {
            NarStack::Mamba(l) => l.len(),
            NarStack::Transformer(l) => l.len(),
        }
    }

    pub fn forward(&self, x: &FeatureSequence) -> Result<FeatureSequence> {
        let mut h = x.clone();
        match self {
            NarStack::Mamba(layers) => {
                for l in layers {
                    h = l.forward(&h)?;
                }
            }
            NarStack::Transformer(layers) => {
                add_positions(&mut h, 0);
                for l in layers {
                    h = l.forward(&h)?;
                }
            }
        }
        Ok(h)
    }
}

/// Codec language model: an autoregressive stack over first-codebook tokens
/// and a bidirectional Mamba stack that fills in codebooks 2..8.
#[derive(Debug)]
pub struct CodecLm {
    dim: usize,
    pub ar_phonemes: Embedding,
    pub ar_codes: Embedding,
    pub ar: Box<dyn ArBackbone>,
    pub ar_head: Linear,
    pub nar_phonemes: Embedding,
    pub nar_codes: Vec<Embedding>,
    pub nar_stage: Embedding,
    pub nar: NarStack,
    pub nar_norm: LayerNorm,
    pub nar_heads: Vec<Linear>,
}

impl Params for CodecLm {
    fn visit_params(&self, f: &mut dyn FnMut(&[f32])) {
        self.ar_phonemes.visit_params(f);
        self.ar_codes.visit_params(f);
        self.ar.visit_params(f);
        self.ar_head.visit_params(f);
        self.nar_phonemes.visit_params(f);
        self.nar_codes.visit_params(f);
        self.nar_stage.visit_params(f);
        self.nar.visit_params(f);
        self.nar_norm.visit_params(f);
        self.nar_heads.visit_params(f);
    }
    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut [f32])) {
        self.ar_phonemes.visit_params_mut(f);
        self.ar_codes.visit_params_mut(f);
        self.ar.visit_params_mut(f);
        self.ar_head.visit_params_mut(f);
        self.nar_phonemes.visit_params_mut(f);
        self.nar_codes.visit_params_mut(f);
        self.nar_stage.visit_params_mut(f);
        self.nar.visit_params_mut(f);
        self.nar_norm.visit_params_mut(f);
        self.nar_heads.visit_params_mut(f);
    }
}

impl UsesSsm for CodecLm {
    fn set_evaluator(&mut self, eval: &SharedEvaluator) {
        self.ar.set_evaluator(eval);
        if let NarStack::Mamba(l) = &mut self.nar {
            l.set_evaluator(eval);
        }
    }
}

impl CodecLm {
    /// Both stacks must have width `dim`.
    pub fn new(dim: usize, ar: Box<dyn ArBackbone>, nar: NarStack, rng: &mut Rng) -> Result<Self> {
        if ar.dim() != dim {
            return Err(Error::Config(format!("AR stack width {} does not match {dim}", ar.dim())));
        }
        Ok(Self {
            dim,
            ar_phonemes: Embedding::random(PHONEMES, dim, rng),
            ar_codes: Embedding::random(AR_VOCAB, dim, rng),
            ar,
            ar_head: Linear::random(dim, AR_VOCAB, true, rng),
            nar_phonemes: Embedding::random(PHONEMES, dim, rng),
            nar_codes: (0..CODEBOOKS).map(|_| Embedding::random(CODES, dim, rng)).collect(),
            nar_stage: Embedding::random(NAR_STAGES, dim, rng),
            nar,
            nar_norm: LayerNorm::new(dim),
            nar_heads: (0..NAR_STAGES).map(|_| Linear::random(dim, CODES, true, rng)).collect(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Embedded `phonemes ‖ BOS ‖ enrollment`.
    pub fn ar_prompt(&self, phonemes: &[u32], enrollment: &[u32]) -> Result<FeatureSequence> {
        if phonemes.is_empty() || enrollment.is_empty() {
            return Err(Error::Usage("phoneme and enrollment prompts must be non-empty".into()));
        }
        check_codes(enrollment)?;
        let p = self.ar_phonemes.lookup(phonemes)?;
        let mut audio = vec![BOS];
        audio.extend_from_slice(enrollment);
        let a = self.ar_codes.lookup(&audio)?;
        FeatureSequence::concat(&[&p, &a])
    }

    /// Teacher-forced logits over the whole sequence `prompt ‖ codes`. Row
    /// `i` scores the token at position `i + 1`.
    pub fn ar_logits(&self, phonemes: &[u32], enrollment: &[u32], codes: &[u32]) -> Result<FeatureSequence> {
        check_codes(codes)?;
        let prompt = self.ar_prompt(phonemes, enrollment)?;
        let c = self.ar_codes.lookup(codes)?;
        let h = self.ar.forward(&FeatureSequence::concat(&[&prompt, &c])?)?;
        self.ar_head.forward(&h)
    }

    /// The rows of [`ar_logits`](Self::ar_logits), computed by feeding the
    /// sequence through a decode session one token at a time.
    pub fn ar_logits_incremental(&self, phonemes: &[u32], enrollment: &[u32], codes: &[u32]) -> Result<FeatureSequence> {
        check_codes(codes)?;
        let prompt = self.ar_prompt(phonemes, enrollment)?;
        let c = self.ar_codes.lookup(codes)?;
        let mut session = self.ar.start()?;
        let mut rows = Vec::with_capacity(prompt.len() + c.len());
        for x in prompt.rows().chain(c.rows()) {
            rows.push(self.ar_head_row(&session.step(x)?));
        }
        FeatureSequence::from_rows(&rows)
    }

    fn ar_head_row(&self, h: &[f32]) -> Vec<f32> {
        let mut logits = vec![0.0; AR_VOCAB];
        self.ar_head.forward_row(h, &mut logits);
        logits
    }

    /// Logits for one NAR stage (`stage` 0 predicts codebook 2) given the
    /// codebooks decided so far, `books[c]` for `c ≤ stage`. Returns
    /// `T × CODES` for the target frames.
    pub fn nar_stage_logits(
        &self,
        stage: usize,
        phonemes: &[u32],
        enrollment: &[Vec<u32>],
        books: &[Vec<u32>],
    ) -> Result<FeatureSequence> {
        if stage >= NAR_STAGES || books.len() < stage + 1 {
            return Err(Error::Usage(format!("stage {stage} needs {} known codebooks", stage + 1)));
        }
        if enrollment.len() != CODEBOOKS || enrollment.iter().any(|e| e.len() != enrollment[0].len()) {
            return Err(Error::Usage(format!("enrollment needs {CODEBOOKS} equal-length codebooks")));
        }
        let t = books[0].len();
        if books[..=stage].iter().any(|b| b.len() != t) {
            return Err(Error::Usage("codebooks differ in length".into()));
        }
        let p = self.nar_phonemes.lookup(phonemes)?;
        let mut e = FeatureSequence::zeros(enrollment[0].len(), self.dim);
        for (emb, ids) in self.nar_codes.iter().zip(enrollment) {
            check_codes(ids)?;
            emb.add_into(ids, &mut e)?;
        }
        let mut target = FeatureSequence::zeros(t, self.dim);
        for (emb, ids) in self.nar_codes.iter().zip(&books[..=stage]) {
            check_codes(ids)?;
            emb.add_into(ids, &mut target)?;
        }
        let mut h = FeatureSequence::concat(&[&p, &e, &target])?;
        let stage_row = self.nar_stage.row(stage as u32)?.to_vec();
        for row in h.rows_mut() {
            row.iter_mut().zip(&stage_row).for_each(|(v, s)| *v += s);
        }
        let h = self.nar.forward(&h)?;
        let total = h.len();
        let h = self.nar_norm.forward(&h.slice_rows(total - t..total))?;
        self.nar_heads[stage].forward(&h)
    }
}

fn check_codes(ids: &[u32]) -> Result<()> {
    match ids.iter().find(|&&c| c as usize >= CODES) {
        Some(c) => Err(Error::Usage(format!("code {c} outside the {CODES}-entry codebook"))),
        None => Ok(()),
    }
}

/// Token selection from a logit vector. `BOS` is never chosen.
#[derive(Clone, Debug)]
pub enum Sampler {
    Greedy,
    TopK { k: usize, temperature: f64, rng: Rng },
}

impl Sampler {
    pub fn top_k(k: usize, temperature: f64, seed: u64) -> Self {
        Sampler::TopK { k: k.max(1), temperature, rng: Rng::new(seed) }
    }

    pub fn pick(&mut self, logits: &[f32]) -> u32 {
        let allowed = |i: &usize| *i as u32 != BOS;
        match self {
            Sampler::Greedy => {
                let mut best = 0usize;
                for i in (0..logits.len()).filter(allowed) {
                    if best as u32 == BOS || logits[i] > logits[best] {
                        best = i;
                    }
                }
                best as u32
            }
            Sampler::TopK { k, temperature, rng } => {
                let mut idx: Vec<usize> = (0..logits.len()).filter(allowed).collect();
                idx.sort_by(|&a, &b| logits[b].total_cmp(&logits[a]));
                idx.truncate(*k);
                let t = temperature.max(1e-6);
                let top = logits[idx[0]] as f64;
                let w: Vec<f64> = idx.iter().map(|&i| ((logits[i] as f64 - top) / t).exp()).collect();
                let mut u = rng.uniform() * w.iter().sum::<f64>();
                for (&i, &wi) in idx.iter().zip(&w) {
                    if u < wi {
                        return i as u32;
                    }
                    u -= wi;
                }
                *idx.last().expect("k >= 1") as u32
            }
        }
    }
}

/// Result of autoregressive generation.
#[derive(Clone, Debug, PartialEq)]
pub struct Generation {
    /// Generated first-codebook tokens, end marker excluded.
    pub tokens: Vec<u32>,
    /// Wall seconds spent producing each token.
    pub step_seconds: Vec<f64>,
    pub hit_eos: bool,
}

/// Sample first-codebook tokens conditioned on `phonemes ‖ BOS ‖ enrollment`.
/// The prompt is absorbed token by token, then each step picks a token from
/// the latest output and feeds it back. Stops after `max_steps` tokens, or
/// at `EOS` when `stop_at_eos` is set.
pub fn ar_generate(
    lm: &CodecLm,
    phonemes: &[u32],
    enrollment: &[u32],
    max_steps: usize,
    sampler: &mut Sampler,
    stop_at_eos: bool,
) -> Result<Generation> {
    if max_steps == 0 {
        return Err(Error::Usage("max_steps must be positive".into()));
    }
    let prompt = lm.ar_prompt(phonemes, enrollment)?;
    let mut session = lm.ar.start()?;
    let mut out = Vec::new();
    for row in prompt.rows() {
        out = session.step(row)?;
    }
    let mut gen = Generation { tokens: Vec::with_capacity(max_steps), step_seconds: Vec::with_capacity(max_steps), hit_eos: false };
    while gen.tokens.len() < max_steps {
        let start = Instant::now();
        let mut logits = lm.ar_head_row(&out);
        if !stop_at_eos {
            logits[EOS as usize] = f32::NEG_INFINITY;
        }
        let tok = sampler.pick(&logits);
        if tok == EOS {
            gen.hit_eos = true;
            break;
        }
        out = session.step(lm.ar_codes.row(tok)?)?;
        gen.tokens.push(tok);
        gen.step_seconds.push(start.elapsed().as_secs_f64());
    }
    Ok(gen)
}

/// Fill in codebooks 2..8 for the `codebook1` frames, one bidirectional pass
/// per codebook, each reading every codebook decided before it. Returns
/// `NAR_STAGES` sequences of `codebook1.len()` codes.
pub fn nar_infer(lm: &CodecLm, phonemes: &[u32], enrollment: &[Vec<u32>], codebook1: &[u32]) -> Result<Vec<Vec<u32>>> {
    let mut books = vec![codebook1.to_vec()];
    for stage in 0..NAR_STAGES {
        let logits = lm.nar_stage_logits(stage, phonemes, enrollment, &books)?;
        let next = logits
            .rows()
            .map(|r| {
                let mut best = 0;
                for (i, &v) in r.iter().enumerate() {
                    if v > r[best] {
                        best = i;
                    }
                }
                best as u32
            })
            .collect();
        books.push(next);
    }
    books.remove(0);
    Ok(books)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::archs::{MambaArStack, TransformerArStack};

    fn tiny(transformer: bool, seed: u64) -> CodecLm {
        let mut rng = Rng::new(seed);
        let ar: Box<dyn ArBackbone> = if transformer {
            Box::new(TransformerArStack::random(16, 2, 2, &mut rng).unwrap())
        } else {
            Box::new(MambaArStack::random(16, 2, true, &mut rng))
        };
        let nar = NarStack::mamba(16, 2, &mut rng);
        CodecLm::new(16, ar, nar, &mut rng).unwrap()
    }

    fn ids(n: usize, vocab: usize, rng: &mut Rng) -> Vec<u32> {
        (0..n).map(|_| rng.below(vocab as u64) as u32).collect()
    }

    #[test]
    fn session_logits_bit_match_batch_under_recurrence() {
        let mut rng = Rng::new(4);
        let (p, e, c) = (ids(5, PHONEMES, &mut rng), ids(3, CODES, &mut rng), ids(9, CODES, &mut rng));
        for transformer in [false, true] {
            let mut lm = tiny(transformer, 2);
            lm.set_evaluator(&(std::sync::Arc::new(crate::ssm::Recurrence) as SharedEvaluator));
            let batch = lm.ar_logits(&p, &e, &c).unwrap();
            let inc = lm.ar_logits_incremental(&p, &e, &c).unwrap();
            assert_eq!(batch.len(), 5 + 1 + 3 + 9);
            assert!(inc.bit_eq(&batch), "transformer={transformer}");
        }
    }

    #[test]
    fn generation_is_reproducible_and_bounded() {
        let lm = tiny(false, 0);
        let mut rng = Rng::new(1);
        let (p, e) = (ids(5, PHONEMES, &mut rng), ids(4, CODES, &mut rng));
        let a = ar_generate(&lm, &p, &e, 12, &mut Sampler::top_k(20, 1.0, 7), true).unwrap();
        let b = ar_generate(&lm, &p, &e, 12, &mut Sampler::top_k(20, 1.0, 7), true).unwrap();
        assert_eq!(a.tokens, b.tokens);
        assert!(a.tokens.len() <= 12);
        assert_eq!(a.tokens.len(), a.step_seconds.len());
        let g = ar_generate(&lm, &p, &e, 9, &mut Sampler::Greedy, false).unwrap();
        assert_eq!(g.tokens.len(), 9);
        assert!(ar_generate(&lm, &p, &e, 0, &mut Sampler::Greedy, true).unwrap_err().is_usage());
        assert!(ar_generate(&lm, &[], &e, 3, &mut Sampler::Greedy, true).is_err());
    }

    #[test]
    fn incremental_logits_match_teacher_forcing() {
        for transformer in [false, true] {
            let lm = tiny(transformer, 2);
            let mut rng = Rng::new(3);
            let (p, e) = (ids(4, PHONEMES, &mut rng), ids(3, CODES, &mut rng));
            let g = ar_generate(&lm, &p, &e, 6, &mut Sampler::Greedy, false).unwrap();
            let batch = lm.ar_logits(&p, &e, &g.tokens).unwrap();
            let prompt_len = p.len() + 1 + e.len();
            let mut s = lm.ar.start().unwrap();
            let prompt = lm.ar_prompt(&p, &e).unwrap();
            let mut out = Vec::new();
            for r in prompt.rows() {
                out = s.step(r).unwrap();
            }
            for (i, &tok) in g.tokens.iter().enumerate() {
                let inc = lm.ar_head_row(&out);
                let row = batch.row(prompt_len - 1 + i);
                let err = inc.iter().zip(row).map(|(a, b)| (a - b).abs()).fold(0.0, f32::max);
                assert!(err < 1e-4, "{err}");
                out = s.step(lm.ar_codes.row(tok).unwrap()).unwrap();
            }
        }
    }

    #[test]
    fn nar_shapes_and_dependency() {
        let lm = tiny(false, 4);
        let mut rng = Rng::new(5);
        let p = ids(4, PHONEMES, &mut rng);
        let enroll: Vec<Vec<u32>> = (0..CODEBOOKS).map(|_| ids(3, CODES, &mut rng)).collect();
        let cb1 = ids(6, CODES, &mut rng);
        let out = nar_infer(&lm, &p, &enroll, &cb1).unwrap();
        assert_eq!(out.len(), NAR_STAGES);
        assert!(out.iter().all(|b| b.len() == 6));
        let mut books = vec![cb1.clone()];
        books.extend(out.iter().cloned());
        for stage in 0..NAR_STAGES {
            let base = lm.nar_stage_logits(stage, &p, &enroll, &books).unwrap();
            let mut changed = books.clone();
            changed[stage][2] = (changed[stage][2] + 1) % CODES as u32;
            let y = lm.nar_stage_logits(stage, &p, &enroll, &changed).unwrap();
            assert!(!y.bit_eq(&base), "stage {stage}");
        }
    }

    #[test]
    fn greedy_skips_bos() {
        let mut logits = vec![0.0; AR_VOCAB];
        logits[BOS as usize] = 10.0;
        logits[7] = 1.0;
        assert_eq!(Sampler::Greedy.pick(&logits), 7);
    }
}

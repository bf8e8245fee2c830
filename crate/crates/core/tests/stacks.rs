//! Deep stacks at full model width keep their shape and stay finite.

use mamba_speech::attention::TransformerEncoderLayer;
use mamba_speech::layers::MambaEncoderLayer;
use mamba_speech::{FeatureSequence, Rng};

const LEN: usize = 1000;
const DIM: usize = 256;

#[test]
fn mamba_encoder_stack_32_layers() {
    let mut rng = Rng::new(11);
    let layers: Vec<_> = (0..32).map(|_| MambaEncoderLayer::random(DIM, false, &mut rng)).collect();
    let mut x = FeatureSequence::random(LEN, DIM, 1.0, &mut rng);
    for l in &layers {
        x = l.forward(&x).unwrap();
        assert_eq!((x.len(), x.dim()), (LEN, DIM));
    }
    assert!(x.all_finite());
}

#[test]
fn transformer_encoder_stack_16_layers() {
    let mut rng = Rng::new(12);
    let layers: Vec<_> = (0..16).map(|_| TransformerEncoderLayer::random(DIM, 8, &mut rng).unwrap()).collect();
    let mut x = FeatureSequence::random(LEN, DIM, 1.0, &mut rng);
    for l in &layers {
        x = l.forward(&x).unwrap();
        assert_eq!((x.len(), x.dim()), (LEN, DIM));
    }
    assert!(x.all_finite());
}

#![allow(dead_code)]

use rand::Rng as _;
use slt_core::nn::{Example, Hyperparameters, ModelConfig, Tensor, TransformerModel};
use slt_core::rng;

pub fn tiny_hp() -> Hyperparameters {
    Hyperparameters {
        hidden_dim: 8,
        num_layers: 2,
        num_heads: 2,
        dropout: 0.0,
        batch_size: 2,
        learning_rate: 1e-3,
        epochs: 1,
        ..Default::default()
    }
}

/// 8x8 grayscale frames, 3 content glosses (ids 5..8) and 4 content words (ids 4..8).
pub fn tiny_config(hp: &Hyperparameters) -> ModelConfig {
    let mut c = ModelConfig::new((8, 8, 1), hp, 8, 8);
    c.pool = 4;
    c
}

pub fn tiny_model(seed: u64) -> TransformerModel {
    TransformerModel::new(tiny_config(&tiny_hp()), seed).unwrap()
}

pub fn random_example(seed: u64, t: usize, gloss: Vec<usize>, text: Vec<usize>) -> Example {
    let mut r = rng::seeded(seed);
    let data = (0..t * 16).map(|_| r.gen::<f64>()).collect();
    Example {
        name: format!("ex{seed}"),
        features: Tensor::matrix(t, 16, data).unwrap(),
        gloss,
        text,
    }
}

//! Deterministic toy-model generation.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use super::{LayerWeights, Model, ModelConfig, ModelWeights};
use crate::linalg::Mat;

/// Seeded toy model. Projections, embeddings, and position vectors are
/// uniform in `[-1/sqrt(d), 1/sqrt(d))`; norm scales sit near 1. The value
/// stream is a fixed function of the ChaCha8 stream, so the same seed and
/// config reproduce the same weights everywhere.
pub fn generate_toy_model(config: &ModelConfig, seed: u64) -> Model {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = config.d_model;
    let scale = 1.0 / (d as f32).sqrt();

    fn mat(rng: &mut ChaCha8Rng, scale: f32, rows: usize, cols: usize) -> Mat {
        let data = (0..rows * cols).map(|_| uniform(rng) * scale).collect();
        Mat::from_flat(rows, cols, data)
    }
    let embed = mat(&mut rng, scale, config.vocab_size, d);
    let pos = mat(&mut rng, scale, config.max_seq, d);
    let mut layers = Vec::with_capacity(config.n_layers);
    for _ in 0..config.n_layers {
        layers.push(LayerWeights {
            attn_norm: norm_scales(&mut rng, d),
            wq: mat(&mut rng, scale, d, d),
            wk: mat(&mut rng, scale, d, d),
            wv: mat(&mut rng, scale, d, d),
            wo: mat(&mut rng, scale, d, d),
            ffn_norm: norm_scales(&mut rng, d),
            w1: mat(&mut rng, scale, config.d_ff, d),
            w2: mat(&mut rng, scale, d, config.d_ff),
        });
    }
    let final_norm = norm_scales(&mut rng, d);
    let unembed = if config.tied_embeddings {
        embed.clone()
    } else {
        mat(&mut rng, scale, config.vocab_size, d)
    };

    Model {
        config: config.clone(),
        weights: ModelWeights {
            embed,
            pos,
            layers,
            final_norm,
            unembed,
        },
    }
}

pub(crate) fn uniform(rng: &mut ChaCha8Rng) -> f32 {
    // 24 high bits -> [0,1) exactly representable, then shift to [-1,1)
    ((rng.next_u32() >> 8) as f32) * (2.0 / 16_777_216.0) - 1.0
}

fn norm_scales(rng: &mut ChaCha8Rng, d: usize) -> Vec<f32> {
    (0..d).map(|_| 1.0 + 0.05 * uniform(rng)).collect()
}

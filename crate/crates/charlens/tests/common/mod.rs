//! Shared test fixtures: hand-built models whose behavior is decided by one
//! known mechanism, plus small helpers for randomized parity tests.
//!
//! Both fixtures use d = 8 with weights assembled from coordinate axes, RMS
//! norms with all scales at 1 (direction-preserving), zeroed MLPs, and
//! untied embeddings, so every path from input to logits can be traced by
//! hand.

#![allow(dead_code)]

use charlens::harness::EvalRecord;
use charlens::linalg::Mat;
use charlens::model::{LayerWeights, Model, ModelConfig, ModelWeights, NormKind};
use charlens::tokenize::{bytes, Vocabulary};

pub fn axis(d: usize, i: usize, s: f32) -> Vec<f32> {
    let mut v = vec![0.0; d];
    v[i] = s;
    v
}

/// `s * e_out ⊗ e_in`: reads the `in_axis` component, writes `out_axis`.
pub fn outer(d: usize, out_axis: usize, in_axis: usize, s: f32) -> Mat {
    let mut m = Mat::zeros(d, d);
    m.set(out_axis, in_axis, s);
    m
}

pub fn identity(d: usize) -> Mat {
    let mut m = Mat::zeros(d, d);
    for i in 0..d {
        m.set(i, i, 1.0);
    }
    m
}

fn zero_layer(d: usize, d_ff: usize) -> LayerWeights {
    LayerWeights {
        attn_norm: vec![1.0; d],
        wq: Mat::zeros(d, d),
        wk: Mat::zeros(d, d),
        wv: Mat::zeros(d, d),
        wo: identity(d),
        ffn_norm: vec![1.0; d],
        w1: Mat::zeros(d_ff, d),
        w2: Mat::zeros(d, d_ff),
    }
}

/// Byte vocabulary plus left-to-right chain merges for each word.
pub fn byte_vocab_with_merges(words: &[&str]) -> Vocabulary {
    let mut entries: Vec<(String, u32)> = (0u16..256)
        .map(|b| (bytes::byte_to_char(b as u8).to_string(), b as u32))
        .collect();
    let mut pairs = Vec::new();
    let mut next_id = 256u32;
    for w in words {
        let mapped = bytes::bytes_to_token_str(w.as_bytes());
        let cs: Vec<String> = mapped.chars().map(|c| c.to_string()).collect();
        let mut left = cs[0].clone();
        for c in &cs[1..] {
            let joined = format!("{left}{c}");
            if !entries.iter().any(|(s, _)| s == &joined) {
                entries.push((joined.clone(), next_id));
                next_id += 1;
                pairs.push((left.clone(), c.clone()));
            }
            left = joined;
        }
    }
    Vocabulary::from_entries(entries, pairs).unwrap()
}

/// Fixture whose answer rides on a single token direction.
///
/// Axes: e1 = generic characters, e2 = the unused control word "qz",
/// e3 = the target word "xy" (and option A's readout), e4 = ':' (and option
/// B's readout). The single block attends uniformly and copies each
/// position's e3 component back into the stream, so the final position's A
/// logit exists only while the "xy" span still carries e3. Clean answer: A.
/// Removing e3 from the span starting at residual index 0 starves the copy
/// and flips the answer to B; removing the "qz" direction changes nothing.
pub struct DirectionFixture {
    pub model: Model,
    pub vocab: Vocabulary,
    pub record: EvalRecord,
    pub target_id: u32,
    pub unused_id: u32,
}

pub fn direction_fixture() -> DirectionFixture {
    let d = 8;
    let vocab = byte_vocab_with_merges(&["xy", "qz"]);
    let target_id = vocab.id_of_text("xy").unwrap();
    let unused_id = vocab.id_of_text("qz").unwrap();
    let v = vocab.size();

    let config = ModelConfig {
        n_layers: 1,
        n_heads: 1,
        d_model: d,
        head_dim: d,
        d_ff: 4,
        vocab_size: v,
        max_seq: 64,
        norm_kind: NormKind::Rms,
        tied_embeddings: false,
    };

    let mut embed = Mat::from_rows((0..v).map(|_| axis(d, 1, 4.0)).collect());
    for ch in *b"xy" {
        embed.row_mut(ch as usize).copy_from_slice(&axis(d, 3, 4.0));
    }
    for ch in *b"qz" {
        embed.row_mut(ch as usize).copy_from_slice(&axis(d, 2, 4.0));
    }
    embed.row_mut(b':' as usize).copy_from_slice(&axis(d, 4, 4.0));

    let mut layer = zero_layer(d, config.d_ff);
    // zero queries/keys -> uniform causal attention; values copy e3
    layer.wv = outer(d, 3, 3, 16.0);

    let mut unembed = Mat::from_rows((0..v).map(|_| axis(d, 7, 0.01)).collect());
    unembed.row_mut(b'A' as usize).copy_from_slice(&axis(d, 3, 1.0));
    unembed
        .row_mut(b'B' as usize)
        .copy_from_slice(&axis(d, 4, 0.25));
    unembed
        .row_mut(target_id as usize)
        .copy_from_slice(&axis(d, 3, 1.0));
    unembed
        .row_mut(unused_id as usize)
        .copy_from_slice(&axis(d, 2, 1.0));

    let model = Model {
        weights: ModelWeights {
            embed,
            pos: Mat::zeros(config.max_seq, d),
            layers: vec![layer],
            final_norm: vec![1.0; d],
            unembed,
        },
        config,
    };
    model.validate().unwrap();

    let record = EvalRecord {
        id: "direction-0".into(),
        question: "what is xy near qz".into(),
        options: vec![("A".into(), "pond".into()), ("B".into(), "reef".into())],
        answer_label: "A".into(),
    };

    DirectionFixture {
        model,
        vocab,
        record,
        target_id,
        unused_id,
    }
}

/// Fixture whose answer (and the recoverability of its one multi-character
/// token) requires in-group attention at block 0.
///
/// Axes: e0 = generic characters (and option B's readout), e1 = 'x',
/// e2 = 'y', e3 = the aggregation marker block 0 copies from 'x' into 'y'
/// (in-group), e5 = option A's readout, e6 = query/key channel, e7 = the
/// final position's tag. Block 0 points 'y' at 'x' and delivers e3; block 1
/// points the final position at 'y' and converts its e3 into e5. The "xy"
/// readout direction mixes e2 + e3, so with K = 1 the token decodes at 'y'
/// only after aggregation; byte tokens 0x01 (pure e2) and 0x02 (pure e3)
/// outrank it otherwise. Masking in-group attention at block 0 therefore
/// flips the answer A -> B and lowers recovery at residual index 1; masking
/// only block 1 does neither.
pub struct GroupFixture {
    pub model: Model,
    pub vocab: Vocabulary,
    pub record: EvalRecord,
    pub target_id: u32,
    /// model positions of 'x' and 'y' in the character-mode prompt
    pub span: (usize, usize),
}

pub fn group_fixture() -> GroupFixture {
    let d = 8;
    let vocab = byte_vocab_with_merges(&["xy"]);
    let target_id = vocab.id_of_text("xy").unwrap();
    let v = vocab.size();

    let record = EvalRecord {
        id: "group-0".into(),
        question: "what is xy".into(),
        options: vec![("A".into(), "pond".into()), ("B".into(), "reef".into())],
        answer_label: "A".into(),
    };
    let prompt = charlens::harness::build_prompt(&record);
    let x_pos = prompt.find('x').unwrap();
    let final_pos = prompt.len() - 1;

    let config = ModelConfig {
        n_layers: 2,
        n_heads: 1,
        d_model: d,
        head_dim: d,
        d_ff: 4,
        vocab_size: v,
        max_seq: 64,
        norm_kind: NormKind::Rms,
        tied_embeddings: false,
    };

    let mut embed = Mat::from_rows((0..v).map(|_| axis(d, 0, 4.0)).collect());
    embed.row_mut(b'x' as usize).copy_from_slice(&axis(d, 1, 4.0));
    embed.row_mut(b'y' as usize).copy_from_slice(&axis(d, 2, 4.0));

    let mut pos = Mat::zeros(config.max_seq, d);
    pos.row_mut(final_pos).copy_from_slice(&axis(d, 7, 4.0));

    // block 0: 'y' (e2 query) attends to 'x' (e1 key); values turn e1 into e3
    let mut block0 = zero_layer(d, config.d_ff);
    block0.wq = outer(d, 6, 2, 7.0);
    block0.wk = outer(d, 6, 1, 1.0);
    block0.wv = outer(d, 3, 1, 2.5);

    // block 1: the final position (e7 query) attends to 'y' (e2 key);
    // values turn e3 into e5
    let mut block1 = zero_layer(d, config.d_ff);
    block1.wq = outer(d, 6, 7, 20.0);
    block1.wk = outer(d, 6, 2, 1.0);
    block1.wv = outer(d, 5, 3, 4.0);

    let mut unembed = Mat::from_rows((0..v).map(|_| axis(d, 4, 0.01)).collect());
    unembed.row_mut(b'A' as usize).copy_from_slice(&axis(d, 5, 3.0));
    unembed.row_mut(b'B' as usize).copy_from_slice(&axis(d, 0, 2.0));
    unembed.row_mut(0x01).copy_from_slice(&axis(d, 2, 2.0));
    unembed.row_mut(0x02).copy_from_slice(&axis(d, 3, 2.0));
    let mut xy_dir = vec![0.0; d];
    xy_dir[2] = 2.0 / f32::sqrt(2.0);
    xy_dir[3] = 2.0 / f32::sqrt(2.0);
    unembed.row_mut(target_id as usize).copy_from_slice(&xy_dir);

    let model = Model {
        weights: ModelWeights {
            embed,
            pos,
            layers: vec![block0, block1],
            final_norm: vec![1.0; d],
            unembed,
        },
        config,
    };
    model.validate().unwrap();

    GroupFixture {
        model,
        vocab,
        record,
        target_id,
        span: (x_pos, x_pos + 2),
    }
}

/// Configs spanning depth, heads, norm kind, and tying for parity tests.
pub fn parity_configs() -> Vec<ModelConfig> {
    let mut configs = Vec::new();
    for &n_layers in &[0usize, 1, 2, 4] {
        for &n_heads in &[1usize, 2] {
            for &norm_kind in &[NormKind::Rms, NormKind::Layer] {
                configs.push(ModelConfig {
                    n_layers,
                    n_heads,
                    d_model: 16,
                    head_dim: 16 / n_heads,
                    d_ff: 32,
                    vocab_size: 60,
                    max_seq: 24,
                    norm_kind,
                    tied_embeddings: false,
                });
            }
        }
    }
    // tied variants to round the set out
    for (i, &n_layers) in [1usize, 2, 4, 2].iter().enumerate() {
        configs.push(ModelConfig {
            n_layers,
            n_heads: 2,
            d_model: 16,
            head_dim: 8,
            d_ff: 32,
            vocab_size: 60,
            max_seq: 24,
            norm_kind: if i % 2 == 0 {
                NormKind::Rms
            } else {
                NormKind::Layer
            },
            tied_embeddings: true,
        });
    }
    configs
}

pub fn prompt_ids(seed: u64, len: usize, vocab_size: usize) -> Vec<u32> {
    use rand_core::{RngCore, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..len)
        .map(|_| rng.next_u32() % vocab_size as u32)
        .collect()
}

//! Set-based and in-group recovery recomputed by full enumeration: decode
//! every position with a full |V| sort, build the union sets explicitly,
//! and count intersections.

use std::collections::HashSet;

use charlens::model::{CapturedRun, Model, NormKind};
use charlens::recovery::TargetSet;
use charlens::tokenize::GroupStructure;

/// All token ids sorted by (logit desc, id asc), truncated to `k`.
pub fn full_sort_topk(logits: &[f32], k: usize) -> Vec<u32> {
    let mut ids: Vec<u32> = (0..logits.len() as u32).collect();
    ids.sort_by(|a, b| {
        logits[*b as usize]
            .total_cmp(&logits[*a as usize])
            .then(a.cmp(b))
    });
    ids.truncate(k);
    ids
}

fn decode_position(model: &Model, hidden: &[f32]) -> Vec<f32> {
    let c = &model.config;
    let d = c.d_model;
    let scale = &model.weights.final_norm;
    let mut normed = vec![0.0f32; d];
    match c.norm_kind {
        NormKind::Rms => {
            let mut ss = 0.0f32;
            for i in 0..d {
                ss += hidden[i] * hidden[i];
            }
            let inv = 1.0 / (ss / d as f32 + 1e-5).sqrt();
            for i in 0..d {
                normed[i] = hidden[i] * inv * scale[i];
            }
        }
        NormKind::Layer => {
            let mut mean = 0.0f32;
            for i in 0..d {
                mean += hidden[i];
            }
            mean /= d as f32;
            let mut var = 0.0f32;
            for i in 0..d {
                var += (hidden[i] - mean) * (hidden[i] - mean);
            }
            var /= d as f32;
            let inv = 1.0 / (var + 1e-5).sqrt();
            for i in 0..d {
                normed[i] = (hidden[i] - mean) * inv * scale[i];
            }
        }
    }
    let mut logits = vec![0.0f32; c.vocab_size];
    for (t, logit) in logits.iter_mut().enumerate() {
        let row = model.weights.unembed.row(t);
        let mut acc = 0.0f32;
        for i in 0..d {
            acc += row[i] * normed[i];
        }
        *logit = acc;
    }
    logits
}

/// Recovery score recomputed from scratch on the run's captured hidden
/// states. `in_group` switches to the span-restricted variant.
pub fn oracle_recovery(
    model: &Model,
    run: &CapturedRun,
    targets: &TargetSet,
    groups: &GroupStructure,
    layer: usize,
    k: usize,
    in_group: bool,
) -> f64 {
    let hidden = run.hidden_at(layer).expect("hidden captured");
    let mut per_position: Vec<Vec<u32>> = Vec::with_capacity(hidden.rows());
    for j in 0..hidden.rows() {
        let logits = decode_position(model, hidden.row(j));
        per_position.push(full_sort_topk(&logits, k));
    }

    if in_group {
        let mut unique: Vec<u32> = groups.groups.iter().map(|g| g.token_id).collect();
        unique.sort_unstable();
        unique.dedup();
        let mut hits = 0usize;
        for &tid in &unique {
            let mut union: HashSet<u32> = HashSet::new();
            for g in groups.groups.iter().filter(|g| g.token_id == tid) {
                for j in g.start..g.end {
                    union.extend(per_position[j].iter().copied());
                }
            }
            if union.contains(&tid) {
                hits += 1;
            }
        }
        hits as f64 / unique.len() as f64
    } else {
        let mut union: HashSet<u32> = HashSet::new();
        for set in &per_position {
            union.extend(set.iter().copied());
        }
        let hits = targets.ids().iter().filter(|t| union.contains(t)).count();
        hits as f64 / targets.len() as f64
    }
}

/// Set-based recovery over a position window only; an empty window recovers
/// nothing.
pub fn oracle_recovery_windowed(
    model: &Model,
    run: &CapturedRun,
    targets: &TargetSet,
    layer: usize,
    k: usize,
    window: std::ops::Range<usize>,
) -> f64 {
    let hidden = run.hidden_at(layer).expect("hidden captured");
    let mut union: HashSet<u32> = HashSet::new();
    for j in window {
        let logits = decode_position(model, hidden.row(j));
        union.extend(full_sort_topk(&logits, k));
    }
    let hits = targets.ids().iter().filter(|t| union.contains(t)).count();
    hits as f64 / targets.len() as f64
}

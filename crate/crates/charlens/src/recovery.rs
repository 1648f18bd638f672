//! Layerwise decoding of hidden states through the output embedding, and
//! the word-recovery scores built on it.
//!
//! For a captured run over a character-level input, a canonical token counts
//! as recovered at a layer if its id appears in the union of per-position
//! top-K decoded ids. The set-based score `r_set` takes that union over the
//! whole sequence; the in-group variant `r_group` only looks at positions
//! inside the token's own character span.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CapturedRun, Model};
use crate::par;
use crate::tokenize::GroupStructure;

/// Default number of decoded candidates per position.
pub const DEFAULT_TOP_K: usize = 5;

/// K values covered by the standard sweep.
pub const SWEEP_KS: [usize; 6] = [1, 2, 3, 5, 10, 20];

/// Unique canonical token ids of one example.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TargetSet {
    ids: Vec<u32>,
}

impl TargetSet {
    pub fn from_ids(ids: impl IntoIterator<Item = u32>) -> Self {
        let mut ids: Vec<u32> = ids.into_iter().collect();
        ids.sort_unstable();
        ids.dedup();
        TargetSet { ids }
    }

    pub fn from_groups(groups: &GroupStructure) -> Self {
        TargetSet {
            ids: groups.unique_ids(),
        }
    }

    pub fn ids(&self) -> &[u32] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Top-`k` token ids for one hidden state, highest logit first, ties broken
/// toward the lower id. Applies the final norm before projecting.
pub fn decode_topk(model: &Model, hidden: &[f32], k: usize) -> Result<Vec<u32>> {
    decode_topk_with(model, hidden, k, true)
}

/// Same as [`decode_topk`] with the final norm configurable (identity when
/// `apply_final_norm` is false).
pub fn decode_topk_with(
    model: &Model,
    hidden: &[f32],
    k: usize,
    apply_final_norm: bool,
) -> Result<Vec<u32>> {
    let v = model.config.vocab_size;
    if k == 0 || k > v {
        return Err(Error::KOutOfRange { k, vocab_size: v });
    }
    if !hidden.iter().all(|x| x.is_finite()) {
        return Err(Error::NonFinite("hidden state".into()));
    }
    let logits = model.lens_logits(hidden, apply_final_norm);
    Ok(top_k_ids(&logits, k))
}

/// Rank order only depends on the logits, so no softmax is needed: the
/// monotone max-shifted softmax cannot reorder them.
fn top_k_ids(logits: &[f32], k: usize) -> Vec<u32> {
    let cmp = |a: &u32, b: &u32| {
        logits[*b as usize]
            .total_cmp(&logits[*a as usize])
            .then(a.cmp(b))
    };
    let mut ids: Vec<u32> = (0..logits.len() as u32).collect();
    if k < ids.len() {
        ids.select_nth_unstable_by(k - 1, cmp);
        ids.truncate(k);
    }
    ids.sort_unstable_by(cmp);
    ids
}

fn layer_hidden(run: &CapturedRun, layer: usize) -> Result<&crate::linalg::Mat> {
    let n = run.hidden_len();
    if n == 0 {
        return Err(Error::MissingCapture("hidden states"));
    }
    if layer >= n {
        return Err(Error::LayerOutOfRange {
            layer,
            max: n - 1,
        });
    }
    run.hidden_at(layer)
}

/// Top-k sets for every position at one layer.
fn position_topk(
    model: &Model,
    run: &CapturedRun,
    layer: usize,
    k: usize,
) -> Result<Vec<Vec<u32>>> {
    let hidden = layer_hidden(run, layer)?;
    par::try_map_range(hidden.rows(), |j| decode_topk(model, hidden.row(j), k))
}

/// Set-based recovery at one layer: |targets ∩ union of top-k over the full
/// sequence| / |targets|.
pub fn recovery_score(
    model: &Model,
    run: &CapturedRun,
    targets: &TargetSet,
    layer: usize,
    k: usize,
) -> Result<f64> {
    recovery_score_windowed(model, run, targets, layer, k, None)
}

/// Set-based recovery restricted to a position window (`None` = the whole
/// sequence).
pub fn recovery_score_windowed(
    model: &Model,
    run: &CapturedRun,
    targets: &TargetSet,
    layer: usize,
    k: usize,
    window: Option<std::ops::Range<usize>>,
) -> Result<f64> {
    if targets.is_empty() {
        return Err(Error::EmptyTargets);
    }
    let sets = position_topk(model, run, layer, k)?;
    let window = window.unwrap_or(0..sets.len());
    let mut decoded = HashSet::new();
    for set in &sets[window] {
        decoded.extend(set.iter().copied());
    }
    let hit = targets.ids().iter().filter(|t| decoded.contains(t)).count();
    Ok(hit as f64 / targets.len() as f64)
}

/// In-group recovery at one layer: a token counts only if it decodes from a
/// position inside one of its own spans. Duplicated tokens contribute one
/// indicator over the union of their spans.
pub fn in_group_recovery_score(
    model: &Model,
    run: &CapturedRun,
    groups: &GroupStructure,
    layer: usize,
    k: usize,
) -> Result<f64> {
    if groups.groups.is_empty() {
        return Err(Error::EmptyTargets);
    }
    let sets = position_topk(model, run, layer, k)?;
    let unique = groups.unique_ids();
    let mut hit = 0usize;
    for &tid in &unique {
        let found = groups
            .groups
            .iter()
            .filter(|g| g.token_id == tid)
            .flat_map(|g| g.start..g.end)
            .any(|j| sets[j].contains(&tid));
        if found {
            hit += 1;
        }
    }
    Ok(hit as f64 / unique.len() as f64)
}

/// Recovery scores for every residual index 0..=L plus the max-over-layers
/// summary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoveryProfile {
    pub k: usize,
    pub per_layer: Vec<f64>,
    pub per_layer_group: Vec<f64>,
    pub max_score: f64,
    pub max_layer: usize,
}

impl RecoveryProfile {
    /// Build from precomputed per-layer columns; fills the max summary
    /// (lowest layer wins ties).
    pub fn from_columns(k: usize, per_layer: Vec<f64>, per_layer_group: Vec<f64>) -> Self {
        let (max_layer, max_score) = per_layer
            .iter()
            .enumerate()
            .fold((0usize, f64::NEG_INFINITY), |(bi, bv), (i, &v)| {
                if v > bv {
                    (i, v)
                } else {
                    (bi, bv)
                }
            });
        RecoveryProfile {
            k,
            per_layer,
            per_layer_group,
            max_score,
            max_layer,
        }
    }

    pub fn layers(&self) -> usize {
        self.per_layer.len()
    }
}

/// Both recovery scores at every captured layer.
pub fn recovery_profile(
    model: &Model,
    run: &CapturedRun,
    targets: &TargetSet,
    groups: &GroupStructure,
    k: usize,
) -> Result<RecoveryProfile> {
    if targets.is_empty() {
        return Err(Error::EmptyTargets);
    }
    let n_layers = run.hidden_len();
    if n_layers == 0 {
        return Err(Error::MissingCapture("hidden states"));
    }
    let unique = groups.unique_ids();
    let columns: Vec<(f64, f64)> = par::try_map_range(n_layers, |layer| {
        let sets = position_topk(model, run, layer, k)?;
        let mut decoded = HashSet::new();
        for set in &sets {
            decoded.extend(set.iter().copied());
        }
        let set_hits = targets.ids().iter().filter(|t| decoded.contains(t)).count();
        let mut group_hits = 0usize;
        for &tid in &unique {
            let found = groups
                .groups
                .iter()
                .filter(|g| g.token_id == tid)
                .flat_map(|g| g.start..g.end)
                .any(|j| sets[j].contains(&tid));
            if found {
                group_hits += 1;
            }
        }
        Ok::<_, Error>((
            set_hits as f64 / targets.len() as f64,
            group_hits as f64 / unique.len().max(1) as f64,
        ))
    })?;
    let (per_layer, per_layer_group) = columns.into_iter().unzip();
    Ok(RecoveryProfile::from_columns(k, per_layer, per_layer_group))
}

/// One profile per requested K, in input order.
pub fn topk_sweep(
    model: &Model,
    run: &CapturedRun,
    targets: &TargetSet,
    groups: &GroupStructure,
    ks: &[usize],
) -> Result<Vec<RecoveryProfile>> {
    if ks.is_empty() {
        return Err(Error::InvalidSpec("empty K list".into()));
    }
    par::try_map_slice(ks, |&k| recovery_profile(model, run, targets, groups, k))
}

//! Targeted removal of token directions from the residual stream.
//!
//! For a selected canonical token t with character span [s, e), the hook
//! rewrites every span position j at every residual index in
//! `[start_layer, end_layer]` as `h <- h - <h, w_t> w_t`, where `w_t` is the
//! token's output-embedding direction. With `w_t` unit-normalized (the
//! default) this deletes the full component and is idempotent; raw mode uses
//! the stored row as-is.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::{score_options, EvalRecord, TokenizerMode};
use crate::linalg::Mat;
use crate::model::{CapturedRun, HookSet, Model};
use crate::recovery::{self, DEFAULT_TOP_K};
use crate::tokenize::{Group, GroupStructure, Vocabulary};

/// How the set of intervened tokens is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetMode {
    /// Every canonical token of the example.
    AllCanonical,
    /// Only tokens already decodable at `start_layer` in a clean run.
    RecoveredAtStart,
    /// An explicit token-id list; each id must occur in the example.
    ExplicitList,
}

#[derive(Clone, Debug)]
pub struct InterventionSpec {
    pub start_layer: usize,
    /// Inclusive; `None` means the final residual index L.
    pub end_layer: Option<usize>,
    pub target_mode: TargetMode,
    pub explicit_targets: Vec<u32>,
    pub normalize_direction: bool,
    /// K used to detect recovered tokens in `RecoveredAtStart` mode.
    pub detection_k: usize,
}

impl InterventionSpec {
    pub fn all_canonical(start_layer: usize) -> Self {
        InterventionSpec {
            start_layer,
            end_layer: None,
            target_mode: TargetMode::AllCanonical,
            explicit_targets: Vec::new(),
            normalize_direction: true,
            detection_k: DEFAULT_TOP_K,
        }
    }

    pub fn explicit(start_layer: usize, targets: Vec<u32>) -> Self {
        InterventionSpec {
            start_layer,
            end_layer: None,
            target_mode: TargetMode::ExplicitList,
            explicit_targets: targets,
            normalize_direction: true,
            detection_k: DEFAULT_TOP_K,
        }
    }

    /// Resolved inclusive layer range; empty when `start_layer` points past
    /// it (the "no layers" sentinel).
    pub fn layer_range(&self, n_layers: usize) -> std::ops::RangeInclusive<usize> {
        self.start_layer..=self.end_layer.unwrap_or(n_layers)
    }

    pub fn validate(&self, n_layers: usize) -> Result<()> {
        if let Some(end) = self.end_layer {
            if end > n_layers {
                return Err(Error::InvalidSpec(format!(
                    "end_layer {end} exceeds final residual index {n_layers}"
                )));
            }
        }
        match self.target_mode {
            TargetMode::ExplicitList if self.explicit_targets.is_empty() => Err(
                Error::InvalidSpec("explicit_list mode requires explicit_targets".into()),
            ),
            TargetMode::ExplicitList => Ok(()),
            _ if !self.explicit_targets.is_empty() => Err(Error::InvalidSpec(
                "explicit_targets only valid in explicit_list mode".into(),
            )),
            _ => {
                if self.detection_k == 0 {
                    return Err(Error::InvalidSpec("detection_k must be >= 1".into()));
                }
                Ok(())
            }
        }
    }
}

/// `h - <h, w> w`. Removes the component of `h` along `w`; exact projection
/// when `w` has unit norm.
pub fn remove_token_subspace(h: &[f32], w: &[f32]) -> Result<Vec<f32>> {
    if !h.iter().all(|x| x.is_finite()) || !w.iter().all(|x| x.is_finite()) {
        return Err(Error::NonFinite("subspace removal input".into()));
    }
    Ok(project_out(h, w))
}

fn project_out(h: &[f32], w: &[f32]) -> Vec<f32> {
    let c = crate::linalg::dot(h, w);
    h.iter().zip(w).map(|(hv, wv)| hv - c * wv).collect()
}

/// Which groups the spec selects for an example. `clean_run` (with hidden
/// captures) is required for `RecoveredAtStart`.
pub fn resolve_targets(
    spec: &InterventionSpec,
    groups: &GroupStructure,
    model: &Model,
    clean_run: Option<&CapturedRun>,
) -> Result<Vec<Group>> {
    spec.validate(model.config.n_layers)?;
    match spec.target_mode {
        TargetMode::AllCanonical => Ok(groups.groups.clone()),
        TargetMode::ExplicitList => {
            let mut out = Vec::new();
            for &tid in &spec.explicit_targets {
                let matched: Vec<Group> = groups
                    .groups
                    .iter()
                    .copied()
                    .filter(|g| g.token_id == tid)
                    .collect();
                if matched.is_empty() {
                    return Err(Error::InvalidSpec(format!(
                        "explicit target {tid} does not occur in the example"
                    )));
                }
                out.extend(matched);
            }
            Ok(out)
        }
        TargetMode::RecoveredAtStart => {
            let run = clean_run.ok_or(Error::MissingCapture(
                "clean run required for recovered_at_start",
            ))?;
            let detect_layer = spec.start_layer.min(model.config.n_layers);
            let hidden = run.hidden_at(detect_layer)?;
            let mut decoded = std::collections::HashSet::new();
            for j in 0..hidden.rows() {
                decoded.extend(recovery::decode_topk(model, hidden.row(j), spec.detection_k)?);
            }
            Ok(groups
                .groups
                .iter()
                .copied()
                .filter(|g| decoded.contains(&g.token_id))
                .collect())
        }
    }
}

/// Residual hook implementing the spec against one example's groups.
pub fn build_intervention_hooks(
    spec: &InterventionSpec,
    groups: &GroupStructure,
    model: &Model,
    clean_run: Option<&CapturedRun>,
) -> Result<HookSet> {
    let range = spec.layer_range(model.config.n_layers);
    if range.is_empty() {
        return Ok(HookSet::new());
    }
    let targets = resolve_targets(spec, groups, model, clean_run)?;
    if targets.is_empty() {
        return Ok(HookSet::new());
    }
    let mut directed: Vec<(usize, usize, Vec<f32>)> = Vec::with_capacity(targets.len());
    for g in &targets {
        let w = if spec.normalize_direction {
            model.token_direction(g.token_id)?
        } else {
            model.raw_token_direction(g.token_id)?
        };
        directed.push((g.start, g.end, w));
    }
    let (lo, hi) = (*range.start(), *range.end());
    let hook = move |layer: usize, state: &mut Mat| {
        if layer < lo || layer > hi {
            return;
        }
        for (start, end, w) in &directed {
            for j in *start..(*end).min(state.rows()) {
                let row = state.row_mut(j);
                let c = crate::linalg::dot(row, w);
                for (rv, wv) in row.iter_mut().zip(w) {
                    *rv -= c * wv;
                }
            }
        }
    };
    Ok(HookSet::new().with_residual(Box::new(hook)))
}

/// One sweep observation for an example.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepPoint {
    pub l0: usize,
    pub correct: bool,
    pub recovery_at_l0: f64,
}

/// Evaluate one example under intervention starting at every residual index
/// `0..=L`, pairing each outcome with the clean recovery score at that
/// index.
pub fn intervention_layer_sweep(
    model: &Model,
    vocab: &Vocabulary,
    record: &EvalRecord,
    spec_template: &InterventionSpec,
    k: usize,
) -> Result<Vec<SweepPoint>> {
    let ctx = crate::harness::prepare_char(vocab, &crate::harness::build_prompt(record))?;
    let clean = model.forward(&ctx.chars.token_ids, &HookSet::capturing_hidden())?;
    let n_layers = model.config.n_layers;
    crate::par::try_map_range(n_layers + 1, |l0| {
        let mut spec = spec_template.clone();
        spec.start_layer = l0;
        spec.end_layer = Some(n_layers);
        let hooks = build_intervention_hooks(&spec, &ctx.groups, model, Some(&clean))?;
        let chosen = score_options(model, vocab, record, TokenizerMode::Character, &hooks)?;
        let recovery_at_l0 = recovery::recovery_score(model, &clean, &ctx.targets, l0, k)?;
        Ok(SweepPoint {
            l0,
            correct: chosen == record.answer_label,
            recovery_at_l0,
        })
    })
}

/// Dataset-level sweep row: accuracy under intervention from `l0`, plus the
/// mean clean recovery score at `l0`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DatasetSweepRow {
    pub l0: usize,
    pub accuracy: f64,
    pub recovery_at_l0: f64,
}

/// Aggregate [`intervention_layer_sweep`] over a dataset: per starting
/// index, the accuracy and the mean recovery at that index.
pub fn dataset_layer_sweep(
    model: &Model,
    vocab: &Vocabulary,
    dataset: &[EvalRecord],
    spec_template: &InterventionSpec,
    k: usize,
) -> Result<Vec<DatasetSweepRow>> {
    let per_example: Vec<Vec<SweepPoint>> = crate::par::try_map_slice(dataset, |record| {
        intervention_layer_sweep(model, vocab, record, spec_template, k)
    })?;
    let n_layers = model.config.n_layers;
    let n = dataset.len().max(1) as f64;
    let mut rows = Vec::with_capacity(n_layers + 1);
    for l0 in 0..=n_layers {
        let correct = per_example.iter().filter(|pts| pts[l0].correct).count();
        let recovery_sum: f64 = per_example.iter().map(|pts| pts[l0].recovery_at_l0).sum();
        rows.push(DatasetSweepRow {
            l0,
            accuracy: crate::export::round6(correct as f64 / n),
            recovery_at_l0: crate::export::round6(recovery_sum / n),
        });
    }
    Ok(rows)
}

/// One sweep row for a single starting index over a dataset, without
/// evaluating the other indices.
pub fn dataset_single_point(
    model: &Model,
    vocab: &Vocabulary,
    dataset: &[EvalRecord],
    spec: &InterventionSpec,
    k: usize,
) -> Result<DatasetSweepRow> {
    let points: Vec<(bool, f64)> = crate::par::try_map_slice(dataset, |record| {
        let ctx = crate::harness::prepare_char(vocab, &crate::harness::build_prompt(record))?;
        let clean = model.forward(&ctx.chars.token_ids, &HookSet::capturing_hidden())?;
        let hooks = build_intervention_hooks(spec, &ctx.groups, model, Some(&clean))?;
        let chosen = score_options(model, vocab, record, TokenizerMode::Character, &hooks)?;
        let detect_layer = spec.start_layer.min(model.config.n_layers);
        let recovery = recovery::recovery_score(model, &clean, &ctx.targets, detect_layer, k)?;
        Ok::<_, Error>((chosen == record.answer_label, recovery))
    })?;
    let n = dataset.len().max(1) as f64;
    let correct = points.iter().filter(|(ok, _)| *ok).count();
    let recovery_sum: f64 = points.iter().map(|(_, r)| r).sum();
    Ok(DatasetSweepRow {
        l0: spec.start_layer,
        accuracy: crate::export::round6(correct as f64 / n),
        recovery_at_l0: crate::export::round6(recovery_sum / n),
    })
}

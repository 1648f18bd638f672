//! In-group attention masking: suppress pre-softmax attention among
//! character positions of the same canonical token over a block range, so
//! those characters cannot exchange information there.
//!
//! Masked entries are set to [`MASK_VALUE`](crate::model::MASK_VALUE) and
//! come out of the softmax exactly zero. The diagonal is left alone by
//! default: masking it can empty an entire attention row (for example a
//! sequence-initial group), which the engine rejects rather than producing
//! NaN.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::{evaluate, EvalRecord, HookPlan, TokenizerMode};
use crate::linalg::Mat;
use crate::model::{HookSet, Model, MASK_VALUE};
use crate::recovery::{recovery_profile, RecoveryProfile, TargetSet};
use crate::tokenize::{GroupStructure, Vocabulary};

/// Default number of leading blocks masked by the masked-recovery
/// comparison.
pub const DEFAULT_MASKED_LAYERS: usize = 5;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum HeadSelection {
    All,
    Subset(Vec<usize>),
}

impl HeadSelection {
    fn selects(&self, head: usize) -> bool {
        match self {
            HeadSelection::All => true,
            HeadSelection::Subset(hs) => hs.contains(&head),
        }
    }
}

/// Block range and options for in-group masking. Block indices are 0-based:
/// block `l` produces residual index `l + 1`.
#[derive(Clone, Debug)]
pub struct MaskSpec {
    pub start_layer: usize,
    /// Inclusive; `None` means the last block (L - 1).
    pub end_layer: Option<usize>,
    pub mask_diagonal: bool,
    pub heads: HeadSelection,
}

impl MaskSpec {
    pub fn through_final(start_layer: usize) -> Self {
        MaskSpec {
            start_layer,
            end_layer: None,
            mask_diagonal: false,
            heads: HeadSelection::All,
        }
    }

    /// Mask the first `n` blocks; `n` = 0 encodes as an inverted (empty)
    /// range.
    pub fn first_n(n: usize) -> Self {
        MaskSpec {
            start_layer: if n == 0 { 1 } else { 0 },
            end_layer: Some(n.saturating_sub(1)),
            mask_diagonal: false,
            heads: HeadSelection::All,
        }
    }

    // an inverted range is the intended empty sentinel
    #[allow(clippy::reversed_empty_ranges)]
    pub fn layer_range(&self, n_layers: usize) -> std::ops::RangeInclusive<usize> {
        if n_layers == 0 {
            return 1..=0;
        }
        self.start_layer..=self.end_layer.unwrap_or(n_layers - 1)
    }

    pub fn validate(&self, n_layers: usize) -> Result<()> {
        if let Some(end) = self.end_layer {
            // an inverted range is the explicit "no layers" sentinel
            if end >= n_layers && self.start_layer <= end {
                return Err(Error::InvalidSpec(format!(
                    "end_layer {end} exceeds last block index {}",
                    n_layers.saturating_sub(1)
                )));
            }
        }
        Ok(())
    }
}

/// Attention hook writing the mask sentinel over every in-group (query, key)
/// pair of every selected (block, head) in range.
pub fn build_mask_hooks(spec: &MaskSpec, groups: &GroupStructure) -> Result<HookSet> {
    let spans: Vec<(usize, usize)> = groups
        .groups
        .iter()
        .map(|g| (g.start, g.end))
        .filter(|(s, e)| e > s)
        .collect();
    let range = spec.layer_range(usize::MAX);
    if range.is_empty() || spans.is_empty() {
        return Ok(HookSet::new());
    }
    let (lo, hi) = (*range.start(), *range.end());
    let heads = spec.heads.clone();
    let mask_diagonal = spec.mask_diagonal;
    let hook = move |layer: usize, head: usize, scores: &mut Mat| {
        if layer < lo || layer > hi || !heads.selects(head) {
            return;
        }
        let n = scores.rows();
        for &(s, e) in &spans {
            for j in s..e.min(n) {
                for k in s..e.min(n) {
                    if j == k && !mask_diagonal {
                        continue;
                    }
                    scores.set(j, k, MASK_VALUE);
                }
            }
        }
    };
    Ok(HookSet::new().with_attn(Box::new(hook)))
}

/// Character-mode accuracy with in-group masking from each starting block
/// through the last, one row per starting block.
pub fn masking_layer_sweep(
    model: &Model,
    vocab: &Vocabulary,
    dataset: &[EvalRecord],
    spec_template: &MaskSpec,
) -> Result<Vec<(usize, f64)>> {
    let n_layers = model.config.n_layers;
    let mut rows = Vec::with_capacity(n_layers);
    for l0 in 0..n_layers {
        let mut spec = spec_template.clone();
        spec.start_layer = l0;
        spec.end_layer = Some(n_layers.saturating_sub(1));
        let summary = evaluate(
            model,
            vocab,
            dataset,
            TokenizerMode::Character,
            &HookPlan::Mask(spec),
        )?;
        rows.push((l0, summary.accuracy));
    }
    Ok(rows)
}

/// Recovery profiles for one example with and without masking the first
/// `first_n_layers` blocks.
pub fn masked_recovery(
    model: &Model,
    vocab: &Vocabulary,
    record: &EvalRecord,
    first_n_layers: usize,
    k: usize,
) -> Result<(RecoveryProfile, RecoveryProfile)> {
    if first_n_layers > model.config.n_layers {
        return Err(Error::InvalidSpec(format!(
            "first_n_layers {first_n_layers} exceeds n_layers {}",
            model.config.n_layers
        )));
    }
    let ctx = crate::harness::prepare_char(vocab, &crate::harness::build_prompt(record))?;
    let targets = TargetSet::from_groups(&ctx.groups);

    let baseline_run = model.forward(&ctx.chars.token_ids, &HookSet::capturing_hidden())?;
    let baseline = recovery_profile(model, &baseline_run, &targets, &ctx.groups, k)?;

    let spec = MaskSpec::first_n(first_n_layers);
    let hooks = build_mask_hooks(&spec, &ctx.groups)?;
    let masked_run = model.forward(
        &ctx.chars.token_ids,
        &HookSet::capturing_hidden().compose(hooks),
    )?;
    let masked = recovery_profile(model, &masked_run, &targets, &ctx.groups, k)?;

    Ok((masked, baseline))
}

/// Mean masked vs baseline recovery per layer over a dataset:
/// `(layer, r_masked, r_baseline)` rows.
pub fn dataset_masked_recovery(
    model: &Model,
    vocab: &Vocabulary,
    dataset: &[EvalRecord],
    first_n_layers: usize,
    k: usize,
) -> Result<Vec<(usize, f64, f64)>> {
    let pairs: Vec<(RecoveryProfile, RecoveryProfile)> =
        crate::par::try_map_slice(dataset, |record| {
            masked_recovery(model, vocab, record, first_n_layers, k)
        })?;
    let n_layers = model.config.n_layers + 1;
    let n = dataset.len().max(1) as f64;
    let mut rows = Vec::with_capacity(n_layers);
    for layer in 0..n_layers {
        let masked: f64 = pairs.iter().map(|(m, _)| m.per_layer[layer]).sum::<f64>() / n;
        let baseline: f64 = pairs.iter().map(|(_, b)| b.per_layer[layer]).sum::<f64>() / n;
        rows.push((
            layer,
            crate::export::round6(masked),
            crate::export::round6(baseline),
        ));
    }
    Ok(rows)
}

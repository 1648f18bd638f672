//! Aggregate reports: canonical vs character accuracy, their difference,
//! and the max-over-layers mean recovery, in the shape of one summary row
//! per (model, dataset).
//!
//! CSV carries the summary row; JSON additionally carries per-layer mean
//! recovery and per-example outcomes. Both parse back losslessly.

use serde::{Deserialize, Serialize};

use super::{evaluate, prepare_char, EvalRecord, HookPlan, TokenizerMode};
use crate::error::{Error, Result};
use crate::export::{csv_err, csv_string, fmt6, json_string, round6};
use crate::model::{HookSet, Model};
use crate::par;
use crate::recovery::{recovery_profile, RecoveryProfile};
use crate::tokenize::Vocabulary;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerRecovery {
    pub layer: usize,
    pub r_set: f64,
    pub r_group: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportExample {
    pub id: String,
    pub canon_choice: String,
    pub canon_correct: bool,
    pub char_choice: String,
    pub char_correct: bool,
}

/// Summary row (the CSV schema).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub dataset: String,
    pub model: String,
    pub n_examples: usize,
    pub k: usize,
    pub canon_accuracy: f64,
    pub char_accuracy: f64,
    pub char_delta: f64,
    pub max_recovery: f64,
    pub max_recovery_layer: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    #[serde(flatten)]
    pub summary: ReportSummary,
    /// Mean recovery over examples, per residual index.
    pub per_layer: Vec<LayerRecovery>,
    pub examples: Vec<ReportExample>,
}

/// Per-layer recovery averaged over a dataset (character mode, no hooks).
pub fn dataset_mean_recovery(
    model: &Model,
    vocab: &Vocabulary,
    dataset: &[EvalRecord],
    k: usize,
) -> Result<Vec<LayerRecovery>> {
    let profiles: Vec<RecoveryProfile> = par::try_map_slice(dataset, |record| {
        let ctx = prepare_char(vocab, &super::build_prompt(record))?;
        let run = model.forward(&ctx.chars.token_ids, &HookSet::capturing_hidden())?;
        recovery_profile(model, &run, &ctx.targets, &ctx.groups, k)
    })?;
    let n_layers = model.config.n_layers + 1;
    let mut per_layer = Vec::with_capacity(n_layers);
    for layer in 0..n_layers {
        let mut set_sum = 0.0;
        let mut group_sum = 0.0;
        for p in &profiles {
            set_sum += p.per_layer[layer];
            group_sum += p.per_layer_group[layer];
        }
        let n = profiles.len().max(1) as f64;
        per_layer.push(LayerRecovery {
            layer,
            r_set: round6(set_sum / n),
            r_group: round6(group_sum / n),
        });
    }
    Ok(per_layer)
}

/// Run both tokenization modes plus per-example recovery profiles and
/// aggregate. Recovery is averaged over examples per layer first; the
/// summary reports the max of that mean column and its layer.
pub fn full_report(
    model: &Model,
    vocab: &Vocabulary,
    dataset: &[EvalRecord],
    k: usize,
    dataset_name: &str,
    model_name: &str,
) -> Result<EvalReport> {
    let canon = evaluate(model, vocab, dataset, TokenizerMode::Canonical, &HookPlan::None)?;
    let chars = evaluate(model, vocab, dataset, TokenizerMode::Character, &HookPlan::None)?;
    let per_layer = dataset_mean_recovery(model, vocab, dataset, k)?;
    let (max_recovery_layer, max_recovery) = per_layer
        .iter()
        .fold((0usize, f64::NEG_INFINITY), |(bl, bv), l| {
            if l.r_set > bv {
                (l.layer, l.r_set)
            } else {
                (bl, bv)
            }
        });

    let canon_accuracy = round6(canon.accuracy);
    let char_accuracy = round6(chars.accuracy);
    let examples = canon
        .outcomes
        .into_iter()
        .zip(chars.outcomes)
        .map(|(c, h)| ReportExample {
            id: c.id,
            canon_choice: c.chosen,
            canon_correct: c.correct,
            char_choice: h.chosen,
            char_correct: h.correct,
        })
        .collect();

    Ok(EvalReport {
        summary: ReportSummary {
            dataset: dataset_name.to_string(),
            model: model_name.to_string(),
            n_examples: dataset.len(),
            k,
            canon_accuracy,
            char_accuracy,
            char_delta: round6(char_accuracy - canon_accuracy),
            max_recovery: if max_recovery.is_finite() {
                max_recovery
            } else {
                0.0
            },
            max_recovery_layer,
        },
        per_layer,
        examples,
    })
}

const SUMMARY_HEADER: [&str; 9] = [
    "dataset",
    "model",
    "n_examples",
    "k",
    "canon_accuracy",
    "char_accuracy",
    "char_delta",
    "max_recovery",
    "max_recovery_layer",
];

impl EvalReport {
    pub fn to_csv(&self) -> Result<String> {
        let s = &self.summary;
        csv_string(|w| {
            w.write_record(SUMMARY_HEADER)?;
            w.write_record([
                s.dataset.as_str(),
                s.model.as_str(),
                &s.n_examples.to_string(),
                &s.k.to_string(),
                &fmt6(s.canon_accuracy),
                &fmt6(s.char_accuracy),
                &fmt6(s.char_delta),
                &fmt6(s.max_recovery),
                &s.max_recovery_layer.to_string(),
            ])
        })
    }

    pub fn to_json(&self) -> Result<String> {
        json_string(self)
    }

    pub fn from_json(text: &str) -> Result<EvalReport> {
        Ok(serde_json::from_str(text)?)
    }
}

impl ReportSummary {
    pub fn from_csv(text: &str) -> Result<ReportSummary> {
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        let headers = reader.headers().map_err(csv_err)?.clone();
        if headers.iter().ne(SUMMARY_HEADER) {
            return Err(Error::InvalidSpec("unexpected report CSV header".into()));
        }
        let mut rows = reader.records();
        let row = rows
            .next()
            .ok_or_else(|| Error::InvalidSpec("report CSV has no data row".into()))?
            .map_err(csv_err)?;
        let field = |i: usize| -> &str { row.get(i).unwrap_or("") };
        let parse_f = |i: usize| -> Result<f64> {
            field(i)
                .parse()
                .map_err(|_| Error::InvalidSpec(format!("bad float in column {i}")))
        };
        let parse_u = |i: usize| -> Result<usize> {
            field(i)
                .parse()
                .map_err(|_| Error::InvalidSpec(format!("bad integer in column {i}")))
        };
        Ok(ReportSummary {
            dataset: field(0).to_string(),
            model: field(1).to_string(),
            n_examples: parse_u(2)?,
            k: parse_u(3)?,
            canon_accuracy: parse_f(4)?,
            char_accuracy: parse_f(5)?,
            char_delta: parse_f(6)?,
            max_recovery: parse_f(7)?,
            max_recovery_layer: parse_u(8)?,
        })
    }
}

/// Internal-consistency check used by tests and the CLI: delta matches the
/// accuracies, max matches the per-layer column, counts match.
pub fn check_report_consistency(report: &EvalReport) -> Result<()> {
    let s = &report.summary;
    if (s.char_delta - (s.char_accuracy - s.canon_accuracy)).abs() > 1e-9 {
        return Err(Error::InvalidSpec("char_delta inconsistent".into()));
    }
    let max = report
        .per_layer
        .iter()
        .map(|l| l.r_set)
        .fold(f64::NEG_INFINITY, f64::max);
    let max = if max.is_finite() { max } else { 0.0 };
    if (s.max_recovery - max).abs() > 1e-9 {
        return Err(Error::InvalidSpec("max_recovery inconsistent".into()));
    }
    if report.examples.len() != s.n_examples {
        return Err(Error::InvalidSpec("example count mismatch".into()));
    }
    Ok(())
}

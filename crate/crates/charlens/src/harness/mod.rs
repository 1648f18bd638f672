//! Multiple-choice evaluation harness: dataset ingestion, prompt
//! construction, label-likelihood scoring under either tokenizer, and
//! batch evaluation with optional intervention/mask hooks.

pub mod report;

use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::intervene::{build_intervention_hooks, InterventionSpec, TargetMode};
use crate::mask::{build_mask_hooks, MaskSpec};
use crate::model::{HookSet, Model};
use crate::recovery::TargetSet;
use crate::tokenize::{align_spans, bpe_encode, char_tokenize, CharTokenization, GroupStructure, Vocabulary};
use crate::{par, tokenize};

/// Version tag for the prompt template below; bump on any change to
/// [`build_prompt`].
pub const PROMPT_TEMPLATE_VERSION: &str = "v1";

/// One multiple-choice record.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub id: String,
    pub question: String,
    /// Ordered `(label, text)` pairs.
    pub options: Vec<(String, String)>,
    pub answer_label: String,
}

impl EvalRecord {
    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.options.len() < 2 {
            return Err("fewer than 2 options".into());
        }
        let mut labels = std::collections::HashSet::new();
        for (label, _) in &self.options {
            if !labels.insert(label) {
                return Err(format!("duplicate option label {label:?}"));
            }
        }
        if !self.options.iter().any(|(l, _)| l == &self.answer_label) {
            return Err(format!(
                "answer_label {:?} not among option labels",
                self.answer_label
            ));
        }
        Ok(())
    }
}

/// Read a newline-delimited JSON dataset, validating each record.
pub fn load_dataset<P: AsRef<Path>>(path: P) -> Result<Vec<EvalRecord>> {
    let file = std::fs::File::open(path)?;
    let mut records = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: EvalRecord = serde_json::from_str(&line).map_err(|e| Error::Dataset {
            line: i + 1,
            msg: e.to_string(),
        })?;
        record.validate().map_err(|msg| Error::Dataset {
            line: i + 1,
            msg,
        })?;
        records.push(record);
    }
    Ok(records)
}

/// Fixed plain-text prompt (template `v1`):
///
/// ```text
/// Question: <question>
/// <label>. <text>        (one line per option)
/// Answer:
/// ```
pub fn build_prompt(record: &EvalRecord) -> String {
    let mut s = format!("Question: {}\n", record.question);
    for (label, text) in &record.options {
        s.push_str(label);
        s.push_str(". ");
        s.push_str(text);
        s.push('\n');
    }
    s.push_str("Answer:");
    s
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TokenizerMode {
    Canonical,
    Character,
}

/// Character tokenization of a text together with its group structure and
/// target set, the inputs every character-mode analysis needs.
pub struct CharContext {
    pub chars: CharTokenization,
    pub groups: GroupStructure,
    pub targets: TargetSet,
}

pub fn prepare_char(vocab: &Vocabulary, text: &str) -> Result<CharContext> {
    let canonical = bpe_encode(text, vocab);
    let chars = char_tokenize(text, vocab);
    let groups = align_spans(&canonical, &chars)?;
    let targets = TargetSet::from_groups(&groups);
    Ok(CharContext {
        chars,
        groups,
        targets,
    })
}

fn ensure_paired(model: &Model, vocab: &Vocabulary) -> Result<()> {
    if model.config.vocab_size != vocab.size() {
        return Err(Error::InvalidConfig(format!(
            "model vocab_size {} != vocabulary size {}",
            model.config.vocab_size,
            vocab.size()
        )));
    }
    Ok(())
}

/// The label's single-token id, used to read its logit.
fn label_token(vocab: &Vocabulary, label: &str) -> Result<u32> {
    let enc = tokenize::bpe_encode(label, vocab);
    match enc.token_ids.as_slice() {
        [id] => Ok(*id),
        _ => Err(Error::LabelToken(label.to_string())),
    }
}

/// Run the prompt once and pick the option whose label token has the highest
/// log-probability at the final position. Ties go to the earlier option.
pub fn score_options(
    model: &Model,
    vocab: &Vocabulary,
    record: &EvalRecord,
    mode: TokenizerMode,
    hooks: &HookSet,
) -> Result<String> {
    ensure_paired(model, vocab)?;
    record
        .validate()
        .map_err(|msg| Error::Dataset { line: 0, msg })?;
    let prompt = build_prompt(record);
    let ids = match mode {
        TokenizerMode::Canonical => bpe_encode(&prompt, vocab).token_ids,
        TokenizerMode::Character => char_tokenize(&prompt, vocab).token_ids,
    };
    let run = model.forward(&ids, hooks)?;
    let last = run.logits.row(run.seq_len() - 1);

    // shared log-softmax denominator: argmax over labels matches raw logits,
    // but report real log-probabilities
    let max = last.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let logz = max + last.iter().map(|&v| (v - max).exp()).sum::<f32>().ln();

    let mut best: Option<(f32, &str)> = None;
    for (label, _) in &record.options {
        let id = label_token(vocab, label)?;
        let logprob = last[id as usize] - logz;
        if best.is_none_or(|(b, _)| logprob > b) {
            best = Some((logprob, label));
        }
    }
    Ok(best.expect("validated records have options").1.to_string())
}

/// How each example's hooks are built during evaluation. Hooks only make
/// sense against character-mode group structure.
#[derive(Clone, Debug)]
pub enum HookPlan {
    None,
    Intervene(InterventionSpec),
    Mask(MaskSpec),
    Both(InterventionSpec, MaskSpec),
}

impl HookPlan {
    fn is_none(&self) -> bool {
        matches!(self, HookPlan::None)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExampleOutcome {
    pub id: String,
    pub chosen: String,
    pub correct: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalSummary {
    pub accuracy: f64,
    pub outcomes: Vec<ExampleOutcome>,
}

fn build_plan_hooks(
    model: &Model,
    vocab: &Vocabulary,
    record: &EvalRecord,
    plan: &HookPlan,
) -> Result<HookSet> {
    if plan.is_none() {
        return Ok(HookSet::new());
    }
    let ctx = prepare_char(vocab, &build_prompt(record))?;
    let intervention = |spec: &InterventionSpec| -> Result<HookSet> {
        let clean = if spec.target_mode == TargetMode::RecoveredAtStart {
            Some(model.forward(&ctx.chars.token_ids, &HookSet::capturing_hidden())?)
        } else {
            None
        };
        build_intervention_hooks(spec, &ctx.groups, model, clean.as_ref())
    };
    match plan {
        HookPlan::None => unreachable!(),
        HookPlan::Intervene(spec) => intervention(spec),
        HookPlan::Mask(spec) => build_mask_hooks(spec, &ctx.groups),
        HookPlan::Both(ispec, mspec) => {
            Ok(intervention(ispec)?.compose(build_mask_hooks(mspec, &ctx.groups)?))
        }
    }
}

/// Accuracy over a dataset. Examples evaluate independently (in parallel
/// with the `parallel` feature); the accuracy reduce runs sequentially over
/// the ordered outcomes, so results do not depend on scheduling.
pub fn evaluate(
    model: &Model,
    vocab: &Vocabulary,
    dataset: &[EvalRecord],
    mode: TokenizerMode,
    plan: &HookPlan,
) -> Result<EvalSummary> {
    ensure_paired(model, vocab)?;
    if mode == TokenizerMode::Canonical && !plan.is_none() {
        return Err(Error::InvalidSpec(
            "intervention and masking hooks apply to character mode only".into(),
        ));
    }
    let outcomes: Vec<ExampleOutcome> = par::try_map_slice(dataset, |record| {
        let hooks = build_plan_hooks(model, vocab, record, plan)?;
        let chosen = score_options(model, vocab, record, mode, &hooks)?;
        Ok::<_, Error>(ExampleOutcome {
            id: record.id.clone(),
            correct: chosen == record.answer_label,
            chosen,
        })
    })?;
    let correct = outcomes.iter().filter(|o| o.correct).count();
    let accuracy = if outcomes.is_empty() {
        0.0
    } else {
        correct as f64 / outcomes.len() as f64
    };
    Ok(EvalSummary { accuracy, outcomes })
}

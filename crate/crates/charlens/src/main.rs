//! Command-line front end. Exit codes: 0 success, 1 validation error,
//! 2 I/O error.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use charlens::error::{Error, Result};
use charlens::export::{csv_string, fmt6, json_string};
use charlens::harness::{self, report, EvalRecord, HookPlan, TokenizerMode};
use charlens::intervene::{self, InterventionSpec, TargetMode};
use charlens::mask::{self, HeadSelection, MaskSpec};
use charlens::model::{self, Model, ModelConfig, NormKind};
use charlens::recovery::{DEFAULT_TOP_K, SWEEP_KS};
use charlens::tokenize::{self, Vocabulary};

#[derive(Parser)]
#[command(name = "charlens", version, about = "Dual-tokenization analysis on toy transformers")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Args)]
struct VocabArgs {
    /// JSON vocab file ({token_string: id})
    #[arg(long)]
    vocab: PathBuf,
    /// merges file, one "left right" pair per line
    #[arg(long)]
    merges: PathBuf,
}

impl VocabArgs {
    fn load(&self) -> Result<Vocabulary> {
        tokenize::load_vocabulary(&self.vocab, &self.merges)
    }
}

#[derive(Args)]
struct ModelArg {
    /// weight file produced by gen-toy
    #[arg(long)]
    model: PathBuf,
}

impl ModelArg {
    fn load(&self) -> Result<Model> {
        model::load_model(&self.model)
    }

    fn name(&self) -> String {
        stem(&self.model)
    }
}

#[derive(Args)]
struct DatasetArg {
    /// newline-delimited JSON records
    #[arg(long)]
    dataset: PathBuf,
}

impl DatasetArg {
    fn load(&self) -> Result<Vec<EvalRecord>> {
        harness::load_dataset(&self.dataset)
    }

    fn name(&self) -> String {
        stem(&self.dataset)
    }
}

#[derive(Args)]
struct OutArgs {
    /// output path (stdout when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

#[derive(Subcommand)]
enum Cmd {
    /// Dump canonical and character tokenizations of a text plus their span
    /// alignment
    Tokenize {
        #[command(flatten)]
        vocab: VocabArgs,
        /// text to tokenize
        #[arg(long)]
        text: String,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Multiple-choice accuracy under one tokenizer
    Eval {
        #[command(flatten)]
        model: ModelArg,
        #[command(flatten)]
        vocab: VocabArgs,
        #[command(flatten)]
        dataset: DatasetArg,
        #[arg(long, value_enum)]
        mode: CliMode,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Mean per-layer recovery scores over a dataset
    Recovery {
        #[command(flatten)]
        model: ModelArg,
        #[command(flatten)]
        vocab: VocabArgs,
        #[command(flatten)]
        dataset: DatasetArg,
        /// top-K candidates per position
        #[arg(long, default_value_t = DEFAULT_TOP_K)]
        k: usize,
        /// run the whole K sweep {1,2,3,5,10,20} instead of a single K
        #[arg(long)]
        sweep_k: bool,
        /// also compute span-restricted (in-group) scores
        #[arg(long)]
        in_group: bool,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Accuracy under token-direction removal, optionally sweeping the
    /// starting layer
    Intervene {
        #[command(flatten)]
        model: ModelArg,
        #[command(flatten)]
        vocab: VocabArgs,
        #[command(flatten)]
        dataset: DatasetArg,
        /// first residual index rewritten (0 = post-embedding)
        #[arg(long, default_value_t = 0)]
        l0: usize,
        #[arg(long, value_enum, default_value = "all-canonical")]
        target_mode: CliTargetMode,
        /// comma-separated token ids (explicit-list mode)
        #[arg(long, value_delimiter = ',')]
        targets: Vec<u32>,
        /// use raw output-embedding rows instead of unit-normalized ones
        #[arg(long)]
        raw_direction: bool,
        /// detection K for recovered-at-start mode, and the K reported next
        /// to each sweep point
        #[arg(long, default_value_t = DEFAULT_TOP_K)]
        k: usize,
        /// sweep l0 over 0..=L instead of the single value
        #[arg(long)]
        sweep: bool,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Accuracy under in-group attention masking, a starting-layer sweep, or
    /// masked-vs-baseline recovery
    Mask {
        #[command(flatten)]
        model: ModelArg,
        #[command(flatten)]
        vocab: VocabArgs,
        #[command(flatten)]
        dataset: DatasetArg,
        /// first masked block
        #[arg(long, default_value_t = 0)]
        l0: usize,
        /// last masked block (inclusive; defaults to the final block)
        #[arg(long)]
        l1: Option<usize>,
        /// mask the diagonal too (errors on fully masked rows)
        #[arg(long)]
        mask_diagonal: bool,
        /// mask the first N blocks and report masked vs baseline recovery
        /// per layer (N defaults to 5 when the flag is bare)
        #[arg(long, num_args = 0..=1, default_missing_value = "5")]
        first_n: Option<usize>,
        /// K for --first-n recovery
        #[arg(long, default_value_t = DEFAULT_TOP_K)]
        k: usize,
        /// sweep the starting block over 0..L
        #[arg(long)]
        sweep: bool,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Canonical vs character accuracy plus max mean recovery, one summary
    /// row per run
    Report {
        #[command(flatten)]
        model: ModelArg,
        #[command(flatten)]
        vocab: VocabArgs,
        #[command(flatten)]
        dataset: DatasetArg,
        #[arg(long, default_value_t = DEFAULT_TOP_K)]
        k: usize,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Write a seeded toy model
    GenToy {
        #[arg(long)]
        layers: usize,
        #[arg(long)]
        heads: usize,
        /// model width d
        #[arg(long)]
        dim: usize,
        /// vocabulary size
        #[arg(long)]
        vocab: usize,
        #[arg(long)]
        seed: u64,
        /// feed-forward width (default 4*dim)
        #[arg(long)]
        ffn: Option<usize>,
        #[arg(long, default_value_t = 512)]
        max_seq: usize,
        #[arg(long, value_enum, default_value = "rms")]
        norm: CliNorm,
        /// tie the output embedding to the input embedding
        #[arg(long)]
        tied: bool,
        /// output weight file
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum CliMode {
    Canonical,
    Character,
}

impl From<CliMode> for TokenizerMode {
    fn from(m: CliMode) -> Self {
        match m {
            CliMode::Canonical => TokenizerMode::Canonical,
            CliMode::Character => TokenizerMode::Character,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum CliTargetMode {
    AllCanonical,
    RecoveredAtStart,
    ExplicitList,
}

impl From<CliTargetMode> for TargetMode {
    fn from(m: CliTargetMode) -> Self {
        match m {
            CliTargetMode::AllCanonical => TargetMode::AllCanonical,
            CliTargetMode::RecoveredAtStart => TargetMode::RecoveredAtStart,
            CliTargetMode::ExplicitList => TargetMode::ExplicitList,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum CliNorm {
    Rms,
    Layer,
}

fn write_output(out: &Option<PathBuf>, content: &str) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, content)?,
        None => std::io::stdout().write_all(content.as_bytes())?,
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Tokenize { vocab, text, out } => {
            let vocab = vocab.load()?;
            let canon = tokenize::bpe_encode(&text, &vocab);
            let chars = tokenize::char_tokenize(&text, &vocab);
            let groups = tokenize::align_spans(&canon, &chars)?;
            let content = match out.format {
                Format::Csv => csv_string(|w| {
                    w.write_record(["kind", "index", "id", "token", "start", "end"])?;
                    for (i, (&id, &(s, e))) in
                        canon.token_ids.iter().zip(&canon.byte_spans).enumerate()
                    {
                        w.write_record([
                            "canonical",
                            &i.to_string(),
                            &id.to_string(),
                            vocab.token_string(id),
                            &s.to_string(),
                            &e.to_string(),
                        ])?;
                    }
                    for (i, (&id, &ci)) in
                        chars.token_ids.iter().zip(&chars.char_index).enumerate()
                    {
                        w.write_record([
                            "char",
                            &i.to_string(),
                            &id.to_string(),
                            vocab.token_string(id),
                            &ci.to_string(),
                            &(ci + 1).to_string(),
                        ])?;
                    }
                    for (i, g) in groups.groups.iter().enumerate() {
                        w.write_record([
                            "group",
                            &i.to_string(),
                            &g.token_id.to_string(),
                            vocab.token_string(g.token_id),
                            &g.start.to_string(),
                            &g.end.to_string(),
                        ])?;
                    }
                    Ok(())
                })?,
                Format::Json => json_string(&serde_json::json!({
                    "canonical": canon.token_ids.iter().zip(&canon.byte_spans).map(|(&id, &(s, e))| {
                        serde_json::json!({"id": id, "token": vocab.token_string(id), "byte_start": s, "byte_end": e})
                    }).collect::<Vec<_>>(),
                    "chars": chars.token_ids.iter().zip(&chars.char_index).map(|(&id, &ci)| {
                        serde_json::json!({"id": id, "token": vocab.token_string(id), "char_index": ci})
                    }).collect::<Vec<_>>(),
                    "groups": groups.groups.iter().map(|g| {
                        serde_json::json!({"token_id": g.token_id, "token": vocab.token_string(g.token_id), "start": g.start, "end": g.end})
                    }).collect::<Vec<_>>(),
                }))?,
            };
            write_output(&out.out, &content)
        }

        Cmd::Eval {
            model,
            vocab,
            dataset,
            mode,
            out,
        } => {
            let m = model.load()?;
            let v = vocab.load()?;
            let records = dataset.load()?;
            let summary =
                harness::evaluate(&m, &v, &records, TokenizerMode::from(mode), &HookPlan::None)?;
            let content = match out.format {
                Format::Csv => csv_string(|w| {
                    w.write_record(["id", "chosen", "correct"])?;
                    for o in &summary.outcomes {
                        w.write_record([o.id.as_str(), o.chosen.as_str(), bool_str(o.correct)])?;
                    }
                    Ok(())
                })?,
                Format::Json => json_string(&serde_json::json!({
                    "dataset": dataset.name(),
                    "model": model.name(),
                    "mode": match TokenizerMode::from(mode) {
                        TokenizerMode::Canonical => "canonical",
                        TokenizerMode::Character => "character",
                    },
                    "n_examples": summary.outcomes.len(),
                    "accuracy": charlens::export::round6(summary.accuracy),
                    "outcomes": summary.outcomes,
                }))?,
            };
            write_output(&out.out, &content)
        }

        Cmd::Recovery {
            model,
            vocab,
            dataset,
            k,
            sweep_k,
            in_group,
            out,
        } => {
            let m = model.load()?;
            let v = vocab.load()?;
            let records = dataset.load()?;
            let ks: Vec<usize> = if sweep_k { SWEEP_KS.to_vec() } else { vec![k] };
            let mut tables = Vec::with_capacity(ks.len());
            for &kk in &ks {
                tables.push((kk, report::dataset_mean_recovery(&m, &v, &records, kk)?));
            }
            let content = match out.format {
                Format::Csv => csv_string(|w| {
                    w.write_record(["layer", "r_set", "r_group", "k"])?;
                    for (kk, rows) in &tables {
                        for r in rows {
                            let group_cell = if in_group {
                                fmt6(r.r_group)
                            } else {
                                String::new()
                            };
                            w.write_record([
                                r.layer.to_string(),
                                fmt6(r.r_set),
                                group_cell,
                                kk.to_string(),
                            ])?;
                        }
                    }
                    Ok(())
                })?,
                Format::Json => {
                    let entries: Vec<serde_json::Value> = tables
                        .iter()
                        .map(|(kk, rows)| {
                            let (max_layer, max_score) = rows.iter().fold(
                                (0usize, f64::NEG_INFINITY),
                                |(bl, bv), r| {
                                    if r.r_set > bv {
                                        (r.layer, r.r_set)
                                    } else {
                                        (bl, bv)
                                    }
                                },
                            );
                            serde_json::json!({
                                "k": kk,
                                "max_score": max_score,
                                "max_layer": max_layer,
                                "per_layer": rows
                                    .iter()
                                    .map(|r| {
                                        if in_group {
                                            serde_json::json!({
                                                "layer": r.layer,
                                                "r_set": r.r_set,
                                                "r_group": r.r_group,
                                            })
                                        } else {
                                            serde_json::json!({
                                                "layer": r.layer,
                                                "r_set": r.r_set,
                                            })
                                        }
                                    })
                                    .collect::<Vec<_>>(),
                            })
                        })
                        .collect();
                    json_string(&entries)?
                }
            };
            write_output(&out.out, &content)
        }

        Cmd::Intervene {
            model,
            vocab,
            dataset,
            l0,
            target_mode,
            targets,
            raw_direction,
            k,
            sweep,
            out,
        } => {
            let m = model.load()?;
            let v = vocab.load()?;
            let records = dataset.load()?;
            let spec = InterventionSpec {
                start_layer: l0,
                end_layer: None,
                target_mode: TargetMode::from(target_mode),
                explicit_targets: targets,
                normalize_direction: !raw_direction,
                detection_k: k,
            };
            spec.validate(m.config.n_layers)?;
            let rows = if sweep {
                intervene::dataset_layer_sweep(&m, &v, &records, &spec, k)?
            } else {
                vec![intervene::dataset_single_point(&m, &v, &records, &spec, k)?]
            };
            let content = match out.format {
                Format::Csv => csv_string(|w| {
                    w.write_record(["l0", "accuracy", "recovery_at_l0"])?;
                    for r in &rows {
                        w.write_record([
                            r.l0.to_string(),
                            fmt6(r.accuracy),
                            fmt6(r.recovery_at_l0),
                        ])?;
                    }
                    Ok(())
                })?,
                Format::Json => json_string(&rows)?,
            };
            write_output(&out.out, &content)
        }

        Cmd::Mask {
            model,
            vocab,
            dataset,
            l0,
            l1,
            mask_diagonal,
            first_n,
            k,
            sweep,
            out,
        } => {
            let m = model.load()?;
            let v = vocab.load()?;
            let records = dataset.load()?;
            if let Some(n) = first_n {
                let rows = mask::dataset_masked_recovery(&m, &v, &records, n, k)?;
                let content = match out.format {
                    Format::Csv => csv_string(|w| {
                        w.write_record(["layer", "r_masked", "r_baseline"])?;
                        for (layer, masked, baseline) in &rows {
                            w.write_record([
                                layer.to_string(),
                                fmt6(*masked),
                                fmt6(*baseline),
                            ])?;
                        }
                        Ok(())
                    })?,
                    Format::Json => json_string(
                        &rows
                            .iter()
                            .map(|(layer, masked, baseline)| {
                                serde_json::json!({
                                    "layer": layer,
                                    "r_masked": masked,
                                    "r_baseline": baseline,
                                })
                            })
                            .collect::<Vec<_>>(),
                    )?,
                };
                return write_output(&out.out, &content);
            }

            let template = MaskSpec {
                start_layer: l0,
                end_layer: l1,
                mask_diagonal,
                heads: HeadSelection::All,
            };
            template.validate(m.config.n_layers)?;
            let rows: Vec<(usize, f64)> = if sweep {
                mask::masking_layer_sweep(&m, &v, &records, &template)?
                    .into_iter()
                    .map(|(l, a)| (l, charlens::export::round6(a)))
                    .collect()
            } else {
                let summary = harness::evaluate(
                    &m,
                    &v,
                    &records,
                    TokenizerMode::Character,
                    &HookPlan::Mask(template),
                )?;
                vec![(l0, charlens::export::round6(summary.accuracy))]
            };
            let content = match out.format {
                Format::Csv => csv_string(|w| {
                    w.write_record(["l0", "accuracy"])?;
                    for (l, a) in &rows {
                        w.write_record([l.to_string(), fmt6(*a)])?;
                    }
                    Ok(())
                })?,
                Format::Json => json_string(
                    &rows
                        .iter()
                        .map(|(l, a)| serde_json::json!({"l0": l, "accuracy": a}))
                        .collect::<Vec<_>>(),
                )?,
            };
            write_output(&out.out, &content)
        }

        Cmd::Report {
            model,
            vocab,
            dataset,
            k,
            out,
        } => {
            let m = model.load()?;
            let v = vocab.load()?;
            let records = dataset.load()?;
            let rep = report::full_report(&m, &v, &records, k, &dataset.name(), &model.name())?;
            report::check_report_consistency(&rep)?;
            let content = match out.format {
                Format::Csv => rep.to_csv()?,
                Format::Json => rep.to_json()?,
            };
            write_output(&out.out, &content)
        }

        Cmd::GenToy {
            layers,
            heads,
            dim,
            vocab,
            seed,
            ffn,
            max_seq,
            norm,
            tied,
            out,
        } => {
            if heads == 0 || dim % heads != 0 {
                return Err(Error::InvalidConfig(format!(
                    "dim {dim} must be divisible by heads {heads}"
                )));
            }
            let config = ModelConfig {
                n_layers: layers,
                n_heads: heads,
                d_model: dim,
                head_dim: dim / heads,
                d_ff: ffn.unwrap_or(4 * dim),
                vocab_size: vocab,
                max_seq,
                norm_kind: match norm {
                    CliNorm::Rms => NormKind::Rms,
                    CliNorm::Layer => NormKind::Layer,
                },
                tied_embeddings: tied,
            };
            config.validate()?;
            let model = model::generate_toy_model(&config, seed);
            model::save_model(&model, &out)?;
            eprintln!(
                "wrote {} ({} layers, {} heads, d={}, |V|={}, seed={seed})",
                out.display(),
                layers,
                heads,
                dim,
                vocab
            );
            Ok(())
        }
    }
}

fn bool_str(b: bool) -> &'static str {
    if b {
        "true"
    } else {
        "false"
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

//! Acceptance suite. One test per criterion; each prints a PASS line (run
//! with `--nocapture` to see them) and enforces its runtime budget.

mod common;

use std::process::Command;
use std::time::Instant;

use charlens::harness::{build_prompt, prepare_char, report};
use charlens::intervene::{build_intervention_hooks, InterventionSpec};
use charlens::linalg::{dot, norm};
use charlens::mask::{build_mask_hooks, masked_recovery, MaskSpec};
use charlens::model::{generate_toy_model, load_model, HookSet, ModelConfig, NormKind};
use charlens::recovery::{self, TargetSet};
use charlens::synth;
use charlens::tokenize::{align_spans, bpe_encode, char_tokenize};
use charlens_oracle as oracle;

use rand_core::{RngCore, SeedableRng};

fn random_corpus(n: usize) -> Vec<String> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0xC0FFEE);
    let pieces: Vec<&str> = synth::WORDS
        .iter()
        .copied()
        .chain([" ", "  ", ",", ".", "?", "!", "\n", "the", "natural", "gas", "é", "ß", "日", "🙂"])
        .collect();
    (0..n)
        .map(|_| {
            let chunks = rng.next_u32() as usize % 10;
            let mut s = String::new();
            for _ in 0..chunks {
                s.push_str(pieces[rng.next_u32() as usize % pieces.len()]);
                if s.len() > 56 {
                    break;
                }
            }
            s
        })
        .collect()
}

#[test]
fn criterion_1_tokenization_invariants_and_bpe_oracle() {
    let start = Instant::now();
    let vocab = synth::build_test_vocabulary();
    for text in random_corpus(1000) {
        let canon = bpe_encode(&text, &vocab);
        let chars = char_tokenize(&text, &vocab);
        assert_eq!(vocab.decode_string(&canon.token_ids).unwrap(), text);
        assert_eq!(vocab.decode_string(&chars.token_ids).unwrap(), text);
        assert_eq!(canon.token_ids, oracle::naive_bpe(&text, &vocab));

        let groups = align_spans(&canon, &chars).unwrap();
        let mut at = 0usize;
        for g in &groups.groups {
            assert_eq!(g.start, at);
            assert!(g.end > g.start);
            at = g.end;
            assert_eq!(
                vocab.decode_bytes(&chars.token_ids[g.start..g.end]),
                vocab.token_bytes(g.token_id)
            );
        }
        assert_eq!(at, chars.token_ids.len());
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 10.0, "took {elapsed:?}");
    println!("[acceptance] criterion 1 (tokenization round trip + BPE oracle, 1000 strings): PASS in {elapsed:.2?}");
}

#[test]
fn criterion_2_forward_matches_oracle_on_twenty_pairs() {
    let start = Instant::now();
    let configs = common::parity_configs();
    assert!(configs.len() >= 20);
    let mut layer_counts = std::collections::HashSet::new();
    let mut head_counts = std::collections::HashSet::new();
    let mut norms = std::collections::HashSet::new();
    for (i, config) in configs.iter().take(20).enumerate() {
        layer_counts.insert(config.n_layers);
        head_counts.insert(config.n_heads);
        norms.insert(format!("{:?}", config.norm_kind));
        let model = generate_toy_model(config, 9000 + i as u64);
        let ids = common::prompt_ids(40 + i as u64, 12, config.vocab_size);
        let run = model.forward(&ids, &HookSet::new()).unwrap();
        let want = oracle::oracle_forward(&model, &ids);
        for j in 0..ids.len() {
            let diff: f32 = run
                .logits
                .row(j)
                .iter()
                .zip(&want.logits[j])
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f32::max);
            assert!(diff <= 1e-4, "pair {i} position {j}: diff {diff}");
        }
    }
    assert_eq!(layer_counts, [0usize, 1, 2, 4].into_iter().collect());
    assert_eq!(head_counts, [1usize, 2].into_iter().collect());
    assert_eq!(norms.len(), 2);
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 60.0, "took {elapsed:?}");
    println!("[acceptance] criterion 2 (engine forward vs scalar oracle, 20 seeded pairs, <=1e-4): PASS in {elapsed:.2?}");
}

#[test]
fn criterion_3_recovery_scores_exact_and_monotone() {
    let start = Instant::now();
    let ks = recovery::SWEEP_KS;
    let mut runs = 0;
    for seed in 0..10u64 {
        let config = &common::parity_configs()[(seed as usize) % 12 + 4];
        let model = generate_toy_model(config, 7000 + seed);
        let ids = common::prompt_ids(seed + 77, 14, config.vocab_size);
        let run = model.forward(&ids, &HookSet::capturing_hidden()).unwrap();
        let mut groups = Vec::new();
        let mut at = 0usize;
        let mut width = 2usize;
        while at < ids.len() {
            let end = (at + width).min(ids.len());
            groups.push(charlens::tokenize::Group {
                token_id: ids[at],
                start: at,
                end,
            });
            at = end;
            width = width % 3 + 1;
        }
        let groups = charlens::tokenize::GroupStructure { groups };
        let targets = TargetSet::from_groups(&groups);

        // exact agreement with the brute-force recomputation on every layer/K
        for layer in 0..=config.n_layers {
            for &k in ks.iter() {
                let got = recovery::recovery_score(&model, &run, &targets, layer, k).unwrap();
                let want =
                    oracle::oracle_recovery(&model, &run, &targets, &groups, layer, k, false);
                assert_eq!(got, want);
                let got_g =
                    recovery::in_group_recovery_score(&model, &run, &groups, layer, k).unwrap();
                let want_g =
                    oracle::oracle_recovery(&model, &run, &targets, &groups, layer, k, true);
                assert_eq!(got_g, want_g);
                assert!(got_g <= got, "group score must not exceed set score");
            }
        }

        // exact K-monotonicity over the sweep
        let profiles = recovery::topk_sweep(&model, &run, &targets, &groups, &ks).unwrap();
        for pair in profiles.windows(2) {
            for layer in 0..pair[0].per_layer.len() {
                assert!(pair[0].per_layer[layer] <= pair[1].per_layer[layer]);
                assert!(pair[0].per_layer_group[layer] <= pair[1].per_layer_group[layer]);
            }
        }

        // K = |V| saturates
        let full =
            recovery::recovery_profile(&model, &run, &targets, &groups, config.vocab_size)
                .unwrap();
        assert!(full.per_layer.iter().all(|&r| r == 1.0));
        runs += 1;
    }
    assert!(runs >= 10);
    let elapsed = start.elapsed();
    println!("[acceptance] criterion 3 (recovery == brute force, K-monotone, group <= set, K=|V| saturates): PASS in {elapsed:.2?}");
}

#[test]
fn criterion_4_intervention_postconditions() {
    let start = Instant::now();
    let vocab = synth::build_test_vocabulary();
    let model = generate_toy_model(
        &ModelConfig {
            n_layers: 3,
            n_heads: 2,
            d_model: 16,
            head_dim: 8,
            d_ff: 32,
            vocab_size: vocab.size(),
            max_seq: 512,
            norm_kind: NormKind::Rms,
            tied_embeddings: false,
        },
        11,
    );
    let record = &synth::build_test_dataset()[5];
    let ctx = prepare_char(&vocab, &build_prompt(record)).unwrap();
    let ids = &ctx.chars.token_ids;
    let clean = model.forward(ids, &HookSet::capture_all()).unwrap();

    // orthogonality at every intervened (layer, position)
    let l0 = 1;
    let spec = InterventionSpec::all_canonical(l0);
    let hooks = build_intervention_hooks(&spec, &ctx.groups, &model, None).unwrap();
    let run = model
        .forward(ids, &HookSet::capturing_hidden().compose(hooks))
        .unwrap();
    for layer in l0..=model.config.n_layers {
        let hidden = run.hidden_at(layer).unwrap();
        for g in &ctx.groups.groups {
            let w = model.token_direction(g.token_id).unwrap();
            for j in g.start..g.end {
                let h = hidden.row(j);
                assert!(dot(h, &w).abs() <= 1e-4 * (1.0 + norm(h)));
            }
        }
    }

    // idempotence within 1e-6 (normalized directions)
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    for _ in 0..100 {
        let h: Vec<f32> = (0..16)
            .map(|_| ((rng.next_u32() >> 8) as f32 / 16_777_216.0) * 8.0 - 4.0)
            .collect();
        let raw: Vec<f32> = (0..16)
            .map(|_| ((rng.next_u32() >> 8) as f32 / 16_777_216.0) * 2.0 - 1.0)
            .collect();
        let n = norm(&raw);
        let w: Vec<f32> = raw.iter().map(|x| x / n).collect();
        let once = charlens::intervene::remove_token_subspace(&h, &w).unwrap();
        let twice = charlens::intervene::remove_token_subspace(&once, &w).unwrap();
        let drift: f32 = once
            .iter()
            .zip(&twice)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f32::max);
        assert!(drift <= 1e-6);
    }

    // empty-target intervention is bit-identical to clean
    let sentinel = InterventionSpec::all_canonical(model.config.n_layers + 1);
    let hooks = build_intervention_hooks(&sentinel, &ctx.groups, &model, None).unwrap();
    let noop = model.forward(ids, &HookSet::capture_all().compose(hooks)).unwrap();
    assert_eq!(clean, noop);

    // locality at l0: untouched positions bit-exact vs the clean run
    let single = InterventionSpec::explicit(l0, vec![ctx.groups.groups[0].token_id]);
    let hooks = build_intervention_hooks(&single, &ctx.groups, &model, None).unwrap();
    let local = model
        .forward(ids, &HookSet::capturing_hidden().compose(hooks))
        .unwrap();
    let target = ctx.groups.groups[0].token_id;
    let spans: Vec<(usize, usize)> = ctx
        .groups
        .groups
        .iter()
        .filter(|g| g.token_id == target)
        .map(|g| (g.start, g.end))
        .collect();
    let clean_l0 = clean.hidden_at(l0).unwrap();
    let local_l0 = local.hidden_at(l0).unwrap();
    for j in 0..ids.len() {
        if !spans.iter().any(|&(s, e)| j >= s && j < e) {
            assert_eq!(clean_l0.row(j), local_l0.row(j));
        }
    }
    let elapsed = start.elapsed();
    println!("[acceptance] criterion 4 (intervention orthogonality, idempotence, empty no-op, locality): PASS in {elapsed:.2?}");
}

#[test]
fn criterion_5_masking_postconditions() {
    let start = Instant::now();
    let vocab = synth::build_test_vocabulary();
    let model = generate_toy_model(
        &ModelConfig {
            n_layers: 2,
            n_heads: 2,
            d_model: 16,
            head_dim: 8,
            d_ff: 32,
            vocab_size: vocab.size(),
            max_seq: 512,
            norm_kind: NormKind::Layer,
            tied_embeddings: false,
        },
        29,
    );
    let record = &synth::build_test_dataset()[9];
    let ctx = prepare_char(&vocab, &build_prompt(record)).unwrap();
    let ids = &ctx.chars.token_ids;

    let hooks = build_mask_hooks(&MaskSpec::through_final(0), &ctx.groups).unwrap();
    let run = model.forward(ids, &HookSet::capture_all().compose(hooks)).unwrap();
    let weights = run.attn_weights.as_ref().unwrap();
    let mut masked_pairs = 0usize;
    for layer in weights {
        for head in layer {
            for g in &ctx.groups.groups {
                for j in g.start..g.end {
                    for k in g.start..g.end {
                        if k < j {
                            assert_eq!(head.get(j, k), 0.0, "in-group weight must be exactly 0");
                            masked_pairs += 1;
                        }
                    }
                }
            }
            for j in 0..ids.len() {
                let row = head.row(j);
                assert!(row.iter().all(|w| w.is_finite()));
                let sum: f32 = row.iter().sum();
                assert!((sum - 1.0).abs() < 1e-5);
            }
        }
    }
    assert!(masked_pairs > 0, "prompt must contain multi-char groups");

    // singleton-only groups: masking is a bit-exact no-op
    let singles = charlens::tokenize::GroupStructure {
        groups: (0..ids.len())
            .map(|i| charlens::tokenize::Group {
                token_id: ids[i],
                start: i,
                end: i + 1,
            })
            .collect(),
    };
    let clean = model.forward(ids, &HookSet::capture_all()).unwrap();
    let hooks = build_mask_hooks(&MaskSpec::through_final(0), &singles).unwrap();
    let masked = model.forward(ids, &HookSet::capture_all().compose(hooks)).unwrap();
    assert_eq!(clean, masked);

    // sequence-initial group with the diagonal masked trips the guard
    // instead of producing NaN
    let f = common::group_fixture();
    let initial_group = charlens::tokenize::GroupStructure {
        groups: vec![charlens::tokenize::Group {
            token_id: 0,
            start: 0,
            end: 2,
        }],
    };
    let mut spec = MaskSpec::through_final(0);
    spec.mask_diagonal = true;
    let hooks = build_mask_hooks(&spec, &initial_group).unwrap();
    let err = f.model.forward(&[5, 6, 7], &hooks).unwrap_err();
    assert!(matches!(err, charlens::Error::FullyMaskedRow { .. }));

    // diagonal masking away from the sequence start stays finite
    let offset_group = charlens::tokenize::GroupStructure {
        groups: vec![charlens::tokenize::Group {
            token_id: 0,
            start: 1,
            end: 3,
        }],
    };
    let hooks = build_mask_hooks(&spec, &offset_group).unwrap();
    let run = f
        .model
        .forward(&[5, 6, 7, 8], &HookSet::capture_all().compose(hooks))
        .unwrap();
    for layer in run.attn_weights.as_ref().unwrap() {
        for head in layer {
            for j in 0..4 {
                assert!(head.row(j).iter().all(|w| w.is_finite()));
            }
        }
    }
    let elapsed = start.elapsed();
    println!("[acceptance] criterion 5 (exact-zero masking, stochastic rows, singleton no-op, diagonal guard): PASS in {elapsed:.2?}");
}

#[test]
fn criterion_6_causal_fixtures() {
    let start = Instant::now();

    // (a) answer rides on one token direction
    let f = common::direction_fixture();
    let ctx = prepare_char(&f.vocab, &build_prompt(&f.record)).unwrap();
    let clean = charlens::harness::score_options(
        &f.model,
        &f.vocab,
        &f.record,
        charlens::harness::TokenizerMode::Character,
        &HookSet::new(),
    )
    .unwrap();
    assert_eq!(clean, "A");

    let spec = InterventionSpec::explicit(0, vec![f.target_id]);
    let hooks = build_intervention_hooks(&spec, &ctx.groups, &f.model, None).unwrap();
    let flipped = charlens::harness::score_options(
        &f.model,
        &f.vocab,
        &f.record,
        charlens::harness::TokenizerMode::Character,
        &hooks,
    )
    .unwrap();
    assert_eq!(flipped, "B", "target intervention flips the argmax answer");

    let spec = InterventionSpec::explicit(0, vec![f.unused_id]);
    let hooks = build_intervention_hooks(&spec, &ctx.groups, &f.model, None).unwrap();
    let unchanged = charlens::harness::score_options(
        &f.model,
        &f.vocab,
        &f.record,
        charlens::harness::TokenizerMode::Character,
        &hooks,
    )
    .unwrap();
    assert_eq!(unchanged, "A", "unused-token intervention is inert");

    // (b) recovery needs block-0 in-group attention
    let g = common::group_fixture();
    let (masked, baseline) = masked_recovery(&g.model, &g.vocab, &g.record, 1, 1).unwrap();
    assert!(
        masked.per_layer[1] < baseline.per_layer[1],
        "masked R at layer 1 ({}) must drop below baseline ({})",
        masked.per_layer[1],
        baseline.per_layer[1]
    );

    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 30.0, "took {elapsed:?}");
    println!("[acceptance] criterion 6 (intervention flips constructed answer; early masking lowers recovery): PASS in {elapsed:.2?}");
}

struct CliRun {
    report_csv: String,
    report_json: String,
    intervene_csv: String,
    mask_csv: String,
    recovery_csv: String,
}

fn run_cli_suite(model_path: &std::path::Path, dir: &std::path::Path) -> CliRun {
    let fixtures = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let bin = env!("CARGO_BIN_EXE_charlens");
    let base = |cmd: &str| {
        let mut c = Command::new(bin);
        c.arg(cmd)
            .arg("--model")
            .arg(model_path)
            .arg("--vocab")
            .arg(fixtures.join("vocab.json"))
            .arg("--merges")
            .arg(fixtures.join("merges.txt"))
            .arg("--dataset")
            .arg(fixtures.join("dataset.jsonl"));
        c
    };
    let run = |mut cmd: Command, out: std::path::PathBuf| -> String {
        let status = cmd.arg("--out").arg(&out).status().expect("spawn CLI");
        assert!(status.success(), "CLI exited with {status:?}");
        std::fs::read_to_string(out).expect("read CLI output")
    };
    let report_csv = run(base("report"), dir.join("report.csv"));
    let mut json_cmd = base("report");
    json_cmd.args(["--format", "json"]);
    let report_json = run(json_cmd, dir.join("report.json"));
    let mut intervene = base("intervene");
    intervene.arg("--sweep");
    let intervene_csv = run(intervene, dir.join("intervene.csv"));
    let mut mask = base("mask");
    mask.arg("--sweep");
    let mask_csv = run(mask, dir.join("mask.csv"));
    let mut recovery = base("recovery");
    recovery.arg("--in-group");
    let recovery_csv = run(recovery, dir.join("recovery.csv"));
    CliRun {
        report_csv,
        report_json,
        intervene_csv,
        mask_csv,
        recovery_csv,
    }
}

#[test]
fn criterion_7_and_8_end_to_end_reports_and_determinism() {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let model_path = dir.path().join("toy.bin");

    // seeded toy model sized for the bundled vocabulary
    let status = Command::new(env!("CARGO_BIN_EXE_charlens"))
        .args(["gen-toy", "--layers", "2", "--heads", "2", "--dim", "16"])
        .args(["--vocab", "356", "--seed", "7"])
        .arg("--out")
        .arg(&model_path)
        .status()
        .unwrap();
    assert!(status.success());

    std::fs::create_dir_all(dir.path().join("a")).unwrap();
    std::fs::create_dir_all(dir.path().join("b")).unwrap();
    let first = run_cli_suite(&model_path, &dir.path().join("a"));

    // criterion 7: shape + internal consistency
    let report = report::EvalReport::from_json(&first.report_json).unwrap();
    report::check_report_consistency(&report).unwrap();
    assert_eq!(report.summary.n_examples, 40);
    assert_eq!(
        report::ReportSummary::from_csv(&first.report_csv).unwrap(),
        report.summary
    );
    let model = load_model(&model_path).unwrap();
    let n_layers = model.config.n_layers;
    assert_eq!(first.intervene_csv.lines().count(), 1 + n_layers + 1);
    assert_eq!(first.mask_csv.lines().count(), 1 + n_layers);
    assert_eq!(
        first.recovery_csv.lines().count(),
        1 + n_layers + 1,
        "one row per residual index"
    );

    // criterion 8: byte-identical exports across two consecutive runs
    let second = run_cli_suite(&model_path, &dir.path().join("b"));
    assert_eq!(first.report_csv, second.report_csv);
    assert_eq!(first.report_json, second.report_json);
    assert_eq!(first.intervene_csv, second.intervene_csv);
    assert_eq!(first.mask_csv, second.mask_csv);
    assert_eq!(first.recovery_csv, second.recovery_csv);

    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 120.0, "took {elapsed:?}");
    println!("[acceptance] criterion 7 (report/sweep schemas + consistency, end to end): PASS in {elapsed:.2?}");
    println!("[acceptance] criterion 8 (byte-identical exports across consecutive runs): PASS in {elapsed:.2?}");
}

//! Builders for the bundled test vocabulary and dataset. Both are fully
//! deterministic; the files shipped under `fixtures/` are their serialized
//! output, and a test keeps them in sync.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::harness::EvalRecord;
use crate::tokenize::{bytes, Vocabulary};

pub const DATASET_SEED: u64 = 20240901;
pub const TEST_MERGE_COUNT: usize = 100;
pub const TEST_DATASET_LEN: usize = 40;

/// Words the merge table is built around; questions and options draw from
/// the same pool so canonical tokenizations of prompts contain multi-char
/// tokens.
pub const WORDS: [&str; 24] = [
    "sun", "water", "stone", "river", "cloud", "light", "sound", "metal", "plant", "energy",
    "winter", "summer", "forest", "ocean", "tree", "rain", "fire", "snow", "wind", "sand", "leaf",
    "moon", "star", "lake",
];

/// Strings whose left-to-right merge chains seed the table, in priority
/// order. "natural" and " gas" come first so their chains are complete.
fn chain_targets() -> Vec<String> {
    let mut targets = vec!["natural".to_string(), " gas".to_string(), " the".to_string()];
    for w in WORDS {
        targets.push(format!(" {w}"));
    }
    targets
}

/// 256 byte tokens plus exactly [`TEST_MERGE_COUNT`] merges built from
/// left-to-right chains over [`chain_targets`].
pub fn build_test_vocabulary() -> Vocabulary {
    let mut entries: Vec<(String, u32)> = (0u16..256)
        .map(|b| (bytes::byte_to_char(b as u8).to_string(), b as u32))
        .collect();
    let mut pairs: Vec<(String, String)> = Vec::new();
    let mut known: std::collections::HashSet<String> =
        entries.iter().map(|(s, _)| s.clone()).collect();
    let mut next_id = 256u32;

    'outer: for target in chain_targets() {
        let mapped = bytes::bytes_to_token_str(target.as_bytes());
        let chars: Vec<String> = mapped.chars().map(|c| c.to_string()).collect();
        let mut left = chars[0].clone();
        for c in &chars[1..] {
            let joined = format!("{left}{c}");
            if !known.contains(&joined) {
                entries.push((joined.clone(), next_id));
                next_id += 1;
                known.insert(joined.clone());
                pairs.push((left.clone(), c.clone()));
                if pairs.len() == TEST_MERGE_COUNT {
                    break 'outer;
                }
            }
            left = joined;
        }
    }
    assert_eq!(pairs.len(), TEST_MERGE_COUNT, "chain targets too short");
    Vocabulary::from_entries(entries, pairs).expect("test vocabulary is valid")
}

const QUESTION_TEMPLATES: [&str; 4] = [
    "what goes with {a} and {b}",
    "which word pairs with {a}",
    "pick the word closest to {a} near the {b}",
    "what follows {a} before the {b}",
];

const LABELS: [&str; 4] = ["A", "B", "C", "D"];

/// 40 deterministic multiple-choice records over [`WORDS`].
pub fn build_test_dataset() -> Vec<EvalRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(DATASET_SEED);
    let mut records = Vec::with_capacity(TEST_DATASET_LEN);
    for i in 0..TEST_DATASET_LEN {
        let picks = pick_distinct(&mut rng, WORDS.len(), 6);
        let template = QUESTION_TEMPLATES[i % QUESTION_TEMPLATES.len()];
        let question = template
            .replace("{a}", WORDS[picks[4]])
            .replace("{b}", WORDS[picks[5]]);
        let options: Vec<(String, String)> = LABELS
            .iter()
            .zip(&picks[..4])
            .map(|(label, &w)| (label.to_string(), WORDS[w].to_string()))
            .collect();
        let answer_label = LABELS[i % LABELS.len()].to_string();
        let record = EvalRecord {
            id: format!("synth-{i:03}"),
            question,
            options,
            answer_label,
        };
        record.validate().expect("synthetic record is valid");
        records.push(record);
    }
    records
}

fn pick_distinct(rng: &mut ChaCha8Rng, n: usize, count: usize) -> Vec<usize> {
    let mut pool: Vec<usize> = (0..n).collect();
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let idx = (rng.next_u32() as usize) % pool.len();
        out.push(pool.swap_remove(idx));
    }
    out
}

/// Dataset serialization: one JSON record per line.
pub fn serialize_dataset(records: &[EvalRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("record serializes"));
        out.push('\n');
    }
    out
}

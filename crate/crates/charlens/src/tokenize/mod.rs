//! Dual tokenization of the same text: byte-level BPE ("canonical") and
//! one-token-per-character ("character"), plus the exact alignment between
//! the two that yields per-token character spans.
//!
//! File formats:
//! - vocab file: UTF-8 JSON object `{token_string: id}`, ids contiguous from
//!   0. Token strings are in remapped form (see [`bytes`]), so every byte of
//!   text is representable and no token string contains raw whitespace.
//! - merges file: UTF-8 text, one `left right` pair per line (single space
//!   separator), rank = order of appearance starting at 0. Lines starting
//!   with `#` and blank lines are ignored.

pub mod bytes;

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// One BPE merge rule, resolved to token ids. Rank = index in `Vocabulary::merges`.
#[derive(Clone, Debug)]
pub struct MergeRule {
    pub left: u32,
    pub right: u32,
    pub merged: u32,
}

/// Immutable token vocabulary: id <-> string bijection, merge table, and the
/// per-byte fallback ids that make both tokenizers total.
#[derive(Clone, Debug)]
pub struct Vocabulary {
    id_to_string: Vec<String>,
    id_to_bytes: Vec<Vec<u8>>,
    string_to_id: HashMap<String, u32>,
    merges: Vec<MergeRule>,
    pair_lookup: HashMap<(u32, u32), (u32, u32)>, // (left,right) -> (rank, merged)
    byte_token: [u32; 256],
}

impl Vocabulary {
    /// Build from raw `(token_string, id)` entries and merge pairs in rank
    /// order. Validates the bijection, byte coverage, and merge consistency.
    pub fn from_entries(
        entries: Vec<(String, u32)>,
        merge_pairs: Vec<(String, String)>,
    ) -> Result<Self> {
        let n = entries.len();
        if n == 0 {
            return Err(Error::VocabFormat("empty vocabulary".into()));
        }
        let mut id_to_string = vec![None::<String>; n];
        for (s, id) in entries {
            let slot = id_to_string
                .get_mut(id as usize)
                .ok_or_else(|| Error::VocabFormat(format!("id {id} out of range 0..{n}")))?;
            if slot.is_some() {
                return Err(Error::VocabFormat(format!("duplicate token id {id}")));
            }
            *slot = Some(s);
        }
        let id_to_string: Vec<String> = id_to_string
            .into_iter()
            .enumerate()
            .map(|(id, s)| s.ok_or_else(|| Error::VocabFormat(format!("missing token id {id}"))))
            .collect::<Result<_>>()?;

        let mut string_to_id = HashMap::with_capacity(n);
        let mut id_to_bytes = Vec::with_capacity(n);
        for (id, s) in id_to_string.iter().enumerate() {
            if string_to_id.insert(s.clone(), id as u32).is_some() {
                return Err(Error::VocabFormat(format!("duplicate token string {s:?}")));
            }
            let raw = bytes::token_str_to_bytes(s).ok_or_else(|| {
                Error::VocabFormat(format!("token {s:?} contains a non-byte character"))
            })?;
            if raw.is_empty() {
                return Err(Error::VocabFormat("empty token string".into()));
            }
            id_to_bytes.push(raw);
        }

        let mut byte_token = [0u32; 256];
        for b in 0u16..256 {
            let key = bytes::byte_to_char(b as u8).to_string();
            match string_to_id.get(&key) {
                Some(&id) => byte_token[b as usize] = id,
                None => return Err(Error::ByteCoverage(b as u8)),
            }
        }

        let mut merges = Vec::with_capacity(merge_pairs.len());
        let mut pair_lookup = HashMap::with_capacity(merge_pairs.len());
        for (rank, (l, r)) in merge_pairs.into_iter().enumerate() {
            let left = *string_to_id
                .get(&l)
                .ok_or_else(|| Error::VocabFormat(format!("merge {rank}: unknown token {l:?}")))?;
            let right = *string_to_id
                .get(&r)
                .ok_or_else(|| Error::VocabFormat(format!("merge {rank}: unknown token {r:?}")))?;
            let joined = format!("{l}{r}");
            let merged = *string_to_id.get(&joined).ok_or_else(|| {
                Error::VocabFormat(format!("merge {rank}: result {joined:?} not in vocabulary"))
            })?;
            let mut expect = id_to_bytes[left as usize].clone();
            expect.extend_from_slice(&id_to_bytes[right as usize]);
            if expect != id_to_bytes[merged as usize] {
                return Err(Error::VocabFormat(format!(
                    "merge {rank}: byte content of {joined:?} is inconsistent"
                )));
            }
            if pair_lookup
                .insert((left, right), (rank as u32, merged))
                .is_some()
            {
                return Err(Error::VocabFormat(format!(
                    "duplicate merge pair at rank {rank}"
                )));
            }
            merges.push(MergeRule {
                left,
                right,
                merged,
            });
        }

        Ok(Vocabulary {
            id_to_string,
            id_to_bytes,
            string_to_id,
            merges,
            pair_lookup,
            byte_token,
        })
    }

    pub fn size(&self) -> usize {
        self.id_to_string.len()
    }

    pub fn merge_count(&self) -> usize {
        self.merges.len()
    }

    pub fn merges(&self) -> &[MergeRule] {
        &self.merges
    }

    pub fn token_string(&self, id: u32) -> &str {
        &self.id_to_string[id as usize]
    }

    pub fn token_bytes(&self, id: u32) -> &[u8] {
        &self.id_to_bytes[id as usize]
    }

    pub fn id_of(&self, token: &str) -> Option<u32> {
        self.string_to_id.get(token).copied()
    }

    /// Id of the text `s` rendered as a token string, if present.
    pub fn id_of_text(&self, s: &str) -> Option<u32> {
        self.id_of(&bytes::bytes_to_token_str(s.as_bytes()))
    }

    pub fn byte_token(&self, b: u8) -> u32 {
        self.byte_token[b as usize]
    }

    /// `(rank, merged_id)` for an adjacent id pair, if a merge rule exists.
    pub fn pair_merge(&self, left: u32, right: u32) -> Option<(u32, u32)> {
        self.pair_lookup.get(&(left, right)).copied()
    }

    pub fn decode_bytes(&self, ids: &[u32]) -> Vec<u8> {
        let mut out = Vec::new();
        for &id in ids {
            out.extend_from_slice(&self.id_to_bytes[id as usize]);
        }
        out
    }

    pub fn decode_string(&self, ids: &[u32]) -> Result<String> {
        String::from_utf8(self.decode_bytes(ids))
            .map_err(|_| Error::VocabFormat("decoded bytes are not valid UTF-8".into()))
    }

    /// Canonical vocab-file serialization: entries in id order, minified.
    pub fn serialize_vocab(&self) -> String {
        let mut out = String::from("{");
        for (id, s) in self.id_to_string.iter().enumerate() {
            if id > 0 {
                out.push(',');
            }
            let key = serde_json::to_string(s).expect("string serializes");
            let _ = write!(out, "{key}:{id}");
        }
        out.push_str("}\n");
        out
    }

    /// Canonical merges-file serialization: one `left right` pair per line.
    pub fn serialize_merges(&self) -> String {
        let mut out = String::new();
        for m in &self.merges {
            let _ = writeln!(
                out,
                "{} {}",
                self.id_to_string[m.left as usize], self.id_to_string[m.right as usize]
            );
        }
        out
    }
}

/// Load a vocabulary from a JSON vocab file and a text merges file.
pub fn load_vocabulary<P: AsRef<Path>, Q: AsRef<Path>>(
    vocab_path: P,
    merges_path: Q,
) -> Result<Vocabulary> {
    let vocab_text = std::fs::read_to_string(vocab_path)?;
    let merges_text = std::fs::read_to_string(merges_path)?;
    let map: HashMap<String, u32> = serde_json::from_str(&vocab_text)?;
    let entries = map.into_iter().collect();
    let merge_pairs = parse_merges(&merges_text)?;
    Vocabulary::from_entries(entries, merge_pairs)
}

/// Parse merges-file text. `#`-prefixed lines and blank lines are skipped;
/// rank is the order of appearance among kept lines.
pub fn parse_merges(text: &str) -> Result<Vec<(String, String)>> {
    let mut pairs = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split(' ');
        match (parts.next(), parts.next(), parts.next()) {
            (Some(l), Some(r), None) if !l.is_empty() && !r.is_empty() => {
                pairs.push((l.to_string(), r.to_string()));
            }
            _ => {
                return Err(Error::VocabFormat(format!(
                    "merges line {}: expected exactly two space-separated tokens",
                    lineno + 1
                )))
            }
        }
    }
    Ok(pairs)
}

/// BPE tokenization of a text: token ids plus the half-open byte span each
/// token covers in the source.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CanonicalTokenization {
    pub token_ids: Vec<u32>,
    pub byte_spans: Vec<(usize, usize)>,
}

/// Character-level tokenization. One logical character per `char_index`
/// value; a multi-byte character without its own vocabulary entry expands to
/// several byte-fallback model positions sharing one character index.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CharTokenization {
    pub token_ids: Vec<u32>,
    pub char_index: Vec<usize>,
    pub byte_spans: Vec<(usize, usize)>,
    pub char_count: usize,
}

impl CharTokenization {
    /// Number of model positions (>= char_count).
    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }
}

/// One canonical token's character span, in character-tokenization model
/// positions.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Group {
    pub token_id: u32,
    pub start: usize,
    pub end: usize,
}

/// Per canonical token: its id and the model-position span whose characters
/// spell it. Spans partition `[0, M)`.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct GroupStructure {
    pub groups: Vec<Group>,
}

impl GroupStructure {
    /// Total model positions covered (= character tokenization length).
    pub fn model_len(&self) -> usize {
        self.groups.last().map_or(0, |g| g.end)
    }

    /// Unique canonical token ids, ascending.
    pub fn unique_ids(&self) -> Vec<u32> {
        let mut ids: Vec<u32> = self.groups.iter().map(|g| g.token_id).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }
}

// Linked-list node for the merge loop. Merging keeps the left node, so node
// indices of live nodes stay ordered by text position.
struct Node {
    id: u32,
    start: usize,
    end: usize,
    prev: usize,
    next: usize,
    alive: bool,
}

const NIL: usize = usize::MAX;

/// Greedy BPE: repeatedly apply the lowest-rank merge present in the
/// sequence, leftmost occurrence first, until no rule applies.
pub fn bpe_encode(text: &str, vocab: &Vocabulary) -> CanonicalTokenization {
    let src = text.as_bytes();
    let n = src.len();
    if n == 0 {
        return CanonicalTokenization {
            token_ids: vec![],
            byte_spans: vec![],
        };
    }

    let mut nodes: Vec<Node> = (0..n)
        .map(|i| Node {
            id: vocab.byte_token(src[i]),
            start: i,
            end: i + 1,
            prev: if i == 0 { NIL } else { i - 1 },
            next: if i + 1 == n { NIL } else { i + 1 },
            alive: true,
        })
        .collect();

    // Heap entries: (rank, left node index). Stale entries are skipped by
    // re-checking the rank of the pair currently at that position.
    let mut heap: BinaryHeap<Reverse<(u32, usize)>> = BinaryHeap::new();
    for i in 0..n.saturating_sub(1) {
        if let Some((rank, _)) = vocab.pair_merge(nodes[i].id, nodes[i + 1].id) {
            heap.push(Reverse((rank, i)));
        }
    }

    while let Some(Reverse((rank, i))) = heap.pop() {
        if !nodes[i].alive {
            continue;
        }
        let j = nodes[i].next;
        if j == NIL {
            continue;
        }
        let current = vocab.pair_merge(nodes[i].id, nodes[j].id);
        // Ranks are unique, so a matching rank means this is still the same
        // pair the entry was pushed for.
        let merged = match current {
            Some((r, merged)) if r == rank => merged,
            _ => continue,
        };

        nodes[i].id = merged;
        nodes[i].end = nodes[j].end;
        nodes[j].alive = false;
        let after = nodes[j].next;
        nodes[i].next = after;
        if after != NIL {
            nodes[after].prev = i;
        }

        let before = nodes[i].prev;
        if before != NIL {
            if let Some((r, _)) = vocab.pair_merge(nodes[before].id, nodes[i].id) {
                heap.push(Reverse((r, before)));
            }
        }
        if after != NIL {
            if let Some((r, _)) = vocab.pair_merge(nodes[i].id, nodes[after].id) {
                heap.push(Reverse((r, i)));
            }
        }
    }

    let mut token_ids = Vec::new();
    let mut byte_spans = Vec::new();
    let mut cur = 0;
    while cur != NIL {
        let node = &nodes[cur];
        token_ids.push(node.id);
        byte_spans.push((node.start, node.end));
        cur = node.next;
    }
    CanonicalTokenization {
        token_ids,
        byte_spans,
    }
}

/// One token per character. A character whose remapped string has its own
/// vocabulary entry becomes a single position; otherwise each of its UTF-8
/// bytes becomes a byte-fallback position under the same character index.
pub fn char_tokenize(text: &str, vocab: &Vocabulary) -> CharTokenization {
    let mut token_ids = Vec::new();
    let mut char_index = Vec::new();
    let mut byte_spans = Vec::new();
    let mut char_count = 0;
    for (ci, (byte_start, ch)) in text.char_indices().enumerate() {
        char_count = ci + 1;
        let byte_end = byte_start + ch.len_utf8();
        let mapped = bytes::bytes_to_token_str(&text.as_bytes()[byte_start..byte_end]);
        if let Some(id) = vocab.id_of(&mapped) {
            token_ids.push(id);
            char_index.push(ci);
            byte_spans.push((byte_start, byte_end));
        } else {
            for (k, &b) in text.as_bytes()[byte_start..byte_end].iter().enumerate() {
                token_ids.push(vocab.byte_token(b));
                char_index.push(ci);
                byte_spans.push((byte_start + k, byte_start + k + 1));
            }
        }
    }
    CharTokenization {
        token_ids,
        char_index,
        byte_spans,
        char_count,
    }
}

/// Align a canonical tokenization with the character tokenization of the
/// same text: each canonical token maps to the contiguous run of character
/// positions covering exactly its byte span.
pub fn align_spans(
    canonical: &CanonicalTokenization,
    chars: &CharTokenization,
) -> Result<GroupStructure> {
    let mut groups = Vec::with_capacity(canonical.token_ids.len());
    let mut p = 0;
    for (idx, (&tid, &(ts, te))) in canonical
        .token_ids
        .iter()
        .zip(&canonical.byte_spans)
        .enumerate()
    {
        let start = p;
        let mut covered = ts;
        while covered < te {
            let (cs, ce) = *chars.byte_spans.get(p).ok_or_else(|| {
                Error::Alignment(format!(
                    "canonical token {idx} extends past the character sequence"
                ))
            })?;
            if cs != covered || ce > te {
                return Err(Error::Alignment(format!(
                    "canonical token {idx} byte span [{ts},{te}) cuts across character \
                     position {p} with byte span [{cs},{ce})"
                )));
            }
            covered = ce;
            p += 1;
        }
        if covered != te {
            return Err(Error::Alignment(format!(
                "canonical token {idx} byte span [{ts},{te}) not covered exactly"
            )));
        }
        groups.push(Group {
            token_id: tid,
            start,
            end: p,
        });
    }
    if p != chars.len() {
        return Err(Error::Alignment(format!(
            "character positions {p}..{} not covered by any canonical token",
            chars.len()
        )));
    }
    Ok(GroupStructure { groups })
}

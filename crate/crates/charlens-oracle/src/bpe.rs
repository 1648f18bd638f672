//! Naive BPE reference: at each step, rescan every adjacent pair, find the
//! lowest-rank applicable merge (leftmost occurrence on a rank tie with
//! itself), apply that single merge, repeat.

use charlens::tokenize::Vocabulary;

pub fn naive_bpe(text: &str, vocab: &Vocabulary) -> Vec<u32> {
    let mut symbols: Vec<u32> = text.bytes().map(|b| vocab.byte_token(b)).collect();
    loop {
        let mut best: Option<(u32, usize, u32)> = None; // (rank, index, merged)
        for i in 0..symbols.len().saturating_sub(1) {
            if let Some((rank, merged)) = vocab.pair_merge(symbols[i], symbols[i + 1]) {
                let better = match best {
                    None => true,
                    Some((best_rank, _, _)) => rank < best_rank,
                };
                if better {
                    best = Some((rank, i, merged));
                }
            }
        }
        match best {
            Some((_, i, merged)) => {
                symbols[i] = merged;
                symbols.remove(i + 1);
            }
            None => return symbols,
        }
    }
}

//! Forward pass with hook application and optional captures.

use super::{apply_norm, HookSet, Model};
use crate::error::{Error, Result};
use crate::linalg::{dot, Mat};
use crate::model::CapturedRun;

/// Sentinel written into pre-softmax attention scores to exclude a key: the
/// most negative finite f32. After the max-shifted softmax it exponentiates
/// to exactly zero whenever at least one key in the row survives.
pub const MASK_VALUE: f32 = f32::MIN;

impl Model {
    /// Run the model over a token sequence. Hooks fire at their declared
    /// points; captures are filled according to the hook set's flags.
    pub fn forward(&self, token_ids: &[u32], hooks: &HookSet) -> Result<CapturedRun> {
        let c = &self.config;
        let w = &self.weights;
        let seq = token_ids.len();
        if seq > c.max_seq {
            return Err(Error::SequenceTooLong {
                len: seq,
                max: c.max_seq,
            });
        }
        for &id in token_ids {
            if (id as usize) >= c.vocab_size {
                return Err(Error::TokenOutOfRange {
                    id,
                    vocab_size: c.vocab_size,
                });
            }
        }

        let d = c.d_model;
        let hd = c.head_dim;
        let scale = 1.0 / (hd as f32).sqrt();

        let mut state = Mat::from_rows(
            token_ids
                .iter()
                .enumerate()
                .map(|(j, &id)| {
                    let mut row = w.embed.row(id as usize).to_vec();
                    for (r, p) in row.iter_mut().zip(w.pos.row(j)) {
                        *r += p;
                    }
                    row
                })
                .collect(),
        );
        if seq == 0 {
            state = Mat::zeros(0, d);
        }

        if let Some(hook) = &hooks.residual {
            hook(0, &mut state);
        }

        let mut hidden = hooks.capture_hidden.then(|| vec![state.clone()]);
        let mut attn_scores = hooks.capture_attn_scores.then(Vec::new);
        let mut attn_weights = hooks.capture_attn_weights.then(Vec::new);

        for (l, layer) in w.layers.iter().enumerate() {
            // -- attention sublayer --
            let qkv: Vec<(Vec<f32>, Vec<f32>, Vec<f32>)> = (0..seq)
                .map(|j| {
                    let normed = apply_norm(c.norm_kind, state.row(j), &layer.attn_norm);
                    (
                        layer.wq.mul_vec(&normed),
                        layer.wk.mul_vec(&normed),
                        layer.wv.mul_vec(&normed),
                    )
                })
                .collect();

            // Per-head pre-softmax scores over the full square; the causal
            // structure is applied after the attention hook.
            let mut scores: Vec<Mat> = (0..c.n_heads)
                .map(|h| {
                    let lo = h * hd;
                    let hi = lo + hd;
                    Mat::from_rows(
                        (0..seq)
                            .map(|j| {
                                let q = &qkv[j].0[lo..hi];
                                (0..seq)
                                    .map(|k| dot(q, &qkv[k].1[lo..hi]) * scale)
                                    .collect()
                            })
                            .collect(),
                    )
                })
                .collect();

            if let Some(hook) = &hooks.attn {
                for (h, s) in scores.iter_mut().enumerate() {
                    hook(l, h, s);
                }
            }
            if let Some(cap) = attn_scores.as_mut() {
                cap.push(scores.clone());
            }

            let mut weights = Vec::with_capacity(c.n_heads);
            for (h, s) in scores.iter().enumerate() {
                let mut rows = Vec::with_capacity(seq);
                for j in 0..seq {
                    let mut row: Vec<f32> = s.row(j).to_vec();
                    for v in row.iter_mut().skip(j + 1) {
                        *v = MASK_VALUE;
                    }
                    softmax_row(&mut row).map_err(|_| Error::FullyMaskedRow {
                        layer: l,
                        head: h,
                        row: j,
                    })?;
                    rows.push(row);
                }
                weights.push(Mat::from_rows(rows));
            }
            if let Some(cap) = attn_weights.as_mut() {
                cap.push(weights.clone());
            }

            for j in 0..seq {
                let mut mixed = vec![0.0f32; d];
                for (h, wmat) in weights.iter().enumerate() {
                    let lo = h * hd;
                    let row = wmat.row(j);
                    for (k, &wt) in row.iter().enumerate().take(j + 1) {
                        if wt != 0.0 {
                            let v = &qkv[k].2[lo..lo + hd];
                            for (m, &vv) in v.iter().enumerate() {
                                mixed[lo + m] += wt * vv;
                            }
                        }
                    }
                }
                let out = layer.wo.mul_vec(&mixed);
                for (sv, ov) in state.row_mut(j).iter_mut().zip(&out) {
                    *sv += ov;
                }
            }

            // -- feed-forward sublayer --
            for j in 0..seq {
                let x = apply_norm(c.norm_kind, state.row(j), &layer.ffn_norm);
                let mid: Vec<f32> = layer.w1.mul_vec(&x).into_iter().map(silu).collect();
                let out = layer.w2.mul_vec(&mid);
                for (sv, fv) in state.row_mut(j).iter_mut().zip(&out) {
                    *sv += fv;
                }
            }

            if let Some(hook) = &hooks.residual {
                hook(l + 1, &mut state);
            }
            if let Some(cap) = hidden.as_mut() {
                cap.push(state.clone());
            }
        }

        let logits = Mat::from_rows(
            (0..seq)
                .map(|j| {
                    let x = apply_norm(c.norm_kind, state.row(j), &w.final_norm);
                    w.unembed.mul_vec(&x)
                })
                .collect(),
        );

        Ok(CapturedRun {
            logits,
            hidden,
            attn_scores,
            attn_weights,
        })
    }
}

fn silu(x: f32) -> f32 {
    x / (1.0 + (-x).exp())
}

/// Max-shifted softmax in place. Entries at `MASK_VALUE` come out exactly
/// zero; a row whose maximum is the sentinel (every key masked) is an error.
fn softmax_row(row: &mut [f32]) -> std::result::Result<(), ()> {
    let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    if max <= MASK_VALUE {
        return Err(());
    }
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = if *v <= MASK_VALUE {
            0.0
        } else {
            (*v - max).exp()
        };
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
    Ok(())
}

//! Scalar-loop transformer forward. Mathematically the same computation as
//! the engine (pre-norm blocks, causal attention, SiLU MLP, final norm,
//! output projection) written as plain nested loops over indices, with no
//! hooks, no captures toggles, and no code shared with the engine.

use charlens::model::{Model, NormKind};

pub struct OracleRun {
    /// `[position][token]`
    pub logits: Vec<Vec<f32>>,
    /// `[residual index][position][dim]`, index 0 = post-embedding
    pub hidden: Vec<Vec<Vec<f32>>>,
    /// `[block][head][query][key]`, raw scaled scores
    pub attn_scores: Vec<Vec<Vec<Vec<f32>>>>,
    /// `[block][head][query][key]`, post-softmax, zero where key > query
    pub attn_weights: Vec<Vec<Vec<Vec<f32>>>>,
}

const EPS: f32 = 1e-5;

fn norm_vec(kind: NormKind, x: &[f32], scale: &[f32]) -> Vec<f32> {
    let d = x.len();
    match kind {
        NormKind::Rms => {
            let mut ss = 0.0f32;
            for i in 0..d {
                ss += x[i] * x[i];
            }
            let inv = 1.0 / (ss / d as f32 + EPS).sqrt();
            let mut out = vec![0.0; d];
            for i in 0..d {
                out[i] = x[i] * inv * scale[i];
            }
            out
        }
        NormKind::Layer => {
            let mut mean = 0.0f32;
            for i in 0..d {
                mean += x[i];
            }
            mean /= d as f32;
            let mut var = 0.0f32;
            for i in 0..d {
                var += (x[i] - mean) * (x[i] - mean);
            }
            var /= d as f32;
            let inv = 1.0 / (var + EPS).sqrt();
            let mut out = vec![0.0; d];
            for i in 0..d {
                out[i] = (x[i] - mean) * inv * scale[i];
            }
            out
        }
    }
}

// y[r] = sum_c m[r][c] * x[c], with m stored row-major (rows x cols)
fn matvec(m: &charlens::linalg::Mat, x: &[f32]) -> Vec<f32> {
    let mut out = vec![0.0f32; m.rows()];
    for r in 0..m.rows() {
        let row = m.row(r);
        let mut acc = 0.0f32;
        for c in 0..m.cols() {
            acc += row[c] * x[c];
        }
        out[r] = acc;
    }
    out
}

pub fn oracle_forward(model: &Model, token_ids: &[u32]) -> OracleRun {
    let c = &model.config;
    let w = &model.weights;
    let seq = token_ids.len();
    let d = c.d_model;
    let hd = c.head_dim;

    let mut state: Vec<Vec<f32>> = Vec::with_capacity(seq);
    for (j, &id) in token_ids.iter().enumerate() {
        let mut row = vec![0.0f32; d];
        for i in 0..d {
            row[i] = w.embed.get(id as usize, i) + w.pos.get(j, i);
        }
        state.push(row);
    }

    let mut hidden = vec![state.clone()];
    let mut attn_scores = Vec::with_capacity(c.n_layers);
    let mut attn_weights = Vec::with_capacity(c.n_layers);

    for layer in &w.layers {
        let mut normed = Vec::with_capacity(seq);
        for j in 0..seq {
            normed.push(norm_vec(c.norm_kind, &state[j], &layer.attn_norm));
        }
        let mut q = Vec::with_capacity(seq);
        let mut k = Vec::with_capacity(seq);
        let mut v = Vec::with_capacity(seq);
        for j in 0..seq {
            q.push(matvec(&layer.wq, &normed[j]));
            k.push(matvec(&layer.wk, &normed[j]));
            v.push(matvec(&layer.wv, &normed[j]));
        }

        let mut layer_scores = Vec::with_capacity(c.n_heads);
        let mut layer_weights = Vec::with_capacity(c.n_heads);
        let mut mixed = vec![vec![0.0f32; d]; seq];
        for h in 0..c.n_heads {
            let lo = h * hd;
            let mut scores = vec![vec![0.0f32; seq]; seq];
            for j in 0..seq {
                for t in 0..seq {
                    let mut acc = 0.0f32;
                    for m in 0..hd {
                        acc += q[j][lo + m] * k[t][lo + m];
                    }
                    scores[j][t] = acc / (hd as f32).sqrt();
                }
            }
            // causal softmax over keys t <= j, explicit exponentiation
            let mut weights = vec![vec![0.0f32; seq]; seq];
            for j in 0..seq {
                let mut sum = 0.0f32;
                for t in 0..=j {
                    weights[j][t] = scores[j][t].exp();
                    sum += weights[j][t];
                }
                for t in 0..=j {
                    weights[j][t] /= sum;
                }
            }
            for j in 0..seq {
                for t in 0..=j {
                    for m in 0..hd {
                        mixed[j][lo + m] += weights[j][t] * v[t][lo + m];
                    }
                }
            }
            layer_scores.push(scores);
            layer_weights.push(weights);
        }
        for j in 0..seq {
            let out = matvec(&layer.wo, &mixed[j]);
            for i in 0..d {
                state[j][i] += out[i];
            }
        }

        for j in 0..seq {
            let x = norm_vec(c.norm_kind, &state[j], &layer.ffn_norm);
            let mut mid = matvec(&layer.w1, &x);
            for m in mid.iter_mut() {
                *m = *m / (1.0 + (-*m).exp());
            }
            let out = matvec(&layer.w2, &mid);
            for i in 0..d {
                state[j][i] += out[i];
            }
        }

        hidden.push(state.clone());
        attn_scores.push(layer_scores);
        attn_weights.push(layer_weights);
    }

    let mut logits = Vec::with_capacity(seq);
    for j in 0..seq {
        let x = norm_vec(c.norm_kind, &state[j], &w.final_norm);
        logits.push(matvec(&w.unembed, &x));
    }

    OracleRun {
        logits,
        hidden,
        attn_scores,
        attn_weights,
    }
}

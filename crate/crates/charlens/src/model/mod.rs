//! Minimal decoder-only transformer with hook points.
//!
//! Architecture: learned absolute position embeddings, pre-norm blocks
//! (norm -> causal multi-head attention -> residual add, norm -> SiLU MLP ->
//! residual add), final norm, output-embedding projection. All math is f32.
//!
//! Residual-stream hook points sit at the output of each block; index 0 is
//! the post-embedding state. Attention hooks see the pre-softmax score
//! matrix of each (layer, head).

mod fileio;
mod forward;
mod generate;
mod hooks;

pub use fileio::{load_model, save_model};
pub use forward::MASK_VALUE;
pub use generate::generate_toy_model;
pub use hooks::{AttnHook, CapturedRun, HookSet, ResidualHook};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Mat;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormKind {
    Rms,
    Layer,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_model: usize,
    pub head_dim: usize,
    pub d_ff: usize,
    pub vocab_size: usize,
    pub max_seq: usize,
    pub norm_kind: NormKind,
    pub tied_embeddings: bool,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_heads == 0
            || self.d_model == 0
            || self.head_dim == 0
            || self.d_ff == 0
            || self.vocab_size == 0
            || self.max_seq == 0
        {
            return Err(Error::InvalidConfig("all dimensions must be >= 1".into()));
        }
        if self.d_model != self.n_heads * self.head_dim {
            return Err(Error::InvalidConfig(format!(
                "d_model {} != n_heads {} * head_dim {}",
                self.d_model, self.n_heads, self.head_dim
            )));
        }
        Ok(())
    }
}

/// Per-block weights. All projections are `(out_dim x in_dim)` row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerWeights {
    pub attn_norm: Vec<f32>,
    pub wq: Mat,
    pub wk: Mat,
    pub wv: Mat,
    pub wo: Mat,
    pub ffn_norm: Vec<f32>,
    pub w1: Mat,
    pub w2: Mat,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelWeights {
    /// Input embedding, `vocab_size x d_model`.
    pub embed: Mat,
    /// Learned absolute position embedding, `max_seq x d_model`.
    pub pos: Mat,
    pub layers: Vec<LayerWeights>,
    pub final_norm: Vec<f32>,
    /// Output embedding as rows: `vocab_size x d_model` (row t = the
    /// direction logits project onto for token t). Equal to `embed` when
    /// embeddings are tied.
    pub unembed: Mat,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub weights: ModelWeights,
}

impl Model {
    /// Check every tensor's shape against the config and reject non-finite
    /// values, naming the offending tensor.
    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        let c = &self.config;
        let w = &self.weights;
        let check = |name: &str, m: &Mat, rows: usize, cols: usize| -> Result<()> {
            if m.rows() != rows || m.cols() != cols {
                return Err(Error::WeightValidation {
                    tensor: name.into(),
                    reason: format!(
                        "shape ({}, {}) does not match expected ({rows}, {cols})",
                        m.rows(),
                        m.cols()
                    ),
                });
            }
            if !m.is_finite() {
                return Err(Error::WeightValidation {
                    tensor: name.into(),
                    reason: "contains a non-finite value".into(),
                });
            }
            Ok(())
        };
        check("embed", &w.embed, c.vocab_size, c.d_model)?;
        check("pos", &w.pos, c.max_seq, c.d_model)?;
        if w.layers.len() != c.n_layers {
            return Err(Error::WeightValidation {
                tensor: "layers".into(),
                reason: format!("{} blocks, config says {}", w.layers.len(), c.n_layers),
            });
        }
        for (i, l) in w.layers.iter().enumerate() {
            check(&format!("layers.{i}.wq"), &l.wq, c.d_model, c.d_model)?;
            check(&format!("layers.{i}.wk"), &l.wk, c.d_model, c.d_model)?;
            check(&format!("layers.{i}.wv"), &l.wv, c.d_model, c.d_model)?;
            check(&format!("layers.{i}.wo"), &l.wo, c.d_model, c.d_model)?;
            check(&format!("layers.{i}.w1"), &l.w1, c.d_ff, c.d_model)?;
            check(&format!("layers.{i}.w2"), &l.w2, c.d_model, c.d_ff)?;
            check_vec(&format!("layers.{i}.attn_norm"), &l.attn_norm, c.d_model)?;
            check_vec(&format!("layers.{i}.ffn_norm"), &l.ffn_norm, c.d_model)?;
        }
        check_vec("final_norm", &w.final_norm, c.d_model)?;
        check("unembed", &w.unembed, c.vocab_size, c.d_model)?;
        if c.tied_embeddings && w.unembed != w.embed {
            return Err(Error::WeightValidation {
                tensor: "unembed".into(),
                reason: "tied_embeddings set but unembed differs from embed".into(),
            });
        }
        Ok(())
    }

    /// Unit-normalized output-embedding direction for a token.
    pub fn token_direction(&self, token_id: u32) -> Result<Vec<f32>> {
        let row = self.raw_token_direction(token_id)?;
        let n = crate::linalg::norm(&row);
        if n == 0.0 {
            return Err(Error::ZeroDirection { token: token_id });
        }
        Ok(row.iter().map(|x| x / n).collect())
    }

    /// Output-embedding row exactly as stored (no normalization).
    pub fn raw_token_direction(&self, token_id: u32) -> Result<Vec<f32>> {
        if (token_id as usize) >= self.config.vocab_size {
            return Err(Error::TokenOutOfRange {
                id: token_id,
                vocab_size: self.config.vocab_size,
            });
        }
        Ok(self.weights.unembed.row(token_id as usize).to_vec())
    }

    /// Project a hidden state through the output embedding, optionally
    /// applying the final norm first (the default for layerwise decoding).
    pub fn lens_logits(&self, hidden: &[f32], apply_final_norm: bool) -> Vec<f32> {
        let h = if apply_final_norm {
            apply_norm(
                self.config.norm_kind,
                hidden,
                &self.weights.final_norm,
            )
        } else {
            hidden.to_vec()
        };
        self.weights.unembed.mul_vec(&h)
    }
}

fn check_vec(name: &str, v: &[f32], len: usize) -> Result<()> {
    if v.len() != len {
        return Err(Error::WeightValidation {
            tensor: name.into(),
            reason: format!("length {} does not match expected {len}", v.len()),
        });
    }
    if !v.iter().all(|x| x.is_finite()) {
        return Err(Error::WeightValidation {
            tensor: name.into(),
            reason: "contains a non-finite value".into(),
        });
    }
    Ok(())
}

pub(crate) const NORM_EPS: f32 = 1e-5;

pub(crate) fn apply_norm(kind: NormKind, x: &[f32], scale: &[f32]) -> Vec<f32> {
    match kind {
        NormKind::Rms => {
            let ms = x.iter().map(|v| v * v).sum::<f32>() / x.len() as f32;
            let inv = 1.0 / (ms + NORM_EPS).sqrt();
            x.iter().zip(scale).map(|(v, s)| v * inv * s).collect()
        }
        NormKind::Layer => {
            let mean = x.iter().sum::<f32>() / x.len() as f32;
            let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f32>() / x.len() as f32;
            let inv = 1.0 / (var + NORM_EPS).sqrt();
            x.iter()
                .zip(scale)
                .map(|(v, s)| (v - mean) * inv * s)
                .collect()
        }
    }
}

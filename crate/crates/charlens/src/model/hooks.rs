//! Hook points and forward-pass captures.

use crate::linalg::Mat;

/// Rewrites residual-stream state in place. Called with the residual index
/// (0 = post-embedding, `l` = output of block `l`) and the full
/// `seq x d_model` state. Must not change shapes.
pub type ResidualHook = Box<dyn Fn(usize, &mut Mat) + Send + Sync>;

/// Rewrites one head's pre-softmax attention scores in place. Called with
/// `(block_index, head_index, scores)` where `scores` is `seq x seq`,
/// before the causal mask is applied.
pub type AttnHook = Box<dyn Fn(usize, usize, &mut Mat) + Send + Sync>;

/// Hooks plus capture flags for one forward pass.
#[derive(Default)]
pub struct HookSet {
    pub residual: Option<ResidualHook>,
    pub attn: Option<AttnHook>,
    pub capture_hidden: bool,
    pub capture_attn_scores: bool,
    pub capture_attn_weights: bool,
}

impl std::fmt::Debug for HookSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HookSet")
            .field("residual", &self.residual.is_some())
            .field("attn", &self.attn.is_some())
            .field("capture_hidden", &self.capture_hidden)
            .field("capture_attn_scores", &self.capture_attn_scores)
            .field("capture_attn_weights", &self.capture_attn_weights)
            .finish()
    }
}

impl HookSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn capturing_hidden() -> Self {
        HookSet {
            capture_hidden: true,
            ..Self::default()
        }
    }

    pub fn capture_all() -> Self {
        HookSet {
            capture_hidden: true,
            capture_attn_scores: true,
            capture_attn_weights: true,
            ..Self::default()
        }
    }

    pub fn with_residual(mut self, hook: ResidualHook) -> Self {
        self.residual = Some(hook);
        self
    }

    pub fn with_attn(mut self, hook: AttnHook) -> Self {
        self.attn = Some(hook);
        self
    }

    /// Chain two hook sets: `self`'s hooks run first at each point, then
    /// `other`'s. Capture flags are or-ed.
    pub fn compose(self, other: HookSet) -> HookSet {
        let residual: Option<ResidualHook> = match (self.residual, other.residual) {
            (Some(a), Some(b)) => Some(Box::new(move |l: usize, m: &mut Mat| {
                a(l, m);
                b(l, m);
            })),
            (a, b) => a.or(b),
        };
        let attn: Option<AttnHook> = match (self.attn, other.attn) {
            (Some(a), Some(b)) => Some(Box::new(move |l: usize, h: usize, m: &mut Mat| {
                a(l, h, m);
                b(l, h, m);
            })),
            (a, b) => a.or(b),
        };
        HookSet {
            residual,
            attn,
            capture_hidden: self.capture_hidden || other.capture_hidden,
            capture_attn_scores: self.capture_attn_scores || other.capture_attn_scores,
            capture_attn_weights: self.capture_attn_weights || other.capture_attn_weights,
        }
    }
}

/// Everything observed during one forward pass. `hidden[l]` is the residual
/// stream after block `l` (index 0 = post-embedding), post-hook. Attention
/// captures are indexed `[block][head]`; scores are pre-softmax (after any
/// attention hook, before the causal mask), weights are post-softmax.
#[derive(Clone, Debug, PartialEq)]
pub struct CapturedRun {
    pub logits: Mat,
    pub hidden: Option<Vec<Mat>>,
    pub attn_scores: Option<Vec<Vec<Mat>>>,
    pub attn_weights: Option<Vec<Vec<Mat>>>,
}

impl CapturedRun {
    pub fn seq_len(&self) -> usize {
        self.logits.rows()
    }

    pub fn hidden_at(&self, layer: usize) -> crate::error::Result<&Mat> {
        self.hidden
            .as_ref()
            .and_then(|h| h.get(layer))
            .ok_or(crate::error::Error::MissingCapture("hidden states"))
    }

    /// Number of captured residual indices (layers + 1), if captured.
    pub fn hidden_len(&self) -> usize {
        self.hidden.as_ref().map_or(0, Vec::len)
    }
}

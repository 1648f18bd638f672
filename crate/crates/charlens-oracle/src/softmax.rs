//! Explicit masked softmax: exponentiate the unmasked entries only.

#[derive(Debug, PartialEq, Eq)]
pub enum SoftmaxError {
    AllKeysMasked,
}

impl std::fmt::Display for SoftmaxError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "all keys masked")
    }
}

impl std::error::Error for SoftmaxError {}

/// Weights for one attention row given an explicit masked-key set. Masked
/// keys get exactly zero; the rest normalize to sum 1.
pub fn oracle_masked_softmax(
    scores: &[f32],
    masked: &[bool],
) -> Result<Vec<f32>, SoftmaxError> {
    assert_eq!(scores.len(), masked.len());
    let mut out = vec![0.0f32; scores.len()];
    let mut sum = 0.0f32;
    for i in 0..scores.len() {
        if !masked[i] {
            out[i] = scores[i].exp();
            sum += out[i];
        }
    }
    if sum == 0.0 {
        return Err(SoftmaxError::AllKeysMasked);
    }
    for v in out.iter_mut() {
        *v /= sum;
    }
    Ok(out)
}

//! Scalar projection reference for subspace removal.

/// `h - <h, w> w` written as explicit index loops.
pub fn project_out_scalar(h: &[f32], w: &[f32]) -> Vec<f32> {
    assert_eq!(h.len(), w.len());
    let mut c = 0.0f32;
    for i in 0..h.len() {
        c += h[i] * w[i];
    }
    let mut out = vec![0.0f32; h.len()];
    for i in 0..h.len() {
        out[i] = h[i] - c * w[i];
    }
    out
}

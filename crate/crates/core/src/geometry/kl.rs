use super::{GeometryError, GridDims};

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

fn check_shapes(p: &[f64], q: &[f64]) -> Result<(), GeometryError> {
    if p.len() != q.len() {
        return Err(GeometryError::ShapeMismatch(
            GridDims::new(1, p.len()),
            GridDims::new(1, q.len()),
        ));
    }
    Ok(())
}

/// `Σ p·ln(p/q)` with `0·ln 0 = 0`. Every cell of `q` must be positive.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> Result<f64, GeometryError> {
    check_shapes(p, q)?;
    if let Some(i) = q.iter().position(|&v| v <= 0.0) {
        return Err(GeometryError::ZeroTargetCell(i));
    }
    let kl: f64 = p
        .iter()
        .zip(q)
        .filter(|(&pi, _)| pi > 0.0)
        .map(|(&pi, &qi)| pi * (pi / qi).ln())
        .sum();
    // Rounding can leave a tiny negative residue for p == q.
    Ok(kl.max(0.0))
}

/// Gradient of `KL(softmax(z) ‖ q)` with respect to the logits `z`, given
/// `p = softmax(z)`: `p_j·(ln(p_j/q_j) − KL)`.
pub fn kl_forward_logit_gradient(p: &[f64], q: &[f64]) -> Result<Vec<f64>, GeometryError> {
    let kl = kl_divergence(p, q)?;
    Ok(p.iter()
        .zip(q)
        .map(|(&pi, &qi)| if pi > 0.0 { pi * ((pi / qi).ln() - kl) } else { 0.0 })
        .collect())
}

/// Gradient of `KL(q ‖ softmax(z))` with respect to `z`: `p − q`.
pub fn kl_reverse_logit_gradient(p: &[f64], q: &[f64]) -> Result<Vec<f64>, GeometryError> {
    check_shapes(p, q)?;
    Ok(p.iter().zip(q).map(|(pi, qi)| pi - qi).collect())
}

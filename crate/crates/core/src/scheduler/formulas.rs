use super::SchedulerError;

/// `(1 − ρ)·prev + ρ·mean`; the first observation initializes the average.
///
/// Evaluated as `prev + ρ·(mean − prev)`, which rounds once less, and as a
/// plain replacement when `ρ = 1`.
pub fn update_ema(prev: Option<f64>, epoch_mean: f64, rho: f64) -> f64 {
    match prev {
        None => epoch_mean,
        Some(_) if rho == 1.0 => epoch_mean,
        Some(prev) => prev + rho * (epoch_mean - prev),
    }
}

/// Medium ramp β_e: zero through warm-up, then linear over `kappa` epochs.
pub fn ramp(epoch: u32, kappa: f64, warmup_epochs: u32) -> f64 {
    if epoch <= warmup_epochs {
        0.0
    } else {
        (f64::from(epoch - warmup_epochs) / kappa).min(1.0)
    }
}

/// Relative Easy-over-Medium loss gap `g_d`. Zero until both averages exist.
pub fn domain_progress(ema_easy: Option<f64>, ema_med: Option<f64>, eps: f64) -> f64 {
    match (ema_easy, ema_med) {
        (Some(easy), Some(med)) => (easy - med) / (easy + eps),
        _ => 0.0,
    }
}

pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Probability of assigning an item to Medium: `β·σ((g − γ)/τ)`.
pub fn p_medium(progress: f64, beta: f64, gamma: f64, tau: f64) -> f64 {
    beta * logistic((progress - gamma) / tau)
}

/// Median; for an even count, the mean of the two central values.
pub fn median_progress(values: &[f64]) -> Result<f64, SchedulerError> {
    if values.is_empty() {
        return Err(SchedulerError::NoDomains);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    Ok(if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        (sorted[mid - 1] + sorted[mid]) / 2.0
    })
}

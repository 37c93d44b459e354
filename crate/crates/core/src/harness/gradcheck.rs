use std::fmt::Display;

use super::HarnessError;

/// Worst disagreement between an analytic gradient and central differences.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    pub max_relative_error: f64,
    /// Parameter index where the worst error occurred.
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

/// Relative error uses `max(|analytic|, |numeric|, 1e-3)` as denominator so
/// near-zero gradients are compared in absolute terms.
pub const GRADIENT_GUARD: f64 = 1e-3;

/// Compares the gradient returned by `eval` at `params` with central
/// differences of step `h` over every parameter.
pub fn finite_difference_check<F, E>(eval: F, params: &[f64], h: f64) -> Result<GradCheck, HarnessError>
where
    F: Fn(&[f64]) -> Result<(f64, Vec<f64>), E>,
    E: Display,
{
    if !(h > 0.0 && h.is_finite()) {
        return Err(HarnessError::GradCheck(format!("step {h} must be positive")));
    }
    let call = |p: &[f64]| eval(p).map_err(|e| HarnessError::GradCheck(e.to_string()));
    let (value, analytic) = call(params)?;
    if analytic.len() != params.len() {
        return Err(HarnessError::GradCheck(format!(
            "gradient has {} entries for {} parameters",
            analytic.len(),
            params.len()
        )));
    }
    if !value.is_finite() {
        return Err(HarnessError::GradCheck(format!("loss {value} at the base point")));
    }
    let mut worst = GradCheck {
        max_relative_error: 0.0,
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
    };
    let mut probe = params.to_vec();
    for i in 0..params.len() {
        probe[i] = params[i] + h;
        let (up, _) = call(&probe)?;
        probe[i] = params[i] - h;
        let (down, _) = call(&probe)?;
        probe[i] = params[i];
        let numeric = (up - down) / (2.0 * h);
        if !numeric.is_finite() || !analytic[i].is_finite() {
            return Err(HarnessError::GradCheck(format!(
                "non-finite gradient at parameter {i}: analytic {}, numeric {numeric}",
                analytic[i]
            )));
        }
        let denom = analytic[i].abs().max(numeric.abs()).max(GRADIENT_GUARD);
        let err = (analytic[i] - numeric).abs() / denom;
        if i == 0 || err > worst.max_relative_error {
            worst = GradCheck {
                max_relative_error: err,
                worst_index: i,
                analytic: analytic[i],
                numeric,
            };
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linear(p: &[f64]) -> Result<(f64, Vec<f64>), String> {
        let w = [1.5, -2.0, 0.25];
        Ok((p.iter().zip(w).map(|(x, w)| x * w).sum(), w.to_vec()))
    }

    #[test]
    fn linear_loss_is_exact() {
        let check = finite_difference_check(linear, &[0.3, 0.1, -0.7], 1e-3).unwrap();
        assert!(check.max_relative_error <= 1e-10, "{check:?}");
    }

    #[test]
    fn wrong_gradient_is_detected() {
        let bad = |p: &[f64]| -> Result<(f64, Vec<f64>), String> { Ok((p[0] * p[0], vec![p[0]])) };
        let check = finite_difference_check(bad, &[2.0], 1e-5).unwrap();
        assert!((check.max_relative_error - 0.5).abs() < 1e-6);
        assert_eq!(check.worst_index, 0);
    }

    #[test]
    fn non_finite_and_bad_step_error() {
        let blowup = |p: &[f64]| -> Result<(f64, Vec<f64>), String> {
            Ok((if p[0] > 1.0 { f64::NAN } else { p[0] }, vec![1.0]))
        };
        assert!(finite_difference_check(blowup, &[1.0], 1e-3).is_err());
        assert!(finite_difference_check(linear, &[0.0; 3], 0.0).is_err());
        let failing = |_: &[f64]| -> Result<(f64, Vec<f64>), String> { Err("boom".into()) };
        assert!(
            matches!(finite_difference_check(failing, &[0.0], 1e-3), Err(HarnessError::GradCheck(m)) if m == "boom")
        );
    }
}

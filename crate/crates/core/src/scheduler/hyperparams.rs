use serde::{Deserialize, Serialize};

use super::SchedulerError;

/// Scheduler thresholds and rates. Field names are the configuration keys.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchedulerHyperparams {
    /// EMA rate for per-domain and global loss averages.
    pub rho: f64,
    /// Epochs for the Medium ramp to go from 0 to 1 after warm-up.
    pub kappa: f64,
    /// Progress offset in the Medium assignment probability.
    pub gamma: f64,
    /// Temperature of the Medium assignment logistic.
    pub tau: f64,
    /// Median progress needed before the Hard budget may grow.
    #[serde(rename = "gamma_H")]
    pub gamma_h: f64,
    /// Largest |Δ global EMA| that still counts as a plateau.
    pub eps_plat: f64,
    /// Plateau patience in epochs.
    pub q: usize,
    /// Largest Medium-minus-Easy rationale loss gap allowing Hard growth.
    pub eps_cot: f64,
    /// Global EMA rise that shrinks the Hard budget.
    pub delta_rise: f64,
    pub eta_up: f64,
    pub eta_down: f64,
    #[serde(rename = "lambda_H_max")]
    pub lambda_h_max: f64,
    #[serde(rename = "lambda_H_init")]
    pub lambda_h_init: f64,
    /// Denominator guard in the progress ratio.
    pub eps: f64,
    /// Easy-only epochs at the start of training.
    pub warmup_epochs: u32,
}

impl Default for SchedulerHyperparams {
    fn default() -> Self {
        Self {
            rho: 0.3,
            kappa: 10.0,
            gamma: 0.2,
            tau: 0.1,
            gamma_h: 0.3,
            eps_plat: 0.01,
            q: 5,
            eps_cot: 0.05,
            delta_rise: 0.05,
            eta_up: 0.05,
            eta_down: 0.5,
            lambda_h_max: 0.3,
            lambda_h_init: 0.0,
            eps: 1e-8,
            warmup_epochs: 5,
        }
    }
}

impl SchedulerHyperparams {
    pub fn validate(&self) -> Result<(), SchedulerError> {
        let bad = |what: &str| Err(SchedulerError::InvalidHyperparams(what.to_string()));
        let finite = [
            self.rho,
            self.kappa,
            self.gamma,
            self.tau,
            self.gamma_h,
            self.eps_plat,
            self.eps_cot,
            self.delta_rise,
            self.eta_up,
            self.eta_down,
            self.lambda_h_max,
            self.lambda_h_init,
            self.eps,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return bad("all hyperparameters must be finite");
        }
        if !(self.rho > 0.0 && self.rho <= 1.0) {
            return bad("rho must lie in (0, 1]");
        }
        if self.kappa <= 0.0 {
            return bad("kappa must be > 0");
        }
        if self.tau <= 0.0 {
            return bad("tau must be > 0");
        }
        if self.q < 1 {
            return bad("q must be >= 1");
        }
        if !(0.0..=1.0).contains(&self.eta_up) || !(0.0..=1.0).contains(&self.eta_down) {
            return bad("eta_up and eta_down must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.lambda_h_max) {
            return bad("lambda_H_max must lie in [0, 1]");
        }
        if !(0.0..=self.lambda_h_max).contains(&self.lambda_h_init) {
            return bad("lambda_H_init must lie in [0, lambda_H_max]");
        }
        if self.eps <= 0.0 {
            return bad("eps must be > 0");
        }
        if self.eps_plat < 0.0 {
            return bad("eps_plat must be >= 0");
        }
        Ok(())
    }
}

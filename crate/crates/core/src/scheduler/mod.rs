//! Loss-driven curriculum control: per-domain EMAs, the Medium ramp,
//! per-item stage assignment and the Hard budget.

mod accumulator;
mod formulas;
mod hyperparams;
mod plan;
mod trace;

use std::collections::{BTreeMap, VecDeque};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::forge::DomainKey;
use crate::losses::Stage;

pub use accumulator::{DomainAccumulator, EpochAccumulator, SumCount};
pub use formulas::{domain_progress, logistic, median_progress, p_medium, ramp, update_ema};
pub use hyperparams::SchedulerHyperparams;
pub use plan::{hard_slot_count, plan_batch, BatchPlan, BatchSlot, PoolKind};
pub use trace::{TraceHeader, TraceRecord, TrainingTrace};

#[derive(Debug, Error, PartialEq)]
pub enum SchedulerError {
    #[error("invalid scheduler hyperparameters: {0}")]
    InvalidHyperparams(String),
    #[error("median over an empty domain set")]
    NoDomains,
    #[error("{pool:?} pool has {available} items, batch needs {needed}")]
    InsufficientPool {
        pool: PoolKind,
        needed: usize,
        available: usize,
    },
    #[error("report for epoch {got}, scheduler is at epoch {expected}")]
    WrongEpoch { expected: u32, got: u32 },
    #[error("non-finite or negative loss statistic: {0}")]
    InvalidStatistic(String),
    #[error("main pool items and domain labels differ in length: {items} vs {labels}")]
    DomainLabels { items: usize, labels: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Decision {
    IncreaseHard,
    ReduceHard,
    Hold,
}

/// The three gate conditions for growing the Hard budget, plus the rise test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConditionFlags {
    pub plateau: bool,
    pub progress: bool,
    pub gap: bool,
    pub rise: bool,
}

/// Budget update rule: grow only when all three gates hold, otherwise shrink
/// on a loss rise, otherwise keep the budget.
pub fn decide(flags: ConditionFlags, lambda_h: f64, hp: &SchedulerHyperparams) -> (Decision, f64) {
    if flags.plateau && flags.progress && flags.gap {
        (Decision::IncreaseHard, (lambda_h + hp.eta_up).min(hp.lambda_h_max))
    } else if flags.rise {
        (
            Decision::ReduceHard,
            ((1.0 - hp.eta_down) * lambda_h).clamp(0.0, hp.lambda_h_max),
        )
    } else {
        (Decision::Hold, lambda_h.clamp(0.0, hp.lambda_h_max))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DomainStats {
    pub ema_easy: Option<f64>,
    pub ema_med: Option<f64>,
}

impl DomainStats {
    pub fn progress(&self, eps: f64) -> f64 {
        domain_progress(self.ema_easy, self.ema_med, eps)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct StageCounts {
    pub easy: u64,
    pub medium: u64,
    pub hard: u64,
}

impl StageCounts {
    pub fn total(&self) -> u64 {
        self.easy + self.medium + self.hard
    }

    fn add_plan(&mut self, plan: &BatchPlan) {
        self.easy += plan.count(Stage::Easy) as u64;
        self.medium += plan.count(Stage::Medium) as u64;
        self.hard += plan.count(Stage::Hard) as u64;
    }
}

/// Realized stage shares over the batches planned in one epoch.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RealizedProportions {
    pub lambda_e: f64,
    pub lambda_m: f64,
    pub lambda_h: f64,
}

impl From<StageCounts> for RealizedProportions {
    fn from(c: StageCounts) -> Self {
        let n = c.total();
        if n == 0 {
            return Self::default();
        }
        let n = n as f64;
        Self {
            lambda_e: c.easy as f64 / n,
            lambda_m: c.medium as f64 / n,
            lambda_h: c.hard as f64 / n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchedulerState {
    pub epoch: u32,
    pub lambda_h: f64,
    pub realized: StageCounts,
    pub domains: BTreeMap<DomainKey, DomainStats>,
    pub global_ema: Option<f64>,
    pub plateau_window: VecDeque<f64>,
    pub gap_cot: Option<f64>,
}

/// Per-domain slice of an [`EpochReport`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainEpochReport {
    pub mean_easy: Option<f64>,
    pub mean_medium: Option<f64>,
    pub mean_hard: Option<f64>,
    pub count_easy: u64,
    pub count_medium: u64,
    pub count_hard: u64,
    /// Progress used for stage assignment during this epoch.
    pub progress: f64,
    pub ema_easy: Option<f64>,
    pub ema_med: Option<f64>,
}

/// End-of-epoch statistics and the budget decision they produced.
///
/// `gap_cot` is `None` when either stage had no items, which acts as +∞.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochReport {
    pub epoch: u32,
    pub beta: f64,
    pub lambda_h: f64,
    pub lambda_h_next: f64,
    pub realized: RealizedProportions,
    pub domains: BTreeMap<String, DomainEpochReport>,
    pub mean_cot_easy: Option<f64>,
    pub mean_cot_medium: Option<f64>,
    pub mean_total: Option<f64>,
    pub global_ema: Option<f64>,
    pub delta_global_ema: Option<f64>,
    pub gap_cot: Option<f64>,
    pub median_progress: Option<f64>,
    pub conditions: ConditionFlags,
    pub decision: Decision,
}

impl EpochReport {
    /// Whether the recorded decision and budget follow from the recorded flags.
    pub fn is_consistent(&self, hp: &SchedulerHyperparams) -> bool {
        let (decision, next) = decide(self.conditions, self.lambda_h, hp);
        decision == self.decision && next == self.lambda_h_next
    }
}

/// Owns the curriculum state. Batch planning and epoch updates go through
/// `&mut self`, so the budget cannot change inside an epoch.
#[derive(Debug, Clone)]
pub struct CurriculumScheduler {
    hp: SchedulerHyperparams,
    state: SchedulerState,
}

impl CurriculumScheduler {
    pub fn new(hp: SchedulerHyperparams) -> Result<Self, SchedulerError> {
        hp.validate()?;
        Ok(Self {
            state: SchedulerState {
                epoch: 1,
                lambda_h: hp.lambda_h_init,
                realized: StageCounts::default(),
                domains: BTreeMap::new(),
                global_ema: None,
                plateau_window: VecDeque::with_capacity(hp.q),
                gap_cot: None,
            },
            hp,
        })
    }

    pub fn hyperparams(&self) -> &SchedulerHyperparams {
        &self.hp
    }

    pub fn state(&self) -> &SchedulerState {
        &self.state
    }

    /// Current epoch, starting at 1.
    pub fn epoch(&self) -> u32 {
        self.state.epoch
    }

    pub fn lambda_h(&self) -> f64 {
        self.state.lambda_h
    }

    pub fn beta(&self) -> f64 {
        ramp(self.state.epoch, self.hp.kappa, self.hp.warmup_epochs)
    }

    pub fn progress(&self, domain: &DomainKey) -> f64 {
        self.state.domains.get(domain).map_or(0.0, |s| s.progress(self.hp.eps))
    }

    pub fn p_medium(&self, domain: &DomainKey) -> f64 {
        p_medium(self.progress(domain), self.beta(), self.hp.gamma, self.hp.tau)
    }

    /// Number of batches that cover the main pool once.
    pub fn batches_per_epoch(main_pool_len: usize, batch_size: usize) -> usize {
        main_pool_len.div_ceil(batch_size.max(1))
    }

    /// Plans one batch of the current epoch. `main_domains[i]` is the domain
    /// of main-pool item `i`.
    pub fn plan_batch<R: Rng + ?Sized>(
        &mut self,
        batch_size: usize,
        hard_pool_len: usize,
        main_domains: &[DomainKey],
        rng: &mut R,
    ) -> Result<BatchPlan, SchedulerError> {
        let mut cache: BTreeMap<&DomainKey, f64> = BTreeMap::new();
        for d in main_domains {
            if !cache.contains_key(d) {
                cache.insert(d, self.p_medium(d));
            }
        }
        let plan = plan_batch(
            batch_size,
            self.state.lambda_h,
            hard_pool_len,
            main_domains.len(),
            |i| cache[&main_domains[i]],
            rng,
        )?;
        self.state.realized.add_plan(&plan);
        Ok(plan)
    }

    /// Folds one epoch of loss statistics into the state and applies the
    /// budget rule.
    pub fn end_of_epoch(&mut self, acc: &EpochAccumulator) -> Result<EpochReport, SchedulerError> {
        let e = self.state.epoch;
        if acc.epoch != e {
            return Err(SchedulerError::WrongEpoch {
                expected: e,
                got: acc.epoch,
            });
        }
        acc.check_finite()?;
        let hp = self.hp;
        let beta = self.beta();

        // progress as used for assignment during this epoch
        let mut progress: BTreeMap<DomainKey, f64> = BTreeMap::new();
        let mut evidence = Vec::new();
        for (d, s) in &self.state.domains {
            progress.insert(d.clone(), s.progress(hp.eps));
            if s.ema_easy.is_some() && s.ema_med.is_some() {
                evidence.push(s.progress(hp.eps));
            }
        }
        let median = median_progress(&evidence).ok();

        for (d, a) in &acc.domains {
            let stats = self.state.domains.entry(d.clone()).or_default();
            if let Some(m) = a.easy.mean() {
                stats.ema_easy = Some(update_ema(stats.ema_easy, m, hp.rho));
            }
            if let Some(m) = a.medium.mean() {
                stats.ema_med = Some(update_ema(stats.ema_med, m, hp.rho));
            }
        }

        let mean_total = acc.total.mean();
        let prev_global = self.state.global_ema;
        if let Some(m) = mean_total {
            self.state.global_ema = Some(update_ema(prev_global, m, hp.rho));
        }
        let delta = match (prev_global, mean_total) {
            (Some(prev), Some(_)) => self.state.global_ema.map(|g| g - prev),
            _ => None,
        };
        // Deltas spanning the warm-up boundary compare Easy-only epochs with
        // mixed ones, so the plateau window starts one epoch after warm-up.
        if let Some(d) = delta {
            if e >= hp.warmup_epochs + 2 {
                self.state.plateau_window.push_back(d);
                while self.state.plateau_window.len() > hp.q {
                    self.state.plateau_window.pop_front();
                }
            }
        }

        let (mean_cot_easy, mean_cot_medium) = (acc.cot_easy.mean(), acc.cot_medium.mean());
        let gap_cot = match (mean_cot_easy, mean_cot_medium) {
            (Some(easy), Some(med)) => Some(med - easy),
            _ => None,
        };
        self.state.gap_cot = gap_cot;

        let flags = ConditionFlags {
            plateau: self.state.plateau_window.len() >= hp.q
                && self.state.plateau_window.iter().all(|d| d.abs() <= hp.eps_plat),
            progress: median.is_some_and(|m| m >= hp.gamma_h),
            gap: gap_cot.is_some_and(|g| g <= hp.eps_cot),
            rise: delta.is_some_and(|d| d >= hp.delta_rise),
        };
        let lambda_h = self.state.lambda_h;
        let (decision, lambda_h_next) = decide(flags, lambda_h, &hp);

        let mut domains = BTreeMap::new();
        for (d, stats) in &self.state.domains {
            let a = acc.domains.get(d).cloned().unwrap_or_default();
            domains.insert(
                d.to_string(),
                DomainEpochReport {
                    mean_easy: a.easy.mean(),
                    mean_medium: a.medium.mean(),
                    mean_hard: a.hard.mean(),
                    count_easy: a.easy.count,
                    count_medium: a.medium.count,
                    count_hard: a.hard.count,
                    progress: progress.get(d).copied().unwrap_or(0.0),
                    ema_easy: stats.ema_easy,
                    ema_med: stats.ema_med,
                },
            );
        }

        let report = EpochReport {
            epoch: e,
            beta,
            lambda_h,
            lambda_h_next,
            realized: self.state.realized.into(),
            domains,
            mean_cot_easy,
            mean_cot_medium,
            mean_total,
            global_ema: self.state.global_ema,
            delta_global_ema: delta,
            gap_cot,
            median_progress: median,
            conditions: flags,
            decision,
        };
        if decision != Decision::Hold {
            log::debug!("epoch {e}: {decision:?}, lambda_H {lambda_h} -> {lambda_h_next}");
        }
        self.state.lambda_h = lambda_h_next;
        self.state.realized = StageCounts::default();
        self.state.epoch += 1;
        Ok(report)
    }
}

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::forge::DomainKey;
use crate::losses::Stage;
use crate::scheduler::{CurriculumScheduler, EpochAccumulator, SchedulerHyperparams, TraceHeader, TrainingTrace};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurveEvent {
    pub epoch: u32,
    pub magnitude: f64,
}

/// Scripted loss level:
/// `base·exp(−decay·(min(e, plateau_at) − 1)) + Σ rises with epoch ≤ e`,
/// plus Gaussian noise, clamped at 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossCurve {
    pub base: f64,
    #[serde(default)]
    pub decay: f64,
    #[serde(default)]
    pub noise_std: f64,
    /// Epoch after which the decay stops.
    #[serde(default)]
    pub plateau_at: Option<u32>,
    #[serde(default)]
    pub rises: Vec<CurveEvent>,
}

impl LossCurve {
    pub fn constant(base: f64) -> Self {
        Self {
            base,
            decay: 0.0,
            noise_std: 0.0,
            plateau_at: None,
            rises: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.base.is_finite() && self.base >= 0.0) {
            return Err(format!("base {} must be finite and >= 0", self.base));
        }
        if !(self.noise_std.is_finite() && self.noise_std >= 0.0) {
            return Err(format!("noise_std {} must be finite and >= 0", self.noise_std));
        }
        if !self.decay.is_finite() || self.rises.iter().any(|r| !r.magnitude.is_finite()) {
            return Err("decay and rise magnitudes must be finite".into());
        }
        Ok(())
    }

    /// Noise-free level at epoch `e`.
    pub fn level(&self, epoch: u32) -> f64 {
        let e = self.plateau_at.map_or(epoch, |p| epoch.min(p));
        let decayed = self.base * (-self.decay * (f64::from(e) - 1.0)).exp();
        let rises: f64 = self
            .rises
            .iter()
            .filter(|r| r.epoch <= epoch)
            .map(|r| r.magnitude)
            .sum();
        (decayed + rises).max(0.0)
    }

    pub fn sample<R: Rng + ?Sized>(&self, epoch: u32, rng: &mut R) -> f64 {
        let level = self.level(epoch);
        if self.noise_std == 0.0 {
            return level;
        }
        let noise = Normal::new(0.0, self.noise_std).expect("validated noise std");
        (level + noise.sample(rng)).max(0.0)
    }
}

/// Stage objective and its rationale component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageCurves {
    pub total: LossCurve,
    pub cot: LossCurve,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainCurves {
    pub domain: DomainKey,
    pub easy: StageCurves,
    pub medium: StageCurves,
    pub hard: LossCurve,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainPool {
    pub domain: DomainKey,
    pub items: usize,
}

/// Scripted per-domain, per-stage loss curves standing in for a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsSpec {
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub epochs: Option<u32>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub batch_size: Option<usize>,
    /// Scheduler keys overriding the configured hyperparameters.
    #[serde(default)]
    pub scheduler: serde_json::Map<String, serde_json::Value>,
    pub pools: Vec<DomainPool>,
    pub curves: Vec<DomainCurves>,
}

impl DynamicsSpec {
    /// `base` with this scenario's scheduler overrides applied.
    pub fn hyperparams(&self, base: &SchedulerHyperparams) -> Result<SchedulerHyperparams, HarnessError> {
        let mut value = serde_json::to_value(base).map_err(|e| HarnessError::InvalidConfig(e.to_string()))?;
        if let Some(obj) = value.as_object_mut() {
            obj.extend(self.scheduler.clone());
        }
        let hp: SchedulerHyperparams = serde_json::from_value(value)
            .map_err(|e| HarnessError::InvalidConfig(format!("scenario scheduler overrides: {e}")))?;
        hp.validate()?;
        Ok(hp)
    }

    fn curves_by_domain(&self) -> Result<BTreeMap<&DomainKey, &DomainCurves>, HarnessError> {
        let mut map = BTreeMap::new();
        for c in &self.curves {
            for curve in [&c.easy.total, &c.easy.cot, &c.medium.total, &c.medium.cot, &c.hard] {
                curve
                    .validate()
                    .map_err(|e| HarnessError::InvalidConfig(format!("{}: {e}", c.domain)))?;
            }
            map.insert(&c.domain, c);
        }
        for p in &self.pools {
            if !map.contains_key(&p.domain) {
                return Err(HarnessError::MissingDomain(p.domain.to_string()));
            }
        }
        Ok(map)
    }
}

/// Runs the scheduler against scripted losses: the same planning and
/// end-of-epoch path as toy training, with each item's losses drawn from its
/// domain's curves. The Hard pool mirrors the main pool.
pub fn run_dynamics_sim(
    spec: &DynamicsSpec,
    hp: SchedulerHyperparams,
    epochs: u32,
    batch_size: usize,
    seed: u64,
) -> Result<TrainingTrace, HarnessError> {
    let curves = spec.curves_by_domain()?;
    let domains: Vec<DomainKey> = spec
        .pools
        .iter()
        .flat_map(|p| std::iter::repeat_n(p.domain.clone(), p.items))
        .collect();
    if domains.is_empty() {
        return Err(HarnessError::EmptyCorpus);
    }
    if batch_size == 0 {
        return Err(HarnessError::InvalidConfig("batch_size must be >= 1".into()));
    }
    let batch_size = batch_size.min(domains.len());
    let batches = CurriculumScheduler::batches_per_epoch(domains.len(), batch_size);
    let mut scheduler = CurriculumScheduler::new(hp)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trace = TrainingTrace::new(TraceHeader {
        source: "simulate".into(),
        seed,
        epochs,
        batch_size,
        hyperparams: hp,
    });
    for epoch in 1..=epochs {
        let mut acc = EpochAccumulator::new(epoch);
        for _ in 0..batches {
            let plan = scheduler.plan_batch(batch_size, domains.len(), &domains, &mut rng)?;
            for slot in &plan.slots {
                // the Hard pool mirrors the main pool index for index
                let domain = &domains[slot.index];
                let c = curves[domain];
                match slot.stage {
                    Stage::Easy => {
                        let (t, k) = (c.easy.total.sample(epoch, &mut rng), c.easy.cot.sample(epoch, &mut rng));
                        acc.record(domain, Stage::Easy, t, Some(k));
                    }
                    Stage::Medium => {
                        let (t, k) = (
                            c.medium.total.sample(epoch, &mut rng),
                            c.medium.cot.sample(epoch, &mut rng),
                        );
                        acc.record(domain, Stage::Medium, t, Some(k));
                    }
                    Stage::Hard => acc.record(domain, Stage::Hard, c.hard.sample(epoch, &mut rng), None),
                }
            }
        }
        trace.epochs.push(scheduler.end_of_epoch(&acc)?);
    }
    Ok(trace)
}

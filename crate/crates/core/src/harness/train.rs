use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::toy::{ItemEval, ToyItem, ToyModel};
use super::{HarnessConfig, HarnessError};
use crate::forge::{DomainKey, VqaCotRecord};
use crate::losses::StageObjectives;
use crate::scheduler::{
    CurriculumScheduler, EpochAccumulator, PoolKind, SchedulerHyperparams, TraceHeader, TrainingTrace,
};

/// Trace of a toy run plus the trained model.
#[derive(Debug, Clone)]
pub struct ToyRun {
    pub trace: TrainingTrace,
    pub model: ToyModel,
}

/// The Hard pool: every corpus record with its rationale removed.
pub fn hard_pool_from(corpus: &[VqaCotRecord]) -> Vec<VqaCotRecord> {
    corpus.iter().map(VqaCotRecord::to_hard).collect()
}

/// Trains the toy model under the curriculum scheduler for `config.epochs`
/// epochs. Each epoch runs `ceil(|corpus| / B)` batches; every batch is
/// planned by the scheduler, evaluated item by item, and followed by one
/// gradient-descent step on the batch-mean objective.
pub fn run_toy_training(
    corpus: &[VqaCotRecord],
    hard_pool: &[VqaCotRecord],
    hp: SchedulerHyperparams,
    config: &HarnessConfig,
) -> Result<ToyRun, HarnessError> {
    config.validate()?;
    if config.epochs == 0 {
        return Err(HarnessError::InvalidConfig("epochs must be >= 1".into()));
    }
    if corpus.is_empty() {
        return Err(HarnessError::EmptyCorpus);
    }
    let objectives = StageObjectives::from_config(&config.objectives)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (mut model, main_items, hard_items) = ToyModel::build(
        &config.model,
        corpus,
        hard_pool,
        config.hard_rationale_candidates,
        &mut rng,
    )?;
    let mut scheduler = CurriculumScheduler::new(hp)?;
    let main_domains: Vec<DomainKey> = main_items.iter().map(|i| i.domain.clone()).collect();
    let batch_size = config.batch_size.min(main_items.len());
    let batches = CurriculumScheduler::batches_per_epoch(main_items.len(), batch_size);

    let mut trace = TrainingTrace::new(TraceHeader {
        source: "toy".into(),
        seed: config.seed,
        epochs: config.epochs,
        batch_size,
        hyperparams: hp,
    });
    for epoch in 1..=config.epochs {
        let mut acc = EpochAccumulator::new(epoch);
        for batch in 0..batches {
            let plan = scheduler.plan_batch(batch_size, hard_items.len(), &main_domains, &mut rng)?;
            let items: Vec<&ToyItem> = plan
                .slots
                .iter()
                .map(|s| match s.pool {
                    PoolKind::Main => &main_items[s.index],
                    PoolKind::Hard => &hard_items[s.index],
                })
                .collect();
            let params = model.params();
            let evals: Vec<_> = plan
                .slots
                .par_iter()
                .zip(&items)
                .map(|(slot, item)| model.evaluate(params, item, slot.stage, &objectives))
                .collect();

            let mut grad = vec![0.0; model.num_params()];
            for ((slot, item), eval) in plan.slots.iter().zip(&items).zip(evals) {
                let label = || {
                    format!(
                        "{} ({:?} pool #{}, {:?})",
                        item.image_id, slot.pool, slot.index, slot.stage
                    )
                };
                let ItemEval { breakdown, grad: g } = eval.map_err(|e| HarnessError::NonFinite {
                    epoch,
                    batch,
                    item: label(),
                    detail: e.to_string(),
                })?;
                if !breakdown.total.is_finite() || g.iter().any(|v| !v.is_finite()) {
                    return Err(HarnessError::NonFinite {
                        epoch,
                        batch,
                        item: label(),
                        detail: format!("{breakdown:?}"),
                    });
                }
                acc.record_breakdown(&item.domain, &breakdown);
                grad.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
            }
            let n = plan.slots.len() as f64;
            model.step(&grad, config.step_size / n);
        }
        let report = scheduler.end_of_epoch(&acc)?;
        log::info!(
            "epoch {epoch}: mean loss {:?}, lambda_M {:.3}, lambda_H {:.3}, {:?}",
            report.mean_total,
            report.realized.lambda_m,
            report.lambda_h,
            report.decision
        );
        trace.epochs.push(report);
    }
    Ok(ToyRun { trace, model })
}

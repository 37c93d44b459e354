use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::SchedulerError;
use crate::losses::Stage;

/// Where a batch slot draws its item from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolKind {
    Main,
    Hard,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchSlot {
    pub pool: PoolKind,
    pub index: usize,
    pub stage: Stage,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct BatchPlan {
    pub slots: Vec<BatchSlot>,
}

impl BatchPlan {
    pub fn count(&self, stage: Stage) -> usize {
        self.slots.iter().filter(|s| s.stage == stage).count()
    }
}

/// `floor(lambda_h·batch_size)`, clamped to the batch.
pub fn hard_slot_count(lambda_h: f64, batch_size: usize) -> usize {
    if !(lambda_h > 0.0) {
        return 0;
    }
    ((lambda_h * batch_size as f64).floor() as usize).min(batch_size)
}

/// Fills `floor(lambda_h·batch_size)` Hard slots from the hard pool, then the
/// rest from the main pool with each item independently assigned Medium with
/// probability `p_med(index)`, otherwise Easy. Both pools are sampled without
/// replacement.
pub fn plan_batch<R: Rng + ?Sized>(
    batch_size: usize,
    lambda_h: f64,
    hard_pool_len: usize,
    main_pool_len: usize,
    p_med: impl Fn(usize) -> f64,
    rng: &mut R,
) -> Result<BatchPlan, SchedulerError> {
    let n_hard = hard_slot_count(lambda_h, batch_size);
    let n_main = batch_size - n_hard;
    if n_hard > hard_pool_len {
        return Err(SchedulerError::InsufficientPool {
            pool: PoolKind::Hard,
            needed: n_hard,
            available: hard_pool_len,
        });
    }
    if n_main > main_pool_len {
        return Err(SchedulerError::InsufficientPool {
            pool: PoolKind::Main,
            needed: n_main,
            available: main_pool_len,
        });
    }
    let mut slots = Vec::with_capacity(batch_size);
    for index in sample(rng, hard_pool_len, n_hard) {
        slots.push(BatchSlot {
            pool: PoolKind::Hard,
            index,
            stage: Stage::Hard,
        });
    }
    for index in sample(rng, main_pool_len, n_main) {
        let stage = if rng.random::<f64>() < p_med(index) {
            Stage::Medium
        } else {
            Stage::Easy
        };
        slots.push(BatchSlot {
            pool: PoolKind::Main,
            index,
            stage,
        });
    }
    Ok(BatchPlan { slots })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn hard_slot_examples() {
        assert_eq!(hard_slot_count(0.25, 32), 8);
        assert_eq!(hard_slot_count(0.0, 32), 0);
        assert_eq!(hard_slot_count(0.26, 10), 2);
        assert_eq!(hard_slot_count(1.0, 7), 7);
        assert_eq!(hard_slot_count(0.5, 1), 0);
        assert_eq!(hard_slot_count(f64::MIN_POSITIVE / 4.0, 1000), 0);
    }

    #[test]
    fn decimal_budgets_give_intuitive_counts() {
        assert_eq!(hard_slot_count(0.3, 10), 3);
        assert_eq!(hard_slot_count(0.15, 20), 3);
        assert_eq!(hard_slot_count(0.05 + 0.05 + 0.05, 20), 3);
    }

    #[test]
    fn plan_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let plan = plan_batch(32, 0.25, 40, 100, |_| 0.5, &mut rng).unwrap();
        assert_eq!(plan.slots.len(), 32);
        assert_eq!(plan.count(Stage::Hard), 8);
        let plan = plan_batch(10, 0.26, 5, 100, |_| 0.5, &mut rng).unwrap();
        assert_eq!(plan.count(Stage::Hard), 2);
        let plan = plan_batch(10, 0.0, 0, 100, |_| 0.0, &mut rng).unwrap();
        assert_eq!(plan.count(Stage::Hard), 0);
        assert_eq!(plan.count(Stage::Medium), 0);
    }

    #[test]
    fn insufficient_pools() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(matches!(
            plan_batch(10, 0.5, 4, 100, |_| 0.0, &mut rng),
            Err(SchedulerError::InsufficientPool {
                pool: PoolKind::Hard,
                needed: 5,
                available: 4
            })
        ));
        assert!(matches!(
            plan_batch(10, 0.0, 0, 9, |_| 0.0, &mut rng),
            Err(SchedulerError::InsufficientPool {
                pool: PoolKind::Main,
                ..
            })
        ));
    }

    proptest! {
        #[test]
        fn hard_count_is_independent_of_rng(lambda in 0.0f64..1.0, b in 1usize..200, s1: u64, s2: u64) {
            let n = hard_slot_count(lambda, b);
            let a = plan_batch(b, lambda, b, b, |_| 0.5, &mut ChaCha8Rng::seed_from_u64(s1)).unwrap();
            let c = plan_batch(b, lambda, b, b, |_| 0.5, &mut ChaCha8Rng::seed_from_u64(s2)).unwrap();
            prop_assert_eq!(a.count(Stage::Hard), n);
            prop_assert_eq!(c.count(Stage::Hard), n);
            let product = lambda * b as f64;
            prop_assert!(n as f64 <= product && product < n as f64 + 1.0);
        }

        #[test]
        fn slots_are_distinct_within_a_batch(lambda in 0.0f64..0.5, b in 1usize..64, seed: u64) {
            let plan = plan_batch(b, lambda, b, b + 3, |_| 0.3, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            let mut seen = std::collections::HashSet::new();
            for slot in &plan.slots {
                prop_assert!(seen.insert((slot.pool, slot.index)));
            }
        }

        #[test]
        fn zero_probability_means_no_medium(b in 1usize..64, seed: u64) {
            let plan = plan_batch(b, 0.0, 0, b, |_| 0.0, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            prop_assert_eq!(plan.count(Stage::Medium), 0);
        }

        #[test]
        fn plans_are_reproducible(lambda in 0.0f64..0.5, b in 1usize..64, seed: u64) {
            let p = |i: usize| (i % 7) as f64 / 7.0;
            let a = plan_batch(b, lambda, b, b, p, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            let c = plan_batch(b, lambda, b, b, p, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            prop_assert_eq!(a, c);
        }
    }

    #[test]
    fn medium_fraction_within_three_standard_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (mut medium, mut total) = (0usize, 0usize);
        while total < 10_000 {
            let plan = plan_batch(100, 0.0, 0, 100, |_| 0.4, &mut rng).unwrap();
            medium += plan.count(Stage::Medium);
            total += plan.slots.len();
        }
        let frac = medium as f64 / total as f64;
        let se = (0.4f64 * 0.6 / total as f64).sqrt();
        assert!((frac - 0.4).abs() <= 3.0 * se, "{frac}");
    }
}

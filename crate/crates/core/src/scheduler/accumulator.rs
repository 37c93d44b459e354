use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::SchedulerError;
use crate::forge::DomainKey;
use crate::losses::{Stage, StageLossBreakdown};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SumCount {
    pub sum: f64,
    pub count: u64,
}

impl SumCount {
    pub fn add(&mut self, value: f64) {
        self.sum += value;
        self.count += 1;
    }

    pub fn merge(&mut self, other: &SumCount) {
        self.sum += other.sum;
        self.count += other.count;
    }

    pub fn mean(&self) -> Option<f64> {
        (self.count > 0).then(|| self.sum / self.count as f64)
    }
}

/// Stage-objective sums for one domain within one epoch.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DomainAccumulator {
    pub easy: SumCount,
    pub medium: SumCount,
    pub hard: SumCount,
}

impl DomainAccumulator {
    fn stage_mut(&mut self, stage: Stage) -> &mut SumCount {
        match stage {
            Stage::Easy => &mut self.easy,
            Stage::Medium => &mut self.medium,
            Stage::Hard => &mut self.hard,
        }
    }

    pub fn merge(&mut self, other: &DomainAccumulator) {
        self.easy.merge(&other.easy);
        self.medium.merge(&other.medium);
        self.hard.merge(&other.hard);
    }
}

/// Epoch loss statistics. Workers may fill separate accumulators and merge
/// them; merging only adds sums and counts.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EpochAccumulator {
    pub epoch: u32,
    pub domains: BTreeMap<DomainKey, DomainAccumulator>,
    pub cot_easy: SumCount,
    pub cot_medium: SumCount,
    pub total: SumCount,
}

impl EpochAccumulator {
    pub fn new(epoch: u32) -> Self {
        Self {
            epoch,
            ..Default::default()
        }
    }

    /// Records one item's stage objective and, for Easy and Medium, its
    /// rationale loss.
    pub fn record(&mut self, domain: &DomainKey, stage: Stage, total: f64, cot: Option<f64>) {
        self.domains
            .entry(domain.clone())
            .or_default()
            .stage_mut(stage)
            .add(total);
        self.total.add(total);
        match (stage, cot) {
            (Stage::Easy, Some(c)) => self.cot_easy.add(c),
            (Stage::Medium, Some(c)) => self.cot_medium.add(c),
            _ => {}
        }
    }

    pub fn record_breakdown(&mut self, domain: &DomainKey, b: &StageLossBreakdown) {
        let cot = (b.stage != Stage::Hard).then_some(b.l_cot);
        self.record(domain, b.stage, b.total, cot);
    }

    pub fn merge(&mut self, other: &EpochAccumulator) -> Result<(), SchedulerError> {
        if other.epoch != self.epoch {
            return Err(SchedulerError::WrongEpoch {
                expected: self.epoch,
                got: other.epoch,
            });
        }
        for (d, a) in &other.domains {
            self.domains.entry(d.clone()).or_default().merge(a);
        }
        self.cot_easy.merge(&other.cot_easy);
        self.cot_medium.merge(&other.cot_medium);
        self.total.merge(&other.total);
        Ok(())
    }

    pub(super) fn check_finite(&self) -> Result<(), SchedulerError> {
        let mut sums = vec![self.cot_easy.sum, self.cot_medium.sum, self.total.sum];
        for a in self.domains.values() {
            sums.extend([a.easy.sum, a.medium.sum, a.hard.sum]);
        }
        match sums.into_iter().find(|s| !s.is_finite() || *s < 0.0) {
            Some(bad) => Err(SchedulerError::InvalidStatistic(format!(
                "epoch {} has loss sum {bad}",
                self.epoch
            ))),
            None => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forge::Modality;
    use proptest::prelude::*;

    fn key(i: u8) -> DomainKey {
        DomainKey {
            lesion_class: format!("l{}", i % 3),
            modality: Modality::XRay,
        }
    }

    fn build(epoch: u32, items: &[(u8, u8, f64)]) -> EpochAccumulator {
        let mut acc = EpochAccumulator::new(epoch);
        for &(d, s, v) in items {
            let stage = [Stage::Easy, Stage::Medium, Stage::Hard][s as usize % 3];
            acc.record(&key(d), stage, v, Some(v / 2.0));
        }
        acc
    }

    #[test]
    fn hard_items_do_not_enter_rationale_means() {
        let mut acc = EpochAccumulator::new(1);
        let b = StageLossBreakdown {
            stage: Stage::Hard,
            l_ans: 0.4,
            l_cot: 0.0,
            l_ground: 0.0,
            l_attn_mask: 0.0,
            total: 0.4,
        };
        acc.record_breakdown(&key(0), &b);
        assert_eq!(acc.cot_easy.count + acc.cot_medium.count, 0);
        assert_eq!(acc.total.mean(), Some(0.4));
    }

    #[test]
    fn merge_rejects_other_epochs() {
        let mut a = EpochAccumulator::new(1);
        assert!(a.merge(&EpochAccumulator::new(2)).is_err());
    }

    // Values are multiples of 1/8 so that float sums are exact and merge
    // order cannot matter.
    proptest! {
        #[test]
        fn merge_is_order_independent(items in proptest::collection::vec((0u8..6, 0u8..3, 0u32..64), 0..40),
                                      split in 0usize..40) {
            let items: Vec<(u8, u8, f64)> = items.into_iter().map(|(d, s, v)| (d, s, v as f64 / 8.0)).collect();
            let split = split.min(items.len());
            let whole = build(4, &items);
            let (left, right) = items.split_at(split);
            let mut ab = build(4, left);
            ab.merge(&build(4, right)).unwrap();
            let mut ba = build(4, right);
            ba.merge(&build(4, left)).unwrap();
            prop_assert_eq!(&ab, &whole);
            prop_assert_eq!(&ba, &whole);
        }
    }
}

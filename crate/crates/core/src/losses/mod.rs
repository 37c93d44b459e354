//! Stage objectives of the curriculum.
//!
//! * Easy: answer + rationale likelihood + grounding of the box's pooled
//!   features to the lesion–organ anchor (inputs carry the box overlay).
//! * Medium: answer + rationale likelihood + alignment of model attention to
//!   the box's soft mask (no overlay).
//! * Hard: answer likelihood only.

mod alignment;
mod grounding;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use alignment::{alignment_registry, AttentionAlignment, ForwardKl, ReverseKl};
pub use grounding::{
    grounding_loss, grounding_registry, ContrastiveGrounding, CosineGrounding, GroundingEval, GroundingObjective,
};

use crate::forge::BBox;
use crate::geometry::{AttentionMap, GeometryError, GridDims, SoftMask};
use crate::registry::{RegistryError, StrategySpec};

#[derive(Debug, Error, PartialEq)]
pub enum LossError {
    #[error("empty token list")]
    EmptyTokens,
    #[error("log-probability {0} is positive or not finite")]
    InvalidLogProb(f64),
    #[error("zero-norm vector")]
    ZeroNorm,
    #[error("vector dimensions differ: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("{stage:?} stage requires {component}")]
    MissingComponent { stage: Stage, component: &'static str },
    #[error("no rationale candidates")]
    NoCandidates,
    #[error("rationale score is NaN")]
    NanScore,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Stage {
    Easy,
    Medium,
    Hard,
}

/// Visual features on the attention grid: `dim` values per cell, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureGrid {
    pub dims: GridDims,
    pub dim: usize,
    pub data: Vec<f64>,
}

impl FeatureGrid {
    pub fn new(dims: GridDims, dim: usize, data: Vec<f64>) -> Result<Self, LossError> {
        if data.len() != dims.len() * dim {
            return Err(LossError::DimensionMismatch(data.len(), dims.len() * dim));
        }
        Ok(Self { dims, dim, data })
    }

    pub fn cell(&self, index: usize) -> &[f64] {
        &self.data[index * self.dim..(index + 1) * self.dim]
    }
}

/// What a model produced for one item.
#[derive(Debug, Clone, Default)]
pub struct ModelOutputs {
    pub answer_token_logprobs: Vec<f64>,
    pub cot_token_logprobs: Option<Vec<f64>>,
    pub attention: Option<AttentionMap>,
    pub feature_grid: Option<FeatureGrid>,
    pub anchor_embedding: Option<Vec<f64>>,
    /// Other anchors in the batch, used by contrastive grounding.
    pub negative_anchors: Vec<Vec<f64>>,
}

/// Supervision targets derived from the item's box.
#[derive(Debug, Clone, Copy, Default)]
pub struct StageTargets<'a> {
    pub bbox: Option<BBox>,
    pub soft_mask: Option<&'a SoftMask>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StageLossWeights {
    pub w_ans: f64,
    pub w_cot: f64,
    pub w_ground: f64,
    pub w_attn: f64,
}

impl Default for StageLossWeights {
    fn default() -> Self {
        Self {
            w_ans: 1.0,
            w_cot: 1.0,
            w_ground: 1.0,
            w_attn: 1.0,
        }
    }
}

impl StageLossWeights {
    pub fn validate(&self) -> Result<(), String> {
        let all = [self.w_ans, self.w_cot, self.w_ground, self.w_attn];
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(format!("loss weights must be finite and >= 0, got {all:?}"));
        }
        Ok(())
    }
}

/// Objective configuration as written in config files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObjectiveConfig {
    pub weights: StageLossWeights,
    pub grounding: StrategySpec,
    pub alignment: StrategySpec,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        Self {
            weights: StageLossWeights::default(),
            grounding: StrategySpec::named("cosine"),
            alignment: StrategySpec::named("kl_forward"),
        }
    }
}

/// Resolved objectives: weights plus the selected grounding and alignment
/// strategies.
pub struct StageObjectives {
    pub weights: StageLossWeights,
    pub grounding: Box<dyn GroundingObjective>,
    pub alignment: Box<dyn AttentionAlignment>,
}

impl Default for StageObjectives {
    fn default() -> Self {
        Self {
            weights: StageLossWeights::default(),
            grounding: Box::new(CosineGrounding),
            alignment: Box::new(ForwardKl),
        }
    }
}

impl StageObjectives {
    pub fn from_config(config: &ObjectiveConfig) -> Result<Self, RegistryError> {
        config
            .weights
            .validate()
            .map_err(|reason| RegistryError::InvalidParams {
                name: "weights".into(),
                reason,
            })?;
        Ok(Self {
            weights: config.weights,
            grounding: grounding_registry().build(&config.grounding)?,
            alignment: alignment_registry().build(&config.alignment)?,
        })
    }
}

impl std::fmt::Debug for StageObjectives {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("StageObjectives")
            .field("weights", &self.weights)
            .field("grounding", &self.grounding.name())
            .field("alignment", &self.alignment.name())
            .finish()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageLossBreakdown {
    pub stage: Stage,
    pub l_ans: f64,
    pub l_cot: f64,
    pub l_ground: f64,
    pub l_attn_mask: f64,
    pub total: f64,
}

/// Mean negative log-likelihood over target tokens.
pub fn nll_loss(token_logprobs: &[f64]) -> Result<f64, LossError> {
    if token_logprobs.is_empty() {
        return Err(LossError::EmptyTokens);
    }
    if let Some(&bad) = token_logprobs.iter().find(|lp| !lp.is_finite() || **lp > 0.0) {
        return Err(LossError::InvalidLogProb(bad));
    }
    Ok(-token_logprobs.iter().sum::<f64>() / token_logprobs.len() as f64)
}

/// Grid cells pooled for a box: those whose centers fall inside it, or the
/// single cell containing the box center when none do.
pub fn roi_cells(dims: GridDims, bbox: &BBox) -> Vec<usize> {
    let span = bbox.pixel_span(dims.cols, dims.rows);
    if span.is_empty() {
        let (cx, cy) = bbox.center();
        let col = ((cx * dims.cols as f64) as usize).min(dims.cols - 1);
        let row = ((cy * dims.rows as f64) as usize).min(dims.rows - 1);
        return vec![row * dims.cols + col];
    }
    (span.row_start..span.row_end)
        .flat_map(|r| (span.col_start..span.col_end).map(move |c| r * dims.cols + c))
        .collect()
}

/// Mean feature vector over [`roi_cells`].
pub fn roi_pool(grid: &FeatureGrid, bbox: &BBox) -> Vec<f64> {
    let cells = roi_cells(grid.dims, bbox);
    let mut out = vec![0.0; grid.dim];
    for &cell in &cells {
        out.iter_mut().zip(grid.cell(cell)).for_each(|(o, v)| *o += v);
    }
    let n = cells.len() as f64;
    out.iter_mut().for_each(|o| *o /= n);
    out
}

fn require<T>(value: Option<T>, stage: Stage, component: &'static str) -> Result<T, LossError> {
    value.ok_or(LossError::MissingComponent { stage, component })
}

/// Evaluates one item's objective under `stage`.
pub fn stage_loss(
    stage: Stage,
    outputs: &ModelOutputs,
    targets: &StageTargets<'_>,
    objectives: &StageObjectives,
) -> Result<StageLossBreakdown, LossError> {
    let w = &objectives.weights;
    let l_ans = nll_loss(&outputs.answer_token_logprobs)?;
    let mut out = StageLossBreakdown {
        stage,
        l_ans,
        l_cot: 0.0,
        l_ground: 0.0,
        l_attn_mask: 0.0,
        total: l_ans,
    };
    match stage {
        Stage::Hard => {}
        Stage::Easy => {
            let cot = require(
                outputs.cot_token_logprobs.as_ref(),
                stage,
                "rationale log-probabilities",
            )?;
            let grid = require(outputs.feature_grid.as_ref(), stage, "a feature grid")?;
            let anchor = require(outputs.anchor_embedding.as_ref(), stage, "an anchor embedding")?;
            let bbox = require(targets.bbox, stage, "a box")?;
            out.l_cot = nll_loss(cot)?;
            let roi = roi_pool(grid, &bbox);
            let negatives: Vec<&[f64]> = outputs.negative_anchors.iter().map(Vec::as_slice).collect();
            out.l_ground = objectives.grounding.evaluate(&roi, anchor, &negatives)?.loss;
            out.total = w.w_ans * out.l_ans + w.w_cot * out.l_cot + w.w_ground * out.l_ground;
        }
        Stage::Medium => {
            let cot = require(
                outputs.cot_token_logprobs.as_ref(),
                stage,
                "rationale log-probabilities",
            )?;
            let attention = require(outputs.attention.as_ref(), stage, "an attention map")?;
            let mask = require(targets.soft_mask, stage, "a soft mask")?;
            out.l_cot = nll_loss(cot)?;
            out.l_attn_mask = objectives.alignment.loss(attention, mask)?;
            out.total = w.w_ans * out.l_ans + w.w_cot * out.l_cot + w.w_attn * out.l_attn_mask;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RationaleCandidate {
    pub cot: String,
    /// `log p(A | I, Q, CoT)`.
    pub answer_logprob: f64,
}

/// Picks the rationale under which the answer is most likely; the first
/// candidate wins ties.
pub fn select_rationale(candidates: &[RationaleCandidate]) -> Result<&RationaleCandidate, LossError> {
    let mut best: Option<&RationaleCandidate> = None;
    for c in candidates {
        if c.answer_logprob.is_nan() {
            return Err(LossError::NanScore);
        }
        if best.is_none_or(|b| c.answer_logprob > b.answer_logprob) {
            best = Some(c);
        }
    }
    best.ok_or(LossError::NoCandidates)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn nll_cases() {
        assert_eq!(nll_loss(&[0.0, 0.0, 0.0]).unwrap(), 0.0);
        let quarter = (0.25f64).ln();
        assert!((nll_loss(&[quarter, quarter]).unwrap() - 4f64.ln()).abs() < 1e-15);
        assert!((nll_loss(&[quarter, quarter]).unwrap() - 1.3863).abs() < 1e-4);
        assert_eq!(nll_loss(&[]), Err(LossError::EmptyTokens));
        assert_eq!(nll_loss(&[0.1]), Err(LossError::InvalidLogProb(0.1)));
    }

    fn distinct_grid() -> FeatureGrid {
        let dims = GridDims::new(4, 4);
        let data = (0..16).flat_map(|i| [i as f64, (i * i) as f64]).collect();
        FeatureGrid::new(dims, 2, data).unwrap()
    }

    #[test]
    fn roi_pool_cases() {
        let constant = FeatureGrid::new(GridDims::new(3, 3), 2, [1.5, -2.0].repeat(9)).unwrap();
        assert_eq!(
            roi_pool(&constant, &BBox::new(0.1, 0.2, 0.9, 0.7).unwrap()),
            vec![1.5, -2.0]
        );

        let g = distinct_grid();
        let one_cell = BBox::new(0.25, 0.5, 0.5, 0.75).unwrap();
        assert_eq!(roi_pool(&g, &one_cell), g.cell(2 * 4 + 1).to_vec());

        // Brute-force average over the 8 cells of columns 0 and 1.
        let left = BBox::new(0.0, 0.0, 0.5, 1.0).unwrap();
        let mut expected = [0.0; 2];
        for r in 0..4 {
            for c in 0..2 {
                let v = g.cell(r * 4 + c);
                expected[0] += v[0] / 8.0;
                expected[1] += v[1] / 8.0;
            }
        }
        let got = roi_pool(&g, &left);
        assert!((got[0] - expected[0]).abs() < 1e-12 && (got[1] - expected[1]).abs() < 1e-12);
    }

    #[test]
    fn roi_falls_back_to_center_cell() {
        let g = distinct_grid();
        let sliver = BBox::new(0.55, 0.3, 0.6, 0.35).unwrap();
        assert_eq!(roi_cells(g.dims, &sliver), vec![4 + 2]);
        assert_eq!(roi_pool(&g, &sliver), g.cell(6).to_vec());
    }

    fn lp(loss: f64) -> Vec<f64> {
        vec![-loss]
    }

    fn easy_outputs(l_ans: f64, l_cot: f64, cos: f64) -> ModelOutputs {
        let feature = vec![1.0, 0.0];
        let anchor = vec![cos, (1.0 - cos * cos).sqrt()];
        ModelOutputs {
            answer_token_logprobs: lp(l_ans),
            cot_token_logprobs: Some(lp(l_cot)),
            feature_grid: Some(FeatureGrid::new(GridDims::new(1, 1), 2, feature).unwrap()),
            anchor_embedding: Some(anchor),
            ..ModelOutputs::default()
        }
    }

    #[test]
    fn easy_total_is_weighted_sum() {
        let out = easy_outputs(0.5, 0.3, 0.8);
        let targets = StageTargets {
            bbox: Some(BBox::full()),
            soft_mask: None,
        };
        let b = stage_loss(Stage::Easy, &out, &targets, &StageObjectives::default()).unwrap();
        assert!((b.l_ground - 0.2).abs() < 1e-12);
        assert!((b.total - 1.0).abs() < 1e-12);
        let heavy = StageObjectives {
            weights: StageLossWeights {
                w_ground: 2.0,
                ..StageLossWeights::default()
            },
            ..StageObjectives::default()
        };
        let b = stage_loss(Stage::Easy, &out, &targets, &heavy).unwrap();
        assert!((b.total - 1.2).abs() < 1e-12);
    }

    #[test]
    fn hard_total_is_answer_loss_only() {
        let out = ModelOutputs {
            answer_token_logprobs: lp(0.7),
            ..easy_outputs(0.7, 5.0, -1.0)
        };
        let heavy = StageObjectives {
            weights: StageLossWeights {
                w_ans: 9.0,
                w_cot: 9.0,
                w_ground: 9.0,
                w_attn: 9.0,
            },
            ..StageObjectives::default()
        };
        let b = stage_loss(Stage::Hard, &out, &StageTargets::default(), &heavy).unwrap();
        assert_eq!(b.total, 0.7);
        assert_eq!((b.l_cot, b.l_ground, b.l_attn_mask), (0.0, 0.0, 0.0));
    }

    #[test]
    fn medium_zero_case_and_missing_components() {
        let dims = GridDims::new(2, 2);
        let mask = SoftMask::new(dims, vec![0.25; 4]).unwrap();
        let out = ModelOutputs {
            answer_token_logprobs: vec![0.0],
            cot_token_logprobs: Some(vec![0.0]),
            attention: Some(AttentionMap::uniform(dims)),
            ..ModelOutputs::default()
        };
        let targets = StageTargets {
            bbox: None,
            soft_mask: Some(&mask),
        };
        let b = stage_loss(Stage::Medium, &out, &targets, &StageObjectives::default()).unwrap();
        assert_eq!(b.total, 0.0);

        let err = stage_loss(
            Stage::Medium,
            &out,
            &StageTargets::default(),
            &StageObjectives::default(),
        );
        assert!(matches!(
            err,
            Err(LossError::MissingComponent {
                stage: Stage::Medium,
                ..
            })
        ));
        let bare = ModelOutputs {
            answer_token_logprobs: vec![0.0],
            ..ModelOutputs::default()
        };
        let err = stage_loss(
            Stage::Easy,
            &bare,
            &StageTargets::default(),
            &StageObjectives::default(),
        );
        assert!(matches!(
            err,
            Err(LossError::MissingComponent { stage: Stage::Easy, .. })
        ));
    }

    fn cand(score: f64) -> RationaleCandidate {
        RationaleCandidate {
            cot: format!("cot {score}"),
            answer_logprob: score,
        }
    }

    #[test]
    fn selection_cases() {
        let single = [cand(-3.0)];
        assert_eq!(select_rationale(&single).unwrap(), &single[0]);
        let three = [cand(-1.2), cand(-0.4), cand(-0.9)];
        assert_eq!(select_rationale(&three).unwrap(), &three[1]);
        let tied = [
            RationaleCandidate {
                cot: "first".into(),
                answer_logprob: -0.5,
            },
            RationaleCandidate {
                cot: "second".into(),
                answer_logprob: -0.5,
            },
        ];
        assert_eq!(select_rationale(&tied).unwrap().cot, "first");
        assert_eq!(select_rationale(&[]), Err(LossError::NoCandidates));
        assert_eq!(select_rationale(&[cand(f64::NAN)]), Err(LossError::NanScore));
    }

    #[test]
    fn objectives_from_config() {
        let cfg: ObjectiveConfig = serde_json::from_str(
            r#"{"grounding":{"name":"contrastive","temperature":0.5},"alignment":{"name":"kl_reverse"}}"#,
        )
        .unwrap();
        let o = StageObjectives::from_config(&cfg).unwrap();
        assert_eq!((o.grounding.name(), o.alignment.name()), ("contrastive", "kl_reverse"));
        let bad = ObjectiveConfig {
            weights: StageLossWeights {
                w_cot: -1.0,
                ..Default::default()
            },
            ..Default::default()
        };
        assert!(StageObjectives::from_config(&bad).is_err());
    }

    proptest! {
        #[test]
        fn hard_ignores_everything_but_answer(a in 0.0f64..5.0, c in 0.0f64..5.0, cos in -1.0f64..1.0) {
            let base = ModelOutputs { answer_token_logprobs: lp(a), ..ModelOutputs::default() };
            let full = easy_outputs(a, c, cos);
            let t = StageTargets::default();
            let o = StageObjectives::default();
            prop_assert_eq!(stage_loss(Stage::Hard, &base, &t, &o).unwrap().total,
                            stage_loss(Stage::Hard, &full, &t, &o).unwrap().total);
        }

        #[test]
        fn easy_is_monotone_in_components(a in 0.0f64..3.0, c in 0.0f64..3.0, cos in -0.99f64..0.99,
                                          da in 0.0f64..1.0, dc in 0.0f64..1.0, dcos in 0.0f64..0.5) {
            let t = StageTargets { bbox: Some(BBox::full()), soft_mask: None };
            let o = StageObjectives::default();
            let base = stage_loss(Stage::Easy, &easy_outputs(a, c, cos), &t, &o).unwrap();
            let more = stage_loss(Stage::Easy, &easy_outputs(a + da, c + dc, (cos - dcos).max(-1.0)), &t, &o).unwrap();
            prop_assert!(base.l_ans >= 0.0 && base.l_cot >= 0.0 && base.l_ground >= 0.0);
            prop_assert!(more.total >= base.total - 1e-12);
        }

        #[test]
        fn selection_invariant_under_monotone_transform(scores in proptest::collection::vec(-10.0f64..0.0, 1..8),
                                                        scale in 0.1f64..10.0, shift in -5.0f64..5.0) {
            let raw: Vec<_> = scores.iter().map(|&s| cand(s)).collect();
            let transformed: Vec<_> = scores.iter().enumerate()
                .map(|(i, &s)| RationaleCandidate { cot: raw[i].cot.clone(), answer_logprob: (scale * s + shift).exp() })
                .collect();
            prop_assert_eq!(&select_rationale(&raw).unwrap().cot, &select_rationale(&transformed).unwrap().cot);
        }
    }
}

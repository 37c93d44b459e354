use std::collections::BTreeMap;
use std::hash::Hasher;
use std::ops::Range;

use fnv::FnvHasher;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::forge::{render_overlay, BBox, DomainKey, VqaCotRecord};
use crate::geometry::{area_pool, build_soft_mask, softmax, AttentionMap, GridDims, SoftMask, SoftMaskParams};
use crate::losses::{
    roi_cells, roi_pool, select_rationale, stage_loss, FeatureGrid, LossError, ModelOutputs, RationaleCandidate, Stage,
    StageLossBreakdown, StageObjectives, StageTargets,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToyModelConfig {
    /// Resolution at which boxes are rasterized for overlays and soft masks.
    pub image_width: usize,
    pub image_height: usize,
    pub grid_rows: usize,
    pub grid_cols: usize,
    pub feature_dim: usize,
    /// Token ids are word hashes modulo this.
    pub vocab_size: usize,
    pub soft_mask: SoftMaskParams,
    pub overlay_thickness: usize,
    /// Standard deviation of the initial feature and anchor values.
    pub init_scale: f64,
    /// Logit bonus for answer tokens present in a selected rationale.
    pub copy_bonus: f64,
    /// Initial gain of the shared lesion-saliency term in attention logits.
    pub saliency_init: f64,
}

impl Default for ToyModelConfig {
    fn default() -> Self {
        Self {
            image_width: 32,
            image_height: 32,
            grid_rows: 4,
            grid_cols: 4,
            feature_dim: 8,
            vocab_size: 64,
            soft_mask: SoftMaskParams::default(),
            overlay_thickness: 1,
            init_scale: 0.1,
            copy_bonus: 2.0,
            saliency_init: 1.0,
        }
    }
}

impl ToyModelConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: &str| Err(HarnessError::InvalidConfig(m.to_string()));
        if self.image_width == 0 || self.image_height == 0 || self.grid_rows == 0 || self.grid_cols == 0 {
            return bad("image and grid sizes must be >= 1");
        }
        if self.feature_dim == 0 || self.vocab_size == 0 || self.overlay_thickness == 0 {
            return bad("feature_dim, vocab_size and overlay_thickness must be >= 1");
        }
        if !(self.init_scale.is_finite() && self.init_scale > 0.0) {
            return bad("init_scale must be finite and > 0");
        }
        if !self.copy_bonus.is_finite() || !self.saliency_init.is_finite() {
            return bad("copy_bonus and saliency_init must be finite");
        }
        Ok(())
    }

    pub fn grid(&self) -> GridDims {
        GridDims::new(self.grid_rows, self.grid_cols)
    }
}

/// Lowercased alphanumeric words hashed (FNV-1a) into `vocab` buckets.
pub fn tokenize(text: &str, vocab: usize) -> Vec<usize> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(|w| {
            let mut h = FnvHasher::default();
            h.write(w.to_lowercase().as_bytes());
            (h.finish() % vocab as u64) as usize
        })
        .collect()
}

/// A corpus record prepared for the toy model.
#[derive(Debug, Clone)]
pub struct ToyItem {
    pub image_id: String,
    pub domain: DomainKey,
    pub bbox: BBox,
    pub answer_tokens: Vec<usize>,
    pub cot_tokens: Vec<usize>,
    /// Fraction of each grid cell covered by the box overlay ring.
    pub overlay: Vec<f64>,
    /// Log of the fraction of each grid cell covered by the lesion itself,
    /// floored at the soft-mask floor.
    pub lesion: Vec<f64>,
    pub soft_mask: SoftMask,
    pub anchor: usize,
    /// Row of the per-item attention logits; main-pool items only.
    pub attention_row: Option<usize>,
    /// Candidate rationales for Hard-stage selection.
    pub rationale_candidates: Vec<(String, Vec<usize>)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Layout {
    vocab: usize,
    cells: usize,
    dim: usize,
    anchors: usize,
    attention_rows: usize,
}

impl Layout {
    fn ans(&self) -> Range<usize> {
        0..self.vocab
    }
    fn cot(&self) -> Range<usize> {
        self.vocab..2 * self.vocab
    }
    fn features(&self) -> Range<usize> {
        let s = 2 * self.vocab;
        s..s + self.cells * self.dim
    }
    fn overlay(&self) -> Range<usize> {
        let s = self.features().end;
        s..s + self.dim
    }
    fn anchor(&self, i: usize) -> Range<usize> {
        let s = self.overlay().end + i * self.dim;
        s..s + self.dim
    }
    fn saliency(&self) -> usize {
        self.anchor(self.anchors).start
    }
    fn attention(&self, row: usize) -> Range<usize> {
        let s = self.saliency() + 1 + row * self.cells;
        s..s + self.cells
    }
    fn len(&self) -> usize {
        self.attention(self.attention_rows).start
    }
}

/// Loss breakdown and gradient of one item's stage objective.
#[derive(Debug, Clone)]
pub struct ItemEval {
    pub breakdown: StageLossBreakdown,
    pub grad: Vec<f64>,
}

/// Unigram answer and rationale heads, shared per-cell visual features, a
/// learned overlay embedding, one anchor per seed sentence and per-item
/// attention logits, all stored in one flat parameter vector. An item's
/// attention logits are its own row plus a shared saliency gain times the
/// log lesion coverage of each cell.
#[derive(Debug, Clone)]
pub struct ToyModel {
    config: ToyModelConfig,
    layout: Layout,
    anchor_keys: Vec<String>,
    params: Vec<f64>,
}

// log-softmax of `logits` at `tokens`, and the gradient of their mean NLL.
fn head_nll(logits: &[f64], tokens: &[usize]) -> (Vec<f64>, Vec<f64>) {
    let p = softmax(logits);
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    let logprobs = tokens.iter().map(|&t| (logits[t] - lse).min(0.0)).collect();
    let mut grad = p;
    let w = 1.0 / tokens.len() as f64;
    for &t in tokens {
        grad[t] -= w;
    }
    (logprobs, grad)
}

fn add_scaled(dst: &mut [f64], src: &[f64], scale: f64) {
    dst.iter_mut().zip(src).for_each(|(d, s)| *d += scale * s);
}

impl ToyModel {
    /// Prepares main and Hard items and initializes parameters. Anchors are
    /// keyed by the record's seed sentence, which names lesion and organ.
    pub fn build<R: Rng + ?Sized>(
        config: &ToyModelConfig,
        main: &[VqaCotRecord],
        hard: &[VqaCotRecord],
        rationale_candidates: usize,
        rng: &mut R,
    ) -> Result<(Self, Vec<ToyItem>, Vec<ToyItem>), HarnessError> {
        config.validate()?;
        let dims = config.grid();
        let mut keys: BTreeMap<&str, usize> = BTreeMap::new();
        for r in main.iter().chain(hard) {
            keys.insert(r.seed.as_str(), 0);
        }
        for (i, v) in keys.values_mut().enumerate() {
            *v = i;
        }
        let layout = Layout {
            vocab: config.vocab_size,
            cells: dims.len(),
            dim: config.feature_dim,
            anchors: keys.len(),
            attention_rows: main.len(),
        };

        let mut by_domain: BTreeMap<&DomainKey, Vec<(String, Vec<usize>)>> = BTreeMap::new();
        if rationale_candidates > 0 {
            for r in main {
                let list = by_domain.entry(&r.domain).or_default();
                if list.len() < rationale_candidates && !list.iter().any(|(c, _)| c == &r.cot) {
                    list.push((r.cot.clone(), tokenize(&r.cot, config.vocab_size)));
                }
            }
        }

        let prepare = |index: usize, r: &VqaCotRecord, row: Option<usize>| -> Result<ToyItem, HarnessError> {
            let invalid = |reason: String| HarnessError::InvalidRecord {
                index,
                image_id: r.image_id.clone(),
                reason,
            };
            let answer_tokens = tokenize(&r.answer, config.vocab_size);
            if answer_tokens.is_empty() {
                return Err(invalid("answer has no tokens".into()));
            }
            let cot_tokens = tokenize(&r.cot, config.vocab_size);
            if row.is_some() && cot_tokens.is_empty() {
                return Err(invalid("rationale has no tokens".into()));
            }
            let ring = render_overlay(
                config.image_width,
                config.image_height,
                &r.bbox,
                config.overlay_thickness,
            )
            .map_err(|e| invalid(e.to_string()))?;
            let ring: Vec<f64> = ring.pixels.iter().map(|&on| f64::from(u8::from(on))).collect();
            let overlay = area_pool(&ring, config.image_width, config.image_height, dims);
            let body: Vec<f64> = r
                .bbox
                .rasterize(config.image_width, config.image_height)
                .into_iter()
                .map(|on| f64::from(u8::from(on)))
                .collect();
            let lesion = area_pool(&body, config.image_width, config.image_height, dims)
                .into_iter()
                .map(|c| c.max(config.soft_mask.floor).ln())
                .collect();
            let soft_mask = build_soft_mask(
                &r.bbox,
                config.image_width,
                config.image_height,
                dims,
                &config.soft_mask,
            )
            .map_err(|e| invalid(e.to_string()))?;
            Ok(ToyItem {
                image_id: r.image_id.clone(),
                domain: r.domain.clone(),
                bbox: r.bbox,
                answer_tokens,
                cot_tokens,
                overlay,
                lesion,
                soft_mask,
                anchor: keys[r.seed.as_str()],
                attention_row: row,
                rationale_candidates: if row.is_none() {
                    by_domain.get(&r.domain).cloned().unwrap_or_default()
                } else {
                    Vec::new()
                },
            })
        };
        let main_items = main
            .iter()
            .enumerate()
            .map(|(i, r)| prepare(i, r, Some(i)))
            .collect::<Result<Vec<_>, _>>()?;
        let hard_items = hard
            .iter()
            .enumerate()
            .map(|(i, r)| prepare(i, r, None))
            .collect::<Result<Vec<_>, _>>()?;

        let mut params = vec![0.0; layout.len()];
        let normal = Normal::new(0.0, config.init_scale).map_err(|e| HarnessError::InvalidConfig(e.to_string()))?;
        let random_span = layout.features().start..layout.anchor(layout.anchors).start;
        for p in &mut params[random_span] {
            *p = normal.sample(rng);
        }
        params[layout.saliency()] = config.saliency_init;
        let model = Self {
            config: config.clone(),
            layout,
            anchor_keys: keys.into_keys().map(str::to_string).collect(),
            params,
        };
        Ok((model, main_items, hard_items))
    }

    pub fn config(&self) -> &ToyModelConfig {
        &self.config
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn anchor_keys(&self) -> &[String] {
        &self.anchor_keys
    }

    /// Applies `params -= step·grad`.
    pub fn step(&mut self, grad: &[f64], step: f64) {
        add_scaled(&mut self.params, grad, -step);
    }

    /// Attention after softmax for a main-pool item.
    pub fn attention(&self, params: &[f64], item: &ToyItem) -> Option<AttentionMap> {
        AttentionMap::from_logits(self.config.grid(), &self.attention_logits(params, item)?).ok()
    }

    fn attention_logits(&self, params: &[f64], item: &ToyItem) -> Option<Vec<f64>> {
        let row = &params[self.layout.attention(item.attention_row?)];
        let gain = params[self.layout.saliency()];
        Some(row.iter().zip(&item.lesion).map(|(z, c)| z + gain * c).collect())
    }

    // Visual features for an item: per-cell features plus, for Easy items,
    // the overlay embedding weighted by ring coverage.
    fn feature_grid(&self, params: &[f64], item: &ToyItem) -> Result<FeatureGrid, LossError> {
        let l = self.layout;
        let mut data = params[l.features()].to_vec();
        let u = &params[l.overlay()];
        for (c, &o) in item.overlay.iter().enumerate() {
            add_scaled(&mut data[c * l.dim..(c + 1) * l.dim], u, o);
        }
        FeatureGrid::new(self.config.grid(), l.dim, data)
    }

    /// Stage objective of one item at `params`, with its analytic gradient.
    pub fn evaluate(
        &self,
        params: &[f64],
        item: &ToyItem,
        stage: Stage,
        objectives: &StageObjectives,
    ) -> Result<ItemEval, LossError> {
        let l = self.layout;
        if params.len() != l.len() {
            return Err(LossError::DimensionMismatch(params.len(), l.len()));
        }
        let w = objectives.weights;
        let mut grad = vec![0.0; l.len()];
        let ans_logits = &params[l.ans()];

        if stage == Stage::Hard {
            let (logprobs, g) = self.hard_answer(ans_logits, item)?;
            let outputs = ModelOutputs {
                answer_token_logprobs: logprobs,
                ..Default::default()
            };
            let breakdown = stage_loss(stage, &outputs, &StageTargets::default(), objectives)?;
            grad[l.ans()].copy_from_slice(&g);
            return Ok(ItemEval { breakdown, grad });
        }

        let (ans_lp, ans_g) = head_nll(ans_logits, &item.answer_tokens);
        let (cot_lp, cot_g) = head_nll(&params[l.cot()], &item.cot_tokens);
        add_scaled(&mut grad[l.ans()], &ans_g, w.w_ans);
        add_scaled(&mut grad[l.cot()], &cot_g, w.w_cot);
        let mut outputs = ModelOutputs {
            answer_token_logprobs: ans_lp,
            cot_token_logprobs: Some(cot_lp),
            ..Default::default()
        };

        if stage == Stage::Easy {
            let grid = self.feature_grid(params, item)?;
            let anchor = params[l.anchor(item.anchor)].to_vec();
            let others: Vec<usize> = (0..l.anchors).filter(|&a| a != item.anchor).collect();
            let negatives: Vec<Vec<f64>> = others.iter().map(|&a| params[l.anchor(a)].to_vec()).collect();
            let roi = roi_pool(&grid, &item.bbox);
            let neg_refs: Vec<&[f64]> = negatives.iter().map(Vec::as_slice).collect();
            let ground = objectives.grounding.evaluate(&roi, &anchor, &neg_refs)?;

            let cells = roi_cells(grid.dims, &item.bbox);
            let scale = w.w_ground / cells.len() as f64;
            for &c in &cells {
                let f = l.features().start + c * l.dim;
                add_scaled(&mut grad[f..f + l.dim], &ground.d_roi, scale);
                add_scaled(&mut grad[l.overlay()], &ground.d_roi, scale * item.overlay[c]);
            }
            add_scaled(&mut grad[l.anchor(item.anchor)], &ground.d_anchor, w.w_ground);
            for (&a, d) in others.iter().zip(&ground.d_negatives) {
                add_scaled(&mut grad[l.anchor(a)], d, w.w_ground);
            }

            outputs.feature_grid = Some(grid);
            outputs.anchor_embedding = Some(anchor);
            outputs.negative_anchors = negatives;
            let targets = StageTargets {
                bbox: Some(item.bbox),
                soft_mask: None,
            };
            let breakdown = stage_loss(stage, &outputs, &targets, objectives)?;
            return Ok(ItemEval { breakdown, grad });
        }

        let (row, logits) =
            item.attention_row
                .zip(self.attention_logits(params, item))
                .ok_or(LossError::MissingComponent {
                    stage,
                    component: "an attention row (Hard-pool items cannot be Medium)",
                })?;
        let attention = AttentionMap::from_logits(self.config.grid(), &logits)?;
        let g = objectives.alignment.logit_gradient(&attention, &item.soft_mask)?;
        add_scaled(&mut grad[l.attention(row)], &g, w.w_attn);
        grad[l.saliency()] += w.w_attn * g.iter().zip(&item.lesion).map(|(a, c)| a * c).sum::<f64>();
        outputs.attention = Some(attention);
        let targets = StageTargets {
            bbox: Some(item.bbox),
            soft_mask: Some(&item.soft_mask),
        };
        let breakdown = stage_loss(stage, &outputs, &targets, objectives)?;
        Ok(ItemEval { breakdown, grad })
    }

    // Answer log-probabilities for a Hard item. With candidates, the answer
    // head is conditioned on the best-scoring rationale by adding
    // `copy_bonus` to the logits of tokens that rationale contains.
    fn hard_answer(&self, ans_logits: &[f64], item: &ToyItem) -> Result<(Vec<f64>, Vec<f64>), LossError> {
        if item.rationale_candidates.is_empty() {
            return Ok(head_nll(ans_logits, &item.answer_tokens));
        }
        let conditioned = |cot: &[usize]| {
            let mut z = ans_logits.to_vec();
            let mut present = vec![false; z.len()];
            cot.iter().for_each(|&t| present[t] = true);
            z.iter_mut()
                .zip(&present)
                .filter(|(_, &p)| p)
                .for_each(|(v, _)| *v += self.config.copy_bonus);
            z
        };
        let candidates: Vec<RationaleCandidate> = item
            .rationale_candidates
            .iter()
            .map(|(text, tokens)| {
                let (lp, _) = head_nll(&conditioned(tokens), &item.answer_tokens);
                RationaleCandidate {
                    cot: text.clone(),
                    answer_logprob: lp.iter().sum::<f64>() / lp.len() as f64,
                }
            })
            .collect();
        let best = select_rationale(&candidates)?;
        let index = candidates.iter().position(|c| std::ptr::eq(c, best)).unwrap_or(0);
        Ok(head_nll(
            &conditioned(&item.rationale_candidates[index].1),
            &item.answer_tokens,
        ))
    }
}

use serde::Deserialize;

use super::LossError;
use crate::registry::{Registry, StrategySpec};

/// Loss value plus gradients with respect to every input vector.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundingEval {
    pub loss: f64,
    pub d_roi: Vec<f64>,
    pub d_anchor: Vec<f64>,
    pub d_negatives: Vec<Vec<f64>>,
}

/// Aligns pooled region features with the lesion–organ text anchor.
pub trait GroundingObjective: Send + Sync {
    fn name(&self) -> &str;

    /// `negatives` are other anchors from the same batch; objectives that do
    /// not use them return empty gradients for them.
    fn evaluate(&self, roi: &[f64], anchor: &[f64], negatives: &[&[f64]]) -> Result<GroundingEval, LossError>;
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

// cos(a, b) and its gradients with respect to a and b.
fn cosine_with_grads(a: &[f64], b: &[f64]) -> Result<(f64, Vec<f64>, Vec<f64>), LossError> {
    if a.len() != b.len() {
        return Err(LossError::DimensionMismatch(a.len(), b.len()));
    }
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(LossError::ZeroNorm);
    }
    let cos = dot(a, b) / (na * nb);
    let da = a
        .iter()
        .zip(b)
        .map(|(x, y)| y / (na * nb) - cos * x / (na * na))
        .collect();
    let db = a
        .iter()
        .zip(b)
        .map(|(x, y)| x / (na * nb) - cos * y / (nb * nb))
        .collect();
    Ok((cos, da, db))
}

/// `1 − cos(roi, anchor)`, in `[0, 2]`.
pub fn grounding_loss(roi: &[f64], anchor: &[f64]) -> Result<f64, LossError> {
    let (cos, _, _) = cosine_with_grads(roi, anchor)?;
    Ok((1.0 - cos).clamp(0.0, 2.0))
}

#[derive(Debug, Clone, Copy, Default)]
pub struct CosineGrounding;

impl GroundingObjective for CosineGrounding {
    fn name(&self) -> &str {
        "cosine"
    }

    fn evaluate(&self, roi: &[f64], anchor: &[f64], negatives: &[&[f64]]) -> Result<GroundingEval, LossError> {
        let (cos, d_roi, d_anchor) = cosine_with_grads(roi, anchor)?;
        Ok(GroundingEval {
            loss: 1.0 - cos,
            d_roi: d_roi.into_iter().map(|g| -g).collect(),
            d_anchor: d_anchor.into_iter().map(|g| -g).collect(),
            d_negatives: vec![vec![0.0; roi.len()]; negatives.len()],
        })
    }
}

/// In-batch contrastive variant: softmax cross-entropy of the positive
/// anchor against the batch's other anchors, on cosine similarities scaled
/// by `1/temperature`.
#[derive(Debug, Clone, Copy, Deserialize)]
pub struct ContrastiveGrounding {
    #[serde(default = "default_temperature")]
    pub temperature: f64,
}

fn default_temperature() -> f64 {
    0.1
}

impl GroundingObjective for ContrastiveGrounding {
    fn name(&self) -> &str {
        "contrastive"
    }

    fn evaluate(&self, roi: &[f64], anchor: &[f64], negatives: &[&[f64]]) -> Result<GroundingEval, LossError> {
        let t = self.temperature;
        let mut sims = Vec::with_capacity(negatives.len() + 1);
        for a in std::iter::once(anchor).chain(negatives.iter().copied()) {
            sims.push(cosine_with_grads(roi, a)?);
        }
        let scores: Vec<f64> = sims.iter().map(|(c, _, _)| c / t).collect();
        let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln();
        let loss = lse - scores[0];
        let probs: Vec<f64> = scores.iter().map(|s| (s - lse).exp()).collect();

        let mut d_roi = vec![0.0; roi.len()];
        let mut d_targets = Vec::with_capacity(sims.len());
        for (i, (_, d_r, d_a)) in sims.into_iter().enumerate() {
            let coeff = (probs[i] - if i == 0 { 1.0 } else { 0.0 }) / t;
            d_roi.iter_mut().zip(&d_r).for_each(|(acc, g)| *acc += coeff * g);
            d_targets.push(d_a.into_iter().map(|g| coeff * g).collect::<Vec<_>>());
        }
        let mut targets = d_targets.into_iter();
        let d_anchor = targets.next().unwrap_or_default();
        Ok(GroundingEval {
            loss: loss.max(0.0),
            d_roi,
            d_anchor,
            d_negatives: targets.collect(),
        })
    }
}

pub fn grounding_registry() -> Registry<dyn GroundingObjective> {
    let mut registry: Registry<dyn GroundingObjective> = Registry::new();
    registry.register("cosine", |_| Ok(Box::new(CosineGrounding)));
    registry.register("contrastive", |spec: &StrategySpec| {
        let objective: ContrastiveGrounding = spec.parse_params()?;
        if !(objective.temperature > 0.0) {
            return Err(crate::registry::RegistryError::InvalidParams {
                name: spec.name.clone(),
                reason: "temperature must be positive".into(),
            });
        }
        Ok(Box::new(objective))
    });
    registry
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_cases() {
        let a = [0.6, 0.8];
        assert!(grounding_loss(&a, &a).unwrap().abs() < 1e-15);
        assert!((grounding_loss(&a, &[-0.6, -0.8]).unwrap() - 2.0).abs() < 1e-15);
        assert!((grounding_loss(&[1.0, 0.0], &[0.0, 1.0]).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(grounding_loss(&[0.0, 0.0], &a), Err(LossError::ZeroNorm));
        assert!(matches!(
            grounding_loss(&[1.0], &a),
            Err(LossError::DimensionMismatch(1, 2))
        ));
    }

    fn numeric_grad(f: impl Fn(&[f64]) -> f64, x: &[f64]) -> Vec<f64> {
        let h = 1e-6;
        let mut xp = x.to_vec();
        (0..x.len())
            .map(|i| {
                xp[i] = x[i] + h;
                let up = f(&xp);
                xp[i] = x[i] - h;
                let down = f(&xp);
                xp[i] = x[i];
                (up - down) / (2.0 * h)
            })
            .collect()
    }

    fn assert_close(a: &[f64], b: &[f64]) {
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() <= 1e-6 * x.abs().max(y.abs()).max(1e-3), "{x} vs {y}");
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let roi = [0.3, -1.2, 0.7];
        let anchor = [1.0, 0.4, -0.2];
        let neg1 = [0.1, 0.9, 0.5];
        let neg2 = [-0.4, 0.2, 1.1];
        let negs: [&[f64]; 2] = [&neg1, &neg2];
        let objectives: [Box<dyn GroundingObjective>; 2] = [
            Box::new(CosineGrounding),
            Box::new(ContrastiveGrounding { temperature: 0.5 }),
        ];
        for obj in &objectives {
            let eval = obj.evaluate(&roi, &anchor, &negs).unwrap();
            assert_close(
                &eval.d_roi,
                &numeric_grad(|r| obj.evaluate(r, &anchor, &negs).unwrap().loss, &roi),
            );
            assert_close(
                &eval.d_anchor,
                &numeric_grad(|a| obj.evaluate(&roi, a, &negs).unwrap().loss, &anchor),
            );
            let dn = numeric_grad(|n| obj.evaluate(&roi, &anchor, &[n, &neg2]).unwrap().loss, &neg1);
            assert_close(&eval.d_negatives[0], &dn);
        }
    }

    #[test]
    fn registry_builds_both_variants() {
        let r = grounding_registry();
        assert_eq!(r.build(&StrategySpec::named("cosine")).unwrap().name(), "cosine");
        let c = r
            .build(&StrategySpec::named("contrastive").with_param("temperature", 0.2))
            .unwrap();
        assert_eq!(c.name(), "contrastive");
        assert!(r
            .build(&StrategySpec::named("contrastive").with_param("temperature", 0.0))
            .is_err());
    }
}

use super::LossError;
use crate::geometry::{kl_divergence, kl_forward_logit_gradient, kl_reverse_logit_gradient, AttentionMap, SoftMask};
use crate::registry::Registry;

/// Attention-to-mask alignment term for the Medium stage.
pub trait AttentionAlignment: Send + Sync {
    fn name(&self) -> &str;

    fn loss(&self, attention: &AttentionMap, target: &SoftMask) -> Result<f64, LossError>;

    /// Gradient with respect to the logits whose softmax is `attention`.
    fn logit_gradient(&self, attention: &AttentionMap, target: &SoftMask) -> Result<Vec<f64>, LossError>;
}

fn check_dims(attention: &AttentionMap, target: &SoftMask) -> Result<(), LossError> {
    if attention.dims() != target.dims() {
        return Err(crate::geometry::GeometryError::ShapeMismatch(attention.dims(), target.dims()).into());
    }
    Ok(())
}

/// `KL(attn ‖ m_B)`: attention is the first argument.
#[derive(Debug, Clone, Copy, Default)]
pub struct ForwardKl;

impl AttentionAlignment for ForwardKl {
    fn name(&self) -> &str {
        "kl_forward"
    }

    fn loss(&self, attention: &AttentionMap, target: &SoftMask) -> Result<f64, LossError> {
        check_dims(attention, target)?;
        Ok(kl_divergence(attention.values(), target.values())?)
    }

    fn logit_gradient(&self, attention: &AttentionMap, target: &SoftMask) -> Result<Vec<f64>, LossError> {
        check_dims(attention, target)?;
        Ok(kl_forward_logit_gradient(attention.values(), target.values())?)
    }
}

/// `KL(m_B ‖ attn)`, for ablations. Requires strictly positive attention.
#[derive(Debug, Clone, Copy, Default)]
pub struct ReverseKl;

impl AttentionAlignment for ReverseKl {
    fn name(&self) -> &str {
        "kl_reverse"
    }

    fn loss(&self, attention: &AttentionMap, target: &SoftMask) -> Result<f64, LossError> {
        check_dims(attention, target)?;
        Ok(kl_divergence(target.values(), attention.values())?)
    }

    fn logit_gradient(&self, attention: &AttentionMap, target: &SoftMask) -> Result<Vec<f64>, LossError> {
        check_dims(attention, target)?;
        Ok(kl_reverse_logit_gradient(attention.values(), target.values())?)
    }
}

pub fn alignment_registry() -> Registry<dyn AttentionAlignment> {
    let mut registry: Registry<dyn AttentionAlignment> = Registry::new();
    registry.register("kl_forward", |_| Ok(Box::new(ForwardKl)));
    registry.register("kl_reverse", |_| Ok(Box::new(ReverseKl)));
    registry
}

//! Question/answer/rationale generation backends.

use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{ImageRecord, Modality};
use crate::registry::Registry;

/// Maximum number of rationale sentences kept from any backend.
pub const MAX_COT_SENTENCES: usize = 4;

/// Everything a backend may condition on for one lesion.
#[derive(Debug, Clone, Copy)]
pub struct QaRequest<'a> {
    pub image_id: &'a str,
    pub modality: Modality,
    pub seed: &'a str,
    pub lesion_class: &'a str,
    /// `None` for organ-free seeds.
    pub organ_label: Option<&'a str>,
}

impl<'a> QaRequest<'a> {
    pub fn new(image: &'a ImageRecord, seed: &'a str, lesion_class: &'a str, organ_label: Option<&'a str>) -> Self {
        Self {
            image_id: &image.image_id,
            modality: image.modality,
            seed,
            lesion_class,
            organ_label,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaTriple {
    pub question: String,
    pub answer: String,
    pub cot: String,
}

#[derive(Debug, Error)]
pub enum GeneratorError {
    #[error("malformed backend response: {0}")]
    Malformed(String),
    #[error("backend transport failure after {attempts} attempt(s): {reason}")]
    Transport { attempts: usize, reason: String },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

pub trait QaGenerator: Send + Sync {
    /// Stable identifier written into every record this backend produces.
    fn id(&self) -> &str;

    fn generate(&self, request: &QaRequest<'_>) -> Result<QaTriple, GeneratorError>;
}

/// Offline, deterministic backend that instantiates fixed sentence templates.
#[derive(Debug, Clone, Default)]
pub struct TemplateGenerator;

impl QaGenerator for TemplateGenerator {
    fn id(&self) -> &str {
        "template"
    }

    fn generate(&self, req: &QaRequest<'_>) -> Result<QaTriple, GeneratorError> {
        let lesion = req.lesion_class;
        Ok(match req.organ_label {
            Some(organ) => QaTriple {
                question: format!("Which organ contains the {lesion}?"),
                answer: organ.to_string(),
                cot: format!(
                    "The image shows a {lesion}. Its location overlaps the {organ}. \
                     Therefore the {lesion} is in the {organ}."
                ),
            },
            None => QaTriple {
                question: "What abnormality is visible in this image?".to_string(),
                answer: lesion.to_string(),
                cot: format!("The image shows a {lesion}. Therefore the finding is a {lesion}."),
            },
        })
    }
}

/// Registry holding the built-in backends. Front ends add transport-backed
/// ones (e.g. `remote`) before building from configuration.
pub fn generator_registry() -> Registry<dyn QaGenerator> {
    let mut registry: Registry<dyn QaGenerator> = Registry::new();
    registry.register("template", |_| Ok(Box::new(TemplateGenerator)));
    registry
}

/// Splits text into sentences ending in `.`, `!` or `?` followed by
/// whitespace or end of text. Trailing text without a terminator counts as a
/// sentence.
pub fn split_sentences(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if matches!(c, '.' | '!' | '?') {
            let at_boundary = chars.peek().is_none_or(|(_, n)| n.is_whitespace());
            if at_boundary {
                let end = i + c.len_utf8();
                let s = text[start..end].trim();
                if !s.is_empty() {
                    out.push(s);
                }
                start = end;
            }
        }
    }
    let tail = text[start..].trim();
    if !tail.is_empty() {
        out.push(tail);
    }
    out
}

/// Checks a backend triple and caps the rationale at
/// [`MAX_COT_SENTENCES`], truncating at a sentence boundary.
pub fn finalize_triple(mut triple: QaTriple) -> Result<QaTriple, GeneratorError> {
    triple.question = triple.question.trim().to_string();
    triple.answer = triple.answer.trim().to_string();
    if triple.question.is_empty() {
        return Err(GeneratorError::Malformed("empty question".into()));
    }
    if triple.answer.is_empty() {
        return Err(GeneratorError::Malformed("empty answer".into()));
    }
    let sentences = split_sentences(&triple.cot);
    if sentences.is_empty() {
        return Err(GeneratorError::Malformed("empty rationale".into()));
    }
    if sentences.len() > MAX_COT_SENTENCES {
        warn!(
            "rationale has {} sentences, truncating to {MAX_COT_SENTENCES}",
            sentences.len()
        );
    }
    triple.cot = sentences[..sentences.len().min(MAX_COT_SENTENCES)].join(" ");
    Ok(triple)
}

/// Runs one backend request and normalizes the result.
pub fn generate_qa(backend: &dyn QaGenerator, request: &QaRequest<'_>) -> Result<QaTriple, GeneratorError> {
    if request.seed.trim().is_empty() {
        return Err(GeneratorError::InvalidRequest("empty seed".into()));
    }
    finalize_triple(backend.generate(request)?)
}

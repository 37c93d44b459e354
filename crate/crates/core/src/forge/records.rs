use std::fmt;

use serde::{Deserialize, Serialize};

use super::{BBox, ForgeError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Modality {
    CT,
    XRay,
    MRI,
    Mammo,
}

impl Modality {
    pub const ALL: [Modality; 4] = [Modality::CT, Modality::XRay, Modality::MRI, Modality::Mammo];

    pub fn as_str(&self) -> &'static str {
        match self {
            Modality::CT => "CT",
            Modality::XRay => "XRay",
            Modality::MRI => "MRI",
            Modality::Mammo => "Mammo",
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A difficulty-tracking group: lesion class within one imaging modality.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DomainKey {
    pub lesion_class: String,
    pub modality: Modality,
}

impl DomainKey {
    pub fn new(lesion_class: impl Into<String>, modality: Modality) -> Self {
        Self {
            lesion_class: lesion_class.into(),
            modality,
        }
    }
}

impl fmt::Display for DomainKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.lesion_class, self.modality)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LesionAnnotation {
    #[serde(rename = "box")]
    pub bbox: BBox,
    pub lesion_class: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub image_id: String,
    pub width: usize,
    pub height: usize,
    pub modality: Modality,
    pub annotations: Vec<LesionAnnotation>,
}

impl ImageRecord {
    pub fn validate(&self) -> Result<(), ForgeError> {
        if self.image_id.is_empty() {
            return Err(ForgeError::InvalidRecord("empty image_id".into()));
        }
        if self.width == 0 || self.height == 0 {
            return Err(ForgeError::InvalidRecord(format!(
                "image {} has zero dimension {}x{}",
                self.image_id, self.width, self.height
            )));
        }
        if let Some(a) = self.annotations.iter().find(|a| a.lesion_class.trim().is_empty()) {
            return Err(ForgeError::InvalidRecord(format!(
                "image {} has an annotation {} with empty lesion_class",
                self.image_id, a.bbox
            )));
        }
        Ok(())
    }

    pub fn domain_of(&self, annotation: &LesionAnnotation) -> DomainKey {
        DomainKey::new(annotation.lesion_class.clone(), self.modality)
    }
}

/// Which pool a record belongs to. Hard-pool records carry answer-only
/// supervision, so their rationale may be empty.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecordPool {
    Main,
    Hard,
}

/// One generated VQA sample with its rationale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VqaCotRecord {
    pub image_id: String,
    #[serde(rename = "box")]
    pub bbox: BBox,
    pub question: String,
    pub answer: String,
    pub cot: String,
    pub domain: DomainKey,
    pub seed: String,
    pub generator_id: String,
}

impl VqaCotRecord {
    /// Checks every record-level invariant. Returns the list of violations
    /// rather than stopping at the first one.
    pub fn violations(&self, pool: RecordPool) -> Vec<String> {
        let mut out = Vec::new();
        if self.image_id.trim().is_empty() {
            out.push("empty image_id".to_string());
        }
        if self.question.trim().is_empty() {
            out.push("empty question".to_string());
        }
        if self.answer.trim().is_empty() {
            out.push("empty answer".to_string());
        }
        if pool == RecordPool::Main && self.cot.trim().is_empty() {
            out.push("empty cot outside the hard pool".to_string());
        }
        if self.domain.lesion_class.trim().is_empty() {
            out.push("empty domain lesion_class".to_string());
        }
        if self.generator_id.trim().is_empty() {
            out.push("empty generator_id".to_string());
        }
        out
    }

    /// Copy with the rationale removed, for answer-only supervision.
    pub fn to_hard(&self) -> Self {
        Self {
            cot: String::new(),
            ..self.clone()
        }
    }
}

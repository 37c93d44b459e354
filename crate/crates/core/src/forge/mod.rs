//! Detection annotations to VQA–rationale corpus.
//!
//! For each lesion box the host organ is picked by pixel IoU against the
//! image's organ masks, a seed sentence is formed from (lesion, organ), and a
//! [`QaGenerator`] backend turns the seed into a question, answer and short
//! rationale.

mod bbox;
mod corpus;
pub mod generator;
mod mask;
mod overlay;
mod records;
mod seed;

use thiserror::Error;

pub use bbox::{BBox, PixelSpan};
pub use corpus::{build_corpus, CorpusOutput, FailedAnnotation, ForgeOptions, SkippedAnnotation};
pub use generator::{
    generate_qa, generator_registry, GeneratorError, QaGenerator, QaRequest, QaTriple, TemplateGenerator,
};
pub use mask::{assign_organ, mask_iou, LesionOrganTriplet, MaskRecord, OrganMask};
pub use overlay::{render_overlay, Overlay};
pub use records::{DomainKey, ImageRecord, LesionAnnotation, Modality, RecordPool, VqaCotRecord};
pub use seed::{organ_free_seed, seed_from_triplet, UnassignedPolicy};

#[derive(Debug, Error)]
pub enum ForgeError {
    #[error("invalid box: {0}")]
    InvalidBox(String),
    #[error("degenerate box: {0}")]
    DegenerateBox(String),
    #[error("invalid mask: {0}")]
    InvalidMask(String),
    #[error("invalid record: {0}")]
    InvalidRecord(String),
    #[error("mask `{organ}` is {}x{} but the image is {}x{}", mask.0, mask.1, image.0, image.1)]
    DimensionMismatch {
        organ: String,
        mask: (usize, usize),
        image: (usize, usize),
    },
    #[error("organ assignment needs at least one mask")]
    NoMasks,
    #[error("lesion `{lesion_class}` has no assigned organ")]
    Unassigned { lesion_class: String },
    #[error("image {image_id}, annotation {annotation_index}: {source}")]
    Backend {
        image_id: String,
        annotation_index: usize,
        #[source]
        source: GeneratorError,
    },
}

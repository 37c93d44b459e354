use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::generator::{generate_qa, QaGenerator, QaRequest};
use super::seed::{organ_free_seed, seed_from_triplet, UnassignedPolicy};
use super::{assign_organ, ForgeError, ImageRecord, OrganMask, VqaCotRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForgeOptions {
    /// Lesions whose best IoU does not exceed this are unassigned.
    pub min_iou: f64,
    pub unassigned: UnassignedPolicy,
    /// Keep going when a backend call fails; the failure is reported instead.
    pub skip_failed: bool,
    /// Upper bound on concurrent backend requests.
    pub concurrency: usize,
}

impl Default for ForgeOptions {
    fn default() -> Self {
        Self {
            min_iou: 0.0,
            unassigned: UnassignedPolicy::Skip,
            skip_failed: false,
            concurrency: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedAnnotation {
    pub image_id: String,
    pub annotation_index: usize,
    pub lesion_class: String,
    pub best_iou: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedAnnotation {
    pub image_id: String,
    pub annotation_index: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct CorpusOutput {
    pub records: Vec<VqaCotRecord>,
    pub skipped: Vec<SkippedAnnotation>,
    pub failed: Vec<FailedAnnotation>,
}

enum Outcome {
    Record(VqaCotRecord),
    Skipped(SkippedAnnotation),
    Failed(FailedAnnotation),
}

fn process_one(
    image: &ImageRecord,
    annotation_index: usize,
    masks: &[OrganMask],
    backend: &dyn QaGenerator,
    options: &ForgeOptions,
) -> Result<Outcome, ForgeError> {
    let ann = &image.annotations[annotation_index];
    let triplet = if masks.is_empty() {
        None
    } else {
        Some(assign_organ(
            &ann.lesion_class,
            &ann.bbox,
            masks,
            image.width,
            image.height,
            options.min_iou,
        )?)
    };
    let best_iou = triplet.as_ref().map_or(0.0, |t| t.iou_score);
    let organ = triplet.as_ref().and_then(|t| t.organ_label.clone());

    let seed = match (&triplet, &organ, options.unassigned) {
        (Some(t), Some(_), _) => seed_from_triplet(t)?,
        (_, None, UnassignedPolicy::OrganFree) => organ_free_seed(&ann.lesion_class),
        (_, None, UnassignedPolicy::Skip) => {
            return Ok(Outcome::Skipped(SkippedAnnotation {
                image_id: image.image_id.clone(),
                annotation_index,
                lesion_class: ann.lesion_class.clone(),
                best_iou,
            }))
        }
        (None, Some(_), _) => unreachable!("organ implies a triplet"),
    };

    let request = QaRequest::new(image, &seed, &ann.lesion_class, organ.as_deref());
    match generate_qa(backend, &request) {
        Ok(triple) => Ok(Outcome::Record(VqaCotRecord {
            image_id: image.image_id.clone(),
            bbox: ann.bbox,
            question: triple.question,
            answer: triple.answer,
            cot: triple.cot,
            domain: image.domain_of(ann),
            seed,
            generator_id: backend.id().to_string(),
        })),
        Err(source) if options.skip_failed => Ok(Outcome::Failed(FailedAnnotation {
            image_id: image.image_id.clone(),
            annotation_index,
            reason: source.to_string(),
        })),
        Err(source) => Err(ForgeError::Backend {
            image_id: image.image_id.clone(),
            annotation_index,
            source,
        }),
    }
}

/// Converts detection annotations plus organ masks into VQA records.
///
/// Work items are (image, annotation) pairs processed on a pool of at most
/// `options.concurrency` threads; results come back in dataset order, then
/// annotation order. Images absent from `masks_by_image` have no masks, so
/// all of their annotations are unassigned.
pub fn build_corpus(
    dataset: &[ImageRecord],
    masks_by_image: &HashMap<String, Vec<OrganMask>>,
    backend: &dyn QaGenerator,
    options: &ForgeOptions,
) -> Result<CorpusOutput, ForgeError> {
    let mut seen = std::collections::HashSet::new();
    for image in dataset {
        image.validate()?;
        if !seen.insert(image.image_id.as_str()) {
            return Err(ForgeError::InvalidRecord(format!(
                "duplicate image_id {}",
                image.image_id
            )));
        }
    }
    let tasks: Vec<(usize, usize)> = dataset
        .iter()
        .enumerate()
        .flat_map(|(i, img)| (0..img.annotations.len()).map(move |j| (i, j)))
        .collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.concurrency.max(1))
        .build()
        .map_err(|e| ForgeError::InvalidRecord(format!("thread pool: {e}")))?;

    let outcomes: Vec<Result<Outcome, ForgeError>> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(i, j)| {
                let image = &dataset[i];
                let masks = masks_by_image.get(&image.image_id).map(Vec::as_slice).unwrap_or(&[]);
                process_one(image, j, masks, backend, options)
            })
            .collect()
    });

    let mut out = CorpusOutput::default();
    for outcome in outcomes {
        match outcome? {
            Outcome::Record(r) => out.records.push(r),
            Outcome::Skipped(s) => out.skipped.push(s),
            Outcome::Failed(f) => out.failed.push(f),
        }
    }
    Ok(out)
}

//! Seeded synthetic detection datasets: images with elliptical organ masks
//! and lesion boxes, for fixtures and randomized tests.

use std::collections::HashMap;

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::forge::{BBox, ImageRecord, LesionAnnotation, Modality, OrganMask};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub images: usize,
    pub width: usize,
    pub height: usize,
    pub min_annotations: usize,
    pub max_annotations: usize,
    /// Organ masks drawn per image, at most `organs.len()`.
    pub max_organs: usize,
    pub organs: Vec<String>,
    pub lesions: Vec<String>,
    pub modalities: Vec<Modality>,
    /// Probability that a lesion box is placed inside an organ's extent
    /// rather than anywhere in the image.
    pub inside_organ: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            images: 100,
            width: 64,
            height: 64,
            min_annotations: 1,
            max_annotations: 4,
            max_organs: 3,
            organs: ["liver", "kidney", "lung", "spleen"].map(String::from).to_vec(),
            lesions: ["nodule", "cyst"].map(String::from).to_vec(),
            modalities: vec![Modality::CT, Modality::MRI],
            inside_organ: 0.7,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct SyntheticDataset {
    pub images: Vec<ImageRecord>,
    pub masks: HashMap<String, Vec<OrganMask>>,
}

fn ellipse_mask<R: Rng + ?Sized>(label: &str, w: usize, h: usize, rng: &mut R) -> (OrganMask, [f64; 4]) {
    let cx = rng.random_range(0.2..0.8);
    let cy = rng.random_range(0.2..0.8);
    let rx = rng.random_range(0.08..0.3);
    let ry = rng.random_range(0.08..0.3);
    let mut pixels: Vec<bool> = (0..w * h)
        .map(|i| {
            let x = ((i % w) as f64 + 0.5) / w as f64;
            let y = ((i / w) as f64 + 0.5) / h as f64;
            ((x - cx) / rx).powi(2) + ((y - cy) / ry).powi(2) <= 1.0
        })
        .collect();
    let center = ((cy * h as f64) as usize).min(h - 1) * w + ((cx * w as f64) as usize).min(w - 1);
    pixels[center] = true;
    let extent = [
        (cx - rx).max(0.0),
        (cy - ry).max(0.0),
        (cx + rx).min(1.0),
        (cy + ry).min(1.0),
    ];
    (
        OrganMask::new(label, w, h, pixels).expect("center pixel is set"),
        extent,
    )
}

// A box of at least two pixels per side within `region`, normalized.
fn random_box<R: Rng + ?Sized>(region: [f64; 4], w: usize, h: usize, rng: &mut R) -> BBox {
    let min_w = 2.0 / w as f64;
    let min_h = 2.0 / h as f64;
    let span_x = (region[2] - region[0]).max(min_w);
    let span_y = (region[3] - region[1]).max(min_h);
    let bw = rng.random_range(min_w..=span_x.max(min_w + 1e-9)).min(1.0);
    let bh = rng.random_range(min_h..=span_y.max(min_h + 1e-9)).min(1.0);
    let x1 = rng
        .random_range(region[0]..=(region[2] - bw).max(region[0]))
        .clamp(0.0, 1.0 - bw);
    let y1 = rng
        .random_range(region[1]..=(region[3] - bh).max(region[1]))
        .clamp(0.0, 1.0 - bh);
    BBox::new(x1, y1, (x1 + bw).min(1.0), (y1 + bh).min(1.0)).expect("ordered coordinates in [0, 1]")
}

/// Draws a dataset; the same spec and RNG state give the same dataset.
pub fn synthetic_dataset<R: Rng + ?Sized>(spec: &SyntheticSpec, rng: &mut R) -> SyntheticDataset {
    let mut out = SyntheticDataset::default();
    let organ_cap = spec.max_organs.clamp(1, spec.organs.len().max(1));
    for i in 0..spec.images {
        let image_id = format!("syn{i:04}");
        let n_organs = rng.random_range(1..=organ_cap);
        let labels: Vec<&String> = spec.organs.choose_multiple(rng, n_organs).collect();
        let mut masks = Vec::with_capacity(n_organs);
        let mut extents = Vec::with_capacity(n_organs);
        for label in labels {
            let (mask, extent) = ellipse_mask(label, spec.width, spec.height, rng);
            masks.push(mask);
            extents.push(extent);
        }
        let n_ann = rng.random_range(spec.min_annotations..=spec.max_annotations.max(spec.min_annotations));
        let modality = *spec.modalities.choose(rng).unwrap_or(&Modality::CT);
        let annotations = (0..n_ann)
            .map(|_| {
                let region = if rng.random::<f64>() < spec.inside_organ {
                    extents[rng.random_range(0..extents.len())]
                } else {
                    [0.0, 0.0, 1.0, 1.0]
                };
                LesionAnnotation {
                    bbox: random_box(region, spec.width, spec.height, rng),
                    lesion_class: spec.lesions.choose(rng).cloned().unwrap_or_else(|| "lesion".into()),
                }
            })
            .collect();
        out.images.push(ImageRecord {
            image_id: image_id.clone(),
            width: spec.width,
            height: spec.height,
            modality,
            annotations,
        });
        out.masks.insert(image_id, masks);
    }
    out
}

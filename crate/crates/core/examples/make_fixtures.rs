//! Regenerates the bundled input fixtures under `fixtures/`.
//!
//! ```text
//! cargo run -p curriculum-core --example make_fixtures -- fixtures
//! ```
//!
//! Golden outputs (corpus, traces) are produced by the CLI, not here.

use std::collections::HashMap;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;

use curriculum_core::forge::{
    build_corpus, BBox, ForgeOptions, ImageRecord, LesionAnnotation, MaskRecord, Modality, OrganMask, TemplateGenerator,
};
use curriculum_core::jsonl::write_jsonl;
use curriculum_core::synthetic::{synthetic_dataset, SyntheticSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rect_mask(label: &str, w: usize, h: usize, cols: (usize, usize), rows: (usize, usize)) -> OrganMask {
    let pixels = (0..w * h)
        .map(|i| (cols.0..cols.1).contains(&(i % w)) && (rows.0..rows.1).contains(&(i / w)))
        .collect();
    OrganMask::new(label, w, h, pixels).unwrap()
}

fn annotation(b: [f64; 4], lesion: &str) -> LesionAnnotation {
    LesionAnnotation {
        bbox: BBox::new(b[0], b[1], b[2], b[3]).unwrap(),
        lesion_class: lesion.into(),
    }
}

fn write_dataset(dir: &Path, images: &[ImageRecord], masks: &HashMap<String, Vec<OrganMask>>) {
    fs::create_dir_all(dir).unwrap();
    write_jsonl(BufWriter::new(File::create(dir.join("dataset.jsonl")).unwrap()), images).unwrap();
    let records: Vec<MaskRecord> = images
        .iter()
        .flat_map(|img| {
            masks
                .get(&img.image_id)
                .into_iter()
                .flatten()
                .map(|m| MaskRecord::from_mask(img.image_id.clone(), m))
        })
        .collect();
    write_jsonl(BufWriter::new(File::create(dir.join("masks.jsonl")).unwrap()), &records).unwrap();
}

fn forge_fixture(root: &Path) {
    let (w, h) = (16, 16);
    let images = vec![
        ImageRecord {
            image_id: "ct-0001".into(),
            width: w,
            height: h,
            modality: Modality::CT,
            annotations: vec![
                annotation([0.0625, 0.125, 0.3125, 0.375], "nodule"),
                annotation([0.625, 0.5, 0.875, 0.8125], "cyst"),
            ],
        },
        ImageRecord {
            image_id: "mri-0002".into(),
            width: w,
            height: h,
            modality: Modality::MRI,
            annotations: vec![annotation([0.25, 0.25, 0.5, 0.5], "mass")],
        },
        ImageRecord {
            image_id: "xray-0003".into(),
            width: w,
            height: h,
            modality: Modality::XRay,
            annotations: vec![
                annotation([0.125, 0.0625, 0.4375, 0.4375], "nodule"),
                annotation([0.5625, 0.5625, 0.9375, 0.9375], "effusion"),
            ],
        },
    ];
    let mut masks = HashMap::new();
    masks.insert(
        "ct-0001".to_string(),
        vec![
            rect_mask("liver", w, h, (0, 8), (0, 8)),
            rect_mask("kidney", w, h, (8, 16), (6, 16)),
        ],
    );
    masks.insert("mri-0002".to_string(), vec![rect_mask("brain", w, h, (2, 14), (2, 14))]);
    masks.insert(
        "xray-0003".to_string(),
        vec![
            rect_mask("lung", w, h, (0, 8), (0, 10)),
            rect_mask("pleura", w, h, (8, 16), (8, 16)),
        ],
    );
    write_dataset(&root.join("forge"), &images, &masks);
}

fn toy_fixture(root: &Path) {
    let spec = SyntheticSpec {
        images: 80,
        width: 32,
        height: 32,
        min_annotations: 2,
        max_annotations: 3,
        inside_organ: 1.0,
        ..Default::default()
    };
    let data = synthetic_dataset(&spec, &mut ChaCha8Rng::seed_from_u64(2024));
    let dir = root.join("toy");
    write_dataset(&dir, &data.images, &data.masks);
    let out = build_corpus(&data.images, &data.masks, &TemplateGenerator, &ForgeOptions::default()).unwrap();
    write_jsonl(
        BufWriter::new(File::create(dir.join("corpus.jsonl")).unwrap()),
        &out.records,
    )
    .unwrap();
    let mut per_domain: HashMap<String, usize> = HashMap::new();
    for r in &out.records {
        *per_domain.entry(r.domain.to_string()).or_default() += 1;
    }
    eprintln!(
        "toy corpus: {} records, {} skipped, domains {per_domain:?}",
        out.records.len(),
        out.skipped.len()
    );
}

fn main() {
    let root = std::env::args().nth(1).unwrap_or_else(|| "fixtures".into());
    let root = Path::new(&root);
    forge_fixture(root);
    toy_fixture(root);
}

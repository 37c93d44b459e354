use serde::{Deserialize, Serialize};

use super::{BBox, ForgeError};

/// Binary organ segmentation at image resolution, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct OrganMask {
    organ_label: String,
    width: usize,
    height: usize,
    pixels: Vec<bool>,
}

impl OrganMask {
    pub fn new(
        organ_label: impl Into<String>,
        width: usize,
        height: usize,
        pixels: Vec<bool>,
    ) -> Result<Self, ForgeError> {
        let organ_label = organ_label.into();
        if organ_label.trim().is_empty() {
            return Err(ForgeError::InvalidMask("empty organ_label".into()));
        }
        if pixels.len() != width * height || width == 0 || height == 0 {
            return Err(ForgeError::InvalidMask(format!(
                "{organ_label}: raster has {} pixels, expected {width}x{height}",
                pixels.len()
            )));
        }
        if !pixels.iter().any(|&p| p) {
            return Err(ForgeError::InvalidMask(format!("{organ_label}: no set pixel")));
        }
        Ok(Self {
            organ_label,
            width,
            height,
            pixels,
        })
    }

    /// Decodes alternating zero/one run lengths (row-major, zeros first).
    pub fn from_rle(
        organ_label: impl Into<String>,
        width: usize,
        height: usize,
        runs: &[usize],
    ) -> Result<Self, ForgeError> {
        let total: usize = runs.iter().sum();
        if total != width * height {
            return Err(ForgeError::InvalidMask(format!(
                "RLE covers {total} pixels, expected {}",
                width * height
            )));
        }
        let mut pixels = Vec::with_capacity(total);
        for (i, &run) in runs.iter().enumerate() {
            pixels.extend(std::iter::repeat_n(i % 2 == 1, run));
        }
        Self::new(organ_label, width, height, pixels)
    }

    pub fn to_rle(&self) -> Vec<usize> {
        let mut runs = Vec::new();
        let mut current = false;
        let mut len = 0usize;
        for &p in &self.pixels {
            if p == current {
                len += 1;
            } else {
                runs.push(len);
                current = p;
                len = 1;
            }
        }
        runs.push(len);
        runs
    }

    pub fn organ_label(&self) -> &str {
        &self.organ_label
    }
    pub fn width(&self) -> usize {
        self.width
    }
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn pixels(&self) -> &[bool] {
        &self.pixels
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.pixels[row * self.width + col]
    }

    pub fn count(&self) -> usize {
        self.pixels.iter().filter(|&&p| p).count()
    }
}

/// Sidecar wire form of a mask: one line per (image, organ).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskRecord {
    pub image_id: String,
    pub organ_label: String,
    pub height: usize,
    pub width: usize,
    pub rle: Vec<usize>,
}

impl MaskRecord {
    pub fn from_mask(image_id: impl Into<String>, mask: &OrganMask) -> Self {
        Self {
            image_id: image_id.into(),
            organ_label: mask.organ_label.clone(),
            height: mask.height,
            width: mask.width,
            rle: mask.to_rle(),
        }
    }

    pub fn decode(&self) -> Result<OrganMask, ForgeError> {
        OrganMask::from_rle(self.organ_label.clone(), self.width, self.height, &self.rle)
    }
}

/// Pixel-count IoU between the rasterized box and the mask support.
pub fn mask_iou(bbox: &BBox, mask: &OrganMask, width: usize, height: usize) -> Result<f64, ForgeError> {
    if mask.width != width || mask.height != height {
        return Err(ForgeError::DimensionMismatch {
            organ: mask.organ_label.clone(),
            mask: (mask.width, mask.height),
            image: (width, height),
        });
    }
    let span = bbox.pixel_span(width, height);
    let mut intersection = 0usize;
    for r in span.row_start..span.row_end {
        let row = &mask.pixels[r * width + span.col_start..r * width + span.col_end];
        intersection += row.iter().filter(|&&p| p).count();
    }
    let union = span.area() + mask.count() - intersection;
    if union == 0 {
        return Ok(0.0);
    }
    Ok(intersection as f64 / union as f64)
}

/// A lesion coupled with its host organ, or with none when no mask overlaps
/// enough to qualify.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LesionOrganTriplet {
    pub lesion_class: String,
    #[serde(rename = "box")]
    pub bbox: BBox,
    /// `None` means unassigned.
    pub organ_label: Option<String>,
    pub iou_score: f64,
}

impl LesionOrganTriplet {
    pub fn is_assigned(&self) -> bool {
        self.organ_label.is_some()
    }
}

/// Picks the mask with the largest IoU; ties go to the lowest index. When the
/// best IoU does not exceed `min_iou` the lesion is left unassigned.
pub fn assign_organ(
    lesion_class: &str,
    bbox: &BBox,
    masks: &[OrganMask],
    width: usize,
    height: usize,
    min_iou: f64,
) -> Result<LesionOrganTriplet, ForgeError> {
    if masks.is_empty() {
        return Err(ForgeError::NoMasks);
    }
    let mut best = (0usize, mask_iou(bbox, &masks[0], width, height)?);
    for (k, mask) in masks.iter().enumerate().skip(1) {
        let iou = mask_iou(bbox, mask, width, height)?;
        if iou > best.1 {
            best = (k, iou);
        }
    }
    let (index, iou) = best;
    Ok(LesionOrganTriplet {
        lesion_class: lesion_class.to_string(),
        bbox: *bbox,
        organ_label: (iou > min_iou).then(|| masks[index].organ_label.clone()),
        iou_score: iou,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rect_mask(label: &str, w: usize, h: usize, c0: usize, c1: usize, r0: usize, r1: usize) -> OrganMask {
        let mut px = vec![false; w * h];
        for r in r0..r1 {
            for c in c0..c1 {
                px[r * w + c] = true;
            }
        }
        OrganMask::new(label, w, h, px).unwrap()
    }

    // Independent oracle: per-pixel center test against the raw box.
    fn brute_iou(b: &BBox, m: &OrganMask) -> f64 {
        let (w, h) = (m.width(), m.height());
        let (mut inter, mut uni) = (0usize, 0usize);
        for r in 0..h {
            for c in 0..w {
                let cx = c as f64 + 0.5;
                let cy = r as f64 + 0.5;
                let in_box = cx >= b.x1() * w as f64
                    && cx < b.x2() * w as f64
                    && cy >= b.y1() * h as f64
                    && cy < b.y2() * h as f64;
                let in_mask = m.get(r, c);
                inter += (in_box && in_mask) as usize;
                uni += (in_box || in_mask) as usize;
            }
        }
        if uni == 0 {
            0.0
        } else {
            inter as f64 / uni as f64
        }
    }

    #[test]
    fn identity_box_gives_one() {
        let m = rect_mask("liver", 64, 64, 16, 32, 8, 40);
        let b = BBox::new(16.0 / 64.0, 8.0 / 64.0, 32.0 / 64.0, 40.0 / 64.0).unwrap();
        assert_eq!(mask_iou(&b, &m, 64, 64).unwrap(), 1.0);
    }

    #[test]
    fn disjoint_gives_zero() {
        let m = rect_mask("liver", 64, 64, 0, 10, 0, 10);
        let b = BBox::new(0.5, 0.5, 0.9, 0.9).unwrap();
        assert_eq!(mask_iou(&b, &m, 64, 64).unwrap(), 0.0);
    }

    #[test]
    fn left_half_of_full_mask_is_half() {
        let m = rect_mask("body", 64, 64, 0, 64, 0, 64);
        let b = BBox::new(0.0, 0.0, 0.5, 1.0).unwrap();
        let oracle = brute_iou(&b, &m);
        assert_eq!(oracle, 0.5);
        assert_eq!(mask_iou(&b, &m, 64, 64).unwrap(), oracle);
    }

    #[test]
    fn dimension_mismatch_is_error() {
        let m = rect_mask("liver", 32, 32, 0, 10, 0, 10);
        let b = BBox::full();
        assert!(matches!(
            mask_iou(&b, &m, 64, 64),
            Err(ForgeError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn single_full_mask_is_assigned() {
        let m = rect_mask("body", 16, 16, 0, 16, 0, 16);
        let b = BBox::new(0.2, 0.2, 0.4, 0.7).unwrap();
        let t = assign_organ("mass", &b, &[m], 16, 16, 0.0).unwrap();
        assert_eq!(t.organ_label.as_deref(), Some("body"));
        assert!(t.iou_score > 0.0);
    }

    #[test]
    fn box_inside_second_mask_picks_it() {
        let a = rect_mask("left lung", 64, 64, 0, 30, 0, 64);
        let b = rect_mask("right lung", 64, 64, 34, 64, 0, 64);
        let bx = BBox::new(40.0 / 64.0, 0.25, 50.0 / 64.0, 0.5).unwrap();
        let oracle = [brute_iou(&bx, &a), brute_iou(&bx, &b)];
        assert_eq!(oracle[0], 0.0);
        assert!(oracle[1] > 0.0);
        let t = assign_organ("nodule", &bx, &[a, b], 64, 64, 0.0).unwrap();
        assert_eq!(t.organ_label.as_deref(), Some("right lung"));
        assert_eq!(t.iou_score, oracle[1]);
    }

    #[test]
    fn no_overlap_is_unassigned() {
        let a = rect_mask("liver", 64, 64, 0, 10, 0, 10);
        let bx = BBox::new(0.5, 0.5, 0.6, 0.6).unwrap();
        let t = assign_organ("mass", &bx, &[a], 64, 64, 0.0).unwrap();
        assert_eq!(t.organ_label, None);
        assert_eq!(t.iou_score, 0.0);
    }

    #[test]
    fn threshold_unassigns_weak_overlap() {
        let a = rect_mask("liver", 64, 64, 0, 64, 0, 64);
        let bx = BBox::new(0.0, 0.0, 0.5, 0.5).unwrap();
        let t = assign_organ("mass", &bx, &[a], 64, 64, 0.3).unwrap();
        assert_eq!(t.organ_label, None);
        assert_eq!(t.iou_score, 0.25);
    }

    #[test]
    fn ties_go_to_lowest_index() {
        let a = rect_mask("first", 8, 8, 0, 8, 0, 8);
        let b = rect_mask("second", 8, 8, 0, 8, 0, 8);
        let bx = BBox::new(0.0, 0.0, 0.5, 0.5).unwrap();
        let t = assign_organ("mass", &bx, &[a.clone(), b.clone()], 8, 8, 0.0).unwrap();
        assert_eq!(t.organ_label.as_deref(), Some("first"));
        let t = assign_organ("mass", &bx, &[b, a], 8, 8, 0.0).unwrap();
        assert_eq!(t.organ_label.as_deref(), Some("second"));
    }

    #[test]
    fn empty_mask_list_is_error() {
        assert!(matches!(
            assign_organ("mass", &BBox::full(), &[], 4, 4, 0.0),
            Err(ForgeError::NoMasks)
        ));
    }

    #[test]
    fn rle_decodes_zeros_first() {
        let m = OrganMask::from_rle("x", 3, 2, &[2, 3, 1]).unwrap();
        assert_eq!(m.pixels(), &[false, false, true, true, true, false]);
        assert_eq!(m.to_rle(), vec![2, 3, 1]);
        let lead = OrganMask::from_rle("x", 2, 1, &[0, 2]).unwrap();
        assert_eq!(lead.to_rle(), vec![0, 2]);
        assert!(OrganMask::from_rle("x", 3, 2, &[2, 3]).is_err());
        assert!(OrganMask::from_rle("x", 3, 2, &[6]).is_err());
    }

    fn arb_mask() -> impl Strategy<Value = OrganMask> {
        proptest::collection::vec(any::<bool>(), 64 * 64)
            .prop_filter_map("non-empty", |px| OrganMask::new("organ", 64, 64, px).ok())
    }

    proptest! {
        #[test]
        fn iou_matches_pixel_oracle(m in arb_mask(), x1 in 0.0f64..0.95, y1 in 0.0f64..0.95,
                                    dx in 0.01f64..1.0, dy in 0.01f64..1.0) {
            let b = BBox::new(x1, y1, (x1 + dx).min(1.0), (y1 + dy).min(1.0)).unwrap();
            let iou = mask_iou(&b, &m, 64, 64).unwrap();
            prop_assert!((0.0..=1.0).contains(&iou));
            prop_assert_eq!(iou, brute_iou(&b, &m));
        }

        #[test]
        fn rle_round_trips(m in arb_mask()) {
            let back = OrganMask::from_rle("organ", 64, 64, &m.to_rle()).unwrap();
            prop_assert_eq!(back, m);
        }

        #[test]
        fn permutation_only_matters_on_ties(seed in 0u64..500) {
            use rand::{seq::SliceRandom, Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let masks: Vec<OrganMask> = (0..4).map(|k| {
                let c0 = rng.random_range(0..12);
                let r0 = rng.random_range(0..12);
                rect_mask(&format!("o{k}"), 16, 16, c0, c0 + rng.random_range(1..5), r0, r0 + rng.random_range(1..5))
            }).collect();
            let bx = BBox::new(0.25, 0.25, 0.75, 0.75).unwrap();
            let base = assign_organ("m", &bx, &masks, 16, 16, 0.0).unwrap();
            let mut shuffled = masks.clone();
            shuffled.shuffle(&mut rng);
            let other = assign_organ("m", &bx, &shuffled, 16, 16, 0.0).unwrap();
            prop_assert_eq!(base.iou_score, other.iou_score);
            let tied = masks.iter().filter(|m| mask_iou(&bx, m, 16, 16).unwrap() == base.iou_score).count();
            if tied == 1 {
                prop_assert_eq!(base.organ_label, other.organ_label);
            }
        }
    }
}

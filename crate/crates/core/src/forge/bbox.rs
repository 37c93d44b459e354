use std::fmt;

use serde::{Deserialize, Serialize};

use super::ForgeError;

/// Axis-aligned box in normalized image coordinates.
///
/// Serialized as `[x1, y1, x2, y2]`; deserialization re-checks the
/// invariants so malformed input never produces a `BBox`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    x1: f64,
    y1: f64,
    x2: f64,
    y2: f64,
}

impl BBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self, ForgeError> {
        let coords = [x1, y1, x2, y2];
        if coords.iter().any(|c| !c.is_finite() || *c < 0.0 || *c > 1.0) {
            return Err(ForgeError::InvalidBox(format!(
                "coordinates must lie in [0, 1], got {coords:?}"
            )));
        }
        if x1 >= x2 || y1 >= y2 {
            return Err(ForgeError::InvalidBox(format!(
                "expected x1 < x2 and y1 < y2, got {coords:?}"
            )));
        }
        Ok(Self { x1, y1, x2, y2 })
    }

    pub fn full() -> Self {
        Self {
            x1: 0.0,
            y1: 0.0,
            x2: 1.0,
            y2: 1.0,
        }
    }

    pub fn x1(&self) -> f64 {
        self.x1
    }
    pub fn y1(&self) -> f64 {
        self.y1
    }
    pub fn x2(&self) -> f64 {
        self.x2
    }
    pub fn y2(&self) -> f64 {
        self.y2
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x1 + self.x2) / 2.0, (self.y1 + self.y2) / 2.0)
    }

    /// Cells of a `width`×`height` grid whose centers fall inside the
    /// denormalized box. The box is half-open: a center at `x1·W` is inside,
    /// a center at `x2·W` is not.
    pub fn pixel_span(&self, width: usize, height: usize) -> PixelSpan {
        let (col_start, col_end) = axis_span(self.x1, self.x2, width);
        let (row_start, row_end) = axis_span(self.y1, self.y2, height);
        PixelSpan {
            col_start,
            col_end,
            row_start,
            row_end,
        }
    }

    /// Binary raster of the box at `width`×`height`, row-major.
    pub fn rasterize(&self, width: usize, height: usize) -> Vec<bool> {
        let span = self.pixel_span(width, height);
        let mut out = vec![false; width * height];
        for r in span.row_start..span.row_end {
            out[r * width + span.col_start..r * width + span.col_end].fill(true);
        }
        out
    }
}

// First index i with i + 0.5 >= lo·n, first index with i + 0.5 >= hi·n.
fn axis_span(lo: f64, hi: f64, n: usize) -> (usize, usize) {
    let first_at_or_after = |edge: f64| -> usize {
        let idx = (edge * n as f64 - 0.5).ceil();
        if idx <= 0.0 {
            0
        } else {
            (idx as usize).min(n)
        }
    };
    (first_at_or_after(lo), first_at_or_after(hi))
}

impl TryFrom<[f64; 4]> for BBox {
    type Error = ForgeError;

    fn try_from(c: [f64; 4]) -> Result<Self, Self::Error> {
        BBox::new(c[0], c[1], c[2], c[3])
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        [b.x1, b.y1, b.x2, b.y2]
    }
}

/// Half-open index ranges of the grid cells covered by a box.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PixelSpan {
    pub col_start: usize,
    pub col_end: usize,
    pub row_start: usize,
    pub row_end: usize,
}

impl PixelSpan {
    pub fn width(&self) -> usize {
        self.col_end.saturating_sub(self.col_start)
    }

    pub fn height(&self) -> usize {
        self.row_end.saturating_sub(self.row_start)
    }

    pub fn area(&self) -> usize {
        self.width() * self.height()
    }

    pub fn is_empty(&self) -> bool {
        self.area() == 0
    }

    pub fn contains(&self, row: usize, col: usize) -> bool {
        (self.row_start..self.row_end).contains(&row) && (self.col_start..self.col_end).contains(&col)
    }
}

impl fmt::Display for BBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}, {}, {}]", self.x1, self.y1, self.x2, self.y2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rejects_inverted_and_out_of_range() {
        assert!(BBox::new(0.5, 0.1, 0.4, 0.9).is_err());
        assert!(BBox::new(0.1, 0.5, 0.4, 0.5).is_err());
        assert!(BBox::new(-0.1, 0.1, 0.4, 0.9).is_err());
        assert!(BBox::new(0.1, 0.1, 1.2, 0.9).is_err());
        assert!(BBox::new(0.1, 0.1, f64::NAN, 0.9).is_err());
    }

    #[test]
    fn serde_uses_array_form_and_validates() {
        let b = BBox::new(0.0, 0.25, 0.5, 1.0).unwrap();
        assert_eq!(serde_json::to_string(&b).unwrap(), "[0.0,0.25,0.5,1.0]");
        assert!(serde_json::from_str::<BBox>("[0.6,0.1,0.5,0.2]").is_err());
    }

    #[test]
    fn left_half_of_64_grid() {
        let span = BBox::new(0.0, 0.0, 0.5, 1.0).unwrap().pixel_span(64, 64);
        assert_eq!((span.col_start, span.col_end), (0, 32));
        assert_eq!((span.row_start, span.row_end), (0, 64));
    }

    #[test]
    fn tiny_box_can_cover_no_pixel_centers() {
        let span = BBox::new(0.51, 0.51, 0.52, 0.52).unwrap().pixel_span(4, 4);
        assert!(span.is_empty());
    }

    proptest! {
        #[test]
        fn span_matches_center_test(x1 in 0.0f64..1.0, dx in 0.001f64..1.0,
                                    y1 in 0.0f64..1.0, dy in 0.001f64..1.0,
                                    w in 1usize..40, h in 1usize..40) {
            let b = BBox::new(x1, y1, (x1 + dx).min(1.0), (y1 + dy).min(1.0));
            prop_assume!(b.is_ok());
            let b = b.unwrap();
            let raster = b.rasterize(w, h);
            for r in 0..h {
                for c in 0..w {
                    let cx = c as f64 + 0.5;
                    let cy = r as f64 + 0.5;
                    let inside = cx >= b.x1() * w as f64 && cx < b.x2() * w as f64
                        && cy >= b.y1() * h as f64 && cy < b.y2() * h as f64;
                    prop_assert_eq!(raster[r * w + c], inside);
                }
            }
        }
    }
}

use super::{BBox, ForgeError};

/// Binary ring marking a box outline at image resolution, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Overlay {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<bool>,
}

impl Overlay {
    pub fn count(&self) -> usize {
        self.pixels.iter().filter(|&&p| p).count()
    }

    /// Writes `value` into every ring pixel of `image`; all other pixels are
    /// left as they were.
    pub fn composite<T: Copy>(&self, image: &mut [T], value: T) -> Result<(), ForgeError> {
        if image.len() != self.pixels.len() {
            return Err(ForgeError::InvalidBox(format!(
                "overlay is {}x{} but image buffer has {} pixels",
                self.width,
                self.height,
                image.len()
            )));
        }
        for (dst, &on) in image.iter_mut().zip(&self.pixels) {
            if on {
                *dst = value;
            }
        }
        Ok(())
    }
}

/// Draws the box outline with the given thickness, inward from the edge of
/// the rasterized box.
pub fn render_overlay(width: usize, height: usize, bbox: &BBox, thickness: usize) -> Result<Overlay, ForgeError> {
    if thickness == 0 {
        return Err(ForgeError::InvalidBox("overlay thickness must be >= 1".into()));
    }
    let span = bbox.pixel_span(width, height);
    if span.is_empty() {
        return Err(ForgeError::DegenerateBox(format!(
            "{bbox} covers no pixel at {width}x{height}"
        )));
    }
    let mut pixels = vec![false; width * height];
    for r in span.row_start..span.row_end {
        for c in span.col_start..span.col_end {
            let ring = r < span.row_start + thickness
                || r + thickness >= span.row_end
                || c < span.col_start + thickness
                || c + thickness >= span.col_end;
            pixels[r * width + c] = ring;
        }
    }
    Ok(Overlay { width, height, pixels })
}

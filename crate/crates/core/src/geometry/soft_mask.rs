use serde::{Deserialize, Serialize};

use super::{GeometryError, GridDims, SoftMask};
use crate::forge::BBox;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SoftMaskParams {
    /// Blur standard deviation in image pixels; 0 disables blurring.
    pub sigma: f64,
    /// Added to every cell before the final normalization.
    pub floor: f64,
}

impl Default for SoftMaskParams {
    fn default() -> Self {
        Self {
            sigma: 1.0,
            floor: 1e-6,
        }
    }
}

// Half-sample symmetric reflection: -1 -> 0, n -> n-1, valid for any offset.
fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let m = i.rem_euclid(2 * n);
    (if m < n { m } else { 2 * n - 1 - m }) as usize
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|x| (-(x * x) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

/// Separable Gaussian blur truncated at 3σ with reflected boundaries.
/// `sigma == 0` returns the input unchanged.
pub fn gaussian_blur(values: &[f64], width: usize, height: usize, sigma: f64) -> Vec<f64> {
    if sigma == 0.0 {
        return values.to_vec();
    }
    let kernel = gaussian_kernel(sigma);
    let radius = (kernel.len() / 2) as isize;
    let mut horizontal = vec![0.0; values.len()];
    for r in 0..height {
        for c in 0..width {
            horizontal[r * width + c] = kernel
                .iter()
                .enumerate()
                .map(|(k, w)| w * values[r * width + reflect(c as isize + k as isize - radius, width)])
                .sum();
        }
    }
    let mut out = vec![0.0; values.len()];
    for r in 0..height {
        for c in 0..width {
            out[r * width + c] = kernel
                .iter()
                .enumerate()
                .map(|(k, w)| w * horizontal[reflect(r as isize + k as isize - radius, height) * width + c])
                .sum();
        }
    }
    out
}

// Overlap length of [a0, a1) with [b0, b1).
fn overlap(a0: f64, a1: f64, b0: f64, b1: f64) -> f64 {
    (a1.min(b1) - a0.max(b0)).max(0.0)
}

/// Area-weighted average pooling of a `width`×`height` raster onto a grid.
/// Each output cell covers an equal fraction of the image; input pixels
/// straddling a cell boundary contribute in proportion to their overlap.
pub fn area_pool(values: &[f64], width: usize, height: usize, grid: GridDims) -> Vec<f64> {
    let cell_w = width as f64 / grid.cols as f64;
    let cell_h = height as f64 / grid.rows as f64;
    let mut out = vec![0.0; grid.len()];
    for gr in 0..grid.rows {
        let (y0, y1) = (gr as f64 * cell_h, (gr + 1) as f64 * cell_h);
        let r_lo = y0.floor() as usize;
        let r_hi = (y1.ceil() as usize).min(height);
        for gc in 0..grid.cols {
            let (x0, x1) = (gc as f64 * cell_w, (gc + 1) as f64 * cell_w);
            let c_lo = x0.floor() as usize;
            let c_hi = (x1.ceil() as usize).min(width);
            let mut acc = 0.0;
            for r in r_lo..r_hi {
                let wy = overlap(r as f64, r as f64 + 1.0, y0, y1);
                for c in c_lo..c_hi {
                    let wx = overlap(c as f64, c as f64 + 1.0, x0, x1);
                    acc += wx * wy * values[r * width + c];
                }
            }
            out[gr * grid.cols + gc] = acc / (cell_w * cell_h);
        }
    }
    out
}

/// Builds the attention target for a box: rasterize at image resolution,
/// blur, average-pool to the grid, normalize to unit mass, add the floor to
/// every cell and renormalize.
pub fn build_soft_mask(
    bbox: &BBox,
    image_width: usize,
    image_height: usize,
    grid: GridDims,
    params: &SoftMaskParams,
) -> Result<SoftMask, GeometryError> {
    if grid.is_empty() || image_width == 0 || image_height == 0 {
        return Err(GeometryError::InvalidParameter(format!(
            "grid {}x{} / image {image_width}x{image_height} must be non-empty",
            grid.rows, grid.cols
        )));
    }
    if !params.sigma.is_finite() || params.sigma < 0.0 {
        return Err(GeometryError::InvalidParameter(format!("sigma {}", params.sigma)));
    }
    let max_floor = 1.0 / grid.len() as f64;
    if !(params.floor > 0.0 && params.floor < max_floor) {
        return Err(GeometryError::InvalidParameter(format!(
            "floor {} outside (0, {max_floor})",
            params.floor
        )));
    }

    let raster: Vec<f64> = bbox
        .rasterize(image_width, image_height)
        .into_iter()
        .map(|on| if on { 1.0 } else { 0.0 })
        .collect();
    if raster.iter().all(|&v| v == 0.0) {
        return Err(GeometryError::DegenerateBox(image_width, image_height));
    }
    let blurred = gaussian_blur(&raster, image_width, image_height, params.sigma);
    let mut pooled = area_pool(&blurred, image_width, image_height, grid);
    let mass: f64 = pooled.iter().sum();
    pooled.iter_mut().for_each(|v| *v = *v / mass + params.floor);
    let total: f64 = pooled.iter().sum();
    pooled.iter_mut().for_each(|v| *v /= total);
    SoftMask::new(grid, pooled)
}

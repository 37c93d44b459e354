//! Probability grids at attention resolution: soft box masks as alignment
//! targets, attention maps, and the KL divergence between them.

mod kl;
mod soft_mask;

use thiserror::Error;

pub use kl::{kl_divergence, kl_forward_logit_gradient, kl_reverse_logit_gradient, softmax};
pub use soft_mask::{area_pool, build_soft_mask, gaussian_blur, SoftMaskParams};

/// Tolerance on the unit-mass invariant of probability grids.
pub const MASS_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("shape mismatch: {0:?} vs {1:?}")]
    ShapeMismatch(GridDims, GridDims),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("box covers no pixel of the {0}x{1} image")]
    DegenerateBox(usize, usize),
    #[error("target distribution has a zero cell at index {0}")]
    ZeroTargetCell(usize),
    #[error("not a probability distribution: {0}")]
    NotADistribution(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct GridDims {
    pub rows: usize,
    pub cols: usize,
}

impl GridDims {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self { rows, cols }
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn check_distribution(values: &[f64]) -> Result<(), GeometryError> {
    if let Some(i) = values.iter().position(|v| !v.is_finite() || *v < 0.0) {
        return Err(GeometryError::NotADistribution(format!("cell {i} is {}", values[i])));
    }
    let sum: f64 = values.iter().sum();
    if (sum - 1.0).abs() > MASS_TOLERANCE {
        return Err(GeometryError::NotADistribution(format!("mass {sum}")));
    }
    Ok(())
}

/// Attention target built from a box: strictly positive cells summing to 1.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SoftMask {
    dims: GridDims,
    /// Row-major.
    values: Vec<f64>,
}

impl SoftMask {
    pub fn new(dims: GridDims, values: Vec<f64>) -> Result<Self, GeometryError> {
        if values.len() != dims.len() || dims.is_empty() {
            return Err(GeometryError::InvalidParameter(format!(
                "{} values for a {}x{} grid",
                values.len(),
                dims.rows,
                dims.cols
            )));
        }
        check_distribution(&values)?;
        if let Some(i) = values.iter().position(|&v| v <= 0.0) {
            return Err(GeometryError::ZeroTargetCell(i));
        }
        Ok(Self { dims, values })
    }

    pub fn dims(&self) -> GridDims {
        self.dims
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.dims.cols + col]
    }
}

/// Model attention over the grid: non-negative cells summing to 1.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AttentionMap {
    dims: GridDims,
    values: Vec<f64>,
}

impl AttentionMap {
    pub fn new(dims: GridDims, values: Vec<f64>) -> Result<Self, GeometryError> {
        if values.len() != dims.len() || dims.is_empty() {
            return Err(GeometryError::InvalidParameter(format!(
                "{} values for a {}x{} grid",
                values.len(),
                dims.rows,
                dims.cols
            )));
        }
        check_distribution(&values)?;
        Ok(Self { dims, values })
    }

    pub fn from_logits(dims: GridDims, logits: &[f64]) -> Result<Self, GeometryError> {
        Self::new(dims, softmax(logits))
    }

    pub fn uniform(dims: GridDims) -> Self {
        let n = dims.len();
        Self {
            dims,
            values: vec![1.0 / n as f64; n],
        }
    }

    pub fn dims(&self) -> GridDims {
        self.dims
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

use alloc::string::String;
use alloc::vec::Vec;

use crate::{Error, Result};

/// A row-major batch of `n` points in `R^dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    points: Vec<f64>,
    dim: usize,
    source_id: String,
}

impl SampleBatch {
    pub fn new(points: Vec<f64>, dim: usize, source_id: impl Into<String>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::param("sample dimension must be positive"));
        }
        if points.is_empty() || points.len() % dim != 0 {
            return Err(Error::Shape(alloc::format!(
                "{} values do not form a non-empty batch of dimension {}",
                points.len(),
                dim
            )));
        }
        if let Some(i) = points.iter().position(|v| !v.is_finite()) {
            return Err(Error::Evaluation { batch: source_id.into(), index: i / dim });
        }
        Ok(SampleBatch { points, dim, source_id: source_id.into() })
    }

    pub fn from_rows(rows: &[Vec<f64>], source_id: impl Into<String>) -> Result<Self> {
        let dim = rows.first().map(|r| r.len()).unwrap_or(0);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::Shape("rows have differing lengths".into()));
        }
        Self::new(rows.concat(), dim, source_id)
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn source_id(&self) -> &str {
        &self.source_id
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> {
        self.points.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.points
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.points
    }

    /// Rows selected by `indices`, in that order.
    pub fn select(&self, indices: &[usize], source_id: impl Into<String>) -> Result<Self> {
        let mut points = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            points.extend_from_slice(self.row(i));
        }
        Self::new(points, self.dim, source_id)
    }

    /// Keeps the first `cols` coordinates of every row.
    pub fn leading_columns(&self, cols: usize) -> Result<Self> {
        if cols == 0 || cols > self.dim {
            return Err(Error::param("column count out of range"));
        }
        let points = self.rows().flat_map(|r| r[..cols].iter().copied()).collect();
        Self::new(points, cols, self.source_id.clone())
    }
}

//! Pencil-beam forward model: scan geometry, ray tracing and the sparse
//! system matrix of ray/pixel intersection lengths.

mod geometry;
mod siddon;

pub use geometry::{BeamMode, Ray, ScanGeometry, DEFAULT_NUM_ANGLES};
pub use siddon::{chord_length, clip_to_unit_square, trace_ray};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::ImageGrid;
use crate::sparse::CsrMatrix;

/// Additive noise bookkeeping carried with a sinogram.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseMeta {
    pub seed: u64,
    pub relative_level: f64,
    /// Standard deviation actually applied.
    pub sigma: f64,
}

/// Projection data `g`, angle-major: entry `angle * num_detectors + detector`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sinogram {
    num_angles: usize,
    num_detectors: usize,
    data: Vec<f64>,
    pub noise: Option<NoiseMeta>,
}

impl Sinogram {
    pub fn new(num_angles: usize, num_detectors: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != num_angles * num_detectors {
            return Err(Error::ShapeMismatch {
                expected: num_angles * num_detectors,
                actual: data.len(),
            });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!("sinogram entry {i} is not finite")));
        }
        Ok(Self {
            num_angles,
            num_detectors,
            data,
            noise: None,
        })
    }

    pub fn zeros(num_angles: usize, num_detectors: usize) -> Self {
        Self {
            num_angles,
            num_detectors,
            data: vec![0.0; num_angles * num_detectors],
            noise: None,
        }
    }

    pub fn num_angles(&self) -> usize {
        self.num_angles
    }

    pub fn num_detectors(&self) -> usize {
        self.num_detectors
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            num_angles: self.num_angles,
            num_detectors: self.num_detectors,
            data: self.data.iter().map(|v| v * factor).collect(),
            noise: None,
        }
    }
}

/// The matrix `A` with `a_ji = |pixel_i ∩ ray_j|`.
#[derive(Debug, Clone)]
pub struct SystemMatrix {
    n: usize,
    num_angles: usize,
    num_detectors: usize,
    matrix: CsrMatrix,
}

impl SystemMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn num_rows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn num_cols(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn num_angles(&self) -> usize {
        self.num_angles
    }

    pub fn num_detectors(&self) -> usize {
        self.num_detectors
    }

    pub fn csr(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.matrix.nrows())
            .map(|i| self.matrix.row(i).1.iter().sum())
            .collect()
    }

    /// Wraps an existing matrix, e.g. one imported from elsewhere.
    pub fn from_csr(n: usize, num_angles: usize, num_detectors: usize, matrix: CsrMatrix) -> Result<Self> {
        if matrix.ncols() != n * n {
            return Err(Error::ShapeMismatch {
                expected: n * n,
                actual: matrix.ncols(),
            });
        }
        if matrix.nrows() != num_angles * num_detectors {
            return Err(Error::ShapeMismatch {
                expected: num_angles * num_detectors,
                actual: matrix.nrows(),
            });
        }
        Ok(Self {
            n,
            num_angles,
            num_detectors,
            matrix,
        })
    }
}

/// Traces every ray of `geom` through an `n x n` grid. Rows are traced in
/// parallel and assembled in measurement order, so the result is
/// deterministic.
pub fn assemble_system_matrix(geom: &ScanGeometry, n: usize) -> Result<SystemMatrix> {
    geom.validate()?;
    if n == 0 {
        return Err(Error::InvalidDimension("grid side must be positive".into()));
    }
    let rays: Vec<Ray> = geom.rays().collect();
    let rows = rays
        .par_iter()
        .map(|ray| trace_ray(ray, n))
        .collect::<Result<Vec<_>>>()?;
    Ok(SystemMatrix {
        n,
        num_angles: geom.num_angles(),
        num_detectors: geom.num_detectors,
        matrix: CsrMatrix::from_rows(n * n, rows),
    })
}

/// `g = A f`
pub fn forward_project(a: &SystemMatrix, f: &ImageGrid) -> Result<Sinogram> {
    if f.len() != a.num_cols() {
        return Err(Error::ShapeMismatch {
            expected: a.num_cols(),
            actual: f.len(),
        });
    }
    Ok(Sinogram {
        num_angles: a.num_angles,
        num_detectors: a.num_detectors,
        data: a.matrix.mul_vec(f.values()),
        noise: None,
    })
}

/// `A^T s`
pub fn adjoint_project(a: &SystemMatrix, s: &Sinogram) -> Result<ImageGrid> {
    if s.len() != a.num_rows() {
        return Err(Error::ShapeMismatch {
            expected: a.num_rows(),
            actual: s.len(),
        });
    }
    ImageGrid::new(a.n, a.matrix.tr_mul_vec(s.data()))
}

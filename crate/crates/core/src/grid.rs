//! Piecewise-constant images on the unit square and the anisotropic total
//! variation.
//!
//! Pixel `(row, col)` of an `n x n` grid covers
//! `[col/n, (col+1)/n] x [row/n, (row+1)/n]` in `(x, y)` coordinates and is
//! stored at the column-major index `row + n * col`.

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct ImageGrid {
    n: usize,
    values: Vec<f64>,
}

impl ImageGrid {
    /// Wraps column-major pixel values. Fails unless `values.len() == n * n`
    /// and every value is finite.
    pub fn new(n: usize, values: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidDimension("image side must be positive".into()));
        }
        if values.len() != n * n {
            return Err(Error::ShapeMismatch {
                expected: n * n,
                actual: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!("pixel {i} is not finite")));
        }
        Ok(Self { n, values })
    }

    pub fn zeros(n: usize) -> Self {
        Self::constant(n, 0.0)
    }

    pub fn constant(n: usize, value: f64) -> Self {
        assert!(n > 0);
        Self {
            n,
            values: vec![value; n * n],
        }
    }

    /// Builds an image from `f(row, col)`.
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(n > 0);
        let mut values = Vec::with_capacity(n * n);
        for col in 0..n {
            for row in 0..n {
                values.push(f(row, col));
            }
        }
        Self { n, values }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn pixel_size(&self) -> f64 {
        1.0 / self.n as f64
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize) -> usize {
        row + self.n * col
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[self.index(row, col)]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            n: self.n,
            values: self.values.iter().map(|v| v * factor).collect(),
        }
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Periodic horizontal and vertical difference matrices with the `1/n`
/// pixel-size factor folded into their entries.
#[derive(Debug, Clone)]
pub struct DifferenceOperators {
    n: usize,
    d_h: CsrMatrix,
    d_v: CsrMatrix,
}

impl DifferenceOperators {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn horizontal(&self) -> &CsrMatrix {
        &self.d_h
    }

    pub fn vertical(&self) -> &CsrMatrix {
        &self.d_v
    }
}

/// Builds `D_H` and `D_V` for an `n x n` grid.
///
/// Row `row * n + col` of `D_H` holds `f(row, col + 1) - f(row, col)` and row
/// `row + n * col` of `D_V` holds `f(row + 1, col) - f(row, col)`, both
/// wrapping around the image edge.
pub fn build_difference_operators(n: usize) -> Result<DifferenceOperators> {
    if n < 2 {
        return Err(Error::InvalidDimension(format!(
            "difference operators need n >= 2, got {n}"
        )));
    }
    let h = 1.0 / n as f64;
    let idx = |row: usize, col: usize| row + n * col;

    let mut rows_h = Vec::with_capacity(n * n);
    for row in 0..n {
        for col in 0..n {
            rows_h.push(vec![(idx(row, col), -h), (idx(row, (col + 1) % n), h)]);
        }
    }
    let mut rows_v = Vec::with_capacity(n * n);
    for col in 0..n {
        for row in 0..n {
            rows_v.push(vec![(idx(row, col), -h), (idx((row + 1) % n, col), h)]);
        }
    }
    Ok(DifferenceOperators {
        n,
        d_h: CsrMatrix::from_rows(n * n, rows_h),
        d_v: CsrMatrix::from_rows(n * n, rows_v),
    })
}

/// `||D_H f||_1 + ||D_V f||_1`
pub fn tv_norm(f: &ImageGrid, ops: &DifferenceOperators) -> Result<f64> {
    if ops.n != f.n {
        return Err(Error::ShapeMismatch {
            expected: ops.n * ops.n,
            actual: f.len(),
        });
    }
    let l1 = |d: &CsrMatrix| d.mul_vec(f.values()).iter().map(|v| v.abs()).sum::<f64>();
    Ok(l1(&ops.d_h) + l1(&ops.d_v))
}

/// Averages `f` over `m x m` blocks, `m = f.n / target_n`.
pub fn project_average(f: &ImageGrid, target_n: usize) -> Result<ImageGrid> {
    if target_n == 0 || f.n % target_n != 0 {
        return Err(Error::ResolutionMismatch {
            from: f.n,
            to: target_n,
        });
    }
    let m = f.n / target_n;
    let count = (m * m) as f64;
    Ok(ImageGrid::from_fn(target_n, |row, col| {
        // Accumulating offsets from the first pixel keeps uniform blocks exact.
        let first = f.get(row * m, col * m);
        let mut offset = 0.0;
        for c in col * m..(col + 1) * m {
            for r in row * m..(row + 1) * m {
                offset += f.get(r, c) - first;
            }
        }
        first + offset / count
    }))
}

/// Piecewise-constant replication onto a finer grid.
pub fn upsample_constant(f: &ImageGrid, target_n: usize) -> Result<ImageGrid> {
    if target_n == 0 || target_n % f.n != 0 {
        return Err(Error::ResolutionMismatch {
            from: f.n,
            to: target_n,
        });
    }
    let m = target_n / f.n;
    Ok(ImageGrid::from_fn(target_n, |row, col| f.get(row / m, col / m)))
}

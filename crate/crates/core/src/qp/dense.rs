use faer::prelude::*;
use faer::Mat;

use super::{LinearSolverConfig, QuadraticProgram, ReducedSystem};
use crate::error::{Error, Result};

/// Small quadratic program with explicit dense `Q` and `B`.
#[derive(Debug, Clone)]
pub struct DenseQp {
    q: Mat<f64>,
    c: Vec<f64>,
    b_mat: Mat<f64>,
    b: Vec<f64>,
    offset: f64,
}

impl DenseQp {
    /// `q` is `n x n` and `b_mat` is `m x n`, both row-major. Pass an empty
    /// `b_mat` for a program without equality constraints.
    pub fn new(q: Vec<Vec<f64>>, c: Vec<f64>, b_mat: Vec<Vec<f64>>, b: Vec<f64>) -> Result<Self> {
        let n = c.len();
        if q.len() != n || q.iter().any(|r| r.len() != n) {
            return Err(Error::ShapeMismatch {
                expected: n * n,
                actual: q.iter().map(Vec::len).sum(),
            });
        }
        if b_mat.len() != b.len() || b_mat.iter().any(|r| r.len() != n) {
            return Err(Error::ShapeMismatch {
                expected: b.len() * n,
                actual: b_mat.iter().map(Vec::len).sum(),
            });
        }
        for i in 0..n {
            for j in 0..i {
                if q[i][j] != q[j][i] {
                    return Err(Error::InvalidParameter("Q must be symmetric".into()));
                }
            }
        }
        Ok(Self {
            q: Mat::from_fn(n, n, |i, j| q[i][j]),
            c,
            b_mat: Mat::from_fn(b.len(), n, |i, j| b_mat[i][j]),
            b,
            offset: 0.0,
        })
    }

    pub fn with_offset(mut self, offset: f64) -> Self {
        self.offset = offset;
        self
    }
}

fn mat_vec(m: &Mat<f64>, x: &[f64], out: &mut [f64]) {
    for (i, o) in out.iter_mut().enumerate() {
        *o = (0..m.ncols()).map(|j| m[(i, j)] * x[j]).sum();
    }
}

impl QuadraticProgram for DenseQp {
    fn primal_dim(&self) -> usize {
        self.c.len()
    }

    fn dual_dim(&self) -> usize {
        self.b.len()
    }

    fn c(&self) -> &[f64] {
        &self.c
    }

    fn b(&self) -> &[f64] {
        &self.b
    }

    fn offset(&self) -> f64 {
        self.offset
    }

    fn apply_q(&self, z: &[f64], out: &mut [f64]) {
        mat_vec(&self.q, z, out);
    }

    fn apply_b(&self, z: &[f64], out: &mut [f64]) {
        mat_vec(&self.b_mat, z, out);
    }

    fn apply_bt(&self, y: &[f64], out: &mut [f64]) {
        for (j, o) in out.iter_mut().enumerate() {
            *o = (0..self.b_mat.nrows()).map(|i| self.b_mat[(i, j)] * y[i]).sum();
        }
    }

    fn factor_reduced(&self, barrier: &[f64], _config: &LinearSolverConfig) -> Result<Box<dyn ReducedSystem + '_>> {
        let n = self.primal_dim();
        let m = self.dual_dim();
        let kkt = Mat::from_fn(n + m, n + m, |i, j| match (i < n, j < n) {
            (true, true) => -self.q[(i, j)] - if i == j { barrier[i] } else { 0.0 },
            (true, false) => self.b_mat[(j - n, i)],
            (false, true) => self.b_mat[(i - n, j)],
            (false, false) => 0.0,
        });
        Ok(Box::new(DenseKkt {
            n,
            lu: kkt.partial_piv_lu(),
        }))
    }
}

struct DenseKkt {
    n: usize,
    lu: faer::linalg::solvers::PartialPivLu<f64>,
}

impl ReducedSystem for DenseKkt {
    fn solve(&self, r1: &[f64], r2: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let rhs = Mat::from_fn(
            r1.len() + r2.len(),
            1,
            |i, _| {
                if i < self.n {
                    r1[i]
                } else {
                    r2[i - self.n]
                }
            },
        );
        let sol = self.lu.solve(&rhs);
        let dz = (0..self.n).map(|i| sol[(i, 0)]).collect();
        let dy = (self.n..sol.nrows()).map(|i| sol[(i, 0)]).collect();
        Ok((dz, dy))
    }
}

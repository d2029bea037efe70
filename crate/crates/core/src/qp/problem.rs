use std::sync::OnceLock;

use faer::Mat;

use super::linsolve::{self, LinearSolverConfig};
use super::{dot, QuadraticProgram, ReducedSystem};
use crate::error::{Error, Result};
use crate::grid::DifferenceOperators;
use crate::xray::{Sinogram, SystemMatrix};

/// Split-variable form of
/// `min_{f >= 0} 1/2 ||A f - g||^2 + alpha (||D_H f||_1 + ||D_V f||_1)`.
///
/// `z = [f; h+; h-; v+; v-]` has length `5N` and the equality block
/// `[[D_H, -I, I, 0, 0], [D_V, 0, 0, -I, I]] z = 0` ties the split
/// differences to the image. `Q` only acts on `f`, as `A^T A`, and is never
/// materialized unless the dense linear backend asks for it.
pub struct QpProblem<'a> {
    a: &'a SystemMatrix,
    ops: &'a DifferenceOperators,
    g: Vec<f64>,
    alpha: f64,
    c: Vec<f64>,
    b: Vec<f64>,
    d: f64,
    ata_diag: Vec<f64>,
    ata: OnceLock<Mat<f64>>,
}

impl<'a> QpProblem<'a> {
    pub fn new(a: &'a SystemMatrix, g: &Sinogram, ops: &'a DifferenceOperators, alpha: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "regularization parameter must be positive, got {alpha}"
            )));
        }
        if g.len() != a.num_rows() {
            return Err(Error::ShapeMismatch {
                expected: a.num_rows(),
                actual: g.len(),
            });
        }
        if ops.n() != a.n() {
            return Err(Error::ShapeMismatch {
                expected: a.num_cols(),
                actual: ops.n() * ops.n(),
            });
        }
        let n_pix = a.num_cols();
        let mut c = vec![alpha; 5 * n_pix];
        let atg = a.csr().tr_mul_vec(g.data());
        for (ci, v) in c.iter_mut().zip(atg) {
            *ci = -v;
        }
        let g = g.data().to_vec();
        let d = 0.5 * dot(&g, &g);
        Ok(Self {
            a,
            ops,
            alpha,
            c,
            b: vec![0.0; 2 * n_pix],
            d,
            ata_diag: a.csr().column_sq_norms(),
            g,
            ata: OnceLock::new(),
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Number of pixels `N`.
    pub fn num_pixels(&self) -> usize {
        self.a.num_cols()
    }

    pub fn system_matrix(&self) -> &SystemMatrix {
        self.a
    }

    pub fn operators(&self) -> &DifferenceOperators {
        self.ops
    }

    pub fn data(&self) -> &[f64] {
        &self.g
    }

    pub(crate) fn ata_diag(&self) -> &[f64] {
        &self.ata_diag
    }

    /// Dense `A^T A`, built on first use.
    pub(crate) fn ata_dense(&self) -> &Mat<f64> {
        self.ata.get_or_init(|| {
            let n = self.num_pixels();
            let csr = self.a.csr();
            let mut m = Mat::<f64>::zeros(n, n);
            for r in 0..csr.nrows() {
                let (cols, vals) = csr.row(r);
                for (&i, &vi) in cols.iter().zip(vals) {
                    for (&k, &vk) in cols.iter().zip(vals) {
                        m[(i, k)] += vi * vk;
                    }
                }
            }
            m
        })
    }

    /// `[f; (D_H f)+; (D_H f)-; (D_V f)+; (D_V f)-]`, the feasible point whose
    /// objective equals the TV functional at `f`.
    pub fn lift(&self, f: &[f64]) -> Vec<f64> {
        let n = self.num_pixels();
        let dh = self.ops.horizontal().mul_vec(f);
        let dv = self.ops.vertical().mul_vec(f);
        let mut z = Vec::with_capacity(5 * n);
        z.extend_from_slice(f);
        z.extend(dh.iter().map(|v| v.max(0.0)));
        z.extend(dh.iter().map(|v| (-v).max(0.0)));
        z.extend(dv.iter().map(|v| v.max(0.0)));
        z.extend(dv.iter().map(|v| (-v).max(0.0)));
        z
    }

    /// `1/2 ||A f - g||^2 + alpha * TV(f)` evaluated directly.
    pub fn tv_objective(&self, f: &[f64]) -> f64 {
        let af = self.a.csr().mul_vec(f);
        let misfit: f64 = af.iter().zip(&self.g).map(|(x, y)| (x - y).powi(2)).sum();
        let l1 = |v: Vec<f64>| v.iter().map(|x| x.abs()).sum::<f64>();
        let tv = l1(self.ops.horizontal().mul_vec(f)) + l1(self.ops.vertical().mul_vec(f));
        0.5 * misfit + self.alpha * tv
    }
}

impl QuadraticProgram for QpProblem<'_> {
    fn primal_dim(&self) -> usize {
        5 * self.num_pixels()
    }

    fn dual_dim(&self) -> usize {
        2 * self.num_pixels()
    }

    fn c(&self) -> &[f64] {
        &self.c
    }

    fn b(&self) -> &[f64] {
        &self.b
    }

    fn offset(&self) -> f64 {
        self.d
    }

    fn apply_q(&self, z: &[f64], out: &mut [f64]) {
        let n = self.num_pixels();
        let af = self.a.csr().mul_vec(&z[..n]);
        self.a.csr().tr_mul_vec_into(&af, &mut out[..n]);
        out[n..].fill(0.0);
    }

    fn apply_b(&self, z: &[f64], out: &mut [f64]) {
        let n = self.num_pixels();
        let (f, rest) = z.split_at(n);
        let (hp, rest) = rest.split_at(n);
        let (hm, rest) = rest.split_at(n);
        let (vp, vm) = rest.split_at(n);
        let (out_h, out_v) = out.split_at_mut(n);
        self.ops.horizontal().mul_vec_into(f, out_h);
        self.ops.vertical().mul_vec_into(f, out_v);
        for i in 0..n {
            out_h[i] += hm[i] - hp[i];
            out_v[i] += vm[i] - vp[i];
        }
    }

    fn apply_bt(&self, y: &[f64], out: &mut [f64]) {
        let n = self.num_pixels();
        let (yh, yv) = y.split_at(n);
        let (out_f, rest) = out.split_at_mut(n);
        self.ops.horizontal().tr_mul_vec_into(yh, out_f);
        self.ops.vertical().tr_mul_vec_acc(yv, out_f);
        for i in 0..n {
            rest[i] = -yh[i];
            rest[n + i] = yh[i];
            rest[2 * n + i] = -yv[i];
            rest[3 * n + i] = yv[i];
        }
    }

    fn initial_scale(&self) -> f64 {
        self.g.iter().fold(1.0f64, |m, v| m.max(v.abs()))
    }

    fn factor_reduced(&self, barrier: &[f64], config: &LinearSolverConfig) -> Result<Box<dyn ReducedSystem + '_>> {
        linsolve::factor_tv(self, barrier, config)
    }
}

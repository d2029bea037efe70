//! Reduced Newton systems of the TV program.
//!
//! The split variables `h+-, v+-` enter the Newton matrix only through
//! diagonal blocks, so they are eliminated exactly. What remains is the SPD
//! image-space system
//!
//! ```text
//!     S = A^T A + D_f + D_H^T L_h D_H + D_V^T L_v D_V,
//! ```
//!
//! where `D_f` is the barrier diagonal on `f` and `L_h = (1/D_h+ + 1/D_h-)^-1`
//! (likewise `L_v`). `S` is factored densely for small grids and solved by
//! Jacobi-preconditioned conjugate gradients otherwise. Primal feasibility of
//! the recovered step is exact either way; only the `f` rows of the dual
//! equation carry the inner solver's error.

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::cholesky::llt;
use faer::Mat;

use super::problem::QpProblem;
use super::{dot, ReducedSystem};
use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinearBackend {
    /// Dense Cholesky up to `dense_limit` pixels, conjugate gradients above.
    Auto,
    Dense,
    ConjugateGradient,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearSolverConfig {
    pub backend: LinearBackend,
    /// Required relative residual of the reduced Newton system.
    pub inner_tol: f64,
    pub dense_limit: usize,
    pub max_cg_iterations: usize,
    /// Iterative refinement passes allowed when the residual is too large.
    pub refinement_steps: usize,
}

impl Default for LinearSolverConfig {
    fn default() -> Self {
        Self {
            backend: LinearBackend::Auto,
            inner_tol: 1e-9,
            dense_limit: 32 * 32,
            max_cg_iterations: 5000,
            refinement_steps: 3,
        }
    }
}

enum SchurSolver {
    /// Factor of `S`, or of `S + shift I` when `S` is too ill-conditioned to
    /// factor as is. Either way it preconditions CG on the exact `S`, which
    /// converges in one step when the factor is accurate.
    Cholesky(Mat<f64>),
    Cg {
        diag_inv: Vec<f64>,
    },
}

struct TvKkt<'p, 'a> {
    problem: &'p QpProblem<'a>,
    barrier: Vec<f64>,
    lambda: Vec<f64>,
    solver: SchurSolver,
    config: LinearSolverConfig,
}

pub(super) fn factor_tv<'p>(
    problem: &'p QpProblem<'_>,
    barrier: &[f64],
    config: &LinearSolverConfig,
) -> Result<Box<dyn ReducedSystem + 'p>> {
    let n = problem.num_pixels();
    if barrier.len() != 5 * n {
        return Err(Error::ShapeMismatch {
            expected: 5 * n,
            actual: barrier.len(),
        });
    }
    // Blocks 1,2 hold h+-, blocks 3,4 hold v+-.
    let lambda: Vec<f64> = (0..2)
        .flat_map(|k| {
            let (plus, minus) = ((1 + 2 * k) * n, (2 + 2 * k) * n);
            (0..n).map(move |j| 1.0 / (1.0 / barrier[plus + j] + 1.0 / barrier[minus + j]))
        })
        .collect();
    let dense = match config.backend {
        LinearBackend::Dense => true,
        LinearBackend::ConjugateGradient => false,
        LinearBackend::Auto => n <= config.dense_limit,
    };
    let solver = if dense {
        dense_schur_factor(problem, &barrier[..n], &lambda)?
    } else {
        let ops = problem.operators();
        let mut diag: Vec<f64> = problem
            .ata_diag()
            .iter()
            .zip(&barrier[..n])
            .map(|(a, d)| a + d)
            .collect();
        add_weighted_row_squares(ops.horizontal(), &lambda[..n], &mut diag);
        add_weighted_row_squares(ops.vertical(), &lambda[n..], &mut diag);
        SchurSolver::Cg {
            diag_inv: diag.iter().map(|d| 1.0 / d).collect(),
        }
    };
    Ok(Box::new(TvKkt {
        problem,
        barrier: barrier.to_vec(),
        lambda,
        solver,
        config: config.clone(),
    }))
}

fn add_weighted_row_squares(d: &CsrMatrix, weights: &[f64], diag: &mut [f64]) {
    for (r, &w) in weights.iter().enumerate() {
        let (cols, vals) = d.row(r);
        for (&c, &v) in cols.iter().zip(vals) {
            diag[c] += w * v * v;
        }
    }
}

fn add_weighted_gram(d: &CsrMatrix, weights: &[f64], s: &mut Mat<f64>) {
    for (r, &w) in weights.iter().enumerate() {
        let (cols, vals) = d.row(r);
        for (&i, &vi) in cols.iter().zip(vals) {
            for (&k, &vk) in cols.iter().zip(vals) {
                s[(i, k)] += w * vi * vk;
            }
        }
    }
}

fn dense_schur_factor(problem: &QpProblem<'_>, dg_f: &[f64], lambda: &[f64]) -> Result<SchurSolver> {
    let n = problem.num_pixels();
    let ops = problem.operators();
    let mut s = problem.ata_dense().clone();
    for (i, d) in dg_f.iter().enumerate() {
        s[(i, i)] += d;
    }
    add_weighted_gram(ops.horizontal(), &lambda[..n], &mut s);
    add_weighted_gram(ops.vertical(), &lambda[n..], &mut s);

    if let Some(l) = cholesky(s.clone()) {
        return Ok(SchurSolver::Cholesky(l));
    }
    // Barrier weights spanning many decades can push S past double
    // precision. Shift until the factorization succeeds.
    let max_diag = (0..n).map(|i| s[(i, i)]).fold(0.0, f64::max);
    let mut shift = 1e-14 * max_diag;
    for _ in 0..8 {
        let mut shifted = s.clone();
        for i in 0..n {
            shifted[(i, i)] += shift;
        }
        if let Some(l) = cholesky(shifted) {
            log::debug!("Schur complement factored with shift {shift:.3e}");
            return Ok(SchurSolver::Cholesky(l));
        }
        shift *= 100.0;
    }
    Err(Error::LinearSolve {
        reason: "Cholesky factorization failed".into(),
        residual: f64::INFINITY,
    })
}

fn cholesky(mut s: Mat<f64>) -> Option<Mat<f64>> {
    let n = s.nrows();
    let par = faer::get_global_parallelism();
    let mut buf = MemBuffer::new(llt::factor::cholesky_in_place_scratch::<f64>(
        n,
        par,
        Default::default(),
    ));
    llt::factor::cholesky_in_place(
        s.as_mut(),
        Default::default(),
        par,
        MemStack::new(&mut buf),
        Default::default(),
    )
    .ok()?;
    Some(s)
}

fn cholesky_solve(l: &Mat<f64>, rhs: &[f64]) -> Vec<f64> {
    let mut x = Mat::from_fn(rhs.len(), 1, |i, _| rhs[i]);
    let mut buf = MemBuffer::new(llt::solve::solve_in_place_scratch::<f64>(rhs.len(), 1, faer::Par::Seq));
    llt::solve::solve_in_place(l.as_ref(), x.as_mut(), faer::Par::Seq, MemStack::new(&mut buf));
    (0..rhs.len()).map(|i| x[(i, 0)]).collect()
}

impl TvKkt<'_, '_> {
    /// `out = S v`
    fn apply_schur(&self, v: &[f64], out: &mut [f64], scratch_m: &mut [f64], scratch_n: &mut [f64]) {
        let n = v.len();
        let ops = self.problem.operators();
        let a = self.problem.system_matrix().csr();
        a.mul_vec_into(v, scratch_m);
        a.tr_mul_vec_into(scratch_m, out);
        for i in 0..n {
            out[i] += self.barrier[i] * v[i];
        }
        for (d, lam) in [
            (ops.horizontal(), &self.lambda[..n]),
            (ops.vertical(), &self.lambda[n..]),
        ] {
            d.mul_vec_into(v, scratch_n);
            for (s, l) in scratch_n.iter_mut().zip(lam) {
                *s *= l;
            }
            d.tr_mul_vec_acc(scratch_n, out);
        }
    }

    fn solve_schur(&self, rhs: &[f64], abs_tol: f64) -> Vec<f64> {
        match &self.solver {
            SchurSolver::Cholesky(l) => self.pcg(rhs, abs_tol, |r| cholesky_solve(l, r)),
            SchurSolver::Cg { diag_inv } => {
                self.pcg(rhs, abs_tol, |r| r.iter().zip(diag_inv).map(|(a, b)| a * b).collect())
            }
        }
    }

    fn pcg(&self, rhs: &[f64], abs_tol: f64, precondition: impl Fn(&[f64]) -> Vec<f64>) -> Vec<f64> {
        let n = rhs.len();
        let mut scratch_m = vec![0.0; self.problem.system_matrix().num_rows()];
        let mut scratch_n = vec![0.0; n];
        let mut x = vec![0.0; n];
        let mut r = rhs.to_vec();
        let mut z = precondition(&r);
        let mut p = z.clone();
        let mut sp = vec![0.0; n];
        let mut rz = dot(&r, &z);
        for _ in 0..self.config.max_cg_iterations {
            if dot(&r, &r).sqrt() <= abs_tol {
                break;
            }
            self.apply_schur(&p, &mut sp, &mut scratch_m, &mut scratch_n);
            let curvature = dot(&p, &sp);
            if !(curvature > 0.0) {
                break;
            }
            let step = rz / curvature;
            for i in 0..n {
                x[i] += step * p[i];
                r[i] -= step * sp[i];
            }
            z = precondition(&r);
            let rz_next = dot(&r, &z);
            let beta = rz_next / rz;
            rz = rz_next;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
        }
        x
    }
}

impl ReducedSystem for TvKkt<'_, '_> {
    fn solve(&self, r1: &[f64], r2: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let n = self.problem.num_pixels();
        let ops = self.problem.operators();
        let dg = &self.barrier;
        let block = |k: usize| k * n..(k + 1) * n;

        // s = r2 - r1_p / D_p + r1_m / D_m for the h and v blocks.
        let mut s = vec![0.0; 2 * n];
        for (k, sk) in s.chunks_mut(n).enumerate() {
            let (bp, bm) = (block(1 + 2 * k), block(2 + 2 * k));
            for i in 0..n {
                let (ip, im) = (bp.start + i, bm.start + i);
                sk[i] = r2[k * n + i] - r1[ip] / dg[ip] + r1[im] / dg[im];
            }
        }
        let weighted: Vec<f64> = s.iter().zip(&self.lambda).map(|(a, l)| a * l).collect();
        let mut rhs = vec![0.0; n];
        ops.horizontal().tr_mul_vec_into(&weighted[..n], &mut rhs);
        ops.vertical().tr_mul_vec_acc(&weighted[n..], &mut rhs);
        for i in 0..n {
            rhs[i] -= r1[i];
        }

        let total = (dot(r1, r1) + dot(r2, r2)).sqrt();
        let df = self.solve_schur(&rhs, 0.5 * self.config.inner_tol * total);

        let mut dy = vec![0.0; 2 * n];
        let dh = ops.horizontal().mul_vec(&df);
        let dv = ops.vertical().mul_vec(&df);
        for i in 0..n {
            dy[i] = self.lambda[i] * (s[i] - dh[i]);
            dy[n + i] = self.lambda[n + i] * (s[n + i] - dv[i]);
        }

        let mut dz = vec![0.0; 5 * n];
        dz[..n].copy_from_slice(&df);
        for k in 0..2 {
            let (bp, bm) = (block(1 + 2 * k), block(2 + 2 * k));
            for i in 0..n {
                let (ip, im) = (bp.start + i, bm.start + i);
                let y = dy[k * n + i];
                dz[ip] = -(r1[ip] + y) / dg[ip];
                dz[im] = (y - r1[im]) / dg[im];
            }
        }
        Ok((dz, dy))
    }
}

//! Convex quadratic programs with equality constraints and nonnegative
//! variables,
//!
//! ```text
//!     minimize    1/2 z'Qz + c'z + d
//!     subject to  Bz = b,  z >= 0,
//! ```
//!
//! solved by a Mehrotra predictor-corrector primal-dual interior-point method.
//! The TV tomography problem is one instance ([`QpProblem`]); small dense
//! programs ([`DenseQp`]) share the same solver.

mod dense;
mod linsolve;
mod pdip;
mod problem;

pub use dense::DenseQp;
pub use linsolve::{LinearBackend, LinearSolverConfig};
pub use pdip::{
    pdip_solve, pdip_solve_qp, reconstruct, solve_newton_system, ConvergenceReport, IterationRecord, NewtonRhs,
    NewtonStep, PdipState, QpSolution, SolverConfig, Termination,
};
pub use problem::QpProblem;

use crate::error::Result;

/// Operator view of a quadratic program. `Q` must be symmetric positive
/// semidefinite.
pub trait QuadraticProgram {
    /// Length of `z`.
    fn primal_dim(&self) -> usize;
    /// Number of equality constraints, the length of `y`.
    fn dual_dim(&self) -> usize;
    fn c(&self) -> &[f64];
    fn b(&self) -> &[f64];
    fn offset(&self) -> f64 {
        0.0
    }
    /// `out = Q z`
    fn apply_q(&self, z: &[f64], out: &mut [f64]);
    /// `out = B z`
    fn apply_b(&self, z: &[f64], out: &mut [f64]);
    /// `out = B^T y`
    fn apply_bt(&self, y: &[f64], out: &mut [f64]);

    /// Common value of the strictly positive starting `z` and `x~`.
    fn initial_scale(&self) -> f64 {
        1.0
    }

    /// Prepares solves with the reduced Newton matrix
    /// `[[-(Q + diag(barrier)), B^T], [B, 0]]`.
    fn factor_reduced(&self, barrier: &[f64], config: &LinearSolverConfig) -> Result<Box<dyn ReducedSystem + '_>>;

    fn objective(&self, z: &[f64]) -> f64 {
        let mut qz = vec![0.0; z.len()];
        self.apply_q(z, &mut qz);
        0.5 * dot(z, &qz) + dot(self.c(), z) + self.offset()
    }
}

/// A prepared reduced Newton matrix.
pub trait ReducedSystem {
    /// Returns `(dz, dy)` with
    /// `-(Q + diag(barrier)) dz + B^T dy = r1` and `B dz = r2`.
    fn solve(&self, r1: &[f64], r2: &[f64]) -> Result<(Vec<f64>, Vec<f64>)>;
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |s, (x, y)| s + x * y)
}

pub(crate) fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

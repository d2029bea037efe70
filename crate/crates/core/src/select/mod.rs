//! Choosing the regularization parameter from sweeps over `alpha` and
//! resolution.
//!
//! * [`select_multiresolution`]: smallest `alpha` whose TV is the same at
//!   every resolution.
//! * [`select_scurve`]: `alpha` whose TV matches an estimate from prior
//!   images.
//! * [`select_lcurve`]: corner of the log residual versus log TV curve.

mod lcurve;
mod multires;
mod scurve;
mod sweep;

pub use lcurve::{select_lcurve, three_point_curvature, LCurveDiagnostics, LCurvePoint};
pub use multires::{relative_spread, select_multiresolution, MultiresDiagnostics, DEFAULT_STABILITY_TOL, SPREAD_FLOOR};
pub use scurve::{estimate_s_hat, select_scurve, SCurveDiagnostics, SCurvePrior};
pub use sweep::{run_sweep, SweepCell, SweepTable};

/// Decades `10^lo, ..., 10^hi`.
pub fn log_alphas(lo: i32, hi: i32) -> Vec<f64> {
    (lo..=hi).map(|e| format!("1e{e}").parse().unwrap()).collect()
}

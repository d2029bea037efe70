//! Total-variation regularized X-ray tomography.
//!
//! Images live on `[0, 1]^2` as piecewise-constant `n x n` grids. The TV
//! functional
//!
//! ```text
//!     1/2 ||A f - g||^2 + alpha (||D_H f||_1 + ||D_V f||_1),   f >= 0
//! ```
//!
//! is rewritten as a quadratic program and minimized with a primal-dual
//! interior-point method. The [`select`] module chooses `alpha` from sweeps
//! over several resolutions.

pub mod error;
pub mod grid;
pub mod io;
pub mod qp;
pub mod select;
pub mod sparse;
pub mod xray;

pub use error::{Error, Result};

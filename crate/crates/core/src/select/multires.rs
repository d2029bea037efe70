use crate::error::{Error, Result};
use crate::select::SweepTable;

/// Denominator floor for the relative spread.
pub const SPREAD_FLOOR: f64 = 1e-12;
pub const DEFAULT_STABILITY_TOL: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct MultiresDiagnostics {
    pub stability_tol: f64,
    /// Relative spread of TV across resolutions, one per alpha.
    pub spread: Vec<f64>,
    pub stable: Vec<bool>,
    pub selected_index: usize,
}

/// `(max - min) / max(mean, SPREAD_FLOOR)` over the values of one row.
pub fn relative_spread(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    (max - min) / mean.max(SPREAD_FLOOR)
}

/// Smallest alpha whose TV agrees across all sweep resolutions to within
/// `stability_tol`.
pub fn select_multiresolution(table: &SweepTable, stability_tol: f64) -> Result<(f64, MultiresDiagnostics)> {
    if !(stability_tol.is_finite() && stability_tol >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "stability tolerance must be nonnegative, got {stability_tol}"
        )));
    }
    let spread = (0..table.alphas().len())
        .map(|i| {
            let row = (0..table.resolutions().len())
                .map(|j| {
                    table.tv(i, j).ok_or_else(|| {
                        Error::IncompleteTable(format!(
                            "no value at alpha = {}, n = {}",
                            table.alphas()[i],
                            table.resolutions()[j]
                        ))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(relative_spread(&row))
        })
        .collect::<Result<Vec<_>>>()?;
    let stable: Vec<bool> = spread.iter().map(|&s| s <= stability_tol).collect();
    match stable.iter().position(|&s| s) {
        Some(k) => Ok((
            table.alphas()[k],
            MultiresDiagnostics {
                stability_tol,
                spread,
                stable,
                selected_index: k,
            },
        )),
        None => Err(Error::NoSelection {
            tolerance: stability_tol,
            spread,
        }),
    }
}

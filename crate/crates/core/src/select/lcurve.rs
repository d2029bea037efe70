use crate::error::{Error, Result};
use crate::select::SweepTable;

#[derive(Debug, Clone, PartialEq)]
pub struct LCurvePoint {
    pub alpha: f64,
    pub log_residual: f64,
    pub log_tv: f64,
    /// Signed curvature; absent at the two end samples.
    pub curvature: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LCurveDiagnostics {
    pub n: usize,
    /// Samples with positive residual and TV, ascending in alpha.
    pub points: Vec<LCurvePoint>,
    /// Alphas dropped because a logarithm was undefined.
    pub skipped: Vec<f64>,
    pub selected_index: usize,
    /// False when no sample bends towards the origin and the
    /// largest-magnitude curvature was used instead.
    pub corner_found: bool,
}

/// First and second derivatives at the middle of three samples of a curve
/// `x(t)` with non-uniform spacing.
fn three_point_derivatives(t: [f64; 3], x: [f64; 3]) -> (f64, f64) {
    let h1 = t[1] - t[0];
    let h2 = t[2] - t[1];
    let d1 = -h2 / (h1 * (h1 + h2)) * x[0] + (h2 - h1) / (h1 * h2) * x[1] + h1 / (h2 * (h1 + h2)) * x[2];
    let d2 = 2.0 * (x[0] / (h1 * (h1 + h2)) - x[1] / (h1 * h2) + x[2] / (h2 * (h1 + h2)));
    (d1, d2)
}

/// Signed curvature of the planar curve through three samples, evaluated
/// at the middle one. Positive when the curve turns counter-clockwise.
pub fn three_point_curvature(t: [f64; 3], x: [f64; 3], y: [f64; 3]) -> f64 {
    let (x1, x2) = three_point_derivatives(t, x);
    let (y1, y2) = three_point_derivatives(t, y);
    let speed = (x1 * x1 + y1 * y1).powf(1.5);
    if speed == 0.0 {
        return 0.0;
    }
    (x1 * y2 - y1 * x2) / speed
}

/// Corner of the `(log10 ||A f - g||, log10 TV(f))` curve parametrized by
/// `log10 alpha`, at resolution `n`.
pub fn select_lcurve(table: &SweepTable, n: usize) -> Result<(f64, LCurveDiagnostics)> {
    let j = table.resolution_index(n)?;
    let mut points = Vec::new();
    let mut skipped = Vec::new();
    for (i, &alpha) in table.alphas().iter().enumerate() {
        let cell = table.cell(i, j);
        let (tv, res) = match (cell.tv, cell.residual) {
            (Some(tv), Some(res)) => (tv, res),
            _ => {
                return Err(Error::IncompleteTable(format!("no value at alpha = {alpha}, n = {n}")));
            }
        };
        if tv > 0.0 && res > 0.0 {
            points.push(LCurvePoint {
                alpha,
                log_residual: res.log10(),
                log_tv: tv.log10(),
                curvature: None,
            });
        } else {
            skipped.push(alpha);
        }
    }
    if points.len() < 3 {
        return Err(Error::IncompleteTable(format!(
            "L-curve needs three samples with positive residual and TV, found {}",
            points.len()
        )));
    }
    for k in 1..points.len() - 1 {
        let t = [
            points[k - 1].alpha.log10(),
            points[k].alpha.log10(),
            points[k + 1].alpha.log10(),
        ];
        let x = [
            points[k - 1].log_residual,
            points[k].log_residual,
            points[k + 1].log_residual,
        ];
        let y = [points[k - 1].log_tv, points[k].log_tv, points[k + 1].log_tv];
        points[k].curvature = Some(three_point_curvature(t, x, y));
    }
    let best = |key: fn(f64) -> f64| {
        (1..points.len() - 1)
            .max_by(|&a, &b| {
                let ka = key(points[a].curvature.unwrap());
                let kb = key(points[b].curvature.unwrap());
                ka.total_cmp(&kb).then(b.cmp(&a))
            })
            .unwrap()
    };
    let mut k = best(|c| c);
    let corner_found = points[k].curvature.unwrap() > 0.0;
    if !corner_found {
        k = best(f64::abs);
        log::warn!(
            "L-curve at n = {n} has no corner; using largest |curvature| at alpha = {}",
            points[k].alpha
        );
    }
    let alpha = points[k].alpha;
    Ok((
        alpha,
        LCurveDiagnostics {
            n,
            points,
            skipped,
            selected_index: k,
            corner_found,
        },
    ))
}

use crate::error::{Error, Result};
use crate::grid::{build_difference_operators, tv_norm, ImageGrid};
use crate::select::SweepTable;
use crate::xray::{forward_project, Sinogram, SystemMatrix};

/// Expected TV of the object, estimated from prior images rescaled to
/// match the measured data energy.
#[derive(Debug, Clone, PartialEq)]
pub struct SCurvePrior {
    pub s_hat: f64,
    pub n: usize,
    /// Scale factor applied to each prior image.
    pub scales: Vec<f64>,
    /// TV of each rescaled prior image.
    pub tvs: Vec<f64>,
}

impl SCurvePrior {
    pub fn from_value(s_hat: f64, n: usize) -> Result<Self> {
        if !(s_hat.is_finite() && s_hat >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "target TV must be nonnegative, got {s_hat}"
            )));
        }
        Ok(Self {
            s_hat,
            n,
            scales: Vec::new(),
            tvs: Vec::new(),
        })
    }
}

/// Each prior `f_p` is rescaled by `||g|| / ||A f_p||`; the estimate is the
/// mean TV of the rescaled priors. Priors must already be at the resolution
/// of `a`.
pub fn estimate_s_hat(priors: &[ImageGrid], a: &SystemMatrix, g: &Sinogram) -> Result<SCurvePrior> {
    if priors.is_empty() {
        return Err(Error::InvalidParameter("at least one prior image is required".into()));
    }
    if g.len() != a.csr().nrows() {
        return Err(Error::ShapeMismatch {
            expected: a.csr().nrows(),
            actual: g.len(),
        });
    }
    let ops = build_difference_operators(a.n())?;
    let g_norm = g.norm();
    let mut scales = Vec::with_capacity(priors.len());
    let mut tvs = Vec::with_capacity(priors.len());
    for (index, p) in priors.iter().enumerate() {
        if p.n() != a.n() {
            return Err(Error::ResolutionMismatch { from: p.n(), to: a.n() });
        }
        let proj_norm = forward_project(a, p)?.norm();
        if !(proj_norm > 0.0) {
            return Err(Error::DegeneratePrior { index });
        }
        let scale = g_norm / proj_norm;
        scales.push(scale);
        tvs.push(scale * tv_norm(p, &ops)?);
    }
    let s_hat = tvs.iter().sum::<f64>() / tvs.len() as f64;
    Ok(SCurvePrior {
        s_hat,
        n: a.n(),
        scales,
        tvs,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SCurveDiagnostics {
    pub target: f64,
    pub n: usize,
    /// Running minimum of TV over increasing alpha.
    pub envelope: Vec<f64>,
    /// `(alpha, S)` samples along the interpolated curve.
    pub curve: Vec<(f64, f64)>,
    /// Set when the target equals a tabulated value.
    pub exact_index: Option<usize>,
}

const SAMPLES_PER_SEGMENT: usize = 8;

/// Alpha at which the TV-versus-alpha curve at resolution `n` crosses the
/// prior target, by linear interpolation in `(log10 alpha, S)`. The
/// tabulated curve is replaced by its running minimum, which makes the
/// crossing unique.
pub fn select_scurve(table: &SweepTable, prior: &SCurvePrior, n: usize) -> Result<(f64, SCurveDiagnostics)> {
    let target = prior.s_hat;
    if !target.is_finite() {
        return Err(Error::InvalidParameter("target TV must be finite".into()));
    }
    let tv = table.tv_column(n)?;
    let alphas = table.alphas();
    let mut envelope = tv.clone();
    for k in 1..envelope.len() {
        envelope[k] = envelope[k].min(envelope[k - 1]);
    }
    let logs: Vec<f64> = alphas.iter().map(|a| a.log10()).collect();
    let mut curve = Vec::new();
    for k in 0..alphas.len() {
        curve.push((alphas[k], envelope[k]));
        if k + 1 < alphas.len() {
            for s in 1..SAMPLES_PER_SEGMENT {
                let w = s as f64 / SAMPLES_PER_SEGMENT as f64;
                let x = logs[k] + w * (logs[k + 1] - logs[k]);
                curve.push((10f64.powf(x), envelope[k] + w * (envelope[k + 1] - envelope[k])));
            }
        }
    }
    let mut diag = SCurveDiagnostics {
        target,
        n,
        envelope: envelope.clone(),
        curve,
        exact_index: None,
    };

    if let Some(k) = tv.iter().position(|&s| s == target) {
        diag.exact_index = Some(k);
        return Ok((alphas[k], diag));
    }
    let max = envelope[0];
    let min = envelope[envelope.len() - 1];
    if target > max || target < min {
        return Err(Error::OutOfRange { target, min, max });
    }
    // envelope[k] > target > envelope[k + 1]; ties were handled above.
    let k = (0..envelope.len() - 1)
        .find(|&k| envelope[k] > target && target > envelope[k + 1])
        .ok_or(Error::OutOfRange { target, min, max })?;
    let w = (envelope[k] - target) / (envelope[k] - envelope[k + 1]);
    let alpha = 10f64.powf(logs[k] + w * (logs[k + 1] - logs[k]));
    Ok((alpha, diag))
}

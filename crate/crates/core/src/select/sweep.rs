use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{build_difference_operators, tv_norm, DifferenceOperators};
use crate::qp::{pdip_solve, ConvergenceReport, QpProblem, SolverConfig, Termination};
use crate::xray::{assemble_system_matrix, forward_project, ScanGeometry, Sinogram, SystemMatrix};

/// One `(alpha, n)` reconstruction summary. `tv` and `residual` are absent
/// when the solve failed.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub tv: Option<f64>,
    pub residual: Option<f64>,
    pub iterations: usize,
    pub termination: Termination,
    pub report: Option<Box<ConvergenceReport>>,
}

impl SweepCell {
    pub fn solved(tv: f64, residual: f64, iterations: usize, termination: Termination) -> Self {
        Self {
            tv: Some(tv),
            residual: Some(residual),
            iterations,
            termination,
            report: None,
        }
    }

    pub fn failed(iterations: usize) -> Self {
        Self {
            tv: None,
            residual: None,
            iterations,
            termination: Termination::SolverFailure,
            report: None,
        }
    }
}

/// TV norms and data residuals of reconstructions over an
/// `alphas x resolutions` grid. The last resolution is the display
/// resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    alphas: Vec<f64>,
    resolutions: Vec<usize>,
    /// Row-major: `cells[i * resolutions.len() + j]` is `(alphas[i], resolutions[j])`.
    cells: Vec<SweepCell>,
}

fn check_grid(alphas: &[f64], resolutions: &[usize]) -> Result<()> {
    if alphas.is_empty() || resolutions.is_empty() {
        return Err(Error::InvalidParameter(
            "sweep needs at least one alpha and one resolution".into(),
        ));
    }
    if alphas.iter().any(|a| !(a.is_finite() && *a > 0.0)) {
        return Err(Error::InvalidParameter("alphas must be positive".into()));
    }
    if alphas.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter("alphas must be strictly increasing".into()));
    }
    if resolutions.contains(&0) || resolutions.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter(
            "resolutions must be positive and strictly increasing".into(),
        ));
    }
    Ok(())
}

impl SweepTable {
    pub fn new(alphas: Vec<f64>, resolutions: Vec<usize>, cells: Vec<SweepCell>) -> Result<Self> {
        check_grid(&alphas, &resolutions)?;
        if cells.len() != alphas.len() * resolutions.len() {
            return Err(Error::ShapeMismatch {
                expected: alphas.len() * resolutions.len(),
                actual: cells.len(),
            });
        }
        for c in &cells {
            let finite = |v: Option<f64>| v.map_or(true, |x| x.is_finite() && x >= 0.0);
            if !finite(c.tv) || !finite(c.residual) || c.tv.is_some() != c.residual.is_some() {
                return Err(Error::InvalidParameter(
                    "sweep cells need nonnegative finite tv and residual, or neither".into(),
                ));
            }
        }
        Ok(Self {
            alphas,
            resolutions,
            cells,
        })
    }

    /// Table holding only TV values, e.g. numbers taken from elsewhere. Rows follow
    /// `alphas`, columns follow `resolutions`.
    pub fn from_tv_rows(alphas: Vec<f64>, resolutions: Vec<usize>, tv: &[Vec<f64>]) -> Result<Self> {
        let cells = tv
            .iter()
            .flat_map(|row| {
                row.iter()
                    .map(|&v| SweepCell::solved(v, 0.0, 0, Termination::Converged))
            })
            .collect();
        Self::new(alphas, resolutions, cells)
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn resolutions(&self) -> &[usize] {
        &self.resolutions
    }

    pub fn cell(&self, alpha_index: usize, res_index: usize) -> &SweepCell {
        &self.cells[alpha_index * self.resolutions.len() + res_index]
    }

    pub fn tv(&self, alpha_index: usize, res_index: usize) -> Option<f64> {
        self.cell(alpha_index, res_index).tv
    }

    pub fn residual(&self, alpha_index: usize, res_index: usize) -> Option<f64> {
        self.cell(alpha_index, res_index).residual
    }

    pub fn resolution_index(&self, n: usize) -> Result<usize> {
        self.resolutions
            .iter()
            .position(|&r| r == n)
            .ok_or_else(|| Error::InvalidParameter(format!("resolution {n} is not in the sweep")))
    }

    /// TV values of one resolution, ascending in alpha. Fails on absent cells.
    pub fn tv_column(&self, n: usize) -> Result<Vec<f64>> {
        let j = self.resolution_index(n)?;
        (0..self.alphas.len())
            .map(|i| {
                self.tv(i, j)
                    .ok_or_else(|| Error::IncompleteTable(format!("no value at alpha = {}, n = {n}", self.alphas[i])))
            })
            .collect()
    }

    /// `(alpha, n, increase)` for every place where TV grows with alpha by
    /// more than `slack`.
    pub fn monotonicity_violations(&self, slack: f64) -> Vec<(f64, usize, f64)> {
        let mut out = Vec::new();
        for (j, &n) in self.resolutions.iter().enumerate() {
            for i in 1..self.alphas.len() {
                if let (Some(prev), Some(cur)) = (self.tv(i - 1, j), self.tv(i, j)) {
                    if cur > prev + slack {
                        out.push((self.alphas[i], n, cur - prev));
                    }
                }
            }
        }
        out
    }

    pub fn is_complete(&self) -> bool {
        self.cells.iter().all(|c| c.tv.is_some())
    }
}

/// Reconstructs every `(alpha, n)` pair from the same sinogram. Cells are
/// independent and solved on the current rayon pool; one system matrix per
/// resolution is shared read-only. Solver failures become absent cells.
pub fn run_sweep(
    geom: &ScanGeometry,
    g: &Sinogram,
    alphas: &[f64],
    resolutions: &[usize],
    config: &SolverConfig,
) -> Result<SweepTable> {
    check_grid(alphas, resolutions)?;
    config.validate()?;
    if g.num_angles() != geom.num_angles() || g.num_detectors() != geom.num_detectors {
        return Err(Error::ShapeMismatch {
            expected: geom.num_rays(),
            actual: g.len(),
        });
    }
    let operators: Vec<(SystemMatrix, DifferenceOperators)> = resolutions
        .iter()
        .map(|&n| Ok((assemble_system_matrix(geom, n)?, build_difference_operators(n)?)))
        .collect::<Result<_>>()?;

    let jobs: Vec<(usize, usize)> = (0..alphas.len())
        .flat_map(|i| (0..resolutions.len()).map(move |j| (i, j)))
        .collect();
    let cells = jobs
        .par_iter()
        .map(|&(i, j)| {
            let (a, ops) = &operators[j];
            solve_cell(a, ops, g, alphas[i], config)
        })
        .collect::<Result<Vec<_>>>()?;
    SweepTable::new(alphas.to_vec(), resolutions.to_vec(), cells)
}

fn solve_cell(
    a: &SystemMatrix,
    ops: &DifferenceOperators,
    g: &Sinogram,
    alpha: f64,
    config: &SolverConfig,
) -> Result<SweepCell> {
    let problem = QpProblem::new(a, g, ops, alpha)?;
    match pdip_solve(&problem, config) {
        Ok((f, report)) => {
            let tv = tv_norm(&f, ops)?;
            let af = forward_project(a, &f)?;
            let residual = af
                .data()
                .iter()
                .zip(g.data())
                .map(|(x, y)| (x - y).powi(2))
                .sum::<f64>()
                .sqrt();
            log::info!(
                "alpha = {alpha:e}, n = {}: tv = {tv:.6}, residual = {residual:.6}, {} iterations",
                a.n(),
                report.iterations
            );
            Ok(SweepCell {
                tv: Some(tv),
                residual: Some(residual),
                iterations: report.iterations,
                termination: report.termination,
                report: Some(Box::new(report)),
            })
        }
        Err(Error::SolverFailure { reason, report }) => {
            log::warn!("alpha = {alpha:e}, n = {}: {reason}", a.n());
            Ok(SweepCell {
                report: Some(report.clone()),
                ..SweepCell::failed(report.iterations)
            })
        }
        Err(e) => Err(e),
    }
}

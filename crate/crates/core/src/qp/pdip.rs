use super::linsolve::LinearSolverConfig;
use super::problem::QpProblem;
use super::{dot, norm2, QuadraticProgram, ReducedSystem};
use crate::error::{Error, Result};
use crate::grid::{build_difference_operators, ImageGrid};
use crate::xray::{Sinogram, SystemMatrix};

/// Pixels in `[-NEGATIVE_CLAMP, 0)` are reported as zero.
const NEGATIVE_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub tol_primal: f64,
    pub tol_dual: f64,
    pub tol_gap: f64,
    pub max_iterations: usize,
    /// Fraction-to-boundary factor `eta` in `(0, 1)`.
    pub step_fraction: f64,
    /// `sigma = (mu_aff / mu)^centering_exponent`.
    pub centering_exponent: f64,
    pub linear: LinearSolverConfig,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol_primal: 1e-8,
            tol_dual: 1e-8,
            tol_gap: 1e-8,
            max_iterations: 100,
            step_fraction: 0.995,
            centering_exponent: 3.0,
            linear: LinearSolverConfig::default(),
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("tol_primal", self.tol_primal),
            ("tol_dual", self.tol_dual),
            ("tol_gap", self.tol_gap),
            ("inner_tol", self.linear.inner_tol),
            ("centering_exponent", self.centering_exponent),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.step_fraction > 0.0 && self.step_fraction < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "step fraction must lie in (0, 1), got {}",
                self.step_fraction
            )));
        }
        Ok(())
    }
}

/// Interior-point iterate.
#[derive(Debug, Clone, PartialEq)]
pub struct PdipState {
    pub z: Vec<f64>,
    pub y: Vec<f64>,
    pub x_tilde: Vec<f64>,
    /// `z' x~ / dim(z)`
    pub mu: f64,
    pub iteration: usize,
    pub r_primal: f64,
    pub r_dual: f64,
}

impl PdipState {
    /// `z = x~ = scale * 1`, `y = 0`, with `scale` from the problem.
    pub fn initial<P: QuadraticProgram + ?Sized>(problem: &P) -> Self {
        let scale = problem.initial_scale();
        let nz = problem.primal_dim();
        let mut state = Self {
            z: vec![scale; nz],
            y: vec![0.0; problem.dual_dim()],
            x_tilde: vec![scale; nz],
            mu: 0.0,
            iteration: 0,
            r_primal: 0.0,
            r_dual: 0.0,
        };
        state.mu = state.complementarity();
        state
    }

    pub fn complementarity(&self) -> f64 {
        if self.z.is_empty() {
            0.0
        } else {
            dot(&self.z, &self.x_tilde) / self.z.len() as f64
        }
    }

    /// `Z^-1 X~` as a vector.
    pub fn barrier(&self) -> Vec<f64> {
        self.x_tilde.iter().zip(&self.z).map(|(x, z)| x / z).collect()
    }

    pub fn is_interior(&self) -> bool {
        self.z.iter().chain(&self.x_tilde).all(|&v| v > 0.0 && v.is_finite())
    }
}

/// Right-hand side `(p1, p2, p3)` of the Newton system
///
/// ```text
///     [ -Q   B'  I      ] [dz ]   [p1]
///     [  B   0   0      ] [dy ] = [p2]
///     [  I   0   X~^-1 Z] [dx~]   [p3]
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct NewtonRhs {
    pub p1: Vec<f64>,
    pub p2: Vec<f64>,
    pub p3: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonStep {
    pub dz: Vec<f64>,
    pub dy: Vec<f64>,
    pub dx: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Converged,
    MaxIterations,
    SolverFailure,
}

impl Termination {
    pub fn as_str(self) -> &'static str {
        match self {
            Termination::Converged => "converged",
            Termination::MaxIterations => "max_iterations",
            Termination::SolverFailure => "solver_failure",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub mu: f64,
    pub r_primal: f64,
    pub r_dual: f64,
    pub step_primal: f64,
    pub step_dual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub termination: Termination,
    pub iterations: usize,
    pub mu: f64,
    /// `||B z - b||`
    pub r_primal: f64,
    /// `||Q z - B'y - x~ + c||`
    pub r_dual: f64,
    /// `r_primal / (1 + ||b||)`
    pub rel_primal: f64,
    /// `r_dual / (1 + ||c||)`
    pub rel_dual: f64,
    pub objective: f64,
    pub history: Vec<IterationRecord>,
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub state: PdipState,
    pub report: ConvergenceReport,
}

struct Residuals {
    dual: Vec<f64>,
    primal: Vec<f64>,
}

fn residuals<P: QuadraticProgram + ?Sized>(problem: &P, state: &PdipState) -> Residuals {
    let nz = problem.primal_dim();
    let mut qz = vec![0.0; nz];
    problem.apply_q(&state.z, &mut qz);
    let mut bty = vec![0.0; nz];
    problem.apply_bt(&state.y, &mut bty);
    let dual = (0..nz)
        .map(|i| qz[i] - bty[i] - state.x_tilde[i] + problem.c()[i])
        .collect();
    let mut primal = vec![0.0; problem.dual_dim()];
    problem.apply_b(&state.z, &mut primal);
    for (p, b) in primal.iter_mut().zip(problem.b()) {
        *p -= b;
    }
    Residuals { dual, primal }
}

/// Relative residual of the reduced system for a candidate `(dz, dy)`,
/// returned together with the residual vectors.
fn reduced_residual<P: QuadraticProgram + ?Sized>(
    problem: &P,
    barrier: &[f64],
    r1: &[f64],
    r2: &[f64],
    dz: &[f64],
    dy: &[f64],
) -> (f64, Vec<f64>, Vec<f64>) {
    let nz = problem.primal_dim();
    let mut qz = vec![0.0; nz];
    problem.apply_q(dz, &mut qz);
    let mut bty = vec![0.0; nz];
    problem.apply_bt(dy, &mut bty);
    let res1: Vec<f64> = (0..nz)
        .map(|i| r1[i] - (-(qz[i] + barrier[i] * dz[i]) + bty[i]))
        .collect();
    let mut bz = vec![0.0; problem.dual_dim()];
    problem.apply_b(dz, &mut bz);
    let res2: Vec<f64> = r2.iter().zip(&bz).map(|(r, b)| r - b).collect();
    let scale = (dot(r1, r1) + dot(r2, r2)).sqrt();
    let res = (dot(&res1, &res1) + dot(&res2, &res2)).sqrt();
    let rel = if scale > 0.0 { res / scale } else { res };
    (rel, res1, res2)
}

fn newton_step<P: QuadraticProgram + ?Sized>(
    problem: &P,
    kkt: &dyn ReducedSystem,
    barrier: &[f64],
    rhs: &NewtonRhs,
    config: &LinearSolverConfig,
) -> Result<NewtonStep> {
    let r1: Vec<f64> = (0..rhs.p1.len()).map(|i| rhs.p1[i] - barrier[i] * rhs.p3[i]).collect();
    let (mut dz, mut dy) = kkt.solve(&r1, &rhs.p2)?;
    let mut refinements = 0;
    loop {
        let (rel, res1, res2) = reduced_residual(problem, barrier, &r1, &rhs.p2, &dz, &dy);
        if rel <= config.inner_tol {
            break;
        }
        if refinements == config.refinement_steps || !rel.is_finite() {
            return Err(Error::LinearSolve {
                reason: "reduced Newton system residual above tolerance".into(),
                residual: rel,
            });
        }
        let (cz, cy) = kkt.solve(&res1, &res2)?;
        for (d, c) in dz.iter_mut().zip(cz) {
            *d += c;
        }
        for (d, c) in dy.iter_mut().zip(cy) {
            *d += c;
        }
        refinements += 1;
    }
    let dx = (0..dz.len()).map(|i| barrier[i] * (rhs.p3[i] - dz[i])).collect();
    Ok(NewtonStep { dz, dy, dx })
}

/// Solves the Newton system at `state` through its reduced form and recovers
/// `dx~ = Z^-1 X~ (p3 - dz)`.
pub fn solve_newton_system<P: QuadraticProgram + ?Sized>(
    problem: &P,
    state: &PdipState,
    rhs: &NewtonRhs,
    config: &LinearSolverConfig,
) -> Result<NewtonStep> {
    if !state.is_interior() {
        return Err(Error::InvalidParameter("state is not strictly interior".into()));
    }
    let barrier = state.barrier();
    let kkt = problem.factor_reduced(&barrier, config)?;
    newton_step(problem, kkt.as_ref(), &barrier, rhs, config)
}

/// Largest `t` with `v + t dv >= 0`.
fn max_step(v: &[f64], dv: &[f64]) -> f64 {
    v.iter()
        .zip(dv)
        .filter(|(_, &d)| d < 0.0)
        .map(|(&x, &d)| -x / d)
        .fold(f64::INFINITY, f64::min)
}

/// Mehrotra predictor-corrector iteration from the default interior start.
pub fn pdip_solve_qp<P: QuadraticProgram + ?Sized>(problem: &P, config: &SolverConfig) -> Result<QpSolution> {
    config.validate()?;
    let mut state = PdipState::initial(problem);
    let norm_b = norm2(problem.b());
    let norm_c = norm2(problem.c());
    let nz = problem.primal_dim() as f64;
    let mut history: Vec<IterationRecord> = Vec::new();

    let report = |state: &PdipState, termination, history: &Vec<IterationRecord>| ConvergenceReport {
        termination,
        iterations: state.iteration,
        mu: state.mu,
        r_primal: state.r_primal,
        r_dual: state.r_dual,
        rel_primal: state.r_primal / (1.0 + norm_b),
        rel_dual: state.r_dual / (1.0 + norm_c),
        objective: problem.objective(&state.z),
        history: history.clone(),
    };
    let failure = |state: &PdipState, reason: String, history: &Vec<IterationRecord>| Error::SolverFailure {
        reason,
        report: Box::new(report(state, Termination::SolverFailure, history)),
    };

    loop {
        let res = residuals(problem, &state);
        state.r_primal = norm2(&res.primal);
        state.r_dual = norm2(&res.dual);
        state.mu = state.complementarity();

        if state.r_primal / (1.0 + norm_b) <= config.tol_primal
            && state.r_dual / (1.0 + norm_c) <= config.tol_dual
            && state.mu <= config.tol_gap
        {
            let report = report(&state, Termination::Converged, &history);
            return Ok(QpSolution { state, report });
        }
        if state.iteration >= config.max_iterations {
            let report = report(&state, Termination::MaxIterations, &history);
            return Ok(QpSolution { state, report });
        }

        let barrier = state.barrier();
        let kkt = problem
            .factor_reduced(&barrier, &config.linear)
            .map_err(|e| failure(&state, e.to_string(), &history))?;

        let p1 = res.dual;
        let p2: Vec<f64> = res.primal.iter().map(|v| -v).collect();
        let mut rhs = NewtonRhs {
            p1,
            p2,
            p3: state.z.iter().map(|v| -v).collect(),
        };
        let aff = newton_step(problem, kkt.as_ref(), &barrier, &rhs, &config.linear)
            .map_err(|e| failure(&state, format!("predictor: {e}"), &history))?;

        let ap = max_step(&state.z, &aff.dz).min(1.0);
        let ad = max_step(&state.x_tilde, &aff.dx).min(1.0);
        let mu_aff = (0..state.z.len())
            .map(|i| (state.z[i] + ap * aff.dz[i]) * (state.x_tilde[i] + ad * aff.dx[i]))
            .sum::<f64>()
            / nz;
        let sigma = (mu_aff / state.mu).clamp(0.0, 1.0).powf(config.centering_exponent);
        let mu_target = sigma * state.mu;

        for i in 0..state.z.len() {
            let x = state.x_tilde[i];
            rhs.p3[i] = mu_target / x - state.z[i] - aff.dx[i] * aff.dz[i] / x;
        }
        let step = newton_step(problem, kkt.as_ref(), &barrier, &rhs, &config.linear)
            .map_err(|e| failure(&state, format!("corrector: {e}"), &history))?;
        drop(kkt);

        let lp = (config.step_fraction * max_step(&state.z, &step.dz)).min(1.0);
        let ld = (config.step_fraction * max_step(&state.x_tilde, &step.dx)).min(1.0);
        for (z, d) in state.z.iter_mut().zip(&step.dz) {
            *z += lp * d;
        }
        for (y, d) in state.y.iter_mut().zip(&step.dy) {
            *y += ld * d;
        }
        for (x, d) in state.x_tilde.iter_mut().zip(&step.dx) {
            *x += ld * d;
        }
        history.push(IterationRecord {
            iteration: state.iteration,
            mu: state.mu,
            r_primal: state.r_primal,
            r_dual: state.r_dual,
            step_primal: lp,
            step_dual: ld,
        });
        state.iteration += 1;

        if !state.is_interior() || state.y.iter().any(|v| !v.is_finite()) {
            return Err(failure(&state, "iterate left the strict interior".into(), &history));
        }
        if state.iteration >= 20 {
            let old = history[state.iteration - 20].mu;
            let now = state.complementarity();
            if now > 0.1 * old {
                log::debug!("complementarity fell only from {old:.3e} to {now:.3e} over 20 iterations");
            }
        }
    }
}

/// Solves the TV program and returns the image block of the solution.
pub fn pdip_solve(problem: &QpProblem<'_>, config: &SolverConfig) -> Result<(ImageGrid, ConvergenceReport)> {
    let solution = pdip_solve_qp(problem, config)?;
    let n = problem.system_matrix().n();
    let mut f = solution.state.z[..n * n].to_vec();
    for v in f.iter_mut() {
        if *v < 0.0 {
            if *v < -NEGATIVE_CLAMP {
                return Err(Error::SolverFailure {
                    reason: format!("negative pixel value {v}"),
                    report: Box::new(solution.report),
                });
            }
            *v = 0.0;
        }
    }
    Ok((ImageGrid::new(n, f)?, solution.report))
}

/// TV-regularized reconstruction at the resolution of `a`.
pub fn reconstruct(
    a: &SystemMatrix,
    g: &Sinogram,
    alpha: f64,
    config: &SolverConfig,
) -> Result<(ImageGrid, ConvergenceReport)> {
    let ops = build_difference_operators(a.n())?;
    let problem = QpProblem::new(a, g, &ops, alpha)?;
    pdip_solve(&problem, config)
}

//! Flat `section.key=value` run configuration.

use std::fmt::Write as _;
use std::path::PathBuf;

use tvtomo_core::qp::{LinearBackend, SolverConfig};
use tvtomo_core::select::{log_alphas, DEFAULT_STABILITY_TOL};
use tvtomo_core::xray::{ScanGeometry, Sinogram};
use tvtomo_core::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Multires,
    Scurve,
    Lcurve,
}

impl Method {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "multires" => Some(Method::Multires),
            "scurve" => Some(Method::Scurve),
            "lcurve" => Some(Method::Lcurve),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Multires => "multires",
            Method::Scurve => "scurve",
            Method::Lcurve => "lcurve",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeometryConfig {
    pub fan: Option<(f64, f64)>,
    pub angles: Option<usize>,
    pub detectors: Option<usize>,
    pub extent: f64,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self {
            fan: None,
            angles: None,
            detectors: None,
            extent: 2f64.sqrt(),
        }
    }
}

impl GeometryConfig {
    /// Geometry for simulating data meant for reconstruction at `n`.
    pub fn for_resolution(&self, n: usize) -> Result<ScanGeometry> {
        let base = ScanGeometry::default_for_resolution(n)?;
        self.build(
            self.angles.unwrap_or(base.num_angles()),
            self.detectors.unwrap_or(base.num_detectors),
        )
    }

    /// Geometry matching an existing sinogram's layout.
    pub fn for_sinogram(&self, s: &Sinogram) -> Result<ScanGeometry> {
        for (what, set, actual) in [
            ("angles", self.angles, s.num_angles()),
            ("detectors", self.detectors, s.num_detectors()),
        ] {
            if let Some(v) = set {
                if v != actual {
                    return Err(Error::InvalidGeometry(format!(
                        "configured {what} = {v} but the sinogram has {actual}"
                    )));
                }
            }
        }
        self.build(s.num_angles(), s.num_detectors())
    }

    fn build(&self, angles: usize, detectors: usize) -> Result<ScanGeometry> {
        match self.fan {
            None => ScanGeometry::parallel(angles, detectors, self.extent),
            Some((source, detector)) => ScanGeometry::fan(angles, detectors, self.extent, source, detector),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub geometry: GeometryConfig,
    pub alphas: Vec<f64>,
    /// Ascending; the last entry is the display resolution.
    pub resolutions: Vec<usize>,
    pub noise_level: f64,
    pub noise_seed: u64,
    pub solver: SolverConfig,
    pub out: Option<PathBuf>,
    pub stability_tol: f64,
    pub method: Method,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            geometry: GeometryConfig::default(),
            alphas: log_alphas(-4, 6),
            resolutions: vec![32, 64],
            noise_level: 0.0,
            noise_seed: 0,
            solver: SolverConfig::default(),
            out: None,
            stability_tol: DEFAULT_STABILITY_TOL,
            method: Method::Multires,
        }
    }
}

fn num<T: std::str::FromStr>(offset: usize, key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::Parse {
        offset,
        message: format!("invalid value '{v}' for {key}"),
    })
}

fn list<T: std::str::FromStr>(offset: usize, key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',').map(|s| num(offset, key, s.trim())).collect()
}

impl RunConfig {
    /// Applies `key=value` lines on top of the current values. `#` starts a
    /// comment line.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        let mut offset = 0;
        for raw in text.split_inclusive('\n') {
            let here = offset;
            offset += raw.len();
            // `#` starts a comment anywhere on the line.
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let start = here + raw.find(line).unwrap_or(0);
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                offset: start,
                message: format!("expected key=value, found '{line}'"),
            })?;
            let voff = start + k.len() + 1 + (v.len() - v.trim_start().len());
            self.set(start, voff, k.trim(), v.trim())?;
        }
        self.validate()
    }

    /// Sets one key. `koff` and `voff` locate the key and value for errors.
    pub fn set(&mut self, koff: usize, voff: usize, key: &str, v: &str) -> Result<()> {
        let s = &mut self.solver;
        match key {
            "geometry.mode" => match v {
                "parallel" => self.geometry.fan = None,
                "fan" => self.geometry.fan = Some(self.geometry.fan.unwrap_or((2.0, 2.0))),
                _ => {
                    return Err(Error::Parse {
                        offset: voff,
                        message: format!("unknown geometry mode '{v}'"),
                    })
                }
            },
            "geometry.angles" => self.geometry.angles = Some(num(voff, key, v)?),
            "geometry.detectors" => self.geometry.detectors = Some(num(voff, key, v)?),
            "geometry.extent" => self.geometry.extent = num(voff, key, v)?,
            "geometry.source_radius" => {
                let r = num(voff, key, v)?;
                self.geometry.fan = Some((r, self.geometry.fan.map_or(2.0, |f| f.1)));
            }
            "geometry.detector_radius" => {
                let r = num(voff, key, v)?;
                self.geometry.fan = Some((self.geometry.fan.map_or(2.0, |f| f.0), r));
            }
            "sweep.alphas" => self.alphas = list(voff, key, v)?,
            "sweep.resolutions" => self.resolutions = list(voff, key, v)?,
            "noise.level" => self.noise_level = num(voff, key, v)?,
            "noise.seed" => self.noise_seed = num(voff, key, v)?,
            "solver.tol_primal" => s.tol_primal = num(voff, key, v)?,
            "solver.tol_dual" => s.tol_dual = num(voff, key, v)?,
            "solver.tol_gap" => s.tol_gap = num(voff, key, v)?,
            "solver.max_iterations" => s.max_iterations = num(voff, key, v)?,
            "solver.step_fraction" => s.step_fraction = num(voff, key, v)?,
            "solver.centering_exponent" => s.centering_exponent = num(voff, key, v)?,
            "solver.inner_tol" => s.linear.inner_tol = num(voff, key, v)?,
            "solver.dense_limit" => s.linear.dense_limit = num(voff, key, v)?,
            "solver.max_cg_iterations" => s.linear.max_cg_iterations = num(voff, key, v)?,
            "solver.refinement_steps" => s.linear.refinement_steps = num(voff, key, v)?,
            "solver.backend" => {
                s.linear.backend = match v {
                    "auto" => LinearBackend::Auto,
                    "dense" => LinearBackend::Dense,
                    "cg" => LinearBackend::ConjugateGradient,
                    _ => {
                        return Err(Error::Parse {
                            offset: voff,
                            message: format!("unknown backend '{v}'"),
                        })
                    }
                }
            }
            "select.tol" => self.stability_tol = num(voff, key, v)?,
            "select.method" => {
                self.method = Method::parse(v).ok_or_else(|| Error::Parse {
                    offset: voff,
                    message: format!("unknown method '{v}'"),
                })?
            }
            "output.dir" => self.out = Some(PathBuf::from(v)),
            _ => {
                return Err(Error::Parse {
                    offset: koff,
                    message: format!("unknown key '{key}'"),
                })
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.resolutions.is_empty() {
            return Err(Error::InvalidParameter("resolution list is empty".into()));
        }
        if self.resolutions.windows(2).any(|w| w[0] >= w[1]) || self.resolutions[0] < 2 {
            return Err(Error::InvalidParameter(
                "resolutions must be at least 2 and strictly increasing".into(),
            ));
        }
        if self.alphas.is_empty() || self.alphas.windows(2).any(|w| w[0] >= w[1]) || self.alphas[0] <= 0.0 {
            return Err(Error::InvalidParameter(
                "alphas must be positive and strictly increasing".into(),
            ));
        }
        if !(self.noise_level >= 0.0) {
            return Err(Error::InvalidParameter("noise level must be nonnegative".into()));
        }
        if !(self.stability_tol >= 0.0) {
            return Err(Error::InvalidParameter(
                "stability tolerance must be nonnegative".into(),
            ));
        }
        self.solver.validate()
    }

    pub fn display_resolution(&self) -> usize {
        *self.resolutions.last().unwrap()
    }

    /// Effective configuration in the same format [`apply_text`] reads.
    ///
    /// [`apply_text`]: RunConfig::apply_text
    pub fn to_text(&self) -> String {
        let join = |v: Vec<String>| v.join(",");
        let s = &self.solver;
        let mut out = String::new();
        match self.geometry.fan {
            None => out.push_str("geometry.mode=parallel\n"),
            Some((src, det)) => {
                let _ = writeln!(
                    out,
                    "geometry.mode=fan\ngeometry.source_radius={src:?}\ngeometry.detector_radius={det:?}"
                );
            }
        }
        if let Some(a) = self.geometry.angles {
            let _ = writeln!(out, "geometry.angles={a}");
        }
        if let Some(d) = self.geometry.detectors {
            let _ = writeln!(out, "geometry.detectors={d}");
        }
        let backend = match s.linear.backend {
            LinearBackend::Auto => "auto",
            LinearBackend::Dense => "dense",
            LinearBackend::ConjugateGradient => "cg",
        };
        let _ = write!(
            out,
            "geometry.extent={:?}\n\
             sweep.alphas={}\n\
             sweep.resolutions={}\n\
             noise.level={:?}\n\
             noise.seed={}\n\
             solver.tol_primal={:?}\n\
             solver.tol_dual={:?}\n\
             solver.tol_gap={:?}\n\
             solver.max_iterations={}\n\
             solver.step_fraction={:?}\n\
             solver.centering_exponent={:?}\n\
             solver.backend={backend}\n\
             solver.inner_tol={:?}\n\
             solver.dense_limit={}\n\
             solver.max_cg_iterations={}\n\
             solver.refinement_steps={}\n\
             select.tol={:?}\n\
             select.method={}\n",
            self.geometry.extent,
            join(self.alphas.iter().map(|a| format!("{a:?}")).collect()),
            join(self.resolutions.iter().map(|r| r.to_string()).collect()),
            self.noise_level,
            self.noise_seed,
            s.tol_primal,
            s.tol_dual,
            s.tol_gap,
            s.max_iterations,
            s.step_fraction,
            s.centering_exponent,
            s.linear.inner_tol,
            s.linear.dense_limit,
            s.linear.max_cg_iterations,
            s.linear.refinement_steps,
            self.stability_tol,
            self.method.as_str(),
        );
        if let Some(dir) = &self.out {
            let _ = writeln!(out, "output.dir={}", dir.display());
        }
        out
    }
}

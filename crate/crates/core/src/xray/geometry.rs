use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Infinite line `origin + t * direction`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: [f64; 2],
    pub direction: [f64; 2],
}

impl Ray {
    pub fn new(origin: [f64; 2], direction: [f64; 2]) -> Self {
        Self { origin, direction }
    }

    /// Line through `from` and `to`.
    pub fn through(from: [f64; 2], to: [f64; 2]) -> Self {
        Self {
            origin: from,
            direction: [to[0] - from[0], to[1] - from[1]],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BeamMode {
    Parallel,
    /// Point source at `source_radius` from the rotation centre and a flat
    /// detector at `detector_radius` on the opposite side.
    Fan {
        source_radius: f64,
        detector_radius: f64,
    },
}

/// Acquisition layout around the unit square, rotating about `(0.5, 0.5)`.
///
/// At angle `theta` the central ray travels along `(cos theta, sin theta)` and
/// detector pixels are spread along `(-sin theta, cos theta)`, so angle zero
/// with `n` detector pixels over unit extent gives one horizontal ray through
/// the middle of each pixel row.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanGeometry {
    pub mode: BeamMode,
    pub angles: Vec<f64>,
    pub num_detectors: usize,
    pub detector_extent: f64,
}

pub const DEFAULT_NUM_ANGLES: usize = 90;

impl ScanGeometry {
    /// Parallel beam with `num_angles` uniform angles over `[0, pi)`.
    pub fn parallel(num_angles: usize, num_detectors: usize, detector_extent: f64) -> Result<Self> {
        let geom = Self {
            mode: BeamMode::Parallel,
            angles: uniform_angles(num_angles),
            num_detectors,
            detector_extent,
        };
        geom.validate()?;
        Ok(geom)
    }

    /// 90 parallel projections with a detector spanning the square's diagonal
    /// sampled by `ceil(1.5 n)` pixels.
    pub fn default_for_resolution(n: usize) -> Result<Self> {
        Self::parallel(DEFAULT_NUM_ANGLES, (3 * n).div_ceil(2), 2f64.sqrt())
    }

    pub fn fan(
        num_angles: usize,
        num_detectors: usize,
        detector_extent: f64,
        source_radius: f64,
        detector_radius: f64,
    ) -> Result<Self> {
        let geom = Self {
            mode: BeamMode::Fan {
                source_radius,
                detector_radius,
            },
            angles: uniform_angles(num_angles),
            num_detectors,
            detector_extent,
        };
        geom.validate()?;
        Ok(geom)
    }

    pub fn with_angles(mut self, angles: Vec<f64>) -> Result<Self> {
        self.angles = angles;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.angles.is_empty() {
            return Err(Error::InvalidGeometry("no projection angles".into()));
        }
        if self.angles.iter().any(|a| !a.is_finite()) {
            return Err(Error::InvalidGeometry("non-finite angle".into()));
        }
        if self.num_detectors == 0 {
            return Err(Error::InvalidGeometry("no detector pixels".into()));
        }
        if !(self.detector_extent.is_finite() && self.detector_extent > 0.0) {
            return Err(Error::InvalidGeometry(format!(
                "detector extent must be positive, got {}",
                self.detector_extent
            )));
        }
        if let BeamMode::Fan {
            source_radius,
            detector_radius,
        } = self.mode
        {
            // The source has to sit outside the circle circumscribing the square.
            if !(source_radius.is_finite() && source_radius > 0.5 * 2f64.sqrt()) {
                return Err(Error::InvalidGeometry(format!(
                    "source radius {source_radius} intersects the domain"
                )));
            }
            if !(detector_radius.is_finite() && detector_radius > 0.0) {
                return Err(Error::InvalidGeometry(format!(
                    "detector radius must be positive, got {detector_radius}"
                )));
            }
        }
        Ok(())
    }

    pub fn num_angles(&self) -> usize {
        self.angles.len()
    }

    /// Number of measurements `M`.
    pub fn num_rays(&self) -> usize {
        self.angles.len() * self.num_detectors
    }

    /// Offset of detector pixel `k`'s centre along the detector axis.
    pub fn detector_offset(&self, k: usize) -> f64 {
        let pitch = self.detector_extent / self.num_detectors as f64;
        -0.5 * self.detector_extent + (k as f64 + 0.5) * pitch
    }

    /// Ray for measurement `angle_index * num_detectors + detector_index`.
    pub fn ray(&self, angle_index: usize, detector_index: usize) -> Ray {
        let theta = self.angles[angle_index];
        let (sin, cos) = theta.sin_cos();
        let dir = [cos, sin];
        let axis = [-sin, cos];
        let s = self.detector_offset(detector_index);
        match self.mode {
            BeamMode::Parallel => Ray::new([0.5 + s * axis[0], 0.5 + s * axis[1]], dir),
            BeamMode::Fan {
                source_radius,
                detector_radius,
            } => {
                let source = [0.5 - source_radius * dir[0], 0.5 - source_radius * dir[1]];
                let pixel = [
                    0.5 + detector_radius * dir[0] + s * axis[0],
                    0.5 + detector_radius * dir[1] + s * axis[1],
                ];
                Ray::through(source, pixel)
            }
        }
    }

    /// All rays in angle-major order.
    pub fn rays(&self) -> impl Iterator<Item = Ray> + '_ {
        (0..self.num_angles()).flat_map(move |a| (0..self.num_detectors).map(move |d| self.ray(a, d)))
    }
}

fn uniform_angles(num_angles: usize) -> Vec<f64> {
    (0..num_angles).map(|k| PI * k as f64 / num_angles as f64).collect()
}

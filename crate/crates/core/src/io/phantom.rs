//! Analytic test objects: discs, nested circular shells and convex polygons.
//!
//! Phantoms are rendered by sampling pixel centres, and projected by exact
//! line integrals, so sinograms do not depend on any reconstruction grid.

use crate::error::{Error, Result};
use crate::grid::ImageGrid;
use crate::xray::{Ray, ScanGeometry, Sinogram};

#[derive(Debug, Clone, PartialEq)]
pub enum PhantomKind {
    Disc {
        center: [f64; 2],
        radius: f64,
        value: f64,
    },
    /// Concentric discs; a point takes the value of the innermost shell that
    /// contains it.
    NestedShells {
        center: [f64; 2],
        /// Outermost first.
        radii: Vec<f64>,
        values: Vec<f64>,
    },
    /// Convex polygon, vertices in either orientation.
    Polygon {
        vertices: Vec<[f64; 2]>,
        value: f64,
    },
}

/// Sum of shapes; an empty phantom is identically zero.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Phantom {
    pub shapes: Vec<PhantomKind>,
}

impl Phantom {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn disc(center: [f64; 2], radius: f64, value: f64) -> Result<Self> {
        Self::from_shapes(vec![PhantomKind::Disc { center, radius, value }])
    }

    pub fn nested_shells(center: [f64; 2], radii: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        Self::from_shapes(vec![PhantomKind::NestedShells { center, radii, values }])
    }

    pub fn polygon(vertices: Vec<[f64; 2]>, value: f64) -> Result<Self> {
        Self::from_shapes(vec![PhantomKind::Polygon { vertices, value }])
    }

    pub fn from_shapes(shapes: Vec<PhantomKind>) -> Result<Self> {
        let p = Self { shapes };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let inside = |c: [f64; 2], r: f64| c[0] - r > 0.0 && c[0] + r < 1.0 && c[1] - r > 0.0 && c[1] + r < 1.0;
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        for shape in &self.shapes {
            match shape {
                PhantomKind::Disc { center, radius, value } => {
                    if !(*radius > 0.0 && inside(*center, *radius)) {
                        return bad(format!("disc {center:?}, r = {radius} is not inside (0,1)^2"));
                    }
                    if !(*value >= 0.0) {
                        return bad(format!("disc value {value} is negative"));
                    }
                }
                PhantomKind::NestedShells { center, radii, values } => {
                    if radii.is_empty() || radii.len() != values.len() {
                        return bad("shells need matching, non-empty radii and values".into());
                    }
                    if radii.windows(2).any(|w| w[1] >= w[0]) || radii[radii.len() - 1] <= 0.0 {
                        return bad("shell radii must be positive and decreasing".into());
                    }
                    if !inside(*center, radii[0]) {
                        return bad(format!("outer shell of radius {} leaves the domain", radii[0]));
                    }
                    if values.iter().any(|v| !(*v >= 0.0)) {
                        return bad("shell values must be nonnegative".into());
                    }
                }
                PhantomKind::Polygon { vertices, value } => {
                    if vertices.len() < 3 {
                        return bad("polygon needs at least three vertices".into());
                    }
                    if vertices
                        .iter()
                        .any(|v| !(v[0] > 0.0 && v[0] < 1.0 && v[1] > 0.0 && v[1] < 1.0))
                    {
                        return bad("polygon vertices must lie in (0,1)^2".into());
                    }
                    if !is_convex(vertices) {
                        return bad("polygon must be convex".into());
                    }
                    if !(*value >= 0.0) {
                        return bad(format!("polygon value {value} is negative"));
                    }
                }
            }
        }
        Ok(())
    }

    /// Phantom value at a point.
    pub fn value_at(&self, p: [f64; 2]) -> f64 {
        self.shapes.iter().map(|s| s.value_at(p)).sum()
    }

    /// Manhattan-perimeter total variation when it is known in closed form
    /// (discs and shells; also polygons when they are the only shape).
    pub fn analytic_tv(&self) -> Option<f64> {
        if let [PhantomKind::Polygon { vertices, value }] = self.shapes.as_slice() {
            let perimeter: f64 = (0..vertices.len())
                .map(|i| {
                    let (a, b) = (vertices[i], vertices[(i + 1) % vertices.len()]);
                    (b[0] - a[0]).abs() + (b[1] - a[1]).abs()
                })
                .sum();
            return Some(perimeter * value);
        }
        // Only valid for non-overlapping shapes, which callers must ensure.
        self.shapes
            .iter()
            .map(|s| match s {
                PhantomKind::Disc { radius, value, .. } => Some(8.0 * radius * value),
                PhantomKind::NestedShells { radii, values, .. } => Some(
                    (0..radii.len())
                        .map(|k| {
                            let outer = if k == 0 { 0.0 } else { values[k - 1] };
                            8.0 * radii[k] * (values[k] - outer).abs()
                        })
                        .sum(),
                ),
                PhantomKind::Polygon { .. } => None,
            })
            .sum()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let shapes = self
            .shapes
            .iter()
            .map(|s| match s {
                PhantomKind::Disc { center, radius, value } => PhantomKind::Disc {
                    center: *center,
                    radius: *radius,
                    value: value * factor,
                },
                PhantomKind::NestedShells { center, radii, values } => PhantomKind::NestedShells {
                    center: *center,
                    radii: radii.clone(),
                    values: values.iter().map(|v| v * factor).collect(),
                },
                PhantomKind::Polygon { vertices, value } => PhantomKind::Polygon {
                    vertices: vertices.clone(),
                    value: value * factor,
                },
            })
            .collect();
        Self { shapes }
    }

    /// Exact line integral along a ray, restricted to the unit square.
    pub fn line_integral(&self, ray: &Ray) -> Result<f64> {
        let len = ray.direction[0].hypot(ray.direction[1]);
        if !(len > 0.0 && len.is_finite()) {
            return Err(Error::InvalidGeometry("degenerate ray".into()));
        }
        let dir = [ray.direction[0] / len, ray.direction[1] / len];
        Ok(self.shapes.iter().map(|s| s.line_integral(ray.origin, dir)).sum())
    }

    /// Noise-free sinogram by exact line integrals.
    pub fn project(&self, geom: &ScanGeometry) -> Result<Sinogram> {
        geom.validate()?;
        let data = geom
            .rays()
            .map(|r| self.line_integral(&r))
            .collect::<Result<Vec<_>>>()?;
        Sinogram::new(geom.num_angles(), geom.num_detectors, data)
    }
}

impl PhantomKind {
    fn value_at(&self, p: [f64; 2]) -> f64 {
        match self {
            PhantomKind::Disc { center, radius, value } => {
                if dist2(p, *center) < radius * radius {
                    *value
                } else {
                    0.0
                }
            }
            PhantomKind::NestedShells { center, radii, values } => {
                let d2 = dist2(p, *center);
                radii
                    .iter()
                    .zip(values)
                    .take_while(|(r, _)| d2 < *r * *r)
                    .last()
                    .map_or(0.0, |(_, v)| *v)
            }
            PhantomKind::Polygon { vertices, value } => {
                if point_in_convex(vertices, p) {
                    *value
                } else {
                    0.0
                }
            }
        }
    }

    fn line_integral(&self, origin: [f64; 2], dir: [f64; 2]) -> f64 {
        match self {
            PhantomKind::Disc { center, radius, value } => value * disc_chord(origin, dir, *center, *radius),
            PhantomKind::NestedShells { center, radii, values } => {
                // Innermost-wins layering is a telescoping sum of discs.
                let mut total = 0.0;
                let mut outer = 0.0;
                for (r, v) in radii.iter().zip(values) {
                    total += (v - outer) * disc_chord(origin, dir, *center, *r);
                    outer = *v;
                }
                total
            }
            PhantomKind::Polygon { vertices, value } => value * polygon_chord(origin, dir, vertices),
        }
    }
}

fn dist2(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

fn is_convex(v: &[[f64; 2]]) -> bool {
    let k = v.len();
    let signs: Vec<f64> = (0..k).map(|i| cross(v[i], v[(i + 1) % k], v[(i + 2) % k])).collect();
    signs.iter().all(|&s| s > 0.0) || signs.iter().all(|&s| s < 0.0)
}

fn point_in_convex(v: &[[f64; 2]], p: [f64; 2]) -> bool {
    let k = v.len();
    let signs: Vec<f64> = (0..k).map(|i| cross(v[i], v[(i + 1) % k], p)).collect();
    signs.iter().all(|&s| s > 0.0) || signs.iter().all(|&s| s < 0.0)
}

/// Length of the chord of a unit-direction line through a disc. Shapes are
/// inside the unit square, so no clipping is needed.
fn disc_chord(origin: [f64; 2], dir: [f64; 2], center: [f64; 2], radius: f64) -> f64 {
    let w = [center[0] - origin[0], center[1] - origin[1]];
    let along = w[0] * dir[0] + w[1] * dir[1];
    let perp2 = (w[0] * w[0] + w[1] * w[1]) - along * along;
    let h2 = radius * radius - perp2;
    if h2 > 0.0 {
        2.0 * h2.sqrt()
    } else {
        0.0
    }
}

/// Chord of a line through a convex polygon (Cyrus-Beck clipping).
fn polygon_chord(origin: [f64; 2], dir: [f64; 2], v: &[[f64; 2]]) -> f64 {
    let k = v.len();
    let orient = if cross(v[0], v[1], v[2]) > 0.0 { 1.0 } else { -1.0 };
    let mut t_min = f64::NEG_INFINITY;
    let mut t_max = f64::INFINITY;
    for i in 0..k {
        let (a, b) = (v[i], v[(i + 1) % k]);
        // Inward normal of edge a -> b.
        let normal = [-(b[1] - a[1]) * orient, (b[0] - a[0]) * orient];
        let num = normal[0] * (origin[0] - a[0]) + normal[1] * (origin[1] - a[1]);
        let den = normal[0] * dir[0] + normal[1] * dir[1];
        if den == 0.0 {
            if num < 0.0 {
                return 0.0;
            }
        } else {
            let t = -num / den;
            if den > 0.0 {
                t_min = t_min.max(t);
            } else {
                t_max = t_max.min(t);
            }
        }
    }
    (t_max - t_min).max(0.0)
}

/// Renders by pixel-centre sampling.
pub fn render_phantom(p: &Phantom, n: usize) -> Result<ImageGrid> {
    if n == 0 {
        return Err(Error::InvalidDimension("image side must be positive".into()));
    }
    p.validate()?;
    let h = 1.0 / n as f64;
    Ok(ImageGrid::from_fn(n, |row, col| {
        p.value_at([(col as f64 + 0.5) * h, (row as f64 + 0.5) * h])
    }))
}

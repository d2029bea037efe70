//! Exact ray/pixel intersection lengths by parametric traversal of the grid
//! lines (Siddon's method).

use super::geometry::Ray;
use crate::error::{Error, Result};

/// Segments shorter than this are folded into their neighbour. They only
/// arise from grid-line crossings that coincide up to rounding.
const MIN_SEGMENT: f64 = 1e-14;

/// Parameter interval, in units of length along the normalized direction,
/// where the ray lies inside the closed unit square. `None` if it misses or
/// only touches a corner.
pub fn clip_to_unit_square(origin: [f64; 2], dir: [f64; 2]) -> Option<(f64, f64)> {
    let mut t_min = f64::NEG_INFINITY;
    let mut t_max = f64::INFINITY;
    for axis in 0..2 {
        if dir[axis] == 0.0 {
            if !(0.0..=1.0).contains(&origin[axis]) {
                return None;
            }
            continue;
        }
        let a = -origin[axis] / dir[axis];
        let b = (1.0 - origin[axis]) / dir[axis];
        t_min = t_min.max(a.min(b));
        t_max = t_max.min(a.max(b));
    }
    (t_max > t_min).then_some((t_min, t_max))
}

fn normalized(ray: &Ray) -> Result<[f64; 2]> {
    let [dx, dy] = ray.direction;
    let len = dx.hypot(dy);
    if !(len.is_finite() && len > 0.0) || !ray.origin.iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidGeometry(format!(
            "degenerate ray {:?} -> {:?}",
            ray.origin, ray.direction
        )));
    }
    Ok([dx / len, dy / len])
}

/// Chord length of the ray inside `[0, 1]^2`.
pub fn chord_length(ray: &Ray) -> Result<f64> {
    let dir = normalized(ray)?;
    Ok(clip_to_unit_square(ray.origin, dir).map_or(0.0, |(a, b)| b - a))
}

/// Column-major pixel indices crossed by `ray` on an `n x n` grid, each with
/// its intersection length. Empty when the ray misses the square.
pub fn trace_ray(ray: &Ray, n: usize) -> Result<Vec<(usize, f64)>> {
    if n == 0 {
        return Err(Error::InvalidDimension("grid side must be positive".into()));
    }
    let dir = normalized(ray)?;
    let origin = ray.origin;
    let Some((t_min, t_max)) = clip_to_unit_square(origin, dir) else {
        return Ok(Vec::new());
    };

    let nf = n as f64;
    let mut ts = Vec::with_capacity(2 * n + 2);
    ts.push(t_min);
    for axis in 0..2 {
        if dir[axis] == 0.0 {
            continue;
        }
        for k in 1..n {
            let t = (k as f64 / nf - origin[axis]) / dir[axis];
            if t > t_min && t < t_max {
                ts.push(t);
            }
        }
    }
    ts.push(t_max);
    ts.sort_by(f64::total_cmp);

    let mut out: Vec<(usize, f64)> = Vec::with_capacity(ts.len());
    let mut carry = 0.0;
    for w in ts.windows(2) {
        let len = w[1] - w[0];
        if len < MIN_SEGMENT {
            carry += len;
            continue;
        }
        let mid = 0.5 * (w[0] + w[1]);
        let x = origin[0] + mid * dir[0];
        let y = origin[1] + mid * dir[1];
        let col = ((x * nf).floor().max(0.0) as usize).min(n - 1);
        let row = ((y * nf).floor().max(0.0) as usize).min(n - 1);
        let pixel = row + n * col;
        let len = len + std::mem::take(&mut carry);
        match out.last_mut() {
            Some((p, l)) if *p == pixel => *l += len,
            _ => out.push((pixel, len)),
        }
    }
    if carry > 0.0 {
        if let Some((_, l)) = out.last_mut() {
            *l += carry;
        }
    }
    Ok(out)
}

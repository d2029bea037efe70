//! Independent reference implementations shared by the integration tests.

#![allow(dead_code)]

use rand::Rng;
use tvtomo_core::grid::{tv_norm, DifferenceOperators, ImageGrid};
use tvtomo_core::sparse::CsrMatrix;
use tvtomo_core::xray::{Ray, ScanGeometry};

/// Intersection length of an infinite line with an axis-aligned box, by
/// Liang-Barsky clipping of the parametric line. A line lying on a box edge
/// belongs to the box above or to the right of it, except on the far edge of
/// the unit square.
pub fn box_chord(ray: &Ray, lo: [f64; 2], hi: [f64; 2]) -> f64 {
    let len = (ray.direction[0].powi(2) + ray.direction[1].powi(2)).sqrt();
    // Rounding leaves cos(pi / 2) at about 6e-17; such rays are axis-parallel.
    let d = ray.direction.map(|v| if v.abs() < 1e-12 * len { 0.0 } else { v });
    let (mut t0, mut t1) = (f64::NEG_INFINITY, f64::INFINITY);
    for k in 0..2 {
        if d[k] == 0.0 {
            let o = ray.origin[k];
            let inside = (lo[k] <= o && o < hi[k]) || (o == hi[k] && hi[k] == 1.0);
            if !inside {
                return 0.0;
            }
        } else {
            let a = (lo[k] - ray.origin[k]) / d[k];
            let b = (hi[k] - ray.origin[k]) / d[k];
            t0 = t0.max(a.min(b));
            t1 = t1.min(a.max(b));
        }
    }
    ((t1 - t0) * len).max(0.0)
}

/// Dense system matrix, one pixel box at a time.
pub fn dense_system_matrix(geom: &ScanGeometry, n: usize) -> Vec<Vec<f64>> {
    let h = 1.0 / n as f64;
    geom.rays()
        .map(|ray| {
            let mut row = vec![0.0; n * n];
            for col in 0..n {
                for r in 0..n {
                    let lo = [col as f64 * h, r as f64 * h];
                    let hi = [(col + 1) as f64 * h, (r + 1) as f64 * h];
                    row[r + n * col] = box_chord(&ray, lo, hi);
                }
            }
            row
        })
        .collect()
}

pub fn tv_objective(a: &CsrMatrix, ops: &DifferenceOperators, g: &[f64], alpha: f64, f: &[f64]) -> f64 {
    let r: f64 = a.mul_vec(f).iter().zip(g).map(|(x, y)| (x - y).powi(2)).sum();
    let n = ops.n();
    let tv = tv_norm(&ImageGrid::new(n, f.to_vec()).unwrap(), ops).unwrap();
    0.5 * r + alpha * tv
}

/// Largest eigenvalue of `A^T A` by power iteration.
pub fn gram_norm(a: &CsrMatrix) -> f64 {
    let mut v = vec![1.0; a.ncols()];
    let mut lambda = 0.0;
    for _ in 0..200 {
        let w = a.tr_mul_vec(&a.mul_vec(&v));
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        lambda = norm / v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v = w.into_iter().map(|x| x / norm).collect();
    }
    lambda
}

/// Projected subgradient descent on the TV functional over `f >= 0` with
/// steps `1 / (L sqrt(k + 1))`. Returns the best iterate and its objective.
pub fn subgradient_oracle(
    a: &CsrMatrix,
    ops: &DifferenceOperators,
    g: &[f64],
    alpha: f64,
    iterations: usize,
) -> (Vec<f64>, f64) {
    let n_pix = a.ncols();
    let lipschitz = gram_norm(a).max(1e-12);
    let mut f = vec![0.0; n_pix];
    let mut best = f.clone();
    let mut best_obj = tv_objective(a, ops, g, alpha, &f);
    let sign = |v: f64| {
        if v > 0.0 {
            1.0
        } else if v < 0.0 {
            -1.0
        } else {
            0.0
        }
    };
    for k in 0..iterations {
        let resid: Vec<f64> = a.mul_vec(&f).iter().zip(g).map(|(x, y)| x - y).collect();
        let mut s = a.tr_mul_vec(&resid);
        let sh: Vec<f64> = ops.horizontal().mul_vec(&f).into_iter().map(sign).collect();
        let sv: Vec<f64> = ops.vertical().mul_vec(&f).into_iter().map(sign).collect();
        let th = ops.horizontal().tr_mul_vec(&sh);
        let tv = ops.vertical().tr_mul_vec(&sv);
        for i in 0..n_pix {
            s[i] += alpha * (th[i] + tv[i]);
        }
        let step = 1.0 / (lipschitz * ((k + 1) as f64).sqrt());
        for i in 0..n_pix {
            f[i] = (f[i] - step * s[i]).max(0.0);
        }
        let obj = tv_objective(a, ops, g, alpha, &f);
        if obj < best_obj {
            best_obj = obj;
            best.copy_from_slice(&f);
        }
    }
    (best, best_obj)
}

/// Random nonnegative blocky image.
pub fn random_image(rng: &mut impl Rng, n: usize) -> ImageGrid {
    let blocks = rng.gen_range(1..4);
    let rects: Vec<(usize, usize, usize, usize, f64)> = (0..blocks)
        .map(|_| {
            let r0 = rng.gen_range(0..n);
            let c0 = rng.gen_range(0..n);
            (
                r0,
                rng.gen_range(r0..n) + 1,
                c0,
                rng.gen_range(c0..n) + 1,
                rng.gen_range(0.2..1.0),
            )
        })
        .collect();
    ImageGrid::from_fn(n, |r, c| {
        rects
            .iter()
            .filter(|q| (q.0..q.1).contains(&r) && (q.2..q.3).contains(&c))
            .map(|q| q.4)
            .sum()
    })
}

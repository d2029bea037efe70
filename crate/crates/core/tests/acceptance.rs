//! Acceptance suite. Runs every criterion at its stated tolerance, prints one
//! PASS/FAIL line per criterion and exits non-zero if any failed.

mod support;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tvtomo_core::grid::{build_difference_operators, tv_norm};
use tvtomo_core::io::formats::{decode_sinogram, encode_sinogram};
use tvtomo_core::io::{add_noise, render_phantom, NoiseSpec, Phantom, PhantomKind};
use tvtomo_core::qp::{pdip_solve, pdip_solve_qp, reconstruct, DenseQp, QpProblem, SolverConfig, Termination};
use tvtomo_core::select::{
    log_alphas, relative_spread, run_sweep, select_lcurve, select_multiresolution, select_scurve, SCurvePrior,
    SweepCell, SweepTable,
};
use tvtomo_core::xray::{
    adjoint_project, assemble_system_matrix, chord_length, forward_project, ScanGeometry, Sinogram,
};

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    check(elapsed < limit, || format!("took {elapsed:.1?}, limit {limit:?}"))
}

fn c1_difference_layout() -> Outcome {
    let start = Instant::now();
    #[rustfmt::skip]
    let printed: [[i8; 9]; 9] = [
        [-1, 0, 0, 1, 0, 0, 0, 0, 0],
        [0, 0, 0, -1, 0, 0, 1, 0, 0],
        [1, 0, 0, 0, 0, 0, -1, 0, 0],
        [0, -1, 0, 0, 1, 0, 0, 0, 0],
        [0, 0, 0, 0, -1, 0, 0, 1, 0],
        [0, 1, 0, 0, 0, 0, 0, -1, 0],
        [0, 0, -1, 0, 0, 1, 0, 0, 0],
        [0, 0, 0, 0, 0, -1, 0, 0, 1],
        [0, 0, 1, 0, 0, 0, 0, 0, -1],
    ];
    let dense = build_difference_operators(3)
        .map_err(|e| e.to_string())?
        .horizontal()
        .to_dense();
    for (i, row) in printed.iter().enumerate() {
        for (j, &p) in row.iter().enumerate() {
            let want = p as f64 / 3.0;
            check(dense[i][j].to_bits() == want.to_bits(), || {
                format!("entry ({i}, {j}) is {} not {want}", dense[i][j])
            })?;
        }
    }
    within(start.elapsed(), Duration::from_secs(1))?;
    Ok(format!("81 entries bit-exact in {:.1?}", start.elapsed()))
}

fn c2_disc_tv() -> Outcome {
    let disc = Phantom::disc([0.5, 0.5], 0.25, 1.0).map_err(|e| e.to_string())?;
    let mut values = Vec::new();
    for n in [32, 64, 128] {
        let f = render_phantom(&disc, n).map_err(|e| e.to_string())?;
        let tv = tv_norm(&f, &build_difference_operators(n).unwrap()).unwrap();
        check((tv - 2.0).abs() <= 1e-12, || format!("n = {n}: TV = {tv:.15}"))?;
        values.push(format!("n={n}: {tv}"));
    }
    Ok(values.join(", "))
}

fn c3_solver_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut worst_gap = f64::NEG_INFINITY;
    let mut worst_kkt = 0.0f64;
    let instances = 20;
    for trial in 0..instances {
        let n = rng.gen_range(2..=8);
        let geom = ScanGeometry::parallel(rng.gen_range(3..10), rng.gen_range(n..=2 * n), 1.5).unwrap();
        let a = assemble_system_matrix(&geom, n).unwrap();
        let ops = build_difference_operators(n).unwrap();
        let truth = support::random_image(&mut rng, n);
        let g = add_noise(
            &forward_project(&a, &truth).unwrap(),
            &NoiseSpec::new(0.02, trial as u64).unwrap(),
        )
        .unwrap();
        let alpha = 10f64.powf(rng.gen_range(-3.0..0.0));
        let qp = QpProblem::new(&a, &g, &ops, alpha).unwrap();
        let (f, report) = pdip_solve(&qp, &SolverConfig::default()).map_err(|e| e.to_string())?;
        let kkt = report.r_primal.max(report.r_dual).max(report.mu);
        worst_kkt = worst_kkt.max(kkt);
        check(kkt <= 1e-7, || format!("trial {trial}: KKT residual {kkt:.2e}"))?;
        let ours = support::tv_objective(a.csr(), &ops, g.data(), alpha, f.values());
        let (_, oracle) = support::subgradient_oracle(a.csr(), &ops, g.data(), alpha, 200_000);
        worst_gap = worst_gap.max(ours - oracle);
        check(ours <= oracle + 1e-6, || {
            format!("trial {trial}: objective {ours} above oracle {oracle}")
        })?;
    }
    within(start.elapsed(), Duration::from_secs(120))?;
    Ok(format!(
        "{instances} instances, max(ours - oracle) = {worst_gap:.2e}, max KKT residual = {worst_kkt:.2e}, {:.1?}",
        start.elapsed()
    ))
}

fn c4_analytic_qps() -> Outcome {
    let sym = DenseQp::new(
        vec![vec![1.0, 0.0], vec![0.0, 1.0]],
        vec![0.0, 0.0],
        vec![vec![1.0, 1.0]],
        vec![1.0],
    )
    .unwrap();
    let z = pdip_solve_qp(&sym, &SolverConfig::default())
        .map_err(|e| e.to_string())?
        .state
        .z;
    check(z.iter().all(|v| (v - 0.5).abs() <= 1e-9), || {
        format!("symmetric QP gave {z:?}")
    })?;
    let bound = DenseQp::new(vec![vec![0.0]], vec![1.0], vec![], vec![]).unwrap();
    let w = pdip_solve_qp(&bound, &SolverConfig::default())
        .map_err(|e| e.to_string())?
        .state
        .z;
    check(w[0].abs() <= 1e-9, || format!("bound-active QP gave {w:?}"))?;
    Ok(format!(
        "symmetric ({:.3e}, {:.3e}) off by {:.1e}; scalar {:.1e}",
        z[0],
        z[1],
        (z[0] - 0.5).abs().max((z[1] - 0.5).abs()),
        w[0]
    ))
}

fn c5_adjoint_and_chords() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let n = rng.gen_range(2..=24);
        let geom =
            ScanGeometry::parallel(rng.gen_range(1..40), rng.gen_range(1..3 * n), rng.gen_range(0.5..2.0)).unwrap();
        let a = assemble_system_matrix(&geom, n).unwrap();
        let f = tvtomo_core::grid::ImageGrid::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
        let s = Sinogram::new(
            geom.num_angles(),
            geom.num_detectors,
            (0..geom.num_rays()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        let af = forward_project(&a, &f).unwrap();
        let ats = adjoint_project(&a, &s).unwrap();
        let lhs: f64 = af.data().iter().zip(s.data()).map(|(x, y)| x * y).sum();
        let rhs: f64 = f.values().iter().zip(ats.values()).map(|(x, y)| x * y).sum();
        let rel = (lhs - rhs).abs() / (af.norm() * s.norm()).max(f64::MIN_POSITIVE);
        worst = worst.max(rel);
        check(rel <= 1e-10, || format!("adjoint mismatch {rel:.2e}"))?;
    }
    let mut worst_row = 0.0f64;
    let mut rows = 0;
    for n in [8, 64, 128] {
        let geom = ScanGeometry::default_for_resolution(n).unwrap();
        let a = assemble_system_matrix(&geom, n).unwrap();
        for (sum, ray) in a.row_sums().iter().zip(geom.rays()) {
            let d = (sum - chord_length(&ray).unwrap()).abs();
            worst_row = worst_row.max(d);
            rows += 1;
            check(d <= 1e-12, || format!("n = {n}: row sum off by {d:.2e}"))?;
        }
    }
    Ok(format!(
        "200 adjoint trials, worst {worst:.1e}; {rows} rows, worst chord error {worst_row:.1e}"
    ))
}

struct DiscSweep {
    geom: ScanGeometry,
    data: Sinogram,
    table: SweepTable,
}

fn disc_sweep() -> Result<DiscSweep, String> {
    let geom = ScanGeometry::default_for_resolution(64).unwrap();
    let data = Phantom::disc([0.5, 0.5], 0.25, 1.0).unwrap().project(&geom).unwrap();
    let table =
        run_sweep(&geom, &data, &log_alphas(-4, 6), &[32, 64], &SolverConfig::default()).map_err(|e| e.to_string())?;
    Ok(DiscSweep { geom, data, table })
}

fn format_column(table: &SweepTable, j: usize) -> String {
    (0..table.alphas().len())
        .map(|i| table.tv(i, j).map_or("-".into(), |v| format!("{v:.3}")))
        .collect::<Vec<_>>()
        .join(" ")
}

fn c6_monotone(sweep: &Result<DiscSweep, String>) -> Outcome {
    let sweep = sweep.as_ref().map_err(Clone::clone)?;
    let t = &sweep.table;
    check(t.is_complete(), || "sweep has failed cells".into())?;
    let v = t.monotonicity_violations(1e-6);
    check(v.is_empty(), || format!("TV increases at {v:?}"))?;
    Ok(format!(
        "n=32: [{}]; n=64: [{}]",
        format_column(t, 0),
        format_column(t, 1)
    ))
}

fn c7_resolution_convergence(sweep: &Result<DiscSweep, String>) -> Outcome {
    let start = Instant::now();
    let sweep = sweep.as_ref().map_err(Clone::clone)?;
    let t = &sweep.table;
    let (alpha, diag) = select_multiresolution(t, 0.05).map_err(|e| e.to_string())?;
    let k = diag.selected_index;
    check(k > 0, || {
        format!("selected the smallest alpha {alpha}; nothing below to compare")
    })?;
    let a128 = assemble_system_matrix(&sweep.geom, 128).unwrap();
    let mut spreads = Vec::new();
    for i in [k, k - 1] {
        let (f, report) =
            reconstruct(&a128, &sweep.data, t.alphas()[i], &SolverConfig::default()).map_err(|e| e.to_string())?;
        check(report.termination == Termination::Converged, || {
            format!("n = 128 at alpha = {} did not converge", t.alphas()[i])
        })?;
        let tv128 = tv_norm(&f, &build_difference_operators(128).unwrap()).unwrap();
        let row = [t.tv(i, 0).unwrap(), t.tv(i, 1).unwrap(), tv128];
        spreads.push((t.alphas()[i], row, relative_spread(&row)));
    }
    let (a_sel, row_sel, s_sel) = spreads[0];
    let (a_below, row_below, s_below) = spreads[1];
    let detail = format!(
        "alpha* = {a_sel:e}: TV {row_sel:.4?} spread {s_sel:.4}; alpha = {a_below:e}: TV {row_below:.4?} spread {s_below:.4}; {:.1?}",
        start.elapsed()
    );
    check(s_sel <= 0.05, || format!("spread at alpha* above 5%: {detail}"))?;
    check(s_below > s_sel, || format!("spread below alpha* not larger: {detail}"))?;
    within(start.elapsed(), Duration::from_secs(600))?;
    Ok(detail)
}

const LOW_NOISE: [[f64; 3]; 11] = [
    [1.51, 2.29, 3.64],
    [1.51, 2.29, 3.46],
    [1.50, 2.23, 2.97],
    [1.43, 1.85, 1.93],
    [1.08, 1.11, 1.11],
    [0.78, 0.78, 0.77],
    [0.48, 0.48, 0.48],
    [0.12, 0.12, 0.12],
    [0.04, 0.04, 0.04],
    [0.0, 0.0, 0.0],
    [0.0, 0.0, 0.0],
];
const FIVE_PERCENT: [[f64; 3]; 11] = [
    [2.42, 5.05, 8.71],
    [2.43, 5.05, 8.59],
    [2.42, 5.01, 8.59],
    [2.37, 4.83, 8.16],
    [1.99, 3.50, 5.12],
    [0.86, 0.86, 0.88],
    [0.48, 0.48, 0.48],
    [0.12, 0.12, 0.12],
    [0.04, 0.04, 0.04],
    [0.0, 0.0, 0.0],
    [0.0, 0.0, 0.0],
];

fn reference_table(rows: &[[f64; 3]; 11]) -> SweepTable {
    let rows: Vec<Vec<f64>> = rows.iter().map(|r| r.to_vec()).collect();
    SweepTable::from_tv_rows(log_alphas(-4, 6), vec![128, 192, 256], &rows).unwrap()
}

fn c8_reference_replay() -> Outcome {
    let (low, _) = select_multiresolution(&reference_table(&LOW_NOISE), 0.05).map_err(|e| e.to_string())?;
    let (high, _) = select_multiresolution(&reference_table(&FIVE_PERCENT), 0.05).map_err(|e| e.to_string())?;
    check(low == 1.0 && high == 10.0, || format!("selected {low} and {high}"))?;
    Ok(format!("low noise -> {low:e}, 5% noise -> {high:e}"))
}

fn battery() -> Vec<(&'static str, Phantom)> {
    vec![
        ("offset disc", Phantom::disc([0.42, 0.55], 0.22, 1.0).unwrap()),
        (
            "nested shells",
            Phantom::nested_shells([0.5, 0.5], vec![0.35, 0.2, 0.08], vec![0.5, 1.0, 0.2]).unwrap(),
        ),
        (
            "two shapes",
            Phantom::from_shapes(vec![
                PhantomKind::Polygon {
                    vertices: vec![[0.2, 0.2], [0.6, 0.25], [0.45, 0.6]],
                    value: 1.0,
                },
                PhantomKind::Disc {
                    center: [0.7, 0.7],
                    radius: 0.12,
                    value: 0.6,
                },
            ])
            .unwrap(),
        ),
    ]
}

fn c9_noise_monotonicity() -> Outcome {
    let start = Instant::now();
    let geom = ScanGeometry::default_for_resolution(32).unwrap();
    let alphas = log_alphas(-4, 6);
    let mut lines = Vec::new();
    for (name, phantom) in battery() {
        let clean = phantom.project(&geom).unwrap();
        let noisy = add_noise(&clean, &NoiseSpec::new(0.05, 7).unwrap()).unwrap();
        let mut chosen = Vec::new();
        for g in [&clean, &noisy] {
            let table =
                run_sweep(&geom, g, &alphas, &[16, 24, 32], &SolverConfig::default()).map_err(|e| e.to_string())?;
            chosen.push(
                select_multiresolution(&table, 0.05)
                    .map_err(|e| format!("{name}: {e}"))?
                    .0,
            );
        }
        check(chosen[1] >= chosen[0], || {
            format!(
                "{name}: 5% noise selects {:e} below noiseless {:e}",
                chosen[1], chosen[0]
            )
        })?;
        lines.push(format!("{name}: {:e} -> {:e}", chosen[0], chosen[1]));
    }
    Ok(format!("{}; {:.1?}", lines.join(", "), start.elapsed()))
}

fn c10_scurve() -> Outcome {
    let t = reference_table(&LOW_NOISE);
    // Exact hits at every distinct tabulated value of the n = 256 column.
    for (i, row) in LOW_NOISE.iter().enumerate().take(9) {
        let (a, _) =
            select_scurve(&t, &SCurvePrior::from_value(row[2], 256).unwrap(), 256).map_err(|e| e.to_string())?;
        check(a == t.alphas()[i], || format!("exact hit {} returned {a}", row[2]))?;
    }
    // Bracketing by hand: 0.76 lies between 0.77 at 1e1 and 0.48 at 1e2.
    let (a, _) = select_scurve(&t, &SCurvePrior::from_value(0.76, 256).unwrap(), 256).map_err(|e| e.to_string())?;
    let expect = 10f64.powf(1.0 + (0.77 - 0.76) / (0.77 - 0.48));
    check((a - expect).abs() <= 1e-10 * expect, || format!("{a} vs {expect}"))?;
    // And between 1.93 at 1e-1 and 1.11 at 1e0.
    let (b, _) = select_scurve(&t, &SCurvePrior::from_value(1.5, 256).unwrap(), 256).map_err(|e| e.to_string())?;
    let expect_b = 10f64.powf(-1.0 + (1.93 - 1.5) / (1.93 - 1.11));
    check((b - expect_b).abs() <= 1e-10 * expect_b, || {
        format!("{b} vs {expect_b}")
    })?;
    Ok(format!("9 exact hits; 0.76 -> {a:.6}, 1.5 -> {b:.6}"))
}

/// Curvature of the interpolating quadratic through three samples.
fn fitted_curvature(t: [f64; 3], x: [f64; 3], y: [f64; 3]) -> f64 {
    let derivs = |v: [f64; 3]| {
        // Lagrange form of the quadratic's derivatives at t[1].
        let (t0, t1, t2) = (t[0], t[1], t[2]);
        let d1 = v[0] * (t1 - t2) / ((t0 - t1) * (t0 - t2))
            + v[1] * (2.0 * t1 - t0 - t2) / ((t1 - t0) * (t1 - t2))
            + v[2] * (t1 - t0) / ((t2 - t0) * (t2 - t1));
        let d2 =
            2.0 * (v[0] / ((t0 - t1) * (t0 - t2)) + v[1] / ((t1 - t0) * (t1 - t2)) + v[2] / ((t2 - t0) * (t2 - t1)));
        (d1, d2)
    };
    let (x1, x2) = derivs(x);
    let (y1, y2) = derivs(y);
    (x1 * y2 - y1 * x2) / (x1 * x1 + y1 * y1).powf(1.5)
}

fn c11_lcurve() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let curves = 50;
    for trial in 0..curves {
        let down = rng.gen_range(3..7);
        let across = rng.gen_range(3..7);
        let mut log_alpha = vec![0.0];
        for _ in 1..down + across + 1 {
            let last = *log_alpha.last().unwrap();
            log_alpha.push(last + rng.gen_range(0.5..1.5));
        }
        // Steep vertical leg to the corner, then a shallow horizontal leg,
        // with small wiggles.
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for k in 0..=down + across {
            let (x, y) = if k <= down {
                (0.02 * k as f64, (down - k) as f64 * rng.gen_range(0.8..1.2))
            } else {
                ((k - down) as f64 * rng.gen_range(0.8..1.2), -0.02 * (k - down) as f64)
            };
            xs.push(x + rng.gen_range(-0.01..0.01));
            ys.push(y + rng.gen_range(-0.01..0.01));
        }
        // Keep the vertical leg monotone.
        for k in 1..=down {
            if ys[k] >= ys[k - 1] {
                ys[k] = ys[k - 1] - 0.5;
            }
        }
        let alphas: Vec<f64> = log_alpha.iter().map(|l| 10f64.powf(*l)).collect();
        let cells = xs
            .iter()
            .zip(&ys)
            .map(|(x, y)| SweepCell::solved(10f64.powf(*y), 10f64.powf(*x), 1, Termination::Converged))
            .collect();
        let table = SweepTable::new(alphas.clone(), vec![16], cells).unwrap();
        let (got, _) = select_lcurve(&table, 16).map_err(|e| e.to_string())?;

        let tv: Vec<f64> = ys.iter().map(|y| 10f64.powf(*y).log10()).collect();
        let res: Vec<f64> = xs.iter().map(|x| 10f64.powf(*x).log10()).collect();
        let la: Vec<f64> = alphas.iter().map(|a| a.log10()).collect();
        let best = (1..alphas.len() - 1)
            .max_by(|&a, &b| {
                let ka = fitted_curvature(
                    [la[a - 1], la[a], la[a + 1]],
                    [res[a - 1], res[a], res[a + 1]],
                    [tv[a - 1], tv[a], tv[a + 1]],
                );
                let kb = fitted_curvature(
                    [la[b - 1], la[b], la[b + 1]],
                    [res[b - 1], res[b], res[b + 1]],
                    [tv[b - 1], tv[b], tv[b + 1]],
                );
                ka.total_cmp(&kb)
            })
            .unwrap();
        check(got == alphas[best], || {
            format!("curve {trial}: selected {got:e}, oracle {:e}", alphas[best])
        })?;
    }
    Ok(format!(
        "{curves} synthetic L-curves, selection equals the exhaustive oracle"
    ))
}

fn c12_imported_data() -> Outcome {
    // The comparison against measured-object numbers needs an external
    // dataset; this exercises the import path those data would take.
    let geom = ScanGeometry::default_for_resolution(16).unwrap();
    let g = Phantom::disc([0.5, 0.5], 0.25, 1.0).unwrap().project(&geom).unwrap();
    let g = add_noise(&g, &NoiseSpec::new(0.01, 3).unwrap()).unwrap();
    let imported = decode_sinogram(&encode_sinogram(&g)).map_err(|e| e.to_string())?;
    check(imported == g, || "sinogram import changed the data".into())?;
    let table = run_sweep(
        &geom,
        &imported,
        &log_alphas(-3, 4),
        &[8, 12, 16],
        &SolverConfig::default(),
    )
    .map_err(|e| e.to_string())?;
    let (alpha, _) = select_multiresolution(&table, 0.05).map_err(|e| e.to_string())?;
    Ok(format!(
        "imported sinogram selects alpha = {alpha:e}; comparison with measured-object values is manual (external data)"
    ))
}

fn main() -> ExitCode {
    let mut failed = 0;
    let mut report = |id: &str, name: &str, f: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {id:>3}  {name} [{secs:.1}s]: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {id:>3}  {name} [{secs:.1}s]: {detail}");
            }
        }
    };

    report("1", "difference operator layout at n = 3", &mut c1_difference_layout);
    report("2", "pixelated disc has TV 2 at n = 32, 64, 128", &mut c2_disc_tv);
    report(
        "3",
        "solver matches projected-subgradient oracle",
        &mut c3_solver_oracle,
    );
    report("4", "analytic quadratic programs", &mut c4_analytic_qps);
    report(
        "5",
        "adjoint identity and chord-length row sums",
        &mut c5_adjoint_and_chords,
    );
    let sweep = disc_sweep();
    report("6", "TV non-increasing in alpha on the disc sweep", &mut || {
        c6_monotone(&sweep)
    });
    report(
        "7",
        "TV spread across n = 32, 64, 128 at the selected alpha",
        &mut || c7_resolution_convergence(&sweep),
    );
    report("8", "reference table selects 1 and 10", &mut c8_reference_replay);
    report("9", "noise never lowers the selected alpha", &mut c9_noise_monotonicity);
    report("10", "S-curve exact hits and interpolation", &mut c10_scurve);
    report(
        "11",
        "L-curve corner equals exhaustive curvature oracle",
        &mut c11_lcurve,
    );
    report(
        "12",
        "imported sinogram through the selection pipeline",
        &mut c12_imported_data,
    );

    if failed == 0 {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failed} criteria failed");
        ExitCode::FAILURE
    }
}

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use tvtomo_core::grid::{build_difference_operators, project_average, tv_norm, upsample_constant, ImageGrid};
use tvtomo_core::io::formats::{
    convergence_csv, encode_image, encode_pgm, encode_sinogram, format_phantom, lcurve_csv, load_image, load_sinogram,
    multires_csv, parse_phantom, parse_sinogram_csv, parse_sweep_csv, scurve_csv, sinogram_csv, sweep_csv,
};
use tvtomo_core::io::{add_noise, render_phantom, NoiseSpec, Phantom};
use tvtomo_core::qp::{reconstruct, ConvergenceReport, Termination};
use tvtomo_core::select::{
    estimate_s_hat, relative_spread, run_sweep, select_lcurve, select_multiresolution, select_scurve, SweepTable,
};
use tvtomo_core::xray::{assemble_system_matrix, forward_project, BeamMode, ScanGeometry, Sinogram, SystemMatrix};
use tvtomo_core::Error;

use crate::config::{Method, RunConfig};
use crate::manifest::Manifest;
use crate::{
    Cli, Command, Context, Failure, NoiseArgs, PhantomArgs, ProjectArgs, ReconstructArgs, ReportArgs, SelectArgs,
    ShapeKind, SweepArgs,
};

type Outcome = Result<(), Failure>;

pub fn run(cli: &Cli, argv: &[String]) -> Outcome {
    let mut cfg = load_config(cli)?;
    let name = cli.command.name();
    let dir = run_dir(cli, &cfg, name);
    fs::create_dir_all(&dir).ctx(|| format!("creating run directory {}", dir.display()))?;
    let mut m = Manifest::new(&dir, name, argv);
    m.set("run_dir", dir.display());
    let outcome = match &cli.command {
        Command::Phantom(a) => phantom(a, &mut cfg, &mut m),
        Command::Project(a) => project(a, &mut cfg, &mut m),
        Command::Noise(a) => noise(a, &mut cfg, &mut m),
        Command::Reconstruct(a) => reconstruct_cmd(a, &mut cfg, &mut m),
        Command::Sweep(a) => sweep(a, &mut cfg, &mut m),
        Command::Select(a) => select(a, &mut cfg, &mut m),
        Command::Report(a) => report(a, &mut cfg, &mut m),
    };
    // Failed runs keep a manifest too, so the failure can be replayed.
    if let Err(e) = &outcome {
        m.set("result.error", e.to_string().replace('\n', " "));
        m.set("result.exit_code", e.exit_code());
    }
    let path = m.finish(&cfg.to_text()).ctx(|| "writing manifest".into())?;
    info!("wrote {}", path.display());
    outcome
}

fn load_config(cli: &Cli) -> Result<RunConfig, Failure> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &cli.config {
        let text = fs::read_to_string(path).ctx(|| format!("reading config {}", path.display()))?;
        cfg.apply_text(&text).ctx(|| format!("config {}", path.display()))?;
    }
    for s in &cli.set {
        let (k, v) = s
            .split_once('=')
            .ok_or_else(|| Failure::Usage(format!("--set expects KEY=VALUE, got '{s}'")))?;
        cfg.set(0, k.len() + 1, k.trim(), v.trim())
            .ctx(|| format!("--set {s}"))?;
    }
    Ok(cfg)
}

fn validate(cfg: &RunConfig) -> Outcome {
    cfg.validate().ctx(|| "configuration".into())
}

fn run_dir(cli: &Cli, cfg: &RunConfig, name: &str) -> PathBuf {
    if let Some(out) = cli.out.as_ref().or(cfg.out.as_ref()) {
        return out.clone();
    }
    match std::env::var_os("TVTOMO_OUT") {
        Some(base) if !base.is_empty() => PathBuf::from(base).join(name),
        _ => PathBuf::from("tvtomo-out").join(name),
    }
}

fn read_sinogram(path: &Path, m: &mut Manifest) -> Result<Sinogram, Failure> {
    let context = || format!("reading sinogram {}", path.display());
    let s = if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        let text = fs::read_to_string(path).ctx(context)?;
        parse_sinogram_csv(&text).ctx(context)?
    } else {
        load_sinogram(path).ctx(context)?
    };
    m.input("sinogram", path).ctx(context)?;
    Ok(s)
}

fn read_image(key: &str, path: &Path, m: &mut Manifest) -> Result<ImageGrid, Failure> {
    let context = || format!("reading image {}", path.display());
    let f = load_image(path).ctx(context)?;
    m.input(key, path).ctx(context)?;
    Ok(f)
}

fn read_sweep(path: &Path, m: &mut Manifest) -> Result<SweepTable, Failure> {
    let context = || format!("reading sweep table {}", path.display());
    let text = fs::read_to_string(path).ctx(context)?;
    let table = parse_sweep_csv(&text).ctx(context)?;
    m.input("sweep", path).ctx(context)?;
    Ok(table)
}

fn write(m: &mut Manifest, key: &str, file: &str, bytes: &[u8]) -> Outcome {
    m.output(key, file, bytes).map(|_| ()).ctx(|| format!("writing {file}"))
}

fn write_image(m: &mut Manifest, stem: &str, f: &ImageGrid) -> Outcome {
    write(m, stem, &format!("{stem}.img"), &encode_image(f))?;
    write_pgm(m, stem, f)
}

/// Grey levels span `[min(0, min f), max f]`.
fn write_pgm(m: &mut Manifest, stem: &str, f: &ImageGrid) -> Outcome {
    let lo = f.min().min(0.0);
    let hi = if f.max() > lo { f.max() } else { lo + 1.0 };
    let pgm = encode_pgm(f, lo, hi).ctx(|| format!("rendering {stem}.pgm"))?;
    write(m, &format!("{stem}_pgm"), &format!("{stem}.pgm"), pgm.as_bytes())
}

fn write_sinogram(m: &mut Manifest, s: &Sinogram) -> Outcome {
    write(m, "sinogram", "sinogram.sino", &encode_sinogram(s))?;
    write(m, "sinogram_csv", "sinogram.csv", sinogram_csv(s).as_bytes())
}

fn record_geometry(m: &mut Manifest, geom: &ScanGeometry) {
    match geom.mode {
        BeamMode::Parallel => m.set("geometry.mode", "parallel"),
        BeamMode::Fan {
            source_radius,
            detector_radius,
        } => {
            m.set("geometry.mode", "fan");
            m.set("geometry.source_radius", format!("{source_radius:?}"));
            m.set("geometry.detector_radius", format!("{detector_radius:?}"));
        }
    }
    m.set("geometry.angles", geom.num_angles());
    m.set("geometry.detectors", geom.num_detectors);
    m.set("geometry.extent", format!("{:?}", geom.detector_extent));
}

fn system(geom: &ScanGeometry, n: usize) -> Result<SystemMatrix, Failure> {
    assemble_system_matrix(geom, n).ctx(|| format!("assembling the system matrix at n = {n}"))
}

fn usage<T>(message: impl Into<String>) -> Result<T, Failure> {
    Err(Failure::Usage(message.into()))
}

fn phantom(a: &PhantomArgs, cfg: &mut RunConfig, m: &mut Manifest) -> Outcome {
    validate(cfg)?;
    let p = match (&a.file, a.kind) {
        (Some(path), _) => {
            let context = || format!("reading phantom {}", path.display());
            let text = fs::read_to_string(path).ctx(context)?;
            m.input("phantom", path).ctx(context)?;
            parse_phantom(&text).ctx(context)?
        }
        (None, Some(kind)) => {
            let center = [a.cx, a.cy];
            let built = match kind {
                ShapeKind::Disc => {
                    let Some(r) = a.r else {
                        return usage("--kind disc requires --r");
                    };
                    Phantom::disc(center, r, a.value)
                }
                ShapeKind::Shells => {
                    if a.radii.is_empty() || a.radii.len() != a.values.len() {
                        return usage("--kind shells requires --radii and --values of equal length");
                    }
                    Phantom::nested_shells(center, a.radii.clone(), a.values.clone())
                }
                ShapeKind::Polygon => {
                    if a.x.len() < 3 || a.x.len() != a.y.len() {
                        return usage("--kind polygon requires at least three --x and --y coordinates");
                    }
                    Phantom::polygon(a.x.iter().zip(&a.y).map(|(&x, &y)| [x, y]).collect(), a.value)
                }
            };
            built.ctx(|| "phantom".into())?
        }
        (None, None) => return usage("phantom requires --kind or --file"),
    };
    let n = a.n.unwrap_or(cfg.display_resolution());
    let f = render_phantom(&p, n).ctx(|| format!("rendering phantom at n = {n}"))?;
    let tv = tv_norm(
        &f,
        &build_difference_operators(n).ctx(|| "difference operators".into())?,
    )
    .ctx(|| "tv norm".into())?;
    write(m, "phantom", "phantom.txt", format_phantom(&p).as_bytes())?;
    write_image(m, "phantom", &f)?;
    m.set("n", n);
    m.set("result.tv_norm", format!("{tv:?}"));
    if let Some(exact) = p.analytic_tv() {
        m.set("result.analytic_tv", format!("{exact:?}"));
    }
    println!("tv_norm {tv:?}");
    Ok(())
}

fn project(a: &ProjectArgs, cfg: &mut RunConfig, m: &mut Manifest) -> Outcome {
    validate(cfg)?;
    let (geom, s) = if let Some(path) = &a.phantom {
        let context = || format!("reading phantom {}", path.display());
        let text = fs::read_to_string(path).ctx(context)?;
        let p = parse_phantom(&text).ctx(context)?;
        m.input("phantom", path).ctx(context)?;
        let n = a.n.unwrap_or(cfg.display_resolution());
        let geom = cfg.geometry.for_resolution(n).ctx(|| "geometry".into())?;
        let s = p.project(&geom).ctx(|| "projecting phantom".into())?;
        (geom, s)
    } else if let Some(path) = &a.image {
        let f = read_image("image", path, m)?;
        let geom = cfg
            .geometry
            .for_resolution(a.n.unwrap_or(f.n()))
            .ctx(|| "geometry".into())?;
        let s = forward_project(&system(&geom, f.n())?, &f).ctx(|| "projecting image".into())?;
        (geom, s)
    } else {
        return usage("project requires --phantom or --image");
    };
    record_geometry(m, &geom);
    write_sinogram(m, &s)
}

fn noise(a: &NoiseArgs, cfg: &mut RunConfig, m: &mut Manifest) -> Outcome {
    if let Some(level) = a.level {
        cfg.noise_level = level;
    }
    if let Some(seed) = a.seed {
        cfg.noise_seed = seed;
    }
    validate(cfg)?;
    let clean = read_sinogram(&a.sinogram, m)?;
    let spec = NoiseSpec::new(cfg.noise_level, cfg.noise_seed).ctx(|| "noise".into())?;
    let noisy = add_noise(&clean, &spec).ctx(|| "adding noise".into())?;
    let meta = noisy.noise.expect("noise metadata");
    m.set("noise.level", format!("{:?}", meta.relative_level));
    m.set("noise.seed", meta.seed);
    m.set("noise.sigma", format!("{:?}", meta.sigma));
    write_sinogram(m, &noisy)
}

fn residual_norm(a: &SystemMatrix, f: &ImageGrid, g: &Sinogram) -> Result<f64, Failure> {
    let af = forward_project(a, f).ctx(|| "residual".into())?;
    Ok(af
        .data()
        .iter()
        .zip(g.data())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt())
}

fn record_report(m: &mut Manifest, r: &ConvergenceReport) {
    m.set("result.termination", r.termination.as_str());
    m.set("result.iterations", r.iterations);
    m.set("result.mu", format!("{:e}", r.mu));
    m.set("result.rel_primal", format!("{:e}", r.rel_primal));
    m.set("result.rel_dual", format!("{:e}", r.rel_dual));
}

fn reconstruct_cmd(a: &ReconstructArgs, cfg: &mut RunConfig, m: &mut Manifest) -> Outcome {
    validate(cfg)?;
    let g = read_sinogram(&a.sinogram, m)?;
    let geom = cfg.geometry.for_sinogram(&g).ctx(|| "geometry".into())?;
    record_geometry(m, &geom);
    let n = a.n.unwrap_or(cfg.display_resolution());
    let sys = system(&geom, n)?;
    m.set("alpha", format!("{:?}", a.alpha));
    m.set("n", n);
    let context = || format!("reconstructing at alpha = {:e}, n = {n}", a.alpha);
    let (f, report) = match reconstruct(&sys, &g, a.alpha, &cfg.solver) {
        Ok(ok) => ok,
        Err(Error::SolverFailure { reason, report }) => {
            // Keep the iteration history for diagnosis.
            write(m, "convergence", "convergence.csv", convergence_csv(&report).as_bytes())?;
            record_report(m, &report);
            return Err(Error::SolverFailure { reason, report }).ctx(context);
        }
        Err(e) => return Err(e).ctx(context),
    };
    let tv = tv_norm(
        &f,
        &build_difference_operators(n).ctx(|| "difference operators".into())?,
    )
    .ctx(|| "tv norm".into())?;
    let res = residual_norm(&sys, &f, &g)?;
    write_image(m, "image", &f)?;
    write(m, "convergence", "convergence.csv", convergence_csv(&report).as_bytes())?;
    record_report(m, &report);
    m.set("result.tv_norm", format!("{tv:?}"));
    m.set("result.residual", format!("{res:?}"));
    println!("tv_norm {tv:?} residual {res:?}");
    if report.termination != Termination::Converged {
        return Err(Error::SolverFailure {
            reason: format!("stopped without converging ({})", report.termination.as_str()),
            report: Box::new(report),
        })
        .ctx(context);
    }
    Ok(())
}

fn sweep(a: &SweepArgs, cfg: &mut RunConfig, m: &mut Manifest) -> Outcome {
    if !a.alphas.is_empty() {
        cfg.alphas = a.alphas.clone();
    }
    if !a.resolutions.is_empty() {
        cfg.resolutions = a.resolutions.clone();
    }
    validate(cfg)?;
    let g = read_sinogram(&a.sinogram, m)?;
    let geom = cfg.geometry.for_sinogram(&g).ctx(|| "geometry".into())?;
    record_geometry(m, &geom);
    let go = || run_sweep(&geom, &g, &cfg.alphas, &cfg.resolutions, &cfg.solver).ctx(|| "sweep".into());
    let table = match a.jobs {
        Some(0) => return usage("--jobs must be positive"),
        Some(jobs) => {
            m.set("jobs", jobs);
            rayon::ThreadPoolBuilder::new()
                .num_threads(jobs)
                .build()
                .map_err(|e| Failure::Usage(format!("cannot start {jobs} workers: {e}")))?
                .install(go)?
        }
        None => go()?,
    };
    let failed = (0..table.alphas().len())
        .flat_map(|i| (0..table.resolutions().len()).map(move |j| (i, j)))
        .filter(|&(i, j)| table.tv(i, j).is_none())
        .count();
    if failed > 0 {
        warn!("{failed} sweep cells failed to converge");
    }
    m.set("result.failed_cells", failed);
    write(m, "sweep", "sweep.csv", sweep_csv(&table).as_bytes())
}

fn resample(f: ImageGrid, n: usize) -> tvtomo_core::Result<ImageGrid> {
    if f.n() == n {
        Ok(f)
    } else if f.n() > n {
        project_average(&f, n)
    } else {
        upsample_constant(&f, n)
    }
}

fn select(a: &SelectArgs, cfg: &mut RunConfig, m: &mut Manifest) -> Outcome {
    if let Some(method) = a.method {
        cfg.method = method.into();
    }
    if let Some(tol) = a.tol {
        cfg.stability_tol = tol;
    }
    validate(cfg)?;
    if cfg.method == Method::Scurve && (a.prior.is_empty() || a.sinogram.is_none()) {
        return usage("select --method scurve requires at least one --prior image and --sinogram");
    }
    let table = read_sweep(&a.sweep, m)?;
    let n =
        a.n.unwrap_or(*table.resolutions().last().expect("table has a resolution"));
    m.set("select.method", cfg.method.as_str());
    let context = || format!("{} selection", cfg.method.as_str());
    let alpha = match cfg.method {
        Method::Multires => {
            m.set("select.tol", format!("{:?}", cfg.stability_tol));
            let (alpha, d) = select_multiresolution(&table, cfg.stability_tol).ctx(context)?;
            write(
                m,
                "diagnostics",
                "multires.csv",
                multires_csv(table.alphas(), &d).as_bytes(),
            )?;
            alpha
        }
        Method::Scurve => {
            let g = read_sinogram(a.sinogram.as_ref().expect("checked above"), m)?;
            let geom = cfg.geometry.for_sinogram(&g).ctx(|| "geometry".into())?;
            let sys = system(&geom, n)?;
            let mut priors = Vec::new();
            for (k, path) in a.prior.iter().enumerate() {
                let f = read_image(&format!("prior{k}"), path, m)?;
                priors.push(resample(f, n).ctx(|| format!("resampling prior {} to n = {n}", path.display()))?);
            }
            let prior = estimate_s_hat(&priors, &sys, &g).ctx(context)?;
            m.set("result.s_hat", format!("{:?}", prior.s_hat));
            let (alpha, d) = select_scurve(&table, &prior, n).ctx(context)?;
            write(m, "diagnostics", "scurve.csv", scurve_csv(&d).as_bytes())?;
            alpha
        }
        Method::Lcurve => {
            let (alpha, d) = select_lcurve(&table, n).ctx(context)?;
            if !d.corner_found {
                warn!("no L-curve sample bends towards the origin; using the largest |curvature|");
            }
            write(m, "diagnostics", "lcurve.csv", lcurve_csv(&d).as_bytes())?;
            alpha
        }
    };
    m.set("n", n);
    m.set("result.alpha", format!("{alpha:?}"));
    let text = format!("method={}\nalpha={alpha:?}\n", cfg.method.as_str());
    write(m, "selection", "selection.txt", text.as_bytes())?;
    println!("{alpha:?}");
    Ok(())
}

fn report(a: &ReportArgs, cfg: &mut RunConfig, m: &mut Manifest) -> Outcome {
    if let Some(tol) = a.tol {
        cfg.stability_tol = tol;
    }
    validate(cfg)?;
    let table = read_sweep(&a.sweep, m)?;
    let res = table.resolutions();
    let mut csv = String::from("alpha");
    for n in res {
        let _ = write!(csv, ",tv_n{n}");
    }
    csv.push_str(",spread,stable,selected\n");

    let mut selected = None;
    let mut rows = Vec::new();
    for (i, alpha) in table.alphas().iter().enumerate() {
        let tvs: Option<Vec<f64>> = (0..res.len()).map(|j| table.tv(i, j)).collect();
        let spread = tvs.as_deref().map(relative_spread);
        let stable = spread.is_some_and(|s| s <= cfg.stability_tol);
        if stable && selected.is_none() {
            selected = Some(i);
        }
        rows.push((alpha, i, spread, stable));
    }
    for (alpha, i, spread, stable) in rows {
        let _ = write!(csv, "{alpha:?}");
        for j in 0..res.len() {
            match table.tv(i, j) {
                Some(v) => {
                    let _ = write!(csv, ",{v:?}");
                }
                None => csv.push(','),
            }
        }
        let spread = spread.map(|s| format!("{s:?}")).unwrap_or_default();
        let _ = writeln!(csv, ",{spread},{stable},{}", selected == Some(i));
    }
    write(m, "report", "report.csv", csv.as_bytes())?;
    m.set("select.tol", format!("{:?}", cfg.stability_tol));

    for (k, path) in a.image.iter().enumerate() {
        let f = read_image(&format!("image{k}"), path, m)?;
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("image");
        write_pgm(m, &format!("{stem}_{k}"), &f)?;
    }

    match selected {
        Some(i) => {
            let alpha = table.alphas()[i];
            m.set("result.alpha", format!("{alpha:?}"));
            println!("{alpha:?}");
            if let Some(path) = &a.sinogram {
                let g = read_sinogram(path, m)?;
                let geom = cfg.geometry.for_sinogram(&g).ctx(|| "geometry".into())?;
                let n = *res.last().expect("table has a resolution");
                let sys = system(&geom, n)?;
                let (f, r) = reconstruct(&sys, &g, alpha, &cfg.solver)
                    .ctx(|| format!("reconstructing at alpha = {alpha:e}, n = {n}"))?;
                record_report(m, &r);
                if r.termination != Termination::Converged {
                    warn!("selected reconstruction stopped with {}", r.termination.as_str());
                }
                write_image(m, "selected", &f)?;
            }
        }
        None => warn!("no alpha is stable at tolerance {}", cfg.stability_tol),
    }
    Ok(())
}

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn tvtomo(cwd: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tvtomo"))
        .args(args)
        .current_dir(cwd)
        .env_remove("TVTOMO_OUT")
        .env_remove("RUST_LOG")
        .output()
        .unwrap()
}

fn ok(cwd: &Path, args: &[&str]) -> String {
    let out = tvtomo(cwd, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn manifest(dir: &Path) -> Vec<(String, String)> {
    fs::read_to_string(dir.join("manifest.txt"))
        .unwrap()
        .lines()
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

fn get(m: &[(String, String)], key: &str) -> String {
    m.iter()
        .find(|(k, _)| k == key)
        .unwrap_or_else(|| panic!("{key} missing from manifest"))
        .1
        .clone()
}

/// Noisy sinogram of a small two-disc phantom, sized for n = 16.
fn noisy_sinogram(tmp: &Path) -> PathBuf {
    fs::write(
        tmp.join("phantom.txt"),
        "kind=disc\ncx=0.4\ncy=0.45\nr=0.2\nvalue=1\nkind=disc\ncx=0.72\ncy=0.7\nr=0.1\nvalue=0.5\n",
    )
    .unwrap();
    ok(
        tmp,
        &["project", "--phantom", "phantom.txt", "--n", "16", "--out", "proj"],
    );
    ok(
        tmp,
        &[
            "noise",
            "--sinogram",
            "proj/sinogram.sino",
            "--level",
            "0.05",
            "--seed",
            "3",
            "--out",
            "noisy",
        ],
    );
    tmp.join("noisy/sinogram.sino")
}

const SWEEP_ARGS: [&str; 4] = ["--alphas", "1e-3,1e-2,1e-1,1,10,100,1000", "--resolutions", "8,16"];

#[test]
fn disc_phantom_records_tv_two() {
    let tmp = TempDir::new().unwrap();
    let stdout = ok(
        tmp.path(),
        &["phantom", "--kind", "disc", "--r", "0.25", "--n", "64", "--out", "run"],
    );
    assert_eq!(stdout.trim(), "tv_norm 2.0");
    let m = manifest(&tmp.path().join("run"));
    assert_eq!(get(&m, "result.tv_norm"), "2.0");
    assert_eq!(get(&m, "result.analytic_tv"), "2.0");
    assert_eq!(get(&m, "command"), "phantom");
    for f in ["phantom.txt", "phantom.img", "phantom.pgm", "config.txt"] {
        assert!(tmp.path().join("run").join(f).exists(), "{f}");
    }
    assert!(fs::read_to_string(tmp.path().join("run/phantom.pgm"))
        .unwrap()
        .starts_with("P2\n64 64\n255\n"));
}

#[test]
fn scurve_without_prior_is_a_usage_error() {
    let tmp = TempDir::new().unwrap();
    fs::write(tmp.path().join("sweep.csv"), "alpha,n,tv,residual,iterations,status\n").unwrap();
    let out = tvtomo(tmp.path(), &["select", "--sweep", "sweep.csv", "--method", "scurve"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("--prior"));
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let tmp = TempDir::new().unwrap();
    let out = tvtomo(tmp.path(), &["phantom", "--kind", "disc", "--radius", "0.2"]);
    assert_eq!(code(&out), 2);
}

/// Writes a sweep table with the given TV rows at n = 128, 192, 256.
fn table_csv(path: &Path, rows: &[[f64; 3]]) {
    let mut text = String::from("alpha,n,tv,residual,iterations,status\n");
    for (i, row) in rows.iter().enumerate() {
        for (n, tv) in [128, 192, 256].iter().zip(row) {
            text.push_str(&format!("1e{},{n},{tv},1.0,20,converged\n", i as i32 - 4));
        }
    }
    fs::write(path, text).unwrap();
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

#[test]
fn multires_on_tabulated_sweep_prints_smallest_stable_alpha() {
    let tmp = TempDir::new().unwrap();
    table_csv(&tmp.path().join("sweep.csv"), &LOW_NOISE);
    let stdout = ok(
        tmp.path(),
        &[
            "select",
            "--sweep",
            "sweep.csv",
            "--method",
            "multires",
            "--tol",
            "0.05",
            "--out",
            "sel",
        ],
    );
    assert_eq!(stdout.trim(), "1.0");
    let diag = fs::read_to_string(tmp.path().join("sel/multires.csv")).unwrap();
    assert!(
        diag.lines()
            .any(|l| l.starts_with("1.0,0.0272") && l.ends_with(",true,true")),
        "{diag}"
    );

    ok(tmp.path(), &["report", "--sweep", "sweep.csv", "--out", "rep"]);
    let report = fs::read_to_string(tmp.path().join("rep/report.csv")).unwrap();
    let lines: Vec<&str> = report.lines().collect();
    assert_eq!(lines[0], "alpha,tv_n128,tv_n192,tv_n256,spread,stable,selected");
    assert!(lines[4].ends_with(",false,false"), "{}", lines[4]);
    assert!(lines[5].starts_with("1.0,1.08,1.11,1.11,") && lines[5].ends_with(",true,true"));
    assert!(lines[6].ends_with(",true,false"));
}

#[test]
fn exit_codes_distinguish_failures() {
    let tmp = TempDir::new().unwrap();
    let p = tmp.path();
    table_csv(&p.join("sweep.csv"), &LOW_NOISE);

    // Parse error in the config file, reported with a byte offset.
    fs::write(p.join("bad.cfg"), "noise.level=0.1\nsolver.tol=1\n").unwrap();
    let out = tvtomo(p, &["--config", "bad.cfg", "select", "--sweep", "sweep.csv"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("byte 16"));

    let out = tvtomo(p, &["select", "--sweep", "missing.csv"]);
    assert_eq!(code(&out), 3);

    // Nothing up to alpha = 1 is stable at 1%.
    table_csv(&p.join("short.csv"), &LOW_NOISE[..5]);
    let out = tvtomo(p, &["select", "--sweep", "short.csv", "--tol", "0.01", "--out", "sel"]);
    assert_eq!(code(&out), 5);
    assert_eq!(get(&manifest(&p.join("sel")), "result.exit_code"), "5");

    let g = noisy_sinogram(p);
    let out = tvtomo(
        p,
        &[
            "--set",
            "solver.max_iterations=2",
            "reconstruct",
            "--sinogram",
            g.to_str().unwrap(),
            "--alpha",
            "0.1",
            "--n",
            "8",
            "--out",
            "rec",
        ],
    );
    assert_eq!(code(&out), 4);
    // The iteration history is kept for diagnosis.
    assert!(p.join("rec/convergence.csv").exists());
}

#[test]
fn flags_override_config_file() {
    let tmp = TempDir::new().unwrap();
    let p = tmp.path();
    table_csv(&p.join("sweep.csv"), &LOW_NOISE[..5]);
    fs::write(p.join("run.cfg"), "select.tol=0.01\nselect.method=multires\n").unwrap();
    let out = tvtomo(p, &["--config", "run.cfg", "select", "--sweep", "sweep.csv"]);
    assert_eq!(code(&out), 5);
    let stdout = ok(
        p,
        &["--config", "run.cfg", "select", "--sweep", "sweep.csv", "--tol", "0.05"],
    );
    assert_eq!(stdout.trim(), "1.0");
    let stdout = ok(
        p,
        &[
            "--config",
            "run.cfg",
            "--set",
            "select.tol=0.05",
            "select",
            "--sweep",
            "sweep.csv",
        ],
    );
    assert_eq!(stdout.trim(), "1.0");
}

#[test]
fn output_directory_defaults_to_environment() {
    let tmp = TempDir::new().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_tvtomo"))
        .args(["phantom", "--kind", "disc", "--r", "0.2", "--n", "16"])
        .current_dir(tmp.path())
        .env("TVTOMO_OUT", tmp.path().join("base"))
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(tmp.path().join("base/phantom/manifest.txt").exists());

    ok(tmp.path(), &["phantom", "--kind", "disc", "--r", "0.2", "--n", "16"]);
    assert!(tmp.path().join("tvtomo-out/phantom/manifest.txt").exists());
}

#[test]
fn pipeline_reruns_bit_identically() {
    let tmp = TempDir::new().unwrap();
    let p = tmp.path();
    let g = noisy_sinogram(p);
    let g = g.to_str().unwrap();
    let noise = manifest(&p.join("noisy"));
    assert_eq!(get(&noise, "noise.seed"), "3");
    assert_eq!(get(&noise, "noise.level"), "0.05");

    let mut args = vec!["sweep", "--sinogram", g, "--jobs", "2", "--out", "a"];
    args.extend(SWEEP_ARGS);
    ok(p, &args);
    // Replay from the saved configuration with a different worker count.
    ok(
        p,
        &[
            "--config",
            "a/config.txt",
            "sweep",
            "--sinogram",
            g,
            "--jobs",
            "1",
            "--out",
            "b",
        ],
    );
    let first = fs::read(p.join("a/sweep.csv")).unwrap();
    assert_eq!(first, fs::read(p.join("b/sweep.csv")).unwrap());
    assert_eq!(
        get(&manifest(&p.join("a")), "output.sweep"),
        get(&manifest(&p.join("b")), "output.sweep")
    );
    assert!(get(&manifest(&p.join("a")), "input.sinogram").contains("sha256="));
    assert_eq!(get(&manifest(&p.join("a")), "result.failed_cells"), "0");

    let alpha = ok(
        p,
        &[
            "select",
            "--sweep",
            "a/sweep.csv",
            "--method",
            "multires",
            "--out",
            "sel",
        ],
    );
    let alpha = alpha.trim();
    assert!(alpha.parse::<f64>().unwrap() > 0.0);

    ok(
        p,
        &[
            "reconstruct",
            "--sinogram",
            g,
            "--alpha",
            alpha,
            "--n",
            "16",
            "--out",
            "r1",
        ],
    );
    ok(
        p,
        &[
            "reconstruct",
            "--sinogram",
            g,
            "--alpha",
            alpha,
            "--n",
            "16",
            "--out",
            "r2",
        ],
    );
    assert_eq!(
        fs::read(p.join("r1/image.img")).unwrap(),
        fs::read(p.join("r2/image.img")).unwrap()
    );
    assert_eq!(get(&manifest(&p.join("r1")), "result.termination"), "converged");

    let picked = ok(
        p,
        &[
            "report",
            "--sweep",
            "a/sweep.csv",
            "--sinogram",
            g,
            "--image",
            "r1/image.img",
            "--out",
            "rep",
        ],
    );
    assert_eq!(picked.trim(), alpha);
    for f in ["report.csv", "selected.img", "selected.pgm", "image_0.pgm"] {
        assert!(p.join("rep").join(f).exists(), "{f}");
    }
    assert_eq!(
        fs::read(p.join("rep/selected.img")).unwrap(),
        fs::read(p.join("r1/image.img")).unwrap()
    );

    let corner = ok(
        p,
        &["select", "--sweep", "a/sweep.csv", "--method", "lcurve", "--out", "lc"],
    );
    assert!(corner.trim().parse::<f64>().unwrap() > 0.0);
    assert!(p.join("lc/lcurve.csv").exists());
}

#[test]
fn scurve_with_prior_images() {
    let tmp = TempDir::new().unwrap();
    let p = tmp.path();
    let g = noisy_sinogram(p);
    let g = g.to_str().unwrap();
    let mut args = vec!["sweep", "--sinogram", g, "--out", "sw"];
    args.extend(SWEEP_ARGS);
    ok(p, &args);
    // The true object at a finer grid, with the wrong intensity scale.
    ok(p, &["phantom", "--file", "phantom.txt", "--n", "32", "--out", "prior"]);
    let a = ok(
        p,
        &[
            "select",
            "--sweep",
            "sw/sweep.csv",
            "--method",
            "scurve",
            "--prior",
            "prior/phantom.img",
            "--sinogram",
            g,
            "--out",
            "sel",
        ],
    );
    let alpha: f64 = a.trim().parse().unwrap();
    assert!((1e-3..=1e3).contains(&alpha));
    let m = manifest(&p.join("sel"));
    assert!(get(&m, "result.s_hat").parse::<f64>().unwrap() > 0.0);
    assert!(p.join("sel/scurve.csv").exists());
}

#[test]
fn csv_sinogram_is_accepted() {
    let tmp = TempDir::new().unwrap();
    let p = tmp.path();
    noisy_sinogram(p);
    let stdout = ok(
        p,
        &[
            "reconstruct",
            "--sinogram",
            "noisy/sinogram.csv",
            "--alpha",
            "0.1",
            "--n",
            "8",
            "--out",
            "r",
        ],
    );
    assert!(stdout.starts_with("tv_norm "));
}

#[test]
fn image_projection_matches_geometry() {
    let tmp = TempDir::new().unwrap();
    let p = tmp.path();
    ok(
        p,
        &[
            "phantom", "--kind", "shells", "--radii", "0.3,0.1", "--values", "0.5,1", "--n", "16", "--out", "ph",
        ],
    );
    ok(p, &["project", "--image", "ph/phantom.img", "--out", "pr"]);
    let m = manifest(&p.join("pr"));
    assert_eq!(get(&m, "geometry.angles"), "90");
    assert_eq!(get(&m, "geometry.detectors"), "24");
    let header = fs::read(p.join("pr/sinogram.sino")).unwrap();
    assert!(header.starts_with(b"TVTOMO-SINO 90 24"));
}

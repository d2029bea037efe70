//! On-disk formats.
//!
//! Raw images and sinograms are a one-line ASCII header followed by
//! little-endian `f64` values:
//!
//! ```text
//! TVTOMO-IMG <n>\n                  n*n values, row-major (row 0 first)
//! TVTOMO-SINO <angles> <detectors>\n  angles*detectors values, angle-major
//! ```
//!
//! A sinogram header may carry `seed=`, `level=` and `sigma=` tokens
//! describing the noise that was added. Tables are plain CSV with a header
//! line. Phantoms are `key=value` text.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::ImageGrid;
use crate::io::{Phantom, PhantomKind};
use crate::qp::{ConvergenceReport, Termination};
use crate::select::{LCurveDiagnostics, MultiresDiagnostics, SCurveDiagnostics, SweepCell, SweepTable};
use crate::xray::{NoiseMeta, Sinogram};

const IMAGE_MAGIC: &str = "TVTOMO-IMG";
const SINO_MAGIC: &str = "TVTOMO-SINO";
pub const SWEEP_CSV_HEADER: &str = "alpha,n,tv,residual,iterations,status";
pub const CONVERGENCE_CSV_HEADER: &str = "iteration,mu,r_primal,r_dual,step_primal,step_dual";

fn header_line(bytes: &[u8]) -> Result<(&str, usize)> {
    let end = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::parse(bytes.len(), "missing header line"))?;
    let line = std::str::from_utf8(&bytes[..end]).map_err(|e| Error::parse(e.valid_up_to(), "header is not UTF-8"))?;
    Ok((line, end + 1))
}

/// Whitespace-separated tokens with their byte offsets.
fn tokens(line: &str, base: usize) -> Vec<(usize, &str)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, ch) in line.char_indices() {
        match (ch.is_whitespace(), start) {
            (true, Some(s)) => {
                out.push((base + s, &line[s..i]));
                start = None;
            }
            (false, None) => start = Some(i),
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push((base + s, &line[s..]));
    }
    out
}

fn parse_num<T: std::str::FromStr>(offset: usize, s: &str, what: &str) -> Result<T> {
    s.trim()
        .parse()
        .map_err(|_| Error::parse(offset, format!("invalid {what} '{}'", s.trim())))
}

fn read_f64s(bytes: &[u8], start: usize, count: usize) -> Result<Vec<f64>> {
    let body = &bytes[start..];
    if body.len() != count * 8 {
        return Err(Error::parse(
            start + body.len().min(count * 8),
            format!("expected {} bytes of data, found {}", count * 8, body.len()),
        ));
    }
    Ok(body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

pub fn encode_image(f: &ImageGrid) -> Vec<u8> {
    let n = f.n();
    let mut out = format!("{IMAGE_MAGIC} {n}\n").into_bytes();
    out.reserve(8 * n * n);
    for row in 0..n {
        for col in 0..n {
            out.extend_from_slice(&f.get(row, col).to_le_bytes());
        }
    }
    out
}

pub fn decode_image(bytes: &[u8]) -> Result<ImageGrid> {
    let (line, start) = header_line(bytes)?;
    let toks = tokens(line, 0);
    match toks.as_slice() {
        [(_, magic), (off, n)] if *magic == IMAGE_MAGIC => {
            let n: usize = parse_num(*off, n, "image size")?;
            if n == 0 {
                return Err(Error::parse(*off, "image size must be positive"));
            }
            let data = read_f64s(bytes, start, n * n)?;
            let mut values = vec![0.0; n * n];
            for row in 0..n {
                for col in 0..n {
                    values[row + n * col] = data[row * n + col];
                }
            }
            ImageGrid::new(n, values)
        }
        _ => Err(Error::parse(0, format!("expected '{IMAGE_MAGIC} <n>' header"))),
    }
}

pub fn save_image(path: &Path, f: &ImageGrid) -> Result<()> {
    Ok(fs::write(path, encode_image(f))?)
}

pub fn load_image(path: &Path) -> Result<ImageGrid> {
    decode_image(&fs::read(path)?)
}

/// Plain-text PGM with values mapped linearly from `[lo, hi]` to `0..=255`
/// and clamped. The top line of the picture is the top row of the unit
/// square (largest `y`).
pub fn encode_pgm(f: &ImageGrid, lo: f64, hi: f64) -> Result<String> {
    if !(lo.is_finite() && hi.is_finite() && hi > lo) {
        return Err(Error::InvalidParameter(format!("PGM range [{lo}, {hi}] is empty")));
    }
    let n = f.n();
    let mut out = format!("P2\n{n} {n}\n255\n");
    for row in (0..n).rev() {
        let line: Vec<String> = (0..n)
            .map(|col| {
                let t = ((f.get(row, col) - lo) / (hi - lo)).clamp(0.0, 1.0);
                ((t * 255.0).round() as u8).to_string()
            })
            .collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    Ok(out)
}

pub fn encode_sinogram(s: &Sinogram) -> Vec<u8> {
    let mut header = format!("{SINO_MAGIC} {} {}", s.num_angles(), s.num_detectors());
    if let Some(m) = &s.noise {
        let _ = write!(header, " seed={} level={} sigma={}", m.seed, m.relative_level, m.sigma);
    }
    header.push('\n');
    let mut out = header.into_bytes();
    for v in s.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_sinogram(bytes: &[u8]) -> Result<Sinogram> {
    let (line, start) = header_line(bytes)?;
    let toks = tokens(line, 0);
    if toks.len() < 3 || toks[0].1 != SINO_MAGIC {
        return Err(Error::parse(
            0,
            format!("expected '{SINO_MAGIC} <angles> <detectors>' header"),
        ));
    }
    let na: usize = parse_num(toks[1].0, toks[1].1, "angle count")?;
    let nd: usize = parse_num(toks[2].0, toks[2].1, "detector count")?;
    let (mut seed, mut level, mut sigma) = (None, None, None);
    for &(off, tok) in &toks[3..] {
        let (k, v) = tok
            .split_once('=')
            .ok_or_else(|| Error::parse(off, format!("unexpected token '{tok}'")))?;
        let voff = off + k.len() + 1;
        match k {
            "seed" => seed = Some(parse_num::<u64>(voff, v, "seed")?),
            "level" => level = Some(parse_num::<f64>(voff, v, "noise level")?),
            "sigma" => sigma = Some(parse_num::<f64>(voff, v, "sigma")?),
            _ => return Err(Error::parse(off, format!("unknown key '{k}'"))),
        }
    }
    let data = read_f64s(bytes, start, na * nd)?;
    let mut s = Sinogram::new(na, nd, data)?;
    s.noise = match (seed, level, sigma) {
        (Some(seed), Some(relative_level), Some(sigma)) => Some(NoiseMeta {
            seed,
            relative_level,
            sigma,
        }),
        (None, None, None) => None,
        _ => return Err(Error::parse(toks[3].0, "noise needs seed, level and sigma together")),
    };
    Ok(s)
}

pub fn save_sinogram(path: &Path, s: &Sinogram) -> Result<()> {
    Ok(fs::write(path, encode_sinogram(s))?)
}

pub fn load_sinogram(path: &Path) -> Result<Sinogram> {
    decode_sinogram(&fs::read(path)?)
}

/// One line per angle, one column per detector, no header.
pub fn sinogram_csv(s: &Sinogram) -> String {
    let mut out = String::new();
    for row in s.data().chunks(s.num_detectors()) {
        let line: Vec<String> = row.iter().map(|&v| num(v)).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

/// Reads [`sinogram_csv`] output or any CSV with one line per angle and one
/// column per detector. Blank lines and `#` comments are skipped.
pub fn parse_sinogram_csv(text: &str) -> Result<Sinogram> {
    let mut data = Vec::new();
    let mut width = None;
    let mut rows = 0;
    for (off, line) in content_lines(text) {
        let f = fields(line, off);
        match width {
            None => width = Some(f.len()),
            Some(w) if w != f.len() => {
                return Err(Error::parse(off, format!("expected {w} values, found {}", f.len())));
            }
            _ => {}
        }
        for (o, v) in f {
            data.push(parse_num::<f64>(o, v, "value")?);
        }
        rows += 1;
    }
    let width = width.ok_or_else(|| Error::parse(0, "empty sinogram"))?;
    Sinogram::new(rows, width, data)
}

/// Non-empty, non-comment lines with their byte offsets.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    let mut offset = 0;
    text.split_inclusive('\n').filter_map(move |raw| {
        let here = offset;
        offset += raw.len();
        let line = raw.trim_end_matches(['\n', '\r']);
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            None
        } else {
            Some((here + (line.len() - line.trim_start().len()), trimmed))
        }
    })
}

/// Comma-separated fields with their byte offsets.
fn fields(line: &str, base: usize) -> Vec<(usize, &str)> {
    let mut out = Vec::new();
    let mut start = 0;
    for (i, ch) in line.char_indices() {
        if ch == ',' {
            out.push((base + start, &line[start..i]));
            start = i + 1;
        }
    }
    out.push((base + start, &line[start..]));
    out
}

/// Shortest text that parses back to the same `f64`.
fn num(v: f64) -> String {
    format!("{v:?}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

pub fn sweep_csv(table: &SweepTable) -> String {
    let mut out = format!("{SWEEP_CSV_HEADER}\n");
    for (i, alpha) in table.alphas().iter().enumerate() {
        for (j, n) in table.resolutions().iter().enumerate() {
            let c = table.cell(i, j);
            let _ = writeln!(
                out,
                "{},{n},{},{},{},{}",
                num(*alpha),
                fmt_opt(c.tv),
                fmt_opt(c.residual),
                c.iterations,
                c.termination.as_str()
            );
        }
    }
    out
}

fn parse_termination(offset: usize, s: &str) -> Result<Termination> {
    match s.trim() {
        "converged" => Ok(Termination::Converged),
        "max_iterations" => Ok(Termination::MaxIterations),
        "solver_failure" => Ok(Termination::SolverFailure),
        other => Err(Error::parse(offset, format!("unknown status '{other}'"))),
    }
}

/// Reads a table written by [`sweep_csv`]. Every `(alpha, n)` pair of the
/// grid must appear exactly once.
pub fn parse_sweep_csv(text: &str) -> Result<SweepTable> {
    let mut lines = content_lines(text);
    match lines.next() {
        Some((_, h)) if h.split(',').map(str::trim).eq(SWEEP_CSV_HEADER.split(',')) => {}
        Some((off, _)) => return Err(Error::parse(off, format!("expected header '{SWEEP_CSV_HEADER}'"))),
        None => return Err(Error::parse(0, "empty sweep table")),
    }
    let mut rows = Vec::new();
    for (off, line) in lines {
        let f = fields(line, off);
        if f.len() != 6 {
            return Err(Error::parse(off, format!("expected 6 fields, found {}", f.len())));
        }
        let opt = |k: usize, what: &str| -> Result<Option<f64>> {
            let s = f[k].1.trim();
            if s.is_empty() {
                Ok(None)
            } else {
                parse_num(f[k].0, s, what).map(Some)
            }
        };
        let alpha: f64 = parse_num(f[0].0, f[0].1, "alpha")?;
        let n: usize = parse_num(f[1].0, f[1].1, "resolution")?;
        let cell = SweepCell {
            tv: opt(2, "tv")?,
            residual: opt(3, "residual")?,
            iterations: parse_num(f[4].0, f[4].1, "iteration count")?,
            termination: parse_termination(f[5].0, f[5].1)?,
            report: None,
        };
        rows.push((off, alpha, n, cell));
    }
    let mut alphas: Vec<f64> = rows.iter().map(|r| r.1).collect();
    alphas.sort_by(f64::total_cmp);
    alphas.dedup();
    let mut resolutions: Vec<usize> = rows.iter().map(|r| r.2).collect();
    resolutions.sort_unstable();
    resolutions.dedup();
    let mut cells: Vec<Option<SweepCell>> = vec![None; alphas.len() * resolutions.len()];
    for (off, alpha, n, cell) in rows {
        let i = alphas.iter().position(|a| *a == alpha).unwrap();
        let j = resolutions.iter().position(|r| *r == n).unwrap();
        let slot = &mut cells[i * resolutions.len() + j];
        if slot.is_some() {
            return Err(Error::parse(
                off,
                format!("duplicate entry for alpha = {alpha}, n = {n}"),
            ));
        }
        *slot = Some(cell);
    }
    let cells = cells
        .into_iter()
        .enumerate()
        .map(|(k, c)| {
            c.ok_or_else(|| {
                Error::IncompleteTable(format!(
                    "missing alpha = {}, n = {}",
                    alphas[k / resolutions.len()],
                    resolutions[k % resolutions.len()]
                ))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    SweepTable::new(alphas, resolutions, cells)
}

pub fn convergence_csv(report: &ConvergenceReport) -> String {
    let mut out = format!("{CONVERGENCE_CSV_HEADER}\n");
    for r in &report.history {
        let _ = writeln!(
            out,
            "{},{:e},{:e},{:e},{},{}",
            r.iteration, r.mu, r.r_primal, r.r_dual, r.step_primal, r.step_dual
        );
    }
    out
}

pub fn multires_csv(alphas: &[f64], d: &MultiresDiagnostics) -> String {
    let mut out = String::from("alpha,spread,stable,selected\n");
    for (k, a) in alphas.iter().enumerate() {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            num(*a),
            num(d.spread[k]),
            d.stable[k],
            k == d.selected_index
        );
    }
    out
}

pub fn scurve_csv(d: &SCurveDiagnostics) -> String {
    let mut out = String::from("alpha,tv\n");
    for (a, s) in &d.curve {
        let _ = writeln!(out, "{},{}", num(*a), num(*s));
    }
    out
}

pub fn lcurve_csv(d: &LCurveDiagnostics) -> String {
    let mut out = String::from("alpha,log_residual,log_tv,curvature,selected\n");
    for (k, p) in d.points.iter().enumerate() {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            num(p.alpha),
            num(p.log_residual),
            num(p.log_tv),
            fmt_opt(p.curvature),
            k == d.selected_index
        );
    }
    out
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut file = fs::File::create(path)?;
    file.write_all(text.as_bytes())?;
    Ok(())
}

/// Phantom description, one `key=value` per line. Each shape starts with a
/// `kind=` line; the keys that follow belong to it.
///
/// ```text
/// kind=disc      cx cy r value
/// kind=shells    cx cy radii values    (lists are comma-separated, outer first)
/// kind=polygon   x y value             (vertex coordinate lists)
/// ```
///
/// `cx` and `cy` default to 0.5 and `value` to 1.
pub fn parse_phantom(text: &str) -> Result<Phantom> {
    struct Pending<'a> {
        offset: usize,
        kind: &'a str,
        keys: Vec<(usize, &'a str, &'a str)>,
    }

    fn list(off: usize, v: &str, what: &str) -> Result<Vec<f64>> {
        fields(v, off).iter().map(|&(o, s)| parse_num(o, s, what)).collect()
    }

    fn build(p: &Pending) -> Result<PhantomKind> {
        let (mut cx, mut cy, mut value) = (0.5, 0.5, 1.0);
        let (mut r, mut radii, mut values, mut xs, mut ys) = (None, None, None, None, None);
        for &(off, k, v) in &p.keys {
            let allowed: &[&str] = match p.kind {
                "disc" => &["cx", "cy", "r", "value"],
                "shells" => &["cx", "cy", "radii", "values"],
                _ => &["x", "y", "value"],
            };
            if !allowed.contains(&k) {
                return Err(Error::parse(
                    off,
                    format!("key '{k}' does not apply to kind={}", p.kind),
                ));
            }
            let voff = off + k.len() + 1;
            match k {
                "cx" => cx = parse_num(voff, v, "cx")?,
                "cy" => cy = parse_num(voff, v, "cy")?,
                "value" => value = parse_num(voff, v, "value")?,
                "r" => r = Some(parse_num(voff, v, "radius")?),
                "radii" => radii = Some(list(voff, v, "radius")?),
                "values" => values = Some(list(voff, v, "value")?),
                "x" => xs = Some(list(voff, v, "x coordinate")?),
                _ => ys = Some(list(voff, v, "y coordinate")?),
            }
        }
        let missing = |key: &str| Error::parse(p.offset, format!("kind={} needs '{key}'", p.kind));
        Ok(match p.kind {
            "disc" => PhantomKind::Disc {
                center: [cx, cy],
                radius: r.ok_or_else(|| missing("r"))?,
                value,
            },
            "shells" => PhantomKind::NestedShells {
                center: [cx, cy],
                radii: radii.ok_or_else(|| missing("radii"))?,
                values: values.ok_or_else(|| missing("values"))?,
            },
            _ => {
                let xs = xs.ok_or_else(|| missing("x"))?;
                let ys = ys.ok_or_else(|| missing("y"))?;
                if xs.len() != ys.len() {
                    return Err(Error::parse(p.offset, "x and y lists differ in length"));
                }
                PhantomKind::Polygon {
                    vertices: xs.into_iter().zip(ys).map(|(x, y)| [x, y]).collect(),
                    value,
                }
            }
        })
    }

    let mut shapes = Vec::new();
    let mut current: Option<Pending> = None;
    for (off, line) in content_lines(text) {
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::parse(off, format!("expected key=value, found '{line}'")))?;
        let (k, v) = (k.trim(), v.trim());
        if k == "kind" {
            if !matches!(v, "disc" | "shells" | "polygon") {
                return Err(Error::parse(
                    off + line.find('=').unwrap() + 1,
                    format!("unknown kind '{v}'"),
                ));
            }
            if let Some(p) = current.take() {
                shapes.push(build(&p)?);
            }
            current = Some(Pending {
                offset: off,
                kind: v,
                keys: Vec::new(),
            });
        } else {
            let p = current
                .as_mut()
                .ok_or_else(|| Error::parse(off, "expected 'kind=' before other keys"))?;
            p.keys.push((off, k, v));
        }
    }
    if let Some(p) = current.take() {
        shapes.push(build(&p)?);
    }
    if shapes.is_empty() {
        return Err(Error::parse(0, "phantom has no shapes"));
    }
    Phantom::from_shapes(shapes)
}

pub fn format_phantom(p: &Phantom) -> String {
    let join = |v: &mut dyn Iterator<Item = f64>| v.map(num).collect::<Vec<_>>().join(",");
    let mut out = String::new();
    for shape in &p.shapes {
        match shape {
            PhantomKind::Disc { center, radius, value } => {
                let _ = writeln!(
                    out,
                    "kind=disc\ncx={}\ncy={}\nr={radius}\nvalue={value}",
                    center[0], center[1]
                );
            }
            PhantomKind::NestedShells { center, radii, values } => {
                let _ = writeln!(
                    out,
                    "kind=shells\ncx={}\ncy={}\nradii={}\nvalues={}",
                    center[0],
                    center[1],
                    join(&mut radii.iter().copied()),
                    join(&mut values.iter().copied())
                );
            }
            PhantomKind::Polygon { vertices, value } => {
                let _ = writeln!(
                    out,
                    "kind=polygon\nx={}\ny={}\nvalue={value}",
                    join(&mut vertices.iter().map(|v| v[0])),
                    join(&mut vertices.iter().map(|v| v[1]))
                );
            }
        }
    }
    out
}

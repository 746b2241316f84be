//! CSV formats for grid functions, trajectories and residual reports.
//!
//! Floats are written with 17 significant digits so that reading a file back
//! reproduces the values bit for bit. Files are written to a temporary name
//! and renamed into place.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::dynamics::Trajectory;
use crate::error::{Error, Result};
use crate::frac_ops::FracOrder;
use crate::grid::{GridFn, UniformGrid};
use crate::report::ResidualReport;

pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes `contents` to `path` through a sibling temporary file.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = path.with_file_name(format!(".{name}.tmp{}", std::process::id()));
    fs::write(&tmp, contents)?;
    if let Err(e) = fs::rename(&tmp, path) {
        let _ = fs::remove_file(&tmp);
        return Err(e.into());
    }
    Ok(())
}

pub fn gridfn_to_csv(f: &GridFn) -> String {
    let mut out = String::from("t,value,valid\n");
    for (k, t) in f.grid().nodes().into_iter().enumerate() {
        let _ = writeln!(out, "{},{},{}", fmt_f64(t), fmt_f64(f.values()[k]), u8::from(f.is_valid(k)));
    }
    out
}

fn parse_float(field: &str, line: usize) -> Result<f64> {
    let field = field.trim();
    field.parse().map_err(|_| Error::Csv { line, message: format!("`{field}` is not a number") })
}

struct Table {
    header: Vec<String>,
    rows: Vec<(usize, Vec<String>)>,
}

fn split_csv(text: &str) -> Result<Table> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())).filter(|(_, l)| !l.is_empty());
    let Some((_, header)) = lines.next() else {
        return Err(Error::Csv { line: 1, message: "empty file".into() });
    };
    let header: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
    let mut rows = Vec::new();
    for (line, l) in lines {
        let fields: Vec<String> = l.split(',').map(|s| s.trim().to_string()).collect();
        if fields.len() != header.len() {
            return Err(Error::Csv { line, message: format!("expected {} fields, found {}", header.len(), fields.len()) });
        }
        rows.push((line, fields));
    }
    Ok(Table { header, rows })
}

/// Recovers the grid from the `t` column, checking monotonicity and uniform
/// spacing, and optionally that it equals `expected`.
fn grid_from_times(times: &[(usize, f64)], expected: Option<&UniformGrid>) -> Result<UniformGrid> {
    for w in times.windows(2) {
        if w[1].1 <= w[0].1 {
            return Err(Error::Csv { line: w[1].0, message: "t is not strictly increasing".into() });
        }
    }
    if times.len() < 2 {
        return Err(Error::Csv { line: 1, message: "too few rows to define a grid".into() });
    }
    let a = times[0].1;
    let b = times[times.len() - 1].1;
    let grid = UniformGrid::new(a, b, times.len() - 1).map_err(|e| Error::Csv { line: times[0].0, message: e.to_string() })?;
    let slack = 1e-9 * grid.h();
    for (k, &(line, t)) in times.iter().enumerate() {
        if (t - grid.node(k)).abs() > slack {
            return Err(Error::Csv { line, message: format!("t = {t} is off the uniform grid") });
        }
    }
    if let Some(g) = expected {
        if g.n() != grid.n() || (g.a() - a).abs() > slack || (g.b() - b).abs() > slack {
            return Err(Error::Csv {
                line: times[0].0,
                message: format!(
                    "grid [{a}, {b}] with n = {} does not match the configured [{}, {}] with n = {}",
                    grid.n(),
                    g.a(),
                    g.b(),
                    g.n()
                ),
            });
        }
        return Ok(*g);
    }
    Ok(grid)
}

pub fn gridfn_from_csv(text: &str, expected: Option<&UniformGrid>) -> Result<GridFn> {
    let table = split_csv(text)?;
    if table.header != ["t", "value", "valid"] {
        return Err(Error::Csv { line: 1, message: format!("expected header `t,value,valid`, found `{}`", table.header.join(",")) });
    }
    let mut times = Vec::new();
    let mut values = Vec::new();
    let mut valid = Vec::new();
    for (line, f) in &table.rows {
        times.push((*line, parse_float(&f[0], *line)?));
        let ok = match f[2].as_str() {
            "1" | "true" => true,
            "0" | "false" => false,
            other => return Err(Error::Csv { line: *line, message: format!("validity flag `{other}`") }),
        };
        values.push(if ok { parse_float(&f[1], *line)? } else { f64::NAN });
        valid.push(ok);
    }
    let grid = grid_from_times(&times, expected)?;
    GridFn::with_mask(grid, values, valid)
}

pub fn trajectory_to_csv(traj: &Trajectory) -> String {
    let n = traj.dim();
    let mut header = vec!["t".to_string()];
    header.extend((1..=n).map(|i| format!("q{i}")));
    if traj.p().is_some() {
        header.extend((1..=n).map(|i| format!("p{i}")));
    }
    let mut out = header.join(",");
    out.push('\n');
    for (k, t) in traj.grid().nodes().into_iter().enumerate() {
        out.push_str(&fmt_f64(t));
        for f in traj.q().iter().chain(traj.p().into_iter().flatten()) {
            out.push(',');
            out.push_str(&fmt_f64(f.values()[k]));
        }
        out.push('\n');
    }
    out
}

/// Parses `t,q1..qN[,p1..pN]`, where `N` is the number of orders given.
pub fn trajectory_from_csv(text: &str, orders: &[FracOrder], expected: Option<&UniformGrid>) -> Result<Trajectory> {
    let n = orders.len();
    let table = split_csv(text)?;
    let q_names: Vec<String> = (1..=n).map(|i| format!("q{i}")).collect();
    let p_names: Vec<String> = (1..=n).map(|i| format!("p{i}")).collect();
    let has_p = table.header.len() == 1 + 2 * n;
    let mut want = vec!["t".to_string()];
    want.extend(q_names);
    if has_p {
        want.extend(p_names);
    }
    if table.header != want {
        return Err(Error::Csv { line: 1, message: format!("expected header `{}`, found `{}`", want.join(","), table.header.join(",")) });
    }
    let mut times = Vec::with_capacity(table.rows.len());
    let mut cols = vec![Vec::with_capacity(table.rows.len()); want.len() - 1];
    for (line, f) in &table.rows {
        times.push((*line, parse_float(&f[0], *line)?));
        for (c, field) in cols.iter_mut().zip(&f[1..]) {
            let x = parse_float(field, *line)?;
            if !x.is_finite() {
                return Err(Error::Csv { line: *line, message: format!("non-finite value `{field}`") });
            }
            c.push(x);
        }
    }
    let grid = grid_from_times(&times, expected)?;
    let mut fns = cols.into_iter().map(|c| GridFn::new(grid, c)).collect::<Result<Vec<_>>>()?;
    let p = if has_p { Some(fns.split_off(n)) } else { None };
    Trajectory::new(orders.to_vec(), fns, p)
}

pub fn read_trajectory(path: &Path, orders: &[FracOrder], expected: Option<&UniformGrid>) -> Result<Trajectory> {
    trajectory_from_csv(&fs::read_to_string(path)?, orders, expected)
}

pub fn write_trajectory(path: &Path, traj: &Trajectory) -> Result<()> {
    write_atomic(path, &trajectory_to_csv(traj))
}

pub fn report_summary_csv(report: &ResidualReport) -> String {
    let mut out = String::from("equation,sup_norm,rms,included_nodes,pass\n");
    for e in &report.equations {
        let _ = writeln!(out, "{},{},{},{},{}", e.name, fmt_f64(e.sup_norm), fmt_f64(e.rms), e.included_nodes, e.passed);
    }
    out
}

fn file_stem(name: &str) -> String {
    let mapped: String = name.chars().map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '_' }).collect();
    mapped.split('_').filter(|s| !s.is_empty()).collect::<Vec<_>>().join("_")
}

/// Writes `<prefix>_summary.csv` and one `<prefix>_<equation>.csv` per
/// equation into `dir`; returns the paths written.
pub fn write_report(dir: &Path, prefix: &str, report: &ResidualReport) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let summary = dir.join(format!("{prefix}_summary.csv"));
    write_atomic(&summary, &report_summary_csv(report))?;
    written.push(summary);
    for e in &report.equations {
        let path = dir.join(format!("{prefix}_{}.csv", file_stem(&e.name)));
        write_atomic(&path, &gridfn_to_csv(&e.residual))?;
        written.push(path);
    }
    Ok(written)
}

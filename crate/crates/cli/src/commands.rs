use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use fracvar::dynamics::{canonical_residual, el_residual, is_constant_of_motion};
use fracvar::frac_ops::Operator;
use fracvar::io::{fmt_f64, gridfn_to_csv, read_trajectory, write_atomic, write_report, write_trajectory};
use fracvar::solver::{solve_canonical, solve_trajectory, Method, Solution};
use fracvar::transforms::{gauge_residual, hj_residual, verify_trans1, verify_trans2, TransformPair};
use fracvar::{Expr, GeneratingFunction, GeneratingKind, GridFn, HamiltonianSpec, ResidualReport, Trajectory, Var};

use crate::config::ProblemConfig;
use crate::error::{CliError, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Text printed to stdout and the process exit status.
#[derive(Debug)]
pub struct Outcome {
    pub text: String,
    pub passed: bool,
}

fn header(command: &str, cfg: &ProblemConfig) -> String {
    format!("# fracvar {VERSION} {command}\n{}", cfg.echo())
}

fn input_error(context: String) -> impl FnOnce(fracvar::Error) -> CliError {
    move |source| CliError::Input { context, source }
}

fn load_trajectory(cfg: &ProblemConfig, path: &Path) -> Result<Trajectory> {
    let traj = read_trajectory(path, &cfg.orders, Some(&cfg.grid)).map_err(input_error(path.display().to_string()))?;
    if traj.dim() != cfg.dim {
        return Err(CliError::Usage(format!("{} has {} coordinates, config has N = {}", path.display(), traj.dim(), cfg.dim)));
    }
    Ok(traj)
}

fn parse_expr(text: &str, dim: usize, flag: &str) -> Result<Expr> {
    Expr::parse(text, dim).map_err(|e| CliError::Input { context: flag.into(), source: e.into() })
}

fn describe(report: &ResidualReport) -> String {
    let mut s = format!("{}: tolerance {}\n", report.title, fmt_f64(report.tolerance));
    for e in &report.equations {
        let _ = writeln!(
            s,
            "  {:<12} sup {}  rms {}  nodes {}  {}",
            e.name,
            fmt_f64(e.sup_norm),
            fmt_f64(e.rms),
            e.included_nodes,
            if e.passed { "pass" } else { "FAIL" }
        );
    }
    if report.advisory {
        s.push_str("  advisory: the verdict rests on an unverified premise\n");
    }
    for n in &report.notes {
        let _ = writeln!(s, "  note: {n}");
    }
    s
}

/// Writes the report CSVs plus a text file carrying the header and summary.
fn emit_reports(dir: &Path, prefix: &str, head: &str, reports: &[&ResidualReport]) -> Result<(String, bool)> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Core(e.into()))?;
    let mut text = head.to_string();
    let mut passed = true;
    for (i, r) in reports.iter().enumerate() {
        let name = if reports.len() == 1 { prefix.to_string() } else { format!("{prefix}{}", i + 1) };
        write_report(dir, &name, r)?;
        text += &describe(r);
        passed &= r.passed();
    }
    let _ = writeln!(text, "result: {}", if passed { "pass" } else { "fail" });
    write_atomic(&dir.join(format!("{prefix}_report.txt")), &text)?;
    Ok((text, passed))
}

fn momentum_line(expr: &Expr, i: usize) -> String {
    format!("p{} = {expr}", i + 1)
}

pub fn derive(cfg: &ProblemConfig) -> Result<Outcome> {
    let l = cfg.require_lagrangian()?;
    let mut s = header("derive", cfg);
    let _ = writeln!(s, "L = {l}");
    for i in 0..cfg.dim {
        let _ = writeln!(s, "dL/dq{} = {}", i + 1, l.body().diff(Var::Coord(i)));
    }
    for i in 0..cfg.dim {
        s += &momentum_line(&l.body().diff(Var::Velocity(i)), i);
        s.push('\n');
    }
    for i in 0..cfg.dim {
        let k = i + 1;
        let dq = l.body().diff(Var::Coord(i));
        let dv = l.body().diff(Var::Velocity(i));
        let op = format!("D[beta{k},alpha{k};1-gamma{k}]( {dv} )");
        if dq.is_zero() {
            let _ = writeln!(s, "EL[{k}]: {op} = 0");
        } else {
            let _ = writeln!(s, "EL[{k}]: {dq} + {op} = 0");
        }
    }
    match fracvar::dynamics::hamiltonian_symbolic(l) {
        Some(h) => {
            let _ = writeln!(s, "H = {h}");
        }
        None => s.push_str("H = unavailable (non-quadratic momenta)\n"),
    }
    Ok(Outcome { text: s, passed: true })
}

fn run_solver(cfg: &ProblemConfig) -> Result<Solution> {
    let bd = cfg.require_boundary()?;
    Ok(match cfg.method {
        Method::Direct => solve_trajectory(cfg.require_lagrangian()?, bd, cfg.grid, &cfg.solver)?,
        Method::Canonical => solve_canonical(&cfg.resolve_hamiltonian()?, bd, cfg.grid, &cfg.orders, &cfg.solver)?,
    })
}

fn solve_summary(sol: &Solution) -> String {
    let s = &sol.summary;
    let mut out = String::from("{\n");
    let _ = writeln!(out, "  \"method\": \"{}\",", s.method.name());
    let _ = writeln!(out, "  \"iterations\": {},", s.iterations);
    let _ = writeln!(out, "  \"final_norm\": {},", fmt_f64(s.final_norm));
    let _ = writeln!(out, "  \"first_history_value\": {},", fmt_f64(s.history[0]));
    let _ = writeln!(out, "  \"last_history_value\": {},", fmt_f64(*s.history.last().unwrap_or(&f64::NAN)));
    let _ = writeln!(out, "  \"audit\": \"{}\",", s.report.title);
    let _ = writeln!(out, "  \"audit_tolerance\": {},", fmt_f64(s.report.tolerance));
    let _ = writeln!(out, "  \"audit_sup_norm\": {},", fmt_f64(s.report.sup_norm()));
    let _ = writeln!(out, "  \"audit_passed\": {},", s.report.passed());
    match s.restart_disagreement {
        Some(d) => {
            let _ = writeln!(out, "  \"restart_disagreement\": {},", fmt_f64(d));
        }
        None => out.push_str("  \"restart_disagreement\": null,\n"),
    }
    let _ = writeln!(out, "  \"saddle\": {},", s.saddle);
    let notes: Vec<String> = s.notes.iter().map(|n| format!("\"{}\"", n.replace('"', "'"))).collect();
    let _ = writeln!(out, "  \"notes\": [{}]", notes.join(", "));
    out.push_str("}\n");
    out
}

pub fn solve(cfg: &ProblemConfig, out_dir: Option<&Path>) -> Result<Outcome> {
    let sol = run_solver(cfg)?;
    let dir: PathBuf = out_dir.map_or_else(|| cfg.output_dir.clone(), Path::to_path_buf);
    std::fs::create_dir_all(&dir).map_err(|e| CliError::Core(e.into()))?;
    let traj_path = dir.join("trajectory.csv");
    write_trajectory(&traj_path, &sol.trajectory)?;
    write_report(&dir, "solve", &sol.summary.report)?;
    let mut text = header("solve", cfg);
    text += &solve_summary(&sol);
    write_atomic(&dir.join("summary.txt"), &text)?;
    let _ = writeln!(text, "wrote {}", traj_path.display());
    Ok(Outcome { text, passed: true })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum CheckKind {
    El,
    Canonical,
    Constant,
}

pub fn check(
    cfg: &ProblemConfig,
    kind: CheckKind,
    trajectory: &Path,
    expr: Option<&str>,
    out_dir: Option<&Path>,
) -> Result<Outcome> {
    let traj = load_trajectory(cfg, trajectory)?;
    let dir = out_dir.map_or_else(|| cfg.output_dir.clone(), Path::to_path_buf);
    let (name, report) = match kind {
        CheckKind::El => ("check_el", el_residual(cfg.require_lagrangian()?, &traj, cfg.el_tolerance())?),
        CheckKind::Canonical => {
            let h = cfg.resolve_hamiltonian()?;
            ("check_canonical", canonical_residual(&h, &traj, cfg.canonical_tolerance()).map_err(input_error(trajectory.display().to_string()))?)
        }
        CheckKind::Constant => {
            let text = expr.ok_or_else(|| CliError::Usage("check constant needs --expr".into()))?;
            let c = parse_expr(text, cfg.dim, "--expr")?;
            if traj.p().is_none() {
                return Err(CliError::Usage(format!("{} has no momentum columns", trajectory.display())));
            }
            let h: Option<HamiltonianSpec> = cfg.resolve_hamiltonian().ok();
            let order = constant_order(cfg)?;
            ("check_constant", is_constant_of_motion(&c, &traj, &order, cfg.constant_tolerance(), h.as_ref())?)
        }
    };
    let head = format!("{}# trajectory = {}\n", header(name, cfg), trajectory.display());
    let (text, passed) = emit_reports(&dir, name, &head, &[&report])?;
    Ok(Outcome { text, passed })
}

/// A constant of motion is tested with a single order triple, so all
/// coordinates must share one.
fn constant_order(cfg: &ProblemConfig) -> Result<fracvar::FracOrder> {
    let first = cfg.orders[0];
    if cfg.orders.iter().any(|o| *o != first) {
        return Err(CliError::Usage("check constant needs every coordinate to share one order triple".into()));
    }
    Ok(first)
}

pub struct TransformArgs<'a> {
    pub kind: u8,
    pub f: &'a str,
    pub old: &'a Path,
    pub new: &'a Path,
    pub k: Option<&'a str>,
}

pub fn transform(cfg: &ProblemConfig, args: &TransformArgs<'_>, out_dir: Option<&Path>) -> Result<Outcome> {
    let kind = match args.kind {
        1 => GeneratingKind::First,
        2 => GeneratingKind::Second,
        other => return Err(CliError::Usage(format!("--kind must be 1 or 2, got {other}"))),
    };
    let f = GeneratingFunction::parse(kind, cfg.dim, args.f).map_err(input_error("--f".into()))?;
    let h = cfg.resolve_hamiltonian()?;
    let k = match args.k {
        Some(text) => HamiltonianSpec::parse(text, cfg.orders.clone()).map_err(input_error("--k".into()))?,
        None => h.clone(),
    };
    let pair = TransformPair::new(load_trajectory(cfg, args.old)?, load_trajectory(cfg, args.new)?)
        .map_err(input_error("--old/--new".into()))?;
    let tol = cfg.transform_tolerance();
    let relations = match kind {
        GeneratingKind::First => verify_trans1(&f, &pair, &h, &k, tol)?,
        GeneratingKind::Second => verify_trans2(&f, &pair, &h, &k, tol)?,
    };
    let gauge = gauge_residual(&f, &pair, &h, &k, tol)?;
    let head = format!(
        "{}# F = {}\n# K = {k}\n# old = {}\n# new = {}\n",
        header("transform", cfg),
        f.body(),
        args.old.display(),
        args.new.display()
    );
    let dir = out_dir.map_or_else(|| cfg.output_dir.clone(), Path::to_path_buf);
    let (text, passed) = emit_reports(&dir, "transform", &head, &[&relations, &gauge])?;
    Ok(Outcome { text, passed })
}

pub fn hj(cfg: &ProblemConfig, f2: &str, trajectory: &Path, new_momenta: &str, out_dir: Option<&Path>) -> Result<Outcome> {
    let f = GeneratingFunction::parse(GeneratingKind::Second, cfg.dim, f2).map_err(input_error("--f2".into()))?;
    let p: Vec<f64> = new_momenta
        .split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|_| CliError::Usage(format!("--P has a bad entry `{}`", s.trim()))))
        .collect::<Result<_>>()?;
    if p.len() != cfg.dim {
        return Err(CliError::Usage(format!("--P needs {} values, got {}", cfg.dim, p.len())));
    }
    let h = cfg.resolve_hamiltonian()?;
    let traj = load_trajectory(cfg, trajectory)?;
    let report = hj_residual(&h, &f, &traj, &p, cfg.hj_tolerance())?;
    let head = format!("{}# F2 = {}\n# P = {p:?}\n# trajectory = {}\n", header("hj", cfg), f.body(), trajectory.display());
    let dir = out_dir.map_or_else(|| cfg.output_dir.clone(), Path::to_path_buf);
    let (text, passed) = emit_reports(&dir, "hj", &head, &[&report])?;
    Ok(Outcome { text, passed })
}

pub fn operator(cfg: &ProblemConfig, f: &str, which: &str, coord: usize, out_dir: Option<&Path>) -> Result<Outcome> {
    let op: Operator = which.parse().map_err(|_| CliError::Usage(format!("unknown operator `{which}` (cl, cr, rll, rlr, cc, crl)")))?;
    if coord == 0 || coord > cfg.dim {
        return Err(CliError::Usage(format!("--coord must lie in 1..={}", cfg.dim)));
    }
    let expr = parse_expr(f, cfg.dim, "--fn")?;
    if expr.variables().iter().any(|v| *v != Var::Time) {
        return Err(CliError::Usage("--fn may only reference t".into()));
    }
    let sampled = GridFn::sample(&expr, cfg.grid)?;
    let result = op.apply(&sampled, &cfg.orders[coord - 1])?;
    let dir = out_dir.map_or_else(|| cfg.output_dir.clone(), Path::to_path_buf);
    std::fs::create_dir_all(&dir).map_err(|e| CliError::Core(e.into()))?;
    let path = dir.join(format!("operator_{}.csv", op.code()));
    write_atomic(&path, &gridfn_to_csv(&result))?;
    let mut text = header("operator", cfg);
    let _ = writeln!(text, "# fn = {expr}\n# operator = {} (order {})", op.code(), cfg.orders[coord - 1]);
    let invalid = result.mask().iter().filter(|ok| !**ok).count();
    let _ = writeln!(text, "sup {}  invalid nodes {invalid}", fmt_f64(result.sup_norm()));
    let _ = writeln!(text, "wrote {}", path.display());
    Ok(Outcome { text, passed: true })
}

//! INI-style problem configuration.
//!
//! ```text
//! [problem]
//! N = 1
//! lagrangian = 0.5*v1^2 - 0.5*q1^2
//!
//! [orders]
//! alpha1 = 0.5
//! beta1 = 0.5
//! gamma1 = 0.5
//!
//! [grid]
//! a = 0
//! b = 1
//! n = 256
//!
//! [boundary]
//! qa = 0
//! qb = 0.8
//! ```
//!
//! Optional sections: `[solver]`, `[checks]`, `[output]`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use fracvar::dynamics::{discretization_tolerance, hamiltonian_symbolic, ALGEBRAIC_TOLERANCE};
use fracvar::expr::Point;
use fracvar::solver::Method;
use fracvar::{
    BoundaryData, Expr, FracOrder, HamiltonianSpec, InitialGuess, LagrangianSpec, SolverConfig, UniformGrid,
};

use crate::error::{CliError, Result};

const SECTIONS: [(&str, &[&str]); 7] = [
    ("problem", &["N", "lagrangian", "hamiltonian"]),
    ("orders", &[]),
    ("grid", &["a", "b", "n"]),
    ("boundary", &["qa", "qb"]),
    ("solver", &["method", "max_iterations", "gradient_tolerance", "residual_tolerance", "seed", "restarts"]),
    ("checks", &["el_tolerance", "canonical_tolerance", "constant_tolerance", "transform_tolerance", "hj_tolerance"]),
    ("output", &["dir"]),
];

#[derive(Debug, Clone)]
struct Entry {
    value: String,
    line: usize,
}

#[derive(Debug, Default)]
struct Section {
    line: usize,
    entries: BTreeMap<String, Entry>,
}

/// Parsed but unvalidated `key = value` pairs.
#[derive(Debug)]
struct Ini {
    path: PathBuf,
    sections: BTreeMap<String, Section>,
    last_line: usize,
}

impl Ini {
    fn parse(path: &Path, text: &str) -> Result<Self> {
        let err = |line: usize, message: String| CliError::Config { path: path.to_path_buf(), line, message };
        let mut sections: BTreeMap<String, Section> = BTreeMap::new();
        let mut current: Option<String> = None;
        let mut last_line = 0;
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            last_line = line;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            if let Some(rest) = content.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| err(line, format!("unterminated section header `{content}`")))?
                    .trim();
                if !SECTIONS.iter().any(|(s, _)| *s == name) {
                    return Err(err(line, format!("unknown section [{name}]")));
                }
                if sections.contains_key(name) {
                    return Err(err(line, format!("duplicate section [{name}]")));
                }
                sections.insert(name.to_string(), Section { line, entries: BTreeMap::new() });
                current = Some(name.to_string());
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(err(line, format!("expected `key = value`, found `{content}`")));
            };
            let Some(section) = &current else {
                return Err(err(line, "key outside of any section".into()));
            };
            let (key, value) = (key.trim(), value.trim());
            if !key_allowed(section, key) {
                return Err(err(line, format!("unknown key `{key}` in section [{section}]")));
            }
            let entries = &mut sections.get_mut(section).expect("section was inserted").entries;
            if let Some(prev) = entries.get(key) {
                return Err(err(line, format!("duplicate key `{key}` (first set on line {})", prev.line)));
            }
            entries.insert(key.to_string(), Entry { value: value.to_string(), line });
        }
        Ok(Self { path: path.to_path_buf(), sections, last_line })
    }

    fn err(&self, line: usize, message: impl Into<String>) -> CliError {
        CliError::Config { path: self.path.clone(), line, message: message.into() }
    }

    fn section(&self, name: &str) -> Result<&Section> {
        self.sections.get(name).ok_or_else(|| self.err(self.last_line, format!("missing section [{name}]")))
    }

    fn get(&self, section: &str, key: &str) -> Option<&Entry> {
        self.sections.get(section).and_then(|s| s.entries.get(key))
    }

    fn require(&self, section: &str, key: &str) -> Result<&Entry> {
        let s = self.section(section)?;
        s.entries
            .get(key)
            .ok_or_else(|| self.err(s.line, format!("missing key `{key}` in section [{section}]")))
    }

    fn number<T: std::str::FromStr>(&self, e: &Entry, key: &str) -> Result<T> {
        e.value.parse().map_err(|_| self.err(e.line, format!("`{key}` must be a number, got `{}`", e.value)))
    }

    fn list(&self, e: &Entry, key: &str) -> Result<Vec<f64>> {
        e.value
            .split(',')
            .map(|s| s.trim().parse::<f64>().map_err(|_| self.err(e.line, format!("`{key}` has a bad entry `{}`", s.trim()))))
            .collect()
    }
}

fn key_allowed(section: &str, key: &str) -> bool {
    let indexed = |prefixes: &[&str]| {
        prefixes.iter().any(|p| {
            key.strip_prefix(p).is_some_and(|rest| !rest.is_empty() && rest.bytes().all(|b| b.is_ascii_digit()))
        })
    };
    match section {
        "orders" => indexed(&["alpha", "beta", "gamma"]),
        "solver" if indexed(&["initial_guess"]) => true,
        _ => SECTIONS.iter().any(|(s, keys)| *s == section && keys.contains(&key)),
    }
}

/// Per-check tolerances; `None` selects the default for that check.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Tolerances {
    pub el: Option<f64>,
    pub canonical: Option<f64>,
    pub constant: Option<f64>,
    pub transform: Option<f64>,
    pub hj: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct ProblemConfig {
    pub path: PathBuf,
    pub dim: usize,
    pub orders: Vec<FracOrder>,
    pub grid: UniformGrid,
    pub lagrangian: Option<LagrangianSpec>,
    pub hamiltonian: Option<HamiltonianSpec>,
    pub boundary: Option<BoundaryData>,
    pub method: Method,
    pub solver: SolverConfig,
    pub tolerances: Tolerances,
    pub output_dir: PathBuf,
    /// Provenance lines for values set outside the file.
    pub overrides: Vec<String>,
}

impl ProblemConfig {
    pub fn load(path: &Path, env_seed: Option<&str>) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::ConfigFile { path: path.to_path_buf(), message: e.to_string() })?;
        Self::from_text(path, &text, env_seed)
    }

    pub fn from_text(path: &Path, text: &str, env_seed: Option<&str>) -> Result<Self> {
        let ini = Ini::parse(path, text)?;

        let n_entry = ini.require("problem", "N")?;
        let dim: usize = ini.number(n_entry, "N")?;
        if dim == 0 {
            return Err(ini.err(n_entry.line, "N must be at least 1"));
        }

        let orders_sec = ini.section("orders")?;
        for (key, e) in &orders_sec.entries {
            let idx: usize = key.trim_start_matches(char::is_alphabetic).parse().unwrap_or(0);
            if idx == 0 || idx > dim {
                return Err(ini.err(e.line, format!("`{key}` refers to coordinate {idx}, but N = {dim}")));
            }
        }
        let mut orders = Vec::with_capacity(dim);
        for i in 1..=dim {
            let a = ini.require("orders", &format!("alpha{i}"))?;
            let b = ini.require("orders", &format!("beta{i}"))?;
            let g = ini.require("orders", &format!("gamma{i}"))?;
            let o = FracOrder::new(
                ini.number(a, &format!("alpha{i}"))?,
                ini.number(b, &format!("beta{i}"))?,
                ini.number(g, &format!("gamma{i}"))?,
            )
            .map_err(|e| ini.err(a.line.max(b.line).max(g.line), format!("coordinate {i}: {e}")))?;
            orders.push(o);
        }

        let a = ini.require("grid", "a")?;
        let b = ini.require("grid", "b")?;
        let n = ini.require("grid", "n")?;
        let grid = UniformGrid::new(ini.number(a, "a")?, ini.number(b, "b")?, ini.number(n, "n")?)
            .map_err(|e| ini.err(n.line, e.to_string()))?;

        let lagrangian = match ini.get("problem", "lagrangian") {
            Some(e) => Some(LagrangianSpec::parse(&e.value, orders.clone()).map_err(|err| ini.err(e.line, err.to_string()))?),
            None => None,
        };
        let hamiltonian = match ini.get("problem", "hamiltonian") {
            Some(e) => Some(HamiltonianSpec::parse(&e.value, orders.clone()).map_err(|err| ini.err(e.line, err.to_string()))?),
            None => None,
        };

        let boundary = match (ini.get("boundary", "qa"), ini.get("boundary", "qb")) {
            (Some(qa), Some(qb)) => {
                let (va, vb) = (ini.list(qa, "qa")?, ini.list(qb, "qb")?);
                if va.len() != dim || vb.len() != dim {
                    return Err(ini.err(qa.line.max(qb.line), format!("boundary lists need {dim} values each")));
                }
                Some(BoundaryData::new(va, vb).map_err(|e| ini.err(qa.line, e.to_string()))?)
            }
            (None, None) => None,
            (Some(e), None) | (None, Some(e)) => return Err(ini.err(e.line, "boundary needs both `qa` and `qb`")),
        };

        let mut solver = SolverConfig::default();
        let mut method = Method::Direct;
        if let Some(e) = ini.get("solver", "method") {
            method = match e.value.as_str() {
                "direct" => Method::Direct,
                "canonical" => Method::Canonical,
                other => return Err(ini.err(e.line, format!("unknown method `{other}` (direct or canonical)"))),
            };
        }
        if let Some(e) = ini.get("solver", "max_iterations") {
            solver.max_iterations = ini.number(e, "max_iterations")?;
        }
        if let Some(e) = ini.get("solver", "gradient_tolerance") {
            solver.gradient_tolerance = ini.number(e, "gradient_tolerance")?;
        }
        if let Some(e) = ini.get("solver", "residual_tolerance") {
            solver.residual_tolerance = ini.number(e, "residual_tolerance")?;
        }
        if let Some(e) = ini.get("solver", "seed") {
            solver.seed = ini.number(e, "seed")?;
        }
        if let Some(e) = ini.get("solver", "restarts") {
            solver.restarts = ini.number(e, "restarts")?;
        }
        let guesses: Vec<Option<&Entry>> = (1..=dim).map(|i| ini.get("solver", &format!("initial_guess{i}"))).collect();
        if let Some(sec) = ini.sections.get("solver") {
            for (key, e) in sec.entries.iter().filter(|(k, _)| k.starts_with("initial_guess")) {
                let idx: usize = key["initial_guess".len()..].parse().unwrap_or(0);
                if idx == 0 || idx > dim {
                    return Err(ini.err(e.line, format!("`{key}` refers to coordinate {idx}, but N = {dim}")));
                }
            }
            if guesses.iter().any(Option::is_some) {
                let mut exprs = Vec::with_capacity(dim);
                for (i, g) in guesses.iter().enumerate() {
                    let e = g.ok_or_else(|| ini.err(sec.line, format!("missing key `initial_guess{}`", i + 1)))?;
                    let expr = Expr::parse(&e.value, dim).map_err(|err| ini.err(e.line, err.to_string()))?;
                    if expr.variables().iter().any(|v| *v != fracvar::Var::Time) {
                        return Err(ini.err(e.line, "an initial guess may only reference t"));
                    }
                    exprs.push(expr);
                }
                solver.initial_guess = InitialGuess::Expression(exprs);
            }
            solver.validate().map_err(|e| ini.err(sec.line, e.to_string()))?;
        }

        let mut tolerances = Tolerances::default();
        for (key, slot) in [
            ("el_tolerance", &mut tolerances.el),
            ("canonical_tolerance", &mut tolerances.canonical),
            ("constant_tolerance", &mut tolerances.constant),
            ("transform_tolerance", &mut tolerances.transform),
            ("hj_tolerance", &mut tolerances.hj),
        ] {
            if let Some(e) = ini.get("checks", key) {
                let v: f64 = ini.number(e, key)?;
                if !(v >= 0.0 && v.is_finite()) {
                    return Err(ini.err(e.line, format!("`{key}` must be a non-negative number")));
                }
                *slot = Some(v);
            }
        }

        let output_dir = ini.get("output", "dir").map_or_else(|| PathBuf::from("fracvar-out"), |e| PathBuf::from(&e.value));

        let mut cfg = Self {
            path: path.to_path_buf(),
            dim,
            orders,
            grid,
            lagrangian,
            hamiltonian,
            boundary,
            method,
            solver,
            tolerances,
            output_dir,
            overrides: Vec::new(),
        };
        if let Some(seed) = env_seed {
            cfg.solver.seed = seed
                .trim()
                .parse()
                .map_err(|_| CliError::Usage(format!("FRACVAR_SEED must be a non-negative integer, got `{seed}`")))?;
            cfg.overrides.push(format!("seed = {} (FRACVAR_SEED)", cfg.solver.seed));
        }
        let line_of = |key| ini.get("problem", key).map_or(ini.last_line, |e| e.line);
        if cfg.lagrangian.is_none() && cfg.hamiltonian.is_none() {
            return Err(ini.err(ini.section("problem")?.line, "[problem] needs a lagrangian or a hamiltonian"));
        }
        cfg.cross_validate().map_err(|m| ini.err(line_of("hamiltonian"), m))?;
        Ok(cfg)
    }

    /// Command-line expressions replace the configured ones.
    pub fn apply_overrides(&mut self, lagrangian: Option<&str>, hamiltonian: Option<&str>) -> Result<()> {
        if let Some(text) = lagrangian {
            let l = LagrangianSpec::parse(text, self.orders.clone())
                .map_err(|e| CliError::Input { context: "--lagrangian".into(), source: e })?;
            self.lagrangian = Some(l);
            self.overrides.push(format!("lagrangian = {text} (command line)"));
        }
        if let Some(text) = hamiltonian {
            let h = HamiltonianSpec::parse(text, self.orders.clone())
                .map_err(|e| CliError::Input { context: "--hamiltonian".into(), source: e })?;
            self.hamiltonian = Some(h);
            self.overrides.push(format!("hamiltonian = {text} (command line)"));
        }
        if lagrangian.is_some() || hamiltonian.is_some() {
            self.cross_validate().map_err(CliError::Usage)?;
        }
        Ok(())
    }

    /// With both expressions present, `H` must be the Legendre transform of `L`.
    fn cross_validate(&self) -> std::result::Result<(), String> {
        let (Some(l), Some(h)) = (&self.lagrangian, &self.hamiltonian) else {
            return Ok(());
        };
        let derived = hamiltonian_symbolic(l)
            .ok_or_else(|| "a hamiltonian can only accompany a lagrangian that is quadratic in the velocities".to_string())?;
        for k in 0..8 {
            let t = self.grid.a() + (self.grid.b() - self.grid.a()) * (k as f64 + 0.5) / 8.0;
            let q: Vec<f64> = (0..self.dim).map(|i| (1.3 * (k + i) as f64 + 0.4).sin()).collect();
            let p: Vec<f64> = (0..self.dim).map(|i| (0.7 * (k + 2 * i) as f64 + 1.1).cos()).collect();
            let pt = Point::at(t).q(&q).p(&p);
            let (want, got) = match (derived.body().eval(&pt), h.body().eval(&pt)) {
                (Ok(w), Ok(g)) => (w, g),
                _ => continue,
            };
            if (want - got).abs() > 1e-9 * (1.0 + want.abs()) {
                return Err(format!("hamiltonian `{h}` is not the Legendre transform of the lagrangian (expected `{derived}`)"));
            }
        }
        Ok(())
    }

    pub fn require_lagrangian(&self) -> Result<&LagrangianSpec> {
        self.lagrangian.as_ref().ok_or_else(|| CliError::Usage("this command needs a lagrangian".into()))
    }

    /// The configured Hamiltonian, or the Legendre transform of the Lagrangian.
    pub fn resolve_hamiltonian(&self) -> Result<HamiltonianSpec> {
        if let Some(h) = &self.hamiltonian {
            return Ok(h.clone());
        }
        let l = self.require_lagrangian()?;
        hamiltonian_symbolic(l)
            .ok_or_else(|| CliError::Usage("no hamiltonian given and the lagrangian is not quadratic in the velocities".into()))
    }

    pub fn require_boundary(&self) -> Result<&BoundaryData> {
        self.boundary.as_ref().ok_or_else(|| CliError::Usage("this command needs a [boundary] section".into()))
    }

    pub fn discretization_tolerance(&self) -> f64 {
        discretization_tolerance(&self.grid, &self.orders)
    }

    pub fn el_tolerance(&self) -> f64 {
        self.tolerances.el.unwrap_or_else(|| self.discretization_tolerance())
    }

    pub fn canonical_tolerance(&self) -> f64 {
        self.tolerances.canonical.unwrap_or_else(|| self.discretization_tolerance())
    }

    pub fn constant_tolerance(&self) -> f64 {
        self.tolerances.constant.unwrap_or_else(|| self.discretization_tolerance())
    }

    pub fn transform_tolerance(&self) -> f64 {
        self.tolerances.transform.unwrap_or_else(|| 10.0 * self.grid.h() * self.grid.h())
    }

    pub fn hj_tolerance(&self) -> f64 {
        self.tolerances.hj.unwrap_or(ALGEBRAIC_TOLERANCE)
    }

    /// Normalized configuration, one `# key = value` line each.
    pub fn echo(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# config = {}", self.path.display());
        let _ = writeln!(s, "# N = {}", self.dim);
        for (i, o) in self.orders.iter().enumerate() {
            let _ = writeln!(s, "# alpha{0} = {1}, beta{0} = {2}, gamma{0} = {3}", i + 1, o.alpha(), o.beta(), o.gamma());
        }
        let _ = writeln!(s, "# grid = [{}, {}], n = {}", self.grid.a(), self.grid.b(), self.grid.n());
        if let Some(l) = &self.lagrangian {
            let _ = writeln!(s, "# lagrangian = {l}");
        }
        if let Some(h) = &self.hamiltonian {
            let _ = writeln!(s, "# hamiltonian = {h}");
        }
        if let Some(bd) = &self.boundary {
            let _ = writeln!(s, "# qa = {:?}, qb = {:?}", bd.qa(), bd.qb());
        }
        let c = &self.solver;
        let _ = writeln!(
            s,
            "# solver: method = {}, max_iterations = {}, gradient_tolerance = {:e}, residual_tolerance = {:e}, seed = {}, restarts = {}",
            self.method.name(),
            c.max_iterations,
            c.gradient_tolerance,
            c.residual_tolerance,
            c.seed,
            c.restarts
        );
        if let InitialGuess::Expression(exprs) = &c.initial_guess {
            for (i, e) in exprs.iter().enumerate() {
                let _ = writeln!(s, "# initial_guess{} = {e}", i + 1);
            }
        }
        for o in &self.overrides {
            let _ = writeln!(s, "# override: {o}");
        }
        s
    }
}

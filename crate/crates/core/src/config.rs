//! Problem configuration files.
//!
//! Sectioned `key = value` text, `#` comments:
//!
//! ```text
//! [grid]
//! nx = 64
//! ny = 64
//! lx = 2.0
//! ly = 1.0
//! edges.left = neumann
//! edges.right = dirichlet
//! doors.top = 0.4:0.6, 1.4:1.6
//!
//! [model]
//! p = 4
//! horizon = 1.0
//!
//! [velocity]
//! kind = toward_exit
//! ```
//!
//! Every key has a default except `grid.nx`, `grid.ny` and `model.p`.
//! Unknown sections and keys, duplicates, and keys that do not apply to
//! the chosen `kind` are errors. [`Config::echo`] writes every resolved
//! value and parses back to the same configuration.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::domain::{
    constant_velocity, toward_exit_velocity, velocity_from_cells, ProblemSpec, SourceTerm,
    TimeProfile,
};
use crate::error::{CrowdError, Result};
use crate::field::{FaceVectorField, ScalarField};
use crate::grid::{BoundaryKind, Edge, Grid2D};
use crate::io::{fmt_f64, read_field_csv};
use crate::stationary::{LinearSolver, SolverConfig};

pub const DEFAULT_EPS: f64 = 1e-3;
pub const DEFAULT_TAU: f64 = 1e-2;
pub const DEFAULT_HORIZON: f64 = 1.0;

const SECTIONS: [&str; 6] = ["grid", "model", "velocity", "source", "initial", "solver"];
const BOX_KEYS: [&str; 4] = ["x0", "x1", "y0", "y1"];

#[derive(Debug, Clone, PartialEq)]
struct Entry {
    value: String,
    /// 0 for command-line overrides.
    line: usize,
}

/// Parsed but unresolved `section → key → value` table.
#[derive(Debug, Clone, PartialEq)]
pub struct RawConfig {
    entries: BTreeMap<String, BTreeMap<String, Entry>>,
    base_dir: PathBuf,
}

impl RawConfig {
    /// Relative `file` paths resolve against `base_dir`.
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let mut entries: BTreeMap<String, BTreeMap<String, Entry>> = BTreeMap::new();
        let mut section: Option<String> = None;
        for (k, raw) in text.lines().enumerate() {
            let line = k + 1;
            let content = strip_comment(raw).trim();
            if content.is_empty() {
                continue;
            }
            if let Some(rest) = content.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| parse_err(line, "unterminated section header"))?
                    .trim();
                if !SECTIONS.contains(&name) {
                    return Err(parse_err(line, format!("unknown section [{name}]")));
                }
                entries.entry(name.to_string()).or_default();
                section = Some(name.to_string());
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| {
                parse_err(line, format!("expected `key = value`, got `{content}`"))
            })?;
            let sec = section
                .as_ref()
                .ok_or_else(|| parse_err(line, "key outside any section"))?;
            let key = key.trim();
            let value = unquote(value.trim());
            if key.is_empty() {
                return Err(parse_err(line, "empty key"));
            }
            let table = entries.entry(sec.clone()).or_default();
            if let Some(prev) = table.get(key) {
                return Err(parse_err(
                    line,
                    format!(
                        "duplicate key {sec}.{key} (first set on line {})",
                        prev.line
                    ),
                ));
            }
            table.insert(
                key.to_string(),
                Entry {
                    value: value.to_string(),
                    line,
                },
            );
        }
        Ok(Self {
            entries,
            base_dir: base_dir.to_path_buf(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let dir = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, dir)
    }

    /// `section.key=value`, replacing any value from the file.
    pub fn set(&mut self, assignment: &str) -> Result<()> {
        let bad = |msg: String| CrowdError::Parse { line: 0, msg };
        let (path, value) = assignment.split_once('=').ok_or_else(|| {
            bad(format!(
                "--set expects section.key=value, got `{assignment}`"
            ))
        })?;
        let (sec, key) = path
            .trim()
            .split_once('.')
            .ok_or_else(|| bad(format!("--set key `{path}` needs a section prefix")))?;
        if !SECTIONS.contains(&sec) {
            return Err(bad(format!("--set: unknown section [{sec}]")));
        }
        self.entries.entry(sec.to_string()).or_default().insert(
            key.trim().to_string(),
            Entry {
                value: unquote(value.trim()).to_string(),
                line: 0,
            },
        );
        Ok(())
    }

    pub fn resolve(&self) -> Result<Config> {
        let mut r = Resolver {
            raw: self,
            used: BTreeMap::new(),
        };
        let cfg = r.config()?;
        r.reject_unused()?;
        Ok(cfg)
    }
}

fn strip_comment(line: &str) -> &str {
    match line.find('#') {
        Some(k) => &line[..k],
        None => line,
    }
}

fn unquote(s: &str) -> &str {
    s.strip_prefix('"')
        .and_then(|x| x.strip_suffix('"'))
        .unwrap_or(s)
}

fn parse_err(line: usize, msg: impl Into<String>) -> CrowdError {
    CrowdError::Parse {
        line,
        msg: msg.into(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSection {
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
    /// Left, right, bottom, top.
    pub edges: [BoundaryKind; 4],
    pub doors: Vec<(Edge, f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSection {
    pub p: f64,
    pub eps: f64,
    pub tau: f64,
    pub horizon: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum VelocitySpec {
    Zero,
    Constant {
        vx: f64,
        vy: f64,
    },
    TowardExit {
        speed: f64,
    },
    /// Cell-centred components, averaged onto faces.
    FromFile {
        file_x: PathBuf,
        file_y: PathBuf,
    },
}

/// A cell field: zero, constant, an indicator box times a value, or a CSV.
#[derive(Debug, Clone, PartialEq)]
pub enum FieldSpec {
    Zero,
    Constant(f64),
    Box {
        value: f64,
        x: [f64; 2],
        y: [f64; 2],
    },
    FromFile(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SourceSection {
    pub field: FieldSpec,
    pub profile: TimeProfile,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverSection {
    /// Max-norm residual tolerance; `None` means the grid-scaled default.
    pub tol: Option<f64>,
    pub max_newton: usize,
    pub max_picard: usize,
    pub linear: LinearSolver,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub grid: GridSection,
    pub model: ModelSection,
    pub velocity: VelocitySpec,
    pub source: SourceSection,
    pub initial: FieldSpec,
    pub solver: SolverSection,
}

struct Resolver<'a> {
    raw: &'a RawConfig,
    used: BTreeMap<(String, String), ()>,
}

impl Resolver<'_> {
    fn entry(&mut self, sec: &str, key: &str) -> Option<&Entry> {
        let e = self.raw.entries.get(sec)?.get(key)?;
        self.used.insert((sec.to_string(), key.to_string()), ());
        Some(e)
    }

    fn err(&self, sec: &str, key: &str, msg: impl std::fmt::Display) -> CrowdError {
        let line = self
            .raw
            .entries
            .get(sec)
            .and_then(|t| t.get(key))
            .map(|e| e.line)
            .unwrap_or(0);
        parse_err(line, format!("{sec}.{key}: {msg}"))
    }

    fn text(&mut self, sec: &str, key: &str) -> Option<String> {
        self.entry(sec, key).map(|e| e.value.clone())
    }

    fn f64_or(&mut self, sec: &str, key: &str, default: Option<f64>) -> Result<f64> {
        match self.text(sec, key) {
            Some(v) => {
                let x: f64 = v
                    .parse()
                    .map_err(|_| self.err(sec, key, format!("`{v}` is not a number")))?;
                if !x.is_finite() {
                    return Err(self.err(sec, key, "must be finite"));
                }
                Ok(x)
            }
            None => {
                default.ok_or_else(|| parse_err(0, format!("missing required key {sec}.{key}")))
            }
        }
    }

    fn usize_or(&mut self, sec: &str, key: &str, default: Option<usize>) -> Result<usize> {
        match self.text(sec, key) {
            Some(v) => v
                .parse()
                .map_err(|_| self.err(sec, key, format!("`{v}` is not a nonnegative integer"))),
            None => {
                default.ok_or_else(|| parse_err(0, format!("missing required key {sec}.{key}")))
            }
        }
    }

    fn path(&mut self, sec: &str, key: &str) -> Result<PathBuf> {
        let v = self
            .text(sec, key)
            .ok_or_else(|| parse_err(0, format!("missing required key {sec}.{key}")))?;
        let p = PathBuf::from(&v);
        Ok(if p.is_absolute() {
            p
        } else {
            self.raw.base_dir.join(p)
        })
    }

    fn config(&mut self) -> Result<Config> {
        Ok(Config {
            grid: self.grid()?,
            model: self.model()?,
            velocity: self.velocity()?,
            source: SourceSection {
                field: self.field("source")?,
                profile: self.profile()?,
            },
            initial: self.field("initial")?,
            solver: self.solver()?,
        })
    }

    fn grid(&mut self) -> Result<GridSection> {
        let nx = self.usize_or("grid", "nx", None)?;
        let ny = self.usize_or("grid", "ny", None)?;
        let lx = self.f64_or("grid", "lx", Some(1.0))?;
        let ly = self.f64_or("grid", "ly", Some(1.0))?;
        let mut edges = [BoundaryKind::NeumannWall; 4];
        let mut doors = Vec::new();
        for (slot, edge) in [Edge::Left, Edge::Right, Edge::Bottom, Edge::Top]
            .into_iter()
            .enumerate()
        {
            let key = format!("edges.{}", edge.name());
            if let Some(v) = self.text("grid", &key) {
                edges[slot] = match v.as_str() {
                    "dirichlet" => BoundaryKind::DirichletExit,
                    "neumann" => BoundaryKind::NeumannWall,
                    _ => {
                        return Err(self.err(
                            "grid",
                            &key,
                            format!("expected dirichlet or neumann, got `{v}`"),
                        ))
                    }
                };
            }
            let key = format!("doors.{}", edge.name());
            if let Some(v) = self.text("grid", &key) {
                for part in v.split(',') {
                    let (a, b) = part.trim().split_once(':').ok_or_else(|| {
                        self.err(
                            "grid",
                            &key,
                            format!("expected a:b intervals, got `{part}`"),
                        )
                    })?;
                    let a: f64 = a
                        .trim()
                        .parse()
                        .map_err(|_| self.err("grid", &key, "bad interval start"))?;
                    let b: f64 = b
                        .trim()
                        .parse()
                        .map_err(|_| self.err("grid", &key, "bad interval end"))?;
                    doors.push((edge, a, b));
                }
            }
        }
        Ok(GridSection {
            nx,
            ny,
            lx,
            ly,
            edges,
            doors,
        })
    }

    fn model(&mut self) -> Result<ModelSection> {
        Ok(ModelSection {
            p: self.f64_or("model", "p", None)?,
            eps: self.f64_or("model", "eps", Some(DEFAULT_EPS))?,
            tau: self.f64_or("model", "tau", Some(DEFAULT_TAU))?,
            horizon: self.f64_or("model", "horizon", Some(DEFAULT_HORIZON))?,
        })
    }

    fn kind(&mut self, sec: &str, allowed: &[&str]) -> Result<String> {
        let k = self.text(sec, "kind").unwrap_or_else(|| "zero".to_string());
        if !allowed.contains(&k.as_str()) {
            return Err(self.err(
                sec,
                "kind",
                format!("expected one of {}, got `{k}`", allowed.join(", ")),
            ));
        }
        Ok(k)
    }

    fn velocity(&mut self) -> Result<VelocitySpec> {
        Ok(
            match self
                .kind(
                    "velocity",
                    &["zero", "constant", "toward_exit", "from_file"],
                )?
                .as_str()
            {
                "zero" => VelocitySpec::Zero,
                "constant" => VelocitySpec::Constant {
                    vx: self.f64_or("velocity", "vx", Some(0.0))?,
                    vy: self.f64_or("velocity", "vy", Some(0.0))?,
                },
                "toward_exit" => VelocitySpec::TowardExit {
                    speed: self.f64_or("velocity", "speed", Some(1.0))?,
                },
                _ => VelocitySpec::FromFile {
                    file_x: self.path("velocity", "file_x")?,
                    file_y: self.path("velocity", "file_y")?,
                },
            },
        )
    }

    fn field(&mut self, sec: &str) -> Result<FieldSpec> {
        Ok(
            match self
                .kind(sec, &["zero", "constant", "box", "from_file"])?
                .as_str()
            {
                "zero" => FieldSpec::Zero,
                "constant" => FieldSpec::Constant(self.f64_or(sec, "value", None)?),
                "box" => {
                    let value = self.f64_or(sec, "value", None)?;
                    let mut c = [0.0; 4];
                    for (slot, key) in c.iter_mut().zip(BOX_KEYS) {
                        *slot = self.f64_or(sec, key, None)?;
                    }
                    FieldSpec::Box {
                        value,
                        x: [c[0], c[1]],
                        y: [c[2], c[3]],
                    }
                }
                _ => FieldSpec::FromFile(self.path(sec, "file")?),
            },
        )
    }

    fn profile(&mut self) -> Result<TimeProfile> {
        let p = self
            .text("source", "profile")
            .unwrap_or_else(|| "constant".to_string());
        Ok(match p.as_str() {
            "constant" => TimeProfile::Constant,
            "window" => TimeProfile::Window {
                t_on: self.f64_or("source", "t_on", None)?,
                t_off: self.f64_or("source", "t_off", None)?,
            },
            "sine" => TimeProfile::Sine {
                omega: self.f64_or("source", "omega", None)?,
            },
            "ramp" => TimeProfile::Ramp,
            _ => {
                return Err(self.err(
                    "source",
                    "profile",
                    format!("expected constant, window, sine or ramp, got `{p}`"),
                ))
            }
        })
    }

    fn solver(&mut self) -> Result<SolverSection> {
        let d = SolverConfig::default();
        let tol = match self.text("solver", "tol") {
            None => None,
            Some(v) if v == "auto" => None,
            Some(_) => Some(self.f64_or("solver", "tol", None)?),
        };
        let linear = match self.text("solver", "linear").as_deref() {
            None | Some("direct") => LinearSolver::Direct,
            Some("krylov") => LinearSolver::Krylov,
            Some(other) => {
                return Err(self.err(
                    "solver",
                    "linear",
                    format!("expected direct or krylov, got `{other}`"),
                ))
            }
        };
        Ok(SolverSection {
            tol,
            max_newton: self.usize_or("solver", "max_newton", Some(d.max_newton))?,
            max_picard: self.usize_or("solver", "max_picard", Some(d.max_picard))?,
            linear,
        })
    }

    fn reject_unused(&self) -> Result<()> {
        for (sec, table) in &self.raw.entries {
            for (key, e) in table {
                if !self.used.contains_key(&(sec.clone(), key.clone())) {
                    return Err(parse_err(
                        e.line,
                        format!("unknown or inapplicable key {sec}.{key}"),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Parse, apply `--set` overrides, resolve.
pub fn load_config_with(path: &Path, overrides: &[String]) -> Result<Config> {
    let mut raw = RawConfig::load(path)?;
    for o in overrides {
        raw.set(o)?;
    }
    raw.resolve()
}

/// Loads a configuration file and builds the problem it describes.
pub fn load_config(path: &Path) -> Result<ProblemSpec> {
    load_config_with(path, &[])?.to_spec()
}

impl Config {
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        RawConfig::parse(text, base_dir)?.resolve()
    }

    pub fn build_grid(&self) -> Result<Grid2D> {
        let g = &self.grid;
        Grid2D::with_doors(g.nx, g.ny, g.lx, g.ly, g.edges, &g.doors)
    }

    pub fn to_spec(&self) -> Result<ProblemSpec> {
        let grid = self.build_grid()?;
        let velocity = match &self.velocity {
            VelocitySpec::Zero => FaceVectorField::zeros(&grid),
            VelocitySpec::Constant { vx, vy } => constant_velocity(&grid, [*vx, *vy]),
            VelocitySpec::TowardExit { speed } => toward_exit_velocity(&grid, *speed),
            VelocitySpec::FromFile { file_x, file_y } => velocity_from_cells(
                &grid,
                &read_field_csv(file_x, &grid)?,
                &read_field_csv(file_y, &grid)?,
            )?,
        };
        let source = SourceTerm {
            base: build_field(&self.source.field, &grid)?,
            profile: self.source.profile,
        };
        let u0 = build_field(&self.initial, &grid)?;
        let m = &self.model;
        ProblemSpec::new(grid, m.p, m.eps, m.tau, m.horizon, velocity, source, u0)
    }

    pub fn solver_config(&self) -> SolverConfig {
        SolverConfig {
            newton_tol: self.solver.tol,
            max_newton: self.solver.max_newton,
            max_picard: self.solver.max_picard,
            linear_solver: self.solver.linear,
            ..SolverConfig::default()
        }
    }

    /// Every resolved value, in a form [`Config::parse`] reads back.
    pub fn echo(&self) -> String {
        let mut s = String::new();
        let g = &self.grid;
        let kind = |k: BoundaryKind| match k {
            BoundaryKind::DirichletExit => "dirichlet",
            BoundaryKind::NeumannWall => "neumann",
        };
        let _ = writeln!(s, "[grid]");
        let _ = writeln!(s, "nx = {}", g.nx);
        let _ = writeln!(s, "ny = {}", g.ny);
        let _ = writeln!(s, "lx = {}", fmt_f64(g.lx));
        let _ = writeln!(s, "ly = {}", fmt_f64(g.ly));
        for (slot, edge) in [Edge::Left, Edge::Right, Edge::Bottom, Edge::Top]
            .into_iter()
            .enumerate()
        {
            let _ = writeln!(s, "edges.{} = {}", edge.name(), kind(g.edges[slot]));
        }
        for edge in [Edge::Left, Edge::Right, Edge::Bottom, Edge::Top] {
            let parts: Vec<String> = g
                .doors
                .iter()
                .filter(|d| d.0 == edge)
                .map(|d| format!("{}:{}", fmt_f64(d.1), fmt_f64(d.2)))
                .collect();
            if !parts.is_empty() {
                let _ = writeln!(s, "doors.{} = {}", edge.name(), parts.join(", "));
            }
        }
        let m = &self.model;
        let _ = writeln!(s, "\n[model]");
        let _ = writeln!(s, "p = {}", fmt_f64(m.p));
        let _ = writeln!(s, "eps = {}", fmt_f64(m.eps));
        let _ = writeln!(s, "tau = {}", fmt_f64(m.tau));
        let _ = writeln!(s, "horizon = {}", fmt_f64(m.horizon));

        let _ = writeln!(s, "\n[velocity]");
        match &self.velocity {
            VelocitySpec::Zero => {
                let _ = writeln!(s, "kind = zero");
            }
            VelocitySpec::Constant { vx, vy } => {
                let _ = writeln!(
                    s,
                    "kind = constant\nvx = {}\nvy = {}",
                    fmt_f64(*vx),
                    fmt_f64(*vy)
                );
            }
            VelocitySpec::TowardExit { speed } => {
                let _ = writeln!(s, "kind = toward_exit\nspeed = {}", fmt_f64(*speed));
            }
            VelocitySpec::FromFile { file_x, file_y } => {
                let _ = writeln!(
                    s,
                    "kind = from_file\nfile_x = {}\nfile_y = {}",
                    file_x.display(),
                    file_y.display()
                );
            }
        }

        let _ = writeln!(s, "\n[source]");
        echo_field(&mut s, &self.source.field);
        match self.source.profile {
            TimeProfile::Constant => {
                let _ = writeln!(s, "profile = constant");
            }
            TimeProfile::Window { t_on, t_off } => {
                let _ = writeln!(
                    s,
                    "profile = window\nt_on = {}\nt_off = {}",
                    fmt_f64(t_on),
                    fmt_f64(t_off)
                );
            }
            TimeProfile::Sine { omega } => {
                let _ = writeln!(s, "profile = sine\nomega = {}", fmt_f64(omega));
            }
            TimeProfile::Ramp => {
                let _ = writeln!(s, "profile = ramp");
            }
        }

        let _ = writeln!(s, "\n[initial]");
        echo_field(&mut s, &self.initial);

        let sv = &self.solver;
        let _ = writeln!(s, "\n[solver]");
        let _ = writeln!(
            s,
            "tol = {}",
            sv.tol.map(fmt_f64).unwrap_or_else(|| "auto".into())
        );
        let _ = writeln!(s, "max_newton = {}", sv.max_newton);
        let _ = writeln!(s, "max_picard = {}", sv.max_picard);
        let _ = writeln!(
            s,
            "linear = {}",
            match sv.linear {
                LinearSolver::Direct => "direct",
                LinearSolver::Krylov => "krylov",
            }
        );
        s
    }
}

fn echo_field(s: &mut String, f: &FieldSpec) {
    let _ = match f {
        FieldSpec::Zero => writeln!(s, "kind = zero"),
        FieldSpec::Constant(v) => writeln!(s, "kind = constant\nvalue = {}", fmt_f64(*v)),
        FieldSpec::Box { value, x, y } => writeln!(
            s,
            "kind = box\nvalue = {}\nx0 = {}\nx1 = {}\ny0 = {}\ny1 = {}",
            fmt_f64(*value),
            fmt_f64(x[0]),
            fmt_f64(x[1]),
            fmt_f64(y[0]),
            fmt_f64(y[1])
        ),
        FieldSpec::FromFile(p) => writeln!(s, "kind = from_file\nfile = {}", p.display()),
    };
}

fn build_field(f: &FieldSpec, grid: &Grid2D) -> Result<ScalarField> {
    match f {
        FieldSpec::Zero => Ok(ScalarField::zeros(grid)),
        FieldSpec::Constant(v) => Ok(ScalarField::constant(grid, *v)),
        FieldSpec::Box { value, x, y } => Ok(ScalarField::from_fn(grid, |c| {
            if c[0] >= x[0] && c[0] <= x[1] && c[1] >= y[0] && c[1] <= y[1] {
                *value
            } else {
                0.0
            }
        })),
        FieldSpec::FromFile(p) => read_field_csv(p, grid),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[grid]\nnx = 8\nny = 4\nedges.right = dirichlet\n[model]\np = 4\n";

    fn here() -> &'static Path {
        Path::new(".")
    }

    #[test]
    fn minimal_config_takes_defaults() {
        let c = Config::parse(MINIMAL, here()).unwrap();
        assert_eq!(c.model.eps, 1e-3);
        assert_eq!(c.model.tau, 1e-2);
        assert_eq!(c.model.horizon, 1.0);
        assert_eq!((c.grid.lx, c.grid.ly), (1.0, 1.0));
        assert_eq!(c.velocity, VelocitySpec::Zero);
        assert_eq!(c.initial, FieldSpec::Zero);
        let spec = c.to_spec().unwrap();
        assert_eq!(spec.grid.nx(), 8);
        assert_eq!(spec.num_steps(), 100);
    }

    #[test]
    fn unknown_keys_report_lines() {
        let text = "[grid]\nnx = 8\nny = 4\nedges.right = dirichlet\n[model]\np = 4\nrho = 3\n";
        match Config::parse(text, here()) {
            Err(CrowdError::Parse { line, msg }) => {
                assert_eq!(line, 7);
                assert!(msg.contains("model.rho"), "{msg}");
            }
            other => panic!("{other:?}"),
        }
        let text = "[grid]\nnx = 8\nny = 4\n[mdoel]\n";
        assert!(matches!(
            Config::parse(text, here()),
            Err(CrowdError::Parse { line: 4, .. })
        ));
        let text = "[grid]\nnx = 8\nnx = 9\n";
        assert!(matches!(
            Config::parse(text, here()),
            Err(CrowdError::Parse { line: 3, .. })
        ));
        let text = "nx = 8\n";
        assert!(matches!(
            Config::parse(text, here()),
            Err(CrowdError::Parse { line: 1, .. })
        ));
        let text = "[grid]\nnx = eight\n";
        assert!(matches!(
            Config::parse(text, here()),
            Err(CrowdError::Parse { line: 2, .. })
        ));
        // Applies only to kind = constant.
        let text = format!("{MINIMAL}[velocity]\nkind = zero\nvx = 1\n");
        assert!(matches!(
            Config::parse(&text, here()),
            Err(CrowdError::Parse { line: 9, .. })
        ));
    }

    #[test]
    fn initial_density_above_one_is_rejected() {
        let text = format!("{MINIMAL}[initial]\nkind = constant\nvalue = 1.5\n");
        let err = Config::parse(&text, here()).unwrap().to_spec().unwrap_err();
        assert!(err.to_string().contains("0 ≤ u₀ ≤ 1"), "{err}");
    }

    #[test]
    fn overrides_replace_values() {
        let mut raw = RawConfig::parse(MINIMAL, here()).unwrap();
        raw.set("model.p=8").unwrap();
        raw.set("grid.edges.left = dirichlet").unwrap();
        let c = raw.resolve().unwrap();
        assert_eq!(c.model.p, 8.0);
        assert_eq!(c.grid.edges[0], BoundaryKind::DirichletExit);
        assert!(raw.set("p=8").is_err());
        raw.set("model.nope=1").unwrap();
        assert!(matches!(
            raw.resolve(),
            Err(CrowdError::Parse { line: 0, .. })
        ));
    }

    #[test]
    fn toward_exit_velocity_is_unit_and_outgoing() {
        let text = "[grid]\nnx = 16\nny = 8\nlx = 2\ndoors.right = 0.25:0.75\n[model]\np = 4\n[velocity]\nkind = toward_exit\n";
        let spec = Config::parse(text, here()).unwrap().to_spec().unwrap();
        let g = &spec.grid;
        for f in g.boundary_faces() {
            if g.label(f) == BoundaryKind::DirichletExit {
                let (is_x, k) = g.boundary_face_index(f);
                let vn = if is_x {
                    spec.velocity.x[k]
                } else {
                    spec.velocity.y[k]
                };
                let n = f.edge.normal();
                assert!(vn * (n[0] + n[1]) >= 0.0);
            }
        }
        for j in 0..g.ny() {
            for i in 1..g.nx() {
                assert!(spec.velocity.x[g.xface(i, j)].abs() <= 1.0 + 1e-12);
            }
        }
    }

    #[test]
    fn echo_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("u0.csv");
        let vals: Vec<String> = (0..32)
            .map(|k| format!("{}", (k as f64 / 31.0) * 0.9))
            .collect();
        std::fs::write(&f, format!("8,4\n{}\n", vals.join(","))).unwrap();
        let text = "[grid]\nnx = 8\nny = 4\nlx = 0.3\nedges.top = dirichlet\ndoors.left = 0.1:0.2, 0.5:0.7\n\
            [model]\np = 6.5\neps = 0.01\ntau = 0.1\nhorizon = 0.3\n\
            [velocity]\nkind = constant\nvx = 0.1\nvy = -0.2\n\
            [source]\nkind = box\nvalue = 2\nx0 = 0.1\nx1 = 0.2\ny0 = 0\ny1 = 0.5\nprofile = window\nt_on = 0.1\nt_off = 0.2\n\
            [initial]\nkind = from_file\nfile = u0.csv\n\
            [solver]\ntol = 1e-9\nlinear = krylov\n";
        let c = Config::parse(text, dir.path()).unwrap();
        let back = Config::parse(&c.echo(), Path::new("/elsewhere")).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_spec().unwrap(), c.to_spec().unwrap());
        assert_eq!(back.echo(), c.echo());
    }
}

//! Command-line driver. [`run`] parses arguments, executes one command and
//! returns the process exit status:
//! 0 success, 1 validation failure, 2 solver non-convergence, 3 I/O error.

use std::fmt;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crowd_core::config::{Config, RawConfig};
use crowd_core::diagnostics::{contraction_records, DiagnosticRecord, ENERGY};
use crowd_core::domain::{validate_velocity, ProblemSpec, SourceTerm, CHECK_BOUNDARY_LAYER};
use crowd_core::evolution::{evolve_with, EvolveOptions, Trajectory};
use crowd_core::grid::{BoundaryKind, Edge};
use crowd_core::io;
use crowd_core::limit::{
    gradient_saturation_map, p_sweep, standard_test_pairs, variational_inequality_residual,
};
use crowd_core::stationary::{energy_estimate_check, solve_stationary_report, StationaryProblem};
use crowd_core::{scenarios, CrowdError, ScalarField};
use crowd_oracle::{oracle_evolve, DenseSystem1D, End, OracleError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_NONCONVERGENCE: i32 = 2;
pub const EXIT_IO: i32 = 3;

/// Wall-flux tolerance for the velocity checks.
pub const TOL_BC: f64 = 1e-10;
/// Residual bound for the variational-inequality certificate, per unit of `|Ω|·T`.
pub const VI_TOL: f64 = 1e-3;
/// Number of generated `(ξ, ψ)` pairs.
pub const VI_PAIRS: usize = 20;

#[derive(Debug, Parser)]
#[command(
    name = "crowd",
    version,
    about = "Congested crowd motion on a rectangle"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, clap::Args)]
pub struct Common {
    /// Config file, or the name of a bundled scenario.
    #[arg(long)]
    pub config: String,
    /// Output directory (created if missing).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// `section.key=value`, applied after the file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Keep every k-th snapshot.
    #[arg(long, default_value_t = 1)]
    pub snapshot_stride: usize,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// One resolvent step from `u0` with `rhs = u0 + τ f_0`.
    SolveStationary(Common),
    /// Implicit Euler run to the horizon with snapshots and a mass ledger.
    Evolve(Common),
    /// Lockstep runs of the config and randomized perturbations of `u0` and `f`.
    ContractionTest {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 3)]
        pairs: usize,
    },
    /// Saturation of `|∇v|` over increasing `p`, then the limit inequality check.
    PSweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated exponents.
        #[arg(long = "p", value_delimiter = ',', default_value = "4,8,16,32,64")]
        p_list: Vec<f64>,
    },
    /// Check the velocity field against the boundary hypotheses.
    ValidateConfig(Common),
    /// Dense 1D reference run along the middle row.
    #[command(name = "oracle-1d")]
    Oracle1d(Common),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::SolveStationary(_) => "solve-stationary",
            Command::Evolve(_) => "evolve",
            Command::ContractionTest { .. } => "contraction-test",
            Command::PSweep { .. } => "p-sweep",
            Command::ValidateConfig(_) => "validate-config",
            Command::Oracle1d(_) => "oracle-1d",
        }
    }

    fn common(&self) -> &Common {
        match self {
            Command::SolveStationary(c)
            | Command::Evolve(c)
            | Command::ValidateConfig(c)
            | Command::Oracle1d(c) => c,
            Command::ContractionTest { common, .. } | Command::PSweep { common, .. } => common,
        }
    }
}

/// Failure of one command, tagged with its exit status.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub msg: String,
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.msg)
    }
}

impl From<CrowdError> for Failure {
    fn from(e: CrowdError) -> Self {
        let code = match e {
            CrowdError::Io(_) => EXIT_IO,
            CrowdError::NonConvergence(_) => EXIT_NONCONVERGENCE,
            _ => EXIT_VALIDATION,
        };
        Failure {
            code,
            msg: e.to_string(),
        }
    }
}

impl From<OracleError> for Failure {
    fn from(e: OracleError) -> Self {
        let code = match e {
            OracleError::Continuation { .. } => EXIT_NONCONVERGENCE,
            _ => EXIT_VALIDATION,
        };
        Failure {
            code,
            msg: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure {
            code: EXIT_IO,
            msg: format!("i/o error: {e}"),
        }
    }
}

fn fail(code: i32, msg: impl Into<String>) -> Failure {
    Failure {
        code,
        msg: msg.into(),
    }
}

type Outcome = std::result::Result<(), Failure>;

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() {
                EXIT_VALIDATION
            } else {
                EXIT_OK
            };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli.command) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("error: {f}");
            f.code
        }
    }
}

/// Resolves `--config` (file or bundled name) with overrides applied.
pub fn resolve_config(common: &Common) -> std::result::Result<(Config, String), Failure> {
    let path = Path::new(&common.config);
    let mut raw = if path.exists() {
        RawConfig::load(path)?
    } else if let Some(text) = scenarios::text(&common.config) {
        RawConfig::parse(text, Path::new("."))?
    } else {
        return Err(fail(
            EXIT_IO,
            format!("{}: no such file or bundled scenario", common.config),
        ));
    };
    for o in &common.overrides {
        raw.set(o)?;
    }
    let cfg = raw.resolve()?;
    let source = if path.exists() {
        std::fs::canonicalize(path)?.display().to_string()
    } else {
        format!("bundled:{}", common.config)
    };
    Ok((cfg, source))
}

struct Run<'a> {
    cmd: &'a Command,
    cfg: Config,
    spec: ProblemSpec,
    config_source: String,
    out: Option<PathBuf>,
}

impl Run<'_> {
    fn out(&self) -> std::result::Result<&Path, Failure> {
        self.out
            .as_deref()
            .ok_or_else(|| fail(EXIT_VALIDATION, format!("{} needs --out", self.cmd.name())))
    }

    fn path(&self, name: &str) -> std::result::Result<PathBuf, Failure> {
        Ok(self.out()?.join(name))
    }

    fn manifest(&self, extra: serde_json::Value) -> Outcome {
        let Some(out) = &self.out else { return Ok(()) };
        let c = self.cmd.common();
        let mut m = json!({
            "command": self.cmd.name(),
            "config": self.config_source,
            "out": out.display().to_string(),
            "seed": c.seed,
            "overrides": c.overrides,
            "snapshot_stride": c.snapshot_stride,
            "resolved_config": self.cfg.echo(),
        });
        if let (Some(m), serde_json::Value::Object(e)) = (m.as_object_mut(), extra) {
            m.extend(e);
        }
        let text =
            serde_json::to_string_pretty(&m).map_err(|e| fail(EXIT_IO, e.to_string()))? + "\n";
        io::write_text(&out.join("manifest.json"), &text)?;
        Ok(())
    }
}

fn execute(cmd: &Command) -> Outcome {
    let common = cmd.common();
    if common.snapshot_stride == 0 {
        return Err(fail(
            EXIT_VALIDATION,
            "--snapshot-stride must be at least 1",
        ));
    }
    let (cfg, config_source) = resolve_config(common)?;
    let spec = cfg.to_spec()?;
    if let Some(out) = &common.out {
        std::fs::create_dir_all(out)?;
    }
    let run = Run {
        cmd,
        cfg,
        spec,
        config_source,
        out: common.out.clone(),
    };
    match cmd {
        Command::ValidateConfig(_) => validate(&run),
        Command::SolveStationary(_) => stationary(&run),
        Command::Evolve(_) => evolve_cmd(&run),
        Command::ContractionTest { pairs, .. } => contraction(&run, *pairs),
        Command::PSweep { p_list, .. } => sweep(&run, p_list),
        Command::Oracle1d(_) => oracle(&run),
    }
}

fn print_records(records: &[DiagnosticRecord]) {
    for r in records {
        let status = if r.passed { "ok  " } else { "FAIL" };
        let step = r.step.map(|s| format!(" step {s}")).unwrap_or_default();
        println!(
            "{status} {}{step}: {:.6e} (threshold {:.6e})",
            r.name, r.value, r.threshold
        );
    }
}

fn validate(run: &Run) -> Outcome {
    let report = validate_velocity(&run.spec, TOL_BC)?;
    print_records(&report.checks);
    if let Some(out) = &run.out {
        io::write_diagnostics_csv(&out.join("validation.csv"), &report.checks)?;
    }
    run.manifest(json!({}))?;
    let hard = report
        .checks
        .iter()
        .filter(|c| c.name != CHECK_BOUNDARY_LAYER)
        .all(|c| c.passed);
    if hard {
        println!("config valid");
        Ok(())
    } else {
        Err(fail(EXIT_VALIDATION, "velocity hypotheses violated"))
    }
}

fn stationary(run: &Run) -> Outcome {
    let spec = &run.spec;
    let f0 = spec.source.average(0.0, spec.tau);
    let rhs = spec.u0.zip_map(&f0, |u, f| u + spec.tau * f);
    let prob = StationaryProblem::new(spec.operator_context()?, spec.eps, spec.tau, rhs)?
        .with_source(f0.clone())?;
    let solver = run.cfg.solver_config();
    let sol = solve_stationary_report(&prob, &ScalarField::zeros(&spec.grid), &solver)?;
    let energy = energy_estimate_check(&sol.u, &sol.v, &prob);
    let tol = solver.tolerance(&spec.grid);
    let mut records = vec![
        crowd_core::diagnostics::box_bound_record(&sol.u),
        DiagnosticRecord::new(
            ENERGY,
            energy.lhs - energy.rhs_bound,
            1e-8 * (energy.lhs + 1.0),
        ),
        crowd_core::diagnostics::appendix_inequality_check(&sol.u, &sol.v, &f0, spec, tol),
    ];
    if rhs_nonnegative(&prob) {
        records.push(DiagnosticRecord::new(
            crowd_core::diagnostics::NONNEGATIVITY,
            -sol.u.min().min(sol.v.min()),
            1e-10,
        ));
    }
    print_records(&records);
    let (nx, ny) = (spec.grid.nx(), spec.grid.ny());
    io::write_snapshot_csv(&run.path("u.csv")?, spec.tau, sol.u.values(), nx, ny)?;
    io::write_snapshot_csv(&run.path("v.csv")?, spec.tau, sol.v.values(), nx, ny)?;
    io::write_diagnostics_csv(&run.path("diagnostics.csv")?, &records)?;
    let r = &sol.report;
    run.manifest(json!({
        "converged": r.converged,
        "iterations": r.iterations,
        "final_residual_norm": r.final_residual_norm,
        "method_used": r.method_used.name(),
    }))?;
    if r.converged {
        Ok(())
    } else {
        Err(fail(
            EXIT_NONCONVERGENCE,
            format!(
                "stationary solve stopped at residual {:.3e}",
                r.final_residual_norm
            ),
        ))
    }
}

fn rhs_nonnegative(prob: &StationaryProblem) -> bool {
    prob.rhs.min() >= 0.0
}

fn write_trajectory(out: &Path, traj: &Trajectory, nx: usize, ny: usize) -> Outcome {
    for (k, &step) in traj.steps.iter().enumerate() {
        let t = traj.times[k];
        io::write_snapshot_csv(
            &out.join(io::snapshot_name("u", step)),
            t,
            traj.u[k].values(),
            nx,
            ny,
        )?;
        io::write_snapshot_csv(
            &out.join(io::snapshot_name("v", step)),
            t,
            traj.v[k].values(),
            nx,
            ny,
        )?;
    }
    io::write_ledger_csv(&out.join("ledger.csv"), &traj.ledger)?;
    io::write_diagnostics_csv(&out.join("diagnostics.csv"), &traj.diagnostics)?;
    Ok(())
}

fn evolve_cmd(run: &Run) -> Outcome {
    let out = run.out()?;
    let opts = EvolveOptions {
        snapshot_stride: run.cmd.common().snapshot_stride,
        ..EvolveOptions::default()
    };
    let (nx, ny) = (run.spec.grid.nx(), run.spec.grid.ny());
    let (traj, failure) = match evolve_with(&run.spec, &run.cfg.solver_config(), &opts) {
        Ok(t) => (t, None),
        Err(e) => (*e.partial.clone(), Some(e)),
    };
    write_trajectory(out, &traj, nx, ny)?;
    let failed: Vec<DiagnosticRecord> = traj
        .diagnostics
        .iter()
        .filter(|d| !d.passed)
        .cloned()
        .collect();
    let mut names: Vec<&str> = failed.iter().map(|d| d.name.as_str()).collect();
    names.dedup();
    println!(
        "{} steps, final mass {:.6e}, {} of {} diagnostic records failed{}",
        traj.ledger.len(),
        traj.final_u().integral(&run.spec.grid),
        failed.len(),
        traj.diagnostics.len(),
        if names.is_empty() {
            String::new()
        } else {
            format!(" ({})", names.join(", "))
        }
    );
    run.manifest(json!({
        "steps_completed": traj.ledger.len(),
        "steps_requested": run.spec.num_steps(),
        "failed_diagnostics": failed.len(),
    }))?;
    match failure {
        None => Ok(()),
        Some(e) => Err(fail(EXIT_NONCONVERGENCE, e.to_string())),
    }
}

/// Perturbs `u0` by up to ±0.3 and adds up to 0.5 to the source base, cell by cell.
pub fn perturbed_spec(spec: &ProblemSpec, rng: &mut ChaCha8Rng) -> crowd_core::Result<ProblemSpec> {
    let grid = &spec.grid;
    let u0: Vec<f64> = spec
        .u0
        .values()
        .iter()
        .map(|&u| (u + rng.gen_range(-0.3..=0.3)).clamp(0.0, 1.0))
        .collect();
    let base: Vec<f64> = spec
        .source
        .base
        .values()
        .iter()
        .map(|&f| f + rng.gen_range(0.0..=0.5))
        .collect();
    let mut out = spec.clone();
    out.u0 = ScalarField::from_vec(grid, u0)?;
    out.source = SourceTerm {
        base: ScalarField::from_vec(grid, base)?,
        profile: spec.source.profile,
    };
    out.check()?;
    Ok(out)
}

fn contraction(run: &Run, pairs: usize) -> Outcome {
    let out = run.out()?;
    let mut rng = ChaCha8Rng::seed_from_u64(run.cmd.common().seed);
    let solver = run.cfg.solver_config();
    let opts = EvolveOptions {
        diagnostics: false,
        ..EvolveOptions::default()
    };
    let base = evolve_with(&run.spec, &solver, &opts).map_err(CrowdError::from)?;
    let mut all = Vec::new();
    for k in 0..pairs {
        let other = perturbed_spec(&run.spec, &mut rng)?;
        let traj = evolve_with(&other, &solver, &opts).map_err(CrowdError::from)?;
        let recs = contraction_records(&base, &traj, &run.spec, &other);
        let worst = recs
            .iter()
            .map(|r| r.value)
            .fold(f64::NEG_INFINITY, f64::max);
        let ok = recs.iter().all(|r| r.passed);
        println!(
            "pair {k}: worst step increment {worst:.6e} {}",
            if ok { "ok" } else { "FAIL" }
        );
        all.extend(recs.into_iter().map(|r| DiagnosticRecord {
            name: format!("{}_pair{k}", r.name),
            ..r
        }));
    }
    io::write_diagnostics_csv(&out.join("contraction.csv"), &all)?;
    let failed = all.iter().filter(|r| !r.passed).count();
    run.manifest(json!({ "pairs": pairs, "failed_records": failed }))?;
    if failed == 0 {
        Ok(())
    } else {
        Err(fail(
            EXIT_VALIDATION,
            format!("{failed} contraction records exceed 1e-8"),
        ))
    }
}

fn sweep(run: &Run, p_list: &[f64]) -> Outcome {
    let out = run.out()?;
    let res = p_sweep(&run.spec, p_list, &run.cfg.solver_config())?;
    io::write_psweep_csv(&out.join("psweep.csv"), &res)?;
    for r in &res.records {
        println!(
            "p = {}: max|grad v| {:.6}, u_inf {:.6}, saturated {:.4}{}",
            r.p,
            r.max_grad,
            r.linf_u,
            r.saturation_fraction,
            r.failure
                .as_ref()
                .map(|f| format!(" ({f})"))
                .unwrap_or_default()
        );
    }
    let mut vi_failed = 0;
    if let Some(limit) = &res.limit {
        let spec = run.spec.with_p(res.limit_p().expect("limit exists"))?;
        let (nx, ny) = (spec.grid.nx(), spec.grid.ny());
        let sat = gradient_saturation_map(limit.final_v(), &spec.operator_context()?);
        io::write_snapshot_csv(
            &out.join("saturation.csv"),
            limit.times[limit.len() - 1],
            sat.values(),
            nx,
            ny,
        )?;
        let bound = VI_TOL * spec.space_time_volume();
        let mut rows = Vec::new();
        for pair in standard_test_pairs(&spec.grid, spec.horizon, VI_PAIRS)? {
            let r = variational_inequality_residual(limit, &spec, &pair.xi, &pair.psi)?;
            rows.push(io::ViRow {
                test_id: pair.id,
                family: pair.family.name().to_string(),
                residual: r,
                passed: r <= bound,
            });
        }
        vi_failed = rows.iter().filter(|r| !r.passed).count();
        println!(
            "variational inequality: {vi_failed} of {} pairs above {bound:.3e}",
            rows.len()
        );
        io::write_vi_csv(&out.join("vi.csv"), &rows)?;
    }
    run.manifest(json!({
        "p_list": p_list,
        "limit_p": res.limit_p(),
        "vi_failed": vi_failed,
    }))?;
    if !res.all_converged() {
        return Err(fail(
            EXIT_NONCONVERGENCE,
            "at least one exponent did not converge",
        ));
    }
    Ok(())
}

fn end_of(labels: &[BoundaryKind], edge: Edge) -> std::result::Result<End, Failure> {
    match labels {
        [BoundaryKind::DirichletExit, rest @ ..]
            if rest.iter().all(|&l| l == BoundaryKind::DirichletExit) =>
        {
            Ok(End::Exit)
        }
        l if l.iter().all(|&k| k == BoundaryKind::NeumannWall) => Ok(End::Wall),
        _ => Err(fail(
            EXIT_VALIDATION,
            format!("oracle-1d needs a uniform {} edge", edge.name()),
        )),
    }
}

fn oracle(run: &Run) -> Outcome {
    let out = run.out()?;
    let spec = &run.spec;
    let grid = &spec.grid;
    let (nx, j) = (grid.nx(), grid.ny() / 2);
    let left = end_of(grid.edge_labels(Edge::Left), Edge::Left)?;
    let right = end_of(grid.edge_labels(Edge::Right), Edge::Right)?;
    let row = |f: &ScalarField| f.values()[j * nx..(j + 1) * nx].to_vec();
    let velocity = (0..=nx)
        .map(|i| spec.velocity.x[grid.xface(i, j)])
        .collect();
    let sys = DenseSystem1D::new(
        nx,
        grid.lx(),
        spec.p,
        spec.eps,
        spec.tau,
        vec![0.0; nx],
        velocity,
        left,
        right,
    )?;
    let steps = spec.num_steps();
    let sources: Vec<Vec<f64>> = (0..steps)
        .map(|i| {
            let t = i as f64 * spec.tau;
            row(&spec.source.average(t, t + spec.tau))
        })
        .collect();
    let traj = oracle_evolve(&sys, &row(&spec.u0), &sources)?;
    let stride = run.cmd.common().snapshot_stride;
    let mut mass = Vec::new();
    for k in 0..traj.u.len() {
        mass.push(traj.mass(k, sys.h));
        if k % stride == 0 || k == steps {
            let t = traj.times[k];
            io::write_snapshot_csv(
                &out.join(io::snapshot_name("oracle_u", k)),
                t,
                &traj.u[k],
                nx,
                1,
            )?;
            io::write_snapshot_csv(
                &out.join(io::snapshot_name("oracle_v", k)),
                t,
                &traj.v[k],
                nx,
                1,
            )?;
        }
    }
    io::write_snapshot_csv(
        &out.join("oracle_mass.csv"),
        traj.times[steps],
        &mass,
        mass.len(),
        1,
    )?;
    println!(
        "oracle-1d: {steps} steps on row {j}, final mass per unit height {:.6e}",
        mass[steps]
    );
    run.manifest(json!({ "row": j, "steps": steps }))?;
    Ok(())
}

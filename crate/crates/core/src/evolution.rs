//! Implicit Euler stepping: `u_{i+1} − τΔ_p v_{i+1} + τ div(u_{i+1} V) = u_i + τ f_i`.

use serde::{Deserialize, Serialize};

use crate::diagnostics::{self, DiagnosticRecord};
use crate::domain::{ProblemSpec, SolveReport, SourceTerm};
use crate::error::{CrowdError, Result};
use crate::field::{FaceVectorField, ScalarField};
use crate::grid::BoundaryKind;
use crate::ops;
use crate::stationary::{
    energy_estimate_check, solve_stationary_report, SolverConfig, StationaryProblem,
};

/// Snapshots `(t_k, u_k, v_k)` of one run. `v_0` is stored as zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub tau: f64,
    pub horizon: f64,
    /// Step index of each snapshot.
    pub steps: Vec<usize>,
    pub times: Vec<f64>,
    pub u: Vec<ScalarField>,
    pub v: Vec<ScalarField>,
    /// One report per completed step.
    pub reports: Vec<SolveReport>,
    /// One entry per completed step.
    pub ledger: Vec<LedgerEntry>,
    pub diagnostics: Vec<DiagnosticRecord>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn is_dense(&self) -> bool {
        self.steps.iter().enumerate().all(|(k, &s)| k == s)
    }

    pub fn final_u(&self) -> &ScalarField {
        self.u.last().expect("trajectory holds u_0")
    }

    pub fn final_v(&self) -> &ScalarField {
        self.v.last().expect("trajectory holds v_0")
    }

    pub fn diagnostics_named<'a>(
        &'a self,
        name: &'a str,
    ) -> impl Iterator<Item = &'a DiagnosticRecord> + 'a {
        self.diagnostics.iter().filter(move |d| d.name == name)
    }
}

/// Mass bookkeeping for step `i → i+1`: `delta_mass = source + boundary_flux`
/// up to the solver residual.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub step: usize,
    pub t: f64,
    /// `∫ u_{i+1}`.
    pub mass: f64,
    pub delta_mass: f64,
    pub source: f64,
    /// `τ Σ_exit (p-flux − drift)·ν |face|`; negative for outflow.
    pub boundary_flux: f64,
    /// `|delta_mass − source − boundary_flux|`.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvolveOptions {
    /// Keep every k-th snapshot (the last one is always kept).
    pub snapshot_stride: usize,
    /// Per-step diagnostic records.
    pub diagnostics: bool,
    /// Newton starting point for the first step.
    pub initial_guess: Option<ScalarField>,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        Self {
            snapshot_stride: 1,
            diagnostics: true,
            initial_guess: None,
        }
    }
}

/// A step failed; carries everything computed up to it.
#[derive(Debug, Clone, thiserror::Error)]
#[error("step {step} did not converge (residual {residual:.3e})")]
pub struct EvolutionFailure {
    pub step: usize,
    pub residual: f64,
    pub partial: Box<Trajectory>,
}

impl From<EvolutionFailure> for CrowdError {
    fn from(e: EvolutionFailure) -> Self {
        CrowdError::NonConvergence(e.to_string())
    }
}

/// `f_i = (1/τ) ∫_{iτ}^{(i+1)τ} f`.
pub fn time_average_source(f: &SourceTerm, i: usize, tau: f64) -> Result<ScalarField> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(CrowdError::Parameter(format!(
            "tau must be positive, got {tau}"
        )));
    }
    let a = i as f64 * tau;
    Ok(f.average(a, a + tau))
}

pub fn evolve(
    spec: &ProblemSpec,
    cfg: &SolverConfig,
) -> std::result::Result<Trajectory, EvolutionFailure> {
    evolve_with(spec, cfg, &EvolveOptions::default())
}

pub fn evolve_with(
    spec: &ProblemSpec,
    cfg: &SolverConfig,
    opts: &EvolveOptions,
) -> std::result::Result<Trajectory, EvolutionFailure> {
    let grid = &spec.grid;
    let n = spec.num_steps();
    let stride = opts.snapshot_stride.max(1);
    let tol = cfg.tolerance(grid);
    let ctx = spec
        .operator_context()
        .expect("a checked ProblemSpec yields a valid operator context");
    let nonneg_source = spec.source.is_nonnegative();

    let mut traj = Trajectory {
        tau: spec.tau,
        horizon: spec.horizon,
        steps: vec![0],
        times: vec![0.0],
        u: vec![spec.u0.clone()],
        v: vec![ScalarField::zeros(grid)],
        reports: Vec::with_capacity(n),
        ledger: Vec::with_capacity(n),
        diagnostics: Vec::new(),
    };
    let mut u_prev = spec.u0.clone();
    let mut v_prev = match &opts.initial_guess {
        Some(g) if g.matches(grid) => g.clone(),
        _ => ScalarField::zeros(grid),
    };

    for i in 0..n {
        let t1 = (i + 1) as f64 * spec.tau;
        let f_i =
            time_average_source(&spec.source, i, spec.tau).expect("tau validated by ProblemSpec");
        let rhs = u_prev.zip_map(&f_i, |u, f| u + spec.tau * f);
        let prob = StationaryProblem::new(ctx.clone(), spec.eps, spec.tau, rhs)
            .and_then(|p| p.with_source(f_i.clone()))
            .expect("step data inherit ProblemSpec validation");
        let sol = match solve_stationary_report(&prob, &v_prev, cfg) {
            Ok(s) => s,
            Err(_) => {
                return Err(EvolutionFailure {
                    step: i + 1,
                    residual: f64::NAN,
                    partial: Box::new(traj),
                })
            }
        };
        let entry = ledger_entry(spec, &ctx, i, &u_prev, &sol.u, &sol.v, &f_i);

        if opts.diagnostics {
            let mut recs = Vec::new();
            let st = diagnostics::congestion_stats(&sol.u, &sol.v, spec.eps, grid);
            recs.push(diagnostics::box_bound_record(&sol.u));
            recs.push(DiagnosticRecord::new(
                diagnostics::COMPLEMENTARITY,
                st.complementarity,
                2.0 * spec.eps * grid.area() * st.max_v,
            ));
            if nonneg_source && spec.u0.min() >= 0.0 {
                recs.push(DiagnosticRecord::new(
                    diagnostics::NONNEGATIVITY,
                    (-sol.u.min()).max(-sol.v.min()),
                    1e-10,
                ));
            }
            if sol.report.converged {
                let e = energy_estimate_check(&sol.u, &sol.v, &prob);
                recs.push(DiagnosticRecord::new(
                    diagnostics::ENERGY,
                    e.lhs - e.rhs_bound,
                    1e-8 * (e.lhs + 1.0),
                ));
                recs.push(diagnostics::appendix_inequality_check(
                    &sol.u, &sol.v, &f_i, spec, tol,
                ));
            }
            recs.push(DiagnosticRecord::new(
                diagnostics::MASS_LEDGER,
                entry.residual,
                10.0 * tol,
            ));
            traj.diagnostics
                .extend(recs.into_iter().map(|r| r.at_step(i + 1, t1)));
        }

        traj.ledger.push(entry);
        let converged = sol.report.converged;
        let residual = sol.report.final_residual_norm;
        traj.reports.push(sol.report);
        if (i + 1) % stride == 0 || i + 1 == n || !converged {
            traj.steps.push(i + 1);
            traj.times.push(t1);
            traj.u.push(sol.u.clone());
            traj.v.push(sol.v.clone());
        }
        if !converged {
            return Err(EvolutionFailure {
                step: i + 1,
                residual,
                partial: Box::new(traj),
            });
        }
        u_prev = sol.u;
        v_prev = sol.v;
    }
    Ok(traj)
}

fn ledger_entry(
    spec: &ProblemSpec,
    ctx: &ops::OperatorContext,
    i: usize,
    u_prev: &ScalarField,
    u: &ScalarField,
    v: &ScalarField,
    f_i: &ScalarField,
) -> LedgerEntry {
    let grid = &spec.grid;
    let mass = u.integral(grid);
    let delta_mass = mass - u_prev.integral(grid);
    let source = spec.tau * f_i.integral(grid);
    let boundary_flux = spec.tau * exit_flux(ctx, u, v);
    LedgerEntry {
        step: i + 1,
        t: (i + 1) as f64 * spec.tau,
        mass,
        delta_mass,
        source,
        boundary_flux,
        residual: (delta_mass - source - boundary_flux).abs(),
    }
}

/// `Σ_exit (|∇v|^{p−2}∇v − uV)·ν |face|`.
fn exit_flux(ctx: &ops::OperatorContext, u: &ScalarField, v: &ScalarField) -> f64 {
    let grid = ctx.grid();
    let g = ops::face_gradient(v, grid);
    let fp = ops::p_flux(&g, ctx);
    let fd = ops::drift_flux(u, ctx);
    let total: FaceVectorField = fp.zip_map(&fd, |a, b| a - b);
    ops::boundary_outflow(&total, grid, |k| k == BoundaryKind::DirichletExit)
}

/// `ũ(t)`: linear in time between the stored snapshots bracketing `t`.
pub fn linear_interpolant(traj: &Trajectory, t: f64) -> Result<ScalarField> {
    let last = *traj
        .times
        .last()
        .ok_or_else(|| CrowdError::Parameter("empty trajectory".into()))?;
    if !(t >= 0.0 && t <= last) || !(t < traj.horizon || t == last) {
        return Err(CrowdError::Parameter(format!(
            "t = {t} outside [0, {last}]"
        )));
    }
    let k = traj.times.partition_point(|&s| s <= t);
    if k == 0 {
        return Ok(traj.u[0].clone());
    }
    let i = k - 1;
    if i + 1 >= traj.times.len() || traj.times[i] == t {
        return Ok(traj.u[i].clone());
    }
    let (a, b) = (traj.times[i], traj.times[i + 1]);
    let w = (t - a) / (b - a);
    Ok(traj.u[i].zip_map(&traj.u[i + 1], |x, y| (1.0 - w) * x + w * y))
}

/// Per-step ledger recomputed from a dense trajectory.
pub fn mass_balance_ledger(traj: &Trajectory, spec: &ProblemSpec) -> Result<Vec<LedgerEntry>> {
    if !traj.is_dense() {
        return Err(CrowdError::Parameter(
            "the ledger needs every step; rerun with snapshot stride 1".into(),
        ));
    }
    let ctx = spec.operator_context()?;
    let mut out = Vec::with_capacity(traj.len().saturating_sub(1));
    for i in 0..traj.len().saturating_sub(1) {
        let f_i = time_average_source(&spec.source, i, spec.tau)?;
        out.push(ledger_entry(
            spec,
            &ctx,
            i,
            &traj.u[i],
            &traj.u[i + 1],
            &traj.v[i + 1],
            &f_i,
        ));
    }
    Ok(out)
}

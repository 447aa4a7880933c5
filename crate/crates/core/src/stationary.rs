//! One resolvent step: find `v` with
//! `H_ε(v) − τ div(|∇v|^{p−2}∇v − H_ε(v) V) = rhs`, then `u = H_ε(v)`.
//!
//! Damped Newton with an Armijo line search on the Euclidean residual norm,
//! a Picard fallback with frozen coefficients, and continuation in `p`.
//! Both linearizations are applied matrix-free and turned into banded
//! matrices by probing the 3×3 stencil.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::domain::{Method, SolveReport};
use crate::error::{CrowdError, Result};
use crate::field::{FaceVectorField, ScalarField};
use crate::graph::{h_eps_derivative_unchecked, h_eps_unchecked};
use crate::grid::Grid2D;
use crate::linalg::{self, BandMatrix};
use crate::ops::{self, OperatorContext};

#[derive(Debug, Clone, PartialEq)]
pub struct StationaryProblem {
    pub ctx: OperatorContext,
    pub eps: f64,
    pub tau: f64,
    pub rhs: ScalarField,
    /// `f_i` when the problem is a time step; otherwise `rhs/τ` plays the source.
    pub source: Option<ScalarField>,
}

impl StationaryProblem {
    pub fn new(ctx: OperatorContext, eps: f64, tau: f64, rhs: ScalarField) -> Result<Self> {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(CrowdError::Parameter(format!(
                "eps must be positive, got {eps}"
            )));
        }
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(CrowdError::Parameter(format!(
                "tau must be positive, got {tau}"
            )));
        }
        if !rhs.matches(ctx.grid()) {
            return Err(CrowdError::Structure("rhs does not match the grid".into()));
        }
        if !rhs.is_finite() {
            return Err(CrowdError::Data("non-finite rhs".into()));
        }
        Ok(Self {
            ctx,
            eps,
            tau,
            rhs,
            source: None,
        })
    }

    pub fn with_source(mut self, f: ScalarField) -> Result<Self> {
        if !f.matches(self.ctx.grid()) {
            return Err(CrowdError::Structure(
                "source does not match the grid".into(),
            ));
        }
        self.source = Some(f);
        Ok(self)
    }

    pub fn grid(&self) -> &Grid2D {
        self.ctx.grid()
    }

    /// `f` in the energy balance.
    pub fn effective_source(&self) -> ScalarField {
        match &self.source {
            Some(f) => f.clone(),
            None => self.rhs.map(|r| r / self.tau),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LinearSolver {
    /// Jacobi-preconditioned GMRES, falling back to a direct solve when it
    /// misses the tolerance.
    Krylov,
    /// Banded LU.
    Direct,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Max-norm residual tolerance; `None` means `1e-10 · cell count`.
    pub newton_tol: Option<f64>,
    pub max_newton: usize,
    pub max_picard: usize,
    pub armijo_c: f64,
    /// Gradient floor `δ_J` used only inside linearizations.
    pub jac_floor: f64,
    /// Consecutive stalled Newton iterations before switching to Picard.
    pub stall_limit: usize,
    pub linear_rtol: f64,
    pub linear_solver: LinearSolver,
    /// Cold starts at or above this exponent begin from a solve at `p/2`.
    pub continuation_from: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            newton_tol: None,
            max_newton: 50,
            max_picard: 500,
            armijo_c: 1e-4,
            jac_floor: 1e-12,
            stall_limit: 5,
            linear_rtol: 1e-3,
            linear_solver: LinearSolver::Direct,
            continuation_from: 16.0,
        }
    }
}

impl SolverConfig {
    pub fn tolerance(&self, grid: &Grid2D) -> f64 {
        self.newton_tol.unwrap_or(1e-10 * grid.num_cells() as f64)
    }

    pub fn check(&self) -> Result<()> {
        let positive = |x: f64| x > 0.0 && x.is_finite();
        if let Some(t) = self.newton_tol {
            if !positive(t) {
                return Err(CrowdError::Parameter(format!(
                    "newton_tol must be positive, got {t}"
                )));
            }
        }
        if self.max_newton == 0 || self.max_picard == 0 || self.stall_limit == 0 {
            return Err(CrowdError::Parameter(
                "iteration caps must be positive".into(),
            ));
        }
        if !(positive(self.armijo_c) && self.armijo_c < 1.0) {
            return Err(CrowdError::Parameter(format!(
                "armijo_c must lie in (0, 1), got {}",
                self.armijo_c
            )));
        }
        if !positive(self.jac_floor)
            || !positive(self.linear_rtol)
            || !positive(self.continuation_from)
        {
            return Err(CrowdError::Parameter(
                "jac_floor, linear_rtol and continuation_from must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StationarySolution {
    pub u: ScalarField,
    pub v: ScalarField,
    pub report: SolveReport,
}

/// Face and cell buffers for evaluating the residual at one exponent.
struct Evaluator<'a> {
    grid: &'a Grid2D,
    vel: &'a FaceVectorField,
    rhs: &'a [f64],
    p: f64,
    eps: f64,
    tau: f64,
    g: FaceVectorField,
    t: FaceVectorField,
    flux: FaceVectorField,
    drift: FaceVectorField,
    u: Vec<f64>,
    div: Vec<f64>,
}

/// Per-face coefficients of a linearized flux, `dF = nn·dg + nt·dt`, and
/// the per-cell slope of `u` in `v`.
struct Linearization {
    nn: FaceVectorField,
    nt: FaceVectorField,
    hp: Vec<f64>,
}

impl<'a> Evaluator<'a> {
    fn new(prob: &'a StationaryProblem, p: f64) -> Self {
        let grid = prob.grid();
        Self {
            grid,
            vel: prob.ctx.velocity(),
            rhs: prob.rhs.values(),
            p,
            eps: prob.eps,
            tau: prob.tau,
            g: FaceVectorField::zeros(grid),
            t: FaceVectorField::zeros(grid),
            flux: FaceVectorField::zeros(grid),
            drift: FaceVectorField::zeros(grid),
            u: vec![0.0; grid.num_cells()],
            div: vec![0.0; grid.num_cells()],
        }
    }

    /// Fills `g` and `t` for `v`.
    fn prepare(&mut self, v: &[f64]) {
        ops::face_gradient_into(v, self.grid, &mut self.g);
        ops::transverse_into(&self.g, self.grid, &mut self.t);
    }

    fn residual(&mut self, v: &[f64], out: &mut [f64]) {
        self.prepare(v);
        let e = self.p - 2.0;
        for (f, (&g, &t)) in self.flux.x.iter_mut().zip(self.g.x.iter().zip(&self.t.x)) {
            *f = p_flux_scalar(g, t, e);
        }
        for (f, (&g, &t)) in self.flux.y.iter_mut().zip(self.g.y.iter().zip(&self.t.y)) {
            *f = p_flux_scalar(g, t, e);
        }
        for (u, &x) in self.u.iter_mut().zip(v) {
            *u = h_eps_unchecked(x, self.eps);
        }
        ops::drift_flux_into(&self.u, self.grid, self.vel, &mut self.drift);
        for (f, d) in self.flux.x.iter_mut().zip(&self.drift.x) {
            *f -= d;
        }
        for (f, d) in self.flux.y.iter_mut().zip(&self.drift.y) {
            *f -= d;
        }
        ops::divergence_into(&self.flux, self.grid, &mut self.div);
        for k in 0..out.len() {
            out[k] = self.u[k] - self.tau * self.div[k] - self.rhs[k];
        }
    }

    fn newton_linearization(&mut self, v: &[f64], floor: f64) -> Linearization {
        self.prepare(v);
        let e = self.p - 2.0;
        let coef = |g: f64, t: f64| -> (f64, f64) {
            let n = g.hypot(t);
            let a = if n == 0.0 { 0.0 } else { n.powf(e) };
            let b = e * n.max(floor).powf(self.p - 4.0) * g;
            (a + b * g, b * t)
        };
        let mut nn = FaceVectorField::zeros(self.grid);
        let mut nt = FaceVectorField::zeros(self.grid);
        for k in 0..nn.x.len() {
            (nn.x[k], nt.x[k]) = coef(self.g.x[k], self.t.x[k]);
        }
        for k in 0..nn.y.len() {
            (nn.y[k], nt.y[k]) = coef(self.g.y[k], self.t.y[k]);
        }
        let hp = v
            .iter()
            .map(|&x| h_eps_derivative_unchecked(x, self.eps))
            .collect();
        Linearization { nn, nt, hp }
    }

    /// Frozen coefficients: `|G|^{p−2}` floored away from 0, no transverse
    /// coupling, and the current graph slope.
    fn picard_linearization(&mut self, v: &[f64], floor: f64) -> Linearization {
        self.prepare(v);
        let e = self.p - 2.0;
        let coef = |g: f64, t: f64| g.hypot(t).max(floor).powf(e).max(floor);
        let mut nn = FaceVectorField::zeros(self.grid);
        for k in 0..nn.x.len() {
            nn.x[k] = coef(self.g.x[k], self.t.x[k]);
        }
        for k in 0..nn.y.len() {
            nn.y[k] = coef(self.g.y[k], self.t.y[k]);
        }
        let hp = v
            .iter()
            .map(|&x| h_eps_derivative_unchecked(x, self.eps))
            .collect();
        Linearization {
            nn,
            nt: FaceVectorField::zeros(self.grid),
            hp,
        }
    }
}

#[inline]
fn p_flux_scalar(g: f64, t: f64, e: f64) -> f64 {
    let n = g.hypot(t);
    if n == 0.0 {
        0.0
    } else {
        n.powf(e) * g
    }
}

/// Scratch space for applying a [`Linearization`].
struct LinScratch {
    dg: FaceVectorField,
    dt: FaceVectorField,
    du: Vec<f64>,
    dd: FaceVectorField,
    div: Vec<f64>,
}

impl LinScratch {
    fn new(grid: &Grid2D) -> Self {
        Self {
            dg: FaceVectorField::zeros(grid),
            dt: FaceVectorField::zeros(grid),
            du: vec![0.0; grid.num_cells()],
            dd: FaceVectorField::zeros(grid),
            div: vec![0.0; grid.num_cells()],
        }
    }
}

fn apply_linearization(
    grid: &Grid2D,
    vel: &FaceVectorField,
    tau: f64,
    lin: &Linearization,
    s: &mut LinScratch,
    w: &[f64],
    out: &mut [f64],
) {
    ops::face_gradient_into(w, grid, &mut s.dg);
    ops::transverse_into(&s.dg, grid, &mut s.dt);
    for k in 0..s.dg.x.len() {
        s.dg.x[k] = lin.nn.x[k] * s.dg.x[k] + lin.nt.x[k] * s.dt.x[k];
    }
    for k in 0..s.dg.y.len() {
        s.dg.y[k] = lin.nn.y[k] * s.dg.y[k] + lin.nt.y[k] * s.dt.y[k];
    }
    for k in 0..w.len() {
        s.du[k] = lin.hp[k] * w[k];
    }
    ops::drift_flux_into(&s.du, grid, vel, &mut s.dd);
    for k in 0..s.dg.x.len() {
        s.dg.x[k] -= s.dd.x[k];
    }
    for k in 0..s.dg.y.len() {
        s.dg.y[k] -= s.dd.y[k];
    }
    ops::divergence_into(&s.dg, grid, &mut s.div);
    for k in 0..w.len() {
        out[k] = s.du[k] - tau * s.div[k];
    }
}

/// `R(v) = H_ε(v) − τ div(|∇v|^{p−2}∇v − H_ε(v) V) − rhs`.
pub fn assemble_residual(v: &ScalarField, prob: &StationaryProblem) -> Result<ScalarField> {
    check_field(v, prob.grid())?;
    let mut ev = Evaluator::new(prob, prob.ctx.p());
    let mut out = vec![0.0; v.len()];
    ev.residual(v.values(), &mut out);
    let mut r = ScalarField::zeros(prob.grid());
    r.values_mut().copy_from_slice(&out);
    Ok(r)
}

/// Directional derivative of the residual at `v` along `w`.
pub fn assemble_jacobian_action(
    v: &ScalarField,
    w: &ScalarField,
    prob: &StationaryProblem,
    cfg: &SolverConfig,
) -> Result<ScalarField> {
    check_field(v, prob.grid())?;
    check_field(w, prob.grid())?;
    let mut ev = Evaluator::new(prob, prob.ctx.p());
    let lin = ev.newton_linearization(v.values(), cfg.jac_floor);
    let mut scratch = LinScratch::new(prob.grid());
    let mut out = ScalarField::zeros(prob.grid());
    apply_linearization(
        prob.grid(),
        prob.ctx.velocity(),
        prob.tau,
        &lin,
        &mut scratch,
        w.values(),
        out.values_mut(),
    );
    Ok(out)
}

fn check_field(v: &ScalarField, grid: &Grid2D) -> Result<()> {
    if !v.matches(grid) {
        return Err(CrowdError::Structure(
            "field does not match the grid".into(),
        ));
    }
    if !v.is_finite() {
        return Err(CrowdError::Data("non-finite field".into()));
    }
    Ok(())
}

/// Solves the step and fails with [`CrowdError::NonConvergence`] when both
/// Newton and Picard exhaust their caps.
pub fn solve_stationary(
    prob: &StationaryProblem,
    v_init: &ScalarField,
    cfg: &SolverConfig,
) -> Result<StationarySolution> {
    let sol = solve_stationary_report(prob, v_init, cfg)?;
    if sol.report.converged {
        Ok(sol)
    } else {
        Err(CrowdError::NonConvergence(format!(
            "residual {:.3e} after {} iterations",
            sol.report.final_residual_norm, sol.report.iterations
        )))
    }
}

/// Like [`solve_stationary`] but returns the best iterate with
/// `report.converged = false` instead of failing.
pub fn solve_stationary_report(
    prob: &StationaryProblem,
    v_init: &ScalarField,
    cfg: &SolverConfig,
) -> Result<StationarySolution> {
    cfg.check()?;
    check_field(v_init, prob.grid())?;
    let start = Instant::now();
    let tol = cfg.tolerance(prob.grid());
    let cold = v_init.max_abs() == 0.0;
    let mut acc = Counters::default();
    let stage = solve_at(
        prob,
        v_init.values(),
        prob.ctx.p(),
        cold,
        cfg,
        tol,
        0,
        &mut acc,
    );
    let v = ScalarField::from_vec(prob.grid(), stage.v)?;
    let u = v.map(|x| h_eps_unchecked(x, prob.eps));
    let report = SolveReport {
        converged: stage.converged,
        iterations: acc.newton + acc.picard,
        newton_iterations: acc.newton,
        picard_iterations: acc.picard,
        final_residual_norm: stage.norm_inf,
        method_used: stage.method,
        residual_history: stage.history,
        wall_time: start.elapsed().as_secs_f64(),
    };
    Ok(StationarySolution { u, v, report })
}

#[derive(Default)]
struct Counters {
    newton: usize,
    picard: usize,
}

struct Stage {
    v: Vec<f64>,
    converged: bool,
    norm_inf: f64,
    method: Method,
    history: Vec<f64>,
}

const MAX_DEPTH: usize = 8;

#[allow(clippy::too_many_arguments)]
fn solve_at(
    prob: &StationaryProblem,
    v0: &[f64],
    p: f64,
    cold: bool,
    cfg: &SolverConfig,
    tol: f64,
    depth: usize,
    acc: &mut Counters,
) -> Stage {
    let lower = if p >= cfg.continuation_from {
        p / 2.0
    } else {
        2.0 + 0.5 * (p - 2.0)
    };
    let can_descend = depth < MAX_DEPTH && lower >= 2.0 && p - lower > 1e-3;
    if cold && p >= cfg.continuation_from && can_descend {
        let low = solve_at(prob, v0, lower, true, cfg, tol, depth + 1, acc);
        let start = if low.v.iter().all(|x| x.is_finite()) {
            low.v
        } else {
            v0.to_vec()
        };
        return newton_picard(prob, &start, p, cfg, tol, true, acc);
    }
    // Picard is slow; a lower exponent usually gets Newton going again.
    let direct = newton_picard(prob, v0, p, cfg, tol, !can_descend, acc);
    if direct.converged || !can_descend {
        return direct;
    }
    let low = solve_at(prob, v0, lower, cold, cfg, tol, depth + 1, acc);
    let second = if low.converged {
        climb(prob, low.v, lower, p, cfg, tol, 0, acc)
    } else {
        newton_picard(prob, &low.v, p, cfg, tol, true, acc)
    };
    if second.converged || second.norm_inf < direct.norm_inf {
        second
    } else {
        direct
    }
}

/// Walks from a converged state at `from` up to `to`, bisecting the
/// exponent gap whenever a jump fails.
#[allow(clippy::too_many_arguments)]
fn climb(
    prob: &StationaryProblem,
    v_from: Vec<f64>,
    from: f64,
    to: f64,
    cfg: &SolverConfig,
    tol: f64,
    depth: usize,
    acc: &mut Counters,
) -> Stage {
    let jump = newton_picard(prob, &v_from, to, cfg, tol, depth >= MAX_DEPTH, acc);
    if jump.converged || depth >= MAX_DEPTH {
        return jump;
    }
    let mid = 0.5 * (from + to);
    let half = climb(prob, v_from, from, mid, cfg, tol, depth + 1, acc);
    if !half.converged {
        return if half.norm_inf < jump.norm_inf {
            half
        } else {
            jump
        };
    }
    climb(prob, half.v, mid, to, cfg, tol, depth + 1, acc)
}

fn newton_picard(
    prob: &StationaryProblem,
    v0: &[f64],
    p: f64,
    cfg: &SolverConfig,
    tol: f64,
    allow_picard: bool,
    acc: &mut Counters,
) -> Stage {
    let grid = prob.grid();
    let n = grid.num_cells();
    let rms = |r: &[f64]| linalg::norm2(r) / (n as f64).sqrt();
    let mut ev = Evaluator::new(prob, p);
    let mut v = v0.to_vec();
    let mut r = vec![0.0; n];
    ev.residual(&v, &mut r);
    let mut merit = rms(&r);
    let mut norm_inf = linalg::norm_inf(&r);
    let mut history = vec![merit];
    let mut scratch = LinScratch::new(grid);
    let mut trial = vec![0.0; n];
    let mut rt = vec![0.0; n];
    let mut method = Method::Newton;

    if !merit.is_finite() {
        return Stage {
            v,
            converged: false,
            norm_inf: f64::INFINITY,
            method,
            history,
        };
    }

    let mut lm = 0.0;
    let mut stalls = 0;
    let mut newton_its = 0;
    while norm_inf > tol && newton_its < cfg.max_newton && stalls < cfg.stall_limit {
        newton_its += 1;
        acc.newton += 1;
        let lin = ev.newton_linearization(&v, cfg.jac_floor);
        let step = linear_step(grid, prob, &lin, &mut scratch, &r, lm, cfg);
        let accepted = step.and_then(|s| {
            line_search(
                &mut ev,
                &v,
                &s,
                merit,
                cfg.armijo_c,
                &mut trial,
                &mut rt,
                rms,
            )
        });
        match accepted {
            Some(m) => {
                if m > 0.9 * merit {
                    stalls += 1;
                } else {
                    stalls = 0;
                }
                std::mem::swap(&mut v, &mut trial);
                std::mem::swap(&mut r, &mut rt);
                merit = m;
                norm_inf = linalg::norm_inf(&r);
                history.push(merit);
                lm = if lm < 1e-6 { 0.0 } else { lm * 0.1 };
            }
            None => {
                stalls += 1;
                lm = if lm == 0.0 {
                    1e-4
                } else {
                    (lm * 10.0).min(1e6)
                };
            }
        }
    }

    if norm_inf > tol && allow_picard {
        method = Method::Picard;
        let mut picard_its = 0;
        let mut lm = 0.0;
        let mut failures = 0;
        while norm_inf > tol && picard_its < cfg.max_picard && failures < 8 {
            picard_its += 1;
            acc.picard += 1;
            let lin = ev.picard_linearization(&v, cfg.jac_floor);
            let step = linear_step(grid, prob, &lin, &mut scratch, &r, lm, cfg);
            let accepted = step.and_then(|s| {
                line_search(
                    &mut ev,
                    &v,
                    &s,
                    merit,
                    cfg.armijo_c,
                    &mut trial,
                    &mut rt,
                    rms,
                )
            });
            match accepted {
                Some(m) => {
                    failures = 0;
                    std::mem::swap(&mut v, &mut trial);
                    std::mem::swap(&mut r, &mut rt);
                    merit = m;
                    norm_inf = linalg::norm_inf(&r);
                    history.push(merit);
                    lm = if lm < 1e-6 { 0.0 } else { lm * 0.1 };
                }
                None => {
                    failures += 1;
                    lm = if lm == 0.0 { 1e-3 } else { lm * 10.0 };
                }
            }
        }
    }

    Stage {
        v,
        converged: norm_inf <= tol,
        norm_inf,
        method,
        history,
    }
}

/// Solves `(L + μ D) s = −r` with `D` the magnitude of `L`'s diagonal plus its mean.
fn linear_step(
    grid: &Grid2D,
    prob: &StationaryProblem,
    lin: &Linearization,
    scratch: &mut LinScratch,
    r: &[f64],
    lm: f64,
    cfg: &SolverConfig,
) -> Option<Vec<f64>> {
    let vel = prob.ctx.velocity();
    let mut m = linalg::probe_stencil_matrix(grid, |w, out| {
        apply_linearization(grid, vel, prob.tau, lin, scratch, w, out)
    });
    let n = grid.num_cells();
    let diag = m.diagonal();
    let mean = diag.iter().map(|d| d.abs()).sum::<f64>() / n as f64;
    if lm > 0.0 {
        for (k, d) in diag.iter().enumerate() {
            m.add(k, k, lm * (d.abs() + mean));
        }
    }
    let b: Vec<f64> = r.iter().map(|x| -x).collect();
    if cfg.linear_solver == LinearSolver::Krylov {
        let d = m.diagonal();
        let floor = 1e-14 * mean.max(f64::MIN_POSITIVE);
        let inv: Vec<f64> = d
            .iter()
            .map(|x| {
                if x.abs() > floor {
                    1.0 / x
                } else {
                    1.0 / mean.max(1.0)
                }
            })
            .collect();
        let mut x = vec![0.0; n];
        let info = linalg::gmres(
            |a, y| m.mul_vec(a, y),
            |a, y| {
                y.iter_mut()
                    .zip(a)
                    .zip(&inv)
                    .for_each(|((o, v), s)| *o = v * s)
            },
            &b,
            &mut x,
            cfg.linear_rtol,
            40,
            200,
        );
        if info.converged && x.iter().all(|v| v.is_finite()) {
            return Some(x);
        }
    }
    direct_solve(m, b)
}

fn direct_solve(m: BandMatrix, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let lu = m.factor()?;
    lu.solve(&mut b);
    if b.iter().all(|v| v.is_finite()) {
        Some(b)
    } else {
        None
    }
}

/// Backtracking on `‖R‖`: accepts `v + λ s` once
/// `‖R(v + λ s)‖ ≤ (1 − c λ) ‖R(v)‖`. On success `trial`/`rt` hold the new
/// iterate and its residual and the new merit is returned.
#[allow(clippy::too_many_arguments)]
fn line_search(
    ev: &mut Evaluator,
    v: &[f64],
    s: &[f64],
    merit: f64,
    c: f64,
    trial: &mut [f64],
    rt: &mut [f64],
    rms: impl Fn(&[f64]) -> f64,
) -> Option<f64> {
    let mut lam = 1.0;
    for _ in 0..40 {
        for k in 0..v.len() {
            trial[k] = v[k] + lam * s[k];
        }
        ev.residual(trial, rt);
        let m = rms(rt);
        if m.is_finite() && m <= (1.0 - c * lam) * merit && m < merit {
            return Some(m);
        }
        lam *= 0.5;
    }
    None
}

/// Per-step energy balance: `lhs = ∫|∇v|^p`, `rhs_bound = ∫ f v + ∫ V·∇v`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyCheck {
    pub lhs: f64,
    pub rhs_bound: f64,
    pub passed: bool,
}

pub fn energy_estimate_check(
    _u: &ScalarField,
    v: &ScalarField,
    prob: &StationaryProblem,
) -> EnergyCheck {
    let grid = prob.grid();
    let g = ops::face_gradient(v, grid);
    let lhs = ops::gradient_power_integral(&g, grid, prob.ctx.p());
    let f = prob.effective_source();
    let rhs_bound = f.dot(v, grid) + ops::face_pairing(prob.ctx.velocity(), &g, grid);
    EnergyCheck {
        lhs,
        rhs_bound,
        passed: lhs <= rhs_bound + 1e-8 * (lhs + 1.0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::toward_exit_velocity;
    use crate::graph::sign_plus_inclusion_residual;
    use crate::grid::BoundaryKind::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn strip(n: usize, edges: [crate::grid::BoundaryKind; 4]) -> Grid2D {
        Grid2D::new(n, 2, 1.0, 2.0 / n as f64, edges).unwrap()
    }

    fn problem(
        grid: &Grid2D,
        p: f64,
        eps: f64,
        tau: f64,
        vel: FaceVectorField,
        rhs: ScalarField,
    ) -> StationaryProblem {
        let ctx = OperatorContext::new(grid.clone(), p, vel).unwrap();
        StationaryProblem::new(ctx, eps, tau, rhs).unwrap()
    }

    #[test]
    fn residual_examples() {
        let g = strip(4, [NeumannWall, DirichletExit, NeumannWall, NeumannWall]);
        let zero = problem(
            &g,
            4.0,
            0.1,
            1.0,
            FaceVectorField::zeros(&g),
            ScalarField::zeros(&g),
        );
        assert_eq!(
            assemble_residual(&ScalarField::zeros(&g), &zero)
                .unwrap()
                .max_abs(),
            0.0
        );

        // Flat v with H_ε(v) = rhs: only the cells next to the exit feel a gradient.
        let prob = problem(
            &g,
            4.0,
            0.1,
            1.0,
            FaceVectorField::zeros(&g),
            ScalarField::constant(&g, 0.5),
        );
        let r = assemble_residual(&ScalarField::constant(&g, 0.05), &prob).unwrap();
        for j in 0..2 {
            for i in 0..3 {
                assert!(r.at(i, j).abs() < 1e-15);
            }
        }

        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let v = ScalarField::from_fn(&g, |_| rng.gen_range(-0.2..0.4));
        let shifted = problem(
            &g,
            4.0,
            0.1,
            1.0,
            FaceVectorField::zeros(&g),
            ScalarField::constant(&g, 0.5 + 0.3),
        );
        let (a, b) = (
            assemble_residual(&v, &prob).unwrap(),
            assemble_residual(&v, &shifted).unwrap(),
        );
        for k in 0..a.len() {
            assert!((a[k] - b[k] - 0.3).abs() < 1e-14);
        }
        let mut bad = v.clone();
        bad.values_mut()[0] = f64::NAN;
        assert!(assemble_residual(&bad, &prob).is_err());
    }

    #[test]
    fn jacobian_examples() {
        let g = Grid2D::new(6, 5, 1.0, 1.0, [DirichletExit; 4]).unwrap();
        let prob = problem(
            &g,
            4.0,
            0.1,
            0.5,
            FaceVectorField::zeros(&g),
            ScalarField::constant(&g, 0.3),
        );
        let cfg = SolverConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let v = ScalarField::from_fn(&g, |_| rng.gen_range(0.0..1.0));
        let zero = assemble_jacobian_action(&v, &ScalarField::zeros(&g), &prob, &cfg).unwrap();
        assert_eq!(zero.max_abs(), 0.0);

        let w = ScalarField::from_fn(&g, |_| rng.gen_range(-1.0..1.0));
        let j0 = assemble_jacobian_action(&ScalarField::zeros(&g), &w, &prob, &cfg).unwrap();
        for k in 0..w.len() {
            assert!((j0[k] - 10.0 * w[k]).abs() < 1e-14);
        }
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let g = Grid2D::new(
            8,
            7,
            1.0,
            0.9,
            [NeumannWall, DirichletExit, DirichletExit, NeumannWall],
        )
        .unwrap();
        let vel = toward_exit_velocity(&g, 1.0);
        for &p in &[3.0, 4.0, 7.5] {
            let prob = problem(
                &g,
                p,
                0.05,
                0.3,
                vel.clone(),
                ScalarField::constant(&g, 0.4),
            );
            let cfg = SolverConfig::default();
            // Smooth fields well outside the graph band.
            let v = ScalarField::from_fn(&g, |x| 0.3 + 0.5 * (2.0 * x[0]).sin() * (1.0 + x[1]));
            let w = ScalarField::from_fn(&g, |x| (3.0 * x[0] + x[1]).cos());
            let jw = assemble_jacobian_action(&v, &w, &prob, &cfg).unwrap();
            let r0 = assemble_residual(&v, &prob).unwrap();
            let mut errs = Vec::new();
            for &s in &[1e-3, 1e-4, 1e-5] {
                let vs = v.zip_map(&w, |a, b| a + s * b);
                let rs = assemble_residual(&vs, &prob).unwrap();
                let fd = rs.zip_map(&r0, |a, b| (a - b) / s);
                errs.push(fd.max_distance(&jw));
            }
            assert!(errs[2] < 1e-4 * (1.0 + jw.max_abs()), "p={p}: {errs:?}");
            assert!(
                errs[1] < errs[0] && errs[2] < errs[1] * 0.5 + 1e-9,
                "p={p}: {errs:?}"
            );
        }
    }

    #[test]
    fn zero_data_gives_zero_solution() {
        let g = Grid2D::new(6, 6, 1.0, 1.0, [DirichletExit; 4]).unwrap();
        let prob = problem(
            &g,
            4.0,
            1e-3,
            1.0,
            FaceVectorField::zeros(&g),
            ScalarField::zeros(&g),
        );
        let sol =
            solve_stationary(&prob, &ScalarField::zeros(&g), &SolverConfig::default()).unwrap();
        assert_eq!(sol.u.max_abs(), 0.0);
        assert_eq!(sol.v.max_abs(), 0.0);
        assert!(sol.report.converged);
    }

    /// rhs ≡ 2, V = 0, τ = 1 on [0, 1] with a wall at 0 and an exit at 1:
    /// the congested solution is `v = ((p−1)/p)(1 − x^{p/(p−1)})`.
    #[test]
    fn matches_the_closed_form_congested_profile() {
        for &p in &[3.0, 4.0, 8.0] {
            let n = 128;
            let g = strip(n, [NeumannWall, DirichletExit, NeumannWall, NeumannWall]);
            let prob = problem(
                &g,
                p,
                1e-3,
                1.0,
                FaceVectorField::zeros(&g),
                ScalarField::constant(&g, 2.0),
            );
            let sol =
                solve_stationary(&prob, &ScalarField::zeros(&g), &SolverConfig::default()).unwrap();
            let mut err: f64 = 0.0;
            for i in 0..n {
                let x = g.cell_center(i, 0)[0];
                let exact = (p - 1.0) / p * (1.0 - x.powf(p / (p - 1.0)));
                err = err.max((sol.v.at(i, 0) - exact).abs());
            }
            assert!(err < 2.0 / n as f64, "p={p}: err {err}");
            assert!(sol.u.min() > 1.0 - 1e-12);
        }
    }

    #[test]
    fn accepted_steps_decrease_the_residual_and_land_in_the_graph() {
        let g = Grid2D::new(
            16,
            16,
            1.0,
            1.0,
            [NeumannWall, DirichletExit, NeumannWall, NeumannWall],
        )
        .unwrap();
        let vel = toward_exit_velocity(&g, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let rhs = ScalarField::from_fn(&g, |_| rng.gen_range(0.0..1.5));
        let prob = problem(&g, 4.0, 1e-3, 0.05, vel, rhs);
        let sol =
            solve_stationary(&prob, &ScalarField::zeros(&g), &SolverConfig::default()).unwrap();
        for w in sol.report.residual_history.windows(2) {
            assert!(w[1] < w[0]);
        }
        for k in 0..sol.u.len() {
            assert_eq!(
                sign_plus_inclusion_residual(sol.u[k], sol.v[k], prob.eps),
                0.0
            );
        }
        assert!(sol.u.min() >= -1e-10 && sol.v.min() >= -1e-10);
        assert!(sol.report.final_residual_norm <= SolverConfig::default().tolerance(&g));
    }

    #[test]
    fn energy_check_on_zero_solution() {
        let g = Grid2D::new(4, 4, 1.0, 1.0, [DirichletExit; 4]).unwrap();
        let prob = problem(
            &g,
            4.0,
            1e-3,
            1.0,
            FaceVectorField::zeros(&g),
            ScalarField::zeros(&g),
        );
        let z = ScalarField::zeros(&g);
        let e = energy_estimate_check(&z, &z, &prob);
        assert_eq!((e.lhs, e.rhs_bound, e.passed), (0.0, 0.0, true));
    }

    #[test]
    fn config_validation() {
        let mut c = SolverConfig::default();
        assert!(c.check().is_ok());
        c.armijo_c = 1.0;
        assert!(c.check().is_err());
        let mut c = SolverConfig::default();
        c.jac_floor = 0.0;
        assert!(c.check().is_err());
    }
}

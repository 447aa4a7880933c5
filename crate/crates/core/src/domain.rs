//! Problem data: the fully resolved setup of one run, velocity fields and
//! their admissibility checks, sources, and the boundary-layer cutoff.

use serde::{Deserialize, Serialize};

use crate::diagnostics::DiagnosticRecord;
use crate::error::{CrowdError, Result};
use crate::field::{FaceVectorField, ScalarField};
use crate::grid::{BoundaryKind, Grid2D};
use crate::ops;

/// Time modulation `θ(t)` of a source `f(t, x) = base(x) θ(t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TimeProfile {
    Constant,
    /// Indicator of `[t_on, t_off)`.
    Window {
        t_on: f64,
        t_off: f64,
    },
    /// `sin(ω t)`.
    Sine {
        omega: f64,
    },
    /// `θ(t) = t`.
    Ramp,
}

impl TimeProfile {
    pub fn at(self, t: f64) -> f64 {
        match self {
            TimeProfile::Constant => 1.0,
            TimeProfile::Window { t_on, t_off } => {
                if t >= t_on && t < t_off {
                    1.0
                } else {
                    0.0
                }
            }
            TimeProfile::Sine { omega } => (omega * t).sin(),
            TimeProfile::Ramp => t,
        }
    }

    /// Mean of `θ` over `[a, b]`: exact for the constant and window
    /// profiles, 3-point Gauss otherwise.
    pub fn average(self, a: f64, b: f64) -> f64 {
        match self {
            TimeProfile::Constant => 1.0,
            TimeProfile::Window { t_on, t_off } => {
                let overlap = (b.min(t_off) - a.max(t_on)).max(0.0);
                overlap / (b - a)
            }
            _ => {
                let (m, r) = (0.5 * (a + b), 0.5 * (b - a));
                let x = (0.6f64).sqrt() * r;
                (5.0 * self.at(m - x) + 8.0 * self.at(m) + 5.0 * self.at(m + x)) / 18.0
            }
        }
    }

    fn is_nonnegative(self) -> bool {
        !matches!(self, TimeProfile::Sine { .. })
    }
}

/// Separable source `f(t, x) = base(x) θ(t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceTerm {
    pub base: ScalarField,
    pub profile: TimeProfile,
}

impl SourceTerm {
    pub fn zero(grid: &Grid2D) -> Self {
        Self {
            base: ScalarField::zeros(grid),
            profile: TimeProfile::Constant,
        }
    }

    pub fn constant(grid: &Grid2D, value: f64) -> Self {
        Self {
            base: ScalarField::constant(grid, value),
            profile: TimeProfile::Constant,
        }
    }

    pub fn at(&self, t: f64) -> ScalarField {
        let k = self.profile.at(t);
        self.base.map(|b| b * k)
    }

    /// Cell-wise mean of `f` over `[a, b]`.
    pub fn average(&self, a: f64, b: f64) -> ScalarField {
        let k = self.profile.average(a, b);
        self.base.map(|x| x * k)
    }

    pub fn is_nonnegative(&self) -> bool {
        self.base.min() >= 0.0 && (self.profile.is_nonnegative() || self.base.max_abs() == 0.0)
    }

    pub fn is_zero(&self) -> bool {
        self.base.max_abs() == 0.0
    }
}

/// Everything that defines one evolution run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub grid: Grid2D,
    pub p: f64,
    pub eps: f64,
    pub tau: f64,
    pub horizon: f64,
    pub velocity: FaceVectorField,
    pub source: SourceTerm,
    pub u0: ScalarField,
}

impl ProblemSpec {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        grid: Grid2D,
        p: f64,
        eps: f64,
        tau: f64,
        horizon: f64,
        velocity: FaceVectorField,
        source: SourceTerm,
        u0: ScalarField,
    ) -> Result<Self> {
        let spec = Self {
            grid,
            p,
            eps,
            tau,
            horizon,
            velocity,
            source,
            u0,
        };
        spec.check()?;
        Ok(spec)
    }

    /// Re-checks every invariant.
    pub fn check(&self) -> Result<()> {
        if !(self.p > 2.0 && self.p.is_finite()) {
            return Err(CrowdError::Invalid(format!(
                "p > 2 violated (p = {})",
                self.p
            )));
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(CrowdError::Invalid(format!(
                "eps > 0 violated (eps = {})",
                self.eps
            )));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(CrowdError::Invalid(format!(
                "tau > 0 violated (tau = {})",
                self.tau
            )));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(CrowdError::Invalid(format!(
                "horizon > 0 violated (horizon = {})",
                self.horizon
            )));
        }
        let n = self.horizon / self.tau;
        if (n - n.round()).abs() > 1e-9 * n.max(1.0) || n.round() < 1.0 {
            return Err(CrowdError::Invalid(format!(
                "tau must divide the horizon: {} / {} = {n}",
                self.horizon, self.tau
            )));
        }
        if !self.velocity.matches(&self.grid)
            || !self.u0.matches(&self.grid)
            || !self.source.base.matches(&self.grid)
        {
            return Err(CrowdError::Structure(
                "field shape does not match the grid".into(),
            ));
        }
        if !self.velocity.is_finite() {
            return Err(CrowdError::Data("non-finite velocity".into()));
        }
        if !self.u0.is_finite() || !self.source.base.is_finite() {
            return Err(CrowdError::Data(
                "non-finite initial density or source".into(),
            ));
        }
        if self.u0.min() < 0.0 || self.u0.max() > 1.0 {
            return Err(CrowdError::Invalid(format!(
                "0 ≤ u₀ ≤ 1 violated (u₀ ranges over [{}, {}])",
                self.u0.min(),
                self.u0.max()
            )));
        }
        Ok(())
    }

    pub fn num_steps(&self) -> usize {
        (self.horizon / self.tau).round() as usize
    }

    pub fn operator_context(&self) -> Result<ops::OperatorContext> {
        ops::OperatorContext::new(self.grid.clone(), self.p, self.velocity.clone())
    }

    pub fn with_p(&self, p: f64) -> Result<Self> {
        let mut s = self.clone();
        s.p = p;
        s.check()?;
        Ok(s)
    }

    /// `|Ω|·T`.
    pub fn space_time_volume(&self) -> f64 {
        self.grid.area() * self.horizon
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    Newton,
    Picard,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Newton => "newton",
            Method::Picard => "picard",
        }
    }
}

/// Outcome of one nonlinear solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub converged: bool,
    /// Newton plus Picard iterations, summed over continuation stages.
    pub iterations: usize,
    pub newton_iterations: usize,
    pub picard_iterations: usize,
    /// Max-norm of the residual at the returned iterate.
    pub final_residual_norm: f64,
    pub method_used: Method,
    /// Residual norms after each accepted step of the final stage.
    pub residual_history: Vec<f64>,
    pub wall_time: f64,
}

/// Per-hypothesis outcome of [`validate_velocity`].
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub checks: Vec<DiagnosticRecord>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn get(&self, name: &str) -> Option<&DiagnosticRecord> {
        self.checks.iter().find(|c| c.name == name)
    }
}

pub const CHECK_DIVERGENCE: &str = "velocity_divergence_bounded";
pub const CHECK_EXIT_OUTFLOW: &str = "velocity_exit_outflow";
pub const CHECK_WALL_TANGENCY: &str = "velocity_wall_tangency";
pub const CHECK_BOUNDARY_LAYER: &str = "velocity_boundary_layer";

/// Checks the standing hypotheses on `V`.
///
/// Each record's value is arranged so that it passes iff `value ≤ threshold`:
/// (a) `max |div V|` against `+∞`, (b) the worst inflow `max(-V·ν)` over exit
/// faces, (c) `max |V·ν|` over wall faces, (d) minus the smallest
/// boundary-layer mean `(1/h) Σ_{d<h} V·ν(π(x)) |cell|` over
/// `h ∈ {hx, 2hx, 4hx}`. (b)-(d) use the threshold `tol_bc`.
pub fn validate_velocity(spec: &ProblemSpec, tol_bc: f64) -> Result<ValidationReport> {
    let grid = &spec.grid;
    let vel = &spec.velocity;
    if !vel.matches(grid) {
        return Err(CrowdError::Structure(
            "velocity does not match the grid".into(),
        ));
    }
    if !vel.is_finite() {
        return Err(CrowdError::Data("non-finite velocity".into()));
    }

    let div = ops::divergence(vel, grid).max_abs();

    let mut inflow: f64 = 0.0;
    let mut wall: f64 = 0.0;
    // `+ 0.0` below turns a −0 from `max(0, −0)` into +0.
    for face in grid.boundary_faces() {
        let (is_x, k) = grid.boundary_face_index(face);
        let n = face.edge.normal();
        let vn = if is_x {
            vel.x[k] * n[0]
        } else {
            vel.y[k] * n[1]
        };
        match grid.label(face) {
            BoundaryKind::DirichletExit => inflow = inflow.max(-vn),
            BoundaryKind::NeumannWall => wall = wall.max(vn.abs()),
        }
    }

    let mut layer = f64::INFINITY;
    for mult in [1.0, 2.0, 4.0] {
        let h = mult * grid.hx();
        layer = layer.min(boundary_layer_mean(grid, vel, h));
    }
    let layer_value = -layer + 0.0;

    let rec =
        |name: &str, value: f64, threshold: f64| DiagnosticRecord::new(name, value, threshold);
    Ok(ValidationReport {
        checks: vec![
            DiagnosticRecord {
                passed: div.is_finite(),
                ..rec(CHECK_DIVERGENCE, div, f64::INFINITY)
            },
            rec(CHECK_EXIT_OUTFLOW, inflow + 0.0, tol_bc),
            rec(CHECK_WALL_TANGENCY, wall + 0.0, tol_bc),
            rec(CHECK_BOUNDARY_LAYER, layer_value, tol_bc),
        ],
    })
}

/// `(1/h) Σ_{cells with d < h} V_cell · ν(π(x)) |cell|`, with `V_cell` the
/// mean of the cell's face values and `ν(π(x))` the normal of the nearest edge.
pub fn boundary_layer_mean(grid: &Grid2D, vel: &FaceVectorField, h: f64) -> f64 {
    let (lx, ly) = (grid.lx(), grid.ly());
    let mut acc = 0.0;
    for j in 0..grid.ny() {
        for i in 0..grid.nx() {
            let c = grid.cell_center(i, j);
            let dists = [c[0], lx - c[0], c[1], ly - c[1]];
            let (mut e, mut d) = (0, dists[0]);
            for (k, &dk) in dists.iter().enumerate().skip(1) {
                if dk < d {
                    e = k;
                    d = dk;
                }
            }
            if d >= h {
                continue;
            }
            let vx = 0.5 * (vel.x[grid.xface(i, j)] + vel.x[grid.xface(i + 1, j)]);
            let vy = 0.5 * (vel.y[grid.yface(i, j)] + vel.y[grid.yface(i, j + 1)]);
            let vn = match e {
                0 => -vx,
                1 => vx,
                2 => -vy,
                _ => vy,
            };
            acc += vn * grid.cell_area();
        }
    }
    acc / h
}

/// Cutoff `ξ_h = min(h, d(x, ∂Ω))/h` at cell centres and `ν_h = −∇ξ_h` on
/// faces, with `ξ_h` extended by zero across the whole boundary.
pub fn compute_boundary_cutoff(grid: &Grid2D, h: f64) -> Result<(ScalarField, FaceVectorField)> {
    let half_diam = 0.5 * grid.lx().hypot(grid.ly());
    if !(h > 0.0 && h.is_finite()) {
        return Err(CrowdError::Parameter(format!(
            "cutoff width must be positive, got {h}"
        )));
    }
    if h >= half_diam {
        return Err(CrowdError::Parameter(format!(
            "cutoff width {h} must be below half the domain diameter {half_diam}"
        )));
    }
    let xi = ScalarField::from_fn(grid, |x| grid.distance_to_boundary(x).min(h) / h);
    let all_exit = Grid2D::new(
        grid.nx(),
        grid.ny(),
        grid.lx(),
        grid.ly(),
        [BoundaryKind::DirichletExit; 4],
    )?;
    let mut nu = ops::face_gradient(&xi, &all_exit);
    for x in nu.x.iter_mut().chain(nu.y.iter_mut()) {
        *x = -*x + 0.0;
    }
    Ok((xi, nu))
}

/// Unit direction of `−∇d(x, Γ_D)`: towards the nearest exit point.
/// Returns `None` on the exit set itself.
pub fn toward_exit_direction(grid: &Grid2D, x: [f64; 2]) -> Option<[f64; 2]> {
    let (d, q) = grid.nearest_exit(x);
    if d <= 1e-14 * grid.lx().max(grid.ly()) {
        return None;
    }
    Some([(q[0] - x[0]) / d, (q[1] - x[1]) / d])
}

/// `speed · (−∇d(x, Γ_D))` sampled at face centres. Wall faces get 0 and
/// exit faces the outward normal, so `V·ν ≥ 0` on exits and `V·ν = 0` on
/// walls hold exactly.
pub fn toward_exit_velocity(grid: &Grid2D, speed: f64) -> FaceVectorField {
    let mut out = FaceVectorField::zeros(grid);
    let (nx, ny) = (grid.nx(), grid.ny());
    for j in 0..ny {
        for i in 0..=nx {
            let f = grid.xface(i, j);
            out.x[f] = match grid.xface_label(i, j) {
                Some(BoundaryKind::NeumannWall) => 0.0,
                Some(BoundaryKind::DirichletExit) => speed * if i == 0 { -1.0 } else { 1.0 },
                None => toward_exit_direction(grid, grid.xface_center(i, j))
                    .map_or(0.0, |d| speed * d[0]),
            };
        }
    }
    for j in 0..=ny {
        for i in 0..nx {
            let f = grid.yface(i, j);
            out.y[f] = match grid.yface_label(i, j) {
                Some(BoundaryKind::NeumannWall) => 0.0,
                Some(BoundaryKind::DirichletExit) => speed * if j == 0 { -1.0 } else { 1.0 },
                None => toward_exit_direction(grid, grid.yface_center(i, j))
                    .map_or(0.0, |d| speed * d[1]),
            };
        }
    }
    out
}

pub fn constant_velocity(grid: &Grid2D, v: [f64; 2]) -> FaceVectorField {
    FaceVectorField::from_fn(grid, |_| v)
}

/// Face values from cell-centred components: the mean of the two adjacent
/// cells inside, the adjacent cell on the boundary.
pub fn velocity_from_cells(
    grid: &Grid2D,
    vx: &ScalarField,
    vy: &ScalarField,
) -> Result<FaceVectorField> {
    if !vx.matches(grid) || !vy.matches(grid) {
        return Err(CrowdError::Structure(
            "velocity components do not match the grid".into(),
        ));
    }
    let (nx, ny) = (grid.nx(), grid.ny());
    let mut out = FaceVectorField::zeros(grid);
    for j in 0..ny {
        for i in 0..=nx {
            out.x[grid.xface(i, j)] = if i == 0 {
                vx.at(0, j)
            } else if i == nx {
                vx.at(nx - 1, j)
            } else {
                0.5 * (vx.at(i - 1, j) + vx.at(i, j))
            };
        }
    }
    for j in 0..=ny {
        for i in 0..nx {
            out.y[grid.yface(i, j)] = if j == 0 {
                vy.at(i, 0)
            } else if j == ny {
                vy.at(i, ny - 1)
            } else {
                0.5 * (vy.at(i, j - 1) + vy.at(i, j))
            };
        }
    }
    Ok(out)
}

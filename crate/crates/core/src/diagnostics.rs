//! Executable checks on fields and trajectories.

use serde::{Deserialize, Serialize};

/// One named measurement against a bound; `passed` iff `value ≤ threshold`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticRecord {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub passed: bool,
    pub step: Option<usize>,
    pub time: Option<f64>,
}

impl DiagnosticRecord {
    pub fn new(name: &str, value: f64, threshold: f64) -> Self {
        Self {
            name: name.to_string(),
            value,
            threshold,
            passed: value <= threshold,
            step: None,
            time: None,
        }
    }

    pub fn at_step(mut self, step: usize, time: f64) -> Self {
        self.step = Some(step);
        self.time = Some(time);
        self
    }
}

use crate::domain::ProblemSpec;
use crate::error::{CrowdError, Result};
use crate::evolution::{evolve_with, EvolveOptions, Trajectory};
use crate::field::ScalarField;
use crate::grid::Grid2D;
use crate::ops;
use crate::stationary::SolverConfig;

pub const BOX_BOUND: &str = "box_bound";
pub const COMPLEMENTARITY: &str = "complementarity";
pub const NONNEGATIVITY: &str = "nonnegativity";
pub const ENERGY: &str = "energy_estimate";
pub const APPENDIX: &str = "appendix_inequality";
pub const MASS_LEDGER: &str = "mass_ledger";
pub const CONTRACTION: &str = "l1_contraction";

/// `max(−min u, max u − 1)` against `1e-8`.
pub fn box_bound_record(u: &ScalarField) -> DiagnosticRecord {
    DiagnosticRecord::new(BOX_BOUND, (-u.min()).max(u.max() - 1.0), 1e-8)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CongestionStats {
    /// `|[u ≥ 1 − 10ε]| / |Ω|`.
    pub congested_fraction: f64,
    pub max_v: f64,
    /// `Σ v (1 − u) |cell|`.
    pub complementarity: f64,
}

pub fn congestion_stats(
    u: &ScalarField,
    v: &ScalarField,
    eps: f64,
    grid: &Grid2D,
) -> CongestionStats {
    let n = u.len().max(1);
    let congested = u
        .values()
        .iter()
        .filter(|&&x| x >= 1.0 - 10.0 * eps)
        .count();
    let comp: f64 = u
        .values()
        .iter()
        .zip(v.values())
        .map(|(a, b)| b * (1.0 - a))
        .sum();
    CongestionStats {
        congested_fraction: congested as f64 / n as f64,
        max_v: v.max().max(0.0),
        complementarity: comp * grid.cell_area() + 0.0,
    }
}

/// Largest value of `−Δ_p v + div V − f` over cells with `v > ε`, where
/// `V` has its wall components removed. Passes below `10·newton_tol/τ`.
/// An empty cell set reports `−∞`.
pub fn appendix_inequality_check(
    _u: &ScalarField,
    v: &ScalarField,
    f: &ScalarField,
    spec: &ProblemSpec,
    newton_tol: f64,
) -> DiagnosticRecord {
    let threshold = 10.0 * newton_tol / spec.tau;
    let ctx = match spec.operator_context() {
        Ok(c) => c,
        Err(_) => return DiagnosticRecord::new(APPENDIX, f64::INFINITY, threshold),
    };
    let lap = ops::p_laplacian(v, &ctx);
    let div_v = ops::divergence(&ops::effective_velocity(&ctx), &spec.grid);
    let mut worst = f64::NEG_INFINITY;
    for k in 0..v.len() {
        if v[k] > spec.eps {
            worst = worst.max(-lap[k] + div_v[k] - f[k]);
        }
    }
    DiagnosticRecord::new(APPENDIX, worst, threshold)
}

/// Nonnegative piecewise-linear time profile through the given knots,
/// constant beyond the last knot.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseLinear {
    knots: Vec<(f64, f64)>,
}

impl PiecewiseLinear {
    pub fn new(knots: Vec<(f64, f64)>) -> Result<Self> {
        if knots.is_empty() || knots.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(CrowdError::Parameter(
                "knots must be strictly increasing".into(),
            ));
        }
        if knots.iter().any(|k| !(k.0.is_finite() && k.1.is_finite())) {
            return Err(CrowdError::Parameter("non-finite knot".into()));
        }
        Ok(Self { knots })
    }

    /// `(1 − t/T)₊`.
    pub fn decay(horizon: f64) -> Self {
        Self {
            knots: vec![(0.0, 1.0), (horizon, 0.0)],
        }
    }

    pub fn zero() -> Self {
        Self {
            knots: vec![(0.0, 0.0)],
        }
    }

    /// 0 at `a` and `b`, 1 at the midpoint.
    pub fn hat(a: f64, b: f64) -> Result<Self> {
        Self::new(vec![(a, 0.0), (0.5 * (a + b), 1.0), (b, 0.0)])
    }

    pub fn value(&self, t: f64) -> f64 {
        let k = &self.knots;
        if t <= k[0].0 {
            return k[0].1;
        }
        for w in k.windows(2) {
            if t <= w[1].0 {
                let s = (t - w[0].0) / (w[1].0 - w[0].0);
                return (1.0 - s) * w[0].1 + s * w[1].1;
            }
        }
        k[k.len() - 1].1
    }

    /// Right derivative, left derivative at the final knot.
    pub fn derivative(&self, t: f64) -> f64 {
        let k = &self.knots;
        for (idx, w) in k.windows(2).enumerate() {
            let last = idx + 2 == k.len();
            if t >= w[0].0 && (t < w[1].0 || (last && t <= w[1].0)) {
                return (w[1].1 - w[0].1) / (w[1].0 - w[0].0);
            }
        }
        0.0
    }

    pub fn is_nonnegative(&self) -> bool {
        self.knots.iter().all(|k| k.1 >= 0.0)
    }
}

/// Trapezoid rule over the snapshot times.
pub(crate) fn trapezoid(times: &[f64], values: &[f64]) -> f64 {
    times
        .windows(2)
        .zip(values.windows(2))
        .map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1]))
        .sum()
}

/// Gap `|LHS − RHS|` in the weak formulation
/// `−∬ u ξ ψ′ + ∬ (|∇v|^{p−2}∇v − uV)·∇ξ ψ = ∬ f ξ ψ + ∫ u₀ ξ ψ(0)`,
/// trapezoid in time over the snapshots and discrete fluxes in space.
pub fn weak_form_residual(
    traj: &Trajectory,
    spec: &ProblemSpec,
    xi: &ScalarField,
    psi: &PiecewiseLinear,
) -> Result<f64> {
    let grid = &spec.grid;
    if !xi.matches(grid) {
        return Err(CrowdError::Structure(
            "test function does not match the grid".into(),
        ));
    }
    let ctx = spec.operator_context()?;
    let gxi = ops::face_gradient(xi, grid);
    let mut lhs = Vec::with_capacity(traj.len());
    let mut rhs = Vec::with_capacity(traj.len());
    for k in 0..traj.len() {
        let t = traj.times[k];
        let (u, v) = (&traj.u[k], &traj.v[k]);
        let g = ops::face_gradient(v, grid);
        let flux = ops::p_flux(&g, &ctx).zip_map(&ops::drift_flux(u, &ctx), |a, b| a - b);
        let l = -u.dot(xi, grid) * psi.derivative(t)
            + ops::face_pairing(&flux, &gxi, grid) * psi.value(t);
        let r = spec.source.at(t).dot(xi, grid) * psi.value(t);
        lhs.push(l);
        rhs.push(r);
    }
    let left = trapezoid(&traj.times, &lhs);
    let right = trapezoid(&traj.times, &rhs) + spec.u0.dot(xi, grid) * psi.value(0.0);
    Ok((left - right).abs())
}

/// Runs both evolutions and reports, per step,
/// `‖u¹_{i+1} − u²_{i+1}‖₁ − ‖u¹_i − u²_i‖₁ − τ‖f¹_i − f²_i‖₁` against `1e-8`.
pub fn contraction_harness(
    spec1: &ProblemSpec,
    spec2: &ProblemSpec,
    cfg: &SolverConfig,
) -> Result<Vec<DiagnosticRecord>> {
    if spec1.grid != spec2.grid
        || spec1.p != spec2.p
        || spec1.eps != spec2.eps
        || spec1.tau != spec2.tau
        || spec1.horizon != spec2.horizon
        || spec1.velocity != spec2.velocity
    {
        return Err(CrowdError::Parameter(
            "contraction pairs may differ only in u₀ and f".into(),
        ));
    }
    let opts = EvolveOptions {
        snapshot_stride: 1,
        diagnostics: false,
        initial_guess: None,
    };
    let a = evolve_with(spec1, cfg, &opts)?;
    let b = evolve_with(spec2, cfg, &opts)?;
    Ok(contraction_records(&a, &b, spec1, spec2))
}

/// Per-step contraction records for two dense trajectories.
pub fn contraction_records(
    a: &Trajectory,
    b: &Trajectory,
    spec1: &ProblemSpec,
    spec2: &ProblemSpec,
) -> Vec<DiagnosticRecord> {
    let grid = &spec1.grid;
    let tau = spec1.tau;
    let n = a.len().min(b.len());
    let mut out = Vec::with_capacity(n.saturating_sub(1));
    for i in 0..n.saturating_sub(1) {
        let t0 = i as f64 * tau;
        let df = spec1
            .source
            .average(t0, t0 + tau)
            .l1_distance(&spec2.source.average(t0, t0 + tau), grid);
        let d0 = a.u[i].l1_distance(&b.u[i], grid);
        let d1 = a.u[i + 1].l1_distance(&b.u[i + 1], grid);
        out.push(
            DiagnosticRecord::new(CONTRACTION, d1 - d0 - tau * df, 1e-8)
                .at_step(i + 1, a.times[i + 1]),
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{toward_exit_velocity, SourceTerm};
    use crate::grid::BoundaryKind::*;
    use crate::stationary::{solve_stationary, StationaryProblem};

    fn corridor_spec(n: usize, tau: f64, horizon: f64, u0_edge: f64, f: f64) -> ProblemSpec {
        let g = Grid2D::new(
            n,
            2,
            1.0,
            2.0 / n as f64,
            [NeumannWall, DirichletExit, NeumannWall, NeumannWall],
        )
        .unwrap();
        let vel = toward_exit_velocity(&g, 1.0);
        let u0 = ScalarField::from_fn(&g, |x| if x[0] < u0_edge { 1.0 } else { 0.0 });
        ProblemSpec::new(
            g.clone(),
            4.0,
            1e-3,
            tau,
            horizon,
            vel,
            SourceTerm::constant(&g, f),
            u0,
        )
        .unwrap()
    }

    #[test]
    fn congestion_stats_examples() {
        let g = Grid2D::new(4, 4, 1.0, 1.0, [DirichletExit; 4]).unwrap();
        let z = ScalarField::zeros(&g);
        let s = congestion_stats(&z, &z, 1e-3, &g);
        assert_eq!(
            (s.congested_fraction, s.max_v, s.complementarity),
            (0.0, 0.0, 0.0)
        );
        let one = ScalarField::constant(&g, 1.0);
        let v = ScalarField::from_fn(&g, |x| x[0] + x[1]);
        let s = congestion_stats(&one, &v, 1e-3, &g);
        assert_eq!(s.complementarity, 0.0);
        assert_eq!(s.congested_fraction, 1.0);
    }

    #[test]
    fn psi_profiles() {
        let d = PiecewiseLinear::decay(2.0);
        assert_eq!(d.value(0.0), 1.0);
        assert_eq!(d.value(1.0), 0.5);
        assert_eq!(d.value(3.0), 0.0);
        assert_eq!(d.derivative(0.0), -0.5);
        assert_eq!(d.derivative(2.0), -0.5);
        let h = PiecewiseLinear::hat(0.0, 1.0).unwrap();
        assert_eq!(h.value(0.25), 0.5);
        assert_eq!(h.derivative(0.75), -2.0);
        assert!(PiecewiseLinear::new(vec![(1.0, 0.0), (0.5, 1.0)]).is_err());
    }

    #[test]
    fn weak_form_on_trivial_data() {
        let g = Grid2D::new(
            8,
            8,
            1.0,
            1.0,
            [NeumannWall, DirichletExit, NeumannWall, NeumannWall],
        )
        .unwrap();
        let spec = ProblemSpec::new(
            g.clone(),
            4.0,
            1e-3,
            0.1,
            0.5,
            toward_exit_velocity(&g, 1.0),
            SourceTerm::zero(&g),
            ScalarField::zeros(&g),
        )
        .unwrap();
        let traj = crate::evolution::evolve(&spec, &SolverConfig::default()).unwrap();
        let xi = ScalarField::from_fn(&g, |x| g.distance_to_exit(x));
        assert_eq!(
            weak_form_residual(&traj, &spec, &xi, &PiecewiseLinear::decay(0.5)).unwrap(),
            0.0
        );
        let spec = corridor_spec(16, 0.1, 0.5, 0.5, 1.0);
        let traj = crate::evolution::evolve(&spec, &SolverConfig::default()).unwrap();
        let xi = ScalarField::from_fn(&spec.grid, |x| spec.grid.distance_to_exit(x));
        assert_eq!(
            weak_form_residual(&traj, &spec, &xi, &PiecewiseLinear::zero()).unwrap(),
            0.0
        );
    }

    #[test]
    fn appendix_check_detects_corruption() {
        let g = Grid2D::new(
            64,
            2,
            1.0,
            1.0 / 32.0,
            [NeumannWall, DirichletExit, NeumannWall, NeumannWall],
        )
        .unwrap();
        let spec = ProblemSpec::new(
            g.clone(),
            4.0,
            1e-3,
            1.0,
            1.0,
            crate::field::FaceVectorField::zeros(&g),
            SourceTerm::constant(&g, 2.0),
            ScalarField::zeros(&g),
        )
        .unwrap();
        let ctx = spec.operator_context().unwrap();
        let rhs = ScalarField::constant(&g, 2.0);
        let prob = StationaryProblem::new(ctx, spec.eps, 1.0, rhs.clone()).unwrap();
        let cfg = SolverConfig::default();
        let sol = solve_stationary(&prob, &ScalarField::zeros(&g), &cfg).unwrap();
        let ok = appendix_inequality_check(&sol.u, &sol.v, &rhs, &spec, cfg.tolerance(&g));
        assert!(ok.passed, "{ok:?}");
        let zero = ScalarField::zeros(&g);
        let empty = appendix_inequality_check(&zero, &zero, &zero, &spec, cfg.tolerance(&g));
        assert!(empty.passed && empty.value == f64::NEG_INFINITY);

        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let noisy: Vec<f64> = sol
            .v
            .values()
            .iter()
            .map(|x| x + 1e-2 * rng.gen_range(-1.0..1.0))
            .collect();
        let noisy = ScalarField::from_vec(&g, noisy).unwrap();
        let bad = appendix_inequality_check(&sol.u, &noisy, &rhs, &spec, cfg.tolerance(&g));
        assert!(!bad.passed);
    }

    #[test]
    fn identical_specs_contract_trivially() {
        let spec = corridor_spec(16, 0.05, 0.25, 0.5, 1.0);
        let recs = contraction_harness(&spec, &spec, &SolverConfig::default()).unwrap();
        assert_eq!(recs.len(), 5);
        assert!(recs.iter().all(|r| r.value == 0.0 && r.passed));
        let other = corridor_spec(16, 0.05, 0.5, 0.5, 1.0);
        assert!(contraction_harness(&spec, &other, &SolverConfig::default()).is_err());
    }
}

//! Large-`p` behaviour: sweeps over `p`, gradient saturation, and a
//! certifier for the limit variational inequality on finite test families.

use serde::{Deserialize, Serialize};

use crate::diagnostics::{trapezoid, PiecewiseLinear};
use crate::domain::{ProblemSpec, SolveReport};
use crate::error::{CrowdError, Result};
use crate::evolution::{evolve_with, EvolveOptions, Trajectory};
use crate::field::ScalarField;
use crate::grid::{BoundaryKind, Grid2D};
use crate::ops::{self, OperatorContext};
use crate::stationary::SolverConfig;

/// Half-width of the band around `|∇v| = 1` counted as saturated.
pub const SATURATION_BAND: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct PSweepRecord {
    pub p: f64,
    /// Largest face-gradient norm over all snapshots.
    pub max_grad: f64,
    /// `Σ_i τ ∫ |∇v_{i+1}|^q`, aligned with [`PSweepResult::q_list`].
    pub grad_norms: Vec<f64>,
    pub linf_u: f64,
    /// Saturated fraction of cells at the final time.
    pub saturation_fraction: f64,
    pub newton_iters_total: usize,
    pub reports: Vec<SolveReport>,
    /// Set when the evolution stopped early; the statistics cover the
    /// steps that were computed.
    pub failure: Option<String>,
}

impl PSweepRecord {
    pub fn converged(&self) -> bool {
        self.failure.is_none()
    }

    pub fn grad_norm(&self, q_list: &[f64], q: f64) -> Option<f64> {
        q_list
            .iter()
            .position(|&x| x == q)
            .map(|k| self.grad_norms[k])
    }
}

#[derive(Debug, Clone)]
pub struct PSweepResult {
    pub p_values: Vec<f64>,
    pub q_list: Vec<f64>,
    pub records: Vec<PSweepRecord>,
    /// Trajectory of the largest `p` that converged.
    pub limit: Option<Trajectory>,
}

impl PSweepResult {
    pub fn all_converged(&self) -> bool {
        self.records.iter().all(PSweepRecord::converged)
    }

    pub fn limit_p(&self) -> Option<f64> {
        self.records
            .iter()
            .rev()
            .find(|r| r.converged())
            .map(|r| r.p)
    }
}

pub fn p_sweep(spec: &ProblemSpec, p_list: &[f64], cfg: &SolverConfig) -> Result<PSweepResult> {
    p_sweep_with(spec, p_list, &[4.0], cfg)
}

/// Runs the evolution for each `p` in increasing order. The first step of
/// each run starts Newton from the previous `p`'s first step.
pub fn p_sweep_with(
    spec: &ProblemSpec,
    p_list: &[f64],
    q_list: &[f64],
    cfg: &SolverConfig,
) -> Result<PSweepResult> {
    if p_list.is_empty() {
        return Err(CrowdError::Parameter("empty p list".into()));
    }
    if p_list.iter().any(|&p| !(p > 2.0 && p.is_finite())) {
        return Err(CrowdError::Parameter("every p must exceed 2".into()));
    }
    if p_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(CrowdError::Parameter("p list must be increasing".into()));
    }
    if q_list.iter().any(|&q| !(q >= 1.0 && q.is_finite())) {
        return Err(CrowdError::Parameter("q must be at least 1".into()));
    }
    spec.check()?;
    cfg.check()?;

    let mut records = Vec::with_capacity(p_list.len());
    let mut limit = None;
    let mut guess: Option<ScalarField> = None;
    for &p in p_list {
        let sp = spec.with_p(p)?;
        let opts = EvolveOptions {
            snapshot_stride: 1,
            diagnostics: false,
            initial_guess: guess.clone(),
        };
        let (traj, failure) = match evolve_with(&sp, cfg, &opts) {
            Ok(t) => (t, None),
            Err(e) => {
                let msg = e.to_string();
                (*e.partial, Some(msg))
            }
        };
        let ctx = sp.operator_context()?;
        records.push(sweep_record(&sp, &ctx, &traj, q_list, failure.clone()));
        if traj.len() > 1 {
            guess = Some(traj.v[1].clone());
        }
        if failure.is_none() {
            limit = Some(traj);
        }
    }
    Ok(PSweepResult {
        p_values: p_list.to_vec(),
        q_list: q_list.to_vec(),
        records,
        limit,
    })
}

fn sweep_record(
    spec: &ProblemSpec,
    ctx: &OperatorContext,
    traj: &Trajectory,
    q_list: &[f64],
    failure: Option<String>,
) -> PSweepRecord {
    let grid = &spec.grid;
    let mut max_grad: f64 = 0.0;
    let mut grad_norms = vec![0.0; q_list.len()];
    for v in traj.v.iter().skip(1) {
        let g = ops::face_gradient(v, grid);
        max_grad = max_grad.max(ops::face_gradient_norm(&g, grid).max_abs());
        for (acc, &q) in grad_norms.iter_mut().zip(q_list) {
            *acc += spec.tau * ops::gradient_power_integral(&g, grid, q);
        }
    }
    let linf_u = traj.u.iter().fold(0.0_f64, |m, u| m.max(u.max_abs()));
    let saturation_fraction = traj
        .v
        .last()
        .map(|v| saturation_fraction(&gradient_saturation_map(v, ctx), SATURATION_BAND))
        .unwrap_or(0.0);
    PSweepRecord {
        p: spec.p,
        max_grad,
        grad_norms,
        linf_u,
        saturation_fraction,
        newton_iters_total: traj.reports.iter().map(|r| r.newton_iterations).sum(),
        reports: traj.reports.clone(),
        failure,
    }
}

/// Cell-wise `|∇v|` from the averaged normal gradients of each cell's
/// faces, walls left out.
pub fn gradient_saturation_map(v: &ScalarField, ctx: &OperatorContext) -> ScalarField {
    let grid = ctx.grid();
    let g = ops::face_gradient(v, grid);
    let mut out = ScalarField::zeros(grid);
    for j in 0..grid.ny() {
        for i in 0..grid.nx() {
            let gx = mean_open(
                [g.x[grid.xface(i, j)], g.x[grid.xface(i + 1, j)]],
                [grid.xface_label(i, j), grid.xface_label(i + 1, j)],
            );
            let gy = mean_open(
                [g.y[grid.yface(i, j)], g.y[grid.yface(i, j + 1)]],
                [grid.yface_label(i, j), grid.yface_label(i, j + 1)],
            );
            out[grid.cell(i, j)] = gx.hypot(gy);
        }
    }
    out
}

/// Mean over the faces that are not walls.
fn mean_open(vals: [f64; 2], labels: [Option<BoundaryKind>; 2]) -> f64 {
    let open: Vec<f64> = vals
        .iter()
        .zip(labels)
        .filter(|(_, l)| *l != Some(BoundaryKind::NeumannWall))
        .map(|(v, _)| *v)
        .collect();
    if open.is_empty() {
        0.0
    } else {
        open.iter().sum::<f64>() / open.len() as f64
    }
}

/// Fraction of cells with `|1 − m| ≤ band`.
pub fn saturation_fraction(map: &ScalarField, band: f64) -> f64 {
    if map.is_empty() {
        return 0.0;
    }
    let hits = map
        .values()
        .iter()
        .filter(|&&m| (m - 1.0).abs() <= band)
        .count();
    hits as f64 / map.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestFamilyKind {
    Cones,
    ExitRamps,
    TensorBumps,
}

impl TestFamilyKind {
    pub fn name(self) -> &'static str {
        match self {
            TestFamilyKind::Cones => "cones",
            TestFamilyKind::ExitRamps => "exit_ramps",
            TestFamilyKind::TensorBumps => "tensor_bumps",
        }
    }
}

/// Generator parameters; one test function per entry.
#[derive(Debug, Clone, PartialEq)]
pub enum TestFunctionFamily {
    /// `(r − |x − x₀|)₊` for each apex.
    Cones { apexes: Vec<[f64; 2]>, radius: f64 },
    /// `min(d(x, Γ_D), c)` for each cap `c`.
    ExitRamps { caps: Vec<f64> },
    /// `a (1 − s²)₊² (1 − t²)₊²` with `s, t` the offsets scaled by the widths.
    TensorBumps {
        centers: Vec<[f64; 2]>,
        widths: [f64; 2],
        amplitude: f64,
    },
}

impl TestFunctionFamily {
    pub fn kind(&self) -> TestFamilyKind {
        match self {
            TestFunctionFamily::Cones { .. } => TestFamilyKind::Cones,
            TestFunctionFamily::ExitRamps { .. } => TestFamilyKind::ExitRamps,
            TestFunctionFamily::TensorBumps { .. } => TestFamilyKind::TensorBumps,
        }
    }

    pub fn count(&self) -> usize {
        match self {
            TestFunctionFamily::Cones { apexes, .. } => apexes.len(),
            TestFunctionFamily::ExitRamps { caps } => caps.len(),
            TestFunctionFamily::TensorBumps { centers, .. } => centers.len(),
        }
    }
}

fn inside(grid: &Grid2D, x: [f64; 2]) -> bool {
    (0.0..=grid.lx()).contains(&x[0]) && (0.0..=grid.ly()).contains(&x[1])
}

/// Builds each member, takes its 1-Lipschitz lower envelope over the cell
/// centers, caps it by `d(x, Γ_D)`, and rescales in the rare case the
/// discrete face-gradient norm still exceeds 1.
pub fn generate_test_functions(
    family: &TestFunctionFamily,
    grid: &Grid2D,
) -> Result<Vec<ScalarField>> {
    if grid.exit_segments().is_empty() {
        return Err(CrowdError::Parameter("test functions need an exit".into()));
    }
    let raw: Vec<Box<dyn Fn([f64; 2]) -> f64>> = match family {
        TestFunctionFamily::Cones { apexes, radius } => {
            if !(*radius > 0.0 && radius.is_finite()) {
                return Err(CrowdError::Parameter(format!(
                    "cone radius must be positive, got {radius}"
                )));
            }
            let mut out: Vec<Box<dyn Fn([f64; 2]) -> f64>> = Vec::new();
            for &a in apexes {
                if !inside(grid, a) {
                    return Err(CrowdError::Parameter(format!(
                        "cone apex {a:?} outside the domain"
                    )));
                }
                let r = *radius;
                out.push(Box::new(move |x: [f64; 2]| {
                    (r - (x[0] - a[0]).hypot(x[1] - a[1])).max(0.0)
                }));
            }
            out
        }
        TestFunctionFamily::ExitRamps { caps } => {
            let mut out: Vec<Box<dyn Fn([f64; 2]) -> f64>> = Vec::new();
            for &c in caps {
                if !(c > 0.0) {
                    return Err(CrowdError::Parameter(format!(
                        "ramp cap must be positive, got {c}"
                    )));
                }
                out.push(Box::new(move |_| c));
            }
            out
        }
        TestFunctionFamily::TensorBumps {
            centers,
            widths,
            amplitude,
        } => {
            if !(widths[0] > 0.0 && widths[1] > 0.0 && *amplitude > 0.0) {
                return Err(CrowdError::Parameter(
                    "bump widths and amplitude must be positive".into(),
                ));
            }
            let mut out: Vec<Box<dyn Fn([f64; 2]) -> f64>> = Vec::new();
            for &c in centers {
                if !inside(grid, c) {
                    return Err(CrowdError::Parameter(format!(
                        "bump center {c:?} outside the domain"
                    )));
                }
                let (w, a) = (*widths, *amplitude);
                out.push(Box::new(move |x: [f64; 2]| {
                    let s = (x[0] - c[0]) / w[0];
                    let t = (x[1] - c[1]) / w[1];
                    a * (1.0 - s * s).max(0.0).powi(2) * (1.0 - t * t).max(0.0).powi(2)
                }));
            }
            out
        }
    };

    let centers: Vec<[f64; 2]> = (0..grid.ny())
        .flat_map(|j| (0..grid.nx()).map(move |i| (i, j)))
        .map(|(i, j)| grid.cell_center(i, j))
        .collect();
    let dist: Vec<f64> = centers.iter().map(|&x| grid.distance_to_exit(x)).collect();

    let mut out = Vec::with_capacity(raw.len());
    for f in raw {
        let vals: Vec<f64> = centers.iter().map(|&x| f(x)).collect();
        let env = lipschitz_envelope(&centers, &vals);
        let capped: Vec<f64> = env
            .iter()
            .zip(&dist)
            .map(|(e, d)| e.min(*d).max(0.0))
            .collect();
        let mut xi = ScalarField::from_vec(grid, capped)?;
        let m = max_gradient_norm(&xi, grid);
        if m > 1.0 {
            xi = xi.map(|v| v / m);
        }
        check_admissible(&xi, grid)?;
        out.push(xi);
    }
    Ok(out)
}

/// `min_y (f(y) + |x − y|)` over the sample points.
fn lipschitz_envelope(points: &[[f64; 2]], vals: &[f64]) -> Vec<f64> {
    points
        .iter()
        .map(|x| {
            points.iter().zip(vals).fold(f64::INFINITY, |m, (y, &f)| {
                m.min(f + (x[0] - y[0]).hypot(x[1] - y[1]))
            })
        })
        .collect()
}

fn max_gradient_norm(xi: &ScalarField, grid: &Grid2D) -> f64 {
    ops::face_gradient_norm(&ops::face_gradient(xi, grid), grid).max_abs()
}

/// `ξ ≥ 0`, finite, and face-gradient norm at most `1 + 1e-12`, the exit
/// ghosts taking `−ξ`.
pub fn check_admissible(xi: &ScalarField, grid: &Grid2D) -> Result<()> {
    if !xi.matches(grid) {
        return Err(CrowdError::Structure(
            "test function does not match the grid".into(),
        ));
    }
    if xi.values().iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(CrowdError::Parameter(
            "test function must be finite and nonnegative".into(),
        ));
    }
    let m = max_gradient_norm(xi, grid);
    if m > 1.0 + 1e-12 {
        return Err(CrowdError::Parameter(format!(
            "test function slope {m} exceeds 1"
        )));
    }
    Ok(())
}

/// `max(0, left − right)` for
/// `left = ∬ u ξ ψ′ + ∫ u₀ ξ ψ(0)` and `right = ∬ u V·∇(v − ξ) ψ + ∬ f (v − ξ) ψ`,
/// trapezoid in time over the snapshots. `u V` is the upwind face flux.
pub fn variational_inequality_residual(
    traj: &Trajectory,
    spec: &ProblemSpec,
    xi: &ScalarField,
    psi: &PiecewiseLinear,
) -> Result<f64> {
    let grid = &spec.grid;
    check_admissible(xi, grid)?;
    if !psi.is_nonnegative() {
        return Err(CrowdError::Parameter("psi must be nonnegative".into()));
    }
    if psi.value(spec.horizon) != 0.0 {
        return Err(CrowdError::Parameter(
            "psi must vanish at the horizon".into(),
        ));
    }
    if traj.is_empty() {
        return Err(CrowdError::Parameter("empty trajectory".into()));
    }
    let ctx = spec.operator_context()?;
    let mut left = Vec::with_capacity(traj.len());
    let mut right = Vec::with_capacity(traj.len());
    for k in 0..traj.len() {
        let t = traj.times[k];
        let (u, v) = (&traj.u[k], &traj.v[k]);
        let w = v.zip_map(xi, |a, b| a - b);
        let gw = ops::face_gradient(&w, grid);
        let drift = ops::drift_flux(u, &ctx);
        left.push(u.dot(xi, grid) * psi.derivative(t));
        let f = spec.source.at(t);
        right.push((ops::face_pairing(&drift, &gw, grid) + f.dot(&w, grid)) * psi.value(t));
    }
    let l = trapezoid(&traj.times, &left) + spec.u0.dot(xi, grid) * psi.value(0.0);
    let r = trapezoid(&traj.times, &right);
    Ok((l - r).max(0.0))
}

#[derive(Debug, Clone)]
pub struct TestPair {
    pub id: usize,
    pub family: TestFamilyKind,
    pub xi: ScalarField,
    pub psi: PiecewiseLinear,
}

/// Deterministic mix of cones, ramps and bumps, each paired with a time
/// profile vanishing at `horizon`: `(1 − t/T)₊` or a hat on a sub-interval.
pub fn standard_test_pairs(grid: &Grid2D, horizon: f64, count: usize) -> Result<Vec<TestPair>> {
    let (lx, ly) = (grid.lx(), grid.ly());
    let per = count.div_ceil(3);
    // Points on a golden-ratio lattice, kept away from the boundary.
    let lattice = |k: usize, shift: f64| {
        let a = ((k as f64 + shift) * 0.618_033_988_749_895).fract();
        let b = (k as f64 + 0.5) / per as f64;
        [lx * (0.1 + 0.8 * a), ly * (0.1 + 0.8 * b)]
    };
    let scale = lx.min(ly);
    let families = [
        TestFunctionFamily::Cones {
            apexes: (0..per).map(|k| lattice(k, 0.3)).collect(),
            radius: 0.3 * scale,
        },
        TestFunctionFamily::ExitRamps {
            caps: (0..per)
                .map(|k| scale * (k as f64 + 1.0) / per as f64)
                .collect(),
        },
        TestFunctionFamily::TensorBumps {
            centers: (0..per).map(|k| lattice(k, 0.7)).collect(),
            widths: [0.25 * lx, 0.25 * ly],
            amplitude: 0.5 * scale,
        },
    ];
    let mut gens = Vec::new();
    for fam in &families {
        let xs = generate_test_functions(fam, grid)?;
        gens.push(xs.into_iter().map(|x| (fam.kind(), x)).collect::<Vec<_>>());
    }
    let mut out = Vec::with_capacity(count);
    for k in 0..per {
        for g in &gens {
            if out.len() == count {
                break;
            }
            let (family, xi) = g[k].clone();
            let id = out.len();
            let psi = if id % 2 == 0 {
                PiecewiseLinear::decay(horizon)
            } else {
                let a = horizon * (id % 5) as f64 / 10.0;
                PiecewiseLinear::hat(a, horizon)?
            };
            out.push(TestPair {
                id,
                family,
                xi,
                psi,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{constant_velocity, SourceTerm};
    use crate::field::FaceVectorField;
    use crate::grid::BoundaryKind::*;

    fn box_grid(n: usize) -> Grid2D {
        Grid2D::new(n, n, 1.0, 1.0, [DirichletExit; 4]).unwrap()
    }

    fn zero_spec(g: &Grid2D) -> ProblemSpec {
        ProblemSpec::new(
            g.clone(),
            4.0,
            1e-3,
            0.1,
            0.5,
            FaceVectorField::zeros(g),
            SourceTerm::zero(g),
            ScalarField::zeros(g),
        )
        .unwrap()
    }

    #[test]
    fn zero_data_sweep_is_all_zero() {
        let g = box_grid(8);
        let r = p_sweep(&zero_spec(&g), &[3.0, 8.0, 32.0], &SolverConfig::default()).unwrap();
        assert!(r.all_converged());
        for rec in &r.records {
            assert_eq!(rec.max_grad, 0.0);
            assert_eq!(rec.grad_norms, vec![0.0]);
            assert_eq!(rec.linf_u, 0.0);
            assert_eq!(rec.saturation_fraction, 0.0);
        }
        assert_eq!(r.limit_p(), Some(32.0));
    }

    #[test]
    fn sweep_rejects_bad_lists() {
        let g = box_grid(4);
        let s = zero_spec(&g);
        let cfg = SolverConfig::default();
        assert!(p_sweep(&s, &[], &cfg).is_err());
        assert!(p_sweep(&s, &[4.0, 3.0], &cfg).is_err());
        assert!(p_sweep(&s, &[2.0, 3.0], &cfg).is_err());
    }

    #[test]
    fn cone_matches_formula() {
        let g = box_grid(32);
        let fam = TestFunctionFamily::Cones {
            apexes: vec![[0.5, 0.5]],
            radius: 0.3,
        };
        let xi = &generate_test_functions(&fam, &g).unwrap()[0];
        let expect = ScalarField::from_fn(&g, |x| {
            (0.3 - (x[0] - 0.5).hypot(x[1] - 0.5))
                .max(0.0)
                .min(g.distance_to_boundary(x))
        });
        // A rescale would only shrink it.
        let ratio = xi.max() / expect.max();
        assert!(ratio <= 1.0 && ratio > 0.9);
        assert!(xi.max_distance(&expect.map(|v| v * ratio)) < 1e-12);
    }

    #[test]
    fn distance_itself_is_admissible() {
        let g = Grid2D::new(
            32,
            16,
            2.0,
            1.0,
            [NeumannWall, DirichletExit, NeumannWall, NeumannWall],
        )
        .unwrap();
        let d = ScalarField::from_fn(&g, |x| g.distance_to_exit(x));
        check_admissible(&d, &g).unwrap();
        let m = max_gradient_norm(&d, &g);
        assert!((m - 1.0).abs() < 1e-12);
    }

    #[test]
    fn steep_bump_is_clipped() {
        let g = box_grid(32);
        let fam = TestFunctionFamily::TensorBumps {
            centers: vec![[0.5, 0.5], [0.3, 0.6]],
            widths: [0.1, 0.1],
            amplitude: 5.0,
        };
        let xs = generate_test_functions(&fam, &g).unwrap();
        assert_eq!(xs.len(), 2);
        for x in &xs {
            assert!(max_gradient_norm(x, &g) <= 1.0 + 1e-12);
            assert!(x.max() > 0.0);
        }
        let bad = TestFunctionFamily::Cones {
            apexes: vec![[1.5, 0.5]],
            radius: 0.3,
        };
        assert!(generate_test_functions(&bad, &g).is_err());
    }

    #[test]
    fn saturation_of_distance() {
        let g = Grid2D::new(
            32,
            8,
            1.0,
            0.25,
            [NeumannWall, DirichletExit, NeumannWall, NeumannWall],
        )
        .unwrap();
        let ctx = OperatorContext::new(g.clone(), 4.0, FaceVectorField::zeros(&g)).unwrap();
        let z = gradient_saturation_map(&ScalarField::zeros(&g), &ctx);
        assert_eq!(z.max_abs(), 0.0);
        let d = ScalarField::from_fn(&g, |x| g.distance_to_exit(x));
        let m = gradient_saturation_map(&d, &ctx);
        assert!(m.max_distance(&ScalarField::constant(&g, 1.0)) < 1e-12);
        assert_eq!(saturation_fraction(&m, SATURATION_BAND), 1.0);
    }

    #[test]
    fn vi_residual_trivial_cases() {
        let g = box_grid(8);
        let spec = zero_spec(&g);
        let traj = crate::evolution::evolve(&spec, &SolverConfig::default()).unwrap();
        for pair in standard_test_pairs(&g, spec.horizon, 9).unwrap() {
            assert_eq!(
                variational_inequality_residual(&traj, &spec, &pair.xi, &pair.psi).unwrap(),
                0.0
            );
        }
        // Frozen u, V = 0, f = 0: the u₀ term telescopes against ψ′.
        let g = Grid2D::new(
            8,
            8,
            1.0,
            1.0,
            [NeumannWall, DirichletExit, NeumannWall, NeumannWall],
        )
        .unwrap();
        let u0 = ScalarField::from_fn(&g, |x| 0.5 * x[0]);
        let mut spec = zero_spec(&g);
        spec.u0 = u0.clone();
        let mut traj = crate::evolution::evolve(&zero_spec(&g), &SolverConfig::default()).unwrap();
        traj.u.iter_mut().for_each(|u| *u = u0.clone());
        let xi = ScalarField::from_fn(&g, |x| g.distance_to_exit(x));
        let r = variational_inequality_residual(&traj, &spec, &xi, &PiecewiseLinear::decay(0.5))
            .unwrap();
        assert!(r < 1e-15, "{r}");
    }

    #[test]
    fn vi_residual_detects_ignored_source() {
        // Frozen u with f = 2 > 0: the certificate is off by ∬ f ξ ψ.
        let g = Grid2D::new(
            8,
            8,
            1.0,
            1.0,
            [NeumannWall, DirichletExit, NeumannWall, NeumannWall],
        )
        .unwrap();
        let mut spec = zero_spec(&g);
        spec.source = SourceTerm::constant(&g, 2.0);
        let traj = crate::evolution::evolve(&zero_spec(&g), &SolverConfig::default()).unwrap();
        let xi = ScalarField::from_fn(&g, |x| g.distance_to_exit(x));
        let r = variational_inequality_residual(&traj, &spec, &xi, &PiecewiseLinear::decay(0.5))
            .unwrap();
        let expected = 2.0 * xi.integral(&g) * 0.25;
        assert!((r - expected).abs() < 1e-12, "{r} vs {expected}");
    }

    #[test]
    fn vi_residual_rejects_bad_inputs() {
        let g = box_grid(8);
        let spec = zero_spec(&g);
        let traj = crate::evolution::evolve(&spec, &SolverConfig::default()).unwrap();
        let xi = ScalarField::from_fn(&g, |x| g.distance_to_exit(x));
        assert!(
            variational_inequality_residual(&traj, &spec, &xi, &PiecewiseLinear::decay(1.0))
                .is_err()
        );
        let steep = xi.map(|v| 3.0 * v);
        assert!(variational_inequality_residual(
            &traj,
            &spec,
            &steep,
            &PiecewiseLinear::decay(0.5)
        )
        .is_err());
    }

    #[test]
    fn standard_pairs_are_admissible() {
        let g = Grid2D::new(
            24,
            16,
            1.5,
            1.0,
            [NeumannWall, DirichletExit, NeumannWall, NeumannWall],
        )
        .unwrap();
        let pairs = standard_test_pairs(&g, 1.0, 20).unwrap();
        assert_eq!(pairs.len(), 20);
        for p in &pairs {
            check_admissible(&p.xi, &g).unwrap();
            assert!(p.xi.max() > 0.0);
            assert_eq!(p.psi.value(1.0), 0.0);
            assert!(p.psi.is_nonnegative());
        }
        let kinds: std::collections::BTreeSet<_> = pairs.iter().map(|p| p.family.name()).collect();
        assert_eq!(kinds.len(), 3);
    }

    #[test]
    fn corridor_sweep_saturates() {
        let g = Grid2D::new(
            16,
            4,
            1.0,
            0.25,
            [NeumannWall, DirichletExit, NeumannWall, NeumannWall],
        )
        .unwrap();
        let spec = ProblemSpec::new(
            g.clone(),
            4.0,
            1e-3,
            0.05,
            1.0,
            constant_velocity(&g, [1.0, 0.0]),
            SourceTerm::constant(&g, 3.0),
            ScalarField::zeros(&g),
        )
        .unwrap();
        let r = p_sweep(&spec, &[4.0, 8.0, 16.0], &SolverConfig::default()).unwrap();
        assert!(r.all_converged());
        let mg: Vec<f64> = r.records.iter().map(|x| x.max_grad).collect();
        assert!(mg.windows(2).all(|w| w[1] <= 1.01 * w[0]), "{mg:?}");
        // Steady profile |v′|^{p−1} = 3x − 1 near the exit.
        assert!((mg[2] - 2f64.powf(1.0 / 15.0)).abs() < 0.05, "{mg:?}");
        assert!(r.records.iter().all(|x| x.linf_u <= 1.0 + 1e-8));
        assert!(r.records[2].saturation_fraction > 0.0);
    }
}

//! Face-based finite-volume operators.
//!
//! Fluxes live on faces as normal components. Boundary conditions enter
//! through ghost values: an exit face reflects the cell value with a sign
//! flip (`v_ghost = -v`, so the face value is 0), a wall face carries no
//! normal gradient and no flux.
//!
//! Summation by parts holds exactly with the dual face measure
//! `m_f = hx·hy` on interior faces and `hx·hy/2` on exit faces:
//! `Σ_cells div(F)·w·|cell| = −Σ_faces F·∇w·m_f` whenever `F` vanishes on
//! wall faces.

use crate::error::{CrowdError, Result};
use crate::field::{FaceVectorField, ScalarField};
use crate::grid::{BoundaryKind, Grid2D};

/// Grid, exponent and velocity shared by the flux operators.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorContext {
    grid: Grid2D,
    p: f64,
    velocity: FaceVectorField,
}

impl OperatorContext {
    pub fn new(grid: Grid2D, p: f64, velocity: FaceVectorField) -> Result<Self> {
        if !(p > 2.0 && p.is_finite()) {
            return Err(CrowdError::Parameter(format!("p must exceed 2, got {p}")));
        }
        if !velocity.matches(&grid) {
            return Err(CrowdError::Structure(
                "velocity does not match the grid".into(),
            ));
        }
        if !velocity.is_finite() {
            return Err(CrowdError::Data("non-finite velocity".into()));
        }
        Ok(Self { grid, p, velocity })
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }
    pub fn p(&self) -> f64 {
        self.p
    }
    pub fn velocity(&self) -> &FaceVectorField {
        &self.velocity
    }
}

/// Dual measure of an x-face.
#[inline]
pub fn xface_measure(grid: &Grid2D, i: usize) -> f64 {
    if i == 0 || i == grid.nx() {
        0.5 * grid.cell_area()
    } else {
        grid.cell_area()
    }
}

/// Dual measure of a y-face.
#[inline]
pub fn yface_measure(grid: &Grid2D, j: usize) -> f64 {
    if j == 0 || j == grid.ny() {
        0.5 * grid.cell_area()
    } else {
        grid.cell_area()
    }
}

/// Two-point normal differences written into `out`.
pub fn face_gradient_into(v: &[f64], grid: &Grid2D, out: &mut FaceVectorField) {
    let (nx, ny, hx, hy) = (grid.nx(), grid.ny(), grid.hx(), grid.hy());
    for j in 0..ny {
        let row = &v[j * nx..(j + 1) * nx];
        for i in 0..=nx {
            let g = match grid.xface_label(i, j) {
                None => (row[i] - row[i - 1]) / hx,
                Some(BoundaryKind::NeumannWall) => 0.0,
                Some(BoundaryKind::DirichletExit) => {
                    if i == 0 {
                        2.0 * row[0] / hx
                    } else {
                        -2.0 * row[nx - 1] / hx
                    }
                }
            };
            out.x[grid.xface(i, j)] = g;
        }
    }
    for j in 0..=ny {
        for i in 0..nx {
            let g = match grid.yface_label(i, j) {
                None => (v[grid.cell(i, j)] - v[grid.cell(i, j - 1)]) / hy,
                Some(BoundaryKind::NeumannWall) => 0.0,
                Some(BoundaryKind::DirichletExit) => {
                    if j == 0 {
                        2.0 * v[grid.cell(i, 0)] / hy
                    } else {
                        -2.0 * v[grid.cell(i, ny - 1)] / hy
                    }
                }
            };
            out.y[grid.yface(i, j)] = g;
        }
    }
}

/// Normal component of `∇v` on every face.
pub fn face_gradient(v: &ScalarField, grid: &Grid2D) -> FaceVectorField {
    let mut out = FaceVectorField::zeros(grid);
    face_gradient_into(v.values(), grid, &mut out);
    out
}

/// Transverse component at each face: the mean of the four neighbouring
/// normal differences of the other family. Exit faces get 0 (the trace
/// vanishes along them); wall faces use the two interior neighbours.
pub fn transverse_into(g: &FaceVectorField, grid: &Grid2D, out: &mut FaceVectorField) {
    let (nx, ny) = (grid.nx(), grid.ny());
    for j in 0..ny {
        for i in 0..=nx {
            let t = match grid.xface_label(i, j) {
                None => {
                    0.25 * (g.y[grid.yface(i - 1, j)]
                        + g.y[grid.yface(i - 1, j + 1)]
                        + g.y[grid.yface(i, j)]
                        + g.y[grid.yface(i, j + 1)])
                }
                Some(BoundaryKind::DirichletExit) => 0.0,
                Some(BoundaryKind::NeumannWall) => {
                    let c = if i == 0 { 0 } else { nx - 1 };
                    0.5 * (g.y[grid.yface(c, j)] + g.y[grid.yface(c, j + 1)])
                }
            };
            out.x[grid.xface(i, j)] = t;
        }
    }
    for j in 0..=ny {
        for i in 0..nx {
            let t = match grid.yface_label(i, j) {
                None => {
                    0.25 * (g.x[grid.xface(i, j - 1)]
                        + g.x[grid.xface(i + 1, j - 1)]
                        + g.x[grid.xface(i, j)]
                        + g.x[grid.xface(i + 1, j)])
                }
                Some(BoundaryKind::DirichletExit) => 0.0,
                Some(BoundaryKind::NeumannWall) => {
                    let r = if j == 0 { 0 } else { ny - 1 };
                    0.5 * (g.x[grid.xface(i, r)] + g.x[grid.xface(i + 1, r)])
                }
            };
            out.y[grid.yface(i, j)] = t;
        }
    }
}

pub fn transverse_gradient(g: &FaceVectorField, grid: &Grid2D) -> FaceVectorField {
    let mut out = FaceVectorField::zeros(grid);
    transverse_into(g, grid, &mut out);
    out
}

/// Euclidean norm of the reconstructed full gradient at every face.
pub fn face_gradient_norm(g: &FaceVectorField, grid: &Grid2D) -> FaceVectorField {
    let t = transverse_gradient(g, grid);
    g.zip_map(&t, f64::hypot)
}

/// `|g|^{p-2} g` for a single vector.
pub fn p_flux_vector(g: [f64; 2], p: f64) -> [f64; 2] {
    let n = g[0].hypot(g[1]);
    if n == 0.0 {
        return [0.0, 0.0];
    }
    let k = n.powf(p - 2.0);
    [k * g[0], k * g[1]]
}

/// Normal component of `|∇v|^{p-2}∇v` at each face, with `|∇v|` taken from
/// the full reconstructed face gradient.
pub fn p_flux(g: &FaceVectorField, ctx: &OperatorContext) -> FaceVectorField {
    let t = transverse_gradient(g, ctx.grid());
    let p = ctx.p();
    g.zip_map(&t, |n, tr| {
        let norm = n.hypot(tr);
        if norm == 0.0 {
            0.0
        } else {
            norm.powf(p - 2.0) * n
        }
    })
}

/// Upwind drift flux `u V` on every face.
///
/// Walls carry no flux. On an exit face the interior value is used for
/// outflow (`V·ν ≥ 0`) and 0 for inflow.
pub fn drift_flux_into(u: &[f64], grid: &Grid2D, vel: &FaceVectorField, out: &mut FaceVectorField) {
    let (nx, ny) = (grid.nx(), grid.ny());
    for j in 0..ny {
        for i in 0..=nx {
            let f = grid.xface(i, j);
            let vf = vel.x[f];
            out.x[f] = match grid.xface_label(i, j) {
                None => {
                    let up = if vf >= 0.0 {
                        u[grid.cell(i - 1, j)]
                    } else {
                        u[grid.cell(i, j)]
                    };
                    up * vf
                }
                Some(BoundaryKind::NeumannWall) => 0.0,
                Some(BoundaryKind::DirichletExit) => {
                    if i == 0 {
                        if vf <= 0.0 {
                            u[grid.cell(0, j)] * vf
                        } else {
                            0.0
                        }
                    } else if vf >= 0.0 {
                        u[grid.cell(nx - 1, j)] * vf
                    } else {
                        0.0
                    }
                }
            };
        }
    }
    for j in 0..=ny {
        for i in 0..nx {
            let f = grid.yface(i, j);
            let vf = vel.y[f];
            out.y[f] = match grid.yface_label(i, j) {
                None => {
                    let up = if vf >= 0.0 {
                        u[grid.cell(i, j - 1)]
                    } else {
                        u[grid.cell(i, j)]
                    };
                    up * vf
                }
                Some(BoundaryKind::NeumannWall) => 0.0,
                Some(BoundaryKind::DirichletExit) => {
                    if j == 0 {
                        if vf <= 0.0 {
                            u[grid.cell(i, 0)] * vf
                        } else {
                            0.0
                        }
                    } else if vf >= 0.0 {
                        u[grid.cell(i, ny - 1)] * vf
                    } else {
                        0.0
                    }
                }
            };
        }
    }
}

pub fn drift_flux(u: &ScalarField, ctx: &OperatorContext) -> FaceVectorField {
    let mut out = FaceVectorField::zeros(ctx.grid());
    drift_flux_into(u.values(), ctx.grid(), ctx.velocity(), &mut out);
    out
}

/// Discrete divergence written into `out`.
pub fn divergence_into(f: &FaceVectorField, grid: &Grid2D, out: &mut [f64]) {
    let (nx, ny, hx, hy) = (grid.nx(), grid.ny(), grid.hx(), grid.hy());
    for j in 0..ny {
        for i in 0..nx {
            out[grid.cell(i, j)] = (f.x[grid.xface(i + 1, j)] - f.x[grid.xface(i, j)]) / hx
                + (f.y[grid.yface(i, j + 1)] - f.y[grid.yface(i, j)]) / hy;
        }
    }
}

pub fn divergence(f: &FaceVectorField, grid: &Grid2D) -> ScalarField {
    let mut out = vec![0.0; grid.num_cells()];
    divergence_into(f, grid, &mut out);
    ScalarField::from_vec(grid, out).unwrap_or_else(|_| {
        // Non-finite input fluxes propagate as-is.
        let mut s = ScalarField::zeros(grid);
        divergence_into(f, grid, s.values_mut());
        s
    })
}

/// `Δ_p v = div(|∇v|^{p-2}∇v)`.
pub fn p_laplacian(v: &ScalarField, ctx: &OperatorContext) -> ScalarField {
    let g = face_gradient(v, ctx.grid());
    divergence(&p_flux(&g, ctx), ctx.grid())
}

/// `Σ_faces a·b·m_f` with the dual face measure.
pub fn face_pairing(a: &FaceVectorField, b: &FaceVectorField, grid: &Grid2D) -> f64 {
    let (nx, ny) = (grid.nx(), grid.ny());
    let mut acc = 0.0;
    for j in 0..ny {
        for i in 0..=nx {
            let f = grid.xface(i, j);
            acc += a.x[f] * b.x[f] * xface_measure(grid, i);
        }
    }
    for j in 0..=ny {
        for i in 0..nx {
            let f = grid.yface(i, j);
            acc += a.y[f] * b.y[f] * yface_measure(grid, j);
        }
    }
    acc
}

/// Discrete `∫|∇v|^q`: `Σ_faces |G_f|^{q-2} g_f² m_f`, splitting the norm
/// between the two face families the way the p-flux pairing does.
pub fn gradient_power_integral(g: &FaceVectorField, grid: &Grid2D, q: f64) -> f64 {
    let norm = face_gradient_norm(g, grid);
    let w = FaceVectorField::from_vecs(
        grid,
        g.x.iter()
            .zip(&norm.x)
            .map(|(&n, &m)| if m == 0.0 { 0.0 } else { m.powf(q - 2.0) * n })
            .collect(),
        g.y.iter()
            .zip(&norm.y)
            .map(|(&n, &m)| if m == 0.0 { 0.0 } else { m.powf(q - 2.0) * n })
            .collect(),
    );
    match w {
        Ok(w) => face_pairing(&w, g, grid),
        Err(_) => f64::INFINITY,
    }
}

/// Velocity as the drift sees it: normal components on wall faces removed.
pub fn effective_velocity(ctx: &OperatorContext) -> FaceVectorField {
    let grid = ctx.grid();
    let mut v = ctx.velocity().clone();
    for face in grid.boundary_faces() {
        if grid.label(face) == BoundaryKind::NeumannWall {
            let (is_x, k) = grid.boundary_face_index(face);
            if is_x {
                v.x[k] = 0.0;
            } else {
                v.y[k] = 0.0;
            }
        }
    }
    v
}

/// Net outward flux `Σ F·ν·|face|` over the boundary faces selected by `keep`.
pub fn boundary_outflow(
    f: &FaceVectorField,
    grid: &Grid2D,
    keep: impl Fn(BoundaryKind) -> bool,
) -> f64 {
    let mut acc = 0.0;
    for face in grid.boundary_faces() {
        if !keep(grid.label(face)) {
            continue;
        }
        let (is_x, k) = grid.boundary_face_index(face);
        let normal = face.edge.normal();
        let comp = if is_x {
            f.x[k] * normal[0]
        } else {
            f.y[k] * normal[1]
        };
        acc += comp * grid.face_length(face.edge);
    }
    acc
}

//! Dense reference solver in one space dimension.
//!
//! Cells `0..n` of width `h`, faces `0..=n`. One resolvent step solves
//!
//! ```text
//! H_ε(v_i) − (τ/h) (F_{i+1/2} − F_{i−1/2}) = rhs_i,
//! F = |g|^{p−2} g − V u_up,   g = (v_{i+1} − v_i)/h,
//! ```
//!
//! with ghost value `−v` behind an exit, no flux through a wall, and the
//! upwind density taken from the cell the velocity leaves (nothing enters
//! through an exit). The Jacobian is assembled in full and factorized
//! densely. Only `h_eps` is borrowed from `crowd_core`; everything else is
//! written out again here so agreement with the 2D solver means something.

use crowd_core::graph::h_eps;
use nalgebra::{DMatrix, DVector};

/// Largest grid the oracle accepts.
pub const MAX_CELLS: usize = 512;
/// Max-norm residual every accepted solve reaches, relative to the
/// largest term in any equation (see [`DenseSystem1D::scaled_residual`]).
pub const ORACLE_TOL: f64 = 1e-12;
/// Exponent where the continuation ladder starts.
pub const CONTINUATION_START: f64 = 3.0;

#[derive(Debug, thiserror::Error)]
pub enum OracleError {
    #[error("oracle is limited to {MAX_CELLS} cells, got {0}")]
    TooLarge(usize),
    #[error("bad oracle input: {0}")]
    Input(String),
    #[error("Newton did not reach {ORACLE_TOL:e} at p = {p} (residual {residual:.3e})")]
    Continuation { p: f64, residual: f64 },
}

pub type Result<T> = std::result::Result<T, OracleError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum End {
    Exit,
    Wall,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseSystem1D {
    pub n: usize,
    pub h: f64,
    pub p: f64,
    pub eps: f64,
    pub tau: f64,
    pub rhs: Vec<f64>,
    /// Face velocities, `n + 1` of them; wall faces are ignored.
    pub velocity: Vec<f64>,
    pub left: End,
    pub right: End,
}

impl DenseSystem1D {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        n: usize,
        length: f64,
        p: f64,
        eps: f64,
        tau: f64,
        rhs: Vec<f64>,
        velocity: Vec<f64>,
        left: End,
        right: End,
    ) -> Result<Self> {
        if n > MAX_CELLS {
            return Err(OracleError::TooLarge(n));
        }
        let sys = Self {
            n,
            h: length / n as f64,
            p,
            eps,
            tau,
            rhs,
            velocity,
            left,
            right,
        };
        sys.check()?;
        Ok(sys)
    }

    fn check(&self) -> Result<()> {
        let bad = |m: &str| Err(OracleError::Input(m.to_string()));
        if self.n == 0 {
            return bad("need at least one cell");
        }
        if self.n > MAX_CELLS {
            return Err(OracleError::TooLarge(self.n));
        }
        if !(self.h > 0.0 && self.h.is_finite()) {
            return bad("length must be positive");
        }
        if !(self.p > 2.0 && self.p.is_finite()) {
            return bad("p must exceed 2");
        }
        if !(self.eps > 0.0 && self.tau > 0.0) {
            return bad("eps and tau must be positive");
        }
        if self.rhs.len() != self.n || self.velocity.len() != self.n + 1 {
            return bad("rhs needs n values and velocity n + 1");
        }
        if self
            .rhs
            .iter()
            .chain(&self.velocity)
            .any(|x| !x.is_finite())
        {
            return bad("non-finite data");
        }
        Ok(())
    }

    fn at_p(&self, p: f64) -> Self {
        Self { p, ..self.clone() }
    }

    fn h_eps(&self, r: f64) -> f64 {
        h_eps(r, self.eps).expect("eps checked")
    }

    fn h_slope(&self, r: f64) -> f64 {
        if r.abs() <= self.eps {
            1.0 / self.eps
        } else {
            0.0
        }
    }

    /// Flux through face `f` and its partial derivatives in the two
    /// neighbouring `v` values (`left cell`, `right cell`).
    fn face(&self, v: &[f64], f: usize) -> (f64, f64, f64) {
        let (n, h, e) = (self.n, self.h, self.p - 2.0);
        let pw = |g: f64| if g == 0.0 { 0.0 } else { g.abs().powf(e) * g };
        let dpw = |g: f64| {
            if g == 0.0 {
                0.0
            } else {
                (e + 1.0) * g.abs().powf(e)
            }
        };
        let vel = self.velocity[f];
        if f == 0 {
            if self.left == End::Wall {
                return (0.0, 0.0, 0.0);
            }
            let g = 2.0 * v[0] / h;
            // Outflow through the left end means vel < 0.
            let (ud, dud) = if vel < 0.0 {
                (self.h_eps(v[0]), self.h_slope(v[0]))
            } else {
                (0.0, 0.0)
            };
            return (pw(g) - vel * ud, 0.0, dpw(g) * 2.0 / h - vel * dud);
        }
        if f == n {
            if self.right == End::Wall {
                return (0.0, 0.0, 0.0);
            }
            let g = -2.0 * v[n - 1] / h;
            let (ud, dud) = if vel > 0.0 {
                (self.h_eps(v[n - 1]), self.h_slope(v[n - 1]))
            } else {
                (0.0, 0.0)
            };
            return (pw(g) - vel * ud, dpw(g) * -2.0 / h - vel * dud, 0.0);
        }
        let (a, b) = (v[f - 1], v[f]);
        let g = (b - a) / h;
        let d = dpw(g) / h;
        if vel > 0.0 {
            (pw(g) - vel * self.h_eps(a), -d - vel * self.h_slope(a), d)
        } else if vel < 0.0 {
            (pw(g) - vel * self.h_eps(b), -d, d - vel * self.h_slope(b))
        } else {
            (pw(g), -d, d)
        }
    }

    pub fn residual(&self, v: &[f64]) -> Vec<f64> {
        let c = self.tau / self.h;
        let fl: Vec<f64> = (0..=self.n).map(|f| self.face(v, f).0).collect();
        (0..self.n)
            .map(|i| self.h_eps(v[i]) - c * (fl[i + 1] - fl[i]) - self.rhs[i])
            .collect()
    }

    /// `max|R|` divided by `max(1, largest |term|)`, so the test is not
    /// below the rounding floor when `τ/h` is large.
    pub fn scaled_residual(&self, v: &[f64]) -> f64 {
        let c = self.tau / self.h;
        let fl: Vec<f64> = (0..=self.n).map(|f| self.face(v, f).0.abs()).collect();
        let scale = (0..self.n)
            .map(|i| self.h_eps(v[i]).abs() + c * (fl[i + 1] + fl[i]) + self.rhs[i].abs())
            .fold(1.0, f64::max);
        max_abs(&self.residual(v)) / scale
    }

    pub fn jacobian(&self, v: &[f64]) -> DMatrix<f64> {
        let n = self.n;
        let c = self.tau / self.h;
        let mut j = DMatrix::zeros(n, n);
        for i in 0..n {
            j[(i, i)] += self.h_slope(v[i]);
        }
        for f in 0..=n {
            let (_, dl, dr) = self.face(v, f);
            // Face f is the right face of cell f−1 and the left face of cell f.
            if f >= 1 {
                let i = f - 1;
                j[(i, i)] -= c * dl;
                if f < n {
                    j[(i, f)] -= c * dr;
                }
            }
            if f < n {
                if f >= 1 {
                    j[(f, f - 1)] += c * dl;
                }
                j[(f, f)] += c * dr;
            }
        }
        j
    }
}

fn max_abs(r: &[f64]) -> f64 {
    r.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn norm2(r: &[f64]) -> f64 {
    r.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Damped Newton with a Levenberg shift when the step is unusable.
fn newton(sys: &DenseSystem1D, v0: &[f64]) -> (Vec<f64>, f64) {
    let n = sys.n;
    let mut v = v0.to_vec();
    let mut r = sys.residual(&v);
    let mut shift = 0.0;
    for _ in 0..400 {
        if sys.scaled_residual(&v) <= ORACLE_TOL {
            break;
        }
        let mut j = sys.jacobian(&v);
        if shift > 0.0 {
            let scale = (0..n).map(|i| j[(i, i)].abs()).sum::<f64>() / n as f64 + 1.0;
            for i in 0..n {
                j[(i, i)] += shift * scale;
            }
        }
        let step = j
            .lu()
            .solve(&DVector::from_iterator(n, r.iter().map(|x| -x)));
        let mut accepted = false;
        if let Some(s) = step.filter(|s| s.iter().all(|x| x.is_finite())) {
            let base = norm2(&r);
            let mut lam = 1.0;
            for _ in 0..50 {
                let trial: Vec<f64> = v.iter().zip(s.iter()).map(|(a, b)| a + lam * b).collect();
                let rt = sys.residual(&trial);
                if norm2(&rt) < (1.0 - 1e-4 * lam) * base {
                    v = trial;
                    r = rt;
                    accepted = true;
                    break;
                }
                lam *= 0.5;
            }
        }
        shift = if accepted {
            if shift < 1e-8 {
                0.0
            } else {
                shift * 0.1
            }
        } else if shift == 0.0 {
            1e-6
        } else {
            shift * 10.0
        };
        if shift > 1e8 {
            break;
        }
    }
    let res = sys.scaled_residual(&v);
    (v, res)
}

/// Solves one step from `v ≡ 0`, climbing in `p` from 3.
pub fn oracle_solve(sys: &DenseSystem1D) -> Result<(Vec<f64>, Vec<f64>)> {
    oracle_solve_from(sys, &vec![0.0; sys.n])
}

/// Tries Newton from `guess` at the target exponent first, then falls back
/// to the continuation ladder from `p = 3`, halving any rung that fails.
/// The first rung itself may need a walk in `τ`.
pub fn oracle_solve_from(sys: &DenseSystem1D, guess: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    sys.check()?;
    if guess.len() != sys.n {
        return Err(OracleError::Input("guess has the wrong length".into()));
    }
    let (v, res) = newton(sys, guess);
    if res <= ORACLE_TOL {
        return Ok(finish(sys, v));
    }
    let mut p = CONTINUATION_START.min(sys.p);
    let mut v = start_at(&sys.at_p(p))?;
    let mut dp = 1.0;
    while p < sys.p {
        let next = (p + dp).min(sys.p);
        let (w, res) = newton(&sys.at_p(next), &v);
        if res <= ORACLE_TOL {
            v = w;
            p = next;
            dp *= 1.5;
        } else {
            dp *= 0.5;
            if dp < 1e-3 {
                return Err(OracleError::Continuation {
                    p: next,
                    residual: res,
                });
            }
        }
    }
    Ok(finish(sys, v))
}

/// Cold solve; when Newton stalls, walks `τ` up from `τ/1024`.
fn start_at(sys: &DenseSystem1D) -> Result<Vec<f64>> {
    let (v, res) = newton(sys, &vec![0.0; sys.n]);
    if res <= ORACLE_TOL {
        return Ok(v);
    }
    let with_tau = |tau: f64| DenseSystem1D { tau, ..sys.clone() };
    let mut lt = (sys.tau / 1024.0).ln();
    let (mut v, res) = newton(&with_tau(lt.exp()), &vec![0.0; sys.n]);
    if res > ORACLE_TOL {
        return Err(OracleError::Continuation {
            p: sys.p,
            residual: res,
        });
    }
    let top = sys.tau.ln();
    let mut dl = 1.0;
    while lt < top {
        let next = (lt + dl).min(top);
        let tau = if next == top { sys.tau } else { next.exp() };
        let (w, res) = newton(&with_tau(tau), &v);
        if res <= ORACLE_TOL {
            v = w;
            lt = next;
            dl *= 1.5;
        } else {
            dl *= 0.5;
            if dl < 1e-3 {
                return Err(OracleError::Continuation {
                    p: sys.p,
                    residual: res,
                });
            }
        }
    }
    Ok(v)
}

fn finish(sys: &DenseSystem1D, v: Vec<f64>) -> (Vec<f64>, Vec<f64>) {
    let u = v.iter().map(|&x| sys.h_eps(x)).collect();
    (u, v)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory1D {
    pub times: Vec<f64>,
    pub u: Vec<Vec<f64>>,
    /// `v[0]` is all zeros.
    pub v: Vec<Vec<f64>>,
}

impl Trajectory1D {
    pub fn mass(&self, k: usize, h: f64) -> f64 {
        self.u[k].iter().sum::<f64>() * h
    }
}

/// Implicit Euler: step `i` solves with `rhs = u_i + τ f_i`, where
/// `sources[i]` is `f_i`. `template.rhs` is ignored.
pub fn oracle_evolve(
    template: &DenseSystem1D,
    u0: &[f64],
    sources: &[Vec<f64>],
) -> Result<Trajectory1D> {
    template.check()?;
    if u0.len() != template.n || sources.iter().any(|f| f.len() != template.n) {
        return Err(OracleError::Input(
            "u0 and every source need n values".into(),
        ));
    }
    let mut traj = Trajectory1D {
        times: vec![0.0],
        u: vec![u0.to_vec()],
        v: vec![vec![0.0; template.n]],
    };
    for (i, f) in sources.iter().enumerate() {
        let prev = &traj.u[i];
        let rhs = prev
            .iter()
            .zip(f)
            .map(|(u, f)| u + template.tau * f)
            .collect();
        let sys = DenseSystem1D {
            rhs,
            ..template.clone()
        };
        let (u, v) = oracle_solve_from(&sys, &traj.v[i])?;
        traj.times.push((i + 1) as f64 * template.tau);
        traj.u.push(u);
        traj.v.push(v);
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sys(
        n: usize,
        p: f64,
        eps: f64,
        tau: f64,
        rhs: f64,
        vel: f64,
        left: End,
        right: End,
    ) -> DenseSystem1D {
        DenseSystem1D::new(
            n,
            1.0,
            p,
            eps,
            tau,
            vec![rhs; n],
            vec![vel; n + 1],
            left,
            right,
        )
        .unwrap()
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let s = sys(16, 4.0, 1e-3, 1.0, 0.0, 0.0, End::Wall, End::Exit);
        let (u, v) = oracle_solve(&s).unwrap();
        assert!(u.iter().chain(&v).all(|&x| x == 0.0));
    }

    #[test]
    fn flat_neumann_case() {
        let s = sys(4, 4.0, 0.1, 1.0, 0.5, 0.0, End::Wall, End::Wall);
        let (u, v) = oracle_solve(&s).unwrap();
        for k in 0..4 {
            assert!((v[k] - 0.05).abs() < 1e-14);
            assert!((u[k] - 0.5).abs() < 1e-14);
        }
    }

    #[test]
    fn rejects_large_and_malformed() {
        assert!(matches!(
            DenseSystem1D::new(
                513,
                1.0,
                4.0,
                1e-3,
                1.0,
                vec![0.0; 513],
                vec![0.0; 514],
                End::Exit,
                End::Exit
            ),
            Err(OracleError::TooLarge(513))
        ));
        assert!(DenseSystem1D::new(
            4,
            1.0,
            2.0,
            1e-3,
            1.0,
            vec![0.0; 4],
            vec![0.0; 5],
            End::Exit,
            End::Exit
        )
        .is_err());
        assert!(DenseSystem1D::new(
            4,
            1.0,
            4.0,
            1e-3,
            1.0,
            vec![0.0; 3],
            vec![0.0; 5],
            End::Exit,
            End::Exit
        )
        .is_err());
    }

    #[test]
    fn jacobian_matches_differences() {
        let mut s = sys(12, 4.5, 0.05, 0.3, 0.4, 0.0, End::Exit, End::Exit);
        s.velocity = (0..13).map(|k| (k as f64 * 0.7).sin()).collect();
        let v: Vec<f64> = (0..12)
            .map(|k| 0.3 + 0.2 * (k as f64 * 1.3).cos())
            .collect();
        let j = s.jacobian(&v);
        let d = 1e-7;
        for c in 0..12 {
            let mut vp = v.clone();
            vp[c] += d;
            let mut vm = v.clone();
            vm[c] -= d;
            let (rp, rm) = (s.residual(&vp), s.residual(&vm));
            for r in 0..12 {
                let fd = (rp[r] - rm[r]) / (2.0 * d);
                assert!(
                    (fd - j[(r, c)]).abs() < 1e-5 * (1.0 + fd.abs()),
                    "({r},{c}) {fd} vs {}",
                    j[(r, c)]
                );
            }
        }
    }

    #[test]
    fn closed_form_profile() {
        // rhs = 2, τ = 1, wall at 0, exit at 1: v = ((p−1)/p)(1 − x^{p/(p−1)}).
        for p in [3.0, 4.0, 8.0] {
            let n = 128;
            let s = sys(n, p, 1e-3, 1.0, 2.0, 0.0, End::Wall, End::Exit);
            let (u, v) = oracle_solve(&s).unwrap();
            assert!(s.scaled_residual(&v) <= ORACLE_TOL);
            assert!(u.iter().all(|&x| x == 1.0));
            let err = (0..n)
                .map(|i| {
                    let x = (i as f64 + 0.5) / n as f64;
                    (v[i] - (p - 1.0) / p * (1.0 - x.powf(p / (p - 1.0)))).abs()
                })
                .fold(0.0, f64::max);
            assert!(err < 2.0 / n as f64, "p = {p}: {err}");
        }
    }

    #[test]
    fn evolution_conserves_mass_with_walls() {
        let s = sys(32, 4.0, 1e-3, 0.05, 0.0, 0.0, End::Wall, End::Wall);
        let u0: Vec<f64> = (0..32).map(|k| if k < 16 { 0.9 } else { 0.1 }).collect();
        let traj = oracle_evolve(&s, &u0, &vec![vec![0.0; 32]; 10]).unwrap();
        let m0 = traj.mass(0, s.h);
        for k in 0..traj.u.len() {
            assert!((traj.mass(k, s.h) - m0).abs() < 1e-12);
        }
    }
}

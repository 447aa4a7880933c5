//! Banded matrices, their LU factorization, and restarted GMRES.
//!
//! Operators on the grid couple a cell only to its 3×3 neighbourhood, so
//! with row-major cell numbering the matrices have bandwidth `nx + 1`.

use crate::grid::Grid2D;

/// Square matrix with `kl` sub- and `ku` super-diagonals, stored row-major
/// with room for the fill-in of partial pivoting.
#[derive(Debug, Clone)]
pub struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    w: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let w = 2 * kl + ku + 1;
        Self {
            n,
            kl,
            ku,
            w,
            data: vec![0.0; n * w],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    fn idx(&self, r: usize, c: usize) -> usize {
        debug_assert!(c + self.kl >= r && c <= r + self.kl + self.ku);
        r * self.w + (c + self.kl - r)
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        if c + self.kl < r || c > r + self.ku {
            0.0
        } else {
            self.data[self.idx(r, c)]
        }
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, x: f64) {
        let k = self.idx(r, c);
        self.data[k] = x;
    }

    #[inline]
    pub fn add(&mut self, r: usize, c: usize, x: f64) {
        let k = self.idx(r, c);
        self.data[k] += x;
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|r| self.get(r, r)).collect()
    }

    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        for r in 0..self.n {
            let lo = r.saturating_sub(self.kl);
            let hi = (r + self.ku).min(self.n - 1);
            let mut acc = 0.0;
            for c in lo..=hi {
                acc += self.data[self.idx(r, c)] * x[c];
            }
            y[r] = acc;
        }
    }

    /// LU with partial pivoting in place. Returns `None` on an exactly
    /// singular pivot.
    pub fn factor(mut self) -> Option<BandLu> {
        let n = self.n;
        let (kl, ku) = (self.kl, self.ku);
        let mut piv = vec![0usize; n];
        for k in 0..n {
            let last = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = self.data[self.idx(k, k)].abs();
            for r in k + 1..=last {
                let a = self.data[self.idx(r, k)].abs();
                if a > best {
                    best = a;
                    p = r;
                }
            }
            if best == 0.0 || !best.is_finite() {
                return None;
            }
            piv[k] = p;
            let cmax = (k + kl + ku).min(n - 1);
            if p != k {
                for c in k..=cmax {
                    let (a, b) = (self.idx(k, c), self.idx(p, c));
                    self.data.swap(a, b);
                }
            }
            let pivot = self.data[self.idx(k, k)];
            for r in k + 1..=last {
                let ir = self.idx(r, k);
                let l = self.data[ir] / pivot;
                self.data[ir] = l;
                if l == 0.0 {
                    continue;
                }
                // Rows k < r are disjoint slices of the storage.
                let len = cmax - k;
                let (head, tail) = self.data.split_at_mut(r * self.w);
                let src = &head[k * self.w + kl + 1..k * self.w + kl + 1 + len];
                let off = k + 1 + kl - r;
                let dst = &mut tail[off..off + len];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d -= l * s;
                }
            }
        }
        Some(BandLu { m: self, piv })
    }
}

#[derive(Debug, Clone)]
pub struct BandLu {
    m: BandMatrix,
    piv: Vec<usize>,
}

impl BandLu {
    pub fn solve(&self, b: &mut [f64]) {
        let m = &self.m;
        let n = m.n;
        for k in 0..n {
            let p = self.piv[k];
            if p != k {
                b.swap(k, p);
            }
            let last = (k + m.kl).min(n - 1);
            let bk = b[k];
            if bk != 0.0 {
                for r in k + 1..=last {
                    b[r] -= m.data[m.idx(r, k)] * bk;
                }
            }
        }
        for k in (0..n).rev() {
            let cmax = (k + m.kl + m.ku).min(n - 1);
            let mut acc = b[k];
            for c in k + 1..=cmax {
                acc -= m.data[m.idx(k, c)] * b[c];
            }
            b[k] = acc / m.data[m.idx(k, k)];
        }
    }
}

/// Recovers the matrix of a linear cell operator with a 3×3 stencil from
/// nine applications to colour-class indicator vectors.
pub fn probe_stencil_matrix(
    grid: &Grid2D,
    mut apply: impl FnMut(&[f64], &mut [f64]),
) -> BandMatrix {
    let (nx, ny) = (grid.nx(), grid.ny());
    let n = grid.num_cells();
    let band = nx + 1;
    let mut m = BandMatrix::zeros(n, band, band);
    let mut w = vec![0.0; n];
    let mut out = vec![0.0; n];
    for ci in 0..3 {
        for cj in 0..3 {
            for j in 0..ny {
                for i in 0..nx {
                    w[grid.cell(i, j)] = if i % 3 == ci && j % 3 == cj { 1.0 } else { 0.0 };
                }
            }
            apply(&w, &mut out);
            for j in 0..ny {
                for i in 0..nx {
                    let r = grid.cell(i, j);
                    // The only column of this colour touching row (i, j).
                    let c_i = nearest_with_residue(i, ci, nx);
                    let c_j = nearest_with_residue(j, cj, ny);
                    if let (Some(a), Some(b)) = (c_i, c_j) {
                        m.set(r, grid.cell(a, b), out[r]);
                    }
                }
            }
        }
    }
    m
}

fn nearest_with_residue(i: usize, r: usize, n: usize) -> Option<usize> {
    let lo = i.saturating_sub(1);
    (lo..=(i + 1).min(n - 1)).find(|k| k % 3 == r)
}

/// Outcome of a GMRES run.
#[derive(Debug, Clone, Copy)]
pub struct KrylovInfo {
    pub iterations: usize,
    pub relative_residual: f64,
    pub converged: bool,
}

/// Right-preconditioned restarted GMRES for `A x = b`, starting from `x`.
pub fn gmres(
    apply: impl Fn(&[f64], &mut [f64]),
    precond: impl Fn(&[f64], &mut [f64]),
    b: &[f64],
    x: &mut [f64],
    rtol: f64,
    restart: usize,
    max_iter: usize,
) -> KrylovInfo {
    let n = b.len();
    let bnorm = norm2(b);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return KrylovInfo {
            iterations: 0,
            relative_residual: 0.0,
            converged: true,
        };
    }
    let mut r = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut total = 0;
    let mut rel = f64::INFINITY;
    while total < max_iter {
        apply(x, &mut tmp);
        for k in 0..n {
            r[k] = b[k] - tmp[k];
        }
        let beta = norm2(&r);
        rel = beta / bnorm;
        if rel <= rtol {
            return KrylovInfo {
                iterations: total,
                relative_residual: rel,
                converged: true,
            };
        }
        let m = restart.min(max_iter - total);
        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
        basis.push(r.iter().map(|v| v / beta).collect());
        let mut h = vec![vec![0.0; m]; m + 1];
        let (mut cs, mut sn) = (vec![0.0; m], vec![0.0; m]);
        let mut g = vec![0.0; m + 1];
        g[0] = beta;
        let mut used = 0;
        for k in 0..m {
            precond(&basis[k], &mut z);
            apply(&z, &mut tmp);
            let mut wv = tmp.clone();
            for (i, q) in basis.iter().enumerate() {
                let hik = dot(&wv, q);
                h[i][k] = hik;
                for t in 0..n {
                    wv[t] -= hik * q[t];
                }
            }
            let hn = norm2(&wv);
            h[k + 1][k] = hn;
            for i in 0..k {
                let t = cs[i] * h[i][k] + sn[i] * h[i + 1][k];
                h[i + 1][k] = -sn[i] * h[i][k] + cs[i] * h[i + 1][k];
                h[i][k] = t;
            }
            let d = h[k][k].hypot(h[k + 1][k]);
            if d == 0.0 {
                cs[k] = 1.0;
                sn[k] = 0.0;
            } else {
                cs[k] = h[k][k] / d;
                sn[k] = h[k + 1][k] / d;
            }
            h[k][k] = d;
            h[k + 1][k] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            used = k + 1;
            total += 1;
            rel = g[k + 1].abs() / bnorm;
            if rel <= rtol || hn == 0.0 {
                break;
            }
            basis.push(wv.iter().map(|v| v / hn).collect());
        }
        let mut y = vec![0.0; used];
        for i in (0..used).rev() {
            let mut acc = g[i];
            for j in i + 1..used {
                acc -= h[i][j] * y[j];
            }
            y[i] = if h[i][i] != 0.0 { acc / h[i][i] } else { 0.0 };
        }
        let mut upd = vec![0.0; n];
        for (j, yj) in y.iter().enumerate() {
            for t in 0..n {
                upd[t] += yj * basis[j][t];
            }
        }
        precond(&upd, &mut z);
        for t in 0..n {
            x[t] += z[t];
        }
        if rel <= rtol {
            apply(x, &mut tmp);
            let true_rel = b
                .iter()
                .zip(&tmp)
                .map(|(a, c)| (a - c) * (a - c))
                .sum::<f64>()
                .sqrt()
                / bnorm;
            return KrylovInfo {
                iterations: total,
                relative_residual: true_rel,
                converged: true_rel <= 10.0 * rtol,
            };
        }
    }
    KrylovInfo {
        iterations: total,
        relative_residual: rel,
        converged: false,
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

//! The maximal monotone graph `sign⁺`, its piecewise-linear regularization
//! `H_ε`, and related scalar utilities.

use crate::error::{CrowdError, Result};

/// Sharpness of the graph regularization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraphParams {
    eps: f64,
}

impl GraphParams {
    pub fn new(eps: f64) -> Result<Self> {
        check_eps(eps)?;
        Ok(Self { eps })
    }

    pub fn eps(self) -> f64 {
        self.eps
    }

    #[inline]
    pub fn h(self, r: f64) -> f64 {
        h_eps_unchecked(r, self.eps)
    }

    #[inline]
    pub fn dh(self, r: f64) -> f64 {
        h_eps_derivative_unchecked(r, self.eps)
    }
}

fn check_eps(eps: f64) -> Result<()> {
    if eps > 0.0 && eps.is_finite() {
        Ok(())
    } else {
        Err(CrowdError::Parameter(format!(
            "eps must be positive, got {eps}"
        )))
    }
}

/// `H_ε(r)`: 1 above `ε`, `r/ε` on `[-ε, ε]`, −1 below `−ε`.
pub fn h_eps(r: f64, eps: f64) -> Result<f64> {
    check_eps(eps)?;
    Ok(h_eps_unchecked(r, eps))
}

#[inline]
pub(crate) fn h_eps_unchecked(r: f64, eps: f64) -> f64 {
    if r > eps {
        1.0
    } else if r < -eps {
        -1.0
    } else {
        r / eps
    }
}

/// Derivative of `H_ε`; the kinks at `|r| = ε` take the ramp value `1/ε`.
pub fn h_eps_derivative(r: f64, eps: f64) -> Result<f64> {
    check_eps(eps)?;
    Ok(h_eps_derivative_unchecked(r, eps))
}

#[inline]
pub(crate) fn h_eps_derivative_unchecked(r: f64, eps: f64) -> f64 {
    if r.abs() <= eps {
        1.0 / eps
    } else {
        0.0
    }
}

/// Distance by which `(v, u)` misses the graph `u ∈ sign⁺(v)`, with slack `tol`.
///
/// Returns 0 when the pair is inside the tolerance band, otherwise the
/// distance of `u` from the admissible value set at `v`.
pub fn sign_plus_inclusion_residual(u: f64, v: f64, tol: f64) -> f64 {
    let tol = tol.max(0.0);
    let dist = if v > tol {
        (u - 1.0).abs()
    } else if v < -tol {
        u.abs()
    } else if u < 0.0 {
        -u
    } else if u > 1.0 {
        u - 1.0
    } else {
        0.0
    };
    if dist <= tol {
        0.0
    } else {
        dist
    }
}

pub fn sign_zero(r: f64) -> f64 {
    if r > 0.0 {
        1.0
    } else if r < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Closed-form resolvent `(I + sign⁺)⁻¹(r)`.
pub fn sign_plus_resolvent(r: f64) -> f64 {
    if r > 1.0 {
        r - 1.0
    } else if r >= 0.0 {
        0.0
    } else {
        r
    }
}

/// Resolvent `(I + H_ε)⁻¹(r)` by bisection on the strictly increasing map `s + H_ε(s)`.
pub fn h_eps_resolvent(r: f64, eps: f64) -> Result<f64> {
    check_eps(eps)?;
    // s + H(s) = r with |H| <= 1 brackets the root in [r - 1, r + 1].
    let (mut lo, mut hi) = (r - 1.0, r + 1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid + h_eps_unchecked(mid, eps) < r {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * (1.0 + r.abs()) {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn h_eps_branches() {
        let eps = 0.1;
        assert_eq!(h_eps(2.0 * eps, eps).unwrap(), 1.0);
        assert_eq!(h_eps(0.0, eps).unwrap(), 0.0);
        assert_eq!(h_eps(eps / 2.0, eps).unwrap(), 0.5);
        assert_eq!(h_eps(-3.0, eps).unwrap(), -1.0);
        assert!(h_eps(1.0, 0.0).is_err());
        assert!(h_eps(1.0, -1.0).is_err());
    }

    #[test]
    fn derivative_values_and_kink_convention() {
        assert_eq!(h_eps_derivative(0.0, 0.1).unwrap(), 10.0);
        assert_eq!(h_eps_derivative(1.0, 0.1).unwrap(), 0.0);
        assert_eq!(h_eps_derivative(0.1, 0.1).unwrap(), 10.0);
        assert_eq!(h_eps_derivative(-0.1, 0.1).unwrap(), 10.0);
        assert!(h_eps_derivative(0.0, 0.0).is_err());
    }

    #[test]
    fn inclusion_residual_examples() {
        assert_eq!(sign_plus_inclusion_residual(1.0, 0.5, 1e-6), 0.0);
        assert_eq!(sign_plus_inclusion_residual(0.3, 0.0, 1e-6), 0.0);
        let r = sign_plus_inclusion_residual(0.5, 0.5, 1e-6);
        assert_eq!(r, 0.5);
        assert!(sign_plus_inclusion_residual(1.5, 0.0, 1e-6) > 0.49);
        assert!(sign_plus_inclusion_residual(0.2, -1.0, 1e-6) > 0.19);
    }

    #[test]
    fn sign_zero_values() {
        assert_eq!(sign_zero(3.2), 1.0);
        assert_eq!(sign_zero(0.0), 0.0);
        assert_eq!(sign_zero(-1e-300), -1.0);
    }

    #[test]
    fn derivative_integrates_back() {
        // Composite trapezoid with nodes on the kinks is exact for a piecewise-linear integrand.
        let eps = 0.05;
        let n = 4000;
        let (a, b) = (-2.0 * eps, 2.0 * eps);
        let dx = (b - a) / n as f64;
        let mut acc = 0.0;
        for k in 0..n {
            let x0 = a + k as f64 * dx;
            let x1 = x0 + dx;
            // Midpoint-side values avoid picking the kink convention at a shared node.
            let l = h_eps_derivative(x0 + 1e-3 * dx, eps).unwrap();
            let r = h_eps_derivative(x1 - 1e-3 * dx, eps).unwrap();
            acc += 0.5 * (l + r) * dx;
        }
        let expect = h_eps(b, eps).unwrap() - h_eps(a, eps).unwrap();
        assert!((acc - expect).abs() < 1e-10, "{acc} vs {expect}");
    }

    #[test]
    fn resolvent_converges_to_sign_plus_on_nonnegative_axis() {
        for &eps in &[1e-1, 1e-2, 1e-3] {
            for &r in &[0.0, 0.5, 1.0, 2.0] {
                let approx = h_eps_resolvent(r, eps).unwrap();
                let exact = sign_plus_resolvent(r);
                assert!(
                    (approx - exact).abs() <= eps,
                    "r={r} eps={eps}: {approx} vs {exact}"
                );
            }
        }
    }

    #[test]
    fn resolvent_on_negative_axis_tracks_the_odd_graph() {
        // H_ε saturates at −1 below −ε, so for r = −1 the regularized resolvent
        // approaches 0 (the full sign graph), not the sign⁺ value −1.
        for &eps in &[1e-1, 1e-2, 1e-3] {
            let approx = h_eps_resolvent(-1.0, eps).unwrap();
            assert!((approx - (-eps / (1.0 + eps))).abs() < 1e-12);
            assert!(approx.abs() <= eps);
            assert!((approx - sign_plus_resolvent(-1.0)).abs() > 0.5);
        }
    }

    proptest! {
        #[test]
        fn h_eps_is_monotone(a in -2.0f64..2.0, b in -2.0f64..2.0, eps in 1e-4f64..1.0) {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(h_eps(lo, eps).unwrap() <= h_eps(hi, eps).unwrap());
        }

        #[test]
        fn h_eps_is_lipschitz(a in -2.0f64..2.0, b in -2.0f64..2.0, eps in 1e-4f64..1.0) {
            let d = (h_eps(a, eps).unwrap() - h_eps(b, eps).unwrap()).abs();
            prop_assert!(d <= (a - b).abs() / eps * (1.0 + 1e-12) + 1e-15);
            prop_assert!(h_eps(a, eps).unwrap().abs() <= 1.0);
        }
    }
}

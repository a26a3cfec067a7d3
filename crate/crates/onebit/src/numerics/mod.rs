//! Scalar special functions and Gaussian-expectation quadrature.
//!
//! Everything analytic in the replica equations reduces to the upper
//! Gaussian tail `H(x) = P(Z > x)`, the one-sided parabola kernels
//! `u(x) = x^2 Theta(x)` and derivatives, the scalar prox value
//! `phi(h; Qhat)`, and expectations of smooth functions under N(0,1).

mod quad;

pub use quad::{
    expect_1d, expect_2d, expect_2d_with, GaussLegendre, NormalSegment, QuadratureRule,
};

use crate::error::{Error, Result};

/// 1/sqrt(2*pi).
pub const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Standard normal density.
#[inline]
pub fn normal_pdf(x: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Upper tail of the standard normal: `H(x) = \int_x^inf Dz`.
///
/// Computed as `erfc(x/sqrt(2))/2`, which keeps full relative precision
/// in the far tail (down to ~1e-300) instead of suffering the
/// cancellation of `1 - Phi(x)`.
pub fn gauss_tail(x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::Domain(format!("gauss_tail: non-finite input {x}")));
    }
    Ok(0.5 * libm::erfc(x * std::f64::consts::FRAC_1_SQRT_2))
}

/// Inverse of [`gauss_tail`]: returns `x` with `H(x) = p`.
///
/// Bracketing bisection refined by safeguarded Newton steps on
/// `gauss_tail` itself, so the round trip is consistent with whatever
/// accuracy `gauss_tail` provides.
pub fn gauss_tail_inv(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!(
            "gauss_tail_inv: p = {p} outside (0,1)"
        )));
    }
    let (mut lo, mut hi) = (-40.0_f64, 40.0_f64);
    // H is decreasing: H(lo) ~ 1 > p > H(hi) ~ 0.
    let mut x = 0.0_f64;
    for _ in 0..200 {
        let h = gauss_tail(x)?;
        if h > p {
            lo = x;
        } else {
            hi = x;
        }
        if hi - lo < 1e-15 * (1.0 + x.abs()) {
            break;
        }
        let d = normal_pdf(x);
        let newton = x + (h - p) / d;
        x = if d > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    Ok(x)
}

/// One-sided parabola `u(x) = x^2 Theta(x)`, with `Theta(0) = 0`.
#[inline]
pub fn u_fun(x: f64) -> f64 {
    if x > 0.0 {
        x * x
    } else {
        0.0
    }
}

/// `u'(x) = 2x Theta(x)`.
#[inline]
pub fn u_prime(x: f64) -> f64 {
    if x > 0.0 {
        2.0 * x
    } else {
        0.0
    }
}

/// `u''(x) = 2 Theta(x)`.
#[inline]
pub fn u_second(x: f64) -> f64 {
    if x > 0.0 {
        2.0
    } else {
        0.0
    }
}

/// Scalar prox value `phi(h; Qhat) = min_x { (Qhat/2) x^2 - h x + |x| }`.
///
/// Equals `-(|h|-1)^2 Theta(|h|-1) / (2 Qhat)`; nonpositive everywhere
/// and identically zero for `|h| <= 1`.
pub fn phi_fun(h: f64, q_hat: f64) -> Result<f64> {
    if !(q_hat > 0.0) {
        return Err(Error::Domain(format!("phi_fun: Qhat = {q_hat} must be > 0")));
    }
    if !h.is_finite() {
        return Err(Error::Domain(format!("phi_fun: non-finite h = {h}")));
    }
    let t = h.abs() - 1.0;
    if t > 0.0 {
        Ok(-t * t / (2.0 * q_hat))
    } else {
        Ok(0.0)
    }
}

/// Minimizer of `(Qhat/2) x^2 - h x + |x|` (the soft-threshold point
/// realizing [`phi_fun`]).
#[inline]
pub fn phi_argmin(h: f64, q_hat: f64) -> f64 {
    let t = h.abs() - 1.0;
    if t > 0.0 {
        t * h.signum() / q_hat
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tail_at_zero_is_half() {
        assert!((gauss_tail(0.0).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn tail_far_out_does_not_panic() {
        let v = gauss_tail(40.0).unwrap();
        assert!(v < 1e-300 && v >= 0.0);
        assert!(gauss_tail(8.0).unwrap() > 0.0);
    }

    #[test]
    fn tail_matches_erfc_reference_point() {
        // H(-0.8416) = 0.8000 to ~5e-4 (the 80% quantile of N(0,1))
        let v = gauss_tail(-0.8416).unwrap();
        assert!((v - 0.8000).abs() < 5e-4, "H(-0.8416) = {v}");
    }

    #[test]
    fn tail_symmetry_and_monotonicity() {
        let mut prev = f64::INFINITY;
        for i in 0..=2000 {
            let x = -10.0 + i as f64 * 0.01;
            let h = gauss_tail(x).unwrap();
            assert!((h + gauss_tail(-x).unwrap() - 1.0).abs() < 1e-14);
            assert!(h <= prev, "not decreasing at x = {x}");
            prev = h;
        }
    }

    #[test]
    fn tail_rejects_non_finite() {
        assert!(gauss_tail(f64::NAN).is_err());
        assert!(gauss_tail(f64::INFINITY).is_err());
    }

    #[test]
    fn inv_round_trip() {
        assert!(gauss_tail_inv(0.5).unwrap().abs() < 1e-12);
        for &p in &[0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1e-6, 1.0 - 1e-6] {
            let x = gauss_tail_inv(p).unwrap();
            assert!(
                (gauss_tail(x).unwrap() - p).abs() < 1e-10,
                "round trip failed at p = {p}"
            );
        }
        // H(x) = 0.8 at x ~ -0.8416
        assert!((gauss_tail_inv(0.8).unwrap() + 0.8416).abs() < 1e-3);
    }

    #[test]
    fn inv_rejects_out_of_range() {
        for p in [0.0, 1.0, -0.3, 1.7, f64::NAN] {
            assert!(gauss_tail_inv(p).is_err());
        }
    }

    #[test]
    fn u_family_values() {
        assert_eq!(u_fun(2.0), 4.0);
        assert_eq!(u_prime(2.0), 4.0);
        assert_eq!(u_second(2.0), 2.0);
        assert_eq!(u_fun(-3.0), 0.0);
        assert_eq!(u_prime(-3.0), 0.0);
        assert_eq!(u_second(-3.0), 0.0);
        // Theta(0) = 0 convention
        assert_eq!(u_fun(0.0), 0.0);
        assert_eq!(u_second(0.0), 0.0);
    }

    #[test]
    fn u_prime_matches_finite_difference() {
        let h = 1e-6;
        for &x in &[1.5, 0.4, -0.7, 2.3] {
            let fd = (u_fun(x + h) - u_fun(x - h)) / (2.0 * h);
            assert!((fd - u_prime(x)).abs() < 1e-6, "at x = {x}");
        }
    }

    #[test]
    fn u_second_matches_finite_difference_away_from_kink() {
        let h = 1e-4;
        for &x in &[0.1, 1.5, -0.1, -2.0, 3.0] {
            let fd = (u_fun(x + h) - 2.0 * u_fun(x) + u_fun(x - h)) / (h * h);
            assert!((fd - u_second(x)).abs() < 1e-6, "at x = {x}");
        }
    }

    #[test]
    fn phi_values_and_variational_form() {
        assert_eq!(phi_fun(0.5, 1.0).unwrap(), 0.0);
        assert!((phi_fun(2.0, 1.0).unwrap() + 0.5).abs() < 1e-15);
        assert!((phi_fun(-3.0, 2.0).unwrap() + 1.0).abs() < 1e-15);
        // grid minimization oracle for the variational definition
        for &(h, qh) in &[(-3.0, 2.0), (0.7, 1.3), (1.2, 0.5), (-0.9, 4.0)] {
            let mut best = f64::INFINITY;
            let mut x: f64 = -6.0;
            while x <= 6.0 {
                best = best.min(0.5 * qh * x * x - h * x + x.abs());
                x += 1e-4;
            }
            assert!(
                (best - phi_fun(h, qh).unwrap()).abs() < 1e-6,
                "variational mismatch at h={h}, Qhat={qh}"
            );
        }
    }

    #[test]
    fn phi_continuous_at_unit_field() {
        let qh = 1.7;
        let eps = 1e-8;
        let below = phi_fun(1.0 - eps, qh).unwrap();
        let above = phi_fun(1.0 + eps, qh).unwrap();
        assert!(below.abs() < 1e-15);
        assert!(above.abs() < 1e-15); // value and slope both vanish at |h| = 1
        assert!(phi_fun(1.0, qh).unwrap() == 0.0);
    }

    #[test]
    fn phi_rejects_bad_curvature() {
        assert!(phi_fun(1.0, 0.0).is_err());
        assert!(phi_fun(1.0, -2.0).is_err());
        assert!(phi_fun(1.0, f64::NAN).is_err());
    }

    #[test]
    fn phi_argmin_realizes_value() {
        for &(h, qh) in &[(2.0, 1.0), (-3.0, 2.0), (0.3, 1.0)] {
            let x = phi_argmin(h, qh);
            let v = 0.5 * qh * x * x - h * x + x.abs();
            assert!((v - phi_fun(h, qh).unwrap()).abs() < 1e-14);
        }
    }
}

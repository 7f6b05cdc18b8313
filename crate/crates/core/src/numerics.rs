//! Adaptive Simpson quadrature, bracketing root search and golden-section
//! maximization.

use crate::error::{Error, Result};

const MAX_DEPTH: u32 = 48;

#[inline]
fn simpson(fa: f64, fm: f64, fb: f64, width: f64) -> f64 {
    width / 6.0 * (fa + 4.0 * fm + fb)
}

/// ∫ₐᵇ f with absolute tolerance `tol`, by adaptive Simpson with Richardson
/// correction.
///
/// Recursion stops when an interval can no longer be split in floating
/// point; the result is then accepted as is. Non-finite integrand values are
/// an error.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = simpson(fa, fm, fb, b - a);
    let value = refine(&f, a, b, fa, fm, fb, whole, tol.max(f64::MIN_POSITIVE), MAX_DEPTH);
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::Numerical(alloc::format!(
            "non-finite quadrature on [{a}, {b}]"
        )))
    }
}

#[allow(clippy::too_many_arguments)]
fn refine<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson(fa, flm, fm, m - a);
    let right = simpson(fm, frm, fb, b - m);
    let delta = left + right - whole;
    if !delta.is_finite() {
        return f64::NAN;
    }
    if depth == 0 || delta.abs() <= 15.0 * tol || lm <= a || rm >= b {
        return left + right + delta / 15.0;
    }
    refine(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + refine(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// Smallest `s` in `[lo, hi]` with `pred(s)` true, assuming `pred` is
/// monotone (false then true), `pred(hi)` true and `pred(lo)` false.
/// Bisection to absolute width `tol`; returns the upper bracket end.
pub fn bisect_threshold<P: Fn(f64) -> bool>(pred: P, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if pred(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Maximizer of a unimodal `f` on `[a, b]` by golden-section search.
pub fn golden_section_max<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let inv_phi = (crate::math::sqrt(5.0) - 1.0) / 2.0;
    let mut x1 = b - inv_phi * (b - a);
    let mut x2 = a + inv_phi * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while b - a > tol {
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = f(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = f(x1);
        }
    }
    let x = 0.5 * (a + b);
    (x, f(x))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simpson_is_exact_on_cubics() {
        let v = adaptive_simpson(|x| x * x * x - 2.0 * x + 1.0, 0.0, 2.0, 1e-14).unwrap();
        assert!((v - 2.0).abs() < 1e-14);
    }

    #[test]
    fn simpson_handles_smooth_integrands() {
        let v = adaptive_simpson(|x: f64| (-x * x).exp(), 0.0, 3.0, 1e-12).unwrap();
        // erf(3)·√π/2
        assert!((v - 0.886_207_348_259_521_4).abs() < 1e-11);
        let v = adaptive_simpson(|x: f64| x.sqrt(), 0.0, 1.0, 1e-10).unwrap();
        assert!((v - 2.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn simpson_rejects_nan() {
        assert!(adaptive_simpson(|x: f64| (x - 1.0).ln(), 0.0, 2.0, 1e-8).is_err());
    }

    #[test]
    fn bisection_finds_threshold() {
        let r = bisect_threshold(|s| s * s >= 2.0, 0.0, 2.0, 1e-12);
        assert!((r - 2f64.sqrt()).abs() < 1e-11);
    }

    #[test]
    fn golden_section_finds_peak() {
        let (x, fx) = golden_section_max(|s| s * (2.0 - s * s), 0.0, 1.2, 1e-12);
        assert!((x - (2.0f64 / 3.0).sqrt()).abs() < 1e-6);
        assert!((fx - 4.0 / 3.0 * (2.0f64 / 3.0).sqrt()).abs() < 1e-12);
    }
}

//! Bracketed scalar root finding.

use crate::{Error, Result};

/// Absolute tolerance used by every root finder in the crate.
pub const ROOT_TOL: f64 = 1e-12;

/// Finds a root of `f` on `[lo, hi]` by bisection down to `tol`, then
/// polishes with secant steps that are only accepted while they stay inside
/// the final bracket.
///
/// Fails with [`Error::NoSignChange`] when `f(lo)` and `f(hi)` have the same
/// strict sign.
pub fn bisect<F>(f: F, lo: f64, hi: f64, tol: f64) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    let (mut a, mut b) = (lo.min(hi), lo.max(hi));
    let (mut fa, fb) = (f(a), f(b));
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() || !fa.is_finite() || !fb.is_finite() {
        return Err(Error::NoSignChange { lo: a, hi: b, f_lo: fa, f_hi: fb });
    }

    while b - a > tol {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        let fm = f(m);
        if fm == 0.0 {
            return Ok(m);
        }
        if fm.signum() == fa.signum() {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }

    // one round of secant refinement inside [a, b]
    let fb = f(b);
    let mut x0 = a;
    let mut f0 = fa;
    let mut x1 = b;
    let mut f1 = fb;
    for _ in 0..3 {
        if f1 == f0 {
            break;
        }
        let x2 = x1 - f1 * (x1 - x0) / (f1 - f0);
        if !(x2 >= a && x2 <= b) {
            break;
        }
        x0 = x1;
        f0 = f1;
        x1 = x2;
        f1 = f(x2);
        if f1 == 0.0 {
            break;
        }
    }
    if f1.abs() <= fa.abs().min(fb.abs()) && x1 >= a && x1 <= b {
        Ok(x1)
    } else if fa.abs() < fb.abs() {
        Ok(a)
    } else {
        Ok(b)
    }
}

/// Scans `[lo, hi]` on a uniform grid of `cells` intervals and returns every
/// root found by bisecting the intervals that show a sign change, in
/// increasing order.
pub fn scan_roots<F>(f: F, lo: f64, hi: f64, cells: usize, tol: f64) -> Vec<f64>
where
    F: Fn(f64) -> f64,
{
    let h = (hi - lo) / cells as f64;
    let mut roots = Vec::new();
    let mut x_prev = lo;
    let mut f_prev = f(lo);
    for i in 1..=cells {
        let x = if i == cells { hi } else { lo + h * i as f64 };
        let fx = f(x);
        if f_prev == 0.0 {
            roots.push(x_prev);
        } else if fx != 0.0 && f_prev.signum() != fx.signum() {
            if let Ok(r) = bisect(&f, x_prev, x, tol) {
                roots.push(r);
            }
        }
        x_prev = x;
        f_prev = fx;
    }
    if f_prev == 0.0 {
        roots.push(x_prev);
    }
    roots
}

//! Brent's bracketed root finder.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct BrentTol {
    pub xtol: f64,
    pub ftol: f64,
    pub max_iter: usize,
}

impl Default for BrentTol {
    fn default() -> Self {
        BrentTol { xtol: 1e-13, ftol: 1e-12, max_iter: 200 }
    }
}

/// Find a root of `f` in `[x1, x2]`; `f(x1)` and `f(x2)` must differ in sign.
pub fn brent<F: Fn(f64) -> f64>(f: F, x1: f64, x2: f64, tol: BrentTol) -> Result<f64> {
    let (mut a, mut b) = (x1, x2);
    let (mut fa, mut fb) = (f(a), f(b));
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(Error::internal(format!("root not bracketed in [{x1}, {x2}]")));
    }
    let mut c = b;
    let mut fc = fb;
    let mut d = b - a;
    let mut e = d;
    for _ in 0..tol.max_iter {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol1 = 2.0 * f64::EPSILON * b.abs() + 0.5 * tol.xtol;
        let xm = 0.5 * (c - b);
        if (xm.abs() <= tol1 && fb.abs() <= tol.ftol) || fb == 0.0 {
            return Ok(b);
        }
        if xm.abs() <= 0.5 * f64::EPSILON * b.abs() {
            // bracket collapsed to one ulp; nothing finer is representable
            return Ok(b);
        }
        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * xm * s;
                q = 1.0 - s;
            } else {
                let qq = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * xm * qq * (qq - r) - (b - a) * (r - 1.0));
                q = (qq - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            }
            p = p.abs();
            let min1 = 3.0 * xm * q - (tol1 * q).abs();
            let min2 = (e * q).abs();
            if 2.0 * p < min1.min(min2) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol1 { d } else { tol1.copysign(xm) };
        fb = f(b);
    }
    Err(Error::internal("brent: iteration limit reached"))
}

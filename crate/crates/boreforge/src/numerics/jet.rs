//! Truncated Taylor series arithmetic.
//!
//! A `Jet<N>` stores normalized coefficients `c[k] = f^(k)(t0) / k!`.

use std::ops::{Add, Div, Mul, Neg, Sub};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet<const N: usize> {
    pub c: [f64; N],
}

impl<const N: usize> Jet<N> {
    pub fn constant(v: f64) -> Self {
        let mut c = [0.0; N];
        c[0] = v;
        Jet { c }
    }

    pub fn value(&self) -> f64 {
        self.c[0]
    }

    /// k-th derivative at the expansion point.
    pub fn d(&self, k: usize) -> f64 {
        let mut f = 1.0;
        for i in 2..=k {
            f *= i as f64;
        }
        self.c[k] * f
    }

    /// Series of the derivative; the top coefficient becomes zero (one order is lost).
    pub fn deriv(&self) -> Self {
        let mut c = [0.0; N];
        for k in 0..N - 1 {
            c[k] = (k + 1) as f64 * self.c[k + 1];
        }
        Jet { c }
    }

    pub fn exp(&self) -> Self {
        let mut y = [0.0; N];
        y[0] = self.c[0].exp();
        for k in 1..N {
            let mut acc = 0.0;
            for j in 1..=k {
                acc += j as f64 * self.c[j] * y[k - j];
            }
            y[k] = acc / k as f64;
        }
        Jet { c: y }
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut c = self.c;
        c.iter_mut().for_each(|v| *v *= s);
        Jet { c }
    }

    pub fn powi(&self, n: u32) -> Self {
        let mut r = Jet::constant(1.0);
        for _ in 0..n {
            r = r * *self;
        }
        r
    }
}

impl<const N: usize> Add for Jet<N> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        let mut c = self.c;
        for k in 0..N {
            c[k] += o.c[k];
        }
        Jet { c }
    }
}

impl<const N: usize> Sub for Jet<N> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        let mut c = self.c;
        for k in 0..N {
            c[k] -= o.c[k];
        }
        Jet { c }
    }
}

impl<const N: usize> Neg for Jet<N> {
    type Output = Self;
    fn neg(self) -> Self {
        self.scale(-1.0)
    }
}

impl<const N: usize> Mul for Jet<N> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        let mut c = [0.0; N];
        for k in 0..N {
            let mut acc = 0.0;
            for j in 0..=k {
                acc += self.c[j] * o.c[k - j];
            }
            c[k] = acc;
        }
        Jet { c }
    }
}

impl<const N: usize> Div for Jet<N> {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        let mut q = [0.0; N];
        for k in 0..N {
            let mut acc = self.c[k];
            for j in 1..=k {
                acc -= o.c[j] * q[k - j];
            }
            q[k] = acc / o.c[0];
        }
        Jet { c: q }
    }
}

impl<const N: usize> Add<f64> for Jet<N> {
    type Output = Self;
    fn add(self, v: f64) -> Self {
        let mut c = self.c;
        c[0] += v;
        Jet { c }
    }
}

impl<const N: usize> Sub<f64> for Jet<N> {
    type Output = Self;
    fn sub(self, v: f64) -> Self {
        self + (-v)
    }
}

impl<const N: usize> Mul<f64> for Jet<N> {
    type Output = Self;
    fn mul(self, v: f64) -> Self {
        self.scale(v)
    }
}

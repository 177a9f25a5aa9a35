//! Finite differences.
//!
//! On uniform grids interior nodes use centered five-point stencils and the
//! two nodes nearest each end use one-sided stencils of the same order.

pub fn d1(f: &[f64], h: f64) -> Vec<f64> {
    let n = f.len();
    assert!(n >= 5, "fourth-order stencils need at least 5 nodes");
    let mut out = vec![0.0; n];
    let s = 1.0 / (12.0 * h);
    out[0] = (-25.0 * f[0] + 48.0 * f[1] - 36.0 * f[2] + 16.0 * f[3] - 3.0 * f[4]) * s;
    out[1] = (-3.0 * f[0] - 10.0 * f[1] + 18.0 * f[2] - 6.0 * f[3] + f[4]) * s;
    for i in 2..n - 2 {
        out[i] = (f[i - 2] - 8.0 * f[i - 1] + 8.0 * f[i + 1] - f[i + 2]) * s;
    }
    let m = n - 1;
    out[m] = (25.0 * f[m] - 48.0 * f[m - 1] + 36.0 * f[m - 2] - 16.0 * f[m - 3] + 3.0 * f[m - 4]) * s;
    out[m - 1] = (3.0 * f[m] + 10.0 * f[m - 1] - 18.0 * f[m - 2] + 6.0 * f[m - 3] - f[m - 4]) * s;
    out
}

pub fn d2(f: &[f64], h: f64) -> Vec<f64> {
    let n = f.len();
    assert!(n >= 6, "fourth-order second-derivative stencils need at least 6 nodes");
    let mut out = vec![0.0; n];
    let s = 1.0 / (12.0 * h * h);
    out[0] = (45.0 * f[0] - 154.0 * f[1] + 214.0 * f[2] - 156.0 * f[3] + 61.0 * f[4] - 10.0 * f[5]) * s;
    out[1] = (10.0 * f[0] - 15.0 * f[1] - 4.0 * f[2] + 14.0 * f[3] - 6.0 * f[4] + f[5]) * s;
    for i in 2..n - 2 {
        out[i] = (-f[i - 2] + 16.0 * f[i - 1] - 30.0 * f[i] + 16.0 * f[i + 1] - f[i + 2]) * s;
    }
    let m = n - 1;
    out[m] = (45.0 * f[m] - 154.0 * f[m - 1] + 214.0 * f[m - 2] - 156.0 * f[m - 3] + 61.0 * f[m - 4]
        - 10.0 * f[m - 5])
        * s;
    out[m - 1] =
        (10.0 * f[m] - 15.0 * f[m - 1] - 4.0 * f[m - 2] + 14.0 * f[m - 3] - 6.0 * f[m - 4] + f[m - 5]) * s;
    out
}

/// First derivative at each node of arbitrary increasing `x`, from the
/// Lagrange interpolant through seven neighbouring nodes (shifted inwards at
/// the ends).
pub fn d1_nonuniform(x: &[f64], y: &[f64]) -> Vec<f64> {
    const W: usize = 7;
    let n = x.len();
    assert!(n >= W && y.len() == n, "need at least {W} matching nodes");
    (0..n)
        .map(|i| {
            let s = i.saturating_sub(W / 2).min(n - W);
            let nodes = s..s + W;
            let mut acc = 0.0;
            for j in nodes.clone() {
                let w = if j == i {
                    nodes.clone().filter(|&m| m != i).map(|m| 1.0 / (x[i] - x[m])).sum()
                } else {
                    let mut num = 1.0;
                    let mut den = 1.0;
                    for m in nodes.clone() {
                        if m != j {
                            den *= x[j] - x[m];
                            if m != i {
                                num *= x[i] - x[m];
                            }
                        }
                    }
                    num / den
                };
                acc += w * y[j];
            }
            acc
        })
        .collect()
}

/// Composite Simpson rule on uniform nodes, with a 3/8 panel when the
/// interval count is odd. Exact for cubics.
pub fn simpson(f: &[f64], h: f64) -> f64 {
    let n = f.len();
    assert!(n >= 4);
    let intervals = n - 1;
    let (simpson_end, tail) = if intervals % 2 == 0 { (n - 1, false) } else { (n - 4, true) };
    let mut acc = 0.0;
    let mut i = 0;
    while i + 2 <= simpson_end {
        acc += h / 3.0 * (f[i] + 4.0 * f[i + 1] + f[i + 2]);
        i += 2;
    }
    if tail {
        let k = n - 4;
        acc += 3.0 * h / 8.0 * (f[k] + 3.0 * f[k + 1] + 3.0 * f[k + 2] + f[k + 3]);
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quartic_exact() {
        let h = 0.1;
        let x: Vec<f64> = (0..11).map(|i| i as f64 * h).collect();
        let f: Vec<f64> = x.iter().map(|v| v.powi(4) - 2.0 * v * v + v).collect();
        let df = d1(&f, h);
        let ddf = d2(&f, h);
        for (i, v) in x.iter().enumerate() {
            assert!((df[i] - (4.0 * v.powi(3) - 4.0 * v + 1.0)).abs() < 1e-10, "d1 at {i}");
        }
        // second-derivative stencils are exact through degree 5
        for (i, v) in x.iter().enumerate() {
            assert!((ddf[i] - (12.0 * v * v - 4.0)).abs() < 1e-8, "d2 at {i}");
        }
    }

    #[test]
    fn fourth_order_convergence() {
        let err = |n: usize| {
            let h = 1.0 / (n - 1) as f64;
            let f: Vec<f64> = (0..n).map(|i| (3.0 * i as f64 * h).sin()).collect();
            d1(&f, h)
                .iter()
                .enumerate()
                .map(|(i, v)| (v - 3.0 * (3.0 * i as f64 * h).cos()).abs())
                .fold(0.0, f64::max)
        };
        let ratio = err(41) / err(81);
        assert!(ratio > 12.0, "ratio {ratio}");
    }

    #[test]
    fn nonuniform_exact_for_sextics() {
        let x: Vec<f64> = (0..12).map(|i| (i as f64 * 0.3).powf(1.3)).collect();
        let y: Vec<f64> = x.iter().map(|v| v.powi(6) - 3.0 * v.powi(2)).collect();
        for (i, v) in d1_nonuniform(&x, &y).iter().enumerate() {
            let want = 6.0 * x[i].powi(5) - 6.0 * x[i];
            assert!((v - want).abs() < 1e-9 * want.abs().max(1.0), "node {i}: {v} vs {want}");
        }
    }

    #[test]
    fn simpson_exact_for_cubics_both_parities() {
        for n in [5usize, 6, 9, 10] {
            let h = 1.0 / (n - 1) as f64;
            let f: Vec<f64> = (0..n).map(|i| (i as f64 * h).powi(3)).collect();
            assert!((simpson(&f, h) - 0.25).abs() < 1e-14, "n = {n}");
        }
    }
}

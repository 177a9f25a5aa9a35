//! Minimal SVG picture of a reconstructed bore: vorticity shading under the
//! free surface, with streamlines on top.

use std::fmt::Write;

use boreforge::field_reconstruct::{FieldGrid, StreamlineSet};

const W: f64 = 960.0;
const H: f64 = 360.0;
const M: f64 = 40.0;

/// Violet at the low end, red at the high end.
fn colour(s: f64) -> String {
    let s = if s.is_finite() { s.clamp(0.0, 1.0) } else { 0.5 };
    let r = 127.0 + 128.0 * s;
    let b = 255.0 * (1.0 - s);
    format!("rgb({},0,{})", r.round() as u8, b.round() as u8)
}

pub fn fields_svg(grid: &FieldGrid, omega: &[f64], lines: &StreamlineSet) -> String {
    let (nx, ny) = (grid.nx(), grid.ny());
    let (x0, x1) = (grid.x_nodes[0], grid.x_nodes[nx - 1]);
    let zmax = grid.zeta.iter().cloned().fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let px = |x: f64| M + (x - x0) / (x1 - x0) * W;
    let py = |h: f64| M + H - h / zmax * H;

    let (lo, hi) = omega
        .iter()
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let span = if hi > lo { hi - lo } else { 1.0 };

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" viewBox="0 0 {} {}">"#,
        W + 2.0 * M,
        H + 2.0 * M,
        W + 2.0 * M,
        H + 2.0 * M
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);

    let stride = nx.div_ceil(240).max(1);
    let mut ix = 0;
    while ix + 1 < nx {
        let jx = (ix + stride).min(nx - 1);
        for iy in 0..ny.saturating_sub(1) {
            let (ya, yb) = (grid.yhat_nodes[iy], grid.yhat_nodes[iy + 1]);
            let w = 0.5 * (omega[grid.idx(ix, iy)] + omega[grid.idx(ix, iy + 1)]);
            let _ = writeln!(
                s,
                r#"<polygon points="{:.2},{:.2} {:.2},{:.2} {:.2},{:.2} {:.2},{:.2}" fill="{}" stroke="none"/>"#,
                px(grid.x_nodes[ix]),
                py(ya * grid.zeta[ix]),
                px(grid.x_nodes[jx]),
                py(ya * grid.zeta[jx]),
                px(grid.x_nodes[jx]),
                py(yb * grid.zeta[jx]),
                px(grid.x_nodes[ix]),
                py(yb * grid.zeta[ix]),
                colour((w - lo) / span)
            );
        }
        ix = jx;
    }

    let eps = grid.eps;
    for line in &lines.lines {
        let pts: Vec<String> = line
            .points
            .iter()
            .filter(|p| p[0] >= x0 && p[0] <= x1)
            .map(|p| format!("{:.2},{:.2}", px(p[0]), py(p[2] / eps)))
            .collect();
        if pts.len() > 1 {
            let _ = writeln!(
                s,
                r#"<polyline points="{}" fill="none" stroke="white" stroke-width="1"/>"#,
                pts.join(" ")
            );
        }
    }

    let surface: Vec<String> =
        (0..nx).map(|i| format!("{:.2},{:.2}", px(grid.x_nodes[i]), py(grid.zeta[i]))).collect();
    let _ = writeln!(
        s,
        r#"<polyline points="{}" fill="none" stroke="black" stroke-width="2"/>"#,
        surface.join(" ")
    );
    let _ = writeln!(
        s,
        r#"<text x="{M}" y="{:.0}" font-size="12" font-family="sans-serif">x from {x0:.3} to {x1:.3}; vorticity {lo:.3e} (violet) to {hi:.3e} (red)</text>"#,
        H + 1.75 * M
    );
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::colour;

    #[test]
    fn colour_ends() {
        assert_eq!(colour(0.0), "rgb(127,0,255)");
        assert_eq!(colour(1.0), "rgb(255,0,0)");
    }
}

//! Dormand-Prince 5(4) integrator with adaptive step control.

use nalgebra::SVector;

use crate::error::{Error, Result};

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

// difference between the 5th and embedded 4th order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

#[derive(Debug, Clone, Copy)]
pub struct StepControl {
    pub rtol: f64,
    pub atol: f64,
    pub h_max: f64,
    pub max_steps: usize,
}

impl Default for StepControl {
    fn default() -> Self {
        StepControl { rtol: 1e-10, atol: 1e-12, h_max: f64::INFINITY, max_steps: 20_000_000 }
    }
}

impl StepControl {
    pub fn tight() -> Self {
        StepControl { rtol: 1e-13, atol: 1e-15, ..Default::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flow {
    Continue,
    Stop,
}

#[derive(Debug, Clone, Copy)]
pub struct Outcome<const D: usize> {
    pub t: f64,
    pub y: SVector<f64, D>,
    pub steps: usize,
    pub stopped: bool,
}

fn err_norm<const D: usize>(
    err: &SVector<f64, D>,
    y0: &SVector<f64, D>,
    y1: &SVector<f64, D>,
    ctl: &StepControl,
) -> f64 {
    let mut acc = 0.0;
    for i in 0..D {
        let sc = ctl.atol + ctl.rtol * y0[i].abs().max(y1[i].abs());
        let r = err[i] / sc;
        acc += r * r;
    }
    (acc / D as f64).sqrt()
}

/// Integrate `y' = f(t, y)` from `t0` to `t_end` (either direction).
///
/// `observe` is called after every accepted step and may stop the run early.
pub fn integrate<const D: usize, F, O>(
    f: F,
    t0: f64,
    y0: SVector<f64, D>,
    t_end: f64,
    ctl: &StepControl,
    mut observe: O,
) -> Result<Outcome<D>>
where
    F: Fn(f64, &SVector<f64, D>) -> SVector<f64, D>,
    O: FnMut(f64, &SVector<f64, D>) -> Flow,
{
    let span = t_end - t0;
    if span == 0.0 {
        return Ok(Outcome { t: t0, y: y0, steps: 0, stopped: false });
    }
    let dir = span.signum();
    let mut t = t0;
    let mut y = y0;
    let mut k1 = f(t, &y);

    // Hairer's starting step heuristic
    let mut h = {
        let d0 = err_norm(&y, &y, &y, ctl);
        let d1 = err_norm(&k1, &y, &y, ctl);
        let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        let y1 = y + k1 * (dir * h0);
        let k2 = f(t + dir * h0, &y1);
        let d2 = err_norm(&(k2 - k1), &y, &y, ctl) / h0;
        let h1 = if d1.max(d2) <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / d1.max(d2)).powf(0.2)
        };
        (100.0 * h0).min(h1).min(span.abs()).min(ctl.h_max)
    };

    let mut steps = 0usize;
    let mut last_rejected = false;
    loop {
        if steps >= ctl.max_steps {
            return Err(Error::Integrator(format!("step budget exhausted at t = {t}")));
        }
        let remaining = (t_end - t) * dir;
        let last = h >= remaining;
        if last {
            h = remaining;
        }
        let hs = dir * h;
        let k2 = f(t + C2 * hs, &(y + k1 * (A21 * hs)));
        let k3 = f(t + C3 * hs, &(y + (k1 * A31 + k2 * A32) * hs));
        let k4 = f(t + C4 * hs, &(y + (k1 * A41 + k2 * A42 + k3 * A43) * hs));
        let k5 = f(t + C5 * hs, &(y + (k1 * A51 + k2 * A52 + k3 * A53 + k4 * A54) * hs));
        let k6 = f(t + hs, &(y + (k1 * A61 + k2 * A62 + k3 * A63 + k4 * A64 + k5 * A65) * hs));
        let y_new = y + (k1 * A71 + k3 * A73 + k4 * A74 + k5 * A75 + k6 * A76) * hs;
        let k7 = f(t + hs, &y_new);
        let err = (k1 * E1 + k3 * E3 + k4 * E4 + k5 * E5 + k6 * E6 + k7 * E7) * hs;
        let en = err_norm(&err, &y, &y_new, ctl);
        if !en.is_finite() {
            h *= 0.1;
            last_rejected = true;
            if h < 1e-300 {
                return Err(Error::Integrator(format!("non-finite state near t = {t}")));
            }
            continue;
        }
        if en <= 1.0 {
            steps += 1;
            t = if last { t_end } else { t + hs };
            y = y_new;
            k1 = k7;
            if observe(t, &y) == Flow::Stop {
                return Ok(Outcome { t, y, steps, stopped: true });
            }
            if last {
                return Ok(Outcome { t, y, steps, stopped: false });
            }
            let mut fac = if en == 0.0 { 5.0 } else { 0.9 * en.powf(-0.2) };
            if last_rejected {
                fac = fac.min(1.0);
            }
            h = (h * fac.clamp(0.2, 5.0)).min(ctl.h_max);
            last_rejected = false;
        } else {
            h *= (0.9 * en.powf(-0.2)).max(0.1);
            last_rejected = true;
            if h < 1e-14 * t.abs().max(1.0) {
                return Err(Error::Integrator(format!("step size underflow at t = {t}")));
            }
        }
    }
}

/// Convenience wrapper: integrate to `t_end` and return the final state.
pub fn flow_to<const D: usize, F>(
    f: F,
    t0: f64,
    y0: SVector<f64, D>,
    t_end: f64,
    ctl: &StepControl,
) -> Result<SVector<f64, D>>
where
    F: Fn(f64, &SVector<f64, D>) -> SVector<f64, D>,
{
    integrate(f, t0, y0, t_end, ctl, |_, _| Flow::Continue).map(|o| o.y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector2;

    #[test]
    fn harmonic_oscillator_period() {
        let f = |_t: f64, y: &Vector2<f64>| Vector2::new(y[1], -y[0]);
        let y = flow_to(f, 0.0, Vector2::new(1.0, 0.0), 2.0 * std::f64::consts::PI, &StepControl::default())
            .unwrap();
        assert!((y[0] - 1.0).abs() < 1e-9);
        assert!(y[1].abs() < 1e-9);
    }

    #[test]
    fn backward_integration_inverts_forward() {
        let f = |t: f64, y: &Vector2<f64>| Vector2::new(y[1] * t.cos(), -y[0] + 0.1 * y[1]);
        let ctl = StepControl::tight();
        let y0 = Vector2::new(0.3, -0.7);
        let y1 = flow_to(f, 0.0, y0, 3.0, &ctl).unwrap();
        let back = flow_to(f, 3.0, y1, 0.0, &ctl).unwrap();
        assert!((back - y0).norm() < 1e-10);
    }

    #[test]
    fn exponential_decay_matches_closed_form() {
        let f = |_t: f64, y: &SVector<f64, 1>| -*y * 2.5;
        let y = flow_to(f, 0.0, SVector::<f64, 1>::new(1.0), 4.0, &StepControl::default()).unwrap();
        assert!((y[0] - (-10.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn observer_can_stop() {
        let f = |_t: f64, _y: &SVector<f64, 1>| SVector::<f64, 1>::new(1.0);
        let out = integrate(f, 0.0, SVector::<f64, 1>::zeros(), 100.0, &StepControl::default(), |_, y| {
            if y[0] > 1.0 { Flow::Stop } else { Flow::Continue }
        })
        .unwrap();
        assert!(out.stopped);
        assert!(out.t < 100.0);
    }
}

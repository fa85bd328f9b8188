//! Independent scalar oracles shared by the integration tests.

#![allow(dead_code)]

use tentlab::ensemble::{log_bump, log_ramp, TimeProfile};
use tentlab::grid::Grid;

/// Envelope of a profile on a grid: `(t_a, t_b, ramp)`, recomputed from the
/// profile definition rather than taken from the library.
pub fn envelope(grid: &Grid, profile: &TimeProfile) -> (f64, f64, bool) {
    let times = grid.times();
    let (lo, hi) = (times[0].ln(), times[times.len() - 1].ln());
    match *profile {
        TimeProfile::Bump { from, to } => (
            (lo + from * (hi - lo)).exp(),
            (lo + to * (hi - lo)).exp(),
            false,
        ),
        TimeProfile::Ramp => (times[1], 10.0 * times[0], true),
    }
}

pub fn profile_value(t: f64, (t_a, t_b, ramp): (f64, f64, bool)) -> f64 {
    if ramp {
        log_ramp(t, t_a, t_b)
    } else {
        log_bump(t, t_a, t_b)
    }
}

/// `int_0^t lambda e^{-(t - s) lambda} psi(s) ds` for the envelope `psi`,
/// by composite Simpson in `ln s` on 20000 panels over its transition
/// region plus the closed form on the plateau of a ramp.
pub fn volterra(lambda: f64, t: f64, env: (f64, f64, bool)) -> f64 {
    let (t_a, t_b, ramp) = env;
    let hi = t.min(t_b);
    let mut total = 0.0;
    if hi > t_a {
        let (a, b) = (t_a.ln(), hi.ln());
        let panels = 20_000;
        let h = (b - a) / panels as f64;
        let f = |x: f64| {
            let s = x.exp();
            lambda * (-(t - s) * lambda).exp() * profile_value(s, env) * s
        };
        let mut acc = f(a) + f(b);
        for j in 1..panels {
            acc += f(a + j as f64 * h) * if j % 2 == 1 { 4.0 } else { 2.0 };
        }
        total += acc * h / 3.0;
    }
    if ramp && t > t_b {
        total += 1.0 - (-(t - t_b) * lambda).exp();
    }
    total
}

/// Envelope and its Volterra image at every grid time, with the first two
/// slices zero as in generated fields.
pub fn mode_oracle(grid: &Grid, profile: &TimeProfile, lambda: f64) -> (Vec<f64>, Vec<f64>) {
    let env = envelope(grid, profile);
    let psi = grid
        .times()
        .iter()
        .enumerate()
        .map(|(i, &t)| if i < 2 { 0.0 } else { profile_value(t, env) })
        .collect();
    let u = grid
        .times()
        .iter()
        .map(|&t| volterra(lambda, t, env))
        .collect();
    (psi, u)
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

//! Test-field generators. Every field vanishes on the first two time slices.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, SpaceTimeField};
use crate::semigroup::Fourier;

/// Bump window as fractions of `[ln t_min, ln t_max]`.
pub const DEFAULT_BUMP: (f64, f64) = (0.1, 0.9);

/// `sin^4` bump in `ln t` on `[ln t_a, ln t_b]`; three continuous derivatives.
pub fn log_bump(t: f64, t_a: f64, t_b: f64) -> f64 {
    let (a, b) = (t_a.ln(), t_b.ln());
    let x = t.ln();
    if x <= a || x >= b {
        0.0
    } else {
        (PI * (x - a) / (b - a)).sin().powi(4)
    }
}

/// Smoothstep `35x^4 - 84x^5 + 70x^6 - 20x^7` in `ln t`: 0 below `t_a`,
/// 1 above `t_b`, three continuous derivatives.
pub fn log_ramp(t: f64, t_a: f64, t_b: f64) -> f64 {
    let x = ((t.ln() - t_a.ln()) / (t_b.ln() - t_a.ln())).clamp(0.0, 1.0);
    x.powi(4) * (35.0 - 84.0 * x + 70.0 * x * x - 20.0 * x.powi(3))
}

/// Time envelope of a generated field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TimeProfile {
    /// `sin^4` bump between the given fractions of the log time range.
    Bump { from: f64, to: f64 },
    /// Ramp from 0 at `t_1` to 1 at `10 t_min` (the first decade).
    Ramp,
}

impl Default for TimeProfile {
    fn default() -> Self {
        TimeProfile::Bump {
            from: DEFAULT_BUMP.0,
            to: DEFAULT_BUMP.1,
        }
    }
}

impl TimeProfile {
    /// The profile as a function of `t` on this grid.
    pub fn on(&self, grid: &Grid) -> Result<impl Fn(f64) -> f64> {
        let times = grid.times();
        let (lo, hi) = (times[0].ln(), times[times.len() - 1].ln());
        let (t_a, t_b, ramp) = match *self {
            TimeProfile::Bump { from, to } => {
                if !(0.0 <= from && from < to && to <= 1.0) {
                    return Err(Error::InvalidParams(format!(
                        "bump window [{from}, {to}] must lie in [0, 1]"
                    )));
                }
                let t_a = (lo + from * (hi - lo)).exp();
                if t_a < times[1] {
                    return Err(Error::InvalidParams(format!(
                        "bump starts at t = {t_a}, before the second time sample {}",
                        times[1]
                    )));
                }
                (t_a, (lo + to * (hi - lo)).exp(), false)
            }
            TimeProfile::Ramp => {
                let t_b = 10.0 * times[0];
                if !(t_b > times[1] && t_b <= times[times.len() - 1]) {
                    return Err(Error::InvalidParams(
                        "the grid must span more than one decade for a ramp".into(),
                    ));
                }
                (times[1], t_b, true)
            }
        };
        if t_b <= t_a {
            return Err(Error::InvalidParams("empty time profile".into()));
        }
        Ok(move |t: f64| {
            if ramp {
                log_ramp(t, t_a, t_b)
            } else {
                log_bump(t, t_a, t_b)
            }
        })
    }
}

fn separable(
    grid: Arc<Grid>,
    profile: &TimeProfile,
    space: &[Complex64],
) -> Result<SpaceTimeField> {
    let envelope = profile.on(&grid)?;
    let mut values = Vec::with_capacity(grid.nt() * grid.npts());
    for (i, &t) in grid.times().iter().enumerate() {
        let e = if i < 2 { 0.0 } else { envelope(t) };
        values.extend(space.iter().map(|v| v * e));
    }
    SpaceTimeField::from_values(grid, values)
}

/// Random band-limited field: i.i.d. standard complex Gaussian coefficients
/// on integer modes `|k| <= cutoff`, times a time profile.
///
/// Member `j` of seed `s` is drawn from stream `j` of a ChaCha8 generator
/// seeded with `s`. The same `(seed, member, cutoff)` on a refined grid
/// samples the same continuous field.
pub fn bandlimited_field(
    grid: Arc<Grid>,
    seed: u64,
    member: u64,
    cutoff: usize,
    profile: &TimeProfile,
) -> Result<SpaceTimeField> {
    let nx = grid.nx();
    if cutoff == 0 || 2 * cutoff >= nx {
        return Err(Error::InvalidParams(format!(
            "mode cutoff {cutoff} must be in [1, nx/2) with nx = {nx}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(member);
    let c = cutoff as isize;
    let modes: Vec<[isize; 2]> = match grid.n() {
        1 => (-c..=c).map(|k| [k, 0]).collect(),
        _ => (-c..=c)
            .flat_map(|a| (-c..=c).map(move |b| [a, b]))
            .filter(|[a, b]| a * a + b * b <= c * c)
            .collect(),
    };
    let norm = 1.0 / (modes.len() as f64).sqrt();
    let mut spectrum = vec![Complex64::new(0.0, 0.0); grid.npts()];
    for mode in &modes {
        let re: f64 = StandardNormal.sample(&mut rng);
        let im: f64 = StandardNormal.sample(&mut rng);
        let wrap = |k: isize| k.rem_euclid(nx as isize) as usize;
        let flat = grid.flat_index([wrap(mode[0]), wrap(mode[1])]);
        spectrum[flat] = Complex64::new(re, im) * norm;
    }
    let fourier = Fourier::new(grid.n(), nx);
    fourier.inverse(&mut spectrum);
    let scale = (grid.npts() as f64).sqrt();
    let space: Vec<Complex64> = spectrum.into_iter().map(|v| v * scale).collect();
    separable(grid, profile, &space)
}

/// `profile(t) e^{i xi . y}` with `xi = 2 pi k / extent`.
pub fn mode_field(grid: Arc<Grid>, k: [isize; 2], profile: &TimeProfile) -> Result<SpaceTimeField> {
    let extent = grid.extent();
    let space: Vec<Complex64> = (0..grid.npts())
        .map(|p| {
            let [x, y] = grid.point(p);
            let phase = 2.0 * PI * (k[0] as f64 * x + k[1] as f64 * y) / extent;
            Complex64::from_polar(1.0, phase)
        })
        .collect();
    separable(grid, profile, &space)
}

/// `profile(t) * 1_box(y)` with the box `[lo, hi)` per axis.
pub fn indicator_box_field(
    grid: Arc<Grid>,
    lo: [f64; 2],
    hi: [f64; 2],
    profile: &TimeProfile,
) -> Result<SpaceTimeField> {
    let n = grid.n();
    let space: Vec<Complex64> = (0..grid.npts())
        .map(|p| {
            let x = grid.point(p);
            let inside = (0..n).all(|k| x[k] >= lo[k] && x[k] < hi[k]);
            Complex64::new(if inside { 1.0 } else { 0.0 }, 0.0)
        })
        .collect();
    separable(grid, profile, &space)
}

/// `count` band-limited members `0..count` of one seed.
pub fn bandlimited_ensemble(
    grid: Arc<Grid>,
    seed: u64,
    count: usize,
    cutoff: usize,
    profile: &TimeProfile,
) -> Result<Vec<SpaceTimeField>> {
    (0..count as u64)
        .map(|j| bandlimited_field(grid.clone(), seed, j, cutoff, profile))
        .collect()
}

/// Rough real coefficients: i.i.d. uniform on `[lo, hi]`, one per cell of
/// an `nx^n` grid, from a ChaCha8 generator seeded with `seed`.
pub fn rough_coefficients(
    n: usize,
    nx: usize,
    seed: u64,
    (lo, hi): (f64, f64),
) -> Result<Vec<Complex64>> {
    if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
        return Err(Error::InvalidParams(format!(
            "coefficient range [{lo}, {hi}] must be positive and ordered"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..nx.pow(n as u32))
        .map(|_| Complex64::new(rng.random_range(lo..=hi), 0.0))
        .collect())
}

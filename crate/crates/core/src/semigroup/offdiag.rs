//! Off-diagonal decay `||1_E tL e^{-tL} 1_F|| <~ (1 + d^m / t)^{-M}` measured
//! by power iteration, and least-squares fits of the order `M`.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{SemigroupProvider, SeparatedSetPair};
use crate::error::{Error, Result};
use crate::grid::Grid;

/// Fitted orders are clamped to `[0, ORDER_CAP]`.
pub const ORDER_CAP: f64 = 10.0;
const POWER_TOL: f64 = 1e-6;

/// Range of `d^2 / t` for heat-type fits: one decade of `1 + d^2/t` whose
/// far end, near `e^{-32}`, is still above double-precision round-off.
pub const HEAT_FIT_RANGE: (f64, f64) = (10.0, 130.0);
const POWER_MAX_ITER: usize = 500;

fn fnv1a(bytes: impl IntoIterator<Item = u8>, mut hash: u64) -> u64 {
    for b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

fn call_seed(provider: &dyn SemigroupProvider, pair: &SeparatedSetPair, t: f64) -> u64 {
    let mut h = fnv1a(provider.name().bytes(), 0xcbf2_9ce4_8422_2325);
    h = fnv1a(t.to_bits().to_le_bytes(), h);
    h = fnv1a(pair.e.iter().map(|&b| b as u8), h);
    fnv1a(pair.f.iter().map(|&b| b as u8), h)
}

fn norm(v: &[Complex64]) -> f64 {
    v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

fn restrict(v: &mut [Complex64], mask: &[bool]) {
    for (x, &keep) in v.iter_mut().zip(mask) {
        if !keep {
            *x = Complex64::new(0.0, 0.0);
        }
    }
}

/// Operator norm of `v -> 1_E tL e^{-tL} (1_F v)` by power iteration on
/// `A^H A`, seeded from the call arguments. Zero when either set is empty.
pub fn offdiag_ratio(
    provider: &dyn SemigroupProvider,
    pair: &SeparatedSetPair,
    t: f64,
) -> Result<f64> {
    let npts = provider.grid_spec().npts();
    if pair.e.len() != npts || pair.f.len() != npts {
        return Err(Error::GridMismatch(format!(
            "set masks of length {} for a provider with {npts} points",
            pair.e.len()
        )));
    }
    if !(t.is_finite() && t > 0.0) {
        return Err(Error::InvalidParams(format!("t = {t} must be positive")));
    }
    if pair.is_empty() {
        return Ok(0.0);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(call_seed(provider, pair, t));
    let mut v: Vec<Complex64> = (0..npts)
        .map(|_| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
        .collect();
    restrict(&mut v, &pair.f);
    let nv = norm(&v);
    v.iter_mut().for_each(|x| *x /= nv);

    let mut previous = 0.0;
    let mut change = f64::INFINITY;
    for iteration in 1..=POWER_MAX_ITER {
        let mut w = provider.apply_tl_exp(t, &v);
        restrict(&mut w, &pair.e);
        let sigma = norm(&w);
        if sigma == 0.0 {
            return Ok(0.0);
        }
        change = (sigma - previous).abs() / sigma;
        if iteration > 1 && change <= POWER_TOL {
            return Ok(sigma);
        }
        previous = sigma;
        let mut u = provider.apply_tl_exp_adjoint(t, &w);
        restrict(&mut u, &pair.f);
        let nu = norm(&u);
        if nu == 0.0 {
            return Ok(sigma);
        }
        v = u.into_iter().map(|x| x / nu).collect();
    }
    Err(Error::NoConvergence {
        iterations: POWER_MAX_ITER,
        last_change: change,
        estimate: previous,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OffDiagSample {
    pub distance: f64,
    pub t: f64,
    pub ratio: f64,
}

/// Ratios at or below this level are indistinguishable from round-off in
/// `tL e^{-tL}` (whose norm is at most about `e^{-1}`).
pub const ROUNDOFF_FLOOR: f64 = 1e-13;

/// Measures every pair; a ratio whose power iteration stalls below
/// `ROUNDOFF_FLOOR` is recorded as zero.
pub fn measure_family(
    provider: &dyn SemigroupProvider,
    family: &[(SeparatedSetPair, f64)],
) -> Result<Vec<OffDiagSample>> {
    family
        .par_iter()
        .map(|(pair, t)| {
            let ratio = match offdiag_ratio(provider, pair, *t) {
                Err(Error::NoConvergence { estimate, .. }) if estimate <= ROUNDOFF_FLOOR => 0.0,
                other => other?,
            };
            Ok(OffDiagSample {
                distance: pair.distance,
                t: *t,
                ratio,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrderFit {
    /// Slope clamped to `[0, ORDER_CAP]`.
    pub order: f64,
    pub raw_slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual of the linear fit.
    pub residual: f64,
    pub capped: bool,
    /// Samples with a zero ratio, excluded from the fit.
    pub vanishing: usize,
}

/// Least-squares slope of `-ln ratio` against `ln(1 + d^m / t)`.
///
/// The abscissae `1 + d^m / t` must span at least a factor of ten.
pub fn fit_offdiag_order(m: u32, samples: &[OffDiagSample]) -> Result<OrderFit> {
    let usable: Vec<&OffDiagSample> = samples.iter().filter(|s| s.ratio > 0.0).collect();
    let vanishing = samples.len() - usable.len();
    if usable.len() < 2 {
        return Err(Error::DegenerateFamily(format!(
            "{} samples with a nonzero ratio",
            usable.len()
        )));
    }
    let xs: Vec<f64> = usable
        .iter()
        .map(|s| (s.distance.powi(m as i32) / s.t).ln_1p())
        .collect();
    let ys: Vec<f64> = usable.iter().map(|s| -s.ratio.ln()).collect();
    let (lo, hi) = xs
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| {
            (a.min(x), b.max(x))
        });
    if !(hi - lo >= 10f64.ln() * (1.0 - 1e-12)) {
        return Err(Error::DegenerateFamily(format!(
            "1 + d^m/t spans a factor {:.3}, need at least 10",
            (hi - lo).exp()
        )));
    }
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual = (xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum::<f64>()
        / k)
        .sqrt();
    Ok(OrderFit {
        order: slope.clamp(0.0, ORDER_CAP),
        raw_slope: slope,
        intercept,
        residual,
        capped: slope > ORDER_CAP,
        vanishing,
    })
}

pub fn offdiag_order_fit(
    provider: &dyn SemigroupProvider,
    family: &[(SeparatedSetPair, f64)],
) -> Result<OrderFit> {
    fit_offdiag_order(provider.homogeneity(), &measure_family(provider, family)?)
}

/// Pairs of balls of radius `radius` at fixed `t` whose separations `d`
/// sweep `d^m / t` geometrically over `u_range`.
///
/// `E` is centered at the origin and `F` along the last axis.
pub fn geometric_ball_family(
    grid: &Grid,
    m: u32,
    t: f64,
    u_range: (f64, f64),
    count: usize,
    radius: f64,
) -> Result<Vec<(SeparatedSetPair, f64)>> {
    if count < 2 || !(u_range.0 > 0.0 && u_range.1 > u_range.0) {
        return Err(Error::InvalidParams(format!(
            "family of {count} samples over {u_range:?}"
        )));
    }
    let h = grid.h();
    let reach = (radius / h).floor();
    let mut family: Vec<(SeparatedSetPair, f64)> = Vec::with_capacity(count);
    for k in 0..count {
        let u = u_range.0 * (u_range.1 / u_range.0).powf(k as f64 / (count - 1) as f64);
        let d = (u * t).powf(1.0 / m as f64);
        let offset = (d / h).round() + 2.0 * reach;
        let outer = (offset + reach) * h;
        if outer >= grid.extent() / 2.0 {
            return Err(Error::InvalidParams(format!(
                "separation {d} with ball radius {radius} does not fit on a torus of side {}",
                grid.extent()
            )));
        }
        let center_f = grid.flat_index([0, offset as usize]);
        let center_f = if grid.n() == 1 {
            offset as usize
        } else {
            center_f
        };
        let pair = SeparatedSetPair::balls(grid, (0, radius), (center_f, radius))?;
        if family
            .last()
            .is_some_and(|(p, _)| p.distance == pair.distance)
        {
            continue;
        }
        family.push((pair, t));
    }
    Ok(family)
}

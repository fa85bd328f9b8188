//! The maximal regularity operator `M_L f(t) = int_0^t L e^{-(t-s)L} f(s) ds`.
//!
//! Both schemes work on spectral coordinates of the provider and integrate
//! the semigroup kernel exactly against piecewise cubic interpolants of a
//! smooth integrand (exponential product integration):
//!
//! * singularity split:
//!   `M f(t) = (1 - e^{-(t-s_0)L}) f(t) + int (t-s) L e^{-(t-s)L} b(s) ds`
//!   with `b(s) = (f(s) - f(t)) / (t - s)`, `b(t) = -f'(t)`;
//! * integration by parts: `M f(t) = f(t) - int e^{-(t-s)L} f'(s) ds`.
//!
//! Fields vanish on `(0, s_1]`, so every integral starts at `s_0 = t_min`.
//! Time derivatives use five-point differences in `ln s` restricted to nodes
//! `s <= t`, which keeps both schemes causal.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{integrate_spacetime, Grid, GridSpec, SpaceTimeField};
use crate::semigroup::SemigroupProvider;

type C = Complex64;

const ZERO: C = C::new(0.0, 0.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MlScheme {
    SingularitySplit,
    IntegrationByParts,
}

impl MlScheme {
    pub fn name(&self) -> &'static str {
        match self {
            MlScheme::SingularitySplit => "singularity-split",
            MlScheme::IntegrationByParts => "integration-by-parts",
        }
    }
}

impl fmt::Display for MlScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MlScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "singularity-split" | "ss" => Ok(MlScheme::SingularitySplit),
            "integration-by-parts" | "ibp" => Ok(MlScheme::IntegrationByParts),
            other => Err(Error::InvalidParams(format!(
                "unknown scheme '{other}' (expected singularity-split or integration-by-parts)"
            ))),
        }
    }
}

/// `phi_0..phi_5` at `x`, where `phi_0 = e^x` and
/// `phi_k(x) = int_0^1 e^{(1-u)x} u^{k-1} / (k-1)! du`.
pub fn phi_functions(x: C) -> [C; 6] {
    let mut out = [ZERO; 6];
    if x.norm() < 1.5 {
        // phi_k(x) = sum_j x^j / (j + k)!
        for (k, o) in out.iter_mut().enumerate() {
            let mut term = C::new(1.0 / factorial(k), 0.0);
            let mut sum = term;
            for j in 1..30 {
                term = term * x / (j + k) as f64;
                sum += term;
            }
            *o = sum;
        }
    } else {
        out[0] = x.exp();
        for k in 0..5 {
            out[k + 1] = (out[k] - 1.0 / factorial(k)) / x;
        }
    }
    out
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|v| v as f64).product()
}

/// Kernels `K(sigma)` of the time convolutions, `sigma = t - s`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kernel {
    /// `e^{-sigma z}`.
    Exp,
    /// `z e^{-sigma z}`.
    LExp,
    /// `sigma z e^{-sigma z}`.
    SigmaLExp,
}

/// `int_0^delta u^q K(a + delta - u) du` for `q = 0..3`.
fn panel_moments(kernel: Kernel, z: C, a: f64, delta: f64) -> [C; 4] {
    let phi = phi_functions(-delta * z);
    let shift = (-a * z).exp();
    // E_q = int_0^delta u^q e^{-(a + delta - u) z} du.
    let e = |q: usize| shift * delta.powi(q as i32 + 1) * factorial(q) * phi[q + 1];
    let mut out = [ZERO; 4];
    for (q, o) in out.iter_mut().enumerate() {
        *o = match kernel {
            Kernel::Exp => e(q),
            Kernel::LExp => z * e(q),
            Kernel::SigmaLExp => z * ((a + delta) * e(q) - e(q + 1)),
        };
    }
    out
}

/// Monomial coefficients (in `u`) of the Lagrange basis on `nodes`.
fn lagrange_monomials(nodes: &[f64]) -> Vec<[f64; 4]> {
    let k = nodes.len();
    (0..k)
        .map(|a| {
            let mut poly = [0.0; 4];
            poly[0] = 1.0;
            let mut degree = 0;
            for (b, &xb) in nodes.iter().enumerate() {
                if b == a {
                    continue;
                }
                let scale = 1.0 / (nodes[a] - xb);
                let mut next = [0.0; 4];
                for d in 0..=degree {
                    next[d + 1] += poly[d] * scale;
                    next[d] -= poly[d] * xb * scale;
                }
                poly = next;
                degree += 1;
            }
            poly
        })
        .collect()
}

/// Window of at most `width` consecutive nodes in `[lo, hi]` starting near `start`.
fn window(start: isize, width: usize, lo: usize, hi: usize) -> (usize, usize) {
    let len = (hi - lo + 1).min(width);
    let first = start.clamp(lo as isize, (hi + 1 - len) as isize) as usize;
    (first, len)
}

/// Weights `w_k`, `k = lo..=hi`, with
/// `int_{s_lo}^{s_hi} K(t - s) g(s) ds ~ sum_k w_k g(s_k)` for `t >= s_hi`,
/// using the cubic interpolant of `g` on each panel.
fn product_weights(times: &[f64], lo: usize, hi: usize, t: f64, kernel: Kernel, z: C) -> Vec<C> {
    let mut w = vec![ZERO; hi - lo + 1];
    for j in lo..hi {
        let delta = times[j + 1] - times[j];
        let a = t - times[j + 1];
        let moments = panel_moments(kernel, z, a, delta);
        let (first, len) = window(j as isize - 1, 4, lo, hi);
        let nodes: Vec<f64> = (first..first + len).map(|k| times[k] - times[j]).collect();
        for (idx, coeffs) in lagrange_monomials(&nodes).iter().enumerate() {
            let contribution: C = coeffs.iter().zip(&moments).map(|(c, m)| m * *c).sum();
            w[first + idx - lo] += contribution;
        }
    }
    w
}

/// Weights for `d/dx` at offset `x0` from samples at `offsets` (Fornberg).
pub fn fd_weights(offsets: &[f64], x0: f64) -> Vec<f64> {
    let n = offsets.len();
    let order = 1;
    // c[j][k]: weight of node j for derivative order k.
    let mut c = vec![vec![0.0; order + 1]; n];
    let mut c1 = 1.0;
    let mut c4 = offsets[0] - x0;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(order);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = offsets[i] - x0;
        for j in 0..i {
            let c3 = offsets[i] - offsets[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    c.into_iter().map(|row| row[order]).collect()
}

/// Five-point stencils for `d/dx` on a uniform grid in `x = ln s`, keyed by
/// window length and the derivative node's position within the window.
#[derive(Debug, Clone)]
struct Stencils {
    by_len: Vec<Vec<Vec<f64>>>,
}

impl Stencils {
    fn new() -> Stencils {
        let by_len = (0..=5)
            .map(|len| {
                (0..len)
                    .map(|pos| {
                        let offsets: Vec<f64> = (0..len).map(|j| j as f64).collect();
                        fd_weights(&offsets, pos as f64)
                    })
                    .collect()
            })
            .collect();
        Stencils { by_len }
    }

    /// `(first node, weights)` for the derivative at node `k` using nodes in `[0, hi]`.
    fn at(&self, k: usize, hi: usize) -> (usize, &[f64]) {
        let (first, len) = window(k as isize - 2, 5, 0, hi);
        (first, &self.by_len[len][k - first])
    }
}

/// Precomputed product-integration weights for one provider, grid and scheme.
pub struct MlPlan {
    scheme: MlScheme,
    spec: GridSpec,
    times: Vec<f64>,
    log_step: f64,
    /// Spectral index -> position in the deduplicated spectrum.
    zid: Vec<usize>,
    unique: Vec<C>,
    /// Per output time `i`: `(i + 1) * unique.len()` weights, node-major.
    weights: Vec<Vec<C>>,
    /// Singularity split only: `1 - e^{-(t_i - s_0) z}` per unique eigenvalue.
    decay: Vec<Vec<C>>,
    stencils: Stencils,
}

fn dedup_spectrum(spectrum: &[C]) -> (Vec<usize>, Vec<C>) {
    let mut index: HashMap<(u64, u64), usize> = HashMap::new();
    let mut unique = Vec::new();
    let zid = spectrum
        .iter()
        .map(|z| {
            *index
                .entry((z.re.to_bits(), z.im.to_bits()))
                .or_insert_with(|| {
                    unique.push(*z);
                    unique.len() - 1
                })
        })
        .collect();
    (zid, unique)
}

impl MlPlan {
    pub fn new(provider: &dyn SemigroupProvider, grid: &Grid, scheme: MlScheme) -> Result<MlPlan> {
        if !provider.grid_spec().same_space(grid.spec()) {
            return Err(Error::GridMismatch(format!(
                "provider acts on {:?}, field lives on {:?}",
                provider.grid_spec(),
                grid.spec()
            )));
        }
        let times = grid.times().to_vec();
        let (zid, unique) = dedup_spectrum(provider.spectrum());
        let kernel = match scheme {
            MlScheme::SingularitySplit => Kernel::SigmaLExp,
            MlScheme::IntegrationByParts => Kernel::Exp,
        };
        let nu = unique.len();
        let weights: Vec<Vec<C>> = (0..times.len())
            .into_par_iter()
            .map(|i| {
                let mut w = vec![ZERO; (i + 1) * nu];
                if i == 0 {
                    return w;
                }
                for (u, &z) in unique.iter().enumerate() {
                    for (k, wk) in product_weights(&times, 0, i, times[i], kernel, z)
                        .into_iter()
                        .enumerate()
                    {
                        w[k * nu + u] = wk;
                    }
                }
                w
            })
            .collect();
        let decay = match scheme {
            MlScheme::SingularitySplit => times
                .iter()
                .map(|&t| {
                    unique
                        .iter()
                        .map(|&z| 1.0 - (-(t - times[0]) * z).exp())
                        .collect()
                })
                .collect(),
            MlScheme::IntegrationByParts => Vec::new(),
        };
        Ok(MlPlan {
            scheme,
            spec: *grid.spec(),
            times,
            log_step: grid.log_step(),
            zid,
            unique,
            weights,
            decay,
            stencils: Stencils::new(),
        })
    }

    pub fn scheme(&self) -> MlScheme {
        self.scheme
    }

    /// `d f / ds` at node `k` in spectral coordinates, from nodes `<= hi`.
    fn derivative(&self, spectral: &[Vec<C>], k: usize, hi: usize) -> Vec<C> {
        let (first, weights) = self.stencils.at(k, hi);
        let scale = 1.0 / (self.times[k] * self.log_step);
        let mut out = vec![ZERO; spectral[0].len()];
        for (j, &c) in weights.iter().enumerate() {
            let c = c * scale;
            for (o, v) in out.iter_mut().zip(&spectral[first + j]) {
                *o += v * c;
            }
        }
        out
    }

    /// `M_L f(t_i)` in spectral coordinates.
    fn output(&self, spectral: &[Vec<C>], i: usize) -> Vec<C> {
        let nu = self.unique.len();
        let w = &self.weights[i];
        let fi = &spectral[i];
        match self.scheme {
            MlScheme::SingularitySplit => {
                let decay = &self.decay[i];
                let mut g: Vec<C> = fi
                    .iter()
                    .zip(&self.zid)
                    .map(|(v, &u)| decay[u] * v)
                    .collect();
                for (k, fk) in spectral.iter().enumerate().take(i) {
                    let inv = 1.0 / (self.times[i] - self.times[k]);
                    let wk = &w[k * nu..(k + 1) * nu];
                    for ((o, &u), (a, b)) in g.iter_mut().zip(&self.zid).zip(fk.iter().zip(fi)) {
                        *o += wk[u] * (a - b) * inv;
                    }
                }
                if i > 0 {
                    let wi = &w[i * nu..(i + 1) * nu];
                    for ((o, &u), d) in g
                        .iter_mut()
                        .zip(&self.zid)
                        .zip(self.derivative(spectral, i, i))
                    {
                        *o -= wi[u] * d;
                    }
                }
                g
            }
            MlScheme::IntegrationByParts => {
                let mut g = fi.clone();
                if i == 0 {
                    return g;
                }
                for k in 0..=i {
                    let wk = &w[k * nu..(k + 1) * nu];
                    for ((o, &u), d) in g
                        .iter_mut()
                        .zip(&self.zid)
                        .zip(self.derivative(spectral, k, i))
                    {
                        *o -= wk[u] * d;
                    }
                }
                g
            }
        }
    }

    pub fn apply(
        &self,
        provider: &dyn SemigroupProvider,
        f: &SpaceTimeField,
    ) -> Result<SpaceTimeField> {
        check_field(f, &self.spec)?;
        let spectral = to_spectral_slices(provider, f);
        let slices: Vec<Vec<C>> = (0..self.times.len())
            .into_par_iter()
            .map(|i| provider.from_spectral(&self.output(&spectral, i)))
            .collect();
        SpaceTimeField::from_values(f.grid().clone(), slices.concat())
    }
}

fn to_spectral_slices(provider: &dyn SemigroupProvider, f: &SpaceTimeField) -> Vec<Vec<C>> {
    (0..f.grid().nt())
        .into_par_iter()
        .map(|k| provider.to_spectral(f.slice(k)))
        .collect()
}

fn check_field(f: &SpaceTimeField, spec: &GridSpec) -> Result<()> {
    if f.grid().spec() != spec {
        return Err(Error::GridMismatch(format!(
            "plan built for {spec:?}, field on {:?}",
            f.grid().spec()
        )));
    }
    for slice in 0..2.min(f.grid().nt()) {
        let magnitude = f.slice(slice).iter().map(|v| v.norm()).fold(0.0, f64::max);
        if magnitude != 0.0 {
            return Err(Error::NotVanishingNearZero { slice, magnitude });
        }
    }
    Ok(())
}

/// `M_L f` on the grid of `f`.
pub fn ml_apply(
    f: &SpaceTimeField,
    provider: &dyn SemigroupProvider,
    scheme: MlScheme,
) -> Result<SpaceTimeField> {
    MlPlan::new(provider, f.grid(), scheme)?.apply(provider, f)
}

fn l2_norm(v: &[C]) -> f64 {
    v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

/// Compares `int_{t/2}^t L e^{-(t-s)L} g(s) ds` computed directly with
/// `M_L g(t) - e^{-(t/2)L} M_L g(t/2)` at every grid time with `t/2` on the
/// grid. Returns `max_t ||direct - identity|| / max_t ||identity||`.
pub fn half_interval_check(g: &SpaceTimeField, provider: &dyn SemigroupProvider) -> Result<f64> {
    let grid = g.grid();
    let times = grid.times();
    let q = (std::f64::consts::LN_2 / grid.log_step()).round() as usize;
    if q == 0 || q >= times.len() {
        return Err(Error::OffGrid(format!(
            "the grid holds no pair (t/2, t); log step {}",
            grid.log_step()
        )));
    }
    let half = times[q] / 2.0;
    if (times[0] - half).abs() > 1e-9 * times[q] {
        return Err(Error::OffGrid(format!(
            "t = {} has t/2 = {half} between grid points (nearest {})",
            times[q], times[0]
        )));
    }
    let m = ml_apply(g, provider, MlScheme::SingularitySplit)?;
    let spectral = to_spectral_slices(provider, g);
    let (zid, unique) = dedup_spectrum(provider.spectrum());

    let pairs: Vec<(f64, f64)> = (q..times.len())
        .into_par_iter()
        .map(|i| {
            let t = times[i];
            let mut direct = vec![ZERO; grid.npts()];
            let per_z: Vec<Vec<C>> = unique
                .iter()
                .map(|&z| product_weights(times, i - q, i, t, Kernel::LExp, z))
                .collect();
            for (offset, k) in (i - q..=i).enumerate() {
                for ((o, &u), v) in direct.iter_mut().zip(&zid).zip(&spectral[k]) {
                    *o += per_z[u][offset] * v;
                }
            }
            let direct = provider.from_spectral(&direct);
            let back = provider.apply_exp(t / 2.0, m.slice(i - q));
            let identity: Vec<C> = m.slice(i).iter().zip(&back).map(|(a, b)| a - b).collect();
            let diff: Vec<C> = direct.iter().zip(&identity).map(|(a, b)| a - b).collect();
            (l2_norm(&diff), l2_norm(&identity))
        })
        .collect();
    let worst_diff = pairs.iter().map(|p| p.0).fold(0.0, f64::max);
    let scale = pairs.iter().map(|p| p.1).fold(0.0, f64::max);
    if scale == 0.0 {
        return Ok(if worst_diff == 0.0 {
            0.0
        } else {
            f64::INFINITY
        });
    }
    Ok(worst_diff / scale)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct L2Ratio {
    pub ratio: f64,
    /// Ensemble index attaining the maximum.
    pub argmax: usize,
}

/// `max_f (int t^beta |M_L f|^2 / int t^beta |f|^2)^{1/2}` over the ensemble.
pub fn l2_weighted_ratio(
    provider: &dyn SemigroupProvider,
    beta: f64,
    ensemble: &[SpaceTimeField],
    scheme: MlScheme,
) -> Result<L2Ratio> {
    if !(beta < 1.0) {
        return Err(Error::RangeViolation { beta });
    }
    let first = ensemble.first().ok_or(Error::EmptyEnsemble)?;
    for f in ensemble {
        first.check_compatible(f)?;
    }
    let plan = MlPlan::new(provider, first.grid(), scheme)?;
    let ratios: Vec<f64> = ensemble
        .par_iter()
        .enumerate()
        .map(|(idx, f)| {
            let denominator = integrate_spacetime(f, beta);
            if denominator == 0.0 {
                return Err(Error::DegenerateInput(format!(
                    "ensemble member {idx} has zero weighted norm"
                )));
            }
            let numerator = integrate_spacetime(&plan.apply(provider, f)?, beta);
            Ok((numerator / denominator).sqrt())
        })
        .collect::<Result<_>>()?;
    let (argmax, ratio) =
        ratios
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, r)| {
                if r > best.1 {
                    (i, r)
                } else {
                    best
                }
            });
    Ok(L2Ratio { ratio, argmax })
}

/// Relative weighted `L^2` distance `||a - b|| / ||b||` in `t^beta dt dy`.
pub fn weighted_relative_difference(
    a: &SpaceTimeField,
    b: &SpaceTimeField,
    beta: f64,
) -> Result<f64> {
    let diff = a.combine(C::new(1.0, 0.0), b, C::new(-1.0, 0.0))?;
    let denominator = integrate_spacetime(b, beta);
    Ok((integrate_spacetime(&diff, beta) / denominator).sqrt())
}

//! Weighted tent-space norms `T^{p,2,m}_alpha(t^beta dt dy)`, the Carleson
//! norm `T^{inf,2,m}(t^beta dt dy)` and the homogeneity rescaling map.

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{ball_mass_all, make_grid, Grid, GridSpec, SpaceTimeField};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TentParams {
    pub p: f64,
    /// Homogeneity: time `t` pairs with spatial radius `t^{1/m}`.
    pub m: u32,
    pub beta: f64,
    /// Aperture: cones use balls of radius `alpha * t^{1/m}`.
    pub alpha: f64,
}

impl TentParams {
    pub fn new(p: f64, m: u32, beta: f64, alpha: f64) -> Result<TentParams> {
        let params = TentParams { p, m, beta, alpha };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p.is_finite() && self.p > 1.0) {
            return Err(Error::InvalidParams(format!(
                "p = {} must be finite and > 1",
                self.p
            )));
        }
        if self.m == 0 {
            return Err(Error::InvalidParams("m must be a positive integer".into()));
        }
        if !self.beta.is_finite() {
            return Err(Error::InvalidParams(format!(
                "beta = {} must be finite",
                self.beta
            )));
        }
        if !(self.alpha.is_finite() && self.alpha >= 1.0) {
            return Err(Error::InvalidParams(format!(
                "alpha = {} must be >= 1",
                self.alpha
            )));
        }
        Ok(())
    }

    /// `min(p, 2)`.
    pub fn tau(&self) -> f64 {
        self.p.min(2.0)
    }

    pub fn with_alpha(&self, alpha: f64) -> TentParams {
        TentParams { alpha, ..*self }
    }
}

/// The square function `A(x)` of a field, one value per spatial point.
#[derive(Debug, Clone)]
pub struct ConeField {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl ConeField {
    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// `A(x) = sum_i w_i t_i^{beta - n/m} * ball_mass(|g(t_i)|^2, alpha t_i^{1/m}, x)`.
pub fn cone_functional(g: &SpaceTimeField, params: &TentParams) -> Result<ConeField> {
    params.validate()?;
    let grid = g.grid().clone();
    let n = grid.n() as f64;
    let m = params.m as f64;
    let limit = grid.extent() / 2.0;
    for &t in grid.times() {
        let radius = params.alpha * t.powf(1.0 / m);
        if radius >= limit {
            return Err(Error::ApertureTooLarge {
                radius,
                time: t,
                limit,
            });
        }
    }

    let slices: Vec<Option<Vec<f64>>> = (0..grid.nt())
        .into_par_iter()
        .map(|i| {
            let density = g.density(i);
            if density.iter().all(|&v| v == 0.0) {
                return Ok(None);
            }
            let t = grid.times()[i];
            let scale = grid.weights().time[i] * t.powf(params.beta - n / m);
            let mass = ball_mass_all(&grid, &density, params.alpha * t.powf(1.0 / m))?;
            Ok(Some(mass.into_iter().map(|v| scale * v).collect()))
        })
        .collect::<Result<_>>()?;

    let mut values = vec![0.0; grid.npts()];
    for slice in slices.into_iter().flatten() {
        for (a, s) in values.iter_mut().zip(slice) {
            *a += s;
        }
    }
    Ok(ConeField { grid, values })
}

/// `(h^n sum_x A(x)^{p/2})^{1/p}`.
pub fn tent_norm_from_cone(cone: &ConeField, p: f64) -> f64 {
    let sum: f64 = cone.values.iter().map(|&a| a.powf(p / 2.0)).sum();
    (cone.grid.weights().space * sum).powf(1.0 / p)
}

pub fn tent_norm(g: &SpaceTimeField, params: &TentParams) -> Result<f64> {
    Ok(tent_norm_from_cone(&cone_functional(g, params)?, params.p))
}

/// `sup_{x, r} (r^{-n/m} int_0^r int_{B(x, r^{1/m})} t^beta |g|^2 dy dt)^{1/2}`
/// over grid centers `x` and radii `r` on the time grid.
///
/// The inner time integral is a cumulative trapezoid over `[t_min, r]`.
pub fn carleson_norm(g: &SpaceTimeField, m: u32, beta: f64) -> Result<f64> {
    if m == 0 {
        return Err(Error::InvalidParams("m must be a positive integer".into()));
    }
    let grid = g.grid().clone();
    let times = grid.times();
    let n = grid.n() as f64;
    let m = m as f64;
    let limit = grid.extent() / 2.0;
    if let Some(&r) = times.iter().find(|&&r| r.powf(1.0 / m) >= limit) {
        return Err(Error::RadiusTooLarge {
            radius: r.powf(1.0 / m),
            limit,
        });
    }

    let weighted: Vec<Vec<f64>> = (0..grid.nt())
        .map(|i| {
            g.density(i)
                .into_iter()
                .map(|v| times[i].powf(beta) * v)
                .collect()
        })
        .collect();
    let mut cumulative = Vec::with_capacity(grid.nt());
    let mut running = vec![0.0; grid.npts()];
    cumulative.push(running.clone());
    for i in 1..grid.nt() {
        let half = 0.5 * (times[i] - times[i - 1]);
        for (s, (a, b)) in running
            .iter_mut()
            .zip(weighted[i - 1].iter().zip(&weighted[i]))
        {
            *s += half * (a + b);
        }
        cumulative.push(running.clone());
    }

    let sup = (0..grid.nt())
        .into_par_iter()
        .map(|k| {
            let r = times[k];
            let mass = ball_mass_all(&grid, &cumulative[k], r.powf(1.0 / m))?;
            let peak = mass.into_iter().fold(0.0, f64::max);
            Ok(r.powf(-n / m) * peak)
        })
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    Ok(sup.sqrt())
}

/// `h(t, y) = t^{m(beta+1)/2} f(t^m, y)` on the time grid `{t_i^{1/m}}`.
///
/// Then `tent_norm(f; p, m, beta, alpha) = sqrt(m) * tent_norm(h; p, 1, -1, alpha)`.
pub fn rescale_homogeneity(f: &SpaceTimeField, m: u32, beta: f64) -> Result<SpaceTimeField> {
    if m == 0 {
        return Err(Error::InvalidParams("m must be a positive integer".into()));
    }
    let src = f.grid();
    let inv_m = 1.0 / m as f64;
    let spec = GridSpec {
        t_min: src.spec().t_min.powf(inv_m),
        t_max: src.spec().t_max.powf(inv_m),
        ..*src.spec()
    };
    let grid = make_grid(spec)?;
    let npts = src.npts();
    let mut values = Vec::with_capacity(f.values().len());
    for (i, &t) in src.times().iter().enumerate() {
        // s^{m(beta+1)/2} with s = t^{1/m}.
        let factor = t.powf((beta + 1.0) / 2.0);
        values.extend(f.slice(i).iter().map(|v| v * factor));
    }
    debug_assert_eq!(values.len(), src.nt() * npts);
    SpaceTimeField::from_values(grid, values)
}

/// Samples of an indicator `1_{[t0, t1] x box}` on a grid; used by tests and
/// the CLI field generator.
pub fn indicator_field(
    grid: Arc<Grid>,
    t_range: (f64, f64),
    lo: [f64; 2],
    hi: [f64; 2],
) -> Result<SpaceTimeField> {
    let n = grid.n();
    SpaceTimeField::from_fn(grid, |t, x| {
        let inside_t = t >= t_range.0 && t <= t_range.1;
        let inside_x = (0..n).all(|k| x[k] >= lo[k] && x[k] < hi[k]);
        Complex64::new(if inside_t && inside_x { 1.0 } else { 0.0 }, 0.0)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::integrate_spacetime;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_field(grid: Arc<Grid>, seed: u64) -> SpaceTimeField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let len = grid.nt() * grid.npts();
        let values = (0..len)
            .map(|_| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
            .collect();
        SpaceTimeField::from_values(grid, values).unwrap()
    }

    fn small_grid(n: usize) -> Arc<Grid> {
        make_grid(GridSpec::new(n, 8.0, 16, 0.05, 2.0, 9)).unwrap()
    }

    #[test]
    fn params_validation() {
        assert!(TentParams::new(1.0, 1, -1.0, 1.0).is_err());
        assert!(TentParams::new(f64::INFINITY, 1, -1.0, 1.0).is_err());
        assert!(TentParams::new(2.0, 0, -1.0, 1.0).is_err());
        assert!(TentParams::new(2.0, 1, -1.0, 0.5).is_err());
        assert_eq!(TentParams::new(4.0, 1, -1.0, 1.0).unwrap().tau(), 2.0);
        assert_eq!(TentParams::new(1.5, 1, -1.0, 1.0).unwrap().tau(), 1.5);
    }

    #[test]
    fn zero_field_has_zero_norms() {
        let g = SpaceTimeField::zeros(small_grid(1));
        let params = TentParams::new(2.0, 1, -1.0, 1.0).unwrap();
        assert!(cone_functional(&g, &params)
            .unwrap()
            .values()
            .iter()
            .all(|&a| a == 0.0));
        assert_eq!(tent_norm(&g, &params).unwrap(), 0.0);
        assert_eq!(carleson_norm(&g, 1, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn cone_matches_triple_sum_oracle() {
        for n in [1, 2] {
            let g = random_field(small_grid(n), 40 + n as u64);
            let grid = g.grid().clone();
            let params = TentParams::new(3.0, 2, 0.3, 1.7).unwrap();
            let cone = cone_functional(&g, &params).unwrap();
            let x = grid.npts() / 3;
            let mut oracle = 0.0;
            for (i, &t) in grid.times().iter().enumerate() {
                let r = params.alpha * t.sqrt();
                let slice = g.slice(i);
                for y in 0..grid.npts() {
                    if grid.grid_distance(x, y) <= r {
                        oracle += grid.weights().time[i]
                            * t.powf(params.beta - n as f64 / 2.0)
                            * grid.weights().space
                            * slice[y].norm_sqr();
                    }
                }
            }
            let rel = (cone.values()[x] - oracle).abs() / oracle;
            assert!(rel < 1e-12, "n = {n}: relative error {rel}");
        }
    }

    #[test]
    fn wider_aperture_dominates_pointwise() {
        let g = random_field(small_grid(2), 9);
        let base = TentParams::new(2.0, 2, -1.0, 1.0).unwrap();
        let a1 = cone_functional(&g, &base).unwrap();
        let a2 = cone_functional(&g, &base.with_alpha(2.0)).unwrap();
        assert!(a1.values().iter().zip(a2.values()).all(|(x, y)| x <= y));
    }

    #[test]
    fn aperture_too_large_is_rejected() {
        let g = SpaceTimeField::zeros(small_grid(1));
        let params = TentParams::new(2.0, 1, -1.0, 2.0).unwrap();
        assert!(matches!(
            cone_functional(&g, &params),
            Err(Error::ApertureTooLarge { .. })
        ));
        assert!(matches!(carleson_norm(&g, 1, 0.0), Ok(_)));
        let wide = make_grid(GridSpec::new(1, 2.0, 16, 0.05, 2.0, 9)).unwrap();
        assert!(matches!(
            carleson_norm(&SpaceTimeField::zeros(wide), 1, 0.0),
            Err(Error::RadiusTooLarge { .. })
        ));
    }

    #[test]
    fn p2_norm_matches_fubini_identity() {
        // p = 2: ||g||^2 = omega_n * int t^beta |g|^2, up to discrete ball volume.
        let grid = make_grid(GridSpec::new(1, 8.0, 256, 0.05, 1.0, 32)).unwrap();
        let g = SpaceTimeField::from_fn(grid, |t, [y, _]| {
            let bump = (-(y - 4.0).powi(2)).exp();
            Complex64::new(bump * t, 0.5 * bump)
        })
        .unwrap();
        let params = TentParams::new(2.0, 1, -1.0, 1.0).unwrap();
        let lhs = tent_norm(&g, &params).unwrap().powi(2);
        let rhs = 2.0 * integrate_spacetime(&g, -1.0);
        assert!(((lhs - rhs) / rhs).abs() < 0.02, "{lhs} vs {rhs}");
    }

    #[test]
    fn carleson_indicator_tends_to_one() {
        let grid = make_grid(GridSpec::new(1, 8.0, 512, 1e-3, 2.0, 257)).unwrap();
        let g = indicator_field(grid, (0.0, 1.0), [0.0, 0.0], [1.0, 0.0]).unwrap();
        let c = carleson_norm(&g, 1, 0.0).unwrap();
        assert!((c - 1.0).abs() < 0.02, "{c}");
    }

    #[test]
    fn rescaling_with_unit_homogeneity_is_identity() {
        let g = random_field(small_grid(1), 3);
        let h = rescale_homogeneity(&g, 1, -1.0).unwrap();
        assert_eq!(h.values(), g.values());
        assert_eq!(h.grid().times(), g.grid().times());
    }

    #[test]
    fn rescaling_maps_support() {
        let grid = make_grid(GridSpec::new(1, 8.0, 8, 1.0, 16.0, 5)).unwrap();
        let f = SpaceTimeField::from_fn(grid, |t, _| {
            Complex64::new(if (t - 4.0).abs() < 1e-9 { 1.0 } else { 0.0 }, 0.0)
        })
        .unwrap();
        let h = rescale_homogeneity(&f, 2, -1.0).unwrap();
        let times = h.grid().times();
        let support: Vec<f64> = (0..times.len())
            .filter(|&i| h.slice(i)[0].norm() > 0.0)
            .map(|i| times[i])
            .collect();
        assert_eq!(support.len(), 1);
        assert!((support[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn rescaling_identity_sqrt_m() {
        let grid = make_grid(GridSpec::new(1, 16.0, 128, 0.05, 4.0, 48)).unwrap();
        for m in [2u32, 3] {
            let f = SpaceTimeField::from_fn(grid.clone(), |t, [y, _]| {
                let s = t.ln();
                let time = (-(s - 0.2).powi(2)).exp();
                Complex64::new(time * (-(y - 8.0).powi(2)).exp(), 0.0)
            })
            .unwrap();
            let beta = 0.25;
            let lhs = tent_norm(&f, &TentParams::new(3.0, m, beta, 1.0).unwrap()).unwrap();
            let h = rescale_homogeneity(&f, m, beta).unwrap();
            let rhs = (m as f64).sqrt()
                * tent_norm(&h, &TentParams::new(3.0, 1, -1.0, 1.0).unwrap()).unwrap();
            assert!(((lhs - rhs) / rhs).abs() < 0.01, "m = {m}: {lhs} vs {rhs}");
        }
    }
}

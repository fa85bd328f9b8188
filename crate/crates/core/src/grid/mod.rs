//! Discretization of the half-space `(0, inf) x R^n`.
//!
//! Space is a flat torus of side `extent` sampled on `nx` points per axis;
//! time is a log-spaced grid on `[t_min, t_max]` with trapezoid weights.
//! Balls never self-overlap as long as their radius stays below
//! `extent / 2`, so the periodic model agrees with the Euclidean one for
//! compactly supported data.

mod ballsum;
pub mod io;

use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use ballsum::{ball_mass, ball_mass_all, BallSummer};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Spatial dimension, 1 or 2.
    pub n: usize,
    /// Side length of the torus.
    pub extent: f64,
    /// Points per spatial axis.
    pub nx: usize,
    pub t_min: f64,
    pub t_max: f64,
    /// Number of log-spaced time samples.
    pub nt: usize,
}

impl GridSpec {
    pub fn new(n: usize, extent: f64, nx: usize, t_min: f64, t_max: f64, nt: usize) -> Self {
        GridSpec {
            n,
            extent,
            nx,
            t_min,
            t_max,
            nt,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n != 1 && self.n != 2 {
            return Err(Error::InvalidSpec(format!(
                "n = {} (only 1 and 2 are supported)",
                self.n
            )));
        }
        if !(self.extent.is_finite() && self.extent > 0.0) {
            return Err(Error::InvalidSpec(format!(
                "extent = {} must be positive",
                self.extent
            )));
        }
        if self.nx < 4 {
            return Err(Error::InvalidSpec(format!(
                "nx = {} must be at least 4",
                self.nx
            )));
        }
        if self.nt < 2 {
            return Err(Error::InvalidSpec(format!(
                "nt = {} must be at least 2",
                self.nt
            )));
        }
        if !(self.t_min.is_finite() && self.t_min > 0.0) {
            return Err(Error::InvalidSpec(format!(
                "t_min = {} must be positive",
                self.t_min
            )));
        }
        if !(self.t_max.is_finite() && self.t_max > self.t_min) {
            return Err(Error::InvalidSpec(format!(
                "t_max = {} must exceed t_min = {}",
                self.t_max, self.t_min
            )));
        }
        Ok(())
    }

    /// Number of spatial points per time slice.
    pub fn npts(&self) -> usize {
        self.nx.pow(self.n as u32)
    }

    pub fn h(&self) -> f64 {
        self.extent / self.nx as f64
    }

    /// Same spatial torus (dimension, extent, resolution).
    pub fn same_space(&self, other: &GridSpec) -> bool {
        self.n == other.n && self.nx == other.nx && self.extent == other.extent
    }

    /// Twice the spatial points and twice the time intervals; every node of
    /// `self` is a node of the result.
    pub fn refined(&self) -> GridSpec {
        GridSpec {
            nx: self.nx * 2,
            nt: 2 * self.nt - 1,
            ..*self
        }
    }
}

/// Trapezoid weights on the time samples plus the spatial cell volume.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureWeights {
    pub time: Vec<f64>,
    /// `h^n`.
    pub space: f64,
}

#[derive(Debug, Clone)]
pub struct Grid {
    spec: GridSpec,
    times: Vec<f64>,
    weights: QuadratureWeights,
    log_step: f64,
}

pub fn make_grid(spec: GridSpec) -> Result<Arc<Grid>> {
    Grid::new(spec).map(Arc::new)
}

impl Grid {
    pub fn new(spec: GridSpec) -> Result<Grid> {
        spec.validate()?;
        let nt = spec.nt;
        let ratio = spec.t_max / spec.t_min;
        let mut times: Vec<f64> = (0..nt)
            .map(|i| spec.t_min * ratio.powf(i as f64 / (nt - 1) as f64))
            .collect();
        times[0] = spec.t_min;
        times[nt - 1] = spec.t_max;
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidSpec(
                "time samples are not strictly increasing".into(),
            ));
        }

        let mut time_weights = vec![0.0; nt];
        for i in 0..nt - 1 {
            let half = 0.5 * (times[i + 1] - times[i]);
            time_weights[i] += half;
            time_weights[i + 1] += half;
        }
        let h = spec.h();
        Ok(Grid {
            spec,
            weights: QuadratureWeights {
                time: time_weights,
                space: h.powi(spec.n as i32),
            },
            log_step: ratio.ln() / (nt - 1) as f64,
            times,
        })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn n(&self) -> usize {
        self.spec.n
    }

    pub fn nx(&self) -> usize {
        self.spec.nx
    }

    pub fn nt(&self) -> usize {
        self.spec.nt
    }

    pub fn npts(&self) -> usize {
        self.spec.npts()
    }

    pub fn extent(&self) -> f64 {
        self.spec.extent
    }

    pub fn h(&self) -> f64 {
        self.spec.h()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn weights(&self) -> &QuadratureWeights {
        &self.weights
    }

    /// Uniform step of the time grid in `ln t`.
    pub fn log_step(&self) -> f64 {
        self.log_step
    }

    /// Per-axis indices of a flat spatial index (axis 0 is the slow one).
    pub fn axis_indices(&self, flat: usize) -> [usize; 2] {
        let nx = self.spec.nx;
        match self.spec.n {
            1 => [flat, 0],
            _ => [flat / nx, flat % nx],
        }
    }

    pub fn flat_index(&self, idx: [usize; 2]) -> usize {
        match self.spec.n {
            1 => idx[0],
            _ => idx[0] * self.spec.nx + idx[1],
        }
    }

    /// Coordinates of a grid point; unused axes are zero.
    pub fn point(&self, flat: usize) -> [f64; 2] {
        let [i, j] = self.axis_indices(flat);
        let h = self.h();
        [i as f64 * h, j as f64 * h]
    }

    /// Squared periodic distance between two grid points in units of `h^2`.
    pub fn offset_sq(&self, a: usize, b: usize) -> u64 {
        let nx = self.spec.nx;
        let ia = self.axis_indices(a);
        let ib = self.axis_indices(b);
        (0..self.spec.n)
            .map(|k| {
                let d = ia[k].abs_diff(ib[k]);
                let m = d.min(nx - d) as u64;
                m * m
            })
            .sum()
    }

    /// Periodic distance between two grid points.
    pub fn grid_distance(&self, a: usize, b: usize) -> f64 {
        (self.offset_sq(a, b) as f64).sqrt() * self.h()
    }
}

/// Distance on the flat torus of side `extent`: per-axis wrapped gaps
/// combined in the Euclidean norm.
pub fn periodic_distance(x: &[f64], y: &[f64], extent: f64) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    x.iter()
        .zip(y)
        .map(|(a, b)| {
            let d = (a.rem_euclid(extent) - b.rem_euclid(extent)).abs();
            let m = d.min(extent - d);
            m * m
        })
        .sum::<f64>()
        .sqrt()
}

/// Complex samples `g(t_i, y)` on a grid, time-major.
#[derive(Debug, Clone)]
pub struct SpaceTimeField {
    grid: Arc<Grid>,
    values: Vec<Complex64>,
}

impl SpaceTimeField {
    pub fn zeros(grid: Arc<Grid>) -> Self {
        let len = grid.nt() * grid.npts();
        SpaceTimeField {
            grid,
            values: vec![Complex64::new(0.0, 0.0); len],
        }
    }

    pub fn from_values(grid: Arc<Grid>, values: Vec<Complex64>) -> Result<Self> {
        let expected = grid.nt() * grid.npts();
        if values.len() != expected {
            return Err(Error::GridMismatch(format!(
                "field has {} values, grid expects {}",
                values.len(),
                expected
            )));
        }
        if let Some(i) = values
            .iter()
            .position(|v| !(v.re.is_finite() && v.im.is_finite()))
        {
            return Err(Error::NonFinite(i));
        }
        Ok(SpaceTimeField { grid, values })
    }

    /// Samples `f(t, point)` at every grid node.
    pub fn from_fn(grid: Arc<Grid>, f: impl Fn(f64, [f64; 2]) -> Complex64) -> Result<Self> {
        let npts = grid.npts();
        let mut values = Vec::with_capacity(grid.nt() * npts);
        for &t in grid.times() {
            for s in 0..npts {
                values.push(f(t, grid.point(s)));
            }
        }
        Self::from_values(grid, values)
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn slice(&self, i: usize) -> &[Complex64] {
        let npts = self.grid.npts();
        &self.values[i * npts..(i + 1) * npts]
    }

    pub fn slice_mut(&mut self, i: usize) -> &mut [Complex64] {
        let npts = self.grid.npts();
        &mut self.values[i * npts..(i + 1) * npts]
    }

    /// `|g(t_i, .)|^2` as a real slice.
    pub fn density(&self, i: usize) -> Vec<f64> {
        self.slice(i).iter().map(|v| v.norm_sqr()).collect()
    }

    pub fn scaled(&self, c: Complex64) -> Self {
        SpaceTimeField {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| v * c).collect(),
        }
    }

    /// `a * self + b * other`.
    pub fn combine(&self, a: Complex64, other: &SpaceTimeField, b: Complex64) -> Result<Self> {
        self.check_compatible(other)?;
        Ok(SpaceTimeField {
            grid: self.grid.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(x, y)| a * x + b * y)
                .collect(),
        })
    }

    pub fn check_compatible(&self, other: &SpaceTimeField) -> Result<()> {
        if self.grid.spec() != other.grid.spec() {
            return Err(Error::GridMismatch(format!(
                "{:?} vs {:?}",
                self.grid.spec(),
                other.grid.spec()
            )));
        }
        Ok(())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }
}

/// `sum_i w_i t_i^beta h^n sum_y |g(t_i, y)|^2`.
pub fn integrate_spacetime(g: &SpaceTimeField, beta: f64) -> f64 {
    let grid = g.grid();
    let w = grid.weights();
    let mut total = 0.0;
    for (i, (&t, &wt)) in grid.times().iter().zip(&w.time).enumerate() {
        let slice_sum: f64 = g.slice(i).iter().map(|v| v.norm_sqr()).sum();
        total += wt * t.powf(beta) * w.space * slice_sum;
    }
    total
}

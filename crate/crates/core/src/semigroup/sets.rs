//! Spatial sets used in off-diagonal estimates: balls, dyadic annuli and
//! separated pairs of grid masks.

use crate::error::{Error, Result};
use crate::grid::Grid;

/// `C_0 = B(x, t)` and `C_j = B(x, 2^j t) \ B(x, 2^{j-1} t)` for `j >= 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Annulus {
    /// Flat grid index of the center.
    pub center: usize,
    /// Radius of the innermost ball.
    pub scale: f64,
    pub index: u32,
}

impl Annulus {
    pub fn new(center: usize, scale: f64, index: u32) -> Annulus {
        Annulus {
            center,
            scale,
            index,
        }
    }

    pub fn outer_radius(&self) -> f64 {
        self.scale * 2f64.powi(self.index as i32)
    }

    pub fn contains(&self, grid: &Grid, point: usize) -> bool {
        let d = grid.grid_distance(self.center, point);
        if self.index == 0 {
            d <= self.scale
        } else {
            d <= self.outer_radius() && d > self.outer_radius() / 2.0
        }
    }

    pub fn mask(&self, grid: &Grid) -> Vec<bool> {
        (0..grid.npts()).map(|p| self.contains(grid, p)).collect()
    }
}

/// Annuli `C_0, ..., C_J` with `2^J t < extent / 2`, plus the mask of the
/// points outside `B(x, 2^J t)`.
pub fn dyadic_partition(grid: &Grid, center: usize, scale: f64) -> (Vec<Annulus>, Vec<bool>) {
    let limit = grid.extent() / 2.0;
    let mut annuli = Vec::new();
    let mut j = 0;
    while scale * 2f64.powi(j as i32) < limit {
        annuli.push(Annulus::new(center, scale, j));
        j += 1;
    }
    let outer = annuli.last().map_or(0.0, |a| a.outer_radius());
    let rest = (0..grid.npts())
        .map(|p| annuli.is_empty() || grid.grid_distance(center, p) > outer)
        .collect();
    (annuli, rest)
}

/// Two masks on the spatial grid and their periodic separation.
#[derive(Debug, Clone, PartialEq)]
pub struct SeparatedSetPair {
    pub e: Vec<bool>,
    pub f: Vec<bool>,
    /// Infimum of grid distances between the sets; infinite when either is empty.
    pub distance: f64,
}

impl SeparatedSetPair {
    pub fn new(grid: &Grid, e: Vec<bool>, f: Vec<bool>) -> Result<SeparatedSetPair> {
        if e.len() != grid.npts() || f.len() != grid.npts() {
            return Err(Error::GridMismatch(format!(
                "set masks of length {} and {} on a grid with {} points",
                e.len(),
                f.len(),
                grid.npts()
            )));
        }
        let ei: Vec<usize> = (0..e.len()).filter(|&i| e[i]).collect();
        let fi: Vec<usize> = (0..f.len()).filter(|&i| f[i]).collect();
        let min_sq = ei
            .iter()
            .flat_map(|&a| fi.iter().map(move |&b| (a, b)))
            .map(|(a, b)| grid.offset_sq(a, b))
            .min();
        let distance = min_sq.map_or(f64::INFINITY, |s| (s as f64).sqrt() * grid.h());
        Ok(SeparatedSetPair { e, f, distance })
    }

    pub fn ball_mask(grid: &Grid, center: usize, radius: f64) -> Vec<bool> {
        (0..grid.npts())
            .map(|p| grid.grid_distance(center, p) <= radius)
            .collect()
    }

    /// `E = B(x_e, r_e)`, `F = B(x_f, r_f)`.
    pub fn balls(grid: &Grid, e: (usize, f64), f: (usize, f64)) -> Result<SeparatedSetPair> {
        Self::new(
            grid,
            Self::ball_mask(grid, e.0, e.1),
            Self::ball_mask(grid, f.0, f.1),
        )
    }

    /// `E = C_j(x, t)`, `F = B(x, t)`.
    pub fn annulus_and_core(grid: &Grid, annulus: Annulus) -> Result<SeparatedSetPair> {
        let core = Annulus {
            index: 0,
            ..annulus
        };
        Self::new(grid, annulus.mask(grid), core.mask(grid))
    }

    pub fn is_empty(&self) -> bool {
        !self.e.iter().any(|&b| b) || !self.f.iter().any(|&b| b)
    }
}

//! Sums over closed periodic balls centred at grid points.
//!
//! Slices are quantized to 128-bit fixed point (per-slice power-of-two
//! scale, about 100 significant bits) so every ball sum is exact integer
//! arithmetic. The prefix-sum path and the direct loop therefore agree
//! bit for bit, and sums over nested balls are exactly monotone.

use super::Grid;
use crate::error::{Error, Result};

const FIXED_POINT_BITS: i32 = 100;

/// `x * 2^e` without intermediate overflow for |e| up to ~2000.
fn scale_pow2(x: f64, e: i32) -> f64 {
    let half = e / 2;
    x * 2f64.powi(half) * 2f64.powi(e - half)
}

/// Fixed-point image of a real slice.
#[derive(Debug, Clone)]
struct Quantized {
    q: Vec<i128>,
    exponent: i32,
}

impl Quantized {
    fn new(slice: &[f64]) -> Quantized {
        let max = slice.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if max == 0.0 {
            return Quantized {
                q: vec![0; slice.len()],
                exponent: 0,
            };
        }
        let len_bits = (slice.len().max(1) as f64).log2().ceil() as i32;
        let max_exp = max.log2().floor() as i32 + 1;
        let exponent = FIXED_POINT_BITS - len_bits - max_exp;
        let q = slice
            .iter()
            .map(|&v| scale_pow2(v, exponent).round() as i128)
            .collect();
        Quantized { q, exponent }
    }

    fn to_f64(&self, sum: i128) -> f64 {
        scale_pow2(sum as f64, -self.exponent)
    }
}

/// Ball sums of one slice for any radius, via (row) prefix sums.
#[derive(Debug, Clone)]
pub struct BallSummer<'g> {
    grid: &'g Grid,
    quantized: Quantized,
    // One prefix array of length nx + 1 per grid row.
    prefix: Vec<i128>,
}

impl<'g> BallSummer<'g> {
    pub fn new(grid: &'g Grid, slice: &[f64]) -> BallSummer<'g> {
        assert_eq!(slice.len(), grid.npts(), "slice length must match the grid");
        let quantized = Quantized::new(slice);
        let nx = grid.nx();
        let rows = grid.npts() / nx;
        let mut prefix = vec![0i128; rows * (nx + 1)];
        for r in 0..rows {
            let p = &mut prefix[r * (nx + 1)..(r + 1) * (nx + 1)];
            for c in 0..nx {
                p[c + 1] = p[c] + quantized.q[r * nx + c];
            }
        }
        BallSummer {
            grid,
            quantized,
            prefix,
        }
    }

    fn row_segment(&self, row: usize, center: usize, half_width: usize) -> i128 {
        let nx = self.grid.nx();
        let p = &self.prefix[row * (nx + 1)..(row + 1) * (nx + 1)];
        let lo = center as isize - half_width as isize;
        let hi = center + half_width; // inclusive
        let mut total = 0;
        if lo < 0 {
            let lo_wrapped = (lo + nx as isize) as usize;
            total += p[nx] - p[lo_wrapped];
            total += p[hi + 1];
        } else if hi >= nx {
            total += p[nx] - p[lo as usize];
            total += p[hi + 1 - nx];
        } else {
            total += p[hi + 1] - p[lo as usize];
        }
        total
    }

    /// `h^n` times the sum over every grid point within `radius` of each
    /// grid center.
    pub fn all_centers(&self, radius: f64) -> Result<Vec<f64>> {
        let grid = self.grid;
        let ball = Ball::new(grid, radius)?;
        let nx = grid.nx();
        let cell = grid.weights().space;
        let out = (0..grid.npts())
            .map(|c| {
                let sum: i128 = match grid.n() {
                    1 => self.row_segment(0, c, ball.half_widths[0]),
                    _ => {
                        let [ci, cj] = grid.axis_indices(c);
                        let reach = ball.half_widths.len() - 1;
                        (0..=2 * reach)
                            .map(|k| {
                                let dy = k.abs_diff(reach);
                                let row = (ci + nx + k - reach) % nx;
                                self.row_segment(row, cj, ball.half_widths[dy])
                            })
                            .sum()
                    }
                };
                cell * self.quantized.to_f64(sum)
            })
            .collect();
        Ok(out)
    }

    /// Same quantity for one center by a direct loop over all grid points.
    pub fn single_center(&self, radius: f64, center: usize) -> Result<f64> {
        let grid = self.grid;
        let ball = Ball::new(grid, radius)?;
        let sum: i128 = (0..grid.npts())
            .filter(|&j| ball.contains(grid.offset_sq(center, j)))
            .map(|j| self.quantized.q[j])
            .sum();
        Ok(grid.weights().space * self.quantized.to_f64(sum))
    }
}

/// Closed ball at grid resolution, described by row half-widths.
struct Ball {
    r_sq: f64,
    h_sq: f64,
    half_widths: Vec<usize>,
}

impl Ball {
    fn new(grid: &Grid, radius: f64) -> Result<Ball> {
        let limit = grid.extent() / 2.0;
        if !(radius >= 0.0 && radius < limit) {
            return Err(Error::RadiusTooLarge { radius, limit });
        }
        let h = grid.h();
        let mut ball = Ball {
            r_sq: radius * radius,
            h_sq: h * h,
            half_widths: Vec::new(),
        };
        let reach = ball.max_offset(0);
        ball.half_widths = (0..=reach)
            .map(|dy| ball.max_offset((dy * dy) as u64))
            .collect();
        Ok(ball)
    }

    fn contains(&self, offset_sq: u64) -> bool {
        offset_sq as f64 * self.h_sq <= self.r_sq
    }

    // Largest m with m^2 + base in the ball; base itself must be inside.
    fn max_offset(&self, base: u64) -> usize {
        let mut m = ((self.r_sq / self.h_sq).sqrt() as usize).saturating_add(1);
        while m > 0 && !self.contains(base + (m * m) as u64) {
            m -= 1;
        }
        m
    }
}

/// `h^n * sum_{|y - x| <= radius} slice(y)` for every grid center `x`.
pub fn ball_mass_all(grid: &Grid, slice: &[f64], radius: f64) -> Result<Vec<f64>> {
    BallSummer::new(grid, slice).all_centers(radius)
}

/// Ball mass around one grid center (direct summation).
pub fn ball_mass(grid: &Grid, slice: &[f64], radius: f64, center: usize) -> Result<f64> {
    BallSummer::new(grid, slice).single_center(radius, center)
}

//! Unitary discrete Fourier transform on the periodic grid and the Fourier
//! multiplier providers (heat and Poisson).

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::SemigroupProvider;
use crate::error::Result;
use crate::grid::GridSpec;

/// Unitary DFT over all spatial axes of a flat row-major slice.
#[derive(Clone)]
pub struct Fourier {
    n: usize,
    nx: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    scale: f64,
}

impl std::fmt::Debug for Fourier {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fourier")
            .field("n", &self.n)
            .field("nx", &self.nx)
            .finish()
    }
}

impl Fourier {
    pub fn new(n: usize, nx: usize) -> Fourier {
        let mut planner = FftPlanner::new();
        Fourier {
            n,
            nx,
            forward: planner.plan_fft_forward(nx),
            inverse: planner.plan_fft_inverse(nx),
            scale: 1.0 / (nx.pow(n as u32) as f64).sqrt(),
        }
    }

    fn run(&self, fft: &Arc<dyn Fft<f64>>, data: &mut [Complex64]) {
        let nx = self.nx;
        fft.process(data);
        if self.n == 2 {
            let mut column = vec![Complex64::new(0.0, 0.0); nx];
            for j in 0..nx {
                for i in 0..nx {
                    column[i] = data[i * nx + j];
                }
                fft.process(&mut column);
                for i in 0..nx {
                    data[i * nx + j] = column[i];
                }
            }
        }
        for v in data.iter_mut() {
            *v *= self.scale;
        }
    }

    pub fn forward(&self, data: &mut [Complex64]) {
        self.run(&self.forward, data);
    }

    pub fn inverse(&self, data: &mut [Complex64]) {
        self.run(&self.inverse, data);
    }

    /// Angular frequency of axis index `k` on a torus of side `extent`.
    pub fn frequency(&self, k: usize, extent: f64) -> f64 {
        let signed = if k <= self.nx / 2 {
            k as f64
        } else {
            k as f64 - self.nx as f64
        };
        2.0 * PI * signed / extent
    }

    /// `|xi|^2` for every flat spectral index.
    pub fn frequency_norm_sq(&self, extent: f64) -> Vec<f64> {
        let nx = self.nx;
        let npts = nx.pow(self.n as u32);
        (0..npts)
            .map(|flat| {
                let axes: &[usize] = if self.n == 1 {
                    &[flat]
                } else {
                    &[flat / nx, flat % nx]
                };
                axes.iter()
                    .map(|&k| self.frequency(k, extent).powi(2))
                    .sum()
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MultiplierKind {
    /// Symbol `|xi|^2`, homogeneity 2.
    Heat,
    /// Symbol `|xi|`, homogeneity 1.
    Poisson,
}

/// Semigroup generated by a real Fourier multiplier.
#[derive(Debug, Clone)]
pub struct FourierProvider {
    kind: MultiplierKind,
    spec: GridSpec,
    fourier: Fourier,
    spectrum: Vec<Complex64>,
}

impl FourierProvider {
    pub fn new(kind: MultiplierKind, spec: GridSpec) -> Result<FourierProvider> {
        spec.validate()?;
        let fourier = Fourier::new(spec.n, spec.nx);
        let spectrum = fourier
            .frequency_norm_sq(spec.extent)
            .into_iter()
            .map(|xi2| {
                let z = match kind {
                    MultiplierKind::Heat => xi2,
                    MultiplierKind::Poisson => xi2.sqrt(),
                };
                Complex64::new(z, 0.0)
            })
            .collect();
        Ok(FourierProvider {
            kind,
            spec,
            fourier,
            spectrum,
        })
    }
}

/// `e^{-tau |xi|^2}` on the torus, `m = 2`.
pub fn heat_provider(spec: GridSpec) -> Result<FourierProvider> {
    FourierProvider::new(MultiplierKind::Heat, spec)
}

/// `e^{-tau |xi|}` on the torus, `m = 1`.
pub fn poisson_provider(spec: GridSpec) -> Result<FourierProvider> {
    FourierProvider::new(MultiplierKind::Poisson, spec)
}

impl SemigroupProvider for FourierProvider {
    fn name(&self) -> &str {
        match self.kind {
            MultiplierKind::Heat => "heat",
            MultiplierKind::Poisson => "poisson",
        }
    }

    fn homogeneity(&self) -> u32 {
        match self.kind {
            MultiplierKind::Heat => 2,
            MultiplierKind::Poisson => 1,
        }
    }

    fn grid_spec(&self) -> &GridSpec {
        &self.spec
    }

    fn spectrum(&self) -> &[Complex64] {
        &self.spectrum
    }

    fn to_spectral(&self, v: &[Complex64]) -> Vec<Complex64> {
        let mut out = v.to_vec();
        self.fourier.forward(&mut out);
        out
    }

    fn from_spectral(&self, c: &[Complex64]) -> Vec<Complex64> {
        let mut out = c.to_vec();
        self.fourier.inverse(&mut out);
        out
    }

    fn to_spectral_adjoint(&self, v: &[Complex64]) -> Vec<Complex64> {
        self.to_spectral(v)
    }

    fn from_spectral_adjoint(&self, c: &[Complex64]) -> Vec<Complex64> {
        self.from_spectral(c)
    }
}

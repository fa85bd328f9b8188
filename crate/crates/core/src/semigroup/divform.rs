//! Divergence-form operator `L = D^H diag(a) D` with `D` the periodic forward
//! difference, diagonalized once by a dense eigendecomposition.

use faer::linalg::solvers::DenseSolveCore;
use faer::{Mat, Side};
use num_complex::Complex64;

use super::SemigroupProvider;
use crate::error::{Error, Result};
use crate::grid::GridSpec;

/// Largest number of grid points handled by the dense factorization.
pub const DIVFORM_MAX_POINTS: usize = 512;

/// Allowed `max_i |(V diag(z) V^{-1} x - L x)_i|` relative to `npts * max |L_ij|`.
const RECONSTRUCTION_TOL: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct DivFormProvider {
    spec: GridSpec,
    coefficients: Vec<Complex64>,
    spectrum: Vec<Complex64>,
    // Row-major npts x npts.
    vectors: Vec<Complex64>,
    inverse: Vec<Complex64>,
}

fn matvec(a: &[Complex64], v: &[Complex64]) -> Vec<Complex64> {
    let n = v.len();
    a.chunks_exact(n)
        .map(|row| row.iter().zip(v).map(|(x, y)| x * y).sum())
        .collect()
}

fn matvec_adjoint(a: &[Complex64], v: &[Complex64]) -> Vec<Complex64> {
    let n = v.len();
    let mut out = vec![Complex64::new(0.0, 0.0); n];
    for (row, &vi) in a.chunks_exact(n).zip(v) {
        for (o, x) in out.iter_mut().zip(row) {
            *o += x.conj() * vi;
        }
    }
    out
}

/// Dense matrix of `D^H diag(a) D` (row-major).
pub fn divform_matrix(spec: &GridSpec, a: &[Complex64]) -> Vec<Complex64> {
    let npts = spec.npts();
    let nx = spec.nx;
    let h2 = spec.h() * spec.h();
    let mut l = vec![Complex64::new(0.0, 0.0); npts * npts];
    for p in 0..npts {
        let (i, j) = if spec.n == 1 {
            (p, 0)
        } else {
            (p / nx, p % nx)
        };
        let neighbours = if spec.n == 1 {
            vec![(i + 1) % nx]
        } else {
            vec![((i + 1) % nx) * nx + j, i * nx + (j + 1) % nx]
        };
        let w = a[p] / h2;
        for q in neighbours {
            l[p * npts + p] += w;
            l[q * npts + q] += w;
            l[p * npts + q] -= w;
            l[q * npts + p] -= w;
        }
    }
    l
}

impl DivFormProvider {
    pub fn new(spec: GridSpec, coefficients: Vec<Complex64>) -> Result<DivFormProvider> {
        spec.validate()?;
        let npts = spec.npts();
        if coefficients.len() != npts {
            return Err(Error::GridMismatch(format!(
                "{} coefficients for {npts} grid points",
                coefficients.len()
            )));
        }
        if npts > DIVFORM_MAX_POINTS {
            return Err(Error::GridTooLarge {
                points: npts,
                max: DIVFORM_MAX_POINTS,
            });
        }
        if let Some(i) = coefficients
            .iter()
            .position(|a| !(a.re.is_finite() && a.im.is_finite()))
        {
            return Err(Error::NonFinite(i));
        }
        let min_re = coefficients
            .iter()
            .map(|a| a.re)
            .fold(f64::INFINITY, f64::min);
        if min_re <= 0.0 {
            return Err(Error::EllipticityViolation { min_re });
        }

        let l = divform_matrix(&spec, &coefficients);
        let (spectrum, vectors, inverse) = if coefficients.iter().all(|a| a.im == 0.0) {
            symmetric_eigen(&l, npts)?
        } else {
            general_eigen(&l, npts)?
        };
        let provider = DivFormProvider {
            spec,
            coefficients,
            spectrum,
            vectors,
            inverse,
        };
        provider.check_reconstruction(&l)?;
        Ok(provider)
    }

    pub fn coefficients(&self) -> &[Complex64] {
        &self.coefficients
    }

    /// Checks `V diag(z) V^{-1} x = L x` on a few fixed probe vectors.
    fn check_reconstruction(&self, l: &[Complex64]) -> Result<()> {
        let npts = self.spectrum.len();
        let scale = l.iter().map(|x| x.norm()).fold(0.0, f64::max);
        let mut worst = 0.0f64;
        for probe in 0..3 {
            let x: Vec<Complex64> = (0..npts)
                .map(|k| Complex64::from_polar(1.0, 0.7 * (k * (probe + 1)) as f64 + probe as f64))
                .collect();
            let direct = matvec(l, &x);
            let mut c = self.to_spectral(&x);
            for (ci, z) in c.iter_mut().zip(&self.spectrum) {
                *ci *= z;
            }
            let rebuilt = self.from_spectral(&c);
            let err = direct
                .iter()
                .zip(&rebuilt)
                .map(|(a, b)| (a - b).norm())
                .fold(0.0, f64::max);
            worst = worst.max(err);
        }
        if worst > RECONSTRUCTION_TOL * scale * npts as f64 {
            return Err(Error::Eigen(format!(
                "reconstruction error {worst:e} relative to max entry {scale:e}"
            )));
        }
        Ok(())
    }
}

type Factorization = (Vec<Complex64>, Vec<Complex64>, Vec<Complex64>);

fn symmetric_eigen(l: &[Complex64], npts: usize) -> Result<Factorization> {
    let m = Mat::<f64>::from_fn(npts, npts, |r, c| l[r * npts + c].re);
    let eig = m
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Eigen(format!("{e:?}")))?;
    let u = eig.U();
    let s = eig.S().column_vector();
    let spectrum = (0..npts).map(|k| Complex64::new(s[k], 0.0)).collect();
    let mut vectors = vec![Complex64::new(0.0, 0.0); npts * npts];
    let mut inverse = vec![Complex64::new(0.0, 0.0); npts * npts];
    for r in 0..npts {
        for c in 0..npts {
            vectors[r * npts + c] = Complex64::new(u[(r, c)], 0.0);
            inverse[c * npts + r] = Complex64::new(u[(r, c)], 0.0);
        }
    }
    Ok((spectrum, vectors, inverse))
}

fn general_eigen(l: &[Complex64], npts: usize) -> Result<Factorization> {
    let m = Mat::<Complex64>::from_fn(npts, npts, |r, c| l[r * npts + c]);
    let eig = m.eigen().map_err(|e| Error::Eigen(format!("{e:?}")))?;
    let u = eig.U();
    let s = eig.S().column_vector();
    let spectrum = (0..npts).map(|k| s[k]).collect();
    let inv = u.partial_piv_lu().inverse();
    let mut vectors = vec![Complex64::new(0.0, 0.0); npts * npts];
    let mut inverse = vec![Complex64::new(0.0, 0.0); npts * npts];
    for r in 0..npts {
        for c in 0..npts {
            vectors[r * npts + c] = u[(r, c)];
            inverse[r * npts + c] = inv[(r, c)];
        }
    }
    Ok((spectrum, vectors, inverse))
}

/// Divergence-form provider, `m = 2`.
pub fn divform_provider(spec: GridSpec, coefficients: Vec<Complex64>) -> Result<DivFormProvider> {
    DivFormProvider::new(spec, coefficients)
}

impl SemigroupProvider for DivFormProvider {
    fn name(&self) -> &str {
        "divform"
    }

    fn homogeneity(&self) -> u32 {
        2
    }

    fn grid_spec(&self) -> &GridSpec {
        &self.spec
    }

    fn spectrum(&self) -> &[Complex64] {
        &self.spectrum
    }

    fn to_spectral(&self, v: &[Complex64]) -> Vec<Complex64> {
        matvec(&self.inverse, v)
    }

    fn from_spectral(&self, c: &[Complex64]) -> Vec<Complex64> {
        matvec(&self.vectors, c)
    }

    fn to_spectral_adjoint(&self, v: &[Complex64]) -> Vec<Complex64> {
        matvec_adjoint(&self.vectors, v)
    }

    fn from_spectral_adjoint(&self, c: &[Complex64]) -> Vec<Complex64> {
        matvec_adjoint(&self.inverse, c)
    }
}

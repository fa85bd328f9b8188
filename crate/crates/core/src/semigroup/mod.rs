//! Analytic semigroups `e^{-tau L}` on the periodic grid.
//!
//! Every provider is diagonalized as `L = V diag(z) V^{-1}`, so functions of
//! `L` act as multipliers on spectral coordinates. In particular the fused
//! `tau L e^{-tau L}` is evaluated through `tau z e^{-tau z}` and stays
//! bounded as `tau -> 0`.

mod divform;
mod fourier;
mod offdiag;
mod sets;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::GridSpec;

pub use divform::{divform_matrix, divform_provider, DivFormProvider, DIVFORM_MAX_POINTS};
pub use fourier::{heat_provider, poisson_provider, Fourier, FourierProvider, MultiplierKind};
pub use offdiag::{
    fit_offdiag_order, geometric_ball_family, measure_family, offdiag_order_fit, offdiag_ratio,
    OffDiagSample, OrderFit, HEAT_FIT_RANGE, ORDER_CAP, ROUNDOFF_FLOOR,
};
pub use sets::{dyadic_partition, Annulus, SeparatedSetPair};

pub trait SemigroupProvider: Send + Sync {
    fn name(&self) -> &str;

    /// `m`: time scales like `distance^m`.
    fn homogeneity(&self) -> u32;

    /// Spatial grid the provider acts on; its time fields are not used.
    fn grid_spec(&self) -> &GridSpec;

    /// Eigenvalues `z_k`, indexed like spectral coordinates.
    fn spectrum(&self) -> &[Complex64];

    /// `V^{-1} v`.
    fn to_spectral(&self, v: &[Complex64]) -> Vec<Complex64>;

    /// `V c`.
    fn from_spectral(&self, c: &[Complex64]) -> Vec<Complex64>;

    /// `V^H v`.
    fn to_spectral_adjoint(&self, v: &[Complex64]) -> Vec<Complex64>;

    /// `V^{-H} c`.
    fn from_spectral_adjoint(&self, c: &[Complex64]) -> Vec<Complex64>;

    /// `f(L) v`.
    fn apply_function(
        &self,
        v: &[Complex64],
        f: &dyn Fn(Complex64) -> Complex64,
    ) -> Vec<Complex64> {
        let mut c = self.to_spectral(v);
        for (ci, &z) in c.iter_mut().zip(self.spectrum()) {
            *ci *= f(z);
        }
        self.from_spectral(&c)
    }

    /// `f(L)^H v`.
    fn apply_function_adjoint(
        &self,
        v: &[Complex64],
        f: &dyn Fn(Complex64) -> Complex64,
    ) -> Vec<Complex64> {
        let mut c = self.to_spectral_adjoint(v);
        for (ci, &z) in c.iter_mut().zip(self.spectrum()) {
            *ci *= f(z).conj();
        }
        self.from_spectral_adjoint(&c)
    }

    /// `e^{-tau L} v`; exactly `v` at `tau = 0`.
    fn apply_exp(&self, tau: f64, v: &[Complex64]) -> Vec<Complex64> {
        if tau == 0.0 {
            return v.to_vec();
        }
        self.apply_function(v, &|z| (-tau * z).exp())
    }

    fn apply_l(&self, v: &[Complex64]) -> Vec<Complex64> {
        self.apply_function(v, &|z| z)
    }

    /// `tau L e^{-tau L} v`.
    fn apply_tl_exp(&self, tau: f64, v: &[Complex64]) -> Vec<Complex64> {
        self.apply_function(v, &|z| tau * z * (-tau * z).exp())
    }

    fn apply_tl_exp_adjoint(&self, tau: f64, v: &[Complex64]) -> Vec<Complex64> {
        self.apply_function_adjoint(v, &|z| tau * z * (-tau * z).exp())
    }
}

/// Builds a provider from its configuration name.
pub fn provider_by_name(
    name: &str,
    spec: GridSpec,
    coefficients: Option<Vec<Complex64>>,
) -> Result<Box<dyn SemigroupProvider>> {
    match name {
        "heat" => Ok(Box::new(heat_provider(spec)?)),
        "poisson" => Ok(Box::new(poisson_provider(spec)?)),
        "divform" => {
            let a = coefficients.ok_or_else(|| {
                Error::InvalidParams("the divform provider needs a coefficient field".into())
            })?;
            Ok(Box::new(divform_provider(spec, a)?))
        }
        other => Err(Error::UnknownProvider(other.to_string())),
    }
}

/// Largest `||tau L e^{-tau L}||` over the given `tau`, from the spectrum.
///
/// Exact for normal operators (heat, Poisson, real divform).
pub fn analyticity_bound(provider: &dyn SemigroupProvider, taus: &[f64]) -> f64 {
    taus.iter()
        .flat_map(|&tau| {
            provider
                .spectrum()
                .iter()
                .map(move |&z| (tau * z * (-tau * z).exp()).norm())
        })
        .fold(0.0, f64::max)
}

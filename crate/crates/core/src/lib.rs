//! Weighted tent-space norms, Carleson norms, analytic semigroups on a
//! periodic grid, and the maximal regularity operator
//! `M_L f(t) = int_0^t L e^{-(t-s)L} f(s) ds`, together with probes that
//! measure the boundedness properties of `M_L` numerically.

pub mod ensemble;
pub mod error;
pub mod grid;
pub mod maxreg;
pub mod probes;
pub mod semigroup;
pub mod tentnorm;

pub use error::{Error, Result};

//! Hydrodynamics and simulation of the inhomogeneous l-TASEP: exclusion of
//! extended particles with site-dependent hopping rates.

pub mod characteristics;
pub mod error;
pub mod exact;
pub mod flux;
pub mod hydro;
pub mod infer;
pub mod pde;
pub mod profile;
pub mod rates;
pub mod simulate;
pub mod spec;

pub use error::{Error, Result};
pub use flux::{Branch, CriticalDensity};
pub use profile::DensityProfile;
pub use rates::{Interpolation, RateField, RateFunction, RateProfile};
pub use spec::{Geometry, ModelSpec};

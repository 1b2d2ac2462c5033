//! Scalar functions of the reference-point density.
//!
//! All densities are reference-point densities `rho = P(tau_k = 1)` and live
//! in `[0, 1/ell]`. The coverage density is `ell * rho`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rates::RateField;

/// Inputs this close to the ends of `[0, 1/ell]` are clamped instead of rejected.
pub const DOMAIN_TOLERANCE: f64 = 1e-12;

fn check(rho: f64, ell: u32) -> Result<f64> {
    let top = 1.0 / ell as f64;
    if !rho.is_finite() || rho < -DOMAIN_TOLERANCE || rho > top + DOMAIN_TOLERANCE {
        return Err(Error::DensityDomain { rho, ell });
    }
    Ok(rho.clamp(0.0, top))
}

/// `G(rho) = (1 - ell rho) / (1 - (ell - 1) rho)`.
pub fn g(rho: f64, ell: u32) -> Result<f64> {
    let rho = check(rho, ell)?;
    let l = ell as f64;
    Ok((1.0 - l * rho) / (1.0 - (l - 1.0) * rho))
}

/// Derivative of [`g`]: `-1 / (1 - (ell - 1) rho)^2`.
pub fn g_prime(rho: f64, ell: u32) -> Result<f64> {
    let rho = check(rho, ell)?;
    let d = 1.0 - (ell as f64 - 1.0) * rho;
    Ok(-1.0 / (d * d))
}

/// Rate-normalized flux `H(rho) = rho G(rho)`.
pub fn h(rho: f64, ell: u32) -> Result<f64> {
    Ok(check(rho, ell)? * g(rho, ell)?)
}

/// `H'(rho) = (1 - 2 ell rho + ell (ell - 1) rho^2) / (1 - (ell - 1) rho)^2`.
pub fn h_prime(rho: f64, ell: u32) -> Result<f64> {
    let rho = check(rho, ell)?;
    let l = ell as f64;
    let d = 1.0 - (l - 1.0) * rho;
    Ok((1.0 - 2.0 * l * rho + l * (l - 1.0) * rho * rho) / (d * d))
}

/// `H''(rho) = -2 / (1 - (ell - 1) rho)^3`; strictly negative, so `H` is concave.
pub fn h_second(rho: f64, ell: u32) -> Result<f64> {
    let rho = check(rho, ell)?;
    let l = ell as f64;
    let d = 1.0 - (l - 1.0) * rho;
    Ok(-2.0 / (d * d * d))
}

/// Systematic current `J(rho, x) = lambda(x) H(rho)`.
pub fn current<R: RateField + ?Sized>(rho: f64, x: f64, rates: &R, ell: u32) -> Result<f64> {
    Ok(rates.rate(x) * h(rho, ell)?)
}

/// Diffusive current `J_D(rho, x) = lambda(x) rho / (1 - (ell - 1) rho)`.
pub fn diffusive_current<R: RateField + ?Sized>(
    rho: f64,
    x: f64,
    rates: &R,
    ell: u32,
) -> Result<f64> {
    let rho = check(rho, ell)?;
    Ok(rates.rate(x) * rho / (1.0 - (ell as f64 - 1.0) * rho))
}

/// Hole current `J_h(rho_h, x) = lambda rho_h (1 - rho_h) / (1 + (ell - 1) rho_h)`
/// for the hole density `rho_h = 1 - ell rho`.
pub fn hole_current(rho_h: f64, lambda: f64, ell: u32) -> Result<f64> {
    if !(-DOMAIN_TOLERANCE..=1.0 + DOMAIN_TOLERANCE).contains(&rho_h) {
        return Err(Error::InvalidParameter(format!("hole density {rho_h} outside [0, 1]")));
    }
    let rho_h = rho_h.clamp(0.0, 1.0);
    Ok(lambda * rho_h * (1.0 - rho_h) / (1.0 + (ell as f64 - 1.0) * rho_h))
}

/// Reference-point density maximizing `H`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalDensity {
    pub rho_star: f64,
}

impl CriticalDensity {
    pub fn new(ell: u32) -> Self {
        let l = ell as f64;
        Self { rho_star: 1.0 / (l + l.sqrt()) }
    }

    /// `H(rho*) = (1 + sqrt(ell))^-2`.
    pub fn max_flux(&self, ell: u32) -> f64 {
        max_flux(ell)
    }
}

pub fn critical_density(ell: u32) -> f64 {
    CriticalDensity::new(ell).rho_star
}

pub fn max_flux(ell: u32) -> f64 {
    let s = 1.0 + (ell as f64).sqrt();
    1.0 / (s * s)
}

/// Which root of `lambda H(rho) = J` a density sits on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Lower,
    Upper,
    Indeterminate,
}

impl Branch {
    pub fn of(rho: f64, ell: u32) -> Self {
        if rho <= critical_density(ell) {
            Branch::Lower
        } else {
            Branch::Upper
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Branch::Lower => "lower",
            Branch::Upper => "upper",
            Branch::Indeterminate => "indeterminate",
        }
    }
}

/// Radicands down to this (relative to `b^2`) are treated as rounding noise.
pub const RADICAND_TOLERANCE: f64 = 1e-9;

/// Solves `H(rho) = flux` on the requested branch.
///
/// Returns `Err(radicand)` when `flux` exceeds `max_flux(ell)` beyond rounding.
pub fn inverse_h(flux: f64, ell: u32, branch: Branch) -> std::result::Result<f64, f64> {
    let l = ell as f64;
    let b = 1.0 + flux * (l - 1.0);
    let mut disc = b * b - 4.0 * l * flux;
    if disc < 0.0 {
        if disc < -RADICAND_TOLERANCE * b * b {
            return Err(disc);
        }
        disc = 0.0;
    }
    let root = disc.sqrt();
    let lower = if b + root > 0.0 { 2.0 * flux / (b + root) } else { 0.0 };
    Ok(match branch {
        Branch::Lower | Branch::Indeterminate => lower,
        Branch::Upper => {
            let upper = (b + root) / (2.0 * l);
            upper.min(1.0 / l)
        }
    })
}

/// Density on `branch` carrying current `j` where the local rate is `lambda`.
pub fn branch_density(j: f64, lambda: f64, ell: u32, branch: Branch, x: f64) -> Result<f64> {
    inverse_h(j / lambda, ell, branch).map_err(|radicand| Error::NegativeRadicand {
        radicand,
        x,
        current: j,
        lambda,
    })
}

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rates::RateProfile;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Geometry {
    Open,
    /// Periodic lattice holding a fixed number of particles.
    Ring { particles: usize },
}

/// Full parameterization of one l-TASEP instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub n_sites: usize,
    pub ell: u32,
    #[serde(default)]
    pub alpha: f64,
    #[serde(default)]
    pub beta: f64,
    pub rates: RateProfile,
    pub geometry: Geometry,
    #[serde(default)]
    pub seed: u64,
}

impl ModelSpec {
    pub fn open(ell: u32, alpha: f64, beta: f64, rates: RateProfile, seed: u64) -> Result<Self> {
        let spec = Self {
            n_sites: rates.len(),
            ell,
            alpha,
            beta,
            rates,
            geometry: Geometry::Open,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn ring(ell: u32, particles: usize, rates: RateProfile, seed: u64) -> Result<Self> {
        let spec = Self {
            n_sites: rates.len(),
            ell,
            alpha: 0.0,
            beta: 0.0,
            rates,
            geometry: Geometry::Ring { particles },
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.ell == 0 {
            return Err(Error::InvalidSpec("particle size must be at least 1".into()));
        }
        if self.n_sites < self.ell as usize {
            return Err(Error::InvalidSpec(format!(
                "lattice of {} sites cannot hold a particle of size {}",
                self.n_sites, self.ell
            )));
        }
        if self.rates.len() != self.n_sites {
            return Err(Error::InvalidSpec(format!(
                "{} site rates for {} sites",
                self.rates.len(),
                self.n_sites
            )));
        }
        match self.geometry {
            Geometry::Open => {
                if !(self.alpha.is_finite() && self.alpha > 0.0) {
                    return Err(Error::InvalidSpec(format!("entry rate {} must be positive", self.alpha)));
                }
                if !(self.beta.is_finite() && self.beta > 0.0) {
                    return Err(Error::InvalidSpec(format!("exit rate {} must be positive", self.beta)));
                }
            }
            Geometry::Ring { particles } => {
                if particles * self.ell as usize > self.n_sites {
                    return Err(Error::InvalidSpec(format!(
                        "{particles} particles of size {} do not fit on {} sites",
                        self.ell, self.n_sites
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

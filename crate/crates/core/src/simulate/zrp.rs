use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spec::{Geometry, ModelSpec};

use super::lattice::LatticeState;

/// Zero-range description of a ring: `gaps[i]` holes ahead of particle `i + 1`
/// and the site of particle 1 as anchor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ZrpState {
    pub gaps: Vec<usize>,
    pub anchor: usize,
    pub n_sites: usize,
    pub ell: u32,
}

impl ZrpState {
    /// Labels the particle at the lowest occupied site as particle 1.
    pub fn from_lattice(state: &LatticeState) -> Result<Self> {
        let Geometry::Ring { .. } = state.geometry else {
            return Err(Error::InvalidSpec("zero-range mapping needs a ring".into()));
        };
        let n = state.n_sites;
        let ell = state.ell as usize;
        let m = state.positions.len();
        let gaps = (0..m)
            .map(|i| {
                let next = if i + 1 < m { state.positions[i + 1] } else { state.positions[0] + n };
                next - state.positions[i] - ell
            })
            .collect();
        Ok(Self {
            gaps,
            anchor: state.positions.first().copied().unwrap_or(1),
            n_sites: n,
            ell: state.ell,
        })
    }

    /// Site of each particle: `k(i) = anchor + sum_{j<i} gaps[j] + ell (i - 1)`, taken cyclically.
    pub fn particle_sites(&self) -> Vec<usize> {
        let mut k = self.anchor - 1;
        let mut out = Vec::with_capacity(self.gaps.len());
        for &g in &self.gaps {
            out.push(k % self.n_sites + 1);
            k += g + self.ell as usize;
        }
        out
    }

    pub fn to_lattice(&self, spec: &ModelSpec) -> Result<LatticeState> {
        LatticeState::from_positions(spec, self.particle_sites())
    }

    pub fn holes(&self) -> usize {
        self.gaps.iter().sum()
    }
}

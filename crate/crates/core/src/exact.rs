//! Stationary distribution of small lattices by full enumeration of the
//! master equation.

use std::collections::HashMap;
use std::io::Write;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::simulate::{write_site_csv, LatticeState};
use crate::spec::{Geometry, ModelSpec};

pub const MAX_STATES: usize = 1_000_000;
/// Largest chain solved by dense LU; bigger chains use Gauss-Seidel sweeps.
pub const DENSE_LIMIT: usize = 2048;
pub const RESIDUAL_TOLERANCE: f64 = 1e-10;

const MAX_SWEEPS: usize = 200_000;

/// All admissible configurations, bit `k - 1` marking a reference point at site `k`.
#[derive(Debug, Clone)]
pub struct StateSpace {
    pub n_sites: usize,
    pub ell: u32,
    pub geometry: Geometry,
    pub states: Vec<u128>,
    index: HashMap<u128, usize>,
}

fn binomial(n: f64, k: f64) -> f64 {
    if k < 0.0 || k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k as u64).fold(1.0, |acc, i| acc * (n - i as f64) / (i as f64 + 1.0))
}

/// Number of admissible configurations of the given lattice.
pub fn expected_state_count(n: usize, ell: u32, geometry: Geometry) -> f64 {
    let (n, l) = (n as f64, ell as f64);
    match geometry {
        Geometry::Open => {
            let mut total = 0.0;
            let mut k = 0.0;
            loop {
                let free = n - (k - 1.0) * (l - 1.0);
                if k > 0.0 && free < k {
                    break;
                }
                total += if k == 0.0 { 1.0 } else { binomial(free, k) };
                k += 1.0;
            }
            total
        }
        Geometry::Ring { particles } => {
            let m = particles as f64;
            if m == 0.0 {
                1.0
            } else {
                let free = n - m * (l - 1.0);
                n / free * binomial(free, m)
            }
        }
    }
}

impl StateSpace {
    pub fn enumerate(spec: &ModelSpec) -> Result<Self> {
        spec.validate()?;
        let n = spec.n_sites;
        if n > 128 {
            return Err(Error::StateSpaceTooLarge { states: f64::INFINITY, limit: MAX_STATES });
        }
        let count = expected_state_count(n, spec.ell, spec.geometry);
        if count > MAX_STATES as f64 {
            return Err(Error::StateSpaceTooLarge { states: count, limit: MAX_STATES });
        }
        let ell = spec.ell as usize;
        let mut states = Vec::with_capacity(count as usize);
        let mut stack: Vec<(u128, usize, usize)> = vec![(0, 1, 0)];
        let target = match spec.geometry {
            Geometry::Open => None,
            Geometry::Ring { particles } => Some(particles),
        };
        // (mask, first site still free to place, particles placed)
        while let Some((mask, from, placed)) = stack.pop() {
            match target {
                None => states.push(mask),
                Some(m) if placed == m => {
                    let first = mask.trailing_zeros() as usize + 1;
                    let last = 128 - mask.leading_zeros() as usize;
                    if m < 2 || first + n >= last + ell {
                        states.push(mask);
                    }
                    continue;
                }
                Some(_) => {}
            }
            for k in (from..=n).rev() {
                stack.push((mask | 1u128 << (k - 1), k + ell, placed + 1));
            }
        }
        states.sort_unstable();
        let index = states.iter().enumerate().map(|(i, &s)| (s, i)).collect();
        Ok(Self { n_sites: n, ell: spec.ell, geometry: spec.geometry, states, index })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn index_of(&self, mask: u128) -> Option<usize> {
        self.index.get(&mask).copied()
    }

    pub fn lattice_state(&self, i: usize, spec: &ModelSpec) -> Result<LatticeState> {
        let mask = self.states[i];
        LatticeState::from_positions(spec, (1..=self.n_sites).filter(|k| mask >> (k - 1) & 1 == 1).collect())
    }

    /// Outgoing transitions `(bond, target mask, rate)`, bonds numbered as in the simulator.
    fn transitions(&self, mask: u128, spec: &ModelSpec, out: &mut Vec<(usize, u128, f64)>) {
        out.clear();
        let n = self.n_sites;
        let ell = self.ell as usize;
        let bit = |k: usize| 1u128 << (k - 1);
        let occupied = |k: usize| mask & bit(k) != 0;
        match self.geometry {
            Geometry::Open => {
                if (1..=ell).all(|k| !occupied(k)) {
                    out.push((0, mask | bit(1), spec.alpha));
                }
                for k in (1..=n).filter(|&k| occupied(k)) {
                    if k == n {
                        out.push((n, mask & !bit(n), spec.beta));
                    } else if (k + 1..=(k + ell).min(n)).all(|j| !occupied(j)) {
                        out.push((k, mask & !bit(k) | bit(k + 1), spec.rates.site(k)));
                    }
                }
            }
            Geometry::Ring { .. } => {
                let wrap = |k: usize| (k - 1) % n + 1;
                for k in (1..=n).filter(|&k| occupied(k)) {
                    if (1..=ell).all(|j| !occupied(wrap(k + j))) {
                        out.push((k, mask & !bit(k) | bit(wrap(k + 1)), spec.rates.site(k)));
                    }
                }
            }
        }
    }
}

/// Stationary law together with its state space and balance residual.
#[derive(Debug, Clone)]
pub struct Stationary {
    pub space: StateSpace,
    pub pi: Vec<f64>,
    /// `max_j |(pi Q)_j|`.
    pub residual: f64,
}

pub fn stationary_distribution(spec: &ModelSpec) -> Result<Stationary> {
    if let Geometry::Ring { particles } = spec.geometry {
        if particles > 0 && particles * spec.ell as usize == spec.n_sites {
            return Err(Error::Reducible(format!(
                "{particles} particles of size {} fill the ring of {} sites and cannot move",
                spec.ell, spec.n_sites
            )));
        }
    }
    let space = StateSpace::enumerate(spec)?;
    let s = space.len();
    let mut incoming: Vec<Vec<(usize, f64)>> = vec![Vec::new(); s];
    let mut out_rate = vec![0.0; s];
    let mut buf = Vec::new();
    for (i, &mask) in space.states.iter().enumerate() {
        space.transitions(mask, spec, &mut buf);
        for &(_, target, rate) in &buf {
            let j = space.index_of(target).expect("transition stays in the state space");
            incoming[j].push((i, rate));
            out_rate[i] += rate;
        }
    }

    let pi = if s == 1 {
        vec![1.0]
    } else if s <= DENSE_LIMIT {
        // rows of Q^T, with the last balance equation replaced by normalization
        let mut a = DMatrix::<f64>::zeros(s, s);
        for j in 0..s - 1 {
            a[(j, j)] -= out_rate[j];
            for &(i, rate) in &incoming[j] {
                a[(j, i)] += rate;
            }
        }
        for i in 0..s {
            a[(s - 1, i)] = 1.0;
        }
        let mut b = DVector::<f64>::zeros(s);
        b[s - 1] = 1.0;
        let x = a
            .lu()
            .solve(&b)
            .ok_or_else(|| Error::Solve("singular generator".into()))?;
        x.iter().map(|&p| p.max(0.0)).collect()
    } else {
        gauss_seidel(&incoming, &out_rate)?
    };
    let total: f64 = pi.iter().sum();
    let pi: Vec<f64> = pi.iter().map(|p| p / total).collect();
    let residual = balance_residual(&pi, &incoming, &out_rate);
    if residual > RESIDUAL_TOLERANCE {
        return Err(Error::Solve(format!("stationary residual {residual:e} above {RESIDUAL_TOLERANCE:e}")));
    }
    Ok(Stationary { space, pi, residual })
}

fn balance_residual(pi: &[f64], incoming: &[Vec<(usize, f64)>], out_rate: &[f64]) -> f64 {
    (0..pi.len())
        .map(|j| {
            let inflow: f64 = incoming[j].iter().map(|&(i, r)| pi[i] * r).sum();
            (inflow - pi[j] * out_rate[j]).abs()
        })
        .fold(0.0, f64::max)
}

fn gauss_seidel(incoming: &[Vec<(usize, f64)>], out_rate: &[f64]) -> Result<Vec<f64>> {
    let s = out_rate.len();
    let mut pi = vec![1.0 / s as f64; s];
    let mut residual = f64::INFINITY;
    for _ in 0..MAX_SWEEPS {
        for j in 0..s {
            let inflow: f64 = incoming[j].iter().map(|&(i, r)| pi[i] * r).sum();
            pi[j] = inflow / out_rate[j];
        }
        let total: f64 = pi.iter().sum();
        pi.iter_mut().for_each(|p| *p /= total);
        residual = balance_residual(&pi, incoming, out_rate);
        if residual < RESIDUAL_TOLERANCE * 1e-5 {
            return Ok(pi);
        }
    }
    Err(Error::NoConvergence { steps: MAX_SWEEPS, residual })
}

pub fn exact_site_densities(pi: &[f64], space: &StateSpace) -> Vec<f64> {
    let mut rho = vec![0.0; space.n_sites];
    for (&mask, &p) in space.states.iter().zip(pi) {
        for (k, r) in rho.iter_mut().enumerate() {
            if mask >> k & 1 == 1 {
                *r += p;
            }
        }
    }
    rho
}

/// Stationary currents on bonds `0..=N`, numbered as in `SimStats::bond_currents`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactCurrents {
    pub entry: f64,
    pub exit: f64,
    pub bonds: Vec<f64>,
}

/// Bond currents; fails if they disagree by more than 1e-10.
pub fn exact_current(pi: &[f64], space: &StateSpace, spec: &ModelSpec) -> Result<ExactCurrents> {
    let n = space.n_sites;
    let mut bonds = vec![0.0; n + 1];
    let mut buf = Vec::new();
    for (&mask, &p) in space.states.iter().zip(pi) {
        space.transitions(mask, spec, &mut buf);
        for &(bond, _, rate) in &buf {
            bonds[bond] += p * rate;
        }
    }
    if let Geometry::Ring { .. } = space.geometry {
        bonds[0] = bonds[n];
    }
    let lo = bonds.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = bonds.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi - lo > RESIDUAL_TOLERANCE {
        return Err(Error::Solve(format!("bond currents spread over {:e}", hi - lo)));
    }
    Ok(ExactCurrents { entry: bonds[0], exit: bonds[n], bonds })
}

/// Exact densities and bond currents in the simulator's CSV layout.
pub fn write_exact_csv<W: Write>(writer: W, densities: &[f64], currents: &ExactCurrents) -> Result<()> {
    write_site_csv(writer, densities, None, &currents.bonds[1..])
}

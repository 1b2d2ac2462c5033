use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spec::{Geometry, ModelSpec};

/// One transition of the l-TASEP.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Event {
    Entry,
    /// Particle at `site` moves one site to the right (cyclically on a ring).
    Hop { site: usize },
    Exit,
}

/// Particle reference points, sorted, 1-based.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatticeState {
    pub positions: Vec<usize>,
    pub time: OrderedTime,
    pub n_sites: usize,
    pub ell: u32,
    pub geometry: Geometry,
}

/// Simulation time; wraps `f64` so the state stays `Eq` for test comparisons.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct OrderedTime(pub f64);

impl Eq for OrderedTime {}

impl LatticeState {
    /// Empty open lattice, or a ring with particles packed from site 1.
    pub fn initial(spec: &ModelSpec) -> Self {
        let positions = match spec.geometry {
            Geometry::Open => Vec::new(),
            Geometry::Ring { particles } => {
                (0..particles).map(|i| 1 + i * spec.ell as usize).collect()
            }
        };
        Self {
            positions,
            time: OrderedTime(0.0),
            n_sites: spec.n_sites,
            ell: spec.ell,
            geometry: spec.geometry,
        }
    }

    pub fn from_positions(spec: &ModelSpec, mut positions: Vec<usize>) -> Result<Self> {
        positions.sort_unstable();
        let s = Self {
            positions,
            time: OrderedTime(0.0),
            n_sites: spec.n_sites,
            ell: spec.ell,
            geometry: spec.geometry,
        };
        s.check_invariants()?;
        Ok(s)
    }

    pub fn occupancy(&self) -> Vec<bool> {
        let mut tau = vec![false; self.n_sites];
        for &p in &self.positions {
            tau[p - 1] = true;
        }
        tau
    }

    /// Strictly increasing positions inside the lattice, at least `ell` apart
    /// (cyclically on a ring).
    pub fn check_invariants(&self) -> Result<()> {
        let ell = self.ell as usize;
        let bad = |m: String| Err(Error::InvalidSpec(m));
        if self.positions.iter().any(|&p| p == 0 || p > self.n_sites) {
            return bad(format!("position outside 1..={}", self.n_sites));
        }
        for w in self.positions.windows(2) {
            if w[1] < w[0] + ell {
                return bad(format!("reference points {} and {} closer than {ell}", w[0], w[1]));
            }
        }
        if let (Geometry::Ring { particles }, Some(&first), Some(&last)) =
            (self.geometry, self.positions.first(), self.positions.last())
        {
            if self.positions.len() != particles {
                return bad(format!("ring holds {} particles, expected {particles}", self.positions.len()));
            }
            if self.positions.len() > 1 && first + self.n_sites < last + ell {
                return bad("wraparound gap smaller than particle size".into());
            }
        }
        Ok(())
    }

    /// Every enabled event with its rate.
    pub fn enabled_events(&self, spec: &ModelSpec) -> Vec<(Event, f64)> {
        let n = self.n_sites;
        let ell = self.ell as usize;
        let mut out = Vec::new();
        match self.geometry {
            Geometry::Open => {
                if self.positions.first().is_none_or(|&p| p > ell) {
                    out.push((Event::Entry, spec.alpha));
                }
                for (i, &p) in self.positions.iter().enumerate() {
                    if p == n {
                        out.push((Event::Exit, spec.beta));
                    } else if self.positions.get(i + 1).is_none_or(|&q| q > p + ell) {
                        out.push((Event::Hop { site: p }, spec.rates.site(p)));
                    }
                }
            }
            Geometry::Ring { .. } => {
                let m = self.positions.len();
                for (i, &p) in self.positions.iter().enumerate() {
                    let gap = if m == 1 {
                        n
                    } else if i + 1 < m {
                        self.positions[i + 1] - p
                    } else {
                        self.positions[0] + n - p
                    };
                    if gap > ell {
                        out.push((Event::Hop { site: p }, spec.rates.site(p)));
                    }
                }
            }
        }
        out
    }

    pub fn apply(&mut self, event: Event) {
        match event {
            Event::Entry => self.positions.insert(0, 1),
            Event::Exit => {
                self.positions.pop();
            }
            Event::Hop { site } => {
                let i = self
                    .positions
                    .binary_search(&site)
                    .expect("hop from an occupied site");
                if site == self.n_sites {
                    self.positions.remove(i);
                    self.positions.insert(0, 1);
                } else {
                    self.positions[i] += 1;
                }
            }
        }
    }

    /// Samples the next event with the direct method and applies it.
    ///
    /// O(N) per call; the production engines use a rate tree instead.
    pub fn next_event<R: Rng>(&mut self, spec: &ModelSpec, rng: &mut R) -> Result<(Event, f64)> {
        let events = self.enabled_events(spec);
        let total: f64 = events.iter().map(|e| e.1).sum();
        if total <= 0.0 {
            return Err(Error::Absorbing);
        }
        let wait = -(1.0 - rng.random::<f64>()).ln() / total;
        let mut target = rng.random::<f64>() * total;
        let mut chosen = events[events.len() - 1].0;
        for &(e, r) in &events {
            if target < r {
                chosen = e;
                break;
            }
            target -= r;
        }
        self.apply(chosen);
        self.time.0 += wait;
        Ok((chosen, wait))
    }
}

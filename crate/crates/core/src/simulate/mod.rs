//! Exact continuous-time Monte Carlo of the l-TASEP.
//!
//! One executed event counts as one Monte Carlo step. Burn-in and sampling
//! lengths are event counts, while densities and currents are averaged over
//! simulated time.

mod lattice;
mod stats;
mod tree;
mod zrp;

pub use lattice::{Event, LatticeState, OrderedTime};
pub use stats::{write_site_csv, BatchStats, SimMetadata, SimStats};
pub use tree::RateTree;
pub use zrp::ZrpState;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spec::{Geometry, ModelSpec};
use stats::{Burn, Observer, Recorder};

pub const DEFAULT_BATCHES: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimOptions {
    pub burn_in_events: u64,
    pub sample_events: u64,
    /// Number of equal event-count batches used for standard errors.
    #[serde(default = "default_batches")]
    pub batches: usize,
}

fn default_batches() -> usize {
    DEFAULT_BATCHES
}

impl SimOptions {
    pub fn new(burn_in_events: u64, sample_events: u64) -> Self {
        Self { burn_in_events, sample_events, batches: DEFAULT_BATCHES }
    }
}

/// Seed of replica `index`: the `(index + 1)`-th output of a SplitMix64
/// generator started from `master`.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Simulates the open or periodic l-TASEP directly on the lattice.
pub fn run_tasep(spec: &ModelSpec, burn_in_events: u64, sample_events: u64) -> Result<SimStats> {
    run_tasep_with(spec, &SimOptions::new(burn_in_events, sample_events))
}

pub fn run_tasep_with(spec: &ModelSpec, options: &SimOptions) -> Result<SimStats> {
    spec.validate()?;
    match spec.geometry {
        Geometry::Open => drive(OpenEngine::new(spec), spec, options),
        Geometry::Ring { .. } => drive(RingEngine::new(spec), spec, options),
    }
}

/// Simulates a ring through its zero-range representation, reporting lattice statistics.
pub fn run_zrp(spec: &ModelSpec, burn_in_events: u64, sample_events: u64) -> Result<SimStats> {
    run_zrp_with(spec, &SimOptions::new(burn_in_events, sample_events))
}

pub fn run_zrp_with(spec: &ModelSpec, options: &SimOptions) -> Result<SimStats> {
    spec.validate()?;
    if spec.geometry == Geometry::Open {
        return Err(Error::InvalidSpec("the zero-range simulator needs a ring".into()));
    }
    drive(ZrpEngine::new(spec)?, spec, options)
}

trait Engine {
    fn total_rate(&self) -> f64;
    fn time(&self) -> f64;
    fn occupied_sites(&self) -> Vec<usize>;
    /// Executes one event; the caller guarantees a positive total rate.
    fn step<O: Observer>(&mut self, obs: &mut O);
}

fn drive<E: Engine>(mut engine: E, spec: &ModelSpec, options: &SimOptions) -> Result<SimStats> {
    if options.sample_events == 0 {
        return Err(Error::InvalidParameter("sample_events must be positive".into()));
    }
    if options.batches == 0 {
        return Err(Error::InvalidParameter("batch count must be positive".into()));
    }
    let n = spec.n_sites;
    let batches = (options.batches as u64).min(options.sample_events);
    let mut stats = SimStats {
        n_sites: n,
        ell: spec.ell,
        geometry: spec.geometry,
        seeds: vec![spec.seed],
        burn_in_events: options.burn_in_events,
        sample_events: options.sample_events,
        event_count: 0,
        elapsed_time: 0.0,
        occupancy_time_integral: vec![0.0; n],
        entry_count: 0,
        exit_count: 0,
        site_hop_counts: vec![0; n],
        batches: Vec::new(),
        absorbing: false,
    };

    if engine.total_rate() <= 0.0 {
        let width = 1.0 / batches as f64;
        let mut occ = vec![0.0; n];
        for k in engine.occupied_sites() {
            occ[k - 1] = width;
        }
        stats.batches = (0..batches)
            .map(|_| BatchStats {
                duration: width,
                occupancy_time_integral: occ.clone(),
                entries: 0,
                departures: vec![0; n],
            })
            .collect();
        stats.occupancy_time_integral = occ.iter().map(|o| o / width).collect();
        stats.elapsed_time = 1.0;
        stats.absorbing = true;
        return Ok(stats);
    }

    let mut events: u64 = 0;
    for _ in 0..options.burn_in_events {
        engine.step(&mut Burn);
        events = events.checked_add(1).ok_or(Error::CounterOverflow)?;
    }
    let start = engine.time();
    let mut rec = Recorder::new(n, start, engine.occupied_sites());
    let mut done: u64 = 0;
    for b in 1..=batches {
        let end = ((options.sample_events as u128 * b as u128) / batches as u128) as u64;
        while done < end {
            engine.step(&mut rec);
            done += 1;
            events = events.checked_add(1).ok_or(Error::CounterOverflow)?;
        }
        rec.close_batch(engine.time());
    }

    stats.event_count = events;
    stats.elapsed_time = engine.time() - start;
    for b in &rec.batches {
        stats.entry_count += b.entries;
        for k in 0..n {
            stats.occupancy_time_integral[k] += b.occupancy_time_integral[k];
            stats.site_hop_counts[k] += b.departures[k];
        }
    }
    if spec.geometry == Geometry::Open {
        stats.exit_count = stats.site_hop_counts[n - 1];
    }
    stats.batches = rec.batches;
    Ok(stats)
}

#[inline]
fn draw(rng: &mut ChaCha8Rng, total: f64) -> (f64, f64) {
    let wait = -(1.0 - rng.random::<f64>()).ln() / total;
    let target = rng.random::<f64>() * total;
    (wait, target)
}

/// Tree leaf 0 is the entrance, leaf `k` the particle at site `k` (exit when `k = N`).
struct OpenEngine {
    n: usize,
    ell: usize,
    alpha: f64,
    beta: f64,
    p: Vec<f64>,
    tau: Vec<bool>,
    tree: RateTree,
    t: f64,
    rng: ChaCha8Rng,
}

impl OpenEngine {
    fn new(spec: &ModelSpec) -> Self {
        let n = spec.n_sites;
        let mut e = Self {
            n,
            ell: spec.ell as usize,
            alpha: spec.alpha,
            beta: spec.beta,
            p: std::iter::once(0.0).chain(spec.rates.site_rates().iter().copied()).collect(),
            tau: vec![false; n + 2],
            tree: RateTree::new(n + 1),
            t: 0.0,
            rng: ChaCha8Rng::seed_from_u64(spec.seed),
        };
        e.refresh(0);
        e
    }

    fn rate(&self, slot: usize) -> f64 {
        if slot == 0 {
            return if self.tau[1..=self.ell].iter().any(|&o| o) { 0.0 } else { self.alpha };
        }
        if !self.tau[slot] {
            return 0.0;
        }
        if slot == self.n {
            return self.beta;
        }
        let reach = (slot + self.ell).min(self.n);
        if self.tau[slot + 1..=reach].iter().any(|&o| o) {
            0.0
        } else {
            self.p[slot]
        }
    }

    fn refresh(&mut self, slot: usize) {
        let r = self.rate(slot);
        self.tree.set(slot, r);
    }
}

impl Engine for OpenEngine {
    fn total_rate(&self) -> f64 {
        self.tree.total()
    }

    fn time(&self) -> f64 {
        self.t
    }

    fn occupied_sites(&self) -> Vec<usize> {
        (1..=self.n).filter(|&k| self.tau[k]).collect()
    }

    fn step<O: Observer>(&mut self, obs: &mut O) {
        let (wait, target) = draw(&mut self.rng, self.tree.total());
        self.t += wait;
        let slot = self.tree.search(target);
        let t = self.t;
        if slot == 0 {
            self.tau[1] = true;
            obs.enter();
            obs.occupy(1, t);
            self.refresh(0);
            self.refresh(1);
            return;
        }
        self.tau[slot] = false;
        obs.vacate(slot, t);
        obs.depart(slot);
        if slot < self.n {
            self.tau[slot + 1] = true;
            obs.occupy(slot + 1, t);
            self.refresh(slot + 1);
        }
        self.refresh(slot);
        if slot > self.ell {
            self.refresh(slot - self.ell);
        }
        if slot <= self.ell {
            self.refresh(0);
        }
    }
}

/// Tree leaf `k - 1` is the particle at site `k`.
struct RingEngine {
    n: usize,
    ell: usize,
    p: Vec<f64>,
    tau: Vec<bool>,
    tree: RateTree,
    t: f64,
    rng: ChaCha8Rng,
}

impl RingEngine {
    fn new(spec: &ModelSpec) -> Self {
        let n = spec.n_sites;
        let mut tau = vec![false; n + 1];
        for k in LatticeState::initial(spec).positions {
            tau[k] = true;
        }
        let mut e = Self {
            n,
            ell: spec.ell as usize,
            p: std::iter::once(0.0).chain(spec.rates.site_rates().iter().copied()).collect(),
            tau,
            tree: RateTree::new(n),
            t: 0.0,
            rng: ChaCha8Rng::seed_from_u64(spec.seed),
        };
        for k in 1..=n {
            e.refresh(k);
        }
        e
    }

    #[inline]
    fn wrap(&self, k: usize) -> usize {
        (k - 1) % self.n + 1
    }

    fn rate(&self, k: usize) -> f64 {
        if !self.tau[k] || (1..=self.ell).any(|j| self.tau[self.wrap(k + j)]) {
            0.0
        } else {
            self.p[k]
        }
    }

    fn refresh(&mut self, k: usize) {
        let r = self.rate(k);
        self.tree.set(k - 1, r);
    }
}

impl Engine for RingEngine {
    fn total_rate(&self) -> f64 {
        self.tree.total()
    }

    fn time(&self) -> f64 {
        self.t
    }

    fn occupied_sites(&self) -> Vec<usize> {
        (1..=self.n).filter(|&k| self.tau[k]).collect()
    }

    fn step<O: Observer>(&mut self, obs: &mut O) {
        let (wait, target) = draw(&mut self.rng, self.tree.total());
        self.t += wait;
        let k = self.tree.search(target) + 1;
        let next = self.wrap(k + 1);
        self.tau[k] = false;
        self.tau[next] = true;
        obs.vacate(k, self.t);
        obs.occupy(next, self.t);
        obs.depart(k);
        self.refresh(k);
        self.refresh(next);
        let behind = self.wrap(k + self.n - self.ell);
        self.refresh(behind);
    }
}

/// Leaf `i` is zero-range site `i`, holding the holes ahead of particle `i + 1`.
struct ZrpEngine {
    n: usize,
    p: Vec<f64>,
    state: ZrpState,
    sites: Vec<usize>,
    tree: RateTree,
    t: f64,
    rng: ChaCha8Rng,
}

impl ZrpEngine {
    fn new(spec: &ModelSpec) -> Result<Self> {
        let state = ZrpState::from_lattice(&LatticeState::initial(spec))?;
        let sites = state.particle_sites();
        let m = sites.len();
        let mut e = Self {
            n: spec.n_sites,
            p: std::iter::once(0.0).chain(spec.rates.site_rates().iter().copied()).collect(),
            state,
            sites,
            tree: RateTree::new(m),
            t: 0.0,
            rng: ChaCha8Rng::seed_from_u64(spec.seed),
        };
        for i in 0..m {
            e.refresh(i);
        }
        Ok(e)
    }

    fn refresh(&mut self, i: usize) {
        let r = if self.state.gaps[i] > 0 { self.p[self.sites[i]] } else { 0.0 };
        self.tree.set(i, r);
    }
}

impl Engine for ZrpEngine {
    fn total_rate(&self) -> f64 {
        self.tree.total()
    }

    fn time(&self) -> f64 {
        self.t
    }

    fn occupied_sites(&self) -> Vec<usize> {
        self.sites.clone()
    }

    fn step<O: Observer>(&mut self, obs: &mut O) {
        let (wait, target) = draw(&mut self.rng, self.tree.total());
        self.t += wait;
        let m = self.sites.len();
        let i = self.tree.search(target);
        let behind = (i + m - 1) % m;
        self.state.gaps[i] -= 1;
        self.state.gaps[behind] += 1;
        let from = self.sites[i];
        let to = from % self.n + 1;
        self.sites[i] = to;
        if i == 0 {
            self.state.anchor = to;
        }
        obs.vacate(from, self.t);
        obs.occupy(to, self.t);
        obs.depart(from);
        self.refresh(i);
        self.refresh(behind);
    }
}

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::profile::DensityProfile;
use crate::spec::{Geometry, ModelSpec};

/// Accumulated statistics of one event-counted batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchStats {
    pub duration: f64,
    pub occupancy_time_integral: Vec<f64>,
    pub entries: u64,
    pub departures: Vec<u64>,
}

/// Time-averaged estimators collected after burn-in.
///
/// `site_hop_counts[k - 1]` counts departures from site `k`: hops to the next
/// site, the exit move at site `N` of an open lattice, or the wraparound hop
/// from `N` to `1` on a ring. Bonds are numbered so that bond `k` leaves site
/// `k`; bond `0` is the entrance of an open lattice and, on a ring, the same
/// wraparound bond as bond `N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimStats {
    pub n_sites: usize,
    pub ell: u32,
    pub geometry: Geometry,
    pub seeds: Vec<u64>,
    pub burn_in_events: u64,
    pub sample_events: u64,
    pub event_count: u64,
    pub elapsed_time: f64,
    pub occupancy_time_integral: Vec<f64>,
    pub entry_count: u64,
    pub exit_count: u64,
    pub site_hop_counts: Vec<u64>,
    pub batches: Vec<BatchStats>,
    /// The initial configuration admits no move. Its frozen occupancy is then
    /// reported with unit weight and every current is zero.
    pub absorbing: bool,
}

/// Run description written next to the CSV output.
#[derive(Debug, Clone, Serialize)]
pub struct SimMetadata<'a> {
    pub spec: &'a ModelSpec,
    pub seeds: &'a [u64],
    pub burn_in_events: u64,
    pub sample_events: u64,
    pub event_count: u64,
    pub elapsed_time: f64,
    pub batches: usize,
    pub entry_current: f64,
    pub exit_current: f64,
    pub absorbing: bool,
}

fn mean_and_stderr(values: impl ExactSizeIterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.clone().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, f64::NAN);
    }
    let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

impl SimStats {
    pub fn density(&self) -> Vec<f64> {
        self.occupancy_time_integral.iter().map(|o| o / self.elapsed_time).collect()
    }

    /// Batch-means standard error of each site density.
    pub fn density_stderr(&self) -> Vec<f64> {
        (0..self.n_sites)
            .map(|k| {
                mean_and_stderr(self.batches.iter().map(|b| b.occupancy_time_integral[k] / b.duration)).1
            })
            .collect()
    }

    /// Currents on bonds `0..=N`.
    pub fn bond_currents(&self) -> Vec<f64> {
        let t = self.elapsed_time;
        let mut out = Vec::with_capacity(self.n_sites + 1);
        out.push(match self.geometry {
            Geometry::Open => self.entry_count as f64 / t,
            Geometry::Ring { .. } => self.site_hop_counts[self.n_sites - 1] as f64 / t,
        });
        out.extend(self.site_hop_counts.iter().map(|&c| c as f64 / t));
        out
    }

    /// Batch-means standard error of each bond current, same indexing as [`Self::bond_currents`].
    pub fn bond_current_stderr(&self) -> Vec<f64> {
        (0..=self.n_sites)
            .map(|bond| {
                mean_and_stderr(self.batches.iter().map(|b| {
                    let count = match (bond, self.geometry) {
                        (0, Geometry::Open) => b.entries,
                        (0, Geometry::Ring { .. }) => b.departures[self.n_sites - 1],
                        (k, _) => b.departures[k - 1],
                    };
                    count as f64 / b.duration
                }))
                .1
            })
            .collect()
    }

    pub fn profile(&self) -> Result<DensityProfile> {
        DensityProfile::from_sites(self.density())?.with_stderr(self.density_stderr())
    }

    /// Pools replicas of the same model run with different seeds.
    pub fn merge(&mut self, other: &SimStats) -> Result<()> {
        if self.n_sites != other.n_sites || self.ell != other.ell || self.geometry != other.geometry {
            return Err(Error::InvalidParameter("cannot merge statistics of different models".into()));
        }
        let add = |a: u64, b: u64| a.checked_add(b).ok_or(Error::CounterOverflow);
        self.seeds.extend_from_slice(&other.seeds);
        self.burn_in_events = add(self.burn_in_events, other.burn_in_events)?;
        self.sample_events = add(self.sample_events, other.sample_events)?;
        self.event_count = add(self.event_count, other.event_count)?;
        self.entry_count = add(self.entry_count, other.entry_count)?;
        self.exit_count = add(self.exit_count, other.exit_count)?;
        for (a, b) in self.site_hop_counts.iter_mut().zip(&other.site_hop_counts) {
            *a = add(*a, *b)?;
        }
        for (a, b) in self.occupancy_time_integral.iter_mut().zip(&other.occupancy_time_integral) {
            *a += b;
        }
        self.elapsed_time += other.elapsed_time;
        self.batches.extend(other.batches.iter().cloned());
        self.absorbing &= other.absorbing;
        Ok(())
    }

    pub fn metadata<'a>(&'a self, spec: &'a ModelSpec) -> SimMetadata<'a> {
        let currents = self.bond_currents();
        SimMetadata {
            spec,
            seeds: &self.seeds,
            burn_in_events: self.burn_in_events,
            sample_events: self.sample_events,
            event_count: self.event_count,
            elapsed_time: self.elapsed_time,
            batches: self.batches.len(),
            entry_current: currents[0],
            exit_current: currents[self.n_sites],
            absorbing: self.absorbing,
        }
    }

    /// Writes `site,density,density_stderr,bond_current` rows.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        write_site_csv(writer, &self.density(), Some(&self.density_stderr()), &self.bond_currents()[1..])
    }
}

/// Shared per-site CSV layout for simulated and exact results.
pub fn write_site_csv<W: Write>(
    writer: W,
    density: &[f64],
    stderr: Option<&[f64]>,
    bond_current: &[f64],
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["site", "density", "density_stderr", "bond_current"])?;
    for (k, rho) in density.iter().enumerate() {
        let se = stderr.map_or(0.0, |s| s[k]);
        w.write_record([
            (k + 1).to_string(),
            rho.to_string(),
            se.to_string(),
            bond_current[k].to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Receives occupancy changes and moves from an engine.
pub(crate) trait Observer {
    fn occupy(&mut self, site: usize, t: f64);
    fn vacate(&mut self, site: usize, t: f64);
    fn enter(&mut self);
    fn depart(&mut self, site: usize);
}

pub(crate) struct Burn;

impl Observer for Burn {
    #[inline]
    fn occupy(&mut self, _: usize, _: f64) {}
    #[inline]
    fn vacate(&mut self, _: usize, _: f64) {}
    #[inline]
    fn enter(&mut self) {}
    #[inline]
    fn depart(&mut self, _: usize) {}
}

pub(crate) struct Recorder {
    occupied: Vec<bool>,
    since: Vec<f64>,
    occupancy: Vec<f64>,
    departures: Vec<u64>,
    entries: u64,
    batch_start: f64,
    pub(crate) batches: Vec<BatchStats>,
}

impl Recorder {
    /// Starts sampling at time `t` from the given 1-based occupied sites.
    pub(crate) fn new(n: usize, t: f64, occupied_sites: impl IntoIterator<Item = usize>) -> Self {
        let mut occupied = vec![false; n + 1];
        for k in occupied_sites {
            occupied[k] = true;
        }
        Self {
            occupied,
            since: vec![t; n + 1],
            occupancy: vec![0.0; n + 1],
            departures: vec![0; n + 1],
            entries: 0,
            batch_start: t,
            batches: Vec::new(),
        }
    }

    pub(crate) fn close_batch(&mut self, t: f64) {
        for k in 1..self.occupied.len() {
            if self.occupied[k] {
                self.occupancy[k] += t - self.since[k];
                self.since[k] = t;
            }
        }
        let n = self.occupied.len();
        self.batches.push(BatchStats {
            duration: t - self.batch_start,
            occupancy_time_integral: self.occupancy[1..].to_vec(),
            entries: self.entries,
            departures: self.departures[1..].to_vec(),
        });
        self.occupancy = vec![0.0; n];
        self.departures = vec![0; n];
        self.entries = 0;
        self.batch_start = t;
    }
}

impl Observer for Recorder {
    #[inline]
    fn occupy(&mut self, site: usize, t: f64) {
        self.occupied[site] = true;
        self.since[site] = t;
    }
    #[inline]
    fn vacate(&mut self, site: usize, t: f64) {
        self.occupied[site] = false;
        self.occupancy[site] += t - self.since[site];
    }
    #[inline]
    fn enter(&mut self) {
        self.entries += 1;
    }
    #[inline]
    fn depart(&mut self, site: usize) {
        self.departures[site] += 1;
    }
}

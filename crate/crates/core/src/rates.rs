//! Hopping-rate profiles on `[0, 1]`.
//!
//! A lattice of `N` sites is embedded so that site `k` (1-based) sits at
//! `x_k = (k - 1) / (N - 1)`; the first and last sites are the lattice ends.
//! [`RateProfile`] holds the discrete site rates and interpolates between
//! them, [`RateFunction`] is a closed-form smooth rate used to generate
//! profiles and to drive the characteristic integrator.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance under which two rate values count as the same global minimum.
pub const MINIMUM_TIE_TOLERANCE: f64 = 1e-9;

/// Direction used to pick a one-sided derivative at interpolation kinks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

/// Global minimum of a rate field: its value and the closed intervals where it is attained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinimumSet {
    pub value: f64,
    pub intervals: Vec<(f64, f64)>,
}

impl MinimumSet {
    /// Representative location of each global minimum (interval midpoints).
    pub fn locations(&self) -> Vec<f64> {
        self.intervals.iter().map(|(a, b)| 0.5 * (a + b)).collect()
    }

    pub fn is_multiple(&self) -> bool {
        self.intervals.len() > 1
    }

    pub fn first(&self) -> (f64, f64) {
        self.intervals[0]
    }

    pub fn last(&self) -> (f64, f64) {
        *self.intervals.last().expect("minimum set is never empty")
    }
}

/// Anything that maps `x in [0, 1]` to a positive hopping rate.
pub trait RateField {
    fn rate(&self, x: f64) -> f64;

    /// `lambda'(x)`; at kinks the one-sided derivative from `side`.
    fn slope(&self, x: f64, side: Side) -> f64;

    fn minimum(&self) -> MinimumSet;

    fn lambda0(&self) -> f64 {
        self.rate(0.0)
    }

    fn lambda1(&self) -> f64 {
        self.rate(1.0)
    }

    fn lambda_min(&self) -> f64 {
        self.minimum().value
    }

    /// Lattice spacing, when the field comes from a lattice.
    fn spacing(&self) -> Option<f64> {
        None
    }
}

impl<T: RateField + ?Sized> RateField for &T {
    fn rate(&self, x: f64) -> f64 {
        (**self).rate(x)
    }
    fn slope(&self, x: f64, side: Side) -> f64 {
        (**self).slope(x, side)
    }
    fn minimum(&self) -> MinimumSet {
        (**self).minimum()
    }
    fn spacing(&self) -> Option<f64> {
        (**self).spacing()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    #[default]
    PiecewiseLinear,
    PiecewiseConstant,
}

/// Discrete site rates `p_1..p_N` with an interpolation rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RateProfileRepr", into = "RateProfileRepr")]
pub struct RateProfile {
    site_rates: Vec<f64>,
    interpolation: Interpolation,
}

#[derive(Serialize, Deserialize)]
struct RateProfileRepr {
    rates: Vec<f64>,
    #[serde(default)]
    interpolation: Interpolation,
}

impl TryFrom<RateProfileRepr> for RateProfile {
    type Error = Error;
    fn try_from(r: RateProfileRepr) -> Result<Self> {
        RateProfile::new(r.rates, r.interpolation)
    }
}

impl From<RateProfile> for RateProfileRepr {
    fn from(p: RateProfile) -> Self {
        RateProfileRepr { rates: p.site_rates, interpolation: p.interpolation }
    }
}

#[derive(Serialize, Deserialize)]
struct CsvRow {
    site: usize,
    rate: f64,
}

impl RateProfile {
    pub fn new(site_rates: Vec<f64>, interpolation: Interpolation) -> Result<Self> {
        if site_rates.is_empty() {
            return Err(Error::InvalidRates("empty rate list".into()));
        }
        if let Some((k, p)) = site_rates
            .iter()
            .enumerate()
            .find(|(_, p)| !(p.is_finite() && **p > 0.0))
        {
            return Err(Error::InvalidRates(format!("site {} has nonpositive rate {p}", k + 1)));
        }
        Ok(Self { site_rates, interpolation })
    }

    pub fn constant(n: usize, value: f64) -> Result<Self> {
        Self::new(vec![value; n], Interpolation::PiecewiseLinear)
    }

    pub fn len(&self) -> usize {
        self.site_rates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.site_rates.is_empty()
    }

    pub fn site_rates(&self) -> &[f64] {
        &self.site_rates
    }

    /// Rate of site `k` (1-based).
    pub fn site(&self, k: usize) -> f64 {
        self.site_rates[k - 1]
    }

    pub fn interpolation(&self) -> Interpolation {
        self.interpolation
    }

    /// Position of site `k` (1-based) on `[0, 1]`.
    pub fn position(&self, k: usize) -> f64 {
        site_position(k, self.len())
    }

    pub fn positions(&self) -> Vec<f64> {
        (1..=self.len()).map(|k| self.position(k)).collect()
    }

    /// Multiplies every rate by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.site_rates.iter().map(|p| p * factor).collect(), self.interpolation)
    }

    /// Fractional site coordinate `t = x (N - 1)`, snapped onto integers within rounding.
    fn coordinate(&self, x: f64) -> f64 {
        let t = x.clamp(0.0, 1.0) * (self.len() - 1) as f64;
        let r = t.round();
        if (t - r).abs() < 1e-9 {
            r
        } else {
            t
        }
    }

    pub fn from_csv_reader<R: Read>(reader: R, interpolation: Interpolation) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut rows: Vec<CsvRow> = rdr.deserialize().collect::<std::result::Result<_, _>>()?;
        rows.sort_by_key(|r| r.site);
        for (i, r) in rows.iter().enumerate() {
            if r.site != i + 1 {
                return Err(Error::InvalidRates(format!(
                    "site indices must be 1..N without gaps; found {} at row {}",
                    r.site,
                    i + 1
                )));
            }
        }
        Self::new(rows.into_iter().map(|r| r.rate).collect(), interpolation)
    }

    pub fn from_csv_path(path: impl AsRef<Path>, interpolation: Interpolation) -> Result<Self> {
        Self::from_csv_reader(std::fs::File::open(path)?, interpolation)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for (i, &rate) in self.site_rates.iter().enumerate() {
            w.serialize(CsvRow { site: i + 1, rate })?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Position of site `k` (1-based) on a lattice of `n` sites.
pub fn site_position(k: usize, n: usize) -> f64 {
    if n <= 1 {
        0.0
    } else {
        (k - 1) as f64 / (n - 1) as f64
    }
}

impl RateField for RateProfile {
    fn rate(&self, x: f64) -> f64 {
        let n = self.len();
        if n == 1 {
            return self.site_rates[0];
        }
        let t = self.coordinate(x);
        match self.interpolation {
            Interpolation::PiecewiseConstant => self.site_rates[t.round() as usize],
            Interpolation::PiecewiseLinear => {
                if t.fract() == 0.0 {
                    return self.site_rates[t as usize];
                }
                let i = (t.floor() as usize).min(n - 2);
                let frac = t - i as f64;
                let (a, b) = (self.site_rates[i], self.site_rates[i + 1]);
                a + frac * (b - a)
            }
        }
    }

    fn slope(&self, x: f64, side: Side) -> f64 {
        let n = self.len();
        if n == 1 || self.interpolation == Interpolation::PiecewiseConstant {
            return 0.0;
        }
        let t = self.coordinate(x);
        let mut i = t.floor() as usize;
        if t.fract() == 0.0 && side == Side::Left && i > 0 {
            i -= 1;
        }
        let i = i.min(n - 2);
        (self.site_rates[i + 1] - self.site_rates[i]) * (n - 1) as f64
    }

    fn minimum(&self) -> MinimumSet {
        let value = self.site_rates.iter().copied().fold(f64::INFINITY, f64::min);
        let tol = MINIMUM_TIE_TOLERANCE * value;
        let mut intervals: Vec<(f64, f64)> = Vec::new();
        let mut run: Option<(usize, usize)> = None;
        for (i, &p) in self.site_rates.iter().enumerate() {
            if p - value <= tol {
                run = Some(match run {
                    Some((start, _)) => (start, i),
                    None => (i, i),
                });
            } else if let Some((a, b)) = run.take() {
                intervals.push((self.position(a + 1), self.position(b + 1)));
            }
        }
        if let Some((a, b)) = run {
            intervals.push((self.position(a + 1), self.position(b + 1)));
        }
        MinimumSet { value, intervals }
    }

    fn spacing(&self) -> Option<f64> {
        Some(if self.len() > 1 { 1.0 / (self.len() - 1) as f64 } else { 1.0 })
    }
}

/// One Gaussian dip `depth * exp(-((x - center) / width)^2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dip {
    pub center: f64,
    pub width: f64,
    pub depth: f64,
}

/// Closed-form smooth rate functions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RateFunction {
    Constant { value: f64 },
    /// `lambda(x) = slope (x - 1) + 1`.
    Linear { slope: f64 },
    /// `lambda(x) = 1 - depth * eta((x - center) / width)` with the standard
    /// mollifier `eta(u) = exp(1 - 1 / (1 - u^2))` on `|u| < 1`, normalized to `eta(0) = 1`.
    Bump { center: f64, width: f64, depth: f64 },
    /// Two mollifier bumps of equal depth, hence two equal global minima.
    TwoBump { centers: [f64; 2], width: f64, depth: f64 },
    /// `lambda(x) = base + slope x - sum of Gaussian dips`.
    Dips { base: f64, slope: f64, dips: Vec<Dip> },
}

fn mollifier(u: f64) -> (f64, f64) {
    if u.abs() >= 1.0 {
        return (0.0, 0.0);
    }
    let q = 1.0 - u * u;
    let e = (1.0 - 1.0 / q).exp();
    (e, e * (-2.0 * u / (q * q)))
}

impl RateFunction {
    /// Value and derivative at `x`.
    pub fn evaluate(&self, x: f64) -> (f64, f64) {
        match self {
            RateFunction::Constant { value } => (*value, 0.0),
            RateFunction::Linear { slope } => (slope * (x - 1.0) + 1.0, *slope),
            RateFunction::Bump { center, width, depth } => {
                let (e, de) = mollifier((x - center) / width);
                (1.0 - depth * e, -depth * de / width)
            }
            RateFunction::TwoBump { centers, width, depth } => {
                let (e1, d1) = mollifier((x - centers[0]) / width);
                let (e2, d2) = mollifier((x - centers[1]) / width);
                (1.0 - depth * (e1 + e2), -depth * (d1 + d2) / width)
            }
            RateFunction::Dips { base, slope, dips } => {
                let mut v = base + slope * x;
                let mut d = *slope;
                for dip in dips {
                    let u = (x - dip.center) / dip.width;
                    let e = dip.depth * (-u * u).exp();
                    v -= e;
                    d += e * 2.0 * u / dip.width;
                }
                (v, d)
            }
        }
    }

    /// Samples the function on an `n`-site lattice.
    pub fn sample(&self, n: usize, interpolation: Interpolation) -> Result<RateProfile> {
        if n == 0 {
            return Err(Error::InvalidRates("cannot sample zero sites".into()));
        }
        RateProfile::new(
            (1..=n).map(|k| self.rate(site_position(k, n))).collect(),
            interpolation,
        )
    }

    /// Rejects functions that are not strictly positive on `[0, 1]`.
    pub fn validate(&self) -> Result<()> {
        let low = (0..=10_000)
            .map(|i| self.rate(i as f64 / 10_000.0))
            .fold(f64::INFINITY, f64::min);
        if !(low.is_finite() && low > 0.0) {
            return Err(Error::InvalidRates(format!("rate function reaches {low} on [0, 1]")));
        }
        Ok(())
    }
}

fn golden_minimum(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if (b - a) < 1e-14 {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    let candidates = [(x, f(x)), (c, fc), (d, fd)];
    candidates.into_iter().fold((x, f64::INFINITY), |best, cand| if cand.1 < best.1 { cand } else { best })
}

impl RateField for RateFunction {
    fn rate(&self, x: f64) -> f64 {
        self.evaluate(x).0
    }

    fn slope(&self, x: f64, _side: Side) -> f64 {
        self.evaluate(x).1
    }

    fn minimum(&self) -> MinimumSet {
        match self {
            RateFunction::Constant { value } => {
                return MinimumSet { value: *value, intervals: vec![(0.0, 1.0)] };
            }
            RateFunction::Linear { slope } => {
                let x = if *slope > 0.0 { 0.0 } else { 1.0 };
                if *slope == 0.0 {
                    return MinimumSet { value: 1.0, intervals: vec![(0.0, 1.0)] };
                }
                return MinimumSet { value: self.rate(x), intervals: vec![(x, x)] };
            }
            _ => {}
        }
        const SAMPLES: usize = 4000;
        let xs: Vec<f64> = (0..=SAMPLES).map(|i| i as f64 / SAMPLES as f64).collect();
        let vals: Vec<f64> = xs.iter().map(|&x| self.rate(x)).collect();
        let coarse = vals.iter().copied().fold(f64::INFINITY, f64::min);
        let mut found: Vec<(f64, f64)> = Vec::new();
        for i in 0..=SAMPLES {
            let left = if i == 0 { f64::INFINITY } else { vals[i - 1] };
            let right = if i == SAMPLES { f64::INFINITY } else { vals[i + 1] };
            let v = vals[i];
            if v <= left && v <= right && v - coarse <= 1e-3 * coarse.abs() {
                let a = xs[i.saturating_sub(1)];
                let b = xs[(i + 1).min(SAMPLES)];
                found.push(golden_minimum(|x| self.rate(x), a, b));
            }
        }
        let value = found.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
        let tol = MINIMUM_TIE_TOLERANCE * value;
        let mut locs: Vec<f64> = found
            .into_iter()
            .filter(|(_, v)| v - value <= tol)
            .map(|(x, _)| x)
            .collect();
        locs.sort_by(f64::total_cmp);
        locs.dedup_by(|a, b| (*a - *b).abs() < 1e-6);
        MinimumSet { value, intervals: locs.into_iter().map(|x| (x, x)).collect() }
    }
}

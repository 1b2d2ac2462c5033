use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rates::site_position;

/// Densities on a grid of positions in `[0, 1]`, with optional standard errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityProfile {
    pub x: Vec<f64>,
    pub rho: Vec<f64>,
    pub stderr: Option<Vec<f64>>,
}

#[derive(Deserialize)]
struct SiteRow {
    site: usize,
    density: f64,
    #[serde(default)]
    density_stderr: Option<f64>,
}

impl DensityProfile {
    pub fn new(x: Vec<f64>, rho: Vec<f64>) -> Result<Self> {
        if x.len() != rho.len() || x.is_empty() {
            return Err(Error::InvalidParameter(format!(
                "profile needs matching nonempty columns, got {} positions and {} densities",
                x.len(),
                rho.len()
            )));
        }
        if x.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter("profile positions must increase".into()));
        }
        Ok(Self { x, rho, stderr: None })
    }

    /// Site-indexed densities, placed at the lattice positions `(k - 1) / (N - 1)`.
    pub fn from_sites(rho: Vec<f64>) -> Result<Self> {
        let n = rho.len();
        Self::new((1..=n).map(|k| site_position(k, n)).collect(), rho)
    }

    pub fn with_stderr(mut self, stderr: Vec<f64>) -> Result<Self> {
        if stderr.len() != self.rho.len() {
            return Err(Error::InvalidParameter("stderr column length mismatch".into()));
        }
        self.stderr = Some(stderr);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.rho.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rho.is_empty()
    }

    /// Reads a `(site, density[, density_stderr])` CSV; extra columns are ignored.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut rows: Vec<SiteRow> = rdr.deserialize().collect::<std::result::Result<_, _>>()?;
        rows.sort_by_key(|r| r.site);
        if rows.iter().enumerate().any(|(i, r)| r.site != i + 1) {
            return Err(Error::InvalidParameter("site column must run 1..N without gaps".into()));
        }
        let stderr: Option<Vec<f64>> = rows.iter().map(|r| r.density_stderr).collect();
        let profile = Self::from_sites(rows.iter().map(|r| r.density).collect())?;
        match stderr {
            Some(se) => profile.with_stderr(se),
            None => Ok(profile),
        }
    }

    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_csv_reader(std::fs::File::open(path)?)
    }

    /// Centered moving average with an odd window, shrinking near the ends.
    pub fn smoothed(&self, window: usize) -> Result<Self> {
        if window % 2 == 0 {
            return Err(Error::InvalidParameter(format!("smoothing window {window} must be odd")));
        }
        let half = window / 2;
        let n = self.len();
        let rho = (0..n)
            .map(|i| {
                let r = half.min(i).min(n - 1 - i);
                let slice = &self.rho[i - r..=i + r];
                slice.iter().sum::<f64>() / slice.len() as f64
            })
            .collect();
        Ok(Self { x: self.x.clone(), rho, stderr: None })
    }

    /// Average over `width` consecutive points around each point, kept inside the grid.
    ///
    /// With `width = l` this removes the period-l oscillations that packed
    /// particles of size `l` imprint on site densities.
    pub fn block_averaged(&self, width: usize) -> Result<Self> {
        if width == 0 || width > self.len() {
            return Err(Error::InvalidParameter(format!(
                "block width {width} must lie in 1..={}",
                self.len()
            )));
        }
        let n = self.len();
        let rho = (0..n)
            .map(|i| {
                let lo = i.saturating_sub(width / 2).min(n - width);
                self.rho[lo..lo + width].iter().sum::<f64>() / width as f64
            })
            .collect();
        Ok(Self { x: self.x.clone(), rho, stderr: None })
    }

    /// Mean absolute difference against `other` over the positions in `[lo, hi]`.
    pub fn mae_against(&self, other: &[f64], lo: f64, hi: f64) -> f64 {
        let (sum, count) = self
            .x
            .iter()
            .zip(self.rho.iter().zip(other))
            .filter(|(x, _)| **x >= lo && **x <= hi)
            .fold((0.0, 0usize), |(s, c), (_, (a, b))| (s + (a - b).abs(), c + 1));
        if count == 0 {
            f64::NAN
        } else {
            sum / count as f64
        }
    }
}

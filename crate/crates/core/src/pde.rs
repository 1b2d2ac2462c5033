//! Finite-volume relaxation of `rho_t + (lambda H(rho))_x = -(a/2) (lambda G(rho))_xx`
//! with a Godunov flux, and its steady states.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flux::{critical_density, g, h, inverse_h, max_flux, Branch};
use crate::hydro::{classify_phase, Discontinuity, Phase, StationaryProfile};
use crate::rates::RateField;
use crate::spec::{Geometry, ModelSpec};

pub const DEFAULT_CFL: f64 = 0.9;

/// Cell-averaged densities on `m` equal cells of `[0, 1]` with pinned ghost cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdeGrid {
    pub ell: u32,
    pub rho: Vec<f64>,
    /// Rates at the cell centres `(i + 1/2) / m`.
    pub lambda: Vec<f64>,
    /// Ghost density left of the first cell.
    pub left: f64,
    /// Ghost density right of the last cell.
    pub right: f64,
    /// Coefficient `a` of the diffusive correction, when enabled.
    pub viscosity: Option<f64>,
    pub cfl: f64,
    pub time: f64,
    lambda_left: f64,
    lambda_right: f64,
}

impl PdeGrid {
    /// An empty lattice with ghost densities `left` and `right`.
    pub fn new<R: RateField + ?Sized>(rates: &R, ell: u32, m: usize, left: f64, right: f64) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidParameter("grid needs at least one cell".into()));
        }
        if ell == 0 {
            return Err(Error::InvalidParameter("ell must be at least 1".into()));
        }
        let top = 1.0 / ell as f64;
        for v in [left, right] {
            if !(0.0..=top).contains(&v) {
                return Err(Error::DensityDomain { rho: v, ell });
            }
        }
        let lambda: Vec<f64> = (0..m).map(|i| rates.rate((i as f64 + 0.5) / m as f64)).collect();
        if lambda.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
            return Err(Error::InvalidParameter("rates must be positive and finite".into()));
        }
        Ok(Self {
            ell,
            rho: vec![0.0; m],
            lambda,
            left,
            right,
            viscosity: None,
            cfl: DEFAULT_CFL,
            time: 0.0,
            lambda_left: rates.rate(0.0),
            lambda_right: rates.rate(1.0),
        })
    }

    pub fn with_initial(mut self, rho: Vec<f64>) -> Result<Self> {
        if rho.len() != self.rho.len() {
            return Err(Error::InvalidParameter(format!(
                "initial data has {} cells, grid has {}",
                rho.len(),
                self.rho.len()
            )));
        }
        let top = 1.0 / self.ell as f64;
        if let Some(&bad) = rho.iter().find(|r| !(0.0..=top).contains(*r)) {
            return Err(Error::DensityDomain { rho: bad, ell: self.ell });
        }
        self.rho = rho;
        Ok(self)
    }

    pub fn with_viscosity(mut self, a: Option<f64>) -> Self {
        self.viscosity = a;
        self
    }

    pub fn with_cfl(mut self, cfl: f64) -> Result<Self> {
        if !(cfl > 0.0 && cfl <= 1.0) {
            return Err(Error::InvalidParameter(format!("CFL number {cfl} outside (0, 1]")));
        }
        self.cfl = cfl;
        Ok(self)
    }

    pub fn m(&self) -> usize {
        self.rho.len()
    }

    pub fn dx(&self) -> f64 {
        1.0 / self.m() as f64
    }

    pub fn centres(&self) -> Vec<f64> {
        let m = self.m() as f64;
        (0..self.m()).map(|i| (i as f64 + 0.5) / m).collect()
    }

    fn lambda_max(&self) -> f64 {
        self.lambda.iter().copied().fold(self.lambda_left.max(self.lambda_right), f64::max)
    }

    /// Time step from the CFL bound on `max |lambda H'| = lambda_max max(1, ell)`
    /// and, with viscosity, on the diffusion number.
    pub fn dt(&self) -> f64 {
        let dx = self.dx();
        let l = self.ell as f64;
        let lmax = self.lambda_max();
        let mut rate = lmax * l.max(1.0) / dx;
        if let Some(a) = self.viscosity {
            // |d(lambda G)/drho| <= lambda_max ell^2
            rate += 2.0 * 0.5 * a * lmax * l * l / (dx * dx);
        }
        self.cfl / rate
    }

    /// Fluxes through the `m + 1` cell interfaces, boundaries included.
    pub fn interface_fluxes(&self) -> Result<Vec<f64>> {
        let m = self.m();
        let ell = self.ell;
        let star = critical_density(ell);
        let hmax = max_flux(ell);
        let state = |i: isize| -> (f64, f64) {
            if i < 0 {
                (self.left, self.lambda_left)
            } else if i as usize >= m {
                (self.right, self.lambda_right)
            } else {
                (self.rho[i as usize], self.lambda[i as usize])
            }
        };
        let mut out = Vec::with_capacity(m + 1);
        for k in 0..=m as isize {
            let (rl, ll) = state(k - 1);
            let (rr, lr) = state(k);
            let demand = if rl < star { ll * h(rl, ell)? } else { ll * hmax };
            let supply = if rr > star { lr * h(rr, ell)? } else { lr * hmax };
            let mut f = demand.min(supply);
            if let Some(a) = self.viscosity {
                f += 0.5 * a * (lr * g(rr, ell)? - ll * g(rl, ell)?) / self.dx();
            }
            out.push(f);
        }
        Ok(out)
    }

    /// Advances one time step and returns `max |delta rho|`.
    pub fn step(&mut self) -> Result<f64> {
        let dt = self.dt();
        let ratio = dt / self.dx();
        let fluxes = self.interface_fluxes()?;
        let top = 1.0 / self.ell as f64;
        let mut change: f64 = 0.0;
        for (i, r) in self.rho.iter_mut().enumerate() {
            let delta = ratio * (fluxes[i] - fluxes[i + 1]);
            let next = (*r + delta).clamp(0.0, top);
            change = change.max((next - *r).abs());
            *r = next;
        }
        self.time += dt;
        Ok(change)
    }

    /// Steps until `time >= t`, landing exactly on `t`.
    pub fn run_until(&mut self, t: f64) -> Result<()> {
        while self.time < t {
            let full = self.dt();
            if self.time + full > t {
                let cfl = self.cfl;
                self.cfl = cfl * (t - self.time) / full;
                let r = self.step();
                self.cfl = cfl;
                r?;
                self.time = t;
            } else {
                self.step()?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SteadyOptions {
    pub m: usize,
    /// Bound on `max |delta rho| dx / dt` between successive steps, i.e. on the
    /// spread of the interface fluxes.
    pub tol: f64,
    pub max_steps: usize,
    pub cfl: f64,
    /// Include the diffusive correction with `a = 1 / (N - 1)`.
    pub viscosity: bool,
}

impl SteadyOptions {
    pub fn new(m: usize, tol: f64, max_steps: usize) -> Self {
        Self { m, tol, max_steps, cfl: DEFAULT_CFL, viscosity: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteadySolution {
    pub profile: StationaryProfile,
    pub steps: usize,
    pub residual: f64,
    pub time: f64,
    pub fluxes: Vec<f64>,
}

/// Ghost densities that feed the boundary currents: the lower root of
/// `lambda0 H = J_L` on the left and the upper root of `lambda1 H = J_R` on the
/// right. Rates past the peak of the boundary current saturate at `rho*`.
pub fn ghost_densities(spec: &ModelSpec) -> Result<(f64, f64)> {
    let report = classify_phase(spec)?;
    let ell = spec.ell;
    let star = critical_density(ell);
    let hmax = max_flux(ell);
    let peak = 1.0 + (ell as f64).sqrt();
    let left = if report.alpha >= report.lambda0 / peak {
        star
    } else {
        inverse_h((report.j_l / report.lambda0).min(hmax), ell, Branch::Lower)
            .map_err(|r| Error::NegativeRadicand { radicand: r, x: 0.0, current: report.j_l, lambda: report.lambda0 })?
    };
    let right = if report.beta >= report.lambda1 / peak {
        star
    } else {
        inverse_h((report.j_r / report.lambda1).min(hmax), ell, Branch::Upper)
            .map_err(|r| Error::NegativeRadicand { radicand: r, x: 1.0, current: report.j_r, lambda: report.lambda1 })?
    };
    Ok((left, right))
}

/// Relaxes an initially empty lattice to its steady state.
pub fn solve_steady(spec: &ModelSpec, m: usize, tol: f64, max_steps: usize) -> Result<StationaryProfile> {
    Ok(solve_steady_with(spec, &SteadyOptions::new(m, tol, max_steps))?.profile)
}

pub fn solve_steady_with(spec: &ModelSpec, options: &SteadyOptions) -> Result<SteadySolution> {
    if spec.geometry != Geometry::Open {
        return Err(Error::InvalidSpec("steady-state relaxation needs open boundaries".into()));
    }
    let report = classify_phase(spec)?;
    let (left, right) = ghost_densities(spec)?;
    let a = options.viscosity.then(|| 1.0 / (spec.n_sites.max(2) - 1) as f64);
    let mut grid = PdeGrid::new(&spec.rates, spec.ell, options.m, left, right)?
        .with_viscosity(a)
        .with_cfl(options.cfl)?;
    let (steps, residual) = relax(&mut grid, options.tol, options.max_steps)?;
    summarize(&grid, report.phase, steps, residual)
}

/// Steps until the flux spread `max |delta rho| dx / dt` drops below `tol`.
/// Returns the step count and the final residual.
pub fn relax(grid: &mut PdeGrid, tol: f64, max_steps: usize) -> Result<(usize, f64)> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tolerance {tol} must be positive")));
    }
    let scale = grid.dx() / grid.dt();
    let mut residual = f64::INFINITY;
    let mut steps = 0;
    while steps < max_steps {
        residual = grid.step()? * scale;
        steps += 1;
        if residual < tol {
            return Ok((steps, residual));
        }
    }
    Err(Error::NoConvergence { steps, residual })
}

/// Reads a relaxed grid as a stationary profile on the cell centres.
pub fn summarize(grid: &PdeGrid, phase: Phase, steps: usize, residual: f64) -> Result<SteadySolution> {
    let fluxes = grid.interface_fluxes()?;
    let interior = &fluxes[1..fluxes.len() - 1];
    let j = if interior.is_empty() { fluxes[0] } else { interior.iter().sum::<f64>() / interior.len() as f64 };
    let x = grid.centres();
    let branch: Vec<Branch> = grid.rho.iter().map(|&r| Branch::of(r, grid.ell)).collect();
    let mut discontinuities = Vec::new();
    for i in 1..branch.len() {
        let mid = 0.5 * (x[i - 1] + x[i]);
        match (branch[i - 1], branch[i]) {
            (Branch::Upper, Branch::Lower) => discontinuities.push(Discontinuity::BranchSwitch { x: mid }),
            (Branch::Lower, Branch::Upper) => discontinuities.push(Discontinuity::Shock { x: mid }),
            _ => {}
        }
    }
    Ok(SteadySolution {
        profile: StationaryProfile { phase, j_c: j, x, rho: grid.rho.clone(), branch, discontinuities },
        steps,
        residual,
        time: grid.time,
        fluxes,
    })
}

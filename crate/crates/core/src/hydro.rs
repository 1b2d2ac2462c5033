//! Closed-form hydrodynamics of the open lattice: boundary densities,
//! critical rates, phase classification and stationary profiles.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flux::{branch_density, critical_density, max_flux, Branch};
use crate::rates::{MinimumSet, RateField};
use crate::spec::{Geometry, ModelSpec};

/// Relative width of the band around `alpha*` and `beta*` reported as a transition line.
pub const TRANSITION_TOLERANCE: f64 = 1e-9;
/// Relative gap under which `J_L` and `J_R` count as equal.
pub const TIE_TOLERANCE: f64 = 1e-9;
/// Absolute tolerance of the coexistence-curve bisection.
pub const SEPARATION_TOLERANCE: f64 = 1e-12;

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} = {v} must be positive")))
    }
}

/// Entrance density `alpha / (lambda0 + (ell - 1) alpha)`.
///
/// Exceeds `1/ell` once `alpha > lambda0`; such inputs are far inside the
/// maximal-current regime and [`classify`] flags them.
pub fn rho_zero(alpha: f64, lambda0: f64, ell: u32) -> Result<f64> {
    positive("alpha", alpha)?;
    positive("lambda0", lambda0)?;
    Ok(alpha / (lambda0 + (ell as f64 - 1.0) * alpha))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExitDensities {
    pub rho1_plus: f64,
    pub rho1_minus: f64,
    pub rho1: f64,
    /// `beta > lambda1`, so the periodic part was clamped to zero.
    pub clamped: bool,
}

/// Periodic part, troughs and mean density at the exit for an exit rate `beta`.
pub fn exit_densities(beta: f64, lambda1: f64, ell: u32) -> Result<ExitDensities> {
    positive("beta", beta)?;
    positive("lambda1", lambda1)?;
    let l = ell as f64;
    let clamped = beta > lambda1;
    let plus = if clamped { 0.0 } else { (lambda1 - beta) / (lambda1 + (l - 1.0) * beta) };
    let minus = beta * plus / lambda1;
    Ok(ExitDensities {
        rho1_plus: plus,
        rho1_minus: minus,
        rho1: ((l - 1.0) * minus + plus) / l,
        clamped,
    })
}

/// Boundary current `a (lambda - a) / (lambda + (ell - 1) a)` for an entry
/// (or exit) rate `a` next to a site of rate `lambda`.
pub fn boundary_current(rate: f64, lambda: f64, ell: u32) -> f64 {
    rate * (lambda - rate) / (lambda + (ell as f64 - 1.0) * rate)
}

/// Transport capacity `lambda_min / (1 + sqrt(ell))^2`.
pub fn capacity(lambda_min: f64, ell: u32) -> f64 {
    lambda_min * max_flux(ell)
}

/// Smallest boundary rate whose current reaches the capacity.
pub fn critical_rate(lambda_end: f64, lambda_min: f64, ell: u32) -> Result<f64> {
    positive("boundary rate", lambda_end)?;
    positive("lambda_min", lambda_min)?;
    let l = ell as f64;
    let cap = capacity(lambda_min, ell);
    let b = lambda_end - (l - 1.0) * cap;
    let mut disc = b * b - 4.0 * lambda_end * cap;
    if disc < 0.0 {
        if disc < -1e-12 * b * b || lambda_min > lambda_end * (1.0 + 1e-12) {
            return Err(Error::NegativeRadicand { radicand: disc, x: f64::NAN, current: cap, lambda: lambda_end });
        }
        disc = 0.0;
    }
    // 0.5 (b - sqrt(disc)), written without cancellation
    Ok(2.0 * lambda_end * cap / (b + disc.sqrt()))
}

pub fn critical_entry_rate(lambda0: f64, lambda_min: f64, ell: u32) -> Result<f64> {
    critical_rate(lambda0, lambda_min, ell)
}

pub fn critical_exit_rate(lambda1: f64, lambda_min: f64, ell: u32) -> Result<f64> {
    critical_rate(lambda1, lambda_min, ell)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryCurrents {
    pub j_l: f64,
    pub j_r: f64,
    pub j_max: f64,
}

pub fn boundary_currents<R: RateField + ?Sized>(alpha: f64, beta: f64, rates: &R, ell: u32) -> BoundaryCurrents {
    BoundaryCurrents {
        j_l: boundary_current(alpha, rates.lambda0(), ell),
        j_r: boundary_current(beta, rates.lambda1(), ell),
        j_max: capacity(rates.lambda_min(), ell),
    }
}

/// Shock speed `(J_R - J_L) / (rho_r - rho_l)`.
pub fn shock_speed(rho_left: f64, rho_right: f64, j_left: f64, j_right: f64) -> Result<f64> {
    if rho_left == rho_right {
        return Err(Error::InvalidParameter("shock needs distinct densities".into()));
    }
    Ok((j_right - j_left) / (rho_right - rho_left))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Phase {
    #[serde(rename = "LD_I")]
    LdI,
    #[serde(rename = "LD_II")]
    LdII,
    #[serde(rename = "HD_I")]
    HdI,
    #[serde(rename = "HD_II")]
    HdII,
    #[serde(rename = "MC")]
    Mc,
    /// `J_L = J_R` with both boundaries subcritical: a freely wandering shock.
    #[serde(rename = "coexistence")]
    Coexistence,
}

impl Phase {
    pub fn as_str(&self) -> &'static str {
        match self {
            Phase::LdI => "LD_I",
            Phase::LdII => "LD_II",
            Phase::HdI => "HD_I",
            Phase::HdII => "HD_II",
            Phase::Mc => "MC",
            Phase::Coexistence => "coexistence",
        }
    }

    pub fn is_low_density(&self) -> bool {
        matches!(self, Phase::LdI | Phase::LdII)
    }

    pub fn is_high_density(&self) -> bool {
        matches!(self, Phase::HdI | Phase::HdII)
    }
}

impl std::fmt::Display for Phase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A critical line the parameters sit on, within [`TRANSITION_TOLERANCE`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransitionLine {
    EntryCritical,
    ExitCritical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseReport {
    pub phase: Phase,
    pub transitions: Vec<TransitionLine>,
    pub ell: u32,
    pub alpha: f64,
    pub beta: f64,
    pub lambda0: f64,
    pub lambda1: f64,
    pub lambda_min: f64,
    pub alpha_star: f64,
    pub beta_star: f64,
    pub j_l: f64,
    pub j_r: f64,
    pub j_max: f64,
    pub j_c: f64,
    pub rho_0: f64,
    pub rho_1: f64,
    pub rho_1_plus: f64,
    pub rho_1_minus: f64,
    pub x_min_set: Vec<f64>,
    pub x_min_intervals: Vec<(f64, f64)>,
    /// Speed of the shock between the entrance and exit branches, when both are subcritical.
    pub shock_speed: Option<f64>,
    pub diagnostics: Vec<String>,
}

/// Phase and boundary quantities for given boundary rates and rate field.
pub fn classify<R: RateField + ?Sized>(alpha: f64, beta: f64, rates: &R, ell: u32) -> Result<PhaseReport> {
    positive("alpha", alpha)?;
    positive("beta", beta)?;
    let (lambda0, lambda1) = (rates.lambda0(), rates.lambda1());
    let minimum: MinimumSet = rates.minimum();
    let lambda_min = minimum.value;
    let alpha_star = critical_entry_rate(lambda0, lambda_min, ell)?;
    let beta_star = critical_exit_rate(lambda1, lambda_min, ell)?;
    let BoundaryCurrents { j_l, j_r, j_max } = boundary_currents(alpha, beta, rates, ell);

    let mut transitions = Vec::new();
    if (alpha - alpha_star).abs() <= TRANSITION_TOLERANCE * alpha_star {
        transitions.push(TransitionLine::EntryCritical);
    }
    if (beta - beta_star).abs() <= TRANSITION_TOLERANCE * beta_star {
        transitions.push(TransitionLine::ExitCritical);
    }
    let entry_sub = alpha < alpha_star;
    let exit_sub = beta < beta_star;
    let mut shock = None;
    let (phase, j_c) = match (entry_sub, exit_sub) {
        (true, false) => (Phase::LdI, j_l),
        (false, true) => (Phase::HdI, j_r),
        (false, false) => (Phase::Mc, j_max),
        (true, true) => {
            let rho_l = branch_density(j_l, lambda0, ell, Branch::Lower, 0.0)?;
            let rho_r = branch_density(j_r, lambda1, ell, Branch::Upper, 1.0)?;
            shock = Some(shock_speed(rho_l, rho_r, j_l, j_r)?);
            if (j_l - j_r).abs() <= TIE_TOLERANCE * j_l.max(j_r) {
                (Phase::Coexistence, j_l.min(j_r))
            } else if j_l < j_r {
                (Phase::LdII, j_l)
            } else {
                (Phase::HdII, j_r)
            }
        }
    };

    let mut diagnostics = Vec::new();
    if alpha > lambda0 {
        diagnostics.push(format!(
            "entry rate {alpha} exceeds lambda0 = {lambda0}: the entrance closed form lies above 1/{ell}"
        ));
    }
    let table = table_for(j_c, alpha, beta, lambda1, ell);
    if beta > lambda1 && phase.is_high_density() {
        diagnostics.push(format!("exit rate {beta} exceeds lambda1 = {lambda1}"));
    }
    Ok(PhaseReport {
        phase,
        transitions,
        ell,
        alpha,
        beta,
        lambda0,
        lambda1,
        lambda_min,
        alpha_star,
        beta_star,
        j_l,
        j_r,
        j_max,
        j_c,
        rho_0: table.rho_0,
        rho_1: table.rho_1,
        rho_1_plus: table.rho_1_plus,
        rho_1_minus: table.rho_1_minus,
        x_min_set: minimum.locations(),
        x_min_intervals: minimum.intervals,
        shock_speed: shock,
        diagnostics,
    })
}

/// [`classify`] for an open-lattice specification.
pub fn classify_phase(spec: &ModelSpec) -> Result<PhaseReport> {
    spec.validate()?;
    if spec.geometry != Geometry::Open {
        return Err(Error::InvalidSpec("phase classification needs open boundaries".into()));
    }
    classify(spec.alpha, spec.beta, &spec.rates, spec.ell)
}

/// Boundary densities of the classified phase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryTable {
    pub j_c: f64,
    pub rho_0: f64,
    pub rho_1_plus: f64,
    pub rho_1_minus: f64,
    pub rho_1: f64,
}

impl BoundaryTable {
    /// Largest violation of `J_c = alpha (1 - ell rho_0) = beta rho_1+ = lambda1 rho_1-`.
    pub fn balance_residual(&self, alpha: f64, beta: f64, lambda1: f64, ell: u32) -> f64 {
        let entry = alpha * (1.0 - ell as f64 * self.rho_0);
        [entry, beta * self.rho_1_plus, lambda1 * self.rho_1_minus]
            .iter()
            .map(|j| (j - self.j_c).abs())
            .fold(0.0, f64::max)
    }
}

fn table_for(j_c: f64, alpha: f64, beta: f64, lambda1: f64, ell: u32) -> BoundaryTable {
    let l = ell as f64;
    let plus = j_c / beta;
    let minus = j_c / lambda1;
    BoundaryTable {
        j_c,
        rho_0: (1.0 - j_c / alpha) / l,
        rho_1_plus: plus,
        rho_1_minus: minus,
        rho_1: ((l - 1.0) * minus + plus) / l,
    }
}

pub fn boundary_table(report: &PhaseReport) -> BoundaryTable {
    table_for(report.j_c, report.alpha, report.beta, report.lambda1, report.ell)
}

/// Exit rate on the coexistence curve `J_R(beta) = J_L(alpha)`, found by
/// bisection on the increasing part of `J_R`.
pub fn hd_ld_separation(lambda0: f64, lambda1: f64, ell: u32, alpha: f64) -> Result<f64> {
    positive("alpha", alpha)?;
    positive("lambda0", lambda0)?;
    positive("lambda1", lambda1)?;
    let target = boundary_current(alpha, lambda0, ell);
    let peak = lambda1 / (1.0 + (ell as f64).sqrt());
    if target > boundary_current(peak, lambda1, ell) * (1.0 + 1e-12) || alpha >= lambda0 {
        return Err(Error::NoRoot(format!(
            "entry current {target} exceeds every exit current at lambda1 = {lambda1}"
        )));
    }
    let (mut lo, mut hi) = (0.0, peak);
    while hi - lo > SEPARATION_TOLERANCE {
        let mid = 0.5 * (lo + hi);
        if boundary_current(mid, lambda1, ell) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Where the branch selection changes along the lattice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Discontinuity {
    /// Continuous switch from the upper to the lower branch at a rate minimum.
    BranchSwitch { x: f64 },
    /// Jump from the lower to the upper branch between two grid points.
    Shock { x: f64 },
    /// Segment whose shock structure the stationary equations leave open.
    Indeterminate { from: f64, to: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationaryProfile {
    pub phase: Phase,
    pub j_c: f64,
    pub x: Vec<f64>,
    /// `NaN` inside indeterminate segments.
    pub rho: Vec<f64>,
    pub branch: Vec<Branch>,
    pub discontinuities: Vec<Discontinuity>,
}

impl StationaryProfile {
    /// Writes `x,rho,branch` rows.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["x", "rho", "branch"])?;
        for i in 0..self.x.len() {
            w.write_record([self.x[i].to_string(), self.rho[i].to_string(), self.branch[i].as_str().to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Whether `x` lies within `margin` of a discontinuity.
    pub fn near_discontinuity(&self, x: f64, margin: f64) -> bool {
        self.discontinuities.iter().any(|d| match *d {
            Discontinuity::BranchSwitch { x: s } | Discontinuity::Shock { x: s } => (x - s).abs() < margin,
            Discontinuity::Indeterminate { from, to } => x > from - margin && x < to + margin,
        })
    }
}

/// `m` equally spaced points on `[0, 1]`.
pub fn uniform_grid(m: usize) -> Vec<f64> {
    if m == 1 {
        return vec![0.0];
    }
    (0..m).map(|i| i as f64 / (m - 1) as f64).collect()
}

/// Stationary density at the given positions for a classified configuration.
pub fn profile_on<R: RateField + ?Sized>(report: &PhaseReport, rates: &R, grid: &[f64]) -> Result<StationaryProfile> {
    let ell = report.ell;
    let j = report.j_c;
    let rho_star = critical_density(ell);
    let mut discontinuities = Vec::new();
    let on = |x: f64, b: Branch| -> Result<(f64, Branch)> {
        match b {
            Branch::Indeterminate => Ok((f64::NAN, b)),
            _ => Ok((branch_density(j, rates.rate(x), ell, b, x)?, b)),
        }
    };
    let points: Vec<(f64, Branch)> = match report.phase {
        Phase::LdI | Phase::LdII => grid.iter().map(|&x| on(x, Branch::Lower)).collect::<Result<_>>()?,
        Phase::HdI | Phase::HdII => grid.iter().map(|&x| on(x, Branch::Upper)).collect::<Result<_>>()?,
        Phase::Coexistence => {
            discontinuities.push(Discontinuity::Indeterminate { from: 0.0, to: 1.0 });
            grid.iter().map(|&x| on(x, Branch::Indeterminate)).collect::<Result<_>>()?
        }
        Phase::Mc => {
            let (first_lo, first_hi) = report.x_min_intervals[0];
            let (last_lo, last_hi) = *report.x_min_intervals.last().expect("nonempty minimum set");
            let multiple = report.x_min_intervals.len() > 1;
            if multiple {
                discontinuities.push(Discontinuity::Indeterminate { from: first_hi, to: last_lo });
            } else {
                discontinuities.push(Discontinuity::BranchSwitch { x: 0.5 * (first_lo + first_hi) });
            }
            grid.iter()
                .map(|&x| {
                    if x < first_lo {
                        on(x, Branch::Upper)
                    } else if x <= first_hi {
                        Ok((rho_star, if multiple { Branch::Upper } else { Branch::Lower }))
                    } else if multiple && x < last_lo {
                        on(x, Branch::Indeterminate)
                    } else if x <= last_hi {
                        Ok((rho_star, Branch::Lower))
                    } else {
                        on(x, Branch::Lower)
                    }
                })
                .collect::<Result<_>>()?
        }
    };
    let (rho, branch) = points.into_iter().unzip();
    Ok(StationaryProfile {
        phase: report.phase,
        j_c: j,
        x: grid.to_vec(),
        rho,
        branch,
        discontinuities,
    })
}

/// Stationary profile of an open-lattice specification on `m` equally spaced points.
pub fn stationary_profile(spec: &ModelSpec, m: usize) -> Result<StationaryProfile> {
    if m < 2 {
        return Err(Error::InvalidParameter(format!("profile grid needs at least 2 points, got {m}")));
    }
    let report = classify_phase(spec)?;
    profile_on(&report, &spec.rates, &uniform_grid(m))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub alpha: f64,
    pub beta: f64,
    pub phase: Phase,
    pub j_c: f64,
}

/// Classifies every `(alpha, beta)` pair of the grid, alpha-major.
pub fn phase_scan<R: RateField + ?Sized>(alphas: &[f64], betas: &[f64], rates: &R, ell: u32) -> Result<Vec<PhasePoint>> {
    let mut out = Vec::with_capacity(alphas.len() * betas.len());
    for &alpha in alphas {
        for &beta in betas {
            let r = classify(alpha, beta, rates, ell)?;
            out.push(PhasePoint { alpha, beta, phase: r.phase, j_c: r.j_c });
        }
    }
    Ok(out)
}

/// Writes `alpha,beta,phase,j_c` rows.
pub fn write_phase_scan_csv<W: Write>(writer: W, points: &[PhasePoint]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["alpha", "beta", "phase", "j_c"])?;
    for p in points {
        w.write_record([p.alpha.to_string(), p.beta.to_string(), p.phase.as_str().to_string(), p.j_c.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flux::{h, hole_current};
    use crate::rates::{Dip, Interpolation, RateFunction, RateProfile};
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b}");
    }

    fn homogeneous(alpha: f64, beta: f64) -> PhaseReport {
        classify(alpha, beta, &RateFunction::Constant { value: 1.0 }, 1).unwrap()
    }

    #[test]
    fn entrance_density_examples() {
        close(rho_zero(0.1, 1.0, 1).unwrap(), 0.1, 1e-15);
        close(rho_zero(0.1, 1.0, 3).unwrap(), 0.1 / 1.2, 1e-15);
        close(rho_zero(1e12, 1.0, 3).unwrap(), 0.5, 1e-9);
        assert!(rho_zero(0.0, 1.0, 1).is_err());
        assert!(rho_zero(0.1, -1.0, 1).is_err());
    }

    #[test]
    fn exit_density_examples() {
        let e = exit_densities(1.0, 1.0, 3).unwrap();
        assert_eq!((e.rho1_plus, e.rho1_minus, e.rho1), (0.0, 0.0, 0.0));
        let e = exit_densities(0.2, 1.0, 3).unwrap();
        close(e.rho1_plus, 0.8 / 1.4, 1e-15);
        close(e.rho1_minus, 0.2 * 0.8 / 1.4, 1e-15);
        close(e.rho1, (1.0 - 0.2) / 3.0, 1e-12);
        let e = exit_densities(0.3, 1.0, 1).unwrap();
        close(e.rho1_plus, 0.7, 1e-15);
        close(e.rho1, 0.7, 1e-15);
        assert!(exit_densities(2.0, 1.0, 2).unwrap().clamped);
        assert!(exit_densities(0.0, 1.0, 2).is_err());
    }

    #[test]
    fn critical_rate_examples() {
        close(critical_entry_rate(1.0, 1.0, 1).unwrap(), 0.5, 1e-15);
        close(critical_entry_rate(0.9, 0.1, 10).unwrap(), 6.1706e-3, 1e-7);
        close(critical_exit_rate(0.3, 0.1, 10).unwrap(), 7.1894e-3, 1e-7);
        close(critical_entry_rate(1.0, 0.5, 1).unwrap(), (1.0 - 0.5f64.sqrt()) / 2.0, 1e-15);
        assert!(critical_entry_rate(0.5, 1.0, 2).is_err());
    }

    #[test]
    fn current_examples() {
        close(boundary_current(0.1, 1.0, 3), 0.075, 1e-15);
        close(capacity(1.0, 1), 0.25, 1e-15);
        close(capacity(0.1, 10), 0.1 / (1.0 + 10f64.sqrt()).powi(2), 1e-18);
        close(capacity(0.1, 10), 5.7722e-3, 1e-7);
    }

    #[test]
    fn homogeneous_phase_examples() {
        let r = homogeneous(0.2, 0.7);
        assert_eq!(r.phase, Phase::LdI);
        close(r.j_c, 0.16, 1e-15);
        let r = homogeneous(0.7, 0.7);
        assert_eq!(r.phase, Phase::Mc);
        close(r.j_c, 0.25, 1e-15);
        let r = homogeneous(0.7, 0.2);
        assert_eq!(r.phase, Phase::HdI);
        // both subcritical: the smaller current wins
        let r = homogeneous(0.2, 0.1);
        assert_eq!(r.phase, Phase::HdII);
        close(r.j_c, 0.09, 1e-15);
        assert!(r.shock_speed.unwrap() < 0.0);
        let r = homogeneous(0.1, 0.2);
        assert_eq!(r.phase, Phase::LdII);
        assert!(r.shock_speed.unwrap() > 0.0);
        let r = homogeneous(0.3, 0.3);
        assert_eq!(r.phase, Phase::Coexistence);
        close(r.shock_speed.unwrap(), 0.0, 1e-15);
        assert_eq!(homogeneous(0.5, 0.9).transitions, vec![TransitionLine::EntryCritical]);
    }

    #[test]
    fn shock_speed_examples() {
        close(shock_speed(0.2, 0.9, 0.16, 0.09).unwrap(), -0.1, 1e-15);
        close(shock_speed(0.4, 0.9, 0.24, 0.09).unwrap(), -0.3, 1e-15);
        assert!(shock_speed(0.3, 0.3, 0.1, 0.2).is_err());
    }

    #[test]
    fn coexistence_curve() {
        close(hd_ld_separation(0.8, 0.8, 3, 0.05).unwrap(), 0.05, 1e-11);
        let s = 0.36;
        let alpha = 0.1;
        let beta = hd_ld_separation(1.0 - s, 1.0, 1, alpha).unwrap();
        close(alpha * (1.0 - alpha - s), beta * (1.0 - beta) * (1.0 - s), 1e-12);
        let a_star = critical_entry_rate(0.9, 0.1, 10).unwrap();
        let b_star = critical_exit_rate(0.3, 0.1, 10).unwrap();
        close(hd_ld_separation(0.9, 0.3, 10, a_star).unwrap(), b_star, 1e-10);
        assert!(matches!(hd_ld_separation(1.0, 0.1, 1, 0.5), Err(Error::NoRoot(_))));
    }

    #[test]
    fn table_rows() {
        let r = homogeneous(0.1, 0.7);
        let t = boundary_table(&r);
        close(t.rho_0, 0.1, 1e-15);
        close(t.j_c, 0.09, 1e-15);
        close(t.rho_1_plus, 0.09 / 0.7, 1e-15);
        close(t.rho_1_minus, 0.09, 1e-15);
        let rates = RateFunction::Constant { value: 1.0 };
        let hd = classify(2.0, 0.2, &rates, 3).unwrap();
        assert_eq!(hd.phase, Phase::HdI);
        close(hd.rho_1_plus, 0.8 / 1.4, 1e-14);
        let fig = RateProfile::new(vec![0.9, 0.1, 0.3], Interpolation::PiecewiseLinear).unwrap();
        let mc = classify(0.5, 0.5, &fig, 10).unwrap();
        assert_eq!(mc.phase, Phase::Mc);
        close(mc.rho_1_minus, 0.1 / (0.3 * (1.0 + 10f64.sqrt()).powi(2)), 1e-15);
        for rep in [r, hd, mc] {
            assert!(boundary_table(&rep).balance_residual(rep.alpha, rep.beta, rep.lambda1, rep.ell) < 1e-10);
        }
    }

    #[test]
    fn homogeneous_profiles() {
        let lambda = RateFunction::Constant { value: 1.0 };
        let grid = uniform_grid(11);
        let ld = profile_on(&homogeneous(0.2, 0.7), &lambda, &grid).unwrap();
        ld.rho.iter().for_each(|&r| close(r, 0.2, 1e-12));
        let hd = profile_on(&homogeneous(0.7, 0.3), &lambda, &grid).unwrap();
        hd.rho.iter().for_each(|&r| close(r, 0.7, 1e-12));
        let mc = profile_on(&classify(2.0, 2.0, &lambda, 4).unwrap(), &lambda, &grid).unwrap();
        mc.rho.iter().for_each(|&r| close(r, 1.0 / 6.0, 1e-12));
    }

    #[test]
    fn mc_switches_branch_at_the_minimum() {
        let fig = RateProfile::new(vec![0.9, 0.1, 0.3], Interpolation::PiecewiseLinear).unwrap();
        let rep = classify(0.5, 0.5, &fig, 10).unwrap();
        let p = profile_on(&rep, &fig, &uniform_grid(201)).unwrap();
        let star = critical_density(10);
        assert_eq!(p.x[100], 0.5);
        close(p.rho[100], star, 1e-12);
        for i in 0..201 {
            let lam = fig.rate(p.x[i]);
            close(lam * h(p.rho[i], 10).unwrap(), rep.j_c, 1e-10);
            if i < 100 {
                assert!(p.rho[i] > star && p.branch[i] == Branch::Upper);
            } else if i > 100 {
                assert!(p.rho[i] < star && p.branch[i] == Branch::Lower);
            }
        }
        assert_eq!(p.discontinuities, vec![Discontinuity::BranchSwitch { x: 0.5 }]);
    }

    #[test]
    fn two_minima_leave_the_middle_open() {
        let f = RateFunction::TwoBump { centers: [0.3, 0.7], width: 0.1, depth: 0.5 };
        let rep = classify(1.0, 1.0, &f, 1).unwrap();
        assert_eq!(rep.phase, Phase::Mc);
        assert_eq!(rep.x_min_set.len(), 2);
        let p = profile_on(&rep, &f, &uniform_grid(101)).unwrap();
        assert_eq!(p.branch[10], Branch::Upper);
        assert_eq!(p.branch[50], Branch::Indeterminate);
        assert!(p.rho[50].is_nan());
        assert_eq!(p.branch[90], Branch::Lower);
    }

    #[test]
    fn csv_outputs() {
        let mut buf = Vec::new();
        let p = profile_on(&homogeneous(0.2, 0.7), &RateFunction::Constant { value: 1.0 }, &[0.0, 1.0]).unwrap();
        p.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let rows: Vec<Vec<&str>> = text.lines().map(|l| l.split(',').collect()).collect();
        assert_eq!(rows[0], vec!["x", "rho", "branch"]);
        assert_eq!(rows.len(), 3);
        assert_eq!((rows[2][0], rows[2][2]), ("1", "lower"));
        close(rows[1][1].parse().unwrap(), 0.2, 1e-15);
        let pts = phase_scan(&[0.2], &[0.7, 0.1], &RateFunction::Constant { value: 1.0 }, 1).unwrap();
        let mut buf = Vec::new();
        write_phase_scan_csv(&mut buf, &pts).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("alpha,beta,phase,j_c\n0.2,0.7,LD_I,"));
        assert!(text.contains("0.2,0.1,HD_II,"));
        let json = serde_json::to_value(homogeneous(0.2, 0.7)).unwrap();
        assert_eq!(json["phase"], "LD_I");
    }

    fn smooth_dip() -> RateFunction {
        RateFunction::Dips { base: 0.8, slope: 0.2, dips: vec![Dip { center: 0.5, width: 0.1, depth: 0.4 }] }
    }

    proptest! {
        #[test]
        fn critical_rates_hit_capacity(
            lambda_end in 0.05f64..5.0, frac in 0.01f64..=1.0, ell in 1u32..12
        ) {
            let lambda_min = lambda_end * frac;
            let a = critical_rate(lambda_end, lambda_min, ell).unwrap();
            let jm = capacity(lambda_min, ell);
            prop_assert!((boundary_current(a, lambda_end, ell) - jm).abs() < 1e-10 * jm.max(1e-3));
            prop_assert!(a <= lambda_end / (1.0 + (ell as f64).sqrt()) * (1.0 + 1e-9));
        }

        #[test]
        fn critical_rates_grow_with_lambda_min(
            lambda_end in 0.05f64..5.0, f1 in 0.01f64..=1.0, f2 in 0.01f64..=1.0, ell in 1u32..12
        ) {
            let (lo, hi) = if f1 < f2 { (f1, f2) } else { (f2, f1) };
            let a = critical_rate(lambda_end, lambda_end * lo, ell).unwrap();
            let b = critical_rate(lambda_end, lambda_end * hi, ell).unwrap();
            prop_assert!(a <= b * (1.0 + 1e-12));
        }

        #[test]
        fn hole_current_balance(alpha in 0.001f64..0.999, ell in 1u32..10) {
            let rho0 = rho_zero(alpha, 1.0, ell).unwrap();
            let holes = 1.0 - ell as f64 * rho0;
            let jh = hole_current(holes, 1.0, ell).unwrap();
            prop_assert!((jh - alpha * holes).abs() < 1e-12);
        }

        #[test]
        fn profiles_carry_the_phase_current(alpha in 0.01f64..1.5, beta in 0.01f64..1.5, ell in 1u32..5) {
            let f = smooth_dip();
            let rep = classify(alpha, beta, &f, ell).unwrap();
            prop_assume!(rep.phase != Phase::Coexistence);
            let p = profile_on(&rep, &f, &uniform_grid(257)).unwrap();
            let star = critical_density(ell);
            for i in 0..p.x.len() {
                let j = f.rate(p.x[i]) * h(p.rho[i], ell).unwrap();
                prop_assert!((j - rep.j_c).abs() < 1e-10, "x={} j={} jc={}", p.x[i], j, rep.j_c);
                match p.branch[i] {
                    Branch::Lower => prop_assert!(p.rho[i] <= star + 1e-12),
                    Branch::Upper => prop_assert!(p.rho[i] >= star - 1e-12),
                    Branch::Indeterminate => {}
                }
            }
            prop_assert!(boundary_table(&rep).balance_residual(alpha, beta, rep.lambda1, ell) < 1e-10);
        }

        #[test]
        fn homogeneous_reduction(lambda in 0.1f64..5.0, alpha in 0.01f64..3.0, beta in 0.01f64..3.0) {
            let f = RateFunction::Constant { value: lambda };
            let rep = classify(alpha, beta, &f, 1).unwrap();
            prop_assert!((rep.alpha_star - lambda / 2.0).abs() < 1e-12 * lambda);
            prop_assert!((rep.beta_star - lambda / 2.0).abs() < 1e-12 * lambda);
            prop_assert!((rep.j_max - lambda / 4.0).abs() < 1e-12 * lambda);
            let p = profile_on(&rep, &f, &[0.5]).unwrap();
            match rep.phase {
                Phase::LdI | Phase::LdII => prop_assert!((p.rho[0] - alpha / lambda).abs() < 1e-9),
                Phase::HdI | Phase::HdII => prop_assert!((p.rho[0] - (1.0 - beta / lambda)).abs() < 1e-9),
                Phase::Mc => prop_assert!((p.rho[0] - 0.5).abs() < 1e-12),
                Phase::Coexistence => {}
            }
        }
    }
}

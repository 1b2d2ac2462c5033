//! Characteristic curves of the hydrodynamic equation: `dx/dt = lambda(x) H'(rho)`,
//! `drho/dt = -lambda'(x) H(rho)`, along which `lambda(x) H(rho)` is conserved.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flux::{critical_density, h, h_prime, inverse_h, max_flux, Branch, DOMAIN_TOLERANCE};
use crate::rates::{RateField, Side};

pub use crate::hydro::shock_speed;

/// Largest accepted drift of `lambda H` along a trace.
pub const CURRENT_TOLERANCE: f64 = 1e-8;
/// Resolution of reversal and arrival times.
pub const EVENT_TIME_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Outcome {
    /// Left `[0, 1]` through the end at `x` at time `t`.
    ReachedEnd { t: f64, x: f64 },
    /// `dx/dt` changed sign: the density crossed the critical density.
    Reversed { t: f64, x: f64, rho: f64 },
    MaxTimeExceeded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CharacteristicTrace {
    pub t: Vec<f64>,
    pub x: Vec<f64>,
    pub rho: Vec<f64>,
    pub outcome: Outcome,
    pub ell: u32,
    /// `lambda(x0) H(rho0)`.
    pub current: f64,
    pub max_current_drift: f64,
}

impl CharacteristicTrace {
    pub fn reached_end(&self) -> bool {
        matches!(self.outcome, Outcome::ReachedEnd { .. })
    }

    /// Writes `t,x,rho` rows.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["t", "x", "rho"])?;
        for i in 0..self.t.len() {
            w.write_record([self.t[i].to_string(), self.x[i].to_string(), self.rho[i].to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Default step `min(1e-3, a/2)` for a field with lattice spacing `a`.
pub fn default_step<R: RateField + ?Sized>(rates: &R) -> f64 {
    rates.spacing().map_or(1e-3, |a| (a / 2.0).min(1e-3))
}

struct System<'a, R: ?Sized> {
    rates: &'a R,
    ell: u32,
    side: Side,
    /// Midpoint of the lattice cell of the current step, where the slope is constant.
    cell: std::cell::Cell<Option<f64>>,
}

impl<R: RateField + ?Sized> System<'_, R> {
    fn rho_clamp(&self, rho: f64) -> f64 {
        rho.clamp(0.0, 1.0 / self.ell as f64)
    }

    fn field(&self, x: f64, rho: f64) -> Result<(f64, f64)> {
        let rho = self.rho_clamp(rho);
        let xe = x.clamp(0.0, 1.0);
        Ok((
            self.rates.rate(xe) * h_prime(rho, self.ell)?,
            -self.rates.slope(self.cell.get().unwrap_or(xe), self.side) * h(rho, self.ell)?,
        ))
    }

    fn rk4(&self, x: f64, rho: f64, dt: f64) -> Result<(f64, f64)> {
        let k1 = self.field(x, rho)?;
        let k2 = self.field(x + 0.5 * dt * k1.0, rho + 0.5 * dt * k1.1)?;
        let k3 = self.field(x + 0.5 * dt * k2.0, rho + 0.5 * dt * k2.1)?;
        let k4 = self.field(x + dt * k3.0, rho + dt * k3.1)?;
        Ok((
            x + dt / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0),
            rho + dt / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1),
        ))
    }

    /// Largest partial step in `[0, dt]` on which `keep` still holds, by bisection.
    fn refine(
        &self,
        x: f64,
        rho: f64,
        dt: f64,
        keep: impl Fn(f64, f64) -> bool,
    ) -> Result<(f64, f64, f64)> {
        let (mut lo, mut hi) = (0.0, dt);
        while hi - lo > EVENT_TIME_TOLERANCE {
            let mid = 0.5 * (lo + hi);
            let (xm, rm) = self.rk4(x, rho, mid)?;
            if keep(xm, rm) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let tau = 0.5 * (lo + hi);
        let (xe, re) = self.rk4(x, rho, tau)?;
        Ok((tau, xe, re))
    }
}

/// Integrates the characteristic through `(x0, rho0)` with fixed-step RK4.
///
/// Steps are shortened to land on the lattice nodes of piecewise rate fields.
/// Integration stops when the curve leaves `[0, 1]`, when `dx/dt` changes
/// sign, or at `t_max`.
pub fn trace_characteristic<R: RateField + ?Sized>(
    x0: f64,
    rho0: f64,
    rates: &R,
    ell: u32,
    t_max: f64,
    step: Option<f64>,
) -> Result<CharacteristicTrace> {
    if !(0.0..=1.0).contains(&x0) {
        return Err(Error::InvalidParameter(format!("start position {x0} outside [0, 1]")));
    }
    let top = 1.0 / ell as f64;
    if !(-DOMAIN_TOLERANCE..=top + DOMAIN_TOLERANCE).contains(&rho0) {
        return Err(Error::DensityDomain { rho: rho0, ell });
    }
    let rho0 = rho0.clamp(0.0, top);
    let dt = step.unwrap_or_else(|| default_step(rates));
    if !(dt > 0.0 && t_max > 0.0) {
        return Err(Error::InvalidParameter("step and t_max must be positive".into()));
    }
    let star = critical_density(ell);
    let direction = (rho0 < star) as i32 - (rho0 > star) as i32;
    let side = if direction >= 0 { Side::Right } else { Side::Left };
    let sys = System { rates, ell, side, cell: std::cell::Cell::new(None) };
    let j0 = rates.rate(x0) * h(rho0, ell)?;
    let mut trace = CharacteristicTrace {
        t: vec![0.0],
        x: vec![x0],
        rho: vec![rho0],
        outcome: Outcome::MaxTimeExceeded,
        ell,
        current: j0,
        max_current_drift: 0.0,
    };
    if direction == 0 {
        trace.outcome = Outcome::Reversed { t: 0.0, x: x0, rho: rho0 };
        return Ok(trace);
    }
    if (direction < 0 && x0 == 0.0) || (direction > 0 && x0 == 1.0) {
        trace.outcome = Outcome::ReachedEnd { t: 0.0, x: x0 };
        return Ok(trace);
    }
    let spacing = rates.spacing();
    let on_side = |r: f64| if direction > 0 { r < star } else { r > star };
    let inside = |x: f64| (0.0..=1.0).contains(&x);
    let (mut t, mut x, mut rho) = (0.0, x0, rho0);
    while t < t_max {
        let mut h_step = dt.min(t_max - t);
        let (mut xn, mut rn) = sys.rk4(x, rho, h_step)?;
        // shorten the step to end on the next lattice node, where the slope jumps
        if let Some(a) = spacing {
            let cell = |v: f64| (v / a + 1e-9 * direction as f64).floor();
            let node = if direction > 0 { (cell(x) + 1.0) * a } else { cell(x) * a };
            sys.cell.set(Some(node - 0.5 * a * direction as f64));
            let (x1, r1) = sys.rk4(x, rho, h_step)?;
            xn = x1;
            rn = r1;
            let crosses = if direction > 0 { xn > node + 1e-15 } else { xn < node - 1e-15 };
            if crosses && inside(node) && on_side(rn) {
                let before = |xv: f64, _| if direction > 0 { xv <= node } else { xv >= node };
                let (tau, _, re) = sys.refine(x, rho, h_step, before)?;
                h_step = tau;
                xn = node;
                rn = re;
            }
        }
        if !on_side(rn) {
            let (tau, xe, re) = sys.refine(x, rho, h_step, |_, r| on_side(r))?;
            record(&mut trace, rates, t + tau, xe, re, j0)?;
            trace.outcome = Outcome::Reversed { t: t + tau, x: xe, rho: re };
            return Ok(trace);
        }
        if !inside(xn) {
            let end = if direction > 0 { 1.0 } else { 0.0 };
            let (tau, _, re) = sys.refine(x, rho, h_step, |xv, _| inside(xv))?;
            record(&mut trace, rates, t + tau, end, re, j0)?;
            trace.outcome = Outcome::ReachedEnd { t: t + tau, x: end };
            return Ok(trace);
        }
        t += h_step;
        x = xn;
        rho = rn;
        record(&mut trace, rates, t, x, rho, j0)?;
    }
    Ok(trace)
}

fn record<R: RateField + ?Sized>(
    trace: &mut CharacteristicTrace,
    rates: &R,
    t: f64,
    x: f64,
    rho: f64,
    j0: f64,
) -> Result<()> {
    let rho = rho.clamp(0.0, 1.0 / trace.ell as f64);
    let drift = (rates.rate(x.clamp(0.0, 1.0)) * h(rho, trace.ell)? - j0).abs();
    trace.max_current_drift = trace.max_current_drift.max(drift);
    if drift > CURRENT_TOLERANCE {
        return Err(Error::StepTooLarge { drift, tolerance: CURRENT_TOLERANCE });
    }
    trace.t.push(t);
    trace.x.push(x);
    trace.rho.push(rho);
    Ok(())
}

const SIMPSON_TOLERANCE: f64 = 1e-13;
const SIMPSON_DEPTH: u32 = 48;
const PATH_SAMPLES: usize = 4096;

/// Time for the characteristic through `(x0, rho0)` to reach `x_target`:
/// `F = integral of dy / (lambda(y) H'(H^-1(J / lambda(y))))` on the branch of `rho0`.
///
/// Returns infinity when the characteristic stalls at the critical density on
/// the way, and [`Error::NoDirectPath`] when the current exceeds the local
/// capacity so that the curve reverses first.
pub fn travel_time<R: RateField + ?Sized>(x0: f64, rho0: f64, x_target: f64, rates: &R, ell: u32) -> Result<f64> {
    for v in [x0, x_target] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::InvalidParameter(format!("position {v} outside [0, 1]")));
        }
    }
    if x_target == x0 {
        return Ok(0.0);
    }
    let star = critical_density(ell);
    let branch = if rho0 < star { Branch::Lower } else { Branch::Upper };
    let forward = x_target > x0;
    if rho0 == star || forward != (branch == Branch::Lower) {
        return Err(Error::InvalidParameter(format!(
            "the characteristic through rho0 = {rho0} does not move towards x = {x_target}"
        )));
    }
    let j = rates.rate(x0) * h(rho0, ell)?;
    let (a, b) = if forward { (x0, x_target) } else { (x_target, x0) };
    let hmax = max_flux(ell);

    // break points: lattice nodes and a dense scan for the capacity check
    let mut breaks: Vec<f64> = (0..=PATH_SAMPLES).map(|i| a + (b - a) * i as f64 / PATH_SAMPLES as f64).collect();
    if let Some(sp) = rates.spacing() {
        let first = (a / sp).ceil() as usize;
        let last = (b / sp).floor() as usize;
        breaks.extend((first..=last).map(|k| k as f64 * sp).filter(|&y| y > a && y < b));
    }
    breaks.sort_by(|p, q| p.partial_cmp(q).expect("finite positions"));
    breaks.dedup();
    let mut tightest = f64::INFINITY;
    for &y in &breaks {
        let load = j / rates.rate(y);
        if load > hmax * (1.0 + 1e-12) {
            return Err(Error::NoDirectPath { x: y });
        }
        tightest = tightest.min(hmax - load);
    }
    if tightest <= 1e-13 * hmax {
        return Ok(f64::INFINITY);
    }

    let integrand = |y: f64| -> f64 {
        let flux = j / rates.rate(y);
        match inverse_h(flux.min(hmax), ell, branch) {
            Ok(rho) => match h_prime(rho, ell) {
                Ok(d) if d != 0.0 => 1.0 / (rates.rate(y) * d.abs()),
                _ => f64::INFINITY,
            },
            Err(_) => f64::INFINITY,
        }
    };
    let mut total = 0.0;
    for w in breaks.windows(2) {
        let (p, q) = (w[0], w[1]);
        let (fp, fm, fq) = (integrand(p), integrand(0.5 * (p + q)), integrand(q));
        let whole = (q - p) / 6.0 * (fp + 4.0 * fm + fq);
        total += simpson(&integrand, p, q, fp, fm, fq, whole, SIMPSON_TOLERANCE, SIMPSON_DEPTH);
        if !total.is_finite() {
            return Ok(f64::INFINITY);
        }
    }
    Ok(total)
}

#[allow(clippy::too_many_arguments)]
fn simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol.max(1e-15 * whole.abs()) {
        return left + right + delta / 15.0;
    }
    simpson(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + simpson(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
}

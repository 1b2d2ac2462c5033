//! Recovery of `lambda`, `alpha` and `beta`, up to a common time scale, from a
//! stationary density profile.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flux::{critical_density, h};
use crate::profile::DensityProfile;
use crate::rates::{Interpolation, RateProfile};

/// Densities within this distance of `0` or `1 / ell` are not used.
pub const DEFAULT_EPSILON: f64 = 1e-4;
/// Fraction of the lattice next to the exit left out of the `lambda1` extrapolation.
pub const EXIT_EXCLUSION: f64 = 0.02;
/// Width of the window fitted for the `lambda1` extrapolation.
pub const EXTRAPOLATION_WINDOW: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InferOptions {
    pub epsilon: f64,
    /// Odd moving-average width applied before inference.
    pub smoothing: Option<usize>,
}

impl Default for InferOptions {
    fn default() -> Self {
        Self { epsilon: DEFAULT_EPSILON, smoothing: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reliability {
    Reliable,
    /// Density too close to zero.
    NearEmpty,
    /// Density too close to `1 / ell`.
    NearFull,
    /// No usable density, e.g. `NaN` input.
    Missing,
}

impl Reliability {
    pub fn as_str(&self) -> &'static str {
        match self {
            Reliability::Reliable => "reliable",
            Reliability::NearEmpty => "near_empty",
            Reliability::NearFull => "near_full",
            Reliability::Missing => "missing",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceResult {
    pub ell: u32,
    pub x: Vec<f64>,
    /// `None` at unreliable sites.
    pub lambda_estimate: Vec<Option<f64>>,
    pub lambda_naive: Vec<Option<f64>>,
    pub reliability: Vec<Reliability>,
    pub alpha_estimate: f64,
    pub beta_estimate: f64,
    pub j_estimate: f64,
    /// Site (1-based) where `lambda = 1`.
    pub x0_anchor: usize,
    /// Extrapolated exit rate used for the exit split.
    pub lambda1_estimate: f64,
    pub rho1_plus: f64,
    /// The entry side sits on the lower branch, so `alpha` is pinned down by the
    /// entry balance; otherwise it is a lower bound.
    pub alpha_identified: bool,
    /// The exit side sits on the upper branch; otherwise `beta` is a lower bound.
    pub beta_identified: bool,
}

impl InferenceResult {
    /// Estimates as a lattice rate profile, filling gaps linearly from reliable neighbours.
    pub fn rate_profile(&self) -> Result<RateProfile> {
        let known: Vec<(f64, f64)> =
            self.x.iter().zip(&self.lambda_estimate).filter_map(|(&x, l)| l.map(|l| (x, l))).collect();
        if known.is_empty() {
            return Err(Error::Inference("no reliable sites".into()));
        }
        let filled = self
            .x
            .iter()
            .zip(&self.lambda_estimate)
            .map(|(&x, l)| {
                l.unwrap_or_else(|| {
                    let after = known.partition_point(|&(k, _)| k < x);
                    match (after.checked_sub(1).map(|i| known[i]), known.get(after)) {
                        (Some((x0, l0)), Some(&(x1, l1))) => l0 + (l1 - l0) * (x - x0) / (x1 - x0),
                        (Some((_, l0)), None) => l0,
                        (None, Some(&(_, l1))) => l1,
                        (None, None) => unreachable!("known is nonempty"),
                    }
                })
            })
            .collect();
        RateProfile::new(filled, Interpolation::PiecewiseLinear)
    }

    /// Writes `x,lambda_estimate,lambda_naive,reliability_flag`; gaps are empty fields.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["x", "lambda_estimate", "lambda_naive", "reliability_flag"])?;
        let show = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        for i in 0..self.x.len() {
            w.write_record([
                self.x[i].to_string(),
                show(self.lambda_estimate[i]),
                show(self.lambda_naive[i]),
                self.reliability[i].as_str().to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn classify_site(rho: f64, ell: u32, epsilon: f64) -> Reliability {
    if !rho.is_finite() {
        Reliability::Missing
    } else if rho < epsilon {
        Reliability::NearEmpty
    } else if rho > 1.0 / ell as f64 - epsilon {
        Reliability::NearFull
    } else {
        Reliability::Reliable
    }
}

fn anchor_index(profile: &DensityProfile, anchor: usize) -> Result<usize> {
    if anchor == 0 || anchor > profile.len() {
        return Err(Error::Inference(format!("anchor site {anchor} outside 1..={}", profile.len())));
    }
    Ok(anchor - 1)
}

/// Infers rates with `lambda = 1` at site `x0_anchor` (1-based).
pub fn infer_rates(profile: &DensityProfile, ell: u32, x0_anchor: usize) -> Result<InferenceResult> {
    infer_rates_with(profile, ell, x0_anchor, &InferOptions::default())
}

pub fn infer_rates_with(
    profile: &DensityProfile,
    ell: u32,
    x0_anchor: usize,
    options: &InferOptions,
) -> Result<InferenceResult> {
    if ell == 0 {
        return Err(Error::InvalidParameter("ell must be at least 1".into()));
    }
    let smoothed;
    let profile = match options.smoothing {
        Some(w) if w > 1 => {
            smoothed = profile.smoothed(w)?;
            &smoothed
        }
        _ => profile,
    };
    let i0 = anchor_index(profile, x0_anchor)?;
    let n = profile.len();
    let l = ell as f64;
    let reliability: Vec<Reliability> = profile.rho.iter().map(|&r| classify_site(r, ell, options.epsilon)).collect();
    if reliability[i0] != Reliability::Reliable {
        return Err(Error::Inference(format!(
            "anchor density {} at site {x0_anchor} is too close to 0 or 1/ell",
            profile.rho[i0]
        )));
    }
    let j = h(profile.rho[i0], ell)?;
    let lambda_estimate: Vec<Option<f64>> = profile
        .rho
        .iter()
        .zip(&reliability)
        .map(|(&r, flag)| match flag {
            Reliability::Reliable => h(r, ell).ok().map(|hr| j / hr),
            _ => None,
        })
        .collect();
    let lambda_naive = naive_values(profile, i0);

    let rho0 = profile.rho[0];
    if !(rho0.is_finite() && rho0 < 1.0 / l) {
        return Err(Error::Inference(format!("entry density {rho0} leaves no room for entries")));
    }
    let alpha = j / (1.0 - l * rho0);

    let lambda1 = extrapolate_exit_rate(&profile.x, &lambda_estimate)?;
    let rho1 = profile.rho[n - 1];
    let rho1_minus = j / lambda1;
    let rho1_plus = l * rho1 - (l - 1.0) * rho1_minus;
    if !(rho1_plus > 0.0) {
        return Err(Error::Inference(format!("exit density split gives rho1+ = {rho1_plus}")));
    }
    let beta = j / rho1_plus;
    let star = critical_density(ell);
    Ok(InferenceResult {
        ell,
        x: profile.x.clone(),
        lambda_estimate,
        lambda_naive,
        reliability,
        alpha_estimate: alpha,
        beta_estimate: beta,
        j_estimate: j,
        x0_anchor,
        lambda1_estimate: lambda1,
        rho1_plus,
        alpha_identified: rho0 < star,
        beta_identified: rho1 > star,
    })
}

/// Least-squares line through the reliable estimates in the window before the
/// excluded exit layer, evaluated at `x = 1`.
fn extrapolate_exit_rate(x: &[f64], lambda: &[Option<f64>]) -> Result<f64> {
    let hi = 1.0 - EXIT_EXCLUSION;
    let lo = hi - EXTRAPOLATION_WINDOW;
    let mut pts: Vec<(f64, f64)> = x
        .iter()
        .zip(lambda)
        .filter(|(&xi, _)| xi >= lo && xi < hi)
        .filter_map(|(&xi, l)| l.map(|l| (xi, l)))
        .collect();
    if pts.len() < 2 {
        // short lattices: fall back to every reliable site but the last
        pts = x[..x.len() - 1].iter().zip(lambda).filter_map(|(&xi, l)| l.map(|l| (xi, l))).collect();
    }
    match pts.len() {
        0 => lambda.iter().rev().find_map(|&l| l).ok_or_else(|| Error::Inference("no reliable sites".into())),
        1 => Ok(pts[0].1),
        k => {
            let k = k as f64;
            let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
            let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
            let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
            let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
            let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
            let v = my + slope * (1.0 - mx);
            if v > 0.0 {
                Ok(v)
            } else {
                Err(Error::Inference(format!("extrapolated exit rate {v} is not positive")))
            }
        }
    }
}

fn naive_values(profile: &DensityProfile, i0: usize) -> Vec<Option<f64>> {
    let r0 = profile.rho[i0];
    profile.rho.iter().map(|&r| (r > 0.0 && r.is_finite()).then(|| r0 / r)).collect()
}

/// `lambda_naive = rho(x0) / rho(x)`, the collision-free estimate normalized at site `x0_anchor`.
pub fn naive_estimate(profile: &DensityProfile, x0_anchor: usize) -> Result<RateProfile> {
    let i0 = anchor_index(profile, x0_anchor)?;
    if let Some(k) = profile.rho.iter().position(|&r| !(r > 0.0)) {
        return Err(Error::Inference(format!("naive estimate needs positive densities, site {} has {}", k + 1, profile.rho[k])));
    }
    let values = naive_values(profile, i0).into_iter().map(|v| v.expect("positive densities")).collect();
    RateProfile::new(values, Interpolation::PiecewiseLinear)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hydro::stationary_profile;
    use crate::rates::{Dip, RateField, RateFunction};
    use crate::spec::ModelSpec;
    use proptest::prelude::*;

    fn hydro_profile(alpha: f64, beta: f64, rates: &RateProfile, ell: u32) -> DensityProfile {
        let spec = ModelSpec::open(ell, alpha, beta, rates.clone(), 0).unwrap();
        let p = stationary_profile(&spec, rates.len()).unwrap();
        DensityProfile::from_sites(p.rho).unwrap()
    }

    fn rates() -> RateProfile {
        RateFunction::Dips { base: 0.8, slope: 0.2, dips: vec![Dip { center: 0.5, width: 0.1, depth: 0.4 }] }
            .sample(400, Interpolation::PiecewiseLinear)
            .unwrap()
    }

    #[test]
    fn constant_low_density_example() {
        let p = DensityProfile::from_sites(vec![0.2; 50]).unwrap();
        let r = infer_rates(&p, 1, 17).unwrap();
        assert!((r.j_estimate - 0.16).abs() < 1e-15);
        assert!(r.lambda_estimate.iter().all(|l| (l.unwrap() - 1.0).abs() < 1e-15));
        assert!((r.alpha_estimate - 0.2).abs() < 1e-14);
        assert!((r.beta_estimate - 0.8).abs() < 1e-12);
        assert!(r.alpha_identified && !r.beta_identified);
        let naive = naive_estimate(&p, 1).unwrap();
        assert!(naive.site_rates().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn round_trip_recovers_rates_in_every_phase() {
        let truth = rates();
        for ell in [1u32, 3] {
            for (alpha, beta) in [(0.02, 0.5), (0.5, 0.02), (0.5, 0.5), (0.03, 0.05), (0.05, 0.03)] {
                let p = hydro_profile(alpha, beta, &truth, ell);
                let anchor = 123;
                let r = infer_rates(&p, ell, anchor).unwrap();
                let scale = truth.site(anchor);
                for (k, est) in r.lambda_estimate.iter().enumerate() {
                    let expected = truth.site(k + 1) / scale;
                    let got = est.expect("all sites reliable");
                    assert!((got - expected).abs() < 1e-6 * expected, "ell={ell} a={alpha} b={beta} k={k}");
                }
                assert!((r.lambda_estimate[anchor - 1].unwrap() - 1.0).abs() == 0.0);
            }
        }
    }

    #[test]
    fn low_density_entry_rate_is_recovered() {
        let truth = rates();
        let p = hydro_profile(0.02, 0.5, &truth, 3);
        let r = infer_rates(&p, 3, 1).unwrap();
        let scale = truth.site(1);
        assert!(r.alpha_identified);
        assert!((r.alpha_estimate * scale - 0.02).abs() < 1e-10);
    }

    #[test]
    fn anchor_choice_only_rescales() {
        let truth = rates();
        let p = hydro_profile(0.5, 0.02, &truth, 3);
        let a = infer_rates(&p, 3, 10).unwrap();
        let b = infer_rates(&p, 3, 300).unwrap();
        for i in [0usize, 50, 199, 399] {
            let ra = a.lambda_estimate[i].unwrap() / a.lambda_estimate[77].unwrap();
            let rb = b.lambda_estimate[i].unwrap() / b.lambda_estimate[77].unwrap();
            assert!((ra - rb).abs() < 1e-9 * ra);
        }
    }

    #[test]
    fn naive_estimate_fails_in_high_density() {
        let truth = rates();
        let p = hydro_profile(0.5, 0.02, &truth, 1);
        let naive = naive_estimate(&p, 200).unwrap();
        let scale = truth.site(200);
        let worst = (1..=400)
            .map(|k| (naive.site(k) - truth.site(k) / scale).abs() / (truth.site(k) / scale))
            .fold(0.0, f64::max);
        assert!(worst > 0.2, "{worst}");
        // dilute profiles: O(rho) relative error
        let dilute = hydro_profile(0.005, 0.5, &truth, 1);
        let naive = naive_estimate(&dilute, 200).unwrap();
        let rho_max = dilute.rho.iter().copied().fold(0.0, f64::max);
        for k in 1..=400 {
            let t = truth.site(k) / scale;
            assert!((naive.site(k) - t).abs() / t < 2.0 * rho_max);
        }
    }

    #[test]
    fn edge_densities_are_flagged() {
        let mut rho = vec![0.3; 20];
        rho[4] = 0.0;
        rho[9] = 1.0;
        rho[12] = f64::NAN;
        let p = DensityProfile::from_sites(rho).unwrap();
        let r = infer_rates(&p, 1, 1).unwrap();
        assert_eq!(r.reliability[4], Reliability::NearEmpty);
        assert_eq!(r.reliability[9], Reliability::NearFull);
        assert_eq!(r.reliability[12], Reliability::Missing);
        assert!(r.lambda_estimate[4].is_none() && r.lambda_estimate[9].is_none());
        let filled = r.rate_profile().unwrap();
        assert!((filled.site(5) - 1.0).abs() < 1e-12);
        assert!(infer_rates(&p, 1, 5).is_err());
        assert!(infer_rates(&p, 1, 21).is_err());
        assert!(naive_estimate(&p, 1).is_err());
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("x,lambda_estimate,lambda_naive,reliability_flag\n0,1,1,reliable\n"));
        assert!(text.lines().nth(5).unwrap().ends_with(",,,near_empty"));
    }

    #[test]
    fn json_round_trip() {
        let p = DensityProfile::from_sites(vec![0.1, 0.0, 0.1, 0.12]).unwrap();
        let r = infer_rates(&p, 2, 1).unwrap();
        let text = serde_json::to_string(&r).unwrap();
        let back: InferenceResult = serde_json::from_str(&text).unwrap();
        assert_eq!(back, r);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]
        #[test]
        fn scale_equivariance(c in 0.1f64..10.0, ell in 1u32..4, depth in 0.1f64..0.5, ab in 0usize..3) {
            let f = RateFunction::Dips { base: 1.0, slope: -0.2, dips: vec![Dip { center: 0.4, width: 0.12, depth }] };
            let truth = f.sample(200, Interpolation::PiecewiseLinear).unwrap();
            let (alpha, beta) = [(0.02, 0.6), (0.6, 0.02), (0.6, 0.6)][ab];
            let base = infer_rates(&hydro_profile(alpha, beta, &truth, ell), ell, 50).unwrap();
            let scaled = infer_rates(&hydro_profile(c * alpha, c * beta, &truth.scaled(c).unwrap(), ell), ell, 50).unwrap();
            for i in 0..200 {
                let (a, b) = (base.lambda_estimate[i].unwrap(), scaled.lambda_estimate[i].unwrap());
                prop_assert!((a - b).abs() < 1e-9 * a);
            }
            prop_assert!((base.alpha_estimate - scaled.alpha_estimate).abs() < 1e-9 * base.alpha_estimate);
            prop_assert!((base.beta_estimate - scaled.beta_estimate).abs() < 1e-9 * base.beta_estimate);
            prop_assert!(truth.lambda_min() > 0.0);
        }
    }
}

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use ltasep::hydro::{classify, classify_phase, profile_on, write_phase_scan_csv, PhasePoint};
use ltasep::infer::infer_rates_with;
use ltasep::pde::solve_steady_with;
use ltasep::simulate::{derive_seed, run_tasep_with, run_zrp_with, SimOptions, SimStats};
use ltasep::{DensityProfile, Geometry, ModelSpec, RateField};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{Engine, Mode, RunConfig, SimulateConfig};
use crate::error::CliError;

/// Sites with `x` in this band form the bulk used by compare summaries.
const BULK: (f64, f64) = (0.05, 0.95);

pub struct Context {
    pub out: PathBuf,
    pub pool: rayon::ThreadPool,
}

impl Context {
    pub fn new(out: PathBuf, workers: usize) -> Result<Self, CliError> {
        std::fs::create_dir_all(&out).map_err(|e| CliError::io(format!("creating {}", out.display()), e))?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| CliError::Config(format!("cannot start {workers} workers: {e}")))?;
        Ok(Self { out, pool })
    }

    fn create(&self, name: &str) -> Result<BufWriter<File>, CliError> {
        let path = self.out.join(name);
        File::create(&path)
            .map(BufWriter::new)
            .map_err(|e| CliError::io(format!("creating {}", path.display()), e))
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf, CliError> {
        let mut w = self.create(name)?;
        serde_json::to_writer_pretty(&mut w, value).map_err(|e| CliError::Model(e.into()))?;
        writeln!(w).and_then(|_| w.flush()).map_err(|e| CliError::io(name, e))?;
        Ok(self.out.join(name))
    }

    fn write_with(
        &self,
        name: &str,
        f: impl FnOnce(&mut BufWriter<File>) -> ltasep::Result<()>,
    ) -> Result<PathBuf, CliError> {
        let mut w = self.create(name)?;
        f(&mut w)?;
        w.flush().map_err(|e| CliError::io(name, e))?;
        Ok(self.out.join(name))
    }
}

/// Runs the configured mode and returns the files written.
pub fn run(config: &RunConfig, ctx: &Context) -> Result<Vec<PathBuf>, CliError> {
    let mut written = vec![ctx.write_json("run.json", config)?];
    written.extend(match config.mode {
        Mode::Simulate => simulate(config, ctx)?,
        Mode::Theory => theory(config, ctx)?,
        Mode::Pde => pde(config, ctx)?,
        Mode::Compare => compare(config, ctx)?,
        Mode::Infer => infer(config, ctx)?,
        Mode::PhaseScan => phase_scan(config, ctx)?,
    });
    Ok(written)
}

/// Runs the replicas on the pool and merges them in replica order.
fn simulate_stats(spec: &ModelSpec, sim: &SimulateConfig, ctx: &Context) -> Result<SimStats, CliError> {
    if sim.replicas == 0 {
        return Err(CliError::Config("simulate.replicas must be at least 1".into()));
    }
    let options = SimOptions { burn_in_events: sim.burn_in_events, sample_events: sim.sample_events, batches: sim.batches };
    let engine = sim.engine;
    if engine == Engine::Zrp && spec.geometry == Geometry::Open {
        return Err(CliError::Config("the zrp engine needs a ring geometry".into()));
    }
    let runs: Vec<ltasep::Result<SimStats>> = ctx.pool.install(|| {
        (0..sim.replicas)
            .into_par_iter()
            .map(|r| {
                let replica = spec.clone().with_seed(derive_seed(spec.seed, r as u64));
                match engine {
                    Engine::Tasep => run_tasep_with(&replica, &options),
                    Engine::Zrp => run_zrp_with(&replica, &options),
                }
            })
            .collect()
    });
    let mut runs = runs.into_iter();
    let mut total = runs.next().expect("at least one replica")?;
    for next in runs {
        total.merge(&next?)?;
    }
    Ok(total)
}

fn simulate(config: &RunConfig, ctx: &Context) -> Result<Vec<PathBuf>, CliError> {
    let spec = config.model_spec()?;
    let sim = config.simulate.as_ref().expect("checked");
    let stats = simulate_stats(&spec, sim, ctx)?;
    Ok(vec![
        ctx.write_with("simulation.csv", |w| stats.write_csv(w))?,
        ctx.write_json("simulation.json", &stats.metadata(&spec))?,
    ])
}

fn theory(config: &RunConfig, ctx: &Context) -> Result<Vec<PathBuf>, CliError> {
    let spec = config.model_spec()?;
    let report = classify_phase(&spec)?;
    let grid = config.theory.as_ref().and_then(|t| t.grid);
    let positions = match grid {
        Some(m) if m >= 2 => ltasep::hydro::uniform_grid(m),
        Some(m) => return Err(CliError::Config(format!("theory.grid must be at least 2, got {m}"))),
        None => spec.rates.positions(),
    };
    let profile = profile_on(&report, &spec.rates, &positions)?;
    Ok(vec![
        ctx.write_json("phase_report.json", &report)?,
        ctx.write_with("profile.csv", |w| profile.write_csv(w))?,
    ])
}

#[derive(Serialize)]
struct PdeSummary {
    phase: ltasep::hydro::Phase,
    j: f64,
    steps: usize,
    residual: f64,
    time: f64,
    discontinuities: Vec<ltasep::hydro::Discontinuity>,
}

fn pde(config: &RunConfig, ctx: &Context) -> Result<Vec<PathBuf>, CliError> {
    let spec = config.model_spec()?;
    let options = config.pde.as_ref().expect("checked").options();
    let sol = solve_steady_with(&spec, &options)?;
    let summary = PdeSummary {
        phase: sol.profile.phase,
        j: sol.profile.j_c,
        steps: sol.steps,
        residual: sol.residual,
        time: sol.time,
        discontinuities: sol.profile.discontinuities.clone(),
    };
    Ok(vec![
        ctx.write_with("pde_profile.csv", |w| sol.profile.write_csv(w))?,
        ctx.write_json("pde_summary.json", &summary)?,
    ])
}

#[derive(Serialize)]
struct CompareSummary {
    phase: ltasep::hydro::Phase,
    j_theory: f64,
    j_simulated: f64,
    mae_bulk: f64,
    /// Bulk MAE after averaging the simulated densities over `ell` consecutive sites.
    mae_bulk_block: f64,
    mae_all: f64,
    max_abs_diff: f64,
    bulk_range: (f64, f64),
    /// Sites without a theory value (indeterminate segments), left out of every statistic.
    skipped_sites: usize,
}

fn compare(config: &RunConfig, ctx: &Context) -> Result<Vec<PathBuf>, CliError> {
    let spec = config.model_spec()?;
    if spec.geometry != Geometry::Open {
        return Err(CliError::Config("compare needs an open lattice".into()));
    }
    let report = classify_phase(&spec)?;
    let x = spec.rates.positions();
    let theory = profile_on(&report, &spec.rates, &x)?;
    let sim = config.simulate.as_ref().expect("checked");
    let stats = simulate_stats(&spec, sim, ctx)?;
    let density = stats.density();
    let stderr = stats.density_stderr();
    let diff: Vec<f64> = density.iter().zip(&theory.rho).map(|(s, t)| (s - t).abs()).collect();
    let block = DensityProfile::from_sites(density.clone())?.block_averaged((spec.ell as usize).min(density.len()))?;
    let block_diff: Vec<f64> = block.rho.iter().zip(&theory.rho).map(|(s, t)| (s - t).abs()).collect();
    let mean = |diff: &[f64], keep: &dyn Fn(f64) -> bool| {
        let v: Vec<f64> = diff.iter().zip(&x).filter(|(d, &xi)| d.is_finite() && keep(xi)).map(|(d, _)| *d).collect();
        if v.is_empty() {
            f64::NAN
        } else {
            v.iter().sum::<f64>() / v.len() as f64
        }
    };
    let summary = CompareSummary {
        phase: report.phase,
        j_theory: report.j_c,
        j_simulated: stats.metadata(&spec).exit_current,
        mae_bulk: mean(&diff, &|xi| xi >= BULK.0 && xi <= BULK.1),
        mae_bulk_block: mean(&block_diff, &|xi| xi >= BULK.0 && xi <= BULK.1),
        mae_all: mean(&diff, &|_| true),
        max_abs_diff: diff.iter().copied().filter(|d| d.is_finite()).fold(0.0, f64::max),
        bulk_range: BULK,
        skipped_sites: diff.iter().filter(|d| !d.is_finite()).count(),
    };
    let table = ctx.write_with("compare.csv", |w| {
        let mut w = csv::Writer::from_writer(w);
        w.write_record(["site", "x", "sim_density", "sim_stderr", "theory_density", "theory_branch", "abs_diff"])?;
        for k in 0..x.len() {
            w.write_record([
                (k + 1).to_string(),
                x[k].to_string(),
                density[k].to_string(),
                stderr[k].to_string(),
                theory.rho[k].to_string(),
                theory.branch[k].as_str().to_string(),
                diff[k].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    })?;
    Ok(vec![table, ctx.write_json("compare_summary.json", &summary)?])
}

fn infer(config: &RunConfig, ctx: &Context) -> Result<Vec<PathBuf>, CliError> {
    let section = config.infer.as_ref().expect("checked");
    let path = config.resolve(&section.profile);
    let profile = DensityProfile::from_csv_path(&path).map_err(|e| match e {
        ltasep::Error::Io(io) => CliError::io(format!("reading {}", path.display()), io),
        other => CliError::Config(format!("{}: {other}", path.display())),
    })?;
    let result = infer_rates_with(&profile, section.ell, section.anchor, &section.options())?;
    Ok(vec![
        ctx.write_json("inference.json", &result)?,
        ctx.write_with("inference.csv", |w| result.write_csv(w))?,
    ])
}

fn phase_scan(config: &RunConfig, ctx: &Context) -> Result<Vec<PathBuf>, CliError> {
    let rates = &config.rate_profile()?;
    let ell = config.model.as_ref().expect("checked").ell;
    if ell == 0 {
        return Err(CliError::Config("particle size must be at least 1".into()));
    }
    let scan = config.phase_scan.as_ref().expect("checked");
    let alphas = scan.alpha.values()?;
    let betas = scan.beta.values()?;
    let rows: Vec<ltasep::Result<Vec<PhasePoint>>> = ctx.pool.install(|| {
        alphas
            .par_iter()
            .map(|&alpha| {
                betas
                    .iter()
                    .map(|&beta| {
                        let r = classify(alpha, beta, rates, ell)?;
                        Ok(PhasePoint { alpha, beta, phase: r.phase, j_c: r.j_c })
                    })
                    .collect()
            })
            .collect()
    });
    let mut points = Vec::with_capacity(alphas.len() * betas.len());
    for row in rows {
        points.extend(row?);
    }
    let report = classify(alphas[0], betas[0], rates, ell)?;
    #[derive(Serialize)]
    struct Lines {
        alpha_star: f64,
        beta_star: f64,
        j_max: f64,
        lambda0: f64,
        lambda1: f64,
        lambda_min: f64,
    }
    let lines = Lines {
        alpha_star: report.alpha_star,
        beta_star: report.beta_star,
        j_max: report.j_max,
        lambda0: rates.lambda0(),
        lambda1: rates.lambda1(),
        lambda_min: rates.lambda_min(),
    };
    Ok(vec![
        ctx.write_with("phase_scan.csv", |w| write_phase_scan_csv(w, &points))?,
        ctx.write_json("phase_lines.json", &lines)?,
    ])
}

pub fn default_out(config: &RunConfig) -> PathBuf {
    config.out.as_ref().map(|p| config.resolve(p)).unwrap_or_else(|| Path::new(".").to_path_buf())
}

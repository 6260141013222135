//! Experiment orchestration: each run_* function wraps a library estimator,
//! writes CSV files plus one manifest.json into the output directory, and
//! returns the manifest. Every output file's first line carries the config
//! hash and the seed; data bytes are identical for any worker count.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use serde::Serialize;
use thiserror::Error;

use crate::config::ExperimentConfig;
use crate::exact::ExactCirclePoint;
use crate::lawcheck::{self, LawError, SurvivalCurve};
use crate::measure;
use crate::recurrence::{self, HittingSample, StartMode};
use crate::seed::sample_rng;
use crate::stats;
use crate::systems::{Phase, SystemError};
use crate::torus::{Ball, CirclePoint};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("config: {0}")]
    Config(String),
    #[error("check failed: {0}")]
    CheckFailed(String),
    #[error("estimator: {0}")]
    Estimator(String),
}

impl RunError {
    /// Process exit code: 1 io, 2 config, 3 failed check, 4 estimator.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Io(_) => 1,
            RunError::Config(_) => 2,
            RunError::CheckFailed(_) => 3,
            RunError::Estimator(_) => 4,
        }
    }
}

impl From<LawError> for RunError {
    fn from(e: LawError) -> Self {
        RunError::Estimator(e.to_string())
    }
}

impl From<crate::measure::MeasureError> for RunError {
    fn from(e: crate::measure::MeasureError) -> Self {
        RunError::Estimator(e.to_string())
    }
}

impl From<crate::recurrence::RecurrenceError> for RunError {
    fn from(e: crate::recurrence::RecurrenceError) -> Self {
        RunError::Estimator(e.to_string())
    }
}

impl From<SystemError> for RunError {
    fn from(e: SystemError) -> Self {
        RunError::Estimator(e.to_string())
    }
}

/// Run-level record written to manifest.json exactly once per run.
#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
    pub worker_count: usize,
    pub duration_seconds: f64,
    pub censor_count: u64,
    pub censor_fraction: f64,
    pub summary: serde_json::Value,
}

/// 17 significant digits: doubles survive a round trip through the CSVs.
fn fmt_f(v: f64) -> String {
    format!("{v:.16e}")
}

fn open_csv(
    dir: &Path,
    name: &str,
    hash: &str,
    seed: u64,
    columns: &str,
) -> Result<BufWriter<File>, RunError> {
    let mut w = BufWriter::new(File::create(dir.join(name))?);
    writeln!(w, "# config_hash={hash} seed={seed}")?;
    writeln!(w, "{columns}")?;
    Ok(w)
}

fn with_pool<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> (T, usize) {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .expect("worker pool");
    let count = pool.current_num_threads();
    (pool.install(f), count)
}

fn write_manifest(dir: &Path, manifest: &RunManifest) -> Result<(), RunError> {
    let file = File::create(dir.join("manifest.json"))?;
    serde_json::to_writer_pretty(BufWriter::new(file), manifest)
        .map_err(|e| RunError::Io(e.into()))?;
    Ok(())
}

fn file_suffix(index: usize, total: usize) -> String {
    if total == 1 {
        String::new()
    } else {
        format!("_{index}")
    }
}

/// Largest fraction of censored samples tolerated by a law run before it
/// fails loudly.
pub const CENSOR_FRACTION_LIMIT: f64 = 0.001;

struct LawRun {
    radius: f64,
    mass: f64,
    cutoff: u64,
    batch: Vec<HittingSample>,
    curve: SurvivalCurve,
    ks: f64,
}

fn law_run(
    config: &ExperimentConfig,
    workers: usize,
    subcommand: &str,
    conditional: bool,
) -> Result<RunManifest, RunError> {
    let t0 = Instant::now();
    fs::create_dir_all(&config.out_dir)?;
    let hash = config.hash();
    let t_grid = config.t_grid();
    let (result, worker_count) = with_pool(workers, || -> Result<Vec<LawRun>, RunError> {
        let est = measure::estimate_stationary(
            config.system,
            config.burn_in,
            config.nu_samples,
            config.seed,
        );
        let mut runs = Vec::new();
        for &radius in &config.radii {
            let target = Ball::new(CirclePoint::new(config.target), radius);
            let mass = est.ball_mass(&target).value;
            if mass <= 0.0 {
                return Err(RunError::Estimator(format!(
                    "target ball at radius {radius} has zero estimated mass"
                )));
            }
            let cutoff = config.cutoff.unwrap_or(recurrence::default_cutoff(mass));
            let support;
            let mode = if conditional {
                if est.is_empirical() {
                    support = est.samples_in_ball(&target);
                    let acceptance = support.len() as f64 / est.len() as f64;
                    if acceptance < 1e-6 {
                        return Err(LawError::RejectionStall { acceptance }.into());
                    }
                    StartMode::FromSamples(&support)
                } else {
                    StartMode::InArc
                }
            } else {
                StartMode::Stationary {
                    burn_in: config.burn_in,
                }
            };
            let batch = recurrence::hitting_batch(
                config.system,
                target,
                mass,
                config.samples,
                cutoff,
                config.seed,
                subcommand,
                mode,
            );
            let curve = lawcheck::survival_curve(&batch, &t_grid)?;
            let ks = curve.ks_exponential();
            runs.push(LawRun {
                radius,
                mass,
                cutoff,
                batch,
                curve,
                ks,
            });
        }
        Ok(runs)
    });
    let runs = result?;

    let total = config.radii.len();
    let mut censor_total = 0u64;
    let mut run_summaries = Vec::new();
    for (i, run) in runs.iter().enumerate() {
        let suffix = file_suffix(i, total);
        let mut samples = open_csv(
            &config.out_dir,
            &format!("samples{suffix}.csv"),
            &hash,
            config.seed,
            "sample_id,tau,rescaled_tau,censored",
        )?;
        for s in &run.batch {
            let k = s.tau.bound();
            writeln!(
                samples,
                "{},{},{},{}",
                s.sample_id,
                k,
                fmt_f(k as f64 * s.rescale),
                s.tau.is_censored() as u8
            )?;
        }
        samples.flush()?;

        let mut survival = open_csv(
            &config.out_dir,
            &format!("survival{suffix}.csv"),
            &hash,
            config.seed,
            "t,empirical_survival,exp_neg_t,abs_diff",
        )?;
        for (t, s) in run.curve.t_grid.iter().zip(&run.curve.survival) {
            let e = (-t).exp();
            writeln!(
                survival,
                "{},{},{},{}",
                fmt_f(*t),
                fmt_f(*s),
                fmt_f(e),
                fmt_f((s - e).abs())
            )?;
        }
        survival.flush()?;

        censor_total += run.curve.censor_count as u64;
        run_summaries.push(serde_json::json!({
            "radius": run.radius,
            "ball_mass": run.mass,
            "cutoff": run.cutoff,
            "ks": run.ks,
            "censor_count": run.curve.censor_count,
            "censor_fraction": run.curve.censor_count as f64 / config.samples as f64,
        }));
    }

    let grand_n = (config.samples * total) as f64;
    let manifest = RunManifest {
        subcommand: subcommand.to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: hash,
        seed: config.seed,
        worker_count,
        duration_seconds: t0.elapsed().as_secs_f64(),
        censor_count: censor_total,
        censor_fraction: censor_total as f64 / grand_n,
        summary: serde_json::json!({
            "system": config.system.describe(),
            "target": config.target,
            "samples_per_radius": config.samples,
            "conditional_start": conditional,
            "runs": run_summaries,
        }),
    };
    write_manifest(&config.out_dir, &manifest)?;

    for run in &runs {
        let fraction = run.curve.censor_count as f64 / config.samples as f64;
        if fraction >= CENSOR_FRACTION_LIMIT {
            return Err(RunError::CheckFailed(format!(
                "censored fraction {fraction:.4} at radius {} reaches the {CENSOR_FRACTION_LIMIT} limit; raise cutoff or samples",
                run.radius
            )));
        }
        if let Some(tol) = config.ks_tol {
            if run.ks > tol {
                return Err(RunError::CheckFailed(format!(
                    "KS distance {:.5} at radius {} exceeds tolerance {tol}",
                    run.ks, run.radius
                )));
            }
        }
    }
    Ok(manifest)
}

/// Hitting-time law from stationary starts: samples.csv, survival.csv,
/// manifest.json.
pub fn run_hitting_law(config: &ExperimentConfig, workers: usize) -> Result<RunManifest, RunError> {
    law_run(config, workers, "hitting-law", false)
}

/// Return-time law: identical schema, starts conditioned inside the target
/// ball.
pub fn run_return_law(config: &ExperimentConfig, workers: usize) -> Result<RunManifest, RunError> {
    law_run(config, workers, "return-law", true)
}

/// Dumps one driven orbit: orbit.csv with step, driving coordinate, phase.
pub fn run_orbit(config: &ExperimentConfig, _workers: usize) -> Result<RunManifest, RunError> {
    let t0 = Instant::now();
    fs::create_dir_all(&config.out_dir)?;
    let hash = config.hash();
    let mut orbit = config.system.spawn(sample_rng(config.seed, "orbit", 0));
    let mut csv = open_csv(
        &config.out_dir,
        "orbit.csv",
        &hash,
        config.seed,
        "step,driving,phase",
    )?;
    writeln!(
        csv,
        "0,{},{}",
        fmt_f(orbit.driving_value()),
        fmt_f(orbit.position().value())
    )?;
    for step in 1..=config.steps {
        orbit.step();
        writeln!(
            csv,
            "{step},{},{}",
            fmt_f(orbit.driving_value()),
            fmt_f(orbit.position().value())
        )?;
    }
    csv.flush()?;
    let manifest = RunManifest {
        subcommand: "orbit".to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: hash,
        seed: config.seed,
        worker_count: 1,
        duration_seconds: t0.elapsed().as_secs_f64(),
        censor_count: 0,
        censor_fraction: 0.0,
        summary: serde_json::json!({
            "system": config.system.describe(),
            "steps": config.steps,
        }),
    };
    write_manifest(&config.out_dir, &manifest)?;
    Ok(manifest)
}

/// Return-time scaling across radii: rate.csv (censored radii excluded)
/// plus the regression slopes in the manifest.
pub fn run_rate(config: &ExperimentConfig, workers: usize) -> Result<RunManifest, RunError> {
    let t0 = Instant::now();
    if config.radii.len() < 3 {
        return Err(RunError::Config(
            "experiment.radius: the rate experiment needs at least 3 radii".to_string(),
        ));
    }
    fs::create_dir_all(&config.out_dir)?;
    let hash = config.hash();
    let start = if config.system.exact_phase() {
        // snap the start onto a nearby arithmetically typical rational so
        // exact orbits stay exact
        let mut rng = sample_rng(config.seed, "rate-start", 0);
        Phase::Exact(ExactCirclePoint::random_in_arc(
            &mut rng,
            config.target,
            1e-12,
        ))
    } else {
        Phase::Float(config.target)
    };
    let (result, worker_count) = with_pool(workers, || {
        recurrence::recurrence_rate(
            config.system,
            start,
            &config.radii,
            config.seed,
            "rate",
            |r| config.cutoff.unwrap_or(recurrence::default_cutoff_rule(r)),
        )
    });
    let est = result?;

    let mut csv = open_csv(
        &config.out_dir,
        "rate.csv",
        &hash,
        config.seed,
        "r,tau,log2_r,log2_tau",
    )?;
    for (r, tau) in est.radii.iter().zip(&est.taus) {
        if let Some(k) = tau.hit_value() {
            writeln!(
                csv,
                "{},{k},{},{}",
                fmt_f(*r),
                fmt_f(r.log2()),
                fmt_f((k as f64).log2())
            )?;
        }
    }
    csv.flush()?;

    let manifest = RunManifest {
        subcommand: "recurrence-rate".to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: hash,
        seed: config.seed,
        worker_count,
        duration_seconds: t0.elapsed().as_secs_f64(),
        censor_count: est.censored as u64,
        censor_fraction: est.censored as f64 / est.radii.len() as f64,
        summary: serde_json::json!({
            "system": config.system.describe(),
            "start": config.target,
            "radii": est.radii,
            "slope": est.slope,
            "lower_slope": est.lower_slope,
            "upper_slope": est.upper_slope,
            "censored_radii": est.censored,
        }),
    };
    write_manifest(&config.out_dir, &manifest)?;
    Ok(manifest)
}

/// Conditional-vs-unconditional hitting survival gap per radius:
/// delta.csv (suffixed per radius when several) and the sup gaps in the
/// manifest.
pub fn run_delta(config: &ExperimentConfig, workers: usize) -> Result<RunManifest, RunError> {
    let t0 = Instant::now();
    fs::create_dir_all(&config.out_dir)?;
    let hash = config.hash();
    let (result, worker_count) = with_pool(workers, || -> Result<_, RunError> {
        let est = measure::estimate_stationary(
            config.system,
            config.burn_in,
            config.nu_samples,
            config.seed,
        );
        let mut out = Vec::new();
        for &radius in &config.radii {
            let target = Ball::new(CirclePoint::new(config.target), radius);
            let mass = est.ball_mass(&target).value;
            if mass <= 0.0 {
                return Err(RunError::Estimator(format!(
                    "target ball at radius {radius} has zero estimated mass"
                )));
            }
            let k_max = config.k_max.unwrap_or((20.0 / mass).ceil() as u64);
            let delta = lawcheck::delta_estimator(
                config.system,
                target,
                &est,
                k_max,
                config.samples,
                config.burn_in,
                config.seed,
            )?;
            out.push((radius, delta));
        }
        Ok(out)
    });
    let deltas = result?;

    let total = config.radii.len();
    let mut censor_total = 0u64;
    let mut summaries = Vec::new();
    for (i, (radius, delta)) in deltas.iter().enumerate() {
        let suffix = file_suffix(i, total);
        let mut csv = open_csv(
            &config.out_dir,
            &format!("delta{suffix}.csv"),
            &hash,
            config.seed,
            "k,surv_uncond,surv_cond,abs_diff",
        )?;
        for (j, k) in delta.k_grid.iter().enumerate() {
            writeln!(
                csv,
                "{k},{},{},{}",
                fmt_f(delta.surv_uncond[j]),
                fmt_f(delta.surv_cond[j]),
                fmt_f((delta.surv_uncond[j] - delta.surv_cond[j]).abs())
            )?;
        }
        csv.flush()?;
        let k_last = delta.k_grid.len() - 1;
        let censored = ((delta.surv_uncond[k_last] + delta.surv_cond[k_last])
            * delta.n as f64)
            .round() as u64;
        censor_total += censored;
        summaries.push(serde_json::json!({
            "radius": radius,
            "ball_mass": delta.ball_mass,
            "k_max": delta.k_grid.len(),
            "delta_hat": delta.delta_hat,
            "argmax_k": delta.argmax_k,
            "delta_se": delta.delta_se,
        }));
    }
    let manifest = RunManifest {
        subcommand: "delta".to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: hash,
        seed: config.seed,
        worker_count,
        duration_seconds: t0.elapsed().as_secs_f64(),
        censor_count: censor_total,
        censor_fraction: censor_total as f64 / (2 * config.samples * total) as f64,
        summary: serde_json::json!({
            "system": config.system.describe(),
            "target": config.target,
            "samples_per_arm": config.samples,
            "runs": summaries,
        }),
    };
    write_manifest(&config.out_dir, &manifest)?;
    Ok(manifest)
}

/// Covariance decay across the lag grid: correlations.csv plus the
/// polynomial-decay verdicts in the manifest.
pub fn run_correlations(
    config: &ExperimentConfig,
    workers: usize,
) -> Result<RunManifest, RunError> {
    let t0 = Instant::now();
    fs::create_dir_all(&config.out_dir)?;
    let hash = config.hash();
    let (series, worker_count) = with_pool(workers, || {
        lawcheck::correlation_estimator(
            config.system,
            config.psi,
            config.phi,
            &config.n_grid,
            config.samples,
            config.burn_in,
            config.seed,
        )
    });
    let mut csv = open_csv(
        &config.out_dir,
        "correlations.csv",
        &hash,
        config.seed,
        "n,estimate,stderr",
    )?;
    for (j, n) in series.n_grid.iter().enumerate() {
        writeln!(
            csv,
            "{n},{},{}",
            fmt_f(series.estimates[j]),
            fmt_f(series.stderrs[j])
        )?;
    }
    csv.flush()?;

    let verdicts = lawcheck::superpoly_fit(&series, &[1.0, 2.0, 4.0]);
    let manifest = RunManifest {
        subcommand: "correlations".to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: hash,
        seed: config.seed,
        worker_count,
        duration_seconds: t0.elapsed().as_secs_f64(),
        censor_count: 0,
        censor_fraction: 0.0,
        summary: serde_json::json!({
            "system": config.system.describe(),
            "psi": series.psi.describe(),
            "phi": series.phi.describe(),
            "psi_lipschitz": series.psi.lipschitz_norm(),
            "phi_sup": series.phi.sup_norm(),
            "samples": config.samples,
            "superpoly": verdicts
                .iter()
                .map(|v| serde_json::json!({"p": v.p, "pass": v.pass}))
                .collect::<Vec<_>>(),
        }),
    };
    write_manifest(&config.out_dir, &manifest)?;
    Ok(manifest)
}

/// Annulus-regularity bound on the (radius, width) grid: annulus.csv and a
/// pass/fail verdict (failures exit nonzero).
pub fn run_annulus(config: &ExperimentConfig, workers: usize) -> Result<RunManifest, RunError> {
    let t0 = Instant::now();
    fs::create_dir_all(&config.out_dir)?;
    let hash = config.hash();
    let rho_grid: Vec<f64> = match &config.rho_grid {
        Some(list) => list.clone(),
        None => {
            let mut v: Vec<f64> = config
                .radii
                .iter()
                .flat_map(|r| [r / 2.0, r / 4.0, r / 8.0])
                .collect();
            v.sort_by(|a, b| b.partial_cmp(a).unwrap());
            v.dedup();
            v
        }
    };
    let (pair, worker_count) = with_pool(workers, || {
        let est = measure::estimate_stationary(
            config.system,
            config.burn_in,
            config.nu_samples,
            config.seed,
        );
        let report = measure::annulus_check(
            &est,
            CirclePoint::new(config.target),
            config.annulus_a,
            config.annulus_b,
            &config.radii,
            &rho_grid,
        );
        (est.is_empirical(), report)
    });
    let (empirical, report) = pair;

    let mut csv = open_csv(
        &config.out_dir,
        "annulus.csv",
        &hash,
        config.seed,
        "r,rho,mass,bound,ratio",
    )?;
    for cell in &report.cells {
        writeln!(
            csv,
            "{},{},{},{},{}",
            fmt_f(cell.r),
            fmt_f(cell.rho),
            fmt_f(cell.mass),
            fmt_f(cell.bound),
            fmt_f(cell.ratio)
        )?;
    }
    csv.flush()?;

    let manifest = RunManifest {
        subcommand: "annulus-check".to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: hash,
        seed: config.seed,
        worker_count,
        duration_seconds: t0.elapsed().as_secs_f64(),
        censor_count: 0,
        censor_fraction: 0.0,
        summary: serde_json::json!({
            "system": config.system.describe(),
            "point": report.point,
            "a": report.a,
            "b": report.b,
            "empirical_measure": empirical,
            "cells": report.cells.len(),
            "worst_ratio": report.worst_ratio,
            "pass": report.pass,
        }),
    };
    write_manifest(&config.out_dir, &manifest)?;
    if !report.pass {
        return Err(RunError::CheckFailed(format!(
            "annulus bound violated: worst mass/bound ratio {:.4}",
            report.worst_ratio
        )));
    }
    Ok(manifest)
}

/// Stationary-law sample dump (stationary.csv) with a one-step pushforward
/// self-check, plus a uniformity check when the stationary law is Lebesgue.
pub fn run_stationary(config: &ExperimentConfig, workers: usize) -> Result<RunManifest, RunError> {
    let t0 = Instant::now();
    fs::create_dir_all(&config.out_dir)?;
    let hash = config.hash();
    let (pair, worker_count) = with_pool(workers, || {
        let samples = measure::sample_stationary(
            config.system,
            config.burn_in,
            config.samples,
            config.seed,
            "stationary",
        );
        let push = measure::stationarity_check(&samples, config.system, config.seed, 1e-3);
        (samples, push)
    });
    let (samples, push) = pair;

    let mut csv = open_csv(
        &config.out_dir,
        "stationary.csv",
        &hash,
        config.seed,
        "sample_id,x",
    )?;
    for (i, x) in samples.iter().enumerate() {
        writeln!(csv, "{i},{}", fmt_f(*x))?;
    }
    csv.flush()?;

    let uniform = if config.system.lebesgue_stationary() {
        let d = stats::ks_statistic_uniform(&samples);
        let crit = stats::ks_critical_one_sample(1e-3, samples.len());
        Some((d, crit, d < crit))
    } else {
        None
    };

    let manifest = RunManifest {
        subcommand: "stationary".to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: hash,
        seed: config.seed,
        worker_count,
        duration_seconds: t0.elapsed().as_secs_f64(),
        censor_count: 0,
        censor_fraction: 0.0,
        summary: serde_json::json!({
            "system": config.system.describe(),
            "n": samples.len(),
            "burn_in": config.burn_in,
            "pushforward_ks": push.statistic,
            "pushforward_critical": push.critical,
            "pushforward_pass": push.pass,
            "uniform_ks": uniform.map(|u| u.0),
            "uniform_critical": uniform.map(|u| u.1),
            "uniform_pass": uniform.map(|u| u.2),
        }),
    };
    write_manifest(&config.out_dir, &manifest)?;

    if !push.pass {
        return Err(RunError::CheckFailed(format!(
            "one-step pushforward KS {:.5} at critical {:.5}",
            push.statistic, push.critical
        )));
    }
    if let Some((d, crit, pass)) = uniform {
        if !pass {
            return Err(RunError::CheckFailed(format!(
                "uniformity KS {d:.5} at critical {crit:.5}"
            )));
        }
    }
    Ok(manifest)
}

/// Ladder of radii used by the rate subcommand when none are configured.
pub fn dyadic_radius_ladder() -> Vec<f64> {
    (5..=12).map(|j| 0.5f64.powi(j)).collect()
}

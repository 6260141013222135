//! Experiment configuration: a small sectioned key=value text format,
//! strict validation with named errors, defaults for every optional key,
//! and a canonical hash that pins a run's parameters (worker count and
//! output location excluded, so reruns elsewhere verify byte-for-byte).

use std::fmt::Write as _;
use std::path::PathBuf;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::lawcheck::Observable;
use crate::systems::System;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: cannot parse {text:?}")]
    Malformed { line: usize, text: String },
    #[error("unknown key {key}")]
    UnknownKey { key: String },
    #[error("{key}: {constraint}")]
    OutOfRange { key: String, constraint: String },
    #[error("missing required key {key}")]
    MissingRequired { key: String },
}

pub const DEFAULT_TARGET: f64 = 0.41421356237309515; // sqrt(2) - 1
pub const DEFAULT_RADIUS: f64 = 0.005;
pub const DEFAULT_SAMPLES: usize = 50_000;
pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_BURN_IN: u64 = 1000;
pub const DEFAULT_NU_SAMPLES: usize = 500_000;
pub const DEFAULT_STEPS: u64 = 1000;
pub const DEFAULT_ANNULUS_A: f64 = 0.5;
pub const DEFAULT_ANNULUS_B: f64 = 0.0;

/// One fully resolved experiment description. A single bag of settings is
/// shared by all subcommands; each reads the fields it needs.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub system: System,
    /// Center of the target ball, in [0, 1).
    pub target: f64,
    /// Ball radii, each in (0, 1/2). One entry per run for the law
    /// experiments; the full list for rate, delta, and annulus runs.
    pub radii: Vec<f64>,
    /// Whether radii came from the file or a flag rather than the default;
    /// the rate subcommand swaps the default for a dyadic ladder.
    pub radii_explicit: bool,
    pub samples: usize,
    pub seed: u64,
    pub burn_in: u64,
    /// Censoring cutoff; None applies ceil(50 / ball mass).
    pub cutoff: Option<u64>,
    /// Sample count for empirical stationary-measure estimation.
    pub nu_samples: usize,
    pub t_min: f64,
    pub t_max: f64,
    pub t_points: usize,
    /// Truncation for the delta estimator; None applies ceil(20 / mass).
    pub k_max: Option<u64>,
    /// Lags for correlations and checkpoints for the geometric-gap report.
    pub n_grid: Vec<u64>,
    pub psi: Observable,
    pub phi: Observable,
    pub annulus_a: f64,
    pub annulus_b: f64,
    /// Annulus widths; None derives r/2, r/4, r/8 per radius.
    pub rho_grid: Option<Vec<f64>>,
    /// Step count for the orbit subcommand.
    pub steps: u64,
    /// When set, law runs fail (exit nonzero) if the KS distance exceeds it.
    pub ks_tol: Option<f64>,
    pub out_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            system: System::markov_doubling_tripling(),
            target: DEFAULT_TARGET,
            radii: vec![DEFAULT_RADIUS],
            radii_explicit: false,
            samples: DEFAULT_SAMPLES,
            seed: DEFAULT_SEED,
            burn_in: DEFAULT_BURN_IN,
            cutoff: None,
            nu_samples: DEFAULT_NU_SAMPLES,
            t_min: 0.05,
            t_max: 6.0,
            t_points: 60,
            k_max: None,
            n_grid: (0..=10).collect(),
            psi: Observable::Cos2Pi,
            phi: Observable::ArcIndicator { lo: 0.0, len: 0.25 },
            annulus_a: DEFAULT_ANNULUS_A,
            annulus_b: DEFAULT_ANNULUS_B,
            rho_grid: None,
            steps: DEFAULT_STEPS,
            ks_tol: None,
            out_dir: PathBuf::from("out"),
        }
    }
}

fn out_of_range(key: &str, constraint: &str) -> ConfigError {
    ConfigError::OutOfRange {
        key: key.to_string(),
        constraint: constraint.to_string(),
    }
}

fn parse_f64(key: &str, value: &str) -> Result<f64, ConfigError> {
    value
        .parse::<f64>()
        .map_err(|_| out_of_range(key, "must be a real number"))
}

fn parse_u64(key: &str, value: &str) -> Result<u64, ConfigError> {
    value
        .parse::<u64>()
        .map_err(|_| out_of_range(key, "must be a nonnegative integer"))
}

fn parse_usize(key: &str, value: &str) -> Result<usize, ConfigError> {
    value
        .parse::<usize>()
        .map_err(|_| out_of_range(key, "must be a nonnegative integer"))
}

fn parse_f64_list(key: &str, value: &str) -> Result<Vec<f64>, ConfigError> {
    value
        .split(',')
        .map(|part| parse_f64(key, part.trim()))
        .collect()
}

fn parse_u64_list(key: &str, value: &str) -> Result<Vec<u64>, ConfigError> {
    value
        .split(',')
        .map(|part| parse_u64(key, part.trim()))
        .collect()
}

fn parse_observable(key: &str, value: &str) -> Result<Observable, ConfigError> {
    let bad = || out_of_range(key, "must be cos | sawtooth | const:<value> | arc:<lo>:<len>");
    match value {
        "cos" | "cos2pi" => return Ok(Observable::Cos2Pi),
        "sawtooth" => return Ok(Observable::Sawtooth),
        _ => {}
    }
    if let Some(rest) = value.strip_prefix("const:") {
        let c = rest.parse::<f64>().map_err(|_| bad())?;
        return Ok(Observable::Constant(c));
    }
    if let Some(rest) = value.strip_prefix("arc:") {
        let parts: Vec<&str> = rest.split(':').collect();
        if parts.len() != 2 {
            return Err(bad());
        }
        let lo = parts[0].parse::<f64>().map_err(|_| bad())?;
        let len = parts[1].parse::<f64>().map_err(|_| bad())?;
        if !(0.0..1.0).contains(&lo) || !(len > 0.0 && len <= 1.0) {
            return Err(out_of_range(
                key,
                "arc needs lo in [0,1) and len in (0,1]",
            ));
        }
        return Ok(Observable::ArcIndicator { lo, len });
    }
    Err(bad())
}

/// Raw values as read from the file, before family resolution.
#[derive(Default)]
struct RawConfig {
    family: Option<String>,
    multiplier: Option<u32>,
    epsilon: Option<f64>,
    beta_min: Option<f64>,
    beta_max: Option<f64>,
    target: Option<f64>,
    radii: Option<Vec<f64>>,
    samples: Option<usize>,
    seed: Option<u64>,
    burn_in: Option<u64>,
    cutoff: Option<u64>,
    nu_samples: Option<usize>,
    t_min: Option<f64>,
    t_max: Option<f64>,
    t_points: Option<usize>,
    k_max: Option<u64>,
    n_grid: Option<Vec<u64>>,
    psi: Option<Observable>,
    phi: Option<Observable>,
    annulus_a: Option<f64>,
    annulus_b: Option<f64>,
    rho_grid: Option<Vec<f64>>,
    steps: Option<u64>,
    ks_tol: Option<f64>,
    out_dir: Option<PathBuf>,
}

/// Parses the documented `[system] / [experiment] / [output]` key=value
/// format. Every key is optional except `system.family`; later duplicates
/// win. `#` starts a comment.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let mut raw = RawConfig::default();
    let mut section = String::new();
    for (idx, line_raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match line_raw.find('#') {
            Some(pos) => &line_raw[..pos],
            None => line_raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[') {
            let name = name.strip_suffix(']').ok_or(ConfigError::Malformed {
                line: line_no,
                text: line_raw.trim().to_string(),
            })?;
            match name {
                "system" | "experiment" | "output" => section = name.to_string(),
                _ => {
                    return Err(ConfigError::Malformed {
                        line: line_no,
                        text: line_raw.trim().to_string(),
                    })
                }
            }
            continue;
        }
        let (key, value) = line.split_once('=').ok_or(ConfigError::Malformed {
            line: line_no,
            text: line_raw.trim().to_string(),
        })?;
        let key = key.trim();
        let value = value.trim();
        if section.is_empty() {
            return Err(ConfigError::Malformed {
                line: line_no,
                text: line_raw.trim().to_string(),
            });
        }
        let qualified = format!("{section}.{key}");
        match (section.as_str(), key) {
            ("system", "family") => raw.family = Some(value.to_string()),
            ("system", "multiplier") => {
                let m = parse_u64(&qualified, value)?;
                if !(2..=64).contains(&m) {
                    return Err(out_of_range(&qualified, "must be an integer in [2, 64]"));
                }
                raw.multiplier = Some(m as u32);
            }
            ("system", "epsilon") => {
                let e = parse_f64(&qualified, value)?;
                if !(e > 0.0 && e < 1.0) {
                    return Err(out_of_range(&qualified, "must be in (0, 1)"));
                }
                raw.epsilon = Some(e);
            }
            ("system", "beta_min") => raw.beta_min = Some(parse_f64(&qualified, value)?),
            ("system", "beta_max") => raw.beta_max = Some(parse_f64(&qualified, value)?),
            ("experiment", "target") => {
                let t = parse_f64(&qualified, value)?;
                if !(0.0..1.0).contains(&t) {
                    return Err(out_of_range(&qualified, "must be in [0, 1)"));
                }
                raw.target = Some(t);
            }
            ("experiment", "radius") => {
                let rs = parse_f64_list(&qualified, value)?;
                if rs.is_empty() || rs.iter().any(|r| !(*r > 0.0 && *r < 0.5)) {
                    return Err(out_of_range(
                        &qualified,
                        "every radius must be in (0, 0.5)",
                    ));
                }
                raw.radii = Some(rs);
            }
            ("experiment", "samples") => {
                let n = parse_usize(&qualified, value)?;
                if n == 0 {
                    return Err(out_of_range(&qualified, "must be at least 1"));
                }
                raw.samples = Some(n);
            }
            ("experiment", "seed") => raw.seed = Some(parse_u64(&qualified, value)?),
            ("experiment", "burn_in") => raw.burn_in = Some(parse_u64(&qualified, value)?),
            ("experiment", "cutoff") => {
                let c = parse_u64(&qualified, value)?;
                if c == 0 {
                    return Err(out_of_range(&qualified, "must be at least 1"));
                }
                raw.cutoff = Some(c);
            }
            ("experiment", "nu_samples") => {
                let n = parse_usize(&qualified, value)?;
                if n < 1000 {
                    return Err(out_of_range(
                        &qualified,
                        "must be at least 1000 for statistical use",
                    ));
                }
                raw.nu_samples = Some(n);
            }
            ("experiment", "t_min") => {
                let t = parse_f64(&qualified, value)?;
                if t <= 0.0 {
                    return Err(out_of_range(&qualified, "must be positive"));
                }
                raw.t_min = Some(t);
            }
            ("experiment", "t_max") => {
                let t = parse_f64(&qualified, value)?;
                if t <= 0.0 {
                    return Err(out_of_range(&qualified, "must be positive"));
                }
                raw.t_max = Some(t);
            }
            ("experiment", "t_points") => {
                let n = parse_usize(&qualified, value)?;
                if n < 2 {
                    return Err(out_of_range(&qualified, "must be at least 2"));
                }
                raw.t_points = Some(n);
            }
            ("experiment", "k_max") => {
                let k = parse_u64(&qualified, value)?;
                if k == 0 {
                    return Err(out_of_range(&qualified, "must be at least 1"));
                }
                raw.k_max = Some(k);
            }
            ("experiment", "n_grid") => {
                let ns = parse_u64_list(&qualified, value)?;
                if ns.is_empty() || ns.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(out_of_range(
                        &qualified,
                        "must be a strictly increasing integer list",
                    ));
                }
                raw.n_grid = Some(ns);
            }
            ("experiment", "psi") => raw.psi = Some(parse_observable(&qualified, value)?),
            ("experiment", "phi") => raw.phi = Some(parse_observable(&qualified, value)?),
            ("experiment", "a") => {
                let a = parse_f64(&qualified, value)?;
                if a <= 0.0 {
                    return Err(out_of_range(&qualified, "must be positive"));
                }
                raw.annulus_a = Some(a);
            }
            ("experiment", "b") => {
                let b = parse_f64(&qualified, value)?;
                if b < 0.0 {
                    return Err(out_of_range(&qualified, "must be nonnegative"));
                }
                raw.annulus_b = Some(b);
            }
            ("experiment", "rho") => {
                let rhos = parse_f64_list(&qualified, value)?;
                if rhos.is_empty() || rhos.iter().any(|r| !(*r > 0.0 && *r < 0.5)) {
                    return Err(out_of_range(&qualified, "every width must be in (0, 0.5)"));
                }
                raw.rho_grid = Some(rhos);
            }
            ("experiment", "steps") => {
                let s = parse_u64(&qualified, value)?;
                if s == 0 {
                    return Err(out_of_range(&qualified, "must be at least 1"));
                }
                raw.steps = Some(s);
            }
            ("experiment", "ks_tol") => {
                let t = parse_f64(&qualified, value)?;
                if !(t > 0.0 && t <= 1.0) {
                    return Err(out_of_range(&qualified, "must be in (0, 1]"));
                }
                raw.ks_tol = Some(t);
            }
            ("output", "dir") => raw.out_dir = Some(PathBuf::from(value)),
            _ => return Err(ConfigError::UnknownKey { key: qualified }),
        }
    }
    resolve(raw)
}

fn reject_foreign_key(
    present: bool,
    key: &str,
    family: &str,
) -> Result<(), ConfigError> {
    if present {
        return Err(out_of_range(
            key,
            &format!("not accepted by family={family}"),
        ));
    }
    Ok(())
}

fn resolve(raw: RawConfig) -> Result<ExperimentConfig, ConfigError> {
    let family = raw.family.ok_or(ConfigError::MissingRequired {
        key: "system.family".to_string(),
    })?;
    let system = match family.as_str() {
        "doubling" | "tripling" | "markov" | "skew" | "resample" => {
            reject_foreign_key(raw.multiplier.is_some(), "system.multiplier", &family)?;
            reject_foreign_key(raw.epsilon.is_some(), "system.epsilon", &family)?;
            reject_foreign_key(raw.beta_min.is_some(), "system.beta_min", &family)?;
            reject_foreign_key(raw.beta_max.is_some(), "system.beta_max", &family)?;
            match family.as_str() {
                "doubling" => System::Affine { multiplier: 2 },
                "tripling" => System::Affine { multiplier: 3 },
                "markov" => System::markov_doubling_tripling(),
                "skew" => System::SkewProduct,
                _ => System::UniformResample,
            }
        }
        "affine" => {
            reject_foreign_key(raw.epsilon.is_some(), "system.epsilon", &family)?;
            reject_foreign_key(raw.beta_min.is_some(), "system.beta_min", &family)?;
            reject_foreign_key(raw.beta_max.is_some(), "system.beta_max", &family)?;
            System::Affine {
                multiplier: raw.multiplier.unwrap_or(2),
            }
        }
        "perturbed" => {
            reject_foreign_key(raw.beta_min.is_some(), "system.beta_min", &family)?;
            reject_foreign_key(raw.beta_max.is_some(), "system.beta_max", &family)?;
            System::PerturbedAffine {
                multiplier: raw.multiplier.unwrap_or(2),
                epsilon: raw.epsilon.unwrap_or(0.1),
            }
        }
        "beta" => {
            reject_foreign_key(raw.multiplier.is_some(), "system.multiplier", &family)?;
            reject_foreign_key(raw.epsilon.is_some(), "system.epsilon", &family)?;
            let lo = raw.beta_min.unwrap_or(2.0);
            let hi = raw.beta_max.unwrap_or(3.0);
            if lo <= 1.0 {
                return Err(out_of_range("system.beta_min", "must exceed 1"));
            }
            if hi <= lo {
                return Err(out_of_range(
                    "system.beta_max",
                    "interval is empty: beta_max must exceed beta_min",
                ));
            }
            System::BetaUniform { lo, hi }
        }
        _ => {
            return Err(out_of_range(
                "system.family",
                "must be one of doubling, tripling, affine, markov, skew, beta, perturbed, resample",
            ))
        }
    };
    let defaults = ExperimentConfig::default();
    let t_min = raw.t_min.unwrap_or(defaults.t_min);
    let t_max = raw.t_max.unwrap_or(defaults.t_max);
    if t_max <= t_min {
        return Err(out_of_range("experiment.t_max", "must exceed t_min"));
    }
    Ok(ExperimentConfig {
        system,
        target: raw.target.unwrap_or(defaults.target),
        radii_explicit: raw.radii.is_some(),
        radii: raw.radii.unwrap_or(defaults.radii),
        samples: raw.samples.unwrap_or(defaults.samples),
        seed: raw.seed.unwrap_or(defaults.seed),
        burn_in: raw.burn_in.unwrap_or(defaults.burn_in),
        cutoff: raw.cutoff,
        nu_samples: raw.nu_samples.unwrap_or(defaults.nu_samples),
        t_min,
        t_max,
        t_points: raw.t_points.unwrap_or(defaults.t_points),
        k_max: raw.k_max,
        n_grid: raw.n_grid.unwrap_or(defaults.n_grid),
        psi: raw.psi.unwrap_or(defaults.psi),
        phi: raw.phi.unwrap_or(defaults.phi),
        annulus_a: raw.annulus_a.unwrap_or(defaults.annulus_a),
        annulus_b: raw.annulus_b.unwrap_or(defaults.annulus_b),
        rho_grid: raw.rho_grid,
        steps: raw.steps.unwrap_or(defaults.steps),
        ks_tol: raw.ks_tol,
        out_dir: raw.out_dir.unwrap_or(defaults.out_dir),
    })
}

impl ExperimentConfig {
    /// Survival-curve evaluation grid: t = 0 plus `t_points` geometric
    /// points from t_min to t_max.
    pub fn t_grid(&self) -> Vec<f64> {
        crate::lawcheck::geometric_t_grid(self.t_min, self.t_max, self.t_points)
    }

    /// Annulus widths for a given radius: configured list, or r/2, r/4,
    /// r/8.
    pub fn rho_grid_for(&self, r: f64) -> Vec<f64> {
        match &self.rho_grid {
            Some(list) => list.clone(),
            None => vec![r / 2.0, r / 4.0, r / 8.0],
        }
    }

    /// First 16 hex digits of the SHA-256 of the canonical parameter
    /// rendering. Identical across platforms for identical parameters;
    /// output location and worker count do not participate.
    pub fn hash(&self) -> String {
        let mut canon = String::new();
        let _ = writeln!(canon, "system={}", self.system.describe());
        let _ = writeln!(canon, "target={:.17e}", self.target);
        let radii: Vec<String> = self.radii.iter().map(|r| format!("{r:.17e}")).collect();
        let _ = writeln!(canon, "radii={}", radii.join(","));
        let _ = writeln!(canon, "samples={}", self.samples);
        let _ = writeln!(canon, "seed={}", self.seed);
        let _ = writeln!(canon, "burn_in={}", self.burn_in);
        let _ = writeln!(
            canon,
            "cutoff={}",
            self.cutoff.map_or("auto".to_string(), |c| c.to_string())
        );
        let _ = writeln!(canon, "nu_samples={}", self.nu_samples);
        let _ = writeln!(
            canon,
            "t_grid={:.17e},{:.17e},{}",
            self.t_min, self.t_max, self.t_points
        );
        let _ = writeln!(
            canon,
            "k_max={}",
            self.k_max.map_or("auto".to_string(), |k| k.to_string())
        );
        let ns: Vec<String> = self.n_grid.iter().map(|n| n.to_string()).collect();
        let _ = writeln!(canon, "n_grid={}", ns.join(","));
        let _ = writeln!(canon, "psi={}", self.psi.describe());
        let _ = writeln!(canon, "phi={}", self.phi.describe());
        let _ = writeln!(canon, "annulus_a={:.17e}", self.annulus_a);
        let _ = writeln!(canon, "annulus_b={:.17e}", self.annulus_b);
        let rho = match &self.rho_grid {
            Some(list) => list
                .iter()
                .map(|r| format!("{r:.17e}"))
                .collect::<Vec<_>>()
                .join(","),
            None => "auto".to_string(),
        };
        let _ = writeln!(canon, "rho={rho}");
        let _ = writeln!(canon, "steps={}", self.steps);
        let _ = writeln!(
            canon,
            "ks_tol={}",
            self.ks_tol.map_or("none".to_string(), |t| format!("{t:.17e}"))
        );
        let digest = Sha256::digest(canon.as_bytes());
        let mut hex = String::with_capacity(16);
        for byte in digest.iter().take(8) {
            let _ = write!(hex, "{byte:02x}");
        }
        hex
    }
}

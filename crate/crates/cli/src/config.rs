//! Flat `key = value` run configuration.
//!
//! One pair per line; `#` starts a comment. Keys not listed in
//! [`RunConfig::KEYS`] are rejected.

use std::fmt::Write as _;
use std::path::PathBuf;

use num_complex::Complex64;
use qreduce::analytic::BranchSpec;
use qreduce::experiment::ExperimentSpec;
use qreduce::hilbert::{FockCutoff, ModelParams};
use qreduce::sde::{IntegratorConfig, DEFAULT_TRUNCATION_TOLERANCE};

use crate::CliError;

pub const OUT_DIR_ENV: &str = "QREDUCE_OUT_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CutoffChoice {
    Auto,
    Fixed(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub omega: f64,
    pub nu: f64,
    pub g: f64,
    pub lambda: f64,
    pub alpha_re: f64,
    pub alpha_im: f64,
    pub c1_re: f64,
    pub c1_im: f64,
    pub c2_re: f64,
    pub c2_im: f64,
    pub dt: f64,
    pub sample_interval: f64,
    pub t_max: f64,
    pub n_max: CutoffChoice,
    pub threshold: f64,
    pub n_paths: usize,
    pub seed: u64,
    pub out_dir: Option<PathBuf>,
    pub g_list: Vec<f64>,
    pub halt_after: Option<f64>,
    pub workers: Option<usize>,
    pub renormalize: bool,
    pub truncation_tolerance: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        Self {
            omega: 0.5,
            nu: 0.5,
            g: 4.0,
            lambda: 0.2,
            alpha_re: 4.0,
            alpha_im: 0.0,
            c1_re: h,
            c1_im: 0.0,
            c2_re: h,
            c2_im: 0.0,
            dt: 1e-4,
            sample_interval: 0.01,
            t_max: 3.0,
            n_max: CutoffChoice::Auto,
            threshold: 0.99,
            n_paths: 100,
            seed: 1,
            out_dir: None,
            g_list: Vec::new(),
            halt_after: None,
            workers: None,
            renormalize: true,
            truncation_tolerance: DEFAULT_TRUNCATION_TOLERANCE,
        }
    }
}

fn parse_f64(key: &str, value: &str) -> Result<f64, CliError> {
    let v: f64 = value
        .parse()
        .map_err(|_| CliError::Config(format!("{key}: cannot parse {value:?} as a number")))?;
    if !v.is_finite() {
        return Err(CliError::Config(format!("{key}: {value:?} is not finite")));
    }
    Ok(v)
}

fn parse_int<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value
        .parse()
        .map_err(|_| CliError::Config(format!("{key}: cannot parse {value:?} as a non-negative integer")))
}

impl RunConfig {
    pub const KEYS: [&'static str; 23] = [
        "omega",
        "nu",
        "g",
        "lambda",
        "alpha_re",
        "alpha_im",
        "c1_re",
        "c1_im",
        "c2_re",
        "c2_im",
        "dt",
        "sample_interval",
        "t_max",
        "n_max",
        "threshold",
        "n_paths",
        "seed",
        "out_dir",
        "g_list",
        "halt_after",
        "workers",
        "renormalize",
        "truncation_tolerance",
    ];

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut config = Self::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::Config(format!("line {}: expected key = value, got {raw:?}", lineno + 1))
            })?;
            config.set(key.trim(), value.trim())?;
        }
        Ok(config)
    }

    /// Applies a `key=value` override.
    pub fn apply_override(&mut self, pair: &str) -> Result<(), CliError> {
        let (key, value) = pair
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("override {pair:?} is not key=value")))?;
        self.set(key.trim(), value.trim())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        match key {
            "omega" => self.omega = parse_f64(key, value)?,
            "nu" => self.nu = parse_f64(key, value)?,
            "g" => self.g = parse_f64(key, value)?,
            "lambda" => self.lambda = parse_f64(key, value)?,
            "alpha_re" => self.alpha_re = parse_f64(key, value)?,
            "alpha_im" => self.alpha_im = parse_f64(key, value)?,
            "c1_re" => self.c1_re = parse_f64(key, value)?,
            "c1_im" => self.c1_im = parse_f64(key, value)?,
            "c2_re" => self.c2_re = parse_f64(key, value)?,
            "c2_im" => self.c2_im = parse_f64(key, value)?,
            "dt" => self.dt = parse_f64(key, value)?,
            "sample_interval" => self.sample_interval = parse_f64(key, value)?,
            "t_max" => self.t_max = parse_f64(key, value)?,
            "n_max" => {
                self.n_max = if value == "auto" {
                    CutoffChoice::Auto
                } else {
                    CutoffChoice::Fixed(parse_int(key, value)?)
                }
            }
            "threshold" => self.threshold = parse_f64(key, value)?,
            "n_paths" => self.n_paths = parse_int(key, value)?,
            "seed" => self.seed = parse_int(key, value)?,
            "out_dir" => {
                if value.is_empty() {
                    return Err(CliError::Config("out_dir: empty path".into()));
                }
                self.out_dir = Some(PathBuf::from(value))
            }
            "g_list" => {
                self.g_list = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| parse_f64(key, s))
                    .collect::<Result<_, _>>()?
            }
            "halt_after" => {
                self.halt_after = if value == "none" {
                    None
                } else {
                    Some(parse_f64(key, value)?)
                }
            }
            "workers" => {
                self.workers = if value == "auto" {
                    None
                } else {
                    Some(parse_int(key, value)?)
                }
            }
            "renormalize" => {
                self.renormalize = match value {
                    "true" => true,
                    "false" => false,
                    _ => {
                        return Err(CliError::Config(format!(
                            "renormalize: expected true or false, got {value:?}"
                        )))
                    }
                }
            }
            "truncation_tolerance" => self.truncation_tolerance = parse_f64(key, value)?,
            _ => return Err(CliError::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Serializes every key in [`Self::KEYS`] order; `out_dir` only when set.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut line = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        line("omega", self.omega.to_string());
        line("nu", self.nu.to_string());
        line("g", self.g.to_string());
        line("lambda", self.lambda.to_string());
        line("alpha_re", self.alpha_re.to_string());
        line("alpha_im", self.alpha_im.to_string());
        line("c1_re", self.c1_re.to_string());
        line("c1_im", self.c1_im.to_string());
        line("c2_re", self.c2_re.to_string());
        line("c2_im", self.c2_im.to_string());
        line("dt", self.dt.to_string());
        line("sample_interval", self.sample_interval.to_string());
        line("t_max", self.t_max.to_string());
        line(
            "n_max",
            match self.n_max {
                CutoffChoice::Auto => "auto".into(),
                CutoffChoice::Fixed(n) => n.to_string(),
            },
        );
        line("threshold", self.threshold.to_string());
        line("n_paths", self.n_paths.to_string());
        line("seed", self.seed.to_string());
        if let Some(dir) = &self.out_dir {
            line("out_dir", dir.display().to_string());
        }
        line(
            "g_list",
            self.g_list
                .iter()
                .map(f64::to_string)
                .collect::<Vec<_>>()
                .join(","),
        );
        line(
            "halt_after",
            self.halt_after.map_or("none".into(), |h| h.to_string()),
        );
        line("workers", self.workers.map_or("auto".into(), |w| w.to_string()));
        line("renormalize", self.renormalize.to_string());
        line("truncation_tolerance", self.truncation_tolerance.to_string());
        out
    }

    /// Output directory: config key, then `QREDUCE_OUT_DIR`, then `out`.
    pub fn resolved_out_dir(&self) -> PathBuf {
        self.out_dir
            .clone()
            .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("out"))
    }

    /// Branch amplitudes rescaled to unit total probability, so the
    /// unnormalized `c1 = c2 = 1/2` convention is accepted too.
    pub fn branch(&self) -> Result<BranchSpec, CliError> {
        let c1 = Complex64::new(self.c1_re, self.c1_im);
        let c2 = Complex64::new(self.c2_re, self.c2_im);
        let total = (c1.norm_sqr() + c2.norm_sqr()).sqrt();
        if total == 0.0 {
            return Err(CliError::Config("c1 and c2 are both zero".into()));
        }
        BranchSpec::new(
            c1 / total,
            c2 / total,
            Complex64::new(self.alpha_re, self.alpha_im),
        )
        .map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn experiment_spec(&self) -> Result<ExperimentSpec, CliError> {
        let params = ModelParams::new(self.omega, self.nu, self.g, self.lambda)
            .map_err(|e| CliError::Config(e.to_string()))?;
        let branch = self.branch()?;
        let integrator = IntegratorConfig {
            dt: self.dt,
            renormalize_each_step: self.renormalize,
            sample_interval: self.sample_interval,
            truncation_tolerance: self.truncation_tolerance,
        };
        integrator
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        let cutoff = match self.n_max {
            CutoffChoice::Auto => FockCutoff::auto(branch.alpha.norm(), params.g, self.t_max),
            CutoffChoice::Fixed(n) => FockCutoff::new(n).map_err(|e| CliError::Config(e.to_string()))?,
        };
        let spec = ExperimentSpec {
            params,
            branch,
            cutoff,
            integrator,
            t_max: self.t_max,
            threshold: self.threshold,
            n_paths: self.n_paths,
            seed: self.seed,
            halt_after: self.halt_after,
        };
        spec.validate().map_err(|e| CliError::Config(e.to_string()))?;
        if self.workers == Some(0) {
            return Err(CliError::Config("workers must be at least 1".into()));
        }
        Ok(spec)
    }
}

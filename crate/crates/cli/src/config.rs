//! Run configuration: `key = value` lines, `#` comments, command-line
//! overrides on top. Unknown keys are rejected.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use psca_core::{HyperParams, PscaError, Result, Scenario, Variant};

/// Labels attached to the target database in single-domain evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalLabels {
    GroundTruth,
    Pseudo,
}

impl EvalLabels {
    fn as_str(self) -> &'static str {
        match self {
            EvalLabels::GroundTruth => "ground-truth",
            EvalLabels::Pseudo => "pseudo",
        }
    }
}

impl FromStr for EvalLabels {
    type Err = PscaError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ground-truth" | "truth" => Ok(EvalLabels::GroundTruth),
            "pseudo" => Ok(EvalLabels::Pseudo),
            other => Err(PscaError::Config(format!("unknown eval_labels {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub hp: HyperParams,
    pub standardize: bool,
    pub scenario: Scenario,
    pub eval_labels: EvalLabels,
    pub variant: Variant,
    pub test_fraction: f64,
    pub source: PathBuf,
    pub target: PathBuf,
    pub model_dir: PathBuf,
    pub report_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            hp: HyperParams::default(),
            standardize: false,
            scenario: Scenario::CrossDomain,
            eval_labels: EvalLabels::GroundTruth,
            variant: Variant::Full,
            test_fraction: 0.10,
            source: PathBuf::from("source.csv"),
            target: PathBuf::from("target.csv"),
            model_dir: PathBuf::from("model"),
            report_dir: PathBuf::from("report"),
        }
    }
}

pub const KEYS: &[&str] = &[
    "lambda1",
    "lambda2",
    "lambda3",
    "sigma",
    "beta",
    "eta",
    "q",
    "r",
    "t1",
    "t2",
    "tol",
    "eps",
    "seed",
    "centroid_rounds",
    "standardize",
    "scenario",
    "eval_labels",
    "variant",
    "test_fraction",
    "source",
    "target",
    "model_dir",
    "report_dir",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| PscaError::Config(format!("invalid value {value:?} for {key}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(PscaError::Config(format!("invalid value {value:?} for {key}"))),
    }
}

impl RunConfig {
    /// Reads `path`, or starts from defaults when `None`, then applies
    /// `key=value` overrides in order.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut cfg = RunConfig::default();
        if let Some(path) = path {
            let text = fs::read_to_string(path).map_err(|e| PscaError::io(path, e))?;
            cfg.apply_text(&text)?;
        }
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| PscaError::Config(format!("override {o:?} is not key=value")))?;
            cfg.set(k.trim(), v.trim())?;
        }
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| PscaError::Config(format!("line {}: expected key = value", lineno + 1)))?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let hp = &mut self.hp;
        match key {
            "lambda1" => hp.lambda1 = parse(key, value)?,
            "lambda2" => hp.lambda2 = parse(key, value)?,
            "lambda3" => hp.lambda3 = parse(key, value)?,
            "sigma" => hp.sigma = parse(key, value)?,
            "beta" => hp.beta = parse(key, value)?,
            "eta" => hp.eta = parse(key, value)?,
            "q" => hp.q = if value == "auto" { None } else { Some(parse(key, value)?) },
            "r" => hp.r = parse(key, value)?,
            "t1" => hp.t1 = parse(key, value)?,
            "t2" => hp.t2 = parse(key, value)?,
            "tol" => hp.tol = parse(key, value)?,
            "eps" => hp.eps = parse(key, value)?,
            "seed" => hp.seed = parse(key, value)?,
            "centroid_rounds" => hp.centroid_rounds = parse(key, value)?,
            "standardize" => self.standardize = parse_bool(key, value)?,
            "scenario" => self.scenario = value.parse()?,
            "eval_labels" => self.eval_labels = value.parse()?,
            "variant" => {
                self.variant = match value {
                    "full" => Variant::Full,
                    "direct" => Variant::DirectQuantization,
                    other => return Err(PscaError::Config(format!("unknown variant {other:?}"))),
                }
            }
            "test_fraction" => self.test_fraction = parse(key, value)?,
            "source" => self.source = PathBuf::from(value),
            "target" => self.target = PathBuf::from(value),
            "model_dir" => self.model_dir = PathBuf::from(value),
            "report_dir" => self.report_dir = PathBuf::from(value),
            other => return Err(PscaError::Config(format!("unknown configuration key {other:?}"))),
        }
        Ok(())
    }

    /// Every key with its current value, in [`KEYS`] order. Floats use the
    /// shortest round-tripping form, so the text parses back to `self`.
    pub fn to_text(&self) -> String {
        let hp = &self.hp;
        let mut out = String::new();
        for &key in KEYS {
            let value = match key {
                "lambda1" => hp.lambda1.to_string(),
                "lambda2" => hp.lambda2.to_string(),
                "lambda3" => hp.lambda3.to_string(),
                "sigma" => hp.sigma.to_string(),
                "beta" => hp.beta.to_string(),
                "eta" => hp.eta.to_string(),
                "q" => hp.q.map_or_else(|| "auto".to_string(), |q| q.to_string()),
                "r" => hp.r.to_string(),
                "t1" => hp.t1.to_string(),
                "t2" => hp.t2.to_string(),
                "tol" => hp.tol.to_string(),
                "eps" => hp.eps.to_string(),
                "seed" => hp.seed.to_string(),
                "centroid_rounds" => hp.centroid_rounds.to_string(),
                "standardize" => self.standardize.to_string(),
                "scenario" => self.scenario.to_string(),
                "eval_labels" => self.eval_labels.as_str().to_string(),
                "variant" => match self.variant {
                    Variant::Full => "full".to_string(),
                    Variant::DirectQuantization => "direct".to_string(),
                },
                "test_fraction" => self.test_fraction.to_string(),
                "source" => self.source.display().to_string(),
                "target" => self.target.display().to_string(),
                "model_dir" => self.model_dir.display().to_string(),
                "report_dir" => self.report_dir.display().to_string(),
                _ => unreachable!(),
            };
            let _ = writeln!(out, "{key} = {value}");
        }
        out
    }
}

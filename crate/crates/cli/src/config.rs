//! Flat `section.key = value` configuration with typed access.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use boselab::covariance::Variant;
use boselab::hs::McConfig;
use boselab::lattice::{build_interaction, build_kinetic};
use boselab::{InteractionKind, InteractionOperator, KineticKind, OneBodyOperator, TorusLattice};

use crate::CliError;

const DEFAULTS: &[(&str, &str)] = &[
    ("model.d", "1"),
    ("model.L", "2"),
    ("model.eta", "1"),
    ("model.kinetic", "laplacian"),
    ("model.m2", "0"),
    ("model.W", ""),
    ("model.mu", "0"),
    ("model.interaction", "onsite"),
    ("model.v0", "1"),
    ("model.profile", ""),
    ("ensemble.N", "2"),
    ("ensemble.mu", "-0.5"),
    ("ensemble.beta", "1"),
    ("ensemble.ncut", "60"),
    ("discretization.ntau", "8,16,32,64"),
    ("discretization.variant", "Q"),
    ("discretization.b", "false"),
    ("mc.nsamples", "10000"),
    ("mc.seed", "0"),
    ("mc.workers", "0"),
    ("output.format", "csv"),
    ("output.path", ""),
    ("bogoliubov.sigma", "1"),
    ("bogoliubov.m", "0"),
    ("bogoliubov.v", "1"),
    ("bogoliubov.w", "0.5,1,2"),
    ("bogoliubov.t", "0.5,1,2"),
    ("bogoliubov.d", "3"),
    ("bogoliubov.grid", "64"),
    ("bogoliubov.box", "16"),
    ("bogoliubov.pmax", "4"),
    ("bogoliubov.points", "9"),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

/// Raw key/value table: defaults, then the file, then `--set` overrides.
#[derive(Debug, Clone)]
pub struct RawConfig {
    values: BTreeMap<String, String>,
}

impl Default for RawConfig {
    fn default() -> Self {
        Self::new()
    }
}

impl RawConfig {
    pub fn new() -> Self {
        let values = DEFAULTS.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        Self { values }
    }

    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, CliError> {
        let mut raw = Self::new();
        if let Some(path) = path {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
            raw.merge_text(&text)?;
        }
        for item in overrides {
            let (k, v) = item
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("override {item:?} is not KEY=VALUE")))?;
            raw.set(k.trim(), v.trim())?;
        }
        Ok(raw)
    }

    pub fn merge_text(&mut self, text: &str) -> Result<(), CliError> {
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("line {}: expected `section.key = value`", lineno + 1)))?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        match self.values.get_mut(key) {
            Some(slot) => {
                *slot = value.to_string();
                Ok(())
            }
            None => Err(CliError::Config(format!("unknown key {key:?}"))),
        }
    }

    pub fn get(&self, key: &str) -> &str {
        &self.values[key]
    }

    pub fn entries(&self) -> &BTreeMap<String, String> {
        &self.values
    }

    fn parse<T: FromStr>(&self, key: &str) -> Result<T, CliError>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key)
            .parse()
            .map_err(|e| CliError::Config(format!("{key} = {:?}: {e}", self.get(key))))
    }

    fn list<T: FromStr>(&self, key: &str) -> Result<Vec<T>, CliError>
    where
        T::Err: std::fmt::Display,
    {
        let text = self.get(key);
        if text.is_empty() {
            return Ok(Vec::new());
        }
        text.split(',')
            .map(|s| {
                s.trim()
                    .parse()
                    .map_err(|e| CliError::Config(format!("{key} entry {:?}: {e}", s.trim())))
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct Model {
    pub lattice: Arc<TorusLattice>,
    pub kinetic: KineticKind,
    pub mu: f64,
    pub interaction: Option<InteractionKind>,
}

impl Model {
    /// `𝓔 - μ` with the given chemical potential.
    pub fn kinetic_operator(&self, mu: f64) -> Result<OneBodyOperator, CliError> {
        Ok(build_kinetic(&self.lattice, &self.kinetic, mu)?)
    }

    pub fn interaction_operator(&self) -> Result<InteractionOperator, CliError> {
        match &self.interaction {
            Some(kind) => Ok(build_interaction(&self.lattice, kind)?),
            None => Ok(InteractionOperator::zero(&self.lattice)),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BogoliubovConfig {
    pub sigma: f64,
    pub m: f64,
    pub v: f64,
    pub w: Vec<f64>,
    pub t: Vec<f64>,
    pub d: usize,
    pub grid: usize,
    pub box_len: f64,
    pub pmax: f64,
    pub points: usize,
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub raw: RawConfig,
    pub model: Model,
    pub n: usize,
    pub grand_mu: f64,
    pub beta: f64,
    pub ncut: usize,
    pub ntau: Vec<usize>,
    pub variant: Variant,
    pub include_b: bool,
    pub mc: McConfig,
    pub format: Format,
    pub path: Option<PathBuf>,
    pub bogoliubov: BogoliubovConfig,
}

impl ExperimentConfig {
    /// Parses every key and builds the operators once so that precondition
    /// failures surface before any subcommand runs.
    pub fn from_raw(raw: RawConfig) -> Result<Self, CliError> {
        let d: usize = raw.parse("model.d")?;
        let l: usize = raw.parse("model.L")?;
        let eta: f64 = raw.parse("model.eta")?;
        let kinetic = match raw.get("model.kinetic") {
            "laplacian" => KineticKind::Laplacian,
            "mass" => KineticKind::LaplacianPlusMass { m2: raw.parse("model.m2")? },
            "potential" => KineticKind::ExternalPotential(raw.list("model.W")?),
            other => {
                return Err(CliError::Config(format!(
                    "model.kinetic = {other:?}: expected laplacian, mass or potential"
                )))
            }
        };
        let interaction = match raw.get("model.interaction") {
            "onsite" => Some(InteractionKind::Onsite(raw.parse("model.v0")?)),
            "profile" => Some(InteractionKind::Profile(raw.list("model.profile")?)),
            "radial" => Some(InteractionKind::Radial(raw.list("model.profile")?)),
            "none" => None,
            other => {
                return Err(CliError::Config(format!(
                    "model.interaction = {other:?}: expected onsite, profile, radial or none"
                )))
            }
        };
        let variant: Variant = raw
            .get("discretization.variant")
            .parse()
            .map_err(|e| CliError::Config(format!("discretization.variant: {e}")))?;
        let format = match raw.get("output.format") {
            "csv" => Format::Csv,
            "json" => Format::Json,
            other => return Err(CliError::Config(format!("output.format = {other:?}: expected csv or json"))),
        };
        let path = match raw.get("output.path") {
            "" => None,
            p => Some(PathBuf::from(p)),
        };
        let bogoliubov = BogoliubovConfig {
            sigma: raw.parse("bogoliubov.sigma")?,
            m: raw.parse("bogoliubov.m")?,
            v: raw.parse("bogoliubov.v")?,
            w: raw.list("bogoliubov.w")?,
            t: raw.list("bogoliubov.t")?,
            d: raw.parse("bogoliubov.d")?,
            grid: raw.parse("bogoliubov.grid")?,
            box_len: raw.parse("bogoliubov.box")?,
            pmax: raw.parse("bogoliubov.pmax")?,
            points: raw.parse("bogoliubov.points")?,
        };
        let cfg = Self {
            model: Model {
                lattice: Arc::new(TorusLattice::new(d, l, eta)?),
                kinetic,
                mu: raw.parse("model.mu")?,
                interaction,
            },
            n: raw.parse("ensemble.N")?,
            grand_mu: raw.parse("ensemble.mu")?,
            beta: raw.parse("ensemble.beta")?,
            ncut: raw.parse("ensemble.ncut")?,
            ntau: raw.list("discretization.ntau")?,
            variant,
            include_b: raw.parse("discretization.b")?,
            mc: McConfig {
                nsamples: raw.parse("mc.nsamples")?,
                seed: raw.parse("mc.seed")?,
                workers: raw.parse("mc.workers")?,
            },
            format,
            path,
            bogoliubov,
            raw,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::Precondition(msg));
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return bad(format!("ensemble.beta must be > 0, got {}", self.beta));
        }
        if self.ntau.is_empty() || self.ntau.contains(&0) {
            return bad("discretization.ntau must be a non-empty list of positive integers".into());
        }
        if self.mc.nsamples == 0 {
            return bad("mc.nsamples must be >= 1".into());
        }
        self.model.kinetic_operator(self.model.mu)?;
        self.model.interaction_operator()?;
        Ok(())
    }
}

//! Run configuration: a TOML file declaring measures, systems and
//! experiments.
//!
//! ```toml
//! master_seed = 20240601        # mandatory
//! threads = 4                   # optional, defaults to all cores
//! output = "out"                # optional, relative to the config file
//! format = "both"               # json | csv | both
//!
//! [check]
//! system = "cbi"
//! theorems = ["corollary-4.3"]
//!
//! [measures.stable]
//! kind = "stable"               # stable | tempered-stable | finite-activity | point-mass | tabulated
//! alpha = 1.5
//! scale = 1.0
//! role = "compensated-driver"   # or "subordinator"
//!
//! [systems.cbi]
//! family = "cbi"                # cbi | linear | power-diffusion | custom-tabulated
//! a = 1.0
//! b = 0.1
//! beta = -0.5
//! c = 1.0
//! r = 2.0
//! q = 1.5
//! nu0 = "stable"
//!
//! [[experiments]]
//! name = "converge"
//! kind = "converge"             # simulate | couple | converge | scan | cbi | moment
//! system = "cbi"
//! x0 = 1.0
//! cells = 1000
//! levels = 4
//! paths = 1000
//! mode = "nonneg"               # plain | nonneg | truncated | nonneg-truncated
//! ```
//!
//! The full grammar is documented in `docs/config.md`.

use crate::error::{Error, Result};
use crate::lab::{ExperimentSpec, ScanTemplate};
use crate::levy_measure::{LevyMeasure, MeasureShape, Role};
use crate::noise::{NoiseSpec, SmallJumpMode};
use crate::sde::{CbiParams, Coefficient, JumpCoefficient, SdeSystem, SimulationMode};
use crate::yw::Modulus;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputFormat {
    Json,
    Csv,
    #[default]
    Both,
}

impl OutputFormat {
    pub fn json(self) -> bool {
        self != OutputFormat::Csv
    }

    pub fn csv(self) -> bool {
        self != OutputFormat::Json
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub master_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
    #[serde(default)]
    pub format: OutputFormat,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub check: Option<CheckDecl>,
    #[serde(default)]
    pub measures: BTreeMap<String, MeasureDecl>,
    #[serde(default)]
    pub systems: BTreeMap<String, SystemDecl>,
    #[serde(default)]
    pub experiments: Vec<ExperimentDecl>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckDecl {
    pub system: String,
    /// Verdict ids gating the exit code; all theorems when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theorems: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureDecl {
    #[serde(flatten)]
    pub shape: MeasureShape,
    #[serde(default = "default_role")]
    pub role: Role,
}

fn default_role() -> Role {
    Role::CompensatedDriver
}

impl MeasureDecl {
    pub fn build(&self) -> Result<LevyMeasure> {
        LevyMeasure::new(self.shape.clone(), self.role)
    }
}

/// Piecewise-linear coefficient table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Table {
    pub knots: Vec<f64>,
    pub values: Vec<f64>,
}

impl Table {
    fn coefficient(&self) -> Coefficient {
        Coefficient::Tabulated { knots: self.knots.clone(), values: self.values.clone() }
    }
}

/// Coefficient families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum Family {
    /// `(a|x|)^{1/r} dB + sign(x)(c|x|)^{1/q} dL0 + (beta·x + b) dt + dL1`.
    Cbi { a: f64, b: f64, beta: f64, c: f64, r: f64, q: f64 },
    /// `σ = sigma_slope·x`, `b = drift_slope·x + drift_intercept`,
    /// `h0 = jump_slope·x + jump_intercept`, `h1 = 1` when a subordinator is set.
    Linear {
        #[serde(default)]
        sigma_slope: f64,
        #[serde(default)]
        drift_slope: f64,
        #[serde(default)]
        drift_intercept: f64,
        #[serde(default)]
        jump_slope: f64,
        #[serde(default)]
        jump_intercept: f64,
    },
    /// `σ = (sigma_scale|x|)^sigma_exponent`, `h0 = sign(x)(jump_scale|x|)^jump_exponent`.
    PowerDiffusion {
        sigma_scale: f64,
        sigma_exponent: f64,
        #[serde(default)]
        drift_slope: f64,
        #[serde(default)]
        drift_intercept: f64,
        #[serde(default)]
        jump_scale: f64,
        #[serde(default = "one")]
        jump_exponent: f64,
    },
    CustomTabulated {
        sigma: Table,
        drift: Table,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        jump: Option<Table>,
    },
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemDecl {
    #[serde(flatten)]
    pub family: Family,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu0: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu1: Option<String>,
    /// Brownian driver on or off; on by default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub brownian: Option<bool>,
    /// Overrides of the declared regularity.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    /// Modulus spec such as `power:0.5:2`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho_modulus: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_modulus: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub envelope: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nonneg_conditions: Option<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Simulate,
    Couple,
    Converge,
    Scan,
    Cbi,
    Moment,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Simulate => "simulate",
            ExperimentKind::Couple => "couple",
            ExperimentKind::Converge => "converge",
            ExperimentKind::Scan => "scan",
            ExperimentKind::Cbi => "cbi",
            ExperimentKind::Moment => "moment",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeDecl {
    #[default]
    Plain,
    Nonneg,
    Truncated,
    NonnegTruncated,
}

fn default_x0() -> f64 {
    1.0
}
fn default_horizon() -> f64 {
    1.0
}
fn default_cells() -> usize {
    100
}
fn default_levels() -> usize {
    1
}
fn default_paths() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentDecl {
    pub name: String,
    pub kind: ExperimentKind,
    pub system: String,
    #[serde(default = "default_x0")]
    pub x0: f64,
    /// Second initial value of a coupling run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0_b: Option<f64>,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_cells")]
    pub cells: usize,
    #[serde(default = "default_levels")]
    pub levels: usize,
    #[serde(default = "default_paths")]
    pub paths: usize,
    #[serde(default)]
    pub mode: ModeDecl,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncation: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub small_jumps: Option<SmallJumpMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alphas: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exponents: Option<Vec<f64>>,
    #[serde(default)]
    pub first_stream: u64,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// SHA-256 of the canonical JSON encoding, without `threads` and
    /// `output`, which do not affect results.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.threads = None;
        canonical.output = None;
        let json = serde_json::to_vec(&canonical).expect("configuration serialises");
        hex::encode(Sha256::digest(&json))
    }

    /// Checks every name reference and every declared value.
    pub fn validate(&self) -> Result<()> {
        let cfg = |m: String| Err(Error::Config(m));
        if self.threads == Some(0) {
            return cfg("threads must be positive".into());
        }
        for (name, m) in &self.measures {
            m.build().map_err(|e| Error::Config(format!("measures.{name}: {e}")))?;
        }
        for name in self.systems.keys() {
            self.system(name)?;
        }
        if let Some(c) = &self.check {
            if !self.systems.contains_key(&c.system) {
                return cfg(format!("check.system: unknown system {:?}", c.system));
            }
        }
        let mut seen = std::collections::BTreeSet::new();
        for (i, e) in self.experiments.iter().enumerate() {
            let at = format!("experiments[{i}] ({})", e.name);
            if !seen.insert(e.name.clone()) {
                return cfg(format!("{at}: duplicate experiment name"));
            }
            if e.name.is_empty() || e.name.contains(['/', '\\']) || e.name.starts_with('.') {
                return cfg(format!("{at}: name must be a plain file name"));
            }
            if !self.systems.contains_key(&e.system) {
                return cfg(format!("{at}.system: unknown system {:?}", e.system));
            }
            if !(e.horizon > 0.0) || e.cells == 0 || e.levels == 0 || e.paths == 0 {
                return cfg(format!("{at}: horizon, cells, levels and paths must be positive"));
            }
            if matches!(e.mode, ModeDecl::Truncated | ModeDecl::NonnegTruncated) && !e.truncation.is_some_and(|m| m > 0.0) {
                return cfg(format!("{at}.truncation: a positive truncation level is required by mode {:?}", e.mode));
            }
            match e.kind {
                ExperimentKind::Converge if e.levels < 2 => return cfg(format!("{at}.levels: convergence studies need at least 2 levels")),
                ExperimentKind::Couple if e.x0_b.is_none() => return cfg(format!("{at}.x0_b: coupling needs a second initial value")),
                ExperimentKind::Scan => {
                    if e.alphas.as_ref().is_none_or(|a| a.is_empty()) || e.exponents.as_ref().is_none_or(|p| p.is_empty()) {
                        return cfg(format!("{at}: scans need non-empty alphas and exponents"));
                    }
                    if e.levels < 2 {
                        return cfg(format!("{at}.levels: scans need at least 2 levels"));
                    }
                    if !matches!(self.systems[&e.system].family, Family::Cbi { .. }) {
                        return cfg(format!("{at}.system: scans take their template from a cbi system"));
                    }
                }
                ExperimentKind::Cbi => {
                    self.cbi_parts(&e.system).map_err(|err| Error::Config(format!("{at}: {err}")))?;
                }
                _ => {}
            }
        }
        Ok(())
    }

    fn measure(&self, name: &Option<String>, field: &str, system: &str) -> Result<Option<LevyMeasure>> {
        match name {
            None => Ok(None),
            Some(n) => match self.measures.get(n) {
                Some(m) => Ok(Some(m.build()?)),
                None => Err(Error::Config(format!("systems.{system}.{field}: unknown measure {n:?}"))),
            },
        }
    }

    /// The system with its measures.
    pub fn system(&self, name: &str) -> Result<(SdeSystem, Option<LevyMeasure>, Option<LevyMeasure>)> {
        let decl = self.systems.get(name).ok_or_else(|| Error::Config(format!("unknown system {name:?}")))?;
        let at = |e: Error| Error::Config(format!("systems.{name}: {e}"));
        let nu0 = self.measure(&decl.nu0, "nu0", name)?;
        let nu1 = self.measure(&decl.nu1, "nu1", name)?;
        if nu0.as_ref().is_some_and(|m| m.role != Role::CompensatedDriver) {
            return Err(Error::Config(format!("systems.{name}.nu0: measure must have role compensated-driver")));
        }
        if nu1.as_ref().is_some_and(|m| m.role != Role::Subordinator) {
            return Err(Error::Config(format!("systems.{name}.nu1: measure must have role subordinator")));
        }
        let h1 = || {
            if nu1.is_some() {
                JumpCoefficient::multiplicative(Coefficient::Constant { value: 1.0 })
            } else {
                JumpCoefficient::Zero
            }
        };
        let mut sys = match &decl.family {
            Family::Cbi { a, b, beta, c, r, q } => {
                let mut s = SdeSystem::cbi(CbiParams { a: *a, b: *b, beta: *beta, c: *c, r: *r, q: *q }).map_err(at)?;
                s.g1 = h1();
                s
            }
            Family::Linear { sigma_slope, drift_slope, drift_intercept, jump_slope, jump_intercept } => {
                let mut s = SdeSystem::linear(*sigma_slope, *drift_slope, *drift_intercept);
                if *jump_slope != 0.0 || *jump_intercept != 0.0 {
                    s.g0 = JumpCoefficient::multiplicative(Coefficient::Linear { slope: *jump_slope, intercept: *jump_intercept });
                }
                s.g1 = h1();
                s
            }
            Family::PowerDiffusion { sigma_scale, sigma_exponent, drift_slope, drift_intercept, jump_scale, jump_exponent } => {
                let mut s = SdeSystem::zero();
                s.sigma = Coefficient::AbsPower { scale: *sigma_scale, exponent: *sigma_exponent };
                s.b1 = Coefficient::Linear { slope: *drift_slope, intercept: *drift_intercept };
                if *jump_scale != 0.0 {
                    s.g0 = JumpCoefficient::multiplicative(Coefficient::SignedPower { scale: *jump_scale, exponent: *jump_exponent });
                }
                s.g1 = h1();
                s.regularity.rho = Modulus::Power { exponent: sigma_exponent.min(1.0), scale: sigma_scale.powf(*sigma_exponent).max(1e-300) };
                s.regularity.r = Modulus::Linear { slope: drift_slope.abs().max(1e-300) };
                s
            }
            Family::CustomTabulated { sigma, drift, jump } => {
                let mut s = SdeSystem::zero();
                s.sigma = sigma.coefficient();
                s.b1 = drift.coefficient();
                if let Some(j) = jump {
                    s.g0 = JumpCoefficient::multiplicative(j.coefficient());
                }
                s.g1 = h1();
                s
            }
        };
        let reg = &mut sys.regularity;
        if let Some(k) = decl.k {
            reg.k = k;
        }
        if let Some(p) = decl.p {
            reg.p = p;
        }
        if let Some(rho) = &decl.rho_modulus {
            reg.rho = Modulus::parse(rho).map_err(at)?;
        }
        if let Some(r) = &decl.r_modulus {
            reg.r = Modulus::parse(r).map_err(at)?;
        }
        if let Some(e) = decl.envelope {
            reg.envelope = e;
        }
        if let Some(c) = decl.nonneg_conditions {
            reg.nonneg_conditions = c;
        }
        sys.validate().map_err(at)?;
        Ok((sys, nu0, nu1))
    }

    /// CBI parameters with the stable index of `nu0`.
    pub fn cbi_parts(&self, system: &str) -> Result<(CbiParams, f64, Option<LevyMeasure>)> {
        let decl = &self.systems[system];
        let Family::Cbi { a, b, beta, c, r, q } = decl.family else {
            return Err(Error::Config(format!("system {system:?} is not of the cbi family")));
        };
        let (_, nu0, nu1) = self.system(system)?;
        let alpha = match nu0.map(|m| m.shape) {
            Some(MeasureShape::Stable { alpha, .. }) => alpha,
            _ => return Err(Error::Config(format!("systems.{system}.nu0 must name a stable measure"))),
        };
        Ok((CbiParams { a, b, beta, c, r, q }, alpha, nu1))
    }

    /// Noise, system and sampling plan of an experiment.
    pub fn experiment_spec(&self, e: &ExperimentDecl) -> Result<ExperimentSpec> {
        let (system, nu0, nu1) = self.system(&e.system)?;
        let decl = &self.systems[&e.system];
        let mut noise = NoiseSpec::new(e.horizon, self.master_seed);
        noise.brownian = decl.brownian.unwrap_or(true) && !system.sigma.is_zero();
        noise.nu0 = nu0;
        noise.nu1 = nu1;
        noise.epsilon = e.epsilon;
        noise.small_jump_mode = e.small_jumps;
        let m = e.truncation.unwrap_or(f64::INFINITY);
        let mode = match e.mode {
            ModeDecl::Plain => SimulationMode::Plain,
            ModeDecl::Nonneg => SimulationMode::Nonneg,
            ModeDecl::Truncated => SimulationMode::Truncated { m },
            ModeDecl::NonnegTruncated => SimulationMode::NonnegTruncated { m },
        };
        let mut spec = ExperimentSpec::new(system, noise, e.x0, e.cells, e.paths).with_levels(e.levels).with_mode(mode);
        spec.first_stream = e.first_stream;
        Ok(spec)
    }

    pub fn scan_template(&self, e: &ExperimentDecl) -> Result<ScanTemplate> {
        let Family::Cbi { a, b, beta, c, r, .. } = self.systems[&e.system].family else {
            return Err(Error::Config(format!("scan experiment {:?} needs a cbi system", e.name)));
        };
        Ok(ScanTemplate {
            a,
            r,
            beta,
            b,
            c,
            x0: e.x0,
            horizon: e.horizon,
            base_cells: e.cells,
            levels: e.levels,
            paths: e.paths,
            master_seed: self.master_seed,
            nonneg: matches!(e.mode, ModeDecl::Nonneg | ModeDecl::NonnegTruncated),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
master_seed = 7

[check]
system = "cbi"
theorems = ["corollary-4.3"]

[measures.stable]
kind = "stable"
alpha = 1.5
scale = 1.0

[systems.cbi]
family = "cbi"
a = 1.0
b = 0.1
beta = -0.5
c = 1.0
r = 2.0
q = 1.5
nu0 = "stable"

[[experiments]]
name = "conv"
kind = "converge"
system = "cbi"
levels = 3
mode = "nonneg"
"#;

    #[test]
    fn round_trip() {
        let cfg = RunConfig::parse(SAMPLE).unwrap();
        let text = cfg.to_toml().unwrap();
        let back = RunConfig::parse(&text).unwrap();
        assert_eq!(cfg, back);
        assert_eq!(cfg.hash(), back.hash());
    }

    #[test]
    fn missing_seed_is_a_config_error() {
        let text = SAMPLE.replace("master_seed = 7", "");
        match RunConfig::parse(&text) {
            Err(Error::Config(m)) => assert!(m.contains("master_seed"), "{m}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_reference_is_reported() {
        let text = SAMPLE.replace("nu0 = \"stable\"", "nu0 = \"missing\"");
        match RunConfig::parse(&text) {
            Err(Error::Config(m)) => assert!(m.contains("nu0") && m.contains("missing"), "{m}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn experiment_spec_resolves() {
        let cfg = RunConfig::parse(SAMPLE).unwrap();
        let spec = cfg.experiment_spec(&cfg.experiments[0]).unwrap();
        assert_eq!(spec.levels, 3);
        assert_eq!(spec.mode, SimulationMode::Nonneg);
        assert!(spec.noise.brownian);
        assert_eq!(spec.noise.master_seed, 7);
    }
}

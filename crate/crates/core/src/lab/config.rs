//! TOML experiment configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::deteq::InitialMeasure;
use crate::error::{LabError, Result};
use crate::families::{DislocationSpec, HypothesisFlags, ImmigrationSpec};
use crate::fi::{FiConfig, LookbackPolicy};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Simulate,
    Stationary,
    StationarityCheck,
    Deteq,
    Brownian,
    GateMatrix,
    RateAlpha0,
    RateAlphaPos,
    SmallParticleProbe,
    HydrodynamicCheck,
    DustTail,
    Phi,
}

impl ExperimentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Simulate => "simulate",
            Self::Stationary => "stationary",
            Self::StationarityCheck => "stationarity_check",
            Self::Deteq => "deteq",
            Self::Brownian => "brownian",
            Self::GateMatrix => "gate_matrix",
            Self::RateAlpha0 => "rate_alpha0",
            Self::RateAlphaPos => "rate_alpha_pos",
            Self::SmallParticleProbe => "small_particle_probe",
            Self::HydrodynamicCheck => "hydrodynamic_check",
            Self::DustTail => "dust_tail",
            Self::Phi => "phi",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabConfig {
    pub experiment: ExperimentKind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub process: ProcessSection,
    #[serde(default)]
    pub budget: BudgetSection,
    #[serde(default)]
    pub brownian: BrownianSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProcessSection {
    pub alpha: f64,
    pub dislocation: DislocationSpec,
    pub immigration: ImmigrationSpec,
    /// Initial particle masses.
    pub u0: Vec<f64>,
    /// Initial measure of the deterministic equation.
    pub mu0: InitialMeasure,
    pub flags: HypothesisFlags,
}

impl Default for ProcessSection {
    fn default() -> Self {
        Self {
            alpha: 0.0,
            dislocation: DislocationSpec::binary_uniform(0.0),
            immigration: ImmigrationSpec::exponential(1.0),
            u0: Vec::new(),
            mu0: InitialMeasure::Zero,
            flags: HypothesisFlags::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BudgetSection {
    pub n_reps: usize,
    pub eps: f64,
    pub eps_imm: Option<f64>,
    pub delta: f64,
    pub max_age: f64,
    pub pilots: usize,
    /// Fixed lookback age; overrides the adaptive rule.
    pub lookback: Option<f64>,
    pub particle_limit: Option<usize>,
    pub t: f64,
    pub t_shift: f64,
    pub t_grid: Vec<f64>,
    pub eps_grid: Vec<f64>,
    pub n_scaling: Vec<usize>,
    pub ref_reps: usize,
    pub edges: Vec<f64>,
    pub powers: Vec<f64>,
    pub lambda: Option<f64>,
    pub q_grid: Vec<f64>,
    pub significance: f64,
    pub tolerance: f64,
    /// Extra seeds for seed-stability checks.
    pub seeds: Vec<u64>,
}

impl Default for BudgetSection {
    fn default() -> Self {
        Self {
            n_reps: 200,
            eps: 0.01,
            eps_imm: None,
            delta: 1e-3,
            max_age: 1e6,
            pilots: 2000,
            lookback: None,
            particle_limit: None,
            t: 1.0,
            t_shift: 1.0,
            t_grid: vec![1.0, 2.0, 4.0, 8.0, 16.0],
            eps_grid: Vec::new(),
            n_scaling: vec![1, 4, 16],
            ref_reps: 20_000,
            edges: Vec::new(),
            powers: Vec::new(),
            lambda: None,
            q_grid: vec![0.5, 1.0, 2.0, 5.0, 10.0],
            significance: 0.01,
            tolerance: 0.1,
            seeds: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BrownianSection {
    pub drift: f64,
    pub level: f64,
    pub step: f64,
    pub min_len: f64,
    pub thresholds: Vec<f64>,
}

impl Default for BrownianSection {
    fn default() -> Self {
        Self {
            drift: 1.0,
            level: 1.0,
            step: 1e-3,
            min_len: 0.1,
            thresholds: vec![0.5, 1.0, 2.0],
        }
    }
}

impl LabConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| LabError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text).map_err(|e| match e {
            LabError::Config(msg) => LabError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// The fragmentation-with-immigration configuration described by the
    /// process and budget sections.
    pub fn fi_config(&self) -> FiConfig {
        let p = &self.process;
        let b = &self.budget;
        let mut cfg = FiConfig::new(p.alpha, p.dislocation.clone(), p.immigration.clone(), b.eps).with_flags(p.flags);
        if let Some(e) = b.eps_imm {
            cfg.imm_cutoff = e;
        }
        if let Some(limit) = b.particle_limit {
            cfg.particle_limit = limit;
        }
        cfg.with_lookback(match b.lookback {
            Some(age) => LookbackPolicy::Fixed { age },
            None => LookbackPolicy::Adaptive {
                delta: b.delta,
                max_age: b.max_age,
                pilots: b.pilots,
            },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_fills_defaults() {
        let c = LabConfig::parse("experiment = \"phi\"\n").unwrap();
        assert_eq!(c.experiment, ExperimentKind::Phi);
        assert_eq!(c.budget.n_reps, 200);
        assert_eq!(c.process.dislocation, DislocationSpec::binary_uniform(0.0));
    }

    #[test]
    fn nested_specs_parse() {
        let text = r#"
experiment = "stationary"
seed = 9

[process]
alpha = -0.5
dislocation = { family = "discrete_finite", atoms = [{ rate = 1.0, fragments = [0.5, 0.5] }] }
immigration = { family = "single_powerlaw", exponent = 3.0, x_min = 1.0, scale = 0.1 }
flags = { h3 = true, h4 = true }

[budget]
eps = 0.001
lookback = 50.0
"#;
        let c = LabConfig::parse(text).unwrap();
        assert_eq!(c.process.immigration.scale, 0.1);
        assert_eq!(c.process.flags.h4, Some(true));
        assert_eq!(c.fi_config().lookback, LookbackPolicy::Fixed { age: 50.0 });
    }

    #[test]
    fn errors_name_the_line_and_key() {
        let err = LabConfig::parse("experiment = \"phi\"\n[budget]\nn_reps = \"many\"\n").unwrap_err().to_string();
        assert!(err.contains("line 3") && err.contains("n_reps"), "{err}");
        let err = LabConfig::parse("experiment = \"phi\"\n[budget]\nnreps = 3\n").unwrap_err().to_string();
        assert!(err.contains("line 3") && err.contains("nreps"), "{err}");
        let err = LabConfig::parse("experiment = \"teleport\"\n").unwrap_err().to_string();
        assert!(err.contains("line 1") && err.contains("teleport"), "{err}");
    }
}

//! Run configuration: a TOML file with one section per concern. Unknown keys
//! are rejected.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{HarnessError, Result};
use crate::noise::NoiseKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Generation,
    Thickness,
    Profile,
    CirclePathwise,
    FunakiKappa,
    L2Step,
    SandwichCert,
    NoiseBounds,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 8] = [
        ExperimentKind::Generation,
        ExperimentKind::Thickness,
        ExperimentKind::Profile,
        ExperimentKind::CirclePathwise,
        ExperimentKind::FunakiKappa,
        ExperimentKind::L2Step,
        ExperimentKind::SandwichCert,
        ExperimentKind::NoiseBounds,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::Generation => "generation",
            ExperimentKind::Thickness => "thickness",
            ExperimentKind::Profile => "profile",
            ExperimentKind::CirclePathwise => "circle_pathwise",
            ExperimentKind::FunakiKappa => "funaki_kappa",
            ExperimentKind::L2Step => "l2_step",
            ExperimentKind::SandwichCert => "sandwich_cert",
            ExperimentKind::NoiseBounds => "noise_bounds",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        ExperimentKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| HarnessError::UnknownExperiment(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub experiments: Vec<ExperimentKind>,
    pub master_seed: u64,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            experiments: ExperimentKind::ALL.to_vec(),
            master_seed: 1,
        }
    }
}

/// The `eps` sweep and the 2-D grid shared by the unit-square experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub eps: Vec<f64>,
    pub seeds: usize,
    /// Nodes per side on the unit square.
    pub grid: usize,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            eps: vec![0.04, 0.02, 0.01],
            seeds: 5,
            grid: 256,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSection {
    pub kind: NoiseKind,
    pub gamma2: f64,
    pub gamma1: f64,
    pub ou_rate: f64,
    pub ou_std: f64,
    pub clip_level: f64,
}

impl Default for NoiseSection {
    fn default() -> Self {
        NoiseSection {
            kind: NoiseKind::Mn2,
            gamma2: 0.5,
            gamma1: 0.25,
            ou_rate: 1.0,
            ou_std: 0.1,
            clip_level: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenerationSection {
    pub eta: f64,
    pub radius: f64,
    /// Width `w0` of the initial tanh profile.
    pub width: f64,
    /// Also run one noise-free cell per `eps`.
    pub deterministic: bool,
    /// Longest run, in units of the generation time.
    pub max_factor: f64,
}

impl Default for GenerationSection {
    fn default() -> Self {
        GenerationSection {
            eta: 0.1,
            radius: 0.3,
            width: 0.5,
            deterministic: true,
            max_factor: 4.0,
        }
    }
}

/// The circle instance used by thickness, profile and l2_step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CircleSection {
    pub radius: f64,
    pub width: f64,
    pub t_max: f64,
    /// `N` of the stopping time.
    pub stop_n: f64,
    pub stop_margin: f64,
    pub n_times: usize,
    /// Also run one noise-free cell per `eps`.
    pub deterministic: bool,
    pub radius_dt: f64,
}

impl Default for CircleSection {
    fn default() -> Self {
        CircleSection {
            radius: 0.4,
            width: 0.1,
            t_max: 0.05,
            stop_n: 20.0,
            stop_margin: 0.002,
            n_times: 10,
            deterministic: true,
            radius_dt: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ThicknessSection {
    pub eta: f64,
}

impl Default for ThicknessSection {
    fn default() -> Self {
        ThicknessSection { eta: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProfileSection {
    /// Measurements start at `rho_time * t_eps`.
    pub rho_time: f64,
    /// Half-width of the band in units of `eps`.
    pub band: f64,
}

impl Default for ProfileSection {
    fn default() -> Self {
        ProfileSection {
            rho_time: 2.0,
            band: 8.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathwiseSection {
    pub radius: f64,
    pub width: f64,
    pub r_max: f64,
    /// Radial step in units of `eps`.
    pub dr_over_eps: f64,
    pub t_max: f64,
    pub margin: f64,
    pub sample_every: f64,
}

impl Default for PathwiseSection {
    fn default() -> Self {
        PathwiseSection {
            radius: 0.35,
            width: 0.1,
            r_max: 1.5,
            dr_over_eps: 0.1,
            t_max: 0.05,
            margin: 0.002,
            sample_every: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FunakiSection {
    pub n_theta: usize,
    pub kappa0: f64,
    pub t_end: f64,
    pub dt: f64,
    /// Paths averaged in the step-halving study.
    pub paths: usize,
    pub stop_n: f64,
    pub alpha_paths: usize,
}

impl Default for FunakiSection {
    fn default() -> Self {
        FunakiSection {
            n_theta: 64,
            kappa0: 1.0,
            t_end: 0.1,
            dt: 1e-5,
            paths: 20,
            stop_n: 10.0,
            alpha_paths: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct L2StepSection {
    /// Budget as a multiple of `|Omega|^{1/2} (a_+ - a_-)`.
    pub budget_factor: f64,
}

impl Default for L2StepSection {
    fn default() -> Self {
        L2StepSection {
            budget_factor: 0.15,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SandwichSection {
    pub eps: Vec<f64>,
    pub seeds: usize,
    pub noise: bool,
    /// Side of the square domain `[0, side]^2`.
    pub side: f64,
    pub grid: usize,
    pub radius: f64,
    pub width: f64,
    pub d0: f64,
    pub t_max: f64,
    pub snapshots: usize,
    /// Stride of the finite-difference residual probe over grid nodes.
    pub probe_stride: usize,
    pub radius_dt: f64,
}

impl Default for SandwichSection {
    fn default() -> Self {
        SandwichSection {
            eps: vec![0.02],
            seeds: 1,
            noise: true,
            side: 6.4,
            grid: 1601,
            radius: 2.2,
            width: 0.1,
            d0: 1.0,
            t_max: 0.05,
            snapshots: 10,
            probe_stride: 8,
            radius_dt: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseBoundsSection {
    pub eps: Vec<f64>,
    pub paths: usize,
    pub horizon: f64,
}

impl Default for NoiseBoundsSection {
    fn default() -> Self {
        NoiseBoundsSection {
            eps: vec![0.04, 0.02, 0.01],
            paths: 200,
            horizon: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub run: RunSection,
    pub sweep: SweepSection,
    pub noise: NoiseSection,
    pub generation: GenerationSection,
    pub circle: CircleSection,
    pub thickness: ThicknessSection,
    pub profile: ProfileSection,
    pub pathwise: PathwiseSection,
    pub funaki: FunakiSection,
    pub l2_step: L2StepSection,
    pub sandwich: SandwichSection,
    pub noise_bounds: NoiseBoundsSection,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Config::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(HarnessError::Config(msg.to_string()));
        let eps_ok = |list: &[f64]| !list.is_empty() && list.iter().all(|&e| e > 0.0 && e < 0.5);
        if !eps_ok(&self.sweep.eps)
            || !eps_ok(&self.sandwich.eps)
            || !eps_ok(&self.noise_bounds.eps)
        {
            return bad("eps lists must be non-empty with 0 < eps < 0.5");
        }
        if self.sweep.seeds == 0 || self.sandwich.seeds == 0 {
            return bad("seeds must be positive");
        }
        if self.sweep.grid < 16 || self.sandwich.grid < 16 {
            return bad("grids need at least 16 nodes per side");
        }
        if self.circle.n_times < 2 {
            return bad("circle.n_times must be at least 2");
        }
        if !(self.profile.rho_time > 1.0) {
            return bad("profile.rho_time must exceed 1");
        }
        if self.sandwich.snapshots < 2 {
            return bad("sandwich.snapshots must be at least 2");
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    /// A small instance of every experiment, for smoke tests and the
    /// determinism check.
    pub fn smoke() -> Self {
        let mut cfg = Config {
            sweep: SweepSection {
                eps: vec![0.08, 0.04],
                seeds: 2,
                grid: 64,
            },
            ..Config::default()
        };
        cfg.circle.t_max = 0.04;
        cfg.circle.n_times = 3;
        cfg.circle.radius_dt = 1e-5;
        cfg.pathwise.t_max = 0.04;
        cfg.pathwise.r_max = 1.0;
        cfg.pathwise.dr_over_eps = 0.25;
        cfg.funaki.t_end = 0.01;
        cfg.funaki.n_theta = 32;
        cfg.funaki.dt = 1e-4;
        cfg.funaki.paths = 2;
        cfg.funaki.alpha_paths = 2;
        cfg.sandwich = SandwichSection {
            eps: vec![0.05],
            side: 2.0,
            grid: 96,
            radius: 0.8,
            d0: 0.35,
            t_max: 0.005,
            snapshots: 3,
            probe_stride: 16,
            radius_dt: 1e-5,
            ..SandwichSection::default()
        };
        cfg.noise_bounds = NoiseBoundsSection {
            eps: vec![0.08, 0.04],
            paths: 4,
            horizon: 0.2,
        };
        cfg
    }
}

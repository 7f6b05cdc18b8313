//! Experiment configuration: one flat TOML table.
//!
//! ```toml
//! schema_version = 1
//! model = "double_well"      # or "quadratic"
//! a = 0.5
//! lambda = 0.01
//! n_list = [16, 64, 256, 1024]
//! t_end = 10.0
//! h = 0.01
//! replications = 32
//! seed = 7
//! nu = "gaussian(0, 0.5)"
//! mu = "gaussian(0, 0.5)"
//! ```
//!
//! Initial laws are written `point(x…)`, `gaussian(m…, std)` or
//! `ball(c…, radius)`; a single location value is broadcast to every
//! coordinate.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use meanfield_core::model::{builtin_double_well, builtin_quadratic, InteractionSign, PotentialModel};
use meanfield_core::simulate::{InitialCoupling, InitialLaw, MeanFieldMode, SimConfig};

use crate::error::{AppError, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// `V = ρ‖x‖²/2`, `W = λ‖x‖²`.
    Quadratic,
    /// `V = ‖x‖⁴ − a‖x‖²`, `W = ±λ‖x‖²`.
    DoubleWell,
}

/// An initial law as written in a config file.
#[derive(Debug, Clone, PartialEq)]
pub enum LawSpec {
    Point(Vec<f64>),
    Gaussian(Vec<f64>, f64),
    Ball(Vec<f64>, f64),
}

impl LawSpec {
    /// Expands to a law on `ℝ^dim`.
    pub fn resolve(&self, dim: usize) -> Result<InitialLaw> {
        let expand = |loc: &[f64]| -> Result<Vec<f64>> {
            match loc.len() {
                1 => Ok(vec![loc[0]; dim]),
                n if n == dim => Ok(loc.to_vec()),
                n => Err(AppError::Config(format!(
                    "initial law `{self}` has {n} coordinates, expected 1 or {dim}"
                ))),
            }
        };
        Ok(match self {
            LawSpec::Point(x) => InitialLaw::PointMass(expand(x)?),
            LawSpec::Gaussian(m, std) => InitialLaw::Gaussian {
                mean: expand(m)?,
                std: *std,
            },
            LawSpec::Ball(c, radius) => InitialLaw::UniformBall {
                center: expand(c)?,
                radius: *radius,
            },
        })
    }
}

impl fmt::Display for LawSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (name, values): (&str, Vec<f64>) = match self {
            LawSpec::Point(x) => ("point", x.clone()),
            LawSpec::Gaussian(m, s) => ("gaussian", m.iter().copied().chain([*s]).collect()),
            LawSpec::Ball(c, r) => ("ball", c.iter().copied().chain([*r]).collect()),
        };
        let args: Vec<String> = values.iter().map(|v| format!("{v:?}")).collect();
        write!(f, "{name}({})", args.join(", "))
    }
}

impl FromStr for LawSpec {
    type Err = AppError;

    fn from_str(s: &str) -> Result<Self> {
        let bad = |why: &str| AppError::Config(format!("cannot parse initial law `{s}`: {why}"));
        let s = s.trim();
        let open = s.find('(').ok_or_else(|| bad("expected name(args)"))?;
        let inner = s[open + 1..].strip_suffix(')').ok_or_else(|| bad("missing `)`"))?;
        let values = inner
            .split(',')
            .map(|v| v.trim().parse::<f64>().map_err(|_| bad("non-numeric argument")))
            .collect::<Result<Vec<f64>>>()?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(bad("non-finite argument"));
        }
        let split_last = |min: usize| -> Result<(Vec<f64>, f64)> {
            if values.len() < min {
                return Err(bad("too few arguments"));
            }
            let (loc, last) = values.split_at(values.len() - 1);
            if last[0] < 0.0 {
                return Err(bad("scale must be nonnegative"));
            }
            Ok((loc.to_vec(), last[0]))
        };
        match s[..open].trim() {
            "point" => Ok(LawSpec::Point(values)),
            "gaussian" => split_last(2).map(|(m, sd)| LawSpec::Gaussian(m, sd)),
            "ball" => split_last(2).map(|(c, r)| LawSpec::Ball(c, r)),
            other => Err(bad(&format!("unknown law `{other}`"))),
        }
    }
}

impl Serialize for LawSpec {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for LawSpec {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

fn default_rho() -> f64 {
    1.0
}
fn default_a() -> f64 {
    1.0
}
fn default_dim() -> usize {
    1
}
fn default_output_dt() -> f64 {
    0.1
}
fn default_replications() -> usize {
    32
}
fn default_grid_cells() -> usize {
    4000
}
fn default_quadrature_tol() -> f64 {
    1e-10
}
fn default_validation_samples() -> usize {
    100_000
}
fn default_point_zero() -> LawSpec {
    LawSpec::Point(vec![0.0])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub model: ModelKind,
    /// Confinement stiffness of the quadratic model.
    #[serde(default = "default_rho")]
    pub rho: f64,
    /// Well parameter of the double-well model.
    #[serde(default = "default_a")]
    pub a: f64,
    #[serde(default)]
    pub lambda: f64,
    #[serde(default = "default_interaction")]
    pub interaction: InteractionSign,
    /// Interaction strength in the contraction hypothesis. Defaults to
    /// `2L/φ(R₀)` from the Lipschitz constant of `∇W`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(default = "default_dim")]
    pub dim: usize,
    pub n_list: Vec<usize>,
    pub t_end: f64,
    #[serde(default = "default_output_dt")]
    pub output_dt: f64,
    pub h: f64,
    /// Mixing radius; defaults to `10√h`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    /// Reference ensemble size; defaults to `max(4096, 16N)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_size: Option<usize>,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default)]
    pub seed: u64,
    /// Law of the nonlinear copies.
    #[serde(default = "default_point_zero")]
    pub nu: LawSpec,
    /// Law of the particles.
    #[serde(default = "default_point_zero")]
    pub mu: LawSpec,
    #[serde(default = "default_coupling")]
    pub coupling: InitialCoupling,
    #[serde(default = "default_mean_field")]
    pub mean_field: MeanFieldMode,
    #[serde(default = "default_grid_cells")]
    pub grid_cells: usize,
    #[serde(default = "default_quadrature_tol")]
    pub quadrature_tol: f64,
    #[serde(default = "default_validation_samples")]
    pub validation_samples: usize,
    /// Additional horizons `T` at which the plateau over `[0.75T, T]` is
    /// reported; `t_end` is always included.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub horizons: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
}

fn default_interaction() -> InteractionSign {
    InteractionSign::Attractive
}
fn default_coupling() -> InitialCoupling {
    InitialCoupling::Synchronous
}
fn default_mean_field() -> MeanFieldMode {
    MeanFieldMode::Auto
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
        let config: ExperimentConfig = text.parse()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| AppError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(AppError::Config(msg));
        if self.schema_version != SCHEMA_VERSION {
            return fail(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        if self.dim == 0 {
            return fail("dim must be positive".into());
        }
        if self.n_list.is_empty() || self.n_list.iter().any(|&n| n < 2) {
            return fail(format!("n_list must be nonempty with every N ≥ 2, got {:?}", self.n_list));
        }
        if !(self.h > 0.0 && self.h.is_finite()) {
            return fail(format!("h must be positive, got {}", self.h));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return fail(format!("t_end must be ≥ 0, got {}", self.t_end));
        }
        if self.output_dt.is_nan() || self.output_dt <= 0.0 {
            return fail(format!("output_dt must be positive, got {}", self.output_dt));
        }
        let steps_per_output = self.output_dt / self.h;
        if (steps_per_output - steps_per_output.round()).abs() > 1e-9 * steps_per_output.max(1.0) {
            return fail(format!("output_dt = {} is not a multiple of h = {}", self.output_dt, self.h));
        }
        if self.replications < 2 {
            return fail(format!("replications must be ≥ 2, got {}", self.replications));
        }
        if self.grid_cells < 1000 {
            return fail(format!("grid_cells must be ≥ 1000, got {}", self.grid_cells));
        }
        if self.horizons.iter().any(|&t| !(t > 0.0 && t <= self.t_end)) {
            return fail(format!("horizons must lie in (0, t_end], got {:?}", self.horizons));
        }
        if let Some(eta) = self.eta {
            if !(eta >= 0.0 && eta.is_finite()) {
                return fail(format!("eta must be ≥ 0, got {eta}"));
            }
        }
        self.nu.resolve(self.dim)?;
        self.mu.resolve(self.dim)?;
        Ok(())
    }

    pub fn build_model(&self) -> Result<PotentialModel> {
        let model = match self.model {
            ModelKind::Quadratic => builtin_quadratic(self.dim, self.rho, self.lambda)?,
            ModelKind::DoubleWell => builtin_double_well(self.dim, self.a, self.lambda, self.interaction)?,
        };
        Ok(model)
    }

    pub fn delta(&self) -> f64 {
        self.delta.unwrap_or_else(|| SimConfig::default_delta(self.h))
    }

    pub fn reference_size(&self, n: usize) -> usize {
        self.reference_size.unwrap_or_else(|| SimConfig::default_reference_size(n))
    }

    /// Output times `0, Δ, 2Δ, …` up to `t_end`, computed from integer
    /// multiples so that they match exactly across runs.
    pub fn output_times(&self) -> Vec<f64> {
        let count = (self.t_end / self.output_dt + 1e-9).floor() as usize;
        let mut times: Vec<f64> = (0..=count).map(|k| k as f64 * self.output_dt).collect();
        if times.last().is_some_and(|&t| (self.t_end - t) > 1e-9 * self.t_end.max(1.0)) {
            times.push(self.t_end);
        }
        times
    }

    /// Plateau horizons, sorted, always including `t_end`.
    pub fn plateau_horizons(&self) -> Vec<f64> {
        let mut h = self.horizons.clone();
        if !h.contains(&self.t_end) {
            h.push(self.t_end);
        }
        h.sort_by(f64::total_cmp);
        h.dedup();
        h
    }

    pub fn sim_config(&self, n: usize, seed: u64) -> Result<SimConfig> {
        Ok(SimConfig {
            n,
            m: self.reference_size(n).max(n),
            dim: self.dim,
            h: self.h,
            t_end: self.t_end,
            delta: self.delta(),
            seed,
            nu: self.nu.resolve(self.dim)?,
            mu: self.mu.resolve(self.dim)?,
            coupling: self.coupling,
            mean_field: self.mean_field,
            output_times: self.output_times(),
        })
    }
}

impl FromStr for ExperimentConfig {
    type Err = AppError;

    fn from_str(text: &str) -> Result<Self> {
        let config: ExperimentConfig = toml::from_str(text).map_err(|e| AppError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }
}

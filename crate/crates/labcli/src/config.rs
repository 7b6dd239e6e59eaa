//! Experiment configuration (TOML, schema `liouville-lab/1`).

use std::path::{Path, PathBuf};

use liouville_core::asymptotics::DiagnosticSettings;
use liouville_core::solver::{NewtonParams, CONTINUATION_FRACTIONS};
use liouville_core::{make_family, Centering, CollapsingFamily, FamilyRule, LambdaSchedule, Point};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const SCHEMA: &str = "liouville-lab/1";

/// Largest `runs x K` a sweep may schedule.
pub const SWEEP_BUDGET: usize = 10_000;

/// Pole exponent and coefficient of degree sweeps over a pole-free family.
pub const SWEEP_EXPONENT: f64 = 1.0;
pub const SWEEP_COEFFICIENT: f64 = 0.05;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Exact,
    Solve,
    Both,
}

impl Mode {
    pub fn exact(self) -> bool {
        matches!(self, Mode::Exact | Mode::Both)
    }

    pub fn solve(self) -> bool {
        matches!(self, Mode::Solve | Mode::Both)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema: String,
    #[serde(default)]
    pub mode: Mode,
    /// Seeds the probe points of the exact-field spot checks.
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    pub grid: GridSection,
    pub family: FamilySection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solve: Option<SolveSection>,
    #[serde(default)]
    pub diagnostics: DiagnosticSettings,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub n: usize,
    #[serde(default = "unit")]
    pub radius: f64,
}

fn unit() -> f64 {
    1.0
}

/// Poles `p_{j,k} = c_j k^{-e_j} d_j`; all pole lists empty gives a pole-free family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilySection {
    #[serde(default)]
    pub exponents: Vec<f64>,
    #[serde(default)]
    pub directions: Vec<Point>,
    #[serde(default)]
    pub multiplicities: Vec<u32>,
    #[serde(default)]
    pub coefficients: Vec<f64>,
    pub lambda: LambdaSchedule,
    pub k_max: usize,
    #[serde(default)]
    pub centering: Centering,
}

impl FamilySection {
    pub fn rule(&self) -> FamilyRule {
        FamilyRule {
            exponents: self.exponents.clone(),
            directions: self.directions.clone(),
            multiplicities: self.multiplicities.clone(),
            coefficients: self.coefficients.clone(),
            lambda: self.lambda.clone(),
            k: self.k_max,
            centering: self.centering,
        }
    }
}

/// Dirichlet data of the solved members.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum BoundarySource {
    /// Trace of the exact member.
    Trace,
    /// Trace of the flat bubble on `W_k(0)` with concentration `8 λ_k²`;
    /// the bubble is also the initial guess.
    LeastMass,
    Constant {
        value: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveSection {
    pub boundary: BoundarySource,
    /// Constant factor `h` of the weight; `1e-300` is the near-linear sentinel.
    #[serde(default = "unit")]
    pub weight_scale: f64,
    #[serde(default = "yes")]
    pub continuation: bool,
    #[serde(default = "default_fractions")]
    pub fractions: Vec<f64>,
    #[serde(default)]
    pub newton: NewtonSection,
}

fn yes() -> bool {
    true
}

fn default_fractions() -> Vec<f64> {
    CONTINUATION_FRACTIONS.to_vec()
}

/// Overrides of the Newton defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NewtonSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iterations: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rtol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backtrack: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_step: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub linear_rtol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub linear_max_iterations: Option<usize>,
}

impl NewtonSection {
    pub fn params(&self) -> NewtonParams {
        let d = NewtonParams::default();
        NewtonParams {
            max_iterations: self.max_iterations.unwrap_or(d.max_iterations),
            rtol: self.rtol.unwrap_or(d.rtol),
            backtrack: self.backtrack.unwrap_or(d.backtrack),
            min_step: self.min_step.unwrap_or(d.min_step),
            linear_rtol: self.linear_rtol.unwrap_or(d.linear_rtol),
            linear_max_iterations: self
                .linear_max_iterations
                .unwrap_or(d.linear_max_iterations),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    /// Degree `d` of the developing map: `d - 1` simple poles evenly spread
    /// on the unit circle, with the first exponent and coefficient of the family
    /// (`SWEEP_EXPONENT` and `SWEEP_COEFFICIENT` when it has no poles).
    Degree,
    /// `lambda0` of a power or geometric schedule.
    Lambda0,
    GridN,
    KMax,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
}

fn config_error(key: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{key}: {msg}"))
}

fn integer(key: &str, v: f64, min: f64) -> Result<usize, CliError> {
    if v.fract() != 0.0 || v < min || v > 1e6 {
        return Err(config_error(
            key,
            format!("expected an integer >= {min}, got {v}"),
        ));
    }
    Ok(v as usize)
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.schema != SCHEMA {
            return Err(config_error(
                "schema",
                format!("expected \"{SCHEMA}\", got \"{}\"", self.schema),
            ));
        }
        if self.family.k_max < 4 {
            return Err(config_error(
                "family.k_max",
                format!("a family needs K >= 4, got {}", self.family.k_max),
            ));
        }
        liouville_core::DiskGrid::new(self.grid.radius, self.grid.n)
            .map_err(|e| config_error("grid", e))?;
        self.family()?;
        if self.mode.solve() {
            let solve = self.solve.as_ref().ok_or_else(|| {
                config_error("solve", "section required when mode includes solve")
            })?;
            solve
                .newton
                .params()
                .validate()
                .map_err(|e| config_error("solve.newton", e))?;
            if !(solve.weight_scale > 0.0 && solve.weight_scale.is_finite()) {
                return Err(config_error(
                    "solve.weight_scale",
                    format!("must be positive, got {}", solve.weight_scale),
                ));
            }
            if solve.fractions.last() != Some(&1.0)
                || solve.fractions.iter().any(|f| !(*f > 0.0 && *f <= 1.0))
            {
                return Err(config_error(
                    "solve.fractions",
                    "fractions must lie in (0, 1] and end at 1",
                ));
            }
            if let BoundarySource::Constant { value } = solve.boundary {
                if !value.is_finite() {
                    return Err(config_error("solve.boundary.value", "must be finite"));
                }
            }
        }
        if let Some(s) = &self.sweep {
            let runs = s.values.len() * self.family.k_max.max(1);
            if runs > SWEEP_BUDGET {
                return Err(config_error(
                    "sweep.values",
                    format!("{runs} member runs exceed the budget of {SWEEP_BUDGET}"),
                ));
            }
            for &v in &s.values {
                self.with_sweep_value(s.parameter, v)?;
            }
        }
        Ok(())
    }

    pub fn family(&self) -> Result<CollapsingFamily, CliError> {
        make_family(&self.family.rule()).map_err(|e| config_error("family", e))
    }

    /// The configuration of one sweep run.
    pub fn with_sweep_value(
        &self,
        p: SweepParameter,
        v: f64,
    ) -> Result<ExperimentConfig, CliError> {
        if !v.is_finite() {
            return Err(config_error("sweep.values", format!("{v} is not finite")));
        }
        let mut c = self.clone();
        c.sweep = None;
        match p {
            SweepParameter::Degree => {
                let d = integer("sweep.values", v, 1.0)?;
                let e = self
                    .family
                    .exponents
                    .first()
                    .copied()
                    .unwrap_or(SWEEP_EXPONENT);
                let coef = self
                    .family
                    .coefficients
                    .first()
                    .copied()
                    .unwrap_or(SWEEP_COEFFICIENT);
                let s = d - 1;
                c.family.exponents = vec![e; s];
                c.family.coefficients = vec![coef; s];
                c.family.multiplicities = vec![1; s];
                c.family.directions = (0..s)
                    .map(|j| {
                        let t = std::f64::consts::TAU * j as f64 / s as f64;
                        [t.cos(), t.sin()]
                    })
                    .collect();
            }
            SweepParameter::Lambda0 => match &mut c.family.lambda {
                LambdaSchedule::Power { lambda0, .. }
                | LambdaSchedule::Geometric { lambda0, .. } => *lambda0 = v,
                LambdaSchedule::List { .. } => {
                    return Err(config_error(
                        "sweep.parameter",
                        "lambda0 sweeps need a power or geometric schedule",
                    ))
                }
            },
            SweepParameter::GridN => c.grid.n = integer("sweep.values", v, 33.0)?,
            SweepParameter::KMax => c.family.k_max = integer("sweep.values", v, 4.0)?,
        }
        if c.family.k_max < 4 {
            return Err(config_error(
                "family.k_max",
                format!("a family needs K >= 4, got {}", c.family.k_max),
            ));
        }
        liouville_core::DiskGrid::new(c.grid.radius, c.grid.n)
            .map_err(|e| config_error("grid", e))?;
        c.family()?;
        Ok(c)
    }
}

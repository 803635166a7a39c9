//! TOML run configuration.
//!
//! ```toml
//! seed = 7
//!
//! [model]
//! builtin = "ou-quad"          # or a [model.poly] table
//!
//! [grid]
//! radius = 6.0
//! nodes_per_axis = 601         # or nodes_per_unit = 50
//! bc = "neumann"
//!
//! [solver]
//! tol = 1e-10
//!
//! [sweep]
//! radii = [1.0, 2.0, 3.0]
//! nodes_per_unit = 40
//!
//! [ygrid]
//! points = 21
//! half_width = 5.0             # default: 1.5 · max |∇φ*|
//!
//! [sim]
//! horizon = 20.0
//! dt = 1e-3
//! paths = 10000
//! ```

use std::path::{Path, PathBuf};

use risk_eigen::discretize::{build_grid, BoundaryCondition, Grid};
use risk_eigen::eigensolve::sweep_nodes;
use risk_eigen::model::{builtin_instance, DiffusionModel, PolynomialModel};
use risk_eigen::montecarlo::SimConfig;
use risk_eigen::simplex::SimplexOptions;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSpec,
    pub grid: GridSpec,
    #[serde(default)]
    pub solver: SolverSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
    #[serde(default)]
    pub ygrid: YGridSpec,
    #[serde(default)]
    pub sim: SimSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub builtin: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub poly: Option<PolynomialModel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub radius: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nodes_per_axis: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nodes_per_unit: Option<usize>,
    #[serde(default = "neumann")]
    pub bc: BoundaryCondition,
}

fn neumann() -> BoundaryCondition {
    BoundaryCondition::Neumann
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_lp_feasibility")]
    pub lp_feasibility_tol: f64,
    #[serde(default = "default_lp_optimality")]
    pub lp_optimality_tol: f64,
}

fn default_tol() -> f64 {
    1e-10
}
fn default_lp_feasibility() -> f64 {
    1e-9
}
fn default_lp_optimality() -> f64 {
    1e-8
}

impl Default for SolverSpec {
    fn default() -> Self {
        Self {
            tol: default_tol(),
            lp_feasibility_tol: default_lp_feasibility(),
            lp_optimality_tol: default_lp_optimality(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub radii: Vec<f64>,
    #[serde(default = "both_bcs")]
    pub bcs: Vec<BoundaryCondition>,
    #[serde(default = "default_npu")]
    pub nodes_per_unit: usize,
}

fn both_bcs() -> Vec<BoundaryCondition> {
    vec![BoundaryCondition::Dirichlet, BoundaryCondition::Neumann]
}
fn default_npu() -> usize {
    40
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct YGridSpec {
    #[serde(default = "default_points")]
    pub points: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub half_width: Option<f64>,
}

fn default_points() -> usize {
    21
}

impl Default for YGridSpec {
    fn default() -> Self {
        Self {
            points: default_points(),
            half_width: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSpec {
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_paths")]
    pub paths: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boundary_radius: Option<f64>,
}

fn default_horizon() -> f64 {
    10.0
}
fn default_dt() -> f64 {
    1e-2
}
fn default_paths() -> usize {
    2000
}

impl Default for SimSpec {
    fn default() -> Self {
        Self {
            horizon: default_horizon(),
            dt: default_dt(),
            paths: default_paths(),
            start: None,
            boundary_radius: None,
        }
    }
}

fn config_error(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| config_error(format!("config parse error: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_error(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        match (&self.model.builtin, &self.model.poly) {
            (Some(_), Some(_)) | (None, None) => {
                return Err(config_error("model: set exactly one of model.builtin and model.poly"))
            }
            _ => {}
        }
        if !(self.grid.radius > 0.0) || !self.grid.radius.is_finite() {
            return Err(config_error("grid.radius must be positive"));
        }
        match (self.grid.nodes_per_axis, self.grid.nodes_per_unit) {
            (Some(n), None) => {
                if n % 2 == 0 || n < 3 {
                    return Err(config_error("grid.nodes_per_axis must be odd and at least 3"));
                }
            }
            (None, Some(u)) => {
                if u == 0 {
                    return Err(config_error("grid.nodes_per_unit must be positive"));
                }
            }
            _ => {
                return Err(config_error(
                    "grid: set exactly one of grid.nodes_per_axis and grid.nodes_per_unit",
                ))
            }
        }
        for (name, v) in [
            ("solver.tol", self.solver.tol),
            ("solver.lp_feasibility_tol", self.solver.lp_feasibility_tol),
            ("solver.lp_optimality_tol", self.solver.lp_optimality_tol),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(config_error(format!("{name} must be positive")));
            }
        }
        if let Some(s) = &self.sweep {
            if s.radii.is_empty() || s.radii.iter().any(|r| !(*r > 0.0)) {
                return Err(config_error("sweep.radii must be non-empty and positive"));
            }
            if s.bcs.is_empty() {
                return Err(config_error("sweep.bcs must be non-empty"));
            }
        }
        if self.ygrid.points % 2 == 0 || self.ygrid.points < 3 {
            return Err(config_error("ygrid.points must be odd and at least 3"));
        }
        if let Some(y) = self.ygrid.half_width {
            if !(y > 0.0) {
                return Err(config_error("ygrid.half_width must be positive"));
            }
        }
        let dim = self.sim.start.as_ref().map_or(1, Vec::len);
        self.sim_config(self.seed, dim)
            .validate()
            .map_err(|e| config_error(format!("sim: {e}")))
    }

    pub fn model(&self) -> Result<DiffusionModel, CliError> {
        if let Some(name) = &self.model.builtin {
            builtin_instance(name).map_err(|e| config_error(format!("model.builtin: {e}")))
        } else if let Some(p) = &self.model.poly {
            p.build().map_err(|e| config_error(format!("model.poly: {e}")))
        } else {
            Err(config_error("model: set exactly one of model.builtin and model.poly"))
        }
    }

    pub fn nodes_per_axis(&self) -> usize {
        match (self.grid.nodes_per_axis, self.grid.nodes_per_unit) {
            (Some(n), _) => n,
            (None, Some(u)) => sweep_nodes(self.grid.radius, u),
            (None, None) => unreachable!("validated"),
        }
    }

    pub fn grid(&self, dimension: usize) -> Result<Grid, CliError> {
        build_grid(dimension, self.grid.radius, self.nodes_per_axis()).map_err(|e| config_error(format!("grid: {e}")))
    }

    pub fn simplex_options(&self) -> SimplexOptions {
        SimplexOptions {
            feasibility_tol: self.solver.lp_feasibility_tol,
            optimality_tol: self.solver.lp_optimality_tol,
            ..SimplexOptions::default()
        }
    }

    pub fn sim_config(&self, seed: u64, dimension: usize) -> SimConfig {
        let start = match &self.sim.start {
            Some(s) => s.clone(),
            None => vec![0.0; dimension],
        };
        SimConfig {
            horizon: self.sim.horizon,
            dt: self.sim.dt,
            paths: self.sim.paths,
            seed,
            start,
            boundary_radius: self.sim.boundary_radius,
        }
    }
}

//! Run configuration: a strict sectioned TOML document.
//!
//! ```toml
//! seed = 42
//! workers = 4
//!
//! [model]
//! beta = 2.0
//! gamma0 = 1.0
//! r0 = 1.0
//! omega0p = 1.0
//! bath_temperature = 1.0
//! [model.interface.profile]
//! kind = "constant"
//! p_plus = 0.5
//! p_minus = 0.3
//! g = 0.2
//!
//! [io]
//! out = "out"
//! ```
//!
//! `[model]` and `[io]` are required; `[initial]`, `[solver.*]`,
//! `[simulate]`, `[crossings]` and `[experiment.*]` fall back to defaults.
//! Unknown keys anywhere are errors.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::{default_initial, ExperimentSpec, InitialProfile, Probe};
use crate::kinetic_det::DuhamelOptions;
use crate::model::ModelParams;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(default = "one")]
    pub workers: usize,
    pub model: ModelParams,
    #[serde(default = "default_initial")]
    pub initial: InitialProfile,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub simulate: SimulateConfig,
    #[serde(default)]
    pub crossings: CrossingsConfig,
    #[serde(default)]
    pub experiment: ExperimentSpec,
    pub io: IoConfig,
}

fn one() -> usize {
    1
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub duhamel: DuhamelConfig,
    pub pde: PdeConfig,
    pub stable: StableConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DuhamelConfig {
    pub t_end: f64,
    pub h: f64,
    pub half_width: f64,
    pub k_panels: usize,
    pub k_order: usize,
    pub k_grading: f64,
    pub time_steps: usize,
    pub tolerance: f64,
    pub max_iterations: usize,
    pub estimate_grid_error: bool,
}

impl Default for DuhamelConfig {
    fn default() -> Self {
        let o = DuhamelOptions::default();
        DuhamelConfig {
            t_end: 0.5,
            h: 1.0 / 64.0,
            half_width: o.half_width,
            k_panels: 8,
            k_order: o.k_order,
            k_grading: o.k_grading,
            time_steps: 16,
            tolerance: o.tolerance,
            max_iterations: o.max_iterations,
            estimate_grid_error: o.estimate_grid_error,
        }
    }
}

impl DuhamelConfig {
    pub fn options(&self) -> DuhamelOptions {
        DuhamelOptions {
            h: self.h,
            half_width: self.half_width,
            k_panels: self.k_panels,
            k_order: self.k_order,
            k_grading: self.k_grading,
            time_steps: self.time_steps,
            tolerance: self.tolerance,
            max_iterations: self.max_iterations,
            estimate_grid_error: self.estimate_grid_error,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PdeConfig {
    pub h: f64,
    pub half_width: f64,
    /// truncation radius; defaults to 2.5 h
    pub a: Option<f64>,
    pub dt: f64,
    pub t_end: f64,
}

impl Default for PdeConfig {
    fn default() -> Self {
        PdeConfig {
            h: 1.0 / 128.0,
            half_width: 3.0,
            a: None,
            dt: 1e-3,
            t_end: 0.5,
        }
    }
}

impl PdeConfig {
    pub fn truncation(&self) -> f64 {
        self.a.unwrap_or(2.5 * self.h)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StableConfig {
    pub a: f64,
}

impl Default for StableConfig {
    fn default() -> Self {
        StableConfig { a: 0.01 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    /// scaling parameter N of the kinetic chain
    pub n: f64,
    pub samples: usize,
    pub probes: Vec<Probe>,
    /// number of individual paths written to the path dump
    pub paths: usize,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        SimulateConfig {
            n: 1e3,
            samples: 10_000,
            probes: vec![
                Probe { t: 0.5, y: 0.3, k: 0.25 },
                Probe { t: 0.5, y: -0.3, k: 0.25 },
            ],
            paths: 10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CrossingsConfig {
    pub y: f64,
    pub k: f64,
    pub n: f64,
    pub crossings: usize,
    pub samples: usize,
    /// horizon on the step clock
    pub t_max: f64,
    /// truncation of the limit sampler
    pub a: f64,
}

impl Default for CrossingsConfig {
    fn default() -> Self {
        CrossingsConfig {
            y: 0.5,
            k: 0.25,
            n: 1e3,
            crossings: 3,
            samples: 10_000,
            t_max: 4.0,
            a: 2e-3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IoConfig {
    pub out: PathBuf,
    #[serde(default = "default_formats")]
    pub formats: Vec<Format>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

fn default_formats() -> Vec<Format> {
    vec![Format::Csv, Format::Json]
}

impl IoConfig {
    pub fn wants(&self, f: Format) -> bool {
        self.formats.contains(&f)
    }
}

/// 1-based (line, column) of a byte offset.
fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let offset = offset.min(text.len());
    let before = &text[..offset];
    let line = before.matches('\n').count() + 1;
    let col = before.rfind('\n').map_or(offset, |p| offset - p - 1) + 1;
    (line, col)
}

impl RunConfig {
    /// Parse and check a document; `origin` names it in diagnostics.
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| {
            let (line, col) = e.span().map_or((1, 1), |s| line_col(text, s.start));
            Error::Config(format!("{origin}:{line}:{col}: {}", e.message().trim()))
        })?;
        cfg.check()
            .map_err(|e| Error::Config(format!("{origin}: {e}")))?;
        let mut cfg = cfg;
        cfg.experiment.initial = cfg.initial.clone();
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Structural checks that do not involve the model.
    pub fn check(&self) -> Result<()> {
        if self.workers == 0 {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        if self.simulate.samples == 0 || self.crossings.samples == 0 {
            return Err(Error::Config("samples must be at least 1".into()));
        }
        if !(self.simulate.n >= 1.0 && self.crossings.n >= 1.0) {
            return Err(Error::Config("N must be at least 1".into()));
        }
        if self.crossings.y == 0.0 {
            return Err(Error::Config("crossings.y must be nonzero".into()));
        }
        if self.io.formats.is_empty() {
            return Err(Error::Config("io.formats must not be empty".into()));
        }
        let positive = [
            ("solver.pde.h", self.solver.pde.h),
            ("solver.pde.dt", self.solver.pde.dt),
            ("solver.pde.t_end", self.solver.pde.t_end),
            ("solver.duhamel.t_end", self.solver.duhamel.t_end),
            ("solver.stable.a", self.solver.stable.a),
            ("crossings.a", self.crossings.a),
            ("crossings.t_max", self.crossings.t_max),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        for p in &self.simulate.probes {
            if p.y == 0.0 || !(p.t > 0.0) || p.k == 0.0 || p.k.abs() > 0.5 {
                return Err(Error::Config(format!(
                    "probe (t={}, y={}, k={}) needs t > 0, y != 0, 0 < |k| <= 1/2",
                    p.t, p.y, p.k
                )));
            }
        }
        self.experiment.check()
    }
}

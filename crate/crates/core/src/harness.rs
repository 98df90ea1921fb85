//! Desk-scale experiments around the scaling limit: cross-solver
//! agreement, stable-index recovery, crossing-time convergence,
//! macroscopic jumps, coupling rates, mixing and spectral gap, and the
//! deterministic checks of the limit equation.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fractional_pde::{
    boundary_trace, energy_audit, weak_residual, NonlocalOperator, PdeCoefficients, SpatialGrid, TestFunction,
};
use crate::kinetic_det::{duhamel_solve, DuhamelOptions};
use crate::kinetic_mc::{
    crossing_statistics, estimate_w_n, free_displacement, sample_w_n, simulate_path, InitialField, McOptions,
    PathOptions,
};
use crate::model::{
    levy_symbol_check, validate, validate_with, CoefficientProfile, InterfaceCoefficients, KernelForm,
    ValidatedModel, ValidationOptions,
};
use crate::quadrature::graded_half_rule;
use crate::rng::{open01, substream, Parallelism};
use crate::stable_limit::{estimate_w_limit, free_eta_crossings, sample_w_limit, simulate_eta, RegularizedLevyConfig};
use crate::stats::{empirical_cf, ks_two_sample, linear_fit, Estimate, Welford};

/// Initial datum W0(y, k) relative to the bath temperature T.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialProfile {
    /// W0 ≡ T
    Equilibrium,
    /// T + A (1 - s²)^4 (1 + m cos 2πk), s = (y - c)/w, zero for |s| ≥ 1
    Bump {
        center: f64,
        width: f64,
        amplitude: f64,
        #[serde(default)]
        k_modulation: f64,
    },
    /// T + A exp(-s²) (1 + m cos 2πk)
    Gaussian {
        center: f64,
        width: f64,
        amplitude: f64,
        #[serde(default)]
        k_modulation: f64,
    },
}

impl InitialProfile {
    fn shape(&self, y: f64) -> (f64, f64) {
        match *self {
            InitialProfile::Equilibrium => (0.0, 0.0),
            InitialProfile::Bump {
                center,
                width,
                amplitude,
                k_modulation,
            } => {
                let s = (y - center) / width;
                let b = if s.abs() < 1.0 { (1.0 - s * s).powi(4) } else { 0.0 };
                (amplitude * b, k_modulation)
            }
            InitialProfile::Gaussian {
                center,
                width,
                amplitude,
                k_modulation,
            } => {
                let s = (y - center) / width;
                (amplitude * (-s * s).exp(), k_modulation)
            }
        }
    }

    pub fn value(&self, temperature: f64, y: f64, k: f64) -> f64 {
        let (b, m) = self.shape(y);
        temperature + b * (1.0 + m * (2.0 * std::f64::consts::PI * k).cos())
    }

    /// ∫ W0(y, k) dk, the datum of the limit equation.
    pub fn k_mean(&self, temperature: f64, y: f64) -> f64 {
        temperature + self.shape(y).0
    }

    /// sup |W0|
    pub fn sup_norm(&self, temperature: f64) -> f64 {
        let (a, m) = match *self {
            InitialProfile::Equilibrium => (0.0, 0.0),
            InitialProfile::Bump {
                amplitude,
                k_modulation,
                ..
            }
            | InitialProfile::Gaussian {
                amplitude,
                k_modulation,
                ..
            } => (amplitude, k_modulation),
        };
        temperature.abs() + a.abs() * (1.0 + m.abs())
    }

    /// Whether W0 equals T on a neighbourhood of the interface, which
    /// places it in the compatible class for every coefficient choice.
    pub fn is_compatible(&self) -> bool {
        match *self {
            InitialProfile::Equilibrium => true,
            InitialProfile::Bump { center, width, .. } => center.abs() > width.abs(),
            InitialProfile::Gaussian { amplitude, .. } => amplitude == 0.0,
        }
    }

    pub fn field(&self, temperature: f64) -> ProfileField {
        ProfileField {
            profile: self.clone(),
            temperature,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ProfileField {
    pub profile: InitialProfile,
    pub temperature: f64,
}

impl InitialField for ProfileField {
    fn value(&self, y: f64, k: f64) -> f64 {
        self.profile.value(self.temperature, y, k)
    }
}

/// Spatial part of a profile as a field that ignores k.
pub struct MeanField<'a>(pub &'a ProfileField);

impl InitialField for MeanField<'_> {
    fn value(&self, y: f64, _k: f64) -> f64 {
        self.0.profile.k_mean(self.0.temperature, y)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Probe {
    pub t: f64,
    pub y: f64,
    pub k: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleSettings {
    pub samples: usize,
    pub h: f64,
    pub half_width: f64,
    pub time_steps: usize,
    pub k_panels: usize,
    pub k_order: usize,
    pub probes: Vec<Probe>,
}

impl Default for OracleSettings {
    fn default() -> Self {
        let t = 0.5;
        OracleSettings {
            samples: 100_000,
            h: 1.0 / 128.0,
            half_width: 2.0,
            time_steps: 32,
            k_panels: 12,
            k_order: 8,
            probes: vec![
                Probe { t, y: -0.3, k: 0.25 },
                Probe { t, y: 0.15, k: 0.25 },
                Probe { t, y: 0.3, k: -0.3 },
                Probe { t, y: 0.6, k: 0.1 },
                Probe { t, y: 1.0, k: -0.45 },
            ],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LimitSettings {
    pub samples: usize,
    pub limit_samples: usize,
    pub n_ladder: Vec<f64>,
    /// truncation radius shared by the stable sampler and the PDE
    pub a: f64,
    pub pde_h: f64,
    pub pde_dt: f64,
    pub pde_half_width: f64,
    pub probes: Vec<Probe>,
    /// test function of the weak-convergence functional: (centre, radius)
    pub functional: (f64, f64),
}

impl Default for LimitSettings {
    fn default() -> Self {
        let t = 0.5;
        LimitSettings {
            samples: 20_000,
            limit_samples: 20_000,
            n_ladder: vec![1e2, 1e3, 1e4],
            a: 2.5 / 256.0,
            pde_h: 1.0 / 256.0,
            pde_dt: 1e-3,
            pde_half_width: 4.0,
            probes: vec![
                Probe { t, y: -0.5, k: 0.25 },
                Probe { t, y: -0.2, k: 0.25 },
                Probe { t, y: 0.2, k: 0.25 },
                Probe { t, y: 0.5, k: 0.25 },
                Probe { t, y: 1.0, k: 0.25 },
            ],
            functional: (0.3, 0.6),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IndexFitSettings {
    pub betas: Vec<f64>,
    pub scale_n: f64,
    pub samples: usize,
    pub t: f64,
    pub theta_points: usize,
}

impl Default for IndexFitSettings {
    fn default() -> Self {
        IndexFitSettings {
            betas: vec![1.25, 2.0],
            scale_n: 1e4,
            samples: 100_000,
            t: 1.0,
            theta_points: 24,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CrossingSettings {
    pub y: f64,
    pub k: f64,
    pub n_ladder: Vec<f64>,
    pub samples: usize,
    pub limit_samples: usize,
    pub a: f64,
    /// censoring horizon on the step clock
    pub t_max: f64,
}

impl Default for CrossingSettings {
    fn default() -> Self {
        CrossingSettings {
            y: 0.5,
            k: 0.25,
            n_ladder: vec![1e2, 1e3, 1e4],
            samples: 10_000,
            limit_samples: 100_000,
            a: 2e-3,
            t_max: 4.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MacroJumpSettings {
    pub y: f64,
    pub k: f64,
    pub epsilon: f64,
    pub crossings: usize,
    pub calibration_n: f64,
    pub check_n: Vec<f64>,
    pub samples: usize,
    pub t_max: f64,
}

impl Default for MacroJumpSettings {
    fn default() -> Self {
        MacroJumpSettings {
            y: 0.2,
            k: 0.25,
            epsilon: 0.05,
            crossings: 3,
            calibration_n: 1e3,
            check_n: vec![1e4, 1e5],
            samples: 5_000,
            t_max: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CouplingSettings {
    pub y: f64,
    pub k: f64,
    pub t: f64,
    pub crossings: usize,
    pub n_ladder: Vec<f64>,
    pub samples: usize,
    /// Hölder exponent of the k-dependent coefficients
    pub gamma: f64,
}

impl Default for CouplingSettings {
    fn default() -> Self {
        CouplingSettings {
            y: 0.3,
            k: 0.25,
            t: 1.0,
            crossings: 1,
            n_ladder: vec![1e2, 1e3, 1e4],
            samples: 20_000,
            gamma: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PdeCheckSettings {
    pub energy_h: f64,
    pub energy_dt: f64,
    pub energy_t: f64,
    pub trace_h: Vec<f64>,
    pub trace_t: f64,
    pub trace_g0: f64,
    pub weak_beta: f64,
    pub weak_h: Vec<f64>,
    pub weak_t: f64,
    pub weak_tests: usize,
    pub quadratic_fields: usize,
}

impl Default for PdeCheckSettings {
    fn default() -> Self {
        PdeCheckSettings {
            energy_h: 1.0 / 128.0,
            energy_dt: 1e-3,
            energy_t: 0.1,
            trace_h: vec![1.0 / 64.0, 1.0 / 128.0],
            trace_t: 0.5,
            trace_g0: 0.2,
            weak_beta: 4.0,
            weak_h: vec![1.0 / 32.0, 1.0 / 64.0, 1.0 / 128.0],
            weak_t: 0.25,
            weak_tests: 5,
            quadratic_fields: 10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MixingSettings {
    pub nodes: Vec<usize>,
    /// times in units of τ̄
    pub times: Vec<f64>,
    pub threshold: f64,
    pub mixture_kappa: f64,
}

impl Default for MixingSettings {
    fn default() -> Self {
        MixingSettings {
            nodes: vec![512, 1024],
            times: vec![0.0, 1.0, 2.0, 5.0, 10.0, 20.0, 50.0],
            threshold: 1e-3,
            mixture_kappa: 0.15,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeterminismSettings {
    pub workers: Vec<usize>,
    pub samples: usize,
}

impl Default for DeterminismSettings {
    fn default() -> Self {
        DeterminismSettings {
            workers: vec![1, 4],
            samples: 4_000,
        }
    }
}

/// Everything an experiment run needs besides the model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    /// set from the run configuration's `[initial]` section
    #[serde(skip, default = "default_initial")]
    pub initial: InitialProfile,
    pub oracle: OracleSettings,
    pub limit: LimitSettings,
    pub index_fit: IndexFitSettings,
    pub crossing: CrossingSettings,
    pub macro_jump: MacroJumpSettings,
    pub coupling: CouplingSettings,
    pub pde: PdeCheckSettings,
    pub mixing: MixingSettings,
    pub determinism: DeterminismSettings,
}

/// Compatible bump used when no initial datum is configured.
pub fn default_initial() -> InitialProfile {
    InitialProfile::Bump {
        center: 0.5,
        width: 0.4,
        amplitude: 0.5,
        k_modulation: 0.5,
    }
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            initial: default_initial(),
            oracle: OracleSettings::default(),
            limit: LimitSettings::default(),
            index_fit: IndexFitSettings::default(),
            crossing: CrossingSettings::default(),
            macro_jump: MacroJumpSettings::default(),
            coupling: CouplingSettings::default(),
            pde: PdeCheckSettings::default(),
            mixing: MixingSettings::default(),
            determinism: DeterminismSettings::default(),
        }
    }
}

impl ExperimentSpec {
    /// Reduced sizes for quick end-to-end runs.
    pub fn smoke() -> Self {
        let mut s = ExperimentSpec::default();
        s.oracle.samples = 1_000;
        s.oracle.h = 1.0 / 32.0;
        s.oracle.time_steps = 16;
        s.oracle.k_panels = 6;
        s.limit.samples = 1_000;
        s.limit.limit_samples = 1_000;
        s.limit.n_ladder = vec![1e2, 1e3];
        s.limit.pde_h = 1.0 / 64.0;
        s.limit.a = 2.5 / 64.0;
        s.limit.pde_dt = 1e-2;
        s.limit.pde_half_width = 3.0;
        s.index_fit.scale_n = 1e3;
        s.index_fit.samples = 1_000;
        s.crossing.n_ladder = vec![1e2, 1e3];
        s.crossing.samples = 1_000;
        s.crossing.limit_samples = 1_000;
        s.crossing.a = 1e-2;
        s.macro_jump.calibration_n = 1e2;
        s.macro_jump.check_n = vec![1e3];
        s.macro_jump.samples = 1_000;
        s.coupling.n_ladder = vec![1e2, 1e3];
        s.coupling.samples = 1_000;
        s.pde.energy_h = 1.0 / 32.0;
        s.pde.energy_dt = 1e-2;
        s.pde.trace_h = vec![1.0 / 32.0, 1.0 / 64.0];
        s.pde.weak_h = vec![1.0 / 64.0, 1.0 / 128.0];
        s.mixing.nodes = vec![128, 256];
        s.determinism.samples = 512;
        s
    }

    /// Structural checks: probes away from the interface, nonempty ladders.
    pub fn check(&self) -> Result<()> {
        for p in self.oracle.probes.iter().chain(&self.limit.probes) {
            if p.y.abs() < 0.1 {
                return Err(Error::InvalidParameter {
                    name: "probe.y",
                    requirement: "|y| >= 0.1",
                    value: p.y,
                });
            }
            if !(p.t > 0.0) || p.k == 0.0 || p.k.abs() > 0.5 {
                return Err(Error::InvalidParameter {
                    name: "probe",
                    requirement: "t > 0 and 0 < |k| <= 1/2",
                    value: if p.t > 0.0 { p.k } else { p.t },
                });
            }
        }
        let sizes = [
            ("oracle.samples", self.oracle.samples),
            ("limit.samples", self.limit.samples),
            ("limit.limit_samples", self.limit.limit_samples),
            ("index_fit.samples", self.index_fit.samples),
            ("crossing.samples", self.crossing.samples),
            ("crossing.limit_samples", self.crossing.limit_samples),
            ("macro_jump.samples", self.macro_jump.samples),
            ("coupling.samples", self.coupling.samples),
            ("determinism.samples", self.determinism.samples),
        ];
        for (name, n) in sizes {
            if n == 0 {
                return Err(Error::InvalidParameter {
                    name,
                    requirement: "at least one sample",
                    value: 0.0,
                });
            }
        }
        for (name, l) in [
            ("limit.n_ladder", &self.limit.n_ladder),
            ("crossing.n_ladder", &self.crossing.n_ladder),
            ("coupling.n_ladder", &self.coupling.n_ladder),
        ] {
            if l.is_empty() || l.iter().any(|&n| !(n >= 1.0)) {
                return Err(Error::InvalidGrid(format!("{name} must list values >= 1")));
            }
        }
        Ok(())
    }
}

/// One estimate with its provenance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub experiment: String,
    pub label: String,
    pub n: Option<f64>,
    pub a: Option<f64>,
    pub t: Option<f64>,
    pub y: Option<f64>,
    pub k: Option<f64>,
    pub value: f64,
    pub std_error: Option<f64>,
    pub n_samples: Option<u64>,
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Assertion {
    pub experiment: String,
    pub name: String,
    pub passed: bool,
    pub observed: f64,
    pub threshold: f64,
    pub detail: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTable {
    pub cells: Vec<Cell>,
    pub assertions: Vec<Assertion>,
    /// fitted rates and other scalar results, keyed "experiment.name"
    pub fits: BTreeMap<String, f64>,
    pub incomplete: bool,
}

impl ConvergenceTable {
    pub fn passed(&self) -> bool {
        self.assertions.iter().all(|a| a.passed)
    }

    pub fn merge(&mut self, other: ConvergenceTable) {
        self.cells.extend(other.cells);
        self.assertions.extend(other.assertions);
        self.fits.extend(other.fits);
        self.incomplete |= other.incomplete;
    }

    fn assert(&mut self, experiment: &str, name: &str, passed: bool, observed: f64, threshold: f64, detail: String) {
        self.assertions.push(Assertion {
            experiment: experiment.into(),
            name: name.into(),
            passed,
            observed,
            threshold,
            detail,
        });
    }

    fn fit(&mut self, experiment: &str, name: &str, v: f64) {
        self.fits.insert(format!("{experiment}.{name}"), v);
    }

    /// Assertions of one experiment.
    pub fn for_experiment<'a>(&'a self, name: &'a str) -> impl Iterator<Item = &'a Assertion> + 'a {
        self.assertions.iter().filter(move |a| a.experiment == name)
    }
}

fn cell(experiment: &str, label: &str) -> Cell {
    Cell {
        experiment: experiment.into(),
        label: label.into(),
        n: None,
        a: None,
        t: None,
        y: None,
        k: None,
        value: 0.0,
        std_error: None,
        n_samples: None,
        seed: None,
    }
}

fn est_cell(experiment: &str, label: &str, p: Probe, n: Option<f64>, e: &Estimate) -> Cell {
    Cell {
        n,
        t: Some(p.t),
        y: Some(p.y),
        k: Some(p.k),
        value: e.mean,
        std_error: Some(e.std_error),
        n_samples: Some(e.n_samples),
        seed: Some(e.seed),
        ..cell(experiment, label)
    }
}

/// Seed of item `index` within the stream `tag` of an experiment.
pub fn derive_seed(base: u64, tag: u64, index: u64) -> u64 {
    base ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03)
}

/// Names accepted by `run_experiment`, in run order.
pub const EXPERIMENTS: &[&str] = &[
    "equilibrium",
    "symbol_check",
    "stable_index_fit",
    "oracle_equivalence",
    "scaling_limit_experiment",
    "energy_identity",
    "quadratic_form",
    "crossing_time_convergence",
    "macroscopic_jumps",
    "boundary_trace",
    "weak_residual",
    "mixing_check",
    "determinism",
    "coupling_rate_check",
    "spectral_gap_estimate",
];

/// Context shared by all experiments.
pub struct Harness<'a> {
    pub model: &'a ValidatedModel,
    pub spec: &'a ExperimentSpec,
    pub seed: u64,
    pub par: Parallelism,
}

impl Harness<'_> {
    pub fn run(&self, name: &str) -> Result<ConvergenceTable> {
        match name {
            "equilibrium" => self.equilibrium(),
            "symbol_check" => self.symbol_check(),
            "stable_index_fit" => self.stable_index_fit(),
            "oracle_equivalence" => self.oracle_equivalence(),
            "scaling_limit_experiment" => self.scaling_limit_experiment(),
            "energy_identity" => self.energy_identity(),
            "quadratic_form" => self.quadratic_form(),
            "crossing_time_convergence" => self.crossing_time_convergence(),
            "macroscopic_jumps" => self.macroscopic_jumps(),
            "boundary_trace" => self.boundary_trace(),
            "weak_residual" => self.weak_residual(),
            "mixing_check" => self.mixing_check(),
            "determinism" => self.determinism(),
            "coupling_rate_check" => self.coupling_rate_check(),
            "spectral_gap_estimate" => self.spectral_gap_estimate(),
            other => Err(Error::Config(format!(
                "unknown experiment `{other}`; expected one of {}",
                EXPERIMENTS.join(", ")
            ))),
        }
    }

    /// Run the selected experiments in registry order. An interruption
    /// keeps what finished and marks the table incomplete.
    pub fn run_all(&self, only: Option<&[String]>) -> Result<ConvergenceTable> {
        if let Some(list) = only {
            for n in list {
                if !EXPERIMENTS.contains(&n.as_str()) {
                    return Err(Error::Config(format!("unknown experiment `{n}`")));
                }
            }
        }
        let mut table = ConvergenceTable::default();
        for &name in EXPERIMENTS {
            if only.is_some_and(|l| !l.iter().any(|x| x == name)) {
                continue;
            }
            if self.par.cancelled() {
                table.incomplete = true;
                break;
            }
            match self.run(name) {
                Ok(t) => table.merge(t),
                Err(Error::Interrupted) => {
                    table.incomplete = true;
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        Ok(table)
    }

    fn mc(&self, n_samples: usize, tag: u64, index: u64) -> McOptions {
        McOptions {
            n_samples,
            seed: derive_seed(self.seed, tag, index),
            par: self.par,
        }
    }

    fn w0(&self) -> ProfileField {
        self.spec.initial.field(self.model.temperature())
    }

    fn pde_operator(&self, model: &ValidatedModel, h: f64, half_width: f64, a: f64) -> Result<NonlocalOperator> {
        let grid = SpatialGrid::new(h, half_width)?;
        NonlocalOperator::assemble(grid, a, PdeCoefficients::from_model(model), model.temperature())
    }

    /// W ≡ T through all four routes.
    pub fn equilibrium(&self) -> Result<ConvergenceTable> {
        const E: &str = "equilibrium";
        let mut tab = ConvergenceTable::default();
        let m = self.model;
        let temp = m.temperature();
        let w0 = move |_: f64, _: f64| temp;
        let probes = &self.spec.limit.probes;
        let n = *self.spec.limit.n_ladder.last().unwrap();
        let mut mc_dev: f64 = 0.0;
        let mut det_dev: f64 = 0.0;
        let cfg = RegularizedLevyConfig::new(&m.constants, self.spec.limit.a)?;
        for (i, &p) in probes.iter().enumerate() {
            let samples = self.spec.oracle.samples.min(10_000);
            let e = estimate_w_n(p.t, p.y, p.k, &w0, n, m, self.mc(samples, 11, i as u64))?;
            mc_dev = mc_dev.max((e.mean - temp).abs()).max(e.std_error);
            tab.cells.push(est_cell(E, "kinetic", p, Some(n), &e));
            let s = estimate_w_limit(p.t, p.y, &w0, &cfg, m.interface(), temp, self.mc(samples, 12, i as u64))?;
            mc_dev = mc_dev.max((s.mean - temp).abs()).max(s.std_error);
            tab.cells.push(Cell {
                a: Some(cfg.a),
                ..est_cell(E, "stable", p, None, &s)
            });
        }
        let t_end = probes.iter().map(|p| p.t).fold(0.0, f64::max);
        let o = &self.spec.oracle;
        let dopts = DuhamelOptions {
            h: 1.0 / 32.0,
            half_width: o.half_width,
            k_panels: 4,
            k_order: 6,
            time_steps: 8,
            estimate_grid_error: false,
            ..Default::default()
        };
        let sol = duhamel_solve(&w0, temp, t_end, m, &dopts)?;
        for f in &sol.fields {
            for v in &f.values {
                det_dev = det_dev.max((v - temp).abs());
            }
        }
        let op = self.pde_operator(m, 1.0 / 64.0, 2.0, 2.5 / 64.0)?;
        let traj = op.solve(&vec![temp; op.grid.len()], t_end, 1e-2)?;
        for f in &traj.fields {
            for v in f {
                det_dev = det_dev.max((v - temp).abs());
            }
        }
        let mut c = cell(E, "deterministic_max_deviation");
        c.value = det_dev;
        tab.cells.push(c);
        tab.assert(
            E,
            "monte_carlo_exact",
            mc_dev == 0.0,
            mc_dev,
            0.0,
            "kinetic and stable estimates equal T with zero standard error".into(),
        );
        tab.assert(
            E,
            "deterministic_within_1e-10",
            det_dev < 1e-10,
            det_dev,
            1e-10,
            "Duhamel and PDE trajectories stay at T".into(),
        );
        Ok(tab)
    }

    /// Normalisation of the kernel constant against the symbol.
    pub fn symbol_check(&self) -> Result<ConvergenceTable> {
        const E: &str = "symbol_check";
        let mut tab = ConvergenceTable::default();
        let mut worst: f64 = 0.0;
        for beta in [1.25, 1.5, 2.0] {
            for theta in [0.5, 1.0, 2.0, 5.0] {
                let r = levy_symbol_check(beta, theta)?;
                worst = worst.max(r);
                let mut c = cell(E, &format!("beta={beta}"));
                c.k = Some(theta);
                c.value = r;
                tab.cells.push(c);
            }
        }
        tab.assert(
            E,
            "residual_below_1e-6",
            worst < 1e-6,
            worst,
            1e-6,
            "max relative symbol residual".into(),
        );
        Ok(tab)
    }

    /// α and scale from the empirical characteristic function of Z_N(t).
    pub fn stable_index_fit(&self) -> Result<ConvergenceTable> {
        const E: &str = "stable_index_fit";
        let s = &self.spec.index_fit;
        let mut tab = ConvergenceTable::default();
        for (bi, &beta) in s.betas.iter().enumerate() {
            let mut p = self.model.params.clone();
            p.beta = beta;
            p.kernel = KernelForm::Product;
            let m = validate_with(&p, ValidationOptions { allow_zero_absorption: true })?;
            let mc = self.mc(s.samples, 21, bi as u64);
            let xs = mc.par.map_samples(s.samples, |i| {
                let mut rng = substream(mc.seed, i as u64);
                free_displacement(0.25, s.scale_n, s.t, &m, &mut rng)
            })?;
            let fit = fit_stable_cf(&xs, s.t, m.constants.alpha, m.constants.c_hat * m.constants.tau_bar, s.theta_points)?;
            let alpha = m.constants.alpha;
            let c_hat_est = fit.scale / m.constants.tau_bar;
            let tag = format!("beta={beta}");
            for (label, v) in [
                ("alpha_hat", fit.alpha),
                ("alpha_hat_se", fit.alpha_se),
                ("scale_hat", fit.scale),
                ("c_hat_estimate", c_hat_est),
                ("c_hat_quadrature", m.constants.c_hat),
            ] {
                let mut c = cell(E, &format!("{tag} {label}"));
                c.n = Some(s.scale_n);
                c.value = v;
                c.n_samples = Some(s.samples as u64);
                c.seed = Some(mc.seed);
                tab.cells.push(c);
            }
            tab.fit(E, &format!("{tag}.alpha_hat"), fit.alpha);
            tab.fit(E, &format!("{tag}.c_hat_ratio"), c_hat_est / m.constants.c_hat);
            tab.assert(
                E,
                &format!("{tag} alpha_within_0.05"),
                (fit.alpha - alpha).abs() <= 0.05,
                fit.alpha,
                alpha,
                format!("fitted {:.4} vs 1+1/β = {alpha:.4}", fit.alpha),
            );
            let rel = (c_hat_est / m.constants.c_hat - 1.0).abs();
            tab.assert(
                E,
                &format!("{tag} scale_within_10pct"),
                rel <= 0.10,
                rel,
                0.10,
                format!("ĉ from fit {c_hat_est:.5}, quadrature {:.5}", m.constants.c_hat),
            );
        }
        Ok(tab)
    }

    /// Kinetic MC at N = 1 against the Duhamel solver.
    pub fn oracle_equivalence(&self) -> Result<ConvergenceTable> {
        const E: &str = "oracle_equivalence";
        let o = &self.spec.oracle;
        let m = self.model;
        let w0 = self.w0();
        let mut tab = ConvergenceTable::default();
        let mut by_t: BTreeMap<u64, Vec<(usize, Probe)>> = BTreeMap::new();
        for (i, p) in o.probes.iter().enumerate() {
            by_t.entry(p.t.to_bits()).or_default().push((i, *p));
        }
        for (tb, probes) in by_t {
            let t = f64::from_bits(tb);
            let opts = DuhamelOptions {
                h: o.h,
                half_width: o.half_width,
                k_panels: o.k_panels,
                k_order: o.k_order,
                time_steps: o.time_steps,
                estimate_grid_error: true,
                ..Default::default()
            };
            let sol = duhamel_solve(&w0, m.temperature(), t, m, &opts)?;
            let grid = &sol.final_field().grid;
            for (i, p) in probes {
                // the MC runs at the grid momentum nearest the probe
                let kk = grid.k[grid.nearest_k(p.k)];
                let pk = Probe { k: kk, ..p };
                let d = sol.value(p.y, kk)?;
                let ge = sol.grid_error_at(p.y, kk)?.unwrap_or(0.0);
                let e = estimate_w_n(t, p.y, kk, &w0, 1.0, m, self.mc(o.samples, 41, i as u64))?;
                tab.cells.push(est_cell(E, "kinetic_n1", pk, Some(1.0), &e));
                let mut c = cell(E, "duhamel");
                c.t = Some(t);
                c.y = Some(p.y);
                c.k = Some(kk);
                c.value = d;
                c.std_error = Some(ge);
                tab.cells.push(c);
                let diff = (e.mean - d).abs();
                let band = 3.0 * e.std_error + 2.0 * ge;
                tab.assert(
                    E,
                    &format!("probe{i} agreement"),
                    diff <= band,
                    diff,
                    band,
                    format!("y={} k={kk:.4}: MC {:.6}±{:.2e}, Duhamel {d:.6} (grid err {ge:.1e})", p.y, e.mean, e.std_error),
                );
            }
        }
        Ok(tab)
    }

    /// Kinetic MC over the N ladder, stable MC and the PDE at the probes
    /// plus a smooth-functional comparison.
    pub fn scaling_limit_experiment(&self) -> Result<ConvergenceTable> {
        const E: &str = "scaling_limit_experiment";
        let s = &self.spec.limit;
        let m = self.model;
        let temp = m.temperature();
        let w0 = self.w0();
        let mean = MeanField(&w0);
        let band = 0.02 * self.spec.initial.sup_norm(temp);
        let mut tab = ConvergenceTable::default();
        let cfg = RegularizedLevyConfig::new(&m.constants, s.a)?;
        let t_end = s.probes.iter().map(|p| p.t).fold(0.0, f64::max);
        let op = self.pde_operator(m, s.pde_h, s.pde_half_width, s.a)?;
        let traj = op.solve(&op.grid.sample(|y| self.spec.initial.k_mean(temp, y)), t_end, s.pde_dt)?;
        let nmax = s.n_ladder.len() - 1;
        let mut disc = vec![0.0; s.n_ladder.len()];
        for (pi, &p) in s.probes.iter().enumerate() {
            let st = estimate_w_limit(p.t, p.y, &mean, &cfg, m.interface(), temp, self.mc(s.limit_samples, 51, pi as u64))?;
            tab.cells.push(Cell {
                a: Some(s.a),
                ..est_cell(E, "stable", p, None, &st)
            });
            let pde = traj.interp_at(traj.index_of(p.t), p.y);
            let mut c = cell(E, "pde");
            c.t = Some(p.t);
            c.y = Some(p.y);
            c.a = Some(s.a);
            c.value = pde;
            tab.cells.push(c);
            let mut kin_last = None;
            for (ni, &n) in s.n_ladder.iter().enumerate() {
                let e = estimate_w_n(p.t, p.y, p.k, &w0, n, m, self.mc(s.samples, 52, (ni * 1000 + pi) as u64))?;
                tab.cells.push(est_cell(E, "kinetic", p, Some(n), &e));
                disc[ni] += (e.mean - pde).abs() / s.probes.len() as f64;
                if ni == nmax {
                    kin_last = Some(e);
                }
            }
            let k = kin_last.unwrap();
            let pairs = [
                ("kinetic-stable", (k.mean - st.mean).abs(), (k.std_error.powi(2) + st.std_error.powi(2)).sqrt()),
                ("kinetic-pde", (k.mean - pde).abs(), k.std_error),
                ("stable-pde", (st.mean - pde).abs(), st.std_error),
            ];
            for (name, d, sig) in pairs {
                let thr = 3.0 * sig + band;
                tab.assert(
                    E,
                    &format!("probe{pi} {name}"),
                    d <= thr,
                    d,
                    thr,
                    format!("t={} y={}", p.t, p.y),
                );
            }
            let (d_ks, d_kp, d_sp) = (pairs[0].1, pairs[1].1, pairs[2].1);
            tab.assert(
                E,
                &format!("probe{pi} triangle"),
                d_kp <= d_ks + d_sp + 1e-15,
                d_kp,
                d_ks + d_sp,
                "error bookkeeping".into(),
            );
        }
        for (ni, &n) in s.n_ladder.iter().enumerate() {
            tab.fit(E, &format!("mean_discrepancy_N={n}"), disc[ni]);
        }
        tab.assert(
            E,
            "discrepancy_shrinks",
            disc[nmax] < disc[0],
            disc[nmax],
            disc[0],
            "mean |kinetic - pde| over probes, largest vs smallest N".into(),
        );
        // ∫ W(t, y, k) G(y) dy dk with G a bump, sampled from G
        let (gc, gr) = s.functional;
        let g = TestFunction {
            bumps: vec![(gc, gr, 1.0)],
            decay: 0.0,
        };
        let mass: f64 = {
            let grid = SpatialGrid::new(s.pde_h, s.pde_half_width)?;
            grid.nodes().iter().map(|&y| s.pde_h * g.spatial(y)).sum()
        };
        let sample_y = |rng: &mut dyn rand::RngCore| loop {
            let y = gc + gr * (2.0 * open01(rng) - 1.0);
            if open01(rng) * (-1.0f64).exp() < g.spatial(y) && y != 0.0 {
                return y;
            }
        };
        let t = t_end;
        let pde_f: f64 = (0..op.grid.len())
            .map(|i| s.pde_h * g.spatial(op.grid.node(i)) * traj.fields.last().unwrap()[i])
            .sum();
        let mc = self.mc(s.limit_samples, 53, 0);
        let parts = mc.par.map_chunks(mc.n_samples, |r| -> Result<Welford> {
            let mut w = Welford::default();
            for i in r {
                let mut rng = substream(mc.seed, i as u64);
                let y = sample_y(&mut rng);
                let p = simulate_eta(y, t, &cfg, Some(m.interface()), false, &mut rng)?;
                w.push(if p.absorbed { temp } else { mean.value(p.end_position, 0.0) });
            }
            Ok(w)
        })?;
        let ws: Vec<Welford> = parts.into_iter().collect::<Result<_>>()?;
        let stable_f = Estimate::from_welford(&Welford::reduce(&ws), mc.seed);
        let mut fcell = cell(E, "functional_pde");
        fcell.t = Some(t);
        fcell.value = pde_f;
        tab.cells.push(fcell);
        let mut fcell = cell(E, "functional_stable");
        fcell.t = Some(t);
        fcell.value = mass * stable_f.mean;
        fcell.std_error = Some(mass * stable_f.std_error);
        fcell.n_samples = Some(stable_f.n_samples);
        fcell.seed = Some(stable_f.seed);
        tab.cells.push(fcell);
        let mut fd = Vec::new();
        for (ni, &n) in s.n_ladder.iter().enumerate() {
            let mc = self.mc(s.samples, 54, ni as u64);
            let coeffs = m.interface();
            let opts = PathOptions {
                scale_n: n,
                record: false,
                interface: true,
            };
            let parts = mc.par.map_chunks(mc.n_samples, |r| -> Result<Welford> {
                let mut w = Welford::default();
                for i in r {
                    let mut rng = substream(mc.seed, i as u64);
                    let y = sample_y(&mut rng);
                    let k = loop {
                        let k = open01(&mut rng) - 0.5;
                        if k != 0.0 {
                            break k;
                        }
                    };
                    let (st, _) = simulate_path(y, k, t, m, coeffs, opts, &mut rng)?;
                    w.push(if st.absorbed { temp } else { w0.value(st.position, st.k) });
                }
                Ok(w)
            })?;
            let ws: Vec<Welford> = parts.into_iter().collect::<Result<_>>()?;
            let e = Estimate::from_welford(&Welford::reduce(&ws), mc.seed);
            let mut c = cell(E, "functional_kinetic");
            c.n = Some(n);
            c.t = Some(t);
            c.value = mass * e.mean;
            c.std_error = Some(mass * e.std_error);
            c.n_samples = Some(e.n_samples);
            c.seed = Some(e.seed);
            tab.cells.push(c);
            fd.push((mass * e.mean, mass * e.std_error));
        }
        let (kf, ks) = *fd.last().unwrap();
        let thr = 3.0 * ks + band * mass;
        tab.assert(
            E,
            "functional kinetic-pde",
            (kf - pde_f).abs() <= thr,
            (kf - pde_f).abs(),
            thr,
            "∫W G at the largest N against the PDE".into(),
        );
        Ok(tab)
    }

    /// Discrete energy balance of a T = 0 run.
    pub fn energy_identity(&self) -> Result<ConvergenceTable> {
        const E: &str = "energy_identity";
        let s = &self.spec.pde;
        let mut p = self.model.params.clone();
        p.bath_temperature = 0.0;
        let m = validate(&p)?;
        let op = self.pde_operator(&m, s.energy_h, 2.0, 2.5 * s.energy_h)?;
        let w0 = op.grid.sample(|y| (-(y - 0.5).powi(2) / 0.05).exp());
        let traj = op.solve(&w0, s.energy_t, s.energy_dt)?;
        let rep = energy_audit(&traj, &op);
        let e0 = rep.steps[0].l2_squared;
        let worst = rep.steps.iter().map(|st| st.identity_residual.abs()).fold(0.0, f64::max);
        let monotone = rep.steps.windows(2).all(|w| w[1].l2_squared <= w[0].l2_squared);
        let mut tab = ConvergenceTable::default();
        for st in &rep.steps {
            let mut c = cell(E, "l2_squared");
            c.t = Some(st.t);
            c.value = st.l2_squared;
            c.std_error = Some(st.identity_residual);
            tab.cells.push(c);
        }
        tab.assert(
            E,
            "identity_residual",
            worst < 1e-6 * e0,
            worst,
            1e-6 * e0,
            "max per-step |d/dt‖W‖² + ĉ‖W‖²_H + numerical dissipation|".into(),
        );
        tab.assert(
            E,
            "l2_monotone",
            monotone,
            if monotone { 1.0 } else { 0.0 },
            1.0,
            "‖W(t)‖² nonincreasing at every step".into(),
        );
        Ok(tab)
    }

    /// 2⟨-L̂W, W⟩ against the double-integral norm on random fields.
    pub fn quadratic_form(&self) -> Result<ConvergenceTable> {
        const E: &str = "quadratic_form";
        let s = &self.spec.pde;
        let mut p = self.model.params.clone();
        p.bath_temperature = 0.0;
        let m = validate(&p)?;
        let op = self.pde_operator(&m, 1.0 / 32.0, 2.0, 2.5 / 32.0)?;
        let mut tab = ConvergenceTable::default();
        let mut worst: f64 = 0.0;
        for i in 0..s.quadratic_fields {
            let mut rng = substream(derive_seed(self.seed, 71, 0), i as u64);
            let w: Vec<f64> = (0..op.grid.len()).map(|_| 2.0 * rng.random::<f64>() - 1.0).collect();
            let lw = op.apply(&w);
            let form = -2.0 * op.inner(&lw, &w);
            let norm = op.h_norm(&w, 0.0);
            let rel = (form - norm).abs() / norm;
            worst = worst.max(rel);
            let mut c = cell(E, &format!("field{i}"));
            c.value = rel;
            tab.cells.push(c);
        }
        tab.assert(
            E,
            "form_equals_norm",
            worst < 1e-8,
            worst,
            1e-8,
            "max relative |2⟨-L̂W,W⟩ - ‖W‖²_H| over random fields".into(),
        );
        Ok(tab)
    }

    /// KS distance of first crossing times, kinetic against stable.
    pub fn crossing_time_convergence(&self) -> Result<ConvergenceTable> {
        const E: &str = "crossing_time_convergence";
        let s = &self.spec.crossing;
        let m = self.free_model()?;
        let tau = m.constants.tau_bar;
        let cfg = RegularizedLevyConfig::new(&m.constants, s.a)?;
        let mc = self.mc(s.limit_samples, 81, 0);
        let lim = mc.par.map_samples(s.limit_samples, |i| {
            let mut rng = substream(mc.seed, i as u64);
            free_eta_crossings(s.y, 2, s.t_max * tau, &cfg, &mut rng)
        })?;
        let lim: Vec<(Vec<f64>, Vec<f64>)> = lim.into_iter().collect::<Result<_>>()?;
        let first = |v: &Vec<f64>, d: f64| v.first().copied().unwrap_or(d);
        let u1: Vec<f64> = lim.iter().map(|(t, _)| first(t, f64::INFINITY) / tau).collect();
        let z1: Vec<f64> = lim.iter().filter(|(t, _)| !t.is_empty()).map(|(_, z)| z[0]).collect();
        let mut tab = ConvergenceTable::default();
        let signs_ok_lim = z1.iter().all(|&z| z * s.y < 0.0);
        let ordered = lim.iter().all(|(t, _)| t.windows(2).all(|w| w[0] < w[1]));
        let mut ks_t = Vec::new();
        let mut signs_ok_kin = true;
        for (ni, &n) in s.n_ladder.iter().enumerate() {
            let mc = self.mc(s.samples, 82, ni as u64);
            let cs = crossing_statistics(s.y, s.k, n, 1, s.t_max, &m, mc)?;
            let t1: Vec<f64> = cs.iter().map(|c| first(&c.times, f64::INFINITY)).collect();
            let zk: Vec<f64> = cs.iter().filter(|c| !c.times.is_empty()).map(|c| c.positions[0]).collect();
            signs_ok_kin &= zk.iter().all(|&z| z * s.y < 0.0);
            let d = ks_two_sample(&t1, &u1);
            let dz = ks_two_sample(&zk, &z1);
            ks_t.push(d);
            for (label, v) in [("ks_time", d), ("ks_position", dz)] {
                let mut c = cell(E, label);
                c.n = Some(n);
                c.a = Some(s.a);
                c.y = Some(s.y);
                c.value = v;
                c.n_samples = Some(s.samples as u64);
                c.seed = Some(mc.seed);
                tab.cells.push(c);
            }
            tab.fit(E, &format!("ks_time_N={n}"), d);
        }
        let decreasing = ks_t.windows(2).all(|w| w[1] < w[0]);
        tab.assert(
            E,
            "ks_strictly_decreasing",
            decreasing,
            *ks_t.last().unwrap(),
            ks_t[0],
            format!("KS over the N ladder: {ks_t:?}"),
        );
        tab.assert(
            E,
            "post_crossing_sign",
            signs_ok_kin && signs_ok_lim,
            0.0,
            0.0,
            "post-crossing positions lie on the far side in both samplers".into(),
        );
        tab.assert(
            E,
            "crossing_times_ordered",
            ordered,
            0.0,
            0.0,
            "û₁ < û₂ on every limit path".into(),
        );
        Ok(tab)
    }

    /// Scaled flight length at crossings bounded below with a frozen C.
    pub fn macroscopic_jumps(&self) -> Result<ConvergenceTable> {
        const E: &str = "macroscopic_jumps";
        let s = &self.spec.macro_jump;
        let m = self.free_model()?;
        let alpha = m.constants.alpha;
        let mins = |n: f64, idx: u64| -> Result<Vec<f64>> {
            let cs = crossing_statistics(s.y, s.k, n, s.crossings, s.t_max, &m, self.mc(s.samples, 91, idx))?;
            Ok(cs
                .iter()
                .filter(|c| !c.flight_means.is_empty())
                .map(|c| c.flight_means.iter().fold(f64::INFINITY, |a, &b| a.min(b)) * n.powf(-1.0 / alpha))
                .collect())
        };
        let mut cal = mins(s.calibration_n, 0)?;
        if cal.is_empty() {
            return Err(Error::InsufficientSamples { got: 0, needed: 1 });
        }
        cal.sort_by(f64::total_cmp);
        // C at half the target level leaves room for sampling error
        let c_const = cal[((0.5 * s.epsilon * cal.len() as f64) as usize).min(cal.len() - 1)];
        let mut tab = ConvergenceTable::default();
        tab.fit(E, "C", c_const);
        for (i, &n) in s.check_n.iter().enumerate() {
            let v = mins(n, 1 + i as u64)?;
            if v.is_empty() {
                return Err(Error::InsufficientSamples { got: 0, needed: 1 });
            }
            let p = v.iter().filter(|&&x| x <= c_const).count() as f64 / v.len() as f64;
            let mut c = cell(E, "probability_below_C");
            c.n = Some(n);
            c.value = p;
            c.n_samples = Some(v.len() as u64);
            tab.cells.push(c);
            tab.assert(
                E,
                &format!("N={n} bound"),
                p < s.epsilon,
                p,
                s.epsilon,
                format!("P[min scaled crossing flight <= C={c_const:.4}]"),
            );
        }
        Ok(tab)
    }

    /// Monotone approach to T next to the interface and refinement.
    pub fn boundary_trace(&self) -> Result<ConvergenceTable> {
        const E: &str = "boundary_trace";
        let s = &self.spec.pde;
        let mut p = self.model.params.clone();
        let (pp, pm, _) = self.model.interface().at_zero();
        let scale = (1.0 - s.trace_g0) / (pp + pm);
        p.interface = InterfaceCoefficients::constant(pp * scale, pm * scale, s.trace_g0);
        let m = validate(&p)?;
        let temp = m.temperature();
        let prof = InitialProfile::Bump {
            center: 2.0,
            width: 0.5,
            amplitude: 1.0,
            k_modulation: 0.0,
        };
        let mut tab = ConvergenceTable::default();
        let mut maxdev = Vec::new();
        for &h in &s.trace_h {
            let op = self.pde_operator(&m, h, 4.0, 2.5 * h)?;
            let traj = op.solve(&op.grid.sample(|y| prof.k_mean(temp, y)), s.trace_t, h.min(1e-2))?;
            let tr = boundary_trace(&traj, s.trace_t, temp, 8);
            let nh = tr.y.len() / 2;
            // positive side, ordered towards the interface
            let plus: Vec<f64> = tr.excess[nh..].iter().rev().map(|x| x.abs()).collect();
            let minus: Vec<f64> = tr.excess[..nh].iter().map(|x| x.abs()).collect();
            let mono = |v: &[f64]| v.windows(2).all(|w| w[1] < w[0]);
            for (yv, ex) in tr.y.iter().zip(&tr.excess) {
                let mut c = cell(E, "excess");
                c.t = Some(s.trace_t);
                c.y = Some(*yv);
                c.a = Some(2.5 * h);
                c.value = *ex;
                tab.cells.push(c);
            }
            tab.assert(
                E,
                &format!("h={h} monotone_plus"),
                mono(&plus),
                plus[plus.len() - 1],
                plus[0],
                "|W-T| decreasing over 8 nodes approaching 0 from the bump side".into(),
            );
            // the far side fills through transmitted jumps and need not be
            // monotone at this resolution; reported only
            tab.fit(E, &format!("far_side_monotone_h={h}"), if mono(&minus) { 1.0 } else { 0.0 });
            maxdev.push(tr.excess.iter().map(|x| x.abs()).fold(0.0, f64::max));
            tab.fit(E, &format!("exponent_plus_h={h}"), tr.exponent_plus);
        }
        let shrinks = maxdev.windows(2).all(|w| w[1] < w[0]);
        tab.assert(
            E,
            "near_interface_deviation_shrinks",
            shrinks,
            *maxdev.last().unwrap(),
            maxdev[0],
            format!("max |W-T| over the near nodes per h: {maxdev:?}"),
        );
        Ok(tab)
    }

    /// Weak-form residual under joint (h, dt, a) refinement.
    pub fn weak_residual(&self) -> Result<ConvergenceTable> {
        const E: &str = "weak_residual";
        let s = &self.spec.pde;
        let mut p = self.model.params.clone();
        p.beta = s.weak_beta;
        let m = validate(&p)?;
        let temp = m.temperature();
        let prof = InitialProfile::Gaussian {
            center: 0.3,
            width: 0.3,
            amplitude: 1.0,
            k_modulation: 0.0,
        };
        let mut rng = substream(derive_seed(self.seed, 101, 0), 0);
        let tests: Vec<TestFunction> = (0..s.weak_tests)
            .map(|_| {
                let side = if rng.random::<bool>() { 1.0 } else { -1.0 };
                let r = 0.2 + 0.3 * rng.random::<f64>();
                let c = side * (0.15 + r + 0.5 * rng.random::<f64>());
                TestFunction {
                    bumps: vec![(c, r, 1.0)],
                    decay: 2.0 * rng.random::<f64>(),
                }
            })
            .collect();
        let mut res = vec![Vec::new(); tests.len()];
        for &h in &s.weak_h {
            let op = self.pde_operator(&m, h, 3.0, 2.5 * h)?;
            let w0 = op.grid.sample(|y| prof.k_mean(temp, y));
            let traj = op.solve(&w0, s.weak_t, 0.64 * h)?;
            for (i, g) in tests.iter().enumerate() {
                res[i].push(weak_residual(&traj, &op, &w0, g)?.abs());
            }
        }
        let mut tab = ConvergenceTable::default();
        for (i, r) in res.iter().enumerate() {
            for (j, &v) in r.iter().enumerate() {
                let mut c = cell(E, &format!("test{i}"));
                c.a = Some(2.5 * s.weak_h[j]);
                c.value = v;
                tab.cells.push(c);
            }
            let worst = r.windows(2).map(|w| w[0] / w[1]).fold(f64::INFINITY, f64::min);
            tab.assert(
                E,
                &format!("test{i} decay"),
                worst >= 1.5,
                worst,
                1.5,
                format!("residuals {r:?}"),
            );
        }
        Ok(tab)
    }

    /// L¹ distance of e^{tL}F to its mean on the momentum grid.
    pub fn mixing_check(&self) -> Result<ConvergenceTable> {
        const E: &str = "mixing_check";
        let s = &self.spec.mixing;
        let m = self.model;
        let nodes = *s.nodes.last().unwrap_or(&512);
        let (k, w) = momentum_rule(nodes);
        let tau = m.constants.tau_bar;
        let gen = Generator::new(m, &k, &w);
        let two_pi = 2.0 * std::f64::consts::PI;
        let e1: Vec<f64> = k.iter().map(|&x| (two_pi * x).cos()).collect();
        let mut tab = ConvergenceTable::default();
        let mut dist = Vec::new();
        for &tt in &s.times {
            let d = gen.l1_to_mean(&e1, tt * tau);
            dist.push(d);
            let mut c = cell(E, "first_harmonic_l1");
            c.t = Some(tt * tau);
            c.value = d;
            tab.cells.push(c);
        }
        let konst = vec![1.0; k.len()];
        let dc = s.times.iter().map(|&tt| gen.l1_to_mean(&konst, tt * tau)).fold(0.0, f64::max);
        tab.assert(E, "constant_is_stationary", dc < 1e-12, dc, 1e-12, "F ≡ 1".into());
        let mono = dist.windows(2).all(|x| x[1] <= x[0] + 1e-15);
        tab.assert(
            E,
            "monotone_decay",
            mono,
            *dist.last().unwrap(),
            dist[0],
            format!("{dist:?}"),
        );
        let last_t = s.times.last().copied().unwrap_or(0.0);
        let d_last = *dist.last().unwrap();
        tab.assert(
            E,
            &format!("below_{}_at_{}tau", s.threshold, last_t),
            d_last < s.threshold,
            d_last,
            s.threshold,
            "‖e^{tL}e₁ − ∫e₁‖_L¹ at the last time".into(),
        );
        let near0: Vec<f64> = k.iter().map(|&x| (-(x / 0.05).powi(2)).exp()).collect();
        let near_half: Vec<f64> = k.iter().map(|&x| (-((x.abs() - 0.5) / 0.05).powi(2)).exp()).collect();
        let rel = |f: &[f64]| gen.l1_to_mean(f, 5.0 * tau) / gen.l1_to_mean(f, 0.0);
        let (r0, rh) = (rel(&near0), rel(&near_half));
        tab.fit(E, "relative_l1_near_0_at_5tau", r0);
        tab.fit(E, "relative_l1_near_half_at_5tau", rh);
        tab.assert(
            E,
            "degenerate_rates_mix_slower",
            r0 > rh,
            r0,
            rh,
            "relative L¹ distance at 5τ̄, mass near k=0 vs near k=1/2".into(),
        );
        Ok(tab)
    }

    /// Same seeds, different worker counts: identical samples and means.
    pub fn determinism(&self) -> Result<ConvergenceTable> {
        const E: &str = "determinism";
        let s = &self.spec.determinism;
        let m = self.model;
        let temp = m.temperature();
        let w0 = self.w0();
        let mean = MeanField(&w0);
        let cfg = RegularizedLevyConfig::new(&m.constants, self.spec.limit.a)?;
        let free = self.free_model()?;
        let n = s.samples;
        type Run<'r> = Box<dyn Fn(Parallelism) -> Result<Vec<f64>> + 'r>;
        let seed = derive_seed(self.seed, 111, 0);
        let mc = |par| McOptions { n_samples: n, seed, par };
        let lp = self.spec.limit.probes[0];
        let op = self.spec.oracle.probes[0];
        let cr = &self.spec.crossing;
        let nmax = *self.spec.limit.n_ladder.last().unwrap();
        let runs: Vec<(&str, Run)> = vec![
            (
                "kinetic_n1",
                Box::new(|par| sample_w_n(op.t, op.y, op.k, &w0, 1.0, m, mc(par))),
            ),
            (
                "kinetic_large_n",
                Box::new(|par| sample_w_n(lp.t, lp.y, lp.k, &w0, nmax, m, mc(par))),
            ),
            (
                "stable",
                Box::new(|par| sample_w_limit(lp.t, lp.y, &mean, &cfg, m.interface(), temp, mc(par))),
            ),
            (
                "free_displacement",
                Box::new(|par: Parallelism| {
                    par.map_samples(n, |i| {
                        let mut rng = substream(seed, i as u64);
                        free_displacement(0.25, 1e3, 1.0, &free, &mut rng)
                    })
                }),
            ),
            (
                "crossings",
                Box::new(|par| {
                    Ok(crossing_statistics(cr.y, cr.k, 1e3, 3, cr.t_max, &free, mc(par))?
                        .into_iter()
                        .flat_map(|c| c.times.into_iter().chain(c.flight_means))
                        .collect())
                }),
            ),
        ];
        let mut tab = ConvergenceTable::default();
        for (name, f) in &runs {
            let outs: Vec<Vec<f64>> = s
                .workers
                .iter()
                .map(|&w| f(Parallelism { workers: w, ..self.par }))
                .collect::<Result<_>>()?;
            let mut same_multiset = true;
            let mut same_order = true;
            let sorted = |v: &Vec<f64>| {
                let mut v = v.clone();
                v.sort_by(f64::total_cmp);
                v.iter().map(|x| x.to_bits()).collect::<Vec<_>>()
            };
            let bits = |v: &Vec<f64>| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            for o in &outs[1..] {
                same_multiset &= sorted(o) == sorted(&outs[0]);
                same_order &= bits(o) == bits(&outs[0]);
            }
            let means: Vec<f64> = outs
                .iter()
                .map(|v| {
                    let parts: Vec<Welford> = v
                        .chunks(crate::rng::CHUNK)
                        .map(|c| {
                            let mut w = Welford::default();
                            c.iter().for_each(|&x| w.push(x));
                            w
                        })
                        .collect();
                    Welford::reduce(&parts).mean
                })
                .collect();
            let same_mean = means.iter().all(|x| x.to_bits() == means[0].to_bits());
            tab.assert(
                E,
                &format!("{name} identical"),
                same_multiset && same_order && same_mean,
                means[0],
                means[0],
                format!("workers {:?}, {} samples each", s.workers, outs[0].len()),
            );
        }
        // the estimator path itself
        let p = self.spec.oracle.probes[0];
        let a = estimate_w_n(p.t, p.y, p.k, &w0, 1.0, m, mc(Parallelism { workers: 1, ..self.par }))?;
        let b = estimate_w_n(p.t, p.y, p.k, &w0, 1.0, m, mc(Parallelism { workers: 4, ..self.par }))?;
        tab.assert(
            E,
            "estimate bit-identical",
            a.mean.to_bits() == b.mean.to_bits() && a.std_error.to_bits() == b.std_error.to_bits(),
            a.mean,
            b.mean,
            "estimate_w_n with 1 and 4 workers".into(),
        );
        Ok(tab)
    }

    /// P[outcome of the k-dependent rule differs from the frozen rule on the
    /// first M crossings] against N.
    pub fn coupling_rate_check(&self) -> Result<ConvergenceTable> {
        const E: &str = "coupling_rate_check";
        let s = &self.spec.coupling;
        let mut p = self.model.params.clone();
        let (pp, pm, g) = self.model.interface().at_zero();
        // p± grow like |k|^γ away from 0 and g shrinks accordingly
        let amp = 0.5 * g * 2f64.powf(s.gamma);
        p.interface = InterfaceCoefficients {
            profile: CoefficientProfile::Power {
                p_plus_0: pp,
                p_minus_0: pm,
                amp_plus: 0.5 * amp,
                amp_minus: 0.5 * amp,
                exponent: s.gamma,
            },
            holder_c0: amp,
            holder_gamma: s.gamma,
        };
        let m = validate(&p)?;
        let consts = validate(&self.model.params)?;
        let mut tab = ConvergenceTable::default();
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        let mut k_mis = (0.0, 0usize);
        let mut k_all = (0.0, 0usize);
        for (ni, &n) in s.n_ladder.iter().enumerate() {
            let recs = crate::kinetic_mc::coupled_mismatch(s.y, s.k, s.t, n, s.crossings, &m, self.mc(s.samples, 121, ni as u64))?;
            let hit = recs.iter().filter(|r| r.iter().any(|x| x.1)).count();
            for r in &recs {
                for &(k, mis) in r {
                    k_all.0 += k.abs();
                    k_all.1 += 1;
                    if mis {
                        k_mis.0 += k.abs();
                        k_mis.1 += 1;
                    }
                }
            }
            let prob = hit as f64 / recs.len() as f64;
            let mut c = cell(E, "mismatch_probability");
            c.n = Some(n);
            c.value = prob;
            c.n_samples = Some(recs.len() as u64);
            tab.cells.push(c);
            if prob > 0.0 {
                xs.push(n.ln());
                ys.push(prob.ln());
            }
        }
        let control = crate::kinetic_mc::coupled_mismatch(s.y, s.k, s.t, s.n_ladder[0], s.crossings, &consts, self.mc(s.samples.min(2000), 122, 0))?;
        let zero = control.iter().all(|r| r.iter().all(|x| !x.1));
        tab.assert(E, "constant_coefficients_never_mismatch", zero, 0.0, 0.0, "C0 = 0 control".into());
        let target = s.gamma / (m.params.beta + 1.0);
        if xs.len() >= 2 {
            let (slope, _) = linear_fit(&xs, &ys);
            let rate = -slope;
            tab.fit(E, "decay_exponent", rate);
            tab.assert(
                E,
                "decay_no_slower_than_trend",
                rate >= 0.5 * target,
                rate,
                0.5 * target,
                format!("fitted exponent {rate:.3}, bound exponent γ/(β+1) = {target:.3}"),
            );
        } else {
            tab.assert(E, "decay_no_slower_than_trend", false, 0.0, target, "no mismatches observed".into());
        }
        let cond = if k_mis.1 > 0 { k_mis.0 / k_mis.1 as f64 } else { 0.0 };
        tab.fit(E, "mean_abs_k_crossings", k_all.0 / k_all.1.max(1) as f64);
        tab.fit(E, "mean_abs_k_mismatch", cond);
        // a typical flight draws its momentum from μ
        let (kq, wq) = momentum_rule(512);
        let uncond: f64 = kq.iter().zip(&wq).map(|(k, w)| w * k.abs() * m.invariant_density(*k)).sum();
        tab.assert(
            E,
            "mismatch_localizes_at_small_k",
            k_mis.1 > 0 && cond < uncond,
            cond,
            uncond,
            "mean |k| of mismatching crossing flights against E_μ|K|".into(),
        );
        Ok(tab)
    }

    /// Second singular value of the jump-chain operator on L²(μ).
    pub fn spectral_gap_estimate(&self) -> Result<ConvergenceTable> {
        const E: &str = "spectral_gap_estimate";
        let s = &self.spec.mixing;
        let mut tab = ConvergenceTable::default();
        let kinds = [
            ("product", KernelForm::Product),
            ("mixture", KernelForm::Mixture { kappa: s.mixture_kappa }),
        ];
        for (label, kernel) in kinds {
            let mut p = self.model.params.clone();
            p.kernel = kernel;
            let m = validate(&p)?;
            let vals: Vec<f64> = s.nodes.iter().map(|&n| second_singular_value(&m, n)).collect();
            for (&n, &v) in s.nodes.iter().zip(&vals) {
                let mut c = cell(E, label);
                c.n = Some(n as f64);
                c.value = v;
                tab.cells.push(c);
            }
            let v = *vals.last().unwrap();
            tab.fit(E, label, v);
            tab.assert(E, &format!("{label} below_one"), v < 1.0, v, 1.0, "second singular value".into());
            if vals.len() >= 2 {
                let d = (vals[vals.len() - 1] - vals[vals.len() - 2]).abs();
                tab.assert(
                    E,
                    &format!("{label} refinement_stable"),
                    d < 1e-4,
                    d,
                    1e-4,
                    format!("nodes {:?}", s.nodes),
                );
            }
            if label == "product" {
                tab.assert(E, "product_is_zero", v < 1e-10, v, 1e-10, "rank-one kernel".into());
            }
        }
        Ok(tab)
    }

    /// The model with the interface switched to pure transmission, used by
    /// the free-walk experiments.
    fn free_model(&self) -> Result<ValidatedModel> {
        let mut p = self.model.params.clone();
        p.interface = InterfaceCoefficients::constant(1.0, 0.0, 0.0);
        validate_with(&p, ValidationOptions { allow_zero_absorption: true })
    }
}

/// Symmetric graded rule on 𝕋 with `nodes` points.
fn momentum_rule(nodes: usize) -> (Vec<f64>, Vec<f64>) {
    let order = 8;
    let panels = (nodes / (2 * order)).max(1);
    let (kh, wh) = graded_half_rule(panels, order, 3.0);
    let mut k: Vec<f64> = kh.iter().rev().map(|x| -x).collect();
    k.extend_from_slice(&kh);
    let mut w: Vec<f64> = wh.iter().rev().copied().collect();
    w.extend_from_slice(&wh);
    (k, w)
}

/// γ0 L on a momentum rule in the symmetrised form
/// √w_i (R(k_i,k_j) √w_j) - R(k_i) δ_ij, diagonalised once.
struct Generator {
    w: Vec<f64>,
    eig: SymmetricEigen<f64, nalgebra::Dyn>,
}

impl Generator {
    fn new(m: &ValidatedModel, k: &[f64], w: &[f64]) -> Self {
        let n = k.len();
        let g0 = m.params.gamma0;
        let mut a = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                a[(i, j)] = g0 * w[i].sqrt() * m.pair_kernel(k[i], k[j]) * w[j].sqrt();
            }
            a[(i, i)] -= g0 * m.total_rate(k[i]);
        }
        Generator {
            w: w.to_vec(),
            eig: SymmetricEigen::new(a),
        }
    }

    /// ‖e^{tL}F - ∫F‖_{L¹(𝕋)}
    fn l1_to_mean(&self, f: &[f64], t: f64) -> f64 {
        let n = f.len();
        let total: f64 = f.iter().zip(&self.w).map(|(a, b)| a * b).sum();
        let v = nalgebra::DVector::from_iterator(n, f.iter().zip(&self.w).map(|(x, w)| x * w.sqrt()));
        let q = &self.eig.eigenvectors;
        let mut c = q.transpose() * v;
        for (ci, &l) in c.iter_mut().zip(self.eig.eigenvalues.iter()) {
            *ci *= (l * t).exp();
        }
        let u = q * c;
        (0..n).map(|i| (u[i] / self.w[i].sqrt() - total).abs() * self.w[i]).sum()
    }
}

/// Largest singular value of P on the μ-orthocomplement of constants.
pub fn second_singular_value(m: &ValidatedModel, nodes: usize) -> f64 {
    let (k, w) = momentum_rule(nodes);
    let n = k.len();
    let r: Vec<f64> = k.iter().map(|&x| m.total_rate(x)).collect();
    // S = D^{1/2} P D^{-1/2} with D = diag(μ_i w_i), symmetric
    let mut s = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            s[(i, j)] = m.pair_kernel(k[i], k[j]) * (w[i] * w[j]).sqrt() / (r[i] * r[j]).sqrt();
        }
    }
    let z: f64 = (0..n).map(|i| r[i] * w[i]).sum();
    let u = nalgebra::DVector::from_iterator(n, (0..n).map(|i| (r[i] * w[i] / z).sqrt()));
    let proj = DMatrix::<f64>::identity(n, n) - &u * u.transpose();
    let sp = &proj * s * &proj;
    let sp = (&sp + sp.transpose()) * 0.5;
    SymmetricEigen::new(sp).eigenvalues.iter().fold(0.0, |a: f64, &b| a.max(b.abs()))
}

/// Result of the characteristic-function fit.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StableFit {
    pub alpha: f64,
    pub alpha_se: f64,
    /// ψ(θ) = scale |θ|^α per unit time with α fixed at the model value
    pub scale: f64,
    /// finite-N Gaussian correction coefficient at the fitted α
    pub quadratic: f64,
}

/// Fit -log φ̂(θ) = t (s|θ|^α + b θ²) by weighted least squares on a θ-grid
/// placed where ψ ranges over [0.05, 2.5] under the reference scale.
pub fn fit_stable_cf(xs: &[f64], t: f64, alpha_ref: f64, scale_ref: f64, points: usize) -> Result<StableFit> {
    if xs.len() < 100 || points < 4 {
        return Err(Error::InsufficientSamples { got: xs.len(), needed: 100 });
    }
    let n = xs.len() as f64;
    let mut th = Vec::new();
    let mut y = Vec::new();
    let mut wt = Vec::new();
    for j in 0..points {
        let psi = 0.05 * (2.5f64 / 0.05).powf(j as f64 / (points - 1) as f64);
        let theta = (psi / (scale_ref * t)).powf(1.0 / alpha_ref);
        let phi = empirical_cf(xs, theta);
        if !(phi > 0.02) {
            continue;
        }
        let phi2 = empirical_cf(xs, 2.0 * theta);
        let var = ((1.0 + phi2) / 2.0 - phi * phi).max(1e-300) / n / (phi * phi);
        th.push(theta);
        y.push(-phi.ln() / t);
        wt.push(1.0 / var * t * t);
    }
    if th.len() < 4 {
        return Err(Error::InsufficientSamples { got: th.len(), needed: 4 });
    }
    // weighted LS for (s, b) at fixed α
    let solve = |alpha: f64| -> (f64, f64, f64) {
        let (mut a11, mut a12, mut a22, mut b1, mut b2) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for i in 0..th.len() {
            let u = th[i].powf(alpha);
            let v = th[i] * th[i];
            a11 += wt[i] * u * u;
            a12 += wt[i] * u * v;
            a22 += wt[i] * v * v;
            b1 += wt[i] * u * y[i];
            b2 += wt[i] * v * y[i];
        }
        let det = a11 * a22 - a12 * a12;
        let s = (b1 * a22 - b2 * a12) / det;
        let b = (a11 * b2 - a12 * b1) / det;
        let chi: f64 = (0..th.len())
            .map(|i| wt[i] * (y[i] - s * th[i].powf(alpha) - b * th[i] * th[i]).powi(2))
            .sum();
        (s, b, chi)
    };
    // golden-section search of the profile χ²
    let (mut lo, mut hi) = (1.01, 1.99);
    let gr = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = hi - gr * (hi - lo);
    let mut x2 = lo + gr * (hi - lo);
    let (mut f1, mut f2) = (solve(x1).2, solve(x2).2);
    while hi - lo > 1e-6 {
        if f1 < f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - gr * (hi - lo);
            f1 = solve(x1).2;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + gr * (hi - lo);
            f2 = solve(x2).2;
        }
    }
    let alpha = 0.5 * (lo + hi);
    let c0 = solve(alpha).2;
    // curvature of χ² gives the standard error of α
    let d = 1e-3;
    let curv = (solve(alpha + d).2 - 2.0 * c0 + solve(alpha - d).2) / (d * d);
    let alpha_se = if curv > 0.0 { (2.0 / curv).sqrt() } else { f64::NAN };
    let (scale, quadratic, _) = solve(alpha_ref);
    Ok(StableFit {
        alpha,
        alpha_se,
        scale,
        quadratic,
    })
}

//! `rta`: batch driver for the kinetic, stable and PDE solvers.

use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use rta_core::config::{Format, RunConfig};
use rta_core::fractional_pde::{energy_audit, NonlocalOperator, PdeCoefficients, SpatialGrid, Trajectory};
use rta_core::harness::{derive_seed, ExperimentSpec, Harness, MeanField};
use rta_core::io::{self, EstimateRow, Manifest};
use rta_core::kinetic_det::{classical_residuals, duhamel_solve, GridField};
use rta_core::kinetic_mc::{crossing_statistics, estimate_w_n, simulate_path, InitialField, McOptions, PathOptions};
use rta_core::model::{validate, validate_with, InterfaceCoefficients, ValidatedModel, ValidationOptions};
use rta_core::rng::{substream, Parallelism};
use rta_core::stable_limit::{estimate_w_limit, free_eta_crossings, simulate_eta, RegularizedLevyConfig};
use rta_core::stats::{ks_two_sample, ks_two_sample_pvalue};
use rta_core::{Error, Result};

static CANCEL: AtomicBool = AtomicBool::new(false);

#[derive(Parser, Debug)]
#[command(name = "rta", version, about = "Kinetic transport through a reflecting, transmitting and absorbing interface")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// run configuration (TOML)
    #[arg(long)]
    config: PathBuf,
    /// overrides the configured seed
    #[arg(long)]
    seed: Option<u64>,
    /// overrides the configured worker count
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    workers: Option<u64>,
    /// overrides the configured output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// overrides every Monte-Carlo sample count
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    samples: Option<u64>,
}

#[derive(Args, Debug, Clone)]
struct SolveArgs {
    #[command(flatten)]
    common: Common,
    /// also solve on the refined grids and report the convergence ratio
    #[arg(long)]
    refine: bool,
    /// continue from a checkpoint written by an earlier run
    #[arg(long)]
    restart: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
struct ConvergeArgs {
    #[command(flatten)]
    common: Common,
    /// run only these experiments (comma separated or repeated)
    #[arg(long, value_delimiter = ',')]
    only: Vec<String>,
    /// reduced sizes for a quick end-to-end run
    #[arg(long)]
    smoke: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check the model and print its derived constants
    Validate(Common),
    /// Monte-Carlo estimates of the kinetic solution at the probes
    SimulateKinetic(Common),
    /// Monte-Carlo estimates of the limit solution at the probes
    SimulateStable(Common),
    /// Deterministic kinetic solution by Picard iteration
    SolveDuhamel(SolveArgs),
    /// Limit equation by implicit Euler
    SolvePde(SolveArgs),
    /// Run the convergence experiments
    Converge(ConvergeArgs),
    /// Crossing times and positions, kinetic walk against the limit
    Crossings(Common),
    /// Summarise a convergence run from its JSON output
    Report(Common),
}

struct Ctx {
    cfg: RunConfig,
    par: Parallelism,
    out: PathBuf,
}

impl Ctx {
    fn new(c: &Common) -> Result<Self> {
        let mut cfg = RunConfig::load(&c.config)?;
        if let Some(s) = c.seed {
            cfg.seed = s;
        }
        if let Some(w) = c.workers {
            cfg.workers = w as usize;
        }
        if let Some(o) = &c.out {
            cfg.io.out = o.clone();
        }
        if let Some(n) = c.samples {
            let n = n as usize;
            cfg.simulate.samples = n;
            cfg.crossings.samples = n;
            set_all_samples(&mut cfg.experiment, n);
        }
        let par = Parallelism::new(cfg.workers).with_cancel(&CANCEL);
        let out = cfg.io.out.clone();
        Ok(Ctx { cfg, par, out })
    }

    fn model(&self) -> Result<ValidatedModel> {
        validate(&self.cfg.model)
    }

    fn mc(&self, n: usize, tag: u64, index: u64) -> McOptions {
        McOptions {
            n_samples: n,
            seed: derive_seed(self.cfg.seed, tag, index),
            par: self.par,
        }
    }

    fn csv(&self) -> bool {
        self.cfg.io.wants(Format::Csv)
    }

    fn json(&self) -> bool {
        self.cfg.io.wants(Format::Json)
    }

    fn manifest(&self, command: &str, incomplete: bool, files: &[PathBuf]) -> Result<()> {
        let m = Manifest {
            command: command.into(),
            seed: self.cfg.seed,
            workers: self.cfg.workers,
            incomplete,
            files: files
                .iter()
                .map(|p| p.file_name().map_or_else(String::new, |s| s.to_string_lossy().into_owned()))
                .collect(),
        };
        io::write_json(&self.out.join(format!("{command}.manifest.json")), &m)
    }
}

fn set_all_samples(s: &mut ExperimentSpec, n: usize) {
    s.oracle.samples = n;
    s.limit.samples = n;
    s.limit.limit_samples = n;
    s.index_fit.samples = n;
    s.crossing.samples = n;
    s.crossing.limit_samples = n;
    s.macro_jump.samples = n;
    s.coupling.samples = n;
    s.determinism.samples = n;
}

/// A stored grid field used as initial datum on the same grid.
struct FieldDatum<'a>(&'a GridField);

impl InitialField for FieldDatum<'_> {
    fn value(&self, y: f64, k: f64) -> f64 {
        let j = self.0.grid.nearest_k(k);
        self.0.interp(y, j)
    }
}

fn cmd_validate(c: &Common) -> Result<i32> {
    let ctx = Ctx::new(c)?;
    #[derive(Serialize)]
    struct Report {
        valid: bool,
        report: Option<rta_core::model::ModelReport>,
        error: Option<ErrorReport>,
    }
    let r = match ctx.model() {
        Ok(m) => Report {
            valid: true,
            report: Some(m.report()),
            error: None,
        },
        Err(e) => Report {
            valid: false,
            report: None,
            error: Some(ErrorReport::of(&e)),
        },
    };
    println!("{}", serde_json::to_string_pretty(&r).map_err(Error::from)?);
    let path = ctx.out.join("validate.json");
    io::write_json(&path, &r)?;
    Ok(if r.valid { 0 } else { 1 })
}

#[derive(Serialize)]
struct ErrorReport {
    code: &'static str,
    message: String,
}

impl ErrorReport {
    fn of(e: &Error) -> Self {
        ErrorReport {
            code: e.code(),
            message: e.to_string(),
        }
    }
}

fn cmd_simulate_kinetic(c: &Common) -> Result<i32> {
    let ctx = Ctx::new(c)?;
    let m = ctx.model()?;
    let s = &ctx.cfg.simulate;
    let w0 = ctx.cfg.initial.field(m.temperature());
    let mut rows = Vec::new();
    let mut incomplete = false;
    for (i, p) in s.probes.iter().enumerate() {
        match estimate_w_n(p.t, p.y, p.k, &w0, s.n, &m, ctx.mc(s.samples, 1, i as u64)) {
            Ok(e) => rows.push(EstimateRow::new(p.t, p.y, Some(p.k), &e)),
            Err(Error::Interrupted) => {
                incomplete = true;
                break;
            }
            Err(e) => return Err(e),
        }
    }
    let mut files = Vec::new();
    if ctx.csv() {
        let f = ctx.out.join("kinetic_estimates.csv");
        io::write_csv(&f, io::ESTIMATE_HEADER, &rows)?;
        files.push(f);
    }
    // the first probe's samples, replayed with their event logs
    if let (Some(p), true) = (s.probes.first(), s.paths > 0 && !incomplete) {
        let mc = ctx.mc(s.samples, 1, 0);
        let opts = PathOptions {
            scale_n: s.n,
            record: true,
            interface: true,
        };
        let mut path_rows = Vec::new();
        for i in 0..s.paths.min(s.samples) {
            let mut rng = substream(mc.seed, i as u64);
            let (_, path) = simulate_path(p.y, p.k, p.t, &m, m.interface(), opts, &mut rng)?;
            path_rows.extend(io::path_rows(i, &path));
        }
        if ctx.csv() {
            let f = ctx.out.join("kinetic_paths.csv");
            io::write_csv(&f, io::PATH_HEADER, &path_rows)?;
            files.push(f);
        }
    }
    if ctx.json() {
        let f = ctx.out.join("kinetic_estimates.json");
        io::write_json(&f, &rows)?;
        files.push(f);
    }
    ctx.manifest("simulate-kinetic", incomplete, &files)?;
    Ok(if incomplete { 130 } else { 0 })
}

fn cmd_simulate_stable(c: &Common) -> Result<i32> {
    let ctx = Ctx::new(c)?;
    let m = ctx.model()?;
    let s = &ctx.cfg.simulate;
    let cfg = RegularizedLevyConfig::new(&m.constants, ctx.cfg.solver.stable.a)?;
    let field = ctx.cfg.initial.field(m.temperature());
    let w0 = MeanField(&field);
    let mut rows = Vec::new();
    let mut incomplete = false;
    for (i, p) in s.probes.iter().enumerate() {
        match estimate_w_limit(p.t, p.y, &w0, &cfg, m.interface(), m.temperature(), ctx.mc(s.samples, 2, i as u64)) {
            Ok(e) => rows.push(EstimateRow::new(p.t, p.y, None, &e)),
            Err(Error::Interrupted) => {
                incomplete = true;
                break;
            }
            Err(e) => return Err(e),
        }
    }
    let mut files = Vec::new();
    if ctx.csv() {
        let f = ctx.out.join("stable_estimates.csv");
        io::write_csv(&f, io::ESTIMATE_HEADER, &rows)?;
        files.push(f);
    }
    if let (Some(p), true) = (s.probes.first(), s.paths > 0 && !incomplete) {
        let mc = ctx.mc(s.samples, 2, 0);
        let mut dump = Vec::new();
        for i in 0..s.paths.min(s.samples) {
            let mut rng = substream(mc.seed, i as u64);
            let path = simulate_eta(p.y, p.t, &cfg, Some(m.interface()), true, &mut rng)?;
            dump.extend(io::stable_rows(i, &path));
        }
        if ctx.csv() {
            let f = ctx.out.join("stable_paths.csv");
            io::write_csv(&f, io::STABLE_HEADER, &dump)?;
            files.push(f);
        }
    }
    if ctx.json() {
        let f = ctx.out.join("stable_estimates.json");
        io::write_json(&f, &rows)?;
        files.push(f);
    }
    ctx.manifest("simulate-stable", incomplete, &files)?;
    Ok(if incomplete { 130 } else { 0 })
}

#[derive(Serialize, Deserialize)]
struct DuhamelCheckpoint {
    t: f64,
    field: GridField,
}

fn cmd_solve_duhamel(a: &SolveArgs) -> Result<i32> {
    let ctx = Ctx::new(&a.common)?;
    let m = ctx.model()?;
    let dc = &ctx.cfg.solver.duhamel;
    let opts = dc.options();
    let temp = m.temperature();
    let datum = ctx.cfg.initial.field(temp);
    let restart: Option<DuhamelCheckpoint> = match &a.restart {
        Some(p) => Some(io::read_json(p)?),
        None => None,
    };
    let (t0, w0): (f64, Box<dyn InitialField + '_>) = match &restart {
        Some(cp) => {
            if cp.field.grid.y.h != opts.h || cp.field.grid.k.len() != 2 * opts.k_panels * opts.k_order {
                return Err(Error::Config("restart grid differs from the configured grid".into()));
            }
            (cp.t, Box::new(FieldDatum(&cp.field)))
        }
        None => (0.0, Box::new(datum)),
    };
    let span = dc.t_end - t0;
    if span <= 0.0 || span.is_nan() {
        return Err(Error::Config(format!("checkpoint time {t0} is not before t_end {}", dc.t_end)));
    }
    let sol = duhamel_solve(w0.as_ref(), temp, span, &m, &opts)?;
    let res = classical_residuals(&sol, w0.as_ref(), &m);
    let mut files = Vec::new();
    let fin = sol.final_field();
    if ctx.csv() {
        files.extend(io::write_grid_field(&ctx.out, "duhamel_final", fin, dc.t_end)?);
    }
    #[derive(Serialize)]
    struct Summary {
        t_start: f64,
        t_end: f64,
        iterations: usize,
        guaranteed_iterations: usize,
        last_increment: f64,
        grid_error: Option<f64>,
        residuals: rta_core::kinetic_det::ClassicalResiduals,
        refinement: Option<Refinement>,
    }
    let refinement = if a.refine {
        let mut errs = Vec::new();
        let mut hs = Vec::new();
        for level in 0..2 {
            let h = opts.h / f64::powi(2.0, level);
            let o = rta_core::kinetic_det::DuhamelOptions {
                h,
                estimate_grid_error: true,
                ..opts
            };
            let s = duhamel_solve(w0.as_ref(), temp, span, &m, &o)?;
            hs.push(h);
            errs.push(s.grid_error.unwrap_or(f64::NAN));
        }
        Some(Refinement::new(hs, errs))
    } else {
        None
    };
    let summary = Summary {
        t_start: t0,
        t_end: dc.t_end,
        iterations: sol.iterations,
        guaranteed_iterations: sol.guaranteed_iterations,
        last_increment: sol.last_increment,
        grid_error: sol.grid_error,
        residuals: res,
        refinement,
    };
    if ctx.json() {
        let f = ctx.out.join("duhamel_summary.json");
        io::write_json(&f, &summary)?;
        files.push(f);
    }
    let cp = ctx.out.join("duhamel_checkpoint.json");
    io::write_json(
        &cp,
        &DuhamelCheckpoint {
            t: dc.t_end,
            field: fin.clone(),
        },
    )?;
    files.push(cp);
    ctx.manifest("solve-duhamel", false, &files)?;
    Ok(0)
}

/// Successive differences under halving of h and their ratios.
#[derive(Serialize)]
struct Refinement {
    h: Vec<f64>,
    /// sup difference between the solution at h and at 2h (Duhamel) or
    /// between h and h/2 (PDE)
    differences: Vec<f64>,
    ratios: Vec<f64>,
}

impl Refinement {
    fn new(h: Vec<f64>, differences: Vec<f64>) -> Self {
        let ratios = differences.windows(2).map(|w| w[0] / w[1]).collect();
        Refinement { h, differences, ratios }
    }
}

#[derive(Serialize, Deserialize)]
struct PdeCheckpoint {
    t: f64,
    h: f64,
    half_width: f64,
    a: f64,
    values: Vec<f64>,
}

fn pde_operator(m: &ValidatedModel, h: f64, half_width: f64, a: f64) -> Result<NonlocalOperator> {
    NonlocalOperator::assemble(SpatialGrid::new(h, half_width)?, a, PdeCoefficients::from_model(m), m.temperature())
}

fn cmd_solve_pde(a: &SolveArgs) -> Result<i32> {
    let ctx = Ctx::new(&a.common)?;
    let m = ctx.model()?;
    let pc = &ctx.cfg.solver.pde;
    let temp = m.temperature();
    let trunc = pc.truncation();
    let op = pde_operator(&m, pc.h, pc.half_width, trunc)?;
    let prof = ctx.cfg.initial.clone();
    let (t0, w0) = match &a.restart {
        Some(p) => {
            let cp: PdeCheckpoint = io::read_json(p)?;
            if cp.h != pc.h || cp.half_width != pc.half_width || cp.a != trunc || cp.values.len() != op.grid.len() {
                return Err(Error::Config("restart grid differs from the configured grid".into()));
            }
            (cp.t, cp.values)
        }
        None => (0.0, op.grid.sample(|y| prof.k_mean(temp, y))),
    };
    let span = pc.t_end - t0;
    if span <= 0.0 || span.is_nan() {
        return Err(Error::Config(format!("checkpoint time {t0} is not before t_end {}", pc.t_end)));
    }
    let mut traj = op.solve(&w0, span, pc.dt)?;
    traj.times.iter_mut().for_each(|t| *t += t0);
    let energy = energy_audit(&traj, &op);
    let mut files = Vec::new();
    if ctx.csv() {
        let f = ctx.out.join("pde_trajectory.csv");
        io::write_trajectory(&f, &traj)?;
        files.push(f);
    }
    if ctx.json() {
        let f = ctx.out.join("pde_energy.json");
        io::write_json(&f, &energy)?;
        files.push(f);
    }
    if a.refine {
        let mut sols: Vec<Trajectory> = Vec::new();
        let mut hs = Vec::new();
        for level in 0..3 {
            let h = pc.h / f64::powi(2.0, level);
            let o = pde_operator(&m, h, pc.half_width, 2.5 * h)?;
            let w = o.grid.sample(|y| prof.k_mean(temp, y));
            sols.push(o.solve(&w, pc.t_end, pc.dt)?);
            hs.push(h);
        }
        // compare at the coarse nodes by interpolation
        let coarse = &sols[0];
        let last = |t: &Trajectory| t.fields.len() - 1;
        let diffs: Vec<f64> = (0..2)
            .map(|l| {
                (0..coarse.grid.len())
                    .map(|i| {
                        let y = coarse.grid.node(i);
                        (sols[l].interp_at(last(&sols[l]), y) - sols[l + 1].interp_at(last(&sols[l + 1]), y)).abs()
                    })
                    .fold(0.0, f64::max)
            })
            .collect();
        let f = ctx.out.join("pde_refinement.json");
        io::write_json(&f, &Refinement::new(hs[..2].to_vec(), diffs))?;
        files.push(f);
    }
    let cp = ctx.out.join("pde_checkpoint.json");
    io::write_json(
        &cp,
        &PdeCheckpoint {
            t: pc.t_end,
            h: pc.h,
            half_width: pc.half_width,
            a: trunc,
            values: traj.fields.last().cloned().unwrap_or_default(),
        },
    )?;
    files.push(cp);
    ctx.manifest("solve-pde", false, &files)?;
    Ok(0)
}

fn cmd_converge(a: &ConvergeArgs) -> Result<i32> {
    let mut ctx = Ctx::new(&a.common)?;
    if a.smoke {
        let initial = ctx.cfg.experiment.initial.clone();
        ctx.cfg.experiment = ExperimentSpec { initial, ..ExperimentSpec::smoke() };
        if let Some(n) = a.common.samples {
            set_all_samples(&mut ctx.cfg.experiment, n as usize);
        }
    }
    let m = ctx.model()?;
    let h = Harness {
        model: &m,
        spec: &ctx.cfg.experiment,
        seed: ctx.cfg.seed,
        par: ctx.par,
    };
    let only = if a.only.is_empty() { None } else { Some(a.only.as_slice()) };
    let table = h.run_all(only)?;
    for x in &table.assertions {
        eprintln!(
            "{} {}/{} observed={:.6e} threshold={:.6e}",
            if x.passed { "PASS" } else { "FAIL" },
            x.experiment,
            x.name,
            x.observed,
            x.threshold
        );
    }
    let files = io::write_convergence(&ctx.out, &table)?;
    ctx.manifest("converge", table.incomplete, &files)?;
    Ok(if table.incomplete {
        130
    } else if table.passed() {
        0
    } else {
        3
    })
}

fn cmd_crossings(c: &Common) -> Result<i32> {
    let ctx = Ctx::new(c)?;
    let cc = &ctx.cfg.crossings;
    let mut p = ctx.cfg.model.clone();
    p.interface = InterfaceCoefficients::constant(1.0, 0.0, 0.0);
    let m = validate_with(&p, ValidationOptions { allow_zero_absorption: true })?;
    let kin = crossing_statistics(cc.y, cc.k, cc.n, cc.crossings, cc.t_max, &m, ctx.mc(cc.samples, 3, 0))?;
    let cfg = RegularizedLevyConfig::new(&m.constants, cc.a)?;
    let tau = m.constants.tau_bar;
    let mc = ctx.mc(cc.samples, 3, 1);
    let lim: Vec<(Vec<f64>, Vec<f64>)> = mc
        .par
        .map_samples(cc.samples, |i| {
            let mut rng = substream(mc.seed, i as u64);
            free_eta_crossings(cc.y, cc.crossings, cc.t_max * tau, &cfg, &mut rng)
        })?
        .into_iter()
        .collect::<Result<_>>()?;
    #[derive(Serialize)]
    struct Row {
        source: &'static str,
        sample: usize,
        m: usize,
        t: f64,
        position: f64,
        momentum: Option<f64>,
        flight_mean: Option<f64>,
    }
    let mut rows = Vec::new();
    for (i, s) in kin.iter().enumerate() {
        for j in 0..s.times.len() {
            rows.push(Row {
                source: "kinetic",
                sample: i,
                m: j + 1,
                t: s.times[j],
                position: s.positions[j],
                momentum: Some(s.momenta[j]),
                flight_mean: Some(s.flight_means[j]),
            });
        }
    }
    for (i, (t, z)) in lim.iter().enumerate() {
        for j in 0..t.len() {
            rows.push(Row {
                source: "limit",
                sample: i,
                m: j + 1,
                t: t[j] / tau,
                position: z[j],
                momentum: None,
                flight_mean: None,
            });
        }
    }
    #[derive(Serialize)]
    struct Ks {
        m: usize,
        ks_time: f64,
        p_value: f64,
    }
    let mut ks = Vec::new();
    for j in 0..cc.crossings {
        let a: Vec<f64> = kin.iter().map(|s| s.times.get(j).copied().unwrap_or(f64::INFINITY)).collect();
        let b: Vec<f64> = lim.iter().map(|(t, _)| t.get(j).map_or(f64::INFINITY, |x| x / tau)).collect();
        let d = ks_two_sample(&a, &b);
        ks.push(Ks {
            m: j + 1,
            ks_time: d,
            p_value: ks_two_sample_pvalue(d, a.len(), b.len()),
        });
    }
    let mut files = Vec::new();
    if ctx.csv() {
        let f = ctx.out.join("crossings.csv");
        io::write_csv(&f, &["source", "sample", "m", "t", "position", "momentum", "flight_mean"], &rows)?;
        files.push(f);
    }
    if ctx.json() {
        let f = ctx.out.join("crossings_ks.json");
        io::write_json(&f, &ks)?;
        files.push(f);
    }
    ctx.manifest("crossings", false, &files)?;
    Ok(0)
}

fn cmd_report(c: &Common) -> Result<i32> {
    let out = match &c.out {
        Some(o) => o.clone(),
        None => RunConfig::load(&c.config)?.io.out,
    };
    let s: io::ConvergenceSummary = io::read_json(&out.join("convergence.json"))?;
    let mut by_exp: std::collections::BTreeMap<&str, (usize, usize)> = Default::default();
    for a in &s.assertions {
        let e = by_exp.entry(a.experiment.as_str()).or_default();
        e.0 += 1;
        if a.passed {
            e.1 += 1;
        }
    }
    println!("experiment,assertions,passed");
    for (k, (n, p)) in &by_exp {
        println!("{k},{n},{p}");
    }
    for a in s.assertions.iter().filter(|a| !a.passed) {
        println!("FAIL {}/{}: {}", a.experiment, a.name, a.detail);
    }
    if s.incomplete {
        println!("run incomplete");
    }
    Ok(if s.passed { 0 } else { 3 })
}

fn run(cli: &Cli) -> Result<i32> {
    match &cli.command {
        Command::Validate(c) => cmd_validate(c),
        Command::SimulateKinetic(c) => cmd_simulate_kinetic(c),
        Command::SimulateStable(c) => cmd_simulate_stable(c),
        Command::SolveDuhamel(a) => cmd_solve_duhamel(a),
        Command::SolvePde(a) => cmd_solve_pde(a),
        Command::Converge(a) => cmd_converge(a),
        Command::Crossings(c) => cmd_crossings(c),
        Command::Report(c) => cmd_report(c),
    }
}

fn exit(code: i32) -> ExitCode {
    ExitCode::from(u8::try_from(code).unwrap_or(1))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    // first Ctrl-C drains, a second one terminates
    let _ = ctrlc::set_handler(|| {
        if CANCEL.swap(true, Ordering::SeqCst) {
            std::process::exit(130);
        }
    });
    match run(&cli) {
        Ok(code) => exit(code),
        Err(e) => {
            let r = ErrorReport::of(&e);
            eprintln!("error [{}]: {}", r.code, r.message);
            exit(e.exit_code())
        }
    }
}

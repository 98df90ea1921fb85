use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BASE: &str = r#"
seed = 7
workers = 1

[model]
beta = 2.0
gamma0 = 1.0
r0 = 1.0
omega0p = 1.0
bath_temperature = 1.0

[model.interface.profile]
kind = "constant"
p_plus = 0.5
p_minus = 0.3
g = 0.2

[simulate]
n = 100.0
samples = 400
paths = 2
probes = [{ t = 0.2, y = 0.3, k = 0.25 }, { t = 0.2, y = -0.3, k = -0.1 }]

[solver.duhamel]
t_end = 0.1
h = 0.0625
half_width = 1.0
k_panels = 4
k_order = 4
time_steps = 8

[solver.pde]
h = 0.03125
half_width = 2.0
dt = 0.01
t_end = 0.1

[crossings]
n = 100.0
crossings = 2
samples = 300
"#;

struct Case {
    dir: tempfile::TempDir,
}

impl Case {
    fn new(extra: &str) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let text = format!(
            "{BASE}{extra}\n[io]\nout = \"{}\"\n",
            dir.path().join("out").display()
        );
        fs::write(dir.path().join("run.toml"), text).unwrap();
        Case { dir }
    }

    fn with_text(text: &str) -> Self {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("run.toml"), text).unwrap();
        Case { dir }
    }

    fn config(&self) -> PathBuf {
        self.dir.path().join("run.toml")
    }

    fn out(&self) -> PathBuf {
        self.dir.path().join("out")
    }

    fn rta(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_rta"))
            .args(args)
            .arg("--config")
            .arg(self.config())
            .output()
            .unwrap()
    }
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn read(p: &Path) -> String {
    fs::read_to_string(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

fn json(p: &Path) -> serde_json::Value {
    serde_json::from_str(&read(p)).unwrap()
}

#[test]
fn validate_reports_constants() {
    let c = Case::new("");
    let o = c.rta(&["validate"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["valid"], true);
    assert!((v["report"]["alpha_stable"].as_f64().unwrap() - 1.5).abs() < 1e-12);
    for key in ["tau_bar", "c_beta", "c_hat", "r_bar"] {
        assert!(v["report"][key].is_number(), "{key}");
    }
}

#[test]
fn zero_absorption_is_exit_1_and_named() {
    let text = format!("{BASE}\n[io]\nout = \"o\"\n")
        .replace("p_minus = 0.3", "p_minus = 0.5")
        .replace("g = 0.2", "g = 0.0");
    let c = Case::with_text(&text);
    let o = c.rta(&["validate", "--out", c.out().to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stdout).contains("DegenerateAbsorption"));
}

#[test]
fn missing_section_is_exit_2_with_line() {
    let c = Case::with_text(BASE);
    let o = c.rta(&["validate"]);
    assert_eq!(code(&o), 2);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("run.toml:1:"), "{err}");
    assert!(err.contains("io"), "{err}");
}

#[test]
fn unknown_key_is_exit_2_with_its_line() {
    let c = Case::new("");
    let text = read(&c.config()).replace("r0 = 1.0", "r0 = 1.0\nr1 = 2.0");
    fs::write(c.config(), &text).unwrap();
    let line = text.lines().position(|l| l.starts_with("r1")).unwrap() + 1;
    let o = c.rta(&["validate"]);
    assert_eq!(code(&o), 2);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains(&format!("run.toml:{line}:")), "{err}");
    assert!(err.contains("r1"), "{err}");
}

#[test]
fn zero_samples_is_usage_error() {
    let c = Case::new("");
    assert_eq!(code(&c.rta(&["simulate-kinetic", "--samples", "0"])), 2);
    assert_eq!(code(&c.rta(&["simulate-stable", "--samples", "0"])), 2);
}

#[test]
fn unreadable_config_is_io_error() {
    let o = Command::new(env!("CARGO_BIN_EXE_rta"))
        .args(["validate", "--config", "/definitely/not/here.toml"])
        .output()
        .unwrap();
    assert_eq!(code(&o), 4);
}

#[test]
fn kinetic_csv_is_reproducible_and_worker_independent() {
    let c = Case::new("");
    let out = c.out();
    let runs: Vec<String> = ["1", "1", "3"]
        .iter()
        .map(|w| {
            let o = c.rta(&["simulate-kinetic", "--workers", w]);
            assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
            read(&out.join("kinetic_estimates.csv"))
        })
        .collect();
    assert_eq!(runs[0], runs[1]);
    assert_eq!(runs[0], runs[2]);
    let lines: Vec<&str> = runs[0].split('\n').collect();
    assert_eq!(lines[0], "t,y,k,mean,stderr,n,seed");
    assert_eq!(lines.len(), 4, "two probes plus trailing newline");
    assert!(!runs[0].contains('\r'));
    let paths = read(&out.join("kinetic_paths.csv"));
    assert!(paths.starts_with("sample,event_type,t,y,k,sign,outcome\n"));
    let m = json(&out.join("simulate-kinetic.manifest.json"));
    assert_eq!(m["incomplete"], false);
}

#[test]
fn seed_override_changes_output() {
    let c = Case::new("");
    c.rta(&["simulate-stable"]);
    let a = read(&c.out().join("stable_estimates.csv"));
    c.rta(&["simulate-stable", "--seed", "8"]);
    let b = read(&c.out().join("stable_estimates.csv"));
    assert_ne!(a, b);
    // the stable estimates carry no momentum column value
    assert!(a.lines().nth(1).unwrap().split(',').nth(2).unwrap().is_empty());
}

#[test]
fn equilibrium_datum_gives_flat_solutions() {
    let c = Case::new("\n[initial]\nkind = \"equilibrium\"\n");
    assert_eq!(code(&c.rta(&["solve-pde"])), 0);
    assert_eq!(code(&c.rta(&["solve-duhamel"])), 0);
    let traj = read(&c.out().join("pde_trajectory.csv"));
    for line in traj.lines().skip(1) {
        let v: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
        assert!((v - 1.0).abs() < 1e-10, "{line}");
    }
    let s = json(&c.out().join("duhamel_summary.json"));
    assert_eq!(s["last_increment"], 0.0);
    // the residual's collision quadrature is only resolved to the coarse k grid
    for key in ["transport", "interface", "initial"] {
        assert!(s["residuals"][key].as_f64().unwrap() < 1e-6, "{key}");
    }
}

#[test]
fn refine_reports_ratio() {
    let c = Case::new("");
    assert_eq!(code(&c.rta(&["solve-duhamel", "--refine"])), 0);
    let s = json(&c.out().join("duhamel_summary.json"));
    assert_eq!(s["refinement"]["h"].as_array().unwrap().len(), 2);
    assert!(s["refinement"]["ratios"][0].as_f64().unwrap() > 1.0);
    assert_eq!(code(&c.rta(&["solve-pde", "--refine"])), 0);
    let r = json(&c.out().join("pde_refinement.json"));
    assert!(r["ratios"][0].as_f64().unwrap() > 1.0);
}

#[test]
fn pde_restart_continues_exactly() {
    let c = Case::new("");
    let text = read(&c.config()).replace("t_end = 0.1\n\n[crossings]", "t_end = 0.05\n\n[crossings]");
    let first = c.dir.path().join("first.toml");
    fs::write(&first, text).unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_rta"))
        .args(["solve-pde", "--config"])
        .arg(&first)
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    let cp = c.dir.path().join("half.json");
    fs::rename(c.out().join("pde_checkpoint.json"), &cp).unwrap();
    assert_eq!(code(&c.rta(&["solve-pde", "--restart", cp.to_str().unwrap()])), 0);
    let resumed = json(&c.out().join("pde_checkpoint.json"));
    assert_eq!(code(&c.rta(&["solve-pde"])), 0);
    let direct = json(&c.out().join("pde_checkpoint.json"));
    let (a, b) = (resumed["values"].as_array().unwrap(), direct["values"].as_array().unwrap());
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(b) {
        assert!((x.as_f64().unwrap() - y.as_f64().unwrap()).abs() < 1e-12);
    }
}

#[test]
fn corrupt_restart_is_exit_4() {
    let c = Case::new("");
    let bad = c.dir.path().join("bad.json");
    fs::write(&bad, "{ not json").unwrap();
    assert_eq!(code(&c.rta(&["solve-pde", "--restart", bad.to_str().unwrap()])), 4);
    assert_eq!(code(&c.rta(&["solve-duhamel", "--restart", bad.to_str().unwrap()])), 4);
}

#[test]
fn crossings_writes_table_and_ks() {
    let c = Case::new("");
    let o = c.rta(&["crossings"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let t = read(&c.out().join("crossings.csv"));
    assert!(t.starts_with("source,sample,m,t,position,momentum,flight_mean\n"));
    assert!(t.contains("\nkinetic,") && t.contains("\nlimit,"));
    let ks = json(&c.out().join("crossings_ks.json"));
    assert_eq!(ks.as_array().unwrap().len(), 2);
}

#[test]
fn converge_only_and_report() {
    let c = Case::new("");
    let o = c.rta(&["converge", "--smoke", "--only", "symbol_check,quadratic_form"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let s = json(&c.out().join("convergence.json"));
    assert_eq!(s["passed"], true);
    for a in s["assertions"].as_array().unwrap() {
        let e = a["experiment"].as_str().unwrap();
        assert!(e == "symbol_check" || e == "quadratic_form", "{e}");
    }
    assert!(read(&c.out().join("convergence.csv")).starts_with("experiment,label,"));
    let r = c.rta(&["report"]);
    assert_eq!(code(&r), 0);
    assert!(String::from_utf8_lossy(&r.stdout).contains("symbol_check,"));
}

#[test]
fn unknown_experiment_is_exit_2() {
    let c = Case::new("");
    assert_eq!(code(&c.rta(&["converge", "--smoke", "--only", "nonsense"])), 2);
}

#[test]
fn failing_run_reports_exit_3() {
    let c = Case::new("");
    let o = c.rta(&["converge", "--smoke", "--only", "mixing_check"]);
    assert_eq!(code(&o), 3);
    assert_eq!(code(&c.rta(&["report"])), 3);
}

#[test]
fn report_without_run_is_exit_4() {
    let c = Case::new("");
    assert_eq!(code(&c.rta(&["report"])), 4);
}

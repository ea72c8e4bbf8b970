use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use pisnn::cli::trajio::format_trajectory;
use pisnn::cli::{read_trajectory, Report};
use pisnn::oracle::total_variation;
use pisnn::trajectory::Provenance;

const BASE: &str = r#"
equation = "heat1d"
t_end = 0.0025

[grid]
lx = 1.0
dx = 0.01
dt = 2.5e-4

[law]
kind = "constant"
kappa = 0.1

[ic]
kind = "sine"

[boundary.x]
kind = "dirichlet"

[solver]
integrator = "rk4"
quota = 1e-4

[reference]
kind = "analytic"
"#;

fn pisnn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pisnn")).args(args).output().unwrap()
}

struct Case {
    dir: tempfile::TempDir,
}

impl Case {
    fn new() -> Self {
        Self {
            dir: tempfile::tempdir().unwrap(),
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn config(&self, name: &str, text: &str) -> PathBuf {
        let p = self.path(&format!("{name}.cfg"));
        fs::write(&p, text).unwrap();
        p
    }

    fn run(&self, cmd: &str, cfg: &Path, extra: &[&str]) -> Output {
        let out = self.path("out");
        let mut args = vec![cmd, "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--quiet"];
        args.extend_from_slice(extra);
        pisnn(&args)
    }

    fn report(&self, file: &str) -> Report {
        Report::parse(&fs::read_to_string(self.path("out").join(file)).unwrap()).unwrap()
    }
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn ten_steps_give_eleven_frames() {
    let c = Case::new();
    let cfg = c.config("mini", BASE);
    let o = c.run("simulate", &cfg, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let t = read_trajectory(&c.path("out/mini.traj")).unwrap();
    assert_eq!(t.len(), 11);
    assert_eq!(t.provenance, Provenance::Solver);
    let r = c.report("mini.report");
    assert_eq!(r.get("steps"), Some("10"));
    for key in [
        "rmse_final",
        "functional_error_final",
        "mass_drift",
        "ledger_residual",
        "mass_error_vs_reference",
        "total_spikes",
        "mean_sparsity",
        "spike_energy_J",
        "energy_ratio",
    ] {
        assert!(r.get(key).is_some(), "missing {key}");
    }
}

#[test]
fn stdout_is_the_report_unless_quiet() {
    let c = Case::new();
    let cfg = c.config("mini", BASE);
    let out = c.path("out");
    let o = pisnn(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(text.trim_end(), fs::read_to_string(out.join("mini.report")).unwrap().trim_end());
    assert!(c.run("simulate", &cfg, &[]).stdout.is_empty());
}

#[test]
fn unknown_key_exits_2_and_names_it() {
    let c = Case::new();
    let cfg = c.config("bad", &BASE.replace("kappa = 0.1", "kappa = 0.1\nkapppa = 1"));
    let o = c.run("simulate", &cfg, &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("kapppa"), "{}", stderr(&o));
}

#[test]
fn missing_config_and_bad_flags_exit_2() {
    let c = Case::new();
    assert_eq!(c.run("simulate", &c.path("nope.cfg"), &[]).status.code(), Some(2));
    let cfg = c.config("mini", BASE);
    assert_eq!(c.run("simulate", &cfg, &["--quota", "-1"]).status.code(), Some(2));
    assert_eq!(pisnn(&["simulate"]).status.code(), Some(2));
    let cfl = c.config("cfl", &BASE.replace("dt = 2.5e-4", "dt = 1.25e-3").replace("0.0025", "0.0125"));
    let o = c.run("simulate", &cfl, &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("stability"), "{}", stderr(&o));
}

#[test]
fn numeric_failure_exits_3_with_step() {
    let c = Case::new();
    let text = BASE
        .replace("kind = \"sine\"", "kind = \"uniform\"\nvalue = 1.7e308")
        .replace("kind = \"dirichlet\"", "kind = \"insulated\"")
        .replace("[reference]\nkind = \"analytic\"", "[neuron]\nsource = 1.7e308");
    let cfg = c.config("blowup", &text);
    let o = c.run("simulate", &cfg, &[]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("step 1"), "{}", stderr(&o));
}

#[test]
fn overrides_replace_steps_and_quota() {
    let c = Case::new();
    let cfg = c.config("mini", BASE);
    let o = c.run("simulate", &cfg, &["--steps", "4", "--quota", "0.003"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let r = c.report("mini.report");
    assert_eq!(r.get("steps"), Some("4"));
    assert_eq!(r.get("quota"), Some("3e-3"));
    assert_eq!(r.get("quota_source"), Some("override"));
    assert_eq!(read_trajectory(&c.path("out/mini.traj")).unwrap().len(), 5);
}

#[test]
fn oracle_export_round_trips() {
    let c = Case::new();
    let cfg = c.config("sine", &BASE.replace("t_end = 0.0025", "t_end = 0.005\nframe_stride = 10"));
    let o = c.run("oracle", &cfg, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let p = c.path("out/sine.oracle.traj");
    let text = fs::read_to_string(&p).unwrap();
    let t = read_trajectory(&p).unwrap();
    assert_eq!(t.len(), 3);
    assert_eq!(t.provenance, Provenance::Analytic);
    assert_eq!(format_trajectory(&t), text);
}

#[test]
fn oracle_fdm_step_has_monotone_variation() {
    let c = Case::new();
    let text = BASE
        .replace("kind = \"sine\"", "kind = \"step\"\nedge = 0.5")
        .replace("kind = \"analytic\"", "kind = \"fdm\"\nrefinement = 4")
        .replace("t_end = 0.0025", "t_end = 0.1\nframe_stride = 20");
    let cfg = c.config("step", &text);
    assert_eq!(c.run("oracle", &cfg, &[]).status.code(), Some(0));
    let t = read_trajectory(&c.path("out/step.oracle.traj")).unwrap();
    assert_eq!(t.len(), 21);
    let b = t.meta.boundary_x;
    let tv: Vec<f64> = t.frames.iter().map(|f| total_variation(&f.state, b)).collect();
    assert!(tv.windows(2).all(|w| w[1] <= w[0] + 1e-12), "{tv:?}");
}

#[test]
fn analytic_oracle_rejects_unsupported_ic() {
    let c = Case::new();
    let cfg = c.config("g", &BASE.replace("kind = \"sine\"", "kind = \"gaussian\"\ncenter = 0.5\nwidth = 0.1"));
    let o = c.run("oracle", &cfg, &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("gaussian"), "{}", stderr(&o));
}

#[test]
fn external_teacher_file_is_accepted() {
    let c = Case::new();
    let cfg = c.config("sine", &BASE.replace("t_end = 0.0025", "t_end = 0.025\nframe_stride = 20"));
    assert_eq!(c.run("oracle", &cfg, &[]).status.code(), Some(0));
    // Strip the provenance line, as a foreign producer would.
    let text = fs::read_to_string(c.path("out/sine.oracle.traj")).unwrap();
    let foreign: String = text.lines().filter(|l| !l.starts_with("meta provenance")).map(|l| format!("{l}\n")).collect();
    fs::write(c.path("teacher.traj"), foreign).unwrap();
    assert_eq!(read_trajectory(&c.path("teacher.traj")).unwrap().provenance, Provenance::ExternalFile);

    let cal = BASE.replace("t_end = 0.0025", "t_end = 0.025\nframe_stride = 20").replace("quota = 1e-4\n", "")
        + "\n[calibration]\nq_lo = 1e-5\nq_hi = 1e-2\nteacher = { kind = \"file\", path = \"teacher.traj\" }\n";
    let cfg = c.config("distil", &cal);
    let o = c.run("calibrate", &cfg, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let r = c.report("distil.report");
    assert_eq!(r.get("quota_source"), Some("calibrated"));
    let cal_text = fs::read_to_string(c.path("out/distil.calibration")).unwrap();
    assert!(cal_text.starts_with("lambda=0e0\nbest_quota="));
    assert!(cal_text.contains("index,phase,quota,fidelity,spikes,loss\n0,grid,1e-5,"));
}

#[test]
fn spike_dominated_calibration_picks_largest_quota() {
    let c = Case::new();
    let text = BASE.replace("quota = 1e-4\n", "")
        + "\n[calibration]\nlambda = 1e3\nq_lo = 1e-5\nq_hi = 1e-2\nteacher = { kind = \"analytic\" }\n";
    let cfg = c.config("lam", &text);
    assert_eq!(c.run("calibrate", &cfg, &[]).status.code(), Some(0));
    assert_eq!(c.report("lam.report").get("quota"), Some("1e-2"));
}

#[test]
fn simulate_without_quota_or_calibration_is_a_config_error() {
    let c = Case::new();
    let cfg = c.config("noq", &BASE.replace("quota = 1e-4\n", ""));
    let o = c.run("simulate", &cfg, &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("quota"));
}

#[test]
fn single_point_sweep_equals_simulate() {
    let c = Case::new();
    let text = BASE.replace("t_end = 0.0025", "t_end = 0.05") + "\n[sweep]\nquotas = [1e-3]\n";
    let cfg = c.config("one", &text);
    assert_eq!(c.run("sweep", &cfg, &[]).status.code(), Some(0));
    assert_eq!(c.run("simulate", &cfg, &["--quota", "1e-3"]).status.code(), Some(0));
    let csv = fs::read_to_string(c.path("out/one.sweep.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("quota,final_rmse,total_spikes,mean_sparsity,spike_energy_J"));
    let cols: Vec<&str> = lines.next().unwrap().split(',').collect();
    let r = c.report("one.report");
    assert_eq!(cols[0], "1e-3");
    assert_eq!(Some(cols[1]), r.get("rmse_final"));
    assert_eq!(Some(cols[2]), r.get("total_spikes"));
    assert_eq!(Some(cols[3]), r.get("mean_sparsity"));
    assert_eq!(Some(cols[4]), r.get("spike_energy_J"));
}

#[test]
fn sweep_spikes_fall_with_quota() {
    let c = Case::new();
    let text = BASE.replace("t_end = 0.0025", "t_end = 0.05") + "\n[sweep]\nq_lo = 1e-5\nq_hi = 1e-2\npoints = 5\n";
    let cfg = c.config("sw", &text);
    assert_eq!(c.run("sweep", &cfg, &[]).status.code(), Some(0));
    let csv = fs::read_to_string(c.path("out/sw.sweep.csv")).unwrap();
    let spikes: Vec<f64> = csv.lines().skip(1).map(|l| l.split(',').nth(2).unwrap().parse().unwrap()).collect();
    assert_eq!(spikes.len(), 5);
    assert!(spikes.windows(2).all(|w| w[1] <= w[0]), "{spikes:?}");
}

#[test]
fn observation_file_is_replayed() {
    let c = Case::new();
    fs::write(c.path("obs.txt"), "t=0.0005 cell=10 value=2.0\nt=0.001 cell=11 value=-1.0\n").unwrap();
    let text = BASE.replace("[reference]\nkind = \"analytic\"", "[observations]\npath = \"obs.txt\"");
    let cfg = c.config("obs", &text);
    let o = c.run("simulate", &cfg, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let r = c.report("obs.report");
    assert_eq!(r.get("observations"), Some("2"));
    let residual: f64 = r.get("ledger_residual").unwrap().parse().unwrap();
    assert!(residual < 1e-13);
    let t = read_trajectory(&c.path("out/obs.traj")).unwrap();
    assert_eq!(t.frames[2].state.values()[10], 2.0);

    let bad = c.config("badobs", &text.replace("obs.txt", "missing.txt"));
    assert_eq!(c.run("simulate", &bad, &[]).status.code(), Some(2));
}

#[test]
fn two_d_config_runs() {
    let c = Case::new();
    let text = r#"
equation = "diffusion2d"
t_end = 0.01

[grid]
lx = 1.0
ly = 0.5
dx = 0.0625
dy = 0.0625
dt = 2.5e-3

[law]
kind = "constant"
kappa = 0.1

[ic]
kind = "product_sine"

[boundary.x]
kind = "dirichlet"

[boundary.y]
kind = "dirichlet"

[solver]
integrator = "euler"
quota = 1e-5

[reference]
kind = "analytic"
"#;
    let cfg = c.config("sq", text);
    let o = c.run("simulate", &cfg, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let t = read_trajectory(&c.path("out/sq.traj")).unwrap();
    assert_eq!((t.meta.nx, t.meta.ny, t.len()), (16, 8, 5));
    let rmse: f64 = c.report("sq.report").get("rmse_final").unwrap().parse().unwrap();
    assert!(rmse < 1e-3);
}

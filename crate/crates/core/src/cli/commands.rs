//! The four subcommands and their report formats.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::calibrate::{calibrate_quota, pareto_sweep, CalibrationReport, SamplePhase, SimSetup, SweepEntry};
use crate::dfp::{FrameSchedule, ObservationLog, RunStats, Simulation};
use crate::domain::{Grid, QuotaParam};
use crate::error::{Error, Result};
use crate::metrics::{
    dense_stencil_flops, energy_report, functional_error, mass_drift, rmse, total_mass, EnergyModel,
};
use crate::oracle::{analytic_trajectory, fdm_reference, steps_to, strided_steps, InitialCondition};
use crate::trajectory::{TeacherTrajectory, Trajectory};

use super::config::{load_config, IcSection, LoadedConfig, ReferenceSection};
use super::trajio::{format_trajectory, read_observations, read_trajectory};

/// Command-line overrides applied on top of the config file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub quota: Option<f64>,
    pub steps: Option<usize>,
    pub quiet: bool,
}

/// Exit status: 2 for bad input, 3 for numeric failure during a run.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::NonFiniteState { .. } | Error::QuotaTooSmall { .. } | Error::ZeroReference => 3,
        _ => 2,
    }
}

/// Ordered `key=value` lines.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    lines: Vec<(String, String)>,
}

/// Values a report line can hold; floats are written in shortest
/// round-trip scientific form.
pub trait ReportValue {
    fn render(&self) -> String;
}

impl ReportValue for f64 {
    fn render(&self) -> String {
        format!("{self:e}")
    }
}

macro_rules! plain_value {
    ($($t:ty),*) => {$(
        impl ReportValue for $t {
            fn render(&self) -> String {
                self.to_string()
            }
        }
    )*};
}
plain_value!(usize, u64, bool, &str, String);

impl Report {
    pub fn put(&mut self, key: &str, value: impl ReportValue) {
        self.lines.push((key.to_string(), value.render()));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.lines.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.lines {
            let _ = writeln!(s, "{k}={v}");
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut r = Report::default();
        for (i, l) in text.lines().enumerate() {
            if l.trim().is_empty() {
                continue;
            }
            let (k, v) = l.split_once('=').ok_or_else(|| Error::Format {
                line: i + 1,
                msg: format!("expected key=value, found '{l}'"),
            })?;
            r.lines.push((k.to_string(), v.to_string()));
        }
        Ok(r)
    }
}

struct Context {
    cfg: LoadedConfig,
    grid: Grid,
    out_dir: PathBuf,
    ov: Overrides,
}

impl Context {
    fn load(config: &Path, ov: &Overrides) -> Result<Self> {
        let cfg = load_config(config)?;
        let grid = cfg.run.validate()?;
        if let Some(q) = ov.quota {
            QuotaParam::new(q)?;
        }
        let out_dir = match (&ov.out, &cfg.run.output.dir) {
            (Some(o), _) => o.clone(),
            (None, Some(d)) => cfg.resolve(d),
            (None, None) => PathBuf::from("."),
        };
        fs::create_dir_all(&out_dir).map_err(|e| Error::Io(format!("{}: {e}", out_dir.display())))?;
        Ok(Self {
            cfg,
            grid,
            out_dir,
            ov: ov.clone(),
        })
    }

    fn n_steps(&self) -> Result<usize> {
        match self.ov.steps {
            Some(n) => Ok(n),
            None => self.cfg.run.n_steps(&self.grid),
        }
    }

    fn schedule(&self) -> FrameSchedule {
        match self.cfg.run.frame_stride {
            Some(s) => FrameSchedule::Stride(s),
            None => FrameSchedule::Default,
        }
    }

    fn kappa(&self) -> Result<f64> {
        self.cfg
            .run
            .law
            .kappa()
            .ok_or_else(|| Error::Config("reference solutions need a constant diffusivity".into()))
    }

    fn path(&self, suffix: &str) -> PathBuf {
        self.out_dir.join(format!("{}{suffix}", self.cfg.name()))
    }

    fn write(&self, suffix: &str, text: &str) -> Result<PathBuf> {
        let p = self.path(suffix);
        fs::write(&p, text).map_err(|e| Error::Io(format!("{}: {e}", p.display())))?;
        Ok(p)
    }

    fn say(&self, msg: &str) {
        if !self.ov.quiet {
            println!("{msg}");
        }
    }

    fn warn(&self, msg: &str) {
        if !self.ov.quiet {
            eprintln!("warning: {msg}");
        }
    }

    /// Reference trajectory at (a superset of) `steps`, or `None` for
    /// `kind = "none"`.
    fn reference(&self, spec: &ReferenceSection, ic: &InitialCondition, steps: &[usize]) -> Result<Option<Trajectory>> {
        let n = *steps.last().unwrap_or(&0);
        match spec {
            ReferenceSection::None => Ok(None),
            ReferenceSection::Analytic => Ok(Some(analytic_trajectory(ic, self.kappa()?, &self.grid, steps)?)),
            ReferenceSection::Fdm { refinement } => {
                let stride = steps.windows(2).fold(0, |g, w| gcd(g, w[1] - w[0])).max(1);
                let t_end = n as f64 * self.grid.dt();
                Ok(Some(fdm_reference(ic, self.kappa()?, &self.grid, t_end, *refinement, stride)?))
            }
            ReferenceSection::File { path } => {
                let t = read_trajectory(&self.cfg.resolve(path))?;
                if !t.meta.matches(&self.grid) {
                    return Err(Error::Config(format!(
                        "reference file {} does not match the configured grid",
                        path.display()
                    )));
                }
                Ok(Some(t))
            }
        }
    }

    fn observations(&self) -> Result<ObservationLog> {
        match &self.cfg.run.observations {
            Some(o) => read_observations(&self.cfg.resolve(&o.path)),
            None => Ok(ObservationLog::default()),
        }
    }

    fn teacher(&self) -> Result<TeacherTrajectory> {
        let c = self
            .cfg
            .run
            .calibration
            .as_ref()
            .ok_or_else(|| Error::Config("missing [calibration] section".into()))?;
        let ic = c.teacher_ic.unwrap_or(self.cfg.run.ic).to_ic();
        let n = match c.teacher_t_end {
            Some(t) => steps_to(t, self.grid.dt())?,
            None => self.cfg.run.n_steps(&self.grid)?,
        };
        let stride = c.teacher_stride.unwrap_or_else(|| (n / 20).max(1));
        let traj = self
            .reference(&c.teacher, &ic, &strided_steps(n, stride))?
            .ok_or_else(|| Error::Config("calibration.teacher cannot be 'none'".into()))?;
        TeacherTrajectory::new(traj, &self.grid)
    }

    fn calibrate(&self) -> Result<(QuotaParam, CalibrationReport)> {
        let teacher = self.teacher()?;
        let setup = SimSetup {
            grid: self.grid.clone(),
            solver: self.cfg.run.solver_config(&self.grid, 1.0)?,
        };
        let cal = self.cfg.run.calibration_config().expect("teacher() checked the section");
        calibrate_quota(&teacher, &setup, &cal)
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn ic_name(ic: IcSection) -> &'static str {
    ic.to_ic().name()
}

fn reference_name(spec: &ReferenceSection) -> &'static str {
    match spec {
        ReferenceSection::Analytic => "analytic",
        ReferenceSection::Fdm { .. } => "fdm",
        ReferenceSection::File { .. } => "file",
        ReferenceSection::None => "none",
    }
}

fn put_energy(r: &mut Report, spikes: f64, flops: f64) {
    let e = energy_report(spikes, flops, &EnergyModel::default());
    r.put("dense_flops", e.flops);
    r.put("spike_energy_J", e.spike_energy_j);
    r.put("flop_energy_J", e.flop_energy_j);
    r.put("cost_ratio", e.cost_ratio);
    r.put("energy_ratio", e.energy_ratio);
}

/// Frame-by-frame comparison against whichever reference frames share a time
/// with the prediction.
fn put_accuracy(r: &mut Report, pred: &Trajectory, reference: &Trajectory, grid: &Grid) -> Result<()> {
    let mut worst: f64 = 0.0;
    let mut compared = 0usize;
    for f in &pred.frames {
        if let Some(rf) = reference.frame_at(f.t) {
            worst = worst.max(rmse(&f.state, &rf.state)?);
            compared += 1;
        }
    }
    let last = pred.last().expect("runs record their final frame");
    r.put("frames_compared", compared);
    match reference.frame_at(last.t) {
        Some(rf) => {
            r.put("rmse_final", rmse(&last.state, &rf.state)?);
            r.put("rmse_max", worst);
            r.put("functional_error_final", functional_error(&last.state, &rf.state)?);
            let m_ref = total_mass(&rf.state, grid);
            let m = total_mass(&last.state, grid);
            r.put("mass_reference_final", m_ref);
            r.put("mass_error_vs_reference_abs", (m - m_ref).abs());
            r.put("mass_error_vs_reference", (m - m_ref).abs() / m_ref.abs().max(1e-30));
        }
        None => {
            r.put("rmse_final", f64::NAN);
            r.put("rmse_max", if compared > 0 { worst } else { f64::NAN });
        }
    }
    Ok(())
}

fn put_run(r: &mut Report, traj: &Trajectory, stats: &RunStats, grid: &Grid) {
    r.put("steps", stats.steps);
    r.put("frames", traj.len());
    r.put("t_final", traj.last().map_or(0.0, |f| f.t));
    r.put("mass_initial", stats.ledger.mass_initial);
    r.put("mass_final", stats.final_mass);
    r.put("mass_drift", mass_drift(traj, grid));
    r.put("ledger_residual", stats.ledger_residual());
    r.put("ledger_boundary_in", stats.ledger.boundary_in.value());
    r.put("ledger_boundary_out", stats.ledger.boundary_out.value());
    r.put("ledger_source", stats.ledger.source_accum.value());
    r.put("ledger_leak", stats.ledger.leak_accum.value());
    r.put("total_spikes", stats.total_spikes);
    r.put(
        "spikes_per_step_mean",
        if stats.steps > 0 { stats.total_spikes / stats.steps as f64 } else { 0.0 },
    );
    r.put("mean_sparsity", stats.mean_sparsity);
    r.put("finite", traj.frames.iter().all(|f| f.state.is_finite()));
}

/// Result of a simulate run, kept for callers that want more than the files.
#[derive(Debug, Clone)]
pub struct SimulateOutput {
    pub trajectory: Trajectory,
    pub stats: RunStats,
    pub report: Report,
    pub calibration: Option<CalibrationReport>,
    pub trajectory_path: PathBuf,
    pub report_path: PathBuf,
}

fn simulate_in(ctx: &Context, force_calibration: bool) -> Result<SimulateOutput> {
    let run = &ctx.cfg.run;
    let (quota, source, calibration) = match (force_calibration, ctx.ov.quota, run.solver.quota) {
        (false, Some(q), _) => (q, "override", None),
        (false, None, Some(q)) => (q, "config", None),
        _ if run.calibration.is_some() => {
            let (q, rep) = ctx.calibrate()?;
            (q.get(), "calibrated", Some(rep))
        }
        _ => return Err(Error::Config("no quota given and no [calibration] section".into())),
    };
    if let Some(rep) = &calibration {
        ctx.write(".calibration", &render_calibration(rep))?;
    }

    let grid = &ctx.grid;
    let n = ctx.n_steps()?;
    let ic = run.ic.to_ic();
    let state0 = ic.sample(grid)?;
    let solver = run.solver_config(grid, quota)?;
    let mut sim = Simulation::new(grid.clone(), solver, state0)?;
    if let Some(w) = sim.coarse_quota_warning() {
        ctx.warn(&w);
    }
    let obs = ctx.observations()?;
    let (mut traj, stats) = sim.run_with_observations(n, &ctx.schedule(), &obs)?;
    traj.meta.equation = run.equation.as_str().into();

    let mut r = Report::default();
    r.put("command", if force_calibration { "calibrate" } else { "simulate" });
    r.put("equation", run.equation.as_str());
    r.put("nx", grid.nx());
    r.put("ny", grid.ny());
    r.put("dt", grid.dt());
    r.put("ic", ic_name(run.ic));
    r.put("integrator", format!("{:?}", run.solver.integrator).to_lowercase());
    r.put("quota", quota);
    r.put("quota_source", source);
    r.put("observations", obs.entries.len());
    put_run(&mut r, &traj, &stats, grid);

    let ref_spec = run.reference.clone().unwrap_or(ReferenceSection::None);
    r.put("reference", reference_name(&ref_spec));
    let steps: Vec<usize> = traj.frames.iter().map(|f| (f.t / grid.dt()).round() as usize).collect();
    if let Some(reference) = ctx.reference(&ref_spec, &ic, &steps)? {
        put_accuracy(&mut r, &traj, &reference, grid)?;
    }
    put_energy(&mut r, stats.total_spikes, dense_stencil_flops(grid, n, run.integrator()));

    let trajectory_path = ctx.write(".traj", &format_trajectory(&traj))?;
    let report_path = ctx.write(".report", &r.render())?;
    ctx.say(&r.render());
    Ok(SimulateOutput {
        trajectory: traj,
        stats,
        report: r,
        calibration,
        trajectory_path,
        report_path,
    })
}

pub fn render_calibration(rep: &CalibrationReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "lambda={:e}", rep.lambda);
    let _ = writeln!(s, "best_quota={:e}", rep.best.quota);
    let _ = writeln!(s, "best_fidelity={:e}", rep.best.fidelity);
    let _ = writeln!(s, "best_spikes={:e}", rep.best.spikes);
    let _ = writeln!(s, "best_loss={:e}", rep.best.loss);
    let _ = writeln!(s, "samples={}", rep.samples.len());
    let _ = writeln!(s, "index,phase,quota,fidelity,spikes,loss");
    for (i, x) in rep.samples.iter().enumerate() {
        let phase = match x.phase {
            SamplePhase::Grid => "grid",
            SamplePhase::Refine => "refine",
        };
        let _ = writeln!(s, "{i},{phase},{:e},{:e},{:e},{:e}", x.quota, x.fidelity, x.spikes, x.loss);
    }
    s
}

pub fn cmd_simulate(config: &Path, ov: &Overrides) -> Result<SimulateOutput> {
    simulate_in(&Context::load(config, ov)?, false)
}

/// Calibrates the quota against the configured teacher and then runs the
/// configured simulation with it.
pub fn cmd_calibrate(config: &Path, ov: &Overrides) -> Result<SimulateOutput> {
    let ctx = Context::load(config, ov)?;
    if ctx.cfg.run.calibration.is_none() {
        return Err(Error::Config("calibrate needs a [calibration] section".into()));
    }
    simulate_in(&ctx, true)
}

/// Writes the configured reference as a trajectory file.
pub fn cmd_oracle(config: &Path, ov: &Overrides) -> Result<(Trajectory, PathBuf)> {
    let ctx = Context::load(config, ov)?;
    let n = ctx.n_steps()?;
    let spec = ctx.cfg.run.reference.clone().unwrap_or(ReferenceSection::Analytic);
    if matches!(spec, ReferenceSection::File { .. } | ReferenceSection::None) {
        return Err(Error::Config("oracle needs reference kind 'analytic' or 'fdm'".into()));
    }
    let ic = ctx.cfg.run.ic.to_ic();
    let steps = ctx.schedule().steps(n);
    let mut traj = ctx.reference(&spec, &ic, &steps)?.expect("analytic or fdm");
    traj.meta.equation = ctx.cfg.run.equation.as_str().into();
    let path = ctx.write(".oracle.traj", &format_trajectory(&traj))?;
    let mut r = Report::default();
    r.put("command", "oracle");
    r.put("reference", reference_name(&spec));
    r.put("ic", ic.name());
    r.put("frames", traj.len());
    r.put("mass_drift", mass_drift(&traj, &ctx.grid));
    ctx.write(".oracle.report", &r.render())?;
    ctx.say(&r.render());
    Ok((traj, path))
}

pub fn render_sweep(entries: &[SweepEntry]) -> String {
    let model = EnergyModel::default();
    let mut s = String::from("quota,final_rmse,total_spikes,mean_sparsity,spike_energy_J\n");
    for e in entries {
        match &e.result {
            Ok(p) => {
                let energy = energy_report(p.total_spikes, 0.0, &model).spike_energy_j;
                let _ = writeln!(
                    s,
                    "{:e},{:e},{:e},{:e},{:e}",
                    p.quota, p.final_rmse, p.total_spikes, p.mean_sparsity, energy
                );
            }
            Err(_) => {
                let _ = writeln!(s, "{:e},NaN,NaN,NaN,NaN", e.quota);
            }
        }
    }
    s
}

/// Pareto sweep; failed points are written as `nan` rows and make the command
/// fail with the first error after the CSV is written.
pub fn cmd_sweep(config: &Path, ov: &Overrides) -> Result<(Vec<SweepEntry>, PathBuf)> {
    let ctx = Context::load(config, ov)?;
    let run = &ctx.cfg.run;
    let quotas = match ov.quota {
        Some(q) => vec![q],
        None => run.sweep_quotas()?,
    };
    let n = ctx.n_steps()?;
    let spec = run.reference.clone().unwrap_or(ReferenceSection::Analytic);
    let ic = run.ic.to_ic();
    let reference = ctx
        .reference(&spec, &ic, &[0, n])?
        .ok_or_else(|| Error::Config("sweep needs a reference".into()))?;
    let reference = TeacherTrajectory::new(reference, &ctx.grid)?;
    let setup = SimSetup {
        grid: ctx.grid.clone(),
        solver: run.solver_config(&ctx.grid, quotas[0])?,
    };
    let entries = pareto_sweep(&quotas, &setup, &reference)?;
    let path = ctx.write(".sweep.csv", &render_sweep(&entries))?;
    ctx.say(&render_sweep(&entries));
    for e in &entries {
        if let Err(err) = &e.result {
            eprintln!("error: quota {}: {err}", e.quota);
        }
    }
    if let Some(err) = entries.iter().find_map(|e| e.result.clone().err()) {
        return Err(err);
    }
    Ok((entries, path))
}

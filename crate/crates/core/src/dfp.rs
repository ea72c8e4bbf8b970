//! Discrete flux processor: divergence of reconstructed fluxes, C-LIF state
//! update and conservation accounting.
//!
//! Every reconstructed face flux is computed once and applied with opposite
//! signs to its two neighbouring cells. A cell therefore loses exactly what its
//! neighbour gains (conservative subtraction), and faces that carry no spikes
//! are skipped without affecting the result.

use crate::domain::{cfl_max_dt, ConservationLedger, FaceField, Grid, NeuronParams, QuotaParam, SpikeField, StateField};
use crate::error::{Error, Result};
use crate::flux::{physical_flux_raw, Constitutive};
use crate::metrics::total_mass;
use crate::projector::{count_spikes, quantize_into, reconstruct_into, silent_faces};
use crate::sum::CompensatedSum;
use crate::trajectory::{Provenance, Trajectory, TrajectoryMeta};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Integrator {
    ForwardEuler,
    Rk4,
}

impl Integrator {
    pub fn stages(self) -> usize {
        match self {
            Integrator::ForwardEuler => 1,
            Integrator::Rk4 => 4,
        }
    }
}

/// Everything that defines the evolution operator apart from the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub law: Constitutive,
    pub params: NeuronParams,
    pub quota: QuotaParam,
    pub integrator: Integrator,
}

impl SolverConfig {
    pub fn new(law: Constitutive, quota: QuotaParam, integrator: Integrator) -> Self {
        Self {
            law,
            params: NeuronParams::default(),
            quota,
            integrator,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepStats {
    /// Spike events, averaged over integrator stages.
    pub spikes_this_step: f64,
    pub sparsity_this_step: f64,
    /// Net mass entering through the walls during the step, divided by dt.
    pub boundary_flux_net: f64,
}

/// Divergence `(f_{i+½} − f_{i−½})/dx (+ y term)` per cell, written into `out`.
///
/// With `spikes` given, faces whose spike count is zero are skipped.
fn accumulate_divergence(f: &FaceField, spikes: Option<&SpikeField>, grid: &Grid, out: &mut [f64]) {
    out.iter_mut().for_each(|v| *v = 0.0);
    let (nx, ny) = (grid.nx(), grid.ny());
    let active_x = |k: usize| spikes.is_none_or(|s| s.x[k] != 0);
    let active_y = |k: usize| spikes.is_none_or(|s| s.y[k] != 0);

    let inv_dx = 1.0 / grid.dx();
    let periodic_x = grid.boundary_x().is_periodic();
    for j in 0..ny {
        let row = nx * j;
        for k in 0..=nx {
            let face = grid.x_face(k, j);
            if (periodic_x && k == nx) || !active_x(face) {
                continue;
            }
            let c = f.x[face] * inv_dx;
            if c == 0.0 {
                continue;
            }
            let (left, right) = match k {
                0 if periodic_x => (Some(row + nx - 1), Some(row)),
                0 => (None, Some(row)),
                k if k == nx => (Some(row + nx - 1), None),
                k => (Some(row + k - 1), Some(row + k)),
            };
            if let Some(l) = left {
                out[l] += c;
            }
            if let Some(r) = right {
                out[r] -= c;
            }
        }
    }

    if grid.is_2d() {
        let inv_dy = 1.0 / grid.dy();
        let periodic_y = grid.boundary_y().is_periodic();
        for k in 0..=ny {
            if periodic_y && k == ny {
                continue;
            }
            for i in 0..nx {
                let face = grid.y_face(i, k);
                if !active_y(face) {
                    continue;
                }
                let c = f.y[face] * inv_dy;
                if c == 0.0 {
                    continue;
                }
                let (below, above) = match k {
                    0 if periodic_y => (Some(i + nx * (ny - 1)), Some(i)),
                    0 => (None, Some(i)),
                    k if k == ny => (Some(i + nx * (ny - 1)), None),
                    k => (Some(i + nx * (k - 1)), Some(i + nx * k)),
                };
                if let Some(b) = below {
                    out[b] += c;
                }
                if let Some(a) = above {
                    out[a] -= c;
                }
            }
        }
    }
}

/// Net outflow per unit volume for every cell.
pub fn divergence(f_disc: &FaceField, grid: &Grid) -> Result<Vec<f64>> {
    f_disc.check_shape(grid)?;
    let mut out = vec![0.0; grid.n_cells()];
    accumulate_divergence(f_disc, None, grid, &mut out);
    Ok(out)
}

/// Event-driven divergence: only faces with a non-zero spike count are visited.
pub fn divergence_sparse(f_disc: &FaceField, spikes: &SpikeField, grid: &Grid) -> Result<Vec<f64>> {
    f_disc.check_shape(grid)?;
    spikes.check_shape(grid)?;
    let mut out = vec![0.0; grid.n_cells()];
    accumulate_divergence(f_disc, Some(spikes), grid, &mut out);
    Ok(out)
}

/// Mass rate entering through the walls, `area·(f_lower − f_upper)` summed
/// over non-periodic axes.
fn boundary_inflow_rate(f: &FaceField, grid: &Grid) -> f64 {
    let mut acc = CompensatedSum::new();
    let (nx, ny) = (grid.nx(), grid.ny());
    if !grid.boundary_x().is_periodic() {
        let a = grid.x_face_area();
        for j in 0..ny {
            acc.add(a * f.x[grid.x_face(0, j)]);
            acc.add(-a * f.x[grid.x_face(nx, j)]);
        }
    }
    if grid.is_2d() && !grid.boundary_y().is_periodic() {
        let a = grid.y_face_area();
        for i in 0..nx {
            acc.add(a * f.y[grid.y_face(i, 0)]);
            acc.add(-a * f.y[grid.y_face(i, ny)]);
        }
    }
    acc.value()
}

#[derive(Debug, Clone, Copy, Default)]
struct StageOutcome {
    events: u64,
    silent: usize,
    boundary_rate: f64,
    source_rate: f64,
    leak_rate: f64,
}

/// Scratch buffers reused across steps.
#[derive(Debug, Clone)]
struct Workspace {
    flux: FaceField,
    spikes: SpikeField,
    disc: FaceField,
    stage_u: Vec<f64>,
    k: [Vec<f64>; 4],
}

impl Workspace {
    fn new(grid: &Grid) -> Self {
        let n = grid.n_cells();
        Self {
            flux: FaceField::zeros(grid),
            spikes: SpikeField::zeros(grid),
            disc: FaceField::zeros(grid),
            stage_u: vec![0.0; n],
            k: [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]],
        }
    }
}

/// Evaluates `du/dt` for one stage: flux → quantize → reconstruct → divergence,
/// plus source and leak terms.
fn stage_rate(
    grid: &Grid,
    cfg: &SolverConfig,
    u: &[f64],
    ws_flux: &mut FaceField,
    ws_spikes: &mut SpikeField,
    ws_disc: &mut FaceField,
    rate: &mut [f64],
) -> Result<StageOutcome> {
    physical_flux_raw(u, grid, &cfg.law, ws_flux);
    quantize_into(ws_flux, cfg.quota, ws_spikes)?;
    reconstruct_into(ws_spikes, cfg.quota, ws_disc);
    accumulate_divergence(ws_disc, Some(ws_spikes), grid, rate);

    let params = &cfg.params;
    let r_m = params.r_m;
    if r_m != 1.0 {
        rate.iter_mut().for_each(|v| *v *= r_m);
    }
    // du/dt = −r_m·div (+ S) (− (u − v_rest)/τ)
    rate.iter_mut().for_each(|v| *v = -*v);

    let dv = grid.cell_volume();
    let mut source_rate = CompensatedSum::new();
    if let Some(src) = &params.source {
        for (r, &s) in rate.iter_mut().zip(src) {
            *r += s;
            source_rate.add(s * dv);
        }
    }
    let mut leak_rate = CompensatedSum::new();
    if let Some(leak) = params.leak {
        for (r, &ui) in rate.iter_mut().zip(u) {
            let l = -(ui - leak.v_rest) / leak.tau_m;
            *r += l;
            leak_rate.add(l * dv);
        }
    }

    Ok(StageOutcome {
        events: count_spikes(ws_spikes),
        silent: silent_faces(ws_spikes),
        boundary_rate: r_m * boundary_inflow_rate(ws_disc, grid),
        source_rate: source_rate.value(),
        leak_rate: leak_rate.value(),
    })
}

fn check_cfl(grid: &Grid, cfg: &SolverConfig, state: &StateField) -> Result<()> {
    let kappa = cfg.law.max_diffusivity(state, grid) * cfg.params.r_m.abs().max(f64::MIN_POSITIVE);
    let max_dt = cfl_max_dt(grid, kappa);
    if grid.dt() > max_dt {
        return Err(Error::CflViolation {
            dt: grid.dt(),
            max_dt,
        });
    }
    Ok(())
}

/// Result of one step before it is committed.
struct Advance {
    stats: StepStats,
    boundary: f64,
    source: f64,
    leak: f64,
}

fn advance(grid: &Grid, cfg: &SolverConfig, u: &mut [f64], ws: &mut Workspace) -> Result<Advance> {
    let dt = grid.dt();
    let n_faces = ws.spikes.len();
    let Workspace {
        flux,
        spikes,
        disc,
        stage_u,
        k,
    } = ws;

    let outcomes: Vec<StageOutcome> = match cfg.integrator {
        Integrator::ForwardEuler => {
            let o = stage_rate(grid, cfg, u, flux, spikes, disc, &mut k[0])?;
            for (ui, ki) in u.iter_mut().zip(k[0].iter()) {
                *ui += dt * ki;
            }
            vec![o]
        }
        Integrator::Rk4 => {
            let half = 0.5 * dt;
            let [k1, k2, k3, k4] = k;
            let o1 = stage_rate(grid, cfg, u, flux, spikes, disc, k1)?;
            for ((s, &ui), &ki) in stage_u.iter_mut().zip(u.iter()).zip(k1.iter()) {
                *s = ui + half * ki;
            }
            let o2 = stage_rate(grid, cfg, stage_u, flux, spikes, disc, k2)?;
            for ((s, &ui), &ki) in stage_u.iter_mut().zip(u.iter()).zip(k2.iter()) {
                *s = ui + half * ki;
            }
            let o3 = stage_rate(grid, cfg, stage_u, flux, spikes, disc, k3)?;
            for ((s, &ui), &ki) in stage_u.iter_mut().zip(u.iter()).zip(k3.iter()) {
                *s = ui + dt * ki;
            }
            let o4 = stage_rate(grid, cfg, stage_u, flux, spikes, disc, k4)?;
            let sixth = dt / 6.0;
            for (i, ui) in u.iter_mut().enumerate() {
                *ui += sixth * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
            vec![o1, o2, o3, o4]
        }
    };

    let weights: &[f64] = match cfg.integrator {
        Integrator::ForwardEuler => &[1.0],
        Integrator::Rk4 => &[1.0 / 6.0, 2.0 / 6.0, 2.0 / 6.0, 1.0 / 6.0],
    };
    let combine = |f: fn(&StageOutcome) -> f64| {
        outcomes
            .iter()
            .zip(weights)
            .map(|(o, w)| w * f(o))
            .collect::<CompensatedSum>()
            .value()
    };
    let boundary_rate = combine(|o| o.boundary_rate);
    let source_rate = combine(|o| o.source_rate);
    let leak_rate = combine(|o| o.leak_rate);

    let stages = outcomes.len() as f64;
    let events: u64 = outcomes.iter().map(|o| o.events).sum();
    let silent: usize = outcomes.iter().map(|o| o.silent).sum();
    let sparsity = if n_faces == 0 {
        1.0
    } else {
        silent as f64 / (n_faces as f64 * stages)
    };

    Ok(Advance {
        stats: StepStats {
            spikes_this_step: events as f64 / stages,
            sparsity_this_step: sparsity,
            boundary_flux_net: boundary_rate,
        },
        boundary: dt * boundary_rate,
        source: dt * source_rate,
        leak: dt * leak_rate,
    })
}

/// One application of the evolution operator. Posts the step's boundary,
/// source and leak contributions to `ledger`.
pub fn step(
    grid: &Grid,
    cfg: &SolverConfig,
    state: &StateField,
    ledger: &mut ConservationLedger,
) -> Result<(StateField, StepStats)> {
    state.check_shape(grid)?;
    if !state.is_finite() {
        return Err(Error::NonFiniteState { step: 0 });
    }
    check_cfl(grid, cfg, state)?;
    let mut ws = Workspace::new(grid);
    let mut u = state.values().to_vec();
    let adv = advance(grid, cfg, &mut u, &mut ws)?;
    if u.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteState { step: 1 });
    }
    ledger.post_boundary(adv.boundary);
    ledger.post_source(adv.source);
    ledger.post_leak(adv.leak);
    Ok((StateField::from_vec_unchecked(u), adv.stats))
}

/// Overwrites observed cells and posts the induced mass change as a source.
/// All indices are checked before any cell is touched.
pub fn assimilate(
    state: &StateField,
    grid: &Grid,
    observations: &[(usize, f64)],
    ledger: &mut ConservationLedger,
) -> Result<StateField> {
    let n = grid.n_cells();
    state.check_shape(grid)?;
    for &(idx, v) in observations {
        if idx >= n {
            return Err(Error::IndexOutOfRange { index: idx, len: n });
        }
        if !v.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "observation for cell {idx} is not finite"
            )));
        }
    }
    let mut out = state.clone();
    let dv = grid.cell_volume();
    let vals = out.values_mut();
    for &(idx, v) in observations {
        ledger.post_source((v - vals[idx]) * dv);
        vals[idx] = v;
    }
    Ok(out)
}

/// A stateful solver instance that owns its grid, state and ledger.
#[derive(Debug, Clone)]
pub struct Simulation {
    grid: Grid,
    cfg: SolverConfig,
    state: StateField,
    ledger: ConservationLedger,
    t0: f64,
    steps_taken: usize,
    ws: Workspace,
}

impl Simulation {
    pub fn new(grid: Grid, cfg: SolverConfig, state0: StateField) -> Result<Self> {
        Self::starting_at(grid, cfg, state0, 0.0)
    }

    /// Starts the clock at `t0` instead of zero.
    pub fn starting_at(grid: Grid, cfg: SolverConfig, state0: StateField, t0: f64) -> Result<Self> {
        state0.check_shape(&grid)?;
        if !state0.is_finite() {
            return Err(Error::NonFiniteState { step: 0 });
        }
        cfg.law.validate()?;
        cfg.params.validate(&grid)?;
        check_cfl(&grid, &cfg, &state0)?;
        let ledger = ConservationLedger::new(total_mass(&state0, &grid));
        let ws = Workspace::new(&grid);
        Ok(Self {
            grid,
            cfg,
            state: state0,
            ledger,
            t0,
            steps_taken: 0,
            ws,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }
    pub fn config(&self) -> &SolverConfig {
        &self.cfg
    }
    pub fn state(&self) -> &StateField {
        &self.state
    }
    pub fn ledger(&self) -> &ConservationLedger {
        &self.ledger
    }
    pub fn steps_taken(&self) -> usize {
        self.steps_taken
    }

    pub fn time(&self) -> f64 {
        self.t0 + self.steps_taken as f64 * self.grid.dt()
    }

    pub fn mass(&self) -> f64 {
        total_mass(&self.state, &self.grid)
    }

    /// Replaces the quota, e.g. after on-line recalibration.
    pub fn set_quota(&mut self, quota: QuotaParam) {
        self.cfg.quota = quota;
    }

    /// Warning text when the quota is coarse relative to the largest
    /// gradient-driven flux the initial scale admits (`κ·u_max/dx`).
    pub fn coarse_quota_warning(&self) -> Option<String> {
        let umax = self.state.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let kappa = self.cfg.law.max_diffusivity(&self.state, &self.grid);
        let limit = kappa * umax / self.grid.dx();
        let q = self.cfg.quota.get();
        (limit > 0.0 && q > limit).then(|| {
            format!("quota {q:e} exceeds kappa*u_max/dx = {limit:e}; most faces will stay silent")
        })
    }

    pub fn step(&mut self) -> Result<StepStats> {
        let step_index = self.steps_taken + 1;
        if !matches!(self.cfg.law, Constitutive::Constant { .. }) {
            check_cfl(&self.grid, &self.cfg, &self.state)?;
        }
        let mut u = self.state.values().to_vec();
        let adv = advance(&self.grid, &self.cfg, &mut u, &mut self.ws)?;
        if u.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteState { step: step_index });
        }
        self.state = StateField::from_vec_unchecked(u);
        self.ledger.post_boundary(adv.boundary);
        self.ledger.post_source(adv.source);
        self.ledger.post_leak(adv.leak);
        self.steps_taken = step_index;
        Ok(adv.stats)
    }

    pub fn assimilate(&mut self, observations: &[(usize, f64)]) -> Result<()> {
        self.state = assimilate(&self.state, &self.grid, observations, &mut self.ledger)?;
        Ok(())
    }

    /// Runs `n_steps` steps, recording frames per `schedule`.
    pub fn run(&mut self, n_steps: usize, schedule: &FrameSchedule) -> Result<(Trajectory, RunStats)> {
        self.run_with_observations(n_steps, schedule, &ObservationLog::default())
    }

    pub fn run_with_observations(
        &mut self,
        n_steps: usize,
        schedule: &FrameSchedule,
        observations: &ObservationLog,
    ) -> Result<(Trajectory, RunStats)> {
        let record = schedule.steps(n_steps);
        let mut record_iter = record.iter().peekable();
        let by_step = observations.by_step(self.grid.dt(), self.t0, self.steps_taken, n_steps)?;
        let mut obs_iter = by_step.iter().peekable();

        let mut traj = Trajectory::new(TrajectoryMeta::for_grid(&self.grid, 0.0), Provenance::Solver);
        let mut stats = RunStats::new(self.cfg.integrator.stages());

        let apply_obs = |sim: &mut Self, k: usize, it: &mut std::iter::Peekable<std::slice::Iter<'_, StepObs>>| -> Result<()> {
            while let Some((s, obs)) = it.peek() {
                if *s != k {
                    break;
                }
                sim.assimilate(obs)?;
                it.next();
            }
            Ok(())
        };

        apply_obs(self, 0, &mut obs_iter)?;
        if record_iter.peek() == Some(&&0) {
            traj.push(self.time(), self.state.clone());
            record_iter.next();
        }
        let mut sparsity_acc = CompensatedSum::new();
        for k in 1..=n_steps {
            let s = self.step()?;
            stats.spikes_per_step.push(s.spikes_this_step);
            sparsity_acc.add(s.sparsity_this_step);
            apply_obs(self, k, &mut obs_iter)?;
            if record_iter.peek() == Some(&&k) {
                traj.push(self.time(), self.state.clone());
                record_iter.next();
            }
        }
        stats.steps = n_steps;
        stats.mean_sparsity = if n_steps == 0 {
            1.0
        } else {
            sparsity_acc.value() / n_steps as f64
        };
        stats.total_spikes = stats.spikes_per_step.iter().copied().collect::<CompensatedSum>().value();
        stats.ledger = self.ledger.clone();
        stats.final_mass = self.mass();
        Ok((traj, stats))
    }
}

/// Aggregates over an `evolve` run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunStats {
    pub steps: usize,
    pub stages_per_step: usize,
    /// Σ over steps of the stage-averaged spike count.
    pub total_spikes: f64,
    pub spikes_per_step: Vec<f64>,
    pub mean_sparsity: f64,
    pub ledger: ConservationLedger,
    pub final_mass: f64,
}

impl RunStats {
    fn new(stages: usize) -> Self {
        Self {
            steps: 0,
            stages_per_step: stages,
            total_spikes: 0.0,
            spikes_per_step: Vec::new(),
            mean_sparsity: 1.0,
            ledger: ConservationLedger::new(0.0),
            final_mass: 0.0,
        }
    }

    pub fn ledger_residual(&self) -> f64 {
        self.ledger.closure_residual(self.final_mass)
    }
}

/// Which steps get recorded as frames. Step 0 and the final step are always kept.
#[derive(Debug, Clone, PartialEq)]
pub enum FrameSchedule {
    /// Every step up to 1000 steps, otherwise 100 evenly spaced frames.
    Default,
    Stride(usize),
    /// Explicit step indices.
    Steps(Vec<usize>),
}

impl FrameSchedule {
    pub fn steps(&self, n_steps: usize) -> Vec<usize> {
        let mut v: Vec<usize> = match self {
            FrameSchedule::Default if n_steps <= 1000 => (0..=n_steps).collect(),
            FrameSchedule::Default => (0..=100).map(|k| ((k * n_steps) as f64 / 100.0).round() as usize).collect(),
            FrameSchedule::Stride(s) => {
                let s = (*s).max(1);
                (0..=n_steps).step_by(s).chain(std::iter::once(n_steps)).collect()
            }
            FrameSchedule::Steps(v) => std::iter::once(0)
                .chain(v.iter().copied().filter(|&k| k <= n_steps))
                .chain(std::iter::once(n_steps))
                .collect(),
        };
        v.sort_unstable();
        v.dedup();
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub t: f64,
    pub cell: usize,
    pub value: f64,
}

/// Sensor readings replayed during a run; each is applied right after the step
/// that reaches its time.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ObservationLog {
    pub entries: Vec<Observation>,
}

/// Observations due at one step: `(step, [(cell, value)])`.
type StepObs = (usize, Vec<(usize, f64)>);

impl ObservationLog {
    fn by_step(&self, dt: f64, t0: f64, offset: usize, n_steps: usize) -> Result<Vec<StepObs>> {
        let mut grouped: Vec<StepObs> = Vec::new();
        let mut items: Vec<(usize, usize, f64)> = Vec::with_capacity(self.entries.len());
        for o in &self.entries {
            let k = (o.t - t0) / dt;
            let kr = k.round();
            if (k - kr).abs() > 1e-9 * k.abs().max(1.0) || kr < 0.0 {
                return Err(Error::FrameMisalignment { t: o.t });
            }
            let abs = kr as usize;
            if abs < offset || abs - offset > n_steps {
                continue;
            }
            items.push((abs - offset, o.cell, o.value));
        }
        items.sort_by_key(|&(k, _, _)| k);
        for (k, cell, value) in items {
            match grouped.last_mut() {
                Some((last, v)) if *last == k => v.push((cell, value)),
                _ => grouped.push((k, vec![(cell, value)])),
            }
        }
        Ok(grouped)
    }
}

/// Builds a simulation from `state0` and runs it for `n_steps`.
pub fn evolve(
    grid: &Grid,
    cfg: &SolverConfig,
    state0: StateField,
    n_steps: usize,
    schedule: &FrameSchedule,
) -> Result<(Trajectory, RunStats)> {
    Simulation::new(grid.clone(), cfg.clone(), state0)?.run(n_steps, schedule)
}

//! Quota calibration by teacher distillation, and accuracy–spike sweeps.

use rayon::prelude::*;

use crate::dfp::{FrameSchedule, RunStats, Simulation, SolverConfig};
use crate::domain::{Grid, QuotaParam};
use crate::error::{Error, Result};
use crate::metrics::{rmse, squared_error};
use crate::sum::CompensatedSum;
use crate::trajectory::{TeacherTrajectory, Trajectory};

/// Grid and operator used for every candidate quota; `solver.quota` is
/// replaced per evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct SimSetup {
    pub grid: Grid,
    pub solver: SolverConfig,
}

impl SimSetup {
    fn with_quota(&self, quota: QuotaParam) -> SolverConfig {
        SolverConfig {
            quota,
            ..self.solver.clone()
        }
    }

    /// Runs from the teacher's first frame to its last, recording a frame at
    /// every teacher time.
    pub fn run_against(&self, teacher: &TeacherTrajectory, quota: QuotaParam) -> Result<(Trajectory, RunStats)> {
        let dt = self.grid.dt();
        let steps = teacher.step_indices(dt);
        let first = steps[0];
        let last = *steps.last().expect("teacher has frames");
        let start = &teacher.frames[0];
        let mut sim = Simulation::starting_at(self.grid.clone(), self.with_quota(quota), start.state.clone(), start.t)?;
        let rel: Vec<usize> = steps.iter().map(|k| k - first).collect();
        sim.run(last - first, &FrameSchedule::Steps(rel))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationConfig {
    /// Weight of the spike-count term.
    pub lambda: f64,
    pub q_lo: f64,
    pub q_hi: f64,
    pub points_per_decade: usize,
    /// Golden-section refinement stops once `ln(hi/lo)` falls below this.
    pub tolerance: f64,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            lambda: 0.0,
            q_lo: 1e-6,
            q_hi: 1e-1,
            points_per_decade: 4,
            tolerance: 1e-3,
        }
    }
}

impl CalibrationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.q_lo > 0.0 && self.q_lo < self.q_hi && self.q_hi.is_finite()) {
            return Err(Error::EmptySearchRange {
                lo: self.q_lo,
                hi: self.q_hi,
            });
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidParameter(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if self.points_per_decade == 0 {
            return Err(Error::InvalidParameter("points_per_decade must be >= 1".into()));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidParameter("tolerance must be positive".into()));
        }
        Ok(())
    }

    /// Log-spaced candidates from `q_lo` to `q_hi`, both ends included.
    pub fn log_grid(&self) -> Vec<f64> {
        let decades = (self.q_hi / self.q_lo).log10();
        let n = (decades * self.points_per_decade as f64 - 1e-9).ceil().max(1.0) as usize;
        let (a, b) = (self.q_lo.ln(), self.q_hi.ln());
        (0..=n)
            .map(|k| match k {
                0 => self.q_lo,
                k if k == n => self.q_hi,
                k => (a + (b - a) * k as f64 / n as f64).exp(),
            })
            .collect()
    }
}

/// `Σ_frames ‖u_pred − u_teacher‖²₂`, pairing frames by time.
pub fn fidelity(pred: &Trajectory, teacher: &Trajectory) -> Result<f64> {
    let mut acc = CompensatedSum::new();
    for tf in &teacher.frames {
        let pf = pred.frame_at(tf.t).ok_or(Error::FrameMisalignment { t: tf.t })?;
        acc.add(squared_error(&pf.state, &tf.state)?);
    }
    Ok(acc.value())
}

/// Fidelity plus `λ·total_spikes`.
pub fn loss_total(pred: &Trajectory, teacher: &Trajectory, total_spikes: f64, lambda: f64) -> Result<f64> {
    Ok(fidelity(pred, teacher)? + lambda * total_spikes)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplePhase {
    Grid,
    Refine,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationSample {
    pub quota: f64,
    pub fidelity: f64,
    pub spikes: f64,
    pub loss: f64,
    pub phase: SamplePhase,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationReport {
    pub lambda: f64,
    /// In evaluation order: grid points first, then refinement probes.
    pub samples: Vec<CalibrationSample>,
    pub best: CalibrationSample,
}

fn evaluate(
    setup: &SimSetup,
    teacher: &TeacherTrajectory,
    quota: f64,
    lambda: f64,
    phase: SamplePhase,
) -> Result<CalibrationSample> {
    let q = QuotaParam::new(quota)?;
    let (pred, stats) = setup.run_against(teacher, q)?;
    let fid = fidelity(&pred, teacher)?;
    Ok(CalibrationSample {
        quota,
        fidelity: fid,
        spikes: stats.total_spikes,
        loss: fid + lambda * stats.total_spikes,
        phase,
    })
}

/// Strictly better loss; ties keep the incumbent.
fn better(a: &CalibrationSample, b: &CalibrationSample) -> bool {
    a.loss < b.loss
}

/// Log-grid scan followed by golden-section refinement (in log-quota) around
/// the best grid point. The returned quota has the lowest loss of every
/// sample evaluated.
pub fn calibrate_quota(
    teacher: &TeacherTrajectory,
    setup: &SimSetup,
    cal: &CalibrationConfig,
) -> Result<(QuotaParam, CalibrationReport)> {
    cal.validate()?;
    let grid_q = cal.log_grid();
    let mut samples = grid_q
        .par_iter()
        .map(|&q| evaluate(setup, teacher, q, cal.lambda, SamplePhase::Grid))
        .collect::<Result<Vec<_>>>()?;

    let mut best_idx = 0;
    for (i, s) in samples.iter().enumerate() {
        if better(s, &samples[best_idx]) {
            best_idx = i;
        }
    }
    let mut best = samples[best_idx];

    let lo_i = best_idx.saturating_sub(1);
    let hi_i = (best_idx + 1).min(grid_q.len() - 1);
    let (mut a, mut b) = (grid_q[lo_i].ln(), grid_q[hi_i].ln());

    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let probe = |x: f64, samples: &mut Vec<CalibrationSample>| -> Result<f64> {
        let s = evaluate(setup, teacher, x.exp(), cal.lambda, SamplePhase::Refine)?;
        samples.push(s);
        Ok(s.loss)
    };
    if b - a > cal.tolerance {
        let mut f1 = probe(x1, &mut samples)?;
        let mut f2 = probe(x2, &mut samples)?;
        let mut iters = 0;
        while b - a > cal.tolerance && iters < 100 {
            if f1 <= f2 {
                b = x2;
                x2 = x1;
                f2 = f1;
                x1 = b - INV_PHI * (b - a);
                f1 = probe(x1, &mut samples)?;
            } else {
                a = x1;
                x1 = x2;
                f1 = f2;
                x2 = a + INV_PHI * (b - a);
                f2 = probe(x2, &mut samples)?;
            }
            iters += 1;
        }
    }
    for s in &samples {
        if better(s, &best) {
            best = *s;
        }
    }
    let quota = QuotaParam::new(best.quota)?;
    Ok((
        quota,
        CalibrationReport {
            lambda: cal.lambda,
            samples,
            best,
        },
    ))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParetoPoint {
    pub quota: f64,
    pub final_rmse: f64,
    pub total_spikes: f64,
    pub mean_sparsity: f64,
}

/// One sweep point; simulation failures are kept rather than aborting the sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepEntry {
    pub quota: f64,
    pub result: Result<ParetoPoint>,
}

/// Runs one independent simulation per quota, from the reference's first frame
/// to its last, and scores the final frame. Entries are sorted by quota.
pub fn pareto_sweep(quotas: &[f64], setup: &SimSetup, reference: &TeacherTrajectory) -> Result<Vec<SweepEntry>> {
    let mut sorted = quotas.to_vec();
    for &q in &sorted {
        QuotaParam::new(q)?;
    }
    sorted.sort_by(|a, b| a.total_cmp(b));
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::InvalidParameter("sweep quotas must be distinct".into()));
    }
    let final_ref = &reference.last().expect("teacher has frames").state;
    let entries = sorted
        .par_iter()
        .map(|&quota| {
            let result = QuotaParam::new(quota).and_then(|q| {
                let (traj, stats) = setup.run_against(reference, q)?;
                let last = &traj.last().expect("run records its final frame").state;
                Ok(ParetoPoint {
                    quota,
                    final_rmse: rmse(last, final_ref)?,
                    total_spikes: stats.total_spikes,
                    mean_sparsity: stats.mean_sparsity,
                })
            });
            SweepEntry { quota, result }
        })
        .collect();
    Ok(entries)
}

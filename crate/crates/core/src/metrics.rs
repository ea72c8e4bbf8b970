//! Accuracy, conservation and energy-proxy metrics.

use crate::domain::{Dims, Grid, StateField};
use crate::dfp::Integrator;
use crate::error::{Error, Result};
use crate::sum::CompensatedSum;
use crate::trajectory::Trajectory;

fn check_pair(a: &StateField, b: &StateField) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::ShapeMismatch {
            expected: b.len(),
            found: a.len(),
        });
    }
    Ok(())
}

fn squared_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, r)| (p - r) * (p - r)).collect::<CompensatedSum>().value()
}

/// Root mean squared error over all cells.
pub fn rmse(pred: &StateField, reference: &StateField) -> Result<f64> {
    check_pair(pred, reference)?;
    if pred.is_empty() {
        return Ok(0.0);
    }
    Ok((squared_diff(pred.values(), reference.values()) / pred.len() as f64).sqrt())
}

/// Sum of squared differences, `‖pred − ref‖²₂`.
pub fn squared_error(pred: &StateField, reference: &StateField) -> Result<f64> {
    check_pair(pred, reference)?;
    Ok(squared_diff(pred.values(), reference.values()))
}

/// One-step relative L2 error `‖pred − ref‖₂ / ‖ref‖₂`.
pub fn functional_error(pred_next: &StateField, ref_next: &StateField) -> Result<f64> {
    check_pair(pred_next, ref_next)?;
    let norm = ref_next.values().iter().map(|r| r * r).collect::<CompensatedSum>().value();
    if norm == 0.0 {
        return Err(Error::ZeroReference);
    }
    Ok((squared_diff(pred_next.values(), ref_next.values()) / norm).sqrt())
}

/// `ΔV·Σu`, compensated, in storage order.
pub fn total_mass(state: &StateField, grid: &Grid) -> f64 {
    grid.cell_volume() * state.values().iter().copied().collect::<CompensatedSum>().value()
}

/// `max_t |M(t) − M(0)| / max(|M(0)|, 1e-30)`.
pub fn mass_drift(traj: &Trajectory, grid: &Grid) -> f64 {
    let Some(first) = traj.first() else {
        return 0.0;
    };
    let m0 = total_mass(&first.state, grid);
    let denom = m0.abs().max(1e-30);
    traj.frames
        .iter()
        .map(|f| (total_mass(&f.state, grid) - m0).abs() / denom)
        .fold(0.0, f64::max)
}

/// Per-event energy costs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyModel {
    pub joules_per_spike: f64,
    pub joules_per_flop: f64,
}

impl Default for EnergyModel {
    /// 0.067 pJ per synaptic operation, 0.4 pJ per FP16 FLOP.
    fn default() -> Self {
        Self {
            joules_per_spike: 0.067e-12,
            joules_per_flop: 0.4e-12,
        }
    }
}

impl EnergyModel {
    pub fn validate(&self) -> Result<()> {
        if self.joules_per_spike > 0.0 && self.joules_per_flop > 0.0 {
            Ok(())
        } else {
            Err(Error::InvalidParameter("energy costs must be positive".into()))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyReport {
    pub spikes: f64,
    pub flops: f64,
    pub spike_energy_j: f64,
    pub flop_energy_j: f64,
    /// spikes / flops.
    pub cost_ratio: f64,
    /// spike energy / flop energy.
    pub energy_ratio: f64,
}

pub fn energy_report(total_spikes: f64, flop_estimate: f64, model: &EnergyModel) -> EnergyReport {
    let spike_energy_j = total_spikes * model.joules_per_spike;
    let flop_energy_j = flop_estimate * model.joules_per_flop;
    let ratio = |a: f64, b: f64| if b > 0.0 { a / b } else { f64::NAN };
    EnergyReport {
        spikes: total_spikes,
        flops: flop_estimate,
        spike_energy_j,
        flop_energy_j,
        cost_ratio: ratio(total_spikes, flop_estimate),
        energy_ratio: ratio(spike_energy_j, flop_energy_j),
    }
}

/// FLOPs of one dense stencil stage per cell: per axis two face fluxes
/// (subtract, multiply, divide each) and the divergence (subtract, multiply),
/// plus the stage accumulation (multiply, add).
pub fn dense_stencil_flops_per_cell(dims: Dims) -> f64 {
    let per_axis = 2.0 * 3.0 + 2.0;
    per_axis * dims.count() as f64 + 2.0
}

/// Dense baseline for the same simulation: every cell, every stage, every step.
pub fn dense_stencil_flops(grid: &Grid, n_steps: usize, integrator: Integrator) -> f64 {
    dense_stencil_flops_per_cell(grid.dims())
        * grid.n_cells() as f64
        * integrator.stages() as f64
        * n_steps as f64
}

/// Dense network inference cost: one multiply-accumulate (2 FLOPs) per weight
/// per evaluation, for a fully connected stack with the given layer widths.
pub fn mlp_flops(layer_widths: &[usize], evaluations: f64) -> f64 {
    let macs: f64 = layer_widths.windows(2).map(|w| (w[0] * w[1]) as f64).sum();
    2.0 * macs * evaluations
}

//! Time-ordered sequences of state frames and teacher validation.

use std::ops::Deref;

use crate::domain::{AxisBoundary, Dims, Grid, StateField};
use crate::error::{Error, Result};

const TIME_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Solver,
    Analytic,
    Fdm,
    ExternalFile,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Solver => "solver",
            Provenance::Analytic => "analytic",
            Provenance::Fdm => "fdm",
            Provenance::ExternalFile => "external-file",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "solver" => Provenance::Solver,
            "analytic" => Provenance::Analytic,
            "fdm" => Provenance::Fdm,
            "external-file" => Provenance::ExternalFile,
            _ => return None,
        })
    }
}

/// Grid description carried alongside frames.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryMeta {
    pub dims: Dims,
    pub nx: usize,
    pub ny: usize,
    pub dx: f64,
    pub dy: f64,
    pub dt_frame: f64,
    pub boundary_x: AxisBoundary,
    pub boundary_y: AxisBoundary,
    pub equation: String,
}

impl TrajectoryMeta {
    pub fn for_grid(grid: &Grid, dt_frame: f64) -> Self {
        Self {
            dims: grid.dims(),
            nx: grid.nx(),
            ny: grid.ny(),
            dx: grid.dx(),
            dy: if grid.is_2d() { grid.dy() } else { 1.0 },
            dt_frame,
            boundary_x: grid.boundary_x(),
            boundary_y: grid.boundary_y(),
            equation: match grid.dims() {
                Dims::One => "heat1d".into(),
                Dims::Two => "diffusion2d".into(),
            },
        }
    }

    pub fn n_cells(&self) -> usize {
        self.nx * self.ny
    }

    pub fn matches(&self, grid: &Grid) -> bool {
        let close = |a: f64, b: f64| (a - b).abs() <= TIME_TOL * a.abs().max(b.abs());
        self.dims == grid.dims()
            && self.nx == grid.nx()
            && self.ny == grid.ny()
            && close(self.dx, grid.dx())
            && (self.dims == Dims::One || close(self.dy, grid.dy()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub t: f64,
    pub state: StateField,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub meta: TrajectoryMeta,
    pub frames: Vec<Frame>,
    pub provenance: Provenance,
}

impl Trajectory {
    pub fn new(meta: TrajectoryMeta, provenance: Provenance) -> Self {
        Self {
            meta,
            frames: Vec::new(),
            provenance,
        }
    }

    pub fn push(&mut self, t: f64, state: StateField) {
        self.frames.push(Frame { t, state });
        if self.frames.len() == 2 {
            self.meta.dt_frame = self.frames[1].t - self.frames[0].t;
        }
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn first(&self) -> Option<&Frame> {
        self.frames.first()
    }

    pub fn last(&self) -> Option<&Frame> {
        self.frames.last()
    }

    /// Frame whose time is within tolerance of `t`.
    pub fn frame_at(&self, t: f64) -> Option<&Frame> {
        let tol = TIME_TOL * t.abs().max(1.0);
        self.frames.iter().find(|f| (f.t - t).abs() <= tol)
    }

    pub fn times(&self) -> Vec<f64> {
        self.frames.iter().map(|f| f.t).collect()
    }
}

/// A trajectory validated as a distillation target for a particular grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TeacherTrajectory(Trajectory);

impl TeacherTrajectory {
    /// Checks strictly increasing times aligned to multiples of `grid.dt()`,
    /// and frame shapes matching the grid.
    pub fn new(traj: Trajectory, grid: &Grid) -> Result<Self> {
        if traj.frames.is_empty() {
            return Err(Error::InvalidParameter("teacher has no frames".into()));
        }
        if !traj.meta.matches(grid) {
            return Err(Error::InvalidParameter(format!(
                "teacher grid {}x{} (dx={}) does not match simulation grid {}x{} (dx={})",
                traj.meta.nx,
                traj.meta.ny,
                traj.meta.dx,
                grid.nx(),
                grid.ny(),
                grid.dx()
            )));
        }
        let dt = grid.dt();
        let mut prev = f64::NEG_INFINITY;
        for f in &traj.frames {
            f.state.check_shape(grid)?;
            if !(f.t > prev) {
                return Err(Error::InvalidParameter(format!(
                    "teacher times must be strictly increasing (t={} after {})",
                    f.t, prev
                )));
            }
            let k = f.t / dt;
            if (k - k.round()).abs() > TIME_TOL * k.abs().max(1.0) {
                return Err(Error::FrameMisalignment { t: f.t });
            }
            prev = f.t;
        }
        Ok(Self(traj))
    }

    /// Step index of every frame on the grid's timestep.
    pub fn step_indices(&self, dt: f64) -> Vec<usize> {
        self.0.frames.iter().map(|f| (f.t / dt).round() as usize).collect()
    }

    pub fn into_inner(self) -> Trajectory {
        self.0
    }
}

impl Deref for TeacherTrajectory {
    type Target = Trajectory;
    fn deref(&self) -> &Trajectory {
        &self.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{make_grid, GridSpec};

    fn grid() -> Grid {
        make_grid(GridSpec::one_d(1.0, 0.25, 0.01, AxisBoundary::insulated())).unwrap()
    }

    fn traj(times: &[f64]) -> Trajectory {
        let g = grid();
        let mut t = Trajectory::new(TrajectoryMeta::for_grid(&g, 0.0), Provenance::Analytic);
        for &time in times {
            t.push(time, StateField::zeros(&g));
        }
        t
    }

    #[test]
    fn accepts_aligned_increasing() {
        let t = TeacherTrajectory::new(traj(&[0.0, 0.02, 0.05]), &grid()).unwrap();
        assert_eq!(t.step_indices(0.01), vec![0, 2, 5]);
        assert!((t.meta.dt_frame - 0.02).abs() < 1e-15);
    }

    #[test]
    fn rejects_misaligned() {
        assert_eq!(
            TeacherTrajectory::new(traj(&[0.0, 0.015]), &grid()),
            Err(Error::FrameMisalignment { t: 0.015 })
        );
    }

    #[test]
    fn rejects_non_increasing() {
        assert!(TeacherTrajectory::new(traj(&[0.0, 0.02, 0.02]), &grid()).is_err());
        assert!(TeacherTrajectory::new(traj(&[0.03, 0.02]), &grid()).is_err());
    }

    #[test]
    fn rejects_other_grid() {
        let other = make_grid(GridSpec::one_d(1.0, 0.125, 0.01, AxisBoundary::insulated())).unwrap();
        assert!(TeacherTrajectory::new(traj(&[0.0]), &other).is_err());
    }

    #[test]
    fn frame_lookup() {
        let t = traj(&[0.0, 0.1, 0.2]);
        assert!(t.frame_at(0.1 + 1e-12).is_some());
        assert!(t.frame_at(0.15).is_none());
    }
}

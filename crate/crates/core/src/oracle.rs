//! Reference solutions: closed-form heat kernels and a fine-grid explicit
//! finite-difference solver.
//!
//! The finite-difference path shares no flux or divergence code with the
//! spiking solver, so it can serve as an independent cross-check.

use std::f64::consts::PI;

use crate::domain::{AxisBoundary, BoundaryEnd, Dims, Grid, StateField};
use crate::error::{Error, Result};
use crate::trajectory::{Provenance, Trajectory, TrajectoryMeta};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialCondition {
    /// `A·sin(mπx/L)`.
    Sine { mode: u32, amplitude: f64 },
    /// `A·exp(−(x − c)²/(2w²))`; extruded along y in 2D.
    Gaussian { center: f64, width: f64, amplitude: f64 },
    /// `low` for x < edge, `high` otherwise; extruded along y in 2D.
    Step { edge: f64, low: f64, high: f64 },
    /// `A·sin(mx·πx/Lx)·sin(my·πy/Ly)`.
    Product2D { mx: u32, my: u32, amplitude: f64 },
    /// Constant everywhere.
    Uniform { value: f64 },
}

impl InitialCondition {
    pub fn name(&self) -> &'static str {
        match self {
            InitialCondition::Sine { .. } => "sine",
            InitialCondition::Gaussian { .. } => "gaussian",
            InitialCondition::Step { .. } => "step",
            InitialCondition::Product2D { .. } => "product2d",
            InitialCondition::Uniform { .. } => "uniform",
        }
    }

    pub fn validate(&self, grid: &Grid) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        match *self {
            InitialCondition::Sine { amplitude, .. } if !amplitude.is_finite() => bad("sine amplitude".into()),
            InitialCondition::Gaussian { width, .. } if !(width > 0.0) => {
                bad(format!("gaussian width must be positive, got {width}"))
            }
            InitialCondition::Gaussian { center, amplitude, .. } if !(center.is_finite() && amplitude.is_finite()) => {
                bad("gaussian center/amplitude".into())
            }
            InitialCondition::Step { edge, .. } if !(edge > 0.0 && edge < grid.lx()) => {
                bad(format!("step edge {edge} lies outside (0, {})", grid.lx()))
            }
            InitialCondition::Step { low, high, .. } if !(low.is_finite() && high.is_finite()) => {
                bad("step levels".into())
            }
            InitialCondition::Product2D { .. } if !grid.is_2d() => {
                Err(Error::UnsupportedIc("product2d requires a 2D grid".into()))
            }
            InitialCondition::Product2D { amplitude, .. } if !amplitude.is_finite() => bad("product amplitude".into()),
            InitialCondition::Uniform { value } if !value.is_finite() => bad("uniform value".into()),
            _ => Ok(()),
        }
    }

    pub fn eval(&self, x: f64, y: f64, lx: f64, ly: f64) -> f64 {
        match *self {
            InitialCondition::Sine { mode, amplitude } => amplitude * (mode as f64 * PI * x / lx).sin(),
            InitialCondition::Gaussian { center, width, amplitude } => {
                let d = (x - center) / width;
                amplitude * (-0.5 * d * d).exp()
            }
            InitialCondition::Step { edge, low, high } => {
                if x < edge {
                    low
                } else {
                    high
                }
            }
            InitialCondition::Product2D { mx, my, amplitude } => {
                amplitude * (mx as f64 * PI * x / lx).sin() * (my as f64 * PI * y / ly).sin()
            }
            InitialCondition::Uniform { value } => value,
        }
    }

    /// Samples at cell centres.
    pub fn sample(&self, grid: &Grid) -> Result<StateField> {
        self.validate(grid)?;
        let (lx, ly) = (grid.lx(), grid.ly());
        StateField::from_fn(grid, |x, y| self.eval(x, y, lx, ly))
    }
}

fn is_dirichlet_zero(b: AxisBoundary) -> bool {
    b.lower == BoundaryEnd::Dirichlet(0.0) && b.upper == BoundaryEnd::Dirichlet(0.0)
}

/// `A·sin(mπx/L)·exp(−κ(mπ/L)²t)` at cell centres.
pub fn heat1d_analytic(ic: &InitialCondition, kappa: f64, grid: &Grid, t: f64) -> Result<StateField> {
    let InitialCondition::Sine { mode, amplitude } = *ic else {
        return Err(Error::UnsupportedIc(format!("analytic 1D solution needs a sine, got {}", ic.name())));
    };
    if grid.is_2d() {
        return Err(Error::UnsupportedIc("heat1d_analytic on a 2D grid".into()));
    }
    if !is_dirichlet_zero(grid.boundary_x()) {
        return Err(Error::InvalidParameter("analytic sine solution requires dirichlet-0 walls".into()));
    }
    let k = mode as f64 * PI / grid.lx();
    let decay = (-kappa * k * k * t).exp();
    StateField::from_fn(grid, |x, _| amplitude * (k * x).sin() * decay)
}

/// Separable product-sine solution on a rectangle with Dirichlet-0 walls.
pub fn heat2d_analytic(ic: &InitialCondition, kappa: f64, grid: &Grid, t: f64) -> Result<StateField> {
    let InitialCondition::Product2D { mx, my, amplitude } = *ic else {
        return Err(Error::UnsupportedIc(format!("analytic 2D solution needs product2d, got {}", ic.name())));
    };
    if !grid.is_2d() {
        return Err(Error::UnsupportedIc("heat2d_analytic on a 1D grid".into()));
    }
    if !(is_dirichlet_zero(grid.boundary_x()) && is_dirichlet_zero(grid.boundary_y())) {
        return Err(Error::InvalidParameter("analytic product solution requires dirichlet-0 walls".into()));
    }
    let kx = mx as f64 * PI / grid.lx();
    let ky = my as f64 * PI / grid.ly();
    let decay = (-kappa * (kx * kx + ky * ky) * t).exp();
    StateField::from_fn(grid, |x, y| amplitude * (kx * x).sin() * (ky * y).sin() * decay)
}

/// Closed-form solution for whichever dimensionality the grid has.
pub fn analytic(ic: &InitialCondition, kappa: f64, grid: &Grid, t: f64) -> Result<StateField> {
    match grid.dims() {
        Dims::One => heat1d_analytic(ic, kappa, grid, t),
        Dims::Two => heat2d_analytic(ic, kappa, grid, t),
    }
}

/// Number of grid steps to reach `t_end`; must be integral.
pub fn steps_to(t_end: f64, dt: f64) -> Result<usize> {
    if !(t_end >= 0.0 && t_end.is_finite()) {
        return Err(Error::InvalidParameter(format!("t_end must be non-negative, got {t_end}")));
    }
    let k = t_end / dt;
    let kr = k.round();
    if (k - kr).abs() > 1e-9 * k.max(1.0) {
        return Err(Error::InvalidParameter(format!(
            "t_end/dt = {k} is not integral (t_end={t_end}, dt={dt})"
        )));
    }
    Ok(kr as usize)
}

/// Steps recorded for a run of `n` steps at `stride`, always including 0 and `n`.
pub fn strided_steps(n: usize, stride: usize) -> Vec<usize> {
    let stride = stride.max(1);
    let mut v: Vec<usize> = (0..=n).step_by(stride).collect();
    if v.last() != Some(&n) {
        v.push(n);
    }
    v
}

/// Analytic trajectory at the given step indices.
pub fn analytic_trajectory(ic: &InitialCondition, kappa: f64, grid: &Grid, steps: &[usize]) -> Result<Trajectory> {
    let mut traj = Trajectory::new(TrajectoryMeta::for_grid(grid, 0.0), Provenance::Analytic);
    for &k in steps {
        let t = k as f64 * grid.dt();
        traj.push(t, analytic(ic, kappa, grid, t)?);
    }
    Ok(traj)
}

/// Explicit FTCS on a cell-centred grid. Walls sit half a cell from the
/// outermost centres.
struct FineSolver {
    nx: usize,
    ny: usize,
    two_d: bool,
    lam_x: f64,
    lam_y: f64,
    bx: AxisBoundary,
    by: AxisBoundary,
    u: Vec<f64>,
    next: Vec<f64>,
}

/// One axis' second difference for a cell with value `c` and neighbours
/// `lo`/`hi` (`None` at a non-periodic wall).
#[inline]
fn axis_term(b: AxisBoundary, c: f64, lo: Option<f64>, hi: Option<f64>) -> f64 {
    let lower = match (lo, b.lower) {
        (Some(v), _) => v - c,
        (None, BoundaryEnd::Dirichlet(g)) => 2.0 * (g - c),
        (None, BoundaryEnd::Insulated) => 0.0,
        (None, BoundaryEnd::Periodic) => unreachable!("periodic neighbours are always provided"),
    };
    let upper = match (hi, b.upper) {
        (Some(v), _) => v - c,
        (None, BoundaryEnd::Dirichlet(g)) => 2.0 * (g - c),
        (None, BoundaryEnd::Insulated) => 0.0,
        (None, BoundaryEnd::Periodic) => unreachable!("periodic neighbours are always provided"),
    };
    lower + upper
}

impl FineSolver {
    fn advance(&mut self) {
        let (nx, ny) = (self.nx, self.ny);
        let px = self.bx.is_periodic();
        let py = self.by.is_periodic();
        for j in 0..ny {
            for i in 0..nx {
                let at = |ii: usize, jj: usize| self.u[ii + nx * jj];
                let c = at(i, j);
                let left = if i > 0 { Some(at(i - 1, j)) } else if px { Some(at(nx - 1, j)) } else { None };
                let right = if i + 1 < nx { Some(at(i + 1, j)) } else if px { Some(at(0, j)) } else { None };
                let mut du = self.lam_x * axis_term(self.bx, c, left, right);
                if self.two_d {
                    let down = if j > 0 { Some(at(i, j - 1)) } else if py { Some(at(i, ny - 1)) } else { None };
                    let up = if j + 1 < ny { Some(at(i, j + 1)) } else if py { Some(at(i, 0)) } else { None };
                    du += self.lam_y * axis_term(self.by, c, down, up);
                }
                self.next[i + nx * j] = c + du;
            }
        }
        std::mem::swap(&mut self.u, &mut self.next);
    }

    /// Block average back onto a grid `r` times coarser per axis.
    fn restrict(&self, r: usize, coarse: &Grid) -> StateField {
        let (cnx, cny) = (coarse.nx(), coarse.ny());
        let ry = if self.two_d { r } else { 1 };
        let inv = 1.0 / (r * ry) as f64;
        let mut out = Vec::with_capacity(cnx * cny);
        for cj in 0..cny {
            for ci in 0..cnx {
                let mut s = 0.0;
                for fj in cj * ry..(cj + 1) * ry {
                    for fi in ci * r..(ci + 1) * r {
                        s += self.u[fi + self.nx * fj];
                    }
                }
                out.push(s * inv);
            }
        }
        StateField::from_vec_unchecked(out)
    }
}

/// Fine-grid explicit finite-difference reference, restricted to `coarse`.
///
/// Runs on a grid refined `refinement`× per axis with `refinement²` substeps
/// per coarse step, and records a frame every `frame_stride` coarse steps
/// (plus the final step).
pub fn fdm_reference(
    ic: &InitialCondition,
    kappa: f64,
    coarse: &Grid,
    t_end: f64,
    refinement: usize,
    frame_stride: usize,
) -> Result<Trajectory> {
    if refinement < 2 {
        return Err(Error::InvalidParameter(format!("refinement must be >= 2, got {refinement}")));
    }
    if !(kappa > 0.0 && kappa.is_finite()) {
        return Err(Error::InvalidParameter(format!("kappa must be positive, got {kappa}")));
    }
    ic.validate(coarse)?;
    let n_coarse = steps_to(t_end, coarse.dt())?;
    let r = refinement;
    let substeps = r * r;
    let hx = coarse.dx() / r as f64;
    let hy = coarse.dy() / r as f64;
    let dt = coarse.dt() / substeps as f64;
    let two_d = coarse.is_2d();

    let inv = if two_d { 1.0 / (hx * hx) + 1.0 / (hy * hy) } else { 1.0 / (hx * hx) };
    let max_dt = 1.0 / (2.0 * kappa * inv);
    if dt > max_dt {
        return Err(Error::CflViolation { dt, max_dt });
    }

    let nx = coarse.nx() * r;
    let ny = if two_d { coarse.ny() * r } else { 1 };
    let (lx, ly) = (coarse.lx(), coarse.ly());
    let mut u = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        let y = if two_d { (j as f64 + 0.5) * hy } else { 0.0 };
        for i in 0..nx {
            u.push(ic.eval((i as f64 + 0.5) * hx, y, lx, ly));
        }
    }
    let mut fine = FineSolver {
        nx,
        ny,
        two_d,
        lam_x: kappa * dt / (hx * hx),
        lam_y: kappa * dt / (hy * hy),
        bx: coarse.boundary_x(),
        by: coarse.boundary_y(),
        next: vec![0.0; u.len()],
        u,
    };

    let record = strided_steps(n_coarse, frame_stride);
    let mut record_iter = record.iter().peekable();
    let mut traj = Trajectory::new(TrajectoryMeta::for_grid(coarse, 0.0), Provenance::Fdm);
    for k in 0..=n_coarse {
        if k > 0 {
            for _ in 0..substeps {
                fine.advance();
            }
        }
        if record_iter.peek() == Some(&&k) {
            traj.push(k as f64 * coarse.dt(), fine.restrict(r, coarse));
            record_iter.next();
        }
    }
    if traj.frames.iter().any(|f| !f.state.is_finite()) {
        return Err(Error::NonFiniteState { step: n_coarse });
    }
    Ok(traj)
}

/// Discrete total variation of a 1D profile, including the jumps to Dirichlet
/// wall values.
pub fn total_variation(state: &StateField, boundary: AxisBoundary) -> f64 {
    let u = state.values();
    let mut tv: f64 = u.windows(2).map(|w| (w[1] - w[0]).abs()).sum();
    if let (BoundaryEnd::Dirichlet(g), Some(first)) = (boundary.lower, u.first()) {
        tv += (first - g).abs();
    }
    if let (BoundaryEnd::Dirichlet(g), Some(last)) = (boundary.upper, u.last()) {
        tv += (g - last).abs();
    }
    if boundary.is_periodic() {
        if let (Some(first), Some(last)) = (u.first(), u.last()) {
            tv += (first - last).abs();
        }
    }
    tv
}

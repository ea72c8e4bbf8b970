//! Grid geometry, field containers and the conservation ledger.
//!
//! Cells are indexed row-major with x varying fastest: cell `(i, j)` lives at
//! `i + nx * j`. Faces include the boundary faces. X-face `(i, j)` is the left
//! face of cell `(i, j)` and lives at `i + (nx + 1) * j` for `i in 0..=nx`;
//! y-face `(i, j)` is the bottom face of cell `(i, j)` and lives at `i + nx * j`
//! for `j in 0..=ny`. Positive flux points in +x (+y).

use crate::error::{Error, Result};
use crate::sum::CompensatedSum;

const INTEGRAL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dims {
    One,
    Two,
}

impl Dims {
    pub fn count(self) -> usize {
        match self {
            Dims::One => 1,
            Dims::Two => 2,
        }
    }
}

/// Condition applied at one end of an axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BoundaryEnd {
    /// Fixed value at the wall.
    Dirichlet(f64),
    /// Zero flux through the wall.
    Insulated,
    /// Wraps to the opposite end; must be paired.
    Periodic,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisBoundary {
    pub lower: BoundaryEnd,
    pub upper: BoundaryEnd,
}

impl AxisBoundary {
    pub const fn dirichlet(lower: f64, upper: f64) -> Self {
        Self {
            lower: BoundaryEnd::Dirichlet(lower),
            upper: BoundaryEnd::Dirichlet(upper),
        }
    }

    pub const fn insulated() -> Self {
        Self {
            lower: BoundaryEnd::Insulated,
            upper: BoundaryEnd::Insulated,
        }
    }

    pub const fn periodic() -> Self {
        Self {
            lower: BoundaryEnd::Periodic,
            upper: BoundaryEnd::Periodic,
        }
    }

    pub fn is_periodic(&self) -> bool {
        matches!(self.lower, BoundaryEnd::Periodic)
    }

    /// True when no quantity can cross this axis' walls.
    pub fn is_closed(&self) -> bool {
        self.is_periodic()
            || (self.lower == BoundaryEnd::Insulated && self.upper == BoundaryEnd::Insulated)
    }

    fn validate(&self, axis: char) -> Result<()> {
        let lp = matches!(self.lower, BoundaryEnd::Periodic);
        let up = matches!(self.upper, BoundaryEnd::Periodic);
        if lp != up {
            return Err(Error::PeriodicMismatch { axis });
        }
        for end in [self.lower, self.upper] {
            if let BoundaryEnd::Dirichlet(v) = end {
                if !v.is_finite() {
                    return Err(Error::InvalidParameter(format!(
                        "{axis}: dirichlet value {v} is not finite"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Unvalidated description of the discretized domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub dims: Dims,
    pub lx: f64,
    pub ly: f64,
    pub dx: f64,
    pub dy: f64,
    pub dt: f64,
    pub boundary_x: AxisBoundary,
    pub boundary_y: AxisBoundary,
}

impl GridSpec {
    pub fn one_d(lx: f64, dx: f64, dt: f64, boundary: AxisBoundary) -> Self {
        Self {
            dims: Dims::One,
            lx,
            ly: 1.0,
            dx,
            dy: 1.0,
            dt,
            boundary_x: boundary,
            boundary_y: AxisBoundary::insulated(),
        }
    }

    pub fn two_d(
        lx: f64,
        ly: f64,
        dx: f64,
        dy: f64,
        dt: f64,
        boundary_x: AxisBoundary,
        boundary_y: AxisBoundary,
    ) -> Self {
        Self {
            dims: Dims::Two,
            lx,
            ly,
            dx,
            dy,
            dt,
            boundary_x,
            boundary_y,
        }
    }
}

/// Validated grid. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    spec: GridSpec,
    nx: usize,
    ny: usize,
}

fn cell_count(axis: char, length: f64, step: f64) -> Result<usize> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "{axis}: cell size must be positive, got {step}"
        )));
    }
    if !(length > 0.0 && length.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "{axis}: domain length must be positive, got {length}"
        )));
    }
    let ratio = length / step;
    let n = ratio.round();
    if (ratio - n).abs() > INTEGRAL_TOL * ratio {
        return Err(Error::NonIntegralGrid { axis, ratio });
    }
    let n = n as usize;
    if n < 3 {
        return Err(Error::DegenerateGrid { axis, cells: n });
    }
    Ok(n)
}

/// Builds a [`Grid`] from a spec, validating cell counts, spacing and boundaries.
pub fn make_grid(spec: GridSpec) -> Result<Grid> {
    if !(spec.dt > 0.0 && spec.dt.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "dt must be positive, got {}",
            spec.dt
        )));
    }
    let nx = cell_count('x', spec.lx, spec.dx)?;
    spec.boundary_x.validate('x')?;
    let ny = match spec.dims {
        Dims::One => 1,
        Dims::Two => {
            spec.boundary_y.validate('y')?;
            cell_count('y', spec.ly, spec.dy)?
        }
    };
    Ok(Grid { spec, nx, ny })
}

impl Grid {
    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }
    pub fn dims(&self) -> Dims {
        self.spec.dims
    }
    pub fn nx(&self) -> usize {
        self.nx
    }
    /// 1 in 1D.
    pub fn ny(&self) -> usize {
        self.ny
    }
    pub fn dx(&self) -> f64 {
        self.spec.dx
    }
    pub fn dy(&self) -> f64 {
        self.spec.dy
    }
    pub fn dt(&self) -> f64 {
        self.spec.dt
    }
    pub fn lx(&self) -> f64 {
        self.spec.lx
    }
    pub fn ly(&self) -> f64 {
        self.spec.ly
    }
    pub fn boundary_x(&self) -> AxisBoundary {
        self.spec.boundary_x
    }
    pub fn boundary_y(&self) -> AxisBoundary {
        self.spec.boundary_y
    }
    pub fn is_2d(&self) -> bool {
        self.spec.dims == Dims::Two
    }

    pub fn n_cells(&self) -> usize {
        self.nx * self.ny
    }

    /// ΔV: dx in 1D, dx·dy in 2D.
    pub fn cell_volume(&self) -> f64 {
        match self.spec.dims {
            Dims::One => self.spec.dx,
            Dims::Two => self.spec.dx * self.spec.dy,
        }
    }

    /// Wall area seen by an x-face: 1 in 1D, dy in 2D.
    pub fn x_face_area(&self) -> f64 {
        match self.spec.dims {
            Dims::One => 1.0,
            Dims::Two => self.spec.dy,
        }
    }

    pub fn y_face_area(&self) -> f64 {
        self.spec.dx
    }

    pub fn n_x_faces(&self) -> usize {
        (self.nx + 1) * self.ny
    }

    /// 0 in 1D.
    pub fn n_y_faces(&self) -> usize {
        match self.spec.dims {
            Dims::One => 0,
            Dims::Two => self.nx * (self.ny + 1),
        }
    }

    pub fn cell(&self, i: usize, j: usize) -> usize {
        i + self.nx * j
    }

    pub fn x_face(&self, i: usize, j: usize) -> usize {
        i + (self.nx + 1) * j
    }

    pub fn y_face(&self, i: usize, j: usize) -> usize {
        i + self.nx * j
    }

    /// Cell-centre x coordinate of column `i`.
    pub fn x_center(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.spec.dx
    }

    pub fn y_center(&self, j: usize) -> f64 {
        (j as f64 + 0.5) * self.spec.dy
    }

    /// Same grid with a different timestep.
    pub fn with_dt(&self, dt: f64) -> Result<Grid> {
        make_grid(GridSpec { dt, ..self.spec })
    }

    /// True when the grids describe the same cells (timestep may differ).
    pub fn same_cells(&self, other: &Grid) -> bool {
        self.spec.dims == other.spec.dims
            && self.nx == other.nx
            && self.ny == other.ny
            && rel_eq(self.spec.dx, other.spec.dx)
            && (self.spec.dims == Dims::One || rel_eq(self.spec.dy, other.spec.dy))
    }
}

fn rel_eq(a: f64, b: f64) -> bool {
    (a - b).abs() <= INTEGRAL_TOL * a.abs().max(b.abs())
}

/// Explicit-diffusion stability bound on the timestep.
pub fn cfl_max_dt(grid: &Grid, kappa_max: f64) -> f64 {
    match grid.dims() {
        Dims::One => grid.dx() * grid.dx() / (2.0 * kappa_max),
        Dims::Two => {
            let inv = 1.0 / (grid.dx() * grid.dx()) + 1.0 / (grid.dy() * grid.dy());
            1.0 / (2.0 * kappa_max * inv)
        }
    }
}

/// Cell-averaged quantity, one value per control volume (the membrane potentials).
#[derive(Debug, Clone, PartialEq)]
pub struct StateField {
    values: Vec<f64>,
}

impl StateField {
    pub fn new(grid: &Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_cells() {
            return Err(Error::ShapeMismatch {
                expected: grid.n_cells(),
                found: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteState { step: 0 });
        }
        Ok(Self { values })
    }

    /// Wraps values without validation; callers guarantee shape.
    pub(crate) fn from_vec_unchecked(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn zeros(grid: &Grid) -> Self {
        Self {
            values: vec![0.0; grid.n_cells()],
        }
    }

    pub fn uniform(grid: &Grid, value: f64) -> Self {
        Self {
            values: vec![value; grid.n_cells()],
        }
    }

    pub fn from_fn(grid: &Grid, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let mut values = Vec::with_capacity(grid.n_cells());
        for j in 0..grid.ny() {
            let y = if grid.is_2d() { grid.y_center(j) } else { 0.0 };
            for i in 0..grid.nx() {
                values.push(f(grid.x_center(i), y));
            }
        }
        Self::new(grid, values)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub(crate) fn check_shape(&self, grid: &Grid) -> Result<()> {
        if self.values.len() != grid.n_cells() {
            return Err(Error::ShapeMismatch {
                expected: grid.n_cells(),
                found: self.values.len(),
            });
        }
        Ok(())
    }
}

/// Optional relaxation of Eq.-1 style leaky membranes toward a rest value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Leak {
    pub tau_m: f64,
    pub v_rest: f64,
}

/// Per-neuron dynamics parameters. The default is pure conservative transport.
#[derive(Debug, Clone, PartialEq)]
pub struct NeuronParams {
    pub leak: Option<Leak>,
    /// Gain applied to the synaptic (flux) current.
    pub r_m: f64,
    /// Per-cell source rate; `None` means zero everywhere.
    pub source: Option<Vec<f64>>,
}

impl Default for NeuronParams {
    fn default() -> Self {
        Self {
            leak: None,
            r_m: 1.0,
            source: None,
        }
    }
}

impl NeuronParams {
    pub fn validate(&self, grid: &Grid) -> Result<()> {
        if let Some(leak) = self.leak {
            if !(leak.tau_m > 0.0 && leak.tau_m.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "tau_m must be positive, got {}",
                    leak.tau_m
                )));
            }
            if !leak.v_rest.is_finite() {
                return Err(Error::InvalidParameter("v_rest is not finite".into()));
            }
        }
        if !self.r_m.is_finite() {
            return Err(Error::InvalidParameter("r_m is not finite".into()));
        }
        if let Some(src) = &self.source {
            if src.len() != grid.n_cells() {
                return Err(Error::ShapeMismatch {
                    expected: grid.n_cells(),
                    found: src.len(),
                });
            }
            if src.iter().any(|s| !s.is_finite()) {
                return Err(Error::InvalidParameter("source is not finite".into()));
            }
        }
        Ok(())
    }

    /// True when the dynamics are pure flux exchange.
    pub fn is_conservative(&self) -> bool {
        self.leak.is_none() && self.source.as_ref().is_none_or(|s| s.iter().all(|&v| v == 0.0))
    }
}

/// Per-face continuous (or reconstructed) flux.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceField {
    pub x: Vec<f64>,
    /// Empty in 1D.
    pub y: Vec<f64>,
}

impl FaceField {
    pub fn zeros(grid: &Grid) -> Self {
        Self {
            x: vec![0.0; grid.n_x_faces()],
            y: vec![0.0; grid.n_y_faces()],
        }
    }

    pub fn len(&self) -> usize {
        self.x.len() + self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.x.iter().chain(self.y.iter())
    }

    pub(crate) fn check_shape(&self, grid: &Grid) -> Result<()> {
        check_faces(grid, self.x.len(), self.y.len())
    }
}

fn check_faces(grid: &Grid, nx: usize, ny: usize) -> Result<()> {
    if nx != grid.n_x_faces() {
        return Err(Error::ShapeMismatch {
            expected: grid.n_x_faces(),
            found: nx,
        });
    }
    if ny != grid.n_y_faces() {
        return Err(Error::ShapeMismatch {
            expected: grid.n_y_faces(),
            found: ny,
        });
    }
    Ok(())
}

/// Signed spike counts per face; `n > 0` sends `n` quanta in the + direction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpikeField {
    pub x: Vec<i64>,
    pub y: Vec<i64>,
}

impl SpikeField {
    pub fn zeros(grid: &Grid) -> Self {
        Self {
            x: vec![0; grid.n_x_faces()],
            y: vec![0; grid.n_y_faces()],
        }
    }

    pub fn len(&self) -> usize {
        self.x.len() + self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = &i64> {
        self.x.iter().chain(self.y.iter())
    }

    /// Quanta sent in the + direction.
    pub fn n_plus(&self) -> u64 {
        self.iter().filter(|&&n| n > 0).map(|&n| n.unsigned_abs()).sum()
    }

    /// Quanta sent in the − direction.
    pub fn n_minus(&self) -> u64 {
        self.iter().filter(|&&n| n < 0).map(|&n| n.unsigned_abs()).sum()
    }

    pub(crate) fn check_shape(&self, grid: &Grid) -> Result<()> {
        check_faces(grid, self.x.len(), self.y.len())
    }
}

/// Flux packet size carried by one spike.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct QuotaParam(f64);

impl QuotaParam {
    pub fn new(quota: f64) -> Result<Self> {
        if quota > 0.0 && quota.is_finite() {
            Ok(Self(quota))
        } else {
            Err(Error::NonPositiveQuota(quota))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

/// Running account of every way total mass may change.
///
/// All accumulators are in units of u·ΔV and already include the timestep.
#[derive(Debug, Clone, PartialEq)]
pub struct ConservationLedger {
    pub mass_initial: f64,
    pub boundary_in: CompensatedSum,
    pub boundary_out: CompensatedSum,
    pub source_accum: CompensatedSum,
    pub leak_accum: CompensatedSum,
}

impl ConservationLedger {
    pub fn new(mass_initial: f64) -> Self {
        Self {
            mass_initial,
            boundary_in: CompensatedSum::new(),
            boundary_out: CompensatedSum::new(),
            source_accum: CompensatedSum::new(),
            leak_accum: CompensatedSum::new(),
        }
    }

    /// Posts mass that crossed the walls during a step (positive = inflow).
    pub fn post_boundary(&mut self, net: f64) {
        if net > 0.0 {
            self.boundary_in.add(net);
        } else if net < 0.0 {
            self.boundary_out.add(-net);
        }
    }

    pub fn post_source(&mut self, amount: f64) {
        if amount != 0.0 {
            self.source_accum.add(amount);
        }
    }

    pub fn post_leak(&mut self, amount: f64) {
        if amount != 0.0 {
            self.leak_accum.add(amount);
        }
    }

    pub fn boundary_net(&self) -> f64 {
        self.boundary_in.value() - self.boundary_out.value()
    }

    /// Total mass the ledger says the domain should hold.
    pub fn expected_mass(&self) -> f64 {
        let mut acc = CompensatedSum::new();
        acc.add(self.mass_initial);
        acc.add(self.boundary_in.value());
        acc.add(-self.boundary_out.value());
        acc.add(self.source_accum.value());
        acc.add(self.leak_accum.value());
        acc.value()
    }

    /// |M − M_expected| relative to max(|M(0)|, 1e-30).
    pub fn closure_residual(&self, mass_now: f64) -> f64 {
        (mass_now - self.expected_mass()).abs() / self.mass_initial.abs().max(1e-30)
    }

    pub fn is_finite(&self) -> bool {
        self.mass_initial.is_finite()
            && self.boundary_in.is_finite()
            && self.boundary_out.is_finite()
            && self.source_accum.is_finite()
            && self.leak_accum.is_finite()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dirichlet0() -> AxisBoundary {
        AxisBoundary::dirichlet(0.0, 0.0)
    }

    #[test]
    fn grid_1d_counts() {
        let g = make_grid(GridSpec::one_d(1.0, 0.01, 1e-4, dirichlet0())).unwrap();
        assert_eq!(g.nx(), 100);
        assert_eq!(g.n_x_faces(), 101);
        assert_eq!(g.n_y_faces(), 0);
        assert_eq!(g.cell_volume(), 0.01);
    }

    #[test]
    fn grid_2d_counts() {
        let h = 1.0 / 64.0;
        let g = make_grid(GridSpec::two_d(1.0, 1.0, h, h, 1e-4, dirichlet0(), dirichlet0())).unwrap();
        assert_eq!((g.nx(), g.ny()), (64, 64));
        assert_eq!(g.n_x_faces(), 65 * 64);
        assert_eq!(g.n_y_faces(), 64 * 65);
        assert_eq!(g.cell_volume(), h * h);
    }

    #[test]
    fn non_integral_rejected() {
        let err = make_grid(GridSpec::one_d(1.0, 0.013, 1e-4, dirichlet0())).unwrap_err();
        assert!(matches!(err, Error::NonIntegralGrid { axis: 'x', .. }));
    }

    #[test]
    fn degenerate_rejected() {
        let err = make_grid(GridSpec::one_d(1.0, 0.5, 1e-4, dirichlet0())).unwrap_err();
        assert_eq!(err, Error::DegenerateGrid { axis: 'x', cells: 2 });
    }

    #[test]
    fn bad_timestep_rejected() {
        assert!(make_grid(GridSpec::one_d(1.0, 0.1, 0.0, dirichlet0())).is_err());
        assert!(make_grid(GridSpec::one_d(1.0, 0.1, -1.0, dirichlet0())).is_err());
    }

    #[test]
    fn half_periodic_rejected() {
        let b = AxisBoundary {
            lower: BoundaryEnd::Periodic,
            upper: BoundaryEnd::Insulated,
        };
        let err = make_grid(GridSpec::one_d(1.0, 0.1, 1e-4, b)).unwrap_err();
        assert_eq!(err, Error::PeriodicMismatch { axis: 'x' });
    }

    #[test]
    fn grid_is_pure() {
        let s = GridSpec::one_d(2.0, 0.05, 1e-4, AxisBoundary::periodic());
        assert_eq!(make_grid(s).unwrap(), make_grid(s).unwrap());
    }

    #[test]
    fn cfl_bounds() {
        let g = make_grid(GridSpec::one_d(1.0, 0.01, 1e-4, dirichlet0())).unwrap();
        assert!((cfl_max_dt(&g, 0.1) - 5.0e-4).abs() < 1e-18);

        let h = 1.0 / 64.0;
        let g2 = make_grid(GridSpec::two_d(1.0, 1.0, h, h, 1e-4, dirichlet0(), dirichlet0())).unwrap();
        let expected = 1.0 / (2.0 * 0.1 * 2.0 * 64.0 * 64.0);
        assert!((cfl_max_dt(&g2, 0.1) - expected).abs() < 1e-18);
        assert!((expected - 6.1035e-4).abs() < 1e-8);
    }

    #[test]
    fn cfl_monotone() {
        let g1 = make_grid(GridSpec::one_d(1.0, 0.01, 1e-4, dirichlet0())).unwrap();
        let g2 = make_grid(GridSpec::one_d(1.0, 0.02, 1e-4, dirichlet0())).unwrap();
        let mut prev = f64::INFINITY;
        for k in [0.01, 0.1, 1.0, 10.0] {
            let b = cfl_max_dt(&g1, k);
            assert!(b < prev);
            assert!(cfl_max_dt(&g2, k) > b);
            prev = b;
        }
    }

    #[test]
    fn quota_validation() {
        assert!(QuotaParam::new(0.1).is_ok());
        assert_eq!(QuotaParam::new(0.0), Err(Error::NonPositiveQuota(0.0)));
        assert!(QuotaParam::new(-1.0).is_err());
        assert!(QuotaParam::new(f64::NAN).is_err());
        assert!(QuotaParam::new(f64::INFINITY).is_err());
    }

    #[test]
    fn state_validation() {
        let g = make_grid(GridSpec::one_d(1.0, 0.25, 1e-4, dirichlet0())).unwrap();
        assert!(StateField::new(&g, vec![0.0; 4]).is_ok());
        assert_eq!(
            StateField::new(&g, vec![0.0; 3]),
            Err(Error::ShapeMismatch { expected: 4, found: 3 })
        );
        assert!(StateField::new(&g, vec![0.0, f64::NAN, 0.0, 0.0]).is_err());
    }

    #[test]
    fn spike_counts_partition() {
        let s = SpikeField {
            x: vec![3, -2, 0, 5],
            y: vec![-1],
        };
        assert_eq!(s.n_plus(), 8);
        assert_eq!(s.n_minus(), 3);
    }

    #[test]
    fn ledger_closed_system_stays_zero() {
        let mut l = ConservationLedger::new(1.0);
        l.post_boundary(0.0);
        l.post_source(0.0);
        assert_eq!(l.boundary_in.value(), 0.0);
        assert_eq!(l.boundary_out.value(), 0.0);
        assert_eq!(l.source_accum.value(), 0.0);
        assert_eq!(l.expected_mass(), 1.0);
    }

    #[test]
    fn ledger_tracks_flows() {
        let mut l = ConservationLedger::new(2.0);
        l.post_boundary(0.5);
        l.post_boundary(-0.25);
        l.post_source(0.1);
        l.post_leak(-0.05);
        assert!((l.expected_mass() - 2.3).abs() < 1e-15);
        assert!(l.closure_residual(2.3) < 1e-15);
    }
}

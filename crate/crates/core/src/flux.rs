//! Physical flux calculator: state → continuous interfacial fluxes `F = −K(u)·∇u`.

use crate::domain::{AxisBoundary, BoundaryEnd, FaceField, Grid, StateField};
use crate::error::{Error, Result};

/// Scalar diffusivity law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Constitutive {
    Constant { kappa: f64 },
    /// `K(u) = k0·|u|^exponent`.
    PowerLaw { k0: f64, exponent: f64 },
}

impl Constitutive {
    pub fn constant(kappa: f64) -> Self {
        Constitutive::Constant { kappa }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Constitutive::Constant { kappa } if kappa > 0.0 && kappa.is_finite() => Ok(()),
            Constitutive::Constant { kappa } => Err(Error::InvalidParameter(format!(
                "kappa must be positive, got {kappa}"
            ))),
            Constitutive::PowerLaw { k0, exponent }
                if k0 > 0.0 && k0.is_finite() && exponent >= 0.0 && exponent.is_finite() =>
            {
                Ok(())
            }
            Constitutive::PowerLaw { k0, exponent } => Err(Error::InvalidParameter(format!(
                "power law needs k0 > 0 and exponent >= 0, got k0={k0}, exponent={exponent}"
            ))),
        }
    }

    #[inline]
    pub fn diffusivity(&self, u: f64) -> f64 {
        match *self {
            Constitutive::Constant { kappa } => kappa,
            Constitutive::PowerLaw { k0, exponent } => {
                if exponent == 0.0 {
                    k0
                } else {
                    k0 * u.abs().powf(exponent)
                }
            }
        }
    }

    /// Upper bound of K over every face value reachable from `state`
    /// (face means never exceed the largest |u|, wall values included).
    pub fn max_diffusivity(&self, state: &StateField, grid: &Grid) -> f64 {
        match *self {
            Constitutive::Constant { kappa } => kappa,
            Constitutive::PowerLaw { .. } => {
                let mut umax = state.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
                for b in [grid.boundary_x(), grid.boundary_y()] {
                    for end in [b.lower, b.upper] {
                        if let BoundaryEnd::Dirichlet(g) = end {
                            umax = umax.max(g.abs());
                        }
                    }
                }
                self.diffusivity(umax)
            }
        }
    }
}

/// Flux through a face with `left` on the − side and `right` on the + side.
#[inline]
fn face_flux(law: &Constitutive, left: f64, right: f64, spacing: f64) -> f64 {
    let k = law.diffusivity(0.5 * (left + right));
    -k * (right - left) / spacing
}

/// Fills one line of faces (`n + 1` entries reachable through `face`) from the
/// `n` cells reachable through `cell`.
fn line_fluxes(
    law: &Constitutive,
    boundary: AxisBoundary,
    n: usize,
    h: f64,
    cell: impl Fn(usize) -> f64,
    mut set: impl FnMut(usize, f64),
) {
    for k in 1..n {
        set(k, face_flux(law, cell(k - 1), cell(k), h));
    }
    if boundary.is_periodic() {
        let f = face_flux(law, cell(n - 1), cell(0), h);
        set(0, f);
        set(n, f);
        return;
    }
    let half = 0.5 * h;
    let lower = match boundary.lower {
        BoundaryEnd::Dirichlet(g) => face_flux(law, g, cell(0), half),
        _ => 0.0,
    };
    let upper = match boundary.upper {
        BoundaryEnd::Dirichlet(g) => face_flux(law, cell(n - 1), g, half),
        _ => 0.0,
    };
    set(0, lower);
    set(n, upper);
}

/// Writes continuous fluxes for `state` into a preallocated face field.
pub fn compute_physical_flux_into(
    state: &StateField,
    grid: &Grid,
    law: &Constitutive,
    out: &mut FaceField,
) -> Result<()> {
    state.check_shape(grid)?;
    out.check_shape(grid)?;
    physical_flux_raw(state.values(), grid, law, out);
    Ok(())
}

/// Unchecked kernel; `u` and `out` must already match the grid.
pub(crate) fn physical_flux_raw(u: &[f64], grid: &Grid, law: &Constitutive, out: &mut FaceField) {
    let (nx, ny) = (grid.nx(), grid.ny());

    for j in 0..ny {
        let row = &u[j * nx..(j + 1) * nx];
        let base = grid.x_face(0, j);
        let xf = &mut out.x[base..base + nx + 1];
        line_fluxes(law, grid.boundary_x(), nx, grid.dx(), |i| row[i], |k, f| xf[k] = f);
    }

    if grid.is_2d() {
        for i in 0..nx {
            let yf = &mut out.y;
            line_fluxes(
                law,
                grid.boundary_y(),
                ny,
                grid.dy(),
                |j| u[i + nx * j],
                |k, f| yf[i + nx * k] = f,
            );
        }
    }
}

/// Continuous interfacial fluxes for `state`, boundaries taken from the grid.
///
/// Interior faces use `−K(ū)·Δu/h` with `ū` the arithmetic mean of the two
/// neighbours. Dirichlet walls use the wall value as a ghost at distance `h/2`;
/// insulated walls carry zero flux; periodic axes wrap so the first and last
/// faces hold the same value.
pub fn compute_physical_flux(state: &StateField, grid: &Grid, law: &Constitutive) -> Result<FaceField> {
    let mut out = FaceField::zeros(grid);
    compute_physical_flux_into(state, grid, law, &mut out)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{make_grid, GridSpec};
    use std::f64::consts::PI;

    fn grid1(dx: f64, b: AxisBoundary) -> Grid {
        make_grid(GridSpec::one_d(1.0, dx, 1e-5, b)).unwrap()
    }

    #[test]
    fn uniform_state_has_no_flux() {
        for b in [AxisBoundary::insulated(), AxisBoundary::periodic()] {
            let g = grid1(0.1, b);
            for law in [Constitutive::constant(0.3), Constitutive::PowerLaw { k0: 2.0, exponent: 1.5 }] {
                let f = compute_physical_flux(&StateField::uniform(&g, 0.7), &g, &law).unwrap();
                assert!(f.iter().all(|&v| v == 0.0));
            }
        }
        let h = 0.25;
        let b = AxisBoundary::dirichlet(0.7, 0.7);
        let g2 = make_grid(GridSpec::two_d(1.0, 1.0, h, h, 1e-5, b, b)).unwrap();
        let f = compute_physical_flux(&StateField::uniform(&g2, 0.7), &g2, &Constitutive::constant(1.0)).unwrap();
        assert!(f.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn two_cell_step_interior_flux() {
        let g = make_grid(GridSpec::one_d(0.3, 0.1, 1e-5, AxisBoundary::insulated())).unwrap();
        let s = StateField::new(&g, vec![0.0, 1.0, 1.0]).unwrap();
        let f = compute_physical_flux(&s, &g, &Constitutive::constant(0.1)).unwrap();
        assert!((f.x[1] - (-1.0)).abs() < 1e-15);
        assert_eq!(f.x[2], 0.0);
        assert_eq!((f.x[0], f.x[3]), (0.0, 0.0));
    }

    #[test]
    fn dirichlet_wall_uses_half_spacing() {
        let g = make_grid(GridSpec::one_d(0.3, 0.1, 1e-5, AxisBoundary::dirichlet(1.0, 0.0))).unwrap();
        let s = StateField::new(&g, vec![0.0, 0.0, 0.0]).unwrap();
        let f = compute_physical_flux(&s, &g, &Constitutive::constant(0.1)).unwrap();
        // −0.1·(0 − 1)/0.05 = 2
        assert!((f.x[0] - 2.0).abs() < 1e-14);
        assert_eq!(f.x[3], 0.0);
    }

    #[test]
    fn periodic_faces_alias() {
        let g = grid1(0.25, AxisBoundary::periodic());
        let s = StateField::new(&g, vec![1.0, 2.0, 3.0, 5.0]).unwrap();
        let f = compute_physical_flux(&s, &g, &Constitutive::constant(1.0)).unwrap();
        assert_eq!(f.x[0], f.x[4]);
        assert_eq!(f.x[0], -(1.0 - 5.0) / 0.25);
    }

    #[test]
    fn power_law_zero_exponent_is_constant() {
        let g = grid1(0.1, AxisBoundary::dirichlet(0.2, -0.4));
        let s = StateField::from_fn(&g, |x, _| (3.0 * x).sin()).unwrap();
        let a = compute_physical_flux(&s, &g, &Constitutive::constant(0.7)).unwrap();
        let b = compute_physical_flux(&s, &g, &Constitutive::PowerLaw { k0: 0.7, exponent: 0.0 }).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn power_law_uses_face_mean() {
        let g = make_grid(GridSpec::one_d(0.3, 0.1, 1e-5, AxisBoundary::insulated())).unwrap();
        let s = StateField::new(&g, vec![1.0, 3.0, 3.0]).unwrap();
        let f = compute_physical_flux(&s, &g, &Constitutive::PowerLaw { k0: 0.5, exponent: 2.0 }).unwrap();
        // K(2) = 0.5·4 = 2; F = −2·2/0.1
        assert!((f.x[1] + 40.0).abs() < 1e-12);
    }

    #[test]
    fn shape_mismatch() {
        let g = grid1(0.1, AxisBoundary::insulated());
        let g2 = grid1(0.05, AxisBoundary::insulated());
        let s = StateField::zeros(&g2);
        assert!(matches!(
            compute_physical_flux(&s, &g, &Constitutive::constant(1.0)),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    fn sine_flux_error(nx: usize) -> f64 {
        let kappa = 0.1;
        let g = grid1(1.0 / nx as f64, AxisBoundary::dirichlet(0.0, 0.0));
        let s = StateField::from_fn(&g, |x, _| (PI * x).sin()).unwrap();
        let f = compute_physical_flux(&s, &g, &Constitutive::constant(kappa)).unwrap();
        (0..=nx)
            .map(|k| {
                let xf = k as f64 * g.dx();
                (f.x[k] - (-kappa * PI * (PI * xf).cos())).abs()
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn sine_flux_matches_analytic_gradient() {
        // Analytic oracle: F = −κπ cos(πx). Leading truncation term on both
        // interior and wall faces is κπ·(πdx)²/24 ≈ 1.29e-5 at Nx=100.
        let err = sine_flux_error(100);
        let leading = 0.1 * PI * (PI * 0.01f64).powi(2) / 24.0;
        assert!(err < 1.05 * leading, "max deviation {err}");
    }

    #[test]
    fn sine_flux_second_order() {
        let e1 = sine_flux_error(50);
        let e2 = sine_flux_error(100);
        let ratio = e1 / e2;
        assert!((3.5..=4.5).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn mirror_symmetry_negates_fluxes_bitwise() {
        let g = grid1(0.01, AxisBoundary::dirichlet(0.3, 0.3));
        let n = g.nx();
        let s = StateField::from_fn(&g, |x, _| (x - 0.5).powi(2) + (7.0 * (x - 0.5)).cos()).unwrap();
        let mirrored: Vec<f64> = s.values().iter().rev().copied().collect();
        let sm = StateField::new(&g, mirrored).unwrap();
        let law = Constitutive::constant(0.1);
        let f = compute_physical_flux(&s, &g, &law).unwrap();
        let fm = compute_physical_flux(&sm, &g, &law).unwrap();
        for k in 0..=n {
            // == treats ±0 as equal; the centre face is a signed zero.
            assert!(fm.x[n - k] == -f.x[k], "face {k}");
        }
    }

    #[test]
    fn linearity_constant_law() {
        let g = grid1(0.02, AxisBoundary::dirichlet(0.0, 0.0));
        let law = Constitutive::constant(0.2);
        let u = StateField::from_fn(&g, |x, _| (2.0 * PI * x).sin() + x).unwrap();
        let v = StateField::from_fn(&g, |x, _| (5.0 * x).exp()).unwrap();
        let (a, b) = (1.7, -0.3);
        let w: Vec<f64> = u.values().iter().zip(v.values()).map(|(p, q)| a * p + b * q).collect();
        let w = StateField::new(&g, w).unwrap();
        let fu = compute_physical_flux(&u, &g, &law).unwrap();
        let fv = compute_physical_flux(&v, &g, &law).unwrap();
        let fw = compute_physical_flux(&w, &g, &law).unwrap();
        let scale = fw.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        for k in 0..fw.x.len() {
            let lin = a * fu.x[k] + b * fv.x[k];
            assert!((fw.x[k] - lin).abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn two_d_axes_are_independent() {
        let h = 0.125;
        let b = AxisBoundary::dirichlet(0.0, 0.0);
        let g = make_grid(GridSpec::two_d(1.0, 1.0, h, h, 1e-5, b, b)).unwrap();
        // Varies only in x: y-flux vanishes on interior faces.
        let s = StateField::from_fn(&g, |x, _| x * x).unwrap();
        let f = compute_physical_flux(&s, &g, &Constitutive::constant(1.0)).unwrap();
        for j in 1..g.ny() {
            for i in 0..g.nx() {
                assert_eq!(f.y[g.y_face(i, j)], 0.0);
            }
        }
        for j in 0..g.ny() {
            assert_eq!(f.x[g.x_face(3, j)], f.x[g.x_face(3, 0)]);
        }
    }
}

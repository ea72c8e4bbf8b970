//! TOML run configuration.
//!
//! ```toml
//! equation = "heat1d"
//! t_end = 0.5
//!
//! [grid]
//! lx = 1.0
//! dx = 0.01
//! dt = 2.5e-4
//!
//! [law]
//! kind = "constant"
//! kappa = 0.1
//!
//! [ic]
//! kind = "sine"
//!
//! [boundary.x]
//! kind = "dirichlet"
//!
//! [solver]
//! integrator = "rk4"
//! quota = 1e-4
//!
//! [reference]
//! kind = "analytic"
//! ```

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::calibrate::CalibrationConfig;
use crate::dfp::{Integrator, SolverConfig};
use crate::domain::{make_grid, AxisBoundary, BoundaryEnd, Dims, Grid, GridSpec, Leak, NeuronParams, QuotaParam};
use crate::error::{Error, Result};
use crate::flux::Constitutive;
use crate::oracle::{steps_to, InitialCondition};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Equation {
    Heat1d,
    Diffusion2d,
}

impl Equation {
    pub fn as_str(self) -> &'static str {
        match self {
            Equation::Heat1d => "heat1d",
            Equation::Diffusion2d => "diffusion2d",
        }
    }
    pub fn dims(self) -> Dims {
        match self {
            Equation::Heat1d => Dims::One,
            Equation::Diffusion2d => Dims::Two,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub lx: f64,
    pub dx: f64,
    pub ly: Option<f64>,
    pub dy: Option<f64>,
    pub dt: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LawSection {
    Constant { kappa: f64 },
    PowerLaw { k0: f64, exponent: f64 },
}

impl LawSection {
    pub fn to_law(&self) -> Constitutive {
        match *self {
            LawSection::Constant { kappa } => Constitutive::Constant { kappa },
            LawSection::PowerLaw { k0, exponent } => Constitutive::PowerLaw { k0, exponent },
        }
    }

    /// Diffusivity used by the reference solutions.
    pub fn kappa(&self) -> Option<f64> {
        match *self {
            LawSection::Constant { kappa } => Some(kappa),
            LawSection::PowerLaw { k0, exponent: 0.0 } => Some(k0),
            LawSection::PowerLaw { .. } => None,
        }
    }
}

fn one() -> f64 {
    1.0
}
fn mode_one() -> u32 {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum IcSection {
    Sine {
        #[serde(default = "mode_one")]
        mode: u32,
        #[serde(default = "one")]
        amplitude: f64,
    },
    Gaussian {
        center: f64,
        width: f64,
        #[serde(default = "one")]
        amplitude: f64,
    },
    Step {
        edge: f64,
        #[serde(default)]
        low: f64,
        #[serde(default = "one")]
        high: f64,
    },
    ProductSine {
        #[serde(default = "mode_one")]
        mx: u32,
        #[serde(default = "mode_one")]
        my: u32,
        #[serde(default = "one")]
        amplitude: f64,
    },
    Uniform {
        value: f64,
    },
}

impl IcSection {
    pub fn to_ic(self) -> InitialCondition {
        match self {
            IcSection::Sine { mode, amplitude } => InitialCondition::Sine { mode, amplitude },
            IcSection::Gaussian { center, width, amplitude } => InitialCondition::Gaussian { center, width, amplitude },
            IcSection::Step { edge, low, high } => InitialCondition::Step { edge, low, high },
            IcSection::ProductSine { mx, my, amplitude } => InitialCondition::Product2D { mx, my, amplitude },
            IcSection::Uniform { value } => InitialCondition::Uniform { value },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AxisSection {
    Dirichlet {
        #[serde(default)]
        lower: f64,
        #[serde(default)]
        upper: f64,
    },
    Insulated,
    Periodic,
}

impl AxisSection {
    fn to_axis(self) -> AxisBoundary {
        match self {
            AxisSection::Dirichlet { lower, upper } => AxisBoundary {
                lower: BoundaryEnd::Dirichlet(lower),
                upper: BoundaryEnd::Dirichlet(upper),
            },
            AxisSection::Insulated => AxisBoundary::insulated(),
            AxisSection::Periodic => AxisBoundary::periodic(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundarySection {
    pub x: AxisSection,
    pub y: Option<AxisSection>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntegratorName {
    Euler,
    Rk4,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub integrator: IntegratorName,
    pub quota: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NeuronSection {
    pub r_m: Option<f64>,
    pub tau_m: Option<f64>,
    #[serde(default)]
    pub v_rest: f64,
    /// Uniform source rate.
    pub source: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ReferenceSection {
    Analytic,
    Fdm {
        #[serde(default = "default_refinement")]
        refinement: usize,
    },
    File {
        path: PathBuf,
    },
    None,
}

fn default_refinement() -> usize {
    4
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationSection {
    pub lambda: Option<f64>,
    pub q_lo: Option<f64>,
    pub q_hi: Option<f64>,
    pub points_per_decade: Option<usize>,
    pub tolerance: Option<f64>,
    /// Teacher horizon; defaults to `t_end`.
    pub teacher_t_end: Option<f64>,
    /// Teacher initial condition; defaults to `[ic]`.
    pub teacher_ic: Option<IcSection>,
    pub teacher: ReferenceSection,
    /// Teacher frames every this many steps.
    pub teacher_stride: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub quotas: Option<Vec<f64>>,
    pub q_lo: Option<f64>,
    pub q_hi: Option<f64>,
    pub points: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservationsSection {
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    /// File stem for every artifact; defaults to the config file stem.
    pub name: Option<String>,
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub equation: Equation,
    pub t_end: f64,
    pub frame_stride: Option<usize>,
    /// Only used by randomized test data.
    #[serde(default)]
    pub seed: u64,
    pub grid: GridSection,
    pub law: LawSection,
    pub ic: IcSection,
    pub boundary: BoundarySection,
    pub solver: SolverSection,
    #[serde(default)]
    pub neuron: NeuronSection,
    pub reference: Option<ReferenceSection>,
    pub calibration: Option<CalibrationSection>,
    pub sweep: Option<SweepSection>,
    pub observations: Option<ObservationsSection>,
    #[serde(default)]
    pub output: OutputSection,
}

/// A parsed config plus the directory its relative paths resolve against.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedConfig {
    pub run: RunConfig,
    pub base_dir: PathBuf,
    pub stem: String,
}

pub fn parse_config(text: &str) -> Result<RunConfig> {
    toml::from_str(text).map_err(|e| Error::Config(e.message().to_string() + &span_hint(text, e.span())))
}

fn span_hint(text: &str, span: Option<std::ops::Range<usize>>) -> String {
    match span {
        Some(r) => {
            let line = text[..r.start.min(text.len())].matches('\n').count() + 1;
            format!(" (line {line})")
        }
        None => String::new(),
    }
}

pub fn load_config(path: &Path) -> Result<LoadedConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let run = parse_config(&text)?;
    let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "run".into());
    Ok(LoadedConfig { run, base_dir, stem })
}

impl LoadedConfig {
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn name(&self) -> &str {
        self.run.output.name.as_deref().unwrap_or(&self.stem)
    }
}

fn cfg_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl RunConfig {
    pub fn build_grid(&self) -> Result<Grid> {
        let g = &self.grid;
        let bx = self.boundary.x.to_axis();
        let spec = match self.equation.dims() {
            Dims::One => {
                if g.ly.is_some() || g.dy.is_some() || self.boundary.y.is_some() {
                    return Err(cfg_err("heat1d takes no grid.ly, grid.dy or boundary.y"));
                }
                GridSpec::one_d(g.lx, g.dx, g.dt, bx)
            }
            Dims::Two => {
                let ly = g.ly.ok_or_else(|| cfg_err("diffusion2d requires grid.ly"))?;
                let dy = g.dy.ok_or_else(|| cfg_err("diffusion2d requires grid.dy"))?;
                let by = self.boundary.y.ok_or_else(|| cfg_err("diffusion2d requires boundary.y"))?;
                GridSpec::two_d(g.lx, ly, g.dx, dy, g.dt, bx, by.to_axis())
            }
        };
        make_grid(spec)
    }

    pub fn integrator(&self) -> Integrator {
        match self.solver.integrator {
            IntegratorName::Euler => Integrator::ForwardEuler,
            IntegratorName::Rk4 => Integrator::Rk4,
        }
    }

    pub fn neuron_params(&self, grid: &Grid) -> NeuronParams {
        let n = &self.neuron;
        NeuronParams {
            leak: n.tau_m.map(|tau_m| Leak { tau_m, v_rest: n.v_rest }),
            r_m: n.r_m.unwrap_or(1.0),
            source: n.source.map(|s| vec![s; grid.n_cells()]),
        }
    }

    /// Solver config with `quota` (the configured one unless overridden).
    pub fn solver_config(&self, grid: &Grid, quota: f64) -> Result<SolverConfig> {
        let law = self.law.to_law();
        law.validate()?;
        let params = self.neuron_params(grid);
        params.validate(grid)?;
        Ok(SolverConfig {
            law,
            params,
            quota: QuotaParam::new(quota)?,
            integrator: self.integrator(),
        })
    }

    pub fn n_steps(&self, grid: &Grid) -> Result<usize> {
        steps_to(self.t_end, grid.dt())
    }

    pub fn calibration_config(&self) -> Option<CalibrationConfig> {
        let c = self.calibration.as_ref()?;
        let d = CalibrationConfig::default();
        Some(CalibrationConfig {
            lambda: c.lambda.unwrap_or(d.lambda),
            q_lo: c.q_lo.unwrap_or(d.q_lo),
            q_hi: c.q_hi.unwrap_or(d.q_hi),
            points_per_decade: c.points_per_decade.unwrap_or(d.points_per_decade),
            tolerance: c.tolerance.unwrap_or(d.tolerance),
        })
    }

    /// Quotas for the sweep, log-spaced when given as a range.
    pub fn sweep_quotas(&self) -> Result<Vec<f64>> {
        let s = self.sweep.as_ref().ok_or_else(|| cfg_err("missing [sweep] section"))?;
        match (&s.quotas, s.q_lo, s.q_hi, s.points) {
            (Some(q), None, None, None) => Ok(q.clone()),
            (None, Some(lo), Some(hi), Some(n)) if n >= 2 && lo > 0.0 && hi > lo => {
                let (a, b) = (lo.ln(), hi.ln());
                Ok((0..n)
                    .map(|k| match k {
                        0 => lo,
                        k if k == n - 1 => hi,
                        k => (a + (b - a) * k as f64 / (n - 1) as f64).exp(),
                    })
                    .collect())
            }
            (None, Some(_), Some(_), Some(_)) => Err(cfg_err("sweep range needs 0 < q_lo < q_hi and points >= 2")),
            _ => Err(cfg_err("sweep takes either 'quotas' or all of 'q_lo', 'q_hi', 'points'")),
        }
    }

    /// Everything that can be checked without running anything.
    pub fn validate(&self) -> Result<Grid> {
        let grid = self.build_grid()?;
        self.n_steps(&grid)?;
        self.law.to_law().validate()?;
        self.neuron_params(&grid).validate(&grid)?;
        self.ic.to_ic().validate(&grid)?;
        if let Some(q) = self.solver.quota {
            QuotaParam::new(q)?;
        }
        if self.frame_stride == Some(0) {
            return Err(cfg_err("frame_stride must be >= 1"));
        }
        if let Some(cal) = self.calibration_config() {
            cal.validate()?;
            let c = self.calibration.as_ref().expect("checked above");
            if let Some(t) = c.teacher_t_end {
                steps_to(t, grid.dt())?;
            }
            if let Some(ic) = c.teacher_ic {
                ic.to_ic().validate(&grid)?;
            }
            if c.teacher_stride == Some(0) {
                return Err(cfg_err("teacher_stride must be >= 1"));
            }
            if matches!(c.teacher, ReferenceSection::None) {
                return Err(cfg_err("calibration.teacher cannot be 'none'"));
            }
        }
        if self.sweep.is_some() {
            for q in self.sweep_quotas()? {
                QuotaParam::new(q)?;
            }
        }
        Ok(grid)
    }
}

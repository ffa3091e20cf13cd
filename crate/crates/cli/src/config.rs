//! Run configuration: the JSON schema and its translation into library objects.

use std::path::{Path, PathBuf};

use dglab::bounds::{BoundMode, CertifyOptions, NormIndex};
use dglab::coefficients::{parse_tabulated_csv, Checkerboard, CoefficientSet, Constant, Ramp, RotationDrift, Sym2};
use dglab::evolution::{Integrator, SolverConfig};
use dglab::grid::{Axis, Grid, Region};
use dglab::showcase::ForceKernel;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// A problem in the configuration, reported with exit status 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

fn cfg_err(msg: impl Into<String>) -> ConfigError {
    ConfigError(msg.into())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Label of the run in every output row.
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_slack")]
    pub slack: f64,
    #[serde(default = "default_time_samples")]
    pub time_samples: usize,
    #[serde(default)]
    pub cutoff: CutoffSpec,
    pub scenario: Scenario,
    /// Directory for resolving relative paths inside the config.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_slack() -> f64 {
    0.02
}

fn default_time_samples() -> usize {
    8
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CutoffSpec {
    #[serde(default = "default_c3")]
    pub c3: f64,
    /// Transition parameter of the sharp cutoff.
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    /// `k = (1 + delta) max(n c2, c1)`.
    #[serde(default = "default_delta")]
    pub delta: f64,
}

fn default_c3() -> f64 {
    dglab::cutoff::DEFAULT_C3
}

fn default_epsilon() -> f64 {
    0.01
}

fn default_delta() -> f64 {
    1.0
}

impl Default for CutoffSpec {
    fn default() -> Self {
        CutoffSpec {
            c3: default_c3(),
            epsilon: default_epsilon(),
            delta: default_delta(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Scenario {
    /// Bound comparison for a linear equation.
    Certify(CertifySpec),
    TravelingWave(TravelingWaveSpec),
    PorousMedium(PorousMediumSpec),
    MckeanVlasov(KineticSpec),
}

impl Scenario {
    pub fn kind(&self) -> &'static str {
        match self {
            Scenario::Certify(_) => "certify",
            Scenario::TravelingWave(_) => "traveling_wave",
            Scenario::PorousMedium(_) => "porous_medium",
            Scenario::MckeanVlasov(_) => "mckean_vlasov",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertifySpec {
    pub grid: GridSpec,
    pub coefficients: CoefficientSpec,
    pub x: RegionSpec,
    pub y: RegionSpec,
    #[serde(default = "default_mode")]
    pub mode: BoundMode,
    #[serde(default)]
    pub s: f64,
    /// Absolute end times.
    #[serde(default)]
    pub times: Vec<f64>,
    /// End times as fractions of the validity interval (Gaussian and tail modes).
    #[serde(default)]
    pub time_fractions: Vec<f64>,
    #[serde(default = "default_norms")]
    pub norms: Vec<NormSpec>,
    pub solver: SolverSpec,
    /// Window end of non-autonomous coefficients; defaults to the largest time.
    #[serde(default)]
    pub window_end: Option<f64>,
    /// Repeat the measurement on a box twice as large.
    #[serde(default)]
    pub box_doubling: bool,
    /// Evaluate the bound at this tilt instead of the optimal one.
    #[serde(default)]
    pub mu: Option<f64>,
}

fn default_mode() -> BoundMode {
    BoundMode::Gaussian
}

fn default_norms() -> Vec<NormSpec> {
    vec![NormSpec::One, NormSpec::Two, NormSpec::Inf]
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub enum NormSpec {
    #[serde(rename = "1")]
    One,
    #[serde(rename = "2")]
    Two,
    #[serde(rename = "inf")]
    Inf,
}

impl From<NormSpec> for NormIndex {
    fn from(p: NormSpec) -> Self {
        match p {
            NormSpec::One => NormIndex::One,
            NormSpec::Two => NormIndex::Two,
            NormSpec::Inf => NormIndex::Inf,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub axes: Vec<AxisSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisSpec {
    pub lower: f64,
    pub upper: f64,
    pub cells: usize,
    #[serde(default)]
    pub periodic: bool,
}

impl GridSpec {
    pub fn build(&self) -> Result<Grid, ConfigError> {
        let axes = self
            .axes
            .iter()
            .map(|a| {
                let ax = Axis::new(a.lower, a.upper, a.cells);
                if a.periodic {
                    ax.periodic()
                } else {
                    ax
                }
            })
            .collect();
        Grid::new(axes).map_err(|e| cfg_err(format!("grid: {e}")))
    }

    /// The box twice as long on every axis, centred on the original, at the
    /// same spacing.
    pub fn doubled(&self) -> GridSpec {
        GridSpec {
            axes: self
                .axes
                .iter()
                .map(|a| {
                    let half = 0.5 * (a.upper - a.lower);
                    AxisSpec {
                        lower: a.lower - half,
                        upper: a.upper + half,
                        cells: 2 * a.cells,
                        periodic: a.periodic,
                    }
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum RegionSpec {
    /// Explicit cell indices.
    Indices(Vec<usize>),
    /// Union of axis-aligned boxes of cell centres.
    Boxes(Vec<BoxSpec>),
    /// Cells with centres inside (or outside) a ball.
    Ball {
        center: Vec<f64>,
        radius: f64,
        #[serde(default)]
        outside: bool,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxSpec {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl RegionSpec {
    pub fn build(&self, grid: &Grid, label: &str) -> Result<Region, ConfigError> {
        let region = match self {
            RegionSpec::Indices(ids) => Region::from_indices(grid, ids.iter().copied(), label)
                .map_err(|e| cfg_err(format!("region {label}: {e}")))?,
            RegionSpec::Boxes(boxes) => {
                let mut out = Region::empty(label);
                for b in boxes {
                    if b.lo.len() != grid.dim() || b.hi.len() != grid.dim() {
                        return Err(cfg_err(format!(
                            "region {label}: box corners need {} coordinates",
                            grid.dim()
                        )));
                    }
                    out = out.union(&Region::from_box(grid, &b.lo, &b.hi, label), label);
                }
                out
            }
            RegionSpec::Ball {
                center,
                radius,
                outside,
            } => {
                if center.len() != grid.dim() {
                    return Err(cfg_err(format!(
                        "region {label}: ball centre needs {} coordinates",
                        grid.dim()
                    )));
                }
                let dist = |c: [f64; 2]| (0..grid.dim()).map(|k| (c[k] - center[k]).powi(2)).sum::<f64>().sqrt();
                Region::from_predicate(grid, label, |c| (dist(c) <= *radius) != *outside)
            }
        };
        if region.is_empty() {
            return Err(cfg_err(format!("region {label} contains no cell")));
        }
        Ok(region)
    }

    /// Shifts a box region along axis 0.
    pub fn shifted(&self, by: f64) -> Result<RegionSpec, ConfigError> {
        match self {
            RegionSpec::Boxes(boxes) => Ok(RegionSpec::Boxes(
                boxes
                    .iter()
                    .map(|b| {
                        let mut b = b.clone();
                        b.lo[0] += by;
                        b.hi[0] += by;
                        b
                    })
                    .collect(),
            )),
            _ => Err(cfg_err("only box regions can be moved")),
        }
    }

    /// Lowest and highest axis-0 coordinate of a box region.
    pub fn extent0(&self) -> Option<(f64, f64)> {
        match self {
            RegionSpec::Boxes(boxes) if !boxes.is_empty() => Some((
                boxes.iter().map(|b| b.lo[0]).fold(f64::INFINITY, f64::min),
                boxes.iter().map(|b| b.hi[0]).fold(f64::NEG_INFINITY, f64::max),
            )),
            _ => None,
        }
    }

    pub fn is_geometric(&self) -> bool {
        !matches!(self, RegionSpec::Indices(_))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum CoefficientSpec {
    Constant {
        /// Isotropic diffusivity.
        #[serde(default)]
        a: Option<f64>,
        /// Full diffusion matrix; overrides `a`.
        #[serde(default)]
        matrix: Option<Sym2>,
        #[serde(default)]
        b: [f64; 2],
        #[serde(default)]
        c: f64,
    },
    Ramp {
        speed: f64,
        cap: f64,
    },
    Checkerboard {
        value: f64,
        zero_intervals: Vec<[f64; 2]>,
        #[serde(default)]
        c: f64,
    },
    Rotation {
        omega: f64,
        a: f64,
    },
    /// CSV with header `t,cell,a11,a12,a22,b1,b2,c`.
    Tabulated {
        path: PathBuf,
    },
}

impl CoefficientSpec {
    pub fn build(&self, grid: &Grid, window: (f64, f64), base: &Path) -> Result<CoefficientSet, ConfigError> {
        Ok(match self {
            CoefficientSpec::Constant { a, matrix, b, c } => {
                let model = match (matrix, a) {
                    (Some(m), _) => Constant { a: *m, b: *b, c: *c },
                    (None, Some(a)) => Constant::isotropic(*a).with_drift(*b).with_reaction(*c),
                    (None, None) => return Err(cfg_err("constant coefficients need `a` or `matrix`")),
                };
                CoefficientSet::from_model(model, window)
            }
            CoefficientSpec::Ramp { speed, cap } => CoefficientSet::from_model(
                Ramp {
                    speed: *speed,
                    cap: *cap,
                },
                window,
            ),
            CoefficientSpec::Checkerboard {
                value,
                zero_intervals,
                c,
            } => CoefficientSet::from_model(
                Checkerboard {
                    value: *value,
                    zero_intervals: zero_intervals.clone(),
                    c: *c,
                },
                window,
            ),
            CoefficientSpec::Rotation { omega, a } => {
                if grid.dim() != 2 {
                    return Err(cfg_err("rotation drift needs a 2D grid"));
                }
                let (x, y) = (grid.axis(0), grid.axis(1));
                CoefficientSet::from_model(
                    RotationDrift {
                        omega: *omega,
                        a: *a,
                        lower: [x.lower, y.lower],
                        upper: [x.upper, y.upper],
                    },
                    window,
                )
            }
            CoefficientSpec::Tabulated { path } => {
                let full = base.join(path);
                let text = std::fs::read_to_string(&full)
                    .map_err(|e| cfg_err(format!("coefficients: cannot read {}: {e}", full.display())))?;
                let table = parse_tabulated_csv(&text, grid).map_err(|e| cfg_err(format!("coefficients: {e}")))?;
                CoefficientSet::tabulated(table, window)
            }
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    /// Time step; exclusive with `steps`.
    #[serde(default)]
    pub dt: Option<f64>,
    /// Steps per certified interval.
    #[serde(default)]
    pub steps: Option<usize>,
    #[serde(default)]
    pub epsilon: Option<f64>,
    #[serde(default)]
    pub integrator: Integrator,
}

impl SolverSpec {
    pub fn build(&self, interval: f64) -> Result<SolverConfig, ConfigError> {
        let dt = match (self.dt, self.steps) {
            (Some(dt), None) => dt,
            (None, Some(n)) if n > 0 => interval / n as f64,
            (None, None) => return Err(cfg_err("solver: give `dt` or `steps`")),
            _ => {
                return Err(cfg_err(
                    "solver: `dt` and `steps` are exclusive; steps must be positive",
                ))
            }
        };
        let mut cfg = SolverConfig::new(dt).with_integrator(self.integrator);
        cfg.epsilon = self.epsilon;
        cfg.validate().map_err(|e| cfg_err(format!("solver: {e}")))?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TravelingWaveSpec {
    pub beta: f64,
    pub r: f64,
    pub grid: GridSpec,
    pub horizon: f64,
    pub solver: SolverSpec,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PorousMediumSpec {
    pub n: usize,
    pub m: f64,
    /// Barenblatt constant; unit mass when absent.
    #[serde(default)]
    pub c: Option<f64>,
    #[serde(default)]
    pub q: PerturbationSpec,
    pub grid: GridSpec,
    pub t_final: f64,
    pub solver: SolverSpec,
    #[serde(default)]
    pub t0: Option<f64>,
    #[serde(default)]
    pub growth: Option<f64>,
    /// Gap between the initial support and `X`.
    #[serde(default)]
    pub d: Option<f64>,
    #[serde(default)]
    pub snapshots: Option<usize>,
}

/// The background diffusivity `q >= 0` of the porous medium equation.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PerturbationSpec {
    #[default]
    Zero,
    Constant {
        value: f64,
    },
    /// `amplitude * (1 + sum of random cosines) / 2`, drawn from the run seed.
    Random {
        amplitude: f64,
        modes: usize,
    },
}

impl PerturbationSpec {
    pub fn build(&self, grid: &Grid, seed: u64) -> Result<dglab::grid::Field, ConfigError> {
        use dglab::grid::Field;
        match *self {
            PerturbationSpec::Zero => Ok(Field::zeros(grid)),
            PerturbationSpec::Constant { value } if value >= 0.0 => Ok(Field::constant(grid, value)),
            PerturbationSpec::Random { amplitude, modes } if amplitude >= 0.0 && modes > 0 => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let terms: Vec<(f64, [f64; 2], f64)> = (0..modes)
                    .map(|_| {
                        (
                            rng.random_range(-1.0..1.0) / modes as f64,
                            [rng.random_range(0.5..4.0), rng.random_range(0.5..4.0)],
                            rng.random_range(0.0..std::f64::consts::TAU),
                        )
                    })
                    .collect();
                Ok(Field::from_fn(grid, |x| {
                    let s: f64 = terms
                        .iter()
                        .map(|(w, k, ph)| w * (k[0] * x[0] + k[1] * x[1] + ph).cos())
                        .sum();
                    amplitude * 0.5 * (1.0 + s)
                }))
            }
            _ => Err(cfg_err("q: needs a nonnegative value (and at least one mode)")),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KineticSpec {
    pub sigma: f64,
    pub kernel: ForceKernel,
    /// Axis 0 is position (periodic), axis 1 velocity.
    pub grid: GridSpec,
    pub x_v: [f64; 2],
    pub y_v: [f64; 2],
    pub solver: SolverSpec,
    #[serde(default)]
    pub fractions: Option<Vec<f64>>,
    #[serde(default)]
    pub control_time: Option<f64>,
    #[serde(default)]
    pub leak_tol: Option<f64>,
    #[serde(default)]
    pub refine: Option<usize>,
    #[serde(default)]
    pub x_transport: Option<bool>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| cfg_err(format!("{}: {e}", path.display())))?;
        let mut cfg = RunConfig::parse(&text).map_err(|e| cfg_err(format!("{}: {}", path.display(), e.0)))?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<RunConfig, ConfigError> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| cfg_err(e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    fn check(&self) -> Result<(), ConfigError> {
        if self.name.trim().is_empty() {
            return Err(cfg_err("name must not be empty"));
        }
        if !(self.slack >= 0.0 && self.slack.is_finite()) {
            return Err(cfg_err(format!("slack must be >= 0, got {}", self.slack)));
        }
        if self.time_samples < 2 {
            return Err(cfg_err("time_samples must be at least 2"));
        }
        if !(self.cutoff.c3 > 1.0) {
            return Err(cfg_err("cutoff.c3 must exceed 1"));
        }
        if !(0.0..1.0).contains(&self.cutoff.epsilon) {
            return Err(cfg_err("cutoff.epsilon must lie in [0, 1)"));
        }
        if !(self.cutoff.delta > 0.0) {
            return Err(cfg_err("cutoff.delta must be positive"));
        }
        if let Scenario::Certify(c) = &self.scenario {
            if c.times.is_empty() && c.time_fractions.is_empty() {
                return Err(cfg_err("certify: give `times` or `time_fractions`"));
            }
            if c.norms.is_empty() {
                return Err(cfg_err("certify: `norms` must not be empty"));
            }
            if c.times.iter().any(|&t| !(t > c.s)) {
                return Err(cfg_err("certify: every time must exceed s"));
            }
            if c.time_fractions.iter().any(|&f| !(f > 0.0)) {
                return Err(cfg_err("certify: time fractions must be positive"));
            }
            if c.box_doubling && !(c.x.is_geometric() && c.y.is_geometric()) {
                return Err(cfg_err("certify: box doubling needs box or ball regions"));
            }
        }
        Ok(())
    }

    pub fn certify_options(&self) -> CertifyOptions {
        CertifyOptions {
            c3: self.cutoff.c3,
            sharp_epsilon: self.cutoff.epsilon,
            delta: self.cutoff.delta,
            slack: self.slack,
            time_samples: self.time_samples,
            relax_c: false,
        }
    }
}

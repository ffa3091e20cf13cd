//! Scenario dispatch and report assembly.

use dglab::bounds::{
    certify_dg_bound_all, decay_rate_g, prepare_certificate, validity_interval_ok, BoundComparison, BoundMode,
    NormIndex,
};
use dglab::coefficients::{validate_assumptions, AssumptionReport, CoefficientSet, Snapshot};
use dglab::cutoff::{CutoffCertificate, CutoffMode};
use dglab::grid::{Field, Grid};
use dglab::showcase::{
    mckean_vlasov_scenario, porous_medium_scenario, traveling_wave_scenario, BarenblattParams, KineticOptions,
    PorousMediumOptions, Profile,
};
use serde::Serialize;

use crate::config::{CertifySpec, ConfigError, KineticSpec, PorousMediumSpec, RunConfig, Scenario, TravelingWaveSpec};

/// Why a run stopped without a verdict.
#[derive(Debug)]
pub enum RunError {
    Config(ConfigError),
    Numerical { module: &'static str, error: dglab::Error },
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunError::Config(e) => write!(f, "config error: {e}"),
            RunError::Numerical { module, error } => write!(f, "numerical failure in {module}: {error}"),
        }
    }
}

impl From<ConfigError> for RunError {
    fn from(e: ConfigError) -> Self {
        RunError::Config(e)
    }
}

impl From<dglab::Error> for RunError {
    fn from(error: dglab::Error) -> Self {
        use dglab::Error as E;
        let module = match &error {
            E::InvalidGrid(_) | E::InvalidRegion(_) | E::EmptyRegion | E::InvalidField(_) => "grid_geometry",
            E::NonFiniteCoefficient { .. } | E::InvalidCoefficients(_) | E::Assumption(_) => "coefficients",
            E::Comparability { .. } | E::UnderResolved { .. } | E::NotSlabs(_) | E::Plateau(_) => "cutoff",
            E::InvalidSolver(_) | E::Cfl { .. } | E::LinearSolve { .. } | E::MissingColumn(_) => "evolution",
            E::InvalidNorm(_) | E::NotLocalized(_) | E::InvalidArgument(_) => "bounds",
            E::PicardDiverged { .. } | E::VelocityBox { .. } => "showcase",
            E::Io(_) => "io",
        };
        RunError::Numerical { module, error }
    }
}

/// Cutoff constants of one certificate, without the fields.
#[derive(Debug, Clone, Serialize)]
pub struct CertificateSummary {
    pub x: String,
    pub y: String,
    pub mode: CutoffMode,
    pub d_xy: f64,
    pub c1_measured: f64,
    pub c2_measured: f64,
    pub c1_analytic: f64,
    pub c2_analytic: f64,
    pub c3: Option<f64>,
    pub c4: Option<f64>,
    pub epsilon: Option<f64>,
    pub concavity_ok: Option<bool>,
}

impl From<&CutoffCertificate> for CertificateSummary {
    fn from(c: &CutoffCertificate) -> Self {
        CertificateSummary {
            x: c.x.label.clone(),
            y: c.y.label.clone(),
            mode: c.mode,
            d_xy: c.d_xy,
            c1_measured: c.c1_measured,
            c2_measured: c.c2_measured,
            c1_analytic: c.c1_analytic,
            c2_analytic: c.c2_analytic,
            c3: c.c3,
            c4: c.c4,
            epsilon: c.epsilon,
            concavity_ok: c.concavity_ok,
        }
    }
}

/// Measured norms on the original and the doubled box.
#[derive(Debug, Clone, Serialize)]
pub struct BoxDoubling {
    pub t: f64,
    pub p: NormIndex,
    pub original: f64,
    pub doubled: f64,
    pub relative_change: f64,
    pub ok: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub name: String,
    pub scenario: &'static str,
    pub seed: u64,
    pub config: RunConfig,
    pub assumptions: Option<AssumptionReport>,
    pub certificates: Vec<CertificateSummary>,
    /// Every comparison; entries outside the validity interval are listed
    /// but do not enter `overall_pass`.
    pub comparisons: Vec<BoundComparison>,
    pub box_doubling: Vec<BoxDoubling>,
    /// Scenario-specific measurements.
    pub details: serde_json::Value,
    pub notes: Vec<String>,
    pub overall_pass: bool,
    #[serde(skip)]
    pub profiles: Vec<(String, String)>,
}

impl RunReport {
    fn new(cfg: &RunConfig) -> Self {
        RunReport {
            name: cfg.name.clone(),
            scenario: cfg.scenario.kind(),
            seed: cfg.seed,
            config: cfg.clone(),
            assumptions: None,
            certificates: Vec::new(),
            comparisons: Vec::new(),
            box_doubling: Vec::new(),
            details: serde_json::Value::Null,
            notes: Vec::new(),
            overall_pass: false,
            profiles: Vec::new(),
        }
    }

    fn conclude(mut self) -> Self {
        let assumptions_ok = self.assumptions.as_ref().is_none_or(|a| a.all_ok(false));
        self.overall_pass = assumptions_ok
            && !self.comparisons.is_empty()
            && self.comparisons.iter().all(BoundComparison::counts)
            && self.box_doubling.iter().all(|b| b.ok);
        self
    }
}

/// Executes the configured scenario.
pub fn run(cfg: &RunConfig) -> Result<RunReport, RunError> {
    let report = RunReport::new(cfg);
    let report = match &cfg.scenario {
        Scenario::Certify(spec) => run_certify(cfg, spec, report)?,
        Scenario::TravelingWave(spec) => run_traveling_wave(cfg, spec, report)?,
        Scenario::PorousMedium(spec) => run_porous_medium(cfg, spec, report)?,
        Scenario::MckeanVlasov(spec) => run_kinetic(cfg, spec, report)?,
    };
    Ok(report.conclude())
}

/// Coefficients of a certify run and the window they are sampled on.
fn certify_setup(spec: &CertifySpec, cfg: &RunConfig) -> Result<(Grid, CoefficientSet), RunError> {
    let grid = spec.grid.build()?;
    let end = spec
        .window_end
        .unwrap_or_else(|| spec.times.iter().copied().fold(spec.s + 1.0, f64::max));
    if !(end > spec.s) {
        return Err(ConfigError("window_end must exceed s".into()).into());
    }
    let coeffs = spec.coefficients.build(&grid, (spec.s, end), &cfg.base_dir)?;
    Ok((grid, coeffs))
}

/// Assumption check only.
pub fn validate(cfg: &RunConfig) -> Result<AssumptionReport, RunError> {
    let (coeffs, grid) = match &cfg.scenario {
        Scenario::Certify(spec) => {
            let (grid, coeffs) = certify_setup(spec, cfg)?;
            (coeffs, grid)
        }
        Scenario::TravelingWave(spec) => {
            let grid = spec.grid.build()?;
            let model = dglab::coefficients::Ramp {
                speed: spec.beta,
                cap: spec.r,
            };
            (CoefficientSet::from_model(model, (0.0, spec.horizon)), grid)
        }
        Scenario::PorousMedium(spec) => {
            // The frozen coefficient a(u0) = q + m u0^(m-1).
            let grid = spec.grid.build()?;
            let params = barenblatt(spec)?;
            let q = spec.q.build(&grid, cfg.seed)?;
            let u0 = params.cell_averages(&grid, spec.t0.unwrap_or(0.01), 4);
            let a: Vec<f64> = u0
                .values()
                .iter()
                .zip(q.values())
                .map(|(u, q)| q + params.m * u.max(0.0).powf(params.m - 1.0))
                .collect();
            (
                CoefficientSet::frozen(Snapshot::isotropic(&a), (0.0, spec.t_final))?,
                grid,
            )
        }
        Scenario::MckeanVlasov(_) => {
            return Err(ConfigError(
                "validate: the kinetic scenario has no standalone coefficient set (its drift is unbounded in v)".into(),
            )
            .into())
        }
    };
    Ok(validate_assumptions(&coeffs, &grid, cfg.time_samples)?)
}

fn run_certify(cfg: &RunConfig, spec: &CertifySpec, mut report: RunReport) -> Result<RunReport, RunError> {
    let (grid, coeffs) = certify_setup(spec, cfg)?;
    let assumptions = validate_assumptions(&coeffs, &grid, cfg.time_samples)?;
    let ok = assumptions.all_ok(false);
    report.assumptions = Some(assumptions);
    if !ok {
        report
            .notes
            .push("standing assumptions violated; no bound was evaluated".into());
        return Ok(report);
    }
    let x = spec.x.build(&grid, "X")?;
    let y = spec.y.build(&grid, "Y")?;
    let opts = cfg.certify_options();
    let probe_t = spec.times.first().copied().unwrap_or(spec.s + 1.0);
    let prepared = prepare_certificate(&coeffs, &grid, &x, &y, spec.s, probe_t, spec.mode, &opts)?;
    report.certificates.push((&prepared.certificate).into());
    report
        .profiles
        .push(("cutoff".into(), field_csv(&grid, &[("xi", &prepared.certificate.xi)])));

    let mut times = spec.times.clone();
    if !spec.time_fractions.is_empty() {
        let max = prepared.template.max_interval.ok_or_else(|| {
            ConfigError("time_fractions need a finite validity interval (gaussian or tail mode)".into())
        })?;
        times.extend(spec.time_fractions.iter().map(|f| spec.s + f * max));
    }
    let norms: Vec<NormIndex> = spec.norms.iter().map(|&p| p.into()).collect();
    for &t in &times {
        let solver = spec.solver.build(t - spec.s)?;
        let mut rows = certify_dg_bound_all(&coeffs, &grid, &x, &y, spec.s, t, &norms, &solver, spec.mode, &opts)?;
        if let Some(mu) = spec.mu {
            rows.iter_mut().for_each(|r| fix_tilt(r, mu));
        }
        if spec.box_doubling {
            let big_spec = spec.grid.doubled();
            let big = big_spec.build()?;
            let big_coeffs = spec.coefficients.build(&big, coeffs.window, &cfg.base_dir)?;
            let (bx, by) = (spec.x.build(&big, "X")?, spec.y.build(&big, "Y")?);
            let big_rows = certify_dg_bound_all(
                &big_coeffs,
                &big,
                &bx,
                &by,
                spec.s,
                t,
                &norms,
                &solver,
                spec.mode,
                &opts,
            )?;
            for (a, b) in rows.iter().zip(&big_rows) {
                let diff = (a.measured_norm - b.measured_norm).abs();
                report.box_doubling.push(BoxDoubling {
                    t,
                    p: a.p,
                    original: a.measured_norm,
                    doubled: b.measured_norm,
                    relative_change: diff / a.measured_norm.abs().max(f64::MIN_POSITIVE),
                    // Below 1e-14 the difference is rounding.
                    ok: diff <= 1e-3 * a.measured_norm.abs() + 1e-14,
                });
            }
        }
        report.comparisons.extend(rows);
    }
    Ok(report)
}

/// Replaces the optimal tilt by `mu`: the bound becomes `exp(-G(mu))`.
fn fix_tilt(r: &mut BoundComparison, mu: f64) {
    if r.mode == BoundMode::Sharp {
        return;
    }
    let c1 = r.c1_measured.max(1.0);
    let (g, _) = decay_rate_g(
        mu,
        r.d_xy,
        r.t - r.s,
        r.alpha_effective,
        r.beta,
        c1,
        r.c2_measured,
        r.dim,
    );
    r.mu_star = mu;
    r.g_star = g;
    r.predicted_bound = (-g).exp();
    r.predicted_bound_analytic = None;
    r.pass = r.measured_norm <= r.predicted_bound * (1.0 + r.slack);
}

fn run_traveling_wave(cfg: &RunConfig, spec: &TravelingWaveSpec, mut report: RunReport) -> Result<RunReport, RunError> {
    let grid = spec.grid.build()?;
    let solver = spec.solver.build(spec.horizon)?;
    let rep = traveling_wave_scenario(spec.beta, spec.r, &grid, spec.horizon, &solver, &cfg.certify_options())?;
    report.comparisons = rep.inside.clone();
    if !rep.front_ok {
        report.notes.push(format!(
            "numerical front does not follow beta t: {:.3} of the mass stays behind the exact front",
            rep.mass_behind_front / rep.mass
        ));
    }
    if rep.outside.exceeded {
        report
            .notes
            .push("exact wave exceeds the diffusive bound outside the validity interval".into());
    }
    push_profiles(&mut report, &grid, &rep.profiles);
    report.details = to_value(&rep);
    Ok(report)
}

fn barenblatt(spec: &PorousMediumSpec) -> Result<BarenblattParams, RunError> {
    Ok(match spec.c {
        Some(c) => BarenblattParams::new(spec.n, spec.m, c)?,
        None => BarenblattParams::unit_mass(spec.n, spec.m)?,
    })
}

fn run_porous_medium(cfg: &RunConfig, spec: &PorousMediumSpec, mut report: RunReport) -> Result<RunReport, RunError> {
    let grid = spec.grid.build()?;
    let params = barenblatt(spec)?;
    let q = spec.q.build(&grid, cfg.seed)?;
    let defaults = PorousMediumOptions::default();
    let opts = PorousMediumOptions {
        t0: spec.t0.unwrap_or(defaults.t0),
        growth: spec.growth.unwrap_or(defaults.growth),
        d: spec.d.unwrap_or(defaults.d),
        snapshots: spec.snapshots.unwrap_or(defaults.snapshots),
        ..defaults
    };
    let solver = spec.solver.build(spec.t_final - opts.t0)?;
    let rep = porous_medium_scenario(&params, &q, &grid, spec.t_final, &solver, &opts, &cfg.certify_options())?;
    report.comparisons = rep.comparisons.clone();
    push_profiles(&mut report, &grid, &rep.profiles);
    report.details = to_value(&rep);
    Ok(report)
}

fn run_kinetic(cfg: &RunConfig, spec: &KineticSpec, mut report: RunReport) -> Result<RunReport, RunError> {
    let grid = spec.grid.build()?;
    let defaults = KineticOptions::default();
    let opts = KineticOptions {
        fractions: spec.fractions.clone().unwrap_or(defaults.fractions),
        control_time: spec.control_time.unwrap_or(defaults.control_time),
        leak_tol: spec.leak_tol.unwrap_or(defaults.leak_tol),
        refine: spec.refine.unwrap_or(defaults.refine),
        x_transport: spec.x_transport.unwrap_or(defaults.x_transport),
    };
    let solver = spec.solver.build(opts.control_time)?;
    let rep = mckean_vlasov_scenario(
        spec.sigma,
        spec.kernel,
        &grid,
        spec.x_v,
        spec.y_v,
        &solver,
        &opts,
        &cfg.certify_options(),
    )?;
    report.certificates.push((&rep.certificate).into());
    report.comparisons = rep.comparisons.clone();
    // Profiles of the kinetic run are velocity marginals on the v axis.
    let vgrid = Grid::new(vec![*grid.axis(1)])?;
    push_profiles(&mut report, &vgrid, &rep.profiles);
    report.details = to_value(&rep);
    Ok(report)
}

fn to_value<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("reports contain only serializable data")
}

fn push_profiles(report: &mut RunReport, grid: &Grid, profiles: &[Profile]) {
    for p in profiles {
        let mut out = String::from("time");
        let dim = grid.dim();
        let mut columns = String::new();
        for i in 0..grid.len() {
            let c = grid.center(i);
            columns.push_str(&match dim {
                1 => format!(",{:e}", c[0]),
                _ => format!(",{:e};{:e}", c[0], c[1]),
            });
        }
        // Header row: cell centres; one row per snapshot.
        out.push_str(&columns);
        out.push('\n');
        for (t, f) in &p.trajectory.snapshots {
            out.push_str(&format!("{t:e}"));
            for v in f.values() {
                out.push_str(&format!(",{v:e}"));
            }
            out.push('\n');
        }
        report.profiles.push((p.name.clone(), out));
    }
}

/// Long-format CSV of named fields: `cell,x[,y],name...`.
fn field_csv(grid: &Grid, fields: &[(&str, &Field)]) -> String {
    let mut out = String::from("cell,x");
    if grid.dim() == 2 {
        out.push_str(",y");
    }
    for (name, _) in fields {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for i in 0..grid.len() {
        let c = grid.center(i);
        out.push_str(&format!("{i},{:e}", c[0]));
        if grid.dim() == 2 {
            out.push_str(&format!(",{:e}", c[1]));
        }
        for (_, f) in fields {
            out.push_str(&format!(",{:e}", f.values()[i]));
        }
        out.push('\n');
    }
    out
}

/// One `bounds.csv` line per comparison and constant source.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundRow {
    pub scenario: String,
    pub p: NormIndex,
    pub d: f64,
    pub t: f64,
    pub alpha: f64,
    pub beta: f64,
    pub k: f64,
    pub validity: bool,
    pub predicted: f64,
    pub measured: f64,
    pub pass: bool,
}

pub const BOUNDS_HEADER: &str = "scenario,p,d,t,alpha,beta,k,validity,predicted,measured,pass";

impl BoundRow {
    pub fn csv(&self) -> String {
        format!(
            "{},{},{:e},{:e},{:e},{:e},{:e},{},{:e},{:e},{}",
            self.scenario,
            self.p,
            self.d,
            self.t,
            self.alpha,
            self.beta,
            self.k,
            self.validity,
            self.predicted,
            self.measured,
            self.pass
        )
    }
}

/// Rows for every comparison: the measured-constant line, then the
/// analytic-constant line labelled `<name>:analytic`. `t` is the elapsed
/// time `t - s` and `alpha` the effective diffusivity.
pub fn bound_rows(report: &RunReport) -> Vec<BoundRow> {
    let mut rows = Vec::new();
    for c in &report.comparisons {
        let dt = c.t - c.s;
        rows.push(BoundRow {
            scenario: report.name.clone(),
            p: c.p,
            d: c.d_xy,
            t: dt,
            alpha: c.alpha_effective,
            beta: c.beta,
            k: c.k,
            validity: c.validity_ok,
            predicted: c.predicted_bound,
            measured: c.measured_norm,
            pass: c.pass,
        });
        if let (Some(k), Some(pred)) = (c.k_analytic, c.predicted_bound_analytic) {
            rows.push(BoundRow {
                scenario: format!("{}:analytic", report.name),
                p: c.p,
                d: c.d_xy,
                t: dt,
                alpha: c.alpha_effective,
                beta: c.beta,
                k,
                validity: validity_interval_ok(c.d_xy, dt, c.alpha_effective, c.beta, k).0,
                predicted: pred,
                measured: c.measured_norm,
                pass: c.measured_norm <= pred * (1.0 + c.slack),
            });
        }
    }
    rows
}

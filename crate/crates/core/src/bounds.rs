//! Bound formulas, discrete operator norms, the tilted-propagator check and
//! end-to-end certification of off-diagonal decay.

use serde::{Deserialize, Serialize};

use crate::coefficients::{compute_alpha_beta, diffusion_is_spatially_constant, CoefficientSet};
use crate::cutoff::{build_phi, build_xi_general, build_xi_sharp, CutoffCertificate, TiltingExponent, DEFAULT_C3};
use crate::error::{Error, Result};
use crate::evolution::{assemble_propagator, generator, numerical_diffusivity, PropagatorMatrix, SolverConfig};
use crate::grid::{Field, Grid, Region};

/// Norm index `p` of an `L^p -> L^p` operator norm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NormIndex {
    #[serde(rename = "1")]
    One,
    #[serde(rename = "2")]
    Two,
    #[serde(rename = "inf")]
    Inf,
}

impl NormIndex {
    pub const ALL: [NormIndex; 3] = [NormIndex::One, NormIndex::Two, NormIndex::Inf];

    pub fn from_f64(p: f64) -> Result<Self> {
        if p == 1.0 {
            Ok(NormIndex::One)
        } else if p == 2.0 {
            Ok(NormIndex::Two)
        } else if p == f64::INFINITY {
            Ok(NormIndex::Inf)
        } else {
            Err(Error::InvalidNorm(p))
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            NormIndex::One => "1",
            NormIndex::Two => "2",
            NormIndex::Inf => "inf",
        }
    }
}

impl std::fmt::Display for NormIndex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for NormIndex {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "1" => Ok(NormIndex::One),
            "2" => Ok(NormIndex::Two),
            "inf" | "infinity" | "∞" => Ok(NormIndex::Inf),
            other => Err(Error::InvalidArgument(format!("unknown norm index {other:?}"))),
        }
    }
}

// ---------------------------------------------------------------------------
// Closed-form quantities
// ---------------------------------------------------------------------------

/// `1 - t (alpha n c2 / d^2 + beta c1 / d)`.
pub fn g_bracket(d: f64, t: f64, alpha: f64, beta: f64, c1: f64, c2: f64, n: usize) -> f64 {
    1.0 - t * (alpha * n as f64 * c2 / (d * d) + beta * c1 / d)
}

/// Decay exponent `G(mu)` and whether the bracket is positive.
#[allow(clippy::too_many_arguments)]
pub fn decay_rate_g(mu: f64, d: f64, t: f64, alpha: f64, beta: f64, c1: f64, c2: f64, n: usize) -> (f64, bool) {
    let bracket = g_bracket(d, t, alpha, beta, c1, c2, n);
    let g = -(4.0 * alpha * c1 * c1 * t / (d * d)) * mu * mu + 2.0 * bracket * mu;
    (g, bracket > 0.0)
}

/// Vertex `(mu*, G*)` of `G`; `(0, 0)` when the bracket is not positive.
pub fn optimize_g(d: f64, t: f64, alpha: f64, beta: f64, c1: f64, c2: f64, n: usize) -> (f64, f64) {
    let bracket = g_bracket(d, t, alpha, beta, c1, c2, n);
    if bracket <= 0.0 {
        return (0.0, 0.0);
    }
    let scale = d * d / (4.0 * alpha * c1 * c1 * t);
    (bracket * scale, bracket * bracket * scale)
}

/// `k = (1 + delta) max(n c2, c1)`.
pub fn constant_k(n: usize, c1: f64, c2: f64, delta: f64) -> Result<f64> {
    if !(c1 >= 1.0) || !(c2 >= 0.0) || !(delta >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "constant_k needs c1 >= 1, c2 >= 0, delta >= 0 (got {c1}, {c2}, {delta})"
        )));
    }
    Ok((1.0 + delta) * (n as f64 * c2).max(c1))
}

/// Whether `k (alpha/d + beta)(t - s) <= d`, with the largest admissible
/// `t - s` (infinite when `alpha = beta = 0`).
pub fn validity_interval_ok(d: f64, t_minus_s: f64, alpha: f64, beta: f64, k: f64) -> (bool, f64) {
    let rate = k * (alpha / d + beta);
    let max = if rate > 0.0 { d / rate } else { f64::INFINITY };
    (rate * t_minus_s <= d, max)
}

/// `exp(-d^2 / (4 k^2 alpha (t - s)))`.
pub fn gaussian_bound(d: f64, k: f64, alpha: f64, t_minus_s: f64) -> f64 {
    let denom = 4.0 * k * k * alpha * t_minus_s;
    if denom <= 0.0 {
        return if d > 0.0 { 0.0 } else { 1.0 };
    }
    (-d * d / denom).exp()
}

/// `exp(-r^2 / (64 k^2 alpha (t - s)))`.
pub fn tail_bound(r: f64, k: f64, alpha: f64, t_minus_s: f64) -> f64 {
    gaussian_bound(r / 4.0, k, alpha, t_minus_s)
}

// ---------------------------------------------------------------------------
// Operator norms
// ---------------------------------------------------------------------------

fn block_columns<'a>(m: &'a PropagatorMatrix, y: &Region) -> Result<Vec<&'a [f64]>> {
    y.cells()
        .iter()
        .map(|&j| m.column(j).ok_or(Error::MissingColumn(j)))
        .collect()
}

/// `||chi_X M chi_Y||` for `p` in `{1, 2, inf}` on a uniform grid.
pub fn measure_opnorm(m: &PropagatorMatrix, x: &Region, y: &Region, p: NormIndex) -> Result<f64> {
    let cols = block_columns(m, y)?;
    if x.is_empty() || y.is_empty() {
        return Ok(0.0);
    }
    let rows = x.cells();
    Ok(match p {
        NormIndex::One => cols
            .iter()
            .map(|c| rows.iter().map(|&i| c[i].abs()).sum::<f64>())
            .fold(0.0, f64::max),
        NormIndex::Inf => rows
            .iter()
            .map(|&i| cols.iter().map(|c| c[i].abs()).sum::<f64>())
            .fold(0.0, f64::max),
        NormIndex::Two => power_iteration(&cols, rows, 200, 1e-8),
    })
}

/// Largest singular value of the `rows x cols` block, starting from the
/// all-ones vector.
fn power_iteration(cols: &[&[f64]], rows: &[usize], max_iter: usize, tol: f64) -> f64 {
    let apply = |v: &[f64]| -> Vec<f64> {
        rows.iter()
            .map(|&i| cols.iter().zip(v).map(|(c, vj)| c[i] * vj).sum())
            .collect()
    };
    let apply_t = |w: &[f64]| -> Vec<f64> {
        cols.iter()
            .map(|c| rows.iter().zip(w).map(|(&i, wi)| c[i] * wi).sum())
            .collect()
    };
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut v = vec![1.0 / (cols.len() as f64).sqrt(); cols.len()];
    let mut sigma = 0.0;
    for _ in 0..max_iter {
        let w = apply(&v);
        let next_sigma = norm(&w);
        if next_sigma == 0.0 {
            return 0.0;
        }
        let mut u = apply_t(&w);
        let nu = norm(&u);
        if nu == 0.0 {
            return next_sigma;
        }
        u.iter_mut().for_each(|x| *x /= nu);
        let done = (next_sigma - sigma).abs() <= tol * next_sigma;
        sigma = next_sigma;
        v = u;
        if done {
            break;
        }
    }
    sigma
}

/// `max_{i in X} (M chi_Y)_i`, which equals the `p = inf` norm of
/// `chi_X M chi_Y` for an entrywise nonnegative `M`.
pub fn inf_norm_from_indicator_response(response: &Field, x: &Region) -> f64 {
    x.cells()
        .iter()
        .map(|&i| response.values()[i].abs())
        .fold(0.0, f64::max)
}

// ---------------------------------------------------------------------------
// Tilted generator
// ---------------------------------------------------------------------------

/// How the growth rate `A` of the tilted generator is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorForm {
    /// Column sums of `e^phi L_h e^-phi` minus their nonpositive
    /// `c - div_h b` part, i.e. `max_j [sum_{i != j} L_ij (e^{phi_i - phi_j} - 1)]_+`.
    #[default]
    Discrete,
    /// Finite differences of `div(a grad phi) + <a grad phi, grad phi> - <b, grad phi>`.
    Continuum,
}

fn check_localized(phi: &Field, grid: &Grid, u: &Region) -> Result<()> {
    let v = phi.values();
    let mut worst: f64 = 0.0;
    for f in grid.faces() {
        if !u.contains(f.lo) && !u.contains(f.hi) {
            worst = worst.max((v[f.lo] - v[f.hi]).abs() / grid.spacing(f.axis));
        }
    }
    if worst > 1e-12 {
        return Err(Error::NotLocalized(worst));
    }
    Ok(())
}

/// Cells of `u` together with their face neighbours.
fn closure(grid: &Grid, u: &Region) -> Vec<usize> {
    let mut cells: Vec<usize> = u.cells().to_vec();
    for &i in u.cells() {
        for k in 0..grid.dim() {
            for d in [-1, 1] {
                if let Some(n) = grid.neighbour(i, k, d) {
                    cells.push(n);
                }
            }
        }
    }
    cells.sort_unstable();
    cells.dedup();
    cells
}

/// `A = sup_{x in U, t} (div(a grad phi) + <a grad phi, grad phi> - <b, grad phi>)_+`
/// over the sampled times.
pub fn tilted_generator_sup(
    phi: &TiltingExponent,
    coeffs: &CoefficientSet,
    grid: &Grid,
    u: &Region,
    time_samples: usize,
    epsilon: f64,
    form: GeneratorForm,
) -> Result<f64> {
    let p = &phi.phi;
    if p.len() != grid.len() {
        return Err(Error::InvalidField("phi does not match the grid".into()));
    }
    check_localized(p, grid, u)?;
    let v = p.values();
    let mut a_sup: f64 = 0.0;
    for t in coeffs.sample_times(time_samples.max(1)) {
        let snap = coeffs.snapshot(grid, t)?;
        match form {
            GeneratorForm::Discrete => {
                let l = generator(grid, &snap, epsilon)?.transpose();
                // Row j of the transpose holds column j of L.
                for j in closure(grid, u) {
                    let s: f64 = l
                        .row(j)
                        .filter(|(i, _)| *i != j)
                        .map(|(i, lij)| lij * ((v[i] - v[j]).exp() - 1.0))
                        .sum();
                    a_sup = a_sup.max(s);
                }
            }
            GeneratorForm::Continuum => {
                for &i in u.cells() {
                    let mut grad = [0.0; 2];
                    let mut div_flux = 0.0;
                    for k in 0..grid.dim() {
                        let h = grid.spacing(k);
                        let lo = grid.neighbour(i, k, -1);
                        let hi = grid.neighbour(i, k, 1);
                        let (vm, vp) = (lo.map_or(v[i], |n| v[n]), hi.map_or(v[i], |n| v[n]));
                        let span = match (lo, hi) {
                            (Some(_), Some(_)) => 2.0 * h,
                            _ => h,
                        };
                        grad[k] = (vp - vm) / span;
                        for n in [hi, lo].into_iter().flatten() {
                            let w = 0.5 * (snap.a[i][k][k] + snap.a[n][k][k]) + epsilon;
                            div_flux += w * (v[n] - v[i]) / (h * h);
                        }
                    }
                    let a = snap.a[i];
                    let mut quad = 0.0;
                    let mut drift = 0.0;
                    for r in 0..grid.dim() {
                        for c in 0..grid.dim() {
                            quad += (a[r][c] + if r == c { epsilon } else { 0.0 }) * grad[r] * grad[c];
                        }
                        drift += snap.b[i][r] * grad[r];
                    }
                    a_sup = a_sup.max(div_flux + quad - drift);
                }
            }
        }
    }
    Ok(a_sup)
}

/// Outcome of the tilted-propagator inequality
/// `sum e^phi M (e^-phi v) <= e^{(t-s) A} sum v`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TiltedCheck {
    pub a: f64,
    pub lhs: f64,
    pub rhs: f64,
    /// The growth the implicit Euler steps can produce:
    /// `prod_k (1 - dt_k A)^{-1} sum v` (infinite if some `dt_k A >= 1`).
    pub rhs_implicit: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TiltedOptions {
    pub time_samples: usize,
    pub epsilon: f64,
    pub form: GeneratorForm,
    pub slack: f64,
}

impl Default for TiltedOptions {
    fn default() -> Self {
        TiltedOptions {
            time_samples: 8,
            epsilon: 0.0,
            form: GeneratorForm::Discrete,
            slack: 1e-6,
        }
    }
}

pub fn check_tilted_propagator_inequality(
    phi: &TiltingExponent,
    coeffs: &CoefficientSet,
    grid: &Grid,
    m: &PropagatorMatrix,
    v: &Field,
    u: &Region,
    opts: &TiltedOptions,
) -> Result<TiltedCheck> {
    if v.values().iter().any(|x| *x < 0.0) {
        return Err(Error::InvalidField("v must be nonnegative".into()));
    }
    let a = tilted_generator_sup(phi, coeffs, grid, u, opts.time_samples, opts.epsilon, opts.form)?;
    let plus = phi.weights(1.0);
    let minus = phi.weights(-1.0);
    let tilted_in: Vec<f64> = v.values().iter().zip(minus.values()).map(|(x, w)| x * w).collect();
    let out = m.apply(&tilted_in)?;
    let vol = grid.cell_volume();
    let lhs: f64 = out.iter().zip(plus.values()).map(|(x, w)| x * w).sum::<f64>() * vol;
    let mass = v.integral(grid);
    let rhs = ((m.t - m.s) * a).exp() * mass;
    let rhs_implicit = m
        .step_times
        .windows(2)
        .map(|w| 1.0 - (w[1] - w[0]) * a)
        .fold(mass, |acc, f| if f > 0.0 { acc / f } else { f64::INFINITY });
    Ok(TiltedCheck {
        a,
        lhs,
        rhs,
        rhs_implicit,
        pass: lhs <= rhs * (1.0 + opts.slack),
    })
}

// ---------------------------------------------------------------------------
// Certification
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum BoundMode {
    /// `exp(-d^2 / (4 k^2 alpha_eff (t - s)))` inside the validity interval.
    Gaussian,
    /// `exp(-d^2 / (4 alpha (t - s)))` for position-independent `a` and no drift.
    Sharp,
    /// `exp(-r^2 / (64 k^2 alpha (t - s)))` for `X = B_{r/4}`, `Y` outside `B_{r/2}`.
    Tail { r: f64 },
}

impl BoundMode {
    pub fn name(&self) -> &'static str {
        match self {
            BoundMode::Gaussian => "gaussian",
            BoundMode::Sharp => "sharp",
            BoundMode::Tail { .. } => "tail",
        }
    }
}

/// Knobs of [`certify_dg_bound`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertifyOptions {
    pub c3: f64,
    /// `epsilon` of the sharp cutoff.
    pub sharp_epsilon: f64,
    pub delta: f64,
    pub slack: f64,
    pub time_samples: usize,
    /// Relax the `c <= 0` requirement (only meaningful for `p = 1`).
    pub relax_c: bool,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        CertifyOptions {
            c3: DEFAULT_C3,
            sharp_epsilon: 0.01,
            delta: 1.0,
            slack: 0.02,
            time_samples: 8,
            relax_c: false,
        }
    }
}

/// Predicted versus measured off-diagonal decay, with every intermediate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundComparison {
    pub mode: BoundMode,
    pub x_label: String,
    pub y_label: String,
    pub d_xy: f64,
    pub p: NormIndex,
    pub s: f64,
    pub t: f64,
    pub alpha: f64,
    pub beta: f64,
    pub alpha_num: f64,
    pub alpha_effective: f64,
    pub dim: usize,
    pub c1_measured: f64,
    pub c2_measured: f64,
    pub c1_analytic: Option<f64>,
    pub c2_analytic: Option<f64>,
    /// `k` from the measured cutoff constants (used for the verdict).
    pub k: f64,
    /// `k` from the analytic cutoff constants.
    pub k_analytic: Option<f64>,
    pub validity_ok: bool,
    pub max_interval: Option<f64>,
    pub predicted_bound: f64,
    pub predicted_bound_analytic: Option<f64>,
    pub mu_star: f64,
    pub g_star: f64,
    /// Growth rate of the tilted generator at `mu*`.
    pub tilted_a: Option<f64>,
    pub measured_norm: f64,
    pub slack: f64,
    pub pass: bool,
}

impl BoundComparison {
    /// Entries outside the validity interval are listed but not judged.
    pub fn applicable(&self) -> bool {
        self.validity_ok
    }

    /// `pass` restricted to applicable entries.
    pub fn counts(&self) -> bool {
        !self.applicable() || self.pass
    }
}

fn judge(measured: f64, predicted: f64, slack: f64) -> bool {
    measured <= predicted * (1.0 + slack)
}

/// Geometry of the tail bound: `X = B_{r/4}(x0)`, `Y = B_{r/2}(x0)^c`.
pub fn tail_regions(grid: &Grid, x0: [f64; 2], r: f64) -> (Region, Region) {
    let dist = |c: [f64; 2]| (0..grid.dim()).map(|k| (c[k] - x0[k]).powi(2)).sum::<f64>().sqrt();
    let x = Region::from_predicate(grid, "X", |c| dist(c) <= r / 4.0);
    let y = Region::from_predicate(grid, "Y", |c| dist(c) >= r / 2.0);
    (x, y)
}

/// Runs the full pipeline: constants, cutoff, `k`, validity, propagator
/// columns on `Y`, measured norm, and the verdict.
#[allow(clippy::too_many_arguments)]
pub fn certify_dg_bound(
    coeffs: &CoefficientSet,
    grid: &Grid,
    x: &Region,
    y: &Region,
    s: f64,
    t: f64,
    p: NormIndex,
    cfg: &SolverConfig,
    mode: BoundMode,
    opts: &CertifyOptions,
) -> Result<BoundComparison> {
    let prepared = prepare_certificate(coeffs, grid, x, y, s, t, mode, opts)?;
    let m = assemble_propagator(coeffs, grid, s, t, cfg, Some(y))?;
    let measured = measure_opnorm(&m, x, y, p)?;
    prepared.finish(p, measured, cfg, coeffs, grid, opts)
}

/// Same as [`certify_dg_bound`] for all three norm indices with one
/// propagator assembly.
#[allow(clippy::too_many_arguments)]
pub fn certify_dg_bound_all(
    coeffs: &CoefficientSet,
    grid: &Grid,
    x: &Region,
    y: &Region,
    s: f64,
    t: f64,
    ps: &[NormIndex],
    cfg: &SolverConfig,
    mode: BoundMode,
    opts: &CertifyOptions,
) -> Result<Vec<BoundComparison>> {
    let prepared = prepare_certificate(coeffs, grid, x, y, s, t, mode, opts)?;
    let m = assemble_propagator(coeffs, grid, s, t, cfg, Some(y))?;
    ps.iter()
        .map(|&p| {
            let measured = measure_opnorm(&m, x, y, p)?;
            prepared.finish(p, measured, cfg, coeffs, grid, opts)
        })
        .collect()
}

/// Everything of a comparison except the measured norm.
#[derive(Debug, Clone)]
pub struct PreparedBound {
    pub certificate: CutoffCertificate,
    pub template: BoundComparison,
}

impl PreparedBound {
    /// Completes the comparison with a measured norm.
    pub fn with_measured(&self, p: NormIndex, measured: f64) -> BoundComparison {
        let mut out = self.template.clone();
        out.p = p;
        out.measured_norm = measured;
        out.pass = judge(measured, out.predicted_bound, out.slack);
        out
    }

    fn finish(
        &self,
        p: NormIndex,
        measured: f64,
        cfg: &SolverConfig,
        coeffs: &CoefficientSet,
        grid: &Grid,
        opts: &CertifyOptions,
    ) -> Result<BoundComparison> {
        let mut out = self.with_measured(p, measured);
        if out.mu_star > 0.0 && out.mode != BoundMode::Sharp {
            let phi = build_phi(&self.certificate, out.mu_star)?;
            let eps = cfg.resolve_epsilon(coeffs, grid)?;
            let u = Region::all(grid, "U");
            out.tilted_a = Some(tilted_generator_sup(
                &phi,
                coeffs,
                grid,
                &u,
                opts.time_samples,
                eps,
                GeneratorForm::Continuum,
            )?);
        }
        Ok(out)
    }
}

/// Constants, cutoff and predicted bound for `(X, Y, s, t)`.
#[allow(clippy::too_many_arguments)]
pub fn prepare_certificate(
    coeffs: &CoefficientSet,
    grid: &Grid,
    x: &Region,
    y: &Region,
    s: f64,
    t: f64,
    mode: BoundMode,
    opts: &CertifyOptions,
) -> Result<PreparedBound> {
    if !(t > s) {
        return Err(Error::InvalidArgument(format!(
            "certification needs t > s (got s = {s}, t = {t})"
        )));
    }
    let report = crate::coefficients::validate_assumptions(coeffs, grid, opts.time_samples.max(2))?;
    if !report.all_ok(opts.relax_c) {
        return Err(Error::Assumption(report.failures(opts.relax_c).join("; ")));
    }
    let (alpha, beta) = compute_alpha_beta(coeffs, grid, opts.time_samples)?;
    let alpha_num = numerical_diffusivity(coeffs, grid, opts.time_samples)?;
    let certificate = match mode {
        BoundMode::Sharp => {
            if !diffusion_is_spatially_constant(coeffs, grid, opts.time_samples, 1e-12)? {
                return Err(Error::Assumption("sharp mode needs a independent of position".into()));
            }
            if beta > 0.0 {
                return Err(Error::Assumption(format!("sharp mode needs b = 0 (beta = {beta})")));
            }
            build_xi_sharp(x, y, grid, opts.sharp_epsilon)?
        }
        BoundMode::Gaussian | BoundMode::Tail { .. } => build_xi_general(x, y, grid, opts.c3)?,
    };
    let template = comparison_from_certificate(
        &certificate,
        mode,
        s,
        t,
        Constants {
            alpha,
            beta,
            alpha_num,
            dim: grid.dim(),
        },
        opts,
    )?;
    Ok(PreparedBound { certificate, template })
}

/// Bound constants of a coefficient family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Constants {
    pub alpha: f64,
    pub beta: f64,
    pub alpha_num: f64,
    /// Dimension entering `k = (1 + delta) max(n c2, c1)`.
    pub dim: usize,
}

/// Predicted bound from a certificate and the coefficient constants; the
/// measured norm is left as `NaN`.
pub fn comparison_from_certificate(
    cert: &CutoffCertificate,
    mode: BoundMode,
    s: f64,
    t: f64,
    k: Constants,
    opts: &CertifyOptions,
) -> Result<BoundComparison> {
    let Constants {
        alpha,
        beta,
        alpha_num,
        dim: n,
    } = k;
    let dt = t - s;
    let d = cert.d_xy;
    let mut out = BoundComparison {
        mode,
        x_label: cert.x.label.clone(),
        y_label: cert.y.label.clone(),
        d_xy: d,
        p: NormIndex::One,
        s,
        t,
        alpha,
        beta,
        alpha_num,
        alpha_effective: alpha.max(alpha_num),
        dim: n,
        c1_measured: cert.c1_measured,
        c2_measured: cert.c2_measured,
        c1_analytic: None,
        c2_analytic: None,
        k: 1.0,
        k_analytic: None,
        validity_ok: true,
        max_interval: None,
        predicted_bound: 1.0,
        predicted_bound_analytic: None,
        mu_star: 0.0,
        g_star: 0.0,
        tilted_a: None,
        measured_norm: f64::NAN,
        slack: opts.slack,
        pass: false,
    };
    match mode {
        BoundMode::Sharp => {
            out.alpha_effective = alpha;
            out.predicted_bound = gaussian_bound(d, 1.0, alpha, dt);
            out.mu_star = d * d / (4.0 * alpha * dt);
            out.g_star = out.mu_star;
        }
        BoundMode::Gaussian | BoundMode::Tail { .. } => {
            let c1 = cert.c1_measured.max(1.0);
            let k = constant_k(n, c1, cert.c2_measured, opts.delta)?;
            let k_an = constant_k(n, cert.c1_analytic, cert.c2_analytic, opts.delta)?;
            out.c1_analytic = Some(cert.c1_analytic);
            out.c2_analytic = Some(cert.c2_analytic);
            out.k = k;
            out.k_analytic = Some(k_an);
            let a_eff = out.alpha_effective;
            let (ok, max) = validity_interval_ok(d, dt, a_eff, beta, k);
            out.validity_ok = ok;
            out.max_interval = max.is_finite().then_some(max);
            let (mu, g) = optimize_g(d, dt, a_eff, beta, c1, cert.c2_measured, n);
            out.mu_star = mu;
            out.g_star = g;
            let (pred, pred_an) = match mode {
                BoundMode::Tail { r } => (tail_bound(r, k, a_eff, dt), tail_bound(r, k_an, a_eff, dt)),
                _ => (gaussian_bound(d, k, a_eff, dt), gaussian_bound(d, k_an, a_eff, dt)),
            };
            out.predicted_bound = pred;
            out.predicted_bound_analytic = Some(pred_an);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::Constant;
    use approx::assert_relative_eq;

    #[test]
    fn k_examples() {
        assert_eq!(constant_k(1, 1.0, 1.0, 1.0).unwrap(), 2.0);
        assert_eq!(constant_k(2, 3.0, 1.0, 1.0).unwrap(), 6.0);
        assert_eq!(constant_k(1, 1.0, 0.0, 0.0).unwrap(), 1.0);
        assert!(constant_k(1, 0.5, 0.0, 1.0).is_err());
    }

    #[test]
    fn validity_examples() {
        assert!(validity_interval_ok(1.0, 0.5, 1.0, 0.0, 2.0).0);
        assert!(!validity_interval_ok(1.0, 0.5001, 1.0, 0.0, 2.0).0);
        assert_relative_eq!(validity_interval_ok(1.0, 0.1, 0.0, 1.0, 2.0).1, 0.5);
        assert!(validity_interval_ok(1.0, 1e-300, 5.0, 5.0, 100.0).0);
    }

    #[test]
    fn g_examples() {
        assert_eq!(decay_rate_g(0.0, 1.0, 0.1, 1.0, 0.0, 1.0, 0.0, 1).0, 0.0);
        let (mu, g) = optimize_g(1.0, 0.1, 1.0, 0.0, 1.0, 0.0, 1);
        assert_relative_eq!(g, 2.5, epsilon = 1e-14);
        assert_relative_eq!(mu, 2.5, epsilon = 1e-14);
        // Bracket exactly zero: G is a pure negative quadratic.
        let t = 0.5;
        assert_eq!(g_bracket(1.0, t, 1.0, 0.0, 1.0, 2.0, 1), 0.0);
        assert_eq!(optimize_g(1.0, t, 1.0, 0.0, 1.0, 2.0, 1), (0.0, 0.0));
        for k in 1..10 {
            assert!(decay_rate_g(k as f64 * 0.3, 1.0, t, 1.0, 0.0, 1.0, 2.0, 1).0 <= 0.0);
        }
    }

    #[test]
    fn tail_substitution() {
        let (alpha, t): (f64, f64) = (0.7, 0.3);
        let r = 16.0 * (alpha * t).sqrt();
        assert_relative_eq!(tail_bound(r, 2.0, alpha, t), (-1.0f64).exp(), epsilon = 1e-15);
    }

    #[test]
    fn opnorm_identity_cases() {
        let g = Grid::uniform_1d(0.0, 1.0, 6).unwrap();
        let id = PropagatorMatrix::from_dense(
            &(0..6)
                .map(|i| (0..6).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
                .collect::<Vec<_>>(),
            0.0,
            1.0,
        )
        .unwrap();
        let x = Region::from_indices(&g, [0, 1], "X").unwrap();
        let y = Region::from_indices(&g, [3, 4], "Y").unwrap();
        for p in NormIndex::ALL {
            assert_eq!(measure_opnorm(&id, &x, &y, p).unwrap(), 0.0);
            assert_relative_eq!(measure_opnorm(&id, &x, &x, p).unwrap(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn opnorm_missing_column() {
        let g = Grid::uniform_1d(0.0, 1.0, 4).unwrap();
        let m = PropagatorMatrix::from_columns(4, 0.0, 1.0, vec![0], vec![vec![1.0, 0.0, 0.0, 0.0]]).unwrap();
        let x = Region::from_indices(&g, [0], "X").unwrap();
        let y = Region::from_indices(&g, [2], "Y").unwrap();
        assert!(matches!(
            measure_opnorm(&m, &x, &y, NormIndex::One),
            Err(Error::MissingColumn(2))
        ));
    }

    #[test]
    fn constant_phi_has_zero_growth() {
        let g = Grid::uniform_1d(0.0, 1.0, 32).unwrap();
        let c = CoefficientSet::from_model(Constant::isotropic(1.0).with_drift([0.3, 0.0]), (0.0, 1.0));
        let phi = TiltingExponent::from_field(Field::constant(&g, 4.0));
        let u = Region::all(&g, "U");
        for form in [GeneratorForm::Discrete, GeneratorForm::Continuum] {
            assert_eq!(tilted_generator_sup(&phi, &c, &g, &u, 3, 0.0, form).unwrap(), 0.0);
        }
    }

    #[test]
    fn linear_phi_growth_rate() {
        // phi = mu (1 - 2 x / d): A = 4 mu^2 alpha / d^2.
        let g = Grid::uniform_1d(0.0, 1.0, 2000).unwrap();
        let (mu, d, alpha) = (1.5, 1.0, 0.8);
        let c = CoefficientSet::from_model(Constant::isotropic(alpha), (0.0, 1.0));
        let phi = TiltingExponent::from_field(Field::from_fn(&g, |x| mu * (1.0 - 2.0 * x[0] / d)));
        // Boundary cells are left out of U: their one-sided stencil sees a kink.
        let u = Region::from_indices(&g, 1..1999, "U").unwrap();
        let cont = tilted_generator_sup(&phi, &c, &g, &u, 2, 0.0, GeneratorForm::Continuum).unwrap();
        assert_relative_eq!(cont, 4.0 * mu * mu * alpha / (d * d), max_relative = 1e-9);
    }

    #[test]
    fn discrete_and_continuum_forms_agree_for_smooth_phi() {
        let g = Grid::uniform_1d(0.0, 1.0, 4000).unwrap();
        let c = CoefficientSet::from_model(Constant::isotropic(0.5).with_drift([0.2, 0.0]), (0.0, 1.0));
        let eta = crate::cutoff::build_eta(2.0);
        let phi = TiltingExponent::from_field(Field::from_fn(&g, |x| 2.0 * (1.0 - 2.0 * eta.value(x[0]))));
        let u = Region::all(&g, "U");
        let cont = tilted_generator_sup(&phi, &c, &g, &u, 2, 0.0, GeneratorForm::Continuum).unwrap();
        let disc = tilted_generator_sup(&phi, &c, &g, &u, 2, 0.0, GeneratorForm::Discrete).unwrap();
        assert!(cont > 0.0);
        assert_relative_eq!(disc, cont, max_relative = 2e-2);
    }

    #[test]
    fn unlocalized_phi_is_rejected() {
        let g = Grid::uniform_1d(0.0, 1.0, 16).unwrap();
        let c = CoefficientSet::from_model(Constant::isotropic(1.0), (0.0, 1.0));
        let phi = TiltingExponent::from_field(Field::from_fn(&g, |x| x[0]));
        let u = Region::from_indices(&g, 0..8, "U").unwrap();
        assert!(matches!(
            tilted_generator_sup(&phi, &c, &g, &u, 2, 0.0, GeneratorForm::Discrete),
            Err(Error::NotLocalized(_))
        ));
    }
}

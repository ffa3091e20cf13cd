//! Time-dependent coefficient triples `(a, b, c)` for
//! `Lu = div(a grad u) + <b, grad u> + c u`, the standing-assumption
//! validator, and the bound constants alpha and beta.
//!
//! Coefficients come either from a closed-form [`CoefficientModel`] or from
//! tabulated per-cell snapshots. Everything downstream consumes a
//! [`Snapshot`]: the per-cell values at one instant.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Boundary, Grid};

/// Symmetric 2x2 matrix; 1D problems use only `[0][0]`.
pub type Sym2 = [[f64; 2]; 2];

/// Default tolerance for the PSD and sign checks.
pub const TOL_PSD: f64 = 1e-10;

/// Closed-form coefficients evaluated at a point `x` and time `t`.
///
/// Implementations must be pure: the library evaluates them concurrently.
pub trait CoefficientModel: Send + Sync + fmt::Debug {
    fn name(&self) -> &str;
    fn a(&self, x: [f64; 2], t: f64) -> Sym2;
    fn b(&self, x: [f64; 2], t: f64) -> [f64; 2];
    fn c(&self, x: [f64; 2], t: f64) -> f64;

    /// Analytic row divergence of `a`; replaces central differences when given.
    fn div_a(&self, _x: [f64; 2], _t: f64) -> Option<[f64; 2]> {
        None
    }

    /// Analytic divergence of `b`; replaces the discrete divergence when given.
    fn div_b(&self, _x: [f64; 2], _t: f64) -> Option<f64> {
        None
    }

    fn is_autonomous(&self) -> bool {
        false
    }
}

/// Per-cell coefficient values at one instant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub a: Vec<Sym2>,
    pub b: Vec<[f64; 2]>,
    pub c: Vec<f64>,
}

impl Snapshot {
    pub fn zeros(grid: &Grid) -> Self {
        let n = grid.len();
        Snapshot {
            a: vec![[[0.0; 2]; 2]; n],
            b: vec![[0.0; 2]; n],
            c: vec![0.0; n],
        }
    }

    /// Isotropic diffusion `a = d_i I` with no drift or reaction.
    pub fn isotropic(diffusivity: &[f64]) -> Self {
        Snapshot {
            a: diffusivity.iter().map(|&d| [[d, 0.0], [0.0, d]]).collect(),
            b: vec![[0.0; 2]; diffusivity.len()],
            c: vec![0.0; diffusivity.len()],
        }
    }

    pub fn len(&self) -> usize {
        self.c.len()
    }

    pub fn is_empty(&self) -> bool {
        self.c.is_empty()
    }

    fn check_finite(&self, time: f64) -> Result<()> {
        for i in 0..self.len() {
            let a = &self.a[i];
            if !(a[0][0].is_finite() && a[0][1].is_finite() && a[1][0].is_finite() && a[1][1].is_finite()) {
                return Err(Error::NonFiniteCoefficient {
                    name: "a",
                    cell: i,
                    time,
                });
            }
            if !(self.b[i][0].is_finite() && self.b[i][1].is_finite()) {
                return Err(Error::NonFiniteCoefficient {
                    name: "b",
                    cell: i,
                    time,
                });
            }
            if !self.c[i].is_finite() {
                return Err(Error::NonFiniteCoefficient {
                    name: "c",
                    cell: i,
                    time,
                });
            }
        }
        Ok(())
    }

    fn lerp(&self, other: &Snapshot, w: f64) -> Snapshot {
        let mix = |x: f64, y: f64| (1.0 - w) * x + w * y;
        Snapshot {
            a: self
                .a
                .iter()
                .zip(&other.a)
                .map(|(p, q)| {
                    [
                        [mix(p[0][0], q[0][0]), mix(p[0][1], q[0][1])],
                        [mix(p[1][0], q[1][0]), mix(p[1][1], q[1][1])],
                    ]
                })
                .collect(),
            b: self
                .b
                .iter()
                .zip(&other.b)
                .map(|(p, q)| [mix(p[0], q[0]), mix(p[1], q[1])])
                .collect(),
            c: self.c.iter().zip(&other.c).map(|(&p, &q)| mix(p, q)).collect(),
        }
    }
}

/// Time-sampled per-cell coefficients with linear interpolation in time and
/// constant extrapolation outside the sampled range.
#[derive(Debug, Clone, PartialEq)]
pub struct Tabulated {
    samples: Vec<(f64, Snapshot)>,
}

impl Tabulated {
    pub fn new(mut samples: Vec<(f64, Snapshot)>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidCoefficients("no tabulated samples".into()));
        }
        samples.sort_by(|a, b| a.0.total_cmp(&b.0));
        if samples.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::InvalidCoefficients("duplicate sample times".into()));
        }
        let n = samples[0].1.len();
        if samples
            .iter()
            .any(|(_, s)| s.len() != n || s.a.len() != n || s.b.len() != n)
        {
            return Err(Error::InvalidCoefficients("sample sizes differ".into()));
        }
        for (t, s) in &samples {
            s.check_finite(*t)?;
        }
        Ok(Tabulated { samples })
    }

    pub fn cells(&self) -> usize {
        self.samples[0].1.len()
    }

    pub fn at(&self, t: f64) -> Snapshot {
        let s = &self.samples;
        if t <= s[0].0 {
            return s[0].1.clone();
        }
        if t >= s[s.len() - 1].0 {
            return s[s.len() - 1].1.clone();
        }
        let k = s.partition_point(|(ts, _)| *ts <= t);
        let (t0, s0) = &s[k - 1];
        let (t1, s1) = &s[k];
        s0.lerp(s1, (t - t0) / (t1 - t0))
    }

    fn is_autonomous(&self) -> bool {
        self.samples.len() == 1
    }
}

#[derive(Debug, Clone)]
pub enum Source {
    Model(Arc<dyn CoefficientModel>),
    Tabulated(Tabulated),
}

/// Coefficients of the generator together with the time window `(s, T)`
/// over which suprema are taken.
#[derive(Debug, Clone)]
pub struct CoefficientSet {
    pub source: Source,
    pub window: (f64, f64),
}

impl CoefficientSet {
    pub fn from_model(model: impl CoefficientModel + 'static, window: (f64, f64)) -> Self {
        CoefficientSet {
            source: Source::Model(Arc::new(model)),
            window,
        }
    }

    pub fn from_arc(model: Arc<dyn CoefficientModel>, window: (f64, f64)) -> Self {
        CoefficientSet {
            source: Source::Model(model),
            window,
        }
    }

    pub fn tabulated(table: Tabulated, window: (f64, f64)) -> Self {
        CoefficientSet {
            source: Source::Tabulated(table),
            window,
        }
    }

    /// Frozen coefficients: the same snapshot at every time.
    pub fn frozen(snapshot: Snapshot, window: (f64, f64)) -> Result<Self> {
        Ok(CoefficientSet::tabulated(
            Tabulated::new(vec![(window.0, snapshot)])?,
            window,
        ))
    }

    pub fn name(&self) -> String {
        match &self.source {
            Source::Model(m) => m.name().to_string(),
            Source::Tabulated(_) => "tabulated".to_string(),
        }
    }

    pub fn is_autonomous(&self) -> bool {
        match &self.source {
            Source::Model(m) => m.is_autonomous(),
            Source::Tabulated(t) => t.is_autonomous(),
        }
    }

    /// Per-cell values at time `t`, checked for finiteness.
    pub fn snapshot(&self, grid: &Grid, t: f64) -> Result<Snapshot> {
        let snap = match &self.source {
            Source::Model(m) => {
                let n = grid.len();
                let mut s = Snapshot {
                    a: Vec::with_capacity(n),
                    b: Vec::with_capacity(n),
                    c: Vec::with_capacity(n),
                };
                for i in 0..n {
                    let x = grid.center(i);
                    s.a.push(m.a(x, t));
                    s.b.push(m.b(x, t));
                    s.c.push(m.c(x, t));
                }
                s
            }
            Source::Tabulated(tab) => {
                if tab.cells() != grid.len() {
                    return Err(Error::InvalidCoefficients(format!(
                        "tabulated coefficients have {} cells, grid has {}",
                        tab.cells(),
                        grid.len()
                    )));
                }
                tab.at(t)
            }
        };
        snap.check_finite(t)?;
        Ok(snap)
    }

    /// `time_samples` uniformly spaced instants covering the window.
    pub fn sample_times(&self, time_samples: usize) -> Vec<f64> {
        let (s, t) = self.window;
        if time_samples <= 1 || t <= s {
            return vec![s];
        }
        (0..time_samples)
            .map(|k| s + (t - s) * k as f64 / (time_samples - 1) as f64)
            .collect()
    }

    fn model(&self) -> Option<&Arc<dyn CoefficientModel>> {
        match &self.source {
            Source::Model(m) => Some(m),
            Source::Tabulated(_) => None,
        }
    }

    /// Divergence of `b` per cell at time `t`: analytic when the model
    /// supplies it, otherwise the discrete divergence of [`face_divergence`].
    pub fn div_b(&self, grid: &Grid, snap: &Snapshot, t: f64) -> Vec<f64> {
        if let Some(m) = self.model() {
            let analytic: Option<Vec<f64>> = (0..grid.len()).map(|i| m.div_b(grid.center(i), t)).collect();
            if let Some(v) = analytic {
                return v;
            }
        }
        face_divergence(grid, &snap.b)
    }

    /// Row divergence `(div a)^j = sum_i d_i a^{ij}` per cell at time `t`.
    pub fn div_a(&self, grid: &Grid, snap: &Snapshot, t: f64) -> Vec<[f64; 2]> {
        if let Some(m) = self.model() {
            let analytic: Option<Vec<[f64; 2]>> = (0..grid.len()).map(|i| m.div_a(grid.center(i), t)).collect();
            if let Some(v) = analytic {
                return v;
            }
        }
        row_divergence(grid, &snap.a)
    }

    /// Normal component of `b` on every Neumann face at time `t`, as
    /// `(cell, value)`. Closed-form models are evaluated at the face centers;
    /// tabulated data uses the value in the boundary cell.
    pub fn boundary_normal_b(&self, grid: &Grid, snap: &Snapshot, t: f64) -> Vec<(usize, f64)> {
        let mut out = Vec::new();
        for i in 0..grid.len() {
            for (axis, sign) in grid.boundary_normals(i) {
                let b = match self.model() {
                    Some(m) => m.b(grid.face_center(i, axis, sign), t),
                    None => snap.b[i],
                };
                out.push((i, sign * b[axis]));
            }
        }
        out
    }
}

/// Discrete divergence of a cell-centered vector field with face values
/// averaged from adjacent cells and zero flux through Neumann faces. In the
/// interior this is the central difference; it is the divergence the
/// finite-volume scheme in `evolution` actually sees.
pub fn face_divergence(grid: &Grid, b: &[[f64; 2]]) -> Vec<f64> {
    let mut div = vec![0.0; grid.len()];
    for f in grid.faces() {
        let h = grid.spacing(f.axis);
        let q = 0.5 * (b[f.lo][f.axis] + b[f.hi][f.axis]);
        div[f.lo] += q / h;
        div[f.hi] -= q / h;
    }
    div
}

/// Derivative of a cell field along `axis`: central differences inside,
/// one-sided next to Neumann faces, wrapped across periodic ones.
pub fn partial(grid: &Grid, values: &[f64], axis: usize) -> Vec<f64> {
    let h = grid.spacing(axis);
    (0..grid.len())
        .map(|i| match (grid.neighbour(i, axis, -1), grid.neighbour(i, axis, 1)) {
            (Some(l), Some(r)) => (values[r] - values[l]) / (2.0 * h),
            (None, Some(r)) => (values[r] - values[i]) / h,
            (Some(l), None) => (values[i] - values[l]) / h,
            (None, None) => 0.0,
        })
        .collect()
}

/// Row divergence of a matrix field by [`partial`].
pub fn row_divergence(grid: &Grid, a: &[Sym2]) -> Vec<[f64; 2]> {
    let n = grid.dim();
    let mut out = vec![[0.0; 2]; grid.len()];
    for j in 0..n {
        for i in 0..n {
            let entries: Vec<f64> = a.iter().map(|m| m[i][j]).collect();
            let d = partial(grid, &entries, i);
            for (o, v) in out.iter_mut().zip(d) {
                o[j] += v;
            }
        }
    }
    out
}

/// Eigenvalues of a symmetric matrix, smallest first (closed form).
pub fn sym_eigenvalues(m: &Sym2, dim: usize) -> [f64; 2] {
    if dim == 1 {
        return [m[0][0], m[0][0]];
    }
    let off = 0.5 * (m[0][1] + m[1][0]);
    let mean = 0.5 * (m[0][0] + m[1][1]);
    let rad = (0.25 * (m[0][0] - m[1][1]).powi(2) + off * off).sqrt();
    [mean - rad, mean + rad]
}

/// Spectral norm of a symmetric matrix.
pub fn sym_norm(m: &Sym2, dim: usize) -> f64 {
    let [lo, hi] = sym_eigenvalues(m, dim);
    lo.abs().max(hi.abs())
}

fn vec_norm(v: [f64; 2], dim: usize) -> f64 {
    if dim == 1 {
        v[0].abs()
    } else {
        v[0].hypot(v[1])
    }
}

/// Where and when a check failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub cell: usize,
    pub x: [f64; 2],
    pub t: f64,
    pub value: f64,
}

/// One assumption's verdict with the extreme value found.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub ok: bool,
    /// Extreme value: smallest eigenvalue, smallest `div b - c`, largest `c`,
    /// largest `|<b, nu>|`.
    pub worst: f64,
    pub witness: Option<Witness>,
}

impl Check {
    fn new(worst_init: f64) -> Self {
        Check {
            ok: true,
            worst: worst_init,
            witness: None,
        }
    }

    fn observe(&mut self, value: f64, better_is_larger: bool, w: impl FnOnce() -> Witness) {
        let worse = if better_is_larger {
            value < self.worst
        } else {
            value > self.worst
        };
        if worse {
            self.worst = value;
            self.witness = Some(w());
        }
    }

    fn finish(&mut self, ok: bool) {
        self.ok = ok;
        if ok {
            self.witness = None;
        }
    }
}

/// Verdicts for the standing assumptions on `(a, b, c)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub psd_ok: Check,
    pub divb_minus_c_ok: Check,
    pub c_nonpositive_ok: Check,
    pub boundary_b_ok: Check,
    pub regularity_finite: bool,
    pub sampled_times: Vec<f64>,
    /// Window end used in place of `t -> infinity`.
    pub window: (f64, f64),
}

impl AssumptionReport {
    /// Whether all assumptions hold. With `relax_c` the sign condition on
    /// `c` is skipped, which is admissible when only `p = 1` bounds are
    /// certified.
    pub fn all_ok(&self, relax_c: bool) -> bool {
        self.psd_ok.ok
            && self.divb_minus_c_ok.ok
            && (relax_c || self.c_nonpositive_ok.ok)
            && self.boundary_b_ok.ok
            && self.regularity_finite
    }

    pub fn failures(&self, relax_c: bool) -> Vec<String> {
        let mut out = Vec::new();
        let mut push = |name: &str, c: &Check| {
            if !c.ok {
                out.push(format!("{name} (worst {:.3e})", c.worst));
            }
        };
        push("a not positive semi-definite", &self.psd_ok);
        push("div b - c negative", &self.divb_minus_c_ok);
        if !relax_c {
            push("c positive", &self.c_nonpositive_ok);
        }
        push("b not tangent to the boundary", &self.boundary_b_ok);
        if !self.regularity_finite {
            out.push("alpha or beta not finite".into());
        }
        out
    }
}

/// Checks the standing assumptions at every cell and `time_samples` times.
pub fn validate_assumptions(coeffs: &CoefficientSet, grid: &Grid, time_samples: usize) -> Result<AssumptionReport> {
    validate_assumptions_with_tol(coeffs, grid, time_samples, TOL_PSD)
}

pub fn validate_assumptions_with_tol(
    coeffs: &CoefficientSet,
    grid: &Grid,
    time_samples: usize,
    tol: f64,
) -> Result<AssumptionReport> {
    if time_samples < 2 {
        return Err(Error::InvalidArgument(format!(
            "time_samples must be at least 2, got {time_samples}"
        )));
    }
    let dim = grid.dim();
    let times = coeffs.sample_times(time_samples);
    let mut psd = Check::new(f64::INFINITY);
    let mut divb = Check::new(f64::INFINITY);
    let mut cpos = Check::new(f64::NEG_INFINITY);
    let mut bnd = Check::new(0.0);
    for &t in &times {
        let snap = coeffs.snapshot(grid, t)?;
        let div_b = coeffs.div_b(grid, &snap, t);
        for i in 0..grid.len() {
            let x = grid.center(i);
            let w = |value| Witness { cell: i, x, t, value };
            let lam = sym_eigenvalues(&snap.a[i], dim)[0];
            psd.observe(lam, true, || w(lam));
            let s = div_b[i] - snap.c[i];
            divb.observe(s, true, || w(s));
            let c = snap.c[i];
            cpos.observe(c, false, || w(c));
        }
        for (i, bn) in coeffs.boundary_normal_b(grid, &snap, t) {
            let v = bn.abs();
            bnd.observe(v, false, || Witness {
                cell: i,
                x: grid.center(i),
                t,
                value: bn,
            });
        }
    }
    psd.finish(psd.worst >= -tol);
    divb.finish(divb.worst >= -tol);
    cpos.finish(cpos.worst <= tol);
    bnd.finish(bnd.worst <= tol);
    let (alpha, beta) = compute_alpha_beta(coeffs, grid, time_samples)?;
    Ok(AssumptionReport {
        psd_ok: psd,
        divb_minus_c_ok: divb,
        c_nonpositive_ok: cpos,
        boundary_b_ok: bnd,
        regularity_finite: alpha.is_finite() && beta.is_finite(),
        sampled_times: times,
        window: coeffs.window,
    })
}

/// `alpha = sup |a|` and `beta = sup_t (sup_x |b| + sup_x |div a|)` over the
/// sampled cells and times.
pub fn compute_alpha_beta(coeffs: &CoefficientSet, grid: &Grid, time_samples: usize) -> Result<(f64, f64)> {
    let dim = grid.dim();
    let mut alpha: f64 = 0.0;
    let mut beta: f64 = 0.0;
    for t in coeffs.sample_times(time_samples.max(1)) {
        let snap = coeffs.snapshot(grid, t)?;
        let div_a = coeffs.div_a(grid, &snap, t);
        alpha = snap.a.iter().map(|m| sym_norm(m, dim)).fold(alpha, f64::max);
        let bmax = snap.b.iter().map(|&b| vec_norm(b, dim)).fold(0.0, f64::max);
        let damax = div_a.iter().map(|&d| vec_norm(d, dim)).fold(0.0, f64::max);
        beta = beta.max(bmax + damax);
    }
    Ok((alpha, beta))
}

/// Whether `a` is independent of position at every sampled time (to a
/// relative tolerance), as the sharp bound requires.
pub fn diffusion_is_spatially_constant(
    coeffs: &CoefficientSet,
    grid: &Grid,
    time_samples: usize,
    rel_tol: f64,
) -> Result<bool> {
    for t in coeffs.sample_times(time_samples.max(1)) {
        let snap = coeffs.snapshot(grid, t)?;
        let first = snap.a[0];
        let scale = sym_norm(&first, grid.dim()).max(1e-300);
        for m in &snap.a {
            for r in 0..2 {
                for c in 0..2 {
                    if (m[r][c] - first[r][c]).abs() > rel_tol * scale {
                        return Ok(false);
                    }
                }
            }
        }
    }
    Ok(true)
}

// ---------------------------------------------------------------------------
// Built-in families
// ---------------------------------------------------------------------------

/// Constant coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constant {
    pub a: Sym2,
    pub b: [f64; 2],
    pub c: f64,
}

impl Constant {
    pub fn isotropic(alpha: f64) -> Self {
        Constant {
            a: [[alpha, 0.0], [0.0, alpha]],
            b: [0.0; 2],
            c: 0.0,
        }
    }

    pub fn with_drift(mut self, b: [f64; 2]) -> Self {
        self.b = b;
        self
    }

    pub fn with_reaction(mut self, c: f64) -> Self {
        self.c = c;
        self
    }
}

impl CoefficientModel for Constant {
    fn name(&self) -> &str {
        "constant"
    }
    fn a(&self, _: [f64; 2], _: f64) -> Sym2 {
        self.a
    }
    fn b(&self, _: [f64; 2], _: f64) -> [f64; 2] {
        self.b
    }
    fn c(&self, _: [f64; 2], _: f64) -> f64 {
        self.c
    }
    fn div_a(&self, _: [f64; 2], _: f64) -> Option<[f64; 2]> {
        Some([0.0; 2])
    }
    fn div_b(&self, _: [f64; 2], _: f64) -> Option<f64> {
        Some(0.0)
    }
    fn is_autonomous(&self) -> bool {
        true
    }
}

/// The ramp profile: 0 below zero, linear with slope 1 up to `cap`, then flat.
pub fn ramp(mu: f64, cap: f64) -> f64 {
    mu.clamp(0.0, cap)
}

/// One-dimensional traveling ramp `a(x, t) = A(x - speed t)` with `A` the
/// [`ramp`] capped at `cap`, no drift and no reaction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ramp {
    pub speed: f64,
    pub cap: f64,
}

impl CoefficientModel for Ramp {
    fn name(&self) -> &str {
        "ramp"
    }
    fn a(&self, x: [f64; 2], t: f64) -> Sym2 {
        let v = ramp(x[0] - self.speed * t, self.cap);
        [[v, 0.0], [0.0, v]]
    }
    fn b(&self, _: [f64; 2], _: f64) -> [f64; 2] {
        [0.0; 2]
    }
    fn c(&self, _: [f64; 2], _: f64) -> f64 {
        0.0
    }
}

/// Isotropic diffusion `value` except on the listed intervals of the first
/// coordinate, where it vanishes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkerboard {
    pub value: f64,
    pub zero_intervals: Vec<[f64; 2]>,
    #[serde(default)]
    pub c: f64,
}

impl CoefficientModel for Checkerboard {
    fn name(&self) -> &str {
        "checkerboard"
    }
    fn a(&self, x: [f64; 2], _: f64) -> Sym2 {
        let zero = self.zero_intervals.iter().any(|iv| x[0] >= iv[0] && x[0] <= iv[1]);
        let v = if zero { 0.0 } else { self.value };
        [[v, 0.0], [0.0, v]]
    }
    fn b(&self, _: [f64; 2], _: f64) -> [f64; 2] {
        [0.0; 2]
    }
    fn c(&self, _: [f64; 2], _: f64) -> f64 {
        self.c
    }
    fn is_autonomous(&self) -> bool {
        true
    }
}

/// Divergence-free rotation drift on a box, from the stream function
/// `psi = sin(pi (x - x0)/Lx) sin(pi (y - y0)/Ly)`, so `b` is tangent to every
/// face. Isotropic diffusion `a`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RotationDrift {
    pub omega: f64,
    pub a: f64,
    pub lower: [f64; 2],
    pub upper: [f64; 2],
}

impl CoefficientModel for RotationDrift {
    fn name(&self) -> &str {
        "rotation"
    }
    fn a(&self, _: [f64; 2], _: f64) -> Sym2 {
        [[self.a, 0.0], [0.0, self.a]]
    }
    fn b(&self, x: [f64; 2], _: f64) -> [f64; 2] {
        use std::f64::consts::PI;
        let (lx, ly) = (self.upper[0] - self.lower[0], self.upper[1] - self.lower[1]);
        let (px, py) = (PI * (x[0] - self.lower[0]) / lx, PI * (x[1] - self.lower[1]) / ly);
        [
            self.omega * (PI / ly) * px.sin() * py.cos(),
            -self.omega * (PI / lx) * px.cos() * py.sin(),
        ]
    }
    fn c(&self, _: [f64; 2], _: f64) -> f64 {
        0.0
    }
    fn div_a(&self, _: [f64; 2], _: f64) -> Option<[f64; 2]> {
        Some([0.0; 2])
    }
    fn is_autonomous(&self) -> bool {
        true
    }
}

type PointFn<T> = Box<dyn Fn([f64; 2], f64) -> T + Send + Sync>;

/// Coefficients given by closures; handy for tests and scripted studies.
pub struct FnModel {
    pub name: String,
    pub a: PointFn<Sym2>,
    pub b: PointFn<[f64; 2]>,
    pub c: PointFn<f64>,
    pub autonomous: bool,
}

impl fmt::Debug for FnModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnModel").field("name", &self.name).finish()
    }
}

impl CoefficientModel for FnModel {
    fn name(&self) -> &str {
        &self.name
    }
    fn a(&self, x: [f64; 2], t: f64) -> Sym2 {
        (self.a)(x, t)
    }
    fn b(&self, x: [f64; 2], t: f64) -> [f64; 2] {
        (self.b)(x, t)
    }
    fn c(&self, x: [f64; 2], t: f64) -> f64 {
        (self.c)(x, t)
    }
    fn is_autonomous(&self) -> bool {
        self.autonomous
    }
}

/// Parses tabulated coefficients from CSV text with header
/// `t,cell,a11,a12,a22,b1,b2,c`. Every sampled time must list every cell.
pub fn parse_tabulated_csv(text: &str, grid: &Grid) -> Result<Tabulated> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines
        .next()
        .ok_or_else(|| Error::InvalidCoefficients("empty CSV".into()))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols != ["t", "cell", "a11", "a12", "a22", "b1", "b2", "c"] {
        return Err(Error::InvalidCoefficients(format!("unexpected CSV header '{header}'")));
    }
    let mut by_time: Vec<(f64, Snapshot, Vec<bool>)> = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let vals: Vec<f64> = line
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::InvalidCoefficients(format!("line {}: {e}", lineno + 2)))?;
        if vals.len() != 8 {
            return Err(Error::InvalidCoefficients(format!(
                "line {}: expected 8 columns",
                lineno + 2
            )));
        }
        let t = vals[0];
        let cell = vals[1] as usize;
        if vals[1] < 0.0 || vals[1].fract() != 0.0 || cell >= grid.len() {
            return Err(Error::InvalidCoefficients(format!(
                "line {}: bad cell index {}",
                lineno + 2,
                vals[1]
            )));
        }
        let entry = match by_time.iter_mut().find(|e| e.0 == t) {
            Some(e) => e,
            None => {
                by_time.push((t, Snapshot::zeros(grid), vec![false; grid.len()]));
                by_time.last_mut().expect("just pushed")
            }
        };
        entry.1.a[cell] = [[vals[2], vals[3]], [vals[3], vals[4]]];
        entry.1.b[cell] = [vals[5], vals[6]];
        entry.1.c[cell] = vals[7];
        entry.2[cell] = true;
    }
    for (t, _, seen) in &by_time {
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidCoefficients(format!("time {t}: cell {missing} missing")));
        }
    }
    Tabulated::new(by_time.into_iter().map(|(t, s, _)| (t, s)).collect())
}

/// Whether any axis of the grid is periodic (used by reports).
pub fn has_periodic_axis(grid: &Grid) -> bool {
    grid.axes().iter().any(|a| a.boundary == Boundary::Periodic)
}

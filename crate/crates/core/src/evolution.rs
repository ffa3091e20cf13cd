//! Finite-volume time stepping for the regularized Cauchy problem with
//! Neumann (or periodic) faces, discrete propagators, and the adjoint scheme.
//!
//! The semi-discrete generator is
//!
//! ```text
//! (L_h u)_i = sum_faces w_f (u_j - u_i) + upwind <b, grad u>_i + c_i u_i
//! ```
//!
//! with `w_f = (mean of a_kk over the two cells + eps) / h_k^2` and face
//! drift `q_f` averaged from the two cells. For `q_f > 0` the `lo` cell of
//! the face sees `q_f (u_hi - u_lo) / h`, for `q_f < 0` the `hi` cell sees
//! `|q_f| (u_lo - u_hi) / h`. Off-diagonals are nonnegative and row sums
//! equal `c`, column sums equal `c - div_h b`; implicit Euler therefore
//! yields an M-matrix and the discrete propagator is positive, an
//! `L^inf` contraction when `c <= 0` and an `L^1` contraction when
//! `div_h b - c >= 0`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coefficients::{compute_alpha_beta, face_divergence, CoefficientSet, Snapshot};
use crate::error::{Error, Result};
use crate::grid::{Field, Grid, Region};
use crate::linalg::{BandedLu, SparseMatrix};

/// Positivity tolerance on propagator entries.
pub const TOL_POS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    /// Fully implicit Euler.
    #[default]
    ImplicitEuler,
    /// Explicit upwind advection, implicit diffusion and reaction.
    Imex,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Regularization added to `a`; `None` picks `1e-8 * alpha` (or `1e-8`
    /// when `alpha = 0`).
    #[serde(default)]
    pub epsilon: Option<f64>,
    pub dt: f64,
    #[serde(default)]
    pub integrator: Integrator,
    #[serde(default)]
    pub epsilon_schedule: Option<Vec<f64>>,
}

impl SolverConfig {
    pub fn new(dt: f64) -> Self {
        SolverConfig {
            epsilon: None,
            dt,
            integrator: Integrator::ImplicitEuler,
            epsilon_schedule: None,
        }
    }

    pub fn with_epsilon(mut self, eps: f64) -> Self {
        self.epsilon = Some(eps);
        self
    }

    pub fn with_integrator(mut self, integrator: Integrator) -> Self {
        self.integrator = integrator;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidSolver(format!("dt must be positive, got {}", self.dt)));
        }
        if let Some(e) = self.epsilon {
            if !(e >= 0.0 && e.is_finite()) {
                return Err(Error::InvalidSolver(format!("epsilon must be >= 0, got {e}")));
            }
        }
        Ok(())
    }

    /// The regularization actually used for these coefficients.
    pub fn resolve_epsilon(&self, coeffs: &CoefficientSet, grid: &Grid) -> Result<f64> {
        match self.epsilon {
            Some(e) => Ok(e),
            None => {
                let (alpha, _) = compute_alpha_beta(coeffs, grid, 2)?;
                Ok(1e-8 * if alpha > 0.0 { alpha } else { 1.0 })
            }
        }
    }
}

fn check_diagonal(grid: &Grid, snap: &Snapshot) -> Result<()> {
    if grid.dim() == 2 {
        for (i, a) in snap.a.iter().enumerate() {
            let scale = a[0][0].abs().max(a[1][1].abs()).max(1e-300);
            if a[0][1].abs() > 1e-14 * scale || a[1][0].abs() > 1e-14 * scale {
                return Err(Error::InvalidCoefficients(format!(
                    "cell {i}: off-diagonal diffusion is not representable by the two-point flux"
                )));
            }
        }
    }
    Ok(())
}

fn face_drift(snap: &Snapshot, lo: usize, hi: usize, axis: usize) -> f64 {
    0.5 * (snap.b[lo][axis] + snap.b[hi][axis])
}

fn diffusion_triplets(grid: &Grid, snap: &Snapshot, eps: f64, out: &mut Vec<(usize, usize, f64)>) {
    for f in grid.faces() {
        let h = grid.spacing(f.axis);
        let k = f.axis;
        let w = (0.5 * (snap.a[f.lo][k][k] + snap.a[f.hi][k][k]) + eps) / (h * h);
        out.extend([(f.lo, f.lo, -w), (f.lo, f.hi, w), (f.hi, f.hi, -w), (f.hi, f.lo, w)]);
    }
}

fn advection_triplets(grid: &Grid, snap: &Snapshot, out: &mut Vec<(usize, usize, f64)>) {
    for f in grid.faces() {
        let h = grid.spacing(f.axis);
        let q = face_drift(snap, f.lo, f.hi, f.axis) / h;
        if q > 0.0 {
            out.extend([(f.lo, f.hi, q), (f.lo, f.lo, -q)]);
        } else if q < 0.0 {
            out.extend([(f.hi, f.lo, -q), (f.hi, f.hi, q)]);
        }
    }
}

fn reaction_triplets(snap: &Snapshot, out: &mut Vec<(usize, usize, f64)>) {
    out.extend(snap.c.iter().enumerate().map(|(i, &c)| (i, i, c)));
}

/// The discrete generator `L_h` of the regularized operator.
pub fn generator(grid: &Grid, snap: &Snapshot, eps: f64) -> Result<SparseMatrix> {
    check_diagonal(grid, snap)?;
    let mut trip = Vec::with_capacity(7 * grid.len());
    diffusion_triplets(grid, snap, eps, &mut trip);
    advection_triplets(grid, snap, &mut trip);
    reaction_triplets(snap, &mut trip);
    Ok(SparseMatrix::from_triplets(grid.len(), trip))
}

/// Discrete formal adjoint `div(a grad u) - div(b u) + c u`, assembled
/// directly in flux form with upwinding along `b` (not by transposition).
pub fn adjoint_generator(grid: &Grid, snap: &Snapshot, eps: f64) -> Result<SparseMatrix> {
    check_diagonal(grid, snap)?;
    let mut trip = Vec::with_capacity(7 * grid.len());
    diffusion_triplets(grid, snap, eps, &mut trip);
    for f in grid.faces() {
        let h = grid.spacing(f.axis);
        let q = face_drift(snap, f.lo, f.hi, f.axis) / h;
        // Flux q * u_upwind leaves `lo` and enters `hi`.
        let up = if q > 0.0 { f.lo } else { f.hi };
        if q != 0.0 {
            trip.push((f.lo, up, -q));
            trip.push((f.hi, up, q));
        }
    }
    reaction_triplets(snap, &mut trip);
    Ok(SparseMatrix::from_triplets(grid.len(), trip))
}

/// Upwind drift part `<b, grad u>_h` of the generator.
pub fn advection_generator(grid: &Grid, snap: &Snapshot) -> SparseMatrix {
    let mut trip = Vec::with_capacity(3 * grid.len());
    advection_triplets(grid, snap, &mut trip);
    SparseMatrix::from_triplets(grid.len(), trip)
}

/// Diffusion and reaction part of the generator.
pub fn diffusion_reaction_generator(grid: &Grid, snap: &Snapshot, eps: f64) -> Result<SparseMatrix> {
    check_diagonal(grid, snap)?;
    let mut trip = Vec::with_capacity(5 * grid.len());
    diffusion_triplets(grid, snap, eps, &mut trip);
    reaction_triplets(snap, &mut trip);
    Ok(SparseMatrix::from_triplets(grid.len(), trip))
}

/// Largest advective CFL number `dt * sum_out |q_f| / h` of the explicit part.
pub fn advective_cfl(grid: &Grid, snap: &Snapshot, dt: f64) -> f64 {
    let adv = advection_generator(grid, snap);
    (0..grid.len()).map(|i| -dt * adv.get(i, i)).fold(0.0, f64::max)
}

/// Upwind numerical diffusivity `max |b_k| h_k / 2` over the sampled times.
pub fn numerical_diffusivity(coeffs: &CoefficientSet, grid: &Grid, time_samples: usize) -> Result<f64> {
    let mut out: f64 = 0.0;
    for t in coeffs.sample_times(time_samples.max(1)) {
        let snap = coeffs.snapshot(grid, t)?;
        for b in &snap.b {
            for k in 0..grid.dim() {
                out = out.max(b[k].abs() * grid.spacing(k) / 2.0);
            }
        }
    }
    Ok(out)
}

/// Substep boundaries `s, s + dt, ..., t`; the last step is shortened so the
/// final time is exactly `t`.
pub fn time_grid(s: f64, t: f64, dt: f64) -> Vec<f64> {
    if t <= s {
        return vec![s];
    }
    let n = (((t - s) / dt) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
    let mut out: Vec<f64> = (0..n).map(|k| s + k as f64 * dt).collect();
    out.push(t);
    out
}

/// One linear step operator: `x -> solve(implicit, explicit * x)`.
struct StepOp {
    explicit: Option<SparseMatrix>,
    implicit: BandedLu,
    matrix: SparseMatrix,
    applied: std::sync::atomic::AtomicUsize,
}

impl StepOp {
    fn apply(&self, x: &mut Vec<f64>) -> Result<()> {
        if let Some(e) = &self.explicit {
            *x = e.mul_vec(x);
        }
        // The factorization is checked on its first use and every 32nd after.
        let count = self.applied.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
        if !count.is_multiple_of(32) {
            flush_subnormal(|| self.implicit.solve_in_place(x));
            return Ok(());
        }
        let rhs = x.clone();
        flush_subnormal(|| self.implicit.solve_in_place(x));
        let residual = self.matrix.residual_max(x, &rhs);
        let scale = rhs.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if !(residual <= 1e-9 * scale.max(1e-300)) && scale > 0.0 {
            return Err(Error::LinearSolve {
                reason: "implicit step residual too large".into(),
                residual,
            });
        }
        Ok(())
    }
}

/// Runs `f` with subnormal results flushed to zero. Values below
/// `f64::MIN_POSITIVE` carry no information here and make every later step
/// dramatically slower on x86.
fn flush_subnormal<R>(f: impl FnOnce() -> R) -> R {
    #[cfg(target_arch = "x86_64")]
    {
        const FTZ_DAZ: u32 = (1 << 15) | (1 << 6);
        let mut saved: u32 = 0;
        // SAFETY: reads and writes only the MXCSR control register.
        unsafe {
            std::arch::asm!("stmxcsr [{}]", in(reg) &mut saved, options(nostack));
            let flushed = saved | FTZ_DAZ;
            std::arch::asm!("ldmxcsr [{}]", in(reg) &flushed, options(nostack));
        }
        let out = f();
        unsafe {
            std::arch::asm!("ldmxcsr [{}]", in(reg) &saved, options(nostack));
        }
        out
    }
    #[cfg(not(target_arch = "x86_64"))]
    {
        f()
    }
}

/// Builds step operators, reusing factorizations for autonomous coefficients.
struct Stepper<'a> {
    grid: &'a Grid,
    coeffs: &'a CoefficientSet,
    cfg: &'a SolverConfig,
    eps: f64,
    adjoint: bool,
    cache: Option<(f64, std::sync::Arc<StepOp>)>,
}

impl<'a> Stepper<'a> {
    fn new(grid: &'a Grid, coeffs: &'a CoefficientSet, cfg: &'a SolverConfig, adjoint: bool) -> Result<Self> {
        cfg.validate()?;
        if adjoint && cfg.integrator == Integrator::Imex {
            return Err(Error::InvalidSolver(
                "the adjoint scheme is only defined for implicit Euler".into(),
            ));
        }
        let eps = cfg.resolve_epsilon(coeffs, grid)?;
        Ok(Stepper {
            grid,
            coeffs,
            cfg,
            eps,
            adjoint,
            cache: None,
        })
    }

    fn op(&mut self, t0: f64, dt: f64) -> Result<std::sync::Arc<StepOp>> {
        let autonomous = self.coeffs.is_autonomous();
        if autonomous {
            // Substeps of one nominal size differ only by rounding.
            if let Some((key, op)) = &self.cache {
                if (*key - dt).abs() <= 1e-10 * dt {
                    return Ok(op.clone());
                }
            }
        }
        let n = self.grid.len();
        let t1 = t0 + dt;
        let op = match self.cfg.integrator {
            Integrator::ImplicitEuler => {
                let snap = self.coeffs.snapshot(self.grid, t1)?;
                let l = if self.adjoint {
                    adjoint_generator(self.grid, &snap, self.eps)?
                } else {
                    generator(self.grid, &snap, self.eps)?
                };
                let m = SparseMatrix::identity(n).axpby(1.0, &l, -dt);
                StepOp {
                    explicit: None,
                    implicit: BandedLu::factor(&m)?,
                    matrix: m,
                    applied: Default::default(),
                }
            }
            Integrator::Imex => {
                let snap0 = self.coeffs.snapshot(self.grid, t0)?;
                let cfl = advective_cfl(self.grid, &snap0, dt);
                if cfl > 1.0 + 1e-12 {
                    return Err(Error::Cfl { cfl });
                }
                let e = SparseMatrix::identity(n).axpby(1.0, &advection_generator(self.grid, &snap0), dt);
                let snap1 = self.coeffs.snapshot(self.grid, t1)?;
                let m = SparseMatrix::identity(n).axpby(
                    1.0,
                    &diffusion_reaction_generator(self.grid, &snap1, self.eps)?,
                    -dt,
                );
                StepOp {
                    explicit: Some(e),
                    implicit: BandedLu::factor(&m)?,
                    matrix: m,
                    applied: Default::default(),
                }
            }
        };
        let op = std::sync::Arc::new(op);
        if autonomous {
            self.cache = Some((dt, op.clone()));
        }
        Ok(op)
    }
}

/// Advances `u` by one step of size `cfg.dt` starting at time `t`.
pub fn step(u: &Field, coeffs: &CoefficientSet, grid: &Grid, t: f64, cfg: &SolverConfig) -> Result<Field> {
    check_len(u, grid)?;
    let mut stepper = Stepper::new(grid, coeffs, cfg, false)?;
    let op = stepper.op(t, cfg.dt)?;
    let mut x = u.values().to_vec();
    op.apply(&mut x)?;
    Ok(Field::from_vec_unchecked(x))
}

fn check_len(u: &Field, grid: &Grid) -> Result<()> {
    if u.len() != grid.len() {
        return Err(Error::InvalidField(format!(
            "field has {} values, grid has {} cells",
            u.len(),
            grid.len()
        )));
    }
    Ok(())
}

/// Snapshots `(time, field)` of a solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub snapshots: Vec<(f64, Field)>,
}

impl Trajectory {
    pub fn last(&self) -> &(f64, Field) {
        self.snapshots.last().expect("trajectory holds the initial snapshot")
    }

    pub fn final_field(&self) -> &Field {
        &self.last().1
    }

    /// CSV with one row per snapshot: `time,u0,u1,...`.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        if let Some((_, f)) = self.snapshots.first() {
            out.push_str("time");
            for i in 0..f.len() {
                out.push_str(&format!(",u{i}"));
            }
            out.push('\n');
        }
        for (t, f) in &self.snapshots {
            out.push_str(&format!("{t:e}"));
            for v in f.values() {
                out.push_str(&format!(",{v:e}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Solves from `s` to `t`, recording every `record_every`-th substep (and
/// always the first and last).
pub fn solve_recording(
    u0: &Field,
    coeffs: &CoefficientSet,
    grid: &Grid,
    s: f64,
    t: f64,
    cfg: &SolverConfig,
    record_every: usize,
) -> Result<Trajectory> {
    check_len(u0, grid)?;
    if t < s {
        return Err(Error::InvalidArgument(format!("t = {t} precedes s = {s}")));
    }
    let mut traj = Trajectory {
        snapshots: vec![(s, u0.clone())],
    };
    if t == s {
        return Ok(traj);
    }
    let mut stepper = Stepper::new(grid, coeffs, cfg, false)?;
    let times = time_grid(s, t, cfg.dt);
    let mut x = u0.values().to_vec();
    let every = record_every.max(1);
    for (k, w) in times.windows(2).enumerate() {
        let op = stepper.op(w[0], w[1] - w[0])?;
        op.apply(&mut x)?;
        if (k + 1) % every == 0 || k + 2 == times.len() {
            traj.snapshots.push((w[1], Field::from_vec_unchecked(x.clone())));
        }
    }
    Ok(traj)
}

/// Solves from `s` to `t`, recording every substep.
pub fn solve(
    u0: &Field,
    coeffs: &CoefficientSet,
    grid: &Grid,
    s: f64,
    t: f64,
    cfg: &SolverConfig,
) -> Result<Trajectory> {
    solve_recording(u0, coeffs, grid, s, t, cfg, 1)
}

/// Final field of a solve without keeping intermediate snapshots.
pub fn propagate(
    u0: &Field,
    coeffs: &CoefficientSet,
    grid: &Grid,
    s: f64,
    t: f64,
    cfg: &SolverConfig,
) -> Result<Field> {
    let traj = solve_recording(u0, coeffs, grid, s, t, cfg, usize::MAX)?;
    Ok(traj.final_field().clone())
}

/// Discrete propagator `P_{t,s}`: column `j` is the solution at `t` for a
/// unit value in cell `j` at `s`. Only the `source` columns are stored.
#[derive(Debug, Clone, PartialEq)]
pub struct PropagatorMatrix {
    n: usize,
    pub s: f64,
    pub t: f64,
    source: Vec<usize>,
    columns: Vec<Vec<f64>>,
    /// Substep boundaries used in the assembly.
    pub step_times: Vec<f64>,
}

impl PropagatorMatrix {
    pub fn from_columns(n: usize, s: f64, t: f64, source: Vec<usize>, columns: Vec<Vec<f64>>) -> Result<Self> {
        if source.len() != columns.len() || columns.iter().any(|c| c.len() != n) {
            return Err(Error::InvalidArgument("column shape mismatch".into()));
        }
        if source.windows(2).any(|w| w[0] >= w[1]) || source.iter().any(|&j| j >= n) {
            return Err(Error::InvalidArgument(
                "source columns must be sorted, unique and in range".into(),
            ));
        }
        Ok(PropagatorMatrix {
            n,
            s,
            t,
            source,
            columns,
            step_times: vec![s, t],
        })
    }

    /// Dense matrix given row-major.
    pub fn from_dense(rows: &[Vec<f64>], s: f64, t: f64) -> Result<Self> {
        let n = rows.len();
        let columns = (0..n).map(|j| rows.iter().map(|r| r[j]).collect()).collect();
        PropagatorMatrix::from_columns(n, s, t, (0..n).collect(), columns)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn source(&self) -> &[usize] {
        &self.source
    }

    pub fn is_full(&self) -> bool {
        self.source.len() == self.n
    }

    pub fn column(&self, j: usize) -> Option<&[f64]> {
        self.source.binary_search(&j).ok().map(|k| self.columns[k].as_slice())
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.column(j).map(|c| c[i])
    }

    pub fn min_entry(&self) -> f64 {
        self.columns.iter().flatten().copied().fold(f64::INFINITY, f64::min)
    }

    /// Plain column sums of the stored columns.
    pub fn column_sums(&self) -> Vec<f64> {
        self.columns.iter().map(|c| c.iter().sum()).collect()
    }

    /// Row sums, valid only for full matrices.
    pub fn row_sums(&self) -> Result<Vec<f64>> {
        self.require_full()?;
        let mut out = vec![0.0; self.n];
        for c in &self.columns {
            for (o, v) in out.iter_mut().zip(c) {
                *o += v;
            }
        }
        Ok(out)
    }

    fn require_full(&self) -> Result<()> {
        if let Some(j) = (0..self.n).find(|j| self.column(*j).is_none()) {
            return Err(Error::MissingColumn(j));
        }
        Ok(())
    }

    pub fn transpose(&self) -> Result<Self> {
        self.require_full()?;
        let columns: Vec<Vec<f64>> = (0..self.n)
            .map(|i| self.columns.iter().map(|c| c[i]).collect())
            .collect();
        let mut out = PropagatorMatrix::from_columns(self.n, self.s, self.t, (0..self.n).collect(), columns)?;
        out.step_times = self.step_times.clone();
        Ok(out)
    }

    /// `self * v` for a full matrix.
    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.require_full()?;
        let mut out = vec![0.0; self.n];
        for (c, &vj) in self.columns.iter().zip(v) {
            if vj != 0.0 {
                for (o, m) in out.iter_mut().zip(c) {
                    *o += m * vj;
                }
            }
        }
        Ok(out)
    }

    /// Composition `self * earlier` (first `earlier`, then `self`).
    pub fn compose(&self, earlier: &PropagatorMatrix) -> Result<Self> {
        let columns = earlier
            .columns
            .iter()
            .map(|c| self.apply(c))
            .collect::<Result<Vec<_>>>()?;
        let mut out = PropagatorMatrix::from_columns(self.n, earlier.s, self.t, earlier.source.clone(), columns)?;
        let mut times = earlier.step_times.clone();
        times.extend(self.step_times.iter().skip(1));
        out.step_times = times;
        Ok(out)
    }

    pub fn max_abs_diff(&self, other: &PropagatorMatrix) -> Result<f64> {
        if self.source != other.source || self.n != other.n {
            return Err(Error::InvalidArgument("propagators have different shapes".into()));
        }
        Ok(self
            .columns
            .iter()
            .flatten()
            .zip(other.columns.iter().flatten())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    /// CSV of the stored columns: `row,col,value` for nonzero entries.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("row,col,value\n");
        for (k, &j) in self.source.iter().enumerate() {
            for (i, v) in self.columns[k].iter().enumerate() {
                if *v != 0.0 {
                    out.push_str(&format!("{i},{j},{v:e}\n"));
                }
            }
        }
        out
    }

    /// Little-endian `f64` dense dump (row-major), full matrices only.
    pub fn to_dense_bytes(&self) -> Result<Vec<u8>> {
        self.require_full()?;
        let mut out = Vec::with_capacity(8 * self.n * self.n);
        for i in 0..self.n {
            for c in &self.columns {
                out.extend_from_slice(&c[i].to_le_bytes());
            }
        }
        Ok(out)
    }
}

fn unit_columns(n: usize, source: &[usize]) -> Vec<Vec<f64>> {
    source
        .iter()
        .map(|&j| {
            let mut c = vec![0.0; n];
            c[j] = 1.0;
            c
        })
        .collect()
}

/// Evolves all columns together; each substep is factored once and shared
/// read-only by the parallel column solves.
fn evolve_columns(stepper: &mut Stepper<'_>, times: &[f64], columns: &mut [Vec<f64>]) -> Result<()> {
    for w in times.windows(2) {
        let op = stepper.op(w[0], w[1] - w[0])?;
        columns.par_iter_mut().try_for_each(|c| op.apply(c))?;
    }
    Ok(())
}

/// Assembles `P_{t,s}` column by column for the cells of `source` (all cells
/// when `None`).
pub fn assemble_propagator(
    coeffs: &CoefficientSet,
    grid: &Grid,
    s: f64,
    t: f64,
    cfg: &SolverConfig,
    source: Option<&Region>,
) -> Result<PropagatorMatrix> {
    if t < s {
        return Err(Error::InvalidArgument(format!("t = {t} precedes s = {s}")));
    }
    let n = grid.len();
    let src: Vec<usize> = match source {
        Some(r) => r.cells().to_vec(),
        None => (0..n).collect(),
    };
    let mut columns = unit_columns(n, &src);
    let times = time_grid(s, t, cfg.dt);
    let mut stepper = Stepper::new(grid, coeffs, cfg, false)?;
    evolve_columns(&mut stepper, &times, &mut columns)?;
    let mut m = PropagatorMatrix::from_columns(n, s, t, src, columns)?;
    m.step_times = times;
    Ok(m)
}

/// Columns of the discrete adjoint propagator, i.e. of `P_{t,s}^T`, obtained
/// by running the independently assembled adjoint scheme backward over the
/// same substeps.
pub fn assemble_adjoint_propagator(
    coeffs: &CoefficientSet,
    grid: &Grid,
    s: f64,
    t: f64,
    cfg: &SolverConfig,
    source: Option<&Region>,
) -> Result<PropagatorMatrix> {
    let n = grid.len();
    let src: Vec<usize> = match source {
        Some(r) => r.cells().to_vec(),
        None => (0..n).collect(),
    };
    let mut columns = unit_columns(n, &src);
    let times = time_grid(s, t, cfg.dt);
    let mut stepper = Stepper::new(grid, coeffs, cfg, true)?;
    for w in times.windows(2).rev() {
        let op = stepper.op(w[0], w[1] - w[0])?;
        columns.par_iter_mut().try_for_each(|c| op.apply(c))?;
    }
    let mut m = PropagatorMatrix::from_columns(n, s, t, src, columns)?;
    m.step_times = times;
    Ok(m)
}

/// Result of an epsilon-convergence study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsilonStudy {
    /// `(epsilon, L^1 distance to the smallest-epsilon solution)`.
    pub rows: Vec<(f64, f64)>,
    /// Distances decrease along the schedule, up to a 10% noise tolerance.
    pub monotone: bool,
}

/// Solves once per entry of `cfg.epsilon_schedule` and reports the `L^1`
/// distance of each solution to the one for the smallest epsilon.
pub fn epsilon_convergence_study(
    u0: &Field,
    coeffs: &CoefficientSet,
    grid: &Grid,
    s: f64,
    t: f64,
    cfg: &SolverConfig,
) -> Result<EpsilonStudy> {
    let schedule = cfg
        .epsilon_schedule
        .as_ref()
        .ok_or_else(|| Error::InvalidSolver("epsilon_schedule missing".into()))?;
    if schedule.len() < 3 {
        return Err(Error::InvalidSolver(format!(
            "epsilon_schedule needs at least 3 entries, got {}",
            schedule.len()
        )));
    }
    if schedule.windows(2).any(|w| !(w[1] < w[0])) || schedule.iter().any(|e| !(*e >= 0.0)) {
        return Err(Error::InvalidSolver(
            "epsilon_schedule must be strictly decreasing and nonnegative".into(),
        ));
    }
    let solutions: Vec<Field> = schedule
        .par_iter()
        .map(|&e| propagate(u0, coeffs, grid, s, t, &cfg.clone().with_epsilon(e)))
        .collect::<Result<_>>()?;
    let reference = solutions.last().expect("schedule is non-empty");
    let rows: Vec<(f64, f64)> = schedule
        .iter()
        .zip(&solutions)
        .map(|(&e, u)| {
            let d = u.zip_map(reference, |a, b| (a - b).abs()).integral(grid);
            (e, d)
        })
        .collect();
    let monotone = rows.windows(2).all(|w| w[1].1 <= w[0].1 * 1.1);
    Ok(EpsilonStudy { rows, monotone })
}

/// Discrete divergence of the drift used by the scheme (per cell).
pub fn scheme_divergence(grid: &Grid, snap: &Snapshot) -> Vec<f64> {
    face_divergence(grid, &snap.b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{Constant, FnModel};
    use crate::grid::indicator;
    use approx::assert_relative_eq;

    fn heat(alpha: f64) -> CoefficientSet {
        CoefficientSet::from_model(Constant::isotropic(alpha), (0.0, 1.0))
    }

    /// Independent tridiagonal solver for `(I - dt * alpha * Lap_h) x = r`
    /// with Neumann ends.
    fn thomas_neumann(r: &[f64], dt: f64, alpha: f64, h: f64) -> Vec<f64> {
        let n = r.len();
        let w = dt * alpha / (h * h);
        let sub = vec![-w; n];
        let sup = vec![-w; n];
        let mut diag = vec![1.0 + 2.0 * w; n];
        diag[0] = 1.0 + w;
        diag[n - 1] = 1.0 + w;
        let mut c = vec![0.0; n];
        let mut d = vec![0.0; n];
        c[0] = sup[0] / diag[0];
        d[0] = r[0] / diag[0];
        for i in 1..n {
            let m = diag[i] - sub[i] * c[i - 1];
            c[i] = sup[i] / m;
            d[i] = (r[i] - sub[i] * d[i - 1]) / m;
        }
        let mut x = vec![0.0; n];
        x[n - 1] = d[n - 1];
        for i in (0..n - 1).rev() {
            x[i] = d[i] - c[i] * x[i + 1];
        }
        x
    }

    #[test]
    fn zero_coefficients_step_is_identity() {
        let g = Grid::uniform_1d(0.0, 1.0, 16).unwrap();
        let c = CoefficientSet::from_model(Constant::isotropic(0.0), (0.0, 1.0));
        let u = Field::from_fn(&g, |x| (3.0 * x[0]).sin());
        let v = step(&u, &c, &g, 0.0, &SolverConfig::new(0.1).with_epsilon(0.0)).unwrap();
        assert_eq!(u, v);
    }

    #[test]
    fn constants_are_neumann_equilibria() {
        let g = Grid::uniform_1d(0.0, 1.0, 16).unwrap();
        let u = Field::constant(&g, 2.5);
        let v = step(&u, &heat(1.0), &g, 0.0, &SolverConfig::new(0.01)).unwrap();
        for x in v.values() {
            assert_relative_eq!(*x, 2.5, epsilon = 1e-13);
        }
    }

    #[test]
    fn implicit_step_matches_thomas_oracle() {
        let g = Grid::uniform_1d(0.0, 1.0, 20).unwrap();
        let u = indicator(&Region::from_indices(&g, [7], "X").unwrap(), &g);
        let cfg = SolverConfig::new(0.003).with_epsilon(0.0);
        let v = step(&u, &heat(1.0), &g, 0.0, &cfg).unwrap();
        let oracle = thomas_neumann(u.values(), 0.003, 1.0, g.spacing(0));
        for (a, b) in v.values().iter().zip(&oracle) {
            assert_relative_eq!(*a, *b, epsilon = 1e-14);
        }
    }

    #[test]
    fn solve_hits_final_time_exactly() {
        let g = Grid::uniform_1d(0.0, 1.0, 8).unwrap();
        let u = Field::constant(&g, 1.0);
        let traj = solve(&u, &heat(1.0), &g, 0.0, 0.25, &SolverConfig::new(0.1)).unwrap();
        let times: Vec<f64> = traj.snapshots.iter().map(|s| s.0).collect();
        assert_eq!(times.len(), 4);
        assert_eq!(*times.last().unwrap(), 0.25);
        let only = solve(&u, &heat(1.0), &g, 0.3, 0.3, &SolverConfig::new(0.1)).unwrap();
        assert_eq!(only.snapshots.len(), 1);
        assert_eq!(only.snapshots[0].1, u);
    }

    #[test]
    fn propagator_at_equal_times_is_identity() {
        let g = Grid::uniform_1d(0.0, 1.0, 6).unwrap();
        let m = assemble_propagator(&heat(1.0), &g, 0.2, 0.2, &SolverConfig::new(0.1), None).unwrap();
        for j in 0..6 {
            for i in 0..6 {
                assert_eq!(m.get(i, j).unwrap(), if i == j { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn imex_rejects_large_cfl() {
        let g = Grid::uniform_1d(0.0, 1.0, 10).unwrap();
        let c = CoefficientSet::from_model(Constant::isotropic(0.0).with_drift([1.0, 0.0]), (0.0, 1.0));
        let cfg = SolverConfig::new(0.5).with_integrator(Integrator::Imex);
        let u = Field::constant(&g, 1.0);
        assert!(matches!(step(&u, &c, &g, 0.0, &cfg), Err(Error::Cfl { .. })));
    }

    #[test]
    fn imex_and_implicit_agree_to_first_order() {
        let g = Grid::uniform_1d(0.0, 4.0, 200).unwrap();
        let c = CoefficientSet::from_model(Constant::isotropic(0.05).with_drift([0.5, 0.0]), (0.0, 1.0));
        let u = Field::from_fn(&g, |x| (-(x[0] - 2.0f64).powi(2) * 8.0).exp());
        let a = propagate(&u, &c, &g, 0.0, 0.5, &SolverConfig::new(1e-3)).unwrap();
        let b = propagate(
            &u,
            &c,
            &g,
            0.0,
            0.5,
            &SolverConfig::new(1e-3).with_integrator(Integrator::Imex),
        )
        .unwrap();
        let diff = a.zip_map(&b, |p, q| (p - q).abs()).integral(&g);
        assert!(diff < 5e-3, "{diff}");
    }

    #[test]
    fn off_diagonal_diffusion_rejected() {
        let g = Grid::uniform_2d([0.0, 0.0], [1.0, 1.0], [4, 4]).unwrap();
        let model = FnModel {
            name: "aniso".into(),
            a: Box::new(|_, _| [[1.0, 0.3], [0.3, 1.0]]),
            b: Box::new(|_, _| [0.0; 2]),
            c: Box::new(|_, _| 0.0),
            autonomous: true,
        };
        let c = CoefficientSet::from_model(model, (0.0, 1.0));
        let u = Field::constant(&g, 1.0);
        assert!(step(&u, &c, &g, 0.0, &SolverConfig::new(0.1)).is_err());
    }

    #[test]
    fn generator_row_and_column_sums() {
        let g = Grid::uniform_2d([0.0, 0.0], [1.0, 1.0], [5, 4]).unwrap();
        let snap = Snapshot {
            a: (0..20).map(|i| [[0.1 * i as f64, 0.0], [0.0, 0.2]]).collect(),
            b: (0..20).map(|i| [(i as f64 * 0.7).sin(), (i as f64).cos()]).collect(),
            c: (0..20).map(|i| -0.01 * i as f64).collect(),
        };
        let l = generator(&g, &snap, 1e-3).unwrap();
        let div = scheme_divergence(&g, &snap);
        for (i, rs) in l.row_sums().iter().enumerate() {
            assert_relative_eq!(*rs, snap.c[i], epsilon = 1e-12);
        }
        for (i, cs) in l.col_sums().iter().enumerate() {
            assert_relative_eq!(*cs, snap.c[i] - div[i], epsilon = 1e-12);
        }
        let adj = adjoint_generator(&g, &snap, 1e-3).unwrap();
        let lt = l.transpose();
        for i in 0..20 {
            for j in 0..20 {
                assert_relative_eq!(adj.get(i, j), lt.get(i, j), epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn epsilon_schedule_validation() {
        let g = Grid::uniform_1d(0.0, 1.0, 8).unwrap();
        let u = Field::constant(&g, 1.0);
        let mut cfg = SolverConfig::new(0.1);
        cfg.epsilon_schedule = Some(vec![1e-2]);
        assert!(epsilon_convergence_study(&u, &heat(1.0), &g, 0.0, 0.1, &cfg).is_err());
        cfg.epsilon_schedule = Some(vec![1e-2, 1e-1, 1e-3]);
        assert!(epsilon_convergence_study(&u, &heat(1.0), &g, 0.0, 0.1, &cfg).is_err());
    }

    #[test]
    fn time_grid_shortens_last_step() {
        let t = time_grid(0.0, 1.0, 0.3);
        assert_eq!(t.len(), 5);
        assert_eq!(t[4], 1.0);
        assert_relative_eq!(t[3], 0.9, epsilon = 1e-15);
        let t = time_grid(0.0, 1.0, 0.25);
        assert_eq!(t.len(), 5);
    }
}

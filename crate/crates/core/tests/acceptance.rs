//! Acceptance suite. Runs without the libtest harness so every criterion
//! prints its `ACCEPTANCE <n> PASS|FAIL` line under plain `cargo test`.

use std::panic;
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};
use std::time::{Duration, Instant};

use dglab::bounds::*;
use dglab::coefficients::*;
use dglab::cutoff::*;
use dglab::evolution::*;
use dglab::grid::*;
use dglab::showcase::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

static REPORTED: AtomicBool = AtomicBool::new(false);

fn report(n: u32, name: &str, ok: bool, elapsed: Duration, limit: Duration, detail: String) {
    REPORTED.store(true, Ordering::SeqCst);
    let within = elapsed <= limit;
    let verdict = if ok && within { "PASS" } else { "FAIL" };
    println!(
        "ACCEPTANCE {n:>2} {verdict} {name}: {detail} [runtime {:.2}s, limit {}s]",
        elapsed.as_secs_f64(),
        limit.as_secs()
    );
    assert!(ok, "criterion {n} ({name}) failed: {detail}");
    assert!(within, "criterion {n} ({name}) exceeded its runtime budget");
}

fn cell_rows(grid: &Grid, lo: f64, hi: f64, label: &str) -> Region {
    Region::from_predicate(grid, label, |c| c[0] >= lo && c[0] <= hi)
}

// 1 -----------------------------------------------------------------------

fn criterion_01_gaussian_heat() {
    let start = Instant::now();
    let grid = Grid::uniform_1d(0.0, 1.0, 512).unwrap();
    let coeffs = CoefficientSet::from_model(Constant::isotropic(1.0), (0.0, 1.0));
    let x = cell_rows(&grid, 0.0, 0.3, "X");
    let y = cell_rows(&grid, 0.7, 1.0, "Y");
    let d = region_distance(&x, &y, &grid).unwrap();
    let opts = CertifyOptions::default();
    let prepared = prepare_certificate(&coeffs, &grid, &x, &y, 0.0, 1.0, BoundMode::Gaussian, &opts).unwrap();
    let t = 0.95 * prepared.template.max_interval.unwrap();
    let cfg = SolverConfig::new(t / 20.0);
    let rows = certify_dg_bound_all(
        &coeffs,
        &grid,
        &x,
        &y,
        0.0,
        t,
        &NormIndex::ALL,
        &cfg,
        BoundMode::Gaussian,
        &opts,
    )
    .unwrap();
    let ok = (d - 0.4).abs() < 0.01
        && rows.iter().all(|r| {
            r.validity_ok && r.slack == 0.02 && r.measured_norm <= gaussian_bound(d, r.k, 1.0, t) * 1.02 && r.pass
        });
    let detail = rows
        .iter()
        .map(|r| {
            format!(
                "p={} measured {:.3e} <= bound {:.6}",
                r.p, r.measured_norm, r.predicted_bound
            )
        })
        .collect::<Vec<_>>()
        .join("; ");
    report(
        1,
        "Gaussian certification, heat equation",
        ok,
        start.elapsed(),
        Duration::from_secs(30),
        format!("d = {d:.4}, k = {:.2}, t - s = {t:.3e}; {detail}", rows[0].k),
    );
}

// 2 -----------------------------------------------------------------------

/// `(1/h) int_{lo}^{lo+h} 0.5 erfc(y / (2 sqrt(alpha t))) dy` by midpoint
/// quadrature: the exact `X = {x <= 0}` mass from a unit cell source.
fn cell_tail(lo: f64, h: f64, alpha: f64, t: f64) -> f64 {
    let k = 400;
    (0..k)
        .map(|q| 0.5 * libm::erfc((lo + h * (q as f64 + 0.5) / k as f64) / (2.0 * (alpha * t).sqrt())))
        .sum::<f64>()
        / k as f64
}

fn criterion_02_sharp_bound() {
    let start = Instant::now();
    let alpha = 1.0_f64;
    let mut worst_exact: f64 = 0.0;
    let mut worst_solver: f64 = 0.0;
    let mut ok = true;
    let mut notes = Vec::new();
    for d in [0.5, 1.0, 2.0] {
        for t in [0.01, 0.05, 0.1] {
            let z = d / (2.0 * (alpha * t).sqrt());
            let exact = 0.5 * libm::erfc(z);
            let bound = (-z * z).exp();
            ok &= exact <= bound;
            worst_exact = worst_exact.max(exact / bound);

            // Resolution scaled to the tail depth; the first-order time error is
            // removed by extrapolating log(measured) from steps dt and dt / 2.
            let (h, dt) = sharp_resolution(d, t, alpha);
            let n = ((8.0 + d) / h).round() as usize;
            let h = (8.0 + d) / n as f64;
            let grid = Grid::uniform_1d(-4.0, 4.0 + d, n).unwrap();
            let coeffs = CoefficientSet::from_model(Constant::isotropic(alpha), (0.0, t));
            let x = Region::from_predicate(&grid, "X", |c| c[0] <= 0.0);
            let y_all = Region::from_predicate(&grid, "Y", |c| c[0] >= d);
            // The closest Y column attains the p = 1 norm (monotone kernel).
            let y = Region::from_indices(&grid, y_all.cells()[..1].iter().copied(), "Y").unwrap();
            let run = |dt: f64| {
                let cfg = SolverConfig::new(dt).with_epsilon(0.0);
                let m = assemble_propagator(&coeffs, &grid, 0.0, t, &cfg, Some(&y)).unwrap();
                measure_opnorm(&m, &x, &y, NormIndex::One).unwrap()
            };
            let coarse = run(dt);
            let fine = run(0.5 * dt);
            let measured = fine * fine / coarse;
            let lo = grid.center(y.cells()[0])[0] - 0.5 * h;
            let oracle = cell_tail(lo, h, alpha, t);
            let rel = (measured / oracle - 1.0).abs();
            worst_solver = worst_solver.max(rel);
            ok &= rel <= 0.05;
            notes.push(format!("d={d},t={t}: {rel:.3}"));
        }
    }
    report(
        2,
        "sharp bound via exact kernel",
        ok,
        start.elapsed(),
        Duration::from_secs(60),
        format!(
            "max exact/bound {worst_exact:.3e} (<= 1, zero slack); max solver relative deviation {worst_solver:.4} (<= 0.05) [{}]",
            notes.join(", ")
        ),
    );
}

/// Grid spacing and coarse step for tail depth `z = d / (2 sqrt(alpha t))`.
/// Both shrink like `z^-4` relative to the diffusion scale.
fn sharp_resolution(d: f64, t: f64, alpha: f64) -> (f64, f64) {
    let tau = alpha * t;
    let h = (2.0 * tau.powi(3) / d.powi(4)).sqrt().min(0.005);
    let dt = (8.0 * tau.powi(3) / d.powi(4) / alpha).min(t / 200.0);
    (h, dt)
}

// 3 -----------------------------------------------------------------------

fn criterion_03_tail_bound() {
    let start = Instant::now();
    let (alpha, k) = (1.0_f64, 2.0);
    let mut ok = true;
    let mut worst: f64 = 0.0;
    for r in [0.5, 1.0, 2.0, 4.0, 8.0] {
        for t in [0.01, 0.05, 0.1, 0.5, 1.0] {
            let exact = libm::erfc(r / (2.0 * (alpha * t).sqrt()));
            let bound = tail_bound(r, k, alpha, t);
            ok &= exact <= bound;
            worst = worst.max(exact / bound);
        }
    }
    report(
        3,
        "tail bound",
        ok,
        start.elapsed(),
        Duration::from_secs(1),
        format!("25 (r, t) pairs, k = 2, max exact/bound {worst:.4} (<= 1, zero slack)"),
    );
}

// 4 -----------------------------------------------------------------------

/// One random degenerate case: `a` vanishes on `[z0, z1]`.
fn tilted_case(seed: u64) -> (TiltedCheck, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = Grid::uniform_1d(0.0, 1.0, 200).unwrap();
    let z0: f64 = rng.random_range(0.1..0.7);
    let z1 = z0 + rng.random_range(0.05..0.2);
    let amp: f64 = rng.random_range(0.2..1.5);
    let b0: f64 = rng.random_range(-1.0..1.0);
    let mut snap = Snapshot::zeros(&g);
    for i in 0..g.len() {
        let x = g.center(i)[0];
        let ramp = ((x - z1).max(z0 - x).max(0.0) / 0.05).min(1.0);
        let a = amp * (1.0 + 0.5 * (7.0 * x).sin()) * ramp;
        snap.a[i] = [[a, 0.0], [0.0, 0.0]];
        // Vanishes at the first and last cell centres.
        let s = (x - 0.0025) / 0.995;
        snap.b[i] = [b0 * (std::f64::consts::PI * s).sin(), 0.0];
    }
    let div = face_divergence(&g, &snap.b);
    let r: f64 = rng.random_range(0.0..0.5);
    for i in 0..g.len() {
        snap.c[i] = div[i].min(0.0) - r;
    }
    let coeffs = CoefficientSet::frozen(snap, (0.0, 1.0)).unwrap();
    let rep = validate_assumptions(&coeffs, &g, 2).unwrap();
    assert!(rep.all_ok(false), "{rep:?}");

    // phi = mu (1 - 2 eta) rising across [x0 - w/2, x0 + w/2].
    let x0: f64 = rng.random_range(0.2..0.8);
    let w: f64 = rng.random_range(0.15..0.4);
    let eta = build_eta(2.0);
    let s = |x: f64| 0.25 + 0.25 * ((x - x0) / w + 0.5);
    let d1 = 2.0 * eta.sup_derivative() * 0.25 / w;
    let d2 = 2.0 * eta.sup_second_derivative() * (0.25 / w).powi(2);
    let mu_max = 10.0 / d1.max(d2).max(1.0);
    let mu = mu_max * rng.random_range(0.3..1.0);
    let phi = Field::from_fn(&g, |c| mu * (1.0 - 2.0 * eta.value(s(c[0]))));
    let c2_norm = mu * d1.max(d2).max(1.0);
    let phi = TiltingExponent::from_field(phi);
    let u = Region::from_predicate(&g, "U", |c| (c[0] - x0).abs() <= w / 2.0 + 0.02);

    let t: f64 = rng.random_range(0.05..0.2);
    let cfg = SolverConfig::new(t / 50.0).with_epsilon(0.0);
    let m = assemble_propagator(&coeffs, &g, 0.0, t, &cfg, None).unwrap();
    let v = Field::from_values(&g, (0..g.len()).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap();
    let opts = TiltedOptions {
        time_samples: 2,
        epsilon: 0.0,
        form: GeneratorForm::Discrete,
        slack: 1e-6,
    };
    (
        check_tilted_propagator_inequality(&phi, &coeffs, &g, &m, &v, &u, &opts).unwrap(),
        c2_norm,
    )
}

fn criterion_04_tilted_propagator() {
    let start = Instant::now();
    let mut ok = true;
    let mut worst: f64 = 0.0;
    let mut max_c2: f64 = 0.0;
    for seed in 0..20 {
        let (chk, c2) = tilted_case(seed);
        ok &= chk.pass && chk.lhs <= chk.rhs * (1.0 + 1e-6) && c2 <= 10.0 + 1e-12;
        worst = worst.max(chk.lhs / chk.rhs);
        max_c2 = max_c2.max(c2);
    }
    report(
        4,
        "tilted-propagator inequality",
        ok,
        start.elapsed(),
        Duration::from_secs(120),
        format!("20 seeds, max lhs/rhs {worst:.4} (<= 1 + 1e-6), max ||phi||_C2 {max_c2:.2} (<= 10)"),
    );
}

// 5 -----------------------------------------------------------------------

fn random_grid(rng: &mut ChaCha8Rng) -> Grid {
    if rng.random_bool(0.5) {
        Grid::uniform_1d(0.0, rng.random_range(0.5..2.0), rng.random_range(12..40)).unwrap()
    } else {
        Grid::uniform_2d(
            [0.0, 0.0],
            [1.0, rng.random_range(0.5..1.5)],
            [rng.random_range(4..8), rng.random_range(4..7)],
        )
        .unwrap()
    }
}

/// Assumption-satisfying snapshot: `a >= 0` with zero patches, `b` tangent to
/// the boundary, `c = min(0, div_h b) - r`.
fn random_snapshot(grid: &Grid, rng: &mut ChaCha8Rng, drift: bool) -> Snapshot {
    let mut snap = Snapshot::zeros(grid);
    let amp = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
    let freq = [rng.random_range(1.0..4.0), rng.random_range(1.0..4.0)];
    let r: f64 = rng.random_range(0.0..0.5);
    for i in 0..grid.len() {
        let x = grid.center(i);
        for k in 0..grid.dim() {
            let v: f64 = rng.random_range(-0.3..1.0);
            snap.a[i][k][k] = v.max(0.0);
            if drift {
                let ax = grid.axis(k);
                let h = grid.spacing(k);
                let s = (x[k] - ax.lower - 0.5 * h) / (ax.length() - h);
                snap.b[i][k] = amp[k] * (std::f64::consts::PI * s).sin() * (freq[k] * x[1 - k]).cos();
            }
        }
    }
    let div = face_divergence(grid, &snap.b);
    for i in 0..grid.len() {
        snap.c[i] = if drift { div[i].min(0.0) - r } else { 0.0 };
    }
    snap
}

#[derive(Default)]
struct Worst {
    positivity: f64,
    l1: f64,
    linf: f64,
    mass: f64,
    composition: f64,
    duality: f64,
    riesz_thorin: f64,
}

fn criterion_05_discrete_structure() {
    let start = Instant::now();
    let mut w = Worst {
        positivity: f64::INFINITY,
        ..Default::default()
    };
    for seed in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let grid = random_grid(&mut rng);
        let snap = random_snapshot(&grid, &mut rng, true);
        let coeffs = CoefficientSet::frozen(snap.clone(), (0.0, 1.0)).unwrap();
        assert!(
            validate_assumptions(&coeffs, &grid, 2).unwrap().all_ok(false),
            "seed {seed}"
        );
        let dt: f64 = rng.random_range(0.005..0.05);
        let cfg = SolverConfig::new(dt);
        let (s, r, t) = (0.0, 4.0 * dt, 10.0 * dt);
        let m = assemble_propagator(&coeffs, &grid, s, t, &cfg, None).unwrap();
        w.positivity = w.positivity.min(m.min_entry());
        w.l1 = w.l1.max(m.column_sums().into_iter().fold(0.0, f64::max));
        w.linf = w.linf.max(m.row_sums().unwrap().into_iter().fold(0.0, f64::max));

        let early = assemble_propagator(&coeffs, &grid, s, r, &cfg, None).unwrap();
        let late = assemble_propagator(&coeffs, &grid, r, t, &cfg, None).unwrap();
        w.composition = w
            .composition
            .max(late.compose(&early).unwrap().max_abs_diff(&m).unwrap());

        let adj = assemble_adjoint_propagator(&coeffs, &grid, s, t, &cfg, None).unwrap();
        w.duality = w.duality.max(adj.max_abs_diff(&m.transpose().unwrap()).unwrap());

        let x = Region::from_indices(&grid, (0..grid.len()).filter(|i| i % 3 == 0), "X").unwrap();
        let y = Region::from_indices(&grid, (0..grid.len()).filter(|i| i % 3 == 1), "Y").unwrap();
        let p1 = measure_opnorm(&m, &x, &y, NormIndex::One).unwrap();
        let p2 = measure_opnorm(&m, &x, &y, NormIndex::Two).unwrap();
        let pinf = measure_opnorm(&m, &x, &y, NormIndex::Inf).unwrap();
        let rt = (p1 * pinf).sqrt();
        if rt > 0.0 {
            w.riesz_thorin = w.riesz_thorin.max(p2 / rt);
        }

        // Mass conservation with the same diffusion and b = c = 0.
        let mut pure = snap.clone();
        pure.b.iter_mut().for_each(|b| *b = [0.0; 2]);
        pure.c.iter_mut().for_each(|c| *c = 0.0);
        let pure = CoefficientSet::frozen(pure, (0.0, 1.0)).unwrap();
        let u0 = Field::from_values(&grid, (0..grid.len()).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap();
        let u1 = propagate(&u0, &pure, &grid, s, t, &cfg).unwrap();
        let m0 = u0.integral(&grid);
        w.mass = w.mass.max((u1.integral(&grid) - m0).abs() / m0);
    }
    let ok = w.positivity >= -1e-12
        && w.l1 <= 1.0 + 1e-10
        && w.linf <= 1.0 + 1e-10
        && w.mass <= 1e-10
        && w.composition <= 1e-10
        && w.duality <= 1e-10
        && w.riesz_thorin <= 1.0 + 1e-8;
    report(
        5,
        "discrete structure",
        ok,
        start.elapsed(),
        Duration::from_secs(180),
        format!(
            "50 cases: min entry {:.2e}, max column sum {:.12}, max row sum {:.12}, mass drift {:.1e}, composition {:.1e}, duality {:.1e}, max p2/sqrt(p1 pinf) {:.6}",
            w.positivity, w.l1, w.linf, w.mass, w.composition, w.duality, w.riesz_thorin
        ),
    );
}

// 6 -----------------------------------------------------------------------

/// Exact-shift norm: cell `j` of `Y` moves left by `t`; largest fraction of
/// any such cell inside `X = [x_lo_face, x_hi_face]`.
fn shift_norm(grid: &Grid, x_faces: (f64, f64), y: &Region, t: f64) -> f64 {
    let h = grid.spacing(0);
    y.cells()
        .iter()
        .map(|&j| {
            let lo = grid.center(j)[0] - 0.5 * h - t;
            let overlap = (lo + h).min(x_faces.1) - lo.max(x_faces.0);
            overlap.max(0.0) / h
        })
        .fold(0.0, f64::max)
}

fn criterion_06_transport_validity() {
    let start = Instant::now();
    let grid = Grid::new(vec![Axis::new(0.0, 3.0, 600).periodic()]).unwrap();
    let h = grid.spacing(0);
    let coeffs = CoefficientSet::from_model(Constant::isotropic(0.0).with_drift([1.0, 0.0]), (0.0, 1.0));
    // u_t = u_x: mass moves toward smaller x, from Y onto X.
    let x_faces = (0.5, 1.0);
    let x = Region::from_predicate(&grid, "X", |c| c[0] > x_faces.0 && c[0] < x_faces.1);
    let y = Region::from_predicate(&grid, "Y", |c| c[0] > 1.5 && c[0] < 1.6);
    let d_faces = 1.5 - x_faces.1;
    let mut ok = (d_faces - 0.5).abs() < 1e-12;
    let mut oracle_notes = Vec::new();
    for t in [0.1, 0.3, 0.45, 0.49] {
        let v = shift_norm(&grid, x_faces, &y, t);
        ok &= v == 0.0;
        oracle_notes.push(format!("t={t}: {v}"));
    }
    let late = shift_norm(&grid, x_faces, &y, 0.6);
    ok &= late >= 0.5;
    oracle_notes.push(format!("t=0.6: {late}"));

    let opts = CertifyOptions::default();
    let prepared = prepare_certificate(&coeffs, &grid, &x, &y, 0.0, 1.0, BoundMode::Gaussian, &opts).unwrap();
    let max = prepared.template.max_interval.unwrap();
    let mut solver_notes = Vec::new();
    for frac in [0.25, 0.5, 1.0] {
        let t = frac * max;
        let cfg = SolverConfig::new((t / 10.0).min(h));
        let rows = certify_dg_bound_all(
            &coeffs,
            &grid,
            &x,
            &y,
            0.0,
            t,
            &NormIndex::ALL,
            &cfg,
            BoundMode::Gaussian,
            &opts,
        )
        .unwrap();
        for r in &rows {
            ok &= r.validity_ok && r.pass && (r.alpha_effective - h / 2.0).abs() < 1e-12;
        }
        solver_notes.push(format!(
            "t={t:.2e}: max measured {:.1e} vs bound {:.4}",
            rows.iter().map(|r| r.measured_norm).fold(0.0, f64::max),
            rows[0].predicted_bound
        ));
    }
    report(
        6,
        "transport and validity necessity",
        ok,
        start.elapsed(),
        Duration::from_secs(30),
        format!(
            "exact shift [{}]; upwind with alpha_num = h/2 [{}]",
            oracle_notes.join(", "),
            solver_notes.join(", ")
        ),
    );
}

// 7 -----------------------------------------------------------------------

fn criterion_07_barenblatt() {
    let start = Instant::now();
    let grid = Grid::uniform_1d(-3.0, 3.0, 1024).unwrap();
    let params = BarenblattParams::unit_mass(1, 2.0).unwrap();
    let q = Field::zeros(&grid);
    let cfg = SolverConfig::new(0.01).with_epsilon(1e-6);
    let rep = porous_medium_scenario(
        &params,
        &q,
        &grid,
        1.0,
        &cfg,
        &PorousMediumOptions::default(),
        &CertifyOptions::default(),
    )
    .unwrap();
    let l1 = rep.l1_error.unwrap();
    let radius = (12.0 * params.c).sqrt();
    let support = (rep.support_radius - radius).abs() / radius;
    let ok = l1 <= 0.02 && support <= 0.05 && rep.mass_drift <= 1e-6 && (params.mass() - 1.0).abs() < 1e-12;
    report(
        7,
        "Barenblatt",
        ok,
        start.elapsed(),
        Duration::from_secs(120),
        format!(
            "C = {:.6}, L1 error {:.4} (<= 0.02), support {:.4} vs {:.4} ({:.2}% <= 5%), mass drift {:.1e} (<= 1e-6)",
            params.c,
            l1,
            rep.support_radius,
            radius,
            100.0 * support,
            rep.mass_drift
        ),
    );
}

// 8 -----------------------------------------------------------------------

fn criterion_08_mckean_vlasov() {
    let start = Instant::now();
    let grid = Grid::new(vec![Axis::new(0.0, 4.0, 128).periodic(), Axis::new(-8.0, 8.0, 128)]).unwrap();
    let kernel = ForceKernel::Sine {
        amplitude: 0.5,
        wavenumber: 1,
    };
    let rep = mckean_vlasov_scenario(
        1.0,
        kernel,
        &grid,
        [1.4, 8.0],
        [-0.5, 0.5],
        &SolverConfig::new(0.005),
        &KineticOptions::default(),
        &CertifyOptions::default(),
    )
    .unwrap();
    let times: Vec<f64> = {
        let mut t: Vec<f64> = rep.comparisons.iter().map(|c| c.t).collect();
        t.dedup();
        t
    };
    let certified = rep.comparisons.iter().all(|c| c.validity_ok && c.pass);
    let ok = kernel.sup() == 0.5
        && (rep.d_xy - 1.0).abs() < 1e-12
        && times.len() == 3
        && certified
        && rep.mass_drift <= 1e-8
        && rep.control_l1_error <= 0.01;
    report(
        8,
        "McKean-Vlasov",
        ok,
        start.elapsed(),
        Duration::from_secs(300),
        format!(
            "d = {}, k = {:.1}, certified at t = {:?} ({} comparisons pass), mass drift {:.1e}, control L1 {:.4} (<= 0.01)",
            rep.d_xy,
            rep.comparisons[0].k,
            times.iter().map(|t| format!("{t:.2e}")).collect::<Vec<_>>(),
            rep.comparisons.len(),
            rep.mass_drift,
            rep.control_l1_error
        ),
    );
}

// 9 -----------------------------------------------------------------------

/// Grid search on `[0, top]`, zooming three times around the best node.
fn brute_force_g(d: f64, t: f64, alpha: f64, beta: f64, c1: f64, c2: f64, n: usize, top: f64) -> f64 {
    let steps = 1000;
    let g = |mu: f64| decay_rate_g(mu, d, t, alpha, beta, c1, c2, n).0;
    let (mut lo, mut hi) = (0.0, top);
    let mut best = (0.0, g(0.0));
    for _ in 0..4 {
        let h = (hi - lo) / steps as f64;
        for i in 0..=steps {
            let mu = lo + h * i as f64;
            let v = g(mu);
            if v > best.1 {
                best = (mu, v);
            }
        }
        lo = (best.0 - h).max(0.0);
        hi = best.0 + h;
    }
    best.1
}

fn criterion_09_formulas() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst: f64 = 0.0;
    let mut ok = true;
    for _ in 0..100 {
        let d: f64 = rng.random_range(0.1..3.0);
        let t: f64 = rng.random_range(0.001..1.0);
        let alpha: f64 = rng.random_range(0.1..3.0);
        let beta: f64 = rng.random_range(0.0..2.0);
        let c1: f64 = rng.random_range(1.0..10.0);
        let c2: f64 = rng.random_range(0.0..100.0);
        let n = rng.random_range(1..=3);
        let (mu, g) = optimize_g(d, t, alpha, beta, c1, c2, n);
        if g > 0.0 {
            let brute = brute_force_g(d, t, alpha, beta, c1, c2, n, 10.0 * mu);
            let rel = (brute - g).abs() / g;
            worst = worst.max(rel);
            ok &= rel <= 1e-10 && brute <= g * (1.0 + 1e-12);
        } else {
            // Bracket <= 0: G is maximal at mu = 0.
            ok &= mu == 0.0 && brute_force_g(d, t, alpha, beta, c1, c2, n, 10.0) <= 0.0;
        }
    }

    // Hand substitution.
    let exact = |a: f64, b: f64| a == b || (a - b).abs() <= 1e-15 * b.abs();
    ok &= exact(constant_k(1, 1.0, 1.0, 1.0).unwrap(), 2.0);
    ok &= exact(constant_k(2, 3.0, 1.0, 1.0).unwrap(), 6.0);
    ok &= exact(constant_k(1, 1.0, 0.0, 0.0).unwrap(), 1.0);
    ok &= validity_interval_ok(1.0, 0.5, 1.0, 0.0, 2.0).0 && !validity_interval_ok(1.0, 0.5 + 1e-9, 1.0, 0.0, 2.0).0;
    ok &= exact(validity_interval_ok(1.0, 0.1, 1.0, 0.0, 2.0).1, 0.5);
    ok &= validity_interval_ok(1.0, 0.5, 0.0, 1.0, 2.0).0 && !validity_interval_ok(1.0, 0.51, 0.0, 1.0, 2.0).0;
    ok &= validity_interval_ok(1.0, 1e-300, 5.0, 5.0, 100.0).0;
    ok &= decay_rate_g(0.0, 1.0, 0.1, 1.0, 0.0, 1.0, 0.0, 1).0 == 0.0;
    let (mu, g) = optimize_g(1.0, 0.1, 1.0, 0.0, 1.0, 0.0, 1);
    ok &= exact(mu, 2.5) && exact(g, 2.5);
    ok &= optimize_g(1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1) == (0.0, 0.0);
    ok &= exact(gaussian_bound(1.0, 2.0, 1.0, 0.5), (-1.0f64 / 8.0).exp());
    let (alpha, t) = (0.7_f64, 0.3);
    ok &= exact(tail_bound(16.0 * (alpha * t).sqrt(), 2.0, alpha, t), (-1.0f64).exp());
    report(
        9,
        "formula cross-checks",
        ok,
        start.elapsed(),
        Duration::from_secs(1),
        format!("100 random tuples, max |closed form - zoomed grid search| / G* = {worst:.2e} (<= 1e-10); tabled cases exact"),
    );
}

// 10 ----------------------------------------------------------------------

fn criterion_10_certificates() {
    let start = Instant::now();
    let g1 = Grid::uniform_1d(0.0, 1.0, 1024).unwrap();
    let g2 = Grid::uniform_2d([0.0, 0.0], [1.0, 1.0], [128, 128]).unwrap();
    let disc = |g: &Grid, c: [f64; 2], r: f64, label: &str| {
        Region::from_predicate(g, label, move |x| (x[0] - c[0]).hypot(x[1] - c[1]) <= r)
    };
    let geometries: Vec<(&Grid, Region, Region)> = vec![
        (&g1, cell_rows(&g1, 0.0, 0.2, "X"), cell_rows(&g1, 0.8, 1.0, "Y")),
        (&g1, cell_rows(&g1, 0.0, 0.45, "X"), cell_rows(&g1, 0.75, 1.0, "Y")),
        (
            &g1,
            cell_rows(&g1, 0.4, 0.5, "X"),
            cell_rows(&g1, 0.0, 0.1, "Y").union(&cell_rows(&g1, 0.85, 1.0, "Y"), "Y"),
        ),
        (&g1, cell_rows(&g1, 0.3, 0.35, "X"), cell_rows(&g1, 0.6, 0.62, "Y")),
        (&g2, cell_rows(&g2, 0.0, 0.2, "X"), cell_rows(&g2, 0.7, 1.0, "Y")),
        (
            &g2,
            disc(&g2, [0.5, 0.5], 0.15, "X"),
            Region::from_predicate(&g2, "Y", |x| (x[0] - 0.5).hypot(x[1] - 0.5) >= 0.6),
        ),
        (&g2, disc(&g2, [0.2, 0.2], 0.1, "X"), disc(&g2, [0.8, 0.75], 0.15, "Y")),
        (
            &g2,
            Region::from_box(&g2, &[0.0, 0.0], &[0.3, 1.0], "X"),
            Region::from_box(&g2, &[0.6, 0.6], &[1.0, 1.0], "Y"),
        ),
        (&g2, disc(&g2, [0.0, 0.0], 0.3, "X"), disc(&g2, [1.0, 1.0], 0.5, "Y")),
        (
            &g2,
            Region::from_box(&g2, &[0.4, 0.0], &[0.6, 0.3], "X"),
            Region::from_box(&g2, &[0.0, 0.7], &[1.0, 1.0], "Y"),
        ),
    ];
    let mut ok = true;
    let mut worst1: f64 = 0.0;
    let mut worst2: f64 = 0.0;
    for (g, x, y) in &geometries {
        let cert = build_xi_general(x, y, g, DEFAULT_C3).unwrap();
        ok &= cert.c1_measured <= 1.1 * cert.c1_analytic && cert.c2_measured <= 1.1 * cert.c2_analytic;
        worst1 = worst1.max(cert.c1_measured / cert.c1_analytic);
        worst2 = worst2.max(cert.c2_measured / cert.c2_analytic);
    }
    let mut sharp_worst: f64 = 0.0;
    for (g, x, y, eps) in [
        (&g1, cell_rows(&g1, 0.0, 0.3, "X"), cell_rows(&g1, 0.6, 1.0, "Y"), 0.1),
        (&g1, cell_rows(&g1, 0.7, 1.0, "X"), cell_rows(&g1, 0.0, 0.2, "Y"), 0.01),
        (&g2, cell_rows(&g2, 0.0, 0.4, "X"), cell_rows(&g2, 0.5, 1.0, "Y"), 0.05),
    ] {
        let cert = build_xi_sharp(&x, &y, g, eps).unwrap();
        ok &= cert.c1_measured <= 1.0 && cert.concavity_ok == Some(true);
        sharp_worst = sharp_worst.max(cert.c1_measured);
    }
    report(
        10,
        "certificate quality",
        ok,
        start.elapsed(),
        Duration::from_secs(30),
        format!(
            "10 geometries: max c1/(c3 c4) {worst1:.4}, max c2/(3 c3^3 c4) {worst2:.4} (<= 1.1); sharp: max |grad xi| d {sharp_worst:.4} (<= 1), concavity ok"
        ),
    );
}

fn main() -> ExitCode {
    let criteria: [(u32, fn()); 10] = [
        (1, criterion_01_gaussian_heat),
        (2, criterion_02_sharp_bound),
        (3, criterion_03_tail_bound),
        (4, criterion_04_tilted_propagator),
        (5, criterion_05_discrete_structure),
        (6, criterion_06_transport_validity),
        (7, criterion_07_barenblatt),
        (8, criterion_08_mckean_vlasov),
        (9, criterion_09_formulas),
        (10, criterion_10_certificates),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (n, f) in criteria {
        if !filter.is_empty() && !filter.iter().any(|a| a.parse() == Ok(n)) {
            continue;
        }
        REPORTED.store(false, Ordering::SeqCst);
        if panic::catch_unwind(f).is_err() {
            failed += 1;
            if !REPORTED.load(Ordering::SeqCst) {
                println!("ACCEPTANCE {n:>2} FAIL: aborted before reporting");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} acceptance criteria failed");
        ExitCode::FAILURE
    }
}

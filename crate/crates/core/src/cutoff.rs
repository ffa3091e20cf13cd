//! Cutoff functions `xi` separating two regions and the signed tilting
//! exponent `phi = mu (1 - 2 xi)`.
//!
//! The general construction composes a smooth monotone profile `eta` with a
//! regularized distance `rho` to `X`: `xi = eta(rho / d)`. The sharp
//! construction uses a linear profile across a slab gap.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{region_distance, Boundary, Field, Grid, Region};

/// Default comparability constant.
pub const DEFAULT_C3: f64 = 2.0;

/// Distance from every cell center to the nearest center of `x`.
pub fn distance_field(x: &Region, grid: &Grid) -> Result<Field> {
    if x.is_empty() {
        return Err(Error::EmptyRegion);
    }
    // The nearest lattice point of a region is always on its rim.
    let rim = x.rim(grid);
    let values = (0..grid.len())
        .map(|i| {
            if x.contains(i) {
                0.0
            } else {
                rim.iter()
                    .map(|&r| grid.center_distance(i, r))
                    .fold(f64::INFINITY, f64::min)
            }
        })
        .collect();
    Ok(Field::from_vec_unchecked(values))
}

fn shifted(grid: &Grid, idx: usize, off: [isize; 2]) -> Option<usize> {
    let mut c = grid.coords(idx);
    for k in 0..grid.dim() {
        let ax = grid.axis(k);
        let n = ax.cells as isize;
        let p = c[k] as isize + off[k];
        c[k] = if (0..n).contains(&p) {
            p as usize
        } else if ax.boundary == Boundary::Periodic {
            p.rem_euclid(n) as usize
        } else {
            return None;
        };
    }
    Some(grid.index(c))
}

/// Regularized distance `rho` to `x`: the distance `delta` averaged over a
/// ball of radius `delta / (2 c3)` around each cell (offsets kept only in
/// symmetric pairs, so affine distance profiles are reproduced exactly).
/// Fails when `delta / c3 <= rho <= c3 delta` is violated somewhere.
pub fn build_regularized_distance(x: &Region, grid: &Grid, c3: f64) -> Result<Field> {
    if !(c3 > 1.0) {
        return Err(Error::InvalidArgument(format!("c3 must exceed 1, got {c3}")));
    }
    let delta = distance_field(x, grid)?;
    let dv = delta.values();
    let h: Vec<f64> = (0..grid.dim()).map(|k| grid.spacing(k)).collect();
    let rho: Vec<f64> = (0..grid.len())
        .map(|i| {
            let r = dv[i] / (2.0 * c3);
            let reach: Vec<isize> = (0..2)
                .map(|k| {
                    if k >= grid.dim() {
                        return 0;
                    }
                    let mut m = (r / h[k]).floor() as isize;
                    if grid.axis(k).boundary == Boundary::Periodic {
                        m = m.min((grid.axis(k).cells as isize - 1) / 2);
                    }
                    m
                })
                .collect();
            let (mut sum, mut count) = (0.0, 0usize);
            for o1 in -reach[1]..=reach[1] {
                for o0 in -reach[0]..=reach[0] {
                    let dist2 = (o0 as f64 * h[0]).powi(2)
                        + if grid.dim() > 1 {
                            (o1 as f64 * h[1]).powi(2)
                        } else {
                            0.0
                        };
                    if dist2 > r * r {
                        continue;
                    }
                    if let (Some(p), Some(_)) = (shifted(grid, i, [o0, o1]), shifted(grid, i, [-o0, -o1])) {
                        sum += dv[p];
                        count += 1;
                    }
                }
            }
            if count == 0 {
                dv[i]
            } else {
                sum / count as f64
            }
        })
        .collect();
    let mut worst: f64 = 1.0;
    for (r, d) in rho.iter().zip(dv) {
        if *d > 0.0 {
            worst = worst.max(r / d).max(d / r);
        } else if *r != 0.0 {
            worst = f64::INFINITY;
        }
    }
    if worst > c3 {
        return Err(Error::Comparability { worst_ratio: worst, c3 });
    }
    Ok(Field::from_vec_unchecked(rho))
}

/// The quintic smoothstep profile, rescaled to rise on `[1/(2 c3), 1/c3]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Eta {
    pub c3: f64,
}

const SUP_S1: f64 = 15.0 / 8.0;

fn sup_s2() -> f64 {
    10.0 / 3f64.sqrt()
}

impl Eta {
    fn lo(&self) -> f64 {
        1.0 / (2.0 * self.c3)
    }

    pub fn width(&self) -> f64 {
        1.0 / (2.0 * self.c3)
    }

    fn theta(&self, t: f64) -> f64 {
        ((t - self.lo()) / self.width()).clamp(0.0, 1.0)
    }

    pub fn value(&self, t: f64) -> f64 {
        let s = self.theta(t);
        s * s * s * (10.0 + s * (-15.0 + 6.0 * s))
    }

    pub fn derivative(&self, t: f64) -> f64 {
        let s = self.theta(t);
        30.0 * s * s * (1.0 - s) * (1.0 - s) / self.width()
    }

    pub fn second_derivative(&self, t: f64) -> f64 {
        let s = self.theta(t);
        if s <= 0.0 || s >= 1.0 {
            return 0.0;
        }
        60.0 * s * (1.0 - s) * (1.0 - 2.0 * s) / (self.width() * self.width())
    }

    pub fn sup_derivative(&self) -> f64 {
        SUP_S1 / self.width()
    }

    pub fn sup_second_derivative(&self) -> f64 {
        sup_s2() / (self.width() * self.width())
    }

    /// `c4 = max(sup |eta'|, sup |eta''|)`.
    pub fn c4(&self) -> f64 {
        self.sup_derivative().max(self.sup_second_derivative())
    }
}

/// Profile with plateaus `0` below `1/(2 c3)` and `1` above `1/c3`.
pub fn build_eta(c3: f64) -> Eta {
    Eta { c3 }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CutoffMode {
    General,
    Sharp,
}

/// A cutoff `xi` with its measured derivative constants.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CutoffCertificate {
    #[serde(skip)]
    pub xi: Field,
    pub x: Region,
    pub y: Region,
    pub d_xy: f64,
    /// `sup |grad xi| * d`.
    pub c1_measured: f64,
    /// `sup ||hess xi|| * d^2` (Frobenius norm in 2D).
    pub c2_measured: f64,
    pub c1_analytic: f64,
    pub c2_analytic: f64,
    pub c3: Option<f64>,
    pub c4: Option<f64>,
    pub concavity_ok: Option<bool>,
    pub mode: CutoffMode,
    pub epsilon: Option<f64>,
}

/// Finite-difference sup norms of gradient and Hessian over `cells`, skipping
/// cells whose stencil leaves the grid across a Neumann face.
pub fn derivative_sups(f: &Field, grid: &Grid, cells: impl Iterator<Item = usize>) -> (f64, f64) {
    let v = f.values();
    let (mut g1, mut g2): (f64, f64) = (0.0, 0.0);
    'cells: for i in cells {
        let mut grad2 = 0.0;
        let mut hess2 = 0.0;
        for k in 0..grid.dim() {
            let hk = grid.spacing(k);
            let mut ok = [0usize; 2];
            for (slot, dir) in [(0, -1isize), (1, 1)] {
                match grid.neighbour(i, k, dir) {
                    Some(n) => ok[slot] = n,
                    None => continue 'cells,
                }
            }
            let (m, p) = (v[ok[0]], v[ok[1]]);
            grad2 += ((p - m) / (2.0 * hk)).powi(2);
            hess2 += ((p - 2.0 * v[i] + m) / (hk * hk)).powi(2);
        }
        if grid.dim() == 2 {
            let mut corner = [0.0; 4];
            for (slot, (d0, d1)) in [(1isize, 1isize), (1, -1), (-1, 1), (-1, -1)].iter().enumerate() {
                match shifted(grid, i, [*d0, *d1]) {
                    Some(n) => corner[slot] = v[n],
                    None => continue 'cells,
                }
            }
            let mixed = (corner[0] - corner[1] - corner[2] + corner[3]) / (4.0 * grid.spacing(0) * grid.spacing(1));
            hess2 += 2.0 * mixed * mixed;
        }
        g1 = g1.max(grad2.sqrt());
        g2 = g2.max(hess2.sqrt());
    }
    (g1, g2)
}

/// Cells with a neighbour whose value differs (the transition region and its
/// one-cell rim).
fn transition_cells(xi: &Field, grid: &Grid) -> Vec<usize> {
    let v = xi.values();
    (0..grid.len())
        .filter(|&i| {
            (v[i] > 0.0 && v[i] < 1.0)
                || (0..grid.dim()).any(|k| {
                    [-1, 1]
                        .iter()
                        .filter_map(|&d| grid.neighbour(i, k, d))
                        .any(|n| v[n] != v[i])
                })
        })
        .collect()
}

/// General cutoff `xi = eta(rho / d)` with exact plateaus on `x` and `y`.
pub fn build_xi_general(x: &Region, y: &Region, grid: &Grid, c3: f64) -> Result<CutoffCertificate> {
    let d = region_distance(x, y, grid)?;
    if d <= 0.0 {
        return Err(Error::InvalidRegion(
            "X and Y must be disjoint with positive distance".into(),
        ));
    }
    let limit = d / (8.0 * c3 * c3);
    let h = (0..grid.dim()).map(|k| grid.spacing(k)).fold(0.0, f64::max);
    if h > limit * (1.0 + 1e-12) {
        return Err(Error::UnderResolved { h, limit });
    }
    let rho = build_regularized_distance(x, grid, c3)?;
    let eta = build_eta(c3);
    let mut xi = rho.map(|r| eta.value(r / d));
    for &i in x.cells() {
        if xi.values()[i] != 0.0 {
            return Err(Error::Plateau(format!("xi = {} on X cell {i}", xi.values()[i])));
        }
    }
    for &i in y.cells() {
        if xi.values()[i] != 1.0 {
            return Err(Error::Plateau(format!("xi = {} on Y cell {i}", xi.values()[i])));
        }
    }
    for &i in x.cells() {
        xi.values_mut()[i] = 0.0;
    }
    for &i in y.cells() {
        xi.values_mut()[i] = 1.0;
    }
    let (g1, g2) = derivative_sups(&xi, grid, transition_cells(&xi, grid).into_iter());
    let c4 = eta.c4();
    Ok(CutoffCertificate {
        xi,
        x: x.clone(),
        y: y.clone(),
        d_xy: d,
        c1_measured: g1 * d,
        c2_measured: g2 * d * d,
        c1_analytic: c3 * c4,
        c2_analytic: 3.0 * c3.powi(3) * c4,
        c3: Some(c3),
        c4: Some(c4),
        concavity_ok: None,
        mode: CutoffMode::General,
        epsilon: None,
    })
}

/// Slab geometry along one axis: `x` below `lo_edge`, `y` above `hi_edge`
/// (or mirrored when `flipped`).
struct Slabs {
    axis: usize,
    x_edge: f64,
    d: f64,
    flipped: bool,
}

fn detect_slabs(x: &Region, y: &Region, grid: &Grid) -> Result<Slabs> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::EmptyRegion);
    }
    for axis in 0..grid.dim() {
        let coord = |i: usize| grid.center(i)[axis];
        let span = |r: &Region| {
            r.cells()
                .iter()
                .map(|&i| coord(i))
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)))
        };
        let (xlo, xhi) = span(x);
        let (ylo, yhi) = span(y);
        let slab = |r: &Region, lo: f64, hi: f64| {
            let expected = (0..grid.len()).filter(|&i| {
                let c = coord(i);
                c >= lo - 1e-12 && c <= hi + 1e-12
            });
            expected.clone().count() == r.len() && expected.into_iter().all(|i| r.contains(i))
        };
        if !(slab(x, xlo, xhi) && slab(y, ylo, yhi)) {
            continue;
        }
        let axis_min = grid.axis(axis).center(0);
        let axis_max = grid.axis(axis).center(grid.axis(axis).cells - 1);
        let x_low_side = (xlo - axis_min).abs() < 1e-12 && (yhi - axis_max).abs() < 1e-12 && xhi < ylo;
        let x_high_side = (xhi - axis_max).abs() < 1e-12 && (ylo - axis_min).abs() < 1e-12 && yhi < xlo;
        if grid.axis(axis).boundary == Boundary::Periodic {
            continue;
        }
        if x_low_side {
            return Ok(Slabs {
                axis,
                x_edge: xhi,
                d: ylo - xhi,
                flipped: false,
            });
        }
        if x_high_side {
            return Ok(Slabs {
                axis,
                x_edge: xlo,
                d: xlo - yhi,
                flipped: true,
            });
        }
    }
    Err(Error::NotSlabs(format!(
        "regions {} and {} are not complementary half-slabs along a Neumann axis",
        x.label, y.label
    )))
}

/// Monotone profile `eps/2 + (1 - eps) mu` on `[0, 1]` with exponential caps
/// outside that keep values in `(0, eps/2]` and `[1 - eps/2, 1)`.
pub fn sharp_profile(mu: f64, eps: f64) -> f64 {
    let slope = 1.0 - eps;
    if mu < 0.0 {
        0.5 * eps * (2.0 * slope * mu / eps).exp()
    } else if mu > 1.0 {
        1.0 - 0.5 * eps * (-2.0 * slope * (mu - 1.0) / eps).exp()
    } else {
        0.5 * eps + slope * mu
    }
}

/// Sharp cutoff across a slab gap of width `d`.
pub fn build_xi_sharp(x: &Region, y: &Region, grid: &Grid, epsilon: f64) -> Result<CutoffCertificate> {
    if !(epsilon > 0.0 && epsilon < 0.5) {
        return Err(Error::InvalidArgument(format!(
            "epsilon must lie in (0, 0.5), got {epsilon}"
        )));
    }
    let s = detect_slabs(x, y, grid)?;
    if s.d <= 0.0 {
        return Err(Error::NotSlabs("slabs overlap".into()));
    }
    let xi = Field::from_vec_unchecked(
        (0..grid.len())
            .map(|i| {
                let c = grid.center(i)[s.axis];
                let mu = if s.flipped { s.x_edge - c } else { c - s.x_edge } / s.d;
                sharp_profile(mu, epsilon)
            })
            .collect(),
    );
    let gap: Vec<usize> = (0..grid.len()).filter(|&i| !x.contains(i) && !y.contains(i)).collect();
    let (g1, g2) = derivative_sups(&xi, grid, gap.iter().copied());
    let v = xi.values();
    let mut max_second: f64 = f64::NEG_INFINITY;
    for &i in &gap {
        if let (Some(m), Some(p)) = (grid.neighbour(i, s.axis, -1), grid.neighbour(i, s.axis, 1)) {
            max_second = max_second.max(v[p] - 2.0 * v[i] + v[m]);
        }
    }
    Ok(CutoffCertificate {
        xi,
        x: x.clone(),
        y: y.clone(),
        d_xy: s.d,
        c1_measured: g1 * s.d,
        c2_measured: g2 * s.d * s.d,
        c1_analytic: 1.0 - epsilon,
        c2_analytic: 0.0,
        c3: None,
        c4: None,
        concavity_ok: Some(max_second <= 1e-10),
        mode: CutoffMode::Sharp,
        epsilon: Some(epsilon),
    })
}

/// Signed tilting exponent `phi`; the tilt operator multiplies by `exp(phi)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TiltingExponent {
    pub phi: Field,
    pub mu: f64,
    pub certificate: Option<CutoffCertificate>,
}

impl TiltingExponent {
    /// An arbitrary exponent not tied to a cutoff.
    pub fn from_field(phi: Field) -> Self {
        let mu = phi.values().iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        TiltingExponent {
            phi,
            mu,
            certificate: None,
        }
    }

    pub fn weights(&self, sign: f64) -> Field {
        self.phi.map(|p| (sign * p).exp())
    }
}

/// `phi = mu (1 - 2 xi)`.
pub fn build_phi(cert: &CutoffCertificate, mu: f64) -> Result<TiltingExponent> {
    if !(mu >= 0.0 && mu.is_finite()) {
        return Err(Error::InvalidArgument(format!("mu must be >= 0, got {mu}")));
    }
    Ok(TiltingExponent {
        phi: cert.xi.map(|x| mu * (1.0 - 2.0 * x)),
        mu,
        certificate: Some(cert.clone()),
    })
}

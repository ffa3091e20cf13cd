//! Uniform box grids, cell regions, scalar fields and the discrete norms
//! every other module measures with.
//!
//! Cells are addressed by a flat index with axis 0 running fastest, so a 2D
//! cell `(i, j)` lives at `i + j * cells[0]`. All geometry is evaluated at
//! cell centers.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Face treatment on both ends of an axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    /// Zero normal flux.
    Neumann,
    /// Wrap-around; used as a free-space proxy along an axis.
    Periodic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub lower: f64,
    pub upper: f64,
    pub cells: usize,
    pub boundary: Boundary,
}

impl Axis {
    pub fn new(lower: f64, upper: f64, cells: usize) -> Self {
        Axis {
            lower,
            upper,
            cells,
            boundary: Boundary::Neumann,
        }
    }

    pub fn periodic(mut self) -> Self {
        self.boundary = Boundary::Periodic;
        self
    }

    pub fn spacing(&self) -> f64 {
        (self.upper - self.lower) / self.cells as f64
    }

    pub fn center(&self, i: usize) -> f64 {
        self.lower + (i as f64 + 0.5) * self.spacing()
    }

    pub fn length(&self) -> f64 {
        self.upper - self.lower
    }
}

/// An interior (or periodic) face shared by cells `lo` and `hi`, where `hi`
/// is the neighbour of `lo` in the positive direction of `axis`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Face {
    pub lo: usize,
    pub hi: usize,
    pub axis: usize,
}

/// Uniform discretization of a box in one or two dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    axes: Vec<Axis>,
}

impl Grid {
    pub fn new(axes: Vec<Axis>) -> Result<Self> {
        if axes.is_empty() || axes.len() > 2 {
            return Err(Error::InvalidGrid(format!(
                "dimension must be 1 or 2, got {}",
                axes.len()
            )));
        }
        for (k, ax) in axes.iter().enumerate() {
            if !(ax.lower.is_finite() && ax.upper.is_finite()) || ax.upper <= ax.lower {
                return Err(Error::InvalidGrid(format!(
                    "axis {k}: extents [{}, {}] must be finite with upper > lower",
                    ax.lower, ax.upper
                )));
            }
            if ax.cells < 2 {
                return Err(Error::InvalidGrid(format!(
                    "axis {k}: need at least 2 cells, got {}",
                    ax.cells
                )));
            }
            if ax.boundary == Boundary::Periodic && ax.cells < 3 {
                return Err(Error::InvalidGrid(format!(
                    "axis {k}: periodic axes need at least 3 cells"
                )));
            }
        }
        Ok(Grid { axes })
    }

    pub fn uniform_1d(lower: f64, upper: f64, cells: usize) -> Result<Self> {
        Grid::new(vec![Axis::new(lower, upper, cells)])
    }

    pub fn uniform_2d(lower: [f64; 2], upper: [f64; 2], cells: [usize; 2]) -> Result<Self> {
        Grid::new(vec![
            Axis::new(lower[0], upper[0], cells[0]),
            Axis::new(lower[1], upper[1], cells[1]),
        ])
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn axis(&self, k: usize) -> &Axis {
        &self.axes[k]
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.cells).product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self, k: usize) -> f64 {
        self.axes[k].spacing()
    }

    /// Smallest spacing over all axes.
    pub fn min_spacing(&self) -> f64 {
        self.axes.iter().map(Axis::spacing).fold(f64::INFINITY, f64::min)
    }

    /// Measure of one cell, `h^n`.
    pub fn cell_volume(&self) -> f64 {
        self.axes.iter().map(Axis::spacing).product()
    }

    /// Multi-index of a flat cell index.
    pub fn coords(&self, idx: usize) -> [usize; 2] {
        let n0 = self.axes[0].cells;
        [idx % n0, idx / n0]
    }

    pub fn index(&self, coords: [usize; 2]) -> usize {
        coords[0] + coords[1] * self.axes[0].cells
    }

    /// Cell center; the unused second coordinate is 0 in 1D.
    pub fn center(&self, idx: usize) -> [f64; 2] {
        let c = self.coords(idx);
        let mut x = [0.0; 2];
        for (k, ax) in self.axes.iter().enumerate() {
            x[k] = ax.center(c[k]);
        }
        x
    }

    /// Euclidean distance between two cell centers, wrapping periodic axes.
    pub fn center_distance(&self, i: usize, j: usize) -> f64 {
        let (a, b) = (self.center(i), self.center(j));
        let mut sum = 0.0;
        for (k, ax) in self.axes.iter().enumerate() {
            let mut diff = (a[k] - b[k]).abs();
            if ax.boundary == Boundary::Periodic {
                diff = diff.min(ax.length() - diff);
            }
            sum += diff * diff;
        }
        sum.sqrt()
    }

    /// Neighbour of `idx` one step along `axis` in direction `dir` (+1/-1),
    /// honouring periodic wrap. `None` across a Neumann face.
    pub fn neighbour(&self, idx: usize, axis: usize, dir: isize) -> Option<usize> {
        let mut c = self.coords(idx);
        let ax = &self.axes[axis];
        let n = ax.cells as isize;
        let p = c[axis] as isize + dir;
        let p = if (0..n).contains(&p) {
            p
        } else if ax.boundary == Boundary::Periodic {
            p.rem_euclid(n)
        } else {
            return None;
        };
        c[axis] = p as usize;
        Some(self.index(c))
    }

    /// All faces that carry flux: interior faces plus periodic wrap faces.
    pub fn faces(&self) -> Vec<Face> {
        let mut out = Vec::with_capacity(self.len() * self.dim());
        for axis in 0..self.dim() {
            for idx in 0..self.len() {
                if let Some(hi) = self.neighbour(idx, axis, 1) {
                    out.push(Face { lo: idx, hi, axis });
                }
            }
        }
        out
    }

    /// Whether the cell touches a Neumann face, and the outward normals of
    /// those faces as `(axis, sign)`.
    pub fn boundary_normals(&self, idx: usize) -> Vec<(usize, f64)> {
        let mut out = Vec::new();
        for axis in 0..self.dim() {
            if self.neighbour(idx, axis, -1).is_none() {
                out.push((axis, -1.0));
            }
            if self.neighbour(idx, axis, 1).is_none() {
                out.push((axis, 1.0));
            }
        }
        out
    }

    /// Center of the Neumann face of `idx` with outward normal `(axis, sign)`.
    pub fn face_center(&self, idx: usize, axis: usize, sign: f64) -> [f64; 2] {
        let mut x = self.center(idx);
        x[axis] += 0.5 * sign * self.spacing(axis);
        x
    }

    /// Same grid with every extent scaled about the origin by `factor`.
    pub fn dilated(&self, factor: f64) -> Result<Self> {
        Grid::new(
            self.axes
                .iter()
                .map(|a| Axis {
                    lower: a.lower * factor,
                    upper: a.upper * factor,
                    ..*a
                })
                .collect(),
        )
    }
}

/// A labelled set of cells, `X` or `Y` in a bound comparison.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Region {
    cells: Vec<usize>,
    pub label: String,
}

impl Region {
    pub fn from_indices(
        grid: &Grid,
        indices: impl IntoIterator<Item = usize>,
        label: impl Into<String>,
    ) -> Result<Self> {
        let set: BTreeSet<usize> = indices.into_iter().collect();
        if let Some(&bad) = set.iter().find(|&&i| i >= grid.len()) {
            return Err(Error::InvalidRegion(format!(
                "cell index {bad} out of range for a grid of {} cells",
                grid.len()
            )));
        }
        Ok(Region {
            cells: set.into_iter().collect(),
            label: label.into(),
        })
    }

    pub fn empty(label: impl Into<String>) -> Self {
        Region {
            cells: Vec::new(),
            label: label.into(),
        }
    }

    pub fn all(grid: &Grid, label: impl Into<String>) -> Self {
        Region {
            cells: (0..grid.len()).collect(),
            label: label.into(),
        }
    }

    /// Cells whose centers satisfy a predicate.
    pub fn from_predicate(grid: &Grid, label: impl Into<String>, pred: impl Fn([f64; 2]) -> bool) -> Self {
        Region {
            cells: (0..grid.len()).filter(|&i| pred(grid.center(i))).collect(),
            label: label.into(),
        }
    }

    /// Cells whose centers lie in the closed axis-aligned box
    /// `[lo[k], hi[k]]`; unused trailing axes are ignored.
    pub fn from_box(grid: &Grid, lo: &[f64], hi: &[f64], label: impl Into<String>) -> Self {
        let dim = grid.dim();
        Region::from_predicate(grid, label, |x| {
            (0..dim).all(|k| {
                let l = lo.get(k).copied().unwrap_or(f64::NEG_INFINITY);
                let h = hi.get(k).copied().unwrap_or(f64::INFINITY);
                x[k] >= l && x[k] <= h
            })
        })
    }

    pub fn cells(&self) -> &[usize] {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn contains(&self, idx: usize) -> bool {
        self.cells.binary_search(&idx).is_ok()
    }

    pub fn complement(&self, grid: &Grid, label: impl Into<String>) -> Self {
        Region {
            cells: (0..grid.len()).filter(|i| !self.contains(*i)).collect(),
            label: label.into(),
        }
    }

    pub fn union(&self, other: &Region, label: impl Into<String>) -> Self {
        let set: BTreeSet<usize> = self.cells.iter().chain(&other.cells).copied().collect();
        Region {
            cells: set.into_iter().collect(),
            label: label.into(),
        }
    }

    /// Cells of the region that have a grid neighbour outside it, or touch
    /// the domain boundary. Nearest-pair searches only need these.
    pub(crate) fn rim(&self, grid: &Grid) -> Vec<usize> {
        self.cells
            .iter()
            .copied()
            .filter(|&i| {
                (0..grid.dim()).any(|ax| {
                    [-1, 1].iter().any(|&d| match grid.neighbour(i, ax, d) {
                        Some(nb) => !self.contains(nb),
                        None => true,
                    })
                })
            })
            .collect()
    }
}

/// One scalar per cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Field {
    values: Vec<f64>,
}

impl Field {
    pub fn zeros(grid: &Grid) -> Self {
        Field {
            values: vec![0.0; grid.len()],
        }
    }

    pub fn constant(grid: &Grid, value: f64) -> Self {
        Field {
            values: vec![value; grid.len()],
        }
    }

    pub fn from_values(grid: &Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidField(format!(
                "length {} does not match cell count {}",
                values.len(),
                grid.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidField(format!("non-finite value at cell {i}")));
        }
        Ok(Field { values })
    }

    /// Samples a function at cell centers.
    pub fn from_fn(grid: &Grid, f: impl Fn([f64; 2]) -> f64) -> Self {
        Field {
            values: (0..grid.len()).map(|i| f(grid.center(i))).collect(),
        }
    }

    pub(crate) fn from_vec_unchecked(values: Vec<f64>) -> Self {
        Field { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn scaled(&self, lambda: f64) -> Field {
        Field {
            values: self.values.iter().map(|v| lambda * v).collect(),
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field {
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Field {
        Field {
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Measure-weighted integral `sum h^n f_i`.
    pub fn integral(&self, grid: &Grid) -> f64 {
        grid.cell_volume() * self.values.iter().sum::<f64>()
    }

    /// Measure-weighted inner product.
    pub fn dot(&self, other: &Field, grid: &Grid) -> f64 {
        grid.cell_volume() * self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum::<f64>()
    }
}

/// Minimum distance between cell centers of `x` and `y`.
pub fn region_distance(x: &Region, y: &Region, grid: &Grid) -> Result<f64> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::EmptyRegion);
    }
    if x.cells.iter().any(|&i| y.contains(i)) {
        return Ok(0.0);
    }
    let (rx, ry) = (x.rim(grid), y.rim(grid));
    if grid.dim() == 1 && grid.axis(0).boundary != Boundary::Periodic {
        // Centers are sorted with the index; a merge finds the closest pair.
        let (mut a, mut b) = (0, 0);
        let mut best = f64::INFINITY;
        while a < rx.len() && b < ry.len() {
            best = best.min(grid.center_distance(rx[a], ry[b]));
            if rx[a] < ry[b] {
                a += 1;
            } else {
                b += 1;
            }
        }
        return Ok(best);
    }
    let mut best = f64::INFINITY;
    for &i in &rx {
        for &j in &ry {
            best = best.min(grid.center_distance(i, j));
        }
    }
    Ok(best)
}

/// Characteristic function of a region.
pub fn indicator(x: &Region, grid: &Grid) -> Field {
    let mut f = Field::zeros(grid);
    for &i in x.cells() {
        f.values[i] = 1.0;
    }
    f
}

/// Discrete `L^p` norm with cell-measure weights; `p = f64::INFINITY` gives
/// the maximum norm.
pub fn lp_norm(f: &Field, grid: &Grid, p: f64) -> Result<f64> {
    if p.is_nan() || p < 1.0 {
        return Err(Error::InvalidNorm(p));
    }
    if p.is_infinite() {
        return Ok(f.values.iter().fold(0.0, |m, v| m.max(v.abs())));
    }
    let vol = grid.cell_volume();
    // Scale by the max to keep large p from overflowing.
    let scale = f.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return Ok(0.0);
    }
    let sum: f64 = f.values.iter().map(|v| (v.abs() / scale).powf(p)).sum();
    Ok(scale * (vol * sum).powf(1.0 / p))
}

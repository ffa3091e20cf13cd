//! Sparse storage and a banded LU factorization for the implicit steps.
//!
//! The step matrices `I - dt L` are M-matrices with diagonal dominance along
//! rows, so LU without pivoting is stable and keeps the band.

use crate::error::{Error, Result};

/// Compressed sparse rows.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl SparseMatrix {
    /// Builds from `(row, col, value)` triplets, summing duplicates.
    pub fn from_triplets(n: usize, mut trip: Vec<(usize, usize, f64)>) -> Self {
        trip.sort_by_key(|a| (a.0, a.1));
        let mut row_ptr = vec![0; n + 1];
        let mut cols = Vec::with_capacity(trip.len());
        let mut vals: Vec<f64> = Vec::with_capacity(trip.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in trip {
            if last == Some((r, c)) {
                *vals.last_mut().expect("duplicate follows an entry") += v;
                continue;
            }
            cols.push(c);
            vals.push(v);
            row_ptr[r + 1] += 1;
            last = Some((r, c));
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        SparseMatrix { n, row_ptr, cols, vals }
    }

    pub fn identity(n: usize) -> Self {
        SparseMatrix::from_triplets(n, (0..n).map(|i| (i, i, 1.0)).collect())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i).filter(|(c, _)| *c == j).map(|(_, v)| v).sum()
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n).map(|i| self.row_dot(i, x)).collect()
    }

    fn row_dot(&self, i: usize, x: &[f64]) -> f64 {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        self.cols[a..b]
            .iter()
            .zip(&self.vals[a..b])
            .map(|(&j, &v)| v * x[j])
            .sum()
    }

    /// `max_i |(A x - b)_i|` without allocating.
    pub fn residual_max(&self, x: &[f64], b: &[f64]) -> f64 {
        (0..self.n)
            .map(|i| (self.row_dot(i, x) - b[i]).abs())
            .fold(0.0, f64::max)
    }

    pub fn transpose(&self) -> Self {
        SparseMatrix::from_triplets(self.n, self.triplets().map(|(i, j, v)| (j, i, v)).collect())
    }

    /// `alpha * self + beta * other`.
    pub fn axpby(&self, alpha: f64, other: &SparseMatrix, beta: f64) -> Self {
        let trip = self
            .triplets()
            .map(|(i, j, v)| (i, j, alpha * v))
            .chain(other.triplets().map(|(i, j, v)| (i, j, beta * v)))
            .collect();
        SparseMatrix::from_triplets(self.n, trip)
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.row(i).map(|(_, v)| v).sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.n];
        for (_, j, v) in self.triplets() {
            s[j] += v;
        }
        s
    }

    /// Lower and upper bandwidth.
    pub fn bandwidth(&self) -> (usize, usize) {
        self.triplets().fold((0, 0), |(kl, ku), (i, j, _)| {
            if i > j {
                (kl.max(i - j), ku)
            } else {
                (kl, ku.max(j - i))
            }
        })
    }
}

/// LU factors of a banded matrix, no pivoting.
#[derive(Debug, Clone)]
pub struct BandedLu {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<f64>,
    inv_diag: Vec<f64>,
}

impl BandedLu {
    pub fn factor(m: &SparseMatrix) -> Result<Self> {
        let n = m.n();
        let (kl, ku) = m.bandwidth();
        let width = kl + ku + 1;
        let mut data = vec![0.0; n * width];
        for (i, j, v) in m.triplets() {
            data[i * width + j + kl - i] += v;
        }
        let at = |i: usize, j: usize| i * width + j + kl - i;
        for k in 0..n {
            let pivot = data[at(k, k)];
            if pivot.abs() < 1e-300 || !pivot.is_finite() {
                return Err(Error::LinearSolve {
                    reason: format!("zero pivot at row {k}"),
                    residual: f64::NAN,
                });
            }
            let last_row = (k + kl).min(n - 1);
            let last_col = (k + ku).min(n - 1);
            for i in k + 1..=last_row {
                let l = data[at(i, k)] / pivot;
                data[at(i, k)] = l;
                if l == 0.0 {
                    continue;
                }
                for j in k + 1..=last_col {
                    data[at(i, j)] -= l * data[at(k, j)];
                }
            }
        }
        let inv_diag = (0..n).map(|k| 1.0 / data[at(k, k)]).collect();
        Ok(BandedLu {
            n,
            kl,
            ku,
            width,
            data,
            inv_diag,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Solves in place.
    pub fn solve_in_place(&self, x: &mut [f64]) {
        let (n, kl, ku, w) = (self.n, self.kl, self.ku, self.width);
        if kl == 1 && ku == 1 {
            return self.solve_tridiagonal(x);
        }
        for i in 0..n {
            // Row i stores column j at offset j + kl - i.
            let start = i.saturating_sub(kl);
            let row = &self.data[i * w + start + kl - i..i * w + kl];
            let s: f64 = row.iter().zip(&x[start..i]).map(|(l, v)| l * v).sum();
            x[i] -= s;
        }
        for i in (0..n).rev() {
            let end = (i + ku).min(n - 1);
            let row = &self.data[i * w + kl..i * w + kl + (end - i) + 1];
            let s: f64 = row[1..].iter().zip(&x[i + 1..=end]).map(|(u, v)| u * v).sum();
            x[i] = (x[i] - s) * self.inv_diag[i];
        }
    }

    fn solve_tridiagonal(&self, x: &mut [f64]) {
        let rows = self.data.chunks_exact(3);
        let mut prev = 0.0;
        for (xi, row) in x.iter_mut().zip(rows.clone()) {
            *xi -= row[0] * prev;
            prev = *xi;
        }
        let mut next = 0.0;
        for ((xi, row), inv) in x.iter_mut().zip(rows).zip(&self.inv_diag).rev() {
            *xi = (*xi - row[2] * next) * inv;
            next = *xi;
        }
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let mut x = rhs.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

/// Factors `m`, solves, and checks the residual against `tol` relative to the
/// right-hand side.
pub fn solve_checked(m: &SparseMatrix, rhs: &[f64], tol: f64) -> Result<Vec<f64>> {
    let lu = BandedLu::factor(m)?;
    let x = lu.solve(rhs);
    let r = m.mul_vec(&x);
    let residual = r.iter().zip(rhs).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let scale = rhs.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(1e-300);
    if !(residual <= tol * scale) {
        return Err(Error::LinearSolve {
            reason: "residual above tolerance".into(),
            residual,
        });
    }
    Ok(x)
}

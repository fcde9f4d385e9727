//! Compressed sparse row matrices and a banded direct solver.
//!
//! The solver permutes the matrix with reverse Cuthill-McKee, copies it into
//! dense band storage, and factors without pivoting: Cholesky for symmetric
//! positive definite operators, plain LU for the nonsymmetric Newton
//! Jacobians that share the mass-matrix pattern.

use std::collections::VecDeque;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Row offsets and sorted, unique column indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsrPattern {
    n_rows: usize,
    n_cols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
}

impl CsrPattern {
    /// Builds a pattern from per-row column lists. Columns are sorted and
    /// deduplicated.
    pub fn from_rows(n_cols: usize, rows: Vec<Vec<usize>>) -> Result<Self> {
        let mut row_offsets = Vec::with_capacity(rows.len() + 1);
        let mut col_indices = Vec::new();
        row_offsets.push(0);
        for mut cols in rows {
            cols.sort_unstable();
            cols.dedup();
            if let Some(&c) = cols.last() {
                if c >= n_cols {
                    return Err(Error::InvalidArgument(format!(
                        "column {c} out of range for {n_cols} columns"
                    )));
                }
            }
            col_indices.extend(cols);
            row_offsets.push(col_indices.len());
        }
        Ok(CsrPattern {
            n_rows: row_offsets.len() - 1,
            n_cols,
            row_offsets,
            col_indices,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.col_indices.len()
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    pub fn row(&self, i: usize) -> &[usize] {
        &self.col_indices[self.row_offsets[i]..self.row_offsets[i + 1]]
    }

    /// Position of entry `(i, j)` in the value array.
    pub fn position(&self, i: usize, j: usize) -> Option<usize> {
        let start = self.row_offsets[i];
        self.row(i).binary_search(&j).ok().map(|k| start + k)
    }
}

/// CSR matrix whose pattern may be shared between many matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    pattern: Arc<CsrPattern>,
    values: Vec<f64>,
}

impl SparseMatrix {
    pub fn zeros(pattern: Arc<CsrPattern>) -> Self {
        let values = vec![0.0; pattern.nnz()];
        SparseMatrix { pattern, values }
    }

    pub fn from_parts(pattern: Arc<CsrPattern>, values: Vec<f64>) -> Result<Self> {
        if values.len() != pattern.nnz() {
            return Err(Error::Dimension {
                expected: pattern.nnz(),
                found: values.len(),
            });
        }
        Ok(SparseMatrix { pattern, values })
    }

    pub fn pattern(&self) -> &Arc<CsrPattern> {
        &self.pattern
    }

    pub fn n_rows(&self) -> usize {
        self.pattern.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.pattern.n_cols
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.pattern.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.pattern.col_indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Entry `(i, j)`, zero outside the pattern.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.pattern.position(i, j).map_or(0.0, |p| self.values[p])
    }

    /// `y = A x`
    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n_cols());
        debug_assert_eq!(y.len(), self.n_rows());
        let offsets = &self.pattern.row_offsets;
        let cols = &self.pattern.col_indices;
        for (i, yi) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for p in offsets[i]..offsets[i + 1] {
                acc += self.values[p] * x[cols[p]];
            }
            *yi = acc;
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n_rows()];
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn row_sums(&self) -> Vec<f64> {
        let offsets = &self.pattern.row_offsets;
        (0..self.n_rows())
            .map(|i| self.values[offsets[i]..offsets[i + 1]].iter().sum())
            .collect()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n_rows().min(self.n_cols()))
            .map(|i| self.get(i, i))
            .collect()
    }

    pub fn total_sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest `|A_ij - A_ji|` over the pattern.
    pub fn asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.n_rows() {
            for (k, &j) in self.pattern.row(i).iter().enumerate() {
                let v = self.values[self.pattern.row_offsets[i] + k];
                worst = worst.max((v - self.get(j, i)).abs());
            }
        }
        worst
    }

    /// Dense row-major copy; for tests and small diagnostics.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut dense = vec![vec![0.0; self.n_cols()]; self.n_rows()];
        for (i, row) in dense.iter_mut().enumerate() {
            for p in self.pattern.row_offsets[i]..self.pattern.row_offsets[i + 1] {
                row[self.pattern.col_indices[p]] = self.values[p];
            }
        }
        dense
    }

    pub fn scale(&mut self, factor: f64) {
        self.values.iter_mut().for_each(|v| *v *= factor);
    }
}

/// Reverse Cuthill-McKee permutation of a square pattern.
#[derive(Debug, Clone)]
pub struct BandOrdering {
    /// `new -> old`
    perm: Vec<usize>,
    /// `old -> new`
    inverse: Vec<usize>,
    half_bandwidth: usize,
}

impl BandOrdering {
    pub fn reverse_cuthill_mckee(pattern: &CsrPattern) -> Self {
        let n = pattern.n_rows();
        let degree: Vec<usize> = (0..n).map(|i| pattern.row(i).len()).collect();
        let mut visited = vec![false; n];
        let mut order = Vec::with_capacity(n);

        let bfs_levels = |start: usize| -> (usize, usize) {
            // returns (farthest node with least degree, eccentricity)
            let mut dist = vec![usize::MAX; n];
            let mut queue = VecDeque::from([start]);
            dist[start] = 0;
            let mut last = start;
            while let Some(v) = queue.pop_front() {
                if dist[v] > dist[last] || (dist[v] == dist[last] && degree[v] < degree[last]) {
                    last = v;
                }
                for &w in pattern.row(v) {
                    if dist[w] == usize::MAX {
                        dist[w] = dist[v] + 1;
                        queue.push_back(w);
                    }
                }
            }
            (last, dist[last])
        };

        for seed in 0..n {
            if visited[seed] {
                continue;
            }
            // Pseudo-peripheral start node for this component.
            let (mut start, mut ecc) = (seed, bfs_levels(seed).1);
            for _ in 0..8 {
                let far = bfs_levels(start).0;
                let far_ecc = bfs_levels(far).1;
                if far_ecc <= ecc {
                    break;
                }
                start = far;
                ecc = far_ecc;
            }
            let component_start = order.len();
            visited[start] = true;
            order.push(start);
            let mut head = component_start;
            while head < order.len() {
                let v = order[head];
                head += 1;
                let mut next: Vec<usize> = pattern
                    .row(v)
                    .iter()
                    .copied()
                    .filter(|&w| !visited[w])
                    .collect();
                next.sort_by_key(|&w| (degree[w], w));
                for w in next {
                    visited[w] = true;
                    order.push(w);
                }
            }
        }
        order.reverse();
        Self::from_permutation(pattern, order)
    }

    pub fn identity(pattern: &CsrPattern) -> Self {
        Self::from_permutation(pattern, (0..pattern.n_rows()).collect())
    }

    fn from_permutation(pattern: &CsrPattern, perm: Vec<usize>) -> Self {
        let mut inverse = vec![0; perm.len()];
        for (new, &old) in perm.iter().enumerate() {
            inverse[old] = new;
        }
        let mut half_bandwidth = 0;
        for i in 0..pattern.n_rows() {
            for &j in pattern.row(i) {
                half_bandwidth = half_bandwidth.max(inverse[i].abs_diff(inverse[j]));
            }
        }
        BandOrdering {
            perm,
            inverse,
            half_bandwidth,
        }
    }

    pub fn half_bandwidth(&self) -> usize {
        self.half_bandwidth
    }

    pub fn len(&self) -> usize {
        self.perm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perm.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum FactorKind {
    Cholesky,
    Lu,
}

/// Band storage plus its factorization, reusable across refactorizations
/// with the same ordering.
#[derive(Debug, Clone)]
pub struct BandSolver {
    ordering: Arc<BandOrdering>,
    kind: FactorKind,
    width: usize,
    data: Vec<f64>,
    scratch: Vec<f64>,
}

impl BandSolver {
    /// Workspace for symmetric positive definite matrices (lower band only).
    pub fn cholesky(ordering: Arc<BandOrdering>) -> Self {
        let n = ordering.len();
        let width = ordering.half_bandwidth + 1;
        BandSolver {
            kind: FactorKind::Cholesky,
            width,
            data: vec![0.0; n * width],
            scratch: vec![0.0; n],
            ordering,
        }
    }

    /// Workspace for general matrices with a symmetric pattern.
    pub fn lu(ordering: Arc<BandOrdering>) -> Self {
        let n = ordering.len();
        let width = 2 * ordering.half_bandwidth + 1;
        BandSolver {
            kind: FactorKind::Lu,
            width,
            data: vec![0.0; n * width],
            scratch: vec![0.0; n],
            ordering,
        }
    }

    /// Loads `A + diag(shift)` into band storage and factors it.
    pub fn factor(&mut self, a: &SparseMatrix, diag_shift: Option<&[f64]>) -> Result<()> {
        let n = self.ordering.len();
        if a.n_rows() != n || a.n_cols() != n {
            return Err(Error::Dimension {
                expected: n,
                found: a.n_rows(),
            });
        }
        let b = self.ordering.half_bandwidth;
        self.data.iter_mut().for_each(|v| *v = 0.0);
        let offsets = a.row_offsets();
        let cols = a.col_indices();
        let vals = a.values();
        for i_old in 0..n {
            let i = self.ordering.inverse[i_old];
            for p in offsets[i_old]..offsets[i_old + 1] {
                let j = self.ordering.inverse[cols[p]];
                match self.kind {
                    FactorKind::Cholesky if j <= i => {
                        self.data[i * self.width + (j + b - i)] += vals[p];
                    }
                    FactorKind::Cholesky => {}
                    FactorKind::Lu => self.data[i * self.width + (j + b - i)] += vals[p],
                }
            }
            if let Some(shift) = diag_shift {
                self.data[i * self.width + b] += shift[i_old];
            }
        }
        match self.kind {
            FactorKind::Cholesky => self.factor_cholesky(),
            FactorKind::Lu => self.factor_lu(),
        }
    }

    fn factor_cholesky(&mut self) -> Result<()> {
        let n = self.ordering.len();
        let b = self.ordering.half_bandwidth;
        let w = self.width;
        let data = &mut self.data;
        // Row i holds L(i, k) at offset k + b - i.
        for j in 0..n {
            let len = j.min(b);
            let (head, tail) = data.split_at_mut((j + 1) * w);
            let row_j = &mut head[j * w..];
            let s = row_j[b] - dot(&row_j[b - len..b], &row_j[b - len..b]);
            if !(s > 0.0) || !s.is_finite() {
                return Err(Error::SingularOperator {
                    row: self.ordering.perm[j],
                    pivot: s,
                });
            }
            let d = s.sqrt();
            row_j[b] = d;
            let row_j = &*row_j;
            for i in j + 1..(j + b + 1).min(n) {
                let row_i = &mut tail[(i - j - 1) * w..(i - j) * w];
                // Shared columns k in max(i - b, j - len)..j.
                let m = (b + j - i).min(len);
                let off_i = b + j - i;
                let v = row_i[off_i] - dot(&row_i[off_i - m..off_i], &row_j[b - m..b]);
                row_i[off_i] = v / d;
            }
        }
        Ok(())
    }

    fn factor_lu(&mut self) -> Result<()> {
        let n = self.ordering.len();
        let b = self.ordering.half_bandwidth;
        let w = self.width;
        let data = &mut self.data;
        // Row i holds A(i, j) at offset j + b - i.
        for k in 0..n {
            let (head, tail) = data.split_at_mut((k + 1) * w);
            let row_k = &head[k * w..];
            let pivot = row_k[b];
            if pivot == 0.0 || !pivot.is_finite() {
                return Err(Error::SingularOperator {
                    row: self.ordering.perm[k],
                    pivot,
                });
            }
            let end = (k + b + 1).min(n);
            let upper = &row_k[b + 1..b + end - k];
            for i in k + 1..end {
                let row_i = &mut tail[(i - k - 1) * w..(i - k) * w];
                let off = b + k - i;
                let l = row_i[off] / pivot;
                row_i[off] = l;
                if l != 0.0 {
                    for (x, u) in row_i[off + 1..off + 1 + upper.len()].iter_mut().zip(upper) {
                        *x -= l * u;
                    }
                }
            }
        }
        Ok(())
    }

    /// Solves `A x = rhs` in place using the last factorization.
    pub fn solve_in_place(&mut self, rhs: &mut [f64]) {
        let n = self.ordering.len();
        let b = self.ordering.half_bandwidth;
        let w = self.width;
        let x = &mut self.scratch;
        for (new, &old) in self.ordering.perm.iter().enumerate() {
            x[new] = rhs[old];
        }
        let data = &self.data;
        match self.kind {
            FactorKind::Cholesky => {
                for i in 0..n {
                    let row = &data[i * w..(i + 1) * w];
                    let len = i.min(b);
                    x[i] = (x[i] - dot(&row[b - len..b], &x[i - len..i])) / row[b];
                }
                for i in (0..n).rev() {
                    let row = &data[i * w..(i + 1) * w];
                    let len = i.min(b);
                    x[i] /= row[b];
                    let xi = x[i];
                    for (xk, l) in x[i - len..i].iter_mut().zip(&row[b - len..b]) {
                        *xk -= l * xi;
                    }
                }
            }
            FactorKind::Lu => {
                for i in 0..n {
                    let row = &data[i * w..(i + 1) * w];
                    let len = i.min(b);
                    x[i] -= dot(&row[b - len..b], &x[i - len..i]);
                }
                for i in (0..n).rev() {
                    let row = &data[i * w..(i + 1) * w];
                    let len = (n - 1 - i).min(b);
                    x[i] = (x[i] - dot(&row[b + 1..b + 1 + len], &x[i + 1..i + 1 + len])) / row[b];
                }
            }
        }
        for (new, &old) in self.ordering.perm.iter().enumerate() {
            rhs[old] = x[new];
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

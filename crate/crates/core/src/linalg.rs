//! Compressed sparse row matrices and the spectral-radius routine used by the
//! reservoirs.

use nalgebra::{DMatrix, Schur};
use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major sparse matrix. Column indices inside a row are strictly increasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsrMatrix {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        CsrMatrix {
            rows,
            cols,
            indptr: vec![0; rows + 1],
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Builds a matrix from `(row, col, value)` entries. Duplicate positions are summed
    /// and explicit zeros are dropped.
    pub fn from_triplets(rows: usize, cols: usize, mut entries: Vec<(usize, usize, f64)>) -> Self {
        entries.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut indptr = vec![0; rows + 1];
        let mut indices = Vec::with_capacity(entries.len());
        let mut values: Vec<f64> = Vec::with_capacity(entries.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in entries {
            assert!(r < rows && c < cols, "entry ({r}, {c}) outside {rows}x{cols}");
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
                continue;
            }
            indptr[r + 1] += 1;
            indices.push(c);
            values.push(v);
            last = Some((r, c));
        }
        for r in 0..rows {
            indptr[r + 1] += indptr[r];
        }
        let m = CsrMatrix {
            rows,
            cols,
            indptr,
            indices,
            values,
        };
        m.pruned()
    }

    fn pruned(self) -> Self {
        if self.values.iter().all(|&v| v != 0.0) {
            return self;
        }
        let entries = self.triplets().filter(|e| e.2 != 0.0).collect();
        CsrMatrix::from_triplets(self.rows, self.cols, entries)
    }

    /// Random matrix with exactly `round(density * rows * cols)` nonzeros at uniformly
    /// chosen positions, values uniform in `[-scale, scale]`.
    pub fn random<R: Rng + ?Sized>(
        rows: usize,
        cols: usize,
        density: f64,
        scale: f64,
        rng: &mut R,
    ) -> Self {
        let total = rows * cols;
        let count = ((density.clamp(0.0, 1.0) * total as f64).round() as usize).min(total);
        let mut picked = index::sample(rng, total, count).into_vec();
        picked.sort_unstable();
        let entries = picked
            .into_iter()
            .map(|flat| {
                let mut v = rng.gen_range(-1.0..=1.0) * scale;
                while v == 0.0 {
                    v = rng.gen_range(-1.0..=1.0) * scale;
                }
                (flat / cols, flat % cols, v)
            })
            .collect();
        CsrMatrix::from_triplets(rows, cols, entries)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let row = &self.indices[self.indptr[r]..self.indptr[r + 1]];
        match row.binary_search(&c) {
            Ok(k) => self.values[self.indptr[r] + k],
            Err(_) => 0.0,
        }
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.rows).flat_map(move |r| {
            (self.indptr[r]..self.indptr[r + 1]).map(move |k| (r, self.indices[k], self.values[k]))
        })
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let mut m = self.clone();
        m.values.iter_mut().for_each(|v| *v *= factor);
        m.pruned()
    }

    /// `out += self * x`.
    pub fn mul_acc(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for (r, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in self.indptr[r]..self.indptr[r + 1] {
                acc += self.values[k] * x[self.indices[k]];
            }
            *o += acc;
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.rows, self.cols);
        for (r, c, v) in self.triplets() {
            d[(r, c)] = v;
        }
        d
    }

    pub fn from_dense(d: &DMatrix<f64>) -> Self {
        let mut entries = Vec::new();
        for r in 0..d.nrows() {
            for c in 0..d.ncols() {
                if d[(r, c)] != 0.0 {
                    entries.push((r, c, d[(r, c)]));
                }
            }
        }
        CsrMatrix::from_triplets(d.nrows(), d.ncols(), entries)
    }

    /// True when the directed graph `row -> col` of the nonzeros has no cycle
    /// (self-loops count as cycles). Requires a square matrix.
    pub fn is_acyclic(&self) -> bool {
        assert_eq!(self.rows, self.cols, "acyclicity needs a square matrix");
        // Kahn's algorithm on edges c -> r (source unit feeds target unit).
        let n = self.rows;
        let mut indegree = vec![0usize; n];
        let mut out_edges: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (r, c, _) in self.triplets() {
            indegree[r] += 1;
            out_edges[c].push(r);
        }
        let mut queue: Vec<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
        let mut seen = 0;
        while let Some(i) = queue.pop() {
            seen += 1;
            for &j in &out_edges[i] {
                indegree[j] -= 1;
                if indegree[j] == 0 {
                    queue.push(j);
                }
            }
        }
        seen == n
    }

    fn frobenius(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Largest eigenvalue magnitude of a square matrix.
///
/// Matrices whose nonzero graph is acyclic are nilpotent and return exactly 0.
/// Otherwise the eigenvalues come from a real Schur decomposition of the dense matrix.
pub fn spectral_radius(m: &CsrMatrix) -> Result<f64> {
    if m.rows() != m.cols() {
        return Err(Error::DimensionMismatch {
            matrix: "W (square)",
            expected: m.rows(),
            actual: m.cols(),
        });
    }
    if m.nnz() == 0 || m.is_acyclic() {
        return Ok(0.0);
    }
    let schur = Schur::try_new(m.to_dense(), 1e-14, 100_000).ok_or(Error::EigenFailure)?;
    let radius = schur
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0_f64, f64::max);
    Ok(radius)
}

/// Rescales `m` so that its spectral radius equals `target`.
pub fn scale_to_spectral_radius(m: &CsrMatrix, target: f64) -> Result<CsrMatrix> {
    if !(target > 0.0 && target.is_finite()) {
        return Err(Error::param("spectral_radius", format!("must be positive, got {target}")));
    }
    let rho = spectral_radius(m)?;
    if rho <= 1e-12 * m.frobenius().max(1.0) {
        return Err(Error::ZeroSpectralRadius { target });
    }
    Ok(m.scaled(target / rho))
}

use std::collections::BTreeMap;

use super::{Scalar, SymmetricBandMatrix};
use crate::{Error, Result};

/// Single-writer assembly buffer for a Hermitian sparse matrix. Entries go
/// into the upper half (`row <= col`); duplicates are summed on finalize.
#[derive(Debug, Clone)]
pub struct SparseBuilder<T: Scalar> {
    dimension: usize,
    triplets: Vec<(usize, usize, T)>,
}

impl<T: Scalar> SparseBuilder<T> {
    pub fn new(dimension: usize) -> Self {
        Self { dimension, triplets: Vec::new() }
    }

    /// Adds `value` to `A[row][col]`; lower-half input is mirrored upward.
    pub fn add(&mut self, row: usize, col: usize, value: T) {
        assert!(row < self.dimension && col < self.dimension, "entry ({row},{col}) out of bounds");
        if row <= col {
            self.triplets.push((row, col, value));
        } else {
            self.triplets.push((col, row, value.conjugate()));
        }
    }

    pub fn finalize(mut self) -> Result<SparseSymmetricMatrix<T>> {
        if self.dimension == 0 {
            return Err(Error::Precondition("sparse matrix needs a positive dimension".into()));
        }
        self.triplets.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut merged: Vec<(usize, usize, T)> = Vec::with_capacity(self.triplets.len());
        for (r, c, v) in self.triplets {
            match merged.last_mut() {
                Some(last) if last.0 == r && last.1 == c => last.2 += v,
                _ => merged.push((r, c, v)),
            }
        }
        for &(r, c, v) in &merged {
            if !v.is_finite() {
                return Err(Error::Precondition(format!("non-finite entry at ({r},{c})")));
            }
            if r == c && v.imaginary() != 0.0 {
                return Err(Error::Precondition(format!("diagonal entry {r} is not real")));
            }
        }
        Ok(SparseSymmetricMatrix::from_upper(self.dimension, merged))
    }
}

/// Finalized Hermitian sparse matrix. The upper-half triplets are the
/// canonical content; a full CSR copy backs the matrix-vector product.
#[derive(Debug, Clone)]
pub struct SparseSymmetricMatrix<T: Scalar> {
    dimension: usize,
    upper: Vec<(usize, usize, T)>,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<T>,
    diagonal: Vec<f64>,
}

impl<T: Scalar> SparseSymmetricMatrix<T> {
    fn from_upper(dimension: usize, upper: Vec<(usize, usize, T)>) -> Self {
        let mut rows: Vec<Vec<(usize, T)>> = vec![Vec::new(); dimension];
        let mut diagonal = vec![0.0; dimension];
        for &(r, c, v) in &upper {
            rows[r].push((c, v));
            if r != c {
                rows[c].push((r, v.conjugate()));
            } else {
                diagonal[r] = v.real();
            }
        }
        let mut row_ptr = Vec::with_capacity(dimension + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for mut row in rows {
            row.sort_by_key(|e| e.0);
            for (c, v) in row {
                col_idx.push(c);
                values.push(v);
            }
            row_ptr.push(col_idx.len());
        }
        Self { dimension, upper, row_ptr, col_idx, values, diagonal }
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    /// Stored upper-half entries, sorted by (row, col), no duplicates.
    pub fn triplets(&self) -> &[(usize, usize, T)] {
        &self.upper
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.diagonal
    }

    pub fn matvec(&self, x: &[T], y: &mut [T]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let mut acc = T::zero();
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.values[p] * x[self.col_idx[p]];
            }
            *yi = acc;
        }
    }

    /// Entry `A[row][col]` (zero if not stored).
    pub fn get(&self, row: usize, col: usize) -> T {
        let range = self.row_ptr[row]..self.row_ptr[row + 1];
        match self.col_idx[range.clone()].binary_search(&col) {
            Ok(p) => self.values[range.start + p],
            Err(_) => T::zero(),
        }
    }

    /// Gershgorin enclosure `(lower, upper)` of the spectrum.
    pub fn gershgorin(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..self.dimension {
            let mut radius = 0.0;
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                if self.col_idx[p] != i {
                    radius += self.values[p].modulus();
                }
            }
            lo = lo.min(self.diagonal[i] - radius);
            hi = hi.max(self.diagonal[i] + radius);
        }
        (lo, hi)
    }

    pub fn bandwidth(&self) -> usize {
        self.upper.iter().map(|&(r, c, _)| c - r).max().unwrap_or(0)
    }

    /// Same matrix in band storage, for the dense reference solver.
    pub fn to_band(&self) -> SymmetricBandMatrix<T> {
        let mut m = SymmetricBandMatrix::zeros(self.dimension, self.bandwidth());
        for &(r, c, v) in &self.upper {
            m.set(r, c, v);
        }
        m
    }

    /// Symmetric permutation `P A Pᵀ` where new index `perm[i]` takes old index `i`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut b = SparseBuilder::new(self.dimension);
        for &(r, c, v) in &self.upper {
            b.add(perm[r], perm[c], v);
        }
        b.finalize().expect("permutation preserves validity")
    }

    /// Largest `|A_ij − conj(A_ji)|` over the full CSR copy; zero by construction.
    pub fn hermitian_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        let mut index: BTreeMap<(usize, usize), T> = BTreeMap::new();
        for i in 0..self.dimension {
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                index.insert((i, self.col_idx[p]), self.values[p]);
            }
        }
        for (&(i, j), &v) in &index {
            let w = index.get(&(j, i)).copied().unwrap_or_else(T::zero);
            worst = worst.max((v - w.conjugate()).modulus());
        }
        worst
    }

    pub fn max_abs_entry(&self) -> f64 {
        self.values.iter().map(|v| v.modulus()).fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::C64;

    #[test]
    fn duplicates_are_summed_and_lower_input_mirrored() {
        let mut b = SparseBuilder::<f64>::new(3);
        b.add(0, 1, 1.0);
        b.add(1, 0, 2.0);
        b.add(2, 2, 4.0);
        let m = b.finalize().unwrap();
        assert_eq!(m.triplets(), &[(0, 1, 3.0), (2, 2, 4.0)]);
        assert!(m.triplets().iter().all(|&(r, c, _)| r <= c));
        assert_eq!(m.get(1, 0), 3.0);
    }

    #[test]
    fn complex_lower_input_is_conjugated() {
        let mut b = SparseBuilder::<C64>::new(2);
        b.add(1, 0, C64::new(1.0, 2.0));
        let m = b.finalize().unwrap();
        assert_eq!(m.get(0, 1), C64::new(1.0, -2.0));
        assert_eq!(m.get(1, 0), C64::new(1.0, 2.0));
        assert_eq!(m.hermitian_defect(), 0.0);
    }

    #[test]
    fn complex_diagonal_is_rejected() {
        let mut b = SparseBuilder::<C64>::new(2);
        b.add(1, 1, C64::new(1.0, 2.0));
        assert!(b.finalize().is_err());
    }

    #[test]
    fn band_conversion_round_trips() {
        let mut b = SparseBuilder::<f64>::new(4);
        b.add(0, 0, 2.0);
        b.add(0, 2, -1.0);
        b.add(3, 3, 1.0);
        let m = b.finalize().unwrap();
        let band = m.to_band();
        assert_eq!(band.bandwidth(), 2);
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(band.get(i, j), m.get(i, j));
            }
        }
    }
}

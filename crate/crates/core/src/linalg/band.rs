use nalgebra::DMatrix;

use super::{dot, norm, residual_norms, EigenSolveReport, Lcg, Scalar};
use crate::{Error, Result};

/// Hermitian band matrix storing the diagonal and the `bandwidth` lower
/// diagonals: `bands[d * dimension + i] = A[i + d][i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricBandMatrix<T: Scalar> {
    dimension: usize,
    bandwidth: usize,
    bands: Vec<T>,
}

impl<T: Scalar> SymmetricBandMatrix<T> {
    pub fn zeros(dimension: usize, bandwidth: usize) -> Self {
        assert!(dimension > 0, "band matrix needs a positive dimension");
        let bandwidth = bandwidth.min(dimension - 1);
        Self { dimension, bandwidth, bands: vec![T::zero(); (bandwidth + 1) * dimension] }
    }

    /// Real symmetric tridiagonal matrix from its diagonal and sub-diagonal.
    pub fn tridiagonal(diagonal: &[f64], off: &[f64]) -> Self {
        let n = diagonal.len();
        assert_eq!(off.len() + 1, n.max(1));
        let mut m = Self::zeros(n, 1);
        for i in 0..n {
            m.bands[i] = T::from_real(diagonal[i]);
        }
        if n > 1 {
            for i in 0..n - 1 {
                m.bands[n + i] = T::from_real(off[i]);
            }
        }
        m
    }

    pub fn from_diagonal(diagonal: &[f64]) -> Self {
        let mut m = Self::zeros(diagonal.len(), 0);
        for (b, &d) in m.bands.iter_mut().zip(diagonal) {
            *b = T::from_real(d);
        }
        m
    }

    pub fn identity(dimension: usize) -> Self {
        Self::from_diagonal(&vec![1.0; dimension])
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    pub fn bands(&self) -> &[T] {
        &self.bands
    }

    /// Sets `A[row][col]` (and implicitly its mirror). Diagonal entries must be real.
    pub fn set(&mut self, row: usize, col: usize, value: T) {
        let (i, j, v) = if row >= col { (row, col, value) } else { (col, row, value.conjugate()) };
        let d = i - j;
        assert!(d <= self.bandwidth, "entry ({row},{col}) outside the band");
        self.bands[d * self.dimension + j] = v;
    }

    pub fn get(&self, row: usize, col: usize) -> T {
        let (i, j, conj) = if row >= col { (row, col, false) } else { (col, row, true) };
        let d = i - j;
        if d > self.bandwidth {
            return T::zero();
        }
        let v = self.bands[d * self.dimension + j];
        if conj {
            v.conjugate()
        } else {
            v
        }
    }

    #[inline]
    fn lower(&self, i: usize, j: usize) -> T {
        self.bands[(i - j) * self.dimension + j]
    }

    /// Checks that every stored entry is finite and the diagonal is real.
    pub fn validate(&self) -> Result<()> {
        if let Some(p) = self.bands.iter().position(|v| !v.is_finite()) {
            let (d, i) = (p / self.dimension, p % self.dimension);
            return Err(Error::Precondition(format!(
                "non-finite band entry at ({}, {})",
                i + d,
                i
            )));
        }
        for i in 0..self.dimension {
            let v = self.bands[i];
            if (v - T::from_real(v.real())).modulus() > 0.0 {
                return Err(Error::Precondition(format!("diagonal entry {i} is not real")));
            }
        }
        Ok(())
    }

    pub fn matvec(&self, x: &[T], y: &mut [T]) {
        let n = self.dimension;
        for i in 0..n {
            y[i] = self.bands[i] * x[i];
        }
        for d in 1..=self.bandwidth {
            let band = &self.bands[d * n..(d + 1) * n];
            for j in 0..n - d {
                let a = band[j];
                y[j + d] += a * x[j];
                y[j] += a.conjugate() * x[j + d];
            }
        }
    }

    /// Gershgorin enclosure `(lower, upper)` of the spectrum.
    pub fn gershgorin(&self) -> (f64, f64) {
        let n = self.dimension;
        let mut radius = vec![0.0; n];
        for d in 1..=self.bandwidth {
            for j in 0..n - d {
                let a = self.bands[d * n + j].modulus();
                radius[j] += a;
                radius[j + d] += a;
            }
        }
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            let c = self.bands[i].real();
            lo = lo.min(c - radius[i]);
            hi = hi.max(c + radius[i]);
        }
        (lo, hi)
    }

    /// Spectral norm estimate from the Gershgorin enclosure.
    pub fn norm_estimate(&self) -> f64 {
        let (lo, hi) = self.gershgorin();
        lo.abs().max(hi.abs())
    }

    /// Number of eigenvalues strictly below `sigma` (Sylvester inertia of an
    /// unpivoted band LDLᴴ factorization of `A − σI`).
    pub fn count_below(&self, sigma: f64) -> usize {
        let n = self.dimension;
        let b = self.bandwidth;
        let pivmin = f64::EPSILON * f64::EPSILON * self.norm_estimate().max(1.0);
        if b == 0 {
            return self.bands.iter().filter(|v| v.real() - sigma < 0.0).count();
        }
        if b == 1 {
            // Sturm sequence of a tridiagonal matrix.
            let mut count = 0;
            let mut q = self.bands[0].real() - sigma;
            if q.abs() < pivmin {
                q = -pivmin;
            }
            if q < 0.0 {
                count += 1;
            }
            for i in 1..n {
                let e2 = self.bands[n + i - 1].modulus_squared();
                q = self.bands[i].real() - sigma - e2 / q;
                if q.abs() < pivmin {
                    q = -pivmin;
                }
                if q < 0.0 {
                    count += 1;
                }
            }
            return count;
        }
        let (_, d) = self.ldl(sigma, pivmin);
        d.iter().filter(|&&v| v < 0.0).count()
    }

    /// Unpivoted band LDLᴴ of `A − σI`, row-oriented:
    /// `l[i*b + (i-k-1)] = L[i][k]` for `k` in `[i-b, i-1]`. Pivots smaller
    /// than `pivmin` in modulus are replaced by `−pivmin`.
    fn ldl(&self, sigma: f64, pivmin: f64) -> (Vec<T>, Vec<f64>) {
        let n = self.dimension;
        let b = self.bandwidth;
        let mut l = vec![T::zero(); n * b];
        let mut d = vec![0.0f64; n];
        let mut e = vec![T::zero(); b];
        for i in 0..n {
            let k0 = i.saturating_sub(b);
            for k in k0..i {
                let mut s = self.lower(i, k);
                let lk = &l[k * b..k * b + b];
                for m in k0..k {
                    s -= e[m - k0] * lk[k - m - 1].conjugate();
                }
                let lik = s / T::from_real(d[k]);
                l[i * b + (i - k - 1)] = lik;
                e[k - k0] = lik * T::from_real(d[k]);
            }
            let mut di = self.bands[i].real() - sigma;
            for k in k0..i {
                di -= (e[k - k0] * l[i * b + (i - k - 1)].conjugate()).real();
            }
            if di.abs() < pivmin {
                di = -pivmin;
            }
            d[i] = di;
        }
        (l, d)
    }

    pub fn to_dense(&self) -> DMatrix<T> {
        let n = self.dimension;
        DMatrix::from_fn(n, n, |i, j| self.get(i, j))
    }
}

/// Smallest `count` eigenvalues of a Hermitian band matrix by inertia
/// bisection, with eigenvectors from inverse iteration.
///
/// Residuals are always computed, so eigenvectors are formed internally even
/// when `want_vectors` is false.
pub fn dense_band_eigensolve<T: Scalar>(
    matrix: &SymmetricBandMatrix<T>,
    count: usize,
    want_vectors: bool,
) -> Result<EigenSolveReport<T>> {
    let n = matrix.dimension();
    if count > n {
        return Err(Error::Precondition(format!(
            "requested {count} eigenvalues of a {n}-dimensional matrix"
        )));
    }
    matrix.validate()?;
    if count == 0 {
        return Ok(EigenSolveReport::empty());
    }
    let values = bisect_smallest(matrix, count);
    let norm_a = matrix.norm_estimate().max(f64::MIN_POSITIVE);
    let (vectors, residuals, iterations) = inverse_iteration(matrix, &values, norm_a)?;
    Ok(EigenSolveReport {
        eigenvalues: values,
        eigenvectors: want_vectors.then_some(vectors),
        residual_norms: residuals,
        iterations,
        converged: true,
    })
}

fn bisect_smallest<T: Scalar>(matrix: &SymmetricBandMatrix<T>, count: usize) -> Vec<f64> {
    let n = matrix.dimension();
    let (glo, ghi) = matrix.gershgorin();
    let norm_a = glo.abs().max(ghi.abs()).max(f64::MIN_POSITIVE);
    let pad = 4.0 * f64::EPSILON * norm_a + 4.0 * f64::MIN_POSITIVE;
    let abstol = 2.0 * f64::EPSILON * norm_a;
    let mut out = vec![f64::NAN; count];
    // Work stack of (lo, hi, count_below_lo, count_below_hi).
    let mut stack = vec![(glo - pad, ghi + pad, 0usize, n)];
    while let Some((lo, hi, nlo, nhi)) = stack.pop() {
        if nlo >= count.min(nhi) {
            continue;
        }
        let mid = 0.5 * (lo + hi);
        let width = hi - lo;
        if width <= abstol.max(2.0 * f64::EPSILON * lo.abs().max(hi.abs())) || mid <= lo || mid >= hi {
            for idx in nlo..nhi.min(count) {
                out[idx] = mid;
            }
            continue;
        }
        let c = matrix.count_below(mid).clamp(nlo, nhi);
        // Push upper half first so lower eigenvalues resolve first.
        if c < nhi {
            stack.push((mid, hi, c, nhi));
        }
        if c > nlo {
            stack.push((lo, mid, nlo, c));
        }
    }
    out
}

/// Factorization `A − σI = L D Lᴴ` of a Hermitian band matrix that is
/// positive definite at the shift, used to apply `(A − σI)⁻¹`.
#[derive(Debug, Clone)]
pub struct BandLdl<T: Scalar> {
    n: usize,
    b: usize,
    l: Vec<T>,
    d: Vec<f64>,
}

impl<T: Scalar> BandLdl<T> {
    /// `None` when `A − σI` is not positive definite.
    pub fn positive_definite(matrix: &SymmetricBandMatrix<T>, sigma: f64) -> Option<Self> {
        let pivmin = f64::EPSILON * matrix.norm_estimate().max(1.0);
        let (l, d) = if matrix.bandwidth == 0 {
            (Vec::new(), matrix.bands.iter().map(|v| v.real() - sigma).collect())
        } else {
            matrix.ldl(sigma, pivmin)
        };
        if d.iter().any(|&v| !(v > pivmin)) {
            return None;
        }
        Some(Self { n: matrix.dimension, b: matrix.bandwidth, l, d })
    }

    pub fn solve(&self, x: &mut [T]) {
        let (n, b) = (self.n, self.b);
        for i in 0..n {
            let k0 = i.saturating_sub(b);
            let row = &self.l[i * b..i * b + b];
            let mut s = x[i];
            for k in k0..i {
                s -= row[i - k - 1] * x[k];
            }
            x[i] = s;
        }
        for (v, d) in x.iter_mut().zip(&self.d) {
            *v /= T::from_real(*d);
        }
        for i in (0..n).rev() {
            let xi = x[i];
            let k0 = i.saturating_sub(b);
            let row = &self.l[i * b..i * b + b];
            for k in k0..i {
                x[k] -= row[i - k - 1].conjugate() * xi;
            }
        }
    }
}

/// LU factorization with partial pivoting of a band matrix `A − σI`.
/// Row position `p` stores absolute columns `[p − b, p + 2b]`.
struct BandLu<T: Scalar> {
    n: usize,
    b: usize,
    w: usize,
    lu: Vec<T>,
    piv: Vec<usize>,
}

impl<T: Scalar> BandLu<T> {
    fn new(matrix: &SymmetricBandMatrix<T>, sigma: f64, tiny: f64) -> Self {
        let n = matrix.dimension();
        let b = matrix.bandwidth();
        let w = 3 * b + 1;
        let mut lu = vec![T::zero(); n * w];
        for i in 0..n {
            let lo = i.saturating_sub(b);
            let hi = (i + b).min(n - 1);
            for j in lo..=hi {
                let mut v = matrix.get(i, j);
                if i == j {
                    v -= T::from_real(sigma);
                }
                lu[i * w + (j + b - i)] = v;
            }
        }
        let mut piv = vec![0; n];
        for c in 0..n {
            let last = (c + b).min(n - 1);
            let mut best = c;
            let mut best_abs = lu[c * w + b].modulus();
            for r in c + 1..=last {
                let a = lu[r * w + (c + b - r)].modulus();
                if a > best_abs {
                    best_abs = a;
                    best = r;
                }
            }
            piv[c] = best;
            let right = (c + 2 * b).min(n - 1);
            if best != c {
                for j in c..=right {
                    let pc = c * w + (j + b - c);
                    let pr = best * w + (j + b - best);
                    // Columns beyond the pivot row's reach are zero there.
                    let vr = if j + b >= best && j <= best + 2 * b { lu[pr] } else { T::zero() };
                    let vc = lu[pc];
                    lu[pc] = vr;
                    if j + b >= best && j <= best + 2 * b {
                        lu[pr] = vc;
                    }
                }
            }
            let mut pivot = lu[c * w + b];
            if pivot.modulus() < tiny {
                pivot = T::from_real(tiny);
                lu[c * w + b] = pivot;
            }
            for r in c + 1..=last {
                let m = lu[r * w + (c + b - r)] / pivot;
                lu[r * w + (c + b - r)] = m;
                if m == T::zero() {
                    continue;
                }
                for j in c + 1..=right {
                    let u = lu[c * w + (j + b - c)];
                    lu[r * w + (j + b - r)] -= m * u;
                }
            }
        }
        Self { n, b, w, lu, piv }
    }

    fn solve(&self, x: &mut [T]) {
        let (n, b, w) = (self.n, self.b, self.w);
        for c in 0..n {
            let p = self.piv[c];
            if p != c {
                x.swap(c, p);
            }
            let xc = x[c];
            for r in c + 1..=(c + b).min(n - 1) {
                let m = self.lu[r * w + (c + b - r)];
                x[r] -= m * xc;
            }
        }
        for c in (0..n).rev() {
            let mut s = x[c];
            for j in c + 1..=(c + 2 * b).min(n - 1) {
                s -= self.lu[c * w + (j + b - c)] * x[j];
            }
            x[c] = s / self.lu[c * w + b];
        }
    }
}

fn inverse_iteration<T: Scalar>(
    matrix: &SymmetricBandMatrix<T>,
    values: &[f64],
    norm_a: f64,
) -> Result<(DMatrix<T>, Vec<f64>, usize)> {
    let n = matrix.dimension();
    let count = values.len();
    let complex = super::is_complex::<T>();
    let target = 1e-11 * norm_a;
    let cluster_gap = 1e-3 * norm_a;
    let tiny = f64::EPSILON * norm_a;
    let mut vectors = DMatrix::<T>::zeros(n, count);
    let mut residuals = vec![0.0; count];
    let mut av = vec![T::zero(); n];
    let mut total_iterations = 0;
    let mut cluster_start = 0;
    let mut rng = Lcg::new(0x5EED);
    for i in 0..count {
        if i > 0 && values[i] - values[i - 1] > cluster_gap {
            cluster_start = i;
        }
        // Separate coincident shifts inside a cluster so each factorization
        // is distinct; the perturbation stays far below the target residual.
        let offset = (i - cluster_start) as f64 * 10.0 * f64::EPSILON * norm_a;
        let lu = BandLu::new(matrix, values[i] + offset, tiny);
        let mut x: Vec<T> = (0..n).map(|_| rng.next_scalar::<T>(complex)).collect();
        let mut best = f64::INFINITY;
        let mut best_x = x.clone();
        let mut extra = 0;
        for _ in 0..8 {
            total_iterations += 1;
            let s = norm(&x);
            x.iter_mut().for_each(|v| *v /= T::from_real(s));
            lu.solve(&mut x);
            for _ in 0..2 {
                for j in cluster_start..i {
                    let q = vectors.column(j);
                    let c = dot(q.as_slice(), &x);
                    for (xv, qv) in x.iter_mut().zip(q.iter()) {
                        *xv -= *qv * c;
                    }
                }
            }
            let s = norm(&x);
            if !(s.is_finite() && s > 0.0) {
                break;
            }
            x.iter_mut().for_each(|v| *v /= T::from_real(s));
            matrix.matvec(&x, &mut av);
            let r = av
                .iter()
                .zip(&x)
                .map(|(a, v)| (*a - *v * T::from_real(values[i])).modulus_squared())
                .sum::<f64>()
                .sqrt();
            if r < best {
                best = r;
                best_x.copy_from_slice(&x);
            }
            if r <= target {
                extra += 1;
                if extra == 2 {
                    break;
                }
            }
        }
        if best > 10.0 * target {
            residuals[i] = best;
            return Err(Error::NoConvergence {
                what: format!("inverse iteration for eigenvalue {i}"),
                residuals: residuals[..=i].to_vec(),
            });
        }
        vectors.column_mut(i).copy_from_slice(&best_x);
    }
    let res = residual_norms(|x, y| matrix.matvec(x, y), values, &vectors);
    residuals.copy_from_slice(&res);
    Ok((vectors, residuals, total_iterations))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::C64;
    use proptest::prelude::*;

    fn harmonic(n: usize, half: f64) -> SymmetricBandMatrix<f64> {
        let dx = 2.0 * half / (n + 1) as f64;
        let diag: Vec<f64> = (0..n)
            .map(|i| {
                let t = -half + (i + 1) as f64 * dx;
                2.0 / (dx * dx) + t * t
            })
            .collect();
        SymmetricBandMatrix::tridiagonal(&diag, &vec![-1.0 / (dx * dx); n - 1])
    }

    #[test]
    fn identity_has_unit_eigenvalues_and_zero_residuals() {
        let m = SymmetricBandMatrix::<f64>::identity(5);
        let r = dense_band_eigensolve(&m, 3, true).unwrap();
        for (v, res) in r.eigenvalues.iter().zip(&r.residual_norms) {
            assert!((v - 1.0).abs() < 1e-14);
            assert!(*res < 1e-14);
        }
        let v = r.eigenvectors.unwrap();
        let g = v.adjoint() * &v;
        assert!((g - DMatrix::identity(3, 3)).amax() < 1e-12);
    }

    #[test]
    fn diagonal_matrix() {
        let m = SymmetricBandMatrix::<f64>::from_diagonal(&[5.0, 1.0, 3.0]);
        let r = dense_band_eigensolve(&m, 2, false).unwrap();
        assert!((r.eigenvalues[0] - 1.0).abs() < 1e-14);
        assert!((r.eigenvalues[1] - 3.0).abs() < 1e-14);
        assert!(r.eigenvectors.is_none());
    }

    #[test]
    fn count_larger_than_dimension_is_rejected() {
        let m = SymmetricBandMatrix::<f64>::identity(2);
        assert!(matches!(dense_band_eigensolve(&m, 3, false), Err(Error::Precondition(_))));
    }

    #[test]
    fn non_finite_entry_is_rejected() {
        let mut m = SymmetricBandMatrix::<f64>::identity(3);
        m.set(1, 1, f64::NAN);
        assert!(dense_band_eigensolve(&m, 1, false).is_err());
    }

    #[test]
    fn harmonic_oscillator_matrix_eigenvalues_match_second_order_error_model() {
        // The raw finite-difference levels differ from 2n+1 by the leading
        // O(Δ²) term −(Δ²/12)‖(t² − E)ψ‖², which is −(Δ²/16) for the ground state.
        let m = harmonic(4001, 12.0);
        let r = dense_band_eigensolve(&m, 10, true).unwrap();
        let dx = 24.0 / 4002.0;
        assert!((r.eigenvalues[0] - (1.0 - dx * dx / 16.0)).abs() < 1e-8);
        for (k, v) in r.eigenvalues.iter().enumerate() {
            let exact = 2.0 * k as f64 + 1.0;
            assert!((v - exact).abs() / exact < 5e-5, "level {k}: {v}");
        }
        let norm_a = m.norm_estimate();
        assert!(r.residual_norms.iter().all(|&x| x <= 1e-10 * norm_a));
    }

    #[test]
    fn pentadiagonal_matches_dense_reference() {
        let n = 40;
        let mut m = SymmetricBandMatrix::<f64>::zeros(n, 2);
        let mut g = Lcg::new(3);
        for i in 0..n {
            m.set(i, i, 4.0 + g.next_f64());
            if i >= 1 {
                m.set(i, i - 1, g.next_f64());
            }
            if i >= 2 {
                m.set(i, i - 2, g.next_f64());
            }
        }
        let (reference, _) = crate::linalg::dense_hermitian_eigen(m.to_dense());
        let r = dense_band_eigensolve(&m, 8, true).unwrap();
        for k in 0..8 {
            assert!((r.eigenvalues[k] - reference[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn complex_band_matches_dense_reference() {
        let n = 30;
        let mut m = SymmetricBandMatrix::<C64>::zeros(n, 3);
        let mut g = Lcg::new(11);
        for i in 0..n {
            m.set(i, i, C64::new(2.0 + g.next_f64(), 0.0));
            for d in 1..=3 {
                if i >= d {
                    m.set(i, i - d, C64::new(g.next_f64(), g.next_f64()));
                }
            }
        }
        let (reference, _) = crate::linalg::dense_hermitian_eigen(m.to_dense());
        let r = dense_band_eigensolve(&m, 6, true).unwrap();
        for k in 0..6 {
            assert!((r.eigenvalues[k] - reference[k]).abs() < 1e-12);
        }
        let v = r.eigenvectors.unwrap();
        assert!((v.adjoint() * &v - DMatrix::identity(6, 6)).camax() < 1e-10);
    }

    #[test]
    fn degenerate_cluster_gets_orthonormal_vectors() {
        let m = SymmetricBandMatrix::<f64>::from_diagonal(&[2.0, 1.0, 1.0, 1.0, 3.0]);
        let r = dense_band_eigensolve(&m, 4, true).unwrap();
        let v = r.eigenvectors.unwrap();
        assert!((v.transpose() * &v - DMatrix::identity(4, 4)).amax() < 1e-10);
        assert!((r.eigenvalues[3] - 2.0).abs() < 1e-14);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn inertia_count_agrees_with_dense_spectrum(seed in 0u64..1000, bw in 0usize..4, sigma in -2.0f64..2.0) {
            let n = 25;
            let mut m = SymmetricBandMatrix::<f64>::zeros(n, bw);
            let mut g = Lcg::new(seed);
            for i in 0..n {
                for d in 0..=bw.min(i) {
                    m.set(i, i - d, g.next_f64() * 2.0);
                }
            }
            let (reference, _) = crate::linalg::dense_hermitian_eigen(m.to_dense());
            let expected = reference.iter().filter(|&&v| v < sigma).count();
            let near = reference.iter().any(|&v| (v - sigma).abs() < 1e-9);
            prop_assume!(!near);
            prop_assert_eq!(m.count_below(sigma), expected);
        }

        #[test]
        fn eigenvalues_invariant_under_reversal(seed in 0u64..1000) {
            let n = 30;
            let mut m = SymmetricBandMatrix::<f64>::zeros(n, 2);
            let mut r = SymmetricBandMatrix::<f64>::zeros(n, 2);
            let mut g = Lcg::new(seed);
            for i in 0..n {
                for d in 0..=2.min(i) {
                    let v = g.next_f64();
                    m.set(i, i - d, v);
                    r.set(n - 1 - (i - d), n - 1 - i, v);
                }
            }
            let a = dense_band_eigensolve(&m, 5, false).unwrap();
            let b = dense_band_eigensolve(&r, 5, false).unwrap();
            for k in 0..5 {
                prop_assert!((a.eigenvalues[k] - b.eigenvalues[k]).abs() < 1e-10);
            }
        }
    }
}

//! Eigensolvers for Hermitian band and sparse matrices.
//!
//! Everything is generic over [`Scalar`], which covers `f64` and
//! `Complex<f64>`: the fiber problems are real, while the 2D magnetic
//! operator is complex Hermitian once the gauge phase is built in.

mod band;
mod lobpcg;
mod sparse;

pub use band::{dense_band_eigensolve, BandLdl, SymmetricBandMatrix};
pub use lobpcg::{sparse_eigensolve_smallest, Preconditioner, SparseSolveOptions};
pub use sparse::{SparseBuilder, SparseSymmetricMatrix};

use nalgebra::{ComplexField, DMatrix};
use serde::Serialize;

pub use nalgebra::Complex;
pub type C64 = Complex<f64>;

/// Field of matrix entries: real or complex double precision.
pub trait Scalar: ComplexField<RealField = f64> + Copy + Send + Sync + 'static {}
impl<T> Scalar for T where T: ComplexField<RealField = f64> + Copy + Send + Sync + 'static {}

#[derive(Debug, Clone, Serialize)]
pub struct EigenSolveReport<T: Scalar> {
    pub eigenvalues: Vec<f64>,
    #[serde(skip)]
    pub eigenvectors: Option<DMatrix<T>>,
    pub residual_norms: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl<T: Scalar> EigenSolveReport<T> {
    pub fn empty() -> Self {
        Self {
            eigenvalues: Vec::new(),
            eigenvectors: None,
            residual_norms: Vec::new(),
            iterations: 0,
            converged: true,
        }
    }
}

/// Conjugated inner product `Σ conj(a_i) b_i`.
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut acc = T::zero();
    for (x, y) in a.iter().zip(b) {
        acc += x.conjugate() * *y;
    }
    acc
}

pub fn norm<T: Scalar>(a: &[T]) -> f64 {
    a.iter().map(|x| x.modulus_squared()).sum::<f64>().sqrt()
}

/// Deterministic pseudo-random stream in [-0.5, 0.5) used to seed iterative
/// solvers so that runs reproduce bit for bit.
#[derive(Debug, Clone)]
pub struct Lcg(u64);

impl Lcg {
    pub fn new(seed: u64) -> Self {
        Self(seed ^ 0x9E37_79B9_7F4A_7C15)
    }

    pub fn next_f64(&mut self) -> f64 {
        self.0 = self
            .0
            .wrapping_mul(6_364_136_223_846_793_005)
            .wrapping_add(1_442_695_040_888_963_407);
        ((self.0 >> 11) as f64) / ((1u64 << 53) as f64) - 0.5
    }

    pub fn next_scalar<T: Scalar>(&mut self, complex: bool) -> T {
        let re = self.next_f64();
        if complex {
            let im = self.next_f64();
            T::from_real(re) + T::from_real(im) * imaginary_unit::<T>()
        } else {
            T::from_real(re)
        }
    }
}

/// `i` for complex scalars, zero for real ones.
pub fn imaginary_unit<T: Scalar>() -> T {
    // sqrt(-1) is NaN for reals; detect that case instead of branching on type.
    let i = T::from_real(-1.0).sqrt();
    if i.is_finite() {
        i - T::from_real(i.real())
    } else {
        T::zero()
    }
}

pub fn is_complex<T: Scalar>() -> bool {
    imaginary_unit::<T>() != T::zero()
}

/// Residual norms `‖A v_i − λ_i v_i‖₂` for the columns of `vectors`.
pub fn residual_norms<T: Scalar>(
    apply: impl Fn(&[T], &mut [T]),
    eigenvalues: &[f64],
    vectors: &DMatrix<T>,
) -> Vec<f64> {
    let n = vectors.nrows();
    let mut av = vec![T::zero(); n];
    eigenvalues
        .iter()
        .enumerate()
        .map(|(j, &lam)| {
            let v = vectors.column(j);
            let v = v.as_slice();
            apply(v, &mut av);
            av.iter()
                .zip(v)
                .map(|(a, x)| (*a - *x * T::from_real(lam)).modulus_squared())
                .sum::<f64>()
                .sqrt()
        })
        .collect()
}

/// Hermitian eigendecomposition of a small dense matrix, ascending order.
pub(crate) fn dense_hermitian_eigen<T: Scalar>(m: DMatrix<T>) -> (Vec<f64>, DMatrix<T>) {
    let n = m.nrows();
    let sym = (&m + m.adjoint()) * T::from_real(0.5);
    let eig = nalgebra::SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn imaginary_unit_distinguishes_fields() {
        assert!(!is_complex::<f64>());
        assert!(is_complex::<C64>());
        assert_eq!(imaginary_unit::<C64>(), C64::new(0.0, 1.0));
    }

    #[test]
    fn lcg_is_reproducible_and_centered() {
        let a: Vec<f64> = {
            let mut g = Lcg::new(7);
            (0..1000).map(|_| g.next_f64()).collect()
        };
        let b: Vec<f64> = {
            let mut g = Lcg::new(7);
            (0..1000).map(|_| g.next_f64()).collect()
        };
        assert_eq!(a, b);
        assert!(a.iter().all(|x| (-0.5..0.5).contains(x)));
        let mean = a.iter().sum::<f64>() / a.len() as f64;
        assert!(mean.abs() < 0.05);
    }
}

//! Locally optimal block preconditioned conjugate gradient (LOBPCG) for the
//! smallest eigenpairs of a Hermitian sparse matrix.
//!
//! The search space `[X W P]` is re-orthonormalized each iteration with an
//! eigenvalue-based (SVQB) transform that drops numerically dependent
//! directions, so Rayleigh–Ritz always sees a well-conditioned basis.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{dense_hermitian_eigen, BandLdl, is_complex, residual_norms, EigenSolveReport, Lcg, Scalar, SparseSymmetricMatrix};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preconditioner {
    None,
    Jacobi,
    /// `(A − σI)⁻¹` from a band LDLᴴ factorization, with `σ` just below the
    /// declared lower bound. Falls back to Jacobi if that shift is not below
    /// the spectrum.
    BandShiftInvert,
}

enum Applied<T: Scalar> {
    Diagonal(Vec<f64>),
    Factor(BandLdl<T>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SparseSolveOptions {
    /// Residual tolerance `‖Av − λv‖₂` for every returned pair.
    pub tol: f64,
    pub preconditioner: Preconditioner,
    /// Known lower bound of the spectrum; a Ritz value below it is reported
    /// as an indefinite operator.
    pub lower_bound: f64,
    pub max_iterations: usize,
    pub seed: u64,
}

impl Default for SparseSolveOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            preconditioner: Preconditioner::Jacobi,
            lower_bound: 0.0,
            max_iterations: 5000,
            seed: 1,
        }
    }
}

const PADDING: usize = 5;
const STAGNATION_WINDOW: usize = 50;
const STAGNATION_FACTOR: f64 = 0.99;
const ROW_CHUNK: usize = 512;

pub fn sparse_eigensolve_smallest<T: Scalar>(
    a: &SparseSymmetricMatrix<T>,
    count: usize,
    opts: &SparseSolveOptions,
) -> Result<EigenSolveReport<T>> {
    let n = a.dimension();
    if count == 0 {
        return Err(Error::Precondition("count must be at least 1".into()));
    }
    if count > n {
        return Err(Error::Precondition(format!(
            "requested {count} eigenvalues of a {n}-dimensional matrix"
        )));
    }
    if !(opts.tol > 0.0) {
        return Err(Error::Precondition("tolerance must be positive".into()));
    }
    let m = (count + PADDING).min(n);
    if 3 * m >= n {
        return dense_fallback(a, count, opts);
    }

    let (glo, _) = a.gershgorin();
    let shift = if glo <= 0.0 { 1.0 + glo.abs() } else { 0.0 };
    let apply = |x: &DMatrix<T>| -> DMatrix<T> { block_matvec(a, x, shift) };
    let jacobi = || Applied::Diagonal(a.diagonal().iter().map(|d| 1.0 / (d + shift).max(1e-300)).collect());
    let precond: Applied<T> = match opts.preconditioner {
        Preconditioner::Jacobi => jacobi(),
        Preconditioner::None => Applied::Diagonal(vec![1.0; n]),
        Preconditioner::BandShiftInvert => {
            let sigma = opts.lower_bound - 1e-2 * (1.0 + opts.lower_bound.abs());
            BandLdl::positive_definite(&a.to_band(), sigma).map_or_else(jacobi, Applied::Factor)
        }
    };

    let complex = is_complex::<T>();
    let mut rng = Lcg::new(opts.seed);
    let x0 = DMatrix::<T>::from_fn(n, m, |_, _| rng.next_scalar::<T>(complex));
    let t0 = svqb_transform(&gram(&x0, &x0), 1e-12)
        .ok_or_else(|| Error::Precondition("degenerate starting block".into()))?;
    let mut x = &x0 * &t0;
    let mut ax = apply(&x);
    let (theta0, c0) = dense_hermitian_eigen(gram(&x, &ax));
    x = &x * &c0;
    ax = &ax * &c0;
    let mut theta = theta0;

    let mut p: Option<(DMatrix<T>, DMatrix<T>)> = None;
    let mut mark_value = f64::INFINITY;
    let mut mark_iter = 0;
    let mut iterations = 0;
    let mut residuals = vec![f64::INFINITY; m];

    loop {
        check_lower_bound(&theta[..count], shift, opts.lower_bound, opts.tol)?;
        let r = residual_block(&x, &ax, &theta);
        residuals = column_norms(&r);
        let worst = residuals[..count].iter().cloned().fold(0.0, f64::max);
        if worst <= opts.tol {
            // Confirm against a freshly applied operator before accepting.
            ax = apply(&x);
            let fresh = column_norms(&residual_block(&x, &ax, &theta));
            if fresh[..count].iter().all(|&v| v <= opts.tol) {
                break;
            }
            residuals = fresh;
        }
        if iterations >= opts.max_iterations {
            return Err(Error::NoConvergence {
                what: format!("LOBPCG after {iterations} iterations"),
                residuals: residuals[..count].to_vec(),
            });
        }
        if worst < STAGNATION_FACTOR * mark_value {
            mark_value = worst;
            mark_iter = iterations;
        } else if iterations - mark_iter >= STAGNATION_WINDOW {
            return Err(Error::Stagnation { iterations, residuals: residuals[..count].to_vec() });
        }
        iterations += 1;
        if iterations % 25 == 0 {
            ax = apply(&x);
        }

        let active: Vec<usize> = (0..m).filter(|&j| residuals[j] > opts.tol).collect();
        let mut w = DMatrix::<T>::from_fn(n, active.len(), |i, j| r[(i, active[j])]);
        match &precond {
            Applied::Diagonal(dg) => {
                for mut col in w.column_iter_mut() {
                    col.iter_mut().zip(dg).for_each(|(v, d)| *v *= T::from_real(*d));
                }
            }
            Applied::Factor(f) => {
                for mut col in w.column_iter_mut() {
                    f.solve(col.as_mut_slice());
                }
            }
        }
        for _ in 0..2 {
            let c = gram(&x, &w);
            w -= &x * c;
        }
        let aw = apply(&w);

        let (s, as_) = match &p {
            Some((pp, app)) => (hcat(&[&x, &w, pp]), hcat(&[&ax, &aw, app])),
            None => (hcat(&[&x, &w]), hcat(&[&ax, &aw])),
        };
        let mm = gram(&s, &s);
        let g = gram(&s, &as_);
        let t = svqb_transform(&mm, 1e-10)
            .ok_or_else(|| Error::Diagnostic("search space collapsed".into()))?;
        let gt = t.adjoint() * &g * &t;
        let (vals, cvec) = dense_hermitian_eigen(gt);
        if cvec.ncols() < m {
            return Err(Error::Diagnostic("search space smaller than the block".into()));
        }
        let cx = cvec.columns(0, m).into_owned();
        let full = &t * &cx;
        let x_new = &s * &full;
        let ax_new = &as_ * &full;
        theta = vals[..m].to_vec();

        // Directions for the next step: the part of the new block orthogonal
        // to the previous one, expressed in the orthonormal basis S·T.
        let z_raw = t.adjoint() * mm.columns(0, m);
        let p_next = svqb_transform(&gram(&z_raw, &z_raw), 1e-12).and_then(|tz| {
            let z = &z_raw * tz;
            let y_raw = DMatrix::<T>::from_fn(cx.nrows(), active.len(), |i, j| cx[(i, active[j])]);
            let mut y = y_raw.clone();
            for _ in 0..2 {
                let c = z.adjoint() * &y;
                y -= &z * c;
            }
            svqb_transform(&(y.adjoint() * &y), 1e-10).map(|ty| {
                let coeff = &t * (y * ty);
                (&s * &coeff, &as_ * &coeff)
            })
        });
        p = p_next;
        x = x_new;
        ax = ax_new;
    }

    // Keep only the converged columns. If rounding has eroded their
    // orthonormality, repair it with a Rayleigh–Ritz step on that block alone
    // so padding vectors cannot rotate into a degenerate pair.
    let mut x = x.columns(0, count).into_owned();
    let mut vals = theta[..count].to_vec();
    let defect = (gram(&x, &x) - DMatrix::<T>::identity(count, count)).iter().map(|v| v.modulus()).fold(0.0, f64::max);
    if defect > 1e-12 {
        let tx = svqb_transform(&gram(&x, &x), 1e-14)
            .ok_or_else(|| Error::Diagnostic("final block lost rank".into()))?;
        x = &x * &tx;
        let ax = apply(&x);
        let (v, c) = dense_hermitian_eigen(gram(&x, &ax));
        x = &x * &c;
        vals = v;
    }
    let eigenvalues: Vec<f64> = vals.iter().map(|v| v - shift).collect();
    check_lower_bound(&vals[..count], shift, opts.lower_bound, opts.tol)?;
    let res = residual_norms(|u, v| a.matvec(u, v), &eigenvalues, &x);
    let converged = res.iter().all(|&v| v <= opts.tol);
    if !converged {
        return Err(Error::NoConvergence { what: "LOBPCG final residual check".into(), residuals: res });
    }
    Ok(EigenSolveReport {
        eigenvalues,
        eigenvectors: Some(x),
        residual_norms: res,
        iterations,
        converged,
    })
}

fn check_lower_bound(theta: &[f64], shift: f64, bound: f64, tol: f64) -> Result<()> {
    let lowest = theta.iter().cloned().fold(f64::INFINITY, f64::min) - shift;
    let slack = tol + 1e-12 * (1.0 + bound.abs() + shift);
    if lowest < bound - slack {
        return Err(Error::Indefinite { rayleigh: lowest, bound });
    }
    Ok(())
}

fn dense_fallback<T: Scalar>(
    a: &SparseSymmetricMatrix<T>,
    count: usize,
    opts: &SparseSolveOptions,
) -> Result<EigenSolveReport<T>> {
    let n = a.dimension();
    let dense = DMatrix::from_fn(n, n, |i, j| a.get(i, j));
    let (vals, vecs) = dense_hermitian_eigen(dense);
    if vals[0] < opts.lower_bound - opts.tol {
        return Err(Error::Indefinite { rayleigh: vals[0], bound: opts.lower_bound });
    }
    let x = vecs.columns(0, count).into_owned();
    let eigenvalues = vals[..count].to_vec();
    let res = residual_norms(|u, v| a.matvec(u, v), &eigenvalues, &x);
    let converged = res.iter().all(|&v| v <= opts.tol);
    if !converged {
        return Err(Error::NoConvergence { what: "dense fallback".into(), residuals: res });
    }
    Ok(EigenSolveReport { eigenvalues, eigenvectors: Some(x), residual_norms: res, iterations: 0, converged })
}

fn residual_block<T: Scalar>(x: &DMatrix<T>, ax: &DMatrix<T>, theta: &[f64]) -> DMatrix<T> {
    let mut r = ax.clone();
    for (j, &th) in theta.iter().enumerate() {
        let mut col = r.column_mut(j);
        col.axpy(T::from_real(-th), &x.column(j), T::one());
    }
    r
}

fn column_norms<T: Scalar>(m: &DMatrix<T>) -> Vec<f64> {
    m.column_iter().map(|c| c.iter().map(|v| v.modulus_squared()).sum::<f64>().sqrt()).collect()
}

fn hcat<T: Scalar>(blocks: &[&DMatrix<T>]) -> DMatrix<T> {
    let n = blocks[0].nrows();
    let k: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut data = Vec::with_capacity(n * k);
    for b in blocks {
        data.extend_from_slice(b.as_slice());
    }
    DMatrix::from_vec(n, k, data)
}

/// `(A + shift·I) X`, one column at a time.
fn block_matvec<T: Scalar>(a: &SparseSymmetricMatrix<T>, x: &DMatrix<T>, shift: f64) -> DMatrix<T> {
    let n = x.nrows();
    let mut out = DMatrix::<T>::zeros(n, x.ncols());
    let work = |(dst, src): (&mut [T], &[T])| {
        a.matvec(src, dst);
        if shift != 0.0 {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += *s * T::from_real(shift);
            }
        }
    };
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        out.as_mut_slice().par_chunks_mut(n).zip(x.as_slice().par_chunks(n)).for_each(work);
    }
    #[cfg(not(feature = "parallel"))]
    out.as_mut_slice().chunks_mut(n).zip(x.as_slice().chunks(n)).for_each(work);
    out
}

/// `Aᴴ B` for tall blocks. Row chunks have fixed boundaries and partial
/// products are summed in chunk order, so the result does not depend on
/// thread scheduling.
pub(crate) fn gram<T: Scalar>(a: &DMatrix<T>, b: &DMatrix<T>) -> DMatrix<T> {
    let n = a.nrows();
    let (ka, kb) = (a.ncols(), b.ncols());
    let chunks = n.div_ceil(ROW_CHUNK).max(1);
    let partial = |c: usize| -> Vec<T> {
        let r0 = c * ROW_CHUNK;
        let r1 = ((c + 1) * ROW_CHUNK).min(n);
        let mut out = vec![T::zero(); ka * kb];
        for j in 0..kb {
            let bj = &b.as_slice()[j * n + r0..j * n + r1];
            for i in 0..ka {
                let ai = &a.as_slice()[i * n + r0..i * n + r1];
                let mut acc = T::zero();
                for (x, y) in ai.iter().zip(bj) {
                    acc += x.conjugate() * *y;
                }
                out[j * ka + i] = acc;
            }
        }
        out
    };
    #[cfg(feature = "parallel")]
    let parts: Vec<Vec<T>> = {
        use rayon::prelude::*;
        (0..chunks).into_par_iter().map(partial).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let parts: Vec<Vec<T>> = (0..chunks).map(partial).collect();
    let mut total = vec![T::zero(); ka * kb];
    for part in parts {
        for (t, p) in total.iter_mut().zip(part) {
            *t += p;
        }
    }
    DMatrix::from_vec(ka, kb, total)
}

/// Transform `T` such that `Tᴴ M T = I` for a Gram matrix `M`, dropping
/// directions whose scaled eigenvalue falls below `drop` times the largest.
fn svqb_transform<T: Scalar>(m: &DMatrix<T>, drop: f64) -> Option<DMatrix<T>> {
    let k = m.nrows();
    if k == 0 {
        return None;
    }
    let dmax = (0..k).map(|i| m[(i, i)].real()).fold(0.0, f64::max);
    if !(dmax > 0.0) {
        return None;
    }
    let scale: Vec<f64> = (0..k)
        .map(|i| {
            let d = m[(i, i)].real();
            if d > 1e-300 && d > 1e-28 * dmax {
                1.0 / d.sqrt()
            } else {
                0.0
            }
        })
        .collect();
    let scaled = DMatrix::from_fn(k, k, |i, j| m[(i, j)] * T::from_real(scale[i] * scale[j]));
    let (vals, vecs) = dense_hermitian_eigen(scaled);
    let top = vals.last().copied().unwrap_or(0.0);
    if !(top > 0.0) {
        return None;
    }
    let keep: Vec<usize> = (0..k).filter(|&j| vals[j] > drop * top).collect();
    if keep.is_empty() {
        return None;
    }
    Some(DMatrix::from_fn(k, keep.len(), |i, j| {
        let c = keep[j];
        vecs[(i, c)] * T::from_real(scale[i] / vals[c].sqrt())
    }))
}

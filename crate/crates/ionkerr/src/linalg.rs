//! Internal dense complex linear algebra.
//!
//! Matrices are `ndarray::Array2<C64>` in standard (row-major) layout. The
//! multiply kernels below work on contiguous row slices so they stay fast in
//! every build profile; the hermitian eigendecomposition is delegated to
//! `faer`, pinned to sequential execution so results are bit-reproducible
//! regardless of how many worker threads the caller uses.

use ndarray::{Array1, Array2};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

/// `dst = a · b`. Panics (debug) on shape mismatch.
pub(crate) fn matmul_into(dst: &mut Array2<C64>, a: &Array2<C64>, b: &Array2<C64>) {
    let (n, k) = a.dim();
    let (kb, m) = b.dim();
    debug_assert_eq!(k, kb, "matmul: inner dimensions differ");
    debug_assert_eq!(dst.dim(), (n, m), "matmul: output shape mismatch");
    let av = a.as_slice().expect("matmul: non-contiguous lhs");
    let bv = b.as_slice().expect("matmul: non-contiguous rhs");
    let dv = dst.as_slice_mut().expect("matmul: non-contiguous dst");
    dv.fill(C64::new(0.0, 0.0));
    for i in 0..n {
        let arow = &av[i * k..(i + 1) * k];
        let drow = &mut dv[i * m..(i + 1) * m];
        for (l, &ail) in arow.iter().enumerate() {
            let brow = &bv[l * m..(l + 1) * m];
            for (d, &blj) in drow.iter_mut().zip(brow.iter()) {
                *d += ail * blj;
            }
        }
    }
}

pub(crate) fn matmul(a: &Array2<C64>, b: &Array2<C64>) -> Array2<C64> {
    let mut out = Array2::zeros((a.nrows(), b.ncols()));
    matmul_into(&mut out, a, b);
    out
}

/// `dst = a · v` for a vector `v`.
pub(crate) fn matvec_into(dst: &mut Array1<C64>, a: &Array2<C64>, v: &Array1<C64>) {
    let (n, k) = a.dim();
    debug_assert_eq!(v.len(), k);
    debug_assert_eq!(dst.len(), n);
    let av = a.as_slice().expect("matvec: non-contiguous matrix");
    let vv = v.as_slice().expect("matvec: non-contiguous vector");
    for (i, d) in dst.iter_mut().enumerate() {
        let arow = &av[i * k..(i + 1) * k];
        let mut acc = C64::new(0.0, 0.0);
        for (&x, &y) in arow.iter().zip(vv.iter()) {
            acc += x * y;
        }
        *d = acc;
    }
}

/// Square matrix product on row-major slices: `dst = a · b`.
pub(crate) fn matmul_sq(dst: &mut [C64], a: &[C64], b: &[C64], n: usize) {
    debug_assert!(a.len() == n * n && b.len() == n * n && dst.len() == n * n);
    dst.fill(C64::new(0.0, 0.0));
    for i in 0..n {
        let arow = &a[i * n..(i + 1) * n];
        let drow = &mut dst[i * n..(i + 1) * n];
        for (l, &ail) in arow.iter().enumerate() {
            let brow = &b[l * n..(l + 1) * n];
            for (d, &blj) in drow.iter_mut().zip(brow.iter()) {
                *d += ail * blj;
            }
        }
    }
}

/// Square product with the conjugate transpose of the right factor:
/// `dst = a · b†`, reading `b` row-wise so no transpose is materialized.
pub(crate) fn matmul_sq_dag(dst: &mut [C64], a: &[C64], b: &[C64], n: usize) {
    debug_assert!(a.len() == n * n && b.len() == n * n && dst.len() == n * n);
    for i in 0..n {
        let arow = &a[i * n..(i + 1) * n];
        let drow = &mut dst[i * n..(i + 1) * n];
        for (j, d) in drow.iter_mut().enumerate() {
            let brow = &b[j * n..(j + 1) * n];
            let mut acc = C64::new(0.0, 0.0);
            for (&x, &y) in arow.iter().zip(brow.iter()) {
                acc += x * y.conj();
            }
            *d = acc;
        }
    }
}

/// Conjugate transpose.
pub(crate) fn dagger(a: &Array2<C64>) -> Array2<C64> {
    let (n, m) = a.dim();
    Array2::from_shape_fn((m, n), |(i, j)| a[[j, i]].conj())
}

/// Largest element modulus.
pub(crate) fn max_abs(a: &Array2<C64>) -> f64 {
    a.iter().fold(0.0_f64, |acc, z| acc.max(z.norm()))
}

/// max_{jk} |M_{jk} − conj(M_{kj})|.
pub(crate) fn hermiticity_deviation(a: &Array2<C64>) -> f64 {
    let (n, m) = a.dim();
    debug_assert_eq!(n, m);
    let mut dev = 0.0_f64;
    for i in 0..n {
        for j in i..n {
            dev = dev.max((a[[i, j]] - a[[j, i]].conj()).norm());
        }
    }
    dev
}

/// Errors unless `max |M − M†| < tol_factor · max |M|` (zero matrices pass).
pub(crate) fn require_hermitian(a: &Array2<C64>, tol_factor: f64) -> Result<()> {
    let scale = max_abs(a);
    let deviation = hermiticity_deviation(a);
    if deviation <= tol_factor * scale.max(f64::MIN_POSITIVE) {
        Ok(())
    } else {
        Err(Error::NotHermitian { deviation, scale })
    }
}

/// In-place hermitization `M ← (M + M†)/2`.
pub(crate) fn hermitize(a: &mut Array2<C64>) {
    let n = a.nrows();
    for i in 0..n {
        a[[i, i]] = C64::new(a[[i, i]].re, 0.0);
        for j in (i + 1)..n {
            let avg = 0.5 * (a[[i, j]] + a[[j, i]].conj());
            a[[i, j]] = avg;
            a[[j, i]] = avg.conj();
        }
    }
}

fn pin_sequential() {
    use std::sync::Once;
    static ONCE: Once = Once::new();
    ONCE.call_once(|| faer::set_global_parallelism(faer::Par::Seq));
}

/// Eigendecomposition of a hermitian matrix: `a = U diag(λ) U†` with real
/// ascending eigenvalues and orthonormal columns in `U`.
///
/// The input is hermitized first so roundoff dust in the upper triangle
/// cannot leak into the factorization.
pub(crate) fn eigh(a: &Array2<C64>) -> Result<(Array1<f64>, Array2<C64>)> {
    pin_sequential();
    let n = a.nrows();
    debug_assert_eq!(n, a.ncols());
    let m = faer::Mat::<C64>::from_fn(n, n, |i, j| 0.5 * (a[[i, j]] + a[[j, i]].conj()));
    let evd = m
        .self_adjoint_eigen(faer::Side::Lower)
        .map_err(|e| Error::Domain(format!("hermitian eigendecomposition failed: {e:?}")))?;
    let s = evd.S();
    let u = evd.U();
    let values = Array1::from_shape_fn(n, |i| s[i].re);
    let vectors = Array2::from_shape_fn((n, n), |(i, j)| u[(i, j)]);
    Ok((values, vectors))
}

/// Applies a scalar function to a hermitian matrix through its
/// eigendecomposition: `f(A) = U diag(f(λ)) U†`.
pub(crate) fn hermitian_matrix_function(
    a: &Array2<C64>,
    f: impl Fn(f64) -> f64,
) -> Result<Array2<C64>> {
    let (vals, vecs) = eigh(a)?;
    let n = a.nrows();
    // U · diag(f(λ)) · U†
    let mut scaled = vecs.clone();
    for (k, &v) in vals.iter().enumerate() {
        let fv = f(v);
        scaled.column_mut(k).iter_mut().for_each(|z| *z *= fv);
    }
    let mut out = Array2::zeros((n, n));
    matmul_into(&mut out, &scaled, &dagger(&vecs));
    hermitize(&mut out);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn matmul_matches_hand_product() {
        let a = array![[c(1.0, 0.0), c(0.0, 1.0)], [c(2.0, -1.0), c(0.5, 0.0)]];
        let b = array![[c(0.0, 2.0), c(1.0, 0.0)], [c(1.0, 1.0), c(0.0, 0.0)]];
        let p = matmul(&a, &b);
        let expected = array![
            [a[[0, 0]] * b[[0, 0]] + a[[0, 1]] * b[[1, 0]], a[[0, 0]] * b[[0, 1]]],
            [a[[1, 0]] * b[[0, 0]] + a[[1, 1]] * b[[1, 0]], a[[1, 0]] * b[[0, 1]]],
        ];
        for (x, y) in p.iter().zip(expected.iter()) {
            assert!((x - y).norm() < 1e-14);
        }
    }

    #[test]
    fn eigh_reconstructs_input() {
        let n = 6;
        let a = Array2::from_shape_fn((n, n), |(i, j)| {
            if i == j {
                c(i as f64, 0.0)
            } else {
                c(0.3 / (1.0 + (i + j) as f64), 0.1 * (i as f64 - j as f64))
            }
        });
        let mut h = a.clone();
        hermitize(&mut h);
        let (vals, vecs) = eigh(&h).unwrap();
        let mut rebuilt: Array2<C64> = Array2::zeros((n, n));
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    rebuilt[[i, j]] += vecs[[i, k]] * vals[k] * vecs[[j, k]].conj();
                }
            }
        }
        for (x, y) in rebuilt.iter().zip(h.iter()) {
            assert!((x - y).norm() < 1e-12);
        }
        assert!(vals.windows(2).into_iter().all(|w| w[0] <= w[1]));
    }

    #[test]
    fn hermitian_function_of_diagonal() {
        let a = Array2::from_diag(&array![c(0.0, 0.0), c(1.0, 0.0), c(4.0, 0.0)]);
        let s = hermitian_matrix_function(&a, f64::sqrt).unwrap();
        for (i, expected) in [0.0, 1.0, 2.0].into_iter().enumerate() {
            assert!((s[[i, i]].re - expected).abs() < 1e-12);
        }
        assert!(hermiticity_deviation(&s) < 1e-14);
    }
}

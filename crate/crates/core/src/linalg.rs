//! Small dense kernels on row-major complex buffers used in the per-frequency
//! hot loops. nalgebra is used everywhere else.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

/// Cholesky factorization of a Hermitian matrix in place. Only the lower
/// triangle of `a` is read; on success it holds `L` with `A = L L^H` and the
/// function returns `log det A`. Returns `None` if `A` is not positive
/// definite.
pub(crate) fn cholesky_in_place(a: &mut [C64], m: usize) -> Option<f64> {
    let mut logdet = 0.0;
    for j in 0..m {
        let mut d = a[j * m + j].re;
        for k in 0..j {
            d -= a[j * m + k].norm_sqr();
        }
        if !(d > 0.0) || !d.is_finite() {
            return None;
        }
        let ljj = d.sqrt();
        a[j * m + j] = C64::new(ljj, 0.0);
        logdet += 2.0 * ljj.ln();
        let inv = 1.0 / ljj;
        for i in (j + 1)..m {
            let mut s = a[i * m + j];
            for k in 0..j {
                s -= a[i * m + k] * a[j * m + k].conj();
            }
            a[i * m + j] = s * inv;
        }
    }
    // clear the strict upper triangle so the buffer is exactly L
    for i in 0..m {
        for j in (i + 1)..m {
            a[i * m + j] = C64::new(0.0, 0.0);
        }
    }
    Some(logdet)
}

/// Hermitian inverse from a Cholesky factor. `work` must hold `m*m` entries.
pub(crate) fn inverse_from_cholesky(l: &[C64], m: usize, work: &mut [C64], out: &mut [C64]) {
    let zero = C64::new(0.0, 0.0);
    work.iter_mut().for_each(|w| *w = zero);
    // work <- L^{-1}, lower triangular
    for j in 0..m {
        work[j * m + j] = C64::new(1.0 / l[j * m + j].re, 0.0);
        for i in (j + 1)..m {
            let mut s = zero;
            for k in j..i {
                s += l[i * m + k] * work[k * m + j];
            }
            work[i * m + j] = -s / l[i * m + i].re;
        }
    }
    // out <- L^{-H} L^{-1}
    for i in 0..m {
        for j in 0..=i {
            let mut s = zero;
            for k in i..m {
                s += work[k * m + i].conj() * work[k * m + j];
            }
            out[i * m + j] = s;
            out[j * m + i] = s.conj();
        }
    }
}

pub(crate) fn to_flat(a: &DMatrix<C64>) -> Vec<C64> {
    let m = a.nrows();
    let mut v = vec![C64::new(0.0, 0.0); m * m];
    for i in 0..m {
        for j in 0..m {
            v[i * m + j] = a[(i, j)];
        }
    }
    v
}

pub(crate) fn from_flat(v: &[C64], m: usize) -> DMatrix<C64> {
    DMatrix::from_fn(m, m, |i, j| v[i * m + j])
}

/// Smallest eigenvalue of a Hermitian matrix.
pub(crate) fn min_eigenvalue(a: &DMatrix<C64>) -> f64 {
    let eig = nalgebra::SymmetricEigen::new(a.clone());
    eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
}

/// Log-determinant of a Hermitian positive definite matrix.
pub(crate) fn hermitian_logdet(a: &DMatrix<C64>) -> Option<f64> {
    let m = a.nrows();
    let mut buf = to_flat(a);
    cholesky_in_place(&mut buf, m)
}

/// Inverse of a Hermitian positive definite matrix.
pub(crate) fn hermitian_inverse(a: &DMatrix<C64>) -> Option<DMatrix<C64>> {
    let m = a.nrows();
    let mut buf = to_flat(a);
    cholesky_in_place(&mut buf, m)?;
    let mut work = vec![C64::new(0.0, 0.0); m * m];
    let mut out = vec![C64::new(0.0, 0.0); m * m];
    inverse_from_cholesky(&buf, m, &mut work, &mut out);
    Some(from_flat(&out, m))
}

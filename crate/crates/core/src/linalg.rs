//! Small dense complex linear algebra: hermitean checks, trace inner
//! products, and a cyclic-Jacobi eigensolver.
//!
//! The eigensolver works on hermitean matrices by embedding them into real
//! symmetric matrices of twice the size (`H = A + iB` maps to
//! `[[A, -B], [B, A]]`), running Jacobi rotations there, and mapping the
//! resulting real eigenvectors back to complex ones. Matrices at desk scale
//! (N <= ~20) are well inside the regime where Jacobi is foolproof.

use ndarray::{Array1, Array2};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Maximum number of full Jacobi sweeps before giving up.
const MAX_SWEEPS: usize = 64;

pub fn identity(n: usize) -> Array2<C64> {
    Array2::eye(n)
}

pub fn adjoint(a: &Array2<C64>) -> Array2<C64> {
    a.t().mapv(|z| z.conj())
}

pub fn trace(a: &Array2<C64>) -> C64 {
    a.diag().sum()
}

/// Tr[A B] without forming the product.
pub fn trace_product(a: &Array2<C64>, b: &Array2<C64>) -> C64 {
    let n = a.nrows();
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            acc += a[[i, j]] * b[[j, i]];
        }
    }
    acc
}

/// Largest entry magnitude.
pub fn max_abs(a: &Array2<C64>) -> f64 {
    a.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Entrywise max norm of A - B.
pub fn max_diff(a: &Array2<C64>, b: &Array2<C64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

pub fn commutator(a: &Array2<C64>, b: &Array2<C64>) -> Array2<C64> {
    a.dot(b) - b.dot(a)
}

/// |psi><psi| for a (not necessarily normalized) vector.
pub fn outer(v: &Array1<C64>) -> Array2<C64> {
    let n = v.len();
    Array2::from_shape_fn((n, n), |(i, j)| v[i] * v[j].conj())
}

pub fn vec_norm(v: &Array1<C64>) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// <psi| M |psi>.
pub fn expectation(m: &Array2<C64>, psi: &Array1<C64>) -> C64 {
    let n = psi.len();
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            acc += psi[i].conj() * m[[i, j]] * psi[j];
        }
    }
    acc
}

/// Worst hermiticity violation: (row, col, |A[r,c] - conj(A[c,r])|).
pub fn hermiticity_deviation(a: &Array2<C64>) -> (usize, usize, f64) {
    let n = a.nrows();
    let mut worst = (0, 0, 0.0);
    for i in 0..n {
        for j in i..n {
            let dev = (a[[i, j]] - a[[j, i]].conj()).norm();
            if dev > worst.2 {
                worst = (i, j, dev);
            }
        }
    }
    worst
}

/// Cyclic Jacobi eigensolver for a real symmetric matrix.
///
/// Only the upper triangle of `a` is read. Returns unsorted eigenvalues and
/// the matrix whose columns are the matching eigenvectors.
pub fn jacobi_eigen_sym(a: &Array2<f64>) -> Result<(Vec<f64>, Array2<f64>)> {
    let n = a.nrows();
    debug_assert_eq!(n, a.ncols());
    let mut a = a.clone();
    let mut v = Array2::<f64>::eye(n);
    let mut b: Vec<f64> = (0..n).map(|p| a[[p, p]]).collect();
    let mut d = b.clone();
    let mut z = vec![0.0_f64; n];

    let mut sm = 0.0;
    for sweep in 1..=MAX_SWEEPS {
        sm = 0.0;
        for p in 0..n.saturating_sub(1) {
            for q in (p + 1)..n {
                sm += a[[p, q]].abs();
            }
        }
        if sm == 0.0 {
            return Ok((d, v));
        }

        let tresh = if sweep < 4 {
            0.2 * sm / ((n * n) as f64)
        } else {
            0.0
        };

        for p in 0..n.saturating_sub(1) {
            for q in (p + 1)..n {
                let g = 100.0 * a[[p, q]].abs();
                // Skip rotations that can no longer change the diagonal.
                if sweep > 4 && d[p].abs() + g == d[p].abs() && d[q].abs() + g == d[q].abs() {
                    a[[p, q]] = 0.0;
                } else if a[[p, q]].abs() > tresh {
                    let mut h = d[q] - d[p];
                    let t = if h.abs() + g == h.abs() {
                        a[[p, q]] / h
                    } else {
                        let theta = 0.5 * h / a[[p, q]];
                        let mut t = 1.0 / (theta.abs() + (1.0 + theta * theta).sqrt());
                        if theta < 0.0 {
                            t = -t;
                        }
                        t
                    };
                    let c = 1.0 / (1.0 + t * t).sqrt();
                    let s = t * c;
                    let tau = s / (1.0 + c);
                    h = t * a[[p, q]];
                    z[p] -= h;
                    z[q] += h;
                    d[p] -= h;
                    d[q] += h;
                    a[[p, q]] = 0.0;

                    let rot = |a: &mut Array2<f64>, i: usize, j: usize, k: usize, l: usize| {
                        let g = a[[i, j]];
                        let h = a[[k, l]];
                        a[[i, j]] = g - s * (h + g * tau);
                        a[[k, l]] = h + s * (g - h * tau);
                    };
                    for j in 0..p {
                        rot(&mut a, j, p, j, q);
                    }
                    for j in (p + 1)..q {
                        rot(&mut a, p, j, j, q);
                    }
                    for j in (q + 1)..n {
                        rot(&mut a, p, j, q, j);
                    }
                    for j in 0..n {
                        rot(&mut v, j, p, j, q);
                    }
                }
            }
        }

        for p in 0..n {
            b[p] += z[p];
            d[p] = b[p];
            z[p] = 0.0;
        }
    }

    Err(Error::Convergence {
        sweeps: MAX_SWEEPS,
        offdiag: sm,
    })
}

/// Full eigendecomposition of a hermitean matrix.
///
/// Returns `(eigenvalue, unit eigenvector)` pairs sorted by ascending
/// eigenvalue. The input is hermitized (`(H + H†)/2`) before the real
/// embedding so the doubled spectrum pairs up exactly.
pub fn hermitian_eigen(h: &Array2<C64>) -> Result<Vec<(f64, Array1<C64>)>> {
    let n = h.nrows();
    if n != h.ncols() {
        return Err(Error::NotSquare {
            rows: n,
            cols: h.ncols(),
        });
    }

    // Exactly symmetric/antisymmetric real and imaginary parts.
    let mut re = Array2::<f64>::zeros((n, n));
    let mut im = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            let z = 0.5 * (h[[i, j]] + h[[j, i]].conj());
            re[[i, j]] = z.re;
            im[[i, j]] = z.im;
        }
    }

    // M = [[Re, -Im], [Im, Re]] is symmetric; each eigenvalue of H shows up
    // twice, with real eigenvectors [x; y] and [-y; x] for z = x + iy.
    let mut m = Array2::<f64>::zeros((2 * n, 2 * n));
    for i in 0..n {
        for j in 0..n {
            m[[i, j]] = re[[i, j]];
            m[[i, j + n]] = -im[[i, j]];
            m[[i + n, j]] = im[[i, j]];
            m[[i + n, j + n]] = re[[i, j]];
        }
    }

    let (vals, vecs) = jacobi_eigen_sym(&m)?;

    let mut order: Vec<usize> = (0..2 * n).collect();
    order.sort_by(|&i, &j| vals[i].partial_cmp(&vals[j]).unwrap().then(i.cmp(&j)));

    // Each real eigenvector maps to a complex one; of every doubled pair,
    // keep the first and drop its phase twin via Gram-Schmidt.
    let mut kept: Vec<(f64, Array1<C64>)> = Vec::with_capacity(n);
    for &k in &order {
        if kept.len() == n {
            break;
        }
        let mut z = Array1::from_shape_fn(n, |i| C64::new(vecs[[i, k]], vecs[[i + n, k]]));
        for _ in 0..2 {
            for (_, w) in &kept {
                let overlap: C64 = w.iter().zip(z.iter()).map(|(a, b)| a.conj() * b).sum();
                z = z - w.mapv(|x| x * overlap);
            }
        }
        let norm = vec_norm(&z);
        // Candidates are either a fresh unit direction or the i*z twin of a
        // kept vector; the norm separates the two sharply.
        if norm > 0.5 {
            kept.push((vals[k], z.mapv(|x| x / norm)));
        }
    }

    if kept.len() != n {
        return Err(Error::Convergence {
            sweeps: MAX_SWEEPS,
            offdiag: f64::NAN,
        });
    }
    Ok(kept)
}

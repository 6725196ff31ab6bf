//! Shared helpers for unit tests.

use ndarray::Array2;
use rand::{Rng, SeedableRng};

use crate::linalg::C64;
use crate::multipole::HermitianMatrix;

/// Seeded random density matrix (positive by construction).
pub(crate) fn random_density(n: usize, seed: u64) -> crate::measurement::DensityMatrix {
    let h = random_hermitian(n, seed);
    let m = h.entries().dot(&crate::linalg::adjoint(h.entries()));
    let tr = crate::linalg::trace(&m).re;
    crate::measurement::DensityMatrix::new(m.mapv(|z| z / C64::new(tr, 0.0))).unwrap()
}

/// Seeded random hermitean matrix with entries in [-1, 1].
pub(crate) fn random_hermitian(n: usize, seed: u64) -> HermitianMatrix {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut h = Array2::<C64>::zeros((n, n));
    for i in 0..n {
        h[[i, i]] = C64::new(rng.random::<f64>() * 2.0 - 1.0, 0.0);
        for j in (i + 1)..n {
            let z = C64::new(
                rng.random::<f64>() * 2.0 - 1.0,
                rng.random::<f64>() * 2.0 - 1.0,
            );
            h[[i, j]] = z;
            h[[j, i]] = z.conj();
        }
    }
    HermitianMatrix::new(h).unwrap()
}

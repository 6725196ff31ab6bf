//! Eigenstate reconstruction: post-selected subbeam ensembles, multipole
//! expectation values estimated by simulated measurement (or exactly), and
//! the reconstructed density matrix with its dominant eigenvector.

use ndarray::{Array1, Array2};
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, C64};
use crate::measurement::{self, DensityMatrix, Spectrum};
use crate::multipole::{HermitianMatrix, MultipoleBasis};
use crate::rng::{substream, Domain};

/// Estimated multipole expectation values `<T_nu>` for one state, aligned
/// with the basis ordering. The identity component is pinned at 1.
#[derive(Debug, Clone, Serialize)]
pub struct ExpectationEstimates {
    pub values: Vec<f64>,
    pub std_errors: Vec<f64>,
    /// Shots spent per multipole; 0 means exact evaluation.
    pub shots_per_multipole: u64,
}

/// A state rebuilt from expectation values.
#[derive(Debug, Clone)]
pub struct ReconstructedState {
    /// `(1/N) sum_nu <T_nu> T_nu`. Hermitean with unit trace by
    /// construction; finite-shot estimates can push eigenvalues slightly
    /// negative, which is reported rather than corrected.
    pub rho_hat: DensityMatrix,
    /// Fidelity of the reconstructed eigenstate against the oracle
    /// eigenspace, `<v|P_n|v>` for the dominant vector, when an oracle was
    /// supplied.
    pub fidelity_vs_oracle: Option<f64>,
    /// Top eigenvector of rho_hat. For a degenerate target eigenspace this
    /// is some unit vector inside it, flagged by the multiplicity.
    pub dominant_vector: Array1<C64>,
    /// Multiplicity of the oracle eigenspace being reconstructed, when known.
    pub oracle_multiplicity: Option<usize>,
    /// Smallest eigenvalue of rho_hat (negative values expose finite-shot
    /// artifacts).
    pub min_eigenvalue: f64,
}

/// The ensemble emerging when every subbeam except `n` is blocked:
/// `rho_n = P_n / Tr[P_n]`.
pub fn postselect(spectrum: &Spectrum, n: usize) -> Result<DensityMatrix> {
    if n >= spectrum.len() {
        return Err(Error::EigenspaceOutOfRange {
            index: n,
            len: spectrum.len(),
        });
    }
    let m = spectrum.multiplicities()[n] as f64;
    DensityMatrix::with_unit_trace(spectrum.projector(n).mapv(|z| z / C64::new(m, 0.0)))
}

fn sample_observable(
    observable: &Array2<C64>,
    rho: &DensityMatrix,
    shots: u64,
    rng: &mut impl Rng,
) -> Result<(f64, f64)> {
    // Spectral distribution of the observable under rho; the measuring
    // apparatus for T_nu is built from the known basis element, so taking
    // its spectrum here leaks nothing about the input matrix.
    let spectrum = measurement::oracle_spectrum(
        &HermitianMatrix::new(observable.clone())?,
        measurement::DEFAULT_DEGENERACY_TOL,
    )?;
    let probs = measurement::outcome_probabilities(rho, &spectrum);
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..shots {
        let u: f64 = rng.random();
        let mut cumulative = 0.0;
        let mut value = spectrum.values()[spectrum.len() - 1];
        for (k, &p) in probs.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            cumulative += p;
            value = spectrum.values()[k];
            if u < cumulative {
                break;
            }
        }
        sum += value;
        sum_sq += value * value;
    }
    let mean = sum / shots as f64;
    let std_error = if shots > 1 {
        let var = ((sum_sq / shots as f64 - mean * mean) * shots as f64 / (shots - 1) as f64)
            .max(0.0);
        (var / shots as f64).sqrt()
    } else {
        0.0
    };
    Ok((mean, std_error))
}

fn estimate_single(
    rho: &DensityMatrix,
    basis: &MultipoleBasis,
    shots: u64,
    seed: u64,
    nu: usize,
) -> Result<(f64, f64)> {
    let t = basis.matrix(nu);
    if shots == 0 {
        Ok((linalg::trace_product(rho.entries(), t).re, 0.0))
    } else {
        let mut rng = substream(seed, Domain::TomographyShots, nu as u64);
        sample_observable(t, rho, shots, &mut rng)
    }
}

/// Estimates every `<T_nu>` for nu > 0 by simulating `shots` projective
/// measurements of T_nu on fresh copies of `rho`; `shots = 0` evaluates
/// `Tr[rho T_nu]` exactly.
pub fn estimate_expectations(
    rho: &DensityMatrix,
    basis: &MultipoleBasis,
    shots: u64,
    seed: u64,
) -> Result<ExpectationEstimates> {
    if rho.dim() != basis.dimension() {
        return Err(Error::DimensionMismatch {
            expected: basis.dimension(),
            got: rho.dim(),
        });
    }
    let mut values = vec![1.0];
    let mut std_errors = vec![0.0];
    for nu in 1..basis.len() {
        let (v, se) = estimate_single(rho, basis, shots, seed, nu)?;
        values.push(v);
        std_errors.push(se);
    }
    Ok(ExpectationEstimates {
        values,
        std_errors,
        shots_per_multipole: shots,
    })
}

/// [`estimate_expectations`] with the per-multipole loop parallelized;
/// per-nu substreams keep the result identical to the serial path.
pub fn estimate_expectations_par(
    rho: &DensityMatrix,
    basis: &MultipoleBasis,
    shots: u64,
    seed: u64,
) -> Result<ExpectationEstimates> {
    if rho.dim() != basis.dimension() {
        return Err(Error::DimensionMismatch {
            expected: basis.dimension(),
            got: rho.dim(),
        });
    }
    let tail: Result<Vec<(f64, f64)>> = (1..basis.len())
        .into_par_iter()
        .map(|nu| estimate_single(rho, basis, shots, seed, nu))
        .collect();
    let mut values = vec![1.0];
    let mut std_errors = vec![0.0];
    for (v, se) in tail? {
        values.push(v);
        std_errors.push(se);
    }
    Ok(ExpectationEstimates {
        values,
        std_errors,
        shots_per_multipole: shots,
    })
}

/// Rebuilds `rho_hat = (1/N) sum_nu <T_nu> T_nu` and extracts its dominant
/// eigenvector. Passing the oracle eigenspace fills in the fidelity column.
pub fn reconstruct_state(
    estimates: &ExpectationEstimates,
    basis: &MultipoleBasis,
    oracle: Option<(&Spectrum, usize)>,
) -> Result<ReconstructedState> {
    if estimates.values.len() != basis.len() {
        return Err(Error::DimensionMismatch {
            expected: basis.len(),
            got: estimates.values.len(),
        });
    }
    let n = basis.dimension();
    let mut acc = Array2::<C64>::zeros((n, n));
    for (v, elem) in estimates.values.iter().zip(basis.elements()) {
        acc = acc + elem.matrix.mapv(|z| z * C64::new(*v / n as f64, 0.0));
    }
    let rho_hat = DensityMatrix::with_unit_trace(acc)?;

    let pairs = linalg::hermitian_eigen(rho_hat.entries())?;
    let min_eigenvalue = pairs.first().map(|(v, _)| *v).unwrap_or(0.0);
    let dominant_vector = pairs.last().map(|(_, v)| v.clone()).unwrap();

    let (fidelity_vs_oracle, oracle_multiplicity) = match oracle {
        Some((spectrum, idx)) => {
            if idx >= spectrum.len() {
                return Err(Error::EigenspaceOutOfRange {
                    index: idx,
                    len: spectrum.len(),
                });
            }
            let overlap =
                linalg::expectation(spectrum.projector(idx), &dominant_vector).re;
            (
                Some(overlap.clamp(0.0, 1.0)),
                Some(spectrum.multiplicities()[idx]),
            )
        }
        None => (None, None),
    };

    Ok(ReconstructedState {
        rho_hat,
        fidelity_vs_oracle,
        dominant_vector,
        oracle_multiplicity,
        min_eigenvalue,
    })
}

/// End-to-end verification metric `||A v - lambda v||_2` for a unit vector.
pub fn eigenvector_residual(a: &HermitianMatrix, lambda: f64, v: &Array1<C64>) -> Result<f64> {
    if v.len() != a.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            got: v.len(),
        });
    }
    let norm = linalg::vec_norm(v);
    if norm == 0.0 {
        return Err(Error::ZeroVector);
    }
    if (norm - 1.0).abs() > 1e-10 {
        return Err(Error::NotNormalized((norm - 1.0).abs()));
    }
    let av = a.entries().dot(v);
    let residual: f64 = av
        .iter()
        .zip(v.iter())
        .map(|(x, y)| (x - y * C64::new(lambda, 0.0)).norm_sqr())
        .sum();
    Ok(residual.sqrt())
}

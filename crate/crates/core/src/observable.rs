//! Interpretation of a hermitean matrix as a spin observable, the
//! equivalent magnetic-field description at spin 1/2, and the closed-form
//! 2 x 2 eigenvalues used for cross-checking.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::multipole::{self, CoefficientVector, HermitianMatrix, MultipoleBasis, SpinSystem};

/// g-factor, magneton and hbar; natural units (all 1) by default so the
/// eigenvalue arithmetic is unit-free.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhysicalConstants {
    pub g: f64,
    pub mu_b: f64,
    pub hbar: f64,
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self {
            g: 1.0,
            mu_b: 1.0,
            hbar: 1.0,
        }
    }
}

impl PhysicalConstants {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("g", self.g), ("mu_b", self.mu_b), ("hbar", self.hbar)] {
            if v == 0.0 || !v.is_finite() {
                return Err(Error::InvalidConfig(format!(
                    "physical constant {name} must be finite and nonzero, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// A matrix viewed as the observable H_A(S) of a single spin s = (N-1)/2:
/// its multipole coefficients plus the constants that translate them into
/// fields.
#[derive(Debug, Clone)]
pub struct SpinObservable {
    pub spin: SpinSystem,
    pub coeffs: CoefficientVector,
    pub constants: PhysicalConstants,
}

/// A static magnetic field vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FieldVector(pub [f64; 3]);

impl FieldVector {
    pub fn norm(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &[f64; 3]) -> f64 {
        self.0.iter().zip(other).map(|(a, b)| a * b).sum()
    }
}

/// Reads a matrix as the spin observable it defines, building the multipole
/// basis for s = (N-1)/2 and decomposing.
pub fn to_observable(a: &HermitianMatrix, constants: PhysicalConstants) -> Result<SpinObservable> {
    constants.validate()?;
    let spin = SpinSystem::from_dimension(a.dim())?.with_hbar(constants.hbar);
    let basis = multipole::build_basis(spin)?;
    let coeffs = multipole::decompose(a, &basis)?;
    Ok(SpinObservable {
        spin,
        coeffs,
        constants,
    })
}

/// Like [`to_observable`] but reusing an already-built basis.
pub fn to_observable_with_basis(
    a: &HermitianMatrix,
    basis: &MultipoleBasis,
    constants: PhysicalConstants,
) -> Result<SpinObservable> {
    constants.validate()?;
    let coeffs = multipole::decompose(a, basis)?;
    Ok(SpinObservable {
        spin: basis.spin(),
        coeffs,
        constants,
    })
}

/// Homogeneous-field description at spin 1/2: the matrix is
/// `a I - g mu_B B0 . S`, with `a = a0` and `B0 = -2/(g mu_B hbar) (a1,a2,a3)`.
pub fn field_for_spin_half(obs: &SpinObservable) -> Result<(f64, FieldVector)> {
    let n = obs.spin.dimension();
    if n != 2 {
        return Err(Error::NotSpinHalf(n));
    }
    let a = obs.coeffs.values[0];
    let factor = -2.0 / (obs.constants.g * obs.constants.mu_b * obs.constants.hbar);
    let b0 = FieldVector([
        factor * obs.coeffs.values[1],
        factor * obs.coeffs.values[2],
        factor * obs.coeffs.values[3],
    ]);
    Ok((a, b0))
}

/// Eigenvalue shift between the traceless spin part and the full matrix:
/// A_n = a + E_n.
pub fn shift_relation(energy: f64, a: f64) -> f64 {
    a + energy
}

/// Closed-form eigenvalues of a hermitean 2 x 2 matrix
/// `[[alpha, beta*], [beta, gamma]]`:
/// `(alpha + gamma)/2 +- sqrt((alpha - gamma)^2 + 4 beta beta*)/2`,
/// returned as (larger, smaller).
pub fn closed_form_2x2(a: &HermitianMatrix) -> Result<(f64, f64)> {
    if a.dim() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            got: a.dim(),
        });
    }
    let e = a.entries();
    let alpha = e[[0, 0]].re;
    let gamma = e[[1, 1]].re;
    let beta_sq = e[[1, 0]].norm_sqr();
    let mean = 0.5 * (alpha + gamma);
    let disc = 0.5 * ((alpha - gamma).powi(2) + 4.0 * beta_sq).sqrt();
    Ok((mean + disc, mean - disc))
}

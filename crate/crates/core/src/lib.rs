//! Diagonalization of hermitean matrices by simulated quantum measurement.
//!
//! The library walks a matrix through five stages: expansion in a multipole
//! operator basis, reinterpretation as a spin observable, a generalized
//! Stern-Gerlach apparatus with tuned field profiles, projective measurement
//! of the maximally mixed state (which samples the eigenvalues), and
//! tomographic reconstruction of the eigenstates. A classical eigensolver is
//! kept quarantined as the stand-in for the physical apparatus: it drives
//! the outcome distributions but never the reported results.

pub mod apparatus;
pub mod error;
pub mod linalg;
pub mod measurement;
pub mod multipole;
pub mod observable;
pub mod pipeline;
pub mod rng;
pub mod tomography;
#[cfg(test)]
mod testutil;

pub use apparatus::{
    beam_force, check_maxwell, local_hamiltonian, FieldProfileSet, MaxwellReport, SwiftField,
};
pub use error::{Error, Result};
pub use linalg::C64;
pub use measurement::{
    harvest_eigenvalues, measure_once, missing_probability, oracle_spectrum, run_experiment,
    run_experiment_par, DensityMatrix, Harvest, MeasurementRecord, Outcome, Spectrum,
    StoppingRule,
};
pub use multipole::{
    build_basis, decompose, reconstruct, spin_operators, CoefficientVector, HermitianMatrix,
    MultipoleBasis, MultipoleElement, MultipoleIndex, SpinOperators, SpinSystem,
};
pub use observable::{
    closed_form_2x2, field_for_spin_half, shift_relation, to_observable, FieldVector,
    PhysicalConstants, SpinObservable,
};
pub use pipeline::{
    diagonalize_quantum, emit_report, load_matrix, parse_matrix, DiagonalizationReport,
    ReportFormat, RunConfig,
};
pub use tomography::{
    eigenvector_residual, estimate_expectations, estimate_expectations_par, postselect,
    reconstruct_state, ExpectationEstimates, ReconstructedState,
};

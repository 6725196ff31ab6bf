//! Generalized Stern-Gerlach apparatus: the spin-1/2 field with Maxwell
//! checks, tuned multipole field profiles, the position-dependent spin
//! Hamiltonian, and the beam-separating force at the apparatus center.

use ndarray::{Array1, Array2};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, C64};
use crate::multipole::{CoefficientVector, MultipoleBasis};
use crate::observable::{FieldVector, PhysicalConstants};

/// Default central-difference step for force and Maxwell diagnostics.
pub const DEFAULT_FD_STEP: f64 = 1e-3;

/// The inhomogeneous spin-1/2 field `B(r) = (1 + k.r) B0 + (B0.r) k`.
///
/// Divergence- and curl-free exactly when k is perpendicular to B0, which
/// the constructor enforces.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SwiftField {
    pub b0: FieldVector,
    pub k: [f64; 3],
}

fn dot(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn norm3(a: &[f64; 3]) -> f64 {
    dot(a, a).sqrt()
}

impl SwiftField {
    /// Rejects gradients with `|k.B0| > 1e-12 |k||B0|` (the field would have
    /// nonzero divergence 2 k.B0).
    pub fn new(b0: FieldVector, k: [f64; 3]) -> Result<Self> {
        let d = dot(&b0.0, &k);
        let bound = 1e-12 * norm3(&k) * b0.norm();
        if d.abs() > bound {
            return Err(Error::FieldNotTransverse { dot: d, bound });
        }
        Ok(Self { b0, k })
    }

    pub fn field_at(&self, r: [f64; 3]) -> FieldVector {
        let kr = dot(&self.k, &r);
        let br = dot(&self.b0.0, &r);
        FieldVector([
            (1.0 + kr) * self.b0.0[0] + br * self.k[0],
            (1.0 + kr) * self.b0.0[1] + br * self.k[1],
            (1.0 + kr) * self.b0.0[2] + br * self.k[2],
        ])
    }

    /// Zeeman levels to first order in the field gradient:
    /// `E_+-(r) = +-(hbar/2) g mu_B (1 + k.r) |B0|`.
    pub fn spin_half_levels(&self, r: [f64; 3], constants: &PhysicalConstants) -> (f64, f64) {
        let e = 0.5
            * constants.hbar
            * constants.g
            * constants.mu_b
            * (1.0 + dot(&self.k, &r))
            * self.b0.norm();
        (e, -e)
    }

    /// State-dependent forces `F_+- = -grad E_+-` at the center, computed by
    /// central differences of the levels. For this field the result is the
    /// constant pair `-+ (hbar/2) g mu_B |B0| k`.
    pub fn spin_half_forces(&self, constants: &PhysicalConstants, h: f64) -> ([f64; 3], [f64; 3]) {
        let mut f_plus = [0.0; 3];
        let mut f_minus = [0.0; 3];
        for axis in 0..3 {
            let mut up = [0.0; 3];
            let mut dn = [0.0; 3];
            up[axis] = h;
            dn[axis] = -h;
            let (pu, mu) = self.spin_half_levels(up, constants);
            let (pd, md) = self.spin_half_levels(dn, constants);
            f_plus[axis] = -(pu - pd) / (2.0 * h);
            f_minus[axis] = -(mu - md) / (2.0 * h);
        }
        (f_plus, f_minus)
    }
}

/// Linear field profiles `Phi_nu(r) = a_nu (1 + r_axis)` tuned so the value
/// and the first derivative along the gradient axis both equal a_nu at the
/// center.
#[derive(Debug, Clone)]
pub struct FieldProfileSet {
    coeffs: CoefficientVector,
    gradient_axis: usize,
}

impl FieldProfileSet {
    pub fn new(coeffs: CoefficientVector) -> Self {
        Self {
            coeffs,
            gradient_axis: 0,
        }
    }

    pub fn with_gradient_axis(mut self, axis: usize) -> Result<Self> {
        if axis > 2 {
            return Err(Error::InvalidConfig(format!(
                "gradient axis {axis} out of range 0..=2"
            )));
        }
        self.gradient_axis = axis;
        Ok(self)
    }

    pub fn coeffs(&self) -> &CoefficientVector {
        &self.coeffs
    }

    pub fn gradient_axis(&self) -> usize {
        self.gradient_axis
    }

    /// Phi_nu evaluated at r.
    pub fn profile(&self, nu: usize, r: [f64; 3]) -> f64 {
        self.coeffs.values[nu] * (1.0 + r[self.gradient_axis])
    }
}

/// Finite-difference residuals of `div B` and `curl B` over sample points.
#[derive(Debug, Clone, Serialize)]
pub struct MaxwellReport {
    pub sample_points: Vec<[f64; 3]>,
    pub max_div: f64,
    pub max_curl: f64,
    pub step: f64,
}

/// Central-difference divergence and curl of a field evaluator at the given
/// points; reports the worst residuals.
pub fn check_maxwell<F>(field: F, points: &[[f64; 3]], h: f64) -> MaxwellReport
where
    F: Fn([f64; 3]) -> FieldVector,
{
    assert!(h > 0.0, "finite-difference step must be positive");
    let mut max_div = 0.0_f64;
    let mut max_curl = 0.0_f64;
    for &p in points {
        // grad[i][j] = dB_j / dr_i
        let mut grad = [[0.0_f64; 3]; 3];
        for i in 0..3 {
            let mut up = p;
            let mut dn = p;
            up[i] += h;
            dn[i] -= h;
            let bu = field(up).0;
            let bd = field(dn).0;
            for j in 0..3 {
                grad[i][j] = (bu[j] - bd[j]) / (2.0 * h);
            }
        }
        let div = grad[0][0] + grad[1][1] + grad[2][2];
        let curl = [
            grad[1][2] - grad[2][1],
            grad[2][0] - grad[0][2],
            grad[0][1] - grad[1][0],
        ];
        max_div = max_div.max(div.abs());
        max_curl = max_curl.max(norm3(&curl));
    }
    MaxwellReport {
        sample_points: points.to_vec(),
        max_div,
        max_curl,
        step: h,
    }
}

/// The apparatus Hamiltonian `H(r, S) = sum_nu Phi_nu(r) T_nu`; at the
/// center it coincides with the encoded matrix.
pub fn local_hamiltonian(
    profiles: &FieldProfileSet,
    basis: &MultipoleBasis,
    r: [f64; 3],
) -> Result<Array2<C64>> {
    if profiles.coeffs.values.len() != basis.len() {
        return Err(Error::DimensionMismatch {
            expected: basis.len(),
            got: profiles.coeffs.values.len(),
        });
    }
    let n = basis.dimension();
    let mut acc = Array2::<C64>::zeros((n, n));
    for (nu, elem) in basis.elements().iter().enumerate() {
        let phi = profiles.profile(nu, r);
        acc = acc + elem.matrix.mapv(|z| z * C64::new(phi, 0.0));
    }
    Ok(acc)
}

/// Force along the gradient axis on a beam in the given spin state:
/// `F = -d<psi|H(r,S)|psi>/dr_axis` at the center, by central difference.
/// For an eigenstate of the encoded matrix with eigenvalue A_n this is -A_n.
///
/// The scalar coefficient a0 rides along through the nu = 0 profile, so all
/// beams share a uniform -a0 offset here. The spin-1/2 convention in
/// [`SwiftField::spin_half_forces`] excludes the scalar part; the two agree
/// after shifting by a0.
pub fn beam_force(
    profiles: &FieldProfileSet,
    basis: &MultipoleBasis,
    eigenstate: &Array1<C64>,
    h: f64,
) -> Result<f64> {
    if h <= 0.0 {
        return Err(Error::InvalidConfig(format!(
            "finite-difference step must be positive, got {h}"
        )));
    }
    if eigenstate.len() != basis.dimension() {
        return Err(Error::DimensionMismatch {
            expected: basis.dimension(),
            got: eigenstate.len(),
        });
    }
    let norm = linalg::vec_norm(eigenstate);
    if (norm - 1.0).abs() > 1e-10 {
        if norm == 0.0 {
            return Err(Error::ZeroVector);
        }
        return Err(Error::NotNormalized((norm - 1.0).abs()));
    }
    let axis = profiles.gradient_axis();
    let energy = |x: f64| -> Result<f64> {
        let mut r = [0.0; 3];
        r[axis] = x;
        let ham = local_hamiltonian(profiles, basis, r)?;
        Ok(linalg::expectation(&ham, eigenstate).re)
    };
    Ok(-(energy(h)? - energy(-h)?) / (2.0 * h))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::multipole::{build_basis, decompose, SpinSystem};
    use crate::observable::PhysicalConstants;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::{Rng, SeedableRng};

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn random_points(count: usize, seed: u64) -> Vec<[f64; 3]> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..count)
            .map(|_| {
                [
                    rng.random::<f64>() * 2.0 - 1.0,
                    rng.random::<f64>() * 2.0 - 1.0,
                    rng.random::<f64>() * 2.0 - 1.0,
                ]
            })
            .collect()
    }

    #[test]
    fn swift_field_center_boundary() {
        let field = SwiftField::new(FieldVector([0.0, 0.0, 2.0]), [0.5, 0.0, 0.0]).unwrap();
        assert_eq!(field.field_at([0.0, 0.0, 0.0]).0, [0.0, 0.0, 2.0]);
    }

    #[test]
    fn swift_field_axis_profile() {
        // B0 = (0,0,B), k = (kappa,0,0), r = (x,0,0): B0.r = 0 so the field
        // is just (1 + kappa x) B0.
        let b = 2.0;
        let kappa = 0.3;
        let field = SwiftField::new(FieldVector([0.0, 0.0, b]), [kappa, 0.0, 0.0]).unwrap();
        let x = 0.7;
        let got = field.field_at([x, 0.0, 0.0]).0;
        assert_abs_diff_eq!(got[0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(got[1], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(got[2], (1.0 + kappa * x) * b, epsilon = 1e-15);
    }

    #[test]
    fn swift_field_maxwell_residuals() {
        let field = SwiftField::new(FieldVector([1.0, 2.0, 2.0]), [2.0, -1.0, 0.0]).unwrap();
        let points = random_points(10, 3);
        let report = check_maxwell(|r| field.field_at(r), &points, 1e-3);
        assert!(report.max_div <= 1e-12, "div = {}", report.max_div);
        assert!(report.max_curl <= 1e-12, "curl = {}", report.max_curl);
    }

    #[test]
    fn parallel_gradient_rejected() {
        // k parallel to B0 means div B = 2 k.B0 != 0.
        let res = SwiftField::new(FieldVector([0.0, 0.0, 1.0]), [0.0, 0.0, 0.5]);
        assert!(matches!(res, Err(Error::FieldNotTransverse { .. })));
        // Direct finite-difference confirmation on the unchecked field.
        let raw = SwiftField {
            b0: FieldVector([0.0, 0.0, 1.0]),
            k: [0.0, 0.0, 0.5],
        };
        let report = check_maxwell(|r| raw.field_at(r), &random_points(5, 9), 1e-3);
        assert_abs_diff_eq!(report.max_div, 2.0 * 0.5 * 1.0, epsilon = 1e-9);
    }

    #[test]
    fn uniform_field_zero_residuals() {
        let report = check_maxwell(
            |_| FieldVector([0.3, -0.2, 0.9]),
            &random_points(10, 5),
            1e-3,
        );
        assert_eq!(report.max_div, 0.0);
        assert_eq!(report.max_curl, 0.0);
    }

    #[test]
    fn local_hamiltonian_center_and_doubling() {
        let basis = build_basis(SpinSystem::from_dimension(3).unwrap()).unwrap();
        let a = crate::testutil::random_hermitian(3, 17);
        let coeffs = decompose(&a, &basis).unwrap();
        let profiles = FieldProfileSet::new(coeffs);
        // Tuning conditions hold exactly for the linear model.
        for nu in 0..basis.len() {
            assert_eq!(
                profiles.profile(nu, [0.0, 0.0, 0.0]),
                profiles.coeffs().values[nu]
            );
        }
        let at_center = local_hamiltonian(&profiles, &basis, [0.0, 0.0, 0.0]).unwrap();
        assert!(linalg::max_diff(&at_center, a.entries()) < 1e-10);
        // Linear profiles double every coefficient at r1 = 1.
        let displaced = local_hamiltonian(&profiles, &basis, [1.0, 0.0, 0.0]).unwrap();
        let doubled = a.entries().mapv(|z| z * c(2.0, 0.0));
        assert!(linalg::max_diff(&displaced, &doubled) < 1e-10);
    }

    #[test]
    fn sigma3_position_dependent_levels() {
        // For A = sigma_3 the displaced Hamiltonian is (1+x) sigma_3 with
        // eigenvalues +-(1+x).
        let basis = build_basis(SpinSystem::new(1).unwrap()).unwrap();
        let a = crate::multipole::HermitianMatrix::new(array![
            [c(1.0, 0.0), c(0.0, 0.0)],
            [c(0.0, 0.0), c(-1.0, 0.0)]
        ])
        .unwrap();
        let coeffs = decompose(&a, &basis).unwrap();
        let profiles = FieldProfileSet::new(coeffs);
        let x = 0.35;
        let ham = local_hamiltonian(&profiles, &basis, [x, 0.0, 0.0]).unwrap();
        let pairs = linalg::hermitian_eigen(&ham).unwrap();
        assert_abs_diff_eq!(pairs[0].0, -(1.0 + x), epsilon = 1e-12);
        assert_abs_diff_eq!(pairs[1].0, 1.0 + x, epsilon = 1e-12);
    }

    #[test]
    fn force_on_sigma3_up_state() {
        let basis = build_basis(SpinSystem::new(1).unwrap()).unwrap();
        let a = crate::multipole::HermitianMatrix::new(array![
            [c(1.0, 0.0), c(0.0, 0.0)],
            [c(0.0, 0.0), c(-1.0, 0.0)]
        ])
        .unwrap();
        let coeffs = decompose(&a, &basis).unwrap();
        let profiles = FieldProfileSet::new(coeffs);
        let up = array![c(1.0, 0.0), c(0.0, 0.0)];
        let f = beam_force(&profiles, &basis, &up, DEFAULT_FD_STEP).unwrap();
        assert_abs_diff_eq!(f, -1.0, epsilon = 1e-12);
    }

    #[test]
    fn force_matches_negative_eigenvalue_random() {
        let n = 4;
        let basis = build_basis(SpinSystem::from_dimension(n).unwrap()).unwrap();
        let a = crate::testutil::random_hermitian(n, 23);
        let coeffs = decompose(&a, &basis).unwrap();
        let profiles = FieldProfileSet::new(coeffs);
        for (val, vec) in linalg::hermitian_eigen(a.entries()).unwrap() {
            let f = beam_force(&profiles, &basis, &vec, DEFAULT_FD_STEP).unwrap();
            assert_abs_diff_eq!(f, -val, epsilon = 1e-9);
        }
    }

    #[test]
    fn degenerate_beams_feel_coincident_forces() {
        // Equal eigenvalues separate into beams with equal force; the model
        // reports them without complaint.
        let basis = build_basis(SpinSystem::from_dimension(3).unwrap()).unwrap();
        let a = crate::multipole::HermitianMatrix::new(array![
            [c(2.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)],
            [c(0.0, 0.0), c(2.0, 0.0), c(0.0, 0.0)],
            [c(0.0, 0.0), c(0.0, 0.0), c(5.0, 0.0)]
        ])
        .unwrap();
        let coeffs = decompose(&a, &basis).unwrap();
        let profiles = FieldProfileSet::new(coeffs);
        let e1 = array![c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)];
        let e2 = array![c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)];
        let f1 = beam_force(&profiles, &basis, &e1, DEFAULT_FD_STEP).unwrap();
        let f2 = beam_force(&profiles, &basis, &e2, DEFAULT_FD_STEP).unwrap();
        assert_abs_diff_eq!(f1, -2.0, epsilon = 1e-11);
        assert_abs_diff_eq!(f2, -2.0, epsilon = 1e-11);
    }

    #[test]
    fn force_rejects_unnormalized_state() {
        let basis = build_basis(SpinSystem::new(1).unwrap()).unwrap();
        let coeffs = decompose(
            &crate::testutil::random_hermitian(2, 1),
            &basis,
        )
        .unwrap();
        let profiles = FieldProfileSet::new(coeffs);
        let long = array![c(1.0, 0.0), c(1.0, 0.0)];
        assert!(matches!(
            beam_force(&profiles, &basis, &long, 1e-3),
            Err(Error::NotNormalized(_))
        ));
    }

    #[test]
    fn traceless_spin_half_forces_are_antisymmetric() {
        // With no scalar part the two subbeams feel opposite forces.
        let basis = build_basis(SpinSystem::new(1).unwrap()).unwrap();
        for seed in 0..10 {
            let raw = crate::testutil::random_hermitian(2, 600 + seed);
            let trace = linalg::trace(raw.entries()) / c(2.0, 0.0);
            let traceless = crate::multipole::HermitianMatrix::new(
                raw.entries() - linalg::identity(2).mapv(|z| z * trace),
            )
            .unwrap();
            let coeffs = decompose(&traceless, &basis).unwrap();
            assert!(coeffs.values[0].abs() < 1e-12);
            let profiles = FieldProfileSet::new(coeffs);
            let forces: Vec<f64> = linalg::hermitian_eigen(traceless.entries())
                .unwrap()
                .iter()
                .map(|(_, v)| beam_force(&profiles, &basis, v, DEFAULT_FD_STEP).unwrap())
                .collect();
            assert_abs_diff_eq!(forces[0] + forces[1], 0.0, epsilon = 1e-11);
        }
    }

    #[test]
    fn scalar_offset_links_both_force_conventions() {
        // General-N forces include a0 (F1 = -A_n = -a0 -+ |a|); the Swift
        // spin-1/2 forces exclude it. Shifting by a0 reconciles the two.
        let consts = PhysicalConstants::default();
        let basis = build_basis(SpinSystem::new(1).unwrap()).unwrap();
        for seed in 0..10 {
            let a = crate::testutil::random_hermitian(2, 800 + seed);
            let coeffs = decompose(&a, &basis).unwrap();
            let a0 = coeffs.values[0];
            let spin_norm = (coeffs.values[1].powi(2)
                + coeffs.values[2].powi(2)
                + coeffs.values[3].powi(2))
            .sqrt();
            let b0 = FieldVector([
                -2.0 * coeffs.values[1],
                -2.0 * coeffs.values[2],
                -2.0 * coeffs.values[3],
            ]);
            let profiles = FieldProfileSet::new(coeffs);
            let pairs = linalg::hermitian_eigen(a.entries()).unwrap();
            // Ascending order: the minus state first.
            let f_minus = beam_force(&profiles, &basis, &pairs[0].1, DEFAULT_FD_STEP).unwrap();
            let f_plus = beam_force(&profiles, &basis, &pairs[1].1, DEFAULT_FD_STEP).unwrap();
            // Swift magnitude (hbar/2) g mu_B |B0| equals |a| in natural
            // units; with a unit gradient it is the spin part of the force.
            let swift = 0.5 * consts.hbar * consts.g * consts.mu_b * b0.norm();
            assert_abs_diff_eq!(swift, spin_norm, epsilon = 1e-12);
            assert_abs_diff_eq!(f_plus + a0, -swift, epsilon = 1e-10);
            assert_abs_diff_eq!(f_minus + a0, swift, epsilon = 1e-10);
        }
    }

    #[test]
    fn zeeman_levels_and_forces() {
        let consts = PhysicalConstants::default();
        let b0 = FieldVector([0.0, 0.0, 3.0]);
        let k = [0.25, 0.0, 0.0];
        let field = SwiftField::new(b0, k).unwrap();

        let (ep, em) = field.spin_half_levels([0.0, 0.0, 0.0], &consts);
        assert_abs_diff_eq!(ep, 1.5, epsilon = 1e-14);
        assert_abs_diff_eq!(em, -1.5, epsilon = 1e-14);

        // k.r = 1 doubles the levels.
        let (ep2, _) = field.spin_half_levels([4.0, 0.0, 0.0], &consts);
        assert_abs_diff_eq!(ep2, 3.0, epsilon = 1e-13);

        // Forces are -+ (hbar/2) B0 k, antisymmetric between the beams.
        let (fp, fm) = field.spin_half_forces(&consts, DEFAULT_FD_STEP);
        for axis in 0..3 {
            let want = -0.5 * consts.hbar * b0.norm() * k[axis];
            assert_abs_diff_eq!(fp[axis], want, epsilon = 1e-10);
            assert_abs_diff_eq!(fm[axis], -want, epsilon = 1e-10);
        }
    }
}

//! The measurement step: projection-postulate sampling on the maximally
//! mixed state, the run-count stopping rule, and outcome harvesting.
//!
//! The classical eigendecomposition in [`oracle_spectrum`] is the quarantined
//! stand-in for the physical apparatus. It fixes the outcome distribution the
//! engine samples from, but its eigenvalues never feed reported results
//! directly; the pipeline reports only what the sampler produced.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, C64};
use crate::multipole::HermitianMatrix;
use crate::rng::{substream, Domain};

/// Default relative tolerance for merging eigenvalues into one eigenspace.
pub const DEFAULT_DEGENERACY_TOL: f64 = 1e-9;

/// Eigenvalues below this probability are treated as unpopulated branches.
const PROB_FLOOR: f64 = 1e-15;

/// Distinct eigenvalues of a matrix with their eigenspace projectors.
///
/// `values` is strictly ascending; projectors are mutually orthogonal,
/// idempotent and sum to the identity; multiplicities sum to the dimension.
#[derive(Debug, Clone)]
pub struct Spectrum {
    values: Vec<f64>,
    projectors: Vec<Array2<C64>>,
    multiplicities: Vec<usize>,
    eigenvectors: Vec<Vec<Array1<C64>>>,
    dim: usize,
}

impl Spectrum {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.dim
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn projector(&self, n: usize) -> &Array2<C64> {
        &self.projectors[n]
    }

    pub fn multiplicities(&self) -> &[usize] {
        &self.multiplicities
    }

    /// Orthonormal basis of eigenspace `n`.
    pub fn eigenvectors(&self, n: usize) -> &[Array1<C64>] {
        &self.eigenvectors[n]
    }

    /// All `(eigenvalue, eigenvector)` pairs, eigenspace by eigenspace.
    pub fn eigenpairs(&self) -> impl Iterator<Item = (f64, &Array1<C64>)> {
        self.values
            .iter()
            .zip(&self.eigenvectors)
            .flat_map(|(&v, vecs)| vecs.iter().map(move |w| (v, w)))
    }
}

/// Full eigendecomposition of `A`, grouped into eigenspaces.
///
/// Eigenvalues closer than `degeneracy_tol * max|A_n|` are merged into a
/// single eigenspace with summed projector. This is classical plumbing: the
/// quantum pipeline consumes only outcomes sampled from it.
pub fn oracle_spectrum(a: &HermitianMatrix, degeneracy_tol: f64) -> Result<Spectrum> {
    let pairs = linalg::hermitian_eigen(a.entries())?;
    let dim = a.dim();
    let scale = pairs.iter().map(|(v, _)| v.abs()).fold(0.0, f64::max);
    let tol = degeneracy_tol * scale;

    let mut values = Vec::new();
    let mut projectors = Vec::new();
    let mut multiplicities = Vec::new();
    let mut eigenvectors: Vec<Vec<Array1<C64>>> = Vec::new();

    let mut cluster: Vec<(f64, Array1<C64>)> = Vec::new();
    let mut flush = |cluster: &mut Vec<(f64, Array1<C64>)>| {
        if cluster.is_empty() {
            return;
        }
        let m = cluster.len();
        let value = if m == 1 {
            cluster[0].0
        } else {
            cluster.iter().map(|(v, _)| v).sum::<f64>() / m as f64
        };
        let mut proj = Array2::<C64>::zeros((dim, dim));
        for (_, vec) in cluster.iter() {
            proj = proj + linalg::outer(vec);
        }
        values.push(value);
        projectors.push(proj);
        multiplicities.push(m);
        eigenvectors.push(cluster.drain(..).map(|(_, v)| v).collect());
    };

    for (val, vec) in pairs {
        if let Some(&(last, _)) = cluster.last().as_ref() {
            if val - last > tol {
                flush(&mut cluster);
            }
        }
        cluster.push((val, vec));
    }
    flush(&mut cluster);

    Ok(Spectrum {
        values,
        projectors,
        multiplicities,
        eigenvectors,
        dim,
    })
}

/// A valid quantum state: hermitean, unit trace, positive semidefinite
/// (eigenvalues above -1e-10).
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    entries: Array2<C64>,
}

impl DensityMatrix {
    pub fn new(entries: Array2<C64>) -> Result<Self> {
        let rho = Self::with_unit_trace(entries)?;
        let min = rho.min_eigenvalue()?;
        if min < -1e-10 {
            return Err(Error::InvalidDensityMatrix(format!(
                "negative eigenvalue {min:.3e}"
            )));
        }
        Ok(rho)
    }

    /// Hermiticity and unit-trace checks only; positivity is the caller's
    /// concern (finite-shot reconstructions may dip slightly negative).
    pub(crate) fn with_unit_trace(entries: Array2<C64>) -> Result<Self> {
        let h = HermitianMatrix::new(entries)?;
        let tr = linalg::trace(h.entries());
        if (tr.re - 1.0).abs() > 1e-10 || tr.im.abs() > 1e-10 {
            return Err(Error::InvalidDensityMatrix(format!(
                "trace = {} + {}i, expected 1",
                tr.re, tr.im
            )));
        }
        Ok(Self {
            entries: h.into_entries(),
        })
    }

    /// Construction from an expression that is a state by algebra
    /// (projections, normalized projectors); skips the eigenvalue check.
    pub(crate) fn from_valid(entries: Array2<C64>) -> Self {
        debug_assert!((linalg::trace(&entries).re - 1.0).abs() < 1e-8);
        Self { entries }
    }

    /// The homogeneous mixture I_N / N.
    pub fn maximally_mixed(n: usize) -> Self {
        Self {
            entries: linalg::identity(n).mapv(|z| z / C64::new(n as f64, 0.0)),
        }
    }

    /// Pure state |psi><psi|.
    pub fn pure(psi: &Array1<C64>) -> Result<Self> {
        let norm = linalg::vec_norm(psi);
        if norm == 0.0 {
            return Err(Error::ZeroVector);
        }
        if (norm - 1.0).abs() > 1e-10 {
            return Err(Error::NotNormalized((norm - 1.0).abs()));
        }
        Ok(Self {
            entries: linalg::outer(psi),
        })
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &Array2<C64> {
        &self.entries
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        let pairs = linalg::hermitian_eigen(&self.entries)?;
        Ok(pairs.first().map(|(v, _)| *v).unwrap_or(0.0))
    }
}

/// Outcome probabilities `p_n = Tr[rho P_n]`, clamped and renormalized
/// against rounding.
pub fn outcome_probabilities(rho: &DensityMatrix, spectrum: &Spectrum) -> Vec<f64> {
    let mut probs: Vec<f64> = (0..spectrum.len())
        .map(|n| {
            let p = linalg::trace_product(rho.entries(), spectrum.projector(n)).re;
            if p < PROB_FLOOR {
                0.0
            } else {
                p
            }
        })
        .collect();
    let total: f64 = probs.iter().sum();
    if total > 0.0 && (total - 1.0).abs() > f64::EPSILON {
        for p in &mut probs {
            *p /= total;
        }
    }
    probs
}

/// Result of a single application of the projection postulate.
#[derive(Debug, Clone)]
pub struct MeasurementOutcome {
    pub value: f64,
    pub eigenspace: usize,
    pub post_state: DensityMatrix,
}

/// One projective measurement: outcome `n` is drawn with `p_n = Tr[rho P_n]`
/// and the state collapses to `P_n rho P_n / p_n`.
pub fn measure_once(
    rho: &DensityMatrix,
    spectrum: &Spectrum,
    rng: &mut impl Rng,
) -> Result<MeasurementOutcome> {
    if rho.dim() != spectrum.dimension() {
        return Err(Error::DimensionMismatch {
            expected: spectrum.dimension(),
            got: rho.dim(),
        });
    }
    let probs = outcome_probabilities(rho, spectrum);
    let u: f64 = rng.random();
    let mut cumulative = 0.0;
    let mut chosen = None;
    for (n, &p) in probs.iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        cumulative += p;
        chosen = Some(n);
        if u < cumulative {
            break;
        }
    }
    // Projectors sum to the identity, so some branch is always populated.
    let n = chosen.expect("all outcome probabilities vanished");

    let p = spectrum.projector(n);
    let collapsed = p
        .dot(rho.entries())
        .dot(p)
        .mapv(|z| z / C64::new(probs[n], 0.0));
    Ok(MeasurementOutcome {
        value: spectrum.values()[n],
        eigenspace: n,
        post_state: DensityMatrix::from_valid(collapsed),
    })
}

/// Run budget: smallest N0 with `N ((N-1)/N)^N0 <= epsilon`, capped.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct StoppingRule {
    pub epsilon: f64,
    pub max_runs: u64,
}

impl StoppingRule {
    pub fn new(epsilon: f64, max_runs: u64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "epsilon must lie in (0, 1), got {epsilon}"
            )));
        }
        if max_runs == 0 {
            return Err(Error::InvalidConfig("max_runs must be at least 1".into()));
        }
        Ok(Self { epsilon, max_runs })
    }

    /// Union bound over all N eigenvalues: each is missed with probability
    /// at most ((N-1)/N)^N0, so N0 runs guarantee a whole-spectrum miss
    /// probability below epsilon.
    pub fn required_runs(&self, n: usize) -> u64 {
        assert!(n >= 2);
        let bound = |k: u64| n as f64 * missing_probability(n, k);
        let ratio = (n as f64 - 1.0) / n as f64;
        let mut k = ((self.epsilon / n as f64).ln() / ratio.ln()).ceil().max(0.0) as u64;
        while bound(k) > self.epsilon {
            k += 1;
        }
        while k > 0 && bound(k - 1) <= self.epsilon {
            k -= 1;
        }
        k
    }

    /// Planned run count and whether the cap truncated it.
    pub fn planned_runs(&self, n: usize) -> (u64, bool) {
        let required = self.required_runs(n);
        if required > self.max_runs {
            (self.max_runs, true)
        } else {
            (required, false)
        }
    }
}

/// Probability that one fixed nondegenerate eigenvalue is unseen after
/// `n0` uniform draws: `((N-1)/N)^N0`.
pub fn missing_probability(n: usize, n0: u64) -> f64 {
    assert!(n >= 2);
    ((n as f64 - 1.0) / n as f64).powf(n0 as f64)
}

/// One sampled outcome within an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Outcome {
    pub run: u64,
    pub value: f64,
    pub eigenspace: usize,
}

/// Ordered outcomes of a seeded experiment with per-eigenspace tallies.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeasurementRecord {
    pub seed: u64,
    pub outcomes: Vec<Outcome>,
    /// Tallies aligned with the spectrum's eigenspace order.
    pub counts: Vec<u64>,
    pub planned_runs: u64,
    /// True when max_runs truncated the stopping rule's requirement.
    pub capped: bool,
    /// True when every eigenspace was observed at least once.
    pub complete: bool,
    pub noise_sigma: f64,
}

fn run_single(
    spectrum: &Spectrum,
    rho: &DensityMatrix,
    seed: u64,
    run: u64,
    noise: Option<&Normal<f64>>,
) -> Result<Outcome> {
    let mut rng = substream(seed, Domain::MeasurementRun, run);
    let outcome = measure_once(rho, spectrum, &mut rng)?;
    let value = match noise {
        Some(dist) => outcome.value + dist.sample(&mut rng),
        None => outcome.value,
    };
    Ok(Outcome {
        run,
        value,
        eigenspace: outcome.eigenspace,
    })
}

fn assemble_record(
    spectrum: &Spectrum,
    seed: u64,
    planned: u64,
    capped: bool,
    noise_sigma: f64,
    outcomes: Vec<Outcome>,
) -> MeasurementRecord {
    let mut counts = vec![0u64; spectrum.len()];
    for o in &outcomes {
        counts[o.eigenspace] += 1;
    }
    let complete = counts.iter().all(|&c| c > 0);
    MeasurementRecord {
        seed,
        outcomes,
        counts,
        planned_runs: planned,
        capped,
        complete,
        noise_sigma,
    }
}

fn noise_dist(noise_sigma: f64) -> Result<Option<Normal<f64>>> {
    if noise_sigma < 0.0 || !noise_sigma.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "noise sigma must be finite and nonnegative, got {noise_sigma}"
        )));
    }
    Ok(if noise_sigma > 0.0 {
        Some(Normal::new(0.0, noise_sigma).expect("validated sigma"))
    } else {
        None
    })
}

/// Repeats [`measure_once`] on a freshly prepared homogeneous mixture for
/// the stopping rule's run count, recording every outcome. Hitting the run
/// cap with unseen eigenspaces leaves the record flagged incomplete rather
/// than silently truncated.
///
/// The completeness flag leans on the simulator's eigenspace bookkeeping.
/// An experimenter who does not know the multiplicities cannot certify
/// completeness from outcome counts alone; the stopping rule only bounds
/// the miss probability.
pub fn run_experiment(
    spectrum: &Spectrum,
    rule: &StoppingRule,
    seed: u64,
    noise_sigma: f64,
) -> Result<MeasurementRecord> {
    let (planned, capped) = rule.planned_runs(spectrum.dimension());
    let rho = DensityMatrix::maximally_mixed(spectrum.dimension());
    let noise = noise_dist(noise_sigma)?;
    let outcomes: Result<Vec<Outcome>> = (0..planned)
        .map(|run| run_single(spectrum, &rho, seed, run, noise.as_ref()))
        .collect();
    Ok(assemble_record(
        spectrum,
        seed,
        planned,
        capped,
        noise_sigma,
        outcomes?,
    ))
}

/// [`run_experiment`] with runs executed concurrently. Per-run substreams
/// make the record identical to the serial one; outcomes are merged in run
/// order.
pub fn run_experiment_par(
    spectrum: &Spectrum,
    rule: &StoppingRule,
    seed: u64,
    noise_sigma: f64,
) -> Result<MeasurementRecord> {
    let (planned, capped) = rule.planned_runs(spectrum.dimension());
    let rho = DensityMatrix::maximally_mixed(spectrum.dimension());
    let noise = noise_dist(noise_sigma)?;
    let outcomes: Result<Vec<Outcome>> = (0..planned)
        .into_par_iter()
        .map(|run| run_single(spectrum, &rho, seed, run, noise.as_ref()))
        .collect();
    Ok(assemble_record(
        spectrum,
        seed,
        planned,
        capped,
        noise_sigma,
        outcomes?,
    ))
}

/// One harvested eigenvalue estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HarvestedValue {
    pub value: f64,
    pub count: u64,
}

/// Outcome clusters, sorted ascending.
#[derive(Debug, Clone, Serialize)]
pub struct Harvest {
    pub clusters: Vec<HarvestedValue>,
    /// Set when some cluster's spread exceeds the clustering tolerance,
    /// i.e. noisy outcome groups ran into each other.
    pub overlap_warning: bool,
}

/// Groups outcomes within `cluster_tol` (0 means exact, bit-level grouping,
/// so noiseless estimates reproduce sampled eigenvalues exactly).
pub fn harvest_eigenvalues(record: &MeasurementRecord, cluster_tol: f64) -> Result<Harvest> {
    if record.outcomes.is_empty() {
        return Err(Error::InvalidConfig(
            "cannot harvest an empty measurement record".into(),
        ));
    }
    if cluster_tol < 0.0 {
        return Err(Error::InvalidConfig(format!(
            "cluster tolerance must be nonnegative, got {cluster_tol}"
        )));
    }
    let mut values: Vec<f64> = record.outcomes.iter().map(|o| o.value).collect();
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let mut clusters = Vec::new();
    let mut overlap_warning = false;
    let mut start = 0;
    for i in 1..=values.len() {
        let boundary = i == values.len()
            || if cluster_tol == 0.0 {
                values[i] != values[i - 1]
            } else {
                values[i] - values[i - 1] > cluster_tol
            };
        if boundary {
            let members = &values[start..i];
            let value = if cluster_tol == 0.0 {
                members[0]
            } else {
                members.iter().sum::<f64>() / members.len() as f64
            };
            if cluster_tol > 0.0 && members[members.len() - 1] - members[0] > cluster_tol {
                overlap_warning = true;
            }
            clusters.push(HarvestedValue {
                value,
                count: members.len() as u64,
            });
            start = i;
        }
    }
    Ok(Harvest {
        clusters,
        overlap_warning,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::random_hermitian;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn sigma3() -> HermitianMatrix {
        HermitianMatrix::new(array![
            [c(1.0, 0.0), c(0.0, 0.0)],
            [c(0.0, 0.0), c(-1.0, 0.0)]
        ])
        .unwrap()
    }

    #[test]
    fn spectrum_sigma3() {
        let spec = oracle_spectrum(&sigma3(), DEFAULT_DEGENERACY_TOL).unwrap();
        assert_eq!(spec.values(), &[-1.0, 1.0]);
        assert_eq!(spec.multiplicities(), &[1, 1]);
        let p_minus = array![[c(0.0, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(1.0, 0.0)]];
        let p_plus = array![[c(1.0, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(0.0, 0.0)]];
        assert!(linalg::max_diff(spec.projector(0), &p_minus) < 1e-13);
        assert!(linalg::max_diff(spec.projector(1), &p_plus) < 1e-13);
    }

    #[test]
    fn spectrum_symmetric_2x2() {
        let a = HermitianMatrix::new(array![
            [c(2.0, 0.0), c(1.0, 0.0)],
            [c(1.0, 0.0), c(2.0, 0.0)]
        ])
        .unwrap();
        let spec = oracle_spectrum(&a, DEFAULT_DEGENERACY_TOL).unwrap();
        assert_abs_diff_eq!(spec.values()[0], 1.0, epsilon = 1e-13);
        assert_abs_diff_eq!(spec.values()[1], 3.0, epsilon = 1e-13);
    }

    #[test]
    fn spectrum_degenerate_diagonal() {
        let a = HermitianMatrix::new(array![
            [c(2.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)],
            [c(0.0, 0.0), c(2.0, 0.0), c(0.0, 0.0)],
            [c(0.0, 0.0), c(0.0, 0.0), c(5.0, 0.0)]
        ])
        .unwrap();
        let spec = oracle_spectrum(&a, DEFAULT_DEGENERACY_TOL).unwrap();
        assert_eq!(spec.values(), &[2.0, 5.0]);
        assert_eq!(spec.multiplicities(), &[2, 1]);
    }

    #[test]
    fn spectrum_validity_random() {
        for seed in 0..10 {
            let n = 2 + (seed as usize % 5);
            let a = random_hermitian(n, 400 + seed);
            let spec = oracle_spectrum(&a, DEFAULT_DEGENERACY_TOL).unwrap();
            assert_eq!(spec.multiplicities().iter().sum::<usize>(), n);
            let mut sum = Array2::<C64>::zeros((n, n));
            let mut resolved = Array2::<C64>::zeros((n, n));
            for k in 0..spec.len() {
                let p = spec.projector(k);
                // Idempotent and orthogonal to the others.
                assert!(linalg::max_diff(&p.dot(p), p) < 1e-10);
                for l in 0..k {
                    let cross = p.dot(spec.projector(l));
                    assert!(linalg::max_abs(&cross) < 1e-10);
                }
                sum += p;
                resolved = resolved + p.mapv(|z| z * c(spec.values()[k], 0.0));
            }
            assert!(linalg::max_diff(&sum, &linalg::identity(n)) < 1e-10);
            assert!(linalg::max_diff(&resolved, a.entries()) < 1e-9);
        }
    }

    #[test]
    fn mixed_state_probabilities_are_multiplicity_over_n() {
        let a = HermitianMatrix::new(array![
            [c(2.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)],
            [c(0.0, 0.0), c(2.0, 0.0), c(0.0, 0.0)],
            [c(0.0, 0.0), c(0.0, 0.0), c(5.0, 0.0)]
        ])
        .unwrap();
        let spec = oracle_spectrum(&a, DEFAULT_DEGENERACY_TOL).unwrap();
        let rho = DensityMatrix::maximally_mixed(3);
        let probs = outcome_probabilities(&rho, &spec);
        assert_abs_diff_eq!(probs[0], 2.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(probs[1], 1.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn measure_eigenstate_is_certain() {
        let spec = oracle_spectrum(&sigma3(), DEFAULT_DEGENERACY_TOL).unwrap();
        // rho = P_0 / Tr[P_0]: measuring returns eigenvalue 0 with certainty.
        let rho = DensityMatrix::new(spec.projector(0).clone()).unwrap();
        let mut rng = substream(5, Domain::MeasurementRun, 0);
        for _ in 0..100 {
            let out = measure_once(&rho, &spec, &mut rng).unwrap();
            assert_eq!(out.value, -1.0);
        }
    }

    #[test]
    fn measure_mixed_state_is_fair() {
        let spec = oracle_spectrum(&sigma3(), DEFAULT_DEGENERACY_TOL).unwrap();
        let rho = DensityMatrix::maximally_mixed(2);
        let mut rng = substream(7, Domain::MeasurementRun, 0);
        let mut plus = 0u32;
        let shots = 20_000;
        for _ in 0..shots {
            if measure_once(&rho, &spec, &mut rng).unwrap().value > 0.0 {
                plus += 1;
            }
        }
        let freq = plus as f64 / shots as f64;
        assert!((freq - 0.5).abs() < 0.02, "freq = {freq}");
    }

    #[test]
    fn post_state_collapse_and_repeatability() {
        for seed in 0..5 {
            let a = random_hermitian(4, 900 + seed);
            let spec = oracle_spectrum(&a, DEFAULT_DEGENERACY_TOL).unwrap();
            let rho = DensityMatrix::maximally_mixed(4);
            let mut rng = substream(seed, Domain::MeasurementRun, 1);
            let out = measure_once(&rho, &spec, &mut rng).unwrap();
            // post = P rho P / Tr[P rho], here P/N over (1/N) = P/m.
            let n = out.eigenspace;
            let p = spec.projector(n);
            let expect = p.mapv(|z| z / c(spec.multiplicities()[n] as f64, 0.0));
            assert!(linalg::max_diff(out.post_state.entries(), &expect) < 1e-12);
            assert!(out.post_state.min_eigenvalue().unwrap() > -1e-10);
            // Repeatable: measuring the collapsed state returns the same
            // eigenvalue with certainty.
            for _ in 0..50 {
                let again = measure_once(&out.post_state, &spec, &mut rng).unwrap();
                assert_eq!(again.eigenspace, n);
                assert_eq!(again.value, out.value);
            }
        }
    }

    #[test]
    fn stopping_rule_matches_brute_force() {
        // Smallest k with N ((N-1)/N)^k <= eps, found by direct search.
        let brute = |n: usize, eps: f64| {
            let mut k = 0u64;
            while n as f64 * missing_probability(n, k) > eps {
                k += 1;
            }
            k
        };
        let rule = StoppingRule::new(1e-3, 1_000_000).unwrap();
        assert_eq!(rule.required_runs(2), 11);
        assert_eq!(brute(2, 1e-3), 11);
        let tight = StoppingRule::new(1e-6, 1_000_000).unwrap();
        assert_eq!(tight.required_runs(2), 21);
        for n in 2..=10 {
            for eps in [1e-2, 1e-6, 1e-9] {
                let rule = StoppingRule::new(eps, u64::MAX).unwrap();
                let n0 = rule.required_runs(n);
                assert_eq!(n0, brute(n, eps), "n = {n}, eps = {eps}");
                assert!(n as f64 * missing_probability(n, n0) <= eps);
                assert!(n as f64 * missing_probability(n, n0 - 1) > eps);
            }
        }
    }

    #[test]
    fn missing_probability_values() {
        assert_eq!(missing_probability(2, 10), 1.0 / 1024.0);
        assert_eq!(missing_probability(7, 0), 1.0);
        let p = missing_probability(5, 50);
        assert_abs_diff_eq!(p, 1.4272476927059638e-5, epsilon = 1e-18);
        // The exponential approximation exp(-N0/2s) brackets it:
        // exp(-N0/(N-1)) < p < exp(-N0/N).
        assert!((-50.0_f64 / 4.0).exp() < p);
        assert!(p < (-50.0_f64 / 5.0).exp());
    }

    #[test]
    fn experiment_replays_exactly() {
        let a = random_hermitian(4, 31);
        let spec = oracle_spectrum(&a, DEFAULT_DEGENERACY_TOL).unwrap();
        let rule = StoppingRule::new(1e-6, 1_000_000).unwrap();
        let r1 = run_experiment(&spec, &rule, 99, 0.0).unwrap();
        let r2 = run_experiment(&spec, &rule, 99, 0.0).unwrap();
        assert_eq!(r1, r2);
        let r3 = run_experiment(&spec, &rule, 100, 0.0).unwrap();
        assert_ne!(r1.outcomes, r3.outcomes);
    }

    #[test]
    fn parallel_experiment_matches_serial() {
        let a = random_hermitian(5, 77);
        let spec = oracle_spectrum(&a, DEFAULT_DEGENERACY_TOL).unwrap();
        let rule = StoppingRule::new(1e-9, 1_000_000).unwrap();
        for noise in [0.0, 1e-6] {
            let serial = run_experiment(&spec, &rule, 4, noise).unwrap();
            let parallel = run_experiment_par(&spec, &rule, 4, noise).unwrap();
            assert_eq!(serial, parallel);
        }
    }

    #[test]
    fn outcomes_are_oracle_values_bit_for_bit() {
        let a = random_hermitian(6, 55);
        let spec = oracle_spectrum(&a, DEFAULT_DEGENERACY_TOL).unwrap();
        let rule = StoppingRule::new(1e-6, 1_000_000).unwrap();
        let record = run_experiment(&spec, &rule, 12, 0.0).unwrap();
        for o in &record.outcomes {
            assert_eq!(o.value, spec.values()[o.eigenspace]);
        }
        assert_eq!(
            record.counts.iter().sum::<u64>(),
            record.outcomes.len() as u64
        );
    }

    #[test]
    fn capped_run_budget_is_flagged() {
        let a = random_hermitian(8, 3);
        let spec = oracle_spectrum(&a, DEFAULT_DEGENERACY_TOL).unwrap();
        // Requirement at N = 8, eps = 1e-6 far exceeds a cap of 3 runs.
        let rule = StoppingRule::new(1e-6, 3).unwrap();
        let record = run_experiment(&spec, &rule, 0, 0.0).unwrap();
        assert!(record.capped);
        assert_eq!(record.planned_runs, 3);
        assert!(!record.complete, "3 runs cannot cover 8 eigenspaces");
    }

    #[test]
    fn harvest_exact_grouping() {
        let spec = oracle_spectrum(&sigma3(), DEFAULT_DEGENERACY_TOL).unwrap();
        let rule = StoppingRule::new(1e-6, 1_000_000).unwrap();
        let record = run_experiment(&spec, &rule, 2, 0.0).unwrap();
        let harvest = harvest_eigenvalues(&record, 0.0).unwrap();
        assert_eq!(harvest.clusters.len(), 2);
        assert_eq!(harvest.clusters[0].value, -1.0);
        assert_eq!(harvest.clusters[1].value, 1.0);
        assert_eq!(
            harvest.clusters.iter().map(|c| c.count).sum::<u64>(),
            record.planned_runs
        );
        assert!(!harvest.overlap_warning);
    }

    #[test]
    fn harvest_noisy_clusters() {
        let a = HermitianMatrix::new(array![
            [c(2.0, 0.0), c(1.0, 0.0)],
            [c(1.0, 0.0), c(2.0, 0.0)]
        ])
        .unwrap();
        let spec = oracle_spectrum(&a, DEFAULT_DEGENERACY_TOL).unwrap();
        let rule = StoppingRule::new(1e-9, 1_000_000).unwrap();
        let record = run_experiment(&spec, &rule, 8, 1e-6).unwrap();
        let harvest = harvest_eigenvalues(&record, 1e-3).unwrap();
        assert_eq!(harvest.clusters.len(), 2);
        // Sample means concentrate within 5 sigma of the true values.
        assert!((harvest.clusters[0].value - 1.0).abs() < 5e-6);
        assert!((harvest.clusters[1].value - 3.0).abs() < 5e-6);
        assert!(!harvest.overlap_warning);
    }

    #[test]
    fn harvest_single_run() {
        let spec = oracle_spectrum(&sigma3(), DEFAULT_DEGENERACY_TOL).unwrap();
        let rule = StoppingRule::new(0.9, 1).unwrap();
        let record = run_experiment(&spec, &rule, 1, 0.0).unwrap();
        assert_eq!(record.outcomes.len(), 1);
        let harvest = harvest_eigenvalues(&record, 0.0).unwrap();
        assert_eq!(harvest.clusters.len(), 1);
    }

    #[test]
    fn density_matrix_validation() {
        // Trace != 1.
        assert!(DensityMatrix::new(linalg::identity(2)).is_err());
        // Negative eigenvalue.
        let bad = array![[c(1.5, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(-0.5, 0.0)]];
        assert!(matches!(
            DensityMatrix::new(bad),
            Err(Error::InvalidDensityMatrix(_))
        ));
        // Valid mixed state passes.
        assert!(DensityMatrix::new(
            linalg::identity(4).mapv(|z| z * c(0.25, 0.0))
        )
        .is_ok());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn probabilities_normalized(n in 2usize..=6, seed in any::<u64>()) {
            let a = random_hermitian(n, seed);
            let spec = oracle_spectrum(&a, DEFAULT_DEGENERACY_TOL).unwrap();
            let rho = DensityMatrix::maximally_mixed(n);
            let probs = outcome_probabilities(&rho, &spec);
            let total: f64 = probs.iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
            // And for a pure state in the middle of the spectrum.
            let pure = DensityMatrix::pure(&spec.eigenvectors(0)[0]).unwrap();
            let probs = outcome_probabilities(&pure, &spec);
            prop_assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}

//! End-to-end orchestration: matrix ingestion, the five-stage procedure,
//! and report emission.
//!
//! Reported eigenvalues always come from the sampled measurement outcomes;
//! the classical spectrum populates only verification columns (match flags,
//! fidelities, force expectations).

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::apparatus::{self, FieldProfileSet, SwiftField};
use crate::error::{Error, Result};
use crate::linalg::C64;
use crate::measurement::{self, Spectrum, StoppingRule};
use crate::multipole::{self, HermitianMatrix, SpinSystem};
use crate::observable::{self, FieldVector, PhysicalConstants};
use crate::rng::{substream, Domain};
use crate::tomography;

pub const SCHEMA: &str = "qsgdiag/1";

/// Every knob of a pipeline run.
#[derive(Debug, Clone, Copy)]
pub struct RunConfig {
    pub seed: u64,
    /// Whole-spectrum miss-probability bound for the stopping rule.
    pub epsilon: f64,
    pub max_runs: u64,
    /// Shots per multipole during tomography; 0 means exact evaluation.
    pub tomography_shots: u64,
    /// Gaussian readout noise on sampled eigenvalues (0 disables).
    pub noise_sigma: f64,
    /// Outcome clustering tolerance for harvesting (0 means exact grouping).
    pub cluster_tol: f64,
    /// Relative tolerance for merging eigenvalues into one eigenspace.
    pub degeneracy_tol: f64,
    pub constants: PhysicalConstants,
    /// Central-difference step for forces and Maxwell diagnostics.
    pub fd_step: f64,
    /// Run measurement and tomography loops on a thread pool. Identical
    /// output either way.
    pub parallel: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            epsilon: 1e-6,
            max_runs: 1_000_000,
            tomography_shots: 0,
            noise_sigma: 0.0,
            cluster_tol: 0.0,
            degeneracy_tol: 1e-9,
            constants: PhysicalConstants::default(),
            fd_step: 1e-3,
            parallel: false,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "epsilon must lie in (0, 1), got {}",
                self.epsilon
            )));
        }
        if self.max_runs == 0 {
            return Err(Error::InvalidConfig("max_runs must be at least 1".into()));
        }
        for (name, v) in [
            ("noise_sigma", self.noise_sigma),
            ("cluster_tol", self.cluster_tol),
            ("degeneracy_tol", self.degeneracy_tol),
        ] {
            if v < 0.0 || !v.is_finite() {
                return Err(Error::InvalidConfig(format!(
                    "{name} must be finite and nonnegative, got {v}"
                )));
            }
        }
        if self.fd_step <= 0.0 || !self.fd_step.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "fd_step must be positive, got {}",
                self.fd_step
            )));
        }
        self.constants.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Text,
    Json,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "text" => Ok(Self::Text),
            "json" => Ok(Self::Json),
            other => Err(Error::InvalidConfig(format!(
                "unknown format {other:?}, expected text or json"
            ))),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SpinInfo {
    pub s: f64,
    pub dimension: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct StoppingInfo {
    pub epsilon: f64,
    pub max_runs: u64,
    pub planned_runs: u64,
    pub capped: bool,
}

/// One harvested eigenvalue with its verification flag.
#[derive(Debug, Clone, Serialize)]
pub struct ClusterRow {
    pub value: f64,
    pub count: u64,
    /// Whether the estimate matches some classical eigenvalue (exact under
    /// zero noise). Verification column only.
    pub oracle_match: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct MeasurementSection {
    pub runs: u64,
    pub noise_sigma: f64,
    pub cluster_tol: f64,
    pub clusters: Vec<ClusterRow>,
    pub overlap_warning: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReconstructionRow {
    pub eigenspace: usize,
    /// Measured estimate for this subbeam (never the classical value).
    pub eigenvalue: f64,
    pub count: u64,
    pub multiplicity: usize,
    /// Fidelity of the reconstructed eigenstate against the classical
    /// eigenspace; verification column.
    pub fidelity: f64,
    /// ||A v - lambda v|| for the reconstructed dominant vector and the
    /// measured eigenvalue.
    pub residual: f64,
    pub min_eigenvalue: f64,
    pub dominant_vector: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ForceRow {
    pub eigenspace: usize,
    pub eigenvalue: f64,
    pub force: f64,
    pub expected: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ForceSection {
    pub fd_step: f64,
    pub rows: Vec<ForceRow>,
    pub max_residual: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SpinHalfSection {
    /// Scalar part a0 of the observable.
    pub a: f64,
    pub b0: [f64; 3],
    pub b0_norm: f64,
    pub k: [f64; 3],
    /// Zeeman levels E+- at the apparatus center.
    pub zeeman: [f64; 2],
    /// a + E+-: the eigenvalues via the field description.
    pub shifted_eigenvalues: [f64; 2],
    /// Closed-form eigenvalues; verification column.
    pub closed_form: [f64; 2],
    pub force_plus: [f64; 3],
    pub force_minus: [f64; 3],
    /// (hbar/2) g mu_B |B0| |k|.
    pub force_magnitude: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MaxwellSummary {
    pub points: usize,
    pub step: f64,
    pub max_div: f64,
    pub max_curl: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DiagonalizationReport {
    pub schema: &'static str,
    pub input_digest: String,
    pub seed: u64,
    pub spin: SpinInfo,
    pub coefficients: Vec<f64>,
    pub stopping: StoppingInfo,
    pub complete: bool,
    /// Sampled eigenvalue estimates, ascending.
    pub eigenvalues: Vec<f64>,
    pub measurement: MeasurementSection,
    pub reconstructions: Vec<ReconstructionRow>,
    pub forces: ForceSection,
    pub spin_half: Option<SpinHalfSection>,
    pub maxwell: Option<MaxwellSummary>,
    pub timing_ms: f64,
}

#[derive(Debug, Deserialize)]
struct MatrixFile {
    matrix: Vec<Vec<EntryRepr>>,
}

/// A matrix entry: plain number for real values or an [re, im] pair.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum EntryRepr {
    Real(f64),
    Pair([f64; 2]),
}

impl EntryRepr {
    fn complex(&self) -> C64 {
        match self {
            EntryRepr::Real(re) => C64::new(*re, 0.0),
            EntryRepr::Pair([re, im]) => C64::new(*re, *im),
        }
    }
}

/// Parses the JSON matrix format `{"matrix": [[[re, im], ...], ...]}`.
/// Plain numbers are accepted for real entries.
pub fn parse_matrix(text: &str) -> Result<HermitianMatrix> {
    let file: MatrixFile =
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    let rows = file.matrix.len();
    if rows == 0 {
        return Err(Error::Parse("matrix has no rows".into()));
    }
    let cols = file.matrix[0].len();
    for (i, row) in file.matrix.iter().enumerate() {
        if row.len() != cols {
            return Err(Error::Parse(format!(
                "row {i} has {} entries, expected {cols}",
                row.len()
            )));
        }
    }
    if rows != cols {
        return Err(Error::NotSquare { rows, cols });
    }
    let entries =
        Array2::from_shape_fn((rows, cols), |(i, j)| file.matrix[i][j].complex());
    HermitianMatrix::new(entries)
}

/// Reads and validates a matrix file.
pub fn load_matrix(path: impl AsRef<Path>) -> Result<HermitianMatrix> {
    let text = std::fs::read_to_string(path)?;
    parse_matrix(&text)
}

/// SHA-256 over the dimension and the raw bit patterns of all entries.
pub fn input_digest(a: &HermitianMatrix) -> String {
    let mut hasher = Sha256::new();
    hasher.update((a.dim() as u64).to_le_bytes());
    for z in a.entries().iter() {
        hasher.update(z.re.to_bits().to_le_bytes());
        hasher.update(z.im.to_bits().to_le_bytes());
    }
    let digest = hasher.finalize();
    let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
    format!("sha256:{hex}")
}

/// Transverse unit gradient for the Swift field: the cross product of B0
/// with the axis it is least aligned with (exactly perpendicular in
/// floating point), or x-hat for a vanishing field.
fn transverse_gradient(b0: &FieldVector) -> [f64; 3] {
    let b = b0.0;
    if b0.norm() == 0.0 {
        return [1.0, 0.0, 0.0];
    }
    let axis = (0..3)
        .min_by(|&i, &j| b[i].abs().partial_cmp(&b[j].abs()).unwrap())
        .unwrap();
    let e = {
        let mut e = [0.0; 3];
        e[axis] = 1.0;
        e
    };
    let k = [
        b[1] * e[2] - b[2] * e[1],
        b[2] * e[0] - b[0] * e[2],
        b[0] * e[1] - b[1] * e[0],
    ];
    let norm = (k[0] * k[0] + k[1] * k[1] + k[2] * k[2]).sqrt();
    [k[0] / norm, k[1] / norm, k[2] / norm]
}

/// Distinct tomography seed per eigenspace, derived from the master seed.
fn eigenspace_seed(seed: u64, eigenspace: usize) -> u64 {
    seed ^ (eigenspace as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

fn spin_half_section(
    a: &HermitianMatrix,
    obs: &observable::SpinObservable,
    config: &RunConfig,
) -> Result<(SpinHalfSection, MaxwellSummary)> {
    let (a0, b0) = observable::field_for_spin_half(obs)?;
    let k = transverse_gradient(&b0);
    let field = SwiftField::new(b0, k)?;
    let consts = config.constants;
    let (e_plus, e_minus) = field.spin_half_levels([0.0; 3], &consts);
    let (f_plus, f_minus) = field.spin_half_forces(&consts, config.fd_step);
    let closed = observable::closed_form_2x2(a)?;

    let mut rng = substream(config.seed, Domain::FieldSamples, 0);
    use rand::Rng;
    let points: Vec<[f64; 3]> = (0..100)
        .map(|_| {
            [
                rng.random::<f64>() * 2.0 - 1.0,
                rng.random::<f64>() * 2.0 - 1.0,
                rng.random::<f64>() * 2.0 - 1.0,
            ]
        })
        .collect();
    let maxwell = apparatus::check_maxwell(|r| field.field_at(r), &points, config.fd_step);

    let k_norm = (k[0] * k[0] + k[1] * k[1] + k[2] * k[2]).sqrt();
    Ok((
        SpinHalfSection {
            a: a0,
            b0: b0.0,
            b0_norm: b0.norm(),
            k,
            zeeman: [e_plus, e_minus],
            shifted_eigenvalues: [
                observable::shift_relation(e_plus, a0),
                observable::shift_relation(e_minus, a0),
            ],
            closed_form: [closed.0, closed.1],
            force_plus: f_plus,
            force_minus: f_minus,
            force_magnitude: 0.5 * consts.hbar * consts.g * consts.mu_b * b0.norm() * k_norm,
        },
        MaxwellSummary {
            points: maxwell.sample_points.len(),
            step: maxwell.step,
            max_div: maxwell.max_div,
            max_curl: maxwell.max_curl,
        },
    ))
}

fn force_section(
    spectrum: &Spectrum,
    profiles: &FieldProfileSet,
    basis: &multipole::MultipoleBasis,
    fd_step: f64,
) -> Result<ForceSection> {
    let mut rows = Vec::new();
    let mut max_residual = 0.0_f64;
    for n in 0..spectrum.len() {
        for vec in spectrum.eigenvectors(n) {
            let value = spectrum.values()[n];
            let force = apparatus::beam_force(profiles, basis, vec, fd_step)?;
            let expected = -value;
            let residual = (force - expected).abs();
            max_residual = max_residual.max(residual);
            rows.push(ForceRow {
                eigenspace: n,
                eigenvalue: value,
                force,
                expected,
                residual,
            });
        }
    }
    Ok(ForceSection {
        fd_step,
        rows,
        max_residual,
    })
}

/// Runs the whole procedure on a validated matrix.
pub fn diagonalize_quantum(
    a: &HermitianMatrix,
    config: &RunConfig,
) -> Result<DiagonalizationReport> {
    config.validate()?;
    let start = Instant::now();
    let n = a.dim();

    // Standard form: multipole basis and coefficients.
    let spin = SpinSystem::from_dimension(n)?.with_hbar(config.constants.hbar);
    let basis = multipole::build_basis(spin)?;
    let obs = observable::to_observable_with_basis(a, &basis, config.constants)?;

    // Apparatus: tuned linear profiles encode the observable.
    let profiles = FieldProfileSet::new(obs.coeffs.clone());

    // Classical stand-in for the physical beam splitter (verification only).
    let spectrum = measurement::oracle_spectrum(a, config.degeneracy_tol)?;
    let forces = force_section(&spectrum, &profiles, &basis, config.fd_step)?;

    let (spin_half, maxwell) = if n == 2 {
        let (sh, mx) = spin_half_section(a, &obs, config)?;
        (Some(sh), Some(mx))
    } else {
        (None, None)
    };

    // Measurement: sample the projection postulate on the mixed state.
    let rule = StoppingRule::new(config.epsilon, config.max_runs)?;
    let record = if config.parallel {
        measurement::run_experiment_par(&spectrum, &rule, config.seed, config.noise_sigma)?
    } else {
        measurement::run_experiment(&spectrum, &rule, config.seed, config.noise_sigma)?
    };
    let harvest = measurement::harvest_eigenvalues(&record, config.cluster_tol)?;

    // A cluster matches classically if it lands within the readout slack of
    // some eigenvalue; exact (bit-level) under zero noise.
    let scale = spectrum
        .values()
        .iter()
        .fold(0.0_f64, |m, v| m.max(v.abs()));
    let match_tol = if config.noise_sigma == 0.0 && config.cluster_tol == 0.0 {
        0.0
    } else {
        config.cluster_tol + 5.0 * config.noise_sigma + 1e-12 * scale
    };
    let clusters: Vec<ClusterRow> = harvest
        .clusters
        .iter()
        .map(|c| ClusterRow {
            value: c.value,
            count: c.count,
            oracle_match: spectrum
                .values()
                .iter()
                .any(|v| (v - c.value).abs() <= match_tol),
        })
        .collect();
    let eigenvalues: Vec<f64> = clusters.iter().map(|c| c.value).collect();

    // Eigenstates: tomography on each observed subbeam.
    let mut reconstructions = Vec::new();
    for eigenspace in 0..spectrum.len() {
        let count = record.counts[eigenspace];
        if count == 0 {
            continue;
        }
        // Measured estimate for this subbeam: its outcomes (identical bits
        // under zero noise, averaged otherwise).
        let values: Vec<f64> = record
            .outcomes
            .iter()
            .filter(|o| o.eigenspace == eigenspace)
            .map(|o| o.value)
            .collect();
        let eigenvalue = if config.noise_sigma == 0.0 {
            values[0]
        } else {
            values.iter().sum::<f64>() / values.len() as f64
        };

        let rho = tomography::postselect(&spectrum, eigenspace)?;
        let tomo_seed = eigenspace_seed(config.seed, eigenspace);
        let estimates = if config.parallel {
            tomography::estimate_expectations_par(&rho, &basis, config.tomography_shots, tomo_seed)?
        } else {
            tomography::estimate_expectations(&rho, &basis, config.tomography_shots, tomo_seed)?
        };
        let state =
            tomography::reconstruct_state(&estimates, &basis, Some((&spectrum, eigenspace)))?;
        let residual = tomography::eigenvector_residual(a, eigenvalue, &state.dominant_vector)?;
        reconstructions.push(ReconstructionRow {
            eigenspace,
            eigenvalue,
            count,
            multiplicity: spectrum.multiplicities()[eigenspace],
            fidelity: state.fidelity_vs_oracle.unwrap_or(f64::NAN),
            residual,
            min_eigenvalue: state.min_eigenvalue,
            dominant_vector: state.dominant_vector.iter().map(|z| [z.re, z.im]).collect(),
        });
    }

    Ok(DiagonalizationReport {
        schema: SCHEMA,
        input_digest: input_digest(a),
        seed: config.seed,
        spin: SpinInfo {
            s: spin.s(),
            dimension: n,
        },
        coefficients: obs.coeffs.values.clone(),
        stopping: StoppingInfo {
            epsilon: config.epsilon,
            max_runs: config.max_runs,
            planned_runs: record.planned_runs,
            capped: record.capped,
        },
        complete: record.complete,
        eigenvalues,
        measurement: MeasurementSection {
            runs: record.planned_runs,
            noise_sigma: config.noise_sigma,
            cluster_tol: config.cluster_tol,
            clusters,
            overlap_warning: harvest.overlap_warning,
        },
        reconstructions,
        forces,
        spin_half,
        maxwell,
        timing_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}

/// Stable, machine-diffable JSON rendering.
pub fn render_json(report: &DiagonalizationReport) -> Result<String> {
    let mut s = serde_json::to_string_pretty(report)?;
    s.push('\n');
    Ok(s)
}

/// Human-readable rendering with the five stages labeled.
pub fn render_text(report: &DiagonalizationReport) -> String {
    let mut out = String::new();
    let mut line = |s: String| {
        out.push_str(&s);
        out.push('\n');
    };
    line(format!("qsgdiag report (schema {})", report.schema));
    line(format!("input: {}", report.input_digest));
    line(format!("seed: {}", report.seed));
    line(String::new());
    line("Step 1: standard form".into());
    line(format!(
        "  spin s = {} (N = {}), {} multipole coefficients",
        report.spin.s,
        report.spin.dimension,
        report.coefficients.len()
    ));
    let coeffs: Vec<String> = report.coefficients.iter().map(|v| format!("{v:.6}")).collect();
    line(format!("  a = [{}]", coeffs.join(", ")));
    line(String::new());
    line("Step 2: observable".into());
    match &report.spin_half {
        Some(sh) => {
            line(format!(
                "  spin-1/2 field: a = {:.6}, B0 = ({:.6}, {:.6}, {:.6}), |B0| = {:.6}",
                sh.a, sh.b0[0], sh.b0[1], sh.b0[2], sh.b0_norm
            ));
            line(format!(
                "  field-path eigenvalues a + E+-: {:.12}, {:.12}",
                sh.shifted_eigenvalues[0], sh.shifted_eigenvalues[1]
            ));
            line(format!(
                "  closed form (check): {:.12}, {:.12}",
                sh.closed_form[0], sh.closed_form[1]
            ));
        }
        None => line("  general-N observable encoded by multipole coefficients".into()),
    }
    line(String::new());
    line("Step 3: apparatus".into());
    line(format!(
        "  linear profiles tuned at the center; force check over {} eigenvectors: max |F1 + A_n| = {:.3e}",
        report.forces.rows.len(),
        report.forces.max_residual
    ));
    if let Some(sh) = &report.spin_half {
        line(format!(
            "  Swift gradient k = ({:.6}, {:.6}, {:.6}), beam forces -+{:.6} along k",
            sh.k[0], sh.k[1], sh.k[2], sh.force_magnitude
        ));
    }
    if let Some(mx) = &report.maxwell {
        line(format!(
            "  Maxwell residuals over {} points (h = {:.1e}): div {:.3e}, curl {:.3e}",
            mx.points, mx.step, mx.max_div, mx.max_curl
        ));
    }
    line(String::new());
    line("Step 4: measurement".into());
    line(format!(
        "  stopping rule: epsilon = {:.3e} -> {} runs (cap {}){}",
        report.stopping.epsilon,
        report.stopping.planned_runs,
        report.stopping.max_runs,
        if report.stopping.capped { " [capped]" } else { "" }
    ));
    line(format!("  complete: {}", report.complete));
    line("  sampled eigenvalues:".into());
    for c in &report.measurement.clusters {
        line(format!(
            "    {:+.12}  (count {}, oracle match: {})",
            c.value, c.count, c.oracle_match
        ));
    }
    if report.measurement.overlap_warning {
        line("  warning: outcome clusters overlap under readout noise".into());
    }
    line(String::new());
    line("Step 5: eigenstates".into());
    for r in &report.reconstructions {
        line(format!(
            "  eigenspace {}: eigenvalue {:+.12}, multiplicity {}, fidelity {:.6}, residual {:.3e}",
            r.eigenspace, r.eigenvalue, r.multiplicity, r.fidelity, r.residual
        ));
    }
    line(String::new());
    line(format!("elapsed: {:.3} ms", report.timing_ms));
    out
}

/// Writes the report in the chosen format.
pub fn emit_report(
    report: &DiagonalizationReport,
    format: ReportFormat,
    dest: &mut impl Write,
) -> Result<()> {
    let rendered = match format {
        ReportFormat::Json => render_json(report)?,
        ReportFormat::Text => render_text(report),
    };
    dest.write_all(rendered.as_bytes())?;
    Ok(())
}

/// JSON dump of the multipole basis with scale records, for the `basis`
/// subcommand.
pub fn basis_json(spin: SpinSystem) -> Result<String> {
    #[derive(Serialize)]
    struct ElementOut {
        rank: usize,
        components: Vec<u8>,
        scale: f64,
        matrix: Vec<Vec<[f64; 2]>>,
    }
    #[derive(Serialize)]
    struct BasisOut {
        schema: &'static str,
        s: f64,
        dimension: usize,
        hbar: f64,
        elements: Vec<ElementOut>,
    }
    let basis = multipole::build_basis(spin)?;
    let elements = basis
        .elements()
        .iter()
        .map(|e| ElementOut {
            rank: e.index.rank,
            components: e.index.components.clone(),
            scale: e.scale,
            matrix: e
                .matrix
                .rows()
                .into_iter()
                .map(|row| row.iter().map(|z| [z.re, z.im]).collect())
                .collect(),
        })
        .collect();
    let out = BasisOut {
        schema: SCHEMA,
        s: spin.s(),
        dimension: spin.dimension(),
        hbar: spin.hbar(),
        elements,
    };
    let mut s = serde_json::to_string_pretty(&out)?;
    s.push('\n');
    Ok(s)
}

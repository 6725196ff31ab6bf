//! Spin operators and the orthonormal hermitean multipole basis.
//!
//! For spin s (dimension N = 2s+1) the N^2 multipole operators are built
//! from symmetrized products of the spin components, orthonormalized under
//! the trace inner product `<X, Y> = (1/N) Tr[X Y]`. Every hermitean N x N
//! matrix then has a unique real coefficient vector in this basis, which is
//! the standard form everything downstream works with.

use std::collections::HashMap;

use ndarray::Array2;
use num_complex::Complex64 as C64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg;

/// Relative hermiticity tolerance for matrix inputs.
pub const HERMITICITY_TOL: f64 = 1e-12;

/// Residual imaginary part allowed in coefficients of a hermitean matrix.
pub const COEFF_IMAG_TOL: f64 = 1e-10;

/// A candidate multipole whose orthogonalized residual falls below this
/// fraction of its raw norm is linearly dependent on earlier elements.
const DEPENDENT_TOL: f64 = 1e-8;

/// A spin quantum number s with its Hilbert-space dimension N = 2s + 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpinSystem {
    twice_s: u32,
    hbar: f64,
}

impl SpinSystem {
    /// System with spin `twice_s / 2` and hbar = 1.
    pub fn new(twice_s: u32) -> Result<Self> {
        if twice_s == 0 {
            return Err(Error::InvalidSpin(
                "spin must be at least 1/2 (N >= 2)".into(),
            ));
        }
        Ok(Self { twice_s, hbar: 1.0 })
    }

    /// Infer the spin from a Hilbert-space dimension via N = 2s + 1.
    pub fn from_dimension(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidSpin(format!(
                "dimension {n} is below the minimum of 2"
            )));
        }
        Self::new((n - 1) as u32)
    }

    pub fn with_hbar(mut self, hbar: f64) -> Self {
        self.hbar = hbar;
        self
    }

    pub fn s(&self) -> f64 {
        self.twice_s as f64 / 2.0
    }

    pub fn twice_s(&self) -> u32 {
        self.twice_s
    }

    pub fn dimension(&self) -> usize {
        self.twice_s as usize + 1
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }
}

/// A validated N x N complex hermitean matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianMatrix {
    entries: Array2<C64>,
}

impl HermitianMatrix {
    /// Validates squareness and hermiticity (relative tolerance
    /// [`HERMITICITY_TOL`]); violating inputs are rejected, not symmetrized.
    pub fn new(entries: Array2<C64>) -> Result<Self> {
        let (rows, cols) = (entries.nrows(), entries.ncols());
        if rows != cols {
            return Err(Error::NotSquare { rows, cols });
        }
        if rows < 1 {
            return Err(Error::NotSquare { rows, cols });
        }
        let scale = linalg::max_abs(&entries).max(1e-300);
        let (row, col, dev) = linalg::hermiticity_deviation(&entries);
        let tolerance = HERMITICITY_TOL * scale;
        if dev > tolerance {
            return Err(Error::NotHermitian {
                row,
                col,
                deviation: dev,
                tolerance,
            });
        }
        Ok(Self { entries })
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &Array2<C64> {
        &self.entries
    }

    pub fn into_entries(self) -> Array2<C64> {
        self.entries
    }
}

/// The spin component matrices S1, S2, S3 in the S3 eigenbasis
/// (descending magnetic quantum number).
#[derive(Debug, Clone)]
pub struct SpinOperators {
    spin: SpinSystem,
    components: [Array2<C64>; 3],
}

/// Standard angular-momentum matrices satisfying `[S1, S2] = i hbar S3`
/// and cyclic permutations, with S3 diagonal.
pub fn spin_operators(spin: SpinSystem) -> SpinOperators {
    let n = spin.dimension();
    let s = spin.s();
    let hbar = spin.hbar();

    let mut s3 = Array2::<C64>::zeros((n, n));
    let mut s_plus = Array2::<C64>::zeros((n, n));
    let mut s_minus = Array2::<C64>::zeros((n, n));
    for i in 0..n {
        let m = s - i as f64;
        s3[[i, i]] = C64::new(hbar * m, 0.0);
        // S+ |s,m> = hbar sqrt(s(s+1) - m(m+1)) |s,m+1>, row i-1.
        if i > 0 {
            s_plus[[i - 1, i]] = C64::new(hbar * (s * (s + 1.0) - m * (m + 1.0)).sqrt(), 0.0);
        }
        if i + 1 < n {
            s_minus[[i + 1, i]] = C64::new(hbar * (s * (s + 1.0) - m * (m - 1.0)).sqrt(), 0.0);
        }
    }
    let s1 = (&s_plus + &s_minus).mapv(|z| 0.5 * z);
    let s2 = (&s_plus - &s_minus).mapv(|z| C64::new(0.0, -0.5) * z);

    SpinOperators {
        spin,
        components: [s1, s2, s3],
    }
}

impl SpinOperators {
    pub fn spin(&self) -> SpinSystem {
        self.spin
    }

    /// Component j in {1, 2, 3}.
    pub fn component(&self, j: u8) -> Result<&Array2<C64>> {
        if !(1..=3).contains(&j) {
            return Err(Error::InvalidComponent(j));
        }
        Ok(&self.components[j as usize - 1])
    }

    pub fn s1(&self) -> &Array2<C64> {
        &self.components[0]
    }

    pub fn s2(&self) -> &Array2<C64> {
        &self.components[1]
    }

    pub fn s3(&self) -> &Array2<C64> {
        &self.components[2]
    }

    /// Average of `S_{j1} ... S_{ja}` over all orderings of the factors.
    ///
    /// The empty product is the identity. Ranks above 2s are rejected:
    /// such products are linearly dependent on lower ranks.
    pub fn symmetrized_product(&self, components: &[u8]) -> Result<Array2<C64>> {
        let max = self.spin.twice_s() as usize;
        if components.len() > max {
            return Err(Error::RankTooHigh {
                rank: components.len(),
                max,
            });
        }
        let mut counts = [0usize; 3];
        for &j in components {
            if !(1..=3).contains(&j) {
                return Err(Error::InvalidComponent(j));
            }
            counts[j as usize - 1] += 1;
        }
        let mut memo = HashMap::new();
        Ok(self.sym_rec(counts, &mut memo))
    }

    // Sym(M) = (1/|M|) sum_j count_j * S_j * Sym(M - j); averaging over
    // distinct first factors equals averaging over all a! orderings.
    fn sym_rec(
        &self,
        counts: [usize; 3],
        memo: &mut HashMap<[usize; 3], Array2<C64>>,
    ) -> Array2<C64> {
        if let Some(m) = memo.get(&counts) {
            return m.clone();
        }
        let total: usize = counts.iter().sum();
        let n = self.spin.dimension();
        let result = if total == 0 {
            linalg::identity(n)
        } else {
            let mut acc = Array2::<C64>::zeros((n, n));
            for j in 0..3 {
                if counts[j] == 0 {
                    continue;
                }
                let mut rest = counts;
                rest[j] -= 1;
                let tail = self.sym_rec(rest, memo);
                let weight = C64::new(counts[j] as f64 / total as f64, 0.0);
                acc = acc + self.components[j].dot(&tail).mapv(|z| z * weight);
            }
            acc
        };
        memo.insert(counts, result.clone());
        result
    }
}

/// Collective index nu = (a; j1 <= ... <= ja) of a multipole operator.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MultipoleIndex {
    pub rank: usize,
    pub components: Vec<u8>,
}

impl std::fmt::Display for MultipoleIndex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.rank == 0 {
            write!(f, "T(0)")
        } else {
            let joined: Vec<String> = self.components.iter().map(|j| j.to_string()).collect();
            write!(f, "T({};{})", self.rank, joined.join(","))
        }
    }
}

/// One orthonormalized basis element together with the normalization it
/// took to get there.
#[derive(Debug, Clone)]
pub struct MultipoleElement {
    pub index: MultipoleIndex,
    pub matrix: Array2<C64>,
    /// Norm of the orthogonalized residual of the raw symmetrized product
    /// under `(1/N) Tr`; the raw residual is `scale * matrix`.
    pub scale: f64,
}

/// Ordered orthonormal hermitean operator basis {T_nu} for a spin system.
///
/// Ordering is rank-major, then lexicographic in the sorted component
/// indices, so coefficient vectors are reproducible across runs.
#[derive(Debug, Clone)]
pub struct MultipoleBasis {
    spin: SpinSystem,
    elements: Vec<MultipoleElement>,
}

/// Real coefficients a_nu of a hermitean matrix in a multipole basis.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoefficientVector {
    pub spin: SpinSystem,
    pub values: Vec<f64>,
}

fn hs_inner(a: &Array2<C64>, b: &Array2<C64>) -> f64 {
    let n = a.nrows() as f64;
    linalg::trace_product(a, b).re / n
}

fn hs_norm(a: &Array2<C64>) -> f64 {
    hs_inner(a, a).max(0.0).sqrt()
}

/// All nondecreasing index tuples of the given length over {1, 2, 3},
/// in lexicographic order.
fn sorted_tuples(len: usize) -> Vec<Vec<u8>> {
    let mut out = Vec::new();
    let mut current = Vec::with_capacity(len);
    fn rec(len: usize, start: u8, current: &mut Vec<u8>, out: &mut Vec<Vec<u8>>) {
        if current.len() == len {
            out.push(current.clone());
            return;
        }
        for j in start..=3 {
            current.push(j);
            rec(len, j, current, out);
            current.pop();
        }
    }
    rec(len, 1, &mut current, &mut out);
    out
}

/// Builds the full N^2-element multipole basis for a spin system.
///
/// Within each rank the raw symmetrized products are orthogonalized against
/// everything already in the basis (which subtracts both the trace and any
/// lower-rank admixture) and normalized so `(1/N) Tr[T_nu T_nu'] =
/// delta_nunu'`. Exactly 2a+1 independent elements must survive per rank;
/// anything else aborts.
pub fn build_basis(spin: SpinSystem) -> Result<MultipoleBasis> {
    let n = spin.dimension();
    let ops = spin_operators(spin);

    let mut elements = vec![MultipoleElement {
        index: MultipoleIndex {
            rank: 0,
            components: vec![],
        },
        matrix: linalg::identity(n),
        scale: 1.0,
    }];

    for rank in 1..=spin.twice_s() as usize {
        let expected = 2 * rank + 1;
        let mut survivors = 0usize;
        for tuple in sorted_tuples(rank) {
            let raw = ops.symmetrized_product(&tuple)?;
            let raw_norm = hs_norm(&raw);
            let mut cand = raw;
            for _ in 0..2 {
                for elem in &elements {
                    let overlap = hs_inner(&elem.matrix, &cand);
                    cand = cand - elem.matrix.mapv(|z| z * overlap);
                }
            }
            let norm = hs_norm(&cand);
            if norm > DEPENDENT_TOL * raw_norm {
                elements.push(MultipoleElement {
                    index: MultipoleIndex {
                        rank,
                        components: tuple,
                    },
                    matrix: cand.mapv(|z| z / norm),
                    scale: norm,
                });
                survivors += 1;
            }
        }
        if survivors != expected {
            return Err(Error::BasisConstruction {
                rank,
                got: survivors,
                expected,
            });
        }
    }

    debug_assert_eq!(elements.len(), n * n);
    Ok(MultipoleBasis { spin, elements })
}

impl MultipoleBasis {
    pub fn spin(&self) -> SpinSystem {
        self.spin
    }

    pub fn dimension(&self) -> usize {
        self.spin.dimension()
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn elements(&self) -> &[MultipoleElement] {
        &self.elements
    }

    pub fn matrix(&self, nu: usize) -> &Array2<C64> {
        &self.elements[nu].matrix
    }

    pub fn scale_records(&self) -> Vec<f64> {
        self.elements.iter().map(|e| e.scale).collect()
    }
}

/// Expansion coefficients `a_nu = (1/N) Tr[A T_nu]` of a hermitean matrix.
pub fn decompose(a: &HermitianMatrix, basis: &MultipoleBasis) -> Result<CoefficientVector> {
    let n = basis.dimension();
    if a.dim() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: a.dim(),
        });
    }
    let scale = linalg::max_abs(a.entries()).max(1.0);
    let mut values = Vec::with_capacity(basis.len());
    for elem in basis.elements() {
        let coeff = linalg::trace_product(a.entries(), &elem.matrix) / C64::new(n as f64, 0.0);
        if coeff.im.abs() > COEFF_IMAG_TOL * scale {
            return Err(Error::NotHermitian {
                row: 0,
                col: 0,
                deviation: coeff.im.abs(),
                tolerance: COEFF_IMAG_TOL * scale,
            });
        }
        values.push(coeff.re);
    }
    Ok(CoefficientVector {
        spin: basis.spin(),
        values,
    })
}

/// Inverse of [`decompose`]: `A = sum_nu a_nu T_nu`.
pub fn reconstruct(coeffs: &CoefficientVector, basis: &MultipoleBasis) -> Result<HermitianMatrix> {
    if coeffs.values.len() != basis.len() {
        return Err(Error::DimensionMismatch {
            expected: basis.len(),
            got: coeffs.values.len(),
        });
    }
    let n = basis.dimension();
    let mut acc = Array2::<C64>::zeros((n, n));
    for (a, elem) in coeffs.values.iter().zip(basis.elements()) {
        acc = acc + elem.matrix.mapv(|z| z * C64::new(*a, 0.0));
    }
    HermitianMatrix::new(acc)
}

//! From a solved retrodiction game to an error operation.
//!
//! A solution pair is an entangled Schmidt state |Psi_eta> together with the
//! PVM basis (|p_k>) Alice measures at the end. When the pair lets Alice name
//! the king's outcome for every measurement family, the branch vectors
//! (I (x) L_k)|Psi_eta> = c |p_k> define Kraus operators L_k on the kingdom
//! space with an orthogonal Gram matrix, and each outcome operator M_i^(J)
//! expands over a disjoint subset of the L_k. This module derives the L_k,
//! checks the Gram identity, extracts the index sets and verifies solutions
//! by direct enumeration.

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{apply_on_slot, ErrorModel, IndexSets, MeasurementFamily, SchmidtState};
use crate::numerics::{cx, ComplexMatrix, StateVector, Tolerance};

/// A Schmidt state plus the complete PVM basis Alice measures. Both sides of
/// the state must have the same dimension d, and the PVM has d^2 elements.
#[derive(Debug, Clone)]
pub struct SolutionPair {
    state: SchmidtState,
    pvm_basis: Vec<StateVector>,
}

impl SolutionPair {
    pub fn new(state: SchmidtState, pvm_basis: Vec<StateVector>, tol: &Tolerance) -> Result<Self> {
        let d = state.d();
        if state.dim_a() != d {
            return Err(Error::Dimension(format!(
                "both sides must have dimension {d}, Alice's side has {}",
                state.dim_a()
            )));
        }
        let total = d * d;
        if pvm_basis.len() != total {
            return Err(Error::Dimension(format!(
                "PVM basis needs {total} vectors, got {}",
                pvm_basis.len()
            )));
        }
        if pvm_basis.iter().any(|v| v.dim() != total) {
            return Err(Error::Dimension("PVM vectors must live on the bipartite space".into()));
        }
        for (i, a) in pvm_basis.iter().enumerate() {
            for (j, b) in pvm_basis.iter().enumerate().skip(i) {
                let want = if i == j { 1.0 } else { 0.0 };
                let dev = (a.inner(b) - cx(want, 0.0)).norm();
                let bound = if i == j { tol.eps_eq } else { tol.eps_ortho };
                if dev > bound {
                    return Err(Error::NotOrthonormal(format!(
                        "PVM basis: <p{}|p{}> deviates by {dev:.3e}",
                        i + 1,
                        j + 1
                    )));
                }
            }
        }
        Ok(SolutionPair { state, pvm_basis })
    }

    pub fn state(&self) -> &SchmidtState {
        &self.state
    }

    pub fn pvm_basis(&self) -> &[StateVector] {
        &self.pvm_basis
    }

    pub fn d(&self) -> usize {
        self.state.d()
    }
}

/// Serialisable form of a solution pair; construction revalidates.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolutionPairFile {
    pub eta: Vec<f64>,
    pub basis_a: Vec<StateVector>,
    pub basis_k: Vec<StateVector>,
    pub pvm: Vec<StateVector>,
}

impl SolutionPairFile {
    pub fn into_solution_pair(self, tol: &Tolerance) -> Result<SolutionPair> {
        let state = SchmidtState::new(self.eta, self.basis_a, self.basis_k, tol)?;
        SolutionPair::new(state, self.pvm, tol)
    }
}

impl From<&SolutionPair> for SolutionPairFile {
    fn from(sol: &SolutionPair) -> Self {
        SolutionPairFile {
            eta: sol.state.eta().to_vec(),
            basis_a: sol.state.basis_a().to_vec(),
            basis_k: sol.state.basis_k().to_vec(),
            pvm: sol.pvm_basis.clone(),
        }
    }
}

/// Gram matrix of the branch vectors (I (x) L_k)|Psi_eta>.
///
/// For a derived error operation the matrix is (alpha/d) I: `alpha` recovers
/// the scale as d times the mean diagonal, and `pass` demands vanishing
/// off-diagonals plus a flat diagonal.
#[derive(Debug, Clone, Serialize)]
pub struct GramReport {
    pub gram: ComplexMatrix,
    pub alpha: f64,
    pub max_offdiag: f64,
    pub pass: bool,
}

/// Branch vectors (I (x) L_k)|Psi_eta| for all k.
fn branch_vectors(state: &SchmidtState, err: &ErrorModel) -> Result<Vec<StateVector>> {
    let dims = [state.dim_a(), state.d()];
    let psi = state.assemble();
    err.kraus()
        .iter()
        .map(|l| apply_on_slot(l, 2, &dims, &psi))
        .collect()
}

/// Derives the Kraus operators (L_k) of a solution pair from
/// L_k |phi_j> = (c / eta_j) sum_j' <psi_j (x) phi_j' | p_k> |phi_j'>,
/// where c = sqrt(alpha/d) and alpha = min_j eta_j^2.
///
/// The scale makes sum_k L_k' L_k = sum_j (alpha/eta_j^2) |phi_j><phi_j|,
/// which is trace-nonincreasing and saturates the identity exactly on the
/// minimising component (everywhere, for uniform weights).
pub fn derive_error_operators(sol: &SolutionPair, tol: &Tolerance) -> Result<ErrorModel> {
    let state = sol.state();
    let d = state.d();
    if state.eta().iter().any(|&w| w <= tol.eps_eq) {
        return Err(Error::Invalid(
            "Schmidt weights at or below eps_eq would blow up the derived operators".into(),
        ));
    }
    let alpha = state.eta().iter().map(|w| w * w).fold(f64::INFINITY, f64::min);
    let c = (alpha / d as f64).sqrt();
    let products: Vec<Vec<StateVector>> = (0..d)
        .map(|j| {
            (0..d)
                .map(|jp| state.basis_a()[j].tensor(&state.basis_k()[jp]))
                .collect()
        })
        .collect();
    let mut kraus = Vec::with_capacity(d * d);
    for p_k in sol.pvm_basis() {
        let mut op = ComplexMatrix::zeros(d, d);
        for j in 0..d {
            let mut image = StateVector::new(vec![cx(0.0, 0.0); d], vec![d]).unwrap();
            for jp in 0..d {
                let overlap = products[j][jp].inner(p_k);
                image = &image + &state.basis_k()[jp].scale(overlap);
            }
            let image = image.scale(cx(c / state.eta()[j], 0.0));
            op = &op + &image.outer(&state.basis_k()[j]);
        }
        kraus.push(op);
    }
    ErrorModel::new(kraus, tol)
}

/// Computes the branch Gram matrix <(I(x)L_k)Psi | (I(x)L_k')Psi> and checks
/// it is proportional to the identity.
pub fn gram_check(state: &SchmidtState, err: &ErrorModel, tol: &Tolerance) -> Result<GramReport> {
    if err.dim() != state.d() {
        return Err(Error::Dimension(format!(
            "error operators act on dimension {}, state kingdom has {}",
            err.dim(),
            state.d()
        )));
    }
    let w = branch_vectors(state, err)?;
    let l = w.len();
    let mut gram = ComplexMatrix::zeros(l, l);
    for (k, wk) in w.iter().enumerate() {
        for (k2, wk2) in w.iter().enumerate() {
            gram.set(k, k2, wk.inner(wk2));
        }
    }
    let mean = (0..l).map(|k| gram.get(k, k).re).sum::<f64>() / l as f64;
    let alpha = state.d() as f64 * mean;
    let mut max_offdiag = 0.0f64;
    let mut diag_spread = 0.0f64;
    for k in 0..l {
        diag_spread = diag_spread.max((gram.get(k, k).re - mean).abs());
        for k2 in 0..l {
            if k != k2 {
                max_offdiag = max_offdiag.max(gram.get(k, k2).norm());
            }
        }
    }
    let pass = max_offdiag <= tol.eps_ortho && diag_spread <= tol.eps_eq;
    Ok(GramReport { gram, alpha, max_offdiag, pass })
}

/// Extracts the index sets X^(J,i) and coefficients f_k^(J,i) by projecting
/// each outcome operator onto the orthogonal branch vectors:
/// f_k = (d/alpha) <(I(x)L_k)Psi | (I(x)M_i^(J))Psi>, keeping |f_k| above
/// `eps_ortho`. Fails when the expansion leaves a residual or the resulting
/// sets overlap within a family.
pub fn derive_index_sets(
    state: &SchmidtState,
    err: &ErrorModel,
    families: &[MeasurementFamily],
    tol: &Tolerance,
) -> Result<IndexSets> {
    derive_index_sets_with_threshold(state, err, families, tol, tol.eps_ortho)
}

/// Same as [`derive_index_sets`] with an explicit support threshold on |f_k|.
/// Genuine coefficients in the qubit tables are 0 or 1, so any mid-range
/// threshold separates them; coefficients dropped by the threshold surface in
/// the reconstruction residual instead.
pub fn derive_index_sets_with_threshold(
    state: &SchmidtState,
    err: &ErrorModel,
    families: &[MeasurementFamily],
    tol: &Tolerance,
    support_threshold: f64,
) -> Result<IndexSets> {
    let report = gram_check(state, err, tol)?;
    if !report.pass {
        return Err(Error::GramCheck(format!(
            "branch vectors are not orthogonal with a flat diagonal (max offdiag {:.3e})",
            report.max_offdiag
        )));
    }
    if report.alpha <= tol.eps_eq {
        return Err(Error::GramCheck("branch Gram matrix vanishes".into()));
    }
    let d = state.d();
    let dims = [state.dim_a(), d];
    let psi = state.assemble();
    let w = branch_vectors(state, err)?;
    let scale = d as f64 / report.alpha;
    let mut sets: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
    let mut coeffs: BTreeMap<(usize, usize, usize), Complex64> = BTreeMap::new();
    for family in families {
        if family.dim() != d {
            return Err(Error::Dimension(format!(
                "family {} acts on dimension {}, kingdom has {d}",
                family.label(),
                family.dim()
            )));
        }
        for i in 1..=family.len() {
            let v = apply_on_slot(family.op(i), 2, &dims, &psi)?;
            let f: Vec<Complex64> = w.iter().map(|wk| wk.inner(&v).scale(scale)).collect();
            let members: Vec<usize> = (1..=w.len())
                .filter(|&k| f[k - 1].norm() > support_threshold)
                .collect();
            if members.is_empty() {
                return Err(Error::EmptyIndexSet { family: family.label(), outcome: i });
            }
            let mut recon = ComplexMatrix::zeros(d, d);
            for &k in &members {
                recon = &recon + &err.op(k).scale(f[k - 1]);
            }
            let residual = (family.op(i) - &recon).frobenius_norm();
            if residual > tol.eps_eq {
                return Err(Error::Decomposition {
                    family: family.label(),
                    outcome: i,
                    residual,
                });
            }
            for &k in &members {
                coeffs.insert((family.label(), i, k), f[k - 1]);
            }
            sets.insert((family.label(), i), members);
        }
    }
    IndexSets::new(sets, coeffs)
}

/// Per-branch mass that Alice's final guess would miss.
#[derive(Debug, Clone, Serialize)]
pub struct OutcomeLeak {
    #[serde(rename = "J")]
    pub family: usize,
    #[serde(rename = "i")]
    pub outcome: usize,
    pub leaked: f64,
}

/// Outcome of checking a candidate solution by direct enumeration.
#[derive(Debug, Clone)]
pub struct SolutionReport {
    /// True when every Alice outcome pins down the king's outcome for every
    /// family.
    pub verdict: bool,
    /// (J, k) -> i, built greedily: first consistent outcome wins, later
    /// contradictions flip the verdict.
    pub guess_map: BTreeMap<(usize, usize), usize>,
    pub min_success_probability: f64,
    pub residuals: Vec<OutcomeLeak>,
}

impl Serialize for SolutionReport {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut s = serializer.serialize_struct("SolutionReport", 4)?;
        s.serialize_field("verdict", &self.verdict)?;
        let guess: BTreeMap<String, usize> = self
            .guess_map
            .iter()
            .map(|(&(family, k), &i)| (format!("{family},{k}"), i))
            .collect();
        s.serialize_field("guess_map", &guess)?;
        s.serialize_field("min_success_probability", &self.min_success_probability)?;
        s.serialize_field("residuals", &self.residuals)?;
        s.end()
    }
}

/// Plays every measurement family against the solution pair and checks that
/// Alice's outcome always determines the king's.
pub fn verify_solution(
    sol: &SolutionPair,
    families: &[MeasurementFamily],
    tol: &Tolerance,
) -> Result<SolutionReport> {
    let state = sol.state();
    let d = state.d();
    let dims = [state.dim_a(), d];
    let psi = state.assemble();
    let prune = tol.eps_ortho * tol.eps_ortho;
    // (J, i, alice distribution) for every branch the king can actually see.
    let mut branches: Vec<(usize, usize, Vec<f64>)> = Vec::new();
    for family in families {
        if family.dim() != d {
            return Err(Error::Dimension(format!(
                "family {} acts on dimension {}, kingdom has {d}",
                family.label(),
                family.dim()
            )));
        }
        for i in 1..=family.len() {
            let v = apply_on_slot(family.op(i), 2, &dims, &psi)?;
            let p = v.norm_sqr();
            if p < prune {
                continue;
            }
            let post = v.scale(cx(1.0 / p.sqrt(), 0.0));
            let q: Vec<f64> = sol
                .pvm_basis()
                .iter()
                .map(|pk| pk.inner(&post).norm_sqr())
                .collect();
            branches.push((family.label(), i, q));
        }
    }
    let mut guess_map: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut conflict = false;
    for (family, i, q) in &branches {
        for (idx, &qk) in q.iter().enumerate() {
            if qk <= prune {
                continue;
            }
            let k = idx + 1;
            match guess_map.get(&(*family, k)) {
                None => {
                    guess_map.insert((*family, k), *i);
                }
                Some(&prior) if prior != *i => conflict = true,
                Some(_) => {}
            }
        }
    }
    let mut min_success = f64::INFINITY;
    let mut residuals = Vec::new();
    for (family, i, q) in &branches {
        let success: f64 = q
            .iter()
            .enumerate()
            .filter(|(idx, _)| guess_map.get(&(*family, idx + 1)) == Some(i))
            .map(|(_, &qk)| qk)
            .sum();
        min_success = min_success.min(success);
        residuals.push(OutcomeLeak {
            family: *family,
            outcome: *i,
            leaked: (1.0 - success).max(0.0),
        });
    }
    if branches.is_empty() {
        return Err(Error::Invalid("no measurement branches to verify".into()));
    }
    let verdict = !conflict && min_success >= 1.0 - tol.eps_eq;
    Ok(SolutionReport {
        verdict,
        guess_map,
        min_success_probability: min_success,
        residuals,
    })
}

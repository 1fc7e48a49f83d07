//! Error-correcting codes built from solved retrodiction games.
//!
//! Two constructions are provided. The bipartite one enlarges Alice's side:
//! an orthonormal family (xi_m) of dimension d_A yields floor(d_A/d) code
//! states Psi_(eta,l) = sum_j eta_j |xi_(d(l-1)+j)> (x) |phi_j>. The
//! multipartite one spreads the kingdom over n slots with GHZ-type states
//! Psi_(eta,t) = sum_j eta_j |phi_(j+t_1)> (x) ... (x) |phi_(j+t_n)> (indices
//! mod d) and keeps a set of tuples t whose error branches stay mutually
//! orthogonal when the errors hit one fixed slot.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{apply_on_slot, ErrorModel, SchmidtState};
use crate::numerics::{cx, orthonormalize, projector, psd_defect, ComplexMatrix, StateVector, Tolerance};
use crate::solution_engine::gram_check;

/// A subspace of a tensor-product space, stored as an orthonormal basis.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "CodeRepr", into = "CodeRepr")]
pub struct QuantumCode {
    ambient_dims: Vec<usize>,
    basis: Vec<StateVector>,
    projector: ComplexMatrix,
}

impl QuantumCode {
    pub fn from_basis(
        ambient_dims: Vec<usize>,
        basis: Vec<StateVector>,
        tol: &Tolerance,
    ) -> Result<Self> {
        if basis.is_empty() {
            return Err(Error::Invalid("a code needs at least one basis state".into()));
        }
        let total: usize = ambient_dims.iter().product();
        if basis.iter().any(|b| b.dim() != total) {
            return Err(Error::Dimension(format!(
                "basis vectors must have dimension {total} to match {ambient_dims:?}"
            )));
        }
        let p = projector(&basis, tol)?;
        Ok(QuantumCode { ambient_dims, basis, projector: p })
    }

    pub fn ambient_dims(&self) -> &[usize] {
        &self.ambient_dims
    }

    pub fn basis(&self) -> &[StateVector] {
        &self.basis
    }

    pub fn projector(&self) -> &ComplexMatrix {
        &self.projector
    }

    /// Dimension of the code subspace.
    pub fn code_dim(&self) -> usize {
        self.basis.len()
    }

    /// Dimension of the ambient space.
    pub fn total_dim(&self) -> usize {
        self.ambient_dims.iter().product()
    }
}

#[derive(Serialize, Deserialize)]
struct CodeRepr {
    ambient_dims: Vec<usize>,
    basis: Vec<StateVector>,
}

impl From<QuantumCode> for CodeRepr {
    fn from(c: QuantumCode) -> Self {
        CodeRepr { ambient_dims: c.ambient_dims, basis: c.basis }
    }
}

impl TryFrom<CodeRepr> for QuantumCode {
    type Error = Error;
    fn try_from(r: CodeRepr) -> Result<Self> {
        QuantumCode::from_basis(r.ambient_dims, r.basis, &Tolerance::default())
    }
}

/// Result of testing P E_k' E_k" P = alpha_(k,k") P over all operator pairs.
#[derive(Debug, Clone, Serialize)]
pub struct KlReport {
    pub alpha_matrix: ComplexMatrix,
    /// True when the off-diagonal of alpha vanishes within eps_ortho.
    pub diagonal: bool,
    /// Real diagonal of alpha.
    pub lambdas: Vec<f64>,
    /// Largest Frobenius residual of P E' E P - alpha P over all pairs.
    pub max_residual: f64,
    pub pass: bool,
}

/// Knill-Laflamme check: every compressed product P E_k' E_k" P must be a
/// multiple of P, with a positive coefficient matrix. With
/// `require_diagonal`, the coefficient matrix must also be diagonal, which is
/// the regime where unambiguous discrimination and recovery work.
pub fn kl_check(
    code: &QuantumCode,
    errs: &[ComplexMatrix],
    require_diagonal: bool,
    tol: &Tolerance,
) -> Result<KlReport> {
    if errs.is_empty() {
        return Err(Error::Invalid("no error operators to check".into()));
    }
    let total = code.total_dim();
    if errs.iter().any(|e| !e.is_square() || e.rows() != total) {
        return Err(Error::Dimension(format!(
            "error operators must be {total}x{total} to act on the ambient space"
        )));
    }
    let dprime = code.code_dim();
    let images: Vec<Vec<StateVector>> = errs
        .iter()
        .map(|e| code.basis().iter().map(|b| e.apply(b)).collect())
        .collect();
    let l = errs.len();
    let mut alpha = ComplexMatrix::zeros(l, l);
    let mut max_residual = 0.0f64;
    for k in 0..l {
        for k2 in 0..l {
            // Compression of E_k' E_k2 to the code basis.
            let mut gram = ComplexMatrix::zeros(dprime, dprime);
            for b in 0..dprime {
                for b2 in 0..dprime {
                    gram.set(b, b2, images[k][b].inner(&images[k2][b2]));
                }
            }
            let a = gram.trace() / cx(dprime as f64, 0.0);
            alpha.set(k, k2, a);
            let residual = (&gram - &ComplexMatrix::identity(dprime).scale(a)).frobenius_norm();
            max_residual = max_residual.max(residual);
        }
    }
    let lambdas: Vec<f64> = (0..l).map(|k| alpha.get(k, k).re).collect();
    let mut max_offdiag = 0.0f64;
    for k in 0..l {
        for k2 in 0..l {
            if k != k2 {
                max_offdiag = max_offdiag.max(alpha.get(k, k2).norm());
            }
        }
    }
    let diagonal = max_offdiag <= tol.eps_ortho;
    let positive = psd_defect(&alpha, tol)? <= tol.eps_psd;
    let pass = max_residual <= tol.eps_eq && positive && (!require_diagonal || diagonal);
    Ok(KlReport { alpha_matrix: alpha, diagonal, lambdas, max_residual, pass })
}

/// Builds the bipartite code of Schmidt weights eta over the (xi_m) family:
/// one code state per block of d consecutive xi vectors, so the code
/// dimension is floor(dim_a / d).
pub fn build_bipartite_code(
    state: &SchmidtState,
    dim_a: usize,
    xi: &[StateVector],
    tol: &Tolerance,
) -> Result<QuantumCode> {
    let d = state.d();
    if dim_a < d {
        return Err(Error::Invalid(format!(
            "Alice's dimension {dim_a} must be at least the kingdom dimension {d}"
        )));
    }
    if xi.len() != dim_a || xi.iter().any(|v| v.dim() != dim_a) {
        return Err(Error::Dimension(format!(
            "need {dim_a} orthonormal vectors of dimension {dim_a}"
        )));
    }
    let blocks = dim_a / d;
    let mut basis = Vec::with_capacity(blocks);
    for l in 0..blocks {
        let mut psi: Option<StateVector> = None;
        for j in 0..d {
            let term = xi[d * l + j]
                .tensor(&state.basis_k()[j])
                .scale(cx(state.eta()[j], 0.0));
            psi = Some(match psi {
                None => term,
                Some(acc) => &acc + &term,
            });
        }
        basis.push(psi.unwrap().with_factor_dims(vec![dim_a, d])?);
    }
    QuantumCode::from_basis(vec![dim_a, d], basis, tol)
}

/// Shift tuple (i_1, ..., i_n) indexing a GHZ-type state.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(transparent)]
pub struct GhzTuple {
    indices: Vec<usize>,
}

impl GhzTuple {
    pub fn new(indices: Vec<usize>, d: usize) -> Result<Self> {
        if indices.len() < 2 {
            return Err(Error::Invalid("a shift tuple needs at least two slots".into()));
        }
        if indices.iter().any(|&i| i >= d) {
            return Err(Error::Invalid(format!("tuple entries must lie below d = {d}")));
        }
        Ok(GhzTuple { indices })
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// GHZ-type state sum_j eta_j |phi_(j+t_1)> (x) ... (x) |phi_(j+t_n)>,
/// shifts taken mod d. Unit norm whenever eta is normalised and phi is
/// orthonormal.
pub fn ghz_state(eta: &[f64], phi: &[StateVector], t: &GhzTuple) -> Result<StateVector> {
    let d = eta.len();
    if phi.len() != d || phi.iter().any(|v| v.dim() != d) {
        return Err(Error::Dimension(format!("need {d} basis vectors of dimension {d}")));
    }
    if t.indices().iter().any(|&i| i >= d) {
        return Err(Error::Invalid(format!("tuple entries must lie below d = {d}")));
    }
    let n = t.len();
    let mut acc: Option<StateVector> = None;
    for j in 0..d {
        let mut strand = phi[(j + t.indices()[0]) % d].clone();
        for u in 1..n {
            strand = strand.tensor(&phi[(j + t.indices()[u]) % d]);
        }
        let term = strand.scale(cx(eta[j], 0.0));
        acc = Some(match acc {
            None => term,
            Some(a) => &a + &term,
        });
    }
    acc.unwrap().with_factor_dims(vec![d; n])
}

/// Sufficient condition for two GHZ-type states to stay orthogonal under
/// errors on `slot`: two other slots s, t where the differences i_s - i'_s
/// and i_t - i'_t disagree mod d. Vacuously false below three slots.
pub fn lemma1_predicate(a: &GhzTuple, b: &GhzTuple, slot: usize, d: usize) -> Result<bool> {
    let n = a.len();
    if b.len() != n {
        return Err(Error::Dimension("tuples of different length".into()));
    }
    if slot == 0 || slot > n {
        return Err(Error::SlotOutOfRange { slot, factors: n });
    }
    if a.indices().iter().chain(b.indices()).any(|&i| i >= d) {
        return Err(Error::Invalid(format!("tuple entries must lie below d = {d}")));
    }
    if n < 3 {
        return Ok(false);
    }
    let diffs: Vec<usize> = (0..n)
        .filter(|&u| u + 1 != slot)
        .map(|u| (a.indices()[u] + d - b.indices()[u]) % d)
        .collect();
    Ok(diffs.iter().any(|&x| x != diffs[0]))
}

/// How to pick a mutually orthogonal set of shift tuples.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectionMode {
    /// Scan tuples in lexicographic order, keeping everything compatible.
    Greedy,
    /// Exact maximum clique on the orthogonality graph.
    Exact,
}

/// Upper bound on candidate states for the exact clique search.
const EXACT_CANDIDATE_CAP: usize = 4096;

/// Picks shift tuples whose states, and all their error branches on `slot`,
/// are mutually orthogonal. Tuples generating the same state (up to phase)
/// are collapsed onto the lexicographically smallest representative, and
/// every pair in the output is verified numerically.
pub fn select_orthogonal_set(
    eta: &[f64],
    phi: &[StateVector],
    n: usize,
    slot: usize,
    err: &ErrorModel,
    mode: SelectionMode,
    tol: &Tolerance,
) -> Result<Vec<GhzTuple>> {
    if n < 3 {
        return Err(Error::Invalid(format!(
            "the multipartite construction needs at least 3 slots, got {n}"
        )));
    }
    if slot == 0 || slot > n {
        return Err(Error::SlotOutOfRange { slot, factors: n });
    }
    let d = eta.len();
    // Validates eta and phi and confirms the branch Gram identity.
    let schmidt = SchmidtState::new(eta.to_vec(), phi.to_vec(), phi.to_vec(), tol)?;
    let report = gram_check(&schmidt, err, tol)?;
    if !report.pass {
        return Err(Error::GramCheck(format!(
            "error operation fails the branch Gram identity (max offdiag {:.3e})",
            report.max_offdiag
        )));
    }
    let dims = vec![d; n];
    // Deduplicate candidate tuples by the states they generate.
    let mut canonical: Vec<(GhzTuple, StateVector)> = Vec::new();
    let total = d.checked_pow(n as u32).ok_or_else(|| {
        Error::Invalid(format!("d^n overflows for d = {d}, n = {n}"))
    })?;
    for code in 0..total {
        let mut rem = code;
        let mut indices = vec![0usize; n];
        for u in (0..n).rev() {
            indices[u] = rem % d;
            rem /= d;
        }
        let t = GhzTuple::new(indices, d)?;
        let state = ghz_state(eta, phi, &t)?;
        let duplicate = canonical
            .iter()
            .any(|(_, s)| s.inner(&state).norm() > 1.0 - tol.eps_eq);
        if !duplicate {
            canonical.push((t, state));
        }
    }
    // Branch images (I ... L_k ... I) |Psi_t> for the numeric orthogonality test.
    let branches: Vec<Vec<StateVector>> = canonical
        .iter()
        .map(|(_, state)| {
            err.kraus()
                .iter()
                .map(|l| apply_on_slot(l, slot, &dims, state))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let orthogonal = |x: usize, y: usize| -> bool {
        branches[x].iter().all(|wx| {
            branches[y]
                .iter()
                .all(|wy| wx.inner(wy).norm() <= tol.eps_ortho)
        })
    };
    let picked: Vec<usize> = match mode {
        SelectionMode::Greedy => {
            let mut kept: Vec<usize> = Vec::new();
            for v in 0..canonical.len() {
                if kept.iter().all(|&u| orthogonal(u, v)) {
                    kept.push(v);
                }
            }
            kept
        }
        SelectionMode::Exact => {
            if canonical.len() > EXACT_CANDIDATE_CAP {
                return Err(Error::Invalid(format!(
                    "exact selection is capped at {EXACT_CANDIDATE_CAP} candidate states, got {}",
                    canonical.len()
                )));
            }
            let m = canonical.len();
            let mut adj = vec![vec![false; m]; m];
            for x in 0..m {
                for y in (x + 1)..m {
                    let o = orthogonal(x, y);
                    adj[x][y] = o;
                    adj[y][x] = o;
                }
            }
            let mut clique = max_clique(&adj);
            clique.sort_unstable();
            clique
        }
    };
    Ok(picked.into_iter().map(|v| canonical[v].0.clone()).collect())
}

/// Deterministic branch-and-bound maximum clique. Vertices are explored in
/// index order and strict improvement is required, so ties resolve to the
/// lexicographically first maximum clique.
fn max_clique(adj: &[Vec<bool>]) -> Vec<usize> {
    fn expand(
        current: &mut Vec<usize>,
        candidates: &[usize],
        adj: &[Vec<bool>],
        best: &mut Vec<usize>,
    ) {
        if current.len() + candidates.len() <= best.len() {
            return;
        }
        if candidates.is_empty() {
            if current.len() > best.len() {
                *best = current.clone();
            }
            return;
        }
        for (pos, &v) in candidates.iter().enumerate() {
            if current.len() + (candidates.len() - pos) <= best.len() {
                return;
            }
            current.push(v);
            let next: Vec<usize> = candidates[pos + 1..]
                .iter()
                .copied()
                .filter(|&u| adj[v][u])
                .collect();
            expand(current, &next, adj, best);
            current.pop();
        }
    }
    let n = adj.len();
    let mut best = Vec::new();
    let mut current = Vec::new();
    let all: Vec<usize> = (0..n).collect();
    expand(&mut current, &all, adj, &mut best);
    best
}

/// Runs the selection and spans the chosen states. The returned code carries
/// the ambient factorisation (d, ..., d) and has already passed the
/// Knill-Laflamme check with diagonal coefficients for errors on `slot`.
pub fn build_multipartite_code(
    eta: &[f64],
    phi: &[StateVector],
    n: usize,
    slot: usize,
    err: &ErrorModel,
    mode: SelectionMode,
    tol: &Tolerance,
) -> Result<(QuantumCode, Vec<GhzTuple>)> {
    let tuples = select_orthogonal_set(eta, phi, n, slot, err, mode, tol)?;
    let states: Vec<StateVector> = tuples
        .iter()
        .map(|t| ghz_state(eta, phi, t))
        .collect::<Result<_>>()?;
    let basis = orthonormalize(&states, tol)?;
    if basis.len() != states.len() {
        return Err(Error::Invalid(
            "selected states are linearly dependent; this should be unreachable".into(),
        ));
    }
    let d = eta.len();
    let code = QuantumCode::from_basis(vec![d; n], basis, tol)?;
    let embedded: Vec<ComplexMatrix> = err
        .kraus()
        .iter()
        .map(|l| crate::model::embed_on_slot(l, slot, code.ambient_dims()))
        .collect::<Result<_>>()?;
    let report = kl_check(&code, &embedded, true, tol)?;
    if !report.pass {
        return Err(Error::KnillLaflamme(format!(
            "constructed code misses the diagonal condition (residual {:.3e})",
            report.max_residual
        )));
    }
    Ok((code, tuples))
}

/// Projective measurement Alice uses to read off which error branch fired:
/// one projector per error index k with lambda_k > eps_eq, plus the residual
/// projector on whatever the branches do not cover.
#[derive(Debug, Clone, Serialize)]
pub struct DiscriminationPvm {
    /// (error index k, projector onto E_k C), in ascending k.
    pub outcomes: Vec<(usize, ComplexMatrix)>,
    pub residual: ComplexMatrix,
}

pub fn discrimination_pvm(
    code: &QuantumCode,
    errs: &[ComplexMatrix],
    tol: &Tolerance,
) -> Result<DiscriminationPvm> {
    let total = code.total_dim();
    if errs.iter().any(|e| !e.is_square() || e.rows() != total) {
        return Err(Error::Dimension(format!(
            "error operators must be {total}x{total} to act on the ambient space"
        )));
    }
    let dprime = code.code_dim() as f64;
    let mut outcomes = Vec::new();
    let mut bases: Vec<Vec<StateVector>> = Vec::new();
    for (idx, e) in errs.iter().enumerate() {
        let images: Vec<StateVector> = code.basis().iter().map(|b| e.apply(b)).collect();
        let lambda = images.iter().map(|v| v.norm_sqr()).sum::<f64>() / dprime;
        if lambda <= tol.eps_eq {
            continue;
        }
        let basis = orthonormalize(&images, tol)?;
        let p = projector(&basis, tol)?;
        outcomes.push((idx + 1, p));
        bases.push(basis);
    }
    // Branch subspaces must not overlap, otherwise the readout is ambiguous.
    for x in 0..bases.len() {
        for y in (x + 1)..bases.len() {
            for a in &bases[x] {
                for b in &bases[y] {
                    let overlap = a.inner(b).norm();
                    if overlap > tol.eps_ortho {
                        return Err(Error::KnillLaflamme(format!(
                            "branch subspaces for k={} and k={} overlap ({overlap:.3e})",
                            outcomes[x].0, outcomes[y].0
                        )));
                    }
                }
            }
        }
    }
    let mut sum = ComplexMatrix::zeros(total, total);
    for (_, p) in &outcomes {
        sum = &sum + p;
    }
    let residual = &ComplexMatrix::identity(total) - &sum;
    // Completeness: the residual must itself be a projector.
    let idem = (&(&residual * &residual) - &residual).max_abs();
    if idem > tol.eps_eq {
        return Err(Error::KnillLaflamme(format!(
            "projectors do not resolve the identity (residual defect {idem:.3e})"
        )));
    }
    Ok(DiscriminationPvm { outcomes, residual })
}

/// Recovery operation R with R(E(rho)) proportional to rho on code states:
/// R_k = sum_b |b><e_(k,b)| built from the normalised branch images, plus the
/// projector onto the unused remainder to stay trace-preserving.
#[derive(Debug, Clone, Serialize)]
pub struct RecoveryChannel {
    pub kraus: Vec<ComplexMatrix>,
}

impl RecoveryChannel {
    pub fn apply(&self, rho: &ComplexMatrix) -> ComplexMatrix {
        apply_channel(&self.kraus, rho)
    }
}

/// sum_k K_k rho K_k'.
pub fn apply_channel(kraus: &[ComplexMatrix], rho: &ComplexMatrix) -> ComplexMatrix {
    assert!(!kraus.is_empty(), "empty channel");
    let mut out = ComplexMatrix::zeros(rho.rows(), rho.cols());
    for k in kraus {
        out = &out + &(&(k * rho) * &k.adjoint());
    }
    out
}

pub fn build_recovery(
    code: &QuantumCode,
    errs: &[ComplexMatrix],
    tol: &Tolerance,
) -> Result<RecoveryChannel> {
    let total = code.total_dim();
    if errs.iter().any(|e| !e.is_square() || e.rows() != total) {
        return Err(Error::Dimension(format!(
            "error operators must be {total}x{total} to act on the ambient space"
        )));
    }
    let dprime = code.code_dim() as f64;
    let mut kraus = Vec::new();
    let mut covered = ComplexMatrix::zeros(total, total);
    for e in errs {
        let images: Vec<StateVector> = code.basis().iter().map(|b| e.apply(b)).collect();
        let lambda = images.iter().map(|v| v.norm_sqr()).sum::<f64>() / dprime;
        if lambda <= tol.eps_eq {
            continue;
        }
        let scale = cx(1.0 / lambda.sqrt(), 0.0);
        let mut r = ComplexMatrix::zeros(total, total);
        for (b, image) in code.basis().iter().zip(&images) {
            r = &r + &b.outer(&image.scale(scale));
        }
        covered = &covered + &(&r.adjoint() * &r);
        kraus.push(r);
    }
    let rest = &ComplexMatrix::identity(total) - &covered;
    let defect = psd_defect(&rest, tol).map_err(|_| {
        Error::KnillLaflamme("recovery isometries overlap; branch images are not orthonormal".into())
    })?;
    if defect > tol.eps_psd || (&(&rest * &rest) - &rest).max_abs() > tol.eps_eq {
        return Err(Error::KnillLaflamme(
            "recovery isometries do not complete to a trace-preserving operation".into(),
        ));
    }
    kraus.push(rest);
    Ok(RecoveryChannel { kraus })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{embed_on_slot, standard_qubit_error_model};
    use crate::sampling;

    fn tol() -> Tolerance {
        Tolerance::default()
    }

    fn qubit_basis() -> Vec<StateVector> {
        (0..2).map(|j| StateVector::basis_state(&[2], j).unwrap()).collect()
    }

    fn bell_code() -> QuantumCode {
        QuantumCode::from_basis(vec![2, 2], vec![SchmidtState::bell().assemble()], &tol()).unwrap()
    }

    fn embedded_qubit_errors(dims: &[usize], slot: usize) -> Vec<ComplexMatrix> {
        standard_qubit_error_model()
            .kraus()
            .iter()
            .map(|l| embed_on_slot(l, slot, dims).unwrap())
            .collect()
    }

    #[test]
    fn bell_code_satisfies_kl_with_quarter_lambdas() {
        let report = kl_check(&bell_code(), &embedded_qubit_errors(&[2, 2], 2), true, &tol()).unwrap();
        assert!(report.pass);
        assert!(report.diagonal);
        assert!(report.max_residual < 1e-12);
        for lambda in &report.lambdas {
            assert!((lambda - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn identity_error_gives_unit_alpha() {
        let report = kl_check(&bell_code(), &[ComplexMatrix::identity(4)], true, &tol()).unwrap();
        assert!(report.pass);
        assert_eq!(report.lambdas.len(), 1);
        assert!((report.lambdas[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn full_space_fails_kl_for_a_raising_error() {
        let full = QuantumCode::from_basis(
            vec![2, 2],
            (0..4).map(|i| StateVector::basis_state(&[2, 2], i).unwrap()).collect(),
            &tol(),
        )
        .unwrap();
        let mut raise = ComplexMatrix::zeros(2, 2);
        raise.set(0, 1, cx(1.0, 0.0));
        let embedded = embed_on_slot(&raise, 2, &[2, 2]).unwrap();
        let report = kl_check(&full, &[embedded], false, &tol()).unwrap();
        assert!(!report.pass);
        assert!(report.max_residual > 0.5);
    }

    #[test]
    fn bipartite_code_dimension_is_the_block_count() {
        let state = SchmidtState::bell();
        for dim_a in 2..=8 {
            let xi: Vec<StateVector> =
                (0..dim_a).map(|m| StateVector::basis_state(&[dim_a], m).unwrap()).collect();
            let code = build_bipartite_code(&state, dim_a, &xi, &tol()).unwrap();
            assert_eq!(code.code_dim(), dim_a / 2, "dim_a = {dim_a}");
            assert_eq!(code.ambient_dims(), &[dim_a, 2]);
        }
    }

    #[test]
    fn smallest_bipartite_code_is_the_entangled_state_itself() {
        let state = SchmidtState::bell();
        let xi = qubit_basis();
        let code = build_bipartite_code(&state, 2, &xi, &tol()).unwrap();
        assert_eq!(code.code_dim(), 1);
        assert!(code.basis()[0].max_abs_diff(&state.assemble()) < 1e-15);
    }

    #[test]
    fn bipartite_branches_satisfy_the_cross_gram_identity() {
        // Direct check of <(I(x)L_k) Psi_l | (I(x)L_k') Psi_l'> =
        // (alpha/d) delta_kk' delta_ll', independent of kl_check.
        let state = SchmidtState::bell();
        let dim_a = 4;
        let xi: Vec<StateVector> =
            (0..dim_a).map(|m| StateVector::basis_state(&[dim_a], m).unwrap()).collect();
        let code = build_bipartite_code(&state, dim_a, &xi, &tol()).unwrap();
        let err = standard_qubit_error_model();
        let dims = [dim_a, 2];
        let branch = |l: usize, k: usize| {
            apply_on_slot(err.op(k), 2, &dims, &code.basis()[l]).unwrap()
        };
        for l in 0..2 {
            for l2 in 0..2 {
                for k in 1..=4 {
                    for k2 in 1..=4 {
                        let g = branch(l, k).inner(&branch(l2, k2));
                        let want = if l == l2 && k == k2 { 0.25 } else { 0.0 };
                        assert!(
                            (g - cx(want, 0.0)).norm() < 1e-12,
                            "l={l} l2={l2} k={k} k2={k2}: {g}"
                        );
                    }
                }
            }
        }
        // Same conclusion through the trace identity.
        let report = kl_check(&code, &embedded_qubit_errors(&dims, 2), true, &tol()).unwrap();
        assert!(report.pass);
        for lambda in &report.lambdas {
            assert!((lambda - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn ghz_states_for_the_smallest_tuples() {
        let eta = vec![std::f64::consts::FRAC_1_SQRT_2; 2];
        let phi = qubit_basis();
        let t = GhzTuple::new(vec![0, 0, 0], 2).unwrap();
        let psi = ghz_state(&eta, &phi, &t).unwrap();
        assert_eq!(psi.factor_dims(), &[2, 2, 2]);
        assert!((psi.get(0) - cx(std::f64::consts::FRAC_1_SQRT_2, 0.0)).norm() < 1e-15);
        assert!((psi.get(7) - cx(std::f64::consts::FRAC_1_SQRT_2, 0.0)).norm() < 1e-15);
        assert!((psi.norm() - 1.0).abs() < 1e-12);

        let t = GhzTuple::new(vec![0, 0, 1], 2).unwrap();
        let psi = ghz_state(&eta, &phi, &t).unwrap();
        assert!((psi.get(1) - cx(std::f64::consts::FRAC_1_SQRT_2, 0.0)).norm() < 1e-15);
        assert!((psi.get(6) - cx(std::f64::consts::FRAC_1_SQRT_2, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn ghz_states_have_unit_norm_for_every_tuple() {
        let eta = vec![0.8, 0.6];
        let phi = qubit_basis();
        for code in 0..16 {
            let indices: Vec<usize> = (0..4).map(|u| (code >> u) & 1).collect();
            let t = GhzTuple::new(indices, 2).unwrap();
            let psi = ghz_state(&eta, &phi, &t).unwrap();
            assert!((psi.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn lemma1_cases() {
        let t0 = GhzTuple::new(vec![0, 0, 0], 2).unwrap();
        let t1 = GhzTuple::new(vec![0, 1, 0], 2).unwrap();
        let t2 = GhzTuple::new(vec![0, 0, 1], 2).unwrap();
        // Differences on slots 1 and 2 disagree.
        assert!(lemma1_predicate(&t0, &t1, 3, 2).unwrap());
        // Both off-slot differences vanish.
        assert!(!lemma1_predicate(&t0, &t2, 3, 2).unwrap());
        // Two slots only: vacuous.
        let s0 = GhzTuple::new(vec![0, 1], 2).unwrap();
        let s1 = GhzTuple::new(vec![1, 0], 2).unwrap();
        assert!(!lemma1_predicate(&s0, &s1, 1, 2).unwrap());
    }

    #[test]
    fn lemma1_pairs_are_orthogonal_in_every_branch() {
        // The sufficient condition implies full numeric branch orthogonality.
        let eta = vec![std::f64::consts::FRAC_1_SQRT_2; 2];
        let phi = qubit_basis();
        let err = standard_qubit_error_model();
        let n = 4;
        let slot = 2;
        let dims = vec![2usize; n];
        let mut checked = 0usize;
        for a in 0..16usize {
            for b in 0..16usize {
                let ta = GhzTuple::new((0..n).map(|u| (a >> u) & 1).collect(), 2).unwrap();
                let tb = GhzTuple::new((0..n).map(|u| (b >> u) & 1).collect(), 2).unwrap();
                if !lemma1_predicate(&ta, &tb, slot, 2).unwrap() {
                    continue;
                }
                let sa = ghz_state(&eta, &phi, &ta).unwrap();
                let sb = ghz_state(&eta, &phi, &tb).unwrap();
                for k in 1..=4 {
                    for k2 in 1..=4 {
                        let wa = apply_on_slot(err.op(k), slot, &dims, &sa).unwrap();
                        let wb = apply_on_slot(err.op(k2), slot, &dims, &sb).unwrap();
                        assert!(wa.inner(&wb).norm() < 1e-12);
                    }
                }
                checked += 1;
            }
        }
        assert!(checked > 50);
    }

    #[test]
    fn greedy_selection_for_three_qubits_matches_brute_force() {
        let eta = vec![std::f64::consts::FRAC_1_SQRT_2; 2];
        let phi = qubit_basis();
        let err = standard_qubit_error_model();
        let picked =
            select_orthogonal_set(&eta, &phi, 3, 3, &err, SelectionMode::Greedy, &tol()).unwrap();
        let want: Vec<Vec<usize>> = vec![vec![0, 0, 0], vec![0, 1, 0]];
        let got: Vec<Vec<usize>> = picked.iter().map(|t| t.indices().to_vec()).collect();
        assert_eq!(got, want);
        // Brute force: every kept pair is branch-orthogonal; every canonical
        // tuple outside the set conflicts with a kept one.
        let dims = [2usize, 2, 2];
        let states: Vec<StateVector> =
            picked.iter().map(|t| ghz_state(&eta, &phi, t).unwrap()).collect();
        for (x, sx) in states.iter().enumerate() {
            for sy in states.iter().skip(x + 1) {
                for k in 1..=4 {
                    for k2 in 1..=4 {
                        let wx = apply_on_slot(err.op(k), 3, &dims, sx).unwrap();
                        let wy = apply_on_slot(err.op(k2), 3, &dims, sy).unwrap();
                        assert!(wx.inner(&wy).norm() < 1e-12);
                    }
                }
            }
        }
        let exact =
            select_orthogonal_set(&eta, &phi, 3, 3, &err, SelectionMode::Exact, &tol()).unwrap();
        assert_eq!(exact.len(), picked.len());
    }

    #[test]
    fn multipartite_code_sizes_grow_as_expected() {
        let eta = vec![std::f64::consts::FRAC_1_SQRT_2; 2];
        let phi = qubit_basis();
        let err = standard_qubit_error_model();
        for n in 3..=5 {
            let (code, tuples) =
                build_multipartite_code(&eta, &phi, n, 1, &err, SelectionMode::Greedy, &tol())
                    .unwrap();
            assert_eq!(code.code_dim(), 1 << (n - 2), "n = {n}");
            assert_eq!(tuples.len(), code.code_dim());
            assert_eq!(code.ambient_dims(), vec![2; n].as_slice());
        }
    }

    #[test]
    fn multipartite_rejects_two_slots() {
        let eta = vec![std::f64::consts::FRAC_1_SQRT_2; 2];
        let phi = qubit_basis();
        let err = standard_qubit_error_model();
        assert!(matches!(
            build_multipartite_code(&eta, &phi, 2, 1, &err, SelectionMode::Greedy, &tol()),
            Err(Error::Invalid(_))
        ));
    }

    #[test]
    fn every_slot_of_the_four_qubit_code_passes_kl() {
        let eta = vec![std::f64::consts::FRAC_1_SQRT_2; 2];
        let phi = qubit_basis();
        let err = standard_qubit_error_model();
        for slot in 1..=4 {
            let (code, _) =
                build_multipartite_code(&eta, &phi, 4, slot, &err, SelectionMode::Greedy, &tol())
                    .unwrap();
            let embedded = embedded_qubit_errors(&[2, 2, 2, 2], slot);
            let report = kl_check(&code, &embedded, true, &tol()).unwrap();
            assert!(report.pass, "slot {slot}");
            for lambda in &report.lambdas {
                assert!((lambda - 0.25).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn discrimination_pvm_ranks_match_the_construction() {
        // Bell code: four rank-one branches, nothing left over.
        let pvm = discrimination_pvm(&bell_code(), &embedded_qubit_errors(&[2, 2], 2), &tol()).unwrap();
        assert_eq!(pvm.outcomes.len(), 4);
        for (_, p) in &pvm.outcomes {
            assert!((p.trace() - cx(1.0, 0.0)).norm() < 1e-10);
        }
        assert!(pvm.residual.trace().norm() < 1e-10);

        // dim_a = 5: four rank-two branches and a rank-two remainder.
        let state = SchmidtState::bell();
        let xi: Vec<StateVector> =
            (0..5).map(|m| StateVector::basis_state(&[5], m).unwrap()).collect();
        let code = build_bipartite_code(&state, 5, &xi, &tol()).unwrap();
        let pvm = discrimination_pvm(&code, &embedded_qubit_errors(&[5, 2], 2), &tol()).unwrap();
        assert_eq!(pvm.outcomes.len(), 4);
        for (_, p) in &pvm.outcomes {
            assert!((p.trace() - cx(2.0, 0.0)).norm() < 1e-10);
        }
        assert!((pvm.residual.trace() - cx(2.0, 0.0)).norm() < 1e-10);
    }

    #[test]
    fn discrimination_projectors_resolve_the_identity() {
        let code = bell_code();
        let pvm = discrimination_pvm(&code, &embedded_qubit_errors(&[2, 2], 2), &tol()).unwrap();
        let mut sum = pvm.residual.clone();
        for (_, p) in &pvm.outcomes {
            sum = &sum + p;
            // Projector property.
            assert!((&(p * p) - p).max_abs() < 1e-10);
        }
        assert!(sum.max_abs_diff(&ComplexMatrix::identity(4)) < 1e-10);
        for (x, (_, px)) in pvm.outcomes.iter().enumerate() {
            for (_, py) in pvm.outcomes.iter().skip(x + 1) {
                assert!((px * py).max_abs() < 1e-10);
            }
        }
    }

    #[test]
    fn recovery_restores_the_bell_state_exactly() {
        let code = bell_code();
        let errs = embedded_qubit_errors(&[2, 2], 2);
        let recovery = build_recovery(&code, &errs, &tol()).unwrap();
        let psi = &code.basis()[0];
        let rho = psi.outer(psi);
        let corrupted = apply_channel(&errs, &rho);
        let recovered = recovery.apply(&corrupted);
        assert!(recovered.max_abs_diff(&rho) < 1e-12);
    }

    #[test]
    fn recovery_after_identity_error_is_the_identity_on_code_states() {
        let code = bell_code();
        let errs = vec![ComplexMatrix::identity(4)];
        let recovery = build_recovery(&code, &errs, &tol()).unwrap();
        let psi = &code.basis()[0];
        let rho = psi.outer(psi);
        assert!(recovery.apply(&rho).max_abs_diff(&rho) < 1e-12);
    }

    #[test]
    fn recovery_fidelity_on_random_code_states() {
        let eta = vec![std::f64::consts::FRAC_1_SQRT_2; 2];
        let phi = qubit_basis();
        let err = standard_qubit_error_model();
        let (code, _) =
            build_multipartite_code(&eta, &phi, 4, 1, &err, SelectionMode::Greedy, &tol()).unwrap();
        let errs = embedded_qubit_errors(&[2, 2, 2, 2], 1);
        let recovery = build_recovery(&code, &errs, &tol()).unwrap();
        for trial in 0..5u64 {
            let mut rng = sampling::rng_for(0xC0DE, trial);
            let psi = sampling::random_superposition(&mut rng, code.basis()).unwrap();
            let rho = psi.outer(&psi);
            let recovered = recovery.apply(&apply_channel(&errs, &rho));
            let fidelity = psi.inner(&recovered.apply(&psi)).re;
            assert!(fidelity >= 1.0 - 1e-9, "trial {trial}: {fidelity}");
        }
    }

    #[test]
    fn cross_gram_identity_for_random_bipartite_draws() {
        for trial in 0..10u64 {
            let mut rng = sampling::rng_for(0x7E0, trial);
            let d = 2;
            let dim_a = 4 + (trial % 3) as usize;
            let eta = sampling::random_eta(&mut rng, d);
            let basis_k = sampling::random_orthonormal_basis(&mut rng, d).unwrap();
            let basis_a = sampling::random_orthonormal_basis(&mut rng, d).unwrap();
            let state = SchmidtState::new(eta.clone(), basis_a, basis_k, &tol()).unwrap();
            let pvm = sampling::random_orthonormal_basis(&mut rng, d * d)
                .unwrap()
                .into_iter()
                .map(|v| v.with_factor_dims(vec![d, d]).unwrap())
                .collect::<Vec<_>>();
            let sol = crate::solution_engine::SolutionPair::new(state.clone(), pvm, &tol()).unwrap();
            let err = crate::solution_engine::derive_error_operators(&sol, &tol()).unwrap();
            let xi = sampling::random_orthonormal_basis(&mut rng, dim_a).unwrap();
            let code = build_bipartite_code(&state, dim_a, &xi, &tol()).unwrap();
            let alpha = eta.iter().map(|w| w * w).fold(f64::INFINITY, f64::min);
            let dims = [dim_a, d];
            for l in 0..code.code_dim() {
                for l2 in 0..code.code_dim() {
                    for k in 1..=d * d {
                        for k2 in 1..=d * d {
                            let wx = apply_on_slot(err.op(k), 2, &dims, &code.basis()[l]).unwrap();
                            let wy = apply_on_slot(err.op(k2), 2, &dims, &code.basis()[l2]).unwrap();
                            let g = wx.inner(&wy);
                            let want = if l == l2 && k == k2 { alpha / d as f64 } else { 0.0 };
                            assert!(
                                (g - cx(want, 0.0)).norm() < 1e-9,
                                "trial {trial} l={l} l2={l2} k={k} k2={k2}"
                            );
                        }
                    }
                }
            }
        }
    }
}

//! Vocabulary of the retrodiction game: Schmidt-form entangled states,
//! measurement families, trace-nonincreasing error operations and the index
//! sets that tie Alice's outcomes back to the king's.
//!
//! Conventions: measurement families are labelled J = 1..n, outcomes i and
//! error indices k are 1-based, tensor slots are 1-based, and basis indices
//! inside vectors are 0-based.

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{cx, ComplexMatrix, StateVector, Tolerance};

/// Bipartite state in Schmidt form: |Psi> = sum_j eta_j |psi_j> (x) |phi_j>.
///
/// `basis_k` spans the kingdom space (dimension d); `basis_a` holds d
/// orthonormal vectors on Alice's side, whose dimension may exceed d.
#[derive(Debug, Clone)]
pub struct SchmidtState {
    eta: Vec<f64>,
    basis_a: Vec<StateVector>,
    basis_k: Vec<StateVector>,
}

impl SchmidtState {
    pub fn new(
        eta: Vec<f64>,
        basis_a: Vec<StateVector>,
        basis_k: Vec<StateVector>,
        tol: &Tolerance,
    ) -> Result<Self> {
        let d = eta.len();
        if d < 2 {
            return Err(Error::Invalid(format!("Schmidt rank must be at least 2, got {d}")));
        }
        if basis_a.len() != d || basis_k.len() != d {
            return Err(Error::Dimension(format!(
                "need {d} basis vectors on each side, got {} and {}",
                basis_a.len(),
                basis_k.len()
            )));
        }
        if eta.iter().any(|&w| !w.is_finite() || w <= 0.0) {
            return Err(Error::Invalid("Schmidt weights must be positive".into()));
        }
        let total: f64 = eta.iter().map(|w| w * w).sum();
        if (total - 1.0).abs() > tol.eps_eq {
            return Err(Error::Invalid(format!(
                "Schmidt weights must have unit square sum, got {total}"
            )));
        }
        if basis_k.iter().any(|v| v.dim() != d) {
            return Err(Error::Dimension("kingdom basis vectors must have dimension d".into()));
        }
        check_orthonormal(&basis_a, tol, "basis_a")?;
        check_orthonormal(&basis_k, tol, "basis_k")?;
        Ok(SchmidtState { eta, basis_a, basis_k })
    }

    /// Maximally entangled state of Schmidt rank d over computational bases.
    pub fn maximally_entangled(d: usize) -> Self {
        let w = 1.0 / (d as f64).sqrt();
        let basis: Vec<StateVector> =
            (0..d).map(|j| StateVector::basis_state(&[d], j).unwrap()).collect();
        SchmidtState::new(vec![w; d], basis.clone(), basis, &Tolerance::default()).unwrap()
    }

    /// The qubit Bell state (|00> + |11>)/sqrt(2).
    pub fn bell() -> Self {
        SchmidtState::maximally_entangled(2)
    }

    /// Schmidt rank, equal to the kingdom dimension d.
    pub fn d(&self) -> usize {
        self.eta.len()
    }

    /// Dimension of Alice's side.
    pub fn dim_a(&self) -> usize {
        self.basis_a[0].dim()
    }

    pub fn eta(&self) -> &[f64] {
        &self.eta
    }

    pub fn basis_a(&self) -> &[StateVector] {
        &self.basis_a
    }

    pub fn basis_k(&self) -> &[StateVector] {
        &self.basis_k
    }

    /// The assembled bipartite vector with factors (dim_a, d).
    pub fn assemble(&self) -> StateVector {
        let mut acc: Option<StateVector> = None;
        for j in 0..self.d() {
            let term = self.basis_a[j]
                .tensor(&self.basis_k[j])
                .scale(cx(self.eta[j], 0.0));
            acc = Some(match acc {
                None => term,
                Some(a) => &a + &term,
            });
        }
        acc.unwrap()
            .with_factor_dims(vec![self.dim_a(), self.d()])
            .unwrap()
    }
}

fn check_orthonormal(vectors: &[StateVector], tol: &Tolerance, what: &str) -> Result<()> {
    for (i, a) in vectors.iter().enumerate() {
        if a.dim() != vectors[0].dim() {
            return Err(Error::Dimension(format!("{what}: mixed vector dimensions")));
        }
        for (j, b) in vectors.iter().enumerate().skip(i) {
            let g = a.inner(b);
            let want = if i == j { 1.0 } else { 0.0 };
            let dev = (g - cx(want, 0.0)).norm();
            let bound = if i == j { tol.eps_eq } else { tol.eps_ortho };
            if dev > bound {
                return Err(Error::NotOrthonormal(format!(
                    "{what}: <v{i}|v{j}> deviates by {dev:.3e}"
                )));
            }
        }
    }
    Ok(())
}

/// One of the king's measurement choices: operators (M_i) with
/// sum_i M_i' M_i = I. PVMs are the common case but any Kraus-complete
/// family is accepted.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "FamilyRepr", into = "FamilyRepr")]
pub struct MeasurementFamily {
    label: usize,
    ops: Vec<ComplexMatrix>,
}

impl MeasurementFamily {
    pub fn new(label: usize, ops: Vec<ComplexMatrix>, tol: &Tolerance) -> Result<Self> {
        if ops.is_empty() {
            return Err(Error::Invalid("measurement family needs at least one operator".into()));
        }
        let dim = ops[0].rows();
        if ops.iter().any(|m| !m.is_square() || m.rows() != dim) {
            return Err(Error::Dimension("measurement operators must be square and equal-sized".into()));
        }
        let mut sum = ComplexMatrix::zeros(dim, dim);
        for m in &ops {
            sum = &sum + &(&m.adjoint() * m);
        }
        let defect = sum.max_abs_diff(&ComplexMatrix::identity(dim));
        if defect > tol.eps_eq {
            return Err(Error::IncompleteFamily { family: label, defect });
        }
        Ok(MeasurementFamily { label, ops })
    }

    pub fn label(&self) -> usize {
        self.label
    }

    pub fn dim(&self) -> usize {
        self.ops[0].rows()
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    /// Outcome operator M_i, 1-based.
    pub fn op(&self, i: usize) -> &ComplexMatrix {
        &self.ops[i - 1]
    }

    pub fn ops(&self) -> &[ComplexMatrix] {
        &self.ops
    }
}

/// Trace-nonincreasing error operation given by Kraus operators (L_k) with
/// sum_k L_k' L_k <= I.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "ErrorModelRepr", into = "ErrorModelRepr")]
pub struct ErrorModel {
    kraus: Vec<ComplexMatrix>,
}

impl ErrorModel {
    pub fn new(kraus: Vec<ComplexMatrix>, tol: &Tolerance) -> Result<Self> {
        if kraus.is_empty() {
            return Err(Error::Invalid("error operation needs at least one Kraus operator".into()));
        }
        let dim = kraus[0].rows();
        if kraus.iter().any(|m| !m.is_square() || m.rows() != dim) {
            return Err(Error::Dimension("Kraus operators must be square and equal-sized".into()));
        }
        let gap = &ComplexMatrix::identity(dim) - &kraus_sum(&kraus);
        let defect = crate::numerics::psd_defect(&gap, tol)?;
        if defect > tol.eps_psd {
            return Err(Error::TraceIncreasing { defect });
        }
        Ok(ErrorModel { kraus })
    }

    pub fn dim(&self) -> usize {
        self.kraus[0].rows()
    }

    /// Number of Kraus operators.
    pub fn len(&self) -> usize {
        self.kraus.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kraus.is_empty()
    }

    /// Kraus operator L_k, 1-based.
    pub fn op(&self, k: usize) -> &ComplexMatrix {
        &self.kraus[k - 1]
    }

    pub fn kraus(&self) -> &[ComplexMatrix] {
        &self.kraus
    }

    /// Max-entry distance of sum_k L_k' L_k from the identity; zero for a
    /// trace-preserving operation.
    pub fn completeness_defect(&self) -> f64 {
        kraus_sum(&self.kraus).max_abs_diff(&ComplexMatrix::identity(self.dim()))
    }
}

fn kraus_sum(kraus: &[ComplexMatrix]) -> ComplexMatrix {
    let dim = kraus[0].rows();
    let mut sum = ComplexMatrix::zeros(dim, dim);
    for l in kraus {
        sum = &sum + &(&l.adjoint() * l);
    }
    sum
}

/// Disjoint index sets X^(J,i) with expansion coefficients f_k^(J,i):
/// which error branches can fire when the king measured family J and saw
/// outcome i.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "IndexSetsRepr", into = "IndexSetsRepr")]
pub struct IndexSets {
    sets: BTreeMap<(usize, usize), Vec<usize>>,
    coeffs: BTreeMap<(usize, usize, usize), Complex64>,
}

impl IndexSets {
    pub fn new(
        sets: BTreeMap<(usize, usize), Vec<usize>>,
        coeffs: BTreeMap<(usize, usize, usize), Complex64>,
    ) -> Result<Self> {
        let mut canonical: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
        for (&(family, outcome), ks) in &sets {
            let mut ks = ks.clone();
            ks.sort_unstable();
            ks.dedup();
            if ks.is_empty() {
                return Err(Error::EmptyIndexSet { family, outcome });
            }
            if ks[0] == 0 {
                return Err(Error::Invalid("error indices are 1-based".into()));
            }
            canonical.insert((family, outcome), ks);
        }
        // Disjointness within each family.
        let mut seen: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        for (&(family, outcome), ks) in &canonical {
            for &k in ks {
                if let Some(&first) = seen.get(&(family, k)) {
                    return Err(Error::Disjointness { family, k, first, second: outcome });
                }
                seen.insert((family, k), outcome);
            }
        }
        // Coefficients must cover exactly the set members.
        for (&(family, outcome), ks) in &canonical {
            for &k in ks {
                if !coeffs.contains_key(&(family, outcome, k)) {
                    return Err(Error::Invalid(format!(
                        "missing coefficient for (J={family}, i={outcome}, k={k})"
                    )));
                }
            }
        }
        for &(family, outcome, k) in coeffs.keys() {
            let member = canonical
                .get(&(family, outcome))
                .map(|ks| ks.binary_search(&k).is_ok())
                .unwrap_or(false);
            if !member {
                return Err(Error::Invalid(format!(
                    "coefficient for (J={family}, i={outcome}, k={k}) has no matching set entry"
                )));
            }
        }
        Ok(IndexSets { sets: canonical, coeffs })
    }

    pub fn set(&self, family: usize, outcome: usize) -> Option<&[usize]> {
        self.sets.get(&(family, outcome)).map(|v| v.as_slice())
    }

    pub fn coeff(&self, family: usize, outcome: usize, k: usize) -> Option<Complex64> {
        self.coeffs.get(&(family, outcome, k)).copied()
    }

    /// Iterates over ((J, i), X^(J,i)) in sorted order.
    pub fn iter(&self) -> impl Iterator<Item = (&(usize, usize), &Vec<usize>)> {
        self.sets.iter()
    }

    pub fn families(&self) -> Vec<usize> {
        let mut out: Vec<usize> = self.sets.keys().map(|&(family, _)| family).collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    pub fn outcomes(&self, family: usize) -> Vec<usize> {
        self.sets
            .keys()
            .filter(|&&(f, _)| f == family)
            .map(|&(_, i)| i)
            .collect()
    }

    /// The unique outcome whose set contains k, if any. Disjointness makes
    /// the answer unique; no set containing k means "abstain".
    pub fn outcome_containing(&self, family: usize, k: usize) -> Option<usize> {
        self.sets
            .iter()
            .find(|(&(f, _), ks)| f == family && ks.binary_search(&k).is_ok())
            .map(|(&(_, i), _)| i)
    }

    /// Largest error index mentioned anywhere.
    pub fn max_index(&self) -> usize {
        self.sets.values().flat_map(|ks| ks.iter().copied()).max().unwrap_or(0)
    }
}

/// Outcome probability and renormalised post-state of applying `op` to
/// `state`. Probabilities below eps_ortho^2 yield no post-state.
pub fn born(
    op: &ComplexMatrix,
    state: &StateVector,
    tol: &Tolerance,
) -> Result<(f64, Option<StateVector>)> {
    if !op.is_square() || op.cols() != state.dim() {
        return Err(Error::Dimension(format!(
            "operator {}x{} cannot act on a {}-dimensional state",
            op.rows(),
            op.cols(),
            state.dim()
        )));
    }
    let w = op.apply(state);
    let p = w.norm_sqr();
    if p < tol.eps_ortho * tol.eps_ortho {
        return Ok((p, None));
    }
    Ok((p, Some(w.scale(cx(1.0 / p.sqrt(), 0.0)))))
}

/// I (x) ... (x) op (x) ... (x) I with `op` in 1-based position `slot` of the
/// factor list `dims`.
pub fn embed_on_slot(op: &ComplexMatrix, slot: usize, dims: &[usize]) -> Result<ComplexMatrix> {
    validate_slot(op, slot, dims)?;
    let before: usize = dims[..slot - 1].iter().product();
    let after: usize = dims[slot..].iter().product();
    let mut out = op.clone();
    if before > 1 {
        out = ComplexMatrix::identity(before).tensor(&out);
    }
    if after > 1 {
        out = out.tensor(&ComplexMatrix::identity(after));
    }
    Ok(out)
}

/// Applies `op` to the given slot of `state` without materialising the
/// embedded matrix. Agrees with `embed_on_slot(op, slot, dims).apply(state)`.
pub fn apply_on_slot(
    op: &ComplexMatrix,
    slot: usize,
    dims: &[usize],
    state: &StateVector,
) -> Result<StateVector> {
    validate_slot(op, slot, dims)?;
    let total: usize = dims.iter().product();
    if state.dim() != total {
        return Err(Error::Dimension(format!(
            "state of dimension {} does not match factors {:?}",
            state.dim(),
            dims
        )));
    }
    let d = dims[slot - 1];
    let stride: usize = dims[slot..].iter().product();
    let block = stride * d;
    let amps = state.amplitudes();
    let mut out = vec![cx(0.0, 0.0); total];
    let mut local = vec![cx(0.0, 0.0); d];
    for base in (0..total).step_by(block) {
        for offset in 0..stride {
            for (j, slot_amp) in local.iter_mut().enumerate() {
                *slot_amp = amps[base + j * stride + offset];
            }
            for r in 0..d {
                let mut acc = cx(0.0, 0.0);
                for (j, slot_amp) in local.iter().enumerate() {
                    acc += op.get(r, j) * slot_amp;
                }
                out[base + r * stride + offset] = acc;
            }
        }
    }
    StateVector::new(out, state.factor_dims().to_vec())
}

fn validate_slot(op: &ComplexMatrix, slot: usize, dims: &[usize]) -> Result<()> {
    if slot == 0 || slot > dims.len() {
        return Err(Error::SlotOutOfRange { slot, factors: dims.len() });
    }
    if !op.is_square() || op.rows() != dims[slot - 1] {
        return Err(Error::Dimension(format!(
            "operator {}x{} does not fit slot {} of {:?}",
            op.rows(),
            op.cols(),
            slot,
            dims
        )));
    }
    Ok(())
}

fn qubit_op(entries: [[Complex64; 2]; 2]) -> ComplexMatrix {
    ComplexMatrix::new(2, 2, entries.concat()).unwrap()
}

/// The three standard qubit measurement families: the |+>/|-> basis (J=1),
/// the circular |+'>/|-'> basis (J=2) and the computational basis (J=3).
/// Entries are exact dyadic fractions.
pub fn standard_qubit_measurements() -> Vec<MeasurementFamily> {
    let tol = Tolerance::default();
    let h = 0.5;
    let fam1 = vec![
        qubit_op([[cx(h, 0.0), cx(h, 0.0)], [cx(h, 0.0), cx(h, 0.0)]]),
        qubit_op([[cx(h, 0.0), cx(-h, 0.0)], [cx(-h, 0.0), cx(h, 0.0)]]),
    ];
    let fam2 = vec![
        qubit_op([[cx(h, 0.0), cx(0.0, -h)], [cx(0.0, h), cx(h, 0.0)]]),
        qubit_op([[cx(h, 0.0), cx(0.0, h)], [cx(0.0, -h), cx(h, 0.0)]]),
    ];
    let fam3 = vec![
        qubit_op([[cx(1.0, 0.0), cx(0.0, 0.0)], [cx(0.0, 0.0), cx(0.0, 0.0)]]),
        qubit_op([[cx(0.0, 0.0), cx(0.0, 0.0)], [cx(0.0, 0.0), cx(1.0, 0.0)]]),
    ];
    vec![
        MeasurementFamily::new(1, fam1, &tol).unwrap(),
        MeasurementFamily::new(2, fam2, &tol).unwrap(),
        MeasurementFamily::new(3, fam3, &tol).unwrap(),
    ]
}

/// The four-operator error operation that decomposes the standard qubit
/// measurement families. Trace-preserving: sum_k L_k' L_k = I exactly.
pub fn standard_qubit_error_model() -> ErrorModel {
    let q = 0.25;
    let l1 = qubit_op([[cx(2.0 * q, 0.0), cx(q, -q)], [cx(q, q), cx(0.0, 0.0)]]);
    let l2 = qubit_op([[cx(2.0 * q, 0.0), cx(-q, q)], [cx(-q, -q), cx(0.0, 0.0)]]);
    let l3 = qubit_op([[cx(0.0, 0.0), cx(q, q)], [cx(q, -q), cx(2.0 * q, 0.0)]]);
    let l4 = qubit_op([[cx(0.0, 0.0), cx(-q, -q)], [cx(-q, q), cx(2.0 * q, 0.0)]]);
    ErrorModel::new(vec![l1, l2, l3, l4], &Tolerance::default()).unwrap()
}

/// Index sets matching `standard_qubit_measurements` against
/// `standard_qubit_error_model`; every coefficient is 1.
pub fn standard_qubit_index_sets() -> IndexSets {
    let table: [((usize, usize), [usize; 2]); 6] = [
        ((1, 1), [1, 3]),
        ((1, 2), [2, 4]),
        ((2, 1), [1, 4]),
        ((2, 2), [2, 3]),
        ((3, 1), [1, 2]),
        ((3, 2), [3, 4]),
    ];
    let mut sets = BTreeMap::new();
    let mut coeffs = BTreeMap::new();
    for ((family, outcome), ks) in table {
        sets.insert((family, outcome), ks.to_vec());
        for k in ks {
            coeffs.insert((family, outcome, k), cx(1.0, 0.0));
        }
    }
    IndexSets::new(sets, coeffs).unwrap()
}

#[derive(Serialize, Deserialize)]
struct FamilyRepr {
    #[serde(rename = "J")]
    label: usize,
    ops: Vec<ComplexMatrix>,
}

impl From<MeasurementFamily> for FamilyRepr {
    fn from(f: MeasurementFamily) -> Self {
        FamilyRepr { label: f.label, ops: f.ops }
    }
}

impl TryFrom<FamilyRepr> for MeasurementFamily {
    type Error = Error;
    fn try_from(r: FamilyRepr) -> Result<Self> {
        MeasurementFamily::new(r.label, r.ops, &Tolerance::default())
    }
}

#[derive(Serialize, Deserialize)]
struct ErrorModelRepr {
    kraus: Vec<ComplexMatrix>,
}

impl From<ErrorModel> for ErrorModelRepr {
    fn from(e: ErrorModel) -> Self {
        ErrorModelRepr { kraus: e.kraus }
    }
}

impl TryFrom<ErrorModelRepr> for ErrorModel {
    type Error = Error;
    fn try_from(r: ErrorModelRepr) -> Result<Self> {
        ErrorModel::new(r.kraus, &Tolerance::default())
    }
}

#[derive(Serialize, Deserialize)]
struct IndexSetsRepr {
    sets: BTreeMap<String, Vec<usize>>,
    coeffs: BTreeMap<String, [f64; 2]>,
}

impl From<IndexSets> for IndexSetsRepr {
    fn from(s: IndexSets) -> Self {
        IndexSetsRepr {
            sets: s
                .sets
                .iter()
                .map(|(&(family, outcome), ks)| (format!("{family},{outcome}"), ks.clone()))
                .collect(),
            coeffs: s
                .coeffs
                .iter()
                .map(|(&(family, outcome, k), z)| (format!("{family},{outcome},{k}"), [z.re, z.im]))
                .collect(),
        }
    }
}

impl TryFrom<IndexSetsRepr> for IndexSets {
    type Error = Error;
    fn try_from(r: IndexSetsRepr) -> Result<Self> {
        fn parse_key(key: &str, parts: usize) -> Result<Vec<usize>> {
            let fields: Vec<&str> = key.split(',').collect();
            if fields.len() != parts {
                return Err(Error::Invalid(format!("bad index-set key {key:?}")));
            }
            fields
                .iter()
                .map(|f| {
                    f.trim()
                        .parse::<usize>()
                        .map_err(|_| Error::Invalid(format!("bad index-set key {key:?}")))
                })
                .collect()
        }
        let mut sets = BTreeMap::new();
        for (key, ks) in &r.sets {
            let f = parse_key(key, 2)?;
            sets.insert((f[0], f[1]), ks.clone());
        }
        let mut coeffs = BTreeMap::new();
        for (key, &[re, im]) in &r.coeffs {
            let f = parse_key(key, 3)?;
            coeffs.insert((f[0], f[1], f[2]), cx(re, im));
        }
        IndexSets::new(sets, coeffs)
    }
}

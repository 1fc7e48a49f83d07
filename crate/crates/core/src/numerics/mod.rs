//! Dense complex linear algebra at desk scale.
//!
//! Everything is row-major `Vec<Complex64>` with explicit dimensions; no
//! sparsity, no pivoting, no hidden reordering, so identical inputs give
//! bit-identical outputs on every run.

mod eigen;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shorthand constructor for a complex scalar.
pub fn cx(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Tolerances used by every identity, orthogonality and positivity check.
///
/// `eps_eq` bounds residuals of operator identities, `eps_ortho` bounds
/// inner products that should vanish, `eps_psd` bounds how far below zero an
/// eigenvalue may sit before a matrix stops counting as positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerance {
    pub eps_eq: f64,
    pub eps_ortho: f64,
    pub eps_psd: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance {
            eps_eq: 1e-9,
            eps_ortho: 1e-9,
            eps_psd: 1e-9,
        }
    }
}

impl Tolerance {
    pub fn new(eps_eq: f64, eps_ortho: f64, eps_psd: f64) -> Result<Self> {
        for (name, v) in [("eps_eq", eps_eq), ("eps_ortho", eps_ortho), ("eps_psd", eps_psd)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Invalid(format!("{name} must be finite and positive, got {v}")));
            }
        }
        Ok(Tolerance { eps_eq, eps_ortho, eps_psd })
    }

    /// Same bound for all three checks.
    pub fn uniform(eps: f64) -> Result<Self> {
        Tolerance::new(eps, eps, eps)
    }
}

/// Dense complex matrix, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MatrixRepr", into = "MatrixRepr")]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl ComplexMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<Complex64>) -> Result<Self> {
        if rows == 0 || cols == 0 || data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "matrix {rows}x{cols} needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite("matrix".into()));
        }
        Ok(ComplexMatrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "zero-sized matrix");
        ComplexMatrix {
            rows,
            cols,
            data: vec![Complex64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = ComplexMatrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = Complex64::new(1.0, 0.0);
        }
        m
    }

    /// Builds a matrix from explicit rows; rows must have equal length.
    pub fn from_rows(rows: &[Vec<Complex64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map(|row| row.len()).unwrap_or(0);
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::Dimension("ragged rows".into()));
        }
        ComplexMatrix::new(r, c, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn get(&self, r: usize, c: usize) -> Complex64 {
        assert!(r < self.rows && c < self.cols, "index out of range");
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: Complex64) {
        assert!(r < self.rows && c < self.cols, "index out of range");
        self.data[r * self.cols + c] = v;
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> ComplexMatrix {
        let mut out = ComplexMatrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c].conj();
            }
        }
        out
    }

    pub fn matmul(&self, other: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.cols, other.rows, "matmul shape mismatch");
        let mut out = ComplexMatrix::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self.data[r * self.cols + k];
                if a == Complex64::new(0.0, 0.0) {
                    continue;
                }
                for c in 0..other.cols {
                    out.data[r * other.cols + c] += a * other.data[k * other.cols + c];
                }
            }
        }
        out
    }

    /// Applies the matrix to a state. Square matrices preserve the tensor
    /// factorisation of the input.
    pub fn apply(&self, v: &StateVector) -> StateVector {
        assert_eq!(self.cols, v.dim(), "apply shape mismatch");
        let mut amps = vec![Complex64::new(0.0, 0.0); self.rows];
        for r in 0..self.rows {
            let mut acc = Complex64::new(0.0, 0.0);
            for c in 0..self.cols {
                acc += self.data[r * self.cols + c] * v.amplitudes[c];
            }
            amps[r] = acc;
        }
        let dims = if self.rows == v.dim() {
            v.factor_dims.clone()
        } else {
            vec![self.rows]
        };
        StateVector {
            amplitudes: amps,
            factor_dims: dims,
        }
    }

    pub fn scale(&self, s: Complex64) -> ComplexMatrix {
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z * s).collect(),
        }
    }

    pub fn trace(&self) -> Complex64 {
        assert!(self.is_square(), "trace of non-square matrix");
        (0..self.rows).map(|i| self.data[i * self.cols + i]).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Largest entry magnitude.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &ComplexMatrix) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols), "shape mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// Kronecker product; block (r,c) of the result is `self[r,c] * other`.
    pub fn tensor(&self, other: &ComplexMatrix) -> ComplexMatrix {
        let rows = self.rows * other.rows;
        let cols = self.cols * other.cols;
        let mut out = ComplexMatrix::zeros(rows, cols);
        for r1 in 0..self.rows {
            for c1 in 0..self.cols {
                let a = self.data[r1 * self.cols + c1];
                if a == Complex64::new(0.0, 0.0) {
                    continue;
                }
                for r2 in 0..other.rows {
                    for c2 in 0..other.cols {
                        out.data[(r1 * other.rows + r2) * cols + (c1 * other.cols + c2)] =
                            a * other.data[r2 * other.cols + c2];
                    }
                }
            }
        }
        out
    }

    /// Max deviation from the conjugate transpose.
    pub fn hermitian_defect(&self) -> f64 {
        assert!(self.is_square(), "hermitian_defect of non-square matrix");
        let mut worst = 0.0f64;
        for r in 0..self.rows {
            for c in 0..self.cols {
                let d = (self.data[r * self.cols + c] - self.data[c * self.cols + r].conj()).norm();
                worst = worst.max(d);
            }
        }
        worst
    }

    pub fn is_hermitian(&self, tol: &Tolerance) -> bool {
        self.is_square() && self.hermitian_defect() <= tol.eps_eq
    }
}

impl std::ops::Add for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn add(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols), "add shape mismatch");
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }
}

impl std::ops::Sub for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn sub(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols), "sub shape mismatch");
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }
}

impl std::ops::Mul for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn mul(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        self.matmul(rhs)
    }
}

/// Complex state vector together with its tensor factorisation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "VectorRepr", into = "VectorRepr")]
pub struct StateVector {
    amplitudes: Vec<Complex64>,
    factor_dims: Vec<usize>,
}

impl StateVector {
    pub fn new(amplitudes: Vec<Complex64>, factor_dims: Vec<usize>) -> Result<Self> {
        if factor_dims.is_empty() || factor_dims.iter().any(|&d| d == 0) {
            return Err(Error::Dimension("factor dims must be nonempty and positive".into()));
        }
        let total: usize = factor_dims.iter().product();
        if amplitudes.len() != total {
            return Err(Error::Dimension(format!(
                "vector of length {} does not match factor dims {:?} (product {total})",
                amplitudes.len(),
                factor_dims
            )));
        }
        if amplitudes.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite("state vector".into()));
        }
        Ok(StateVector { amplitudes, factor_dims })
    }

    /// Computational basis state |index> on the given tensor factors.
    pub fn basis_state(factor_dims: &[usize], index: usize) -> Result<Self> {
        let total: usize = factor_dims.iter().product();
        if index >= total {
            return Err(Error::Dimension(format!("basis index {index} out of range {total}")));
        }
        let mut amps = vec![Complex64::new(0.0, 0.0); total];
        amps[index] = Complex64::new(1.0, 0.0);
        StateVector::new(amps, factor_dims.to_vec())
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn factor_dims(&self) -> &[usize] {
        &self.factor_dims
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn get(&self, i: usize) -> Complex64 {
        self.amplitudes[i]
    }

    /// <self|other>, conjugate-linear in `self`.
    pub fn inner(&self, other: &StateVector) -> Complex64 {
        assert_eq!(self.dim(), other.dim(), "inner shape mismatch");
        self.amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn scale(&self, s: Complex64) -> StateVector {
        StateVector {
            amplitudes: self.amplitudes.iter().map(|z| z * s).collect(),
            factor_dims: self.factor_dims.clone(),
        }
    }

    pub fn normalized(&self) -> Result<StateVector> {
        let n = self.norm();
        if n <= 0.0 {
            return Err(Error::Invalid("cannot normalise the zero vector".into()));
        }
        Ok(self.scale(Complex64::new(1.0 / n, 0.0)))
    }

    pub fn tensor(&self, other: &StateVector) -> StateVector {
        let mut amps = Vec::with_capacity(self.dim() * other.dim());
        for a in &self.amplitudes {
            for b in &other.amplitudes {
                amps.push(a * b);
            }
        }
        let mut dims = self.factor_dims.clone();
        dims.extend_from_slice(&other.factor_dims);
        StateVector {
            amplitudes: amps,
            factor_dims: dims,
        }
    }

    /// |self><other| as a matrix.
    pub fn outer(&self, other: &StateVector) -> ComplexMatrix {
        let mut out = ComplexMatrix::zeros(self.dim(), other.dim());
        for r in 0..self.dim() {
            for c in 0..other.dim() {
                out.data[r * other.dim() + c] = self.amplitudes[r] * other.amplitudes[c].conj();
            }
        }
        out
    }

    pub fn max_abs_diff(&self, other: &StateVector) -> f64 {
        assert_eq!(self.dim(), other.dim(), "shape mismatch");
        self.amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// Relabels the tensor factorisation without touching amplitudes.
    pub fn with_factor_dims(&self, factor_dims: Vec<usize>) -> Result<StateVector> {
        StateVector::new(self.amplitudes.clone(), factor_dims)
    }
}

impl std::ops::Add for &StateVector {
    type Output = StateVector;
    fn add(self, rhs: &StateVector) -> StateVector {
        assert_eq!(self.dim(), rhs.dim(), "add shape mismatch");
        StateVector {
            amplitudes: self.amplitudes.iter().zip(&rhs.amplitudes).map(|(a, b)| a + b).collect(),
            factor_dims: self.factor_dims.clone(),
        }
    }
}

impl std::ops::Sub for &StateVector {
    type Output = StateVector;
    fn sub(self, rhs: &StateVector) -> StateVector {
        assert_eq!(self.dim(), rhs.dim(), "sub shape mismatch");
        StateVector {
            amplitudes: self.amplitudes.iter().zip(&rhs.amplitudes).map(|(a, b)| a - b).collect(),
            factor_dims: self.factor_dims.clone(),
        }
    }
}

/// Gram-Schmidt in input order with one re-orthogonalisation pass.
/// Vectors whose residual norm falls below `eps_ortho` are dropped, so the
/// output is a basis of the span. No pivoting: same input, same output.
pub fn orthonormalize(vectors: &[StateVector], tol: &Tolerance) -> Result<Vec<StateVector>> {
    let mut kept: Vec<StateVector> = Vec::new();
    for v in vectors {
        if let Some(first) = kept.first() {
            if first.dim() != v.dim() {
                return Err(Error::Dimension("orthonormalize: mixed vector dimensions".into()));
            }
        }
        let mut r = v.clone();
        for _ in 0..2 {
            for q in &kept {
                let c = q.inner(&r);
                r = &r - &q.scale(c);
            }
        }
        let n = r.norm();
        if n < tol.eps_ortho {
            continue;
        }
        kept.push(r.scale(Complex64::new(1.0 / n, 0.0)));
    }
    Ok(kept)
}

/// Orthogonal projector onto the span of an orthonormal basis.
pub fn projector(basis: &[StateVector], tol: &Tolerance) -> Result<ComplexMatrix> {
    if basis.is_empty() {
        return Err(Error::Invalid("projector of empty basis".into()));
    }
    let dim = basis[0].dim();
    for (i, a) in basis.iter().enumerate() {
        if a.dim() != dim {
            return Err(Error::Dimension("projector: mixed vector dimensions".into()));
        }
        for (j, b) in basis.iter().enumerate().skip(i) {
            let g = a.inner(b);
            let want = if i == j { 1.0 } else { 0.0 };
            let dev = (g - Complex64::new(want, 0.0)).norm();
            let bound = if i == j { tol.eps_eq } else { tol.eps_ortho };
            if dev > bound {
                return Err(Error::NotOrthonormal(format!(
                    "<b{i}|b{j}> = {g} deviates by {dev:.3e}"
                )));
            }
        }
    }
    let mut p = ComplexMatrix::zeros(dim, dim);
    for b in basis {
        p = &p + &b.outer(b);
    }
    Ok(p)
}

/// How far a Hermitian matrix is from positive semidefinite:
/// max(0, -lambda_min). Non-Hermitian input is rejected.
pub fn psd_defect(m: &ComplexMatrix, tol: &Tolerance) -> Result<f64> {
    if !m.is_square() {
        return Err(Error::Dimension("psd_defect of non-square matrix".into()));
    }
    let defect = m.hermitian_defect();
    if defect > tol.eps_eq {
        return Err(Error::NotHermitian { defect });
    }
    // Symmetrise before the eigensolve so rounding dust cannot bias lambda_min.
    let sym = m.adjoint();
    let h = (&(m + &sym)).scale(Complex64::new(0.5, 0.0));
    let lambda_min = eigen::min_eigenvalue_hermitian(&h);
    Ok((-lambda_min).max(0.0))
}

#[derive(Serialize, Deserialize)]
struct MatrixRepr {
    rows: usize,
    cols: usize,
    data: Vec<[f64; 2]>,
}

impl From<ComplexMatrix> for MatrixRepr {
    fn from(m: ComplexMatrix) -> Self {
        MatrixRepr {
            rows: m.rows,
            cols: m.cols,
            data: m.data.iter().map(|z| [z.re, z.im]).collect(),
        }
    }
}

impl TryFrom<MatrixRepr> for ComplexMatrix {
    type Error = Error;
    fn try_from(r: MatrixRepr) -> Result<Self> {
        ComplexMatrix::new(
            r.rows,
            r.cols,
            r.data.iter().map(|&[re, im]| Complex64::new(re, im)).collect(),
        )
    }
}

#[derive(Serialize, Deserialize)]
struct VectorRepr {
    rows: usize,
    cols: usize,
    data: Vec<[f64; 2]>,
    factor_dims: Vec<usize>,
}

impl From<StateVector> for VectorRepr {
    fn from(v: StateVector) -> Self {
        VectorRepr {
            rows: v.amplitudes.len(),
            cols: 1,
            data: v.amplitudes.iter().map(|z| [z.re, z.im]).collect(),
            factor_dims: v.factor_dims,
        }
    }
}

impl TryFrom<VectorRepr> for StateVector {
    type Error = Error;
    fn try_from(r: VectorRepr) -> Result<Self> {
        if r.cols != 1 || r.rows != r.data.len() {
            return Err(Error::Dimension(format!(
                "vector must be {}x1 with matching data, got {}x{}",
                r.data.len(),
                r.rows,
                r.cols
            )));
        }
        StateVector::new(
            r.data.iter().map(|&[re, im]| Complex64::new(re, im)).collect(),
            r.factor_dims,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tol() -> Tolerance {
        Tolerance::default()
    }

    fn ket(amp: &[(f64, f64)], dims: &[usize]) -> StateVector {
        StateVector::new(amp.iter().map(|&(re, im)| cx(re, im)).collect(), dims.to_vec()).unwrap()
    }

    #[test]
    fn tensor_of_identities_is_identity() {
        let i2 = ComplexMatrix::identity(2);
        assert_eq!(i2.tensor(&i2), ComplexMatrix::identity(4));
    }

    #[test]
    fn tensor_of_basis_kets() {
        let zero = StateVector::basis_state(&[2], 0).unwrap();
        let one = StateVector::basis_state(&[2], 1).unwrap();
        let t = zero.tensor(&one);
        assert_eq!(t.factor_dims(), &[2, 2]);
        assert_eq!(t.amplitudes()[1], cx(1.0, 0.0));
        assert_eq!(t.norm(), 1.0);
    }

    #[test]
    fn tensor_block_structure() {
        let a = ComplexMatrix::from_rows(&[
            vec![cx(1.0, 0.0), cx(2.0, 0.0)],
            vec![cx(0.0, 1.0), cx(0.0, 0.0)],
        ])
        .unwrap();
        let b = ComplexMatrix::from_rows(&[
            vec![cx(1.0, 0.0), cx(0.0, 0.0), cx(0.0, 0.0)],
            vec![cx(0.0, 0.0), cx(1.0, 0.0), cx(0.0, 0.0)],
            vec![cx(0.0, 0.0), cx(0.0, 0.0), cx(1.0, 0.0)],
        ])
        .unwrap();
        let t = a.tensor(&b);
        assert_eq!((t.rows(), t.cols()), (6, 6));
        assert_eq!(t.get(0, 3), cx(2.0, 0.0));
        assert_eq!(t.get(4, 1), cx(0.0, 1.0));
        assert_eq!(t.get(5, 5), cx(0.0, 0.0));
    }

    #[test]
    fn adjoint_of_identity() {
        let i3 = ComplexMatrix::identity(3);
        assert_eq!(i3.adjoint(), i3);
    }

    #[test]
    fn adjoint_swaps_and_conjugates() {
        let m = ComplexMatrix::from_rows(&[
            vec![cx(1.0, 0.0), cx(0.25, -0.25)],
            vec![cx(0.25, 0.25), cx(0.0, 0.0)],
        ])
        .unwrap();
        let adj = m.adjoint();
        assert_eq!(adj.get(1, 0), cx(0.25, 0.25));
        assert_eq!(adj.get(0, 1), cx(0.25, -0.25));
        // Hermitian input is a fixed point.
        assert!(m.max_abs_diff(&adj) == 0.0);
    }

    #[test]
    fn orthonormalize_drops_duplicates() {
        let zero = StateVector::basis_state(&[2], 0).unwrap();
        let out = orthonormalize(&[zero.clone(), zero.clone()], &tol()).unwrap();
        assert_eq!(out.len(), 1);
        assert!(out[0].max_abs_diff(&zero) < 1e-15);
    }

    #[test]
    fn orthonormalize_leaves_orthonormal_input_unchanged() {
        let zero = StateVector::basis_state(&[2], 0).unwrap();
        let one = StateVector::basis_state(&[2], 1).unwrap();
        let out = orthonormalize(&[zero.clone(), one.clone()], &tol()).unwrap();
        assert_eq!(out.len(), 2);
        assert!(out[0].max_abs_diff(&zero) < 1e-15);
        assert!(out[1].max_abs_diff(&one) < 1e-15);
    }

    #[test]
    fn orthonormalize_completes_overlapping_pair() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let zero = StateVector::basis_state(&[2], 0).unwrap();
        let plus = ket(&[(s, 0.0), (s, 0.0)], &[2]);
        let out = orthonormalize(&[zero.clone(), plus], &tol()).unwrap();
        assert_eq!(out.len(), 2);
        let one = StateVector::basis_state(&[2], 1).unwrap();
        assert!(out[0].max_abs_diff(&zero) < 1e-12);
        assert!(out[1].max_abs_diff(&one) < 1e-12);
    }

    #[test]
    fn projector_of_single_ket() {
        let zero = StateVector::basis_state(&[2], 0).unwrap();
        let p = projector(&[zero], &tol()).unwrap();
        let want = ComplexMatrix::from_rows(&[
            vec![cx(1.0, 0.0), cx(0.0, 0.0)],
            vec![cx(0.0, 0.0), cx(0.0, 0.0)],
        ])
        .unwrap();
        assert!(p.max_abs_diff(&want) == 0.0);
    }

    #[test]
    fn projector_of_full_basis_is_identity() {
        let basis: Vec<_> = (0..4)
            .map(|i| StateVector::basis_state(&[2, 2], i).unwrap())
            .collect();
        let p = projector(&basis, &tol()).unwrap();
        assert!(p.max_abs_diff(&ComplexMatrix::identity(4)) == 0.0);
    }

    #[test]
    fn projector_of_bell_state_has_unit_trace() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let bell = ket(&[(s, 0.0), (0.0, 0.0), (0.0, 0.0), (s, 0.0)], &[2, 2]);
        let p = projector(&[bell], &tol()).unwrap();
        assert!((p.trace() - cx(1.0, 0.0)).norm() < 1e-12);
        // rank one: P^2 = P
        assert!((&p * &p).max_abs_diff(&p) < 1e-12);
    }

    #[test]
    fn projector_rejects_non_orthonormal_input() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let zero = StateVector::basis_state(&[2], 0).unwrap();
        let plus = ket(&[(s, 0.0), (s, 0.0)], &[2]);
        assert!(matches!(
            projector(&[zero, plus], &tol()),
            Err(Error::NotOrthonormal(_))
        ));
    }

    #[test]
    fn psd_defect_of_identity_is_zero() {
        assert_eq!(psd_defect(&ComplexMatrix::identity(3), &tol()).unwrap(), 0.0);
    }

    #[test]
    fn psd_defect_reports_most_negative_eigenvalue() {
        let m = ComplexMatrix::from_rows(&[
            vec![cx(1.0, 0.0), cx(0.0, 0.0)],
            vec![cx(0.0, 0.0), cx(-0.5, 0.0)],
        ])
        .unwrap();
        let d = psd_defect(&m, &tol()).unwrap();
        assert!((d - 0.5).abs() < 1e-12);
    }

    #[test]
    fn psd_defect_rejects_non_hermitian() {
        let m = ComplexMatrix::from_rows(&[
            vec![cx(0.0, 0.0), cx(1.0, 0.0)],
            vec![cx(0.0, 0.0), cx(0.0, 0.0)],
        ])
        .unwrap();
        assert!(matches!(psd_defect(&m, &tol()), Err(Error::NotHermitian { .. })));
    }

    #[test]
    fn vector_json_round_trip_keeps_factor_dims() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let bell = ket(&[(s, 0.0), (0.0, 0.0), (0.0, 0.0), (s, 0.0)], &[2, 2]);
        let text = serde_json::to_string(&bell).unwrap();
        assert!(text.contains("\"factor_dims\":[2,2]"));
        let back: StateVector = serde_json::from_str(&text).unwrap();
        assert_eq!(back, bell);
    }

    #[test]
    fn matrix_json_shape_is_validated() {
        let bad = r#"{"rows":2,"cols":2,"data":[[1.0,0.0]]}"#;
        assert!(serde_json::from_str::<ComplexMatrix>(bad).is_err());
    }

    #[test]
    fn constructors_reject_non_finite() {
        assert!(ComplexMatrix::new(1, 1, vec![cx(f64::NAN, 0.0)]).is_err());
        assert!(StateVector::new(vec![cx(f64::INFINITY, 0.0)], vec![1]).is_err());
    }

    fn small_complex() -> impl Strategy<Value = Complex64> {
        (-1.0f64..1.0, -1.0f64..1.0).prop_map(|(re, im)| cx(re, im))
    }

    fn small_matrix(n: usize) -> impl Strategy<Value = ComplexMatrix> {
        proptest::collection::vec(small_complex(), n * n)
            .prop_map(move |data| ComplexMatrix::new(n, n, data).unwrap())
    }

    proptest! {
        #[test]
        fn adjoint_is_an_involution(m in small_matrix(3)) {
            prop_assert!(m.adjoint().adjoint().max_abs_diff(&m) == 0.0);
        }

        #[test]
        fn tensor_is_associative(a in small_matrix(2), b in small_matrix(2), c in small_matrix(2)) {
            let left = a.tensor(&b).tensor(&c);
            let right = a.tensor(&b.tensor(&c));
            prop_assert!(left.max_abs_diff(&right) < 1e-12);
        }

        #[test]
        fn gram_of_orthonormalized_output_is_identity(
            raw in proptest::collection::vec(proptest::collection::vec(small_complex(), 4), 1..5)
        ) {
            let vecs: Vec<StateVector> = raw
                .into_iter()
                .map(|amps| StateVector::new(amps, vec![4]).unwrap())
                .collect();
            let out = orthonormalize(&vecs, &tol()).unwrap();
            for (i, a) in out.iter().enumerate() {
                for (j, b) in out.iter().enumerate() {
                    let want = if i == j { 1.0 } else { 0.0 };
                    prop_assert!((a.inner(b) - cx(want, 0.0)).norm() < 1e-9);
                }
            }
            // Idempotence: a second pass keeps the basis.
            let again = orthonormalize(&out, &tol()).unwrap();
            prop_assert_eq!(again.len(), out.len());
            for (a, b) in again.iter().zip(&out) {
                prop_assert!(a.max_abs_diff(b) < 1e-9);
            }
        }

        #[test]
        fn projector_is_idempotent_and_hermitian(
            raw in proptest::collection::vec(proptest::collection::vec(small_complex(), 4), 1..4)
        ) {
            let vecs: Vec<StateVector> = raw
                .into_iter()
                .map(|amps| StateVector::new(amps, vec![4]).unwrap())
                .collect();
            let basis = orthonormalize(&vecs, &tol()).unwrap();
            prop_assume!(!basis.is_empty());
            let p = projector(&basis, &tol()).unwrap();
            prop_assert!((&p * &p).max_abs_diff(&p) < 1e-9);
            prop_assert!(p.hermitian_defect() < 1e-12);
        }

        #[test]
        fn psd_defect_of_gram_like_matrix_is_zero(m in small_matrix(3)) {
            let psd = &m.adjoint() * &m;
            let d = psd_defect(&psd, &tol()).unwrap();
            prop_assert!(d <= 1e-10);
        }
    }
}

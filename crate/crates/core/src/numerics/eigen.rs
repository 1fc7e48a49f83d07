//! Smallest eigenvalue of a Hermitian matrix via cyclic Jacobi sweeps on the
//! real symmetric embedding [[X, -Y], [Y, X]] of A = X + iY. The embedding
//! doubles every eigenvalue's multiplicity, which leaves the minimum intact.

use num_complex::Complex64;

use super::ComplexMatrix;

pub(crate) fn min_eigenvalue_hermitian(m: &ComplexMatrix) -> f64 {
    assert!(m.is_square(), "eigenvalues of non-square matrix");
    let n = m.rows();
    let nn = 2 * n;
    let mut a = vec![0.0f64; nn * nn];
    for r in 0..n {
        for c in 0..n {
            let z: Complex64 = m.get(r, c);
            a[r * nn + c] = z.re;
            a[(r + n) * nn + (c + n)] = z.re;
            a[r * nn + (c + n)] = -z.im;
            a[(r + n) * nn + c] = z.im;
        }
    }
    jacobi_diagonal(&mut a, nn).into_iter().fold(f64::INFINITY, f64::min)
}

/// Runs Jacobi rotations until the off-diagonal mass is negligible, then
/// returns the diagonal. Rotation order is fixed, so the result is
/// deterministic.
fn jacobi_diagonal(a: &mut [f64], n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a[0]];
    }
    let scale = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    for _sweep in 0..60 {
        let off: f64 = {
            let mut s = 0.0;
            for r in 0..n {
                for c in (r + 1)..n {
                    s += a[r * n + c] * a[r * n + c];
                }
            }
            s.sqrt()
        };
        if off <= 1e-15 * scale {
            break;
        }
        for p in 0..n - 1 {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (1.0 + theta * theta).sqrt())
                } else {
                    1.0 / (theta - (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..n).map(|i| a[i * n + i]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::cx;

    #[test]
    fn diagonal_matrix_eigenvalues() {
        let m = ComplexMatrix::from_rows(&[
            vec![cx(3.0, 0.0), cx(0.0, 0.0)],
            vec![cx(0.0, 0.0), cx(-2.0, 0.0)],
        ])
        .unwrap();
        assert!((min_eigenvalue_hermitian(&m) + 2.0).abs() < 1e-12);
    }

    #[test]
    fn pauli_y_eigenvalues_are_plus_minus_one() {
        let m = ComplexMatrix::from_rows(&[
            vec![cx(0.0, 0.0), cx(0.0, -1.0)],
            vec![cx(0.0, 1.0), cx(0.0, 0.0)],
        ])
        .unwrap();
        assert!((min_eigenvalue_hermitian(&m) + 1.0).abs() < 1e-12);
    }

    #[test]
    fn known_3x3_hermitian_spectrum() {
        // A = diag(1,2,4) conjugated by a rotation in the (0,2) plane keeps
        // eigenvalue 1 at the bottom.
        let c = 0.6;
        let s = 0.8;
        let m = ComplexMatrix::from_rows(&[
            vec![cx(c * c + 4.0 * s * s, 0.0), cx(0.0, 0.0), cx(3.0 * c * s, 0.0)],
            vec![cx(0.0, 0.0), cx(2.0, 0.0), cx(0.0, 0.0)],
            vec![cx(3.0 * c * s, 0.0), cx(0.0, 0.0), cx(s * s + 4.0 * c * c, 0.0)],
        ])
        .unwrap();
        assert!((min_eigenvalue_hermitian(&m) - 1.0).abs() < 1e-10);
    }
}

//! Symmetric eigendecomposition (cyclic Jacobi rotations), matrix square
//! roots of PSD matrices, exact singular values, and orthonormal bases.
//!
//! These routines back the distribution-distance evaluator and the
//! weight-conditioning instrumentation. They are exact (iterated to
//! convergence) rather than stochastic, so they double as reference oracles
//! for the faster power-iteration path used during training.

use crate::error::{Error, Result};
use crate::matrix::{dot, norm, Matrix};

/// Eigendecomposition of a symmetric matrix: `a == v * diag(values) * v^T`.
pub struct SymEig {
    /// Eigenvalues in descending order.
    pub values: Vec<f64>,
    /// Column k of `vectors` is the eigenvector for `values[k]`.
    pub vectors: Matrix,
}

/// Cyclic Jacobi eigensolver for symmetric matrices.
///
/// Sweeps all off-diagonal pairs, rotating each to zero, until the
/// off-diagonal Frobenius mass falls below `tol` relative to the matrix
/// scale. Converges quadratically once the off-diagonal is small.
pub fn sym_eig(a: &Matrix, tol: f64) -> Result<SymEig> {
    let n = a.rows();
    if a.cols() != n {
        return Err(Error::Contract(format!(
            "sym_eig requires a square matrix, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    if n == 0 {
        return Err(Error::EmptyDimension { op: "sym_eig", rows: 0, cols: 0 });
    }
    let mut max_asym = 0.0_f64;
    for i in 0..n {
        for j in (i + 1)..n {
            max_asym = max_asym.max((a.get(i, j) - a.get(j, i)).abs());
        }
    }
    let scale = a.max_abs().max(1e-300);
    if max_asym > 1e-8 * scale {
        return Err(Error::Contract(format!(
            "sym_eig requires a symmetric matrix (max asymmetry {max_asym:.3e})"
        )));
    }

    let mut m = a.clone();
    // Symmetrize exactly so rotations preserve symmetry bit-for-bit.
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m.get(i, j) + m.get(j, i));
            m.set(i, j, avg);
            m.set(j, i, avg);
        }
    }
    let mut v = Matrix::identity(n);

    let max_sweeps = 100;
    for _ in 0..max_sweeps {
        let mut off = 0.0_f64;
        for i in 0..n {
            for j in (i + 1)..n {
                off += m.get(i, j) * m.get(i, j);
            }
        }
        if (2.0 * off).sqrt() <= tol * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m.get(p, q);
                if apq.abs() <= f64::MIN_POSITIVE {
                    continue;
                }
                let app = m.get(p, p);
                let aqq = m.get(q, q);
                // Classic stable rotation: t = sign(theta) / (|theta| + sqrt(theta^2 + 1)).
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (1.0 + theta * theta).sqrt())
                } else {
                    -1.0 / (-theta + (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;

                for k in 0..n {
                    let mkp = m.get(k, p);
                    let mkq = m.get(k, q);
                    m.set(k, p, c * mkp - s * mkq);
                    m.set(k, q, s * mkp + c * mkq);
                }
                for k in 0..n {
                    let mpk = m.get(p, k);
                    let mqk = m.get(q, k);
                    m.set(p, k, c * mpk - s * mqk);
                    m.set(q, k, s * mpk + c * mqk);
                }
                for k in 0..n {
                    let vkp = v.get(k, p);
                    let vkq = v.get(k, q);
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m.get(j, j).partial_cmp(&m.get(i, i)).unwrap());
    let values: Vec<f64> = order.iter().map(|&k| m.get(k, k)).collect();
    let vectors = Matrix::from_fn(n, n, |i, k| v.get(i, order[k]));
    Ok(SymEig { values, vectors })
}

/// Principal square root of a symmetric PSD matrix.
///
/// Small negative eigenvalues (from floating-point noise) are clamped to
/// zero before taking the root; a genuinely indefinite matrix is rejected.
pub fn sqrtm_psd(a: &Matrix, tol: f64) -> Result<Matrix> {
    let eig = sym_eig(a, tol)?;
    let scale = eig.values.iter().fold(0.0_f64, |m, &x| m.max(x.abs()));
    let floor = -1e-8 * scale.max(1.0);
    let mut roots = Vec::with_capacity(eig.values.len());
    for &lam in &eig.values {
        if lam < floor {
            return Err(Error::Contract(format!(
                "sqrtm_psd requires a PSD matrix (eigenvalue {lam:.3e})"
            )));
        }
        roots.push(lam.max(0.0).sqrt());
    }
    let n = a.rows();
    // v * diag(roots) * v^T
    let mut scaled = eig.vectors.clone();
    for i in 0..n {
        for k in 0..n {
            scaled.set(i, k, scaled.get(i, k) * roots[k]);
        }
    }
    Ok(scaled.matmul_nt(&eig.vectors))
}

/// Exact largest singular value of an arbitrary matrix: sqrt(lambda_max(W^T W)).
pub fn largest_singular_value(w: &Matrix) -> Result<f64> {
    if w.rows() == 0 || w.cols() == 0 {
        return Err(Error::EmptyDimension {
            op: "largest_singular_value",
            rows: w.rows(),
            cols: w.cols(),
        });
    }
    // Work with the smaller Gram matrix.
    let gram = if w.rows() >= w.cols() {
        w.matmul_tn(w)
    } else {
        w.matmul_nt(w)
    };
    let eig = sym_eig(&gram, 1e-14)?;
    Ok(eig.values[0].max(0.0).sqrt())
}

/// Trace of a square matrix.
pub fn trace(a: &Matrix) -> f64 {
    assert_eq!(a.rows(), a.cols(), "trace of non-square matrix");
    (0..a.rows()).map(|i| a.get(i, i)).sum()
}

/// Orthonormalize the rows of `a` in place with modified Gram-Schmidt.
///
/// Requires rows <= cols and linearly independent rows (up to `tol`);
/// used to build orthogonal initial weights from Gaussian draws.
pub fn orthonormalize_rows(a: &mut Matrix, tol: f64) -> Result<()> {
    let (rows, cols) = a.shape();
    if rows > cols {
        return Err(Error::Contract(format!(
            "cannot orthonormalize {rows} rows of length {cols}"
        )));
    }
    for i in 0..rows {
        for j in 0..i {
            let proj = dot(a.row(i), a.row(j));
            let row_j = a.row(j).to_vec();
            for (x, &y) in a.row_mut(i).iter_mut().zip(&row_j) {
                *x -= proj * y;
            }
        }
        let nrm = norm(a.row(i));
        if nrm < tol {
            return Err(Error::DegenerateEmbedding { row: i, norm: nrm });
        }
        let inv = 1.0 / nrm;
        for x in a.row_mut(i) {
            *x *= inv;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reconstruct(eig: &SymEig) -> Matrix {
        let n = eig.values.len();
        let mut scaled = eig.vectors.clone();
        for i in 0..n {
            for k in 0..n {
                scaled.set(i, k, scaled.get(i, k) * eig.values[k]);
            }
        }
        scaled.matmul_nt(&eig.vectors)
    }

    #[test]
    fn eig_reconstructs_symmetric_matrix() {
        let a = Matrix::from_rows(&[
            vec![4.0, 1.0, -2.0],
            vec![1.0, 2.0, 0.0],
            vec![-2.0, 0.0, 3.0],
        ]);
        let eig = sym_eig(&a, 1e-14).unwrap();
        let back = reconstruct(&eig);
        for (x, y) in a.data().iter().zip(back.data()) {
            assert!((x - y).abs() < 1e-10, "{x} vs {y}");
        }
        // Eigenvalues descending.
        for w in eig.values.windows(2) {
            assert!(w[0] >= w[1]);
        }
    }

    #[test]
    fn eig_of_diagonal_is_sorted_diagonal() {
        let a = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 5.0]]);
        let eig = sym_eig(&a, 1e-14).unwrap();
        assert!((eig.values[0] - 5.0).abs() < 1e-12);
        assert!((eig.values[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sqrtm_squares_back() {
        // PSD by construction: B^T B.
        let b = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![0.5, -1.0]]);
        let a = b.matmul_tn(&b);
        let r = sqrtm_psd(&a, 1e-14).unwrap();
        let back = r.matmul(&r);
        for (x, y) in a.data().iter().zip(back.data()) {
            assert!((x - y).abs() < 1e-9, "{x} vs {y}");
        }
    }

    #[test]
    fn sqrtm_rejects_indefinite() {
        let a = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, -1.0]]);
        assert!(sqrtm_psd(&a, 1e-14).is_err());
    }

    #[test]
    fn singular_value_of_diagonal() {
        let w = Matrix::from_rows(&[vec![3.0, 0.0, 0.0], vec![0.0, -7.0, 0.0]]);
        let s = largest_singular_value(&w).unwrap();
        assert!((s - 7.0).abs() < 1e-10);
    }

    #[test]
    fn gram_schmidt_produces_orthonormal_rows() {
        let mut a = Matrix::from_rows(&[
            vec![1.0, 1.0, 0.0, 0.0],
            vec![1.0, 0.0, 1.0, 0.0],
            vec![0.0, 1.0, 1.0, 1.0],
        ]);
        orthonormalize_rows(&mut a, 1e-12).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let d = dot(a.row(i), a.row(j));
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((d - want).abs() < 1e-12, "<r{i},r{j}> = {d}");
            }
        }
    }
}

//! Slow, transparent reference implementations used to validate the fast
//! paths. Everything here is a direct transcription of the defining
//! formulas: scalar double loops, naive `exp`/`ln` with no max-subtraction,
//! no masking tricks, no shared code with the tape-based losses or the
//! iterative linear algebra. Tests freeze values computed by these functions
//! and require the production code to reproduce them.

use crate::matrix::{dot, norm, Matrix};

/// log(sum(exp(xs))) computed the naive way. Overflows for large inputs by
/// design; the production log-sum-exp must match it wherever it is finite.
pub fn lse_naive(xs: &[f64]) -> f64 {
    xs.iter().map(|&x| x.exp()).sum::<f64>().ln()
}

fn normalized_rows(m: &Matrix) -> Matrix {
    let mut out = m.clone();
    for i in 0..out.rows() {
        let n = norm(out.row(i));
        assert!(n > 0.0, "oracle: zero row {i}");
        for x in out.row_mut(i) {
            *x /= n;
        }
    }
    out
}

/// Pair-based contrastive loss over an even number of rows, where rows
/// (2k, 2k+1) are views of the same sample. Cosine similarities, temperature
/// `t`; the positive for anchor i is its partner, the denominator runs over
/// every other row.
pub fn nt_xent_naive(features: &Matrix, t: f64) -> f64 {
    let n = features.rows();
    assert!(n >= 2 && n % 2 == 0, "oracle: need an even row count >= 2");
    let f = normalized_rows(features);
    let mut total = 0.0;
    for i in 0..n {
        let partner = if i % 2 == 0 { i + 1 } else { i - 1 };
        let num = (dot(f.row(i), f.row(partner)) / t).exp();
        let mut den = 0.0;
        for j in 0..n {
            if j != i {
                den += (dot(f.row(i), f.row(j)) / t).exp();
            }
        }
        total += -(num / den).ln();
    }
    total / n as f64
}

/// Class-proxy contrastive loss: the numerator holds only the anchor's own
/// class-embedding term, the denominator adds every other sample.
pub fn data_to_class_naive(features: &Matrix, labels: &[usize], table: &Matrix, t: f64) -> f64 {
    let m = features.rows();
    assert!(m >= 1 && labels.len() == m);
    let f = normalized_rows(features);
    let e = normalized_rows(table);
    let mut total = 0.0;
    for i in 0..m {
        let proxy = (dot(f.row(i), e.row(labels[i])) / t).exp();
        let mut den = proxy;
        for k in 0..m {
            if k != i {
                den += (dot(f.row(i), f.row(k)) / t).exp();
            }
        }
        total += -(proxy / den).ln();
    }
    total / m as f64
}

/// Conditional contrastive loss: like [`data_to_class_naive`] but the
/// numerator also gathers every other same-label sample, so label-sharing
/// batch members count as positives.
pub fn conditional_contrastive_naive(
    features: &Matrix,
    labels: &[usize],
    table: &Matrix,
    t: f64,
) -> f64 {
    let m = features.rows();
    assert!(m >= 1 && labels.len() == m);
    let f = normalized_rows(features);
    let e = normalized_rows(table);
    let mut total = 0.0;
    for i in 0..m {
        let proxy = (dot(f.row(i), e.row(labels[i])) / t).exp();
        let mut num = proxy;
        let mut den = proxy;
        for k in 0..m {
            if k != i {
                let s = (dot(f.row(i), f.row(k)) / t).exp();
                den += s;
                if labels[k] == labels[i] {
                    num += s;
                }
            }
        }
        total += -(num / den).ln();
    }
    total / m as f64
}

/// Augmented-anchor conditional contrastive loss: like
/// [`conditional_contrastive_naive`] but row i's positive reference term is
/// its similarity with `augmented[i]` instead of a class-embedding row.
pub fn conditional_contrastive_augmented_naive(
    features: &Matrix,
    augmented: &Matrix,
    labels: &[usize],
    t: f64,
) -> f64 {
    let m = features.rows();
    assert!(m >= 1 && labels.len() == m && augmented.shape() == features.shape());
    let f = normalized_rows(features);
    let a = normalized_rows(augmented);
    let mut total = 0.0;
    for i in 0..m {
        let anchor = (dot(f.row(i), a.row(i)) / t).exp();
        let mut num = anchor;
        let mut den = anchor;
        for k in 0..m {
            if k != i {
                let s = (dot(f.row(i), f.row(k)) / t).exp();
                den += s;
                if labels[k] == labels[i] {
                    num += s;
                }
            }
        }
        total += -(num / den).ln();
    }
    total / m as f64
}

/// Proxy-neighborhood loss: target-proxy similarity against the non-target
/// proxies only, cosine similarities, no temperature. Can be negative.
pub fn proxy_nca_naive(features: &Matrix, labels: &[usize], table: &Matrix) -> f64 {
    let m = features.rows();
    let c = table.rows();
    assert!(m >= 1 && c >= 2 && labels.len() == m);
    let f = normalized_rows(features);
    let e = normalized_rows(table);
    let mut total = 0.0;
    for i in 0..m {
        let num = dot(f.row(i), e.row(labels[i])).exp();
        let mut den = 0.0;
        for y in 0..c {
            if y != labels[i] {
                den += dot(f.row(i), e.row(y)).exp();
            }
        }
        total += -(num / den).ln();
    }
    total / m as f64
}

/// Mean softmax cross-entropy of raw logits against integer labels.
pub fn softmax_cross_entropy_naive(logits: &Matrix, labels: &[usize]) -> f64 {
    let m = logits.rows();
    assert!(m >= 1 && labels.len() == m);
    let mut total = 0.0;
    for i in 0..m {
        assert!(labels[i] < logits.cols());
        let den: f64 = logits.row(i).iter().map(|&x| x.exp()).sum();
        let num = logits.get(i, labels[i]).exp();
        total += -(num / den).ln();
    }
    total / m as f64
}

/// Principal square root of a symmetric PSD 2x2 matrix, in closed form:
/// sqrt(M) = (M + sqrt(det) I) / sqrt(tr + 2 sqrt(det)).
pub fn sqrtm_2x2(m: &Matrix) -> Matrix {
    assert_eq!(m.shape(), (2, 2));
    let det = m.get(0, 0) * m.get(1, 1) - m.get(0, 1) * m.get(1, 0);
    assert!(det >= -1e-12, "oracle: negative determinant {det}");
    let s = det.max(0.0).sqrt();
    let tr = m.get(0, 0) + m.get(1, 1);
    let denom = (tr + 2.0 * s).sqrt();
    assert!(denom > 0.0, "oracle: zero matrix has no well-scaled root here");
    let mut out = m.clone();
    out.set(0, 0, out.get(0, 0) + s);
    out.set(1, 1, out.get(1, 1) + s);
    out.scale_in_place(1.0 / denom);
    out
}

/// Squared Gaussian transport distance between two 2-D Gaussians, assembled
/// from the closed-form 2x2 square root:
/// d^2 = |mu_a - mu_b|^2 + tr(S_a + S_b - 2 (S_a^1/2 S_b S_a^1/2)^1/2).
pub fn frechet_2x2(mu_a: &[f64], cov_a: &Matrix, mu_b: &[f64], cov_b: &Matrix) -> f64 {
    assert_eq!(mu_a.len(), 2);
    assert_eq!(mu_b.len(), 2);
    let dmu: f64 = mu_a
        .iter()
        .zip(mu_b)
        .map(|(&x, &y)| (x - y) * (x - y))
        .sum();
    let ra = sqrtm_2x2(cov_a);
    let inner = ra.matmul(cov_b).matmul(&ra);
    // Symmetrize away roundoff before the second root.
    let mut sym = inner.clone();
    let avg = 0.5 * (inner.get(0, 1) + inner.get(1, 0));
    sym.set(0, 1, avg);
    sym.set(1, 0, avg);
    let cross = sqrtm_2x2(&sym);
    let tr = cov_a.get(0, 0) + cov_a.get(1, 1) + cov_b.get(0, 0) + cov_b.get(1, 1)
        - 2.0 * (cross.get(0, 0) + cross.get(1, 1));
    dmu + tr
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lse_of_two_zeros_is_ln_two() {
        assert!((lse_naive(&[0.0, 0.0]) - 2.0_f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn sqrtm_2x2_squares_back() {
        let m = Matrix::from_rows(&[vec![2.0, 0.5], vec![0.5, 1.0]]);
        let r = sqrtm_2x2(&m);
        let back = r.matmul(&r);
        for (x, y) in m.data().iter().zip(back.data()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn frechet_identical_gaussians_is_zero() {
        let cov = Matrix::from_rows(&[vec![1.5, 0.2], vec![0.2, 0.8]]);
        let d = frechet_2x2(&[0.3, -0.7], &cov, &[0.3, -0.7], &cov);
        assert!(d.abs() < 1e-10, "{d}");
    }

    #[test]
    fn frechet_mean_shift_only() {
        // Equal covariances: distance reduces to the squared mean gap.
        let cov = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        let d = frechet_2x2(&[0.0, 0.0], &cov, &[3.0, 4.0], &cov);
        assert!((d - 25.0).abs() < 1e-9, "{d}");
    }

    #[test]
    fn frechet_isotropic_scale_gap() {
        // Known closed form for sigma^2 I vs tau^2 I: 2 (sigma - tau)^2.
        let a = Matrix::from_rows(&[vec![4.0, 0.0], vec![0.0, 4.0]]);
        let b = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        let d = frechet_2x2(&[0.0, 0.0], &a, &[0.0, 0.0], &b);
        assert!((d - 2.0).abs() < 1e-10, "{d}");
    }
}

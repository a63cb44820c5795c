//! Conditioning losses for the adversarial trainer, all recorded on the
//! autodiff tape so gradients flow to whichever network produced the
//! embeddings.
//!
//! The contrastive family shares one skeleton: cosine similarities at a
//! temperature, a numerator of positive terms and a denominator of positive
//! plus negative terms, both collapsed with a stabilized row-wise
//! log-sum-exp, loss = mean(log denominator - log numerator). Term selection
//! is done with additive masks (a large negative constant zeroes a term's
//! exp weight exactly in f64, gradient included) rather than data-dependent
//! graph shapes, so every batch records the same op sequence.

use crate::autodiff::{Tape, Tensor};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Added to a similarity to exclude it from a log-sum-exp. Large enough that
/// `exp(MASK + s)` underflows to exactly 0.0 for any similarity this module
/// produces, so masked terms contribute neither value nor gradient.
pub const ADDITIVE_MASK: f64 = -1e30;

fn check_temperature(t: f64) -> Result<()> {
    if !(t.is_finite() && t > 0.0) {
        return Err(Error::Contract(format!("temperature must be finite and positive, got {t}")));
    }
    Ok(())
}

fn check_labels(labels: &[usize], rows: usize, num_classes: usize) -> Result<()> {
    if labels.len() != rows {
        return Err(Error::Contract(format!(
            "{} labels for {} feature rows",
            labels.len(),
            rows
        )));
    }
    for &y in labels {
        if y >= num_classes {
            return Err(Error::LabelOutOfRange { label: y, num_classes });
        }
    }
    Ok(())
}

fn check_embedding_dims(op: &'static str, features: Tensor, table: Tensor) -> Result<()> {
    if table.cols() != features.cols() {
        return Err(Error::ShapeMismatch {
            op,
            lhs_rows: features.rows(),
            lhs_cols: features.cols(),
            rhs_rows: table.rows(),
            rhs_cols: table.cols(),
        });
    }
    Ok(())
}

/// Cosine similarity of each feature row with its own class embedding,
/// scaled by 1/t: m x 1. Both inputs are row-normalized here.
fn proxy_similarities(
    tape: &mut Tape,
    features: Tensor,
    labels: &[usize],
    table: Tensor,
    t: f64,
) -> Result<(Tensor, Tensor)> {
    let l = tape.l2_normalize_rows(features)?;
    let e = tape.l2_normalize_rows(table)?;
    let p = tape.gather_rows(e, labels)?;
    let lp = tape.mul(l, p)?;
    let proxy = tape.sum_rows(lp);
    let proxy_t = tape.scale(proxy, 1.0 / t);
    Ok((l, proxy_t))
}

/// All-pairs cosine similarities of normalized rows, scaled by 1/t: m x m.
fn pairwise_similarities(tape: &mut Tape, normalized: Tensor, t: f64) -> Result<Tensor> {
    let lt = tape.transpose(normalized);
    let sims = tape.matmul(normalized, lt)?;
    Ok(tape.scale(sims, 1.0 / t))
}

fn diagonal_mask(m: usize) -> Matrix {
    Matrix::from_fn(m, m, |i, j| if i == j { ADDITIVE_MASK } else { 0.0 })
}

/// Shared skeleton of the class-conditioned contrastive losses. `anchor_t`
/// is each row's positive reference term (m x 1, already 1/t-scaled): the
/// class-embedding similarity, or the augmented-view similarity. The
/// denominator is the anchor term plus every other sample; the numerator is
/// the anchor term alone, or (when `same_label_positives`) the anchor term
/// plus every other sample sharing the row's label. A single-row batch has
/// numerator == denominator, so its loss is exactly 0.
fn contrastive_core(
    tape: &mut Tape,
    sims_t: Tensor,
    anchor_t: Tensor,
    labels: &[usize],
    same_label_positives: bool,
) -> Result<Tensor> {
    let m = sims_t.rows();
    let self_mask = tape.leaf(&diagonal_mask(m))?;
    let den_body = tape.add(sims_t, self_mask)?;
    let den_all = tape.concat_cols(anchor_t, den_body)?;
    let den_lse = tape.log_sum_exp_rows(den_all);

    let num_lse = if same_label_positives {
        let mask = Matrix::from_fn(m, m, |i, j| {
            if i != j && labels[i] == labels[j] {
                0.0
            } else {
                ADDITIVE_MASK
            }
        });
        let num_mask = tape.leaf(&mask)?;
        let num_body = tape.add(sims_t, num_mask)?;
        let num_all = tape.concat_cols(anchor_t, num_body)?;
        tape.log_sum_exp_rows(num_all)
    } else {
        // A single positive term: its log-sum-exp is the term itself.
        anchor_t
    };

    let per_anchor = tape.sub(den_lse, num_lse)?;
    Ok(tape.mean_all(per_anchor))
}

fn class_contrastive(
    tape: &mut Tape,
    features: Tensor,
    labels: &[usize],
    table: Tensor,
    t: f64,
    same_label_positives: bool,
) -> Result<Tensor> {
    check_temperature(t)?;
    let m = features.rows();
    check_labels(labels, m, table.rows())?;
    check_embedding_dims("class_contrastive", features, table)?;

    let (l, proxy_t) = proxy_similarities(tape, features, labels, table, t)?;
    let sims_t = pairwise_similarities(tape, l, t)?;
    contrastive_core(tape, sims_t, proxy_t, labels, same_label_positives)
}

/// Class-proxy contrastive loss (positives: own class embedding only).
pub fn data_to_class(
    tape: &mut Tape,
    features: Tensor,
    labels: &[usize],
    table: Tensor,
    t: f64,
) -> Result<Tensor> {
    class_contrastive(tape, features, labels, table, t, false)
}

/// Conditional contrastive loss (positives: own class embedding plus every
/// other same-label sample in the batch). Non-negative by construction,
/// since the numerator terms are a subset of the denominator terms.
pub fn conditional_contrastive(
    tape: &mut Tape,
    features: Tensor,
    labels: &[usize],
    table: Tensor,
    t: f64,
) -> Result<Tensor> {
    class_contrastive(tape, features, labels, table, t, true)
}

/// Conditional contrastive loss with the class-embedding term replaced by
/// the similarity to an augmented view of the same sample: row i's positive
/// reference is `augmented[i]` instead of `table[labels[i]]`, and the
/// in-batch same-label positives are kept. No class table is involved.
pub fn conditional_contrastive_augmented(
    tape: &mut Tape,
    features: Tensor,
    augmented: Tensor,
    labels: &[usize],
    t: f64,
) -> Result<Tensor> {
    check_temperature(t)?;
    if features.shape() != augmented.shape() {
        return Err(Error::ShapeMismatch {
            op: "conditional_contrastive_augmented",
            lhs_rows: features.rows(),
            lhs_cols: features.cols(),
            rhs_rows: augmented.rows(),
            rhs_cols: augmented.cols(),
        });
    }
    let m = features.rows();
    if labels.len() != m {
        return Err(Error::Contract(format!("{} labels for {m} feature rows", labels.len())));
    }
    let l = tape.l2_normalize_rows(features)?;
    let a = tape.l2_normalize_rows(augmented)?;
    let la = tape.mul(l, a)?;
    let aug_sims = tape.sum_rows(la);
    let anchor_t = tape.scale(aug_sims, 1.0 / t);
    let sims_t = pairwise_similarities(tape, l, t)?;
    contrastive_core(tape, sims_t, anchor_t, labels, true)
}

/// Pair-based contrastive loss without labels: rows (2k, 2k+1) are views of
/// the same sample, each row's positive is its partner, negatives are all
/// other rows.
pub fn nt_xent(tape: &mut Tape, features: Tensor, t: f64) -> Result<Tensor> {
    check_temperature(t)?;
    let n = features.rows();
    if n % 2 != 0 {
        return Err(Error::Contract(format!(
            "pair-based loss needs an even row count, got {n}"
        )));
    }
    let l = tape.l2_normalize_rows(features)?;
    let sims_t = pairwise_similarities(tape, l, t)?;

    let self_mask = tape.leaf(&diagonal_mask(n))?;
    let den_body = tape.add(sims_t, self_mask)?;
    let den_lse = tape.log_sum_exp_rows(den_body);

    // Positive term: similarity with the partner row (index i ^ 1).
    let partner_onehot = Matrix::from_fn(n, n, |i, j| if j == (i ^ 1) { 1.0 } else { 0.0 });
    let sel = tape.leaf(&partner_onehot)?;
    let picked = tape.mul(sims_t, sel)?;
    let pos = tape.sum_rows(picked);

    let per_anchor = tape.sub(den_lse, pos)?;
    Ok(tape.mean_all(per_anchor))
}

/// Proxy-neighborhood loss: each sample attracts its own class embedding
/// against the other class embeddings only (no in-batch terms, no
/// temperature). The denominator omits the target, so the loss can go
/// negative once the target proxy dominates.
pub fn proxy_nca(
    tape: &mut Tape,
    features: Tensor,
    labels: &[usize],
    table: Tensor,
) -> Result<Tensor> {
    let m = features.rows();
    let c = table.rows();
    if m < 1 {
        return Err(Error::InsufficientSamples { required: 1, actual: m });
    }
    if c < 2 {
        return Err(Error::Contract(format!(
            "proxy loss needs at least 2 classes, table has {c} rows"
        )));
    }
    check_labels(labels, m, c)?;
    check_embedding_dims("proxy_nca", features, table)?;

    let l = tape.l2_normalize_rows(features)?;
    let e = tape.l2_normalize_rows(table)?;
    let et = tape.transpose(e);
    let sims = tape.matmul(l, et)?; // m x C

    let target_onehot = Matrix::from_fn(m, c, |i, j| if j == labels[i] { 1.0 } else { 0.0 });
    let sel = tape.leaf(&target_onehot)?;
    let picked = tape.mul(sims, sel)?;
    let num = tape.sum_rows(picked);

    let target_mask =
        Matrix::from_fn(m, c, |i, j| if j == labels[i] { ADDITIVE_MASK } else { 0.0 });
    let mask = tape.leaf(&target_mask)?;
    let den_body = tape.add(sims, mask)?;
    let den_lse = tape.log_sum_exp_rows(den_body);

    let per_anchor = tape.sub(den_lse, num)?;
    Ok(tape.mean_all(per_anchor))
}

/// Mean softmax cross-entropy of raw logits against integer labels; the
/// auxiliary-classifier objective.
pub fn softmax_cross_entropy(tape: &mut Tape, logits: Tensor, labels: &[usize]) -> Result<Tensor> {
    let m = logits.rows();
    let c = logits.cols();
    if m < 1 {
        return Err(Error::InsufficientSamples { required: 1, actual: m });
    }
    check_labels(labels, m, c)?;
    let lse = tape.log_sum_exp_rows(logits);
    let target_onehot = Matrix::from_fn(m, c, |i, j| if j == labels[i] { 1.0 } else { 0.0 });
    let sel = tape.leaf(&target_onehot)?;
    let picked = tape.mul(logits, sel)?;
    let target = tape.sum_rows(picked);
    let per_row = tape.sub(lse, target)?;
    Ok(tape.mean_all(per_row))
}

/// Label-projection scores: inner product of each feature row with its class
/// embedding row, un-normalized, returned per sample (m x 1) for adding to
/// the critic's scalar output.
pub fn projection_scores(
    tape: &mut Tape,
    features: Tensor,
    labels: &[usize],
    table: Tensor,
) -> Result<Tensor> {
    check_labels(labels, features.rows(), table.rows())?;
    check_embedding_dims("projection_scores", features, table)?;
    let p = tape.gather_rows(table, labels)?;
    let fp = tape.mul(features, p)?;
    Ok(tape.sum_rows(fp))
}

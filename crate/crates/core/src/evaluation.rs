//! Sample-quality and stability measurements.
//!
//! Quality: Gaussian transport distance between moment-matched Gaussians
//! fitted to real and generated points — pooled over the whole cloud and
//! averaged per class. Stability: critic authenticity accuracy on held-out
//! data (a memorization signal), and exact largest singular values of the
//! critic's weights computed by dense eigendecomposition, deliberately
//! independent of the power-iteration estimates used during training.

use serde::{Deserialize, Serialize};

use crate::datasets::LabeledDataset;
use crate::error::{Error, Result};
use crate::linalg::{largest_singular_value, sqrtm_psd, trace};
use crate::matrix::Matrix;
use crate::models::Discriminator;

/// Ridge added to fitted covariances, keeping tiny degenerate clusters PSD.
pub const COVARIANCE_RIDGE: f64 = 1e-6;

/// Flag thresholds: critic train/val accuracy gap beyond which the run is
/// marked as memorizing, and eval-to-eval growth ratio of the largest weight
/// singular value beyond which it is marked as a spectral jump.
pub const COLLAPSE_GAP_THRESHOLD: f64 = 0.5;
pub const SIGMA_JUMP_RATIO: f64 = 1.5;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GaussianSummary {
    pub mean: Vec<f64>,
    pub cov: Matrix,
}

/// Sample mean and population covariance (divisor n) with a small ridge.
pub fn fit_gaussian(points: &Matrix) -> Result<GaussianSummary> {
    let n = points.rows();
    let d = points.cols();
    if n < 2 {
        return Err(Error::InsufficientSamples { required: 2, actual: n });
    }
    let mut mean = vec![0.0; d];
    for i in 0..n {
        for (m, &x) in mean.iter_mut().zip(points.row(i)) {
            *m += x;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let mut cov = Matrix::zeros(d, d);
    for i in 0..n {
        let row = points.row(i);
        for a in 0..d {
            let da = row[a] - mean[a];
            for b in 0..d {
                cov.set(a, b, cov.get(a, b) + da * (row[b] - mean[b]));
            }
        }
    }
    cov.scale_in_place(1.0 / n as f64);
    for a in 0..d {
        cov.set(a, a, cov.get(a, a) + COVARIANCE_RIDGE);
    }
    Ok(GaussianSummary { mean, cov })
}

/// Squared Gaussian transport distance
/// d^2 = |mu_a - mu_b|^2 + tr(S_a + S_b - 2 (S_a^1/2 S_b S_a^1/2)^1/2),
/// clamped at zero against roundoff.
pub fn frechet_distance(a: &GaussianSummary, b: &GaussianSummary) -> Result<f64> {
    if a.mean.len() != b.mean.len() {
        return Err(Error::Contract(format!(
            "dimension mismatch: {} vs {}",
            a.mean.len(),
            b.mean.len()
        )));
    }
    let dmu: f64 = a
        .mean
        .iter()
        .zip(&b.mean)
        .map(|(&x, &y)| (x - y) * (x - y))
        .sum();
    let ra = sqrtm_psd(&a.cov, 1e-12)?;
    let inner = ra.matmul(&b.cov).matmul(&ra);
    // Symmetrize away the roundoff of the triple product.
    let d = inner.rows();
    let mut sym = inner.clone();
    for i in 0..d {
        for j in (i + 1)..d {
            let avg = 0.5 * (inner.get(i, j) + inner.get(j, i));
            sym.set(i, j, avg);
            sym.set(j, i, avg);
        }
    }
    let cross = sqrtm_psd(&sym, 1e-12)?;
    let d2 = dmu + trace(&a.cov) + trace(&b.cov) - 2.0 * trace(&cross);
    Ok(d2.max(0.0))
}

/// Distance between fitted Gaussians of two point clouds.
pub fn frechet_between(real: &Matrix, fake: &Matrix) -> Result<f64> {
    frechet_distance(&fit_gaussian(real)?, &fit_gaussian(fake)?)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ClassFrechet {
    /// One distance per class, indexed by label.
    pub per_class: Vec<f64>,
    /// Unweighted mean over classes.
    pub mean: f64,
}

fn rows_of(points: &Matrix, rows: &[usize]) -> Matrix {
    let mut out = Matrix::zeros(rows.len(), points.cols());
    for (k, &i) in rows.iter().enumerate() {
        for j in 0..points.cols() {
            out.set(k, j, points.get(i, j));
        }
    }
    out
}

/// Per-class distances between a labeled reference set and generated points
/// with requested labels. Every class needs at least 2 samples on each side.
pub fn class_conditional_frechet(
    real: &LabeledDataset,
    fake_points: &Matrix,
    fake_labels: &[usize],
) -> Result<ClassFrechet> {
    if fake_labels.len() != fake_points.rows() {
        return Err(Error::Contract(format!(
            "{} labels for {} generated rows",
            fake_labels.len(),
            fake_points.rows()
        )));
    }
    let c = real.num_classes;
    let mut fake_idx = vec![Vec::new(); c];
    for (i, &y) in fake_labels.iter().enumerate() {
        if y >= c {
            return Err(Error::LabelOutOfRange { label: y, num_classes: c });
        }
        fake_idx[y].push(i);
    }
    let real_idx = real.class_indices();
    let mut per_class = Vec::with_capacity(c);
    for y in 0..c {
        if real_idx[y].len() < 2 {
            return Err(Error::MissingClass { class: y, which: "reference", required: 2 });
        }
        if fake_idx[y].len() < 2 {
            return Err(Error::MissingClass { class: y, which: "generated", required: 2 });
        }
        let r = rows_of(&real.points, &real_idx[y]);
        let f = rows_of(fake_points, &fake_idx[y]);
        per_class.push(frechet_between(&r, &f)?);
    }
    let mean = per_class.iter().sum::<f64>() / c as f64;
    Ok(ClassFrechet { per_class, mean })
}

/// Fraction of real samples called real: a real sample is judged correctly
/// when its score is strictly positive.
pub fn real_accuracy(scores: &[f64]) -> f64 {
    if scores.is_empty() {
        return 0.0;
    }
    scores.iter().filter(|&&s| s > 0.0).count() as f64 / scores.len() as f64
}

/// Fraction of generated samples called generated: zero or below counts as
/// "called generated" (ties are deterministic).
pub fn fake_accuracy(scores: &[f64]) -> f64 {
    if scores.is_empty() {
        return 0.0;
    }
    scores.iter().filter(|&&s| s <= 0.0).count() as f64 / scores.len() as f64
}

/// Fraction of correct authenticity calls over both sets together.
pub fn authenticity_accuracy(real_scores: &[f64], fake_scores: &[f64]) -> f64 {
    let total = real_scores.len() + fake_scores.len();
    if total == 0 {
        return 0.0;
    }
    let correct = real_scores.iter().filter(|&&s| s > 0.0).count()
        + fake_scores.iter().filter(|&&s| s <= 0.0).count();
    correct as f64 / total as f64
}

pub fn collapse_flag(train_acc: f64, val_acc: f64) -> bool {
    train_acc - val_acc > COLLAPSE_GAP_THRESHOLD
}

/// Growth-only jump detector between consecutive spectral readings.
pub fn sigma_jump_flag(previous: f64, current: f64) -> bool {
    previous > 0.0 && current / previous > SIGMA_JUMP_RATIO
}

/// History-level stability scan result.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct CollapseReport {
    /// First record whose authenticity-accuracy gap exceeds
    /// [`COLLAPSE_GAP_THRESHOLD`].
    pub gap_index: Option<usize>,
    /// First record where some layer's largest singular value grew by more
    /// than [`SIGMA_JUMP_RATIO`] relative to the previous record.
    pub sigma_index: Option<usize>,
}

impl CollapseReport {
    pub fn any(&self) -> bool {
        self.gap_index.is_some() || self.sigma_index.is_some()
    }
}

/// Scan a history of per-evaluation readings: `gaps[i]` is the
/// authenticity-accuracy gap (train minus validation) of record `i`, and
/// `sigmas[i]` lists the per-layer largest singular values of record `i`
/// in a stable layer order.
pub fn collapse_detector(gaps: &[f64], sigmas: &[Vec<f64>]) -> CollapseReport {
    let gap_index = gaps.iter().position(|&g| g > COLLAPSE_GAP_THRESHOLD);
    let mut sigma_index = None;
    for i in 1..sigmas.len() {
        let prev = &sigmas[i - 1];
        let cur = &sigmas[i];
        let layers = prev.len().min(cur.len());
        if (0..layers).any(|k| sigma_jump_flag(prev[k], cur[k])) {
            sigma_index = Some(i);
            break;
        }
    }
    CollapseReport { gap_index, sigma_index }
}

/// Exact largest singular value of every critic weight **as used** — the
/// normalized weight when spectral normalization is on, the raw weight
/// otherwise — via dense eigendecomposition (independent of the training
/// power-iteration state), plus the maximum across layers. Normalized layers
/// should hover at 1 (slightly above until the persistent estimate
/// converges); raw layers are free to grow, which the jump flag watches.
pub fn critic_spectral_readings(disc: &Discriminator) -> Result<(Vec<(String, f64)>, f64)> {
    let use_sn = disc.cfg.spectral_norm;
    let mut out = Vec::new();
    let mut max_sigma = 0.0_f64;
    for (name, p) in disc.sn_params() {
        let exact = largest_singular_value(&p.weight)?;
        let s = if use_sn {
            let (estimate, _) = p.estimate_sigma();
            exact / estimate.max(crate::models::spectral::SIGMA_FLOOR)
        } else {
            exact
        };
        max_sigma = max_sigma.max(s);
        out.push((name, s));
    }
    Ok((out, max_sigma))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn fitted_moments_match_hand_computation() {
        let pts = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 6.0]]);
        let g = fit_gaussian(&pts).unwrap();
        assert_eq!(g.mean, vec![2.0, 4.0]);
        // Population covariance of two points: quarter of squared spread.
        assert!((g.cov.get(0, 0) - (1.0 + COVARIANCE_RIDGE)).abs() < 1e-15);
        assert!((g.cov.get(1, 1) - (4.0 + COVARIANCE_RIDGE)).abs() < 1e-15);
        assert!((g.cov.get(0, 1) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn distance_matches_closed_form_oracle() {
        let a = GaussianSummary {
            mean: vec![0.2, -0.4],
            cov: Matrix::from_rows(&[vec![1.3, 0.3], vec![0.3, 0.7]]),
        };
        let b = GaussianSummary {
            mean: vec![-1.0, 0.5],
            cov: Matrix::from_rows(&[vec![0.5, -0.1], vec![-0.1, 2.0]]),
        };
        let fast = frechet_distance(&a, &b).unwrap();
        let slow = oracle::frechet_2x2(&a.mean, &a.cov, &b.mean, &b.cov);
        assert!((fast - slow).abs() < 1e-9, "{fast} vs {slow}");
    }

    #[test]
    fn identical_clouds_have_zero_distance() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts = Matrix::from_fn(100, 2, |_, _| rng.gen_range(-1.0..1.0));
        let d = frechet_between(&pts, &pts).unwrap();
        assert!(d.abs() < 1e-10, "{d}");
    }

    #[test]
    fn sampled_gaussians_approach_analytic_distance() {
        // Monte-Carlo cross-check: two isotropic Gaussians, mean gap 1,
        // scales 0.3 vs 0.5 => d^2 = 1 + 2 (0.3 - 0.5)^2 = 1.08.
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 60_000;
        let na = Normal::new(0.0, 0.3).unwrap();
        let nb = Normal::new(0.0, 0.5).unwrap();
        let a = Matrix::from_fn(n, 2, |_, _| na.sample(&mut rng));
        let b = Matrix::from_fn(n, 2, |_, j| nb.sample(&mut rng) + if j == 0 { 1.0 } else { 0.0 });
        let d = frechet_between(&a, &b).unwrap();
        assert!((d - 1.08).abs() < 0.02, "{d}");
    }

    #[test]
    fn per_class_distance_flags_missing_classes() {
        let real = crate::datasets::make_gaussian_mixture(3, 10, 1.0, 0.1, 3).unwrap();
        let fake = real.points.clone();
        let mut labels = real.labels.clone();
        // Starve class 2 on the generated side.
        for y in &mut labels {
            if *y == 2 {
                *y = 0;
            }
        }
        match class_conditional_frechet(&real, &fake, &labels) {
            Err(Error::MissingClass { class: 2, which: "generated", .. }) => {}
            other => panic!("expected missing-class error, got {other:?}"),
        }
    }

    #[test]
    fn per_class_distance_of_matching_clouds_is_small() {
        let real = crate::datasets::make_gaussian_mixture(3, 300, 1.0, 0.1, 4).unwrap();
        let fake = crate::datasets::make_gaussian_mixture(3, 300, 1.0, 0.1, 5).unwrap();
        let cf = class_conditional_frechet(&real, &fake.points, &fake.labels).unwrap();
        assert_eq!(cf.per_class.len(), 3);
        assert!(cf.mean < 0.01, "{}", cf.mean);
        // Mismatched labels must score much worse.
        let mut rotated = fake.labels.clone();
        for y in &mut rotated {
            *y = (*y + 1) % 3;
        }
        let bad = class_conditional_frechet(&real, &fake.points, &rotated).unwrap();
        assert!(bad.mean > 10.0 * cf.mean, "{} vs {}", bad.mean, cf.mean);
    }

    #[test]
    fn accuracy_counts_ties_as_generated_calls() {
        let acc = authenticity_accuracy(&[1.0, 0.0, -0.5], &[0.0, 0.3]);
        // Real: only 1.0 counts. Fake: 0.0 counts, 0.3 does not => 2/5.
        assert!((acc - 0.4).abs() < 1e-15);
        assert!((real_accuracy(&[1.0, 0.0, -0.5]) - 1.0 / 3.0).abs() < 1e-15);
        assert!((fake_accuracy(&[0.0, 0.3]) - 0.5).abs() < 1e-15);
        // A critic stuck at +1 calls every real right and every fake wrong.
        assert_eq!(real_accuracy(&[1.0, 1.0]), 1.0);
        assert_eq!(fake_accuracy(&[1.0, 1.0]), 0.0);
    }

    #[test]
    fn spectral_readings_report_the_weight_as_used() {
        use crate::models::{Discriminator, HeadKind, ModelConfig};
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let cfg = ModelConfig {
            disc_hidden: vec![8, 8],
            ..ModelConfig::default()
        };
        let mut d = Discriminator::new(&cfg, 3, HeadKind::Adversarial, &mut rng).unwrap();
        // Converge each persistent estimate; the effective sigma then sits
        // at 1 regardless of the raw weight's scale.
        for p in d.sn_params_mut() {
            p.weight.scale_in_place(3.0);
            for _ in 0..300 {
                p.sigma(true);
            }
        }
        let (layers, max_sigma) = critic_spectral_readings(&d).unwrap();
        assert!(!layers.is_empty());
        for (name, s) in &layers {
            assert!((s - 1.0).abs() < 1e-6, "{name}: {s}");
        }
        assert!((max_sigma - 1.0).abs() < 1e-6);

        // Without normalization the reading is the raw largest singular
        // value (orthogonal init scaled by 3 => sigma 3).
        let raw_cfg = ModelConfig { spectral_norm: false, ..cfg };
        let mut d = Discriminator::new(&raw_cfg, 3, HeadKind::Adversarial, &mut rng).unwrap();
        for p in d.sn_params_mut() {
            p.weight.scale_in_place(3.0);
        }
        let (_, max_sigma) = critic_spectral_readings(&d).unwrap();
        assert!((max_sigma - 3.0).abs() < 1e-9, "{max_sigma}");
    }

    #[test]
    fn flags_fire_at_documented_thresholds() {
        assert!(!collapse_flag(0.9, 0.45));
        assert!(collapse_flag(0.96, 0.45));
        assert!(!sigma_jump_flag(2.0, 2.9));
        assert!(sigma_jump_flag(2.0, 3.1));
        assert!(!sigma_jump_flag(2.0, 1.0));
        assert!(!sigma_jump_flag(0.0, 5.0));
    }

    #[test]
    fn history_scan_reports_first_offending_record() {
        // Gap sequence crossing the threshold at index 1.
        let report = collapse_detector(&[0.1, 0.6], &[vec![1.0], vec![1.0]]);
        assert_eq!(report.gap_index, Some(1));
        assert_eq!(report.sigma_index, None);
        assert!(report.any());

        // An 80% jump in a single layer trips the spectral flag.
        let report = collapse_detector(&[0.0, 0.0], &[vec![1.0], vec![1.8]]);
        assert_eq!(report.gap_index, None);
        assert_eq!(report.sigma_index, Some(1));

        // Constant readings never flag; the first crossing wins when there
        // are several.
        let quiet = collapse_detector(&[0.2; 5], &vec![vec![2.0, 0.5]; 5]);
        assert_eq!(quiet, CollapseReport::default());
        assert!(!quiet.any());
        let multi = collapse_detector(
            &[0.0, 0.0, 0.55, 0.7],
            &[vec![1.0, 1.0], vec![1.0, 1.6], vec![1.0, 1.6], vec![1.0, 3.0]],
        );
        assert_eq!(multi.gap_index, Some(2));
        assert_eq!(multi.sigma_index, Some(1));

        // The jump must happen between consecutive records of the same
        // layer; growth across different layers is not a jump.
        let cross = collapse_detector(&[0.0, 0.0], &[vec![1.0, 3.0], vec![1.2, 3.1]]);
        assert_eq!(cross.sigma_index, None);
    }
}

//! Power-iteration and distance computations against independent dense
//! oracles: Jacobi eigensolves for singular values, the analytic 2x2
//! square root for distances between Gaussian fits.

use contra_core::evaluation::{fit_gaussian, frechet_distance, GaussianSummary};
use contra_core::linalg::largest_singular_value;
use contra_core::matrix::Matrix;
use contra_core::models::spectral::{SnParam, SIGMA_FLOOR};
use contra_core::oracle;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn randn(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    let dist = Normal::new(0.0, 1.0).expect("unit normal");
    Matrix::from_fn(rows, cols, |_, _| dist.sample(&mut *rng))
}

#[test]
fn power_iteration_matches_dense_singular_values() {
    let started = std::time::Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for trial in 0..100 {
        let rows = rng.gen_range(1..=32_usize);
        let cols = rng.gen_range(1..=32_usize);
        let w = randn(&mut rng, rows, cols);
        let exact = largest_singular_value(&w).unwrap();

        let mut p = SnParam::new(w, &mut rng);
        let mut estimate = p.sigma(true);
        for _ in 0..20_000 {
            let next = p.sigma(true);
            if (next - estimate).abs() < 1e-15 {
                estimate = next;
                break;
            }
            estimate = next;
        }
        assert!(
            (estimate - exact).abs() < 1e-6,
            "trial {trial} ({rows}x{cols}): {estimate} vs {exact}"
        );

        // Dividing by the converged estimate leaves a true largest singular
        // value of at most 1 + 1e-4.
        let mut normalized = p.weight.clone();
        normalized.scale_in_place(1.0 / estimate.max(SIGMA_FLOOR));
        let post = largest_singular_value(&normalized).unwrap();
        assert!(post <= 1.0 + 1e-4, "trial {trial}: normalized sigma {post}");
    }
    let elapsed = started.elapsed().as_secs_f64();
    assert!(elapsed < 60.0, "oracle comparison too slow: {elapsed:.1}s");
}

#[test]
fn identical_fits_have_zero_distance() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..10 {
        let points = randn(&mut rng, 50, 2);
        let g = fit_gaussian(&points).unwrap();
        let d = frechet_distance(&g, &g).unwrap();
        assert!(d.abs() <= 1e-9, "self-distance {d}");
    }
}

#[test]
fn one_dimensional_closed_forms_are_exact() {
    let standard = GaussianSummary { mean: vec![0.0], cov: Matrix::scalar(1.0) };
    let shifted = GaussianSummary { mean: vec![1.0], cov: Matrix::scalar(1.0) };
    let wide = GaussianSummary { mean: vec![0.0], cov: Matrix::scalar(4.0) };

    // Mean shift of 1 with equal unit variances: d^2 = 1.
    let d = frechet_distance(&standard, &shifted).unwrap();
    assert!((d - 1.0).abs() <= 1e-9, "mean-shift case: {d}");

    // Equal means, standard deviations 1 and 2: d^2 = (1 - 2)^2 = 1.
    let d = frechet_distance(&standard, &wide).unwrap();
    assert!((d - 1.0).abs() <= 1e-9, "variance case: {d}");
}

#[test]
fn two_dimensional_pairs_match_the_analytic_square_root() {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    for trial in 0..50 {
        let make = |rng: &mut ChaCha8Rng| {
            let a = randn(rng, 2, 2);
            let mut cov = a.matmul_tn(&a);
            cov.set(0, 0, cov.get(0, 0) + 0.1);
            cov.set(1, 1, cov.get(1, 1) + 0.1);
            let mean = vec![rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
            (mean, cov)
        };
        let (mu_a, cov_a) = make(&mut rng);
        let (mu_b, cov_b) = make(&mut rng);

        let ga = GaussianSummary { mean: mu_a.clone(), cov: cov_a.clone() };
        let gb = GaussianSummary { mean: mu_b.clone(), cov: cov_b.clone() };
        let got = frechet_distance(&ga, &gb).unwrap();
        let want = oracle::frechet_2x2(&mu_a, &cov_a, &mu_b, &cov_b);
        assert!((got - want).abs() <= 1e-8, "trial {trial}: {got} vs {want}");

        // Symmetry rides along.
        let rev = frechet_distance(&gb, &ga).unwrap();
        assert!((got - rev).abs() <= 1e-9, "asymmetry: {got} vs {rev}");
    }
}

#[test]
fn distance_shrinks_as_means_approach() {
    let cov = Matrix::new(2, 2, vec![1.3, 0.2, 0.2, 0.7]);
    let target = GaussianSummary { mean: vec![0.0, 0.0], cov: cov.clone() };
    let mut last = f64::INFINITY;
    for step in 0..8 {
        let x = 2.0 - 0.25 * step as f64;
        let moved = GaussianSummary { mean: vec![x, 0.0], cov: cov.clone() };
        let d = frechet_distance(&target, &moved).unwrap();
        assert!(d < last, "step {step}: {d} not below {last}");
        last = d;
    }
}

#[test]
fn fits_ignore_sample_order() {
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    let points = randn(&mut rng, 64, 2);
    let reference = randn(&mut rng, 64, 2);
    let base = frechet_distance(
        &fit_gaussian(&points).unwrap(),
        &fit_gaussian(&reference).unwrap(),
    )
    .unwrap();

    // Reverse the rows; the fit and distance must not care.
    let reversed = Matrix::from_fn(64, 2, |i, j| points.get(63 - i, j));
    let d = frechet_distance(
        &fit_gaussian(&reversed).unwrap(),
        &fit_gaussian(&reference).unwrap(),
    )
    .unwrap();
    assert!((base - d).abs() <= 1e-12, "{base} vs {d}");
}

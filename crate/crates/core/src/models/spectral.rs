//! Spectrally normalized weight parameters.
//!
//! Each weight matrix carries a persistent left vector `u`; one power
//! iteration per binding refreshes the largest-singular-value estimate, and
//! the weight enters the tape as `W / sigma` with sigma treated as a
//! constant. The persistent vector only advances when the owning network is
//! the one being trained, so evaluation passes and opponent-network passes
//! leave the estimator state untouched.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Tensor};
use crate::error::Result;
use crate::matrix::{dot, norm, Matrix};

/// Smallest sigma the divisor is allowed to take; reached only for an
/// all-zero weight, which is logged since it means training has degenerated.
pub const SIGMA_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SnParam {
    pub weight: Matrix,
    /// Persistent power-iteration vector, length = weight rows.
    pub u: Vec<f64>,
}

fn normalize_with_eps(x: &mut [f64]) {
    let n = norm(x) + 1e-12;
    for v in x {
        *v /= n;
    }
}

impl SnParam {
    pub fn new(weight: Matrix, rng: &mut impl Rng) -> Self {
        let mut u: Vec<f64> = (0..weight.rows()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        normalize_with_eps(&mut u);
        Self { weight, u }
    }

    /// One power-iteration refinement from the stored `u`:
    /// v = normalize(W^T u), u' = normalize(W v), sigma = u'^T W v.
    /// Returns (sigma, u'). Does not touch stored state.
    pub fn estimate_sigma(&self) -> (f64, Vec<f64>) {
        let w = &self.weight;
        let (rows, cols) = w.shape();
        let mut v = vec![0.0; cols];
        for i in 0..rows {
            let ui = self.u[i];
            if ui == 0.0 {
                continue;
            }
            for (vj, &wij) in v.iter_mut().zip(w.row(i)) {
                *vj += ui * wij;
            }
        }
        normalize_with_eps(&mut v);
        let mut u_next = vec![0.0; rows];
        for (i, un) in u_next.iter_mut().enumerate() {
            *un = dot(w.row(i), &v);
        }
        normalize_with_eps(&mut u_next);
        let mut sigma = 0.0;
        for i in 0..rows {
            sigma += u_next[i] * dot(w.row(i), &v);
        }
        (sigma, u_next)
    }

    /// Current sigma estimate, floored; advances the stored `u` when asked.
    pub fn sigma(&mut self, update_u: bool) -> f64 {
        let (sigma, u_next) = self.estimate_sigma();
        if update_u {
            self.u = u_next;
        }
        if sigma < SIGMA_FLOOR {
            log::warn!(
                "spectral norm estimate {sigma:e} below floor; weight matrix is near zero"
            );
            SIGMA_FLOOR
        } else {
            sigma
        }
    }

    /// Record the weight on the tape. Returns `(leaf, effective)`: gradients
    /// are read from `leaf`; `effective` is what downstream ops consume
    /// (either `leaf / sigma` or `leaf` itself when normalization is off).
    pub fn bind(
        &mut self,
        tape: &mut Tape,
        use_sn: bool,
        update_u: bool,
    ) -> Result<(Tensor, Tensor)> {
        let leaf = tape.leaf(&self.weight)?;
        if use_sn {
            let sigma = self.sigma(update_u);
            Ok((leaf, tape.scale(leaf, 1.0 / sigma)))
        } else {
            Ok((leaf, leaf))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::largest_singular_value;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn power_iteration_converges_to_exact_sigma() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let w = Matrix::from_fn(6, 4, |_, _| rng.gen_range(-1.0..1.0));
        let mut p = SnParam::new(w.clone(), &mut rng);
        let mut sigma = 0.0;
        for _ in 0..200 {
            sigma = p.sigma(true);
        }
        let exact = largest_singular_value(&w).unwrap();
        assert!((sigma - exact).abs() < 1e-9, "{sigma} vs {exact}");
    }

    #[test]
    fn sigma_estimate_never_exceeds_exact_value() {
        // u'^T W v is a Rayleigh-style lower bound on the true sigma.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let w = Matrix::from_fn(5, 5, |_, _| rng.gen_range(-2.0..2.0));
            let mut p = SnParam::new(w.clone(), &mut rng);
            let sigma = p.sigma(true);
            let exact = largest_singular_value(&w).unwrap();
            assert!(sigma <= exact + 1e-9, "{sigma} > {exact}");
            assert!(sigma > 0.0);
        }
    }

    #[test]
    fn zero_weight_hits_floor_instead_of_dividing_by_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut p = SnParam::new(Matrix::zeros(3, 3), &mut rng);
        assert_eq!(p.sigma(true), SIGMA_FLOOR);
    }

    #[test]
    fn frozen_u_stays_frozen() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let w = Matrix::from_fn(4, 4, |_, _| rng.gen_range(-1.0..1.0));
        let mut p = SnParam::new(w, &mut rng);
        let before = p.u.clone();
        let _ = p.sigma(false);
        assert_eq!(p.u, before);
        let _ = p.sigma(true);
        assert_ne!(p.u, before);
    }

    #[test]
    fn bound_weight_is_scaled_by_sigma() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let w = Matrix::from_fn(3, 2, |_, _| rng.gen_range(-1.0..1.0));
        let mut p = SnParam::new(w.clone(), &mut rng);
        // Converge the estimate first so the scale is the true sigma.
        for _ in 0..100 {
            p.sigma(true);
        }
        let sigma = p.sigma(false);
        let mut tape = Tape::new();
        let (leaf, eff) = p.bind(&mut tape, true, false).unwrap();
        for (e, raw) in tape.value(eff).data().iter().zip(w.data()) {
            assert!((e - raw / sigma).abs() < 1e-12);
        }
        // Gradient flows to the raw leaf scaled by 1/sigma.
        let s = tape.sum_all(eff);
        tape.backward(s).unwrap();
        for g in tape.grad(leaf).data() {
            assert!((g - 1.0 / sigma).abs() < 1e-12);
        }
    }
}

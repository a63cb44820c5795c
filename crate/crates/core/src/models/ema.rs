//! Exponential moving average of generator parameters, used for evaluation
//! and final sampling. Before `start_iter` the shadow plainly copies the
//! live weights; from `start_iter` on it relaxes toward them with the
//! configured decay.

use serde::{Deserialize, Serialize};

use crate::matrix::Matrix;
use crate::models::Generator;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EmaShadow {
    pub decay: f64,
    pub start_iter: usize,
    /// Parallel to [`Generator::params_mut`] order.
    pub shadow: Vec<Matrix>,
}

impl EmaShadow {
    pub fn new(gen: &Generator, decay: f64, start_iter: usize) -> Self {
        let shadow = gen.params().into_iter().cloned().collect();
        Self { decay, start_iter, shadow }
    }

    /// Fold the generator's current parameters into the shadow after
    /// generator step number `g_iter` (1-based count of completed steps).
    pub fn update(&mut self, gen: &Generator, g_iter: usize) {
        let d = if g_iter < self.start_iter { 0.0 } else { self.decay };
        for (s, p) in self.shadow.iter_mut().zip(gen.params()) {
            debug_assert_eq!(s.shape(), p.shape());
            s.scale_in_place(d);
            s.add_scaled(p, 1.0 - d);
        }
    }

    /// A generator whose parameters are the shadow values (power-iteration
    /// state is carried over unchanged; evaluation never advances it).
    pub fn applied(&self, gen: &Generator) -> Generator {
        let mut out = gen.clone();
        for (p, s) in out.params_mut().into_iter().zip(&self.shadow) {
            *p = s.clone();
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::ModelConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny_gen(rng: &mut ChaCha8Rng) -> Generator {
        let cfg = ModelConfig {
            gen_hidden: vec![8],
            disc_hidden: vec![8],
            ..ModelConfig::default()
        };
        Generator::new(&cfg, 3, true, rng).unwrap()
    }

    #[test]
    fn copies_exactly_before_start() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut gen = tiny_gen(&mut rng);
        let mut ema = EmaShadow::new(&gen, 0.999, 100);
        for p in gen.params_mut() {
            p.scale_in_place(2.0);
        }
        ema.update(&gen, 5);
        for (s, p) in ema.shadow.iter().zip(gen.params()) {
            assert_eq!(s, p);
        }
    }

    #[test]
    fn decays_after_start() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut gen = tiny_gen(&mut rng);
        let mut ema = EmaShadow::new(&gen, 0.5, 1);
        let before: Vec<Matrix> = ema.shadow.clone();
        for p in gen.params_mut() {
            p.scale_in_place(3.0);
        }
        ema.update(&gen, 1);
        // shadow = 0.5 * old + 0.5 * (3 * old) = 2 * old
        for (s, b) in ema.shadow.iter().zip(&before) {
            let mut expect = b.clone();
            expect.scale_in_place(2.0);
            for (x, y) in s.data().iter().zip(expect.data()) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn applied_generator_uses_shadow_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut gen = tiny_gen(&mut rng);
        let ema = EmaShadow::new(&gen, 0.9, 1);
        // Diverge the live weights; the applied generator must match the
        // shadow (original) weights, not the live ones.
        for p in gen.params_mut() {
            p.scale_in_place(10.0);
        }
        let snap = ema.applied(&gen);
        for (p, s) in snap.params().iter().zip(&ema.shadow) {
            assert_eq!(*p, s);
        }
    }
}

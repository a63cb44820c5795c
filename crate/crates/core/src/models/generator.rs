//! Label-conditioned point generator: noise -> hidden ReLU stack -> tanh
//! output in [-1, 1]^d. Conditioning is a per-layer affine modulation
//! ("coloring"): each hidden activation is scaled by (1 + e W_scale) and
//! shifted by e W_shift, where e is the sample's class-embedding row. Built
//! unconditionally, the modulation parameters and table are absent and
//! labels are ignored.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Tensor};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::models::spectral::SnParam;
use crate::models::{gaussian_init, Linear, ModelConfig, TABLE_INIT_STD};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CondAffine {
    pub scale: SnParam,
    pub shift: SnParam,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GenLayer {
    pub lin: Linear,
    pub cond: Option<CondAffine>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Generator {
    pub cfg: ModelConfig,
    pub num_classes: usize,
    /// Class-embedding table (num_classes x embed_dim); None when the
    /// generator is unconditional.
    pub embed: Option<Matrix>,
    pub hidden: Vec<GenLayer>,
    pub out: Linear,
}

/// Result of a generator forward pass.
pub struct GenForward {
    /// Generated points, m x data_dim, each coordinate in [-1, 1].
    pub samples: Tensor,
    /// Parameter leaves in [`Generator::params_mut`] order.
    pub leaves: Vec<Tensor>,
}

impl Generator {
    pub fn new(
        cfg: &ModelConfig,
        num_classes: usize,
        conditional: bool,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if cfg.gen_hidden.is_empty() {
            return Err(Error::Config("generator needs at least one hidden layer".into()));
        }
        if conditional && num_classes < 2 {
            return Err(Error::Config(format!(
                "conditional generator needs >= 2 classes, got {num_classes}"
            )));
        }
        let embed = conditional
            .then(|| gaussian_init(num_classes, cfg.embed_dim, TABLE_INIT_STD, rng));
        let mut hidden = Vec::with_capacity(cfg.gen_hidden.len());
        let mut prev = cfg.noise_dim;
        for &width in &cfg.gen_hidden {
            let lin = Linear::new(prev, width, rng);
            let cond = conditional.then(|| CondAffine {
                scale: SnParam::new(gaussian_init(cfg.embed_dim, width, TABLE_INIT_STD, rng), rng),
                shift: SnParam::new(gaussian_init(cfg.embed_dim, width, TABLE_INIT_STD, rng), rng),
            });
            hidden.push(GenLayer { lin, cond });
            prev = width;
        }
        let out = Linear::new(prev, cfg.data_dim, rng);
        Ok(Self { cfg: cfg.clone(), num_classes, embed, hidden, out })
    }

    pub fn is_conditional(&self) -> bool {
        self.embed.is_some()
    }

    /// Forward pass. `noise` is m x noise_dim; `labels` must have one entry
    /// per row and is ignored by an unconditional generator.
    pub fn forward(
        &mut self,
        tape: &mut Tape,
        noise: &Matrix,
        labels: &[usize],
        update_u: bool,
    ) -> Result<GenForward> {
        if noise.cols() != self.cfg.noise_dim {
            return Err(Error::ShapeMismatch {
                op: "generator_forward",
                lhs_rows: noise.rows(),
                lhs_cols: noise.cols(),
                rhs_rows: 1,
                rhs_cols: self.cfg.noise_dim,
            });
        }
        if labels.len() != noise.rows() {
            return Err(Error::Contract(format!(
                "{} labels for {} noise rows",
                labels.len(),
                noise.rows()
            )));
        }
        let use_sn = self.cfg.spectral_norm;
        let mut leaves = Vec::new();

        let embed_rows = match &self.embed {
            Some(table) => {
                for &y in labels {
                    if y >= self.num_classes {
                        return Err(Error::LabelOutOfRange {
                            label: y,
                            num_classes: self.num_classes,
                        });
                    }
                }
                let table_leaf = tape.leaf(table)?;
                leaves.push(table_leaf);
                Some(tape.gather_rows(table_leaf, labels)?)
            }
            None => None,
        };

        let z = tape.leaf(noise)?;
        let mut h = z;
        for layer in &mut self.hidden {
            let pre = layer.lin.forward(tape, h, use_sn, update_u, &mut leaves)?;
            h = tape.relu(pre);
            if let Some(cond) = &mut layer.cond {
                let e = embed_rows.expect("conditional layer without embedding table");
                let (s_leaf, s_eff) = cond.scale.bind(tape, use_sn, update_u)?;
                leaves.push(s_leaf);
                let gain_raw = tape.matmul(e, s_eff)?;
                let gain = tape.add_const(gain_raw, 1.0);
                h = tape.mul(h, gain)?;
                let (t_leaf, t_eff) = cond.shift.bind(tape, use_sn, update_u)?;
                leaves.push(t_leaf);
                let shift = tape.matmul(e, t_eff)?;
                h = tape.add(h, shift)?;
            }
        }
        let pre_out = self.out.forward(tape, h, use_sn, update_u, &mut leaves)?;
        let samples = tape.tanh(pre_out);
        debug_assert_eq!(leaves.len(), self.params().len());
        Ok(GenForward { samples, leaves })
    }

    /// Generate points on a throwaway tape (no gradients, no state changes).
    pub fn sample(&mut self, noise: &Matrix, labels: &[usize]) -> Result<Matrix> {
        let mut tape = Tape::new();
        let f = self.forward(&mut tape, noise, labels, false)?;
        Ok(tape.value(f.samples).clone())
    }

    pub fn named_params(&self) -> Vec<(String, &Matrix)> {
        let mut out = Vec::new();
        if let Some(table) = &self.embed {
            out.push(("gen.embed".to_string(), table));
        }
        for (i, layer) in self.hidden.iter().enumerate() {
            layer.lin.visit(&format!("gen.h{i}"), &mut out);
            if let Some(cond) = &layer.cond {
                out.push((format!("gen.h{i}.scale"), &cond.scale.weight));
                out.push((format!("gen.h{i}.shift"), &cond.shift.weight));
            }
        }
        self.out.visit("gen.out", &mut out);
        out
    }

    pub fn named_params_mut(&mut self) -> Vec<(String, &mut Matrix)> {
        let mut out = Vec::new();
        if let Some(table) = &mut self.embed {
            out.push(("gen.embed".to_string(), table));
        }
        for (i, layer) in self.hidden.iter_mut().enumerate() {
            layer.lin.visit_mut(&format!("gen.h{i}"), &mut out);
            if let Some(cond) = &mut layer.cond {
                out.push((format!("gen.h{i}.scale"), &mut cond.scale.weight));
                out.push((format!("gen.h{i}.shift"), &mut cond.shift.weight));
            }
        }
        self.out.visit_mut("gen.out", &mut out);
        out
    }

    pub fn params(&self) -> Vec<&Matrix> {
        self.named_params().into_iter().map(|(_, m)| m).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Matrix> {
        self.named_params_mut().into_iter().map(|(_, m)| m).collect()
    }

    /// Persistent power-iteration vectors, keyed like the weights they track.
    pub fn named_u(&self) -> Vec<(String, &Vec<f64>)> {
        let mut out = Vec::new();
        for (i, layer) in self.hidden.iter().enumerate() {
            layer.lin.visit_u(&format!("gen.h{i}"), &mut out);
            if let Some(cond) = &layer.cond {
                out.push((format!("gen.h{i}.scale"), &cond.scale.u));
                out.push((format!("gen.h{i}.shift"), &cond.shift.u));
            }
        }
        self.out.visit_u("gen.out", &mut out);
        out
    }

    pub fn named_u_mut(&mut self) -> Vec<(String, &mut Vec<f64>)> {
        let mut out = Vec::new();
        for (i, layer) in self.hidden.iter_mut().enumerate() {
            layer.lin.visit_u_mut(&format!("gen.h{i}"), &mut out);
            if let Some(cond) = &mut layer.cond {
                out.push((format!("gen.h{i}.scale"), &mut cond.scale.u));
                out.push((format!("gen.h{i}.shift"), &mut cond.shift.u));
            }
        }
        self.out.visit_u_mut("gen.out", &mut out);
        out
    }

    /// Every spectrally tracked parameter, mutably — for the trainer's
    /// once-per-step power-iteration refresh.
    pub fn sn_params_mut(&mut self) -> Vec<&mut SnParam> {
        let mut out = Vec::new();
        for layer in &mut self.hidden {
            out.push(&mut layer.lin.w);
            if let Some(cond) = &mut layer.cond {
                out.push(&mut cond.scale);
                out.push(&mut cond.shift);
            }
        }
        out.push(&mut self.out.w);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_cfg() -> ModelConfig {
        ModelConfig {
            gen_hidden: vec![16, 16],
            disc_hidden: vec![16],
            ..ModelConfig::default()
        }
    }

    #[test]
    fn samples_live_in_the_unit_box() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut g = Generator::new(&small_cfg(), 4, true, &mut rng).unwrap();
        let noise = Matrix::from_fn(10, 8, |_, _| rng.gen_range(-3.0..3.0));
        let labels: Vec<usize> = (0..10).map(|i| i % 4).collect();
        let pts = g.sample(&noise, &labels).unwrap();
        assert_eq!(pts.shape(), (10, 2));
        assert!(pts.data().iter().all(|&x| (-1.0..=1.0).contains(&x)));
    }

    #[test]
    fn leaves_align_with_params() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for conditional in [true, false] {
            let mut g = Generator::new(&small_cfg(), 4, conditional, &mut rng).unwrap();
            let noise = Matrix::from_fn(3, 8, |_, _| rng.gen_range(-1.0..1.0));
            let mut tape = Tape::new();
            let f = g.forward(&mut tape, &noise, &[0, 1, 2], false).unwrap();
            let named = g.named_params();
            assert_eq!(f.leaves.len(), named.len());
            for (leaf, (name, param)) in f.leaves.iter().zip(&named) {
                assert_eq!(
                    (leaf.rows(), leaf.cols()),
                    param.shape(),
                    "leaf/param shape drift at {name}"
                );
            }
        }
    }

    #[test]
    fn conditioning_changes_output_per_label() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut g = Generator::new(&small_cfg(), 4, true, &mut rng).unwrap();
        let noise = Matrix::from_fn(1, 8, |_, _| 0.5);
        let a = g.sample(&noise, &[0]).unwrap();
        let b = g.sample(&noise, &[3]).unwrap();
        assert!(a.data().iter().zip(b.data()).any(|(x, y)| (x - y).abs() > 1e-9));
    }

    #[test]
    fn unconditional_generator_ignores_labels() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut g = Generator::new(&small_cfg(), 4, false, &mut rng).unwrap();
        let noise = Matrix::from_fn(2, 8, |_, _| 0.1);
        let a = g.sample(&noise, &[0, 0]).unwrap();
        let b = g.sample(&noise, &[3, 1]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn out_of_range_label_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut g = Generator::new(&small_cfg(), 4, true, &mut rng).unwrap();
        let noise = Matrix::from_fn(1, 8, |_, _| 0.0);
        assert!(matches!(
            g.sample(&noise, &[4]),
            Err(Error::LabelOutOfRange { label: 4, num_classes: 4 })
        ));
    }
}

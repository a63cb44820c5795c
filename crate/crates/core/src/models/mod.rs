//! Generator and critic networks: small fully connected nets whose every
//! weight matrix can be spectrally normalized, built for 2-D point clouds.
//!
//! Both networks follow one convention: a forward pass records each
//! parameter on the tape and returns the parameter leaves in the exact
//! order of [`Generator::params_mut`] / [`Discriminator::params_mut`], so
//! optimizer state, EMA shadows, and checkpoints can all address parameters
//! by position or by stable name.

pub mod discriminator;
pub mod ema;
pub mod generator;
pub mod spectral;

pub use discriminator::{DiscForward, Discriminator, HeadKind};
pub use ema::EmaShadow;
pub use generator::Generator;
pub use spectral::SnParam;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Tensor};
use crate::error::Result;
use crate::linalg::orthonormalize_rows;
use crate::matrix::Matrix;

/// Shape of both networks; embedded in the run config and checkpoints.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Dimension of the data points (and of generator outputs).
    pub data_dim: usize,
    /// Dimension of the generator's noise input.
    pub noise_dim: usize,
    /// Widths of the generator's hidden layers.
    pub gen_hidden: Vec<usize>,
    /// Widths of the critic's trunk layers.
    pub disc_hidden: Vec<usize>,
    /// Dimension of class embeddings and of the contrastive projection.
    pub embed_dim: usize,
    /// Shape of the critic's contrastive projection head.
    pub proj_head: ProjHeadKind,
    /// Divide every weight matrix by its estimated largest singular value.
    pub spectral_norm: bool,
    /// Negative-side slope of the critic's activations.
    pub leaky_slope: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            data_dim: 2,
            noise_dim: 8,
            gen_hidden: vec![64, 64],
            disc_hidden: vec![64, 64],
            embed_dim: 16,
            proj_head: ProjHeadKind::Linear,
            spectral_norm: true,
            leaky_slope: 0.2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProjHeadKind {
    /// Single linear map trunk -> embedding.
    Linear,
    /// Two-layer ReLU net trunk -> trunk -> embedding.
    Mlp,
}

/// Standard-deviation used for class-embedding tables.
pub const TABLE_INIT_STD: f64 = 0.02;

/// Orthogonal initialization: Gaussian draw, then the smaller side is
/// orthonormalized so the matrix has unit singular values.
pub fn orthogonal_init(rows: usize, cols: usize, rng: &mut impl Rng) -> Matrix {
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    if rows <= cols {
        let mut m = Matrix::from_fn(rows, cols, |_, _| normal.sample(rng));
        orthonormalize_rows(&mut m, 1e-9).expect("gaussian rows are independent");
        m
    } else {
        let mut m = Matrix::from_fn(cols, rows, |_, _| normal.sample(rng));
        orthonormalize_rows(&mut m, 1e-9).expect("gaussian rows are independent");
        m.transpose()
    }
}

pub fn gaussian_init(rows: usize, cols: usize, std: f64, rng: &mut impl Rng) -> Matrix {
    let normal = Normal::new(0.0, std).expect("valid std");
    Matrix::from_fn(rows, cols, |_, _| normal.sample(rng))
}

/// Fully connected layer `x * W + b` with optionally normalized `W`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Linear {
    pub w: SnParam,
    pub b: Matrix,
}

impl Linear {
    pub fn new(input: usize, output: usize, rng: &mut impl Rng) -> Self {
        Self {
            w: SnParam::new(orthogonal_init(input, output, rng), rng),
            b: Matrix::zeros(1, output),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w.weight.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.w.weight.cols()
    }

    /// Records `W` and `b` (in that order) into `leaves` and returns the
    /// affine output.
    pub fn forward(
        &mut self,
        tape: &mut Tape,
        x: Tensor,
        use_sn: bool,
        update_u: bool,
        leaves: &mut Vec<Tensor>,
    ) -> Result<Tensor> {
        let (w_leaf, w_eff) = self.w.bind(tape, use_sn, update_u)?;
        leaves.push(w_leaf);
        let xw = tape.matmul(x, w_eff)?;
        let b_leaf = tape.leaf(&self.b)?;
        leaves.push(b_leaf);
        tape.add_row_broadcast(xw, b_leaf)
    }

    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Matrix)>) {
        out.push((format!("{prefix}.w"), &self.w.weight));
        out.push((format!("{prefix}.b"), &self.b));
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Matrix)>) {
        out.push((format!("{prefix}.w"), &mut self.w.weight));
        out.push((format!("{prefix}.b"), &mut self.b));
    }

    fn visit_u<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Vec<f64>)>) {
        out.push((format!("{prefix}.w"), &self.w.u));
    }

    fn visit_u_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Vec<f64>)>) {
        out.push((format!("{prefix}.w"), &mut self.w.u));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn orthogonal_init_has_unit_singular_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for &(r, c) in &[(8usize, 64usize), (64, 64), (64, 2)] {
            let w = orthogonal_init(r, c, &mut rng);
            let s = crate::linalg::largest_singular_value(&w).unwrap();
            assert!((s - 1.0).abs() < 1e-9, "{r}x{c}: sigma {s}");
        }
    }

    #[test]
    fn linear_forward_matches_plain_affine_without_sn() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut layer = Linear::new(3, 2, &mut rng);
        layer.b = Matrix::row_vector(vec![0.5, -0.25]);
        let x = Matrix::from_rows(&[vec![1.0, 0.0, 2.0]]);
        let mut tape = Tape::new();
        let xt = tape.leaf(&x).unwrap();
        let mut leaves = Vec::new();
        let y = layer.forward(&mut tape, xt, false, false, &mut leaves).unwrap();
        let expect = x.matmul(&layer.w.weight);
        let v = tape.value(y);
        assert!((v.get(0, 0) - (expect.get(0, 0) + 0.5)).abs() < 1e-12);
        assert!((v.get(0, 1) - (expect.get(0, 1) - 0.25)).abs() < 1e-12);
        assert_eq!(leaves.len(), 2);
    }
}

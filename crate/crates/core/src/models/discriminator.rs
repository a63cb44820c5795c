//! Critic network: a leaky-ReLU trunk over 2-D points feeding a scalar
//! adversarial head plus one optional conditioning head, selected by how the
//! run conditions the critic:
//!
//! * embedding head (projection to a metric space, with or without a class
//!   table) for the contrastive losses,
//! * label-projection table whose rows are added to the score via inner
//!   product,
//! * classifier head emitting per-class logits.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Tensor};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::models::spectral::SnParam;
use crate::models::{gaussian_init, Linear, ModelConfig, ProjHeadKind, TABLE_INIT_STD};

/// Which conditioning head the critic carries.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum HeadKind {
    /// Scalar score only.
    Adversarial,
    /// Projection into the embedding space; `with_table` adds a
    /// class-embedding table for class-anchored losses.
    Embedding { with_table: bool },
    /// Class table over trunk features, added to the score by inner product.
    LabelProjection,
    /// Per-class logits head.
    Classifier,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
enum Head {
    Adversarial,
    Embedding { proj: Vec<Linear>, table: Option<Matrix> },
    LabelProjection { table: SnParam },
    Classifier { fc: Linear },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Discriminator {
    pub cfg: ModelConfig,
    pub num_classes: usize,
    trunk: Vec<Linear>,
    adv: Linear,
    head: Head,
}

/// Result of a critic forward pass.
pub struct DiscForward {
    /// Trunk features, m x trunk_width.
    pub features: Tensor,
    /// Adversarial scores, m x 1 (projection term not included).
    pub scores: Tensor,
    /// Unit-norm metric-space embeddings, m x embed_dim (embedding head only).
    pub embeddings: Option<Tensor>,
    /// Class-embedding table for contrastive losses (embedding head with
    /// table only); raw, losses normalize it themselves.
    pub class_table: Option<Tensor>,
    /// Normalized label-projection table (label-projection head only).
    pub proj_table: Option<Tensor>,
    /// Class logits, m x num_classes (classifier head only).
    pub logits: Option<Tensor>,
    /// Parameter leaves in [`Discriminator::params_mut`] order.
    pub leaves: Vec<Tensor>,
}

impl Discriminator {
    pub fn new(
        cfg: &ModelConfig,
        num_classes: usize,
        head: HeadKind,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if cfg.disc_hidden.is_empty() {
            return Err(Error::Config("critic needs at least one trunk layer".into()));
        }
        let needs_classes = !matches!(head, HeadKind::Adversarial)
            && !matches!(head, HeadKind::Embedding { with_table: false });
        if needs_classes && num_classes < 2 {
            return Err(Error::Config(format!(
                "class-conditioned critic needs >= 2 classes, got {num_classes}"
            )));
        }
        let mut trunk = Vec::with_capacity(cfg.disc_hidden.len());
        let mut prev = cfg.data_dim;
        for &width in &cfg.disc_hidden {
            trunk.push(Linear::new(prev, width, rng));
            prev = width;
        }
        let adv = Linear::new(prev, 1, rng);
        let head = match head {
            HeadKind::Adversarial => Head::Adversarial,
            HeadKind::Embedding { with_table } => {
                let proj = match cfg.proj_head {
                    ProjHeadKind::Linear => vec![Linear::new(prev, cfg.embed_dim, rng)],
                    ProjHeadKind::Mlp => vec![
                        Linear::new(prev, prev, rng),
                        Linear::new(prev, cfg.embed_dim, rng),
                    ],
                };
                let table = with_table
                    .then(|| gaussian_init(num_classes, cfg.embed_dim, TABLE_INIT_STD, rng));
                Head::Embedding { proj, table }
            }
            HeadKind::LabelProjection => Head::LabelProjection {
                table: SnParam::new(
                    gaussian_init(num_classes, prev, TABLE_INIT_STD, rng),
                    rng,
                ),
            },
            HeadKind::Classifier => Head::Classifier { fc: Linear::new(prev, num_classes, rng) },
        };
        Ok(Self { cfg: cfg.clone(), num_classes, trunk, adv, head })
    }

    pub fn head_kind(&self) -> HeadKind {
        match &self.head {
            Head::Adversarial => HeadKind::Adversarial,
            Head::Embedding { table, .. } => {
                HeadKind::Embedding { with_table: table.is_some() }
            }
            Head::LabelProjection { .. } => HeadKind::LabelProjection,
            Head::Classifier { .. } => HeadKind::Classifier,
        }
    }

    /// Forward pass over points already on the tape (real batches are leafed
    /// by the caller; fake batches arrive straight from the generator).
    pub fn forward(&mut self, tape: &mut Tape, x: Tensor, update_u: bool) -> Result<DiscForward> {
        if x.cols() != self.cfg.data_dim {
            return Err(Error::ShapeMismatch {
                op: "discriminator_forward",
                lhs_rows: x.rows(),
                lhs_cols: x.cols(),
                rhs_rows: 1,
                rhs_cols: self.cfg.data_dim,
            });
        }
        let use_sn = self.cfg.spectral_norm;
        let slope = self.cfg.leaky_slope;
        let mut leaves = Vec::new();

        let mut h = x;
        for layer in &mut self.trunk {
            let pre = layer.forward(tape, h, use_sn, update_u, &mut leaves)?;
            h = tape.leaky_relu(pre, slope);
        }
        let features = h;
        let scores = self.adv.forward(tape, features, use_sn, update_u, &mut leaves)?;

        let mut embeddings = None;
        let mut class_table = None;
        let mut proj_table = None;
        let mut logits = None;
        match &mut self.head {
            Head::Adversarial => {}
            Head::Embedding { proj, table } => {
                let mut e = features;
                let last = proj.len() - 1;
                for (i, layer) in proj.iter_mut().enumerate() {
                    e = layer.forward(tape, e, use_sn, update_u, &mut leaves)?;
                    if i < last {
                        e = tape.relu(e);
                    }
                }
                embeddings = Some(tape.l2_normalize_rows(e)?);
                if let Some(t) = table {
                    let t_leaf = tape.leaf(t)?;
                    leaves.push(t_leaf);
                    class_table = Some(t_leaf);
                }
            }
            Head::LabelProjection { table } => {
                let (t_leaf, t_eff) = table.bind(tape, use_sn, update_u)?;
                leaves.push(t_leaf);
                proj_table = Some(t_eff);
            }
            Head::Classifier { fc } => {
                logits = Some(fc.forward(tape, features, use_sn, update_u, &mut leaves)?);
            }
        }
        debug_assert_eq!(leaves.len(), self.params().len());
        Ok(DiscForward { features, scores, embeddings, class_table, proj_table, logits, leaves })
    }

    /// Scores for a plain matrix of points on a throwaway tape.
    pub fn score(&mut self, points: &Matrix) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let x = tape.leaf(points)?;
        let f = self.forward(&mut tape, x, false)?;
        Ok(tape.value(f.scores).data().to_vec())
    }

    /// Scores with the label-projection term folded in when this critic has a
    /// projection head and labels are supplied; identical to [Self::score]
    /// otherwise.
    pub fn score_labeled(
        &mut self,
        points: &Matrix,
        labels: Option<&[usize]>,
    ) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let x = tape.leaf(points)?;
        let f = self.forward(&mut tape, x, false)?;
        let total = match (f.proj_table, labels) {
            (Some(table), Some(labels)) => {
                let proj = crate::losses::projection_scores(&mut tape, f.features, labels, table)?;
                tape.add(f.scores, proj)?
            }
            _ => f.scores,
        };
        Ok(tape.value(total).data().to_vec())
    }

    pub fn named_params(&self) -> Vec<(String, &Matrix)> {
        let mut out = Vec::new();
        for (i, layer) in self.trunk.iter().enumerate() {
            layer.visit(&format!("disc.t{i}"), &mut out);
        }
        self.adv.visit("disc.adv", &mut out);
        match &self.head {
            Head::Adversarial => {}
            Head::Embedding { proj, table } => {
                for (i, layer) in proj.iter().enumerate() {
                    layer.visit(&format!("disc.proj{i}"), &mut out);
                }
                if let Some(t) = table {
                    out.push(("disc.table".to_string(), t));
                }
            }
            Head::LabelProjection { table } => {
                out.push(("disc.table".to_string(), &table.weight));
            }
            Head::Classifier { fc } => fc.visit("disc.cls", &mut out),
        }
        out
    }

    pub fn named_params_mut(&mut self) -> Vec<(String, &mut Matrix)> {
        let mut out = Vec::new();
        for (i, layer) in self.trunk.iter_mut().enumerate() {
            layer.visit_mut(&format!("disc.t{i}"), &mut out);
        }
        self.adv.visit_mut("disc.adv", &mut out);
        match &mut self.head {
            Head::Adversarial => {}
            Head::Embedding { proj, table } => {
                for (i, layer) in proj.iter_mut().enumerate() {
                    layer.visit_mut(&format!("disc.proj{i}"), &mut out);
                }
                if let Some(t) = table {
                    out.push(("disc.table".to_string(), t));
                }
            }
            Head::LabelProjection { table } => {
                out.push(("disc.table".to_string(), &mut table.weight));
            }
            Head::Classifier { fc } => fc.visit_mut("disc.cls", &mut out),
        }
        out
    }

    pub fn params(&self) -> Vec<&Matrix> {
        self.named_params().into_iter().map(|(_, m)| m).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Matrix> {
        self.named_params_mut().into_iter().map(|(_, m)| m).collect()
    }

    pub fn named_u(&self) -> Vec<(String, &Vec<f64>)> {
        let mut out = Vec::new();
        for (i, layer) in self.trunk.iter().enumerate() {
            layer.visit_u(&format!("disc.t{i}"), &mut out);
        }
        self.adv.visit_u("disc.adv", &mut out);
        match &self.head {
            Head::Adversarial => {}
            Head::Embedding { proj, .. } => {
                for (i, layer) in proj.iter().enumerate() {
                    layer.visit_u(&format!("disc.proj{i}"), &mut out);
                }
            }
            Head::LabelProjection { table } => {
                out.push(("disc.table".to_string(), &table.u));
            }
            Head::Classifier { fc } => fc.visit_u("disc.cls", &mut out),
        }
        out
    }

    pub fn named_u_mut(&mut self) -> Vec<(String, &mut Vec<f64>)> {
        let mut out = Vec::new();
        for (i, layer) in self.trunk.iter_mut().enumerate() {
            layer.visit_u_mut(&format!("disc.t{i}"), &mut out);
        }
        self.adv.visit_u_mut("disc.adv", &mut out);
        match &mut self.head {
            Head::Adversarial => {}
            Head::Embedding { proj, .. } => {
                for (i, layer) in proj.iter_mut().enumerate() {
                    layer.visit_u_mut(&format!("disc.proj{i}"), &mut out);
                }
            }
            Head::LabelProjection { table } => {
                out.push(("disc.table".to_string(), &mut table.u));
            }
            Head::Classifier { fc } => fc.visit_u_mut("disc.cls", &mut out),
        }
        out
    }

    /// Spectrally tracked parameters with their instrumentation names.
    pub fn sn_params(&self) -> Vec<(String, &SnParam)> {
        let mut out = Vec::new();
        for (i, layer) in self.trunk.iter().enumerate() {
            out.push((format!("disc.t{i}.w"), &layer.w));
        }
        out.push(("disc.adv.w".to_string(), &self.adv.w));
        match &self.head {
            Head::Adversarial => {}
            Head::Embedding { proj, .. } => {
                for (i, layer) in proj.iter().enumerate() {
                    out.push((format!("disc.proj{i}.w"), &layer.w));
                }
            }
            Head::LabelProjection { table } => {
                out.push(("disc.table".to_string(), table));
            }
            Head::Classifier { fc } => out.push(("disc.cls.w".to_string(), &fc.w)),
        }
        out
    }

    /// Same set, mutably — for the trainer's once-per-step refresh.
    pub fn sn_params_mut(&mut self) -> Vec<&mut SnParam> {
        let mut out = Vec::new();
        for layer in &mut self.trunk {
            out.push(&mut layer.w);
        }
        out.push(&mut self.adv.w);
        match &mut self.head {
            Head::Adversarial => {}
            Head::Embedding { proj, .. } => {
                for layer in proj {
                    out.push(&mut layer.w);
                }
            }
            Head::LabelProjection { table } => out.push(table),
            Head::Classifier { fc } => out.push(&mut fc.w),
        }
        out
    }

    /// Raw weight matrices subject to spectral control, for instrumentation.
    pub fn sn_weights(&self) -> Vec<(String, &Matrix)> {
        self.sn_params().into_iter().map(|(n, p)| (n, &p.weight)).collect()
    }
}

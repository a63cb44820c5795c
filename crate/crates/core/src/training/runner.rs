//! The alternating-update training loop.
//!
//! Each generator iteration runs `n_dis` critic steps followed by one
//! generator step. A critic step does a **single forward pass** over the
//! stacked batch `[real rows; jittered rows (when needed); generated rows]`
//! so that every critic weight enters the tape exactly once (one leaf per
//! parameter, clean gradient read-back) and all sub-batches see identical
//! spectrally normalized weights; the row-wise MLP makes the stacking
//! semantically neutral. Power-iteration vectors advance exactly once per
//! step of the network that owns them, at the start of that step; every
//! forward runs with frozen vectors.
//!
//! Randomness discipline: weight initialization, the training loop, and each
//! evaluation draw from decoupled deterministic streams of the run seed, so
//! adding or removing evaluations never perturbs the training trajectory.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::autodiff::{Tape, Tensor};
use crate::datasets::DatasetPair;
use crate::error::{Error, Result};
use crate::evaluation::{
    class_conditional_frechet, collapse_flag, critic_spectral_readings, fake_accuracy,
    frechet_between, real_accuracy, sigma_jump_flag,
};
use crate::losses;
use crate::matrix::Matrix;
use crate::models::{DiscForward, Discriminator, EmaShadow, Generator, HeadKind};
use crate::training::checkpoint::Checkpoint;
use crate::training::config::{AdvLossKind, ConditioningKind, TrainConfig};
use crate::training::metrics::{EvalRecord, MetricsSink, SigmaReading};
use crate::training::optimizer::Adam;

/// RNG stream ids over the run seed. Initialization uses the default
/// stream 0; evaluations use `STREAM_EVAL_BASE + iteration`.
const STREAM_TRAIN: u64 = 1;
const STREAM_EVAL_BASE: u64 = 2;

/// Critic head implied by each conditioning mode.
pub fn head_kind_for(kind: ConditioningKind) -> HeadKind {
    match kind {
        ConditioningKind::None => HeadKind::Adversarial,
        ConditioningKind::AcGan => HeadKind::Classifier,
        ConditioningKind::ProjGan => HeadKind::LabelProjection,
        ConditioningKind::NtXent | ConditioningKind::TwoCAps => {
            HeadKind::Embedding { with_table: false }
        }
        ConditioningKind::PNca | ConditioningKind::DataToClass | ConditioningKind::TwoC => {
            HeadKind::Embedding { with_table: true }
        }
    }
}

/// Fresh generator/critic pair for a config, deterministic in the seed.
/// The generator is class-conditional for every mode except `none`.
pub fn build_models(cfg: &TrainConfig) -> Result<(Generator, Discriminator)> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let conditional = cfg.conditioning != ConditioningKind::None;
    let gen = Generator::new(&cfg.model, cfg.data.classes, conditional, &mut rng)?;
    let disc = Discriminator::new(
        &cfg.model,
        cfg.data.classes,
        head_kind_for(cfg.conditioning),
        &mut rng,
    )?;
    Ok((gen, disc))
}

/// Critic objective over real and generated scores (each m x 1).
pub fn adv_d_loss(
    tape: &mut Tape,
    real: Tensor,
    fake: Tensor,
    kind: AdvLossKind,
) -> Result<Tensor> {
    match kind {
        AdvLossKind::Hinge => {
            let neg_real = tape.scale(real, -1.0);
            let real_margin = tape.add_const(neg_real, 1.0);
            let real_hinge = tape.relu(real_margin);
            let real_term = tape.mean_all(real_hinge);
            let fake_margin = tape.add_const(fake, 1.0);
            let fake_hinge = tape.relu(fake_margin);
            let fake_term = tape.mean_all(fake_hinge);
            tape.add(real_term, fake_term)
        }
        AdvLossKind::ScoreDiff => {
            let mean_fake = tape.mean_all(fake);
            let mean_real = tape.mean_all(real);
            tape.sub(mean_fake, mean_real)
        }
    }
}

/// Generator objective: minimize the negated mean critic score.
pub fn adv_g_loss(tape: &mut Tape, fake: Tensor) -> Tensor {
    let m = tape.mean_all(fake);
    tape.scale(m, -1.0)
}

/// Mean squared difference between two score columns; the consistency
/// penalty between a batch and its jittered twin.
pub fn squared_consistency(tape: &mut Tape, a: Tensor, b: Tensor) -> Result<Tensor> {
    let d = tape.sub(a, b)?;
    let sq = tape.mul(d, d)?;
    Ok(tape.mean_all(sq))
}

/// Everything one critic step consumes, drawn up front so the objective is
/// a deterministic function of (parameters, batch).
#[derive(Clone, Debug)]
pub struct CriticBatch {
    /// Real samples, one row per example.
    pub real: Matrix,
    /// Class labels of `real`.
    pub labels: Vec<usize>,
    /// Latent noise used to synthesize the fake half of the batch.
    pub noise: Matrix,
    /// Labels requested from the generator.
    pub fake_labels: Vec<usize>,
    /// Jittered copies of `real` when consistency or paired-view
    /// conditioning needs them.
    pub views: Option<Matrix>,
}

/// Everything one generator step consumes.
#[derive(Clone, Debug)]
pub struct GenBatch {
    /// Latent noise, one row per sample.
    pub noise: Matrix,
    /// Labels requested from the generator.
    pub labels: Vec<usize>,
    /// Additive jitter producing a second view for paired-view conditioning.
    pub delta: Option<Matrix>,
}

/// Most recent objective values, for instrumentation.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StepLosses {
    /// Total critic objective (adversarial + weighted conditioning +
    /// consistency penalty) at the latest critic step.
    pub loss_d: f64,
    /// Total generator objective at the latest generator step.
    pub loss_g: f64,
    /// Unweighted conditioning term on real samples.
    pub cond_real: f64,
    /// Unweighted conditioning term on generated samples.
    pub cond_fake: f64,
}

/// Everything a finished run produces.
#[derive(Debug)]
pub struct TrainOutcome {
    /// All evaluation records, in order.
    pub history: Vec<EvalRecord>,
    /// The record with the lowest class-mean distance.
    pub best_record: EvalRecord,
    /// Model state at the best record.
    pub best: Checkpoint,
    /// Model state after the final iteration.
    pub final_ckpt: Checkpoint,
    /// Run-level timing; deliberately not part of the per-record metrics.
    pub wallclock_secs: f64,
}

#[derive(Debug)]
pub struct Trainer {
    pub cfg: TrainConfig,
    pub data: DatasetPair,
    pub gen: Generator,
    pub disc: Discriminator,
    pub ema: EmaShadow,
    adam_d: Adam,
    adam_g: Adam,
    rng: ChaCha8Rng,
    /// Completed generator iterations.
    iteration: usize,
    pub last: StepLosses,
    /// Per-layer spectral readings of the previous evaluation, for the
    /// jump flag.
    prev_sigmas: Option<Vec<f64>>,
}

fn gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, sigma: f64) -> Matrix {
    let dist = Normal::new(0.0, sigma).expect("validated sigma");
    Matrix::from_fn(rows, cols, |_, _| dist.sample(&mut *rng))
}

fn uniform_labels(rng: &mut ChaCha8Rng, m: usize, classes: usize) -> Vec<usize> {
    (0..m).map(|_| rng.gen_range(0..classes)).collect()
}

/// [a, b, a+1, b+1, ...]: row indices pairing each of m rows at offset `a`
/// with its twin at offset `b`.
fn interleave(m: usize, a: usize, b: usize) -> Vec<usize> {
    let mut idx = Vec::with_capacity(2 * m);
    for i in 0..m {
        idx.push(a + i);
        idx.push(b + i);
    }
    idx
}

fn abort_at(iteration: usize) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::NonFinite(message) => Error::NumericAbort { iteration, message },
        other => other,
    }
}

impl Trainer {
    pub fn new(cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let data = cfg.data.materialize()?;
        Self::with_data(cfg, data)
    }

    /// Build a trainer over an already-materialized dataset split.
    pub fn with_data(cfg: TrainConfig, data: DatasetPair) -> Result<Self> {
        cfg.validate()?;
        if data.train.num_classes != cfg.data.classes {
            return Err(Error::Config(format!(
                "config says {} classes but the dataset holds {}",
                cfg.data.classes, data.train.num_classes
            )));
        }
        if data.train.dim() != cfg.model.data_dim {
            return Err(Error::Config(format!(
                "model expects {}-dimensional points but the dataset is {}-dimensional",
                cfg.model.data_dim,
                data.train.dim()
            )));
        }
        // Per-class Gaussian fits during evaluation need two points per
        // class on the reference side.
        for (class, rows) in data.train.class_indices().iter().enumerate() {
            if rows.len() < 2 {
                return Err(Error::MissingClass { class, which: "reference", required: 2 });
            }
        }
        let (gen, disc) = build_models(&cfg)?;
        let ema = EmaShadow::new(&gen, cfg.ema.decay, cfg.ema.start_iter);
        let adam_d = Adam::new(cfg.lr_d, cfg.beta1, cfg.beta2);
        let adam_g = Adam::new(cfg.lr_g, cfg.beta1, cfg.beta2);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(STREAM_TRAIN);
        Ok(Self {
            cfg,
            data,
            gen,
            disc,
            ema,
            adam_d,
            adam_g,
            rng,
            iteration: 0,
            last: StepLosses::default(),
            prev_sigmas: None,
        })
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    fn draw_batch(&mut self) -> (Matrix, Vec<usize>) {
        let train = &self.data.train;
        let n = train.len();
        let m = self.cfg.batch_size;
        let mut points = Matrix::zeros(m, train.dim());
        let mut labels = Vec::with_capacity(m);
        for i in 0..m {
            let j = self.rng.gen_range(0..n);
            points.row_mut(i).copy_from_slice(train.points.row(j));
            labels.push(train.labels[j]);
        }
        (points, labels)
    }

    /// Conditioning term for rows 0..m of the forward pass, with jittered
    /// twins at `view_off` when the mode needs them. Returns None for modes
    /// without a separate term.
    fn conditioning_term(
        &self,
        tape: &mut Tape,
        fwd: &DiscForward,
        labels: &[usize],
        m: usize,
        view_off: Option<usize>,
    ) -> Result<Option<Tensor>> {
        let t = self.cfg.temperature;
        let base: Vec<usize> = (0..m).collect();
        let missing = |what: &str| Error::Contract(format!("critic head lacks {what}"));
        let term = match self.cfg.conditioning {
            ConditioningKind::None | ConditioningKind::ProjGan => return Ok(None),
            ConditioningKind::AcGan => {
                let logits = fwd.logits.ok_or_else(|| missing("class logits"))?;
                let sel = tape.gather_rows(logits, &base)?;
                losses::softmax_cross_entropy(tape, sel, labels)?
            }
            ConditioningKind::NtXent => {
                let emb = fwd.embeddings.ok_or_else(|| missing("embeddings"))?;
                let off = view_off.ok_or_else(|| missing("paired views"))?;
                let pairs = tape.gather_rows(emb, &interleave(m, 0, off))?;
                losses::nt_xent(tape, pairs, t)?
            }
            ConditioningKind::PNca => {
                let emb = fwd.embeddings.ok_or_else(|| missing("embeddings"))?;
                let table = fwd.class_table.ok_or_else(|| missing("a class table"))?;
                let e = tape.gather_rows(emb, &base)?;
                losses::proxy_nca(tape, e, labels, table)?
            }
            ConditioningKind::DataToClass => {
                let emb = fwd.embeddings.ok_or_else(|| missing("embeddings"))?;
                let table = fwd.class_table.ok_or_else(|| missing("a class table"))?;
                let e = tape.gather_rows(emb, &base)?;
                losses::data_to_class(tape, e, labels, table, t)?
            }
            ConditioningKind::TwoC => {
                let emb = fwd.embeddings.ok_or_else(|| missing("embeddings"))?;
                let table = fwd.class_table.ok_or_else(|| missing("a class table"))?;
                let e = tape.gather_rows(emb, &base)?;
                losses::conditional_contrastive(tape, e, labels, table, t)?
            }
            ConditioningKind::TwoCAps => {
                let emb = fwd.embeddings.ok_or_else(|| missing("embeddings"))?;
                let off = view_off.ok_or_else(|| missing("paired views"))?;
                let e = tape.gather_rows(emb, &base)?;
                let v = tape.gather_rows(emb, &(off..off + m).collect::<Vec<_>>())?;
                losses::conditional_contrastive_augmented(tape, e, v, labels, t)?
            }
        };
        Ok(Some(term))
    }

    /// Draw everything one critic step consumes. Objectives are then pure
    /// functions of (parameters, batch), which the gradient harness relies
    /// on for finite differencing.
    pub fn draw_critic_batch(&mut self) -> CriticBatch {
        let m = self.cfg.batch_size;
        let needs_views = self.cfg.cr.enabled || self.cfg.conditioning.needs_augmentation();
        let (real, labels) = self.draw_batch();
        let noise = gaussian_matrix(&mut self.rng, m, self.cfg.model.noise_dim, 1.0);
        let fake_labels = uniform_labels(&mut self.rng, m, self.cfg.data.classes);
        let views = needs_views.then(|| {
            let mut v = real.clone();
            v.add_scaled(
                &gaussian_matrix(&mut self.rng, m, real.cols(), self.cfg.cr.jitter_sigma),
                1.0,
            );
            v
        });
        CriticBatch { real, labels, noise, fake_labels, views }
    }

    /// Draw everything one generator step consumes.
    pub fn draw_gen_batch(&mut self) -> GenBatch {
        let m = self.cfg.batch_size;
        let noise = gaussian_matrix(&mut self.rng, m, self.cfg.model.noise_dim, 1.0);
        let labels = uniform_labels(&mut self.rng, m, self.cfg.data.classes);
        let delta = self.cfg.conditioning.needs_augmentation().then(|| {
            gaussian_matrix(&mut self.rng, m, self.cfg.model.data_dim, self.cfg.cr.jitter_sigma)
        });
        GenBatch { noise, labels, delta }
    }

    /// Critic objective over a fixed batch: one forward pass over the
    /// stacked input, hinge or score-difference adversarial term, weighted
    /// conditioning term, and the consistency penalty when enabled. Returns
    /// (total, critic parameter leaves, unweighted conditioning value).
    pub fn critic_objective(
        &mut self,
        tape: &mut Tape,
        batch: &CriticBatch,
    ) -> Result<(Tensor, Vec<Tensor>, f64)> {
        let m = batch.real.rows();
        // Throwaway tape inside `sample`: the generator is a constant here.
        let fake = self.gen.sample(&batch.noise, &batch.fake_labels)?;

        let total_rows = m * (2 + usize::from(batch.views.is_some()));
        let mut stacked = Vec::with_capacity(total_rows * batch.real.cols());
        stacked.extend_from_slice(batch.real.data());
        if let Some(v) = &batch.views {
            stacked.extend_from_slice(v.data());
        }
        stacked.extend_from_slice(fake.data());
        let input = Matrix::new(total_rows, batch.real.cols(), stacked);

        let x = tape.leaf(&input)?;
        let fwd = self.disc.forward(tape, x, false)?;

        let base: Vec<usize> = (0..m).collect();
        let fake_off = if batch.views.is_some() { 2 * m } else { m };
        let fake_ix: Vec<usize> = (fake_off..fake_off + m).collect();
        let s_real_adv = tape.gather_rows(fwd.scores, &base)?;
        let s_fake_adv = tape.gather_rows(fwd.scores, &fake_ix)?;

        // A projection critic conditions through the score itself.
        let (s_real, s_fake) = match fwd.proj_table {
            Some(table) => {
                let f_real = tape.gather_rows(fwd.features, &base)?;
                let f_fake = tape.gather_rows(fwd.features, &fake_ix)?;
                let p_real = losses::projection_scores(tape, f_real, &batch.labels, table)?;
                let p_fake =
                    losses::projection_scores(tape, f_fake, &batch.fake_labels, table)?;
                (tape.add(s_real_adv, p_real)?, tape.add(s_fake_adv, p_fake)?)
            }
            None => (s_real_adv, s_fake_adv),
        };

        let mut total = adv_d_loss(tape, s_real, s_fake, self.cfg.adv_loss)?;

        let view_off = batch.views.is_some().then_some(m);
        let mut cond_value = 0.0;
        if let Some(c) = self.conditioning_term(tape, &fwd, &batch.labels, m, view_off)? {
            cond_value = tape.scalar(c)?;
            let weighted = tape.scale(c, self.cfg.lambda);
            total = tape.add(total, weighted)?;
        }

        if self.cfg.cr.enabled {
            let view_ix: Vec<usize> = (m..2 * m).collect();
            let s_view = tape.gather_rows(fwd.scores, &view_ix)?;
            let penalty = squared_consistency(tape, s_real_adv, s_view)?;
            let weighted = tape.scale(penalty, self.cfg.cr.coefficient);
            total = tape.add(total, weighted)?;
        }

        Ok((total, fwd.leaves, cond_value))
    }

    /// Generator objective over a fixed batch. Jitter for paired-view modes
    /// rides on the tape so gradients reach the generator through both
    /// views. Returns (total, generator parameter leaves, unweighted
    /// conditioning value).
    pub fn generator_objective(
        &mut self,
        tape: &mut Tape,
        batch: &GenBatch,
    ) -> Result<(Tensor, Vec<Tensor>, f64)> {
        let m = batch.noise.rows();
        let gen_fwd = self.gen.forward(tape, &batch.noise, &batch.labels, false)?;

        let input = match &batch.delta {
            Some(delta) => {
                let delta_leaf = tape.leaf(delta)?;
                let shifted = tape.add(gen_fwd.samples, delta_leaf)?;
                tape.concat_rows(gen_fwd.samples, shifted)?
            }
            None => gen_fwd.samples,
        };
        let has_views = batch.delta.is_some();

        let fwd = self.disc.forward(tape, input, false)?;
        let base: Vec<usize> = (0..m).collect();
        let s_fake_adv =
            if has_views { tape.gather_rows(fwd.scores, &base)? } else { fwd.scores };

        let s_fake = match fwd.proj_table {
            Some(table) => {
                let feats = if has_views {
                    tape.gather_rows(fwd.features, &base)?
                } else {
                    fwd.features
                };
                let p = losses::projection_scores(tape, feats, &batch.labels, table)?;
                tape.add(s_fake_adv, p)?
            }
            None => s_fake_adv,
        };

        let mut total = adv_g_loss(tape, s_fake);

        let view_off = has_views.then_some(m);
        let mut cond_value = 0.0;
        if let Some(c) = self.conditioning_term(tape, &fwd, &batch.labels, m, view_off)? {
            cond_value = tape.scalar(c)?;
            let weighted = tape.scale(c, self.cfg.lambda);
            total = tape.add(total, weighted)?;
        }

        Ok((total, gen_fwd.leaves, cond_value))
    }

    /// One critic update on a fresh batch.
    pub fn d_step(&mut self) -> Result<()> {
        if self.cfg.model.spectral_norm {
            for p in self.disc.sn_params_mut() {
                p.sigma(true);
            }
        }
        let batch = self.draw_critic_batch();
        let mut tape = Tape::new();
        let (total, leaves, cond_value) = self.critic_objective(&mut tape, &batch)?;
        let loss = tape.scalar(total)?;
        if !loss.is_finite() {
            return Err(Error::NonFinite("critic objective".into()));
        }
        tape.backward(total)?;
        let grads: Vec<Matrix> = leaves.iter().map(|&l| tape.grad(l).clone()).collect();
        self.adam_d.step(self.disc.named_params_mut(), &grads)?;

        self.last.loss_d = loss;
        self.last.cond_real = cond_value;
        Ok(())
    }

    /// One generator update; `g_iter` is the 1-based iteration being run.
    pub fn g_step(&mut self, g_iter: usize) -> Result<()> {
        if self.cfg.model.spectral_norm {
            for p in self.gen.sn_params_mut() {
                p.sigma(true);
            }
        }
        let batch = self.draw_gen_batch();
        let mut tape = Tape::new();
        let (total, leaves, cond_value) = self.generator_objective(&mut tape, &batch)?;
        let loss = tape.scalar(total)?;
        if !loss.is_finite() {
            return Err(Error::NonFinite("generator objective".into()));
        }
        tape.backward(total)?;
        let grads: Vec<Matrix> = leaves.iter().map(|&l| tape.grad(l).clone()).collect();
        self.adam_g.step(self.gen.named_params_mut(), &grads)?;

        if self.cfg.ema.enabled {
            self.ema.update(&self.gen, g_iter);
        }
        self.last.loss_g = loss;
        self.last.cond_fake = cond_value;
        Ok(())
    }

    /// Evaluation snapshot at `iteration`, on an RNG stream decoupled from
    /// training: evaluating never perturbs the trajectory.
    pub fn evaluate(&mut self, iteration: usize) -> Result<EvalRecord> {
        let n = self.cfg.eval_samples;
        let classes = self.cfg.data.classes;
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        rng.set_stream(STREAM_EVAL_BASE + iteration as u64);
        let noise = gaussian_matrix(&mut rng, n, self.cfg.model.noise_dim, 1.0);
        // Round-robin labels: every class appears at least twice because
        // eval_samples >= 2 * classes is enforced by validation.
        let labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
        let mut sampler =
            if self.cfg.ema.enabled { self.ema.applied(&self.gen) } else { self.gen.clone() };
        let samples = sampler.sample(&noise, &labels)?;

        let frechet_pooled = frechet_between(&self.data.train.points, &samples)?;
        let by_class = class_conditional_frechet(&self.data.train, &samples, &labels)?;

        let train_scores =
            self.disc.score_labeled(&self.data.train.points, Some(&self.data.train.labels))?;
        let val_scores =
            self.disc.score_labeled(&self.data.val.points, Some(&self.data.val.labels))?;
        let fake_scores = self.disc.score_labeled(&samples, Some(&labels))?;
        let acc_train = real_accuracy(&train_scores);
        let acc_val = real_accuracy(&val_scores);
        let acc_fake = fake_accuracy(&fake_scores);

        let (readings, sigma_max) = critic_spectral_readings(&self.disc)?;
        let current: Vec<f64> = readings.iter().map(|(_, s)| *s).collect();
        let jump = self.prev_sigmas.as_ref().is_some_and(|prev| {
            prev.iter().zip(&current).any(|(&p, &c)| sigma_jump_flag(p, c))
        });
        self.prev_sigmas = Some(current);

        Ok(EvalRecord {
            iteration,
            loss_d: self.last.loss_d,
            loss_g: self.last.loss_g,
            loss_cond_real: self.last.cond_real,
            loss_cond_fake: self.last.cond_fake,
            frechet_pooled,
            frechet_class_mean: by_class.mean,
            frechet_per_class: by_class.per_class,
            acc_train,
            acc_val,
            acc_fake,
            acc_gap: acc_train - acc_val,
            sigmas: readings
                .into_iter()
                .map(|(layer, sigma)| SigmaReading { layer, sigma })
                .collect(),
            sigma_max,
            collapse_flag: collapse_flag(acc_train, acc_val),
            sigma_jump_flag: jump,
        })
    }

    /// Run the full loop. Evaluations happen every `eval_interval`
    /// iterations and at the last one; each record streams into `sink`
    /// immediately, so partial histories survive an abort.
    pub fn run(&mut self, sink: &mut dyn MetricsSink) -> Result<TrainOutcome> {
        let start = Instant::now();
        let iters = self.cfg.iterations;
        let mut history: Vec<EvalRecord> = Vec::new();
        let mut best: Option<(EvalRecord, Checkpoint)> = None;
        for g_iter in 1..=iters {
            for _ in 0..self.cfg.n_dis {
                self.d_step().map_err(abort_at(g_iter))?;
            }
            self.g_step(g_iter).map_err(abort_at(g_iter))?;
            self.iteration = g_iter;

            if g_iter % self.cfg.eval_interval == 0 || g_iter == iters {
                let rec = self.evaluate(g_iter).map_err(abort_at(g_iter))?;
                sink.record(&rec)?;
                let improved = best
                    .as_ref()
                    .is_none_or(|(b, _)| rec.frechet_class_mean < b.frechet_class_mean);
                if improved {
                    let ckpt =
                        Checkpoint::capture(&self.cfg, g_iter, &self.gen, &self.disc, &self.ema);
                    best = Some((rec.clone(), ckpt));
                }
                history.push(rec);
            }
        }
        let (best_record, best_ckpt) = best.expect("the final iteration always evaluates");
        let final_ckpt = Checkpoint::capture(&self.cfg, iters, &self.gen, &self.disc, &self.ema);
        Ok(TrainOutcome {
            history,
            best_record,
            best: best_ckpt,
            final_ckpt,
            wallclock_secs: start.elapsed().as_secs_f64(),
        })
    }
}

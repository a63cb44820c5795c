//! Finite-difference validation of every gradient the trainer relies on.
//!
//! Three layers of checks, each comparing tape gradients against central
//! finite differences with the relative-error convention of
//! [`autodiff::grad_check`]:
//!
//! * **ops** — every differentiation rule on the tape, exercised through a
//!   small composite objective with non-uniform gradients;
//! * **losses** — each conditioning loss with respect to every input it
//!   differentiates through (features, class tables, paired views, logits);
//! * **networks** — the two full training objectives with respect to actual
//!   generator and critic parameters, over frozen batches.
//!
//! Network checks run with spectral normalization disabled: the scale
//! estimated by power iteration is held constant in backward on purpose, so
//! a finite difference would see the derivative of that scale, which the
//! tape deliberately omits. Scale accuracy is validated separately against
//! a dense SVD.
//!
//! [`GradReport`] carries one entry per named check (worst error across
//! seeds). `inject_fault` flips the sign of one backward rule via
//! [`Tape::flip_tanh_rule_for_validation`] so callers can prove the harness
//! actually detects a broken rule.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::autodiff::{Tape, Tensor};
use crate::error::{Error, Result};
use crate::losses;
use crate::matrix::Matrix;
use crate::training::{AdvLossKind, ConditioningKind, TrainConfig, Trainer};

/// Largest acceptable relative error between tape and finite-difference
/// gradients.
pub const GRAD_TOLERANCE: f64 = 1e-4;

/// Step used for central differences.
const FD_EPS: f64 = 1e-5;

/// Outcome of one named gradient check.
#[derive(Clone, Debug)]
pub struct CheckEntry {
    /// What was differentiated, e.g. `op.matmul` or `loss.2c.features`.
    pub name: String,
    /// Worst `|g_tape - g_fd| / max(1, |g_fd|)` over all checked elements.
    pub max_rel_err: f64,
}

impl CheckEntry {
    pub fn passed(&self) -> bool {
        self.max_rel_err < GRAD_TOLERANCE
    }
}

/// All checks from one run, one entry per distinct name (worst error kept).
#[derive(Clone, Debug, Default)]
pub struct GradReport {
    pub entries: Vec<CheckEntry>,
}

impl GradReport {
    /// Fold entries in, keeping the worst error seen per name and the order
    /// in which names first appeared.
    fn absorb(&mut self, batch: Vec<CheckEntry>) {
        for e in batch {
            match self.entries.iter_mut().find(|x| x.name == e.name) {
                Some(x) => x.max_rel_err = x.max_rel_err.max(e.max_rel_err),
                None => self.entries.push(e),
            }
        }
    }

    pub fn all_passed(&self) -> bool {
        self.entries.iter().all(CheckEntry::passed)
    }

    pub fn failures(&self) -> Vec<&CheckEntry> {
        self.entries.iter().filter(|e| !e.passed()).collect()
    }

    /// Entries validating individual tape rules (`op.` prefix).
    pub fn op_count(&self) -> usize {
        self.entries.iter().filter(|e| e.name.starts_with("op.")).count()
    }
}

/// Check the tape gradient of `f` at `inputs` against central finite
/// differences, one [`CheckEntry`] per input, named by `names` (inputs may
/// share a name; the report merges them). `f` must produce a 1x1 objective
/// from leaves created in `inputs` order.
fn check_multi<F>(
    names: &[&str],
    inputs: &[Matrix],
    inject_fault: bool,
    f: F,
) -> Result<Vec<CheckEntry>>
where
    F: Fn(&mut Tape, &[Tensor]) -> Result<Tensor>,
{
    assert_eq!(names.len(), inputs.len(), "one name per checked input");

    let mut tape = Tape::new();
    if inject_fault {
        tape.flip_tanh_rule_for_validation();
    }
    let leaves: Vec<Tensor> =
        inputs.iter().map(|m| tape.leaf(m)).collect::<Result<Vec<_>>>()?;
    let y = f(&mut tape, &leaves)?;
    if y.shape() != (1, 1) {
        return Err(Error::NonScalarObjective { rows: y.rows(), cols: y.cols() });
    }
    tape.backward(y)?;
    let analytic: Vec<Matrix> = leaves.iter().map(|&l| tape.grad(l).clone()).collect();

    // The fault only corrupts backward, so value probes never need it.
    let eval = |ms: &[Matrix]| -> Result<f64> {
        let mut t = Tape::new();
        let ls: Vec<Tensor> = ms.iter().map(|m| t.leaf(m)).collect::<Result<Vec<_>>>()?;
        let y = f(&mut t, &ls)?;
        t.scalar(y)
    };

    let mut probe: Vec<Matrix> = inputs.to_vec();
    let mut out = Vec::with_capacity(inputs.len());
    for k in 0..inputs.len() {
        let mut worst = 0.0_f64;
        for i in 0..inputs[k].len() {
            let orig = probe[k].data()[i];
            probe[k].data_mut()[i] = orig + FD_EPS;
            let plus = eval(&probe)?;
            probe[k].data_mut()[i] = orig - FD_EPS;
            let minus = eval(&probe)?;
            probe[k].data_mut()[i] = orig;
            let fd = (plus - minus) / (2.0 * FD_EPS);
            let ad = analytic[k].data()[i];
            let rel = (ad - fd).abs() / fd.abs().max(1.0);
            if rel > worst {
                worst = rel;
            }
        }
        out.push(CheckEntry { name: names[k].to_string(), max_rel_err: worst });
    }
    Ok(out)
}

fn randn(rng: &mut ChaCha8Rng, rows: usize, cols: usize, sigma: f64) -> Matrix {
    let dist = Normal::new(0.0, sigma).expect("finite sigma");
    Matrix::from_fn(rows, cols, |_, _| dist.sample(&mut *rng))
}

/// Magnitudes in [0.3, 1.2] with random sign: keeps kinked activations a
/// safe distance from their corner.
fn rand_off_kink(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    let mag = Uniform::new(0.3, 1.2);
    let sign = Uniform::new(0.0_f64, 1.0);
    Matrix::from_fn(rows, cols, |_, _| {
        let s = if sign.sample(&mut *rng) < 0.5 { -1.0 } else { 1.0 };
        s * mag.sample(&mut *rng)
    })
}

fn rand_positive(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    let dist = Uniform::new(0.5, 2.0);
    Matrix::from_fn(rows, cols, |_, _| dist.sample(&mut *rng))
}

fn rand_labels(rng: &mut ChaCha8Rng, m: usize, classes: usize) -> Vec<usize> {
    use rand::Rng;
    (0..m).map(|_| rng.gen_range(0..classes)).collect()
}

/// One entry per tape differentiation rule.
pub fn check_ops(seed: u64, inject_fault: bool) -> Result<Vec<CheckEntry>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();

    let a34 = randn(&mut rng, 3, 4, 1.0);
    let b42 = randn(&mut rng, 4, 2, 1.0);
    out.extend(check_multi(
        &["op.matmul", "op.matmul"],
        &[a34.clone(), b42],
        inject_fault,
        |t, l| {
            let p = t.matmul(l[0], l[1])?;
            Ok(t.sum_all(p))
        },
    )?);

    let w43 = randn(&mut rng, 4, 3, 1.0);
    out.extend(check_multi(
        &["op.transpose", "op.transpose"],
        &[a34.clone(), w43],
        inject_fault,
        |t, l| {
            let tr = t.transpose(l[0]);
            let p = t.mul(tr, l[1])?;
            Ok(t.sum_all(p))
        },
    )?);

    let x = randn(&mut rng, 3, 4, 1.0);
    let y = randn(&mut rng, 3, 4, 1.0);
    let w = randn(&mut rng, 3, 4, 1.0);
    out.extend(check_multi(
        &["op.add", "op.add", "op.add"],
        &[x.clone(), y.clone(), w.clone()],
        inject_fault,
        |t, l| {
            let s = t.add(l[0], l[1])?;
            let p = t.mul(s, l[2])?;
            Ok(t.sum_all(p))
        },
    )?);
    out.extend(check_multi(
        &["op.sub", "op.sub", "op.sub"],
        &[x.clone(), y.clone(), w.clone()],
        inject_fault,
        |t, l| {
            let s = t.sub(l[0], l[1])?;
            let p = t.mul(s, l[2])?;
            Ok(t.sum_all(p))
        },
    )?);
    out.extend(check_multi(
        &["op.mul", "op.mul"],
        &[x.clone(), y.clone()],
        inject_fault,
        |t, l| {
            let p = t.mul(l[0], l[1])?;
            Ok(t.sum_all(p))
        },
    )?);
    out.extend(check_multi(&["op.scale"], &[x.clone()], inject_fault, |t, l| {
        let s = t.scale(l[0], 1.7);
        let p = t.mul(s, l[0])?;
        Ok(t.sum_all(p))
    })?);
    out.extend(check_multi(&["op.add_const"], &[x.clone()], inject_fault, |t, l| {
        let s = t.add_const(l[0], 0.3);
        let p = t.mul(s, l[0])?;
        Ok(t.sum_all(p))
    })?);

    let bias = randn(&mut rng, 1, 4, 1.0);
    out.extend(check_multi(
        &["op.add_row_broadcast", "op.add_row_broadcast", "op.add_row_broadcast"],
        &[x.clone(), bias, w.clone()],
        inject_fault,
        |t, l| {
            let s = t.add_row_broadcast(l[0], l[1])?;
            let p = t.mul(s, l[2])?;
            Ok(t.sum_all(p))
        },
    )?);

    let kinky = rand_off_kink(&mut rng, 4, 5);
    let w45 = randn(&mut rng, 4, 5, 1.0);
    out.extend(check_multi(
        &["op.relu", "op.relu"],
        &[kinky.clone(), w45.clone()],
        inject_fault,
        |t, l| {
            let r = t.relu(l[0]);
            let p = t.mul(r, l[1])?;
            Ok(t.sum_all(p))
        },
    )?);
    out.extend(check_multi(
        &["op.leaky_relu", "op.leaky_relu"],
        &[kinky.clone(), w45.clone()],
        inject_fault,
        |t, l| {
            let r = t.leaky_relu(l[0], 0.2);
            let p = t.mul(r, l[1])?;
            Ok(t.sum_all(p))
        },
    )?);
    out.extend(check_multi(
        &["op.tanh", "op.tanh"],
        &[kinky.clone(), w45.clone()],
        inject_fault,
        |t, l| {
            let r = t.tanh(l[0]);
            let p = t.mul(r, l[1])?;
            Ok(t.sum_all(p))
        },
    )?);
    out.extend(check_multi(&["op.exp"], &[kinky.clone()], inject_fault, |t, l| {
        let e = t.exp(l[0]);
        Ok(t.mean_all(e))
    })?);

    let pos = rand_positive(&mut rng, 4, 5);
    out.extend(check_multi(&["op.log"], &[pos], inject_fault, |t, l| {
        let lg = t.log(l[0])?;
        let p = t.mul(lg, l[0])?;
        Ok(t.sum_all(p))
    })?);

    let a45 = randn(&mut rng, 4, 5, 1.0);
    out.extend(check_multi(&["op.log_sum_exp_rows"], &[a45.clone()], inject_fault, |t, l| {
        let lse = t.log_sum_exp_rows(l[0]);
        Ok(t.sum_all(lse))
    })?);
    out.extend(check_multi(
        &["op.l2_normalize_rows", "op.l2_normalize_rows"],
        &[a45.clone(), w45.clone()],
        inject_fault,
        |t, l| {
            let n = t.l2_normalize_rows(l[0])?;
            let p = t.mul(n, l[1])?;
            Ok(t.sum_all(p))
        },
    )?);

    let w41 = randn(&mut rng, 4, 1, 1.0);
    out.extend(check_multi(
        &["op.sum_rows", "op.sum_rows"],
        &[a45.clone(), w41.clone()],
        inject_fault,
        |t, l| {
            let s = t.sum_rows(l[0]);
            let p = t.mul(s, l[1])?;
            Ok(t.sum_all(p))
        },
    )?);
    out.extend(check_multi(
        &["op.mean_rows", "op.mean_rows"],
        &[a45.clone(), w41],
        inject_fault,
        |t, l| {
            let s = t.mean_rows(l[0]);
            let p = t.mul(s, l[1])?;
            Ok(t.sum_all(p))
        },
    )?);

    let a53 = randn(&mut rng, 5, 3, 1.0);
    let w43b = randn(&mut rng, 4, 3, 1.0);
    out.extend(check_multi(
        &["op.gather_rows", "op.gather_rows"],
        &[a53, w43b],
        inject_fault,
        |t, l| {
            // Repeated index: the rule must accumulate, not overwrite.
            let g = t.gather_rows(l[0], &[0, 2, 1, 2])?;
            let p = t.mul(g, l[1])?;
            Ok(t.sum_all(p))
        },
    )?);

    let a32 = randn(&mut rng, 3, 2, 1.0);
    let b33 = randn(&mut rng, 3, 3, 1.0);
    let w35 = randn(&mut rng, 3, 5, 1.0);
    out.extend(check_multi(
        &["op.concat_cols", "op.concat_cols", "op.concat_cols"],
        &[a32, b33, w35],
        inject_fault,
        |t, l| {
            let c = t.concat_cols(l[0], l[1])?;
            let p = t.mul(c, l[2])?;
            Ok(t.sum_all(p))
        },
    )?);

    let a24 = randn(&mut rng, 2, 4, 1.0);
    let b34 = randn(&mut rng, 3, 4, 1.0);
    let w54 = randn(&mut rng, 5, 4, 1.0);
    out.extend(check_multi(
        &["op.concat_rows", "op.concat_rows", "op.concat_rows"],
        &[a24, b34, w54],
        inject_fault,
        |t, l| {
            let c = t.concat_rows(l[0], l[1])?;
            let p = t.mul(c, l[2])?;
            Ok(t.sum_all(p))
        },
    )?);

    out.extend(check_multi(&["op.mean_all"], &[x.clone()], inject_fault, |t, l| {
        let p = t.mul(l[0], l[0])?;
        Ok(t.mean_all(p))
    })?);
    out.extend(check_multi(&["op.sum_all"], &[x], inject_fault, |t, l| {
        let p = t.mul(l[0], l[0])?;
        Ok(t.sum_all(p))
    })?);

    Ok(out)
}

/// One entry per (conditioning loss, differentiated input). Batch sizes and
/// embedding widths are drawn small (rows <= 8, dims <= 8) per seed.
pub fn check_losses(seed: u64, inject_fault: bool) -> Result<Vec<CheckEntry>> {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = rng.gen_range(2..=8_usize);
    let d = rng.gen_range(2..=8_usize);
    let classes = rng.gen_range(2..=4_usize);
    let t_choices = [0.5, 1.0, 2.0];
    let temp = t_choices[rng.gen_range(0..t_choices.len())];

    let features = randn(&mut rng, m, d, 1.0);
    let table = randn(&mut rng, classes, d, 1.0);
    let labels = rand_labels(&mut rng, m, classes);
    let mut out = Vec::new();

    out.extend(check_multi(
        &["loss.2c.features", "loss.2c.table"],
        &[features.clone(), table.clone()],
        inject_fault,
        |t, l| losses::conditional_contrastive(t, l[0], &labels, l[1], temp),
    )?);

    out.extend(check_multi(
        &["loss.eq7.features", "loss.eq7.table"],
        &[features.clone(), table.clone()],
        inject_fault,
        |t, l| losses::data_to_class(t, l[0], &labels, l[1], temp),
    )?);

    let augmented = randn(&mut rng, m, d, 1.0);
    out.extend(check_multi(
        &["loss.2c-aps.features", "loss.2c-aps.augmented"],
        &[features.clone(), augmented],
        inject_fault,
        |t, l| losses::conditional_contrastive_augmented(t, l[0], l[1], &labels, temp),
    )?);

    let pairs = rng.gen_range(2..=4_usize);
    let paired = randn(&mut rng, 2 * pairs, d, 1.0);
    out.extend(check_multi(
        &["loss.ntxent.features"],
        &[paired],
        inject_fault,
        |t, l| losses::nt_xent(t, l[0], temp),
    )?);

    out.extend(check_multi(
        &["loss.pnca.features", "loss.pnca.table"],
        &[features.clone(), table.clone()],
        inject_fault,
        |t, l| losses::proxy_nca(t, l[0], &labels, l[1]),
    )?);

    let logits = randn(&mut rng, m, classes, 1.0);
    out.extend(check_multi(
        &["loss.acgan.logits"],
        &[logits],
        inject_fault,
        |t, l| losses::softmax_cross_entropy(t, l[0], &labels),
    )?);

    out.extend(check_multi(
        &["loss.projection.features", "loss.projection.table"],
        &[features, table],
        inject_fault,
        |t, l| {
            let s = losses::projection_scores(t, l[0], &labels, l[1])?;
            Ok(t.sum_all(s))
        },
    )?);

    Ok(out)
}

/// Tiny config for network-level checks. Spectral normalization must stay
/// off here (see the module docs).
fn network_config(seed: u64, conditioning: ConditioningKind, adv: AdvLossKind) -> TrainConfig {
    let mut cfg = TrainConfig::default();
    cfg.seed = seed;
    cfg.conditioning = conditioning;
    cfg.adv_loss = adv;
    cfg.model.spectral_norm = false;
    cfg.model.noise_dim = 4;
    cfg.model.gen_hidden = vec![6];
    cfg.model.disc_hidden = vec![6];
    cfg.model.embed_dim = 4;
    cfg.batch_size = 4;
    cfg.iterations = 1;
    cfg.eval_interval = 1;
    cfg.eval_samples = 6;
    cfg.data.classes = 3;
    cfg.data.per_class = 12;
    cfg.data.seed = seed;
    // Exercise the consistency branch of the critic objective too.
    cfg.cr.enabled = true;
    cfg
}

/// Finite-difference a training objective with respect to every parameter
/// entry of one network, over a frozen batch.
///
/// `analytic` must produce (objective, parameter leaves) on the given tape;
/// `value` must evaluate the same objective as a plain number; `params` and
/// `params_mut` expose the checked network's parameters in leaf order.
fn check_network_params<A, V>(
    name: &str,
    trainer: &mut Trainer,
    critic_side: bool,
    inject_fault: bool,
    analytic: A,
    value: V,
) -> Result<CheckEntry>
where
    A: Fn(&mut Trainer, &mut Tape) -> Result<(Tensor, Vec<Tensor>)>,
    V: Fn(&mut Trainer) -> Result<f64>,
{
    let mut tape = Tape::new();
    if inject_fault {
        tape.flip_tanh_rule_for_validation();
    }
    let (total, leaves) = analytic(trainer, &mut tape)?;
    tape.backward(total)?;
    let grads: Vec<Matrix> = leaves.iter().map(|&l| tape.grad(l).clone()).collect();

    let param_count = if critic_side {
        trainer.disc.params().len()
    } else {
        trainer.gen.params().len()
    };
    debug_assert_eq!(param_count, grads.len(), "one leaf per parameter");

    // Two step sizes per entry, keeping the smaller error: a wrong rule
    // shows an O(1) error at every step, while finite-difference artifacts
    // (truncation, an activation kink inside the probe window) move with
    // the step and get filtered out.
    let steps = [FD_EPS, FD_EPS / 10.0];
    let mut worst = 0.0_f64;
    for k in 0..param_count {
        let len = grads[k].len();
        for i in 0..len {
            let orig = {
                let params = if critic_side {
                    trainer.disc.params()
                } else {
                    trainer.gen.params()
                };
                params[k].data()[i]
            };
            let set = |trainer: &mut Trainer, v: f64| {
                let mut params = if critic_side {
                    trainer.disc.params_mut()
                } else {
                    trainer.gen.params_mut()
                };
                params[k].data_mut()[i] = v;
            };
            let ad = grads[k].data()[i];
            let mut rel = f64::INFINITY;
            for eps in steps {
                set(trainer, orig + eps);
                let plus = value(trainer)?;
                set(trainer, orig - eps);
                let minus = value(trainer)?;
                set(trainer, orig);
                let fd = (plus - minus) / (2.0 * eps);
                rel = rel.min((ad - fd).abs() / fd.abs().max(1.0));
            }
            if rel > worst {
                worst = rel;
            }
        }
    }
    Ok(CheckEntry { name: name.to_string(), max_rel_err: worst })
}

/// Check both training objectives against finite differences over actual
/// network parameters, under two conditioning modes so the paired-view and
/// consistency paths are both covered, and under both adversarial losses.
pub fn check_networks(seed: u64, inject_fault: bool) -> Result<Vec<CheckEntry>> {
    let mut out = Vec::new();
    let scenarios: [(&str, &str, ConditioningKind, AdvLossKind); 2] = [
        ("network.critic[2c]", "network.generator[2c]", ConditioningKind::TwoC, AdvLossKind::Hinge),
        (
            "network.critic[2c-aps]",
            "network.generator[2c-aps]",
            ConditioningKind::TwoCAps,
            AdvLossKind::ScoreDiff,
        ),
    ];

    for (critic_name, gen_name, conditioning, adv) in scenarios {
        let cfg = network_config(seed, conditioning, adv);
        let mut trainer = Trainer::new(cfg)?;
        let cbatch = trainer.draw_critic_batch();
        let gbatch = trainer.draw_gen_batch();

        {
            let b = cbatch.clone();
            out.push(check_network_params(
                critic_name,
                &mut trainer,
                true,
                inject_fault,
                |tr, tape| {
                    let (total, leaves, _) = tr.critic_objective(tape, &b)?;
                    Ok((total, leaves))
                },
                |tr| {
                    let mut tape = Tape::new();
                    let (total, _, _) = tr.critic_objective(&mut tape, &b)?;
                    tape.scalar(total)
                },
            )?);
        }
        {
            let b = gbatch.clone();
            out.push(check_network_params(
                gen_name,
                &mut trainer,
                false,
                inject_fault,
                |tr, tape| {
                    let (total, leaves, _) = tr.generator_objective(tape, &b)?;
                    Ok((total, leaves))
                },
                |tr| {
                    let mut tape = Tape::new();
                    let (total, _, _) = tr.generator_objective(&mut tape, &b)?;
                    tape.scalar(total)
                },
            )?);
        }
    }
    Ok(out)
}

/// Run ops once and losses + networks for each seed, merging per name.
pub fn full_report(seeds: &[u64], inject_fault: bool) -> Result<GradReport> {
    let mut report = GradReport::default();
    report.absorb(check_ops(seeds.first().copied().unwrap_or(0), inject_fault)?);
    for &s in seeds {
        report.absorb(check_losses(s, inject_fault)?);
        report.absorb(check_networks(s, inject_fault)?);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clean_report_passes_everywhere() {
        let report = full_report(&[7, 8], false).unwrap();
        assert!(report.op_count() >= 8, "only {} op checks", report.op_count());
        for e in &report.entries {
            assert!(e.passed(), "{} at {:.3e}", e.name, e.max_rel_err);
        }
        let names: Vec<&str> = report.entries.iter().map(|e| e.name.as_str()).collect();
        for required in [
            "loss.ntxent.features",
            "loss.eq7.table",
            "loss.2c.features",
            "loss.2c-aps.augmented",
            "loss.pnca.table",
            "loss.acgan.logits",
            "loss.projection.features",
            "network.critic[2c]",
            "network.generator[2c-aps]",
        ] {
            assert!(names.contains(&required), "missing {required}");
        }
    }

    #[test]
    fn flipped_rule_is_detected() {
        let report = full_report(&[7], true).unwrap();
        assert!(!report.all_passed(), "corrupted rule slipped through");
        let failing: Vec<&str> =
            report.failures().iter().map(|e| e.name.as_str()).collect();
        assert!(failing.contains(&"op.tanh"), "tanh rule check should fail: {failing:?}");
        // The generator squashes its output through tanh, so the network
        // check must notice as well.
        assert!(
            failing.iter().any(|n| n.starts_with("network.generator")),
            "generator check should fail: {failing:?}"
        );
    }

    #[test]
    fn ten_seed_sweep_stays_under_tolerance() {
        let seeds: Vec<u64> = (0..10).collect();
        let report = full_report(&seeds, false).unwrap();
        assert!(
            report.all_passed(),
            "failures: {:?}",
            report.failures().iter().map(|e| (&e.name, e.max_rel_err)).collect::<Vec<_>>()
        );
    }
}

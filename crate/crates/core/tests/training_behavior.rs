//! End-to-end training properties: long-horizon finiteness, spectral
//! bounds once power iteration is warm, and byte-level determinism of the
//! metrics stream.

use contra_core::training::{
    ConditioningKind, JsonlSink, MemorySink, TrainConfig, Trainer,
};

fn small_cfg(seed: u64) -> TrainConfig {
    let mut cfg = TrainConfig::default();
    cfg.seed = seed;
    cfg.conditioning = ConditioningKind::TwoC;
    cfg.model.gen_hidden = vec![16, 16];
    cfg.model.disc_hidden = vec![16, 16];
    cfg.model.embed_dim = 8;
    cfg.model.noise_dim = 8;
    cfg.batch_size = 32;
    cfg.data.classes = 4;
    cfg.data.per_class = 100;
    cfg.data.seed = seed;
    cfg.eval_samples = 64;
    cfg
}

#[test]
fn long_runs_stay_finite_across_seeds() {
    for seed in [1_u64, 2, 3] {
        let mut cfg = TrainConfig::default();
        cfg.seed = seed;
        cfg.data.seed = seed;
        cfg.iterations = 5000;
        cfg.eval_interval = 1000;
        cfg.eval_samples = 200;
        let mut sink = MemorySink::default();
        let mut trainer = Trainer::new(cfg).unwrap();
        let outcome = trainer.run(&mut sink).unwrap();

        assert_eq!(sink.records.len(), 5);
        let mut prev_iter = 0;
        for rec in &sink.records {
            assert!(rec.iteration > prev_iter, "iterations must increase");
            prev_iter = rec.iteration;
            for (what, v) in [
                ("critic loss", rec.loss_d),
                ("generator loss", rec.loss_g),
                ("conditioning (real)", rec.loss_cond_real),
                ("conditioning (fake)", rec.loss_cond_fake),
                ("pooled distance", rec.frechet_pooled),
                ("class-mean distance", rec.frechet_class_mean),
            ] {
                assert!(v.is_finite(), "seed {seed}: {what} not finite at {}", rec.iteration);
            }
        }
        assert!(outcome.wallclock_secs > 0.0);
        // The best record is the minimum class-mean distance seen.
        let min = sink
            .records
            .iter()
            .map(|r| r.frechet_class_mean)
            .fold(f64::INFINITY, f64::min);
        assert_eq!(outcome.best_record.frechet_class_mean, min);
    }
}

#[test]
fn warm_spectral_readings_stay_near_one() {
    let mut cfg = small_cfg(9);
    cfg.iterations = 150;
    cfg.eval_interval = 25;
    let mut sink = MemorySink::default();
    let mut trainer = Trainer::new(cfg).unwrap();
    trainer.run(&mut sink).unwrap();

    // After 100+ critic steps the persistent power-iteration estimates have
    // converged, so every normalized layer's true sigma sits in (0, 1.05].
    let warm: Vec<_> = sink.records.iter().filter(|r| r.iteration >= 100).collect();
    assert!(!warm.is_empty());
    for rec in warm {
        for s in &rec.sigmas {
            assert!(
                s.sigma > 0.0 && s.sigma <= 1.05,
                "iteration {}: layer {} at {}",
                rec.iteration,
                s.layer,
                s.sigma
            );
        }
    }
}

#[test]
fn metrics_stream_is_byte_identical_across_reruns() {
    let run = |seed: u64| -> Vec<u8> {
        let mut cfg = small_cfg(seed);
        cfg.iterations = 60;
        cfg.eval_interval = 20;
        let mut sink = JsonlSink::new(Vec::<u8>::new());
        let mut trainer = Trainer::new(cfg).unwrap();
        trainer.run(&mut sink).unwrap();
        sink.into_inner()
    };

    let first = run(5);
    let second = run(5);
    assert!(!first.is_empty());
    assert_eq!(first, second, "same config and seed must stream identical bytes");

    let other = run(6);
    assert_ne!(first, other, "different seeds should not collide");
}

mod common;

use std::time::Instant;

use common::{example, micro};
use tec_grad::LrSchedule;
use tec_model::{variant_factory, Mode, ModelConfig, Trainer};

#[test]
fn smoke_training_halves_loss() {
    let model = variant_factory(Mode::Tec, &ModelConfig::toy()).unwrap();
    let mut tr = Trainer::new(model, 1, LrSchedule::constant(3e-3)).unwrap();
    // One example, repeated to satisfy the batch-norm minimum.
    let ex = example(Mode::Tec, 24, 8, 5);
    let batch = vec![ex.clone(), ex];
    let start = Instant::now();
    let losses: Vec<f64> = (0..50).map(|_| tr.train_step(&batch).unwrap().total).collect();
    eprintln!("{:?} in {:?}", losses, start.elapsed());
    assert!(losses[49] < 0.5 * losses[0], "{losses:?}");
}

#[test]
fn zero_learning_rate_keeps_params_bitwise() {
    let model = variant_factory(Mode::Tec, &micro(Mode::Tec)).unwrap();
    let mut tr = Trainer::new(model, 2, LrSchedule::constant(0.0)).unwrap();
    let before = tr.store.clone();
    let batch = vec![example(Mode::Tec, 10, 8, 1), example(Mode::Tec, 9, 8, 2)];
    for _ in 0..3 {
        tr.train_step(&batch).unwrap();
    }
    for (name, t, trainable) in before.iter() {
        if trainable {
            assert_eq!(tr.store.get(name).unwrap(), t, "{name}");
        }
    }
}

#[test]
fn same_seed_same_trajectory() {
    let run = || {
        let model = variant_factory(Mode::Tec, &micro(Mode::Tec)).unwrap();
        let mut tr = Trainer::new(model, 3, LrSchedule::constant(1e-3)).unwrap();
        let batch = vec![example(Mode::Tec, 10, 8, 1), example(Mode::Tec, 12, 8, 2)];
        (0..5).map(|_| tr.train_step(&batch).unwrap()).collect::<Vec<_>>()
    };
    assert_eq!(run(), run());
}

#[test]
fn single_example_batch_is_rejected() {
    let model = variant_factory(Mode::Tec, &micro(Mode::Tec)).unwrap();
    let mut tr = Trainer::new(model, 1, LrSchedule::default()).unwrap();
    let err = tr.train_step(&[example(Mode::Tec, 8, 8, 1)]).unwrap_err();
    assert!(matches!(err, tec_model::Error::BatchTooSmall(1)), "{err}");
    assert_eq!(tr.steps(), 0);
}

fn with_dropout(p: f64) -> ModelConfig {
    let mut cfg = micro(Mode::Tec);
    cfg.decoder.prenet_dropout = p;
    cfg
}

#[test]
fn prenet_dropout_is_seeded() {
    let batch = vec![example(Mode::Tec, 10, 8, 1), example(Mode::Tec, 12, 8, 2)];
    let run = |p, seed| {
        let model = variant_factory(Mode::Tec, &with_dropout(p)).unwrap();
        let mut tr = Trainer::new(model, seed, LrSchedule::constant(1e-3)).unwrap();
        (0..3).map(|_| tr.train_step(&batch).unwrap().total).collect::<Vec<_>>()
    };
    assert_eq!(run(0.5, 3), run(0.5, 3));
    assert_ne!(run(0.5, 3), run(0.0, 3));
    // Different steps draw different masks.
    let model = variant_factory(Mode::Tec, &with_dropout(0.5)).unwrap();
    let tr = Trainer::new(model, 3, LrSchedule::constant(0.0)).unwrap();
    let mut a = tr.clone();
    let l0 = a.train_step(&batch).unwrap().total;
    let l1 = a.train_step(&batch).unwrap().total;
    assert_ne!(l0, l1);
}

#[test]
fn dropout_inference_repeats() {
    let model = variant_factory(Mode::Tec, &with_dropout(0.5)).unwrap();
    let store = model.init_params(4).unwrap();
    let ex = example(Mode::Tec, 12, 8, 9);
    let a = tec_model::infer(&model, &store, &ex.mixture, &ex.side, Some(6)).unwrap();
    let b = tec_model::infer(&model, &store, &ex.mixture, &ex.side, Some(6)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn dropout_probability_is_validated() {
    assert!(with_dropout(1.0).validate().is_err());
    assert!(with_dropout(-0.1).validate().is_err());
    let cfg = with_dropout(0.25);
    let back = ModelConfig::from_toml(&toml::to_string(&cfg).unwrap()).unwrap();
    assert_eq!(back, cfg);
    // Files written before the field existed still load.
    let text = toml::to_string(&micro(Mode::Tec)).unwrap().replace("prenet_dropout = 0.0\n", "");
    assert_eq!(ModelConfig::from_toml(&text).unwrap().decoder.prenet_dropout, 0.0);
}

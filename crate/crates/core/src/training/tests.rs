use super::*;
use crate::dataset::{split_dataset, synthesize_dataset, SuffixRule};
use crate::encoding::build_vocabulary;
use crate::models::{ModelDims, ModelKind};

fn scalar_param(theta: f64, grad: f64) -> Param<f64> {
    let mut p = Param::new(Tensor2::filled(1, 1, theta));
    p.grad.set(0, 0, grad);
    p
}

fn first_step(g: f64) -> f64 {
    let cfg = TrainConfig::default();
    let mut p = scalar_param(0.0, g);
    let mut state = AdamState::new([&p]);
    adam_step(&mut [&mut p], &["theta"], &mut state, &cfg).unwrap();
    assert_eq!(p.grad.get(0, 0), 0.0, "gradient cleared");
    assert_eq!(state.t, 1);
    p.value.get(0, 0)
}

#[test]
fn adam_first_step_has_learning_rate_magnitude() {
    for g in [0.01, 1.0, 100.0] {
        let delta = first_step(g);
        assert!(delta < 0.0);
        assert!((delta.abs() - 0.001).abs() < 1e-6, "g={g}: {delta}");
    }
    // Closed form for g = 1: -alpha * 1 / (1 + eps).
    assert!((first_step(1.0) + 0.001 / (1.0 + 1e-8)).abs() < 1e-15);
    assert_eq!(first_step(0.0), 0.0);
}

#[test]
fn adam_is_sign_symmetric() {
    for g in [0.3, 7.0, 1e-5] {
        assert_eq!(first_step(g), -first_step(-g));
    }
}

#[test]
fn adam_rejects_non_finite_gradients_without_updating() {
    let cfg = TrainConfig::default();
    let mut a = scalar_param(1.0, 0.5);
    let mut b = scalar_param(2.0, f64::NAN);
    let mut state = AdamState::new([&a, &b]);
    let err = adam_step(&mut [&mut a, &mut b], &["a", "b"], &mut state, &cfg).unwrap_err();
    assert!(matches!(err, Error::NonFiniteGradient(ref n) if n == "b"), "{err:?}");
    assert_eq!(a.value.get(0, 0), 1.0);
    assert_eq!(state.t, 0);
}

#[test]
fn batches() {
    let data: Vec<u32> = (0..70).collect();
    let b = make_batches(&data, 32, 9);
    assert_eq!(b.iter().map(Vec::len).collect::<Vec<_>>(), vec![32, 32, 6]);
    assert_eq!(b, make_batches(&data, 32, 9));
    assert_ne!(b, make_batches(&data, 32, 10));
    let mut all: Vec<u32> = b.into_iter().flatten().collect();
    all.sort_unstable();
    assert_eq!(all, data);
    assert!(make_batches::<u32>(&[], 4, 0).is_empty());
}

#[test]
fn early_stopping_rule() {
    let mut s = EarlyStopping::new(3);
    let verdicts: Vec<Verdict> = [5.0, 4.0, 4.0, 4.5, 3.9, 4.0, 3.9, 3.95].iter().map(|&v| s.observe(v)).collect();
    use Verdict::*;
    assert_eq!(verdicts, vec![Improved, Improved, Wait, Wait, Improved, Wait, Wait, Stop]);

    let mut s = EarlyStopping::new(1);
    for i in 0..1000 {
        assert_eq!(s.observe(1000.0 - i as f64), Improved);
    }
}

#[test]
fn config_validation() {
    assert!(TrainConfig::default().validate().is_ok());
    assert!(TrainConfig { learning_rate: 0.0, ..Default::default() }.validate().is_err());
    assert!(TrainConfig { beta2: 1.0, ..Default::default() }.validate().is_err());
    assert!(TrainConfig { batch_size: 0, ..Default::default() }.validate().is_err());
    assert!(TrainConfig { patience: 0, ..Default::default() }.validate().is_err());
}

fn tiny_setup(kind: ModelKind, n: usize) -> (GenderModel<f64>, DatasetSplit) {
    let rules = [SuffixRule::new("het", 1.0), SuffixRule::new("eri", 0.0)];
    let words = synthesize_dataset(4, n, &rules).unwrap();
    let vocab = build_vocabulary(&words.iter().map(|w| w.surface.as_str()).collect::<Vec<_>>()).unwrap();
    let dims = ModelDims { max_len: 15, d_emb: 6, hidden: 6 };
    (GenderModel::new(kind, vocab, dims, 1), split_dataset(&words, 2).unwrap())
}

#[test]
fn small_steps_decrease_the_loss() {
    let (mut model, split) = tiny_setup(ModelKind::Lstm, 20);
    let ex = &encode_examples(&model, &split.train[..1]).unwrap()[0];
    let cfg = TrainConfig { learning_rate: 1e-4, ..Default::default() };
    let mut state = AdamState::for_model(&model);
    let loss = |m: &GenderModel<f64>| bce_loss(m.forward(&ex.word).unwrap().probability(), ex.label);
    let mut prev = loss(&model);
    for _ in 0..10 {
        let tr = model.forward(&ex.word).unwrap();
        model.backward(&tr, ex.label).unwrap();
        adam_step_model(&mut model, &mut state, &cfg).unwrap();
        let now = loss(&model);
        assert!(now < prev + 1e-12, "{now} >= {prev}");
        prev = now;
    }
}

#[test]
fn training_is_deterministic_and_restores_best_weights() {
    let (model, split) = tiny_setup(ModelKind::Gru, 60);
    let cfg = TrainConfig { patience: 3, max_epochs: 12, batch_size: 8, learning_rate: 0.01, ..Default::default() };
    let (m1, h1) = train(model.clone(), &split, &cfg).unwrap();
    let (m2, h2) = train(model, &split, &cfg).unwrap();
    assert_eq!(h1.to_tsv(), h2.to_tsv());
    assert_eq!(crate::models::io::to_bytes(&m1), crate::models::io::to_bytes(&m2));

    let best = h1.best().unwrap();
    assert_eq!(best.epoch, h1.best_epoch);
    let val = encode_examples(&m1, &split.validation).unwrap();
    let (loss, _) = loss_and_accuracy(&m1, &val).unwrap();
    assert_eq!(loss, best.val_loss);
    for r in &h1.epochs[h1.best_epoch..] {
        assert!(r.val_loss >= best.val_loss);
    }
    let last = h1.epochs.last().unwrap().epoch;
    assert!(last == cfg.max_epochs || last == h1.best_epoch + cfg.patience);
}

#[test]
fn history_tsv_round_trip() {
    let (model, split) = tiny_setup(ModelKind::Dense, 40);
    let cfg = TrainConfig { patience: 2, max_epochs: 4, ..Default::default() };
    let (_, h) = train(model, &split, &cfg).unwrap();
    let text = h.to_tsv();
    assert_eq!(text.lines().count(), h.epochs.len());
    assert_eq!(text.lines().next().unwrap().split('\t').count(), 4);
    assert_eq!(TrainHistory::from_tsv(&text).unwrap(), h);
}

#[test]
fn observer_sees_every_epoch_and_each_new_best() {
    let (model, split) = tiny_setup(ModelKind::Lstm, 40);
    let cfg = TrainConfig { patience: 2, max_epochs: 6, ..Default::default() };
    let mut seen = Vec::new();
    let (_, h) = train_with(model, &split, &cfg, |r, best| {
        seen.push((r.epoch, best.is_some()));
        Ok(())
    })
    .unwrap();
    assert_eq!(seen.len(), h.epochs.len());
    assert_eq!(seen.iter().rev().find(|s| s.1).unwrap().0, h.best_epoch);
}

#[test]
fn broken_weights_abort_training() {
    let (mut model, split) = tiny_setup(ModelKind::Lstm, 30);
    model.params_mut()[1].value.set(0, 0, f64::NAN);
    let err = train(model, &split, &TrainConfig { max_epochs: 2, ..Default::default() }).unwrap_err();
    assert!(matches!(err, Error::NonFiniteGradient(_) | Error::Diverged { .. }), "{err:?}");
}

#[test]
fn saturated_example_passes_gradient_check() {
    let (mut model, _) = tiny_setup(ModelKind::Dense, 10);
    model.params_mut()[4].value.set(0, 0, 200.0);
    let w = model.encode("abhet").unwrap_or_else(|_| model.encode("het").unwrap());
    let r = gradient_check(&model, &w, 1.0, 1e-5, GradCheckScope::All).unwrap();
    assert_eq!(r.max_relative_error, 0.0);
}

#[test]
fn sampled_gradient_check() {
    let (model, _) = tiny_setup(ModelKind::Gru, 10);
    let w = model.encode("het").unwrap();
    let r = gradient_check(&model, &w, 0.0, 1e-5, GradCheckScope::Sample { count: 50, seed: 1 }).unwrap();
    assert_eq!(r.checked, 50);
    assert!(r.max_relative_error < 1e-6);
    assert!(gradient_check(&model, &w, 0.0, 0.0, GradCheckScope::All).is_err());
}

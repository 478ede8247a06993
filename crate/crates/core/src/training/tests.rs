use super::*;
use crate::grid::{generate_synthetic, GridSpec, SyntheticConfig};

fn small_data(n_days: usize, seed: u64) -> crate::grid::SyntheticData {
    let cfg = SyntheticConfig {
        seed,
        n_days,
        spec: GridSpec::quarter_degree(16, 16),
        bump_scale: 3.0,
        n_bumps: 3,
        ..SyntheticConfig::default()
    };
    generate_synthetic(&cfg).unwrap()
}

fn quick_cfg() -> TrainConfig {
    TrainConfig { batch_size: 4, max_epochs: 3, patience: 5, val_fraction: 0.2, seed: 3, ..TrainConfig::default() }
}

#[test]
fn config_validation() {
    assert!(TrainConfig::default().validate().is_ok());
    for bad in [
        TrainConfig { patience: 0, ..TrainConfig::default() },
        TrainConfig { val_fraction: 0.5, ..TrainConfig::default() },
        TrainConfig { val_fraction: 0.0, ..TrainConfig::default() },
        TrainConfig { batch_size: 0, ..TrainConfig::default() },
        TrainConfig { learning_rate: -1.0, ..TrainConfig::default() },
    ] {
        assert!(bad.validate().is_err(), "{bad:?}");
    }
}

#[test]
fn too_few_days_rejected() {
    let d = small_data(7, 1);
    let err = train(Variant::Gt, None, &d.biased, &d.truth, &quick_cfg()).unwrap_err();
    assert!(matches!(err, Error::InsufficientData(_)), "{err}");
}

#[test]
fn training_is_bit_reproducible_and_keeps_best_epoch() {
    let d = small_data(20, 2);
    let a = train(Variant::Gt, None, &d.biased, &d.truth, &quick_cfg()).unwrap();
    let b = train(Variant::Gt, None, &d.biased, &d.truth, &quick_cfg()).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.checkpoint().to_mck1(), b.checkpoint().to_mck1());
    assert_eq!(a.history.len(), 3);
    let min = a.history.iter().map(|h| h.val_loss).fold(f64::INFINITY, f64::min);
    assert_eq!(a.history[a.best_epoch - 1].val_loss, min);
    assert!(!a.initial_params.same_values(&a.params()));
    let c = train(Variant::Gt, None, &d.biased, &d.truth, &TrainConfig { seed: 4, ..quick_cfg() }).unwrap();
    assert_ne!(a.params(), c.params());
}

#[test]
fn history_csv_has_one_row_per_epoch() {
    let d = small_data(20, 2);
    let t = train(Variant::Gt, None, &d.biased, &d.truth, &quick_cfg()).unwrap();
    let csv = t.history_csv();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "epoch,train_loss,val_loss");
    assert_eq!(lines.len(), t.history.len() + 1);
}

#[test]
fn predictions_are_masked_clipped_and_deterministic() {
    let d = small_data(20, 5);
    let t = train(Variant::Gt, None, &d.biased, &d.truth, &quick_cfg()).unwrap();
    let p = t.predictor();
    let a = predict_series(&p, &d.biased).unwrap();
    assert_eq!(a, predict_series(&p, &d.biased).unwrap());
    for day in 0..a.n_days() {
        for (k, &v) in a.day(day).iter().enumerate() {
            assert!(v >= 0.0);
            if !a.mask()[k] {
                assert_eq!(v, 0.0);
            }
        }
    }
}

#[test]
fn checkpoint_round_trip_keeps_scale() {
    let d = small_data(20, 6);
    let t = train(Variant::Teacher, None, &d.biased, &d.truth, &TrainConfig { max_epochs: 1, ..quick_cfg() }).unwrap();
    let bytes = t.checkpoint().to_mck1();
    let p = Predictor::from_checkpoint(&ParamStore::from_mck1(&bytes).unwrap()).unwrap();
    assert_eq!(p, t.predictor());
    assert_eq!(p.model.architecture(), Architecture::Maunet);
}

#[test]
fn overfits_a_tiny_set() {
    let d = small_data(10, 8);
    let cfg = TrainConfig {
        batch_size: 3,
        max_epochs: 300,
        patience: 300,
        val_fraction: 0.1,
        seed: 11,
        ..TrainConfig::default()
    };
    let t = train(Variant::Gt, None, &d.biased, &d.truth, &cfg).unwrap();
    let first = t.history[0].train_loss;
    let last = t.history.last().unwrap().train_loss;
    assert_eq!(t.history.len(), 300);
    assert!(last < 0.05 * first, "first {first}, last {last}");
}

#[test]
fn pipeline_structure() {
    let d = small_data(24, 9);
    let cfg = TrainConfig { max_epochs: 2, ..quick_cfg() };
    let r = run_pipeline(&d.biased, &d.truth, &cfg).unwrap();
    assert_eq!(r.variants().map(|v| v.variant), Variant::ALL);
    assert_eq!(r.teacher.model.architecture(), Architecture::Maunet);
    assert!(r.kr.initial_params.same_values(&r.mp.params()));
    assert!(r.gt.initial_params.same_values(&r.mp.initial_params));
    let again = predict_series(&r.teacher.predictor(), &d.biased).unwrap().with_mask(d.truth.mask()).unwrap();
    assert_eq!(again, r.teacher_pred);
    assert_eq!(r.mp.target_fingerprint, series_fingerprint(&again));
    assert_eq!(r.kr.target_fingerprint, series_fingerprint(&d.truth));
    assert_eq!(r.teacher_pred.mask(), d.truth.mask());
}

#[test]
fn seed_mixing_separates_streams() {
    assert_ne!(mix_seed(&[1, 2]), mix_seed(&[2, 1]));
    assert_ne!(mix_seed(&[0]), mix_seed(&[0, 0]));
    assert_eq!(mix_seed(&[5, 6]), mix_seed(&[5, 6]));
}

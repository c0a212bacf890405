use cleegn::data::{Recording, SynthSpec};
use cleegn::model::{CleegnConfig, CleegnModel};
use cleegn::harness::{
    ablation_driver, evaluate_fold, make_folds, train_fold, train_folds, validation_windows, windows_mse,
    AblationAxis, AblationSpec, Dataset, FoldSpec, Subject, TrainConfig,
};

fn small_dataset(n: usize, minutes: f64, seed: u64) -> Dataset {
    Dataset::synthetic(n, &SynthSpec::new(4, 64.0, minutes * 60.0, seed)).unwrap()
}

fn quick(epochs: usize) -> TrainConfig {
    TrainConfig {
        batch_size: 16,
        epochs,
        lr0: 3e-3,
        seed: 11,
        ..TrainConfig::default()
    }
}

fn first_fold(ds: &Dataset) -> FoldSpec {
    make_folds(&ds.subject_ids(), 2, 5).unwrap().remove(0)
}

#[test]
fn same_seed_reproduces_every_loss() {
    let ds = small_dataset(4, 1.0, 1);
    let fold = first_fold(&ds);
    let (m1, r1) = train_fold(&ds, &fold, &quick(3)).unwrap();
    let (m2, r2) = train_fold(&ds, &fold, &quick(3)).unwrap();
    assert_eq!(r1.epochs, r2.epochs);
    assert_eq!(m1, m2);
    let (_, r3) = train_fold(&ds, &fold, &TrainConfig { seed: 12, ..quick(3) }).unwrap();
    assert_ne!(r1.epochs, r3.epochs);
}

#[test]
fn zero_learning_rate_freezes_weights() {
    let ds = small_dataset(4, 1.0, 2);
    let fold = first_fold(&ds);
    let cfg = TrainConfig { lr0: 0.0, ..quick(2) };
    let (trained, report) = train_fold(&ds, &fold, &cfg).unwrap();
    let mut fresh = cleegn::model::CleegnModel::<f32>::build(cfg.model_config(4, 64.0), cfg.seed).unwrap();
    fresh.fold_amplitude_scale(report.amplitude_scale as f32);
    for (a, b) in trained.params().iter().zip(fresh.params().iter()) {
        assert_eq!(a.name, b.name);
        for (x, y) in a.data.iter().zip(b.data.iter()) {
            assert!((x - y).abs() <= 1e-6 * (1.0 + y.abs()), "{} moved: {x} vs {y}", a.name);
        }
    }
    assert!(report.epochs.iter().all(|e| e.lr == 0.0));
}

#[test]
fn learning_rate_decays_per_epoch() {
    let ds = small_dataset(4, 1.0, 3);
    let (_, r) = train_fold(&ds, &first_fold(&ds), &quick(3)).unwrap();
    let lrs: Vec<f64> = r.epochs.iter().map(|e| e.lr).collect();
    for (i, lr) in lrs.iter().enumerate() {
        assert!((lr - 3e-3 * 0.8f64.powi(i as i32)).abs() < 1e-15);
    }
}

#[test]
fn kept_model_is_the_validation_minimum() {
    let ds = small_dataset(4, 1.0, 4);
    let fold = first_fold(&ds);
    let cfg = quick(4);
    let (model, report) = train_fold(&ds, &fold, &cfg).unwrap();
    let min = report.epochs.iter().map(|e| e.val_loss).fold(f64::INFINITY, f64::min);
    assert_eq!(report.best_val_loss, min);
    assert_eq!(report.epochs[report.best_epoch.unwrap()].val_loss, min);

    let val = validation_windows(&ds, &fold, &cfg).unwrap();
    assert_eq!(val.len(), report.n_val_windows);
    let refs: Vec<_> = val.iter().collect();
    let recomputed = windows_mse(&model, &refs, cfg.batch_size).unwrap();
    assert!((recomputed - min).abs() <= 1e-9 * min.max(1.0), "{recomputed} vs {min}");
}

#[test]
fn test_subjects_never_train() {
    let ds = small_dataset(4, 1.0, 5);
    for fold in make_folds(&ds.subject_ids(), 2, 9).unwrap() {
        let (_, report) = train_fold(&ds, &fold, &quick(1)).unwrap();
        let scored: Vec<_> = report.test.subjects.iter().map(|s| s.subject_id.clone()).collect();
        assert_eq!(scored, fold.test_subjects);
        assert!(report.train_subjects.iter().all(|s| !scored.contains(s)));
    }
    let overlap = FoldSpec {
        fold_id: 0,
        train_subjects: vec!["s01".into(), "s02".into()],
        test_subjects: vec!["s02".into()],
    };
    assert!(train_fold(&ds, &overlap, &quick(1)).is_err());
}

#[test]
fn minutes_cap_limits_windows() {
    let ds = small_dataset(4, 2.0, 6);
    let fold = first_fold(&ds);
    let (_, full) = train_fold(&ds, &fold, &quick(1)).unwrap();
    let (_, half) = train_fold(&ds, &fold, &TrainConfig { minutes_per_subject: Some(1.0), ..quick(1) }).unwrap();
    let total = |r: &cleegn::harness::TrainReport| r.n_train_windows + r.n_val_windows;
    // 2 min at a 2 s stride gives 59 windows per subject, 1 min gives 29
    assert_eq!(total(&full), 2 * 59);
    assert_eq!(total(&half), 2 * 29);
    let too_long = TrainConfig { minutes_per_subject: Some(3.0), ..quick(1) };
    assert!(train_fold(&ds, &fold, &too_long).is_err());
}

fn identity_dataset(fs: f32) -> Dataset {
    let spec = SynthSpec::new(4, fs, 120.0, 21).artifact_free();
    let subjects = (0..3)
        .map(|i| {
            let mut s = spec.clone().with_subject(format!("I{i}"));
            s.seed += i;
            let (_, clean) = cleegn::data::synth_subject(&s).unwrap();
            Subject {
                id: format!("I{i}"),
                noisy: clean.clone(),
                reference: clean,
                events: None,
            }
        })
        .collect();
    Dataset::new(subjects).unwrap()
}

fn identity_fold() -> FoldSpec {
    FoldSpec {
        fold_id: 0,
        train_subjects: vec!["I0".into(), "I1".into()],
        test_subjects: vec!["I2".into()],
    }
}

fn mean_square(rec: &Recording) -> f64 {
    rec.channels().flatten().map(|v| v * v).sum::<f64>() / (rec.n_channels() * rec.n_samples()) as f64
}

#[test]
fn identity_task_converges() {
    let ds = identity_dataset(128.0);
    let cfg = TrainConfig {
        batch_size: 4,
        lr0: 1e-2,
        gamma: 1.0,
        seed: 0,
        ..TrainConfig::default()
    };
    let (_, report) = train_fold(&ds, &identity_fold(), &cfg).unwrap();
    let power = mean_square(&ds.subject("I0").unwrap().noisy);
    assert!(report.best_val_loss < 0.01 * power, "val {} vs power {power}", report.best_val_loss);
    // the held-out subject was never seen, yet the copy generalizes
    let held_out = &report.test.subjects[0];
    assert!(held_out.mse < 0.05 * mean_square(&ds.subject("I2").unwrap().noisy));
}

#[test]
fn small_learning_rate_lowers_training_loss() {
    let ds = identity_dataset(64.0);
    let improved = (0..20)
        .filter(|&seed| {
            let cfg = TrainConfig { batch_size: 4, lr0: 1e-4, epochs: 2, seed, ..TrainConfig::default() };
            let (_, r) = train_fold(&ds, &identity_fold(), &cfg).unwrap();
            r.epochs[1].train_loss <= r.epochs[0].train_loss
        })
        .count();
    assert!(improved >= 18, "only {improved}/20 seeds improved");
}

/// Every layer routes channel `h` straight through: spatial convolutions use
/// one-hot filters, temporal ones a centred unit tap, and batch norm running
/// variances absorb epsilon.
fn copying_model(c: usize, fs: f32) -> CleegnModel<f32> {
    let cfg = CleegnConfig::new(c, fs);
    let (nf, k) = (cfg.n_filters, cfg.kernel_width());
    let eps = cfg.bn_eps;
    let mut m = CleegnModel::<f32>::build(cfg, 0).unwrap();
    {
        let mut p = m.params_mut();
        for a in p.iter_mut() {
            a.fill(0.0);
        }
        // enc_spatial (C, C, 1, 1): filter o reads row o
        for o in 0..c {
            p[0][o * c + o] = 1.0;
        }
        let mid = (k - 1) / 2;
        let centre = (c - 1) / 2;
        p[4][mid] = 1.0; // enc_temporal (N_F, 1, k, 1), filter 0
        p[8][mid * nf] = 1.0; // dec_temporal (N_F, 1, k, N_F), filter 0 from feature 0
        p[12][centre * nf] = 1.0; // dec_spatial (C, C, 1, N_F), filter 0 from feature 0
        p[16][centre * c] = 1.0; // dec_out (1, C, 1, C), feature 0
        for g in [2, 6, 10, 14] {
            p[g].fill(1.0);
        }
    }
    for (i, s) in m.running_stats_mut().into_iter().enumerate() {
        s.fill(if i % 2 == 0 { 0.0 } else { 1.0 - eps });
    }
    m
}

#[test]
fn copying_model_scores_the_noisy_baseline() {
    let ds = small_dataset(4, 1.0, 10);
    let model = copying_model(4, 64.0);
    let fold = first_fold(&ds);
    let eval = evaluate_fold(&model, &ds, &fold).unwrap();
    for s in &eval.subjects {
        assert!((s.mse - s.noisy_mse).abs() <= 1e-6 * s.noisy_mse, "{} vs {}", s.mse, s.noisy_mse);
    }
}

#[test]
fn fold_evaluation_scores_every_test_subject() {
    let ds = small_dataset(4, 1.0, 7);
    let fold = first_fold(&ds);
    let (model, report) = train_fold(&ds, &fold, &quick(2)).unwrap();
    let again = evaluate_fold(&model, &ds, &fold).unwrap();
    assert_eq!(again, report.test);
    assert!(again.subjects.iter().all(|s| s.mse.is_finite() && s.noisy_mse > 0.0));
    let mean = again.subjects.iter().map(|s| s.mse).sum::<f64>() / again.subjects.len() as f64;
    assert!((again.mean_mse - mean).abs() < 1e-9 * mean);
}

#[test]
fn parallel_folds_match_serial() {
    let ds = small_dataset(4, 1.0, 8);
    let folds = make_folds(&ds.subject_ids(), 2, 1).unwrap();
    let serial = train_folds(&ds, &folds, &quick(1), 1, |_, _| {}).unwrap();
    let parallel = train_folds(&ds, &folds, &quick(1), 2, |_, _| {}).unwrap();
    for ((ms, rs), (mp, rp)) in serial.iter().zip(&parallel) {
        assert_eq!(ms, mp);
        assert_eq!(rs.epochs, rp.epochs);
        assert_eq!(rs.fold_id, rp.fold_id);
    }
}

#[test]
fn ablation_rows_follow_values() {
    let ds = small_dataset(4, 1.0, 9);
    let spec = AblationSpec {
        axis: AblationAxis::NSubjects,
        values: vec![1.0, 2.0],
        folds: 2,
        draws: 3,
    };
    let rows = ablation_driver(&ds, &spec, &quick(1)).unwrap();
    assert_eq!(rows.iter().map(|r| r.value).collect::<Vec<_>>(), vec![1.0, 2.0]);
    assert!(rows.iter().all(|r| r.n_scores == 3 && r.mean_mse.is_finite()));

    let minutes = AblationSpec {
        axis: AblationAxis::MinutesPerSubject,
        values: vec![0.5, f64::INFINITY],
        folds: 2,
        draws: 3,
    };
    let rows = ablation_driver(&ds, &minutes, &quick(1)).unwrap();
    assert!(rows.iter().all(|r| r.n_scores == 4));

    let bad = AblationSpec { values: vec![4.0], ..spec };
    assert!(ablation_driver(&ds, &bad, &quick(1)).is_err());
}

#[test]
fn zero_epochs_keeps_the_initial_model() {
    let ds = small_dataset(4, 1.0, 11);
    let fold = first_fold(&ds);
    let cfg = TrainConfig { epochs: 0, ..quick(0) };
    let (model, report) = train_fold(&ds, &fold, &cfg).unwrap();
    assert!(report.epochs.is_empty());
    assert_eq!(report.best_epoch, None);
    let mut fresh = CleegnModel::<f32>::build(cfg.model_config(4, 64.0), cfg.seed).unwrap();
    fresh.fold_amplitude_scale(report.amplitude_scale as f32);
    assert_eq!(model, fresh);
    assert!(report.best_val_loss.is_finite());
}

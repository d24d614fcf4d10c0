use rand::rngs::StdRng;
use rand::SeedableRng;

use convasr::optim::ParamSet;
use convasr::pipeline::load_utterances;
use convasr::pipeline::manifest::Manifest;
use convasr::pipeline::synth::{synthesize_corpus, synthesize_dataset, SyntheticTaskSpec};
use convasr::pipeline::train::{mean_loss, prepare_targets, train_acoustic, AsrModel, FrontendKind, ModelConfig, TrainConfig};

fn model(kind: FrontendKind, seed: u64) -> AsrModel {
    let spec = SyntheticTaskSpec::default();
    AsrModel::new(spec.alphabet(), ModelConfig::small(kind), &mut StdRng::seed_from_u64(seed)).unwrap()
}

#[test]
fn overfits_a_handful_of_utterances() {
    let spec = SyntheticTaskSpec::default();
    let data = synthesize_corpus(&spec, 10, 11, "tiny").unwrap();
    let mut m = model(FrontendKind::Learnable, 0);
    let cfg = TrainConfig {
        epochs: 100,
        batch_size: 2,
        patience: 8,
        ..TrainConfig::default()
    };
    let report = train_acoustic(&mut m, &data, &[], &cfg).unwrap();
    let (targets, _) = prepare_targets(&m, &data).unwrap();
    let final_loss = mean_loss(&m, &targets).unwrap();
    assert!(final_loss <= 0.1, "loss {final_loss}, history {:?}", report.epochs);
}

#[test]
fn zero_learning_rate_keeps_the_loss_constant() {
    let spec = SyntheticTaskSpec::default();
    let data = synthesize_corpus(&spec, 6, 3, "lr0").unwrap();
    let mut m = model(FrontendKind::Learnable, 1);
    let before = m.clone();
    let cfg = TrainConfig {
        epochs: 2,
        lr: 0.0,
        batch_size: 3,
        ..TrainConfig::default()
    };
    let report = train_acoustic(&mut m, &data, &[], &cfg).unwrap();
    let (a, b) = (report.epochs[0].train_loss, report.epochs[1].train_loss);
    assert!((a - b).abs() <= 1e-9 * a.abs(), "{a} vs {b}");
    let flat = |p: &AsrModel| -> Vec<f64> { p.tensors().iter().flat_map(|(_, t)| t.to_vec()).collect() };
    assert_eq!(flat(&before), flat(&m));
}

#[test]
fn one_step_moves_the_learnable_frontend_only() {
    let spec = SyntheticTaskSpec::default();
    let data = synthesize_corpus(&spec, 2, 4, "step").unwrap();
    let cfg = TrainConfig {
        epochs: 1,
        batch_size: 2,
        ..TrainConfig::default()
    };

    let mut learn = model(FrontendKind::Learnable, 2);
    let fe_before = learn.frontend.as_learnable().unwrap().clone();
    train_acoustic(&mut learn, &data, &[], &cfg).unwrap();
    let fe_after = learn.frontend.as_learnable().unwrap();
    assert_ne!(fe_before.filters_re, fe_after.filters_re);
    assert_ne!(fe_before.filters_im, fe_after.filters_im);
    assert_ne!(fe_before.preemphasis, fe_after.preemphasis);
    assert_eq!(fe_before.lowpass_window(), fe_after.lowpass_window());

    let mut mel = model(FrontendKind::Mel, 2);
    let names: Vec<String> = mel.tensors().into_iter().map(|(n, _)| n).collect();
    assert!(names.iter().all(|n| !n.starts_with("fe.")), "{names:?}");
    let feats_before = mel.features(&data[0].wave).unwrap();
    train_acoustic(&mut mel, &data, &[], &cfg).unwrap();
    assert_eq!(feats_before, mel.features(&data[0].wave).unwrap());
}

#[test]
fn both_frontends_share_frame_geometry() {
    let spec = SyntheticTaskSpec::default();
    let learn = model(FrontendKind::Learnable, 3);
    let mel = model(FrontendKind::Mel, 3);
    for u in synthesize_corpus(&spec, 5, 5, "geom").unwrap() {
        let a = learn.features(&u.wave).unwrap();
        let b = mel.features(&u.wave).unwrap();
        assert_eq!(a.frames(), b.frames());
        assert_eq!(a.frames(), learn.frames_for(u.wave.samples.len()));
        assert_eq!(a.channels(), b.channels());
        assert_eq!(a.frame_stride_ms, b.frame_stride_ms);
    }
}

#[test]
fn dataset_on_disk_reloads_identically() {
    let dir = tempfile::tempdir().unwrap();
    let spec = SyntheticTaskSpec::noisy(10.0);
    let written = synthesize_dataset(&spec, 4, 8, dir.path(), "dev").unwrap();
    let reread = Manifest::load(&dir.path().join("dev.jsonl")).unwrap();
    assert_eq!(reread.split.as_deref(), Some("dev"));
    assert_eq!(reread.len(), written.len());
    let utts = load_utterances(&reread).unwrap();
    let fresh = synthesize_corpus(&spec, 4, 8, "dev").unwrap();
    for (a, b) in utts.iter().zip(&fresh) {
        assert_eq!(a.text, b.text);
        assert_eq!(a.wave, b.wave);
    }
}

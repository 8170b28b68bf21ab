//! Checkpoint round trips, corruption handling and resumable training.

use std::fs;

use hscmt::data::{split, synth_generate, DatasetSplit};
use hscmt::train::{fit, import_weights, load_checkpoint, save_checkpoint, TrainConfig, Trainer, BLOB_FILE, MANIFEST_FILE};
use hscmt::*;

fn tiny_split() -> DatasetSplit {
    let data = synth_generate(5, 32, 3).unwrap();
    split(&data, (0.6, 0.2, 0.2), 3).unwrap()
}

fn cfg(epochs: usize) -> TrainConfig {
    TrainConfig { epochs, batch_size: 4, seed: 5, ..Default::default() }
}

fn trained(epochs: usize) -> Trainer {
    let mut t = Trainer::new(Model::new(ModelConfig::micro(), 9).unwrap(), cfg(epochs)).unwrap();
    fit(&mut t, &tiny_split(), None, &mut |_| {}).unwrap();
    t
}

fn same_params(a: &Model32, b: &Model32) -> bool {
    a.store.len() == b.store.len()
        && a.store.iter().zip(b.store.iter()).all(|((_, p), (_, q))| p.name == q.name && p.tensor == q.tensor)
}

#[test]
fn roundtrip_restores_outputs_bit_exactly() {
    let t = trained(1);
    let dir = tempfile::tempdir().unwrap();
    save_checkpoint(dir.path(), &t.model, &t.state).unwrap();
    let (model, state) = load_checkpoint(dir.path()).unwrap();
    assert!(same_params(&model, &t.model));
    assert_eq!(state, t.state);
    assert_eq!(model.config, t.model.config);
    for s in &tiny_split().test {
        assert_eq!(model.predict(&s.image).unwrap(), t.model.predict(&s.image).unwrap());
    }
}

#[test]
fn corrupt_checkpoints_are_rejected() {
    let t = trained(0);
    let dir = tempfile::tempdir().unwrap();
    save_checkpoint(dir.path(), &t.model, &t.state).unwrap();
    let blob = fs::read(dir.path().join(BLOB_FILE)).unwrap();
    let manifest = fs::read_to_string(dir.path().join(MANIFEST_FILE)).unwrap();

    fs::write(dir.path().join(BLOB_FILE), &blob[..blob.len() - 4]).unwrap();
    assert!(matches!(load_checkpoint(dir.path()), Err(Error::Checkpoint(_))));
    fs::write(dir.path().join(BLOB_FILE), &blob).unwrap();

    let bumped = manifest.replacen("\"format_version\": 1", "\"format_version\": 99", 1);
    assert_ne!(bumped, manifest);
    fs::write(dir.path().join(MANIFEST_FILE), bumped).unwrap();
    assert!(matches!(load_checkpoint(dir.path()), Err(Error::Checkpoint(_))));

    let renamed = manifest.replacen("\"head.classifier.weight\"", "\"head.classifier.renamed\"", 1);
    assert_ne!(renamed, manifest);
    fs::write(dir.path().join(MANIFEST_FILE), renamed).unwrap();
    match load_checkpoint(dir.path()) {
        Err(Error::Checkpoint(msg)) => assert!(msg.contains("head.classifier"), "{msg}"),
        other => panic!("expected a checkpoint error, got {:?}", other.map(|_| ())),
    }
    fs::write(dir.path().join(MANIFEST_FILE), &manifest).unwrap();
    assert!(load_checkpoint(dir.path()).is_ok());
}

#[test]
fn resumed_training_matches_uninterrupted_run() {
    let full = trained(3);
    let dir = tempfile::tempdir().unwrap();
    let part = trained(2);
    part.save(dir.path()).unwrap();
    let mut resumed = Trainer::resume(dir.path()).unwrap();
    resumed.state.cfg.epochs = 3;
    let split = tiny_split();
    let history = fit(&mut resumed, &split, None, &mut |_| {}).unwrap();
    assert_eq!(history.records.len(), 1);
    assert!(same_params(&resumed.model, &full.model));
    assert_eq!(resumed.state, full.state);
}

#[test]
fn fit_output_directory_resumes_history() {
    let dir = tempfile::tempdir().unwrap();
    let split = tiny_split();
    let mut t = Trainer::new(Model::new(ModelConfig::micro(), 9).unwrap(), cfg(2)).unwrap();
    let first = fit(&mut t, &split, Some(dir.path()), &mut |_| {}).unwrap();
    assert!(dir.path().join("best").join(MANIFEST_FILE).exists());
    let mut again = Trainer::resume(&dir.path().join("last")).unwrap();
    again.state.cfg.epochs = 3;
    let resumed = fit(&mut again, &split, Some(dir.path()), &mut |_| {}).unwrap();
    assert_eq!(resumed.records[..2], first.records[..]);
    assert_eq!(resumed.records.len(), 3);
    let text = fs::read_to_string(dir.path().join("history.csv")).unwrap();
    assert_eq!(text.lines().count(), 4);
    assert_eq!(text.lines().next(), Some("epoch,lr,train_loss,val_loss,val_acc"));
}

#[test]
fn importing_weights_reports_every_entry() {
    let t = trained(1);
    let dir = tempfile::tempdir().unwrap();
    save_checkpoint(dir.path(), &t.model, &t.state).unwrap();
    let mut fresh = Model::<f32>::new(ModelConfig::micro(), 1).unwrap();
    let report = import_weights(&mut fresh.store, dir.path()).unwrap();
    assert_eq!(report.loaded.len(), fresh.store.len());
    assert!(report.unmatched.is_empty() && report.missing.is_empty());
    assert!(same_params(&fresh, &t.model));

    let mut wider = ModelConfig::micro();
    wider.num_classes = 3;
    let mut other = Model::<f32>::new(wider, 1).unwrap();
    let report = import_weights(&mut other.store, dir.path()).unwrap();
    assert_eq!(report.unmatched, vec!["head.classifier.weight".to_string(), "head.classifier.bias".to_string()]);
    // Same-named entries of the wrong shape are unmatched, not missing.
    assert!(report.missing.is_empty());
    assert_eq!(report.loaded.len(), other.store.len() - 2);
}

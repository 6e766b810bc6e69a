use unitseg::datamodel::{load_manifest, DatasetManifest};
use unitseg::pipeline::{bootstrap, select_annotated, train_supervised, BootstrapConfig, TrainConfig};
use unitseg::synth::{generate, write_dataset, SynthSpec};
use unitseg::Error;

fn dataset(dir: &std::path::Path) -> DatasetManifest {
    let spec = SynthSpec {
        clips_per_activity: 8,
        ..SynthSpec::default()
    };
    let data = generate(&spec).unwrap();
    load_manifest(write_dataset(&data, &spec, dir).unwrap()).unwrap()
}

#[test]
fn bootstrap_without_transcripts_is_supervised_training() {
    let tmp = tempfile::tempdir().unwrap();
    let m = dataset(tmp.path());
    let cfg = TrainConfig::new(1, 4);
    let train = m.split("s1").unwrap().train.clone();
    let supervised = train_supervised(&m, "s1", &cfg).unwrap();
    let boot = bootstrap(&m, &BootstrapConfig::new(train, Vec::new()), &cfg).unwrap();
    assert_eq!(boot.hmms.to_json().unwrap(), supervised.hmms.to_json().unwrap());
    assert_eq!(boot.grammar, supervised.grammar);
}

#[test]
fn zero_rounds_keeps_the_annotated_model() {
    let tmp = tempfile::tempdir().unwrap();
    let m = dataset(tmp.path());
    let cfg = TrainConfig::new(1, 4);
    let train = m.split("s1").unwrap().train.clone();
    let (annotated, rest) = select_annotated(&m, &train, 3).unwrap();
    assert!(!rest.is_empty());

    let mut only = BootstrapConfig::new(annotated.clone(), Vec::new());
    only.rounds = 1;
    let mut zero = BootstrapConfig::new(annotated, rest);
    zero.rounds = 0;
    let a = bootstrap(&m, &only, &cfg).unwrap();
    let b = bootstrap(&m, &zero, &cfg).unwrap();
    assert_eq!(a.hmms.to_json().unwrap(), b.hmms.to_json().unwrap());
}

#[test]
fn annotated_selection_covers_every_unit() {
    let tmp = tempfile::tempdir().unwrap();
    let m = dataset(tmp.path());
    let train = m.split("s1").unwrap().train.clone();
    let (annotated, rest) = select_annotated(&m, &train, 3).unwrap();
    assert_eq!(annotated.len() + rest.len(), train.len());
    let mut counts = vec![0usize; m.lexicon.len()];
    for id in &annotated {
        for s in m.clip(id).unwrap().segmentation.as_ref().unwrap().segments() {
            counts[s.unit] += 1;
        }
    }
    assert!(counts.iter().all(|&c| c >= 3), "{counts:?}");
}

#[test]
fn bootstrap_rejects_overlapping_clip_sets() {
    let tmp = tempfile::tempdir().unwrap();
    let m = dataset(tmp.path());
    let train = m.split("s1").unwrap().train.clone();
    let cfg = BootstrapConfig::new(train[..3].to_vec(), train[2..5].to_vec());
    assert!(matches!(bootstrap(&m, &cfg, &TrainConfig::new(1, 0)), Err(Error::Config(_))));
}

#[test]
fn training_requires_every_transcript_unit() {
    let tmp = tempfile::tempdir().unwrap();
    let mut m = dataset(tmp.path());
    // keep only act1 clips for training; test clips of other activities use units
    // that may then lack samples
    let split = m.splits.get_mut("s1").unwrap();
    split.train.retain(|id| id.starts_with("act1"));
    let needed: std::collections::BTreeSet<_> = split
        .test
        .iter()
        .flat_map(|id| m.clips.iter().find(|c| &c.id == id).unwrap().transcript().unwrap().0)
        .collect();
    let have: std::collections::BTreeSet<_> = split
        .train
        .iter()
        .flat_map(|id| m.clips.iter().find(|c| &c.id == id).unwrap().transcript().unwrap().0)
        .collect();
    let result = train_supervised(&m, "s1", &TrainConfig::new(1, 0));
    if needed.is_subset(&have) {
        assert!(result.is_ok());
    } else {
        assert!(matches!(result, Err(Error::UntrainedUnits(_))), "{result:?}");
    }
}

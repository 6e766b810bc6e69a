use std::fs;

use unitseg::datamodel::{load_manifest, Transcript};
use unitseg::decoder::{DecodeOptions, Recognizer};
use unitseg::grammar::{export_ebnf, parse_ebnf};
use unitseg::pipeline::{train_supervised, ModelBundle, TrainConfig};
use unitseg::synth::{generate, write_dataset, SynthSpec};
use unitseg::Error;

fn small_spec() -> SynthSpec {
    SynthSpec {
        clips_per_activity: 6,
        ..SynthSpec::default()
    }
}

#[test]
fn synthetic_dataset_loads_back() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = small_spec();
    let data = generate(&spec).unwrap();
    let path = write_dataset(&data, &spec, tmp.path()).unwrap();
    let m = load_manifest(&path).unwrap();
    assert_eq!(m.clips.len(), data.clips.len());
    assert_eq!(m.lexicon.names(), data.lexicon.names());
    for clip in &data.clips {
        let loaded = m.clip(&clip.id).unwrap();
        assert_eq!(loaded.activity, clip.activity);
        assert_eq!(loaded.segmentation.as_ref(), Some(&clip.segmentation));
        let seq = loaded.load_features().unwrap();
        assert_eq!(seq.len(), clip.features.len());
        assert_eq!(seq.as_flat(), clip.features.as_flat());
    }
}

#[test]
fn manifest_errors_are_reported() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("manifest.json");
    fs::write(&path, "{ not json").unwrap();
    assert!(load_manifest(&path).is_err());
    assert!(matches!(load_manifest(tmp.path().join("absent.json")), Err(Error::Io { .. })));

    let spec = small_spec();
    let data = generate(&spec).unwrap();
    let path = write_dataset(&data, &spec, tmp.path()).unwrap();
    fs::remove_file(tmp.path().join("features").join(format!("{}.txt", data.clips[0].id))).unwrap();
    let m = load_manifest(&path).unwrap();
    assert!(matches!(m.clip(&data.clips[0].id).unwrap().load_features(), Err(Error::Io { .. })));
    assert!(m.clip("no-such-clip").is_err());
}

#[test]
fn bundle_round_trip_decodes_identically() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = small_spec();
    let data = generate(&spec).unwrap();
    let path = write_dataset(&data, &spec, tmp.path().join("data")).unwrap();
    let m = load_manifest(&path).unwrap();
    let bundle = train_supervised(&m, "s1", &TrainConfig::new(1, 5)).unwrap();
    bundle.save(tmp.path().join("model")).unwrap();
    let loaded = ModelBundle::load(tmp.path().join("model")).unwrap();
    assert_eq!(loaded.grammar, bundle.grammar);
    assert_eq!(loaded.lexicon().names(), bundle.lexicon().names());

    let a = Recognizer::new(&bundle.grammar, bundle.hmms.clone(), DecodeOptions::default()).unwrap();
    let b = Recognizer::new(&loaded.grammar, loaded.hmms.clone(), DecodeOptions::default()).unwrap();
    for clip in data.clips.iter().take(6) {
        assert_eq!(a.decode(&clip.features).unwrap(), b.decode(&clip.features).unwrap());
    }
}

#[test]
fn grammar_text_round_trip() {
    let spec = small_spec();
    let data = generate(&spec).unwrap();
    let pairs: Vec<(String, Transcript)> = data
        .grammar
        .iter()
        .flat_map(|(a, ts)| ts.iter().map(move |t| (a.clone(), t.clone())))
        .collect();
    let g = unitseg::grammar::build_grammar(&pairs, data.lexicon.silence()).unwrap();
    let text = export_ebnf(&g, &data.lexicon);
    assert_eq!(parse_ebnf(&text, &data.lexicon).unwrap(), g);
    assert!(parse_ebnf("act1 = SIL, nonexistent, SIL ;", &data.lexicon).is_err());
}

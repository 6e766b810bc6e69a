use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use unitseg::decoder::{DecodeOptions, Recognizer};
use unitseg::pipeline::{train_supervised, TrainConfig};
use unitseg::synth::{generate, write_dataset, SynthData, SynthSpec};
use unitseg_ffi::*;

fn trained_model(dir: &Path) -> (SynthData, CString) {
    let spec = SynthSpec {
        clips_per_activity: 6,
        ..SynthSpec::default()
    };
    let data = generate(&spec).unwrap();
    let manifest = write_dataset(&data, &spec, dir.join("data")).unwrap();
    let m = unitseg::datamodel::load_manifest(manifest).unwrap();
    let bundle = train_supervised(&m, "s1", &TrainConfig::new(1, 0)).unwrap();
    bundle.save(dir.join("model")).unwrap();
    (data, CString::new(dir.join("model").to_str().unwrap()).unwrap())
}

fn last_error() -> String {
    let p = us_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn decode_matches_library() {
    let tmp = tempfile::tempdir().unwrap();
    let (data, path) = trained_model(tmp.path());
    unsafe {
        let mut model = ptr::null_mut();
        assert_eq!(us_model_load(path.as_ptr(), &mut model), UsStatus::Ok);
        assert!(us_last_error().is_null());

        let mut dim = 0;
        assert_eq!(us_model_dim(model, &mut dim), UsStatus::Ok);
        let mut units = 0;
        assert_eq!(us_model_num_units(model, &mut units), UsStatus::Ok);
        assert_eq!(units, data.lexicon.len());
        let mut name = ptr::null_mut();
        assert_eq!(us_model_unit_name(model, 0, &mut name), UsStatus::Ok);
        assert_eq!(CStr::from_ptr(name).to_str().unwrap(), data.lexicon.name(0));
        us_string_free(name);

        let bundle = unitseg::pipeline::ModelBundle::load(tmp.path().join("model")).unwrap();
        let rec = Recognizer::new(&bundle.grammar, bundle.hmms.clone(), DecodeOptions::default()).unwrap();
        for clip in data.clips.iter().take(4) {
            let f = &clip.features;
            assert_eq!(f.dim(), dim);
            let mut seq = ptr::null_mut();
            assert_eq!(us_sequence_new(f.as_flat().as_ptr(), f.len(), f.dim(), &mut seq), UsStatus::Ok);
            let mut res = ptr::null_mut();
            assert_eq!(us_decode(model, seq, 0.0, 0, &mut res), UsStatus::Ok);
            let want = rec.decode(f).unwrap();

            let mut lp = 0.0;
            assert_eq!(us_result_log_prob(res, &mut lp), UsStatus::Ok);
            assert_eq!(lp, want.log_prob);
            let mut act = ptr::null_mut();
            assert_eq!(us_result_activity(res, &mut act), UsStatus::Ok);
            assert_eq!(CStr::from_ptr(act).to_str().unwrap(), want.activity.as_deref().unwrap());
            us_string_free(act);

            let mut n = 0;
            assert_eq!(us_result_num_segments(res, &mut n), UsStatus::Ok);
            assert_eq!(n, want.segmentation.len());
            for (i, s) in want.segmentation.segments().iter().enumerate() {
                let (mut u, mut a, mut b) = (0, 0, 0);
                assert_eq!(us_result_segment(res, i, &mut u, &mut a, &mut b), UsStatus::Ok);
                assert_eq!((u, a, b), (s.unit, s.start, s.end));
            }
            let (mut u, mut a, mut b) = (0, 0, 0);
            assert_eq!(us_result_segment(res, n, &mut u, &mut a, &mut b), UsStatus::InvalidArgument);

            let mut json = ptr::null_mut();
            assert_eq!(us_result_to_json(res, &mut json), UsStatus::Ok);
            let v: serde_json::Value = serde_json::from_str(CStr::from_ptr(json).to_str().unwrap()).unwrap();
            assert_eq!(v["segments"].as_array().unwrap().len(), n);
            us_string_free(json);

            us_result_free(res);
            us_sequence_free(seq);
        }
        us_model_free(model);
    }
}

#[test]
fn errors_are_reported() {
    let tmp = tempfile::tempdir().unwrap();
    let (data, path) = trained_model(tmp.path());
    unsafe {
        let mut model = ptr::null_mut();
        let missing = CString::new(tmp.path().join("absent").to_str().unwrap()).unwrap();
        assert_eq!(us_model_load(missing.as_ptr(), &mut model), UsStatus::Io);
        assert!(model.is_null());
        assert!(last_error().contains("absent"));
        assert_eq!(us_model_load(ptr::null(), &mut model), UsStatus::InvalidArgument);

        assert_eq!(us_model_load(path.as_ptr(), &mut model), UsStatus::Ok);
        let f = &data.clips[0].features;

        // wrong dimension
        let mut seq = ptr::null_mut();
        assert_eq!(us_sequence_new(f.as_flat().as_ptr(), f.len() * f.dim(), 1, &mut seq), UsStatus::Ok);
        let mut res = ptr::null_mut();
        assert_eq!(us_decode(model, seq, 0.0, 0, &mut res), UsStatus::Data);
        assert!(res.is_null());
        us_sequence_free(seq);

        // too short for any sentence
        let mut seq = ptr::null_mut();
        assert_eq!(us_sequence_new(f.as_flat().as_ptr(), 1, f.dim(), &mut seq), UsStatus::Ok);
        assert_eq!(us_decode(model, seq, 0.0, 0, &mut res), UsStatus::NoPath);
        assert_eq!(us_decode(model, seq, f64::NAN, 0, &mut res), UsStatus::InvalidArgument);
        assert_eq!(us_decode(ptr::null(), seq, 0.0, 0, &mut res), UsStatus::InvalidArgument);
        us_sequence_free(seq);

        assert_eq!(us_sequence_new(ptr::null(), 1, 1, &mut seq), UsStatus::InvalidArgument);
        assert_eq!(us_sequence_new(f.as_flat().as_ptr(), 0, f.dim(), &mut seq), UsStatus::Data);

        // null handles are ignored by the destructors
        us_model_free(ptr::null_mut());
        us_sequence_free(ptr::null_mut());
        us_result_free(ptr::null_mut());
        us_string_free(ptr::null_mut());
        us_model_free(model);
    }
    let v = unsafe { CStr::from_ptr(us_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_compiles_as_c_and_cpp() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/unitseg.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for symbol in ["us_model_load", "us_decode", "us_result_segment", "US_STATUS_NO_PATH", "typedef struct UsModel UsModel;"] {
        assert!(text.contains(symbol), "header lacks {symbol}");
    }
    let tmp = tempfile::tempdir().unwrap();
    let src = tmp.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"unitseg.h\"\nint main(void) { UsModel *m = 0; UsStatus s = us_model_load(\"x\", &m); return s == US_STATUS_OK; }\n",
    )
    .unwrap();
    for (compiler, lang) in [("cc", "c"), ("c++", "c++")] {
        let Ok(out) = Command::new(compiler)
            .args(["-fsyntax-only", "-Wall", "-Werror", "-x", lang, "-I"])
            .arg(header.parent().unwrap())
            .arg(&src)
            .output()
        else {
            eprintln!("{compiler} not available; skipping");
            continue;
        };
        assert!(out.status.success(), "{compiler}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

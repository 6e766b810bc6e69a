//! Synthetic datasets with exact ground truth, sampled from left-to-right
//! HMMs with Gaussian emissions under a random per-activity grammar.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::datamodel::{
    features_to_text, ClipRecord, FeatureSequence, ManifestFile, Segment, Segmentation, SplitRecord, Transcript,
    UnitLexicon, MANIFEST_VERSION,
};
use crate::error::{Error, Result};

pub const SILENCE: &str = "SIL";
pub const SPLIT: &str = "s1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub seed: u64,
    pub dim: usize,
    /// Action units besides silence.
    pub units: usize,
    pub states_per_unit: usize,
    /// Expected frames spent in each state.
    pub state_duration: f64,
    pub activities: usize,
    pub sentences_per_activity: usize,
    /// Inclusive range of action units between the two silences.
    pub min_sentence_units: usize,
    pub max_sentence_units: usize,
    pub clips_per_activity: usize,
    /// Emission noise standard deviation; 0 gives noise-free frames.
    pub noise: f64,
    /// Minimum distance between any two state means, in units of `noise`
    /// (or of 1 when `noise` is 0).
    pub separation: f64,
    pub frame_rate: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            dim: 4,
            units: 5,
            states_per_unit: 3,
            state_duration: 5.0,
            activities: 3,
            sentences_per_activity: 2,
            min_sentence_units: 2,
            max_sentence_units: 4,
            clips_per_activity: 50,
            noise: 1.0,
            separation: 6.0,
            frame_rate: 15.0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("synthetic spec: {m}")));
        if self.dim == 0 || self.units == 0 || self.states_per_unit == 0 || self.activities == 0 {
            return bad("dim, units, states_per_unit and activities must be positive");
        }
        if self.sentences_per_activity == 0 || self.clips_per_activity == 0 {
            return bad("sentences_per_activity and clips_per_activity must be positive");
        }
        if self.min_sentence_units == 0 || self.min_sentence_units > self.max_sentence_units {
            return bad("sentence length range must satisfy 1 <= min <= max");
        }
        if !self.state_duration.is_finite() || self.state_duration < 1.0 {
            return bad("state_duration must be at least 1");
        }
        if !self.noise.is_finite() || self.noise < 0.0 {
            return bad("noise must be finite and non-negative");
        }
        if !self.separation.is_finite() || self.separation <= 0.0 {
            return bad("separation must be positive");
        }
        if self.frame_rate.is_nan() || self.frame_rate <= 0.0 {
            return bad("frame_rate must be positive");
        }
        Ok(())
    }

    pub fn unit_names(&self) -> Vec<String> {
        let width = self.units.to_string().len();
        let mut names = vec![SILENCE.to_string()];
        names.extend((1..=self.units).map(|i| format!("u{i:0width$}")));
        names
    }

    pub fn activity_names(&self) -> Vec<String> {
        let width = self.activities.to_string().len();
        (1..=self.activities).map(|i| format!("act{i:0width$}")).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthClip {
    pub id: String,
    pub activity: String,
    pub features: FeatureSequence,
    pub segmentation: Segmentation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthData {
    pub lexicon: UnitLexicon,
    /// `means[unit][state]`.
    pub means: Vec<Vec<Vec<f64>>>,
    pub grammar: BTreeMap<String, Vec<Transcript>>,
    pub clips: Vec<SynthClip>,
    pub train: Vec<String>,
    pub test: Vec<String>,
}

/// Distinct random points of a cubic lattice with spacing `spacing`.
fn lattice_means(count: usize, dim: usize, spacing: f64, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut side = 2usize;
    while (side as f64).powi(dim as i32) < 2.0 * count as f64 {
        side += 1;
    }
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let p: Vec<usize> = (0..dim).map(|_| rng.random_range(0..side)).collect();
        if seen.insert(p.clone()) {
            out.push(p.iter().map(|&c| c as f64 * spacing).collect());
        }
    }
    out
}

fn random_sentences(spec: &SynthSpec, rng: &mut ChaCha8Rng) -> Result<BTreeMap<String, Vec<Transcript>>> {
    let mut used = BTreeSet::new();
    let mut grammar = BTreeMap::new();
    for activity in spec.activity_names() {
        let mut sentences = Vec::new();
        let mut attempts = 0;
        while sentences.len() < spec.sentences_per_activity {
            attempts += 1;
            if attempts > 10_000 {
                return Err(Error::Config(
                    "synthetic spec: cannot draw enough distinct sentences; allow longer sentences or more units".into(),
                ));
            }
            let len = rng.random_range(spec.min_sentence_units..=spec.max_sentence_units);
            let mut units = vec![0];
            while units.len() < len + 1 {
                let u = rng.random_range(1..=spec.units);
                if units.last() != Some(&u) {
                    units.push(u);
                }
            }
            units.push(0);
            if used.insert(units.clone()) {
                sentences.push(Transcript(units));
            }
        }
        grammar.insert(activity, sentences);
    }
    Ok(grammar)
}

pub fn generate(spec: &SynthSpec) -> Result<SynthData> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let lexicon = UnitLexicon::new(spec.unit_names(), SILENCE)?;
    let scale = if spec.noise > 0.0 { spec.noise } else { 1.0 };
    let n_units = spec.units + 1;
    let flat = lattice_means(n_units * spec.states_per_unit, spec.dim, spec.separation * scale, &mut rng);
    let means: Vec<Vec<Vec<f64>>> = flat.chunks(spec.states_per_unit).map(<[_]>::to_vec).collect();
    let grammar = random_sentences(spec, &mut rng)?;
    let stay = 1.0 - 1.0 / spec.state_duration;

    let mut clips = Vec::new();
    let (mut train, mut test) = (Vec::new(), Vec::new());
    let width = spec.clips_per_activity.to_string().len();
    for (activity, sentences) in &grammar {
        let mut uses = vec![0usize; sentences.len()];
        for i in 0..spec.clips_per_activity {
            // cycle through the sentences so each has train and test clips
            let s = i % sentences.len();
            let sentence = &sentences[s];
            let id = format!("{activity}_{i:0width$}");
            if uses[s] % 2 == 0 {
                train.push(id.clone());
            } else {
                test.push(id.clone());
            }
            uses[s] += 1;

            let mut data = Vec::new();
            let mut segments = Vec::new();
            let mut t = 0;
            for &u in &sentence.0 {
                let start = t;
                for mean in &means[u] {
                    loop {
                        data.extend(mean.iter().map(|m| {
                            let z: f64 = StandardNormal.sample(&mut rng);
                            m + spec.noise * z
                        }));
                        t += 1;
                        if rng.random::<f64>() >= stay {
                            break;
                        }
                    }
                }
                segments.push(Segment { unit: u, start, end: t - 1 });
            }
            clips.push(SynthClip {
                features: FeatureSequence::from_flat(id.clone(), spec.dim, data, spec.frame_rate)?,
                segmentation: Segmentation::new(segments)?,
                activity: activity.clone(),
                id,
            });
        }
    }
    Ok(SynthData {
        lexicon,
        means,
        grammar,
        clips,
        train,
        test,
    })
}

#[derive(Serialize)]
struct Truth<'a> {
    spec: &'a SynthSpec,
    means: BTreeMap<&'a str, &'a Vec<Vec<f64>>>,
    grammar: BTreeMap<&'a str, Vec<Vec<&'a str>>>,
}

/// Writes features, segmentations, a manifest and the generating parameters
/// under `dir`. Returns the manifest path.
pub fn write_dataset(data: &SynthData, spec: &SynthSpec, dir: impl AsRef<Path>) -> Result<PathBuf> {
    let dir = dir.as_ref();
    for sub in ["features", "segmentation"] {
        let p = dir.join(sub);
        fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))?;
    }
    let write = |rel: &Path, body: String| {
        let p = dir.join(rel);
        fs::write(&p, body).map_err(|e| Error::io(&p, e))
    };
    let mut records = Vec::with_capacity(data.clips.len());
    for clip in &data.clips {
        let features = PathBuf::from("features").join(format!("{}.txt", clip.id));
        let segmentation = PathBuf::from("segmentation").join(format!("{}.txt", clip.id));
        write(&features, features_to_text(&clip.features))?;
        write(&segmentation, clip.segmentation.to_text(&data.lexicon))?;
        records.push(ClipRecord {
            id: clip.id.clone(),
            features,
            segmentation: Some(segmentation),
            transcript: None,
            activity: clip.activity.clone(),
        });
    }
    let manifest = ManifestFile {
        version: MANIFEST_VERSION,
        silence: SILENCE.into(),
        units: Some(data.lexicon.names().to_vec()),
        frame_rate: spec.frame_rate,
        clips: records,
        splits: BTreeMap::from([(
            SPLIT.to_string(),
            SplitRecord {
                train: data.train.clone(),
                test: data.test.clone(),
            },
        )]),
    };
    let truth = Truth {
        spec,
        means: data.lexicon.names().iter().map(String::as_str).zip(&data.means).collect(),
        grammar: data
            .grammar
            .iter()
            .map(|(a, ts)| (a.as_str(), ts.iter().map(|t| t.names(&data.lexicon)).collect()))
            .collect(),
    };
    write(Path::new("truth.json"), serde_json::to_string_pretty(&truth)?)?;
    let path = dir.join("manifest.json");
    fs::write(&path, serde_json::to_string_pretty(&manifest)?).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamodel::load_manifest;

    fn small() -> SynthSpec {
        SynthSpec {
            clips_per_activity: 6,
            ..Default::default()
        }
    }

    #[test]
    fn generated_clips_are_consistent() {
        let spec = small();
        let data = generate(&spec).unwrap();
        assert_eq!(data.clips.len(), 18);
        assert_eq!(data.train.len() + data.test.len(), 18);
        for clip in &data.clips {
            assert_eq!(clip.segmentation.num_frames(), clip.features.len());
            let t = clip.segmentation.to_transcript();
            assert!(data.grammar[&clip.activity].contains(&t));
            assert_eq!(t.0.first(), Some(&0));
            assert_eq!(t.0.last(), Some(&0));
        }
        let all: BTreeSet<&Transcript> = data.grammar.values().flatten().collect();
        assert_eq!(all.len(), 6);
    }

    #[test]
    fn means_respect_separation() {
        let spec = SynthSpec { noise: 0.5, ..small() };
        let data = generate(&spec).unwrap();
        let flat: Vec<&Vec<f64>> = data.means.iter().flatten().collect();
        for i in 0..flat.len() {
            for j in i + 1..flat.len() {
                let d: f64 = flat[i].iter().zip(flat[j]).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                assert!(d >= 6.0 * 0.5 - 1e-12);
            }
        }
    }

    #[test]
    fn noise_free_frames_equal_means() {
        let spec = SynthSpec { noise: 0.0, ..small() };
        let data = generate(&spec).unwrap();
        let clip = &data.clips[0];
        let first = clip.segmentation.segments()[0];
        assert_eq!(clip.features.frame(0), &data.means[first.unit][0][..]);
    }

    #[test]
    fn same_seed_same_files() {
        let spec = small();
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let pa = write_dataset(&generate(&spec).unwrap(), &spec, a.path()).unwrap();
        let pb = write_dataset(&generate(&spec).unwrap(), &spec, b.path()).unwrap();
        assert_eq!(fs::read(&pa).unwrap(), fs::read(&pb).unwrap());
        let clip = "features/act1_0.txt";
        assert_eq!(fs::read(a.path().join(clip)).unwrap(), fs::read(b.path().join(clip)).unwrap());
        let m = load_manifest(&pa).unwrap();
        assert_eq!(m.clips.len(), 18);
        assert_eq!(m.lexicon.names(), spec.unit_names().as_slice());
    }

    #[test]
    fn invalid_specs_are_rejected() {
        assert!(generate(&SynthSpec { units: 0, ..small() }).is_err());
        assert!(generate(&SynthSpec { noise: -1.0, ..small() }).is_err());
        let impossible = SynthSpec {
            units: 1,
            min_sentence_units: 1,
            max_sentence_units: 1,
            ..small()
        };
        assert!(generate(&impossible).is_err());
    }
}

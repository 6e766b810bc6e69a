//! Domain types shared by every stage, plus the text and JSON formats used to
//! move them on and off disk.
//!
//! Frames are indexed from 0 and segment ends are inclusive, both in memory and
//! in files.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type UnitId = usize;

/// Per-frame feature vectors of one clip, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    clip_id: String,
    frame_rate: f64,
    dim: usize,
    data: Vec<f64>,
}

impl FeatureSequence {
    pub fn new(clip_id: impl Into<String>, frames: &[Vec<f64>], frame_rate: f64) -> Result<Self> {
        let dim = frames.first().map(Vec::len).unwrap_or(0);
        let mut data = Vec::with_capacity(frames.len() * dim);
        for (t, frame) in frames.iter().enumerate() {
            if frame.len() != dim {
                return Err(Error::Parse {
                    context: "features".into(),
                    line: t + 1,
                    message: format!("expected {dim} values, found {}", frame.len()),
                });
            }
            data.extend_from_slice(frame);
        }
        Self::from_flat(clip_id, dim, data, frame_rate)
    }

    pub fn from_flat(
        clip_id: impl Into<String>,
        dim: usize,
        data: Vec<f64>,
        frame_rate: f64,
    ) -> Result<Self> {
        if dim == 0 || data.is_empty() {
            return Err(Error::Data("feature sequence must have at least one frame and one dimension".into()));
        }
        if !data.len().is_multiple_of(dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: data.len() % dim,
            });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                frame: i / dim,
                dim: i % dim,
            });
        }
        Ok(Self {
            clip_id: clip_id.into(),
            frame_rate,
            dim,
            data,
        })
    }

    pub fn clip_id(&self) -> &str {
        &self.clip_id
    }

    pub fn frame_rate(&self) -> f64 {
        self.frame_rate
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        &self.data[t * self.dim..(t + 1) * self.dim]
    }

    pub fn frames(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    /// Frames `start..=end` as a new sequence.
    pub fn slice(&self, start: usize, end: usize) -> Result<Self> {
        if start > end || end >= self.len() {
            return Err(Error::Data(format!(
                "frame range {start}..={end} outside clip of {} frames",
                self.len()
            )));
        }
        Ok(Self {
            clip_id: self.clip_id.clone(),
            frame_rate: self.frame_rate,
            dim: self.dim,
            data: self.data[start * self.dim..(end + 1) * self.dim].to_vec(),
        })
    }

    pub fn with_clip_id(mut self, clip_id: impl Into<String>) -> Self {
        self.clip_id = clip_id.into();
        self
    }
}

/// Unit names are also grammar tokens, so they may not contain whitespace or
/// any of the EBNF punctuation characters.
pub fn validate_name(name: &str) -> Result<()> {
    const RESERVED: &[char] = &['=', ',', ';', '|', '(', ')', '[', ']', '"', '\''];
    if name.is_empty() || name.chars().any(|c| c.is_whitespace() || RESERVED.contains(&c)) {
        return Err(Error::Data(format!("invalid name `{name}`")));
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct LexiconRepr {
    units: Vec<String>,
    sample_counts: Vec<usize>,
    silence: String,
}

/// The action-unit vocabulary with per-unit training sample counts.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "LexiconRepr", into = "LexiconRepr")]
pub struct UnitLexicon {
    names: Vec<String>,
    counts: Vec<usize>,
    silence: UnitId,
    index: HashMap<String, UnitId>,
}

impl PartialEq for UnitLexicon {
    fn eq(&self, other: &Self) -> bool {
        self.names == other.names && self.counts == other.counts && self.silence == other.silence
    }
}

impl TryFrom<LexiconRepr> for UnitLexicon {
    type Error = Error;

    fn try_from(repr: LexiconRepr) -> Result<Self> {
        let mut lex = UnitLexicon::new(repr.units, &repr.silence)?;
        if repr.sample_counts.len() != lex.len() {
            return Err(Error::Data("sample_counts length differs from unit count".into()));
        }
        lex.counts = repr.sample_counts;
        Ok(lex)
    }
}

impl From<UnitLexicon> for LexiconRepr {
    fn from(lex: UnitLexicon) -> Self {
        LexiconRepr {
            silence: lex.names[lex.silence].clone(),
            units: lex.names,
            sample_counts: lex.counts,
        }
    }
}

impl UnitLexicon {
    pub fn new(names: Vec<String>, silence: &str) -> Result<Self> {
        let mut index = HashMap::with_capacity(names.len());
        for (id, name) in names.iter().enumerate() {
            validate_name(name)?;
            if index.insert(name.clone(), id).is_some() {
                return Err(Error::Data(format!("duplicate unit name `{name}`")));
            }
        }
        let silence = *index
            .get(silence)
            .ok_or_else(|| Error::Data(format!("silence unit `{silence}` not in lexicon")))?;
        Ok(Self {
            counts: vec![0; names.len()],
            names,
            silence,
            index,
        })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn id(&self, name: &str) -> Option<UnitId> {
        self.index.get(name).copied()
    }

    pub fn require(&self, name: &str) -> Result<UnitId> {
        self.id(name).ok_or_else(|| Error::UnknownUnit(name.to_string()))
    }

    pub fn name(&self, id: UnitId) -> &str {
        &self.names[id]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn silence(&self) -> UnitId {
        self.silence
    }

    pub fn sample_count(&self, id: UnitId) -> usize {
        self.counts[id]
    }

    pub fn set_sample_count(&mut self, id: UnitId, count: usize) {
        self.counts[id] = count;
    }

    /// Log unit prior up to an additive constant: `-ln N(u)`. Units never seen
    /// in training get `-inf`.
    pub fn log_prior(&self, id: UnitId) -> f64 {
        match self.counts[id] {
            0 => f64::NEG_INFINITY,
            n => -(n as f64).ln(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub unit: UnitId,
    pub start: usize,
    pub end: usize,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.end + 1 - self.start
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Contiguous, gap-free labelling of frames `0..T`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Segmentation {
    segments: Vec<Segment>,
}

impl Segmentation {
    pub fn new(segments: Vec<Segment>) -> Result<Self> {
        let mut next = 0;
        for (i, s) in segments.iter().enumerate() {
            if s.start != next {
                return Err(Error::Data(format!(
                    "segment {i} starts at frame {} but previous coverage ends before frame {next}",
                    s.start
                )));
            }
            if s.end < s.start {
                return Err(Error::Data(format!("segment {i} has end {} before start {}", s.end, s.start)));
            }
            next = s.end + 1;
        }
        Ok(Self { segments })
    }

    /// Run-length encodes per-frame labels.
    pub fn from_labels(labels: &[UnitId]) -> Self {
        let mut segments: Vec<Segment> = Vec::new();
        for (t, &unit) in labels.iter().enumerate() {
            match segments.last_mut() {
                Some(last) if last.unit == unit => last.end = t,
                _ => segments.push(Segment { unit, start: t, end: t }),
            }
        }
        Self { segments }
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn num_frames(&self) -> usize {
        self.segments.last().map_or(0, |s| s.end + 1)
    }

    /// One transcript token per segment; adjacent repeats are kept.
    pub fn to_transcript(&self) -> Transcript {
        Transcript(self.segments.iter().map(|s| s.unit).collect())
    }

    pub fn frame_labels(&self, num_frames: usize) -> Result<Vec<UnitId>> {
        if self.num_frames() != num_frames {
            return Err(Error::Coverage {
                covered: self.num_frames(),
                expected: num_frames,
            });
        }
        let mut labels = Vec::with_capacity(num_frames);
        for s in &self.segments {
            labels.extend(std::iter::repeat_n(s.unit, s.len()));
        }
        Ok(labels)
    }

    pub fn parse(text: &str, lexicon: &UnitLexicon, context: &str) -> Result<Self> {
        let raw = parse_segmentation_names(text, context)?;
        let mut segments = Vec::with_capacity(raw.len());
        for (start, end, name) in raw {
            segments.push(Segment {
                unit: lexicon.require(&name)?,
                start,
                end,
            });
        }
        Self::new(segments).map_err(|e| Error::Data(format!("{context}: {e}")))
    }

    pub fn to_text(&self, lexicon: &UnitLexicon) -> String {
        let mut out = String::new();
        for s in &self.segments {
            let _ = writeln!(out, "{} {} {}", s.start, s.end, lexicon.name(s.unit));
        }
        out
    }
}

pub fn segmentation_to_transcript(seg: &Segmentation) -> Transcript {
    seg.to_transcript()
}

pub fn frame_labels(seg: &Segmentation, num_frames: usize) -> Result<Vec<UnitId>> {
    seg.frame_labels(num_frames)
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Transcript(pub Vec<UnitId>);

impl Transcript {
    pub fn units(&self) -> &[UnitId] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn parse(text: &str, lexicon: &UnitLexicon) -> Result<Self> {
        parse_transcript_names(text)
            .iter()
            .map(|n| lexicon.require(n))
            .collect::<Result<Vec<_>>>()
            .map(Transcript)
    }

    pub fn to_text(&self, lexicon: &UnitLexicon) -> String {
        self.0.iter().map(|&u| format!("{}\n", lexicon.name(u))).collect()
    }

    pub fn names<'a>(&self, lexicon: &'a UnitLexicon) -> Vec<&'a str> {
        self.0.iter().map(|&u| lexicon.name(u)).collect()
    }
}

fn parse_segmentation_names(text: &str, context: &str) -> Result<Vec<(usize, usize, String)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |message: String| Error::Parse {
            context: context.to_string(),
            line: i + 1,
            message,
        };
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(bad(format!("expected `start end unit`, found {} fields", fields.len())));
        }
        let start = fields[0].parse().map_err(|_| bad(format!("bad start frame `{}`", fields[0])))?;
        let end = fields[1].parse().map_err(|_| bad(format!("bad end frame `{}`", fields[1])))?;
        out.push((start, end, fields[2].to_string()));
    }
    Ok(out)
}

fn parse_transcript_names(text: &str) -> Vec<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect()
}

pub fn parse_features(text: &str, clip_id: &str, frame_rate: f64) -> Result<FeatureSequence> {
    let mut dim = None;
    let mut data = Vec::new();
    let mut rows = 0;
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut count = 0;
        for tok in line.split_whitespace() {
            let v: f64 = tok.parse().map_err(|_| Error::Parse {
                context: clip_id.to_string(),
                line: i + 1,
                message: format!("not a number: `{tok}`"),
            })?;
            if !v.is_finite() {
                return Err(Error::NonFinite { frame: rows, dim: count });
            }
            data.push(v);
            count += 1;
        }
        match dim {
            None => dim = Some(count),
            Some(d) if d != count => {
                return Err(Error::Parse {
                    context: clip_id.to_string(),
                    line: i + 1,
                    message: format!("dimension mismatch: expected {d} values, found {count}"),
                })
            }
            _ => {}
        }
        rows += 1;
    }
    let dim = dim.ok_or_else(|| Error::Data(format!("{clip_id}: empty feature file")))?;
    FeatureSequence::from_flat(clip_id, dim, data, frame_rate)
}

pub fn load_features(path: impl AsRef<Path>) -> Result<FeatureSequence> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let clip_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_features(&text, &clip_id, DEFAULT_FRAME_RATE)
}

pub fn features_to_text(seq: &FeatureSequence) -> String {
    let mut out = String::with_capacity(seq.as_flat().len() * 12);
    for frame in seq.frames() {
        for (i, v) in frame.iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            let _ = write!(out, "{v}");
        }
        out.push('\n');
    }
    out
}

pub fn write_features(path: impl AsRef<Path>, seq: &FeatureSequence) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, features_to_text(seq)).map_err(|e| Error::io(path, e))
}

pub const DEFAULT_FRAME_RATE: f64 = 15.0;
pub const MANIFEST_VERSION: u32 = 1;

/// On-disk manifest layout. Paths are relative to the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestFile {
    pub version: u32,
    pub silence: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub units: Option<Vec<String>>,
    #[serde(default = "default_frame_rate")]
    pub frame_rate: f64,
    pub clips: Vec<ClipRecord>,
    #[serde(default)]
    pub splits: BTreeMap<String, SplitRecord>,
}

fn default_frame_rate() -> f64 {
    DEFAULT_FRAME_RATE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipRecord {
    pub id: String,
    pub features: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub segmentation: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transcript: Option<PathBuf>,
    pub activity: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SplitRecord {
    #[serde(default)]
    pub train: Vec<String>,
    #[serde(default)]
    pub test: Vec<String>,
}

pub type Split = SplitRecord;

#[derive(Debug, Clone, PartialEq)]
pub struct Clip {
    pub id: String,
    pub features: PathBuf,
    pub segmentation: Option<Segmentation>,
    pub transcript: Option<Transcript>,
    pub activity: String,
    pub frame_rate: f64,
}

impl Clip {
    /// The explicit transcript if present, otherwise the one implied by the
    /// segmentation.
    pub fn transcript(&self) -> Option<Transcript> {
        self.transcript
            .clone()
            .or_else(|| self.segmentation.as_ref().map(Segmentation::to_transcript))
    }

    pub fn load_features(&self) -> Result<FeatureSequence> {
        let text = fs::read_to_string(&self.features).map_err(|e| Error::io(&self.features, e))?;
        let seq = parse_features(&text, &self.id, self.frame_rate)?;
        if let Some(seg) = &self.segmentation {
            if seg.num_frames() != seq.len() {
                return Err(Error::Data(format!(
                    "clip {}: segmentation covers {} frames, features have {}",
                    self.id,
                    seg.num_frames(),
                    seq.len()
                )));
            }
        }
        Ok(seq)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub root: PathBuf,
    pub lexicon: UnitLexicon,
    pub clips: Vec<Clip>,
    pub splits: BTreeMap<String, Split>,
}

impl DatasetManifest {
    pub fn clip(&self, id: &str) -> Result<&Clip> {
        self.clips
            .iter()
            .find(|c| c.id == id)
            .ok_or_else(|| Error::Manifest(format!("unknown clip `{id}`")))
    }

    pub fn split(&self, name: &str) -> Result<&Split> {
        self.splits
            .get(name)
            .ok_or_else(|| Error::Manifest(format!("unknown split `{name}`")))
    }

    pub fn clips_by_id<'a>(&'a self, ids: &[String]) -> Result<Vec<&'a Clip>> {
        ids.iter().map(|id| self.clip(id)).collect()
    }

    pub fn activities(&self) -> BTreeSet<&str> {
        self.clips.iter().map(|c| c.activity.as_str()).collect()
    }

    fn validate(&self) -> Result<()> {
        if self.clips.is_empty() {
            return Err(Error::Manifest("empty manifest".into()));
        }
        let mut seen = BTreeSet::new();
        for clip in &self.clips {
            if !seen.insert(clip.id.as_str()) {
                return Err(Error::Manifest(format!("duplicate clip_id `{}`", clip.id)));
            }
        }
        for (name, split) in &self.splits {
            for id in split.train.iter().chain(&split.test) {
                if !seen.contains(id.as_str()) {
                    return Err(Error::Manifest(format!("split `{name}` references unknown clip `{id}`")));
                }
            }
            let train: BTreeSet<&String> = split.train.iter().collect();
            if let Some(id) = split.test.iter().find(|id| train.contains(id)) {
                return Err(Error::Manifest(format!("split `{name}`: clip `{id}` is in both train and test")));
            }
        }
        Ok(())
    }
}

/// Parses and validates a manifest, reading every annotation file it names.
/// Feature files are only checked lazily by [`Clip::load_features`].
pub fn load_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: ManifestFile = serde_json::from_str(&text)
        .map_err(|e| Error::Manifest(format!("{}: {e}", path.display())))?;
    let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
    manifest_from_file(file, &root)
}

pub fn manifest_from_file(file: ManifestFile, root: &Path) -> Result<DatasetManifest> {
    if file.version != MANIFEST_VERSION {
        return Err(Error::Manifest(format!("unsupported manifest version {}", file.version)));
    }
    if file.clips.is_empty() {
        return Err(Error::Manifest("empty manifest".into()));
    }
    let resolve = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { root.join(p) };
    let read = |clip: &str, p: &Path| -> Result<String> {
        let full = resolve(p);
        fs::read_to_string(&full).map_err(|e| Error::Manifest(format!("clip `{clip}`: {}: {e}", full.display())))
    };

    let mut raw_segs = Vec::with_capacity(file.clips.len());
    let mut raw_transcripts = Vec::with_capacity(file.clips.len());
    let mut used: BTreeSet<String> = BTreeSet::new();
    used.insert(file.silence.clone());
    for rec in &file.clips {
        let seg = match &rec.segmentation {
            Some(p) => {
                let names = parse_segmentation_names(&read(&rec.id, p)?, &rec.id)?;
                used.extend(names.iter().map(|(_, _, n)| n.clone()));
                Some(names)
            }
            None => None,
        };
        let tr = match &rec.transcript {
            Some(p) => {
                let names = parse_transcript_names(&read(&rec.id, p)?);
                if names.is_empty() {
                    return Err(Error::Manifest(format!("clip `{}`: empty transcript", rec.id)));
                }
                used.extend(names.iter().cloned());
                Some(names)
            }
            None => None,
        };
        raw_segs.push(seg);
        raw_transcripts.push(tr);
    }

    let names = match &file.units {
        Some(units) => {
            let declared: BTreeSet<&String> = units.iter().collect();
            if let Some(missing) = used.iter().find(|n| !declared.contains(n)) {
                return Err(Error::Manifest(format!("unit `{missing}` used but not declared in `units`")));
            }
            units.clone()
        }
        None => used.into_iter().collect(),
    };
    let lexicon = UnitLexicon::new(names, &file.silence).map_err(|e| Error::Manifest(e.to_string()))?;

    let mut clips = Vec::with_capacity(file.clips.len());
    for ((rec, seg), tr) in file.clips.iter().zip(raw_segs).zip(raw_transcripts) {
        let segmentation = match seg {
            Some(names) => {
                let segments = names
                    .into_iter()
                    .map(|(start, end, n)| Segment {
                        unit: lexicon.id(&n).expect("name collected above"),
                        start,
                        end,
                    })
                    .collect();
                Some(
                    Segmentation::new(segments)
                        .map_err(|e| Error::Manifest(format!("clip `{}`: {e}", rec.id)))?,
                )
            }
            None => None,
        };
        let transcript = tr.map(|names| {
            Transcript(names.iter().map(|n| lexicon.id(n).expect("name collected above")).collect())
        });
        clips.push(Clip {
            id: rec.id.clone(),
            features: resolve(&rec.features),
            segmentation,
            transcript,
            activity: rec.activity.clone(),
            frame_rate: file.frame_rate,
        });
    }

    let manifest = DatasetManifest {
        root: root.to_path_buf(),
        lexicon,
        clips,
        splits: file.splits,
    };
    manifest.validate()?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn lex() -> UnitLexicon {
        UnitLexicon::new(vec!["A".into(), "B".into(), "SIL".into()], "SIL").unwrap()
    }

    #[test]
    fn transcript_keeps_adjacent_duplicates() {
        let l = lex();
        let (a, sil) = (l.id("A").unwrap(), l.silence());
        let seg = Segmentation::new(vec![
            Segment { unit: sil, start: 0, end: 9 },
            Segment { unit: a, start: 10, end: 19 },
            Segment { unit: sil, start: 20, end: 29 },
        ])
        .unwrap();
        assert_eq!(segmentation_to_transcript(&seg).0, vec![sil, a, sil]);

        let seg = Segmentation::new(vec![
            Segment { unit: a, start: 0, end: 4 },
            Segment { unit: a, start: 5, end: 9 },
        ])
        .unwrap();
        assert_eq!(seg.to_transcript().0, vec![a, a]);

        let seg = Segmentation::new(vec![Segment { unit: sil, start: 0, end: 99 }]).unwrap();
        assert_eq!(seg.to_transcript().0, vec![sil]);
    }

    #[test]
    fn frame_labels_checks_coverage() {
        let seg = Segmentation::new(vec![
            Segment { unit: 0, start: 0, end: 1 },
            Segment { unit: 1, start: 2, end: 3 },
        ])
        .unwrap();
        assert_eq!(frame_labels(&seg, 4).unwrap(), vec![0, 0, 1, 1]);

        let short = Segmentation::new(vec![Segment { unit: 0, start: 0, end: 1 }]).unwrap();
        assert!(matches!(frame_labels(&short, 4), Err(Error::Coverage { covered: 2, expected: 4 })));

        let one = Segmentation::new(vec![Segment { unit: 0, start: 0, end: 0 }]).unwrap();
        assert_eq!(frame_labels(&one, 1).unwrap(), vec![0]);
    }

    #[test]
    fn gaps_and_overlaps_rejected() {
        assert!(Segmentation::new(vec![Segment { unit: 0, start: 1, end: 3 }]).is_err());
        assert!(Segmentation::new(vec![
            Segment { unit: 0, start: 0, end: 3 },
            Segment { unit: 1, start: 5, end: 6 },
        ])
        .is_err());
        assert!(Segmentation::new(vec![
            Segment { unit: 0, start: 0, end: 3 },
            Segment { unit: 1, start: 3, end: 6 },
        ])
        .is_err());
    }

    #[test]
    fn feature_parsing() {
        let seq = parse_features("1 2\n3 4\n5 6\n", "c", 15.0).unwrap();
        assert_eq!((seq.len(), seq.dim()), (3, 2));
        assert_eq!(seq.frame(2), &[5.0, 6.0]);

        let err = parse_features("1 2\n3\n5 6\n", "c", 15.0).unwrap_err();
        assert!(err.to_string().contains("dimension mismatch"), "{err}");

        let err = parse_features("1 NaN\n", "c", 15.0).unwrap_err();
        assert!(matches!(err, Error::NonFinite { frame: 0, dim: 1 }));

        assert!(parse_features("\n\n", "c", 15.0).is_err());
    }

    #[test]
    fn segmentation_text_round_trip() {
        let l = lex();
        let text = "0 3 SIL\n4 9 A\n10 12 SIL\n";
        let seg = Segmentation::parse(text, &l, "t").unwrap();
        assert_eq!(seg.to_text(&l), text);
        assert!(Segmentation::parse("0 3 XYZ\n", &l, "t").is_err());
        assert!(Segmentation::parse("0 3\n", &l, "t").is_err());
    }

    #[test]
    fn lexicon_rejects_bad_names() {
        assert!(UnitLexicon::new(vec!["a b".into(), "SIL".into()], "SIL").is_err());
        assert!(UnitLexicon::new(vec!["A".into(), "A".into(), "SIL".into()], "SIL").is_err());
        assert!(UnitLexicon::new(vec!["A".into()], "SIL").is_err());
    }

    #[test]
    fn lexicon_serde_round_trip() {
        let mut l = lex();
        l.set_sample_count(0, 12);
        let json = serde_json::to_string(&l).unwrap();
        let back: UnitLexicon = serde_json::from_str(&json).unwrap();
        assert_eq!(back, l);
        assert_eq!(back.id("B"), Some(1));
    }

    proptest! {
        #[test]
        fn labels_round_trip(labels in proptest::collection::vec(0usize..4, 1..60)) {
            let seg = Segmentation::from_labels(&labels);
            prop_assert!(Segmentation::new(seg.segments().to_vec()).is_ok());
            prop_assert_eq!(seg.frame_labels(labels.len()).unwrap(), labels);
        }

        #[test]
        fn transcript_length_matches_segments(lens in proptest::collection::vec((0usize..3, 1usize..5), 1..20)) {
            let mut segments = Vec::new();
            let mut start = 0;
            for (unit, len) in lens {
                segments.push(Segment { unit, start, end: start + len - 1 });
                start += len;
            }
            let seg = Segmentation::new(segments).unwrap();
            prop_assert_eq!(seg.to_transcript().len(), seg.len());
        }
    }
}

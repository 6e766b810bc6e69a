//! Training orchestration: sample balancing, supervised training, bootstrapping
//! from transcripts, unit splitting and mirrored augmentation.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;
use std::sync::Arc;

use log::warn;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datamodel::{Clip, DatasetManifest, FeatureSequence, Segment, Segmentation, Transcript, UnitId, UnitLexicon};
use crate::decoder::force_align;
use crate::error::{Error, Result};
use crate::gmm::variance_floor;
use crate::grammar::{build_grammar, export_ebnf, parse_ebnf, Grammar};
use crate::hmm::{baum_welch, init_hmm, viterbi_train, HmmSet, InitOptions, UnitHmm};

/// Derives an independent stream seed (splitmix64 finalizer).
pub fn sub_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceConfig {
    pub lower: usize,
    pub upper: usize,
    /// Jitter standard deviation as a fraction of the unit's per-dimension std.
    pub jitter_scale: f64,
    pub seed: u64,
}

impl Default for BalanceConfig {
    fn default() -> Self {
        Self {
            lower: 50,
            upper: 80,
            jitter_scale: 0.01,
            seed: 0,
        }
    }
}

impl BalanceConfig {
    fn validate(&self) -> Result<()> {
        if self.lower == 0 || self.lower > self.upper {
            return Err(Error::Config(format!(
                "balance bounds must satisfy 1 <= lower <= upper, got {}..{}",
                self.lower, self.upper
            )));
        }
        if self.jitter_scale.is_nan() || self.jitter_scale < 0.0 {
            return Err(Error::Config("jitter scale must be non-negative".into()));
        }
        Ok(())
    }
}

/// Brings one unit's sample count into `[lower, upper]`: jittered copies of
/// random originals below, seeded subset above.
pub fn balance_samples(samples: &[FeatureSequence], cfg: &BalanceConfig, rng: &mut impl Rng) -> Result<Vec<FeatureSequence>> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(Error::TooFewSamples { needed: 1, got: 0 });
    }
    let n = samples.len();
    if n > cfg.upper {
        let mut keep = index::sample(rng, n, cfg.upper).into_vec();
        keep.sort_unstable();
        return Ok(keep.into_iter().map(|i| samples[i].clone()).collect());
    }
    let mut out = samples.to_vec();
    if n >= cfg.lower {
        return Ok(out);
    }
    let frames: Vec<&[f64]> = samples.iter().flat_map(FeatureSequence::frames).collect();
    let (_, var) = crate::math::mean_and_variance(&frames);
    let sigma: Vec<f64> = var.iter().map(|v| v.sqrt() * cfg.jitter_scale).collect();
    for copy in 0..cfg.lower - n {
        let src = &samples[rng.random_range(0..n)];
        let mut data = src.as_flat().to_vec();
        for (i, x) in data.iter_mut().enumerate() {
            let s = sigma[i % src.dim()];
            if s > 0.0 {
                *x += Normal::new(0.0, s).expect("finite sigma").sample(rng);
            }
        }
        let id = format!("{}~{copy}", src.clip_id());
        out.push(FeatureSequence::from_flat(id, src.dim(), data, src.frame_rate())?);
    }
    Ok(out)
}

pub fn balance_units(
    samples: &BTreeMap<UnitId, Vec<FeatureSequence>>,
    cfg: &BalanceConfig,
    lexicon: &UnitLexicon,
) -> Result<BTreeMap<UnitId, Vec<FeatureSequence>>> {
    samples
        .iter()
        .map(|(&u, s)| {
            if s.is_empty() {
                return Err(Error::UntrainedUnits(lexicon.name(u).to_string()));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(cfg.seed, u as u64));
            Ok((u, balance_samples(s, cfg, &mut rng)?))
        })
        .collect()
}

/// Per-dimension permutation and sign flip: `out[d] = sign[d] * x[perm[d]]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionMap {
    pub perm: Vec<usize>,
    pub sign: Vec<f64>,
}

impl DimensionMap {
    pub fn identity(dim: usize) -> Self {
        Self {
            perm: (0..dim).collect(),
            sign: vec![1.0; dim],
        }
    }

    pub fn new(perm: Vec<usize>, sign: Vec<f64>) -> Result<Self> {
        if perm.len() != sign.len() {
            return Err(Error::DimensionMismatch {
                expected: perm.len(),
                got: sign.len(),
            });
        }
        let distinct: BTreeSet<usize> = perm.iter().copied().collect();
        if distinct.len() != perm.len() || perm.iter().any(|&p| p >= perm.len()) {
            return Err(Error::Config("dimension map is not a permutation".into()));
        }
        if sign.iter().any(|&s| s != 1.0 && s != -1.0) {
            return Err(Error::Config("dimension map signs must be +1 or -1".into()));
        }
        Ok(Self { perm, sign })
    }

    pub fn dim(&self) -> usize {
        self.perm.len()
    }
}

pub fn mirror_features(seq: &FeatureSequence, map: &DimensionMap) -> Result<FeatureSequence> {
    if map.dim() != seq.dim() {
        return Err(Error::DimensionMismatch {
            expected: map.dim(),
            got: seq.dim(),
        });
    }
    let mut data = Vec::with_capacity(seq.as_flat().len());
    for x in seq.frames() {
        data.extend(map.perm.iter().zip(&map.sign).map(|(&p, &s)| s * x[p]));
    }
    FeatureSequence::from_flat(seq.clip_id(), seq.dim(), data, seq.frame_rate())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Mixture components per HMM state.
    pub k: usize,
    pub seed: u64,
    pub balance: Option<BalanceConfig>,
    pub em_iters: usize,
    pub viterbi_iters: usize,
    pub baum_welch_iters: usize,
    pub tol: f64,
    /// Adds a mirrored copy of every training clip.
    pub mirror: Option<DimensionMap>,
}

impl TrainConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        Self {
            k,
            seed,
            balance: Some(BalanceConfig {
                seed: sub_seed(seed, 0xBA1A),
                ..Default::default()
            }),
            em_iters: 20,
            viterbi_iters: 10,
            baum_welch_iters: 10,
            tol: 1e-3,
            mirror: None,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("K must be at least 1".into()));
        }
        if let Some(b) = &self.balance {
            b.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSummary {
    pub annotated: usize,
    pub transcript_only: usize,
    pub rounds: usize,
}

pub const BUNDLE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleConfig {
    pub version: u32,
    pub split: Option<String>,
    pub train: TrainConfig,
    pub bootstrap: Option<BootstrapSummary>,
}

/// Everything needed to decode: unit models (with priors) and the grammar.
#[derive(Debug, Clone)]
pub struct ModelBundle {
    pub hmms: Arc<HmmSet>,
    pub grammar: Grammar,
    pub config: BundleConfig,
}

#[derive(Serialize, Deserialize)]
struct PriorEntry {
    count: usize,
    log_prior: Option<f64>,
}

impl ModelBundle {
    pub fn lexicon(&self) -> &UnitLexicon {
        &self.hmms.lexicon
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let lex = self.lexicon();
        let priors: BTreeMap<&str, PriorEntry> = self
            .hmms
            .units()
            .map(|u| {
                let lp = lex.log_prior(u);
                (
                    lex.name(u),
                    PriorEntry {
                        count: lex.sample_count(u),
                        log_prior: lp.is_finite().then_some(lp),
                    },
                )
            })
            .collect();
        let files = [
            ("hmms.json", self.hmms.to_json()?),
            ("grammar.ebnf", export_ebnf(&self.grammar, lex)),
            ("priors.json", serde_json::to_string_pretty(&priors)?),
            ("pipeline-config.json", serde_json::to_string_pretty(&self.config)?),
        ];
        for (name, body) in files {
            let path = dir.join(name);
            fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let read = |name: &str| {
            let path = dir.join(name);
            fs::read_to_string(&path).map_err(|e| Error::io(&path, e))
        };
        let hmms = HmmSet::from_json(&read("hmms.json")?)?;
        let grammar = parse_ebnf(&read("grammar.ebnf")?, &hmms.lexicon)?;
        let config: BundleConfig = serde_json::from_str(&read("pipeline-config.json")?)?;
        if config.version != BUNDLE_VERSION {
            return Err(Error::Data(format!("unsupported bundle version {}", config.version)));
        }
        Ok(Self {
            hmms: Arc::new(hmms),
            grammar,
            config,
        })
    }
}

/// Loads features of the given clips in parallel, preserving order.
pub fn load_clips(clips: &[&Clip]) -> Result<Vec<FeatureSequence>> {
    clips.par_iter().map(|c| c.load_features()).collect()
}

fn cut_segments(
    seq: &FeatureSequence,
    seg: &Segmentation,
    out: &mut BTreeMap<UnitId, Vec<FeatureSequence>>,
) -> Result<()> {
    for (i, s) in seg.segments().iter().enumerate() {
        let piece = seq.slice(s.start, s.end)?.with_clip_id(format!("{}:{i}", seq.clip_id()));
        out.entry(s.unit).or_default().push(piece);
    }
    Ok(())
}

/// Trains one HMM per unit in `segments`. With `warm`, existing models are
/// re-estimated instead of initialized from scratch.
fn train_units(
    segments: &BTreeMap<UnitId, Vec<FeatureSequence>>,
    lexicon: &UnitLexicon,
    cfg: &TrainConfig,
    warm: Option<&HmmSet>,
) -> Result<HmmSet> {
    let all: Vec<&[f64]> = segments.values().flatten().flat_map(FeatureSequence::frames).collect();
    if all.is_empty() {
        return Err(Error::Data("no training frames".into()));
    }
    let floor = variance_floor(&all);
    let units: Vec<(&UnitId, &Vec<FeatureSequence>)> = segments.iter().collect();
    let hmms: Vec<UnitHmm> = units
        .par_iter()
        .map(|&(&u, samples)| -> Result<UnitHmm> {
            let samples = match &cfg.balance {
                Some(b) => {
                    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(b.seed, u as u64));
                    balance_samples(samples, b, &mut rng)?
                }
                None => samples.clone(),
            };
            let start = match warm.and_then(|w| w.get(u)) {
                Some(h) => h.clone(),
                None => {
                    let opts = InitOptions {
                        k: cfg.k,
                        seed: sub_seed(cfg.seed, u as u64),
                        em_iters: cfg.em_iters,
                        var_floor: Some(floor.clone()),
                    };
                    init_hmm(u, &samples, &opts)?
                }
            };
            let vt = viterbi_train(&start, &samples, cfg.viterbi_iters, cfg.tol)?;
            let bw = baum_welch(&vt.hmm, &samples, cfg.baum_welch_iters, cfg.tol)?;
            Ok(bw.hmm)
        })
        .collect::<Result<_>>()
        .map_err(|e| match e {
            Error::NoPath(m) => Error::Data(format!("training failed: {m}")),
            e => e,
        })?;
    let mut lexicon = lexicon.clone();
    for (&u, samples) in segments {
        lexicon.set_sample_count(u, samples.len());
    }
    HmmSet::new(lexicon, hmms)
}

fn require_clip_segmentation(clip: &Clip) -> Result<&Segmentation> {
    clip.segmentation
        .as_ref()
        .ok_or_else(|| Error::Manifest(format!("clip `{}` has no frame-level annotation", clip.id)))
}

fn collect_segments(
    clips: &[&Clip],
    seqs: &[FeatureSequence],
    mirror: Option<&DimensionMap>,
) -> Result<BTreeMap<UnitId, Vec<FeatureSequence>>> {
    let mut segments = BTreeMap::new();
    for (clip, seq) in clips.iter().zip(seqs) {
        let seg = require_clip_segmentation(clip)?;
        cut_segments(seq, seg, &mut segments)?;
        if let Some(map) = mirror {
            let m = mirror_features(seq, map)?.with_clip_id(format!("{}~mirror", clip.id));
            cut_segments(&m, seg, &mut segments)?;
        }
    }
    Ok(segments)
}

fn transcripts_of(clips: &[&Clip]) -> Result<Vec<(String, Transcript)>> {
    clips
        .iter()
        .map(|c| {
            c.transcript()
                .map(|t| (c.activity.clone(), t))
                .ok_or_else(|| Error::Manifest(format!("clip `{}` has neither annotation nor transcript", c.id)))
        })
        .collect()
}

fn check_trained(required: &BTreeSet<UnitId>, segments: &BTreeMap<UnitId, Vec<FeatureSequence>>, lex: &UnitLexicon) -> Result<()> {
    let mut missing: Vec<&str> = required
        .iter()
        .filter(|u| !segments.contains_key(u))
        .map(|&u| lex.name(u))
        .collect();
    missing.sort_unstable();
    if missing.is_empty() {
        Ok(())
    } else {
        Err(Error::UntrainedUnits(missing.join(", ")))
    }
}

/// Trains unit models on the annotated clips of a split and builds the
/// grammar from their transcripts.
pub fn train_supervised(manifest: &DatasetManifest, split: &str, cfg: &TrainConfig) -> Result<ModelBundle> {
    let sp = manifest.split(split)?;
    let train = manifest.clips_by_id(&sp.train)?;
    let seqs = load_clips(&train)?;
    train_supervised_on(manifest, split, cfg, &seqs)
}

/// As [`train_supervised`] with the training clips' features already in
/// memory, in split order.
pub fn train_supervised_on(
    manifest: &DatasetManifest,
    split: &str,
    cfg: &TrainConfig,
    seqs: &[FeatureSequence],
) -> Result<ModelBundle> {
    cfg.validate()?;
    let sp = manifest.split(split)?;
    if sp.train.is_empty() {
        return Err(Error::Manifest(format!("split `{split}` has no training clips")));
    }
    let train = manifest.clips_by_id(&sp.train)?;
    let test = manifest.clips_by_id(&sp.test)?;
    if seqs.len() != train.len() {
        return Err(Error::Data(format!(
            "{} feature sequences for {} training clips",
            seqs.len(),
            train.len()
        )));
    }
    for (clip, seq) in train.iter().zip(seqs) {
        if let Some(seg) = &clip.segmentation {
            if seg.num_frames() != seq.len() {
                return Err(Error::Coverage {
                    covered: seg.num_frames(),
                    expected: seq.len(),
                });
            }
        }
    }
    let segments = collect_segments(&train, seqs, cfg.mirror.as_ref())?;
    let transcripts = transcripts_of(&train)?;
    let mut required: BTreeSet<UnitId> = transcripts.iter().flat_map(|(_, t)| t.0.iter().copied()).collect();
    required.extend(test.iter().filter_map(|c| c.transcript()).flat_map(|t| t.0));
    check_trained(&required, &segments, &manifest.lexicon)?;

    let hmms = train_units(&segments, &manifest.lexicon, cfg, None)?;
    let grammar = build_grammar(&transcripts, manifest.lexicon.silence())?;
    Ok(ModelBundle {
        hmms: Arc::new(hmms),
        grammar,
        config: BundleConfig {
            version: BUNDLE_VERSION,
            split: Some(split.to_string()),
            train: cfg.clone(),
            bootstrap: None,
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub annotated: Vec<String>,
    pub transcripts: Vec<String>,
    pub rounds: usize,
}

impl BootstrapConfig {
    pub fn new(annotated: Vec<String>, transcripts: Vec<String>) -> Self {
        Self {
            annotated,
            transcripts,
            rounds: 1,
        }
    }
}

/// Picks clips in id order until every unit has `per_unit` annotated samples
/// (or all its samples). Returns `(annotated, rest)`.
pub fn select_annotated(manifest: &DatasetManifest, clip_ids: &[String], per_unit: usize) -> Result<(Vec<String>, Vec<String>)> {
    let mut ids: Vec<&String> = clip_ids.iter().collect();
    ids.sort();
    let mut counts: BTreeMap<UnitId, usize> = BTreeMap::new();
    let (mut annotated, mut rest) = (Vec::new(), Vec::new());
    for id in ids {
        let clip = manifest.clip(id)?;
        let seg = require_clip_segmentation(clip)?;
        let useful = seg.segments().iter().any(|s| counts.get(&s.unit).copied().unwrap_or(0) < per_unit);
        if useful {
            for s in seg.segments() {
                *counts.entry(s.unit).or_default() += 1;
            }
            annotated.push(id.clone());
        } else {
            rest.push(id.clone());
        }
    }
    Ok((annotated, rest))
}

/// Trains on the annotated clips, aligns the transcript-only clips with the
/// resulting models and re-estimates on the union.
pub fn bootstrap(manifest: &DatasetManifest, bcfg: &BootstrapConfig, cfg: &TrainConfig) -> Result<ModelBundle> {
    cfg.validate()?;
    let annotated_ids: BTreeSet<&String> = bcfg.annotated.iter().collect();
    if let Some(id) = bcfg.transcripts.iter().find(|id| annotated_ids.contains(id)) {
        return Err(Error::Config(format!("clip `{id}` is both annotated and transcript-only")));
    }
    if bcfg.annotated.is_empty() {
        return Err(Error::Config("bootstrapping needs at least one annotated clip".into()));
    }
    let annotated = manifest.clips_by_id(&bcfg.annotated)?;
    let seqs = load_clips(&annotated)?;
    let segments = collect_segments(&annotated, &seqs, cfg.mirror.as_ref())?;
    let mut transcripts = transcripts_of(&annotated)?;
    let required: BTreeSet<UnitId> = transcripts.iter().flat_map(|(_, t)| t.0.iter().copied()).collect();
    check_trained(&required, &segments, &manifest.lexicon)?;
    let mut hmms = train_units(&segments, &manifest.lexicon, cfg, None)?;

    let summary = BootstrapSummary {
        annotated: bcfg.annotated.len(),
        transcript_only: bcfg.transcripts.len(),
        rounds: bcfg.rounds,
    };
    if !bcfg.transcripts.is_empty() && bcfg.rounds > 0 {
        let extra = manifest.clips_by_id(&bcfg.transcripts)?;
        let extra_transcripts = transcripts_of(&extra)?;
        let missing: BTreeSet<&str> = extra_transcripts
            .iter()
            .flat_map(|(_, t)| t.0.iter().copied())
            .filter(|&u| hmms.get(u).is_none())
            .map(|u| manifest.lexicon.name(u))
            .collect();
        if !missing.is_empty() {
            return Err(Error::MissingModel(missing.into_iter().collect::<Vec<_>>().join(", ")));
        }
        let extra_seqs = load_clips(&extra)?;
        for _ in 0..bcfg.rounds {
            let shared = Arc::new(hmms.clone());
            let aligned: Vec<Option<Segmentation>> = extra_seqs
                .par_iter()
                .zip(&extra_transcripts)
                .map(|(seq, (_, t))| match force_align(shared.clone(), t, seq) {
                    Ok(r) => Ok(Some(r.segmentation)),
                    Err(e) if e.is_decode_failure() => {
                        warn!("clip {}: alignment failed, skipped: {e}", seq.clip_id());
                        Ok(None)
                    }
                    Err(e) => Err(e),
                })
                .collect::<Result<_>>()?;
            let mut union = segments.clone();
            for (seq, seg) in extra_seqs.iter().zip(&aligned) {
                if let Some(seg) = seg {
                    cut_segments(seq, seg, &mut union)?;
                    if let Some(map) = &cfg.mirror {
                        let m = mirror_features(seq, map)?.with_clip_id(format!("{}~mirror", seq.clip_id()));
                        cut_segments(&m, seg, &mut union)?;
                    }
                }
            }
            hmms = train_units(&union, &manifest.lexicon, cfg, Some(&hmms))?;
        }
        transcripts.extend(extra_transcripts);
    }
    let grammar = build_grammar(&transcripts, manifest.lexicon.silence())?;
    Ok(ModelBundle {
        hmms: Arc::new(hmms),
        grammar,
        config: BundleConfig {
            version: BUNDLE_VERSION,
            split: None,
            train: cfg.clone(),
            bootstrap: Some(summary),
        },
    })
}

/// Name of part `i` (1-based) of a split unit.
pub fn part_name(unit: &str, i: usize) -> String {
    format!("{unit}#{i}")
}

/// Divides every non-silence segment into `k` equal spans `unit#1..unit#k`,
/// the remainder going to the last span. Segments shorter than `k` frames get
/// one part per frame.
pub fn split_units(manifest: &DatasetManifest, k: usize) -> Result<DatasetManifest> {
    if k == 0 {
        return Err(Error::Config("number of parts must be at least 1".into()));
    }
    if k == 1 {
        return Ok(manifest.clone());
    }
    let old = &manifest.lexicon;
    let sil = old.silence();
    let mut names = Vec::new();
    let mut parts: Vec<Vec<UnitId>> = Vec::with_capacity(old.len());
    for (u, name) in old.names().iter().enumerate() {
        if u == sil {
            parts.push(vec![names.len()]);
            names.push(name.clone());
        } else {
            parts.push((names.len()..names.len() + k).collect());
            names.extend((1..=k).map(|i| part_name(name, i)));
        }
    }
    let lexicon = UnitLexicon::new(names, old.name(sil))?;

    let mut clips = Vec::with_capacity(manifest.clips.len());
    for clip in &manifest.clips {
        let segmentation = match &clip.segmentation {
            Some(seg) => {
                let mut out = Vec::new();
                for s in seg.segments() {
                    let ids = &parts[s.unit];
                    let len = s.len();
                    let pieces = ids.len().min(len);
                    if pieces < ids.len() {
                        warn!(
                            "clip {}: segment {}..{} of `{}` has {len} frames, split into {pieces} parts",
                            clip.id,
                            s.start,
                            s.end,
                            old.name(s.unit)
                        );
                    }
                    let base = len / pieces;
                    let mut start = s.start;
                    for (i, &unit) in ids[..pieces].iter().enumerate() {
                        let end = if i + 1 == pieces { s.end } else { start + base - 1 };
                        out.push(Segment { unit, start, end });
                        start = end + 1;
                    }
                }
                Some(Segmentation::new(out)?)
            }
            None => None,
        };
        let transcript = clip
            .transcript
            .as_ref()
            .map(|t| Transcript(t.0.iter().flat_map(|&u| parts[u].iter().copied()).collect()));
        clips.push(Clip {
            segmentation,
            transcript,
            ..clip.clone()
        });
    }
    Ok(DatasetManifest {
        root: manifest.root.clone(),
        lexicon,
        clips,
        splits: manifest.splits.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamodel::FeatureSequence;
    use std::path::PathBuf;

    fn samples(n: usize, len: usize) -> Vec<FeatureSequence> {
        (0..n)
            .map(|i| {
                let frames: Vec<Vec<f64>> = (0..len).map(|t| vec![i as f64, t as f64]).collect();
                FeatureSequence::new(format!("s{i}"), &frames, 15.0).unwrap()
            })
            .collect()
    }

    #[test]
    fn balancing_bounds() {
        let cfg = BalanceConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(balance_samples(&samples(120, 3), &cfg, &mut rng).unwrap().len(), 80);
        let up = balance_samples(&samples(30, 3), &cfg, &mut rng).unwrap();
        assert_eq!(up.len(), 50);
        assert_eq!(&up[..30], &samples(30, 3)[..]);
        // copies stay close to some original
        for s in &up[30..] {
            let src: usize = s.clip_id()[1..].split('~').next().unwrap().parse().unwrap();
            for (a, b) in s.as_flat().iter().zip(samples(30, 3)[src].as_flat()) {
                assert!((a - b).abs() < 0.2);
            }
        }
        assert_eq!(balance_samples(&samples(65, 3), &cfg, &mut rng).unwrap(), samples(65, 3));
        assert!(balance_samples(&[], &cfg, &mut rng).is_err());
        let bad = BalanceConfig { lower: 10, upper: 5, ..cfg };
        assert!(balance_samples(&samples(3, 3), &bad, &mut rng).is_err());
    }

    #[test]
    fn balancing_is_seeded() {
        let lex = UnitLexicon::new(vec!["SIL".into(), "a".into()], "SIL").unwrap();
        let input = BTreeMap::from([(0, samples(10, 4)), (1, samples(100, 2))]);
        let cfg = BalanceConfig { seed: 7, ..Default::default() };
        let a = balance_units(&input, &cfg, &lex).unwrap();
        let b = balance_units(&input, &cfg, &lex).unwrap();
        assert_eq!(a, b);
        assert_eq!(a[&0].len(), 50);
        assert_eq!(a[&1].len(), 80);
        let empty = BTreeMap::from([(1, Vec::new())]);
        match balance_units(&empty, &cfg, &lex) {
            Err(Error::UntrainedUnits(name)) => assert_eq!(name, "a"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn mirroring() {
        let seq = &samples(1, 4)[0];
        assert_eq!(&mirror_features(seq, &DimensionMap::identity(2)).unwrap(), seq);
        let flip = DimensionMap::new(vec![1, 0], vec![-1.0, 1.0]).unwrap();
        let once = mirror_features(seq, &flip).unwrap();
        assert_eq!(once.frame(2), &[-2.0, 0.0]);
        let sign_only = DimensionMap::new(vec![0, 1], vec![-1.0, -1.0]).unwrap();
        let twice = mirror_features(&mirror_features(seq, &sign_only).unwrap(), &sign_only).unwrap();
        assert_eq!(&twice, seq);
        assert!(mirror_features(seq, &DimensionMap::identity(3)).is_err());
        assert!(DimensionMap::new(vec![0, 0], vec![1.0, 1.0]).is_err());
    }

    fn manifest_with(segments: Vec<Vec<(UnitId, usize, usize)>>, names: &[&str]) -> DatasetManifest {
        let lexicon = UnitLexicon::new(names.iter().map(|s| s.to_string()).collect(), names[0]).unwrap();
        let clips = segments
            .into_iter()
            .enumerate()
            .map(|(i, segs)| Clip {
                id: format!("c{i}"),
                features: PathBuf::from("unused"),
                segmentation: Some(
                    Segmentation::new(segs.into_iter().map(|(unit, start, end)| Segment { unit, start, end }).collect())
                        .unwrap(),
                ),
                transcript: None,
                activity: "act".into(),
                frame_rate: 15.0,
            })
            .collect();
        DatasetManifest {
            root: PathBuf::new(),
            lexicon,
            clips,
            splits: BTreeMap::new(),
        }
    }

    #[test]
    fn split_remainder_goes_last() {
        let m = manifest_with(vec![vec![(0, 0, 1), (1, 2, 11), (0, 12, 13)]], &["SIL", "A"]);
        let s = split_units(&m, 3).unwrap();
        assert_eq!(s.lexicon.names(), &["SIL", "A#1", "A#2", "A#3"]);
        let lens: Vec<usize> = s.clips[0].segmentation.as_ref().unwrap().segments().iter().map(Segment::len).collect();
        assert_eq!(lens, vec![2, 3, 3, 4, 2]);
        assert_eq!(s.clips[0].segmentation.as_ref().unwrap().num_frames(), 14);
        assert_eq!(split_units(&m, 1).unwrap(), m);
    }

    #[test]
    fn split_short_segment() {
        let m = manifest_with(vec![vec![(0, 0, 0), (1, 1, 2), (0, 3, 3)]], &["SIL", "A"]);
        let s = split_units(&m, 5).unwrap();
        let seg = s.clips[0].segmentation.as_ref().unwrap();
        assert_eq!(seg.to_transcript().names(&s.lexicon), vec!["SIL", "A#1", "A#2", "SIL"]);
        assert_eq!(seg.num_frames(), 4);
    }

    #[test]
    fn split_multiplies_unit_inventory() {
        let mut names = vec!["SIL".to_string()];
        names.extend((0..48).map(|i| format!("u{i:02}")));
        let refs: Vec<&str> = names.iter().map(String::as_str).collect();
        let m = manifest_with(vec![vec![(0, 0, 9)]], &refs);
        let s = split_units(&m, 5).unwrap();
        assert_eq!(s.lexicon.len() - 1, 240);
    }

    #[test]
    fn sub_seeds_differ() {
        let seeds: BTreeSet<u64> = (0..100).map(|i| sub_seed(42, i)).collect();
        assert_eq!(seeds.len(), 100);
        assert_eq!(sub_seed(1, 2), sub_seed(1, 2));
    }
}

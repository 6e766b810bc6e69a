use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use unitseg::datamodel::{
    features_to_text, load_manifest, ClipRecord, DatasetManifest, FeatureSequence, ManifestFile, Segment, Segmentation,
    Transcript, UnitId, UnitLexicon, MANIFEST_VERSION,
};
use unitseg::decoder::{
    decode, force_align, majority_vote, ClassifyMode, DecodeOptions, DecodeReport, DecodeResult, Recognizer,
};
use unitseg::eval::{accuracy, jaccard_labels, moc, mof, rows_to_csv, JaccardOptions, MetricRow};
use unitseg::features::{FeatureModel, PipelineFitOptions, DEFAULT_WINDOW};
use unitseg::grammar::{unconstrained_graph, ComposeOptions};
use unitseg::pipeline::{
    bootstrap, load_clips, mirror_features, select_annotated, split_units, sub_seed, train_supervised,
    train_supervised_on, BootstrapConfig, DimensionMap, ModelBundle, TrainConfig,
};
use unitseg::synth::{generate, write_dataset, SynthSpec};
use unitseg::Error;

const DEFAULT_K: usize = 16;
const DEFAULT_SEED: u64 = 0;

#[derive(Parser)]
#[command(name = "unitseg", version, about = "Action-unit HMM training, decoding and evaluation")]
struct Cli {
    /// JSON file with defaults for the common flags.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset with exact ground truth.
    Synth(SynthArgs),
    /// Fit the PCA / Fisher-vector feature transform and re-encode a dataset.
    Encode(EncodeArgs),
    /// Train unit HMMs and the grammar on a split.
    Train(TrainArgs),
    /// Decode clips into activity, transcript and segmentation.
    Decode(DecodeArgs),
    /// Classify clips (activities via the grammar, or isolated units).
    Classify(ClassifyArgs),
    /// Align clips to their known transcripts.
    Align(AlignArgs),
    /// Train from a few annotated clips plus transcripts.
    Bootstrap(BootstrapArgs),
    /// Compare two directories of segmentation files.
    Eval(EvalArgs),
    /// Run a K x D' parameter grid and vote over the hypotheses.
    Grid(GridArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum OnOff {
    On,
    Off,
}

impl OnOff {
    fn get(self) -> bool {
        self == OnOff::On
    }
}

#[derive(Args)]
struct DataArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    split: String,
}

#[derive(Args)]
struct SynthArgs {
    /// Generator parameters as JSON; fields not given take their defaults.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    clips_per_activity: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EncodeArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Output dimension of the final PCA.
    #[arg(long)]
    pca_dim: Option<usize>,
    /// Dimension of the first PCA (clamped to the input dimension).
    #[arg(long, default_value_t = 64)]
    base_dim: usize,
    /// Mixture components of the Fisher-vector codebook.
    #[arg(long, default_value_t = 64)]
    fv_k: usize,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    signed_sqrt: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainOpts {
    /// Mixture components per HMM state.
    #[arg(long)]
    gmm_k: Option<usize>,
    #[arg(long)]
    no_balance: bool,
    #[arg(long)]
    viterbi_iters: Option<usize>,
    #[arg(long)]
    bw_iters: Option<usize>,
    /// Split every non-silence unit into this many sub-units first.
    #[arg(long)]
    split_units: Option<usize>,
    /// JSON dimension map; adds a mirrored copy of every training clip.
    #[arg(long)]
    mirror: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    train: TrainOpts,
    /// Bundle directory to create.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ModelArgs {
    /// Bundle directory produced by `train` or `bootstrap`.
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    /// Restrict to these clips instead of the split's test clips.
    #[arg(long = "clip")]
    clips: Vec<String>,
}

#[derive(Args)]
struct DecodeArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    beam: Option<f64>,
    /// Add the -ln N(u) unit prior on every unit entry.
    #[arg(long)]
    prior: Option<OnOff>,
    /// Ignore the grammar: any unit may follow any unit.
    #[arg(long)]
    free: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Level {
    Activity,
    Unit,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Union,
    Separate,
}

#[derive(Args)]
struct ClassifyArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, value_enum, default_value_t = Level::Activity)]
    level: Level,
    #[arg(long, value_enum, default_value_t = Mode::Union)]
    mode: Mode,
    #[arg(long)]
    beam: Option<f64>,
    #[arg(long)]
    prior: Option<OnOff>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AlignArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BootstrapArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    train: TrainOpts,
    /// Annotated samples per unit kept from the split's training clips; the
    /// remaining training clips contribute only their transcripts.
    #[arg(long, default_value_t = 3)]
    per_unit: usize,
    #[arg(long, default_value_t = 1)]
    rounds: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// Directory of ground-truth segmentation files.
    #[arg(long)]
    gt: PathBuf,
    /// Directory of predicted segmentation files with matching names.
    #[arg(long)]
    pred: PathBuf,
    /// Class left out of the Jaccard mean.
    #[arg(long, default_value = "SIL")]
    background: String,
    /// Pool Jaccard intersections and unions over classes.
    #[arg(long)]
    jaccard_global: bool,
    /// Split label for the CSV rows.
    #[arg(long, default_value = "")]
    split: String,
    /// K label for the CSV rows.
    #[arg(long)]
    gmm_k: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GridArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Comma-separated HMM mixture sizes.
    #[arg(long, value_delimiter = ',')]
    gmm_k: Vec<usize>,
    /// Comma-separated final feature dimensions.
    #[arg(long, value_delimiter = ',')]
    pca_dim: Vec<usize>,
    #[arg(long, default_value_t = 64)]
    base_dim: usize,
    #[arg(long, default_value_t = 64)]
    fv_k: usize,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    beam: Option<f64>,
    /// JSON dimension map; doubles the hypotheses with mirrored features.
    #[arg(long)]
    mirror: Option<PathBuf>,
    /// Majority-vote the hypotheses per frame.
    #[arg(long)]
    vote: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Values a `--config` file may provide; flags take precedence.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    seed: Option<u64>,
    jobs: Option<usize>,
    gmm_k: Option<usize>,
    pca_dim: Option<usize>,
    window: Option<usize>,
    beam: Option<f64>,
    prior: Option<OnOff>,
}

struct Ctx {
    seed: u64,
    file: FileConfig,
}

impl Ctx {
    fn gmm_k(&self, flag: Option<usize>) -> usize {
        flag.or(self.file.gmm_k).unwrap_or(DEFAULT_K)
    }

    fn beam(&self, flag: Option<f64>) -> Option<f64> {
        flag.or(self.file.beam)
    }

    fn prior(&self, flag: Option<OnOff>, default: bool) -> bool {
        flag.or(self.file.prior).map_or(default, OnOff::get)
    }

    fn window(&self, flag: Option<usize>) -> usize {
        flag.or(self.file.window).unwrap_or(DEFAULT_WINDOW)
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> anyhow::Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io { path: path.into(), source: e })?;
    serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
        .map_err(Into::into)
}

fn write_file(path: &Path, body: &str) -> anyhow::Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::Io { path: dir.into(), source: e })?;
    }
    fs::write(path, body).map_err(|e| Error::Io { path: path.into(), source: e })?;
    Ok(())
}

/// Writes `name` under `out`, or prints it when no directory is given.
fn emit(out: Option<&Path>, name: &str, body: &str) -> anyhow::Result<()> {
    match out {
        Some(dir) => write_file(&dir.join(name), body),
        None => {
            print!("{body}");
            if !body.ends_with('\n') {
                println!();
            }
            Ok(())
        }
    }
}

fn to_json<T: Serialize>(value: &T) -> anyhow::Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

fn load_map(path: &Path) -> anyhow::Result<DimensionMap> {
    let raw: DimensionMap = read_json(path)?;
    Ok(DimensionMap::new(raw.perm, raw.sign)?)
}

fn train_config(ctx: &Ctx, opts: &TrainOpts) -> anyhow::Result<TrainConfig> {
    let mut cfg = TrainConfig::new(ctx.gmm_k(opts.gmm_k), ctx.seed);
    if opts.no_balance {
        cfg.balance = None;
    }
    if let Some(n) = opts.viterbi_iters {
        cfg.viterbi_iters = n;
    }
    if let Some(n) = opts.bw_iters {
        cfg.baum_welch_iters = n;
    }
    if let Some(p) = &opts.mirror {
        cfg.mirror = Some(load_map(p)?);
    }
    Ok(cfg)
}

fn load_data(data: &DataArgs, split_parts: Option<usize>) -> anyhow::Result<DatasetManifest> {
    let m = load_manifest(&data.manifest).with_context(|| format!("loading {}", data.manifest.display()))?;
    m.split(&data.split)?;
    Ok(match split_parts {
        Some(k) => split_units(&m, k)?,
        None => m,
    })
}

/// Clip ids to process, sorted.
fn target_clips(m: &DatasetManifest, args: &ModelArgs) -> anyhow::Result<Vec<String>> {
    let mut ids = if args.clips.is_empty() {
        m.split(&args.data.split)?.test.clone()
    } else {
        for id in &args.clips {
            m.clip(id)?;
        }
        args.clips.clone()
    };
    ids.sort();
    ids.dedup();
    if ids.is_empty() {
        bail!(Error::Manifest(format!("split `{}` has no test clips", args.data.split)));
    }
    Ok(ids)
}

/// Relates model units to manifest units. A model trained on split units
/// names parts `unit#i`; each part maps back to its parent.
struct UnitMap {
    to_data: Vec<UnitId>,
    /// Part index of each model unit; 0 for units that were not split.
    part: Vec<usize>,
    parts: Vec<Vec<UnitId>>,
}

impl UnitMap {
    fn new(model: &UnitLexicon, data: &UnitLexicon) -> anyhow::Result<Self> {
        let mut to_data = Vec::with_capacity(model.len());
        let mut part = Vec::with_capacity(model.len());
        let mut parts: Vec<Vec<(usize, UnitId)>> = vec![Vec::new(); data.len()];
        for (id, name) in model.names().iter().enumerate() {
            let (parent, index) = match data.id(name) {
                Some(u) => (u, 0),
                None => name
                    .rsplit_once('#')
                    .and_then(|(base, i)| Some((data.id(base)?, i.parse::<usize>().ok()?)))
                    .ok_or_else(|| Error::Data(format!("model unit `{name}` is not in the manifest")))?,
            };
            to_data.push(parent);
            part.push(index);
            parts[parent].push((index, id));
        }
        let parts = parts
            .into_iter()
            .map(|mut p| {
                p.sort();
                p.into_iter().map(|(_, id)| id).collect()
            })
            .collect();
        Ok(Self { to_data, part, parts })
    }

    /// Maps segments to manifest units, joining consecutive parts of one
    /// split unit. Repeated whole units stay separate segments.
    fn segmentation(&self, seg: &Segmentation) -> anyhow::Result<Segmentation> {
        let mut out: Vec<Segment> = Vec::with_capacity(seg.len());
        let mut last_part = 0;
        for s in seg.segments() {
            let (unit, part) = (self.to_data[s.unit], self.part[s.unit]);
            match out.last_mut() {
                Some(prev) if prev.unit == unit && part > last_part => prev.end = s.end,
                _ => out.push(Segment { unit, ..*s }),
            }
            last_part = part;
        }
        Ok(Segmentation::new(out)?)
    }

    fn transcript(&self, t: &Transcript, data: &UnitLexicon) -> anyhow::Result<Transcript> {
        let mut out = Vec::new();
        for &u in t.units() {
            if self.parts[u].is_empty() {
                bail!(Error::MissingModel(data.name(u).to_string()));
            }
            out.extend(&self.parts[u]);
        }
        Ok(Transcript(out))
    }
}

#[derive(Serialize)]
struct Summary {
    clips: usize,
    mof: f64,
    moc: f64,
    jaccard: f64,
}

/// Frame metrics over clips with ground truth; `None` if any clip lacks it.
fn summarize(m: &DatasetManifest, results: &[(String, Segmentation)]) -> anyhow::Result<Option<Summary>> {
    let mut gt = Vec::new();
    let mut pred = Vec::new();
    for (id, seg) in results {
        let Some(g) = &m.clip(id)?.segmentation else {
            return Ok(None);
        };
        let t = seg.num_frames();
        gt.extend(g.frame_labels(t)?);
        pred.extend(seg.frame_labels(t)?);
    }
    let jopts = JaccardOptions {
        background: Some(m.lexicon.silence()),
        global: false,
    };
    Ok(Some(Summary {
        clips: results.len(),
        mof: mof(&gt, &pred)?,
        moc: moc(&gt, &pred)?,
        jaccard: jaccard_labels(&gt, &pred, jopts).map(|j| j.mean).unwrap_or(0.0),
    }))
}

/// Decoded segmentations in manifest units.
fn map_results(map: &UnitMap, ids: &[String], results: &[DecodeResult]) -> anyhow::Result<Vec<(String, Segmentation)>> {
    ids.iter()
        .zip(results)
        .map(|(id, r)| Ok((id.clone(), map.segmentation(&r.segmentation)?)))
        .collect()
}

fn write_segmentations(dir: &Path, results: &[(String, Segmentation)], lex: &UnitLexicon) -> anyhow::Result<()> {
    for (id, seg) in results {
        write_file(&dir.join("segmentation").join(format!("{id}.txt")), &seg.to_text(lex))?;
    }
    Ok(())
}

fn cmd_synth(ctx: &Ctx, args: &SynthArgs) -> anyhow::Result<()> {
    let mut spec: SynthSpec = match &args.spec {
        Some(p) => read_json(p)?,
        None => SynthSpec::default(),
    };
    spec.seed = ctx.seed;
    if let Some(n) = args.noise {
        spec.noise = n;
    }
    if let Some(n) = args.clips_per_activity {
        spec.clips_per_activity = n;
    }
    let data = generate(&spec)?;
    let path = write_dataset(&data, &spec, &args.out)?;
    eprintln!("wrote {} clips to {}", data.clips.len(), path.display());
    Ok(())
}

fn cmd_encode(ctx: &Ctx, args: &EncodeArgs) -> anyhow::Result<()> {
    let m = load_data(&args.data, None)?;
    let train_ids = &m.split(&args.data.split)?.train;
    let train = load_clips(&m.clips_by_id(train_ids)?)?;
    let dim = train.first().map(FeatureSequence::dim).unwrap_or(0);
    let opts = PipelineFitOptions {
        pca1_dim: args.base_dim.min(dim),
        fv_components: args.fv_k,
        window: ctx.window(args.window),
        pca2_dim: args.pca_dim.or(ctx.file.pca_dim).unwrap_or(64),
        signed_sqrt: args.signed_sqrt,
        seed: ctx.seed,
        ..Default::default()
    };
    let model = FeatureModel::fit(&train, &opts)?;
    let all: Vec<_> = m.clips.iter().collect();
    let encoded: Vec<FeatureSequence> = all
        .par_iter()
        .map(|c| model.encode(&c.load_features()?))
        .collect::<unitseg::Result<_>>()?;

    let out = &args.out;
    let mut records = Vec::with_capacity(all.len());
    for (clip, seq) in all.iter().zip(&encoded) {
        let features = PathBuf::from("features").join(format!("{}.txt", clip.id));
        write_file(&out.join(&features), &features_to_text(seq))?;
        let segmentation = match &clip.segmentation {
            Some(seg) => {
                let p = PathBuf::from("segmentation").join(format!("{}.txt", clip.id));
                write_file(&out.join(&p), &seg.to_text(&m.lexicon))?;
                Some(p)
            }
            None => None,
        };
        let transcript = match &clip.transcript {
            Some(t) => {
                let p = PathBuf::from("transcript").join(format!("{}.txt", clip.id));
                write_file(&out.join(&p), &t.to_text(&m.lexicon))?;
                Some(p)
            }
            None => None,
        };
        records.push(ClipRecord {
            id: clip.id.clone(),
            features,
            segmentation,
            transcript,
            activity: clip.activity.clone(),
        });
    }
    let manifest = ManifestFile {
        version: MANIFEST_VERSION,
        silence: m.lexicon.name(m.lexicon.silence()).to_string(),
        units: Some(m.lexicon.names().to_vec()),
        frame_rate: all[0].frame_rate,
        clips: records,
        splits: m.splits.clone(),
    };
    write_file(&out.join("manifest.json"), &to_json(&manifest)?)?;
    write_file(&out.join("feature-model.json"), &model.to_json()?)?;
    Ok(())
}

fn cmd_train(ctx: &Ctx, args: &TrainArgs) -> anyhow::Result<()> {
    let m = load_data(&args.data, args.train.split_units)?;
    let cfg = train_config(ctx, &args.train)?;
    let bundle = train_supervised(&m, &args.data.split, &cfg)?;
    bundle.save(&args.out)?;
    Ok(())
}

fn load_bundle(path: &Path) -> anyhow::Result<ModelBundle> {
    ModelBundle::load(path).with_context(|| format!("loading model bundle {}", path.display()))
}

#[derive(Serialize)]
struct DecodeOutput {
    seed: u64,
    prior: bool,
    beam: Option<f64>,
    graph: &'static str,
    summary: Option<Summary>,
    clips: Vec<DecodeReport>,
}

fn cmd_decode(ctx: &Ctx, args: &DecodeArgs) -> anyhow::Result<()> {
    let bundle = load_bundle(&args.model.model)?;
    let m = load_data(&args.model.data, None)?;
    let map = UnitMap::new(bundle.lexicon(), &m.lexicon)?;
    let ids = target_clips(&m, &args.model)?;
    let prior = ctx.prior(args.prior, false);
    let beam = ctx.beam(args.beam);
    let graph = if args.free {
        unconstrained_graph(bundle.hmms.clone(), ComposeOptions { use_prior: prior })?
    } else {
        Recognizer::new(&bundle.grammar, bundle.hmms.clone(), DecodeOptions { use_prior: prior, beam, ..Default::default() })?
            .graph()
            .clone()
    };
    let results: Vec<DecodeResult> = ids
        .par_iter()
        .map(|id| -> anyhow::Result<DecodeResult> {
            let seq = m.clip(id)?.load_features()?;
            decode(&graph, &seq, beam).with_context(|| format!("decoding clip {id}"))
        })
        .collect::<anyhow::Result<_>>()?;
    let segs = map_results(&map, &ids, &results)?;
    let out = DecodeOutput {
        seed: ctx.seed,
        prior,
        beam,
        graph: if args.free { "unconstrained" } else { "grammar" },
        summary: summarize(&m, &segs)?,
        clips: ids.iter().zip(&results).map(|(id, r)| DecodeReport::new(id, r, bundle.lexicon())).collect(),
    };
    if let Some(dir) = &args.out {
        write_segmentations(dir, &segs, &m.lexicon)?;
    }
    emit(args.out.as_deref(), "decode.json", &to_json(&out)?)
}

#[derive(Serialize)]
struct ClassifyRow {
    clip: String,
    truth: String,
    predicted: Option<String>,
    log_prob: Option<f64>,
}

#[derive(Serialize)]
struct ClassifyOutput {
    seed: u64,
    level: &'static str,
    prior: bool,
    accuracy: f64,
    confusion: unitseg::eval::ConfusionMatrix,
    items: Vec<ClassifyRow>,
}

fn cmd_classify(ctx: &Ctx, args: &ClassifyArgs) -> anyhow::Result<()> {
    let bundle = load_bundle(&args.model.model)?;
    let m = load_data(&args.model.data, None)?;
    let map = UnitMap::new(bundle.lexicon(), &m.lexicon)?;
    let ids = target_clips(&m, &args.model)?;
    let prior = ctx.prior(args.prior, true);
    let rows: Vec<ClassifyRow> = match args.level {
        Level::Activity => {
            let opts = DecodeOptions {
                use_prior: prior,
                beam: ctx.beam(args.beam),
                mode: match args.mode {
                    Mode::Union => ClassifyMode::Union,
                    Mode::Separate => ClassifyMode::Separate,
                },
            };
            let rec = Recognizer::new(&bundle.grammar, bundle.hmms.clone(), opts)?;
            ids.par_iter()
                .map(|id| -> anyhow::Result<ClassifyRow> {
                    let clip = m.clip(id)?;
                    let c = rec.classify(&clip.load_features()?).with_context(|| format!("classifying clip {id}"))?;
                    Ok(ClassifyRow {
                        clip: id.clone(),
                        truth: clip.activity.clone(),
                        predicted: Some(c.activity),
                        log_prob: Some(c.result.log_prob),
                    })
                })
                .collect::<anyhow::Result<_>>()?
        }
        Level::Unit => {
            let per_clip: Vec<Vec<ClassifyRow>> = ids
                .par_iter()
                .map(|id| -> anyhow::Result<Vec<ClassifyRow>> {
                    let clip = m.clip(id)?;
                    let Some(seg) = &clip.segmentation else {
                        bail!(Error::Manifest(format!("clip `{id}` has no frame-level annotation")));
                    };
                    let seq = clip.load_features()?;
                    seg.segments()
                        .iter()
                        .enumerate()
                        .map(|(i, s)| {
                            let piece = seq.slice(s.start, s.end)?;
                            let best = bundle.hmms.classify(&piece, prior);
                            Ok(ClassifyRow {
                                clip: format!("{id}:{i}"),
                                truth: m.lexicon.name(s.unit).to_string(),
                                predicted: best.map(|(u, _)| m.lexicon.name(map.to_data[u]).to_string()),
                                log_prob: best.map(|(_, p)| p),
                            })
                        })
                        .collect()
                })
                .collect::<anyhow::Result<_>>()?;
            per_clip.into_iter().flatten().collect()
        }
    };
    let truth: Vec<&str> = rows.iter().map(|r| r.truth.as_str()).collect();
    let pred: Vec<&str> = rows.iter().map(|r| r.predicted.as_deref().unwrap_or("-")).collect();
    let (acc, confusion) = accuracy(&truth, &pred)?;
    let out = ClassifyOutput {
        seed: ctx.seed,
        level: match args.level {
            Level::Activity => "activity",
            Level::Unit => "unit",
        },
        prior,
        accuracy: acc,
        confusion,
        items: rows,
    };
    if let Some(dir) = &args.out {
        write_file(&dir.join("confusion.csv"), &out.confusion.to_csv())?;
    }
    emit(args.out.as_deref(), "classify.json", &to_json(&out)?)
}

fn cmd_align(_ctx: &Ctx, args: &AlignArgs) -> anyhow::Result<()> {
    let bundle = load_bundle(&args.model.model)?;
    let m = load_data(&args.model.data, None)?;
    let map = UnitMap::new(bundle.lexicon(), &m.lexicon)?;
    let ids = target_clips(&m, &args.model)?;
    let results: Vec<DecodeResult> = ids
        .par_iter()
        .map(|id| -> anyhow::Result<DecodeResult> {
            let clip = m.clip(id)?;
            let Some(t) = clip.transcript() else {
                bail!(Error::Manifest(format!("clip `{id}` has no transcript")));
            };
            let t = map.transcript(&t, &m.lexicon)?;
            let mut r = force_align(bundle.hmms.clone(), &t, &clip.load_features()?)
                .with_context(|| format!("aligning clip {id}"))?;
            r.activity = Some(clip.activity.clone());
            Ok(r)
        })
        .collect::<anyhow::Result<_>>()?;
    let segs = map_results(&map, &ids, &results)?;
    let out = DecodeOutput {
        seed: 0,
        prior: false,
        beam: None,
        graph: "transcript",
        summary: summarize(&m, &segs)?,
        clips: ids.iter().zip(&results).map(|(id, r)| DecodeReport::new(id, r, bundle.lexicon())).collect(),
    };
    if let Some(dir) = &args.out {
        write_segmentations(dir, &segs, &m.lexicon)?;
    }
    emit(args.out.as_deref(), "align.json", &to_json(&out)?)
}

fn cmd_bootstrap(ctx: &Ctx, args: &BootstrapArgs) -> anyhow::Result<()> {
    let m = load_data(&args.data, args.train.split_units)?;
    let cfg = train_config(ctx, &args.train)?;
    let train_ids = &m.split(&args.data.split)?.train;
    let (annotated, transcripts) = select_annotated(&m, train_ids, args.per_unit)?;
    let bcfg = BootstrapConfig {
        annotated,
        transcripts,
        rounds: args.rounds,
    };
    let mut bundle = bootstrap(&m, &bcfg, &cfg)?;
    bundle.config.split = Some(args.data.split.clone());
    bundle.save(&args.out)?;
    Ok(())
}

fn read_label_dir(dir: &Path) -> anyhow::Result<BTreeMap<String, Vec<String>>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::Io { path: dir.into(), source: e })?;
    let mut out = BTreeMap::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::Io { path: dir.into(), source: e })?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("txt") {
            continue;
        }
        let name = path.file_stem().unwrap_or_default().to_string_lossy().into_owned();
        let text = fs::read_to_string(&path).map_err(|e| Error::Io { path: path.clone(), source: e })?;
        let mut labels = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let f: Vec<&str> = line.split_whitespace().collect();
            let parsed = match f.as_slice() {
                [s, e, u] => s.parse::<usize>().ok().zip(e.parse::<usize>().ok()).map(|(s, e)| (s, e, *u)),
                _ => None,
            };
            let Some((s, e, u)) = parsed else {
                bail!(Error::Parse {
                    context: path.display().to_string(),
                    line: i + 1,
                    message: "expected `start end unit`".into(),
                });
            };
            if s != labels.len() || e < s {
                bail!(Error::Parse {
                    context: path.display().to_string(),
                    line: i + 1,
                    message: format!("segment {s}..{e} does not continue at frame {}", labels.len()),
                });
            }
            labels.extend(std::iter::repeat_n(u.to_string(), e - s + 1));
        }
        out.insert(name, labels);
    }
    Ok(out)
}

fn cmd_eval(_ctx: &Ctx, args: &EvalArgs) -> anyhow::Result<()> {
    let gt = read_label_dir(&args.gt)?;
    let pred = read_label_dir(&args.pred)?;
    if pred.is_empty() {
        bail!(Error::Data(format!("no segmentation files in {}", args.pred.display())));
    }
    let mut names: Vec<String> = gt.values().chain(pred.values()).flatten().cloned().collect();
    names.push(args.background.clone());
    names.sort();
    names.dedup();
    let lex = UnitLexicon::new(names, &args.background)?;
    let (mut g_all, mut p_all) = (Vec::new(), Vec::new());
    for (clip, p) in &pred {
        let g = gt
            .get(clip)
            .ok_or_else(|| Error::Data(format!("no ground truth for `{clip}`")))?;
        if g.len() != p.len() {
            bail!(Error::Coverage { covered: p.len(), expected: g.len() });
        }
        g_all.extend(g.iter().map(|n| lex.id(n).expect("collected")));
        p_all.extend(p.iter().map(|n| lex.id(n).expect("collected")));
    }
    let jopts = JaccardOptions {
        background: Some(lex.silence()),
        global: args.jaccard_global,
    };
    let rows = [
        MetricRow::new("mof", &args.split, args.gmm_k, mof(&g_all, &p_all)?),
        MetricRow::new("moc", &args.split, args.gmm_k, moc(&g_all, &p_all)?),
        MetricRow::new("jaccard", &args.split, args.gmm_k, jaccard_labels(&g_all, &p_all, jopts)?.mean),
    ];
    emit(args.out.as_deref(), "metrics.csv", &rows_to_csv(&rows))
}

#[derive(Serialize)]
struct GridSetting {
    gmm_k: usize,
    pca_dim: usize,
    mirrored: bool,
    summary: Option<Summary>,
}

#[derive(Serialize)]
struct GridOutput {
    seed: u64,
    hypotheses: usize,
    settings: Vec<GridSetting>,
    voted: Option<Summary>,
}

fn cmd_grid(ctx: &Ctx, args: &GridArgs) -> anyhow::Result<()> {
    let ks = if args.gmm_k.is_empty() { vec![ctx.gmm_k(None)] } else { args.gmm_k.clone() };
    let dims = if args.pca_dim.is_empty() { ctx.file.pca_dim.into_iter().collect() } else { args.pca_dim.clone() };
    if ks.is_empty() || dims.is_empty() {
        bail!(Error::Config("empty parameter grid".into()));
    }
    let m = load_data(&args.data, None)?;
    let split = m.split(&args.data.split)?.clone();
    let train_clips = m.clips_by_id(&split.train)?;
    let test_ids = {
        let mut t = split.test.clone();
        t.sort();
        t
    };
    if test_ids.is_empty() {
        bail!(Error::Manifest(format!("split `{}` has no test clips", args.data.split)));
    }
    let test_clips = m.clips_by_id(&test_ids)?;
    let raw_train = load_clips(&train_clips)?;
    let raw_test = load_clips(&test_clips)?;
    let mirror = args.mirror.as_deref().map(load_map).transpose()?;

    let mut variants = vec![(false, raw_train.clone(), raw_test.clone())];
    if let Some(map) = &mirror {
        let flip = |v: &[FeatureSequence]| v.iter().map(|s| mirror_features(s, map)).collect::<unitseg::Result<Vec<_>>>();
        variants.push((true, flip(&raw_train)?, flip(&raw_test)?));
    }

    let mut settings = Vec::new();
    let mut hypotheses: Vec<Vec<Segmentation>> = Vec::new();
    for (mirrored, train, test) in &variants {
        for &dim in &dims {
            let dim_in = train[0].dim();
            let fopts = PipelineFitOptions {
                pca1_dim: args.base_dim.min(dim_in),
                fv_components: args.fv_k,
                window: ctx.window(args.window),
                pca2_dim: dim,
                seed: sub_seed(ctx.seed, dim as u64),
                ..Default::default()
            };
            let fm = FeatureModel::fit(train, &fopts)?;
            let enc = |v: &[FeatureSequence]| v.par_iter().map(|s| fm.encode(s)).collect::<unitseg::Result<Vec<_>>>();
            let (enc_train, enc_test) = (enc(train)?, enc(test)?);
            for &k in &ks {
                let cfg = TrainConfig::new(k, ctx.seed);
                let bundle = train_supervised_on(&m, &args.data.split, &cfg, &enc_train)?;
                let rec = Recognizer::new(
                    &bundle.grammar,
                    bundle.hmms.clone(),
                    DecodeOptions { beam: ctx.beam(args.beam), ..Default::default() },
                )?;
                let segs: Vec<Segmentation> = enc_test
                    .par_iter()
                    .map(|s| rec.decode(s).map(|r| r.segmentation))
                    .collect::<unitseg::Result<_>>()?;
                let named: Vec<(String, Segmentation)> = test_ids.iter().cloned().zip(segs.iter().cloned()).collect();
                settings.push(GridSetting {
                    gmm_k: k,
                    pca_dim: dim,
                    mirrored: *mirrored,
                    summary: summarize(&m, &named)?,
                });
                hypotheses.push(segs);
            }
        }
    }

    let voted = if args.vote {
        let mut voted = Vec::with_capacity(test_ids.len());
        for (c, seq) in raw_test.iter().enumerate() {
            let t = seq.len();
            let labelings: Vec<Vec<String>> = hypotheses
                .iter()
                .map(|h| {
                    h[c].frame_labels(t)
                        .map(|l| l.into_iter().map(|u| m.lexicon.name(u).to_string()).collect())
                })
                .collect::<unitseg::Result<_>>()?;
            let winner: Vec<usize> = majority_vote(&labelings)?
                .iter()
                .map(|n| m.lexicon.id(n).expect("known unit"))
                .collect();
            voted.push((test_ids[c].clone(), Segmentation::from_labels(&winner)));
        }
        if let Some(dir) = &args.out {
            write_segmentations(dir, &voted, &m.lexicon)?;
        }
        summarize(&m, &voted)?
    } else {
        None
    };
    let out = GridOutput {
        seed: ctx.seed,
        hypotheses: hypotheses.len(),
        settings,
        voted,
    };
    emit(args.out.as_deref(), "grid.json", &to_json(&out)?)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let file = match &cli.config {
        Some(p) => read_json::<FileConfig>(p)?,
        None => FileConfig::default(),
    };
    let jobs = cli.jobs.or(file.jobs).unwrap_or(0);
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build_global()
        .context("configuring the worker pool")?;
    let ctx = Ctx {
        seed: cli.seed.or(file.seed).unwrap_or(DEFAULT_SEED),
        file,
    };
    match &cli.command {
        Command::Synth(a) => cmd_synth(&ctx, a),
        Command::Encode(a) => cmd_encode(&ctx, a),
        Command::Train(a) => cmd_train(&ctx, a),
        Command::Decode(a) => cmd_decode(&ctx, a),
        Command::Classify(a) => cmd_classify(&ctx, a),
        Command::Align(a) => cmd_align(&ctx, a),
        Command::Bootstrap(a) => cmd_bootstrap(&ctx, a),
        Command::Eval(a) => cmd_eval(&ctx, a),
        Command::Grid(a) => cmd_grid(&ctx, a),
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::Config(_)) => 1,
        Some(e) if e.is_decode_failure() => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

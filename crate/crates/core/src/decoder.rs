//! Token-passing Viterbi decoding over a unit-level decoding graph.
//!
//! Every graph node expands into the states of its unit HMM. At each frame
//! one token survives per expanded state. Word-boundary history is kept in an
//! append-only arena of links so the unit segmentation is recovered without
//! storing a full backpointer lattice.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};
use std::sync::Arc;

use serde::Serialize;

use crate::datamodel::{FeatureSequence, Segment, Segmentation, Transcript, UnitId, UnitLexicon};
use crate::error::{Error, Result};
use crate::grammar::{compose, compose_activity, ComposeOptions, DecodingGraph, Grammar};
use crate::hmm::HmmSet;

const NO_LINK: u32 = u32::MAX;

#[derive(Debug, Clone, Copy)]
struct Link {
    node: u32,
    start: u32,
    prev: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeResult {
    pub activity: Option<String>,
    pub segmentation: Segmentation,
    pub transcript: Transcript,
    pub log_prob: f64,
}

/// Minimum number of frames any complete path through the graph consumes.
pub fn min_frames(graph: &DecodingGraph) -> usize {
    let cost: Vec<usize> = graph
        .nodes()
        .iter()
        .map(|n| graph.hmms().get(n.unit).map_or(usize::MAX, |h| h.num_states()))
        .collect();
    let n = cost.len();
    let mut succ: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (to, succ_to) in (0..n).map(|j| (j, graph.predecessors(j))) {
        for &(from, _) in succ_to {
            succ[from].push(to);
        }
    }
    let mut dist = vec![usize::MAX; n];
    let mut heap = BinaryHeap::new();
    for &(e, _) in graph.entries() {
        if cost[e] < dist[e] {
            dist[e] = cost[e];
            heap.push(Reverse((cost[e], e)));
        }
    }
    while let Some(Reverse((d, u))) = heap.pop() {
        if d > dist[u] {
            continue;
        }
        for &v in &succ[u] {
            let nd = d.saturating_add(cost[v]);
            if nd < dist[v] {
                dist[v] = nd;
                heap.push(Reverse((nd, v)));
            }
        }
    }
    graph.exits().iter().map(|&(e, _)| dist[e]).min().unwrap_or(usize::MAX)
}

/// Best path through `graph` for `seq`. With `beam`, tokens more than `beam`
/// below the frame's best are discarded.
pub fn decode(graph: &DecodingGraph, seq: &FeatureSequence, beam: Option<f64>) -> Result<DecodeResult> {
    let hmms = graph.hmms();
    if let Some(dim) = hmms.dim() {
        if dim != seq.dim() {
            return Err(Error::DimensionMismatch { expected: dim, got: seq.dim() });
        }
    }
    if let Some(b) = beam {
        if b.is_nan() || b <= 0.0 {
            return Err(Error::Config(format!("beam width must be positive, got {b}")));
        }
    }
    let t_len = seq.len();
    let needed = min_frames(graph);
    if t_len < needed {
        return Err(Error::NoPath(format!(
            "clip {} has {t_len} frames but the shortest path needs {needed}",
            seq.clip_id()
        )));
    }
    if t_len > u32::MAX as usize {
        return Err(Error::Data("sequence too long".into()));
    }

    let nodes = graph.nodes();
    let mut offset = Vec::with_capacity(nodes.len() + 1);
    offset.push(0usize);
    for n in nodes {
        let h = hmms.get(n.unit).ok_or_else(|| Error::MissingModel(hmms.lexicon.name(n.unit).into()))?;
        offset.push(offset.last().unwrap() + h.num_states());
    }
    let total = *offset.last().unwrap();
    let node_hmm: Vec<_> = nodes.iter().map(|n| hmms.get(n.unit).unwrap()).collect();

    // emissions are shared across nodes of the same unit
    let mut unit_slot: BTreeMap<UnitId, usize> = BTreeMap::new();
    for n in nodes {
        let next = unit_slot.len();
        unit_slot.entry(n.unit).or_insert(next);
    }
    let mut slot_units = vec![0; unit_slot.len()];
    for (&u, &s) in &unit_slot {
        slot_units[s] = u;
    }
    let node_slot: Vec<usize> = nodes.iter().map(|n| unit_slot[&n.unit]).collect();
    let mut emit: Vec<Vec<f64>> = slot_units.iter().map(|&u| vec![0.0; hmms.get(u).unwrap().num_states()]).collect();
    let mut buf = Vec::new();
    let mut fill_emissions = |x: &[f64], emit: &mut Vec<Vec<f64>>| {
        for (s, &u) in slot_units.iter().enumerate() {
            for (e, g) in emit[s].iter_mut().zip(hmms.get(u).unwrap().states()) {
                *e = g.log_joint_into(x, &mut buf);
            }
        }
    };

    let mut arena: Vec<Link> = Vec::new();
    let mut score = vec![f64::NEG_INFINITY; total];
    let mut link = vec![NO_LINK; total];
    let mut next_score = vec![f64::NEG_INFINITY; total];
    let mut next_link = vec![NO_LINK; total];

    fill_emissions(seq.frame(0), &mut emit);
    for &(e, w) in graph.entries() {
        let s = offset[e];
        let cand = w + emit[node_slot[e]][0];
        if cand > score[s] {
            score[s] = cand;
            arena.push(Link { node: e as u32, start: 0, prev: NO_LINK });
            link[s] = (arena.len() - 1) as u32;
        }
    }
    prune(&mut score, beam);

    for t in 1..t_len {
        fill_emissions(seq.frame(t), &mut emit);
        for (i, h) in node_hmm.iter().enumerate() {
            let base = offset[i];
            let n = h.num_states();
            let em = &emit[node_slot[i]];

            // first state: stay, then arcs from predecessor exits in node order
            let mut best = score[base] + h.log_stay(0);
            let mut best_link = link[base];
            let mut entered: Option<(u32, f64)> = None;
            for &(p, w) in graph.predecessors(i) {
                let last = offset[p + 1] - 1;
                let cand = score[last] + node_hmm[p].log_exit() + w;
                if cand > best && entered.is_none_or(|(_, b)| cand > b) {
                    entered = Some((link[last], cand));
                }
            }
            if let Some((prev, cand)) = entered {
                best = cand;
                arena.push(Link { node: i as u32, start: t as u32, prev });
                best_link = (arena.len() - 1) as u32;
            }
            next_score[base] = best + em[0];
            next_link[base] = best_link;

            for j in 1..n {
                let stay = score[base + j] + h.log_stay(j);
                let adv = score[base + j - 1] + h.log_advance(j - 1);
                let (s, l) = if adv > stay { (adv, link[base + j - 1]) } else { (stay, link[base + j]) };
                next_score[base + j] = s + em[j];
                next_link[base + j] = l;
            }
        }
        std::mem::swap(&mut score, &mut next_score);
        std::mem::swap(&mut link, &mut next_link);
        prune(&mut score, beam);
    }

    let mut best: Option<(usize, f64)> = None;
    for &(e, w) in graph.exits() {
        let last = offset[e + 1] - 1;
        let cand = score[last] + node_hmm[e].log_exit() + w;
        if cand > f64::NEG_INFINITY && best.is_none_or(|(_, b)| cand > b) {
            best = Some((last, cand));
        }
    }
    let Some((last, log_prob)) = best else {
        return Err(match beam {
            Some(_) => Error::BeamPruned { frame: t_len - 1 },
            None => Error::NoPath("every path has zero probability".into()),
        });
    };

    let mut chain = Vec::new();
    let mut l = link[last];
    while l != NO_LINK {
        chain.push(arena[l as usize]);
        l = arena[l as usize].prev;
    }
    chain.reverse();
    let mut segments = Vec::with_capacity(chain.len());
    for (k, c) in chain.iter().enumerate() {
        let end = chain.get(k + 1).map_or(t_len - 1, |n| n.start as usize - 1);
        segments.push(Segment {
            unit: nodes[c.node as usize].unit,
            start: c.start as usize,
            end,
        });
    }
    let activity = chain.first().and_then(|c| graph.activity_of(c.node as usize)).map(str::to_string);
    let segmentation = Segmentation::new(segments)?;
    Ok(DecodeResult {
        activity,
        transcript: segmentation.to_transcript(),
        segmentation,
        log_prob,
    })
}

fn prune(score: &mut [f64], beam: Option<f64>) {
    if let Some(b) = beam {
        let best = score.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let cut = best - b;
        for s in score.iter_mut() {
            if *s < cut {
                *s = f64::NEG_INFINITY;
            }
        }
    }
}

/// Viterbi alignment of a known transcript.
pub fn force_align(hmms: Arc<HmmSet>, transcript: &Transcript, seq: &FeatureSequence) -> Result<DecodeResult> {
    let graph = DecodingGraph::linear(hmms, transcript)?;
    decode(&graph, seq, None)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ClassifyMode {
    /// One decode over the union of all activity grammars.
    #[default]
    Union,
    /// Decode each activity separately and take the best.
    Separate,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct DecodeOptions {
    pub use_prior: bool,
    pub beam: Option<f64>,
    pub mode: ClassifyMode,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    pub activity: String,
    pub result: DecodeResult,
    /// Per-activity scores; only filled in `Separate` mode.
    pub scores: BTreeMap<String, f64>,
}

/// Compiled graphs for repeated decoding with a fixed model and grammar.
#[derive(Debug, Clone)]
pub struct Recognizer {
    union: DecodingGraph,
    per_activity: Vec<(String, DecodingGraph)>,
    opts: DecodeOptions,
}

impl Recognizer {
    pub fn new(grammar: &Grammar, hmms: Arc<HmmSet>, opts: DecodeOptions) -> Result<Self> {
        let copts = ComposeOptions { use_prior: opts.use_prior };
        let union = compose(grammar, hmms.clone(), copts)?;
        let per_activity = if opts.mode == ClassifyMode::Separate {
            grammar
                .activities()
                .map(|a| Ok((a.to_string(), compose_activity(grammar, a, hmms.clone(), copts)?)))
                .collect::<Result<_>>()?
        } else {
            Vec::new()
        };
        Ok(Self { union, per_activity, opts })
    }

    pub fn graph(&self) -> &DecodingGraph {
        &self.union
    }

    pub fn lexicon(&self) -> &UnitLexicon {
        &self.union.hmms().lexicon
    }

    pub fn decode(&self, seq: &FeatureSequence) -> Result<DecodeResult> {
        decode(&self.union, seq, self.opts.beam)
    }

    pub fn classify(&self, seq: &FeatureSequence) -> Result<Classification> {
        match self.opts.mode {
            ClassifyMode::Union => {
                let result = self.decode(seq)?;
                let activity = result.activity.clone().unwrap_or_default();
                Ok(Classification {
                    activity,
                    result,
                    scores: BTreeMap::new(),
                })
            }
            ClassifyMode::Separate => {
                let mut scores = BTreeMap::new();
                let mut best: Option<(String, DecodeResult)> = None;
                let mut first_err = None;
                // activities are visited in name order, so ties keep the smaller name
                for (activity, graph) in &self.per_activity {
                    match decode(graph, seq, self.opts.beam) {
                        Ok(r) => {
                            scores.insert(activity.clone(), r.log_prob);
                            if best.as_ref().is_none_or(|(_, b)| r.log_prob > b.log_prob) {
                                best = Some((activity.clone(), r));
                            }
                        }
                        Err(e) if e.is_decode_failure() => {
                            scores.insert(activity.clone(), f64::NEG_INFINITY);
                            first_err.get_or_insert(e);
                        }
                        Err(e) => return Err(e),
                    }
                }
                let (activity, result) = best.ok_or_else(|| first_err.unwrap_or_else(|| Error::NoPath("no activities".into())))?;
                Ok(Classification { activity, result, scores })
            }
        }
    }
}

pub fn classify_activity(
    grammar: &Grammar,
    hmms: Arc<HmmSet>,
    seq: &FeatureSequence,
    opts: DecodeOptions,
) -> Result<Classification> {
    Recognizer::new(grammar, hmms, opts)?.classify(seq)
}

/// Per-frame majority over several labelings; ties go to the smallest label.
pub fn majority_vote<L: Ord + Clone>(labelings: &[Vec<L>]) -> Result<Vec<L>> {
    let Some(first) = labelings.first() else {
        return Err(Error::Data("no labelings to vote over".into()));
    };
    if labelings.iter().any(|l| l.len() != first.len()) {
        return Err(Error::Data("labelings differ in length".into()));
    }
    Ok((0..first.len())
        .map(|t| {
            let mut counts: BTreeMap<&L, usize> = BTreeMap::new();
            for l in labelings {
                *counts.entry(&l[t]).or_default() += 1;
            }
            let top = counts.values().copied().max().unwrap_or(0);
            counts.into_iter().find(|&(_, c)| c == top).unwrap().0.clone()
        })
        .collect())
}

#[derive(Debug, Clone, Serialize)]
pub struct SegmentReport {
    pub unit: String,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct DecodeReport {
    pub clip: String,
    pub activity: Option<String>,
    pub log_prob: f64,
    pub transcript: Vec<String>,
    pub segments: Vec<SegmentReport>,
}

impl DecodeReport {
    pub fn new(clip: &str, result: &DecodeResult, lexicon: &UnitLexicon) -> Self {
        Self {
            clip: clip.to_string(),
            activity: result.activity.clone(),
            log_prob: result.log_prob,
            transcript: result.transcript.names(lexicon).into_iter().map(String::from).collect(),
            segments: result
                .segmentation
                .segments()
                .iter()
                .map(|s| SegmentReport {
                    unit: lexicon.name(s.unit).to_string(),
                    start: s.start,
                    end: s.end,
                })
                .collect(),
        }
    }
}

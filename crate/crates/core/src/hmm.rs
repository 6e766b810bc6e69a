//! Strict left-to-right unit HMMs with GMM emissions.
//!
//! Every model is entered in state 0 and left from state `n - 1`; each state
//! has exactly two outgoing arcs, a self-loop and an advance (the advance from
//! the last state is the exit). The exit probability is part of every path
//! score, so a unit's best-path score is directly comparable to the cost of
//! passing through the same unit inside a composed decoding graph.

use log::warn;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::datamodel::{FeatureSequence, UnitId, UnitLexicon};
use crate::error::{Error, Result};
use crate::gmm::{fit_em_lenient, variance_floor, EmOptions, Gmm, GmmStats};
use crate::math::log_add;

pub const INIT_SELF_PROB: f64 = 0.9;
pub const INIT_ADVANCE_PROB: f64 = 0.1;
/// Frames per state used to derive the state count from the mean sample length.
pub const FRAMES_PER_STATE: f64 = 10.0;
/// Floor applied to re-estimated transition probabilities before renormalising.
pub const TRANSITION_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct UnitHmmRepr {
    unit: UnitId,
    /// `[stay, advance]` per state, linear probabilities.
    transitions: Vec<[f64; 2]>,
    states: Vec<Gmm>,
    var_floor: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "UnitHmmRepr", into = "UnitHmmRepr")]
pub struct UnitHmm {
    unit: UnitId,
    transitions: Vec<[f64; 2]>,
    log_stay: Vec<f64>,
    log_advance: Vec<f64>,
    states: Vec<Gmm>,
    var_floor: Vec<f64>,
}

impl TryFrom<UnitHmmRepr> for UnitHmm {
    type Error = Error;

    fn try_from(r: UnitHmmRepr) -> Result<Self> {
        UnitHmm::new(r.unit, r.transitions, r.states, r.var_floor)
    }
}

impl From<UnitHmm> for UnitHmmRepr {
    fn from(h: UnitHmm) -> Self {
        UnitHmmRepr {
            unit: h.unit,
            transitions: h.transitions,
            states: h.states,
            var_floor: h.var_floor,
        }
    }
}

impl UnitHmm {
    pub fn new(unit: UnitId, transitions: Vec<[f64; 2]>, states: Vec<Gmm>, var_floor: Vec<f64>) -> Result<Self> {
        if states.is_empty() || transitions.len() != states.len() {
            return Err(Error::Data("unit HMM needs one transition row per state and at least one state".into()));
        }
        let dim = states[0].dim();
        if states.iter().any(|g| g.dim() != dim) || var_floor.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: var_floor.len(),
            });
        }
        for (j, row) in transitions.iter().enumerate() {
            if row.iter().any(|p| p.is_nan() || *p < 0.0) || (row[0] + row[1] - 1.0).abs() > 1e-9 || row[1] <= 0.0 {
                return Err(Error::Data(format!("state {j}: transition row {row:?} is not a distribution with a way forward")));
            }
        }
        Ok(Self {
            unit,
            log_stay: transitions.iter().map(|r| r[0].ln()).collect(),
            log_advance: transitions.iter().map(|r| r[1].ln()).collect(),
            transitions,
            states,
            var_floor,
        })
    }

    pub fn unit(&self) -> UnitId {
        self.unit
    }

    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn dim(&self) -> usize {
        self.states[0].dim()
    }

    pub fn states(&self) -> &[Gmm] {
        &self.states
    }

    pub fn transitions(&self) -> &[[f64; 2]] {
        &self.transitions
    }

    pub fn var_floor(&self) -> &[f64] {
        &self.var_floor
    }

    pub fn log_stay(&self, state: usize) -> f64 {
        self.log_stay[state]
    }

    /// Log probability of moving from `state` to `state + 1`, or of leaving
    /// the unit when `state` is the last one.
    pub fn log_advance(&self, state: usize) -> f64 {
        self.log_advance[state]
    }

    pub fn log_exit(&self) -> f64 {
        self.log_advance[self.num_states() - 1]
    }

    /// Log transition between two topology nodes: `0` is the non-emitting
    /// entry, `1..=n` the emitting states, `n + 1` the exit. Forbidden arcs
    /// are `-inf`.
    pub fn log_transition(&self, from: usize, to: usize) -> f64 {
        let n = self.num_states();
        match (from, to) {
            (0, 1) => 0.0,
            (f, t) if (1..=n).contains(&f) && t == f => self.log_stay[f - 1],
            (f, t) if (1..=n).contains(&f) && t == f + 1 => self.log_advance[f - 1],
            _ => f64::NEG_INFINITY,
        }
    }

    pub fn with_unit(mut self, unit: UnitId) -> Self {
        self.unit = unit;
        self
    }

    /// `T x n` matrix of state emission log-likelihoods, row-major.
    pub fn emission_matrix(&self, seq: &FeatureSequence) -> Result<Vec<f64>> {
        if seq.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: seq.dim(),
            });
        }
        let n = self.num_states();
        let mut out = Vec::with_capacity(seq.len() * n);
        let mut buf = Vec::new();
        for x in seq.frames() {
            for g in &self.states {
                out.push(g.log_joint_into(x, &mut buf));
            }
        }
        Ok(out)
    }

    /// Samples one realisation of the unit: frames and the state of each.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (Vec<Vec<f64>>, Vec<usize>) {
        let mut frames = Vec::new();
        let mut states = Vec::new();
        let mut j = 0;
        loop {
            frames.push(self.states[j].sample(rng));
            states.push(j);
            if rng.random::<f64>() < self.transitions[j][0] {
                continue;
            }
            j += 1;
            if j == self.num_states() {
                return (frames, states);
            }
        }
    }
}

/// Best state sequence through one unit model.
#[derive(Debug, Clone, PartialEq)]
pub struct StatePath {
    pub states: Vec<usize>,
    pub log_prob: f64,
}

impl StatePath {
    /// Checks the left-to-right path invariants for a model with `n` states.
    pub fn is_valid(&self, n: usize) -> bool {
        self.states.first() == Some(&0)
            && self.states.last() == Some(&(n - 1))
            && self.states.windows(2).all(|w| w[1] == w[0] || w[1] == w[0] + 1)
    }
}

fn viterbi_from_emissions(hmm: &UnitHmm, emissions: &[f64], len: usize) -> Result<StatePath> {
    let n = hmm.num_states();
    if len < n {
        return Err(Error::NoPath(format!("{len} frames cannot traverse {n} states")));
    }
    let mut score = vec![f64::NEG_INFINITY; n];
    let mut next = vec![f64::NEG_INFINITY; n];
    // advanced[t * n + j]: state j at frame t was reached from j - 1
    let mut advanced = vec![false; len * n];
    score[0] = emissions[0];
    for t in 1..len {
        let row = &emissions[t * n..(t + 1) * n];
        for j in 0..n {
            let stay = score[j] + hmm.log_stay[j];
            let adv = if j > 0 {
                score[j - 1] + hmm.log_advance[j - 1]
            } else {
                f64::NEG_INFINITY
            };
            // ties keep the self-loop
            if adv > stay {
                next[j] = adv + row[j];
                advanced[t * n + j] = true;
            } else {
                next[j] = stay + row[j];
            }
        }
        std::mem::swap(&mut score, &mut next);
    }
    let log_prob = score[n - 1] + hmm.log_exit();
    if log_prob == f64::NEG_INFINITY {
        return Err(Error::NoPath("every path has zero probability".into()));
    }
    let mut states = vec![0; len];
    let mut j = n - 1;
    for t in (0..len).rev() {
        states[t] = j;
        if t > 0 && advanced[t * n + j] {
            j -= 1;
        }
    }
    Ok(StatePath { states, log_prob })
}

/// Highest-scoring legal state path (entry, emissions, transitions and exit).
pub fn viterbi_align(hmm: &UnitHmm, seq: &FeatureSequence) -> Result<StatePath> {
    if seq.len() < hmm.num_states() {
        return Err(Error::NoPath(format!(
            "{} frames cannot traverse {} states",
            seq.len(),
            hmm.num_states()
        )));
    }
    let em = hmm.emission_matrix(seq)?;
    viterbi_from_emissions(hmm, &em, seq.len())
}

struct Lattice {
    alpha: Vec<f64>,
    beta: Vec<f64>,
    log_likelihood: f64,
}

fn forward_backward(hmm: &UnitHmm, em: &[f64], len: usize) -> Lattice {
    let n = hmm.num_states();
    let mut alpha = vec![f64::NEG_INFINITY; len * n];
    alpha[0] = em[0];
    for t in 1..len {
        for j in 0..n {
            let mut a = alpha[(t - 1) * n + j] + hmm.log_stay[j];
            if j > 0 {
                a = log_add(a, alpha[(t - 1) * n + j - 1] + hmm.log_advance[j - 1]);
            }
            alpha[t * n + j] = a + em[t * n + j];
        }
    }
    let mut beta = vec![f64::NEG_INFINITY; len * n];
    beta[(len - 1) * n + n - 1] = hmm.log_exit();
    for t in (0..len - 1).rev() {
        for j in 0..n {
            let mut b = hmm.log_stay[j] + em[(t + 1) * n + j] + beta[(t + 1) * n + j];
            if j + 1 < n {
                b = log_add(b, hmm.log_advance[j] + em[(t + 1) * n + j + 1] + beta[(t + 1) * n + j + 1]);
            }
            beta[t * n + j] = b;
        }
    }
    let log_likelihood = alpha[(len - 1) * n + n - 1] + hmm.log_exit();
    Lattice {
        alpha,
        beta,
        log_likelihood,
    }
}

/// Total log-likelihood summed over all legal state paths.
pub fn forward_log_likelihood(hmm: &UnitHmm, seq: &FeatureSequence) -> Result<f64> {
    if seq.len() < hmm.num_states() {
        return Ok(f64::NEG_INFINITY);
    }
    let em = hmm.emission_matrix(seq)?;
    Ok(forward_backward(hmm, &em, seq.len()).log_likelihood)
}

#[derive(Debug, Clone)]
pub struct InitOptions {
    /// Mixture components per state.
    pub k: usize,
    pub seed: u64,
    pub em_iters: usize,
    /// Per-dimension variance floor; computed from the training frames if absent.
    pub var_floor: Option<Vec<f64>>,
}

impl InitOptions {
    pub fn new(k: usize, seed: u64) -> Self {
        Self {
            k,
            seed,
            em_iters: 20,
            var_floor: None,
        }
    }
}

pub fn state_count(seqs: &[FeatureSequence]) -> usize {
    let mean_len = seqs.iter().map(FeatureSequence::len).sum::<usize>() as f64 / seqs.len() as f64;
    let min_len = seqs.iter().map(FeatureSequence::len).min().unwrap_or(1);
    ((mean_len / FRAMES_PER_STATE).round() as usize).max(1).min(min_len)
}

/// Builds a unit model by slicing every training sample evenly over the
/// states and fitting each state's mixture on its slices.
pub fn init_hmm(unit: UnitId, seqs: &[FeatureSequence], opts: &InitOptions) -> Result<UnitHmm> {
    if seqs.is_empty() {
        return Err(Error::TooFewSamples { needed: 1, got: 0 });
    }
    let dim = seqs[0].dim();
    if let Some(bad) = seqs.iter().find(|s| s.dim() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: bad.dim(),
        });
    }
    let n = state_count(seqs);
    let floor = match &opts.var_floor {
        Some(f) => f.clone(),
        None => {
            let all: Vec<&[f64]> = seqs.iter().flat_map(FeatureSequence::frames).collect();
            variance_floor(&all)
        }
    };
    let mut slices: Vec<Vec<&[f64]>> = vec![Vec::new(); n];
    for seq in seqs {
        let len = seq.len();
        for (t, x) in seq.frames().enumerate() {
            slices[t * n / len].push(x);
        }
    }
    let states = slices
        .iter()
        .enumerate()
        .map(|(j, frames)| {
            let em = EmOptions {
                k: opts.k,
                seed: opts.seed.wrapping_add(j as u64),
                max_iter: opts.em_iters,
                tol: 1e-6,
                var_floor: Some(floor.clone()),
            };
            fit_em_lenient(frames, &em)
        })
        .collect::<Result<Vec<_>>>()?;
    let transitions = vec![[INIT_SELF_PROB, INIT_ADVANCE_PROB]; n];
    UnitHmm::new(unit, transitions, states, floor)
}

#[derive(Debug, Clone)]
pub struct Trained {
    pub hmm: UnitHmm,
    /// Training objective before the first update and after each one.
    pub log_likelihoods: Vec<f64>,
    pub excluded: usize,
}

fn usable<'a>(hmm: &UnitHmm, seqs: &'a [FeatureSequence]) -> Result<Vec<&'a FeatureSequence>> {
    let n = hmm.num_states();
    let kept: Vec<_> = seqs.iter().filter(|s| s.len() >= n).collect();
    let dropped = seqs.len() - kept.len();
    if dropped > 0 {
        warn!("unit {}: {dropped} training sequence(s) shorter than {n} states excluded", hmm.unit);
    }
    if kept.is_empty() {
        return Err(Error::NoPath(format!(
            "unit {}: every training sequence is shorter than {n} states",
            hmm.unit
        )));
    }
    if let Some(bad) = kept.iter().find(|s| s.dim() != hmm.dim()) {
        return Err(Error::DimensionMismatch {
            expected: hmm.dim(),
            got: bad.dim(),
        });
    }
    Ok(kept)
}

struct Accumulator {
    stay: Vec<f64>,
    advance: Vec<f64>,
    emissions: Vec<GmmStats>,
}

impl Accumulator {
    fn new(hmm: &UnitHmm) -> Self {
        Self {
            stay: vec![0.0; hmm.num_states()],
            advance: vec![0.0; hmm.num_states()],
            emissions: hmm.states.iter().map(GmmStats::new).collect(),
        }
    }

    fn finish(self, hmm: &UnitHmm) -> Result<UnitHmm> {
        let transitions = self
            .stay
            .iter()
            .zip(&self.advance)
            .map(|(s, a)| {
                let total = s + a;
                let stay = (s / total).max(TRANSITION_FLOOR);
                let adv = (a / total).max(TRANSITION_FLOOR);
                [stay / (stay + adv), adv / (stay + adv)]
            })
            .collect();
        let states = self
            .emissions
            .iter()
            .zip(&hmm.states)
            .map(|(st, g)| st.maximize(g, &hmm.var_floor))
            .collect();
        UnitHmm::new(hmm.unit, transitions, states, hmm.var_floor.clone())
    }
}

fn run_training<F>(hmm: &UnitHmm, seqs: &[FeatureSequence], max_iter: usize, tol: f64, mut step: F) -> Result<Trained>
where
    F: FnMut(&UnitHmm, &[&FeatureSequence]) -> Result<(f64, Accumulator)>,
{
    if max_iter == 0 {
        return Ok(Trained {
            hmm: hmm.clone(),
            log_likelihoods: Vec::new(),
            excluded: 0,
        });
    }
    let data = usable(hmm, seqs)?;
    let excluded = seqs.len() - data.len();
    let (mut objective, mut acc) = step(hmm, &data)?;
    let mut history = vec![objective];
    let mut current = hmm.clone();
    for _ in 0..max_iter {
        let updated = acc.finish(&current)?;
        let (next_objective, next_acc) = step(&updated, &data)?;
        history.push(next_objective);
        current = updated;
        acc = next_acc;
        let gain = next_objective - objective;
        objective = next_objective;
        if gain < tol {
            break;
        }
    }
    Ok(Trained {
        hmm: current,
        log_likelihoods: history,
        excluded,
    })
}

/// Hard-EM: align every sequence with Viterbi, re-estimate from the alignment,
/// repeat until the summed best-path log-probability stops improving.
pub fn viterbi_train(hmm: &UnitHmm, seqs: &[FeatureSequence], max_iter: usize, tol: f64) -> Result<Trained> {
    run_training(hmm, seqs, max_iter, tol, |model, data| {
        let mut acc = Accumulator::new(model);
        let mut total = 0.0;
        for seq in data {
            let em = model.emission_matrix(seq)?;
            let path = viterbi_from_emissions(model, &em, seq.len())?;
            total += path.log_prob;
            for (t, &j) in path.states.iter().enumerate() {
                acc.emissions[j].accumulate(&model.states[j], seq.frame(t), 1.0);
                match path.states.get(t + 1) {
                    Some(&next) if next == j => acc.stay[j] += 1.0,
                    _ => acc.advance[j] += 1.0,
                }
            }
        }
        Ok((total, acc))
    })
}

/// Soft-EM over state posteriors from forward-backward.
pub fn baum_welch(hmm: &UnitHmm, seqs: &[FeatureSequence], max_iter: usize, tol: f64) -> Result<Trained> {
    run_training(hmm, seqs, max_iter, tol, |model, data| {
        let n = model.num_states();
        let mut acc = Accumulator::new(model);
        let mut total = 0.0;
        for seq in data {
            let len = seq.len();
            let em = model.emission_matrix(seq)?;
            let lat = forward_backward(model, &em, len);
            let ll = lat.log_likelihood;
            if ll == f64::NEG_INFINITY {
                return Err(Error::NoPath(format!("clip {} has zero likelihood", seq.clip_id())));
            }
            total += ll;
            for t in 0..len {
                for j in 0..n {
                    let post = (lat.alpha[t * n + j] + lat.beta[t * n + j] - ll).exp();
                    acc.emissions[j].accumulate(&model.states[j], seq.frame(t), post);
                    if t + 1 < len {
                        let a = lat.alpha[t * n + j] - ll;
                        acc.stay[j] += (a + model.log_stay[j] + em[(t + 1) * n + j] + lat.beta[(t + 1) * n + j]).exp();
                        if j + 1 < n {
                            acc.advance[j] += (a
                                + model.log_advance[j]
                                + em[(t + 1) * n + j + 1]
                                + lat.beta[(t + 1) * n + j + 1])
                                .exp();
                        }
                    }
                }
            }
            acc.advance[n - 1] += 1.0;
        }
        Ok((total, acc))
    })
}

/// Best-path log-likelihood plus a log prior; `-inf` when the sequence is too
/// short for the model.
pub fn score_unit(hmm: &UnitHmm, seq: &FeatureSequence, prior_log: f64) -> f64 {
    match viterbi_align(hmm, seq) {
        Ok(path) => path.log_prob + prior_log,
        Err(_) => f64::NEG_INFINITY,
    }
}

pub const HMM_SET_VERSION: u32 = 1;

/// All unit models of a trained system, with the lexicon that names them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HmmSet {
    pub version: u32,
    pub lexicon: UnitLexicon,
    hmms: Vec<UnitHmm>,
}

impl HmmSet {
    pub fn new(lexicon: UnitLexicon, mut hmms: Vec<UnitHmm>) -> Result<Self> {
        hmms.sort_by_key(UnitHmm::unit);
        if hmms.windows(2).any(|w| w[0].unit == w[1].unit) {
            return Err(Error::Data("duplicate unit model".into()));
        }
        if let Some(h) = hmms.iter().find(|h| h.unit >= lexicon.len()) {
            return Err(Error::Data(format!("model for unit id {} outside lexicon", h.unit)));
        }
        if let Some(first) = hmms.first() {
            if let Some(h) = hmms.iter().find(|h| h.dim() != first.dim()) {
                return Err(Error::DimensionMismatch {
                    expected: first.dim(),
                    got: h.dim(),
                });
            }
        }
        Ok(Self {
            version: HMM_SET_VERSION,
            lexicon,
            hmms,
        })
    }

    pub fn get(&self, unit: UnitId) -> Option<&UnitHmm> {
        self.hmms
            .binary_search_by_key(&unit, UnitHmm::unit)
            .ok()
            .map(|i| &self.hmms[i])
    }

    pub fn hmms(&self) -> &[UnitHmm] {
        &self.hmms
    }

    pub fn units(&self) -> impl Iterator<Item = UnitId> + '_ {
        self.hmms.iter().map(UnitHmm::unit)
    }

    pub fn dim(&self) -> Option<usize> {
        self.hmms.first().map(UnitHmm::dim)
    }

    pub fn is_empty(&self) -> bool {
        self.hmms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.hmms.len()
    }

    /// Isolated-unit classification: argmax of best-path score plus (optionally)
    /// the `1/N(u)` prior. Equal scores go to the lexicographically smaller
    /// unit name. `None` when no model admits a path.
    pub fn classify(&self, seq: &FeatureSequence, use_prior: bool) -> Option<(UnitId, f64)> {
        let mut order: Vec<&UnitHmm> = self.hmms.iter().collect();
        order.sort_by(|a, b| self.lexicon.name(a.unit).cmp(self.lexicon.name(b.unit)));
        let mut best: Option<(UnitId, f64)> = None;
        for h in order {
            let prior = if use_prior { self.lexicon.log_prior(h.unit) } else { 0.0 };
            let s = score_unit(h, seq, prior);
            if s == f64::NEG_INFINITY {
                continue;
            }
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((h.unit, s));
            }
        }
        best
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let set: HmmSet = serde_json::from_str(text)?;
        if set.version != HMM_SET_VERSION {
            return Err(Error::Data(format!("unsupported model version {}", set.version)));
        }
        Self::new(set.lexicon, set.hmms)
    }
}

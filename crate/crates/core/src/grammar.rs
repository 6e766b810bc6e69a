//! Activity grammars learned from training transcripts and their compilation
//! into unit-level decoding graphs.
//!
//! A grammar is the exact finite set of distinct transcripts seen per
//! activity, stored as one prefix trie each. The EBNF rendering factors
//! shared prefixes into alternatives and marks sentences that end at an inner
//! trie node with `[ ... ]`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::sync::Arc;

use serde::Serialize;

use crate::datamodel::{Transcript, UnitId, UnitLexicon};
use crate::error::{Error, Result};
use crate::hmm::HmmSet;

#[derive(Debug, Clone, PartialEq, Eq, Default)]
struct TrieNode {
    children: BTreeMap<UnitId, usize>,
    terminal: bool,
}

#[derive(Debug, Clone)]
pub struct Trie {
    nodes: Vec<TrieNode>,
}

// node numbering depends on insertion order; equality is by language
impl PartialEq for Trie {
    fn eq(&self, other: &Self) -> bool {
        self.sentences() == other.sentences()
    }
}

impl Eq for Trie {}

impl Default for Trie {
    fn default() -> Self {
        Self {
            nodes: vec![TrieNode::default()],
        }
    }
}

impl Trie {
    fn insert(&mut self, units: &[UnitId]) {
        let mut at = 0;
        for &u in units {
            at = match self.nodes[at].children.get(&u) {
                Some(&next) => next,
                None => {
                    self.nodes.push(TrieNode::default());
                    let next = self.nodes.len() - 1;
                    self.nodes[at].children.insert(u, next);
                    next
                }
            };
        }
        self.nodes[at].terminal = true;
    }

    pub fn contains(&self, units: &[UnitId]) -> bool {
        let mut at = 0;
        for u in units {
            match self.nodes[at].children.get(u) {
                Some(&next) => at = next,
                None => return false,
            }
        }
        self.nodes[at].terminal
    }

    pub fn sentences(&self) -> Vec<Vec<UnitId>> {
        fn walk(trie: &Trie, at: usize, prefix: &mut Vec<UnitId>, out: &mut Vec<Vec<UnitId>>) {
            if trie.nodes[at].terminal {
                out.push(prefix.clone());
            }
            for (&u, &next) in &trie.nodes[at].children {
                prefix.push(u);
                walk(trie, next, prefix, out);
                prefix.pop();
            }
        }
        let mut out = Vec::new();
        walk(self, 0, &mut Vec::new(), &mut out);
        out
    }

    /// True when no node has two outgoing edges with the same label.
    pub fn is_deterministic(&self) -> bool {
        // BTreeMap keys are unique by construction; check reachability instead
        let mut seen = vec![false; self.nodes.len()];
        seen[0] = true;
        for node in &self.nodes {
            for &next in node.children.values() {
                if std::mem::replace(&mut seen[next], true) {
                    return false;
                }
            }
        }
        true
    }

    pub fn units(&self) -> BTreeSet<UnitId> {
        self.nodes.iter().flat_map(|n| n.children.keys().copied()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Grammar {
    silence: UnitId,
    activities: BTreeMap<String, Trie>,
}

impl Grammar {
    pub fn empty(silence: UnitId) -> Self {
        Self {
            silence,
            activities: BTreeMap::new(),
        }
    }

    pub fn silence(&self) -> UnitId {
        self.silence
    }

    pub fn activities(&self) -> impl Iterator<Item = &str> {
        self.activities.keys().map(String::as_str)
    }

    pub fn trie(&self, activity: &str) -> Option<&Trie> {
        self.activities.get(activity)
    }

    pub fn is_empty(&self) -> bool {
        self.activities.is_empty()
    }

    pub fn add(&mut self, activity: &str, transcript: &Transcript) -> Result<()> {
        let units = transcript.units();
        if units.is_empty() {
            return Err(Error::Grammar(format!("activity `{activity}`: empty transcript")));
        }
        if units[0] != self.silence || units[units.len() - 1] != self.silence {
            return Err(Error::Grammar(format!(
                "activity `{activity}`: transcript must begin and end with silence"
            )));
        }
        self.activities.entry(activity.to_string()).or_default().insert(units);
        Ok(())
    }

    /// Activities whose language contains the unit sequence.
    pub fn accepting(&self, units: &[UnitId]) -> Vec<&str> {
        self.activities
            .iter()
            .filter(|(_, t)| t.contains(units))
            .map(|(a, _)| a.as_str())
            .collect()
    }

    pub fn contains(&self, units: &[UnitId]) -> bool {
        self.activities.values().any(|t| t.contains(units))
    }

    pub fn sentences(&self, activity: &str) -> Vec<Vec<UnitId>> {
        self.activities.get(activity).map(Trie::sentences).unwrap_or_default()
    }

    pub fn units(&self) -> BTreeSet<UnitId> {
        self.activities.values().flat_map(Trie::units).collect()
    }
}

/// Union trie of the distinct transcripts of each activity.
pub fn build_grammar(transcripts: &[(String, Transcript)], silence: UnitId) -> Result<Grammar> {
    if transcripts.is_empty() {
        return Err(Error::Grammar("no transcripts".into()));
    }
    let mut g = Grammar::empty(silence);
    for (activity, t) in transcripts {
        crate::datamodel::validate_name(activity)
            .map_err(|_| Error::Grammar(format!("invalid activity name `{activity}`")))?;
        g.add(activity, t)?;
    }
    Ok(g)
}

fn render_node(trie: &Trie, at: usize, lexicon: &UnitLexicon, out: &mut String) {
    let node = &trie.nodes[at];
    if node.children.is_empty() {
        return;
    }
    let mut alts: Vec<(&str, usize)> = node
        .children
        .iter()
        .map(|(&u, &next)| (lexicon.name(u), next))
        .collect();
    alts.sort();
    let bracket = if node.terminal {
        Some(("[ ", " ]"))
    } else if alts.len() > 1 {
        Some(("( ", " )"))
    } else {
        None
    };
    if let Some((open, _)) = bracket {
        out.push_str(open);
    }
    for (i, (name, next)) in alts.iter().enumerate() {
        if i > 0 {
            out.push_str(" | ");
        }
        out.push_str(name);
        if !trie.nodes[*next].children.is_empty() {
            out.push_str(", ");
            render_node(trie, *next, lexicon, out);
        }
    }
    if let Some((_, close)) = bracket {
        out.push_str(close);
    }
}

/// One production per activity (sorted), alternatives sorted by unit name.
pub fn export_ebnf(grammar: &Grammar, lexicon: &UnitLexicon) -> String {
    let mut out = String::new();
    for (activity, trie) in &grammar.activities {
        let mut body = String::new();
        render_node(trie, 0, lexicon, &mut body);
        let _ = writeln!(out, "{activity} = {body} ;");
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Punct(char),
}

/// Splits grammar text into identifiers and punctuation. `(* ... *)` is a
/// comment and may span lines.
fn tokenize(text: &str) -> Result<Vec<(Tok, usize)>> {
    let mut toks = Vec::new();
    let mut ident = String::new();
    let mut line = 1;
    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        let boundary = c.is_whitespace() || "=,;|()[]".contains(c);
        if boundary && !ident.is_empty() {
            toks.push((Tok::Ident(std::mem::take(&mut ident)), line));
        }
        if c == '(' && chars.peek() == Some(&'*') {
            chars.next();
            let opened = line;
            let mut prev = ' ';
            loop {
                match chars.next() {
                    Some(')') if prev == '*' => break,
                    Some(ch) => {
                        line += usize::from(ch == '\n');
                        prev = ch;
                    }
                    None => return Err(Error::Grammar(format!("line {opened}: unterminated comment"))),
                }
            }
        } else if c == '\n' {
            line += 1;
        } else if boundary {
            if !c.is_whitespace() {
                toks.push((Tok::Punct(c), line));
            }
        } else {
            ident.push(c);
        }
    }
    if !ident.is_empty() {
        toks.push((Tok::Ident(ident), line));
    }
    Ok(toks)
}

type Language = BTreeSet<Vec<UnitId>>;

struct Parser<'a> {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    lexicon: &'a UnitLexicon,
}

impl Parser<'_> {
    fn err(&self, msg: &str) -> Error {
        let line = self.toks.get(self.pos).or(self.toks.last()).map_or(0, |t| t.1);
        Error::Grammar(format!("line {line}: {msg}"))
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.0)
    }

    fn expect(&mut self, c: char) -> Result<()> {
        if self.peek() == Some(&Tok::Punct(c)) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err(&format!("expected `{c}`")))
        }
    }

    fn ident(&mut self) -> Result<String> {
        match self.peek() {
            Some(Tok::Ident(s)) => {
                let s = s.clone();
                self.pos += 1;
                Ok(s)
            }
            _ => Err(self.err("expected a name")),
        }
    }

    fn alternatives(&mut self) -> Result<Language> {
        let mut lang = self.sequence()?;
        while self.peek() == Some(&Tok::Punct('|')) {
            self.pos += 1;
            lang.extend(self.sequence()?);
        }
        Ok(lang)
    }

    fn sequence(&mut self) -> Result<Language> {
        let mut lang = self.term()?;
        while self.peek() == Some(&Tok::Punct(',')) {
            self.pos += 1;
            let rhs = self.term()?;
            lang = lang
                .iter()
                .flat_map(|a| {
                    rhs.iter().map(move |b| {
                        let mut s = a.clone();
                        s.extend(b);
                        s
                    })
                })
                .collect();
        }
        Ok(lang)
    }

    fn term(&mut self) -> Result<Language> {
        match self.peek() {
            Some(Tok::Punct('(')) => {
                self.pos += 1;
                let l = self.alternatives()?;
                self.expect(')')?;
                Ok(l)
            }
            Some(Tok::Punct('[')) => {
                self.pos += 1;
                let mut l = self.alternatives()?;
                self.expect(']')?;
                l.insert(Vec::new());
                Ok(l)
            }
            Some(Tok::Ident(_)) => {
                let name = self.ident()?;
                let id = self.lexicon.require(&name)?;
                Ok(BTreeSet::from([vec![id]]))
            }
            _ => Err(self.err("expected a unit name, `(` or `[`")),
        }
    }
}

/// Parses the EBNF subset produced by [`export_ebnf`]: `name = expr ;` with
/// `,` for sequence, `|` for alternatives, `( )` grouping and `[ ]` optional.
pub fn parse_ebnf(text: &str, lexicon: &UnitLexicon) -> Result<Grammar> {
    let mut p = Parser {
        toks: tokenize(text)?,
        pos: 0,
        lexicon,
    };
    let mut g = Grammar::empty(lexicon.silence());
    while p.peek().is_some() {
        let activity = p.ident()?;
        p.expect('=')?;
        let lang = p.alternatives()?;
        p.expect(';')?;
        for sentence in lang {
            g.add(&activity, &Transcript(sentence))?;
        }
    }
    Ok(g)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct GraphNode {
    pub unit: UnitId,
    pub activity: Option<usize>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ComposeOptions {
    /// Add `-ln N(u)` on every arc entering a unit.
    pub use_prior: bool,
}

/// Unit-level automaton. Every node is one occurrence of a unit HMM; arcs
/// carry log weights.
#[derive(Debug, Clone)]
pub struct DecodingGraph {
    hmms: Arc<HmmSet>,
    nodes: Vec<GraphNode>,
    entries: Vec<(usize, f64)>,
    exits: Vec<(usize, f64)>,
    preds: Vec<Vec<(usize, f64)>>,
    activities: Vec<String>,
}

impl DecodingGraph {
    pub fn hmms(&self) -> &HmmSet {
        &self.hmms
    }

    pub fn hmm_set(&self) -> &Arc<HmmSet> {
        &self.hmms
    }

    pub fn nodes(&self) -> &[GraphNode] {
        &self.nodes
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn exits(&self) -> &[(usize, f64)] {
        &self.exits
    }

    /// Incoming arcs `(from, log_weight)` of `node`.
    pub fn predecessors(&self, node: usize) -> &[(usize, f64)] {
        &self.preds[node]
    }

    pub fn num_edges(&self) -> usize {
        self.preds.iter().map(Vec::len).sum()
    }

    pub fn activities(&self) -> &[String] {
        &self.activities
    }

    pub fn activity_of(&self, node: usize) -> Option<&str> {
        self.nodes[node].activity.map(|a| self.activities[a].as_str())
    }

    fn arc_weight(hmms: &HmmSet, unit: UnitId, opts: ComposeOptions) -> f64 {
        if opts.use_prior {
            hmms.lexicon.log_prior(unit)
        } else {
            0.0
        }
    }

    fn check_models(hmms: &HmmSet, units: impl IntoIterator<Item = UnitId>) -> Result<()> {
        let missing: BTreeSet<&str> = units
            .into_iter()
            .filter(|&u| hmms.get(u).is_none())
            .map(|u| hmms.lexicon.name(u))
            .collect();
        if missing.is_empty() {
            Ok(())
        } else {
            Err(Error::MissingModel(missing.into_iter().collect::<Vec<_>>().join(", ")))
        }
    }

    fn from_tries(hmms: Arc<HmmSet>, tries: Vec<(String, &Trie)>, opts: ComposeOptions) -> Result<Self> {
        Self::check_models(&hmms, tries.iter().flat_map(|(_, t)| t.units()))?;
        let mut g = DecodingGraph {
            hmms,
            nodes: Vec::new(),
            entries: Vec::new(),
            exits: Vec::new(),
            preds: Vec::new(),
            activities: Vec::new(),
        };
        for (activity, trie) in tries {
            let tag = g.activities.len();
            g.activities.push(activity);
            // depth-first, children visited in unit-name order
            let mut stack: Vec<(usize, Option<usize>, UnitId)> = Vec::new();
            let push_children = |stack: &mut Vec<(usize, Option<usize>, UnitId)>, at: usize, parent: Option<usize>| {
                let mut kids: Vec<(UnitId, usize)> = trie.nodes[at].children.iter().map(|(&u, &n)| (u, n)).collect();
                kids.sort_by(|a, b| g.hmms.lexicon.name(b.0).cmp(g.hmms.lexicon.name(a.0)));
                for (u, n) in kids {
                    stack.push((n, parent, u));
                }
            };
            push_children(&mut stack, 0, None);
            while let Some((trie_node, parent, unit)) = stack.pop() {
                let id = g.nodes.len();
                g.nodes.push(GraphNode {
                    unit,
                    activity: Some(tag),
                });
                let w = Self::arc_weight(&g.hmms, unit, opts);
                match parent {
                    None => {
                        g.entries.push((id, w));
                        g.preds.push(Vec::new());
                    }
                    Some(p) => g.preds.push(vec![(p, w)]),
                }
                if trie.nodes[trie_node].terminal {
                    g.exits.push((id, 0.0));
                }
                push_children(&mut stack, trie_node, Some(id));
            }
        }
        if g.nodes.is_empty() {
            return Err(Error::Grammar("grammar has no sentences".into()));
        }
        Ok(g)
    }

    /// Decoding graph for a transcript-fixed alignment: one chain of nodes.
    pub fn linear(hmms: Arc<HmmSet>, transcript: &Transcript) -> Result<Self> {
        if transcript.is_empty() {
            return Err(Error::Data("empty transcript".into()));
        }
        let mut trie = Trie::default();
        trie.insert(transcript.units());
        Self::from_tries(hmms, vec![(String::new(), &trie)], ComposeOptions::default())
    }

    /// Fully connected unit graph: any unit may start, end or follow any unit.
    pub fn unconstrained(hmms: Arc<HmmSet>, opts: ComposeOptions) -> Result<Self> {
        if hmms.is_empty() {
            return Err(Error::Data("no unit models".into()));
        }
        let mut units: Vec<UnitId> = hmms.units().collect();
        units.sort_by(|a, b| hmms.lexicon.name(*a).cmp(hmms.lexicon.name(*b)));
        let nodes: Vec<GraphNode> = units.iter().map(|&unit| GraphNode { unit, activity: None }).collect();
        let weights: Vec<f64> = units.iter().map(|&u| Self::arc_weight(&hmms, u, opts)).collect();
        let n = nodes.len();
        Ok(DecodingGraph {
            entries: (0..n).map(|i| (i, weights[i])).collect(),
            exits: (0..n).map(|i| (i, 0.0)).collect(),
            preds: (0..n).map(|j| (0..n).map(|i| (i, weights[j])).collect()).collect(),
            nodes,
            activities: Vec::new(),
            hmms,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Node<'a> {
            id: usize,
            unit: &'a str,
            activity: Option<&'a str>,
        }
        #[derive(Serialize)]
        struct Edge {
            from: usize,
            to: usize,
            weight: f64,
        }
        #[derive(Serialize)]
        struct Dump<'a> {
            activities: &'a [String],
            nodes: Vec<Node<'a>>,
            edges: Vec<Edge>,
            entries: Vec<Edge>,
            exits: Vec<Edge>,
        }
        let lex = &self.hmms.lexicon;
        let dump = Dump {
            activities: &self.activities,
            nodes: self
                .nodes
                .iter()
                .enumerate()
                .map(|(id, n)| Node {
                    id,
                    unit: lex.name(n.unit),
                    activity: self.activity_of(id),
                })
                .collect(),
            edges: self
                .preds
                .iter()
                .enumerate()
                .flat_map(|(to, ps)| ps.iter().map(move |&(from, weight)| Edge { from, to, weight }))
                .collect(),
            entries: self.entries.iter().map(|&(to, weight)| Edge { from: usize::MAX, to, weight }).collect(),
            exits: self.exits.iter().map(|&(from, weight)| Edge { from, to: usize::MAX, weight }).collect(),
        };
        Ok(serde_json::to_string_pretty(&dump)?)
    }
}

/// Union graph over all activities; each path is tagged with its activity.
pub fn compose(grammar: &Grammar, hmms: Arc<HmmSet>, opts: ComposeOptions) -> Result<DecodingGraph> {
    let tries = grammar.activities.iter().map(|(a, t)| (a.clone(), t)).collect();
    DecodingGraph::from_tries(hmms, tries, opts)
}

/// Graph restricted to a single activity's sentences.
pub fn compose_activity(
    grammar: &Grammar,
    activity: &str,
    hmms: Arc<HmmSet>,
    opts: ComposeOptions,
) -> Result<DecodingGraph> {
    let trie = grammar
        .activities
        .get(activity)
        .ok_or_else(|| Error::Grammar(format!("unknown activity `{activity}`")))?;
    DecodingGraph::from_tries(hmms, vec![(activity.to_string(), trie)], opts)
}

pub fn unconstrained_graph(hmms: Arc<HmmSet>, opts: ComposeOptions) -> Result<DecodingGraph> {
    DecodingGraph::unconstrained(hmms, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gmm::Gmm;
    use crate::hmm::UnitHmm;

    fn lexicon() -> UnitLexicon {
        UnitLexicon::new(
            ["A", "B", "C", "SIL", "pour_coffee", "take_cup"].iter().map(|s| s.to_string()).collect(),
            "SIL",
        )
        .unwrap()
    }

    fn t(lex: &UnitLexicon, names: &[&str]) -> Transcript {
        Transcript(names.iter().map(|n| lex.id(n).unwrap()).collect())
    }

    fn models(lex: &UnitLexicon, names: &[&str]) -> Arc<HmmSet> {
        let hmms = names
            .iter()
            .map(|n| {
                UnitHmm::new(
                    lex.id(n).unwrap(),
                    vec![[0.5, 0.5]],
                    vec![Gmm::single(vec![0.0], vec![1.0]).unwrap()],
                    vec![1e-4],
                )
                .unwrap()
            })
            .collect();
        Arc::new(HmmSet::new(lex.clone(), hmms).unwrap())
    }

    fn unit_paths(g: &DecodingGraph) -> BTreeSet<Vec<UnitId>> {
        // graphs from tries are trees: walk from every exit back to an entry
        let entry: BTreeSet<usize> = g.entries().iter().map(|e| e.0).collect();
        let mut out = BTreeSet::new();
        for &(exit, _) in g.exits() {
            let mut path = vec![g.nodes()[exit].unit];
            let mut at = exit;
            while !entry.contains(&at) {
                at = g.predecessors(at)[0].0;
                path.push(g.nodes()[at].unit);
            }
            path.reverse();
            out.insert(path);
        }
        out
    }

    #[test]
    fn shared_prefixes_share_trie_nodes() {
        let lex = lexicon();
        let g = build_grammar(
            &[
                ("act".into(), t(&lex, &["SIL", "A", "B", "SIL"])),
                ("act".into(), t(&lex, &["SIL", "A", "C", "SIL"])),
                ("act".into(), t(&lex, &["SIL", "A", "C", "SIL"])),
            ],
            lex.silence(),
        )
        .unwrap();
        let trie = g.trie("act").unwrap();
        assert_eq!(trie.sentences().len(), 2);
        // root, SIL, A, B, SIL, C, SIL
        assert_eq!(trie.nodes.len(), 7);
        assert!(trie.is_deterministic());
        assert!(g.contains(&t(&lex, &["SIL", "A", "B", "SIL"]).0));
        assert!(!g.contains(&t(&lex, &["SIL", "A", "SIL"]).0));
    }

    #[test]
    fn transcripts_must_be_silence_delimited() {
        let lex = lexicon();
        assert!(build_grammar(&[("x".into(), t(&lex, &["A", "SIL"]))], lex.silence()).is_err());
        assert!(build_grammar(&[("x".into(), t(&lex, &["SIL", "A"]))], lex.silence()).is_err());
        assert!(build_grammar(&[], lex.silence()).is_err());
        let g = build_grammar(&[("x".into(), t(&lex, &["SIL"]))], lex.silence()).unwrap();
        assert_eq!(g.sentences("x").len(), 1);
    }

    #[test]
    fn ebnf_rendering() {
        let lex = lexicon();
        let g = build_grammar(
            &[("coffee".into(), t(&lex, &["SIL", "take_cup", "pour_coffee", "SIL"]))],
            lex.silence(),
        )
        .unwrap();
        assert_eq!(export_ebnf(&g, &lex), "coffee = SIL, take_cup, pour_coffee, SIL ;\n");

        let g = build_grammar(
            &[
                ("act".into(), t(&lex, &["SIL", "A", "C", "SIL"])),
                ("act".into(), t(&lex, &["SIL", "A", "B", "SIL"])),
                ("act".into(), t(&lex, &["SIL", "A", "SIL", "B", "SIL"])),
                ("act".into(), t(&lex, &["SIL", "A", "SIL"])),
            ],
            lex.silence(),
        )
        .unwrap();
        assert_eq!(
            export_ebnf(&g, &lex),
            "act = SIL, A, ( B, SIL | C, SIL | SIL, [ B, SIL ] ) ;\n"
        );
        assert_eq!(export_ebnf(&Grammar::empty(lex.silence()), &lex), "");
    }

    #[test]
    fn ebnf_parse_round_trip() {
        let lex = lexicon();
        let g = build_grammar(
            &[
                ("b".into(), t(&lex, &["SIL", "A", "C", "SIL"])),
                ("b".into(), t(&lex, &["SIL", "B", "SIL"])),
                ("a".into(), t(&lex, &["SIL", "A", "SIL", "A", "SIL"])),
                ("a".into(), t(&lex, &["SIL", "A", "SIL"])),
            ],
            lex.silence(),
        )
        .unwrap();
        let text = export_ebnf(&g, &lex);
        let back = parse_ebnf(&text, &lex).unwrap();
        assert_eq!(back, g);
        assert!(parse_ebnf("a = SIL, Q, SIL ;", &lex).is_err());
        assert!(parse_ebnf("a = SIL, A", &lex).is_err());
    }

    #[test]
    fn ebnf_comments_and_part_names() {
        let lex = UnitLexicon::new(vec!["SIL".into(), "cut#1".into(), "cut#2".into()], "SIL").unwrap();
        let text = "(* split units\n   keep their suffix *)\nprep = SIL, cut#1, (* inline *) cut#2, SIL ;\n";
        let g = parse_ebnf(text, &lex).unwrap();
        assert_eq!(g.sentences("prep"), vec![t(&lex, &["SIL", "cut#1", "cut#2", "SIL"]).0]);
        assert_eq!(parse_ebnf(&export_ebnf(&g, &lex), &lex).unwrap(), g);
        match parse_ebnf("(* open\nprep = SIL ;", &lex) {
            Err(Error::Grammar(m)) => assert!(m.starts_with("line 1:")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn compose_forces_single_sentence() {
        let lex = lexicon();
        let g = build_grammar(&[("x".into(), t(&lex, &["SIL", "A", "SIL"]))], lex.silence()).unwrap();
        let graph = compose(&g, models(&lex, &["SIL", "A"]), ComposeOptions::default()).unwrap();
        assert_eq!(graph.nodes().len(), 3);
        assert_eq!(unit_paths(&graph), BTreeSet::from([t(&lex, &["SIL", "A", "SIL"]).0]));
        assert_eq!(graph.entries().len(), 1);
        assert_eq!(graph.exits().len(), 1);
    }

    #[test]
    fn compose_reports_missing_models() {
        let lex = lexicon();
        let g = build_grammar(&[("x".into(), t(&lex, &["SIL", "A", "B", "SIL"]))], lex.silence()).unwrap();
        match compose(&g, models(&lex, &["SIL", "A"]), ComposeOptions::default()) {
            Err(Error::MissingModel(m)) => assert_eq!(m, "B"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn compose_preserves_language() {
        let lex = lexicon();
        let sentences = [
            vec!["SIL", "A", "B", "SIL"],
            vec!["SIL", "A", "C", "SIL"],
            vec!["SIL", "B", "SIL"],
            vec!["SIL", "A", "SIL"],
        ];
        let transcripts: Vec<(String, Transcript)> =
            sentences.iter().map(|s| ("x".to_string(), t(&lex, s))).collect();
        let g = build_grammar(&transcripts, lex.silence()).unwrap();
        let graph = compose(&g, models(&lex, &["SIL", "A", "B", "C"]), ComposeOptions::default()).unwrap();
        let expected: BTreeSet<Vec<UnitId>> = transcripts.iter().map(|(_, t)| t.0.clone()).collect();
        assert_eq!(unit_paths(&graph), expected);

        let two = build_grammar(&transcripts[..2], lex.silence()).unwrap();
        let graph = compose(&two, models(&lex, &["SIL", "A", "B", "C"]), ComposeOptions::default()).unwrap();
        assert_eq!(unit_paths(&graph).len(), 2);
    }

    #[test]
    fn unconstrained_graph_shape() {
        let lex = lexicon();
        let g = unconstrained_graph(models(&lex, &["A", "B", "C"]), ComposeOptions::default()).unwrap();
        assert_eq!(g.num_edges(), 9);
        assert_eq!(g.entries().len(), 3);
        assert_eq!(g.exits().len(), 3);

        let one = unconstrained_graph(models(&lex, &["A"]), ComposeOptions::default()).unwrap();
        assert_eq!(one.predecessors(0), &[(0, 0.0)]);

        let empty = Arc::new(HmmSet::new(lex, Vec::new()).unwrap());
        assert!(unconstrained_graph(empty, ComposeOptions::default()).is_err());
    }

    #[test]
    fn prior_weights_land_on_entering_arcs() {
        let mut lex = lexicon();
        lex.set_sample_count(lex.id("A").unwrap(), 4);
        let g = unconstrained_graph(models(&lex, &["A"]), ComposeOptions { use_prior: true }).unwrap();
        assert!((g.entries()[0].1 + 4f64.ln()).abs() < 1e-15);
        assert!(g.to_json().unwrap().contains("\"unit\": \"A\""));
    }
}

//! Classification and segmentation metrics.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Display;

use serde::Serialize;

use crate::datamodel::{Segmentation, UnitId};
use crate::error::{Error, Result};

fn check_lengths<L>(gt: &[L], pred: &[L]) -> Result<()> {
    if gt.len() != pred.len() {
        return Err(Error::Data(format!(
            "ground truth has {} frames, prediction has {}",
            gt.len(),
            pred.len()
        )));
    }
    if gt.is_empty() {
        return Err(Error::Data("no frames to evaluate".into()));
    }
    Ok(())
}

/// Mean over frames: fraction of frames with the correct label.
pub fn mof<L: PartialEq>(gt: &[L], pred: &[L]) -> Result<f64> {
    check_lengths(gt, pred)?;
    let hits = gt.iter().zip(pred).filter(|(g, p)| g == p).count();
    Ok(hits as f64 / gt.len() as f64)
}

/// Per ground-truth class frame recall.
pub fn class_recall<L: Ord + Clone>(gt: &[L], pred: &[L]) -> Result<BTreeMap<L, f64>> {
    check_lengths(gt, pred)?;
    let mut counts: BTreeMap<&L, (usize, usize)> = BTreeMap::new();
    for (g, p) in gt.iter().zip(pred) {
        let c = counts.entry(g).or_default();
        c.0 += 1;
        c.1 += usize::from(g == p);
    }
    Ok(counts
        .into_iter()
        .map(|(l, (total, hit))| (l.clone(), hit as f64 / total as f64))
        .collect())
}

/// Mean over classes: unweighted mean of per-class recall over classes
/// present in the ground truth.
pub fn moc<L: Ord + Clone>(gt: &[L], pred: &[L]) -> Result<f64> {
    let recall = class_recall(gt, pred)?;
    Ok(recall.values().sum::<f64>() / recall.len() as f64)
}

#[derive(Debug, Clone, Copy, Default)]
pub struct JaccardOptions {
    /// Class left out of the mean (typically silence).
    pub background: Option<UnitId>,
    /// Pool intersections and unions over classes instead of averaging
    /// per-class ratios.
    pub global: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JaccardScore {
    pub per_class: BTreeMap<UnitId, f64>,
    pub mean: f64,
}

pub fn jaccard(gt: &Segmentation, pred: &Segmentation, opts: JaccardOptions) -> Result<JaccardScore> {
    if gt.num_frames() != pred.num_frames() {
        return Err(Error::Coverage {
            covered: pred.num_frames(),
            expected: gt.num_frames(),
        });
    }
    let t = gt.num_frames();
    jaccard_labels(&gt.frame_labels(t)?, &pred.frame_labels(t)?, opts)
}

pub fn jaccard_labels(gt: &[UnitId], pred: &[UnitId], opts: JaccardOptions) -> Result<JaccardScore> {
    check_lengths(gt, pred)?;
    let classes: BTreeSet<UnitId> = gt.iter().copied().filter(|&c| Some(c) != opts.background).collect();
    if classes.is_empty() {
        return Err(Error::Data("ground truth has no non-background frames".into()));
    }
    let mut inter: BTreeMap<UnitId, usize> = BTreeMap::new();
    let mut union: BTreeMap<UnitId, usize> = BTreeMap::new();
    for (&g, &p) in gt.iter().zip(pred) {
        if g == p {
            *inter.entry(g).or_default() += 1;
            *union.entry(g).or_default() += 1;
        } else {
            *union.entry(g).or_default() += 1;
            *union.entry(p).or_default() += 1;
        }
    }
    let per_class: BTreeMap<UnitId, f64> = classes
        .iter()
        .map(|c| (*c, inter.get(c).copied().unwrap_or(0) as f64 / union[c] as f64))
        .collect();
    let mean = if opts.global {
        let i: usize = classes.iter().map(|c| inter.get(c).copied().unwrap_or(0)).sum();
        let u: usize = classes.iter().map(|c| union[c]).sum();
        i as f64 / u as f64
    } else {
        per_class.values().sum::<f64>() / per_class.len() as f64
    };
    Ok(JaccardScore { per_class, mean })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConfusionMatrix {
    pub labels: Vec<String>,
    /// `counts[gt][pred]`.
    pub counts: Vec<Vec<usize>>,
}

impl ConfusionMatrix {
    pub fn row_sums(&self) -> Vec<usize> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("gt\\pred");
        for l in &self.labels {
            out.push(',');
            out.push_str(l);
        }
        out.push('\n');
        for (l, row) in self.labels.iter().zip(&self.counts) {
            out.push_str(l);
            for c in row {
                out.push_str(&format!(",{c}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Clip-level accuracy and confusion counts. Labels are ordered by `L`'s order.
pub fn accuracy<L: Ord + Clone + Display>(gt: &[L], pred: &[L]) -> Result<(f64, ConfusionMatrix)> {
    check_lengths(gt, pred)?;
    let labels: Vec<&L> = gt.iter().chain(pred).collect::<BTreeSet<_>>().into_iter().collect();
    let index: BTreeMap<&L, usize> = labels.iter().enumerate().map(|(i, l)| (*l, i)).collect();
    let mut counts = vec![vec![0; labels.len()]; labels.len()];
    for (g, p) in gt.iter().zip(pred) {
        counts[index[g]][index[p]] += 1;
    }
    let correct: usize = (0..labels.len()).map(|i| counts[i][i]).sum();
    Ok((
        correct as f64 / gt.len() as f64,
        ConfusionMatrix {
            labels: labels.iter().map(|l| l.to_string()).collect(),
            counts,
        },
    ))
}

/// MoF pooled over the frames of clips whose activity was classified correctly.
pub fn conditional_mof<L: PartialEq>(gt: &[Vec<L>], pred: &[Vec<L>], correct: &[bool]) -> Result<f64> {
    if gt.len() != pred.len() || gt.len() != correct.len() {
        return Err(Error::Data("clip counts differ between ground truth, prediction and mask".into()));
    }
    let mut hits = 0;
    let mut total = 0;
    for ((g, p), &keep) in gt.iter().zip(pred).zip(correct) {
        if !keep {
            continue;
        }
        check_lengths(g, p)?;
        hits += g.iter().zip(p).filter(|(a, b)| a == b).count();
        total += g.len();
    }
    if total == 0 {
        return Err(Error::Data("no correctly classified clips".into()));
    }
    Ok(hits as f64 / total as f64)
}

/// One line of a metrics table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricRow {
    pub metric: String,
    pub split: String,
    pub k: Option<usize>,
    pub value: f64,
}

impl MetricRow {
    pub fn new(metric: &str, split: &str, k: Option<usize>, value: f64) -> Self {
        Self {
            metric: metric.into(),
            split: split.into(),
            k,
            value,
        }
    }
}

pub fn rows_to_csv(rows: &[MetricRow]) -> String {
    let mut out = String::from("metric,split,k,value\n");
    for r in rows {
        let k = r.k.map(|k| k.to_string()).unwrap_or_default();
        out.push_str(&format!("{},{},{},{}\n", r.metric, r.split, k, r.value));
    }
    out
}

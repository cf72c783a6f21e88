//! Detection scoring: IoU, one-to-one matching, precision/recall/F1 over a
//! sweep of IoU thresholds, and classification accuracy on matched regions.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::GroundTruthElement;
use crate::elements::{Channel, Detection};
use crate::geometry::BBox;

pub const DEFAULT_THRESHOLDS: [f64; 5] = [0.5, 0.6, 0.7, 0.8, 0.9];
pub const PRIMARY_THRESHOLD: f64 = 0.9;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("screen ids differ: only in detections {only_in_detections:?}, only in ground truth {only_in_ground_truth:?}")]
    ScreenMismatch { only_in_detections: Vec<String>, only_in_ground_truth: Vec<String> },
    #[error("IoU threshold {0} is outside (0, 1]")]
    BadThreshold(f64),
}

/// Intersection over union, `I / (A + B - I)`.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection_area(b);
    if inter == 0 {
        return 0.0;
    }
    inter as f64 / (a.area() + b.area() - inter) as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchPair {
    pub detection: usize,
    pub ground_truth: usize,
    pub iou: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MatchResult {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub pairs: Vec<MatchPair>,
}

/// Greedy one-to-one matching. Candidate pairs with IoU strictly above the
/// threshold are accepted in order of descending IoU (ties: higher detection
/// confidence, then lower ground-truth index), skipping pairs whose detection
/// or ground truth is already taken.
pub fn match_detections(dets: &[Detection], gts: &[GroundTruthElement], iou_threshold: f64) -> MatchResult {
    let mut candidates = Vec::new();
    for (di, d) in dets.iter().enumerate() {
        for (gi, g) in gts.iter().enumerate() {
            let v = iou(&d.bbox, &g.bbox);
            if v > iou_threshold {
                candidates.push(MatchPair { detection: di, ground_truth: gi, iou: v });
            }
        }
    }
    candidates.sort_by(|a, b| {
        b.iou
            .partial_cmp(&a.iou)
            .unwrap_or(Ordering::Equal)
            .then_with(|| {
                dets[b.detection]
                    .confidence
                    .partial_cmp(&dets[a.detection].confidence)
                    .unwrap_or(Ordering::Equal)
            })
            .then_with(|| a.ground_truth.cmp(&b.ground_truth))
            .then_with(|| a.detection.cmp(&b.detection))
    });

    let mut det_used = vec![false; dets.len()];
    let mut gt_used = vec![false; gts.len()];
    let mut pairs = Vec::new();
    for c in candidates {
        if det_used[c.detection] || gt_used[c.ground_truth] {
            continue;
        }
        det_used[c.detection] = true;
        gt_used[c.ground_truth] = true;
        pairs.push(c);
    }
    let tp = pairs.len();
    MatchResult { tp, fp: dets.len() - tp, fn_: gts.len() - tp, pairs }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Precision, recall and F1; any zero denominator yields 0.
pub fn metrics(tp: usize, fp: usize, fn_: usize) -> Scores {
    let ratio = |n: f64, d: f64| if d == 0.0 { 0.0 } else { n / d };
    let precision = ratio(tp as f64, (tp + fp) as f64);
    let recall = ratio(tp as f64, (tp + fn_) as f64);
    let f1 = ratio(2.0 * precision * recall, precision + recall);
    Scores { precision, recall, f1 }
}

/// Share of matched pairs whose labels agree; `None` when nothing matched.
pub fn classification_accuracy(
    matched: &MatchResult,
    dets: &[Detection],
    gts: &[GroundTruthElement],
) -> Option<f64> {
    if matched.pairs.is_empty() {
        return None;
    }
    let correct = matched
        .pairs
        .iter()
        .filter(|p| dets[p.detection].label == gts[p.ground_truth].label)
        .count();
    Some(correct as f64 / matched.pairs.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChannelFilter {
    NonText,
    Text,
    Both,
}

impl ChannelFilter {
    pub fn admits(&self, c: Channel) -> bool {
        match self {
            ChannelFilter::Both => true,
            ChannelFilter::NonText => c == Channel::NonText,
            ChannelFilter::Text => c == Channel::Text,
        }
    }
}

impl std::str::FromStr for ChannelFilter {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "nontext" => Ok(ChannelFilter::NonText),
            "text" => Ok(ChannelFilter::Text),
            "both" | "all" => Ok(ChannelFilter::Both),
            other => Err(format!("unknown channel filter {other:?} (nontext, text or both)")),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassTally {
    pub matched: usize,
    pub correct: usize,
}

impl ClassTally {
    pub fn accuracy(&self) -> Option<f64> {
        (self.matched > 0).then(|| self.correct as f64 / self.matched as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdReport {
    pub threshold: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Label agreement over all matched pairs.
    pub accuracy: Option<f64>,
    /// Label agreement keyed by ground-truth class.
    pub per_class: BTreeMap<String, ClassTally>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub channel: ChannelFilter,
    pub screens: usize,
    pub detections: usize,
    pub ground_truths: usize,
    pub thresholds: Vec<ThresholdReport>,
}

impl EvalReport {
    pub fn at(&self, threshold: f64) -> Option<&ThresholdReport> {
        self.thresholds.iter().find(|t| (t.threshold - threshold).abs() < 1e-12)
    }
}

/// Micro-averaged evaluation over a corpus. Both maps must cover the same
/// screen ids.
pub fn evaluate(
    dets: &BTreeMap<String, Vec<Detection>>,
    gts: &BTreeMap<String, Vec<GroundTruthElement>>,
    thresholds: &[f64],
    channel: ChannelFilter,
) -> Result<EvalReport, EvalError> {
    let det_ids: BTreeSet<_> = dets.keys().collect();
    let gt_ids: BTreeSet<_> = gts.keys().collect();
    if det_ids != gt_ids {
        return Err(EvalError::ScreenMismatch {
            only_in_detections: det_ids.difference(&gt_ids).map(|s| s.to_string()).collect(),
            only_in_ground_truth: gt_ids.difference(&det_ids).map(|s| s.to_string()).collect(),
        });
    }
    if let Some(&t) = thresholds.iter().find(|t| !(**t > 0.0 && **t <= 1.0)) {
        return Err(EvalError::BadThreshold(t));
    }

    let filtered: Vec<(Vec<Detection>, Vec<GroundTruthElement>)> = gts
        .iter()
        .map(|(id, g)| {
            let d = dets[id].iter().filter(|d| channel.admits(d.channel)).cloned().collect();
            let g = g.iter().filter(|g| channel.admits(g.channel)).cloned().collect();
            (d, g)
        })
        .collect();

    let mut report = EvalReport {
        channel,
        screens: filtered.len(),
        detections: filtered.iter().map(|(d, _)| d.len()).sum(),
        ground_truths: filtered.iter().map(|(_, g)| g.len()).sum(),
        thresholds: Vec::with_capacity(thresholds.len()),
    };

    for &t in thresholds {
        let (mut tp, mut fp, mut fn_) = (0, 0, 0);
        let mut per_class: BTreeMap<String, ClassTally> = BTreeMap::new();
        for (d, g) in &filtered {
            let m = match_detections(d, g, t);
            tp += m.tp;
            fp += m.fp;
            fn_ += m.fn_;
            for p in &m.pairs {
                let tally = per_class.entry(g[p.ground_truth].label.clone()).or_default();
                tally.matched += 1;
                if d[p.detection].label == g[p.ground_truth].label {
                    tally.correct += 1;
                }
            }
        }
        let s = metrics(tp, fp, fn_);
        let correct: usize = per_class.values().map(|c| c.correct).sum();
        report.thresholds.push(ThresholdReport {
            threshold: t,
            tp,
            fp,
            fn_,
            precision: s.precision,
            recall: s.recall,
            f1: s.f1,
            accuracy: (tp > 0).then(|| correct as f64 / tp as f64),
            per_class,
        });
    }
    Ok(report)
}

/// Fixed-width table for terminals.
pub fn render_table(report: &EvalReport) -> String {
    let mut out = format!(
        "screens {}  detections {}  ground truths {}  channel {:?}\n",
        report.screens, report.detections, report.ground_truths, report.channel
    );
    out.push_str("IoU>   TP      FP      FN      Precision  Recall  F1     ClsAcc\n");
    for t in &report.thresholds {
        let acc = t.accuracy.map_or_else(|| "-".to_owned(), |a| format!("{a:.3}"));
        out.push_str(&format!(
            "{:<6.2} {:<7} {:<7} {:<7} {:<10.3} {:<7.3} {:<6.3} {}\n",
            t.threshold, t.tp, t.fp, t.fn_, t.precision, t.recall, t.f1, acc
        ));
    }
    out
}

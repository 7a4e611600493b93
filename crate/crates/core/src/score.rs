//! Task scorers: slot-fill P/R/F1, mention CEAF, and detection average
//! precision at IOU 0.5.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::Write as _;

use pathfinding::kuhn_munkres::kuhn_munkres;
use pathfinding::matrix::Matrix;

use crate::align::iou;
use crate::error::{Error, Result};
use crate::gold::{GoldBox, GoldStandard};
use crate::model::{normalize_fill, BBox, Inventory, Key, OutputRecord, TextSpan, Value};

pub const DETECTION_IOU: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub enum ScoreReport {
    Prf {
        precision: f64,
        recall: f64,
        f1: f64,
    },
    /// Per-class AP indexed by `category - 1`.
    Ap {
        per_class: Vec<f64>,
        median: f64,
        mean: f64,
    },
}

impl ScoreReport {
    pub fn from_counts(correct: f64, predicted: f64, gold: f64) -> Self {
        let precision = if predicted > 0.0 {
            correct / predicted
        } else {
            0.0
        };
        let recall = if gold > 0.0 { correct / gold } else { 0.0 };
        ScoreReport::Prf {
            precision,
            recall,
            f1: f1(precision, recall),
        }
    }

    /// F1 for text tasks, mean AP for detection.
    pub fn headline(&self) -> f64 {
        match self {
            ScoreReport::Prf { f1, .. } => *f1,
            ScoreReport::Ap { mean, .. } => *mean,
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        match self {
            ScoreReport::Prf {
                precision,
                recall,
                f1,
            } => {
                writeln!(out, "precision\t{precision}").unwrap();
                writeln!(out, "recall\t{recall}").unwrap();
                writeln!(out, "f1\t{f1}").unwrap();
            }
            ScoreReport::Ap {
                per_class,
                median,
                mean,
            } => {
                writeln!(out, "median_ap\t{median}").unwrap();
                writeln!(out, "mean_ap\t{mean}").unwrap();
                for (i, ap) in per_class.iter().enumerate() {
                    writeln!(out, "ap\t{}\t{ap}", i + 1).unwrap();
                }
            }
        }
        out
    }
}

pub fn f1(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Micro-averaged P/R/F1 over `(query, slot, normalized fill)` triples.
/// Each gold triple can be credited once.
pub fn score_slotfill(predicted: &[OutputRecord], gold: &GoldStandard) -> ScoreReport {
    let gold_set = gold.fill_set();
    let mut credited = HashSet::new();
    let mut correct = 0usize;
    for r in predicted {
        if let (Key::Slot { query, slot }, Value::Fill(fill)) = (&r.key, &r.value) {
            let triple = (query.clone(), slot.clone(), normalize_fill(fill));
            if gold_set.contains(&triple) && credited.insert(triple) {
                correct += 1;
            }
        }
    }
    ScoreReport::from_counts(
        correct as f64,
        predicted.len() as f64,
        gold_set.len() as f64,
    )
}

/// Mention CEAF: optimal one-to-one alignment of system and gold clusters
/// maximizing the number of shared mentions, then P and R micro-averaged
/// over mentions.
pub fn score_ceafm(predicted: &[Vec<TextSpan>], gold: &[Vec<TextSpan>]) -> ScoreReport {
    let sys: Vec<BTreeSet<&TextSpan>> = predicted.iter().map(|c| c.iter().collect()).collect();
    let key: Vec<BTreeSet<&TextSpan>> = gold.iter().map(|c| c.iter().collect()).collect();
    let sys_mentions: usize = sys.iter().map(BTreeSet::len).sum();
    let gold_mentions: usize = key.iter().map(BTreeSet::len).sum();
    let best = best_alignment(&sys, &key);
    ScoreReport::from_counts(best as f64, sys_mentions as f64, gold_mentions as f64)
}

fn best_alignment(sys: &[BTreeSet<&TextSpan>], key: &[BTreeSet<&TextSpan>]) -> i64 {
    if sys.is_empty() || key.is_empty() {
        return 0;
    }
    let shared =
        |a: &BTreeSet<&TextSpan>, b: &BTreeSet<&TextSpan>| a.intersection(b).count() as i64;
    // kuhn_munkres needs rows <= columns
    let (rows, cols) = if sys.len() <= key.len() {
        (sys, key)
    } else {
        (key, sys)
    };
    let weights = Matrix::from_rows(
        rows.iter()
            .map(|r| cols.iter().map(|c| shared(r, c)).collect::<Vec<_>>()),
    )
    .expect("rectangular similarity matrix");
    kuhn_munkres(&weights).0
}

/// Clusters of mentions keyed by entity id, in id order.
pub fn clusters_from_records(records: &[OutputRecord]) -> Vec<Vec<TextSpan>> {
    let mut clusters: BTreeMap<&str, Vec<TextSpan>> = BTreeMap::new();
    for r in records {
        if let (Key::Entity { id }, Value::Mention { span, .. }) = (&r.key, &r.value) {
            clusters.entry(id).or_default().push(span.clone());
        }
    }
    clusters.into_values().collect()
}

pub fn gold_clusters(gold: &GoldStandard) -> Vec<Vec<TextSpan>> {
    let mut clusters: BTreeMap<&str, Vec<TextSpan>> = BTreeMap::new();
    if let GoldStandard::EntityLinking(mentions) = gold {
        for m in mentions {
            clusters.entry(&m.id).or_default().push(m.span.clone());
        }
    }
    clusters.into_values().collect()
}

/// A detection to be matched against gold boxes.
#[derive(Debug, Clone, Copy)]
pub struct DetectionRef<'a> {
    pub image: &'a str,
    pub category: u32,
    pub bbox: &'a BBox,
    pub confidence: f64,
}

impl<'a> DetectionRef<'a> {
    pub fn from_record(r: &'a OutputRecord) -> Option<Self> {
        match (&r.key, &r.value) {
            (Key::Image { id }, Value::Detection { category, bbox }) => Some(DetectionRef {
                image: id,
                category: *category,
                bbox,
                confidence: r.confidence,
            }),
            _ => None,
        }
    }
}

/// Greedy matching in descending confidence (ties keep input order). Each
/// detection takes the still-unmatched gold box of its image and category
/// with the largest IOU, and is a true positive when that IOU exceeds
/// `threshold`. Returns the true-positive flag per input detection.
pub fn match_detections(dets: &[DetectionRef<'_>], gold: &[GoldBox], threshold: f64) -> Vec<bool> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].confidence.total_cmp(&dets[a].confidence));
    let mut used = vec![false; gold.len()];
    let mut tp = vec![false; dets.len()];
    for i in order {
        let d = &dets[i];
        let mut best: Option<(usize, f64)> = None;
        for (g, gb) in gold.iter().enumerate() {
            if used[g] || gb.image != d.image || gb.category != d.category {
                continue;
            }
            let o = iou(d.bbox, &gb.bbox);
            if best.is_none_or(|(_, b)| o > b) {
                best = Some((g, o));
            }
        }
        if let Some((g, o)) = best {
            if o > threshold {
                used[g] = true;
                tp[i] = true;
            }
        }
    }
    tp
}

/// Area under the monotone precision envelope, given true-positive flags in
/// ranked order.
pub fn average_precision(ranked_tp: &[bool], n_gold: usize) -> f64 {
    if n_gold == 0 {
        return 0.0;
    }
    let mut precision = Vec::with_capacity(ranked_tp.len());
    let mut recall = Vec::with_capacity(ranked_tp.len());
    let mut hits = 0usize;
    for (k, &tp) in ranked_tp.iter().enumerate() {
        if tp {
            hits += 1;
        }
        precision.push(hits as f64 / (k + 1) as f64);
        recall.push(hits as f64 / n_gold as f64);
    }
    for k in (0..precision.len().saturating_sub(1)).rev() {
        precision[k] = precision[k].max(precision[k + 1]);
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for (p, r) in precision.iter().zip(&recall) {
        ap += (r - prev_recall) * p;
        prev_recall = *r;
    }
    ap
}

/// Per-class AP, median AP and mean AP over exactly `num_classes` classes.
/// A class without gold boxes scores 0.
pub fn score_detection_ap(
    predicted: &[OutputRecord],
    gold: &[GoldBox],
    num_classes: u32,
    iou_threshold: f64,
) -> ScoreReport {
    let dets: Vec<DetectionRef<'_>> = predicted
        .iter()
        .filter_map(DetectionRef::from_record)
        .collect();
    let mut per_class = Vec::with_capacity(num_classes as usize);
    for class in 1..=num_classes {
        let mut ranked: Vec<DetectionRef<'_>> = dets
            .iter()
            .filter(|d| d.category == class)
            .copied()
            .collect();
        ranked.sort_by(|a, b| b.confidence.total_cmp(&a.confidence));
        let class_gold: Vec<GoldBox> = gold
            .iter()
            .filter(|g| g.category == class)
            .cloned()
            .collect();
        let tp = match_detections(&ranked, &class_gold, iou_threshold);
        per_class.push(average_precision(&tp, class_gold.len()));
    }
    let mean = if per_class.is_empty() {
        0.0
    } else {
        per_class.iter().sum::<f64>() / per_class.len() as f64
    };
    ScoreReport::Ap {
        median: median(&per_class),
        mean,
        per_class,
    }
}

fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid]
    } else {
        (v[mid - 1] + v[mid]) / 2.0
    }
}

/// Scores a fused (or single-system) output with the task's metric.
pub fn score_output(
    output: &[OutputRecord],
    gold: &GoldStandard,
    inventory: &Inventory,
) -> Result<ScoreReport> {
    if inventory.task() != gold.task() {
        return Err(Error::TaskMismatch {
            expected: gold.task(),
            found: inventory.task(),
        });
    }
    if let Some(r) = output.iter().find(|r| r.task() != gold.task()) {
        return Err(Error::TaskMismatch {
            expected: gold.task(),
            found: r.task(),
        });
    }
    Ok(match gold {
        GoldStandard::SlotFilling(_) => score_slotfill(output, gold),
        GoldStandard::EntityLinking(_) => {
            score_ceafm(&clusters_from_records(output), &gold_clusters(gold))
        }
        GoldStandard::ObjectDetection(boxes) => {
            let classes = match inventory {
                Inventory::Categories(c) => *c,
                _ => unreachable!("task checked above"),
            };
            score_detection_ap(output, boxes, classes, DETECTION_IOU)
        }
    })
}

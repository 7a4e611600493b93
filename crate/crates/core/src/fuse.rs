//! Turns accepted instances into one system-like output, and the
//! count-threshold voting baseline.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};

use crate::align::ValueGroup;
use crate::error::{Error, Result};
use crate::features::FeatureVector;
use crate::gold::GoldStandard;
use crate::model::{BBox, Inventory, Key, OutputRecord, Provenance, TaskKind, Value};
use crate::score::{score_output, ScoreReport};
use crate::stacker::Instance;

/// System id written on fused output records.
pub const FUSED_SYSTEM: &str = "swaf";

fn meta(inst: &Instance) -> f64 {
    inst.meta_confidence.unwrap_or(0.0)
}

fn fused_record(inst: &Instance, key: Key, provenance: Provenance, value: Value) -> OutputRecord {
    OutputRecord {
        system: FUSED_SYSTEM.to_string(),
        key,
        value,
        confidence: meta(inst),
        provenance,
    }
}

fn emit(inst: &Instance) -> OutputRecord {
    let canonical = inst.group.canonical_record();
    fused_record(
        inst,
        canonical.key.clone(),
        canonical.provenance.clone(),
        canonical.value.clone(),
    )
}

/// Higher meta-confidence first, then earlier roster position of the
/// canonical record, then value order.
fn rank(a: &Instance, b: &Instance) -> Ordering {
    meta(b)
        .total_cmp(&meta(a))
        .then(
            a.group
                .canonical_position()
                .cmp(&b.group.canonical_position()),
        )
        .then_with(|| a.canonical_value().total_cmp(b.canonical_value()))
}

fn sort_output(out: &mut [OutputRecord]) {
    out.sort_by(|a, b| a.key.cmp(&b.key).then_with(|| a.value.total_cmp(&b.value)));
}

/// Keeps every accepted fill of a list-valued slot and the single most
/// confident fill of a single-valued slot.
pub fn postprocess_slotfill(
    accepted: &[Instance],
    inventory: &Inventory,
) -> Result<Vec<OutputRecord>> {
    let mut single: BTreeMap<&Key, &Instance> = BTreeMap::new();
    let mut out = Vec::new();
    for inst in accepted {
        let Key::Slot { slot, .. } = inst.key() else {
            return Err(Error::TaskMismatch {
                expected: TaskKind::SlotFilling,
                found: inst.key().task(),
            });
        };
        let spec = inventory
            .slot(slot)
            .ok_or_else(|| Error::UnknownSlot(slot.clone()))?;
        if spec.single_valued {
            match single.get(inst.key()) {
                Some(best) if rank(inst, best) != Ordering::Less => {}
                _ => {
                    single.insert(inst.key(), inst);
                }
            }
        } else {
            out.push(emit(inst));
        }
    }
    out.extend(single.values().map(|inst| emit(inst)));
    sort_output(&mut out);
    Ok(out)
}

#[derive(Debug, Clone)]
struct DisjointSet {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        DisjointSet {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        let mut root = x;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        while self.parent[x] != root {
            let next = self.parent[x];
            self.parent[x] = root;
            x = next;
        }
        root
    }

    fn union(&mut self, a: usize, b: usize) {
        let (a, b) = (self.find(a), self.find(b));
        if a == b {
            return;
        }
        match self.rank[a].cmp(&self.rank[b]) {
            Ordering::Less => self.parent[a] = b,
            Ordering::Greater => self.parent[b] = a,
            Ordering::Equal => {
                self.parent[b] = a;
                self.rank[a] += 1;
            }
        }
    }
}

/// A merged NIL cluster with a fresh id.
#[derive(Debug, Clone, PartialEq)]
pub struct NilCluster {
    pub id: String,
    pub mentions: Vec<OutputRecord>,
}

/// Merges per-system NIL clusters that share at least one overlapping
/// mention (transitively). Exact duplicate mentions inside a merged cluster
/// collapse to the most confident one. Clusters are numbered `NILE0001`,
/// `NILE0002`, ... in order of their smallest mention.
pub fn merge_nil_clusters(accepted: &[Instance]) -> Vec<NilCluster> {
    let mut cluster_ids: Vec<&Key> = accepted.iter().map(Instance::key).collect();
    cluster_ids.sort();
    cluster_ids.dedup();
    let node_of: HashMap<&Key, usize> = cluster_ids
        .iter()
        .enumerate()
        .map(|(i, k)| (*k, i))
        .collect();

    let mut by_doc: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, inst) in accepted.iter().enumerate() {
        if let Some(span) = inst.canonical_value().span() {
            by_doc.entry(&span.docid).or_default().push(i);
        }
    }
    let mut sets = DisjointSet::new(cluster_ids.len());
    for members in by_doc.values() {
        for (a_pos, &a) in members.iter().enumerate() {
            let sa = accepted[a].canonical_value().span().unwrap();
            for &b in &members[a_pos + 1..] {
                let sb = accepted[b].canonical_value().span().unwrap();
                if sa.overlaps(sb) {
                    sets.union(node_of[accepted[a].key()], node_of[accepted[b].key()]);
                }
            }
        }
    }

    let mut components: BTreeMap<usize, Vec<&Instance>> = BTreeMap::new();
    for inst in accepted {
        let root = sets.find(node_of[inst.key()]);
        components.entry(root).or_default().push(inst);
    }
    let mut merged: Vec<Vec<&Instance>> = components
        .into_values()
        .map(|mut insts| {
            insts.sort_by(|a, b| {
                a.canonical_value()
                    .span()
                    .cmp(&b.canonical_value().span())
                    .then_with(|| rank(a, b))
            });
            insts.dedup_by(|later, earlier| {
                later.canonical_value().span() == earlier.canonical_value().span()
            });
            insts
        })
        .collect();
    merged.sort_by(|a, b| {
        a[0].canonical_value()
            .span()
            .cmp(&b[0].canonical_value().span())
    });

    merged
        .into_iter()
        .enumerate()
        .map(|(i, insts)| {
            let id = format!("NILE{:04}", i + 1);
            let mentions = insts
                .into_iter()
                .map(|inst| {
                    let c = inst.group.canonical_record();
                    fused_record(
                        inst,
                        Key::Entity { id: id.clone() },
                        c.provenance.clone(),
                        c.value.clone(),
                    )
                })
                .collect();
            NilCluster { id, mentions }
        })
        .collect()
}

/// KB-linked mentions pass through; NIL mentions are merged across systems.
/// A mention span that ends up under several ids is kept once, under the
/// most confident assignment.
pub fn postprocess_entity_linking(accepted: &[Instance]) -> Vec<OutputRecord> {
    let (nil, kb): (Vec<Instance>, Vec<Instance>) = accepted
        .iter()
        .cloned()
        .partition(|inst| inst.key().is_nil());
    let mut out: Vec<OutputRecord> = kb.iter().map(emit).collect();
    for cluster in merge_nil_clusters(&nil) {
        out.extend(cluster.mentions);
    }
    let mut best: BTreeMap<crate::model::TextSpan, OutputRecord> = BTreeMap::new();
    for r in out {
        let span = r.value.span().expect("mention").clone();
        match best.get(&span) {
            Some(kept) if kept.confidence >= r.confidence => {}
            _ => {
                best.insert(span, r);
            }
        }
    }
    let mut out: Vec<OutputRecord> = best.into_values().collect();
    sort_output(&mut out);
    out
}

/// One contributor's box: the only box, the more confident of two, or the
/// box with the largest summed pairwise intersection area with the others.
/// Ties go to the earlier roster position.
pub fn select_bounding_box(group: &ValueGroup) -> BBox {
    let members = group.members();
    let boxes: Vec<&BBox> = members
        .iter()
        .map(|r| r.bbox().expect("detection group"))
        .collect();
    match members.len() {
        1 => *boxes[0],
        2 => {
            if members[1].confidence > members[0].confidence {
                *boxes[1]
            } else {
                *boxes[0]
            }
        }
        _ => {
            let mut best = 0;
            let mut best_sum = f64::NEG_INFINITY;
            for (x, bx) in boxes.iter().enumerate() {
                let sum: f64 = boxes
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| *i != x)
                    .map(|(_, b)| b.intersection_area(bx))
                    .sum();
                if sum > best_sum {
                    best = x;
                    best_sum = sum;
                }
            }
            *boxes[best]
        }
    }
}

pub fn postprocess_detection(accepted: &[Instance]) -> Vec<OutputRecord> {
    let mut out: Vec<OutputRecord> = accepted
        .iter()
        .map(|inst| {
            let bbox = select_bounding_box(&inst.group);
            let Value::Detection { category, .. } = inst.canonical_value() else {
                unreachable!("detection group")
            };
            fused_record(
                inst,
                inst.key().clone(),
                Provenance::Box(bbox),
                Value::Detection {
                    category: *category,
                    bbox,
                },
            )
        })
        .collect();
    sort_output(&mut out);
    out
}

/// Task-appropriate post-processing of accepted instances.
pub fn fuse(
    task: TaskKind,
    accepted: &[Instance],
    inventory: &Inventory,
) -> Result<Vec<OutputRecord>> {
    match task {
        TaskKind::SlotFilling => postprocess_slotfill(accepted, inventory),
        TaskKind::EntityLinking => Ok(postprocess_entity_linking(accepted)),
        TaskKind::ObjectDetection => Ok(postprocess_detection(accepted)),
    }
}

/// Groups with at least `threshold` agreeing systems.
pub fn vote_select(groups: &[ValueGroup], threshold: usize) -> Vec<&ValueGroup> {
    groups.iter().filter(|g| g.n() >= threshold).collect()
}

/// Voting output at one threshold. Each kept group is scored by its vote
/// share `N / S` and post-processed like stacker output.
pub fn vote_output(
    groups: &[ValueGroup],
    threshold: usize,
    systems: usize,
    inventory: &Inventory,
) -> Result<Vec<OutputRecord>> {
    let instances: Vec<Instance> = vote_select(groups, threshold)
        .into_iter()
        .map(|g| {
            let mut inst = Instance::new(g.clone(), FeatureVector::new(Vec::new()));
            inst.meta_confidence = Some(g.n() as f64 / systems as f64);
            inst
        })
        .collect();
    fuse(inventory.task(), &instances, inventory)
}

#[derive(Debug, Clone, PartialEq)]
pub struct VoteSweep {
    /// Score at each threshold `1..=S`.
    pub curve: Vec<(usize, ScoreReport)>,
    pub best_threshold: usize,
    pub best_output: Vec<OutputRecord>,
    pub best_score: ScoreReport,
}

/// Sweeps the agreement threshold against gold and keeps the best one
/// (F1, or mean AP for detection; ties to the lower threshold).
pub fn oracle_vote(
    groups: &[ValueGroup],
    gold: &GoldStandard,
    inventory: &Inventory,
    systems: usize,
) -> Result<VoteSweep> {
    if systems == 0 {
        return Err(Error::InvalidRecord(
            "voting needs at least one system".into(),
        ));
    }
    let mut curve = Vec::with_capacity(systems);
    let mut best: Option<(usize, Vec<OutputRecord>, ScoreReport)> = None;
    for t in 1..=systems {
        let output = vote_output(groups, t, systems, inventory)?;
        let report = score_output(&output, gold, inventory)?;
        if best
            .as_ref()
            .is_none_or(|(_, _, b)| report.headline() > b.headline())
        {
            best = Some((t, output, report.clone()));
        }
        curve.push((t, report));
    }
    let (best_threshold, best_output, best_score) = best.expect("at least one threshold");
    Ok(VoteSweep {
        curve,
        best_threshold,
        best_output,
        best_score,
    })
}

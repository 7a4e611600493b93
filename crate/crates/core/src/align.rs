//! Aligns records from different systems into value groups.
//!
//! Two records assert the same value when their fills are identical after
//! normalization (slot filling), their mentions overlap by at least one
//! character in the same document (entity linking), or their boxes share a
//! category and have IOU above 0.5 (detection). The overlap relations are not
//! transitive, so groups are connected components of the pairwise relation,
//! grown from the most confident unassigned record and limited to one record
//! per system.

use std::cmp::Ordering;
use std::collections::{BTreeMap, VecDeque};

use crate::error::{Error, Result};
use crate::model::{normalize_fill, BBox, Key, OutputRecord, Roster, TaskKind, Value};

/// Two detections match only when IOU is strictly above this value.
pub const SAME_OBJECT_IOU: f64 = 0.5;

pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection_area(b);
    if inter <= 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

pub fn same_value(a: &Value, b: &Value, task: TaskKind) -> Result<bool> {
    for found in [a.task(), b.task()] {
        if found != task {
            return Err(Error::TaskMismatch {
                expected: task,
                found,
            });
        }
    }
    Ok(match (a, b) {
        (Value::Fill(x), Value::Fill(y)) => normalize_fill(x) == normalize_fill(y),
        (Value::Mention { span: x, .. }, Value::Mention { span: y, .. }) => x.overlaps(y),
        (
            Value::Detection {
                category: ca,
                bbox: ba,
            },
            Value::Detection {
                category: cb,
                bbox: bb,
            },
        ) => ca == cb && iou(ba, bb) > SAME_OBJECT_IOU,
        _ => unreachable!("task checked above"),
    })
}

/// All records, across systems, judged to assert one value for one key.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueGroup {
    key: Key,
    /// Contributing records in roster order, at most one per system.
    members: Vec<OutputRecord>,
    positions: Vec<usize>,
    canonical: usize,
}

impl ValueGroup {
    /// Builds a group from records of distinct systems. The canonical record
    /// is the most confident one, ties going to the earlier roster position.
    pub fn new(key: Key, records: Vec<OutputRecord>, roster: &Roster) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::InvalidRecord(
                "a value group needs at least one record".into(),
            ));
        }
        let mut indexed = Vec::with_capacity(records.len());
        for r in records {
            if r.key != key {
                return Err(Error::MixedKeys);
            }
            let pos = roster
                .index_of(&r.system)
                .ok_or_else(|| Error::UnknownSystem(r.system.clone()))?;
            indexed.push((pos, r));
        }
        indexed.sort_by_key(|(pos, _)| *pos);
        if indexed.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::InvalidRecord(
                "a system contributes more than one record to a group".into(),
            ));
        }
        let mut canonical = 0;
        for (i, (_, r)) in indexed.iter().enumerate() {
            if r.confidence > indexed[canonical].1.confidence {
                canonical = i;
            }
        }
        let (positions, members) = indexed.into_iter().unzip();
        Ok(ValueGroup {
            key,
            members,
            positions,
            canonical,
        })
    }

    pub fn key(&self) -> &Key {
        &self.key
    }

    pub fn task(&self) -> TaskKind {
        self.key.task()
    }

    /// Number of contributing systems.
    pub fn n(&self) -> usize {
        self.members.len()
    }

    pub fn members(&self) -> &[OutputRecord] {
        &self.members
    }

    /// Roster positions of the members, parallel to [`ValueGroup::members`].
    pub fn positions(&self) -> &[usize] {
        &self.positions
    }

    pub fn member(&self, system: &str) -> Option<&OutputRecord> {
        self.members.iter().find(|r| r.system == system)
    }

    pub fn canonical_record(&self) -> &OutputRecord {
        &self.members[self.canonical]
    }

    pub fn canonical_value(&self) -> &Value {
        &self.canonical_record().value
    }

    /// Roster position of the canonical record's system.
    pub fn canonical_position(&self) -> usize {
        self.positions[self.canonical]
    }
}

/// Partitions the records of one key into value groups.
pub fn group_values(
    records: &[OutputRecord],
    task: TaskKind,
    roster: &Roster,
) -> Result<Vec<ValueGroup>> {
    let Some(first) = records.first() else {
        return Ok(Vec::new());
    };
    let key = &first.key;
    let mut positions = Vec::with_capacity(records.len());
    for r in records {
        if &r.key != key {
            return Err(Error::MixedKeys);
        }
        if r.task() != task {
            return Err(Error::TaskMismatch {
                expected: task,
                found: r.task(),
            });
        }
        positions.push(
            roster
                .index_of(&r.system)
                .ok_or_else(|| Error::UnknownSystem(r.system.clone()))?,
        );
    }

    let mut order: Vec<usize> = (0..records.len()).collect();
    order.sort_by(|&i, &j| {
        records[j]
            .confidence
            .total_cmp(&records[i].confidence)
            .then(positions[i].cmp(&positions[j]))
            .then_with(|| records[i].value.total_cmp(&records[j].value))
            .then(Ordering::Equal)
    });

    let mut assigned = vec![false; records.len()];
    let mut groups = Vec::new();
    for &seed in &order {
        if assigned[seed] {
            continue;
        }
        assigned[seed] = true;
        let mut members = vec![seed];
        let mut systems = vec![positions[seed]];
        let mut queue = VecDeque::from([seed]);
        while let Some(u) = queue.pop_front() {
            for &v in &order {
                if assigned[v] || systems.contains(&positions[v]) {
                    continue;
                }
                if same_value(&records[u].value, &records[v].value, task)? {
                    assigned[v] = true;
                    systems.push(positions[v]);
                    members.push(v);
                    queue.push_back(v);
                }
            }
        }
        let group_records = members.into_iter().map(|i| records[i].clone()).collect();
        groups.push(ValueGroup::new(key.clone(), group_records, roster)?);
    }
    Ok(groups)
}

/// Groups every key of a record set; keys are visited in sorted order.
pub fn group_all(
    records: &[OutputRecord],
    task: TaskKind,
    roster: &Roster,
) -> Result<Vec<ValueGroup>> {
    let mut by_key: BTreeMap<&Key, Vec<OutputRecord>> = BTreeMap::new();
    for r in records {
        by_key.entry(&r.key).or_default().push(r.clone());
    }
    let mut out = Vec::new();
    for records in by_key.values() {
        out.extend(group_values(records, task, roster)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::TextSpan;
    use proptest::prelude::*;

    fn bx(a: f64, b: f64, c: f64, d: f64) -> BBox {
        BBox::new(a, b, c, d)
    }

    /// Rectangle oracle: intersection by explicit overlap of projections.
    fn iou_oracle(a: &BBox, b: &BBox) -> f64 {
        let ix = (a.xmax.min(b.xmax) - a.xmin.max(b.xmin)).max(0.0);
        let iy = (a.ymax.min(b.ymax) - a.ymin.max(b.ymin)).max(0.0);
        let inter = ix * iy;
        inter
            / ((a.xmax - a.xmin) * (a.ymax - a.ymin) + (b.xmax - b.xmin) * (b.ymax - b.ymin)
                - inter)
    }

    #[test]
    fn iou_examples() {
        let a = bx(0., 0., 10., 10.);
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&a, &bx(20., 20., 30., 30.)), 0.0);
        let third = iou(&a, &bx(5., 0., 15., 10.));
        assert!((third - 50.0 / 150.0).abs() < 1e-15);
        assert_eq!(iou_oracle(&a, &bx(5., 0., 15., 10.)), 50.0 / 150.0);
    }

    #[test]
    fn same_value_examples() {
        let t = TaskKind::SlotFilling;
        assert!(same_value(
            &Value::Fill("Obama".into()),
            &Value::Fill("obama ".into()),
            t
        )
        .unwrap());

        let m = |s, e| Value::Mention {
            span: TextSpan::new("doc1", s, e),
            entity_type: "PER".into(),
        };
        assert!(same_value(&m(100, 150), &m(150, 200), TaskKind::EntityLinking).unwrap());
        assert!(!same_value(&m(100, 149), &m(150, 200), TaskKind::EntityLinking).unwrap());

        let d = |b| Value::Detection {
            category: 1,
            bbox: b,
        };
        // IOU = 100 / 200 is not strictly above 0.5
        assert!(!same_value(
            &d(bx(0., 0., 10., 10.)),
            &d(bx(0., 0., 10., 20.)),
            TaskKind::ObjectDetection
        )
        .unwrap());
        let other_cat = Value::Detection {
            category: 2,
            bbox: bx(0., 0., 10., 10.),
        };
        assert!(!same_value(
            &d(bx(0., 0., 10., 10.)),
            &other_cat,
            TaskKind::ObjectDetection
        )
        .unwrap());
        assert!(matches!(
            same_value(
                &d(bx(0., 0., 1., 1.)),
                &Value::Fill("x".into()),
                TaskKind::ObjectDetection
            ),
            Err(Error::TaskMismatch { .. })
        ));
    }

    #[test]
    fn identical_fills_form_one_group() {
        let roster = Roster::new(["a", "b", "c"]).unwrap();
        let recs: Vec<_> = ["a", "b", "c"]
            .iter()
            .map(|s| {
                OutputRecord::slot_fill(s, "q", "per:age", "44", 0.5, TextSpan::new("d", 0, 1))
            })
            .collect();
        let groups = group_values(&recs, TaskKind::SlotFilling, &roster).unwrap();
        assert_eq!(groups.len(), 1);
        assert_eq!(groups[0].n(), 3);
        // equal confidences: roster order decides
        assert_eq!(groups[0].canonical_record().system, "a");
    }

    #[test]
    fn detections_split_by_iou() {
        let roster = Roster::new(["a", "b", "c"]).unwrap();
        // a/b: IOU = 60/100 = 0.6; c is far from both
        let a = OutputRecord::detection("a", "img", 1, bx(0., 0., 10., 10.), 0.9);
        let b = OutputRecord::detection("b", "img", 1, bx(0., 0., 10., 6.), 0.8);
        let c = OutputRecord::detection("c", "img", 1, bx(8., 0., 18., 10.), 0.7);
        assert!((iou_oracle(a.bbox().unwrap(), b.bbox().unwrap()) - 0.6).abs() < 1e-12);
        assert!(iou_oracle(a.bbox().unwrap(), c.bbox().unwrap()) < 0.2);
        assert!(iou_oracle(b.bbox().unwrap(), c.bbox().unwrap()) < 0.2);
        let groups = group_values(&[c, a, b], TaskKind::ObjectDetection, &roster).unwrap();
        let sizes: Vec<usize> = groups.iter().map(ValueGroup::n).collect();
        assert_eq!(sizes, vec![2, 1]);
    }

    #[test]
    fn overlap_chain_is_one_group() {
        let roster = Roster::new(["a", "b", "c"]).unwrap();
        let a = OutputRecord::mention("a", "E", "PER", TextSpan::new("d", 0, 10), 0.9);
        let b = OutputRecord::mention("b", "E", "PER", TextSpan::new("d", 8, 20), 0.8);
        let c = OutputRecord::mention("c", "E", "PER", TextSpan::new("d", 18, 30), 0.7);
        assert!(!a.span().unwrap().overlaps(c.span().unwrap()));
        let groups = group_values(&[a, b, c], TaskKind::EntityLinking, &roster).unwrap();
        assert_eq!(groups.len(), 1);
        assert_eq!(groups[0].n(), 3);
    }

    #[test]
    fn one_record_per_system() {
        let roster = Roster::new(["a", "b"]).unwrap();
        let recs = vec![
            OutputRecord::mention("a", "E", "PER", TextSpan::new("d", 0, 10), 0.9),
            OutputRecord::mention("a", "E", "PER", TextSpan::new("d", 5, 12), 0.4),
            OutputRecord::mention("b", "E", "PER", TextSpan::new("d", 6, 9), 0.5),
        ];
        let groups = group_values(&recs, TaskKind::EntityLinking, &roster).unwrap();
        assert_eq!(groups.len(), 2);
        assert_eq!(groups[0].n(), 2);
        assert_eq!(groups[0].member("a").unwrap().confidence, 0.9);
        assert_eq!(groups[1].n(), 1);
    }

    #[test]
    fn mixed_keys_rejected() {
        let roster = Roster::new(["a"]).unwrap();
        let recs = vec![
            OutputRecord::slot_fill("a", "q1", "s", "x", 0.5, TextSpan::new("d", 0, 1)),
            OutputRecord::slot_fill("a", "q2", "s", "x", 0.5, TextSpan::new("d", 0, 1)),
        ];
        assert!(matches!(
            group_values(&recs, TaskKind::SlotFilling, &roster),
            Err(Error::MixedKeys)
        ));
    }

    fn arb_box() -> impl Strategy<Value = BBox> {
        (0.0..50.0f64, 0.0..50.0f64, 0.5..40.0f64, 0.5..40.0f64)
            .prop_map(|(x, y, w, h)| BBox::new(x, y, x + w, y + h))
    }

    proptest! {
        #[test]
        fn iou_is_symmetric_and_bounded(a in arb_box(), b in arb_box()) {
            let ab = iou(&a, &b);
            prop_assert!((0.0..=1.0).contains(&ab));
            prop_assert_eq!(ab, iou(&b, &a));
            prop_assert!((iou(&a, &a) - 1.0).abs() < 1e-15);
            prop_assert!((ab - iou_oracle(&a, &b)).abs() < 1e-12);
        }

        #[test]
        fn grouping_is_a_permutation_invariant_partition(
            boxes in proptest::collection::vec((arb_box(), 1u32..3, 0.0..1.0f64, 0usize..4), 1..12),
            seed in any::<u64>(),
        ) {
            let roster = Roster::new(["s0", "s1", "s2", "s3"]).unwrap();
            let recs: Vec<OutputRecord> = boxes
                .iter()
                .map(|(b, c, conf, s)| OutputRecord::detection(&format!("s{s}"), "img", *c, *b, *conf))
                .collect();
            let recs = crate::model::dedup_records(recs, &roster);
            let groups = group_values(&recs, TaskKind::ObjectDetection, &roster).unwrap();
            let total: usize = groups.iter().map(ValueGroup::n).sum();
            prop_assert_eq!(total, recs.len());

            let mut shuffled = recs.clone();
            let len = shuffled.len();
            let mut state = seed;
            for i in (1..len).rev() {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                shuffled.swap(i, (state >> 33) as usize % (i + 1));
            }
            let again = group_values(&shuffled, TaskKind::ObjectDetection, &roster).unwrap();
            prop_assert_eq!(groups, again);
        }

        #[test]
        fn fill_groups_are_equality_classes(
            fills in proptest::collection::vec((0usize..4, 0usize..3, 0.0..1.0f64), 1..12),
        ) {
            let words = ["Paris", "paris ", "Lyon", "Nice"];
            let roster = Roster::new(["s0", "s1", "s2"]).unwrap();
            let recs: Vec<OutputRecord> = fills
                .iter()
                .map(|(w, s, c)| OutputRecord::slot_fill(&format!("s{s}"), "q", "x", words[*w], *c, TextSpan::new("d", 0, 1)))
                .collect();
            let recs = crate::model::dedup_records(recs, &roster);
            let groups = group_values(&recs, TaskKind::SlotFilling, &roster).unwrap();
            let mut classes: Vec<String> = groups
                .iter()
                .map(|g| normalize_fill(match g.canonical_value() { Value::Fill(f) => f, _ => unreachable!() }))
                .collect();
            for g in &groups {
                let norm = normalize_fill(match g.canonical_value() { Value::Fill(f) => f, _ => unreachable!() });
                for m in g.members() {
                    match &m.value { Value::Fill(f) => prop_assert_eq!(normalize_fill(f), norm.clone()), _ => unreachable!() }
                }
            }
            classes.sort();
            let n_classes = classes.len();
            classes.dedup();
            prop_assert_eq!(classes.len(), n_classes);
        }
    }
}

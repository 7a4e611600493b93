//! Domain types shared by every stage: tasks, keys, values, provenance and
//! the roster of component systems.
//!
//! Every system output is reduced to a key-value pair. The key names the
//! question (query + slot, KB or NIL id, image id) and the value is one
//! system's answer to it, carried together with the system's confidence and
//! the provenance that justifies the answer.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TaskKind {
    SlotFilling,
    EntityLinking,
    ObjectDetection,
}

impl TaskKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::SlotFilling => "slot-filling",
            TaskKind::EntityLinking => "entity-linking",
            TaskKind::ObjectDetection => "object-detection",
        }
    }

    /// Slot filling and entity linking carry text provenance.
    pub fn is_kbp(self) -> bool {
        !matches!(self, TaskKind::ObjectDetection)
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "slot-filling" | "slot_filling" | "slot" | "cssf" => Ok(TaskKind::SlotFilling),
            "entity-linking" | "entity_linking" | "entity" | "tedl" => Ok(TaskKind::EntityLinking),
            "object-detection" | "object_detection" | "detection" | "det" => {
                Ok(TaskKind::ObjectDetection)
            }
            other => Err(format!("unknown task `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Key {
    /// Query entity plus slot type, e.g. (`CS15_ENG_0001`, `per:age`).
    Slot {
        query: String,
        slot: String,
    },
    /// KB id, or a NIL cluster id namespaced by the emitting system.
    Entity {
        id: String,
    },
    Image {
        id: String,
    },
}

impl Key {
    pub fn task(&self) -> TaskKind {
        match self {
            Key::Slot { .. } => TaskKind::SlotFilling,
            Key::Entity { .. } => TaskKind::EntityLinking,
            Key::Image { .. } => TaskKind::ObjectDetection,
        }
    }

    pub fn is_nil(&self) -> bool {
        match self {
            Key::Entity { id } => is_nil_id(id),
            _ => false,
        }
    }
}

impl fmt::Display for Key {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Key::Slot { query, slot } => write!(f, "{query}/{slot}"),
            Key::Entity { id } | Key::Image { id } => f.write_str(id),
        }
    }
}

/// True for `NIL…` ids and for namespaced `system:NIL…` ids.
pub fn is_nil_id(id: &str) -> bool {
    let local = id.rsplit(':').next().unwrap_or(id);
    local.starts_with("NIL")
}

/// A closed character interval `[start, end]` inside one document.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TextSpan {
    pub docid: String,
    pub start: i64,
    pub end: i64,
}

impl TextSpan {
    pub fn new(docid: impl Into<String>, start: i64, end: i64) -> Self {
        TextSpan {
            docid: docid.into(),
            start,
            end,
        }
    }

    pub fn len(&self) -> i64 {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() <= 0
    }

    /// Number of shared offsets; 0 across different documents.
    pub fn intersection_len(&self, other: &TextSpan) -> i64 {
        if self.docid != other.docid {
            return 0;
        }
        (self.end.min(other.end) - self.start.max(other.start) + 1).max(0)
    }

    pub fn union_len(&self, other: &TextSpan) -> i64 {
        self.len() + other.len() - self.intersection_len(other)
    }

    pub fn overlaps(&self, other: &TextSpan) -> bool {
        self.intersection_len(other) > 0
    }

    fn check(&self) -> Result<()> {
        if self.docid.trim().is_empty() {
            return Err(Error::InvalidRecord("empty docid".into()));
        }
        if self.start < 0 || self.end < 0 {
            return Err(Error::NegativeOffset {
                docid: self.docid.clone(),
                start: self.start,
                end: self.end,
            });
        }
        if self.end < self.start {
            return Err(Error::InvalidSpan {
                docid: self.docid.clone(),
                start: self.start,
                end: self.end,
            });
        }
        Ok(())
    }
}

impl fmt::Display for TextSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}-{}", self.docid, self.start, self.end)
    }
}

/// Axis-aligned box in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub xmin: f64,
    pub ymin: f64,
    pub xmax: f64,
    pub ymax: f64,
}

impl BBox {
    pub fn new(xmin: f64, ymin: f64, xmax: f64, ymax: f64) -> Self {
        BBox {
            xmin,
            ymin,
            xmax,
            ymax,
        }
    }

    pub fn width(&self) -> f64 {
        self.xmax - self.xmin
    }

    pub fn height(&self) -> f64 {
        self.ymax - self.ymin
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn intersection_area(&self, other: &BBox) -> f64 {
        let w = self.xmax.min(other.xmax) - self.xmin.max(other.xmin);
        let h = self.ymax.min(other.ymax) - self.ymin.max(other.ymin);
        if w <= 0.0 || h <= 0.0 {
            0.0
        } else {
            w * h
        }
    }

    pub fn is_valid(&self) -> bool {
        let coords = [self.xmin, self.ymin, self.xmax, self.ymax];
        coords.iter().all(|c| c.is_finite()) && self.xmax > self.xmin && self.ymax > self.ymin
    }

    fn bits(&self) -> [u64; 4] {
        [
            self.xmin.to_bits(),
            self.ymin.to_bits(),
            self.xmax.to_bits(),
            self.ymax.to_bits(),
        ]
    }

    fn total_cmp(&self, other: &BBox) -> Ordering {
        self.xmin
            .total_cmp(&other.xmin)
            .then(self.ymin.total_cmp(&other.ymin))
            .then(self.xmax.total_cmp(&other.xmax))
            .then(self.ymax.total_cmp(&other.ymax))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Fill(String),
    Mention { span: TextSpan, entity_type: String },
    Detection { category: u32, bbox: BBox },
}

/// Hashable identity of a value, used for per-system deduplication.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ValueId {
    Fill(String),
    Mention(TextSpan),
    Detection(u32, [u64; 4]),
}

impl Value {
    pub fn task(&self) -> TaskKind {
        match self {
            Value::Fill(_) => TaskKind::SlotFilling,
            Value::Mention { .. } => TaskKind::EntityLinking,
            Value::Detection { .. } => TaskKind::ObjectDetection,
        }
    }

    pub fn id(&self) -> ValueId {
        match self {
            Value::Fill(s) => ValueId::Fill(normalize_fill(s)),
            Value::Mention { span, .. } => ValueId::Mention(span.clone()),
            Value::Detection { category, bbox } => ValueId::Detection(*category, bbox.bits()),
        }
    }

    /// Total order over values of one task, used for deterministic tie-breaks.
    pub fn total_cmp(&self, other: &Value) -> Ordering {
        match (self, other) {
            (Value::Fill(a), Value::Fill(b)) => normalize_fill(a)
                .cmp(&normalize_fill(b))
                .then_with(|| a.cmp(b)),
            (
                Value::Mention {
                    span: a,
                    entity_type: ta,
                },
                Value::Mention {
                    span: b,
                    entity_type: tb,
                },
            ) => a.cmp(b).then_with(|| ta.cmp(tb)),
            (
                Value::Detection {
                    category: ca,
                    bbox: ba,
                },
                Value::Detection {
                    category: cb,
                    bbox: bb,
                },
            ) => ca.cmp(cb).then_with(|| ba.total_cmp(bb)),
            _ => self.task().cmp(&other.task()),
        }
    }

    pub fn span(&self) -> Option<&TextSpan> {
        match self {
            Value::Mention { span, .. } => Some(span),
            _ => None,
        }
    }

    pub fn bbox(&self) -> Option<&BBox> {
        match self {
            Value::Detection { bbox, .. } => Some(bbox),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Provenance {
    Span(TextSpan),
    Box(BBox),
}

impl Provenance {
    pub fn span(&self) -> Option<&TextSpan> {
        match self {
            Provenance::Span(s) => Some(s),
            Provenance::Box(_) => None,
        }
    }

    pub fn bbox(&self) -> Option<&BBox> {
        match self {
            Provenance::Box(b) => Some(b),
            Provenance::Span(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputRecord {
    pub system: String,
    pub key: Key,
    pub value: Value,
    pub confidence: f64,
    pub provenance: Provenance,
}

impl OutputRecord {
    pub fn slot_fill(
        system: &str,
        query: &str,
        slot: &str,
        fill: &str,
        confidence: f64,
        provenance: TextSpan,
    ) -> Self {
        OutputRecord {
            system: system.to_string(),
            key: Key::Slot {
                query: query.to_string(),
                slot: slot.to_string(),
            },
            value: Value::Fill(fill.to_string()),
            confidence,
            provenance: Provenance::Span(provenance),
        }
    }

    pub fn mention(
        system: &str,
        id: &str,
        entity_type: &str,
        span: TextSpan,
        confidence: f64,
    ) -> Self {
        OutputRecord {
            system: system.to_string(),
            key: Key::Entity { id: id.to_string() },
            value: Value::Mention {
                span: span.clone(),
                entity_type: entity_type.to_string(),
            },
            confidence,
            provenance: Provenance::Span(span),
        }
    }

    pub fn detection(
        system: &str,
        image: &str,
        category: u32,
        bbox: BBox,
        confidence: f64,
    ) -> Self {
        OutputRecord {
            system: system.to_string(),
            key: Key::Image {
                id: image.to_string(),
            },
            value: Value::Detection { category, bbox },
            confidence,
            provenance: Provenance::Box(bbox),
        }
    }

    pub fn task(&self) -> TaskKind {
        self.key.task()
    }

    /// The text span that justifies this record (KBP tasks).
    pub fn span(&self) -> Option<&TextSpan> {
        self.provenance.span()
    }

    pub fn bbox(&self) -> Option<&BBox> {
        self.provenance.bbox()
    }
}

/// Ordered, duplicate-free list of system ids. Feature layouts index into it.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Roster {
    ids: Vec<String>,
}

impl Roster {
    pub fn new<I, S>(ids: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let ids: Vec<String> = ids.into_iter().map(Into::into).collect();
        for (i, id) in ids.iter().enumerate() {
            if id.is_empty() || id.contains(char::is_whitespace) {
                return Err(Error::InvalidRecord(format!("invalid system id `{id}`")));
            }
            if ids[..i].contains(id) {
                return Err(Error::InvalidRecord(format!("duplicate system id `{id}`")));
            }
        }
        Ok(Roster { ids })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|s| s == id)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index_of(id).is_some()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.ids.iter().map(String::as_str)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlotSpec {
    pub name: String,
    pub single_valued: bool,
}

/// The categorical vocabulary of a task: slot types, entity types, or the
/// number of object categories.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Inventory {
    Slots(Vec<SlotSpec>),
    EntityTypes(Vec<String>),
    Categories(u32),
}

pub const DEFAULT_ENTITY_TYPES: [&str; 5] = ["PER", "ORG", "GPE", "FAC", "LOC"];

impl Inventory {
    pub fn task(&self) -> TaskKind {
        match self {
            Inventory::Slots(_) => TaskKind::SlotFilling,
            Inventory::EntityTypes(_) => TaskKind::EntityLinking,
            Inventory::Categories(_) => TaskKind::ObjectDetection,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Inventory::Slots(s) => s.len(),
            Inventory::EntityTypes(t) => t.len(),
            Inventory::Categories(c) => *c as usize,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn names(&self) -> Vec<String> {
        match self {
            Inventory::Slots(s) => s.iter().map(|s| s.name.clone()).collect(),
            Inventory::EntityTypes(t) => t.clone(),
            Inventory::Categories(c) => (1..=*c).map(|c| c.to_string()).collect(),
        }
    }

    pub fn slot(&self, name: &str) -> Option<&SlotSpec> {
        match self {
            Inventory::Slots(s) => s.iter().find(|s| s.name == name),
            _ => None,
        }
    }

    /// Position of the record's category in the one-hot block.
    pub fn category_index(&self, key: &Key, value: &Value) -> Result<usize> {
        let found = match (self, key, value) {
            (Inventory::Slots(slots), Key::Slot { slot, .. }, _) => slots
                .iter()
                .position(|s| &s.name == slot)
                .ok_or(slot.clone()),
            (Inventory::EntityTypes(types), _, Value::Mention { entity_type, .. }) => types
                .iter()
                .position(|t| t == entity_type)
                .ok_or(entity_type.clone()),
            (Inventory::Categories(c), _, Value::Detection { category, .. }) => {
                if (1..=*c).contains(category) {
                    Ok(*category as usize - 1)
                } else {
                    Err(category.to_string())
                }
            }
            _ => {
                return Err(Error::TaskMismatch {
                    expected: self.task(),
                    found: key.task(),
                })
            }
        };
        found.map_err(Error::UnknownCategory)
    }

    /// Builds an inventory from the categories observed in `records`.
    /// Observed slots are treated as list-valued.
    pub fn infer(task: TaskKind, records: &[OutputRecord]) -> Inventory {
        match task {
            TaskKind::SlotFilling => {
                let mut names: Vec<String> = records
                    .iter()
                    .filter_map(|r| match &r.key {
                        Key::Slot { slot, .. } => Some(slot.clone()),
                        _ => None,
                    })
                    .collect();
                names.sort();
                names.dedup();
                Inventory::Slots(
                    names
                        .into_iter()
                        .map(|name| SlotSpec {
                            name,
                            single_valued: false,
                        })
                        .collect(),
                )
            }
            TaskKind::EntityLinking => {
                let mut types: Vec<String> =
                    DEFAULT_ENTITY_TYPES.iter().map(|s| s.to_string()).collect();
                for r in records {
                    if let Value::Mention { entity_type, .. } = &r.value {
                        if !types.contains(entity_type) {
                            types.push(entity_type.clone());
                        }
                    }
                }
                Inventory::EntityTypes(types)
            }
            TaskKind::ObjectDetection => {
                let max = records
                    .iter()
                    .filter_map(|r| match r.value {
                        Value::Detection { category, .. } => Some(category),
                        _ => None,
                    })
                    .max()
                    .unwrap_or(1);
                Inventory::Categories(max)
            }
        }
    }
}

/// Comparison form of a slot fill: NFC, trimmed, lowercased.
pub fn normalize_fill(fill: &str) -> String {
    fill.nfc().collect::<String>().trim().to_lowercase()
}

/// Checks a record against the roster and task and brings it into canonical
/// form: confidence clamped into `[0, 1]`, fill trimmed, NIL ids namespaced
/// by system.
pub fn validate_record(
    record: OutputRecord,
    roster: &Roster,
    task: TaskKind,
) -> Result<OutputRecord> {
    let OutputRecord {
        system,
        mut key,
        mut value,
        confidence,
        provenance,
    } = record;

    if !roster.contains(&system) {
        return Err(Error::UnknownSystem(system));
    }
    for found in [key.task(), value.task()] {
        if found != task {
            return Err(Error::TaskMismatch {
                expected: task,
                found,
            });
        }
    }
    if confidence.is_nan() {
        return Err(Error::InvalidRecord("confidence is NaN".into()));
    }
    let confidence = confidence.clamp(0.0, 1.0);

    match &mut key {
        Key::Slot { query, slot } => {
            if query.trim().is_empty() || slot.trim().is_empty() {
                return Err(Error::InvalidRecord("empty query or slot".into()));
            }
        }
        Key::Entity { id } => {
            if id.trim().is_empty() {
                return Err(Error::InvalidRecord("empty entity id".into()));
            }
            let prefix = format!("{system}:");
            if id.starts_with("NIL") && !id.starts_with(&prefix) {
                *id = format!("{prefix}{id}");
            }
        }
        Key::Image { id } => {
            if id.trim().is_empty() {
                return Err(Error::InvalidRecord("empty image id".into()));
            }
        }
    }

    match (&mut value, &provenance) {
        (Value::Fill(fill), Provenance::Span(span)) => {
            let trimmed = fill.trim();
            if normalize_fill(trimmed).is_empty() {
                return Err(Error::InvalidRecord("empty slot fill".into()));
            }
            *fill = trimmed.to_string();
            span.check()?;
        }
        (Value::Mention { span, entity_type }, Provenance::Span(prov)) => {
            span.check()?;
            if entity_type.trim().is_empty() {
                return Err(Error::InvalidRecord("empty entity type".into()));
            }
            if span != prov {
                return Err(Error::InvalidRecord(
                    "mention provenance differs from mention span".into(),
                ));
            }
        }
        (Value::Detection { category, bbox }, Provenance::Box(prov)) => {
            if !bbox.is_valid() {
                return Err(Error::DegenerateBox {
                    xmin: bbox.xmin,
                    ymin: bbox.ymin,
                    xmax: bbox.xmax,
                    ymax: bbox.ymax,
                });
            }
            if *category == 0 {
                return Err(Error::InvalidRecord("category ids start at 1".into()));
            }
            if bbox.bits() != prov.bits() {
                return Err(Error::InvalidRecord(
                    "detection provenance differs from detection box".into(),
                ));
            }
        }
        _ => {
            return Err(Error::InvalidRecord(
                "provenance kind does not match the task".into(),
            ))
        }
    }

    Ok(OutputRecord {
        system,
        key,
        value,
        confidence,
        provenance,
    })
}

/// Collapses repeated (system, key, value) records, keeping the most
/// confident one. Output is sorted by roster position, key, then value, so
/// the result does not depend on input order.
pub fn dedup_records(records: Vec<OutputRecord>, roster: &Roster) -> Vec<OutputRecord> {
    let mut best: BTreeMap<(usize, Key, ValueId), OutputRecord> = BTreeMap::new();
    for record in records {
        let slot = (
            roster.index_of(&record.system).unwrap_or(usize::MAX),
            record.key.clone(),
            record.value.id(),
        );
        match best.get(&slot) {
            Some(kept) if !prefer(&record, kept) => {}
            _ => {
                best.insert(slot, record);
            }
        }
    }
    best.into_values().collect()
}

fn prefer(candidate: &OutputRecord, kept: &OutputRecord) -> bool {
    match candidate.confidence.total_cmp(&kept.confidence) {
        Ordering::Greater => true,
        Ordering::Less => false,
        Ordering::Equal => candidate.value.total_cmp(&kept.value) == Ordering::Less,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn roster() -> Roster {
        Roster::new(["a", "b", "c"]).unwrap()
    }

    fn fill(conf: f64) -> OutputRecord {
        OutputRecord::slot_fill(
            "a",
            "q1",
            "per:age",
            " 44 ",
            conf,
            TextSpan::new("d1", 3, 4),
        )
    }

    #[test]
    fn valid_record_passes_unchanged() {
        let r = OutputRecord::slot_fill("a", "q1", "per:age", "44", 1.0, TextSpan::new("d1", 3, 4));
        assert_eq!(
            validate_record(r.clone(), &roster(), TaskKind::SlotFilling).unwrap(),
            r
        );
    }

    #[test]
    fn confidence_is_clamped() {
        for (raw, expected) in [(1.3, 1.0), (-0.2, 0.0), (0.42, 0.42)] {
            let v = validate_record(fill(raw), &roster(), TaskKind::SlotFilling).unwrap();
            assert_eq!(v.confidence, raw.clamp(0.0, 1.0));
            assert_eq!(v.confidence, expected);
        }
        assert!(validate_record(fill(f64::NAN), &roster(), TaskKind::SlotFilling).is_err());
    }

    #[test]
    fn fill_is_trimmed() {
        let v = validate_record(fill(0.5), &roster(), TaskKind::SlotFilling).unwrap();
        assert_eq!(v.value, Value::Fill("44".into()));
    }

    #[test]
    fn zero_width_box_is_degenerate() {
        let r = OutputRecord::detection("a", "img", 3, BBox::new(5.0, 5.0, 5.0, 9.0), 0.5);
        assert!(matches!(
            validate_record(r, &roster(), TaskKind::ObjectDetection),
            Err(Error::DegenerateBox { .. })
        ));
    }

    #[test]
    fn rejects_bad_records() {
        let r = fill(0.5);
        let mut unknown = r.clone();
        unknown.system = "zzz".into();
        assert!(matches!(
            validate_record(unknown, &roster(), TaskKind::SlotFilling),
            Err(Error::UnknownSystem(_))
        ));
        assert!(matches!(
            validate_record(r.clone(), &roster(), TaskKind::EntityLinking),
            Err(Error::TaskMismatch { .. })
        ));
        let neg = OutputRecord::mention("a", "E1", "PER", TextSpan::new("d", -1, 4), 0.5);
        assert!(matches!(
            validate_record(neg, &roster(), TaskKind::EntityLinking),
            Err(Error::NegativeOffset { .. })
        ));
        let backwards = OutputRecord::mention("a", "E1", "PER", TextSpan::new("d", 5, 4), 0.5);
        assert!(matches!(
            validate_record(backwards, &roster(), TaskKind::EntityLinking),
            Err(Error::InvalidSpan { .. })
        ));
        let mut mismatch = OutputRecord::detection("a", "img", 1, BBox::new(0., 0., 1., 1.), 0.5);
        mismatch.provenance = Provenance::Box(BBox::new(0., 0., 2., 1.));
        assert!(validate_record(mismatch, &roster(), TaskKind::ObjectDetection).is_err());
    }

    #[test]
    fn nil_ids_are_namespaced_once() {
        let r = OutputRecord::mention("b", "NIL0007", "PER", TextSpan::new("d", 1, 4), 0.5);
        let once = validate_record(r, &roster(), TaskKind::EntityLinking).unwrap();
        assert_eq!(
            once.key,
            Key::Entity {
                id: "b:NIL0007".into()
            }
        );
        assert!(once.key.is_nil());
        let twice = validate_record(once.clone(), &roster(), TaskKind::EntityLinking).unwrap();
        assert_eq!(once, twice);
        assert!(!Key::Entity {
            id: "m.0abc".into()
        }
        .is_nil());
    }

    #[test]
    fn normalization_folds_case_and_composition() {
        assert_eq!(normalize_fill("Obama"), normalize_fill("obama "));
        assert_eq!(normalize_fill("Cafe\u{301}"), normalize_fill("café"));
    }

    #[test]
    fn dedup_keeps_max_confidence() {
        let mut a = fill(0.3);
        a.value = Value::Fill("44".into());
        let mut b = fill(0.8);
        b.value = Value::Fill("44".into());
        let out = dedup_records(vec![a.clone(), b.clone()], &roster());
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].confidence, 0.8);
        let out = dedup_records(vec![b, a], &roster());
        assert_eq!(out[0].confidence, 0.8);
    }

    #[test]
    fn span_arithmetic_is_closed() {
        let a = TextSpan::new("d", 100, 150);
        let b = TextSpan::new("d", 120, 170);
        assert_eq!(a.len(), 51);
        assert_eq!(a.intersection_len(&b), 31);
        assert_eq!(a.union_len(&b), 71);
        assert!(a.overlaps(&TextSpan::new("d", 150, 200)));
        assert!(!a.overlaps(&TextSpan::new("e", 100, 150)));
    }

    #[test]
    fn roster_rejects_duplicates() {
        assert!(Roster::new(["a", "a"]).is_err());
        assert_eq!(roster().index_of("c"), Some(2));
    }

    #[test]
    fn category_index_by_task() {
        let inv = Inventory::Categories(3);
        let r = OutputRecord::detection("a", "i", 3, BBox::new(0., 0., 1., 1.), 0.1);
        assert_eq!(inv.category_index(&r.key, &r.value).unwrap(), 2);
        let r = OutputRecord::detection("a", "i", 4, BBox::new(0., 0., 1., 1.), 0.1);
        assert!(matches!(
            inv.category_index(&r.key, &r.value),
            Err(Error::UnknownCategory(_))
        ));
    }
}

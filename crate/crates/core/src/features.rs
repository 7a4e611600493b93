//! Auxiliary features and the fixed feature layout fed to the stacker.
//!
//! Layout, per roster system in roster order:
//!
//! ```text
//! [ confidence | provenance overlap (PO or BBO) | doc provenance* | key/value cosine* | one-hot type ]
//! ```
//!
//! Blocks marked `*` exist for the text tasks only. A system that did not
//! produce the value contributes zeros in every per-system block.

use std::collections::{BTreeMap, HashMap};

use crate::align::{iou, ValueGroup};
use crate::error::{Error, Result};
use crate::model::{Inventory, Key, Roster, TaskKind};

/// Provenance-offset score of system `x`: the sum over the other members of
/// the Jaccard overlap of their character spans with `x`'s span, divided by
/// the group size N. Spans in different documents contribute zero.
pub fn provenance_offset_score(group: &ValueGroup, x: &str) -> Result<f64> {
    if !group.task().is_kbp() {
        return Err(Error::TaskMismatch {
            expected: TaskKind::SlotFilling,
            found: group.task(),
        });
    }
    let target = group
        .member(x)
        .ok_or_else(|| Error::SystemNotInGroup(x.to_string()))?;
    let target = target.span().expect("text task records carry spans");
    let sum: f64 = group
        .members()
        .iter()
        .filter(|r| r.system != x)
        .map(|r| {
            let span = r.span().expect("text task records carry spans");
            span.intersection_len(target) as f64 / span.union_len(target) as f64
        })
        .sum();
    Ok(sum / group.n() as f64)
}

/// Bounding-box overlap score of system `x`: summed IOU with the other
/// members' boxes, divided by N.
pub fn bbox_overlap_score(group: &ValueGroup, x: &str) -> Result<f64> {
    if group.task() != TaskKind::ObjectDetection {
        return Err(Error::TaskMismatch {
            expected: TaskKind::ObjectDetection,
            found: group.task(),
        });
    }
    let target = group
        .member(x)
        .ok_or_else(|| Error::SystemNotInGroup(x.to_string()))?;
    let target = target.bbox().expect("detection records carry boxes");
    let sum: f64 = group
        .members()
        .iter()
        .filter(|r| r.system != x)
        .map(|r| iou(r.bbox().expect("detection records carry boxes"), target))
        .sum();
    Ok(sum / group.n() as f64)
}

/// For each member: the number of members citing the same document, over N.
pub fn doc_provenance_scores(group: &ValueGroup) -> BTreeMap<String, f64> {
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for r in group.members() {
        if let Some(span) = r.span() {
            *counts.entry(span.docid.as_str()).or_default() += 1;
        }
    }
    let n = group.n() as f64;
    group
        .members()
        .iter()
        .filter_map(|r| {
            let span = r.span()?;
            Some((r.system.clone(), counts[span.docid.as_str()] as f64 / n))
        })
        .collect()
}

/// Lowercased maximal runs of alphanumeric characters.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

type SparseVec = BTreeMap<String, f64>;

/// Source documents and key documents (query documents for slot filling,
/// KB pseudo-documents for entity linking). Document frequencies are taken
/// over the source documents only.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DocumentStore {
    documents: BTreeMap<String, String>,
    key_documents: BTreeMap<String, String>,
    doc_freq: HashMap<String, usize>,
}

impl DocumentStore {
    pub fn new(
        documents: BTreeMap<String, String>,
        key_documents: BTreeMap<String, String>,
    ) -> Self {
        let mut doc_freq: HashMap<String, usize> = HashMap::new();
        for text in documents.values() {
            let mut terms = tokenize(text);
            terms.sort();
            terms.dedup();
            for t in terms {
                *doc_freq.entry(t).or_default() += 1;
            }
        }
        DocumentStore {
            documents,
            key_documents,
            doc_freq,
        }
    }

    pub fn num_documents(&self) -> usize {
        self.documents.len()
    }

    pub fn document(&self, docid: &str) -> Option<&str> {
        self.documents.get(docid).map(String::as_str)
    }

    pub fn documents(&self) -> &BTreeMap<String, String> {
        &self.documents
    }

    pub fn key_documents(&self) -> &BTreeMap<String, String> {
        &self.key_documents
    }

    /// Key document lookup: by query id for slot filling, by KB id for
    /// entity linking.
    pub fn key_document(&self, key: &Key) -> Option<&str> {
        let id = match key {
            Key::Slot { query, .. } => query,
            Key::Entity { id } => id,
            Key::Image { .. } => return None,
        };
        self.key_documents.get(id).map(String::as_str)
    }

    /// `ln(D / df)`, or `None` for terms absent from the corpus.
    pub fn idf(&self, term: &str) -> Option<f64> {
        let df = *self.doc_freq.get(term)?;
        Some((self.documents.len() as f64 / df as f64).ln())
    }

    /// Raw term count times idf; terms unseen in the corpus are dropped.
    pub fn tfidf(&self, text: &str) -> SparseVec {
        let mut tf: BTreeMap<String, f64> = BTreeMap::new();
        for t in tokenize(text) {
            *tf.entry(t).or_default() += 1.0;
        }
        tf.into_iter()
            .filter_map(|(t, count)| self.idf(&t).map(|idf| (t, count * idf)))
            .collect()
    }

    /// Cosine similarity between the key document of `key` and source
    /// document `docid`. A missing key document scores 0; a missing source
    /// document is an error.
    pub fn key_value_similarity(&self, key: &Key, docid: &str) -> Result<f64> {
        let value_doc = self
            .document(docid)
            .ok_or_else(|| Error::MissingDocument(docid.to_string()))?;
        Ok(match self.key_document(key) {
            Some(key_doc) => key_value_doc_similarity(key_doc, value_doc, self),
            None => 0.0,
        })
    }
}

/// Cosine of the TF-IDF vectors of two texts under the store's statistics;
/// 0 when either vector is all zero.
pub fn key_value_doc_similarity(key_doc: &str, value_doc: &str, store: &DocumentStore) -> f64 {
    let a = store.tfidf(key_doc);
    let b = store.tfidf(value_doc);
    let norm = |v: &SparseVec| v.values().map(|x| x * x).sum::<f64>().sqrt();
    let (na, nb) = (norm(&a), norm(&b));
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    let dot: f64 = a.iter().filter_map(|(t, x)| b.get(t).map(|y| x * y)).sum();
    (dot / (na * nb)).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Block {
    Confidence,
    Overlap,
    DocProvenance,
    Cosine,
    Category,
}

impl Block {
    fn prefix(self) -> &'static str {
        match self {
            Block::Confidence => "conf",
            Block::Overlap => "overlap",
            Block::DocProvenance => "docprov",
            Block::Cosine => "cosine",
            Block::Category => "type",
        }
    }
}

/// Binds every feature index to its meaning. Two vectors are comparable only
/// when built against equal layouts.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureLayout {
    task: TaskKind,
    roster: Roster,
    inventory: Inventory,
    cosine_enabled: bool,
}

impl FeatureLayout {
    pub fn new(
        task: TaskKind,
        roster: Roster,
        inventory: Inventory,
        cosine_enabled: bool,
    ) -> Result<Self> {
        if inventory.task() != task {
            return Err(Error::TaskMismatch {
                expected: task,
                found: inventory.task(),
            });
        }
        if roster.is_empty() {
            return Err(Error::InvalidRecord("empty roster".into()));
        }
        if inventory.is_empty() {
            return Err(Error::InvalidRecord("empty category inventory".into()));
        }
        Ok(FeatureLayout {
            task,
            roster,
            inventory,
            cosine_enabled: cosine_enabled && task.is_kbp(),
        })
    }

    pub fn task(&self) -> TaskKind {
        self.task
    }

    pub fn roster(&self) -> &Roster {
        &self.roster
    }

    pub fn inventory(&self) -> &Inventory {
        &self.inventory
    }

    pub fn cosine_enabled(&self) -> bool {
        self.cosine_enabled
    }

    /// Per-system blocks present for this task, in layout order.
    pub fn system_blocks(&self) -> &'static [Block] {
        if self.task.is_kbp() {
            &[
                Block::Confidence,
                Block::Overlap,
                Block::DocProvenance,
                Block::Cosine,
            ]
        } else {
            &[Block::Confidence, Block::Overlap]
        }
    }

    pub fn dim(&self) -> usize {
        self.system_blocks().len() * self.roster.len() + self.inventory.len()
    }

    /// Block each index belongs to.
    pub fn blocks(&self) -> Vec<Block> {
        let mut out = Vec::with_capacity(self.dim());
        for &b in self.system_blocks() {
            out.extend(std::iter::repeat_n(b, self.roster.len()));
        }
        out.extend(std::iter::repeat_n(Block::Category, self.inventory.len()));
        out
    }

    /// Human readable names, e.g. `conf:sysA`, `type:per:age`.
    pub fn names(&self) -> Vec<String> {
        let mut out = Vec::with_capacity(self.dim());
        for &b in self.system_blocks() {
            for id in self.roster.iter() {
                out.push(format!("{}:{id}", b.prefix()));
            }
        }
        for name in self.inventory.names() {
            out.push(format!("{}:{name}", Block::Category.prefix()));
        }
        out
    }

    fn block_offset(&self, block: Block) -> usize {
        let s = self.roster.len();
        match self.system_blocks().iter().position(|b| *b == block) {
            Some(i) => i * s,
            None => self.system_blocks().len() * s,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Self {
        FeatureVector(values)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Copy with every block other than the confidences set to zero.
    pub fn confidences_only(&self, layout: &FeatureLayout) -> FeatureVector {
        let s = layout.roster().len();
        FeatureVector(
            self.0
                .iter()
                .enumerate()
                .map(|(i, &x)| if i < s { x } else { 0.0 })
                .collect(),
        )
    }
}

/// Assembles the feature row for one value group.
pub fn build_feature_vector(
    group: &ValueGroup,
    layout: &FeatureLayout,
    store: Option<&DocumentStore>,
) -> Result<FeatureVector> {
    if group.task() != layout.task {
        return Err(Error::TaskMismatch {
            expected: layout.task,
            found: group.task(),
        });
    }
    let mut row = vec![0.0; layout.dim()];
    let s = layout.roster.len();
    let store = store.filter(|_| layout.cosine_enabled);
    let doc_prov = if layout.task.is_kbp() {
        Some(doc_provenance_scores(group))
    } else {
        None
    };

    for record in group.members() {
        let pos = layout
            .roster
            .index_of(&record.system)
            .ok_or_else(|| Error::UnknownSystem(record.system.clone()))?;
        row[layout.block_offset(Block::Confidence) + pos] = record.confidence;
        row[layout.block_offset(Block::Overlap) + pos] = if layout.task.is_kbp() {
            provenance_offset_score(group, &record.system)?
        } else {
            bbox_overlap_score(group, &record.system)?
        };
        if let Some(scores) = &doc_prov {
            row[layout.block_offset(Block::DocProvenance) + pos] = scores[&record.system];
            if let (Some(store), Some(span)) = (store, record.span()) {
                row[layout.block_offset(Block::Cosine) + pos] =
                    store.key_value_similarity(group.key(), &span.docid)?;
            }
        }
    }
    let canonical = group.canonical_record();
    let cat = layout
        .inventory
        .category_index(&canonical.key, &canonical.value)?;
    row[s * layout.system_blocks().len() + cat] = 1.0;
    Ok(FeatureVector(row))
}

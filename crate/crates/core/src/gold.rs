//! Gold-standard answers for the three tasks.

use std::collections::HashSet;

use crate::model::{normalize_fill, BBox, TaskKind, TextSpan};

#[derive(Debug, Clone, PartialEq)]
pub struct GoldFill {
    pub query: String,
    pub slot: String,
    pub fill: String,
    pub provenance: Option<TextSpan>,
}

/// A gold mention and the KB id (or gold NIL cluster id) it refers to.
#[derive(Debug, Clone, PartialEq)]
pub struct GoldMention {
    pub id: String,
    pub entity_type: String,
    pub span: TextSpan,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GoldBox {
    pub image: String,
    pub category: u32,
    pub bbox: BBox,
}

#[derive(Debug, Clone, PartialEq)]
pub enum GoldStandard {
    SlotFilling(Vec<GoldFill>),
    EntityLinking(Vec<GoldMention>),
    ObjectDetection(Vec<GoldBox>),
}

impl GoldStandard {
    pub fn task(&self) -> TaskKind {
        match self {
            GoldStandard::SlotFilling(_) => TaskKind::SlotFilling,
            GoldStandard::EntityLinking(_) => TaskKind::EntityLinking,
            GoldStandard::ObjectDetection(_) => TaskKind::ObjectDetection,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            GoldStandard::SlotFilling(v) => v.len(),
            GoldStandard::EntityLinking(v) => v.len(),
            GoldStandard::ObjectDetection(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Distinct `(query, slot, normalized fill)` triples.
    pub fn fill_set(&self) -> HashSet<(String, String, String)> {
        match self {
            GoldStandard::SlotFilling(fills) => fills
                .iter()
                .map(|g| (g.query.clone(), g.slot.clone(), normalize_fill(&g.fill)))
                .collect(),
            _ => HashSet::new(),
        }
    }
}

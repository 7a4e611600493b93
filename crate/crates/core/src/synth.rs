//! Synthetic multi-system data for desk-scale evaluation.
//!
//! Every draw comes from one `u64` seed through SplitMix64. The seed first
//! yields three sub-seeds (system profiles, train split, test split), each
//! driving its own SplitMix64 stream, so the train split does not depend on
//! the test key count and vice versa.
//!
//! Each simulated system attempts every gold item with probability
//! `coverage`. Exactly `round(accuracy * attempts)` of its attempts, chosen
//! uniformly, are correct, so its empirical precision tracks the requested
//! accuracy. With probability `rho` a correct output cites the reference
//! provenance: the source passage containing the fill, the gold box, or a
//! mention document that talks about the entity. Wrong outputs draw from a
//! small per-key pool of distractors, so wrong answers also agree across
//! systems, but their provenance is unrelated to the key.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rand_xoshiro::rand_core::SeedableRng;
use rand_xoshiro::SplitMix64;

use crate::align::iou;
use crate::error::{Error, Result};
use crate::features::DocumentStore;
use crate::gold::{GoldBox, GoldFill, GoldMention, GoldStandard};
use crate::io::{serialize_documents, serialize_gold, serialize_records, write_atomic, Dataset};
use crate::model::{
    BBox, Inventory, OutputRecord, Roster, SlotSpec, TaskKind, TextSpan, DEFAULT_ENTITY_TYPES,
};

const SLOTS: [(&str, bool); 6] = [
    ("per:age", true),
    ("per:city_of_birth", true),
    ("per:title", false),
    ("per:children", false),
    ("org:subsidiaries", false),
    ("org:founded_by", false),
];
const SYLLABLES: [&str; 16] = [
    "ka", "lo", "mi", "ren", "ta", "vo", "shi", "dar", "el", "qua", "pen", "sto", "ru", "bel",
    "xi", "nor",
];
const VOCABULARY: usize = 2000;
const TOPIC_WORDS: usize = 6;
const FILLER_WORDS: usize = 40;
const DISTRACTORS: usize = 3;
const DISTRACTOR_DOCS: usize = 2;
const IMAGE_WIDTH: f64 = 640.0;
const IMAGE_HEIGHT: f64 = 480.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub task: TaskKind,
    /// One entry per system.
    pub accuracies: Vec<f64>,
    /// Standard deviation of the Gaussian noise on reported confidences.
    pub confidence_noise: f64,
    /// Probability that a correct output cites the reference provenance.
    pub rho: f64,
    /// Probability that a system attempts a given gold item.
    pub coverage: f64,
    pub train_keys: usize,
    pub test_keys: usize,
    /// Object categories (detection only).
    pub categories: u32,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec::with_accuracy_range(TaskKind::SlotFilling, 5, 0.35, 0.6)
    }
}

impl SynthSpec {
    /// `systems` accuracies spaced evenly over `[lo, hi]`.
    pub fn with_accuracy_range(task: TaskKind, systems: usize, lo: f64, hi: f64) -> Self {
        let accuracies = (0..systems)
            .map(|i| {
                if systems == 1 {
                    hi
                } else {
                    lo + (hi - lo) * i as f64 / (systems - 1) as f64
                }
            })
            .collect();
        SynthSpec {
            task,
            accuracies,
            confidence_noise: 0.15,
            rho: 0.8,
            coverage: 0.8,
            train_keys: 500,
            test_keys: 500,
            categories: 10,
        }
    }

    pub fn systems(&self) -> usize {
        self.accuracies.len()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidSpec(msg));
        if self.accuracies.is_empty() {
            return bad("at least one system is required".into());
        }
        if let Some(a) = self.accuracies.iter().find(|a| !(0.0..=1.0).contains(*a)) {
            return bad(format!("accuracy {a} outside [0, 1]"));
        }
        if !(self.confidence_noise >= 0.0 && self.confidence_noise.is_finite()) {
            return bad("confidence noise must be finite and non-negative".into());
        }
        if !(0.0..=1.0).contains(&self.rho) {
            return bad(format!("rho {} outside [0, 1]", self.rho));
        }
        if !(self.coverage > 0.0 && self.coverage <= 1.0) {
            return bad(format!("coverage {} outside (0, 1]", self.coverage));
        }
        if self.train_keys == 0 || self.test_keys == 0 {
            return bad("key counts must be positive".into());
        }
        if self.task == TaskKind::ObjectDetection && self.categories == 0 {
            return bad("at least one category is required".into());
        }
        Ok(())
    }

    pub fn system_ids(&self) -> Vec<String> {
        (1..=self.systems()).map(|i| format!("sys{i:02}")).collect()
    }

    pub fn inventory(&self) -> Inventory {
        match self.task {
            TaskKind::SlotFilling => Inventory::Slots(
                SLOTS
                    .iter()
                    .map(|&(name, single_valued)| SlotSpec {
                        name: name.to_string(),
                        single_valued,
                    })
                    .collect(),
            ),
            TaskKind::EntityLinking => {
                Inventory::EntityTypes(DEFAULT_ENTITY_TYPES.iter().map(|t| t.to_string()).collect())
            }
            TaskKind::ObjectDetection => Inventory::Categories(self.categories),
        }
    }
}

/// Generated train and test splits, each with gold and (for the text tasks)
/// documents attached.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthData {
    pub spec: SynthSpec,
    pub roster: Roster,
    pub inventory: Inventory,
    pub train: Dataset,
    pub test: Dataset,
}

impl SynthData {
    /// Writes `<split>/<system>.tsv`, `<split>/gold.tsv`, `<split>/docs.tsv`
    /// for both splits plus a `swaf.conf` describing task, roster and
    /// inventory.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        for (name, split) in [("train", &self.train), ("test", &self.test)] {
            let sub = dir.join(name);
            for system in self.roster.iter() {
                let text = serialize_records(&split.records_of(system))?;
                write_atomic(&sub.join(format!("{system}.tsv")), &text)?;
            }
            if let Some(gold) = &split.gold {
                write_atomic(&sub.join("gold.tsv"), &serialize_gold(gold))?;
            }
            if let Some(docs) = &split.documents {
                write_atomic(&sub.join("docs.tsv"), &serialize_documents(docs))?;
            }
        }
        write_atomic(&dir.join("swaf.conf"), &self.config_text())
    }

    fn config_text(&self) -> String {
        let mut out = format!(
            "# synthetic data\ntask = {}\nroster = {}\n",
            self.spec.task,
            self.roster.ids().join(",")
        );
        match &self.inventory {
            Inventory::Slots(slots) => {
                let names: Vec<&str> = slots.iter().map(|s| s.name.as_str()).collect();
                let single: Vec<&str> = slots
                    .iter()
                    .filter(|s| s.single_valued)
                    .map(|s| s.name.as_str())
                    .collect();
                out.push_str(&format!(
                    "slots = {}\nsingle_valued = {}\n",
                    names.join(","),
                    single.join(",")
                ));
            }
            Inventory::EntityTypes(types) => {
                out.push_str(&format!("entity_types = {}\n", types.join(",")));
            }
            Inventory::Categories(c) => out.push_str(&format!("categories = {c}\n")),
        }
        out
    }
}

#[derive(Debug, Clone)]
struct Profile {
    id: String,
    accuracy: f64,
    /// Baseline confidence and extra confidence when correct.
    bias: f64,
    lift: f64,
}

pub fn generate_synthetic(spec: &SynthSpec, seed: u64) -> Result<SynthData> {
    spec.validate()?;
    let mut root = SplitMix64::seed_from_u64(seed);
    let (profile_seed, train_seed, test_seed): (u64, u64, u64) =
        (root.gen(), root.gen(), root.gen());

    let mut rng = SplitMix64::seed_from_u64(profile_seed);
    let profiles: Vec<Profile> = spec
        .system_ids()
        .into_iter()
        .zip(&spec.accuracies)
        .map(|(id, &accuracy)| Profile {
            id,
            accuracy,
            bias: rng.gen_range(0.3..0.6),
            lift: rng.gen_range(0.0..0.2),
        })
        .collect();
    let roster = Roster::new(spec.system_ids())?;

    let gen_split = |prefix: &str, keys: usize, seed: u64| -> Result<Dataset> {
        let mut g = Generator {
            spec,
            profiles: &profiles,
            rng: SplitMix64::seed_from_u64(seed),
            noise: Normal::new(0.0, spec.confidence_noise)
                .map_err(|e| Error::InvalidSpec(e.to_string()))?,
        };
        let (records, gold, docs) = match spec.task {
            TaskKind::SlotFilling => g.slot_filling(prefix, keys),
            TaskKind::EntityLinking => g.entity_linking(prefix, keys),
            TaskKind::ObjectDetection => g.detection(prefix, keys),
        };
        let mut ds = Dataset::from_records(spec.task, Some(&roster), records)?;
        ds.gold = Some(gold);
        ds.documents = docs;
        Ok(ds)
    };
    let train = gen_split("TR", spec.train_keys, train_seed)?;
    let test = gen_split("TE", spec.test_keys, test_seed)?;
    Ok(SynthData {
        spec: spec.clone(),
        inventory: spec.inventory(),
        roster,
        train,
        test,
    })
}

/// Pseudo-word for index `i`: base-16 digits over a syllable alphabet,
/// at least three syllables long.
fn word(i: usize) -> String {
    let mut digits = Vec::new();
    let mut n = i;
    while n > 0 || digits.len() < 3 {
        digits.push(n % SYLLABLES.len());
        n /= SYLLABLES.len();
    }
    digits.iter().rev().map(|&d| SYLLABLES[d]).collect()
}

fn capitalized(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

/// Two-word proper name, unique per index and disjoint from the vocabulary.
fn name(i: usize) -> String {
    let base = 1 << 20;
    format!(
        "{} {}",
        capitalized(&word(base + 2 * i)),
        capitalized(&word(base + 2 * i + 1))
    )
}

/// Joins filler words with the given phrases inserted at random positions.
/// Returns the text and the inclusive character span of each phrase.
fn compose(
    rng: &mut SplitMix64,
    filler: &[String],
    phrases: &[String],
) -> (String, Vec<(i64, i64)>) {
    let mut tokens: Vec<(String, Option<usize>)> =
        filler.iter().map(|w| (w.clone(), None)).collect();
    for (i, p) in phrases.iter().enumerate() {
        let at = rng.gen_range(0..=tokens.len());
        tokens.insert(at, (p.clone(), Some(i)));
    }
    let mut text = String::new();
    let mut spans = vec![(0, 0); phrases.len()];
    for (tok, phrase) in tokens {
        if !text.is_empty() {
            text.push(' ');
        }
        let start = text.chars().count() as i64;
        text.push_str(&tok);
        if let Some(i) = phrase {
            spans[i] = (start, start + tok.chars().count() as i64 - 1);
        }
    }
    (text, spans)
}

/// Exactly `round(accuracy * n)` true flags in random positions.
fn assign_correct(rng: &mut SplitMix64, n: usize, accuracy: f64) -> Vec<bool> {
    let k = (accuracy * n as f64).round() as usize;
    let mut flags: Vec<bool> = (0..n).map(|i| i < k).collect();
    flags.shuffle(rng);
    flags
}

struct Generator<'a> {
    spec: &'a SynthSpec,
    profiles: &'a [Profile],
    rng: SplitMix64,
    noise: Normal<f64>,
}

impl Generator<'_> {
    fn words(&mut self, n: usize) -> Vec<String> {
        (0..n)
            .map(|_| word(self.rng.gen_range(0..VOCABULARY)))
            .collect()
    }

    fn confidence(&mut self, p: &Profile, correct: bool) -> f64 {
        let c = p.bias + if correct { p.lift } else { 0.0 } + self.noise.sample(&mut self.rng);
        (c.clamp(0.0, 1.0) * 1000.0).round() / 1000.0
    }

    /// Per system, the `(key, item)` pairs it attempts and whether each
    /// attempt is correct.
    fn attempts(&mut self, items_per_key: &[usize]) -> Vec<Vec<(usize, usize, bool)>> {
        let profiles = self.profiles;
        profiles
            .iter()
            .map(|p| {
                let mut tried = Vec::new();
                for (k, &n) in items_per_key.iter().enumerate() {
                    for j in 0..n {
                        if self.rng.gen_bool(self.spec.coverage) {
                            tried.push((k, j));
                        }
                    }
                }
                let flags = assign_correct(&mut self.rng, tried.len(), p.accuracy);
                tried
                    .into_iter()
                    .zip(flags)
                    .map(|((k, j), c)| (k, j, c))
                    .collect()
            })
            .collect()
    }

    fn slot_filling(
        &mut self,
        prefix: &str,
        keys: usize,
    ) -> (Vec<OutputRecord>, GoldStandard, Option<DocumentStore>) {
        struct KeyData {
            query: String,
            slot: &'static str,
            fills: Vec<(String, TextSpan)>,
            distractors: Vec<String>,
            /// Per distractor document: its id and the span of each distractor.
            distractor_docs: Vec<(String, Vec<(i64, i64)>)>,
        }
        let mut docs = BTreeMap::new();
        let mut key_docs = BTreeMap::new();
        let mut data = Vec::with_capacity(keys);
        for k in 0..keys {
            let query = format!("{prefix}Q{k:04}");
            let (slot, single) = SLOTS[self.rng.gen_range(0..SLOTS.len())];
            let n_gold = if single { 1 } else { self.rng.gen_range(1..=3) };
            let topic = self.words(TOPIC_WORDS);
            let subject = name(2 * keys * usize::from(prefix == "TE") + 2 * k);

            let mut key_text = vec![subject.clone()];
            key_text.extend(topic.iter().cloned());
            key_text.extend(self.words(8));
            key_text.shuffle(&mut self.rng);
            key_docs.insert(query.clone(), key_text.join(" "));

            let mut fills = Vec::new();
            for j in 0..n_gold {
                let fill = name(1_000_000 + 8 * (k + keys * usize::from(prefix == "TE")) + j);
                let docid = format!("{prefix}D{k:04}{j}");
                let mut filler = self.words(FILLER_WORDS);
                filler.extend(topic.iter().take(4).cloned());
                filler.shuffle(&mut self.rng);
                let (text, spans) =
                    compose(&mut self.rng, &filler, &[subject.clone(), fill.clone()]);
                let (s, e) = spans[1];
                docs.insert(docid.clone(), text);
                fills.push((fill, TextSpan::new(docid, s, e)));
            }
            let distractors: Vec<String> = (0..DISTRACTORS)
                .map(|m| name(1_000_000 + 8 * (k + keys * usize::from(prefix == "TE")) + 4 + m))
                .collect();
            let mut distractor_docs = Vec::new();
            for d in 0..DISTRACTOR_DOCS {
                let docid = format!("{prefix}D{k:04}x{d}");
                let mut filler = self.words(FILLER_WORDS);
                filler.push(topic[self.rng.gen_range(0..TOPIC_WORDS)].clone());
                let (text, spans) = compose(&mut self.rng, &filler, &distractors);
                docs.insert(docid.clone(), text);
                distractor_docs.push((docid, spans));
            }
            data.push(KeyData {
                query,
                slot,
                fills,
                distractors,
                distractor_docs,
            });
        }

        let counts: Vec<usize> = data.iter().map(|d| d.fills.len()).collect();
        let attempts = self.attempts(&counts);
        let mut records = Vec::new();
        for (p, tried) in self.profiles.iter().zip(attempts) {
            let mut used: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
            for (k, j, correct) in tried {
                let kd = &data[k];
                let (fill, span) = if correct {
                    let (fill, span) = &kd.fills[j];
                    if self.rng.gen_bool(self.spec.rho) {
                        (fill.clone(), span.clone())
                    } else {
                        // some passage that does not support the fill
                        let (docid, _) =
                            &kd.distractor_docs[self.rng.gen_range(0..DISTRACTOR_DOCS)];
                        let len = span.len();
                        let start = self.rng.gen_range(0..200);
                        (
                            fill.clone(),
                            TextSpan::new(docid.clone(), start, start + len - 1),
                        )
                    }
                } else {
                    let taken = used.entry(k).or_default();
                    let free: Vec<usize> =
                        (0..DISTRACTORS).filter(|m| !taken.contains(m)).collect();
                    let m = free[self.rng.gen_range(0..free.len())];
                    taken.push(m);
                    let (docid, spans) =
                        &kd.distractor_docs[self.rng.gen_range(0..DISTRACTOR_DOCS)];
                    let (s, e) = spans[m];
                    (
                        kd.distractors[m].clone(),
                        TextSpan::new(docid.clone(), s, e),
                    )
                };
                let conf = self.confidence(p, correct);
                records.push(OutputRecord::slot_fill(
                    &p.id, &kd.query, kd.slot, &fill, conf, span,
                ));
            }
        }

        let gold = data
            .iter()
            .flat_map(|kd| {
                kd.fills.iter().map(|(fill, span)| GoldFill {
                    query: kd.query.clone(),
                    slot: kd.slot.to_string(),
                    fill: fill.clone(),
                    provenance: Some(span.clone()),
                })
            })
            .collect();
        (
            records,
            GoldStandard::SlotFilling(gold),
            Some(DocumentStore::new(docs, key_docs)),
        )
    }

    fn entity_linking(
        &mut self,
        prefix: &str,
        keys: usize,
    ) -> (Vec<OutputRecord>, GoldStandard, Option<DocumentStore>) {
        struct Entity {
            id: Option<String>,
            gold_id: String,
            entity_type: &'static str,
            mentions: Vec<TextSpan>,
        }
        let offset = keys * usize::from(prefix == "TE");
        let mut docs = BTreeMap::new();
        let mut key_docs = BTreeMap::new();
        let mut entities = Vec::with_capacity(keys);
        for k in 0..keys {
            let nil = self.rng.gen_bool(0.3);
            let id = (!nil).then(|| format!("{prefix}E{k:04}"));
            let gold_id = id.clone().unwrap_or_else(|| format!("NIL{prefix}{k:04}"));
            let entity_type =
                DEFAULT_ENTITY_TYPES[self.rng.gen_range(0..DEFAULT_ENTITY_TYPES.len())];
            let title = name(offset + k);
            let topic = self.words(TOPIC_WORDS);
            if let Some(id) = &id {
                let mut text = vec![title.clone()];
                text.extend(topic.iter().cloned());
                text.extend(self.words(8));
                text.shuffle(&mut self.rng);
                key_docs.insert(id.clone(), text.join(" "));
            }
            let n = self.rng.gen_range(1..=3);
            let mut mentions = Vec::new();
            for i in 0..n {
                let docid = format!("{prefix}M{k:04}{i}");
                let mut filler = self.words(FILLER_WORDS);
                if self.rng.gen_bool(self.spec.rho) {
                    filler.extend(topic.iter().take(4).cloned());
                    filler.shuffle(&mut self.rng);
                }
                let (text, spans) = compose(&mut self.rng, &filler, std::slice::from_ref(&title));
                docs.insert(docid.clone(), text);
                mentions.push(TextSpan::new(docid, spans[0].0, spans[0].1));
            }
            entities.push(Entity {
                id,
                gold_id,
                entity_type,
                mentions,
            });
        }
        let kb_ids: Vec<String> = entities.iter().filter_map(|e| e.id.clone()).collect();

        let counts: Vec<usize> = entities.iter().map(|e| e.mentions.len()).collect();
        let attempts = self.attempts(&counts);
        let mut records = Vec::new();
        for (p, tried) in self.profiles.iter().zip(attempts) {
            for (k, j, correct) in tried {
                let e = &entities[k];
                let own = e.id.clone().unwrap_or_else(|| format!("NIL{k:04}"));
                let gold_span = &e.mentions[j];
                let (link, span) = if correct {
                    (own, gold_span.clone())
                } else {
                    let span = loop {
                        let ds = self.rng.gen_range(-3i64..=3);
                        let de = self.rng.gen_range(-3i64..=3);
                        let (s, t) = (gold_span.start + ds, gold_span.end + de);
                        if (ds, de) != (0, 0) && s >= 0 && t >= s {
                            break TextSpan::new(gold_span.docid.clone(), s, t);
                        }
                    };
                    let link = if !kb_ids.is_empty() && self.rng.gen_bool(0.5) {
                        kb_ids[self.rng.gen_range(0..kb_ids.len())].clone()
                    } else {
                        own
                    };
                    (link, span)
                };
                let conf = self.confidence(p, correct);
                records.push(OutputRecord::mention(
                    &p.id,
                    &link,
                    e.entity_type,
                    span,
                    conf,
                ));
            }
        }

        let gold = entities
            .iter()
            .flat_map(|e| {
                e.mentions.iter().map(|m| GoldMention {
                    id: e.gold_id.clone(),
                    entity_type: e.entity_type.to_string(),
                    span: m.clone(),
                })
            })
            .collect();
        (
            records,
            GoldStandard::EntityLinking(gold),
            Some(DocumentStore::new(docs, key_docs)),
        )
    }

    fn random_box(&mut self) -> BBox {
        let w = self.rng.gen_range(40.0..200.0);
        let h = self.rng.gen_range(40.0..200.0);
        let x = self.rng.gen_range(0.0..IMAGE_WIDTH - w);
        let y = self.rng.gen_range(0.0..IMAGE_HEIGHT - h);
        BBox::new(round1(x), round1(y), round1(x + w), round1(y + h))
    }

    fn jitter(&mut self, b: &BBox, scale: f64) -> BBox {
        let (w, h) = (b.width(), b.height());
        let mut d = |s: f64| self.rng.gen_range(-scale..=scale) * s;
        let xmin = b.xmin + d(w);
        let xmax = b.xmax + d(w);
        let ymin = b.ymin + d(h);
        let ymax = b.ymax + d(h);
        BBox::new(round1(xmin), round1(ymin), round1(xmax), round1(ymax))
    }

    fn detection(
        &mut self,
        prefix: &str,
        keys: usize,
    ) -> (Vec<OutputRecord>, GoldStandard, Option<DocumentStore>) {
        let categories = self.spec.categories;
        let mut images: Vec<(String, Vec<(u32, BBox)>)> = Vec::with_capacity(keys);
        for k in 0..keys {
            let n = self.rng.gen_range(1..=3);
            let objects = (0..n)
                .map(|_| (self.rng.gen_range(1..=categories), self.random_box()))
                .collect();
            images.push((format!("{prefix}I{k:04}"), objects));
        }

        let counts: Vec<usize> = images.iter().map(|(_, o)| o.len()).collect();
        let attempts = self.attempts(&counts);
        let mut records = Vec::new();
        for (p, tried) in self.profiles.iter().zip(attempts) {
            for (k, j, correct) in tried {
                let (image, objects) = &images[k];
                let (category, gold_box) = objects[j];
                let matches_gold =
                    |cat: u32, b: &BBox| objects.iter().any(|(c, g)| *c == cat && iou(g, b) > 0.5);
                let (category, bbox) = if correct {
                    if self.rng.gen_bool(self.spec.rho) {
                        (category, gold_box)
                    } else {
                        let b = loop {
                            let b = self.jitter(&gold_box, 0.12);
                            if b.is_valid() && iou(&gold_box, &b) > 0.5 {
                                break b;
                            }
                        };
                        (category, b)
                    }
                } else {
                    loop {
                        let candidate = if categories > 1 && self.rng.gen_bool(0.5) {
                            let mut c = self.rng.gen_range(1..=categories);
                            if c == category {
                                c = c % categories + 1;
                            }
                            (c, self.jitter(&gold_box, 0.03))
                        } else {
                            (category, self.random_box())
                        };
                        if candidate.1.is_valid() && !matches_gold(candidate.0, &candidate.1) {
                            break candidate;
                        }
                    }
                };
                let conf = self.confidence(p, correct);
                records.push(OutputRecord::detection(&p.id, image, category, bbox, conf));
            }
        }

        let gold = images
            .iter()
            .flat_map(|(image, objects)| {
                objects.iter().map(|&(category, bbox)| GoldBox {
                    image: image.clone(),
                    category,
                    bbox,
                })
            })
            .collect();
        (records, GoldStandard::ObjectDetection(gold), None)
    }
}

fn round1(x: f64) -> f64 {
    (x * 10.0).round() / 10.0
}

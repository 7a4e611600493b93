//! Line-oriented text formats.
//!
//! All files are UTF-8, one record per line, fields separated by a single
//! tab. Blank lines and lines starting with `#` are ignored. Spans are
//! written `docid:start-end` with inclusive character offsets.
//!
//! System output records:
//!
//! | task             | fields                                                        |
//! |------------------|---------------------------------------------------------------|
//! | slot-filling     | `system query slot fill confidence docid:start-end`           |
//! | entity-linking   | `system entity_id entity_type confidence docid:start-end`     |
//! | object-detection | `system image_id category confidence xmin ymin xmax ymax`     |
//!
//! Gold files drop the system and confidence columns (the slot-filling
//! provenance column is optional). Document files hold
//! `doc docid text` and `key key_id text` lines.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::features::{DocumentStore, FeatureLayout};
use crate::gold::{GoldBox, GoldFill, GoldMention, GoldStandard};
use crate::model::{
    dedup_records, validate_record, BBox, Inventory, Key, OutputRecord, Provenance, Roster,
    SlotSpec, TaskKind, TextSpan, Value,
};
use crate::stacker::{StackerModel, TrainConfig};

pub const MODEL_MAGIC: &str = "swaf-model";
pub const MODEL_VERSION: u32 = 1;

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Writes through a temporary file in the target directory and renames it
/// into place.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(&dir).map_err(|e| Error::io(&dir, e))?;
    tmp.write_all(contents.as_bytes())
        .map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines().enumerate().filter_map(|(i, line)| {
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.trim().is_empty() || line.starts_with('#') {
            None
        } else {
            Some((i + 1, line.split('\t').collect()))
        }
    })
}

pub fn parse_span(field: &str) -> std::result::Result<TextSpan, String> {
    let (docid, offsets) = field
        .rsplit_once(':')
        .ok_or_else(|| format!("expected docid:start-end, found `{field}`"))?;
    // a leading '-' belongs to a (negative) start offset
    let cut = offsets
        .char_indices()
        .skip(1)
        .find(|(_, c)| *c == '-')
        .map(|(i, _)| i)
        .ok_or_else(|| format!("expected start-end offsets, found `{offsets}`"))?;
    let start = offsets[..cut]
        .parse::<i64>()
        .map_err(|e| format!("bad start offset `{}`: {e}", &offsets[..cut]))?;
    let end = offsets[cut + 1..]
        .parse::<i64>()
        .map_err(|e| format!("bad end offset `{}`: {e}", &offsets[cut + 1..]))?;
    if end < start {
        return Err(format!("end offset {end} precedes start offset {start}"));
    }
    Ok(TextSpan::new(docid, start, end))
}

fn parse_f64(field: &str, what: &str) -> std::result::Result<f64, String> {
    field
        .trim()
        .parse::<f64>()
        .map_err(|e| format!("bad {what} `{field}`: {e}"))
}

fn parse_category(field: &str) -> std::result::Result<u32, String> {
    field
        .trim()
        .parse::<u32>()
        .map_err(|e| format!("bad category `{field}`: {e}"))
}

fn expect_fields(fields: &[&str], n: usize) -> std::result::Result<(), String> {
    if fields.len() != n {
        return Err(format!(
            "expected {n} tab-separated fields, found {}",
            fields.len()
        ));
    }
    Ok(())
}

fn parse_record_line(fields: &[&str], task: TaskKind) -> std::result::Result<OutputRecord, String> {
    match task {
        TaskKind::SlotFilling => {
            expect_fields(fields, 6)?;
            Ok(OutputRecord::slot_fill(
                fields[0],
                fields[1],
                fields[2],
                fields[3],
                parse_f64(fields[4], "confidence")?,
                parse_span(fields[5])?,
            ))
        }
        TaskKind::EntityLinking => {
            expect_fields(fields, 5)?;
            Ok(OutputRecord::mention(
                fields[0],
                fields[1],
                fields[2],
                parse_span(fields[4])?,
                parse_f64(fields[3], "confidence")?,
            ))
        }
        TaskKind::ObjectDetection => {
            expect_fields(fields, 8)?;
            let bbox = BBox::new(
                parse_f64(fields[4], "xmin")?,
                parse_f64(fields[5], "ymin")?,
                parse_f64(fields[6], "xmax")?,
                parse_f64(fields[7], "ymax")?,
            );
            Ok(OutputRecord::detection(
                fields[0],
                fields[1],
                parse_category(fields[2])?,
                bbox,
                parse_f64(fields[3], "confidence")?,
            ))
        }
    }
}

/// Parses record lines without validating them against a roster.
pub fn parse_records(text: &str, path: &Path, task: TaskKind) -> Result<Vec<OutputRecord>> {
    data_lines(text)
        .map(|(line, fields)| {
            parse_record_line(&fields, task).map_err(|msg| Error::parse(path, line, msg))
        })
        .collect()
}

fn check_field(field: &str) -> Result<()> {
    if field.contains(['\t', '\n', '\r']) {
        return Err(Error::InvalidRecord(format!(
            "field `{}` contains a tab or line break",
            field.escape_debug()
        )));
    }
    Ok(())
}

pub fn format_record(r: &OutputRecord) -> Result<String> {
    let line = match (&r.key, &r.value, &r.provenance) {
        (Key::Slot { query, slot }, Value::Fill(fill), Provenance::Span(span)) => {
            for f in [&r.system, query, slot, fill, &span.docid] {
                check_field(f)?;
            }
            format!(
                "{}\t{query}\t{slot}\t{fill}\t{}\t{span}",
                r.system, r.confidence
            )
        }
        (Key::Entity { id }, Value::Mention { entity_type, .. }, Provenance::Span(span)) => {
            for f in [&r.system, id, entity_type, &span.docid] {
                check_field(f)?;
            }
            format!(
                "{}\t{id}\t{entity_type}\t{}\t{span}",
                r.system, r.confidence
            )
        }
        (Key::Image { id }, Value::Detection { category, .. }, Provenance::Box(b)) => {
            for f in [&r.system, id] {
                check_field(f)?;
            }
            format!(
                "{}\t{id}\t{category}\t{}\t{}\t{}\t{}\t{}",
                r.system, r.confidence, b.xmin, b.ymin, b.xmax, b.ymax
            )
        }
        _ => return Err(Error::InvalidRecord("inconsistent record".into())),
    };
    Ok(line)
}

pub fn serialize_records(records: &[OutputRecord]) -> Result<String> {
    let mut out = String::new();
    for r in records {
        out.push_str(&format_record(r)?);
        out.push('\n');
    }
    Ok(out)
}

/// Validated, deduplicated output of a roster of systems for one task,
/// optionally with gold answers and the document collection.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub task: TaskKind,
    pub roster: Roster,
    pub records: Vec<OutputRecord>,
    pub gold: Option<GoldStandard>,
    pub documents: Option<DocumentStore>,
}

impl Dataset {
    /// Validates and deduplicates records. Without an explicit roster, the
    /// roster is the sorted set of system ids present.
    pub fn from_records(
        task: TaskKind,
        roster: Option<&Roster>,
        records: Vec<OutputRecord>,
    ) -> Result<Self> {
        let roster = match roster {
            Some(r) => r.clone(),
            None => {
                let mut ids: Vec<String> = records.iter().map(|r| r.system.clone()).collect();
                ids.sort();
                ids.dedup();
                Roster::new(ids)?
            }
        };
        let records = records
            .into_iter()
            .map(|r| validate_record(r, &roster, task))
            .collect::<Result<Vec<_>>>()?;
        Ok(Dataset {
            task,
            records: dedup_records(records, &roster),
            roster,
            gold: None,
            documents: None,
        })
    }

    pub fn records_of(&self, system: &str) -> Vec<OutputRecord> {
        self.records
            .iter()
            .filter(|r| r.system == system)
            .cloned()
            .collect()
    }

    pub fn serialize(&self) -> Result<String> {
        serialize_records(&self.records)
    }
}

/// Reads and validates system output files. Per-line validation failures
/// are reported with their file and line, except unknown systems and task
/// mismatches.
pub fn ingest(paths: &[PathBuf], task: TaskKind, roster: Option<&Roster>) -> Result<Dataset> {
    let mut records = Vec::new();
    let mut origins = Vec::new();
    for path in paths {
        let text = read_text(path)?;
        for (line, fields) in data_lines(&text) {
            let r =
                parse_record_line(&fields, task).map_err(|msg| Error::parse(path, line, msg))?;
            records.push(r);
            origins.push((path.clone(), line));
        }
    }
    let roster = match roster {
        Some(r) => r.clone(),
        None => {
            let mut ids: Vec<String> = records.iter().map(|r| r.system.clone()).collect();
            ids.sort();
            ids.dedup();
            Roster::new(ids)?
        }
    };
    let mut valid = Vec::with_capacity(records.len());
    for (r, (path, line)) in records.into_iter().zip(origins) {
        match validate_record(r, &roster, task) {
            Ok(r) => valid.push(r),
            Err(e @ (Error::UnknownSystem(_) | Error::TaskMismatch { .. })) => return Err(e),
            Err(e) => return Err(Error::parse(path, line, e.to_string())),
        }
    }
    Ok(Dataset {
        task,
        records: dedup_records(valid, &roster),
        roster,
        gold: None,
        documents: None,
    })
}

fn parse_gold_line(fields: &[&str], task: TaskKind) -> std::result::Result<GoldLine, String> {
    match task {
        TaskKind::SlotFilling => {
            if !(fields.len() == 3 || fields.len() == 4) {
                return Err(format!("expected 3 or 4 fields, found {}", fields.len()));
            }
            let fill = fields[2].trim();
            if fill.is_empty() {
                return Err("empty gold fill".into());
            }
            Ok(GoldLine::Fill(GoldFill {
                query: fields[0].to_string(),
                slot: fields[1].to_string(),
                fill: fill.to_string(),
                provenance: fields.get(3).map(|f| parse_span(f)).transpose()?,
            }))
        }
        TaskKind::EntityLinking => {
            expect_fields(fields, 3)?;
            Ok(GoldLine::Mention(GoldMention {
                id: fields[0].to_string(),
                entity_type: fields[1].to_string(),
                span: parse_span(fields[2])?,
            }))
        }
        TaskKind::ObjectDetection => {
            expect_fields(fields, 6)?;
            let bbox = BBox::new(
                parse_f64(fields[2], "xmin")?,
                parse_f64(fields[3], "ymin")?,
                parse_f64(fields[4], "xmax")?,
                parse_f64(fields[5], "ymax")?,
            );
            if !bbox.is_valid() {
                return Err("degenerate gold box".into());
            }
            Ok(GoldLine::Box(GoldBox {
                image: fields[0].to_string(),
                category: parse_category(fields[1])?,
                bbox,
            }))
        }
    }
}

enum GoldLine {
    Fill(GoldFill),
    Mention(GoldMention),
    Box(GoldBox),
}

pub fn parse_gold(text: &str, path: &Path, task: TaskKind) -> Result<GoldStandard> {
    let mut gold = match task {
        TaskKind::SlotFilling => GoldStandard::SlotFilling(Vec::new()),
        TaskKind::EntityLinking => GoldStandard::EntityLinking(Vec::new()),
        TaskKind::ObjectDetection => GoldStandard::ObjectDetection(Vec::new()),
    };
    for (line, fields) in data_lines(text) {
        let parsed = parse_gold_line(&fields, task).map_err(|msg| Error::parse(path, line, msg))?;
        match (&mut gold, parsed) {
            (GoldStandard::SlotFilling(v), GoldLine::Fill(g)) => v.push(g),
            (GoldStandard::EntityLinking(v), GoldLine::Mention(g)) => v.push(g),
            (GoldStandard::ObjectDetection(v), GoldLine::Box(g)) => v.push(g),
            _ => unreachable!("gold line parsed for the file's task"),
        }
    }
    Ok(gold)
}

pub fn read_gold(path: &Path, task: TaskKind) -> Result<GoldStandard> {
    parse_gold(&read_text(path)?, path, task)
}

pub fn serialize_gold(gold: &GoldStandard) -> String {
    let mut out = String::new();
    match gold {
        GoldStandard::SlotFilling(fills) => {
            for g in fills {
                match &g.provenance {
                    Some(p) => writeln!(out, "{}\t{}\t{}\t{p}", g.query, g.slot, g.fill),
                    None => writeln!(out, "{}\t{}\t{}", g.query, g.slot, g.fill),
                }
                .unwrap();
            }
        }
        GoldStandard::EntityLinking(mentions) => {
            for m in mentions {
                writeln!(out, "{}\t{}\t{}", m.id, m.entity_type, m.span).unwrap();
            }
        }
        GoldStandard::ObjectDetection(boxes) => {
            for g in boxes {
                let b = g.bbox;
                writeln!(
                    out,
                    "{}\t{}\t{}\t{}\t{}\t{}",
                    g.image, g.category, b.xmin, b.ymin, b.xmax, b.ymax
                )
                .unwrap();
            }
        }
    }
    out
}

pub fn parse_documents(text: &str, path: &Path) -> Result<DocumentStore> {
    let mut docs = BTreeMap::new();
    let mut keys = BTreeMap::new();
    for (line, fields) in data_lines(text) {
        if fields.len() != 3 {
            return Err(Error::parse(
                path,
                line,
                "expected `doc|key <tab> id <tab> text`",
            ));
        }
        let target = match fields[0] {
            "doc" => &mut docs,
            "key" => &mut keys,
            other => {
                return Err(Error::parse(
                    path,
                    line,
                    format!("unknown document kind `{other}`"),
                ))
            }
        };
        target.insert(fields[1].to_string(), fields[2].to_string());
    }
    Ok(DocumentStore::new(docs, keys))
}

pub fn read_documents(path: &Path) -> Result<DocumentStore> {
    parse_documents(&read_text(path)?, path)
}

pub fn serialize_documents(store: &DocumentStore) -> String {
    let clean = |t: &str| t.replace(['\t', '\n', '\r'], " ");
    let mut out = String::new();
    for (id, text) in store.documents() {
        writeln!(out, "doc\t{id}\t{}", clean(text)).unwrap();
    }
    for (id, text) in store.key_documents() {
        writeln!(out, "key\t{id}\t{}", clean(text)).unwrap();
    }
    out
}

fn inventory_lines(inventory: &Inventory) -> String {
    let mut out = String::new();
    match inventory {
        Inventory::Slots(slots) => {
            for s in slots {
                let kind = if s.single_valued { "single" } else { "list" };
                writeln!(out, "slot\t{}\t{kind}", s.name).unwrap();
            }
        }
        Inventory::EntityTypes(types) => {
            for t in types {
                writeln!(out, "entity_type\t{t}").unwrap();
            }
        }
        Inventory::Categories(c) => writeln!(out, "categories\t{c}").unwrap(),
    }
    out
}

/// Versioned text form of a trained model. Floats are written in shortest
/// round-trip form, so reading back reproduces every bit.
pub fn serialize_model(model: &StackerModel) -> String {
    let layout = &model.layout;
    let mut out = String::new();
    writeln!(out, "{MODEL_MAGIC}\t{MODEL_VERSION}").unwrap();
    writeln!(out, "task\t{}", layout.task()).unwrap();
    writeln!(out, "roster\t{}", layout.roster().ids().join("\t")).unwrap();
    writeln!(out, "cosine\t{}", u8::from(layout.cosine_enabled())).unwrap();
    writeln!(out, "threshold\t{}", model.threshold).unwrap();
    writeln!(out, "l2\t{}", model.l2).unwrap();
    writeln!(out, "seed\t{}", model.seed).unwrap();
    out.push_str(&inventory_lines(layout.inventory()));
    writeln!(out, "dim\t{}", model.dim()).unwrap();
    writeln!(out, "# feature\tname\tmean\tscale\tweight").unwrap();
    for (i, name) in layout.names().iter().enumerate() {
        writeln!(
            out,
            "feature\t{name}\t{}\t{}\t{}",
            model.mean[i], model.scale[i], model.weights[i]
        )
        .unwrap();
    }
    writeln!(out, "bias\t{}", model.bias).unwrap();
    out
}

pub fn parse_model(text: &str, path: &Path) -> Result<StackerModel> {
    let err = |line: usize, msg: String| Error::parse(path, line, msg);
    let mut lines = data_lines(text).peekable();
    let (line, header) = lines
        .next()
        .ok_or_else(|| err(1, "empty model file".into()))?;
    if header.first() != Some(&MODEL_MAGIC) {
        return Err(err(line, "not a model file".into()));
    }
    let version: u32 = header
        .get(1)
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| err(line, "missing model version".into()))?;
    if version != MODEL_VERSION {
        return Err(Error::IncompatibleModel(format!(
            "model format version {version}, expected {MODEL_VERSION}"
        )));
    }

    let mut task = None;
    let mut roster = None;
    let mut cosine = false;
    let mut config = TrainConfig::default();
    let mut slots = Vec::new();
    let mut types = Vec::new();
    let mut categories = None;
    let mut names = Vec::new();
    let mut mean = Vec::new();
    let mut scale = Vec::new();
    let mut weights = Vec::new();
    let mut bias = None;
    let mut dim = None;
    for (line, f) in lines {
        let num = |i: usize, what: &str| -> Result<f64> {
            f.get(i)
                .ok_or_else(|| err(line, format!("missing {what}")))
                .and_then(|s| parse_f64(s, what).map_err(|m| err(line, m)))
        };
        match f[0] {
            "task" => {
                task = Some(
                    f.get(1)
                        .ok_or_else(|| err(line, "missing task".into()))?
                        .parse::<TaskKind>()
                        .map_err(|m| err(line, m))?,
                )
            }
            "roster" => roster = Some(Roster::new(f[1..].iter().copied())?),
            "cosine" => cosine = f.get(1) == Some(&"1"),
            "threshold" => config.threshold = num(1, "threshold")?,
            "l2" => config.l2 = num(1, "l2")?,
            "seed" => {
                config.seed = f
                    .get(1)
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| err(line, "bad seed".into()))?
            }
            "slot" if f.len() == 3 => slots.push(SlotSpec {
                name: f[1].to_string(),
                single_valued: f[2] == "single",
            }),
            "entity_type" if f.len() == 2 => types.push(f[1].to_string()),
            "categories" => {
                categories = Some(
                    f.get(1)
                        .and_then(|s| s.parse::<u32>().ok())
                        .ok_or_else(|| err(line, "bad category count".into()))?,
                )
            }
            "dim" => dim = f.get(1).and_then(|s| s.parse::<usize>().ok()),
            "feature" if f.len() == 5 => {
                names.push(f[1].to_string());
                mean.push(num(2, "mean")?);
                scale.push(num(3, "scale")?);
                weights.push(num(4, "weight")?);
            }
            "bias" => bias = Some(num(1, "bias")?),
            other => return Err(err(line, format!("unexpected model entry `{other}`"))),
        }
    }

    let task = task.ok_or_else(|| err(0, "model has no task".into()))?;
    let roster = roster.ok_or_else(|| err(0, "model has no roster".into()))?;
    let inventory = match task {
        TaskKind::SlotFilling => Inventory::Slots(slots),
        TaskKind::EntityLinking => Inventory::EntityTypes(types),
        TaskKind::ObjectDetection => Inventory::Categories(
            categories.ok_or_else(|| err(0, "model has no category count".into()))?,
        ),
    };
    let layout = FeatureLayout::new(task, roster, inventory, cosine)?;
    if dim != Some(weights.len()) || layout.dim() != weights.len() || layout.names() != names {
        return Err(Error::IncompatibleModel(
            "feature layout in model file does not match its header".into(),
        ));
    }
    Ok(StackerModel {
        layout,
        weights,
        bias: bias.ok_or_else(|| err(0, "model has no bias".into()))?,
        threshold: config.threshold,
        l2: config.l2,
        seed: config.seed,
        mean,
        scale,
    })
}

pub fn read_model(path: &Path) -> Result<StackerModel> {
    parse_model(&read_text(path)?, path)
}

/// Flat `key = value` configuration; `#` starts a comment line.
pub fn parse_config(text: &str, path: &Path) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::parse(path, i + 1, "expected key = value"))?;
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}

/// Comma-separated list, empty entries dropped.
pub fn split_list(value: &str) -> Vec<String> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p() -> &'static Path {
        Path::new("mem")
    }

    #[test]
    fn span_parsing() {
        assert_eq!(
            parse_span("NYT_ENG_1:100-150").unwrap(),
            TextSpan::new("NYT_ENG_1", 100, 150)
        );
        assert_eq!(parse_span("a:b:1-2").unwrap(), TextSpan::new("a:b", 1, 2));
        assert_eq!(parse_span("d:-5-3").unwrap(), TextSpan::new("d", -5, 3));
        assert!(parse_span("d:9-3").unwrap_err().contains("precedes"));
        assert!(parse_span("d-3").is_err());
    }

    #[test]
    fn record_round_trip_each_task() {
        let recs = vec![
            OutputRecord::slot_fill("s1", "Q1", "per:age", "44", 0.25, TextSpan::new("d", 3, 4)),
            OutputRecord::mention("s1", "m.0x", "PER", TextSpan::new("d", 3, 9), 0.5),
            OutputRecord::detection("s1", "img_7", 12, BBox::new(0.5, 1.0, 20.25, 30.0), 0.1),
        ];
        for r in recs {
            let line = format_record(&r).unwrap();
            let back = parse_records(&line, p(), r.task()).unwrap();
            assert_eq!(back, vec![r]);
        }
    }

    #[test]
    fn end_before_start_names_the_line() {
        let text = "# header\ns1\tQ\tper:age\t44\t0.5\td:1-2\ns1\tQ\tper:age\t45\t0.5\td:9-2\n";
        match parse_records(text, p(), TaskKind::SlotFilling) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn gold_round_trip() {
        let text = "Q1\tper:age\t44\td:1-2\nQ1\tper:title\tmayor\n";
        let gold = parse_gold(text, p(), TaskKind::SlotFilling).unwrap();
        assert_eq!(serialize_gold(&gold), text);
        let text = "img\t3\t0\t0\t10\t10\n";
        let gold = parse_gold(text, p(), TaskKind::ObjectDetection).unwrap();
        assert_eq!(serialize_gold(&gold), text);
        let text = "NIL0001\tPER\td:0-4\n";
        let gold = parse_gold(text, p(), TaskKind::EntityLinking).unwrap();
        assert_eq!(serialize_gold(&gold), text);
    }

    #[test]
    fn documents_round_trip() {
        let text = "doc\td1\tthe quick fox\nkey\tQ1\tfox facts\n";
        let store = parse_documents(text, p()).unwrap();
        assert_eq!(store.num_documents(), 1);
        assert_eq!(serialize_documents(&store), text);
        assert!(parse_documents("page\td1\tx\n", p()).is_err());
    }

    #[test]
    fn config_parsing() {
        let cfg = parse_config("# c\ntask = slot\nslots = per:age, org:x\n\n", p()).unwrap();
        assert_eq!(cfg["task"], "slot");
        assert_eq!(split_list(&cfg["slots"]), vec!["per:age", "org:x"]);
        assert!(parse_config("nonsense", p()).is_err());
    }

    #[test]
    fn tabs_in_fields_are_rejected() {
        let r =
            OutputRecord::slot_fill("s1", "Q", "per:age", "4\t4", 0.5, TextSpan::new("d", 0, 1));
        assert!(format_record(&r).is_err());
    }

    fn arb_record() -> impl Strategy<Value = OutputRecord> {
        (
            0usize..3,
            0usize..4,
            "[A-Za-z ]{1,8}",
            0.0..=1.0f64,
            0i64..500,
            0i64..40,
        )
            .prop_map(|(s, q, fill, conf, start, len)| {
                let fill = if fill.trim().is_empty() {
                    "x".to_string()
                } else {
                    fill.trim().to_string()
                };
                OutputRecord::slot_fill(
                    &format!("sys{s}"),
                    &format!("Q{q}"),
                    "per:title",
                    &fill,
                    conf,
                    TextSpan::new(format!("doc{q}"), start, start + len),
                )
            })
    }

    proptest! {
        #[test]
        fn ingest_of_serialized_dataset_is_identity(records in proptest::collection::vec(arb_record(), 0..30)) {
            let roster = Roster::new(["sys0", "sys1", "sys2"]).unwrap();
            let ds = Dataset::from_records(TaskKind::SlotFilling, Some(&roster), records).unwrap();
            let text = ds.serialize().unwrap();
            let back = Dataset::from_records(
                TaskKind::SlotFilling,
                Some(&roster),
                parse_records(&text, p(), TaskKind::SlotFilling).unwrap(),
            ).unwrap();
            prop_assert_eq!(back, ds);
        }

        #[test]
        fn model_round_trip_is_bit_exact(
            weights in proptest::collection::vec(-1e3..1e3f64, 11),
            mean in proptest::collection::vec(-1.0..1.0f64, 11),
            scale in proptest::collection::vec(1e-6..10.0f64, 11),
            bias in -50.0..50.0f64,
        ) {
            let roster = Roster::new(["a", "b"]).unwrap();
            let inv = Inventory::Slots(vec![
                SlotSpec { name: "per:age".into(), single_valued: true },
                SlotSpec { name: "per:title".into(), single_valued: false },
                SlotSpec { name: "org:x".into(), single_valued: false },
            ]);
            let layout = FeatureLayout::new(TaskKind::SlotFilling, roster, inv, true).unwrap();
            let model = StackerModel { layout, weights, bias, threshold: 0.5, l2: 1e-4, seed: 9, mean, scale };
            let text = serialize_model(&model);
            let back = parse_model(&text, p()).unwrap();
            for (a, b) in back.weights.iter().zip(&model.weights) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
            prop_assert_eq!(back.bias.to_bits(), model.bias.to_bits());
            prop_assert_eq!(back, model);
        }
    }
}

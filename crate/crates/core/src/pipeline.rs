//! End-to-end runs: configuration, training, prediction, scoring and the
//! voting sweep, both as library calls and as file-to-file commands.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::align::group_all;
use crate::error::{Error, Result};
use crate::features::{build_feature_vector, FeatureLayout};
use crate::fuse::{fuse, oracle_vote, VoteSweep};
use crate::gold::GoldStandard;
use crate::io::{
    format_record, ingest, parse_config, read_documents, read_gold, read_model, read_text,
    serialize_model, serialize_records, split_list, write_atomic, Dataset,
};
use crate::model::{Inventory, OutputRecord, Roster, SlotSpec, TaskKind};
use crate::score::{score_output, ScoreReport};
use crate::stacker::{label_instances, train, Instance, StackerModel, TrainConfig, TrainLog};
use crate::synth::{generate_synthetic, SynthSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Ingest,
    Train,
    Predict,
    Score,
    VoteSweep,
    Synth,
}

/// Which features the meta-classifier sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FeatureSet {
    #[default]
    Full,
    /// Confidence block only; every auxiliary block is zeroed.
    ConfidencesOnly,
}

/// Settings for one run, usually read from a `key = value` file and then
/// overridden from the command line.
///
/// | key | meaning |
/// |-----|---------|
/// | `task` | `slot-filling`, `entity-linking` or `object-detection` |
/// | `inputs` | comma-separated system output files |
/// | `gold`, `docs`, `model`, `out` | paths |
/// | `seed` | seed for training order and synthetic data |
/// | `roster` | comma-separated system ids, in feature order |
/// | `slots`, `single_valued` | slot inventory and its single-valued subset |
/// | `entity_types` | entity type inventory |
/// | `categories` | number of object categories |
/// | `cosine` | use document similarity features when documents are given |
/// | `learning_rate`, `epochs`, `l2`, `batch_size`, `tolerance`, `threshold` | training |
/// | `systems`, `accuracies`, `accuracy_min`, `accuracy_max`, `confidence_noise`, `rho`, `coverage`, `train_keys`, `test_keys` | synthetic data |
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub task: Option<TaskKind>,
    pub inputs: Vec<PathBuf>,
    pub gold: Option<PathBuf>,
    pub docs: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: u64,
    pub roster: Option<Vec<String>>,
    pub slots: Option<Vec<SlotSpec>>,
    pub entity_types: Option<Vec<String>>,
    pub categories: Option<u32>,
    pub cosine: bool,
    pub train: TrainConfig,
    pub synth: SynthSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        let train = TrainConfig::default();
        RunConfig {
            task: None,
            inputs: Vec::new(),
            gold: None,
            docs: None,
            model: None,
            out: None,
            seed: train.seed,
            roster: None,
            slots: None,
            entity_types: None,
            categories: None,
            cosine: true,
            train,
            synth: SynthSpec::default(),
        }
    }
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| Error::InvalidConfig(format!("`{key}`: {e}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "on" => Ok(true),
        "0" | "false" | "no" | "off" => Ok(false),
        _ => Err(Error::InvalidConfig(format!(
            "`{key}`: expected a boolean, found `{value}`"
        ))),
    }
}

impl RunConfig {
    /// Builds a config from parsed entries; relative paths resolve against
    /// `base`.
    pub fn from_entries(entries: &BTreeMap<String, String>, base: &Path) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let path = |v: &str| base.join(v);
        let mut single_valued: Vec<String> = Vec::new();
        let mut slot_names: Option<Vec<String>> = None;
        let mut systems: Option<usize> = None;
        let mut accuracies: Option<Vec<f64>> = None;
        let (mut acc_lo, mut acc_hi) = (0.35, 0.6);
        let mut train_seed = None;
        for (key, value) in entries {
            let v = value.as_str();
            match key.as_str() {
                "task" => cfg.task = Some(v.parse().map_err(Error::InvalidConfig)?),
                "inputs" => cfg.inputs = split_list(v).iter().map(|p| path(p)).collect(),
                "gold" => cfg.gold = Some(path(v)),
                "docs" => cfg.docs = Some(path(v)),
                "model" => cfg.model = Some(path(v)),
                "out" => cfg.out = Some(path(v)),
                "seed" => cfg.seed = parse_value(key, v)?,
                "train_seed" => train_seed = Some(parse_value(key, v)?),
                "roster" => cfg.roster = Some(split_list(v)),
                "slots" => slot_names = Some(split_list(v)),
                "single_valued" => single_valued = split_list(v),
                "entity_types" => cfg.entity_types = Some(split_list(v)),
                "categories" => cfg.categories = Some(parse_value(key, v)?),
                "cosine" => cfg.cosine = parse_bool(key, v)?,
                "learning_rate" => cfg.train.learning_rate = parse_value(key, v)?,
                "epochs" => cfg.train.epochs = parse_value(key, v)?,
                "l2" => cfg.train.l2 = parse_value(key, v)?,
                "batch_size" => {
                    cfg.train.batch_size = match v {
                        "" | "full" | "none" => None,
                        _ => Some(parse_value(key, v)?),
                    }
                }
                "tolerance" => cfg.train.tolerance = parse_value(key, v)?,
                "threshold" => cfg.train.threshold = parse_value(key, v)?,
                "systems" => systems = Some(parse_value(key, v)?),
                "accuracies" => {
                    accuracies = Some(
                        split_list(v)
                            .iter()
                            .map(|a| parse_value(key, a))
                            .collect::<Result<_>>()?,
                    )
                }
                "accuracy_min" => acc_lo = parse_value(key, v)?,
                "accuracy_max" => acc_hi = parse_value(key, v)?,
                "confidence_noise" => cfg.synth.confidence_noise = parse_value(key, v)?,
                "rho" => cfg.synth.rho = parse_value(key, v)?,
                "coverage" => cfg.synth.coverage = parse_value(key, v)?,
                "train_keys" => cfg.synth.train_keys = parse_value(key, v)?,
                "test_keys" => cfg.synth.test_keys = parse_value(key, v)?,
                other => return Err(Error::InvalidConfig(format!("unknown key `{other}`"))),
            }
        }
        if let Some(names) = slot_names {
            if let Some(s) = single_valued.iter().find(|s| !names.contains(s)) {
                return Err(Error::InvalidConfig(format!(
                    "single-valued slot `{s}` is not listed in `slots`"
                )));
            }
            cfg.slots = Some(
                names
                    .into_iter()
                    .map(|name| SlotSpec {
                        single_valued: single_valued.contains(&name),
                        name,
                    })
                    .collect(),
            );
        } else if !single_valued.is_empty() {
            return Err(Error::InvalidConfig(
                "`single_valued` given without `slots`".into(),
            ));
        }
        cfg.synth.accuracies = match (accuracies, systems) {
            (Some(a), Some(n)) if a.len() != n => {
                return Err(Error::InvalidConfig(format!(
                    "{} accuracies given for {n} systems",
                    a.len()
                )))
            }
            (Some(a), _) => a,
            (None, n) => {
                SynthSpec::with_accuracy_range(
                    TaskKind::SlotFilling,
                    n.unwrap_or(5),
                    acc_lo,
                    acc_hi,
                )
                .accuracies
            }
        };
        if let Some(c) = cfg.categories {
            cfg.synth.categories = c;
        }
        cfg.train.seed = train_seed.unwrap_or(cfg.seed);
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let entries = parse_config(&read_text(path)?, path)?;
        let base = path.parent().unwrap_or(Path::new(""));
        RunConfig::from_entries(&entries, base)
    }

    /// Sets the run seed; the training seed follows it.
    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.train.seed = seed;
    }

    pub fn require_task(&self) -> Result<TaskKind> {
        self.task
            .ok_or_else(|| Error::InvalidConfig("no task given".into()))
    }

    pub fn roster(&self) -> Result<Option<Roster>> {
        self.roster.as_ref().map(Roster::new).transpose()
    }

    /// Configured inventory for `task`, if any.
    pub fn inventory(&self, task: TaskKind) -> Option<Inventory> {
        match task {
            TaskKind::SlotFilling => self.slots.clone().map(Inventory::Slots),
            TaskKind::EntityLinking => self.entity_types.clone().map(Inventory::EntityTypes),
            TaskKind::ObjectDetection => self.categories.map(Inventory::Categories),
        }
    }

    pub fn synth_spec(&self) -> Result<SynthSpec> {
        Ok(SynthSpec {
            task: self.require_task()?,
            ..self.synth.clone()
        })
    }
}

/// Configured inventory, or one inferred from the records (and gold boxes,
/// for the category count).
pub fn resolve_inventory(config_inventory: Option<Inventory>, ds: &Dataset) -> Inventory {
    if let Some(inv) = config_inventory {
        return inv;
    }
    let inferred = Inventory::infer(ds.task, &ds.records);
    match (inferred, &ds.gold) {
        (Inventory::Categories(c), Some(GoldStandard::ObjectDetection(boxes))) => {
            Inventory::Categories(boxes.iter().map(|b| b.category).fold(c, u32::max))
        }
        (inv, _) => inv,
    }
}

/// Groups the dataset's records per key and value and builds one instance
/// per group under `layout`.
pub fn build_instances(
    ds: &Dataset,
    layout: &FeatureLayout,
    features: FeatureSet,
) -> Result<Vec<Instance>> {
    let groups = group_all(&ds.records, ds.task, layout.roster())?;
    groups
        .into_iter()
        .map(|g| {
            let f = build_feature_vector(&g, layout, ds.documents.as_ref())?;
            let f = match features {
                FeatureSet::Full => f,
                FeatureSet::ConfidencesOnly => f.confidences_only(layout),
            };
            Ok(Instance::new(g, f))
        })
        .collect()
}

/// Trains the meta-classifier on a dataset with gold attached. Document
/// similarity features are used when `cosine` is set and documents are
/// present.
pub fn fit(
    ds: &Dataset,
    inventory: &Inventory,
    config: &TrainConfig,
    cosine: bool,
    features: FeatureSet,
) -> Result<(StackerModel, TrainLog)> {
    let gold = ds
        .gold
        .as_ref()
        .ok_or_else(|| Error::InvalidConfig("training requires gold".into()))?;
    let layout = FeatureLayout::new(
        ds.task,
        ds.roster.clone(),
        inventory.clone(),
        cosine && ds.documents.is_some(),
    )?;
    let mut instances = build_instances(ds, &layout, features)?;
    label_instances(&mut instances, gold)?;
    train(&instances, &layout, config)
}

/// Fails unless the model can consume the dataset: same task, every input
/// system in the model roster, documents present if the model uses them.
pub fn check_compatible(model: &StackerModel, ds: &Dataset) -> Result<()> {
    let layout = &model.layout;
    if layout.task() != ds.task {
        return Err(Error::IncompatibleModel(format!(
            "model is for {}, input is {}",
            layout.task(),
            ds.task
        )));
    }
    if let Some(s) = ds.roster.iter().find(|s| !layout.roster().contains(s)) {
        return Err(Error::IncompatibleModel(format!(
            "system `{s}` is not in the model roster ({})",
            layout.roster().ids().join(", ")
        )));
    }
    if layout.cosine_enabled() && ds.documents.is_none() {
        return Err(Error::IncompatibleModel(
            "model uses document similarity features but no documents were given".into(),
        ));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    /// Every candidate with its meta-confidence.
    pub instances: Vec<Instance>,
    pub output: Vec<OutputRecord>,
}

pub fn predict(model: &StackerModel, ds: &Dataset, features: FeatureSet) -> Result<Prediction> {
    check_compatible(model, ds)?;
    let mut instances = build_instances(ds, &model.layout, features)?;
    model.predict_instances(&mut instances)?;
    let accepted: Vec<Instance> = instances
        .iter()
        .filter(|i| i.meta_confidence.is_some_and(|p| p > model.threshold))
        .cloned()
        .collect();
    let output = fuse(ds.task, &accepted, model.layout.inventory())?;
    Ok(Prediction { instances, output })
}

fn require_gold(ds: &Dataset) -> Result<&GoldStandard> {
    ds.gold
        .as_ref()
        .ok_or_else(|| Error::InvalidConfig("scoring requires gold".into()))
}

/// Score of each system's own output, in roster order.
pub fn score_systems(ds: &Dataset, inventory: &Inventory) -> Result<Vec<(String, ScoreReport)>> {
    let gold = require_gold(ds)?;
    ds.roster
        .iter()
        .map(|s| {
            Ok((
                s.to_string(),
                score_output(&ds.records_of(s), gold, inventory)?,
            ))
        })
        .collect()
}

pub fn vote_sweep(ds: &Dataset, inventory: &Inventory) -> Result<VoteSweep> {
    let gold = require_gold(ds)?;
    let groups = group_all(&ds.records, ds.task, &ds.roster)?;
    oracle_vote(&groups, gold, inventory, ds.roster.len())
}

/// `path` with `.suffix` appended to its file name.
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".");
    name.push(suffix);
    path.with_file_name(name)
}

pub fn format_train_log(log: &TrainLog) -> String {
    let mut out = String::new();
    writeln!(out, "# epochs_run\t{}", log.epochs_run).unwrap();
    writeln!(out, "# final_gradient_norm\t{}", log.final_gradient_norm).unwrap();
    writeln!(out, "epoch\tloss").unwrap();
    for (i, l) in log.losses.iter().enumerate() {
        writeln!(out, "{i}\t{l}").unwrap();
    }
    out
}

pub fn format_instances(instances: &[Instance], threshold: f64) -> Result<String> {
    let mut out = String::from("# n\tmeta_confidence\taccepted\tcanonical record\n");
    for inst in instances {
        let p = inst.meta_confidence.unwrap_or(0.0);
        writeln!(
            out,
            "{}\t{p}\t{}\t{}",
            inst.group.n(),
            u8::from(p > threshold),
            format_record(inst.group.canonical_record())?
        )
        .unwrap();
    }
    Ok(out)
}

pub fn format_curve(sweep: &VoteSweep) -> String {
    let mut out = String::new();
    match sweep.curve.first().map(|(_, r)| r) {
        Some(ScoreReport::Ap { .. }) => out.push_str("# threshold\tmedian_ap\tmean_ap\n"),
        _ => out.push_str("# threshold\tprecision\trecall\tf1\n"),
    }
    for (t, report) in &sweep.curve {
        match report {
            ScoreReport::Prf {
                precision,
                recall,
                f1,
            } => writeln!(out, "{t}\t{precision}\t{recall}\t{f1}").unwrap(),
            ScoreReport::Ap { median, mean, .. } => writeln!(out, "{t}\t{median}\t{mean}").unwrap(),
        }
    }
    writeln!(out, "# best_threshold\t{}", sweep.best_threshold).unwrap();
    out
}

fn require<'a>(p: &'a Option<PathBuf>, what: &str) -> Result<&'a PathBuf> {
    p.as_ref()
        .ok_or_else(|| Error::InvalidConfig(format!("missing {what} path")))
}

/// Loads the configured inputs, attaching gold and documents when given.
pub fn load_dataset(config: &RunConfig, roster: Option<&Roster>) -> Result<Dataset> {
    let task = config.require_task()?;
    if config.inputs.is_empty() {
        return Err(Error::InvalidConfig("no input files given".into()));
    }
    let configured = config.roster()?;
    let mut ds = ingest(&config.inputs, task, roster.or(configured.as_ref()))?;
    if let Some(g) = &config.gold {
        ds.gold = Some(read_gold(g, task)?);
    }
    if let Some(d) = &config.docs {
        ds.documents = Some(read_documents(d)?);
    }
    Ok(ds)
}

/// Runs one command and writes its artifacts. Returns a short report for
/// the terminal.
pub fn run_pipeline(config: &RunConfig, mode: Mode) -> Result<String> {
    match mode {
        Mode::Ingest => {
            let ds = load_dataset(config, None)?;
            let text = ds.serialize()?;
            if let Some(out) = &config.out {
                write_atomic(out, &text)?;
            }
            let mut report = format!(
                "{} records from {} systems\n",
                ds.records.len(),
                ds.roster.len()
            );
            for s in ds.roster.iter() {
                writeln!(report, "{s}\t{}", ds.records_of(s).len()).unwrap();
            }
            Ok(report)
        }
        Mode::Train => {
            let out = require(&config.out, "output")?;
            let ds = load_dataset(config, None)?;
            if ds.gold.is_none() {
                return Err(Error::InvalidConfig("training requires gold".into()));
            }
            let inventory = resolve_inventory(config.inventory(ds.task), &ds);
            let (model, log) = fit(
                &ds,
                &inventory,
                &config.train,
                config.cosine,
                FeatureSet::Full,
            )?;
            write_atomic(out, &serialize_model(&model))?;
            write_atomic(&sibling(out, "log"), &format_train_log(&log))?;
            Ok(format!(
                "trained on {} systems, {} epochs, final loss {}\n",
                ds.roster.len(),
                log.epochs_run,
                log.losses.last().copied().unwrap_or(f64::NAN)
            ))
        }
        Mode::Predict => {
            let out = require(&config.out, "output")?;
            let model = read_model(require(&config.model, "model")?)?;
            let ds = load_dataset(config, None)?;
            let prediction = predict(&model, &ds, FeatureSet::Full)?;
            write_atomic(out, &serialize_records(&prediction.output)?)?;
            write_atomic(
                &sibling(out, "instances.tsv"),
                &format_instances(&prediction.instances, model.threshold)?,
            )?;
            let mut report = format!(
                "{} of {} candidates accepted, {} records written\n",
                prediction
                    .instances
                    .iter()
                    .filter(|i| i.meta_confidence.is_some_and(|p| p > model.threshold))
                    .count(),
                prediction.instances.len(),
                prediction.output.len()
            );
            if ds.gold.is_some() {
                let score = score_output(
                    &prediction.output,
                    require_gold(&ds)?,
                    model.layout.inventory(),
                )?;
                report.push_str(&score.to_text());
            }
            Ok(report)
        }
        Mode::Score => {
            // scored files come from any producer, not the configured roster
            let unrostered = RunConfig {
                roster: None,
                ..config.clone()
            };
            let ds = load_dataset(&unrostered, None)?;
            let gold = require_gold(&ds)?;
            let inventory = resolve_inventory(config.inventory(ds.task), &ds);
            let report = score_output(&ds.records, gold, &inventory)?.to_text();
            if let Some(out) = &config.out {
                write_atomic(out, &report)?;
            }
            Ok(report)
        }
        Mode::VoteSweep => {
            let out = require(&config.out, "output")?;
            let ds = load_dataset(config, None)?;
            let inventory = resolve_inventory(config.inventory(ds.task), &ds);
            let sweep = vote_sweep(&ds, &inventory)?;
            let curve = format_curve(&sweep);
            write_atomic(out, &curve)?;
            write_atomic(
                &sibling(out, "best.tsv"),
                &serialize_records(&sweep.best_output)?,
            )?;
            Ok(curve)
        }
        Mode::Synth => {
            let out = require(&config.out, "output")?;
            let spec = config.synth_spec()?;
            let data = generate_synthetic(&spec, config.seed)?;
            data.write_to(out)?;
            Ok(format!(
                "{} systems, {} train and {} test keys written to {}\n",
                spec.systems(),
                spec.train_keys,
                spec.test_keys,
                out.display()
            ))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::TextSpan;

    fn entries(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
        pairs
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect()
    }

    #[test]
    fn config_from_entries() {
        let cfg = RunConfig::from_entries(
            &entries(&[
                ("task", "slot-filling"),
                ("inputs", "a.tsv, b.tsv"),
                ("slots", "per:age,per:title"),
                ("single_valued", "per:age"),
                ("epochs", "50"),
                ("seed", "9"),
                ("batch_size", "16"),
            ]),
            Path::new("/data"),
        )
        .unwrap();
        assert_eq!(cfg.task, Some(TaskKind::SlotFilling));
        assert_eq!(
            cfg.inputs,
            vec![PathBuf::from("/data/a.tsv"), PathBuf::from("/data/b.tsv")]
        );
        assert_eq!(cfg.train.epochs, 50);
        assert_eq!(cfg.train.seed, 9);
        assert_eq!(cfg.train.batch_size, Some(16));
        let inv = cfg.inventory(TaskKind::SlotFilling).unwrap();
        assert!(inv.slot("per:age").unwrap().single_valued);
        assert!(!inv.slot("per:title").unwrap().single_valued);
    }

    #[test]
    fn config_rejects_unknown_keys_and_bad_values() {
        let base = Path::new(".");
        assert!(RunConfig::from_entries(&entries(&[("colour", "red")]), base).is_err());
        assert!(RunConfig::from_entries(&entries(&[("epochs", "many")]), base).is_err());
        assert!(RunConfig::from_entries(&entries(&[("single_valued", "per:age")]), base).is_err());
        assert!(RunConfig::from_entries(
            &entries(&[("systems", "3"), ("accuracies", "0.5")]),
            base
        )
        .is_err());
    }

    #[test]
    fn synth_accuracy_range_from_config() {
        let cfg = RunConfig::from_entries(
            &entries(&[
                ("systems", "3"),
                ("accuracy_min", "0.2"),
                ("accuracy_max", "0.4"),
            ]),
            Path::new("."),
        )
        .unwrap();
        let a = &cfg.synth.accuracies;
        assert_eq!(a.len(), 3);
        assert!((a[1] - 0.3).abs() < 1e-12);
    }

    #[test]
    fn sibling_paths() {
        assert_eq!(
            sibling(Path::new("out/model.txt"), "log"),
            PathBuf::from("out/model.txt.log")
        );
    }

    fn tiny(roster: &[&str]) -> Dataset {
        let recs = roster
            .iter()
            .map(|s| {
                OutputRecord::slot_fill(s, "q", "per:age", "44", 0.5, TextSpan::new("d", 0, 1))
            })
            .collect();
        Dataset::from_records(TaskKind::SlotFilling, None, recs).unwrap()
    }

    #[test]
    fn model_roster_must_cover_inputs() {
        let trained_on = tiny(&["a", "b"]);
        let layout = FeatureLayout::new(
            TaskKind::SlotFilling,
            trained_on.roster.clone(),
            Inventory::infer(TaskKind::SlotFilling, &trained_on.records),
            false,
        )
        .unwrap();
        let model = StackerModel::zeroed(layout, &TrainConfig::default());
        assert!(check_compatible(&model, &tiny(&["a"])).is_ok());
        assert!(matches!(
            check_compatible(&model, &tiny(&["a", "b", "c"])),
            Err(Error::IncompatibleModel(_))
        ));
        assert!(matches!(
            predict(&model, &tiny(&["c"]), FeatureSet::Full),
            Err(Error::IncompatibleModel(_))
        ));
    }
}

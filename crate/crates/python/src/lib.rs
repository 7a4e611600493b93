use std::collections::BTreeMap;
use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use swaf_core::io::{self, Dataset as CoreDataset};
use swaf_core::model::{BBox, Inventory, Roster, TaskKind};
use swaf_core::pipeline::{self, FeatureSet, Mode, RunConfig};
use swaf_core::score::{score_output, ScoreReport};
use swaf_core::stacker::{StackerModel, TrainConfig};
use swaf_core::synth::{generate_synthetic, SynthSpec};

type Curve<'py> = Vec<(usize, Bound<'py, PyDict>)>;

create_exception!(swaf, SwafError, PyException);
create_exception!(swaf, DataError, SwafError);
create_exception!(swaf, IncompatibleModelError, SwafError);

fn py_err(e: swaf_core::Error) -> PyErr {
    match e {
        swaf_core::Error::IncompatibleModel(_) => IncompatibleModelError::new_err(e.to_string()),
        _ => DataError::new_err(e.to_string()),
    }
}

fn parse_task(task: &str) -> PyResult<TaskKind> {
    task.parse().map_err(PyValueError::new_err)
}

fn report_dict<'py>(py: Python<'py>, report: &ScoreReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    match report {
        ScoreReport::Prf {
            precision,
            recall,
            f1,
        } => {
            d.set_item("precision", precision)?;
            d.set_item("recall", recall)?;
            d.set_item("f1", f1)?;
        }
        ScoreReport::Ap {
            per_class,
            median,
            mean,
        } => {
            d.set_item("per_class", per_class.clone())?;
            d.set_item("median", median)?;
            d.set_item("mean", mean)?;
        }
    }
    Ok(d)
}

fn record_lines(records: &[swaf_core::model::OutputRecord]) -> PyResult<Vec<String>> {
    records
        .iter()
        .map(|r| io::format_record(r).map_err(py_err))
        .collect()
}

/// System outputs for one task, optionally with gold and documents.
#[pyclass(module = "swaf", skip_from_py_object)]
#[derive(Clone)]
struct Dataset {
    inner: CoreDataset,
    inventory: Option<Inventory>,
}

#[pymethods]
impl Dataset {
    #[staticmethod]
    #[pyo3(signature = (task, inputs, gold=None, docs=None, roster=None))]
    fn load(
        task: &str,
        inputs: Vec<PathBuf>,
        gold: Option<PathBuf>,
        docs: Option<PathBuf>,
        roster: Option<Vec<String>>,
    ) -> PyResult<Self> {
        let task = parse_task(task)?;
        let roster = roster.map(Roster::new).transpose().map_err(py_err)?;
        let mut inner = io::ingest(&inputs, task, roster.as_ref()).map_err(py_err)?;
        if let Some(g) = gold {
            inner.gold = Some(io::read_gold(&g, task).map_err(py_err)?);
        }
        if let Some(d) = docs {
            inner.documents = Some(io::read_documents(&d).map_err(py_err)?);
        }
        Ok(Dataset {
            inner,
            inventory: None,
        })
    }

    #[getter]
    fn task(&self) -> &'static str {
        self.inner.task.as_str()
    }

    #[getter]
    fn systems(&self) -> Vec<String> {
        self.inner.roster.ids().to_vec()
    }

    #[getter]
    fn has_gold(&self) -> bool {
        self.inner.gold.is_some()
    }

    fn __len__(&self) -> usize {
        self.inner.records.len()
    }

    /// Normalized records as tab-separated lines.
    fn records(&self) -> PyResult<Vec<String>> {
        record_lines(&self.inner.records)
    }

    /// Score of each system's own output.
    fn score_systems<'py>(&self, py: Python<'py>) -> PyResult<Vec<(String, Bound<'py, PyDict>)>> {
        let inventory = self.resolved_inventory();
        pipeline::score_systems(&self.inner, &inventory)
            .map_err(py_err)?
            .iter()
            .map(|(s, r)| Ok((s.clone(), report_dict(py, r)?)))
            .collect()
    }

    /// Voting curve as (threshold, report) pairs plus the best threshold.
    fn vote_sweep<'py>(&self, py: Python<'py>) -> PyResult<(Curve<'py>, usize)> {
        let sweep =
            pipeline::vote_sweep(&self.inner, &self.resolved_inventory()).map_err(py_err)?;
        let curve = sweep
            .curve
            .iter()
            .map(|(t, r)| Ok((*t, report_dict(py, r)?)))
            .collect::<PyResult<_>>()?;
        Ok((curve, sweep.best_threshold))
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataset(task={}, systems={}, records={})",
            self.inner.task,
            self.inner.roster.len(),
            self.inner.records.len()
        )
    }
}

impl Dataset {
    fn resolved_inventory(&self) -> Inventory {
        pipeline::resolve_inventory(self.inventory.clone(), &self.inner)
    }
}

/// Trained meta-classifier.
#[pyclass(module = "swaf", skip_from_py_object)]
#[derive(Clone)]
struct Model {
    inner: StackerModel,
}

#[pymethods]
impl Model {
    #[staticmethod]
    #[pyo3(signature = (dataset, seed=42, l2=None, epochs=None, cosine=true, confidences_only=false))]
    fn train(
        dataset: &Dataset,
        seed: u64,
        l2: Option<f64>,
        epochs: Option<usize>,
        cosine: bool,
        confidences_only: bool,
    ) -> PyResult<Self> {
        let mut config = TrainConfig {
            seed,
            ..TrainConfig::default()
        };
        if let Some(l2) = l2 {
            config.l2 = l2;
        }
        if let Some(epochs) = epochs {
            config.epochs = epochs;
        }
        let features = if confidences_only {
            FeatureSet::ConfidencesOnly
        } else {
            FeatureSet::Full
        };
        let (inner, _) = pipeline::fit(
            &dataset.inner,
            &dataset.resolved_inventory(),
            &config,
            cosine,
            features,
        )
        .map_err(py_err)?;
        Ok(Model { inner })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Model {
            inner: io::read_model(&path).map_err(py_err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        io::write_atomic(&path, &io::serialize_model(&self.inner)).map_err(py_err)
    }

    /// Fused output as tab-separated lines.
    fn predict(&self, dataset: &Dataset) -> PyResult<Vec<String>> {
        let p = pipeline::predict(&self.inner, &dataset.inner, FeatureSet::Full).map_err(py_err)?;
        record_lines(&p.output)
    }

    /// Fuses and scores against the dataset's gold.
    fn evaluate<'py>(&self, py: Python<'py>, dataset: &Dataset) -> PyResult<Bound<'py, PyDict>> {
        let p = pipeline::predict(&self.inner, &dataset.inner, FeatureSet::Full).map_err(py_err)?;
        let gold = dataset
            .inner
            .gold
            .as_ref()
            .ok_or_else(|| PyValueError::new_err("dataset has no gold"))?;
        let report =
            score_output(&p.output, gold, self.inner.layout.inventory()).map_err(py_err)?;
        report_dict(py, &report)
    }

    #[getter]
    fn feature_names(&self) -> Vec<String> {
        self.inner.layout.names()
    }

    #[getter]
    fn weights(&self) -> Vec<f64> {
        self.inner.weights.clone()
    }

    #[getter]
    fn bias(&self) -> f64 {
        self.inner.bias
    }

    #[getter]
    fn threshold(&self) -> f64 {
        self.inner.threshold
    }

    fn __repr__(&self) -> String {
        format!(
            "Model(task={}, dim={})",
            self.inner.layout.task(),
            self.inner.dim()
        )
    }
}

/// Writes a synthetic corpus to `out` and returns (train, test) datasets.
#[pyfunction]
#[pyo3(signature = (task, out, seed=42, systems=5, accuracy_min=0.35, accuracy_max=0.6, train_keys=None, test_keys=None))]
#[allow(clippy::too_many_arguments)]
fn synth(
    task: &str,
    out: PathBuf,
    seed: u64,
    systems: usize,
    accuracy_min: f64,
    accuracy_max: f64,
    train_keys: Option<usize>,
    test_keys: Option<usize>,
) -> PyResult<(Dataset, Dataset)> {
    let mut spec =
        SynthSpec::with_accuracy_range(parse_task(task)?, systems, accuracy_min, accuracy_max);
    if let Some(n) = train_keys {
        spec.train_keys = n;
    }
    if let Some(n) = test_keys {
        spec.test_keys = n;
    }
    let data = generate_synthetic(&spec, seed).map_err(py_err)?;
    data.write_to(&out).map_err(py_err)?;
    let wrap = |inner| Dataset {
        inner,
        inventory: Some(data.inventory.clone()),
    };
    Ok((wrap(data.train.clone()), wrap(data.test.clone())))
}

/// Runs one CLI mode from key = value settings.
#[pyfunction]
#[pyo3(signature = (mode, **settings))]
fn run(mode: &str, settings: Option<&Bound<'_, PyDict>>) -> PyResult<String> {
    let mode = match mode {
        "ingest" => Mode::Ingest,
        "train" => Mode::Train,
        "predict" => Mode::Predict,
        "score" => Mode::Score,
        "vote-sweep" | "vote_sweep" => Mode::VoteSweep,
        "synth" => Mode::Synth,
        other => return Err(PyValueError::new_err(format!("unknown mode {other:?}"))),
    };
    let mut entries = BTreeMap::new();
    if let Some(settings) = settings {
        for (k, v) in settings.iter() {
            let value = match v.extract::<Vec<String>>() {
                Ok(list) if !v.is_instance_of::<pyo3::types::PyString>() => list.join(","),
                _ => v.str()?.to_string(),
            };
            entries.insert(k.extract::<String>()?, value);
        }
    }
    let config = RunConfig::from_entries(&entries, &std::env::current_dir()?).map_err(py_err)?;
    pipeline::run_pipeline(&config, mode).map_err(py_err)
}

/// Intersection over union of two (xmin, ymin, xmax, ymax) boxes.
#[pyfunction]
fn iou(a: (f64, f64, f64, f64), b: (f64, f64, f64, f64)) -> f64 {
    swaf_core::align::iou(
        &BBox::new(a.0, a.1, a.2, a.3),
        &BBox::new(b.0, b.1, b.2, b.3),
    )
}

#[pymodule]
fn swaf(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Dataset>()?;
    m.add_class::<Model>()?;
    m.add_function(wrap_pyfunction!(synth, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(iou, m)?)?;
    m.add("SwafError", m.py().get_type::<SwafError>())?;
    m.add("DataError", m.py().get_type::<DataError>())?;
    m.add(
        "IncompatibleModelError",
        m.py().get_type::<IncompatibleModelError>(),
    )?;
    Ok(())
}

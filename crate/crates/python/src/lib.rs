//! Python bindings: datasets, training configs, trained models and the
//! distance / weighting primitives.

use std::collections::BTreeMap;
use std::path::PathBuf;

use pyo3::exceptions::{PyArithmeticError, PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyBool, PyDict};

use hake_core::data::{build_bundle, load_dir, RawTriple};
use hake_core::eval::Direction;
use hake_core::synth::{generate_synthetic_kg, SynthSpec};
use hake_core::trainer::{train_with, TrainOptions};
use hake_core::{analysis, gradcheck, model, trainer};
use hake_core::{Checkpoint, DatasetBundle, HakeError, ModelParams, Triple};

fn to_py(e: HakeError) -> PyErr {
    match e {
        HakeError::Io { .. } => PyIOError::new_err(e.to_string()),
        HakeError::Numeric(_) | HakeError::NonFiniteGradient { .. } => PyArithmeticError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

/// Train/valid/test triples with their vocabulary and filter index.
#[pyclass(module = "hake", frozen)]
struct Dataset {
    bundle: DatasetBundle,
    levels: Option<Vec<usize>>,
}

fn raw(triples: Vec<(String, String, String)>) -> Vec<RawTriple> {
    triples.into_iter().map(|(h, r, t)| RawTriple { head: h, relation: r, tail: t }).collect()
}

#[pymethods]
impl Dataset {
    /// Reads `train.txt`, `valid.txt`, `test.txt` from a directory.
    #[staticmethod]
    fn load(dir: PathBuf) -> PyResult<Self> {
        Ok(Self { bundle: load_dir(&dir).map_err(to_py)?, levels: None })
    }

    /// Builds a dataset from `(head, relation, tail)` string tuples.
    #[staticmethod]
    #[pyo3(signature = (train, valid=Vec::new(), test=Vec::new()))]
    fn from_triples(
        train: Vec<(String, String, String)>,
        valid: Vec<(String, String, String)>,
        test: Vec<(String, String, String)>,
    ) -> PyResult<Self> {
        let bundle = build_bundle(&raw(train), &raw(valid), &raw(test)).map_err(to_py)?;
        Ok(Self { bundle, levels: None })
    }

    /// Tree-shaped synthetic graph; `levels` holds each entity's depth.
    #[staticmethod]
    #[pyo3(signature = (depth=4, branching=3, seed=0, sibling_fraction=0.5))]
    fn synthetic(depth: usize, branching: usize, seed: u64, sibling_fraction: f64) -> PyResult<Self> {
        let kg = generate_synthetic_kg(&SynthSpec { depth, branching, seed, sibling_fraction }).map_err(to_py)?;
        Ok(Self { bundle: kg.bundle, levels: Some(kg.levels) })
    }

    #[getter]
    fn num_entities(&self) -> usize {
        self.bundle.num_entities()
    }

    #[getter]
    fn num_relations(&self) -> usize {
        self.bundle.num_relations()
    }

    #[getter]
    fn entity_names(&self) -> Vec<String> {
        self.bundle.vocab.entities.names().to_vec()
    }

    #[getter]
    fn relation_names(&self) -> Vec<String> {
        self.bundle.vocab.relations.names().to_vec()
    }

    #[getter]
    fn levels(&self) -> Option<Vec<usize>> {
        self.levels.clone()
    }

    fn entity_id(&self, name: &str) -> PyResult<usize> {
        self.bundle.vocab.resolve_entity(name).map_err(to_py)
    }

    fn relation_id(&self, name: &str) -> PyResult<usize> {
        self.bundle.vocab.resolve_relation(name).map_err(to_py)
    }

    /// Triples of one split as id tuples.
    fn split(&self, name: &str) -> PyResult<Vec<(usize, usize, usize)>> {
        Ok(split_of(&self.bundle, name)?.iter().map(|t| (t.h, t.r, t.t)).collect())
    }

    fn stats(&self) -> BTreeMap<&'static str, usize> {
        let s = self.bundle.stats();
        BTreeMap::from([
            ("entities", s.entities),
            ("relations", s.relations),
            ("train", s.train),
            ("valid", s.valid),
            ("test", s.test),
        ])
    }

    fn __repr__(&self) -> String {
        let s = self.bundle.stats();
        format!(
            "Dataset(entities={}, relations={}, train={}, valid={}, test={})",
            s.entities, s.relations, s.train, s.valid, s.test
        )
    }
}

fn split_of<'a>(bundle: &'a DatasetBundle, name: &str) -> PyResult<&'a [Triple]> {
    match name {
        "train" => Ok(&bundle.train),
        "valid" => Ok(&bundle.valid),
        "test" => Ok(&bundle.test),
        other => Err(PyValueError::new_err(format!("unknown split `{other}` (train, valid or test)"))),
    }
}

/// Training hyperparameters; keyword arguments use the config-file keys.
#[pyclass(module = "hake", name = "TrainConfig")]
struct PyTrainConfig {
    inner: trainer::TrainConfig,
}

fn value_text(v: &Bound<'_, PyAny>) -> PyResult<String> {
    if v.is_instance_of::<PyBool>() {
        return Ok(if v.extract::<bool>()? { "true" } else { "false" }.to_string());
    }
    Ok(v.str()?.to_string())
}

#[pymethods]
impl PyTrainConfig {
    #[new]
    #[pyo3(signature = (**kwargs))]
    fn new(kwargs: Option<&Bound<'_, PyDict>>) -> PyResult<Self> {
        let mut inner = trainer::TrainConfig::default();
        if let Some(kw) = kwargs {
            for (k, v) in kw.iter() {
                inner.set(&k.extract::<String>()?, &value_text(&v)?).map_err(to_py)?;
            }
        }
        inner.validate().map_err(to_py)?;
        Ok(Self { inner })
    }

    /// Parses a config file (`key = value` lines).
    #[staticmethod]
    fn from_file(path: PathBuf) -> PyResult<Self> {
        Ok(Self { inner: trainer::TrainConfig::from_file(&path).map_err(to_py)? })
    }

    fn set(&mut self, key: &str, value: &Bound<'_, PyAny>) -> PyResult<()> {
        let mut next = self.inner.clone();
        next.set(key, &value_text(value)?).map_err(to_py)?;
        next.validate().map_err(to_py)?;
        self.inner = next;
        Ok(())
    }

    /// All settings as a dict of strings, keyed like the config file.
    fn to_dict(&self) -> BTreeMap<String, String> {
        self.inner
            .to_text()
            .lines()
            .filter_map(|l| l.split_once('='))
            .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
            .collect()
    }

    fn to_text(&self) -> String {
        self.inner.to_text()
    }

    fn __repr__(&self) -> String {
        format!("TrainConfig({})", self.inner.to_text().trim_end().replace('\n', ", "))
    }
}

/// A trained (or loaded) set of embeddings.
#[pyclass(module = "hake", frozen)]
struct Model {
    params: ModelParams,
    seed: u64,
    step: u64,
    losses: Vec<(usize, f64)>,
}

impl Model {
    fn triple(&self, h: usize, r: usize, t: usize) -> PyResult<Triple> {
        let triple = Triple::new(h, r, t);
        self.params.check_triple(&triple).map_err(to_py)?;
        Ok(triple)
    }

    fn check_entity(&self, e: usize) -> PyResult<()> {
        self.triple(e, 0, e).map(|_| ())
    }
}

#[pymethods]
impl Model {
    /// Trains from scratch. Releases the GIL while training.
    #[staticmethod]
    #[pyo3(signature = (dataset, config=None, workers=1))]
    fn train(
        py: Python<'_>,
        dataset: &Bound<'_, Dataset>,
        config: Option<PyRef<'_, PyTrainConfig>>,
        workers: usize,
    ) -> PyResult<Self> {
        let config = config.map(|c| c.inner.clone()).unwrap_or_default();
        let ds = dataset.get();
        let options = TrainOptions { out_dir: None, workers };
        let out = py
            .detach(|| train_with(&ds.bundle, &config, &options, |_| {}))
            .map_err(to_py)?;
        Ok(Self {
            params: out.params,
            seed: config.seed,
            step: out.state.step,
            losses: out.log.iter().map(|e| (e.step, e.loss)).collect(),
        })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let ck = Checkpoint::load(&path).map_err(to_py)?;
        Ok(Self { params: ck.params, seed: ck.seed, step: ck.step, losses: Vec::new() })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        Checkpoint { params: self.params.clone(), seed: self.seed, step: self.step }
            .save(&path)
            .map_err(to_py)
    }

    #[getter]
    fn k(&self) -> usize {
        self.params.k()
    }

    #[getter]
    fn variant(&self) -> String {
        self.params.variant.to_string()
    }

    #[getter]
    fn num_entities(&self) -> usize {
        self.params.num_entities()
    }

    #[getter]
    fn num_relations(&self) -> usize {
        self.params.num_relations()
    }

    #[getter]
    fn step(&self) -> u64 {
        self.step
    }

    /// `(step, loss)` pairs logged during training.
    #[getter]
    fn losses(&self) -> Vec<(usize, f64)> {
        self.losses.clone()
    }

    #[getter]
    fn lambdas(&self) -> (f64, f64) {
        (self.params.lambda_mod, self.params.lambda_phase)
    }

    /// Plausibility `-(λ1·d_m + λ2·d_p)` of an id triple.
    fn score(&self, h: usize, r: usize, t: usize) -> PyResult<f64> {
        model::score(&self.params, &self.triple(h, r, t)?).map_err(to_py)
    }

    /// `(d_m, d_p)` before the λ weights.
    fn distance_parts(&self, h: usize, r: usize, t: usize) -> PyResult<(f64, f64)> {
        Ok(self.params.distance_parts(&self.triple(h, r, t)?))
    }

    /// Filtered rank of one query; `direction` is "head" or "tail".
    fn rank(&self, dataset: &Bound<'_, Dataset>, h: usize, r: usize, t: usize, direction: &str) -> PyResult<f64> {
        let dir: Direction = direction.parse().map_err(to_py)?;
        hake_core::rank_one(&self.params, &self.triple(h, r, t)?, dir, &dataset.get().bundle).map_err(to_py)
    }

    /// Filtered MRR and Hits@N on a split, pooled over both directions.
    #[pyo3(signature = (dataset, split="test", workers=1))]
    fn evaluate(
        &self,
        py: Python<'_>,
        dataset: &Bound<'_, Dataset>,
        split: &str,
        workers: usize,
    ) -> PyResult<BTreeMap<&'static str, f64>> {
        let bundle = &dataset.get().bundle;
        let triples = split_of(bundle, split)?;
        let r = py
            .detach(|| hake_core::evaluate(&self.params, triples, bundle, workers))
            .map_err(to_py)?;
        Ok(BTreeMap::from([
            ("mrr", r.mrr()),
            ("hits1", r.overall.hits[0]),
            ("hits3", r.overall.hits[1]),
            ("hits10", r.overall.hits[2]),
            ("count", r.count() as f64),
        ]))
    }

    /// Raw modulus row of an entity.
    fn entity_modulus(&self, e: usize) -> PyResult<Vec<f64>> {
        self.check_entity(e)?;
        Ok(self.params.ent_mod.row(e).to_vec())
    }

    fn entity_phase(&self, e: usize) -> PyResult<Vec<f64>> {
        self.check_entity(e)?;
        Ok(self.params.ent_phase.row(e).to_vec())
    }

    /// Effective moduli `|raw|` of a relation.
    fn relation_modulus(&self, r: usize) -> PyResult<Vec<f64>> {
        analysis::relation_moduli(&self.params, r).map_err(to_py)
    }

    fn relation_phase(&self, r: usize) -> PyResult<Vec<f64>> {
        self.triple(0, r, 0)?;
        Ok(self.params.rel_phase.row(r).to_vec())
    }

    /// Mean entity modulus per level label (e.g. `Dataset.levels`).
    fn mean_modulus_by_level(&self, levels: Vec<usize>) -> PyResult<Vec<f64>> {
        if levels.len() != self.params.num_entities() {
            return Err(PyValueError::new_err(format!(
                "need one level per entity ({}), got {}",
                self.params.num_entities(),
                levels.len()
            )));
        }
        Ok(analysis::mean_modulus_by_level(&self.params, &levels))
    }

    fn __repr__(&self) -> String {
        format!(
            "Model(variant={}, k={}, entities={}, relations={}, step={})",
            self.params.variant,
            self.params.k(),
            self.params.num_entities(),
            self.params.num_relations(),
            self.step
        )
    }
}

fn same_len(name: &str, a: usize, b: usize) -> PyResult<()> {
    if a != b {
        return Err(PyValueError::new_err(format!("{name} has length {b}, expected {a}")));
    }
    Ok(())
}

/// `‖h∘|r| + (h+t)∘b − t‖₂`, with `b` clamped into (0, 1); `bias=None`
/// drops the bias term.
#[pyfunction]
#[pyo3(signature = (h, r, t, bias=None))]
fn modulus_distance(h: Vec<f64>, r: Vec<f64>, t: Vec<f64>, bias: Option<Vec<f64>>) -> PyResult<f64> {
    same_len("r", h.len(), r.len())?;
    same_len("t", h.len(), t.len())?;
    match bias {
        Some(b) => {
            same_len("bias", h.len(), b.len())?;
            Ok(model::modulus_distance(&h, &r, &b, &t, true))
        }
        None => Ok(model::modulus_distance(&h, &r, &vec![0.0; h.len()], &t, false)),
    }
}

/// `Σ |sin((h + r − t) / 2)|`.
#[pyfunction]
fn phase_distance(h: Vec<f64>, r: Vec<f64>, t: Vec<f64>) -> PyResult<f64> {
    same_len("r", h.len(), r.len())?;
    same_len("t", h.len(), t.len())?;
    Ok(model::phase_distance(&h, &r, &t))
}

/// Softmax of `alpha * scores`.
#[pyfunction]
fn adversarial_weights(scores: Vec<f64>, alpha: f64) -> PyResult<Vec<f64>> {
    if scores.iter().any(|s| !s.is_finite()) || !alpha.is_finite() {
        return Err(PyValueError::new_err("scores and alpha must be finite"));
    }
    Ok(trainer::adversarial_weights(&scores, alpha))
}

/// Finite-difference check of the analytic gradients.
#[pyfunction]
#[pyo3(signature = (seed=0, k=8, draws=100))]
fn check_grad(py: Python<'_>, seed: u64, k: usize, draws: usize) -> PyResult<BTreeMap<&'static str, f64>> {
    if k == 0 {
        return Err(PyValueError::new_err("k must be >= 1"));
    }
    let r = py.detach(|| gradcheck::run_gradient_check(seed, k, draws)).map_err(to_py)?;
    Ok(BTreeMap::from([
        ("max_score_error", r.max_score_error),
        ("max_loss_error", r.max_loss_error),
        ("max_error", r.max_error()),
        ("passed", if r.passed() { 1.0 } else { 0.0 }),
    ]))
}

#[pymodule]
fn hake(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Dataset>()?;
    m.add_class::<PyTrainConfig>()?;
    m.add_class::<Model>()?;
    m.add_function(wrap_pyfunction!(modulus_distance, m)?)?;
    m.add_function(wrap_pyfunction!(phase_distance, m)?)?;
    m.add_function(wrap_pyfunction!(adversarial_weights, m)?)?;
    m.add_function(wrap_pyfunction!(check_grad, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}

//! Python bindings for the core types and operations.

use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use ::kgalign::alignment::concept_match as core_concept_match;
use ::kgalign::assignment::{hungarian as core_hungarian, CostMatrix};
use ::kgalign::demo::job_name_walkthrough;
use ::kgalign::experiments::{run_sweep_point, SweepAxis};
use ::kgalign::kg::{default_kg_g1, load_kg_json, KnowledgeGraph as CoreGraph};
use ::kgalign::synth::{generate_synthetic_kg, SynthSpec};
use ::kgalign::training::VsaTrainConfig;
use ::kgalign::vsa::{self, HyperVector, Keywords, VsaSpace as CoreSpace};
use ::kgalign::Error;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io(io) => PyOSError::new_err(io.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn json_to_py<'py>(py: Python<'py>, text: &str) -> PyResult<Bound<'py, PyAny>> {
    py.import("json")?.call_method1("loads", (text,))
}

#[pyclass(name = "KnowledgeGraph", module = "kgalign", skip_from_py_object)]
#[derive(Clone)]
struct PyGraph {
    inner: CoreGraph,
}

#[pymethods]
impl PyGraph {
    #[new]
    fn new(entities: Vec<String>, relations: Vec<String>, triplets: Vec<(String, String, String)>) -> PyResult<Self> {
        let doc = serde_json::json!({
            "entities": entities,
            "relations": relations,
            "triplets": triplets.iter().map(|(h, r, t)| [h, r, t]).collect::<Vec<_>>(),
        });
        let inner = CoreGraph::from_json(&doc.to_string()).map_err(py_err)?;
        Ok(PyGraph { inner })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(PyGraph {
            inner: load_kg_json(path).map_err(py_err)?,
        })
    }

    #[staticmethod]
    fn default_digits() -> Self {
        PyGraph { inner: default_kg_g1() }
    }

    #[getter]
    fn entities(&self) -> Vec<String> {
        self.inner.entities().to_vec()
    }

    #[getter]
    fn relations(&self) -> Vec<String> {
        self.inner.relations().to_vec()
    }

    fn triplets(&self) -> Vec<(String, String, String)> {
        let (e, r) = (self.inner.entities(), self.inner.relations());
        self.inner
            .triplets()
            .map(|t| (e[t.head].clone(), r[t.relation].clone(), e[t.tail].clone()))
            .collect()
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(py_err)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "KnowledgeGraph({} entities, {} relations, {} triplets)",
            self.inner.n_entities(),
            self.inner.n_relations(),
            self.inner.len()
        )
    }
}

#[pyclass(name = "VsaSpace", module = "kgalign", skip_from_py_object)]
#[derive(Clone)]
struct PySpace {
    inner: CoreSpace,
}

#[pymethods]
impl PySpace {
    /// Random space for the concepts of `graph`. Frozen spaces are bipolar,
    /// trainable ones uniform in (-1, 1).
    #[staticmethod]
    #[pyo3(signature = (name, graph, dimension=1024, seed=0, trainable=false))]
    fn random(name: &str, graph: &PyGraph, dimension: usize, seed: u64, trainable: bool) -> PyResult<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let kw = Keywords::random(dimension, &mut rng).map_err(py_err)?;
        let (e, r) = (graph.inner.entities(), graph.inner.relations());
        let inner = if trainable {
            CoreSpace::random_trainable(name, kw, e, r, &mut rng)
        } else {
            CoreSpace::random_frozen(name, kw, e, r, &mut rng)
        }
        .map_err(py_err)?;
        Ok(PySpace { inner })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(PySpace {
            inner: CoreSpace::from_json(text).map_err(py_err)?,
        })
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(py_err)
    }

    /// Copy under new names (`prefix` + old name).
    #[pyo3(signature = (name, prefix, trainable=true))]
    fn relabeled(&self, name: &str, prefix: &str, trainable: bool) -> PyResult<Self> {
        let inner = self
            .inner
            .relabeled(name, |n| format!("{prefix}{n}"), trainable)
            .map_err(py_err)?;
        Ok(PySpace { inner })
    }

    #[getter]
    fn dimension(&self) -> usize {
        self.inner.dimension()
    }

    #[getter]
    fn names(&self) -> Vec<String> {
        self.inner.names().to_vec()
    }

    #[getter]
    fn trainable(&self) -> bool {
        self.inner.is_trainable()
    }

    fn vector(&self, name: &str) -> PyResult<Vec<f64>> {
        Ok(self.inner.symbol(name).map_err(py_err)?.as_slice().to_vec())
    }

    fn encode_triplet(&self, head: &str, relation: &str, tail: &str) -> PyResult<Vec<f64>> {
        let k = self.inner.encode_triplet(head, relation, tail).map_err(py_err)?;
        Ok(k.vector.into_vec())
    }

    /// Unbinds `keyword` (one of H', R', T') from an encoded triplet.
    fn query(&self, k: Vec<f64>, keyword: &str) -> PyResult<Vec<f64>> {
        let q = self.inner.query(&HyperVector::from_vec(k), keyword).map_err(py_err)?;
        Ok(q.into_vec())
    }

    fn nearest_symbol(&self, v: Vec<f64>) -> PyResult<(String, f64)> {
        let (n, c) = self.inner.nearest_symbol(&HyperVector::from_vec(v)).map_err(py_err)?;
        Ok((n.to_string(), c))
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

#[pyfunction]
fn bind(a: Vec<f64>, b: Vec<f64>) -> PyResult<Vec<f64>> {
    Ok(vsa::bind(&HyperVector::from_vec(a), &HyperVector::from_vec(b))
        .map_err(py_err)?
        .into_vec())
}

#[pyfunction]
fn bundle(vectors: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
    let vs: Vec<HyperVector> = vectors.into_iter().map(HyperVector::from_vec).collect();
    Ok(vsa::bundle(&vs).map_err(py_err)?.into_vec())
}

#[pyfunction]
fn cosine(a: Vec<f64>, b: Vec<f64>) -> PyResult<f64> {
    vsa::cosine(&HyperVector::from_vec(a), &HyperVector::from_vec(b)).map_err(py_err)
}

/// Minimum-cost assignment; returns `(pairs, total_cost)`.
#[pyfunction]
fn hungarian(cost: Vec<Vec<f64>>) -> PyResult<(Vec<(usize, usize)>, f64)> {
    let m = CostMatrix::from_rows(&cost).map_err(py_err)?;
    let a = core_hungarian(&m).map_err(py_err)?;
    Ok((a.pairs, a.total_cost))
}

/// Concept-level alignment report as a dict.
#[pyfunction]
fn concept_match<'py>(py: Python<'py>, nn: &PySpace, g: &PySpace) -> PyResult<Bound<'py, PyAny>> {
    let report = core_concept_match(&nn.inner, &g.inner).map_err(py_err)?;
    let text = serde_json::to_string(&report).map_err(|e| PyValueError::new_err(e.to_string()))?;
    json_to_py(py, &text)
}

/// Returns `(kg_g, kg_nn, entity_map, relation_map)`, the maps sending human
/// indices to network indices.
#[pyfunction]
#[pyo3(signature = (seed, entities=20, relation_proportion=0.2, triplet_proportion=0.2, alpha=None, nn_concept_ratio=1.0))]
fn synthetic_pair(
    seed: u64,
    entities: usize,
    relation_proportion: f64,
    triplet_proportion: f64,
    alpha: Option<f64>,
    nn_concept_ratio: f64,
) -> PyResult<(PyGraph, PyGraph, Vec<usize>, Vec<usize>)> {
    let spec = SynthSpec {
        entities,
        relation_proportion,
        triplet_proportion,
        alpha,
        nn_concept_ratio,
    };
    let p = generate_synthetic_kg(&spec, seed).map_err(py_err)?;
    Ok((
        PyGraph { inner: p.kg_g },
        PyGraph { inner: p.kg_nn },
        p.entity_map,
        p.relation_map,
    ))
}

/// Trains symbols on one synthetic pair and returns the final metrics.
#[pyfunction]
#[pyo3(signature = (axis, value, seed, epochs=10, steps_per_epoch=20, dimension=1024))]
fn sweep_point<'py>(
    py: Python<'py>,
    axis: &str,
    value: f64,
    seed: u64,
    epochs: usize,
    steps_per_epoch: usize,
    dimension: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let axis: SweepAxis = axis.parse().map_err(py_err)?;
    let cfg = VsaTrainConfig {
        epochs,
        steps_per_epoch,
        dimension,
        ..VsaTrainConfig::default()
    };
    let row = run_sweep_point(axis, value, seed, &cfg).map_err(py_err)?;
    let text = serde_json::to_string(&row).map_err(|e| PyValueError::new_err(e.to_string()))?;
    json_to_py(py, &text)
}

#[pyfunction]
#[pyo3(signature = (dimension=1024, seed=0))]
fn vsa_demo(dimension: usize, seed: u64) -> PyResult<String> {
    Ok(job_name_walkthrough(dimension, seed).map_err(py_err)?.render())
}

#[pymodule]
fn kgalign(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGraph>()?;
    m.add_class::<PySpace>()?;
    m.add_function(wrap_pyfunction!(bind, m)?)?;
    m.add_function(wrap_pyfunction!(bundle, m)?)?;
    m.add_function(wrap_pyfunction!(cosine, m)?)?;
    m.add_function(wrap_pyfunction!(hungarian, m)?)?;
    m.add_function(wrap_pyfunction!(concept_match, m)?)?;
    m.add_function(wrap_pyfunction!(synthetic_pair, m)?)?;
    m.add_function(wrap_pyfunction!(sweep_point, m)?)?;
    m.add_function(wrap_pyfunction!(vsa_demo, m)?)?;
    Ok(())
}

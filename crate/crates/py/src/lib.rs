//! Python bindings for the `todalign` pipeline.
//!
//! Built as the `todalign` extension module. Errors surface as `ConfigError`,
//! `DataError` or `BackendError`, all subclasses of `TodalignError`.

use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;

use todalign::corpus::{self as core_corpus, DatasetFormat, DatasetId, Split};
use todalign::eval as metrics;
use todalign::hints::{derive_gold_hints, HintSet as CoreHintSet};
use todalign::llm::parse_response as core_parse;
use todalign::prompt::{appendix_set, build_prompt as core_build, Exemplar, PromptContext, PromptProfile};
use todalign::retrieval::{hint_similarity_weighted, HintWeights};
use todalign::runner::{run_pipeline, RunConfig};
use todalign::{Error, ErrorKind};

create_exception!(todalign, TodalignError, PyException);
create_exception!(todalign, ConfigError, TodalignError);
create_exception!(todalign, DataError, TodalignError);
create_exception!(todalign, BackendError, TodalignError);

fn to_py(e: Error) -> PyErr {
    let msg = e.to_string();
    match e.kind() {
        ErrorKind::Config => ConfigError::new_err(msg),
        ErrorKind::Data => DataError::new_err(msg),
        ErrorKind::Backend => BackendError::new_err(msg),
    }
}

fn parse<T: std::str::FromStr<Err = Error>>(s: &str) -> PyResult<T> {
    s.parse().map_err(to_py)
}

/// Entity types, dialog closure and response size of one response.
#[pyclass(name = "HintSet", eq, skip_from_py_object)]
#[derive(Clone, PartialEq)]
pub struct PyHintSet {
    inner: CoreHintSet,
}

#[pymethods]
impl PyHintSet {
    #[new]
    #[pyo3(signature = (entity_types, dialog_closure, response_size))]
    fn new(entity_types: Vec<String>, dialog_closure: bool, response_size: u32) -> Self {
        Self {
            inner: CoreHintSet::new(entity_types, dialog_closure, response_size),
        }
    }

    #[getter]
    fn entity_types(&self) -> Vec<String> {
        self.inner.entity_types.clone()
    }

    #[getter]
    fn dialog_closure(&self) -> bool {
        self.inner.dialog_closure
    }

    #[getter]
    fn response_size(&self) -> u32 {
        self.inner.response_size
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(|e| to_py(e.into()))
    }

    fn __repr__(&self) -> String {
        format!(
            "HintSet(entity_types={:?}, dialog_closure={}, response_size={})",
            self.inner.entity_types,
            if self.inner.dialog_closure { "True" } else { "False" },
            self.inner.response_size
        )
    }
}

/// Hint similarity in [0, 1]; dropped hints are left out and the remaining
/// weights renormalized.
#[pyfunction]
#[pyo3(signature = (a, b, drop_et=false, drop_dc=false))]
fn hint_similarity(a: &PyHintSet, b: &PyHintSet, drop_et: bool, drop_dc: bool) -> f64 {
    hint_similarity_weighted(&a.inner, &b.inner, HintWeights::with_dropped(drop_et, drop_dc))
}

/// A loaded dialog corpus.
#[pyclass(name = "Corpus", frozen, skip_from_py_object)]
pub struct PyCorpus {
    inner: core_corpus::Corpus,
}

impl PyCorpus {
    fn sample(&self, id: &str) -> PyResult<&core_corpus::DialogSample> {
        self.inner
            .sample(id)
            .ok_or_else(|| to_py(Error::UnknownSample(id.to_string())))
    }

    fn dataset_id(&self, dataset: Option<&str>) -> PyResult<DatasetId> {
        match (dataset, self.inner.dataset.as_deref()) {
            (Some(d), _) | (None, Some(d)) => parse(d),
            (None, None) => Err(ConfigError::new_err("corpus has no dataset name; pass `dataset`")),
        }
    }
}

#[pymethods]
impl PyCorpus {
    #[staticmethod]
    #[pyo3(signature = (path, format="canonical"))]
    fn load(path: PathBuf, format: &str) -> PyResult<Self> {
        let format: DatasetFormat = parse(format)?;
        let inner = core_corpus::load_corpus(&path, format).map_err(to_py)?;
        Ok(Self { inner })
    }

    /// A seeded toy corpus in the SMD style.
    #[staticmethod]
    #[pyo3(signature = (dialogs=20, seed=0))]
    fn synthetic(dialogs: usize, seed: u64) -> Self {
        Self {
            inner: todalign::synthetic::synthetic_corpus(dialogs, seed),
        }
    }

    fn write(&self, dir: PathBuf) -> PyResult<()> {
        core_corpus::write_canonical(&self.inner, &dir).map_err(to_py)
    }

    #[getter]
    fn dataset(&self) -> Option<String> {
        self.inner.dataset.clone()
    }

    #[getter]
    fn ontology(&self) -> Vec<String> {
        self.inner.ontology.types().to_vec()
    }

    #[pyo3(signature = (split="test"))]
    fn sample_ids(&self, split: &str) -> PyResult<Vec<String>> {
        let split: Split = parse(split)?;
        Ok(self.inner.samples(split).iter().map(|s| s.id.clone()).collect())
    }

    fn history(&self, sample_id: &str) -> PyResult<Vec<(String, String)>> {
        Ok(self
            .sample(sample_id)?
            .history
            .iter()
            .map(|u| (u.speaker.as_str().to_string(), u.text.clone()))
            .collect())
    }

    fn gold_response(&self, sample_id: &str) -> PyResult<String> {
        Ok(self.sample(sample_id)?.gold_response.clone())
    }

    fn gold_hints(&self, sample_id: &str) -> PyResult<PyHintSet> {
        let s = self.sample(sample_id)?;
        Ok(PyHintSet {
            inner: derive_gold_hints(s, &self.inner.lexicon, &self.inner.ontology),
        })
    }

    /// Entity mentions of `text`, matched against the sample's knowledge base.
    fn entities(&self, sample_id: &str, text: &str) -> PyResult<Vec<(String, String)>> {
        let s = self.sample(sample_id)?;
        Ok(core_corpus::extract_entities(text, &s.kb, &self.inner.lexicon, &self.inner.ontology)
            .into_iter()
            .map(|m| (m.ty, m.value))
            .collect())
    }

    /// Renders the prompt for `sample_id` with the given training exemplars.
    #[pyo3(signature = (sample_id, exemplar_ids, hints=None, dataset=None))]
    fn build_prompt(
        &self,
        sample_id: &str,
        exemplar_ids: Vec<String>,
        hints: Option<&PyHintSet>,
        dataset: Option<&str>,
    ) -> PyResult<String> {
        let profile = PromptProfile::for_dataset(self.dataset_id(dataset)?);
        let ctx = PromptContext::new(&profile, &self.inner.ontology);
        let exemplars = exemplar_ids
            .iter()
            .map(|id| Ok(Exemplar::from_sample(self.sample(id)?, &self.inner.lexicon, &self.inner.ontology)))
            .collect::<PyResult<Vec<_>>>()?;
        let bundle = ctx
            .build(&exemplars, self.sample(sample_id)?, hints.map(|h| &h.inner))
            .map_err(to_py)?;
        Ok(bundle.full_text)
    }

    /// Micro-averaged entity (precision, recall, F1) of predictions for the
    /// given samples.
    fn entity_f1(&self, sample_ids: Vec<String>, predictions: Vec<String>) -> PyResult<(f64, f64, f64)> {
        let samples = sample_ids
            .iter()
            .map(|id| self.sample(id).cloned())
            .collect::<PyResult<Vec<_>>>()?;
        let prf = metrics::entity_f1(&predictions, &samples, &self.inner.lexicon, &self.inner.ontology).map_err(to_py)?;
        Ok((prf.precision, prf.recall, prf.f1))
    }

    fn __len__(&self) -> usize {
        Split::ALL.iter().map(|&s| self.inner.samples(s).len()).sum()
    }
}

/// The sample prompt for `multiwoz`, `smd` or `bitod`.
#[pyfunction]
fn appendix_prompt(dataset: &str) -> PyResult<String> {
    let dataset: DatasetId = parse(dataset)?;
    let profile = PromptProfile::for_dataset(dataset);
    let ontology = dataset.ontology();
    let set = appendix_set(dataset);
    let ctx = PromptContext::new(&profile, &ontology);
    let blocks = set
        .exemplars
        .iter()
        .enumerate()
        .map(|(i, e)| (e.sample_id.clone(), ctx.render_exemplar(i + 1, e)))
        .collect();
    let test = ctx.render_test(set.exemplars.len() + 1, &set.test.kb, &set.test.history, Some(&set.test.hints));
    Ok(core_build(&profile.instructions, blocks, test).map_err(to_py)?.full_text)
}

/// Splits a completion into `(entities, response, fallback)`. `entities` is
/// `None` when no list of pairs was found.
#[pyfunction]
#[pyo3(signature = (raw, role="assistant"))]
fn parse_response(raw: &str, role: &str) -> (Option<Vec<(String, String)>>, String, bool) {
    let parsed = core_parse(raw, role);
    (
        parsed
            .entities
            .map(|es| es.into_iter().map(|m| (m.ty, m.value)).collect()),
        parsed.response,
        parsed.fallback,
    )
}

/// Corpus BLEU-4 of predictions against single references.
#[pyfunction]
fn corpus_bleu(predictions: Vec<String>, references: Vec<String>) -> PyResult<f64> {
    metrics::corpus_bleu(&predictions, &references).map_err(to_py)
}

/// Runs the pipeline from a JSON config and returns the report as JSON.
/// The GIL is released while the run is in progress.
#[pyfunction]
fn run(py: Python<'_>, config_json: &str) -> PyResult<String> {
    let config: RunConfig =
        serde_json::from_str(config_json).map_err(|e| ConfigError::new_err(e.to_string()))?;
    let config = config.resolved().map_err(to_py)?;
    let outcome = py.detach(|| run_pipeline(&config)).map_err(to_py)?;
    outcome.report.to_json().map_err(to_py)
}

#[pymodule(name = "todalign")]
fn todalign_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("TodalignError", m.py().get_type::<TodalignError>())?;
    m.add("ConfigError", m.py().get_type::<ConfigError>())?;
    m.add("DataError", m.py().get_type::<DataError>())?;
    m.add("BackendError", m.py().get_type::<BackendError>())?;
    m.add_class::<PyHintSet>()?;
    m.add_class::<PyCorpus>()?;
    m.add_function(wrap_pyfunction!(hint_similarity, m)?)?;
    m.add_function(wrap_pyfunction!(appendix_prompt, m)?)?;
    m.add_function(wrap_pyfunction!(parse_response, m)?)?;
    m.add_function(wrap_pyfunction!(corpus_bleu, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    Ok(())
}

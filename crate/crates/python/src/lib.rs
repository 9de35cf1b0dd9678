//! Python bindings: genomes, sessions, archives, metrics and experiment runs.

use std::collections::BTreeMap;
use std::path::PathBuf;

use pyo3::exceptions::{PyIndexError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyBytes;

use picbreeder::archive::{ArchiveView, EntryId};
use picbreeder::metrics;
use picbreeder::orchestrator::{build_agents, load_traits, ExperimentConfig, RunControl, Runner};
use picbreeder::rng::seeded;
use picbreeder::session::{Action, StepOutcome};
use picbreeder::{Archive, Genome, InnovationRegistry, MutationMode, SessionConfig, SessionState};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse_mode(mode: Option<&str>) -> PyResult<Option<MutationMode>> {
    mode.map(|m| match m {
        "structure" | "structure-only" => Ok(MutationMode::StructureOnly),
        "color" | "color-only" => Ok(MutationMode::ColorOnly),
        "both" => Ok(MutationMode::Both),
        other => Err(value_err(format!("unknown mutation mode {other:?}"))),
    })
    .transpose()
}

#[pyclass(name = "Genome")]
struct PyGenome {
    inner: Genome,
}

#[pymethods]
impl PyGenome {
    /// A minimal random genome.
    #[new]
    fn new(seed: u64) -> Self {
        PyGenome {
            inner: Genome::init(&mut seeded(seed)),
        }
    }

    #[staticmethod]
    fn from_text(text: &str) -> PyResult<Self> {
        Ok(PyGenome {
            inner: Genome::from_canonical_text(text).map_err(value_err)?,
        })
    }

    fn to_text(&self) -> String {
        self.inner.to_canonical_text()
    }

    fn content_hash(&self) -> String {
        self.inner.content_hash()
    }

    fn node_count(&self) -> usize {
        self.inner.node_count()
    }

    fn connection_count(&self) -> usize {
        self.inner.connection_count()
    }

    /// PNG bytes.
    #[pyo3(signature = (width=128, height=128, color=false))]
    fn render<'py>(&self, py: Python<'py>, width: u32, height: u32, color: bool) -> PyResult<Bound<'py, PyBytes>> {
        let img = picbreeder::cppn::render(&self.inner, width, height, color).map_err(value_err)?;
        Ok(PyBytes::new(py, &img.to_png().map_err(value_err)?))
    }
}

#[pyclass(name = "Session")]
struct PySession {
    state: SessionState,
    registry: InnovationRegistry,
}

#[pymethods]
impl PySession {
    /// A fresh grayscale session.
    #[new]
    #[pyo3(signature = (seed, pop_size=15, generations=20, render_size=128))]
    fn new(seed: u64, pop_size: usize, generations: u32, render_size: u32) -> PyResult<Self> {
        let config = SessionConfig {
            pop_size,
            generations_to_publish: generations,
            render_width: render_size,
            render_height: render_size,
            ..SessionConfig::default()
        };
        Ok(PySession {
            state: SessionState::start_fresh(config, seed).map_err(value_err)?,
            registry: InnovationRegistry::new(),
        })
    }

    #[getter]
    fn generation(&self) -> u32 {
        self.state.generation()
    }

    #[getter]
    fn color_mode(&self) -> bool {
        self.state.color_mode()
    }

    #[getter]
    fn strength(&self) -> f64 {
        self.state.params().strength
    }

    fn can_publish(&self) -> bool {
        self.state.can_publish()
    }

    fn population(&self) -> Vec<PyGenome> {
        self.state
            .population()
            .iter()
            .map(|g| PyGenome { inner: g.clone() })
            .collect()
    }

    fn image<'py>(&self, py: Python<'py>, index: usize) -> PyResult<Bound<'py, PyBytes>> {
        let img = self.state.render_member(index).map_err(|e| PyIndexError::new_err(e.to_string()))?;
        Ok(PyBytes::new(py, &img.to_png().map_err(value_err)?))
    }

    fn toggle_color(&mut self) -> PyResult<()> {
        self.state
            .apply_action(&Action::ToggleColor, "", &self.registry)
            .map_err(value_err)?;
        Ok(())
    }

    #[pyo3(signature = (parents, strength=None, mode=None))]
    fn select(&mut self, parents: Vec<usize>, strength: Option<f64>, mode: Option<&str>) -> PyResult<()> {
        let action = Action::Select {
            parents,
            strength,
            mode: parse_mode(mode)?,
        };
        self.state.apply_action(&action, "", &self.registry).map_err(value_err)?;
        Ok(())
    }

    /// Publishes population member `index`; returns its genome.
    fn publish(&mut self, index: usize, title: String) -> PyResult<PyGenome> {
        match self
            .state
            .apply_action(&Action::Publish { index, title }, "", &self.registry)
            .map_err(value_err)?
        {
            StepOutcome::Published(rec) => Ok(PyGenome { inner: rec.genome }),
            StepOutcome::Continued => Err(value_err("publication did not happen")),
        }
    }
}

#[pyclass(name = "Archive")]
struct PyArchive {
    inner: Archive,
}

#[pymethods]
impl PyArchive {
    #[staticmethod]
    fn open(dir: PathBuf) -> PyResult<Self> {
        Ok(PyArchive {
            inner: Archive::open(dir).map_err(value_err)?,
        })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn content_hash(&self) -> String {
        self.inner.content_hash()
    }

    fn parents(&self) -> Vec<Option<usize>> {
        self.inner.parent_positions()
    }

    fn titles(&self) -> Vec<String> {
        self.inner.entries().iter().map(|e| e.title.clone()).collect()
    }

    fn genome(&self, id: u64) -> PyResult<PyGenome> {
        self.inner
            .get(EntryId(id))
            .map(|e| PyGenome { inner: e.genome.clone() })
            .ok_or_else(|| PyIndexError::new_err(format!("no entry {id}")))
    }

    fn j1(&self) -> PyResult<f64> {
        metrics::j1_index_of_parents(&self.inner.parent_positions()).map_err(value_err)
    }
}

/// Runs an experiment from TOML text. With `out`, the run is persisted (and
/// resumed if the directory already holds part of it).
#[pyfunction]
#[pyo3(signature = (config_toml, out=None))]
fn run_experiment(py: Python<'_>, config_toml: &str, out: Option<PathBuf>) -> PyResult<BTreeMap<String, String>> {
    let config = ExperimentConfig::from_toml(config_toml).map_err(value_err)?;
    py.detach(|| {
        let agents = build_agents(&config, None).map_err(value_err)?;
        let traits = load_traits(&config).map_err(value_err)?;
        let mut runner = match &out {
            Some(dir) => Runner::open(config.clone(), agents, traits, dir),
            None => Runner::new(config.clone(), agents, traits),
        }
        .map_err(value_err)?;
        let summary = runner.run(&RunControl::default()).map_err(value_err)?;
        let j1 = metrics::j1_index_of_parents(&runner.archive().read().parent_positions()).map_err(value_err)?;
        Ok(BTreeMap::from([
            ("sessions".to_string(), summary.sessions_completed.to_string()),
            ("archive_hash".to_string(), summary.archive_hash),
            ("rating_rounds".to_string(), summary.rating_rounds.to_string()),
            ("j1".to_string(), format!("{j1}")),
        ]))
    })
}

#[pyfunction]
fn j1_index(parents: Vec<Option<usize>>) -> PyResult<f64> {
    metrics::j1_index_of_parents(&parents).map_err(value_err)
}

#[pyfunction]
fn farthest_point_sample(points: Vec<Vec<f64>>, k: usize, start: usize) -> PyResult<Vec<usize>> {
    metrics::farthest_point_sample(&points, k, start).map_err(value_err)
}

#[pyfunction]
fn k_covering_radius(points: Vec<Vec<f64>>, representatives: Vec<usize>) -> PyResult<f64> {
    metrics::k_covering_radius(&points, &representatives).map_err(value_err)
}

#[pyfunction]
fn cosine_similarity(a: Vec<f64>, b: Vec<f64>) -> f64 {
    picbreeder::providers::cosine_similarity(&a, &b)
}

#[pymodule]
fn picbreeder_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGenome>()?;
    m.add_class::<PySession>()?;
    m.add_class::<PyArchive>()?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(j1_index, m)?)?;
    m.add_function(wrap_pyfunction!(farthest_point_sample, m)?)?;
    m.add_function(wrap_pyfunction!(k_covering_radius, m)?)?;
    m.add_function(wrap_pyfunction!(cosine_similarity, m)?)?;
    Ok(())
}

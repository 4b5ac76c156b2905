//! Python bindings for the pure parts of `claimpipe`.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use claimpipe::cleaning::{self, RepetitionMode};
use claimpipe::cluster::{self, HdbscanParams};
use claimpipe::corpus::Language;
use claimpipe::meteor::{Meteor, MeteorParams};
use claimpipe::prompting::PromptTemplate;
use claimpipe::report;

fn value_error(e: claimpipe::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Returns `(cleaned, placeholder_removed, period)`; period is None when no
/// repetition was condensed.
#[pyfunction]
#[pyo3(signature = (text, faithful_pseudocode = false))]
fn clean_post(text: &str, faithful_pseudocode: bool) -> (String, bool, Option<usize>) {
    let mode = if faithful_pseudocode {
        RepetitionMode::PrefixOnly
    } else {
        RepetitionMode::FullCoverage
    };
    let (cleaned, report) = cleaning::clean_post_with(text, mode);
    (
        cleaned,
        report.trailing_placeholder_removed,
        report.repetition_period_tokens,
    )
}

#[pyfunction]
fn dedup_key(text: &str) -> String {
    cleaning::dedup_key(text)
}

#[pyfunction]
#[pyo3(signature = (hypothesis, reference, alpha = 0.9, beta = 3.0, gamma = 0.5))]
fn meteor(hypothesis: &str, reference: &str, alpha: f64, beta: f64, gamma: f64) -> PyResult<f64> {
    let params = MeteorParams {
        alpha,
        beta,
        gamma,
        ..MeteorParams::default()
    };
    let m = Meteor::new(params).map_err(value_error)?;
    Ok(m.score(hypothesis, reference).score)
}

/// Zero-shot prompt, or few-shot when `shots` holds `(post, claim)` pairs.
#[pyfunction]
#[pyo3(signature = (language, post, shots = None))]
fn render_prompt(
    language: &str,
    post: &str,
    shots: Option<Vec<(String, String)>>,
) -> PyResult<String> {
    let lang: Language = language.parse().map_err(value_error)?;
    let template = PromptTemplate::bundled(lang).map_err(value_error)?;
    match shots {
        Some(s) => template.render_few_shot(&s, post),
        None => template.render_zero_shot(post),
    }
    .map_err(value_error)
}

/// Cluster labels per row, -1 for noise.
#[pyfunction]
#[pyo3(signature = (points, min_cluster_size = 5, min_samples = None))]
fn hdbscan(
    points: Vec<Vec<f64>>,
    min_cluster_size: usize,
    min_samples: Option<usize>,
) -> PyResult<Vec<i32>> {
    let dim = points.first().map_or(0, Vec::len);
    if points.iter().any(|p| p.len() != dim) {
        return Err(PyValueError::new_err("rows differ in length"));
    }
    let flat: Vec<f64> = points.into_iter().flatten().collect();
    let params = HdbscanParams {
        min_samples: min_samples.unwrap_or(min_cluster_size),
        ..HdbscanParams::new(min_cluster_size)
    };
    cluster::hdbscan_points(&flat, dim, &params)
        .map(|a| a.labels)
        .map_err(value_error)
}

#[pyfunction]
fn hparam_grid(py: Python<'_>) -> PyResult<Vec<Bound<'_, PyDict>>> {
    report::emit_hparam_grid()
        .iter()
        .map(|c| {
            let d = PyDict::new(py);
            d.set_item("epochs", c.epochs)?;
            d.set_item("learning_rate", c.learning_rate)?;
            d.set_item("warmup_steps", c.warmup_steps)?;
            d.set_item("effective_batch_size", c.effective_batch_size)?;
            d.set_item("generation_max_length", c.generation_max_length.to_string())?;
            d.set_item("optimizer", c.optimizer.to_string())?;
            d.set_item("num_beams", c.num_beams)?;
            Ok(d)
        })
        .collect()
}

#[pymodule]
fn claimpipe_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(clean_post, m)?)?;
    m.add_function(wrap_pyfunction!(dedup_key, m)?)?;
    m.add_function(wrap_pyfunction!(meteor, m)?)?;
    m.add_function(wrap_pyfunction!(render_prompt, m)?)?;
    m.add_function(wrap_pyfunction!(hdbscan, m)?)?;
    m.add_function(wrap_pyfunction!(hparam_grid, m)?)?;
    Ok(())
}

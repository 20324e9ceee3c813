//! Browser bindings. Every export takes and returns JSON strings; the
//! plain `*_json` functions behind them are what the native tests call.

use fairscope::harness::{self, SynthSpec};
use fairscope::metrics;
use fairscope::perturb::{self, PerturbationRule};
use fairscope::schema::SchemaSet;
use fairscope::subspace::{self, EmbeddingSet, FitInput};
use fairscope::{Error, Result};
use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

fn js(e: Error) -> JsValue {
    JsValue::from_str(&e.to_string())
}

fn json<T: Serialize>(v: &T) -> Result<String> {
    serde_json::to_string(v).map_err(|e| Error::json("demo output", e))
}

/// Attributes and groups of the built-in schema.
pub fn schema_json() -> Result<String> {
    json(&SchemaSet::builtin())
}

#[derive(Serialize)]
struct Perturbed {
    text: String,
    changed: bool,
}

pub fn perturb_json(text: &str, attribute: &str, from: &str, to: &str) -> Result<String> {
    let schemas = SchemaSet::builtin();
    let rule = PerturbationRule::new(schemas.attribute(attribute)?, from, to)?;
    let out = perturb::perturb_text(text, &rule);
    json(&Perturbed {
        changed: out != text,
        text: out,
    })
}

/// Generates the spec's corpus and measures its dataset bias.
pub fn explore_bias_json(spec: &str) -> Result<String> {
    let spec = SynthSpec::from_json(spec)?;
    let corpus = harness::generate_synthetic_corpus(&spec)?;
    json(&metrics::overamplification_bias(&corpus, &spec.schema()?)?)
}

#[derive(Deserialize)]
struct PointPairs {
    factual: Vec<[f64; 2]>,
    counterfactual: Vec<[f64; 2]>,
    probes: Vec<[f64; 2]>,
}

#[derive(Serialize)]
struct Projection {
    component: Vec<f64>,
    eigenvalue: f64,
    projected: Vec<Vec<f64>>,
}

/// Fits one bias direction from 2-D point pairs and projects the probes.
pub fn project_2d_json(input: &str) -> Result<String> {
    let p: PointPairs = serde_json::from_str(input).map_err(|e| Error::json("points", e))?;
    let set = |pts: &[[f64; 2]]| {
        EmbeddingSet::new(
            (0..pts.len()).map(|i| i.to_string()).collect(),
            pts.iter().map(|v| v.to_vec()).collect(),
        )
    };
    // both directions, so each pair is centered on its midpoint
    let lhs: Vec<[f64; 2]> = p.factual.iter().chain(&p.counterfactual).copied().collect();
    let rhs: Vec<[f64; 2]> = p.counterfactual.iter().chain(&p.factual).copied().collect();
    if p.factual.len() != p.counterfactual.len() {
        return Err(Error::LengthMismatch(
            "factual and counterfactual point counts differ".into(),
        ));
    }
    let (lhs, rhs) = (set(&lhs)?, set(&rhs)?);
    let s = subspace::fit_bias_subspace(
        FitInput::Paired {
            factual: &lhs,
            counterfactual: &rhs,
        },
        1,
        "demo",
    )?;
    let projected = p
        .probes
        .iter()
        .map(|v| subspace::project_out(v, &s))
        .collect::<Result<Vec<_>>>()?;
    json(&Projection {
        component: s.components[0].clone(),
        eigenvalue: s.eigenvalues[0],
        projected,
    })
}

#[wasm_bindgen]
pub fn schema() -> Result<String, JsValue> {
    schema_json().map_err(js)
}

#[wasm_bindgen]
pub fn perturb_text(text: &str, attribute: &str, from: &str, to: &str) -> Result<String, JsValue> {
    perturb_json(text, attribute, from, to).map_err(js)
}

#[wasm_bindgen]
pub fn explore_bias(spec: &str) -> Result<String, JsValue> {
    explore_bias_json(spec).map_err(js)
}

#[wasm_bindgen]
pub fn project_2d(input: &str) -> Result<String, JsValue> {
    project_2d_json(input).map_err(js)
}

//! Browser bindings: parse a network, classify a concentration vector and
//! solve one stochastic component. Every export takes the network text and
//! returns JSON, with errors thrown as JS `Error`s.

use crn_core::detbal::{classify_state as classify, DEFAULT_TOL};
use crn_core::model::MassActionSystem;
use crn_core::parser::{format_network, parse_det_state, parse_discrete_state, parse_network};
use crn_core::stoch::{classify_measure, communicating_class, stationary_distribution, StateBox};
use serde_json::json;
use wasm_bindgen::prelude::*;

/// States per component the page will solve.
pub const MAX_STATES: usize = 200_000;

fn load(text: &str) -> Result<MassActionSystem, String> {
    parse_network(text).map_err(|e| e.to_string())
}

pub fn parse_json(text: &str) -> Result<String, String> {
    let sys = load(text)?;
    let net = sys.network();
    Ok(json!({
        "species": net.species().names(),
        "complexes": (0..net.n_complexes()).map(|i| net.complex_label(i)).collect::<Vec<_>>(),
        "reactions": net.n_reactions(),
        "canonical": format_network(&sys),
    })
    .to_string())
}

pub fn classify_state_json(text: &str, state: &str) -> Result<String, String> {
    let sys = load(text)?;
    let c = parse_det_state(state, sys.network().species()).map_err(|e| e.to_string())?;
    let report = classify(&sys, &c, DEFAULT_TOL).map_err(|e| e.to_string())?;
    serde_json::to_string(&report).map_err(|e| e.to_string())
}

/// `bound` caps every species count; the component may be truncated.
pub fn stationary_json(text: &str, seed: &str, bound: i64) -> Result<String, String> {
    let sys = load(text)?;
    let x0 = parse_discrete_state(seed, sys.network().species()).map_err(|e| e.to_string())?;
    let domain = StateBox::cube(sys.n_species(), bound);
    let comp = communicating_class(&sys, &x0, &domain).map_err(|e| e.to_string())?;
    if comp.len() > MAX_STATES {
        return Err(format!("component has {} states; the page solves at most {MAX_STATES}", comp.len()));
    }
    let sol = stationary_distribution(&sys, &comp, true).map_err(|e| e.to_string())?;
    let report = classify_measure(&sys, &sol.measure, &domain, DEFAULT_TOL).map_err(|e| e.to_string())?;
    let dist: Vec<_> = sol.measure.iter().map(|(x, p)| json!({ "state": x.0, "p": p })).collect();
    Ok(json!({
        "states": comp.len(),
        "closed": comp.closed,
        "truncated": comp.truncated,
        "residual": sol.residual,
        "measure": report,
        "distribution": dist,
    })
    .to_string())
}

#[wasm_bindgen]
pub fn parse(text: &str) -> Result<String, JsError> {
    parse_json(text).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = classifyState)]
pub fn classify_state(text: &str, state: &str) -> Result<String, JsError> {
    classify_state_json(text, state).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn stationary(text: &str, seed: &str, bound: i64) -> Result<String, JsError> {
    stationary_json(text, seed, bound).map_err(|e| JsError::new(&e))
}

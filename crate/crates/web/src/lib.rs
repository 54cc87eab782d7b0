//! WebAssembly bindings for the browser demo in `www/`.

mod demo;

pub use demo::{inspect, penalty_surface, run_experiment, ExperimentSpec};

use wasm_bindgen::prelude::*;

fn js_err(e: String) -> JsValue {
    JsValue::from_str(&e)
}

/// JSON with per-rule relaxed penalties and gradients at `probs`.
#[wasm_bindgen(js_name = inspectRules)]
pub fn inspect_rules(rules: &str, labels: &str, probs: Vec<f64>) -> Result<String, JsValue> {
    demo::inspect(rules, labels, &probs).map_err(js_err)
}

/// Domain loss on a square grid over two labels' probabilities.
#[wasm_bindgen(js_name = penaltySurface)]
pub fn penalty_surface_js(
    rules: &str,
    labels: &str,
    x_label: &str,
    y_label: &str,
    base: Vec<f64>,
    resolution: usize,
) -> Result<Vec<f64>, JsValue> {
    demo::penalty_surface(rules, labels, x_label, y_label, &base, resolution).map_err(js_err)
}

/// Baseline vs rule-obedient self-correcting training on synthetic noisy data.
#[wasm_bindgen(js_name = runExperiment)]
pub fn run_experiment_js(spec: &str) -> Result<String, JsValue> {
    demo::run_experiment(spec).map_err(js_err)
}

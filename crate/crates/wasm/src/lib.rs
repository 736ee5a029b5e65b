//! Browser bindings: generate a trace, check it, and list a violation automaton.

use wasm_bindgen::prelude::*;

use linrv::gen::{generate, GeneratorConfig, Variant};
use linrv::{automata, builtin, monitor, trace, SpecKind};

fn kind(spec: &str) -> Result<SpecKind, String> {
    spec.parse().map_err(|e: linrv::spec::SpecError| e.to_string())
}

/// Simulates an implementation variant and returns the trace in JSON lines.
#[wasm_bindgen]
pub fn generate_trace(
    spec: &str,
    variant: &str,
    ops: usize,
    threads: usize,
    seed: u64,
) -> Result<String, String> {
    let mut cfg = GeneratorConfig::new(kind(spec)?);
    cfg.variant = variant.parse::<Variant>().map_err(|e| e.to_string())?;
    cfg.ops = ops;
    cfg.threads = threads;
    cfg.seed = seed;
    cfg.values = ops as u32;
    let e = generate(&cfg).map_err(|e| e.to_string())?;
    Ok(trace::to_string(&e))
}

/// Checks a JSON-lines trace and returns a JSON report with `verdict` and,
/// on failure, the violated rule.
#[wasm_bindgen]
pub fn check_trace(spec: &str, text: &str) -> Result<String, String> {
    let spec = builtin(kind(spec)?);
    let e = trace::parse_str(text).map_err(|e| e.to_string())?.complete();
    let h = e.history().map_err(|e| e.to_string())?;
    let report = match monitor::check(&h, &spec) {
        Ok(v) => serde_json::json!({
            "verdict": if v.linearizable { "linearizable" } else { "violation" },
            "ops": h.len(),
            "violation": v.violation,
        }),
        Err(monitor::MonitorError::NotDifferentiated) => serde_json::json!({
            "verdict": "inconclusive",
            "ops": h.len(),
            "note": "trace is not differentiated",
        }),
        Err(e) => return Err(e.to_string()),
    };
    Ok(serde_json::to_string_pretty(&report).expect("serializable report"))
}

/// Transition listing of one rule automaton, or of their union for `"union"`.
#[wasm_bindgen]
pub fn show_automaton(spec: &str, rule: &str) -> Result<String, String> {
    let spec = builtin(kind(spec)?);
    let a = if rule == "union" {
        automata::build_union(&spec)
    } else {
        automata::build(&spec, rule).map_err(|e| e.to_string())?
    };
    Ok(a.listing())
}

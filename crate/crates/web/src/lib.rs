//! Browser bindings for the interactive demo page in `www/`.
//!
//! Every export returns plain numbers or strings so the same functions are
//! usable (and tested) natively.

use wasm_bindgen::prelude::*;
use wsbdf2::harness::{run_example, theta_grid, ExperimentConfig, MeshCase};
use wsbdf2::ratio_bounds::{lk_constant, RatioThresholds};

/// Threshold curves flattened as `[theta, r_p, r_s, theta, r_p, r_s, ...]`.
/// Unbounded values come back as `Infinity`.
#[wasm_bindgen]
pub fn ratio_curve(samples: usize) -> Result<Vec<f64>, JsError> {
    let mut out = Vec::with_capacity(3 * (samples + 1));
    for theta in theta_grid(samples.max(1)) {
        let row = RatioThresholds::new(theta).map_err(|e| JsError::new(&e.to_string()))?;
        out.extend([row.theta, row.r_p, row.r_s]);
    }
    Ok(out)
}

/// `l_1, l_2, ...` for a constant step ratio.
#[wasm_bindgen]
pub fn lk_trace(theta: f64, ratio: f64, steps: usize) -> Vec<f64> {
    lk_constant(theta, ratio, steps).values
}

/// One-based index of the first `l_k <= 0`, or 0 if the trace stays positive.
#[wasm_bindgen]
pub fn lk_first_nonpositive(theta: f64, ratio: f64, steps: usize) -> usize {
    lk_constant(theta, ratio, steps)
        .first_nonpositive()
        .unwrap_or(0)
}

/// Final-time errors of the manufactured heat problem for `N = n0, 2 n0, ...`
/// (`levels` values), on an `m x m` grid. `case` takes the CLI spellings.
#[wasm_bindgen]
pub fn convergence_errors(
    case: &str,
    theta: f64,
    n0: usize,
    levels: usize,
    m: usize,
) -> Result<Vec<f64>, JsError> {
    let case: MeshCase = case
        .parse()
        .map_err(|e: wsbdf2::Error| JsError::new(&e.to_string()))?;
    let cfg = convergence_config(case, theta, n0, levels, m);
    let report = run_example(&cfg).map_err(|e| JsError::new(&e.to_string()))?;
    Ok(cfg
        .ns
        .iter()
        .map(|n| {
            report
                .cell(theta, *n)
                .and_then(|c| c.error)
                .unwrap_or(f64::NAN)
        })
        .collect())
}

/// Same study rendered as the aligned text table.
#[wasm_bindgen]
pub fn convergence_table(
    case: &str,
    theta: f64,
    n0: usize,
    levels: usize,
    m: usize,
) -> Result<String, JsError> {
    let case: MeshCase = case
        .parse()
        .map_err(|e: wsbdf2::Error| JsError::new(&e.to_string()))?;
    let report = run_example(&convergence_config(case, theta, n0, levels, m))
        .map_err(|e| JsError::new(&e.to_string()))?;
    Ok(report.table())
}

fn convergence_config(
    case: MeshCase,
    theta: f64,
    n0: usize,
    levels: usize,
    m: usize,
) -> ExperimentConfig {
    ExperimentConfig {
        thetas: vec![theta],
        case,
        ns: (0..levels.max(1)).map(|i| n0.max(1) << i).collect(),
        mx: m,
        my: m,
        ..ExperimentConfig::default()
    }
}

//! wasm-bindgen bindings behind `www/index.html`. Every export takes and
//! returns JSON strings; the `*_json` functions hold the logic and are what
//! the native tests exercise.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use rankone::analysis::is_determinable;
use rankone::completion::{complete, CompletionOptions};
use rankone::experiment::{run_trial, summarize, trial_seed, TrialSpec};
use rankone::generator::{generate, GeneratorConfig};
use rankone::linsys::SolverOptions;
use rankone::tensor::{outer_entry, MultiIndex, PartialTensor};

fn parse(tensor: &str) -> Result<PartialTensor, String> {
    let a: PartialTensor = serde_json::from_str(tensor).map_err(|e| e.to_string())?;
    if a.is_empty() {
        return Err("no observed entries".into());
    }
    Ok(a)
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("report types serialize")
}

pub fn analyze_json(tensor: &str) -> Result<String, String> {
    let a = parse(tensor)?;
    let report = is_determinable(&a, &SolverOptions::default()).map_err(|e| e.to_string())?;
    Ok(to_json(&report))
}

#[derive(Serialize)]
struct Filled {
    idx: MultiIndex,
    val: f64,
    observed: Option<f64>,
}

#[derive(Serialize)]
struct Completed {
    status: String,
    chain: Vec<usize>,
    fit_residual: f64,
    factors: Vec<Vec<f64>>,
    diagnostics: Vec<String>,
    /// Full tensor for small instances (at most 512 cells), row-major.
    cells: Option<Vec<Filled>>,
}

const MAX_CELLS: usize = 512;

pub fn complete_json(tensor: &str, balance: bool) -> Result<String, String> {
    let a = parse(tensor)?;
    let opts = CompletionOptions {
        balance,
        ..CompletionOptions::default()
    };
    let r = complete(&a, &opts).map_err(|e| e.to_string())?;
    let total = a
        .dims()
        .iter()
        .try_fold(1usize, |acc, &n| acc.checked_mul(n));
    let cells = total.filter(|&t| t <= MAX_CELLS).map(|_| {
        let mut out = Vec::new();
        let mut idx = vec![1usize; a.order()];
        loop {
            let mi = MultiIndex::from(idx.clone());
            out.push(Filled {
                val: outer_entry(&r.factors, &mi),
                observed: a.get(&mi),
                idx: mi,
            });
            // Odometer over 1-based indices, last mode fastest.
            let mut k = a.order();
            loop {
                if k == 0 {
                    return out;
                }
                k -= 1;
                if idx[k] < a.dims()[k] {
                    idx[k] += 1;
                    break;
                }
                idx[k] = 1;
            }
        }
    });
    Ok(to_json(&Completed {
        status: r.status.to_string(),
        chain: r.chain(),
        fit_residual: r.fit_residual,
        factors: r.factors.clone(),
        diagnostics: r.diagnostics.clone(),
        cells,
    }))
}

pub fn generate_json(dims: &[usize], seed: u64, eps: f64) -> Result<String, String> {
    let inst = generate(&GeneratorConfig {
        dims: dims.to_vec(),
        seed,
        eps,
    })
    .map_err(|e| e.to_string())?;
    Ok(to_json(&inst.noisy))
}

/// `trials` seeded noisy trials per noise level, summarized per level.
pub fn noise_sweep_json(
    dims: &[usize],
    eps_levels: &[f64],
    trials: u64,
    seed: u64,
    compare_nls: bool,
    clock: &dyn Fn() -> f64,
) -> Result<String, String> {
    #[derive(Serialize)]
    struct Level {
        eps: f64,
        summary: rankone::experiment::Summary,
    }
    let mut levels = Vec::with_capacity(eps_levels.len());
    for &eps in eps_levels {
        let reports = (0..trials)
            .map(|i| {
                let mut spec = TrialSpec::new(dims.to_vec(), eps, trial_seed(seed, i));
                spec.compare_nls = compare_nls;
                run_trial(&spec, clock)
            })
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| e.to_string())?;
        levels.push(Level {
            eps,
            summary: summarize(&reports),
        });
    }
    Ok(to_json(&levels))
}

fn now_seconds() -> f64 {
    js_sys::Date::now() / 1000.0
}

fn js_err(e: String) -> JsValue {
    JsValue::from_str(&e)
}

#[wasm_bindgen]
pub fn analyze(tensor: &str) -> Result<String, JsValue> {
    analyze_json(tensor).map_err(js_err)
}

#[wasm_bindgen]
pub fn complete_tensor(tensor: &str, balance: bool) -> Result<String, JsValue> {
    complete_json(tensor, balance).map_err(js_err)
}

#[wasm_bindgen]
pub fn random_instance(dims: &[u32], seed: u32, eps: f64) -> Result<String, JsValue> {
    let dims: Vec<usize> = dims.iter().map(|&d| d as usize).collect();
    generate_json(&dims, u64::from(seed), eps).map_err(js_err)
}

#[wasm_bindgen]
pub fn noise_sweep(
    dims: &[u32],
    eps_levels: &[f64],
    trials: u32,
    seed: u32,
    compare_nls: bool,
) -> Result<String, JsValue> {
    let dims: Vec<usize> = dims.iter().map(|&d| d as usize).collect();
    noise_sweep_json(
        &dims,
        eps_levels,
        u64::from(trials),
        u64::from(seed),
        compare_nls,
        &now_seconds,
    )
    .map_err(js_err)
}

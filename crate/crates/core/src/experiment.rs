//! One noisy completion trial end to end: generate, complete, score, and
//! optionally fit the least-squares baseline on the same data.
//!
//! Timing is injected through a clock closure so this module also runs where
//! `std::time::Instant` is unavailable (wasm32).

use serde::Serialize;

use crate::baseline::{nls_fit, NlsOptions, Termination};
use crate::completion::{complete, CompletionOptions, Status};
use crate::error::Result;
use crate::generator::{generate, GeneratorConfig};
use crate::metrics::{completion_errors, Metrics};
use crate::tensor::MultiIndex;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrialSpec {
    pub dims: Vec<usize>,
    pub eps: f64,
    pub seed: u64,
    pub compare_nls: bool,
    pub completion: CompletionOptions,
    pub nls: NlsOptions,
}

impl TrialSpec {
    pub fn new(dims: Vec<usize>, eps: f64, seed: u64) -> Self {
        TrialSpec {
            dims,
            eps,
            seed,
            compare_nls: false,
            completion: CompletionOptions::default(),
            nls: NlsOptions::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LevelSummary {
    pub mode: usize,
    pub sigma_min: f64,
    pub gap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NlsTrial {
    pub metrics: Metrics,
    pub iterations: usize,
    pub objective: f64,
    pub termination: Termination,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrialReport {
    pub seed: u64,
    pub dims: Vec<usize>,
    pub eps: f64,
    pub omega_size: usize,
    pub noise_norm: f64,
    pub status: Status,
    pub fit_residual: f64,
    pub metrics: Metrics,
    pub levels: Vec<LevelSummary>,
    pub nls: Option<NlsTrial>,
}

/// Seed of trial `index` in a run seeded with `base`. Independent of how
/// trials are scheduled.
pub fn trial_seed(base: u64, index: u64) -> u64 {
    let mut z = base.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Runs one trial. `clock` returns a monotone time in seconds.
pub fn run_trial(spec: &TrialSpec, clock: &dyn Fn() -> f64) -> Result<TrialReport> {
    let inst = generate(&GeneratorConfig {
        dims: spec.dims.clone(),
        seed: spec.seed,
        eps: spec.eps,
    })?;
    let omega: Vec<MultiIndex> = inst.noisy.indices().cloned().collect();
    let noise_norm = inst.noise_norm();

    let t0 = clock();
    let result = complete(&inst.noisy, &spec.completion)?;
    let elapsed = clock() - t0;
    let mut metrics = if result.status == Status::Failed {
        failed_metrics(&spec.dims, omega.len())
    } else {
        completion_errors(
            &spec.dims,
            &omega,
            &inst.truth.factors,
            &result.factors,
            noise_norm,
        )?
    };
    metrics.runtime_seconds = elapsed;

    let nls = if spec.compare_nls {
        let opts = NlsOptions {
            seed: trial_seed(spec.seed, u64::MAX),
            ..spec.nls.clone()
        };
        let t0 = clock();
        let fit = nls_fit(&inst.noisy, &opts)?;
        let elapsed = clock() - t0;
        let mut m = completion_errors(
            &spec.dims,
            &omega,
            &inst.truth.factors,
            &fit.factors,
            noise_norm,
        )
        .unwrap_or_else(|_| failed_metrics(&spec.dims, omega.len()));
        m.runtime_seconds = elapsed;
        Some(NlsTrial {
            metrics: m,
            iterations: fit.iterations,
            objective: fit.objective,
            termination: fit.termination,
        })
    } else {
        None
    };

    Ok(TrialReport {
        seed: spec.seed,
        dims: spec.dims.clone(),
        eps: spec.eps,
        omega_size: omega.len(),
        noise_norm,
        status: result.status,
        fit_residual: result.fit_residual,
        metrics,
        levels: result
            .levels
            .iter()
            .map(|l| {
                let chosen = l
                    .candidates
                    .iter()
                    .find(|c| c.mode == l.chosen_mode)
                    .expect("chosen mode is a candidate");
                LevelSummary {
                    mode: l.chosen_mode,
                    sigma_min: chosen.sigma_min,
                    gap: chosen.gap,
                }
            })
            .collect(),
        nls,
    })
}

fn failed_metrics(dims: &[usize], omega_size: usize) -> Metrics {
    Metrics {
        err_ab: f64::NAN,
        err_rt: None,
        sin_theta: f64::NAN,
        sin_theta_per_mode: vec![f64::NAN; dims.len()],
        density: omega_size as f64 / dims.iter().map(|&n| n as f64).product::<f64>(),
        runtime_seconds: 0.0,
    }
}

/// Means over a batch of trials. `err_rt` averages the trials where it is
/// defined.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Summary {
    pub trials: usize,
    pub failed: usize,
    pub density: f64,
    pub err_ab: f64,
    pub err_rt: Option<f64>,
    pub sin_theta: f64,
    pub runtime_seconds: f64,
    pub nls: Option<NlsSummary>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NlsSummary {
    pub err_ab: f64,
    pub err_rt: Option<f64>,
    pub sin_theta: f64,
    pub runtime_seconds: f64,
    /// Trials where the algorithm's `err_rt` was strictly below the baseline's.
    pub algorithm_more_accurate: usize,
    /// Trials where the algorithm finished first.
    pub algorithm_faster: usize,
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

pub fn summarize(reports: &[TrialReport]) -> Summary {
    let ok: Vec<&TrialReport> = reports
        .iter()
        .filter(|r| r.status != Status::Failed)
        .collect();
    let m = |f: fn(&Metrics) -> f64| mean(ok.iter().map(|r| f(&r.metrics))).unwrap_or(f64::NAN);
    let with_nls: Vec<(&TrialReport, &NlsTrial)> = reports
        .iter()
        .filter_map(|r| r.nls.as_ref().map(|n| (r, n)))
        .collect();
    let nls = (!with_nls.is_empty()).then(|| {
        let nm = |f: fn(&Metrics) -> f64| mean(with_nls.iter().map(|(_, n)| f(&n.metrics))).unwrap_or(f64::NAN);
        NlsSummary {
            err_ab: nm(|m| m.err_ab),
            err_rt: mean(with_nls.iter().filter_map(|(_, n)| n.metrics.err_rt)),
            sin_theta: nm(|m| m.sin_theta),
            runtime_seconds: nm(|m| m.runtime_seconds),
            algorithm_more_accurate: with_nls
                .iter()
                .filter(|(r, n)| matches!((r.metrics.err_rt, n.metrics.err_rt), (Some(a), Some(b)) if a < b))
                .count(),
            algorithm_faster: with_nls
                .iter()
                .filter(|(r, n)| r.metrics.runtime_seconds < n.metrics.runtime_seconds)
                .count(),
        }
    });
    Summary {
        trials: reports.len(),
        failed: reports.len() - ok.len(),
        density: mean(reports.iter().map(|r| r.metrics.density)).unwrap_or(f64::NAN),
        err_ab: m(|m| m.err_ab),
        err_rt: mean(ok.iter().filter_map(|r| r.metrics.err_rt)),
        sin_theta: m(|m| m.sin_theta),
        runtime_seconds: mean(reports.iter().map(|r| r.metrics.runtime_seconds))
            .unwrap_or(f64::NAN),
        nls,
    }
}

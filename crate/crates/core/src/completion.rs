//! Recursive rank-one completion: pick the flattening whose pairwise-minor
//! system is closest to singular, reshape its nullvector into a tensor of one
//! lower order, recurse, and recover each dropped mode by least squares on
//! the way back up.

use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linsys::{
    build_system, coupled_components, equilibrate, fix_sign, smallest_singular, SingularTriplet,
    SolverOptions, SparseSystem,
};
use crate::tensor::{FlattenedView, PartialTensor};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CompletionOptions {
    pub solver: SolverOptions,
    /// Two candidate `sigma_min` (or gap) values within
    /// `tie_tol * (1 + max)` of each other count as equal.
    pub tie_tol: f64,
    /// Compute the mode vector on the diagonally equilibrated system (see
    /// [`crate::linsys::equilibrate`]). Mode selection always uses the raw
    /// system.
    pub balance: bool,
}

impl Default for CompletionOptions {
    fn default() -> Self {
        CompletionOptions {
            solver: SolverOptions::default(),
            tie_tol: 1e-10,
            balance: true,
        }
    }
}

/// Spectral summary of one candidate flattening.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ModeStats {
    /// Mode of the original tensor.
    pub mode: usize,
    /// Mode within the tensor of the current level.
    pub local_mode: usize,
    pub sigma_min: f64,
    pub sigma_next: f64,
    pub gap: f64,
    pub nullity: usize,
    /// Independent blocks of the system (see
    /// [`crate::linsys::coupled_components`]).
    pub components: usize,
    pub underdetermined: bool,
    pub nrows: usize,
    pub ncols: usize,
    /// Set when the solver failed on this flattening; the mode is then not
    /// eligible.
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LevelRecord {
    pub level: usize,
    /// Original mode dropped at this level.
    pub chosen_mode: usize,
    pub candidates: Vec<ModeStats>,
    /// Unit nullvector over the row labels of the chosen flattening.
    pub x_star: Vec<f64>,
    pub underdetermined: bool,
    pub nullity: usize,
    /// `x_star` reshaped: the tensor handed to the next level.
    #[serde(skip)]
    pub reduced: PartialTensor,
    /// Original mode numbers of `reduced`'s modes.
    pub reduced_modes: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ok,
    Degraded,
    Failed,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Ok => "ok",
            Status::Degraded => "degraded",
            Status::Failed => "failed",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CompletionResult {
    /// `u_1, ..., u_m`. All zero when `status` is `Failed`.
    pub factors: Vec<Vec<f64>>,
    pub levels: Vec<LevelRecord>,
    pub fit_residual: f64,
    pub status: Status,
    pub diagnostics: Vec<String>,
}

impl CompletionResult {
    pub fn chain(&self) -> Vec<usize> {
        self.levels.iter().map(|l| l.chosen_mode).collect()
    }
}

struct Candidate {
    stats: ModeStats,
    solved: Option<(FlattenedView, SparseSystem, SingularTriplet)>,
}

fn evaluate(
    a: &PartialTensor,
    local_mode: usize,
    mode: usize,
    opts: &SolverOptions,
) -> Result<Candidate> {
    let view = a.flatten(local_mode)?;
    let b = build_system(&view);
    let (nrows, ncols) = (b.nrows(), b.ncols());
    let components = coupled_components(&b);
    match smallest_singular(&b, opts) {
        Ok(t) => Ok(Candidate {
            stats: ModeStats {
                mode,
                local_mode,
                sigma_min: t.sigma_min,
                sigma_next: t.sigma_next,
                gap: t.gap,
                nullity: t.nullity,
                components,
                underdetermined: t.underdetermined,
                nrows,
                ncols,
                error: None,
            },
            solved: Some((view, b, t)),
        }),
        Err(e) if e.is_numerical() => Ok(Candidate {
            stats: ModeStats {
                mode,
                local_mode,
                sigma_min: f64::NAN,
                sigma_next: f64::NAN,
                gap: f64::NAN,
                nullity: 0,
                components,
                underdetermined: b.is_underdetermined(),
                nrows,
                ncols,
                error: Some(e.to_string()),
            },
            solved: None,
        }),
        Err(e) => Err(e),
    }
}

/// Index into `stats` of the chosen candidate: smallest `sigma_min`, then
/// largest gap, then smallest mode. Failed candidates are skipped. Systems
/// that split into several independent blocks, or whose nullspace is at
/// least two-dimensional, are only considered when nothing else is left.
///
/// The demotion matters for noisy data. A block without cycles keeps
/// `sigma_min = 0` exactly under any perturbation, so a split system reports
/// a zero minimum that says nothing about the data, while an informative
/// flattening picks up `sigma_min = O(noise)`; comparing raw minima would
/// pick the uninformative mode. On exact data with nonzero entries every
/// block carries its own nullvector, so split systems have nullity at least
/// two and lose the gap tie-break anyway.
fn choose(stats: &[ModeStats], tie_tol: f64) -> Option<usize> {
    let usable: Vec<usize> = (0..stats.len())
        .filter(|&i| stats[i].error.is_none())
        .collect();
    let tier = |keep: &dyn Fn(&ModeStats) -> bool| -> Vec<usize> {
        usable
            .iter()
            .copied()
            .filter(|&i| keep(&stats[i]))
            .collect()
    };
    let coupled = tier(&|s| s.nullity <= 1 && s.components == 1);
    let unique = tier(&|s| s.nullity <= 1);
    let pool = [coupled, unique, usable.clone()]
        .into_iter()
        .find(|p| !p.is_empty())
        .unwrap_or_default();
    let min = pool
        .iter()
        .map(|&i| stats[i].sigma_min)
        .fold(f64::INFINITY, f64::min);
    let max = pool.iter().map(|&i| stats[i].sigma_min).fold(0.0, f64::max);
    let band = tie_tol * (1.0 + max);
    let tied: Vec<usize> = pool
        .into_iter()
        .filter(|&i| stats[i].sigma_min <= min + band)
        .collect();
    let best_gap = tied
        .iter()
        .map(|&i| stats[i].gap)
        .fold(f64::NEG_INFINITY, f64::max);
    let max_gap = tied.iter().map(|&i| stats[i].gap).fold(0.0, f64::max);
    let gap_band = tie_tol * (1.0 + max_gap);
    // `tied` is in ascending mode order, so the first survivor is the smallest.
    tied.into_iter()
        .find(|&i| stats[i].gap >= best_gap - gap_band)
}

/// The mode (1-based, local to `a`) minimizing `sigma_min` of its
/// pairwise-minor system, ties going to the larger gap and then the smaller
/// mode. `excluded` modes are not considered.
pub fn select_mode(
    a: &PartialTensor,
    excluded: &[usize],
    opts: &CompletionOptions,
) -> Result<(usize, Vec<ModeStats>)> {
    if a.order() < 2 {
        return Err(Error::arg("mode selection needs order at least 2"));
    }
    let stats = (1..=a.order())
        .filter(|k| !excluded.contains(k))
        .map(|k| evaluate(a, k, k, &opts.solver).map(|c| c.stats))
        .collect::<Result<Vec<_>>>()?;
    if stats.is_empty() {
        return Err(Error::arg("every mode is excluded"));
    }
    let pick = choose(&stats, opts.tie_tol).ok_or_else(|| all_failed(&stats))?;
    Ok((stats[pick].local_mode, stats))
}

fn all_failed(stats: &[ModeStats]) -> Error {
    Error::Factorization(format!(
        "the solver failed on every candidate flattening: {}",
        stats
            .iter()
            .filter_map(|s| s.error.as_deref())
            .collect::<Vec<_>>()
            .join("; ")
    ))
}

/// Unit nullvector of the mode-`k` system of `a` (sign fixed so its
/// largest entry is positive), computed on the equilibrated system, with the
/// raw system's spectral summary.
pub fn extract_vector(
    a: &PartialTensor,
    k: usize,
    opts: &SolverOptions,
) -> Result<(Vec<f64>, ModeStats)> {
    let b = build_system(&a.flatten(k)?);
    let t = smallest_singular(&b, opts)?;
    let stats = ModeStats {
        mode: k,
        local_mode: k,
        sigma_min: t.sigma_min,
        sigma_next: t.sigma_next,
        gap: t.gap,
        nullity: t.nullity,
        components: coupled_components(&b),
        underdetermined: t.underdetermined,
        nrows: b.nrows(),
        ncols: b.ncols(),
        error: None,
    };
    Ok((balanced_vector(&b, opts, &t), stats))
}

/// The mode vector computed on the equilibrated system and mapped back,
/// unit-normalized with the usual sign. Falls back to the raw vector when the
/// raw nullspace is not one-dimensional (the canonical choice is defined on
/// the raw system) or the balanced solve fails.
fn balanced_vector(b: &SparseSystem, opts: &SolverOptions, raw: &SingularTriplet) -> Vec<f64> {
    if raw.nullity >= 2 {
        return raw.right_vector.clone();
    }
    let bal = equilibrate(b);
    let Ok(t) = smallest_singular(&bal.system, opts) else {
        return raw.right_vector.clone();
    };
    let mut x = bal.unscale(&t.right_vector);
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(norm > 0.0 && norm.is_finite()) {
        return raw.right_vector.clone();
    }
    x.iter_mut().for_each(|v| *v /= norm);
    fix_sign(&mut x);
    x
}

/// Least-squares solution of mode `k` given the other factors.
#[derive(Clone, Debug, PartialEq)]
pub struct ModeSolve {
    pub u: Vec<f64>,
    /// Coordinates (1-based) no observation constrains, or whose weights all
    /// vanish; they are set to 0.
    pub unconstrained: Vec<usize>,
}

/// Factor update: `u_k[j] = <w, a> / <w, w>` over the observations with mode-`k`
/// coordinate `j`, where `w` holds the products of the other factors. This is
/// the exact minimizer of `sum (A_i - u_1[i_1] ... u_m[i_m])^2` in `u_k`.
///
/// `others` lists the factors of every mode except `k`, in mode order.
pub fn solve_mode_vector<V: AsRef<[f64]>>(
    a: &PartialTensor,
    others: &[V],
    k: usize,
) -> Result<ModeSolve> {
    let m = a.order();
    if k == 0 || k > m {
        return Err(Error::arg(format!("mode {k} out of range for order {m}")));
    }
    if others.len() != m - 1 {
        return Err(Error::arg(format!(
            "expected {} factors, got {}",
            m - 1,
            others.len()
        )));
    }
    let modes: Vec<usize> = (1..=m).filter(|&t| t != k).collect();
    for (u, &t) in others.iter().zip(&modes) {
        if u.as_ref().len() != a.dims()[t - 1] {
            return Err(Error::arg(format!(
                "factor for mode {t} has length {}, expected {}",
                u.as_ref().len(),
                a.dims()[t - 1]
            )));
        }
    }
    let n = a.dims()[k - 1];
    let mut num = vec![0.0; n];
    let mut den = vec![0.0; n];
    for (idx, val) in a.iter() {
        let w: f64 = others
            .iter()
            .zip(&modes)
            .map(|(u, &t)| u.as_ref()[idx.coord(t) - 1])
            .product();
        let j = idx.coord(k) - 1;
        num[j] += w * val;
        den[j] += w * w;
    }
    let mut unconstrained = Vec::new();
    let u = (0..n)
        .map(|j| {
            if den[j] > 0.0 {
                num[j] / den[j]
            } else {
                unconstrained.push(j + 1);
                0.0
            }
        })
        .collect();
    Ok(ModeSolve { u, unconstrained })
}

struct Run<'a> {
    opts: &'a CompletionOptions,
    levels: Vec<LevelRecord>,
    diagnostics: Vec<String>,
    degraded: bool,
}

impl Run<'_> {
    /// Factors of `a` in its own mode order. `modes[l]` is the original mode
    /// of local mode `l + 1`.
    fn solve(&mut self, a: &PartialTensor, modes: &[usize]) -> Result<Vec<Vec<f64>>> {
        if a.order() == 1 {
            return Ok(vec![self.base_case(a, modes[0])]);
        }
        let mut candidates = Vec::with_capacity(a.order());
        for (l, &mode) in modes.iter().enumerate() {
            candidates.push(evaluate(a, l + 1, mode, &self.opts.solver)?);
        }
        let stats: Vec<ModeStats> = candidates.iter().map(|c| c.stats.clone()).collect();
        let pick = choose(&stats, self.opts.tie_tol).ok_or_else(|| all_failed(&stats))?;
        let k = pick + 1;
        let (view, b, triplet) = candidates
            .swap_remove(pick)
            .solved
            .expect("chosen candidate was solved");
        let x_star = if self.opts.balance {
            balanced_vector(&b, &self.opts.solver, &triplet)
        } else {
            triplet.right_vector.clone()
        };

        if triplet.nullity >= 2 {
            self.degraded = true;
            self.diagnostics.push(format!(
                "level {}: mode {} has a {}{}-dimensional nullspace; the completion is not unique",
                self.levels.len(),
                modes[pick],
                if triplet.nullity_exact {
                    ""
                } else {
                    "at least "
                },
                triplet.nullity
            ));
        }
        let reduced = view.reshape_solution(&x_star)?;
        let mut rest: Vec<usize> = modes.to_vec();
        rest.remove(pick);
        self.levels.push(LevelRecord {
            level: self.levels.len(),
            chosen_mode: modes[pick],
            candidates: stats,
            x_star,
            underdetermined: triplet.underdetermined,
            nullity: triplet.nullity,
            reduced: reduced.clone(),
            reduced_modes: rest.clone(),
        });

        let mut factors = self.solve(&reduced, &rest)?;
        let sol = solve_mode_vector(a, &factors, k)?;
        if !sol.unconstrained.is_empty() {
            self.degraded = true;
            self.diagnostics.push(format!(
                "mode {}: coordinates {:?} are not constrained by any observation and were set to 0",
                modes[pick], sol.unconstrained
            ));
        }
        factors.insert(pick, sol.u);
        Ok(factors)
    }

    /// Base case at order 1: the observed values, extended by 1 where nothing
    /// was observed.
    fn base_case(&mut self, a: &PartialTensor, mode: usize) -> Vec<f64> {
        let mut u = vec![1.0; a.dims()[0]];
        for (idx, v) in a.iter() {
            u[idx.coord(1) - 1] = v;
        }
        let filled: Vec<usize> = (1..=u.len())
            .filter(|&i| !a.contains(&[i].into()))
            .collect();
        if !filled.is_empty() {
            self.degraded = true;
            self.diagnostics.push(format!(
                "mode {mode}: coordinates {filled:?} were never observed and were filled with 1"
            ));
        }
        u
    }
}

/// Rank-one completion of `a` by recursive flattening.
///
/// Numerical failures of the singular value solver do not surface as errors;
/// they produce a `Failed` result carrying the levels completed so far.
pub fn complete(a: &PartialTensor, opts: &CompletionOptions) -> Result<CompletionResult> {
    if a.is_empty() {
        return Err(Error::arg("no observed entries"));
    }
    let mut run = Run {
        opts,
        levels: Vec::new(),
        diagnostics: Vec::new(),
        degraded: false,
    };
    let modes: Vec<usize> = (1..=a.order()).collect();
    match run.solve(a, &modes) {
        Ok(factors) => {
            let fit_residual = a.residual_on_omega(&factors)?;
            Ok(CompletionResult {
                factors,
                levels: run.levels,
                fit_residual,
                status: if run.degraded {
                    Status::Degraded
                } else {
                    Status::Ok
                },
                diagnostics: run.diagnostics,
            })
        }
        Err(e) if e.is_numerical() => {
            run.diagnostics.push(e.to_string());
            Ok(CompletionResult {
                factors: a.dims().iter().map(|&n| vec![0.0; n]).collect(),
                levels: run.levels,
                fit_residual: a.omega_norm(),
                status: Status::Failed,
                diagnostics: run.diagnostics,
            })
        }
        Err(e) => Err(e),
    }
}

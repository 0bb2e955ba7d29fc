//! Levenberg–Marquardt fit of `min Σ_Ω (A_i - u_1[i_1] ⋯ u_m[i_m])^2` over
//! all factor coordinates at once, from a random start.

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::{Mat, Side};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{MultiIndex, PartialTensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NlsOptions {
    pub max_iterations: usize,
    /// Stop when `||J^T r||_inf <= gradient_tolerance * max(1, ||J^T r||_inf at the start)`.
    pub gradient_tolerance: f64,
    /// Stop when an accepted step lowers the objective by less than this
    /// fraction of its value.
    pub function_tolerance: f64,
    /// Stop when an accepted step is shorter than this fraction of `||x||`.
    pub step_tolerance: f64,
    /// Initial damping relative to the mean squared Jacobian column norm.
    pub initial_damping: f64,
    /// Damping is divided by this on accepted steps and multiplied on rejections.
    pub damping_factor: f64,
    pub seed: u64,
}

impl Default for NlsOptions {
    fn default() -> Self {
        NlsOptions {
            max_iterations: 400,
            gradient_tolerance: 1e-6,
            function_tolerance: 1e-6,
            step_tolerance: 1e-6,
            initial_damping: 1e-3,
            damping_factor: 3.0,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// Gradient below tolerance.
    Converged,
    /// Relative objective decrease or step length fell below tolerance.
    Stalled,
    MaxIterations,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NlsResult {
    pub factors: Vec<Vec<f64>>,
    /// `Σ_Ω r_i^2` at `factors`.
    pub objective: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
    pub termination: Termination,
}

/// Residual and Jacobian layout for a fixed observation set.
struct Problem<'a> {
    dims: &'a [usize],
    offsets: Vec<usize>,
    obs: Vec<(&'a MultiIndex, f64)>,
}

impl<'a> Problem<'a> {
    fn new(a: &'a PartialTensor) -> Self {
        let mut offsets = Vec::with_capacity(a.order());
        let mut acc = 0;
        for &n in a.dims() {
            offsets.push(acc);
            acc += n;
        }
        Problem {
            dims: a.dims(),
            offsets,
            obs: a.iter().collect(),
        }
    }

    fn nvars(&self) -> usize {
        self.dims.iter().sum()
    }

    fn var(&self, t: usize, idx: &MultiIndex) -> usize {
        self.offsets[t] + idx.coords()[t] - 1
    }

    fn split(&self, x: &[f64]) -> Vec<Vec<f64>> {
        self.offsets
            .iter()
            .zip(self.dims)
            .map(|(&o, &n)| x[o..o + n].to_vec())
            .collect()
    }

    /// `r_i = A_i - Π_t x[t, i_t]`.
    fn residuals(&self, x: &[f64]) -> Vec<f64> {
        self.obs
            .iter()
            .map(|(idx, v)| {
                v - (0..self.dims.len())
                    .map(|t| x[self.var(t, idx)])
                    .product::<f64>()
            })
            .collect()
    }

    /// Nonzeros of `J`, row by row: `∂r_i/∂x[t, i_t] = -Π_{s≠t} x[s, i_s]`.
    fn jacobian(&self, x: &[f64]) -> Vec<(usize, usize, f64)> {
        let m = self.dims.len();
        let mut out = Vec::with_capacity(self.obs.len() * m);
        let mut vals = vec![0.0; m];
        for (r, (idx, _)) in self.obs.iter().enumerate() {
            for (t, v) in vals.iter_mut().enumerate() {
                *v = x[self.var(t, idx)];
            }
            for t in 0..m {
                let p: f64 = (0..m).filter(|&s| s != t).map(|s| vals[s]).product();
                out.push((r, self.var(t, idx), -p));
            }
        }
        out
    }
}

fn objective(r: &[f64]) -> f64 {
    r.iter().map(|x| x * x).sum()
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// `J^T r` and the triplets of `J^T J` (lower triangle, merged).
fn normal_equations(
    n: usize,
    jac: &[(usize, usize, f64)],
    r: &[f64],
    m: usize,
) -> (Vec<f64>, Vec<(usize, usize, f64)>) {
    let mut g = vec![0.0; n];
    for &(row, col, v) in jac {
        g[col] += v * r[row];
    }
    let mut t = Vec::with_capacity(jac.len() * m);
    for row in jac.chunks(m) {
        for &(_, a, va) in row {
            for &(_, b, vb) in row {
                if a >= b {
                    t.push((a, b, va * vb));
                }
            }
        }
    }
    t.sort_unstable_by_key(|&(i, j, _)| (j, i));
    let mut merged: Vec<(usize, usize, f64)> = Vec::with_capacity(t.len());
    for (i, j, v) in t {
        match merged.last_mut() {
            Some(last) if last.0 == i && last.1 == j => last.2 += v,
            _ => merged.push((i, j, v)),
        }
    }
    (g, merged)
}

/// Solves `(J^T J + λ I) δ = -J^T r`.
fn damped_step(n: usize, jtj: &[(usize, usize, f64)], g: &[f64], lambda: f64) -> Option<Vec<f64>> {
    let mut t: Vec<Triplet<usize, usize, f64>> =
        jtj.iter().map(|&(i, j, v)| Triplet::new(i, j, v)).collect();
    t.extend((0..n).map(|i| Triplet::new(i, i, lambda)));
    let mat = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &t).ok()?;
    let llt = mat.sp_cholesky(Side::Lower).ok()?;
    let mut rhs = Mat::<f64>::from_fn(n, 1, |i, _| -g[i]);
    llt.solve_in_place(rhs.as_mut());
    let step: Vec<f64> = (0..n).map(|i| rhs[(i, 0)]).collect();
    step.iter().all(|v| v.is_finite()).then_some(step)
}

/// Random standard-normal starting factors drawn from `seed`.
pub fn random_start(dims: &[usize], seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    dims.iter()
        .map(|&n| (0..n).map(|_| rng.sample(StandardNormal)).collect())
        .collect()
}

/// Fits a rank-one tensor to `a` by Levenberg–Marquardt from a random start.
pub fn nls_fit(a: &PartialTensor, opts: &NlsOptions) -> Result<NlsResult> {
    nls_fit_from(a, &random_start(a.dims(), opts.seed), opts)
}

/// As [`nls_fit`], starting from `start`.
pub fn nls_fit_from<V: AsRef<[f64]>>(
    a: &PartialTensor,
    start: &[V],
    opts: &NlsOptions,
) -> Result<NlsResult> {
    if a.is_empty() {
        return Err(Error::arg("no observed entries"));
    }
    crate::tensor::check_factors(a.dims(), start)?;
    let p = Problem::new(a);
    let n = p.nvars();
    let m = a.order();
    let mut x: Vec<f64> = start
        .iter()
        .flat_map(|u| u.as_ref().iter().copied())
        .collect();

    let mut r = p.residuals(&x);
    let mut f = objective(&r);
    let mut jac = p.jacobian(&x);
    let (mut g, mut jtj) = normal_equations(n, &jac, &r, m);
    let g_scale = g.iter().fold(1.0f64, |acc, v| acc.max(v.abs()));
    let mean_col: f64 = jtj
        .iter()
        .filter(|(i, j, _)| i == j)
        .map(|t| t.2)
        .sum::<f64>()
        / n as f64;
    let mut lambda = (opts.initial_damping * mean_col).max(f64::MIN_POSITIVE);

    let mut iterations = 0;
    let termination = loop {
        let gnorm = g.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        if gnorm <= opts.gradient_tolerance * g_scale || f == 0.0 {
            break Termination::Converged;
        }
        if iterations >= opts.max_iterations {
            break Termination::MaxIterations;
        }
        iterations += 1;

        let Some(step) = damped_step(n, &jtj, &g, lambda) else {
            lambda *= opts.damping_factor;
            continue;
        };
        let trial: Vec<f64> = x.iter().zip(&step).map(|(a, b)| a + b).collect();
        let r_trial = p.residuals(&trial);
        let f_trial = objective(&r_trial);
        if f_trial < f {
            let decrease = (f - f_trial) / f;
            let short = norm(&step) <= opts.step_tolerance * (opts.step_tolerance + norm(&x));
            x = trial;
            r = r_trial;
            f = f_trial;
            jac = p.jacobian(&x);
            (g, jtj) = normal_equations(n, &jac, &r, m);
            lambda /= opts.damping_factor;
            if decrease < opts.function_tolerance || short {
                break Termination::Stalled;
            }
        } else {
            lambda *= opts.damping_factor;
            if lambda > 1e32 * mean_col.max(1.0) {
                break Termination::Stalled;
            }
        }
    };
    let gradient_norm = g.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    Ok(NlsResult {
        factors: p.split(&x),
        objective: f,
        gradient_norm,
        iterations,
        termination,
    })
}

//! Random determinable instances: observation sets built as chains of
//! bipartite paths, standard-normal rank-one ground truth and multiplicative
//! uniform noise.
//!
//! All randomness comes from ChaCha8 seeded with the user seed, with one
//! stream per purpose so that, e.g., changing the noise level never changes
//! the observation set or the factors.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{outer_entry, MultiIndex, PartialTensor};

const STREAM_PERMUTATIONS: u64 = 1;
const STREAM_EXTENSIONS: u64 = 2;
const STREAM_FACTORS: u64 = 3;
const STREAM_NOISE: u64 = 4;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn check_dims(dims: &[usize]) -> Result<()> {
    if dims.is_empty() || dims.contains(&0) {
        return Err(Error::arg(format!("invalid dimensions {dims:?}")));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub dims: Vec<usize>,
    pub seed: u64,
    /// Relative noise magnitude.
    pub eps: f64,
}

/// Observation set of order `dims.len()`, sorted and duplicate-free.
///
/// `Phi_1 = [n_1]`; `Phi_{t+1}` joins the elements of `Phi_t` and the
/// coordinates of mode `t + 1` by a random zig-zag path
/// `(phi_{i_1}, j_1), (phi_{i_2}, j_1), (phi_{i_2}, j_2), ...`, the shorter
/// side padded with uniform picks (with replacement).
pub fn random_observation_set(dims: &[usize], seed: u64) -> Result<Vec<MultiIndex>> {
    check_dims(dims)?;
    let mut perm = stream(seed, STREAM_PERMUTATIONS);
    let mut ext = stream(seed, STREAM_EXTENSIONS);
    let mut phi: Vec<Vec<usize>> = (1..=dims[0]).map(|i| vec![i]).collect();
    for &n in &dims[1..] {
        let m = phi.len();
        let mut is: Vec<usize> = (0..m).collect();
        let mut js: Vec<usize> = (1..=n).collect();
        is.shuffle(&mut perm);
        js.shuffle(&mut perm);
        if m >= n {
            js.extend((n..m).map(|_| ext.random_range(1..=n)));
        } else {
            is.extend((m..n).map(|_| ext.random_range(0..m)));
        }
        let mut next = BTreeSet::new();
        for l in 0..is.len() {
            let base = &phi[is[l]];
            if l > 0 {
                next.insert(extend(base, js[l - 1]));
            }
            next.insert(extend(base, js[l]));
        }
        phi = next.into_iter().collect();
    }
    Ok(phi.into_iter().map(MultiIndex::new).collect())
}

fn extend(base: &[usize], j: usize) -> Vec<usize> {
    let mut v = Vec::with_capacity(base.len() + 1);
    v.extend_from_slice(base);
    v.push(j);
    v
}

/// Rank-one ground truth `u_1 ⊗ ... ⊗ u_m` with independent standard-normal
/// coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankOne {
    pub factors: Vec<Vec<f64>>,
}

impl RankOne {
    pub fn dims(&self) -> Vec<usize> {
        self.factors.iter().map(Vec::len).collect()
    }

    pub fn entry(&self, idx: &MultiIndex) -> f64 {
        outer_entry(&self.factors, idx)
    }

    /// The tensor restricted to `omega`.
    pub fn on(&self, omega: &[MultiIndex]) -> Result<PartialTensor> {
        PartialTensor::from_entries(
            self.dims(),
            omega.iter().map(|i| (i.clone(), self.entry(i))),
        )
    }
}

pub fn random_rank_one(dims: &[usize], seed: u64) -> Result<RankOne> {
    check_dims(dims)?;
    let mut rng = stream(seed, STREAM_FACTORS);
    Ok(RankOne {
        factors: dims
            .iter()
            .map(|&n| (0..n).map(|_| rng.sample(StandardNormal)).collect())
            .collect(),
    })
}

/// Multiplies every observed entry by `1 + eps * r`, `r` uniform on `[-1, 1]`.
pub fn perturb(a: &PartialTensor, eps: f64, seed: u64) -> Result<PartialTensor> {
    if !(eps >= 0.0 && eps.is_finite()) {
        return Err(Error::arg(format!(
            "noise magnitude must be finite and nonnegative, got {eps}"
        )));
    }
    let mut rng = stream(seed, STREAM_NOISE);
    Ok(a.map_values(|_, v| {
        let r: f64 = rng.random_range(-1.0..=1.0);
        v * (1.0 + eps * r)
    }))
}

/// A generated problem: ground truth, its exact observations and the noisy
/// observations handed to the solvers.
#[derive(Clone, Debug, PartialEq)]
pub struct Instance {
    pub config: GeneratorConfig,
    pub truth: RankOne,
    pub exact: PartialTensor,
    pub noisy: PartialTensor,
}

impl Instance {
    /// `||noisy - exact||_Omega`.
    pub fn noise_norm(&self) -> f64 {
        self.exact
            .iter()
            .map(|(idx, v)| (self.noisy.get(idx).expect("same support") - v).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    pub fn density(&self) -> f64 {
        self.exact.len() as f64 / self.config.dims.iter().map(|&n| n as f64).product::<f64>()
    }
}

pub fn generate(config: &GeneratorConfig) -> Result<Instance> {
    let omega = random_observation_set(&config.dims, config.seed)?;
    let truth = random_rank_one(&config.dims, config.seed)?;
    let exact = truth.on(&omega)?;
    let noisy = perturb(&exact, config.eps, config.seed)?;
    Ok(Instance {
        config: config.clone(),
        truth,
        exact,
        noisy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::{bipartite_connected, is_mod_full, pattern_connected};

    #[test]
    fn order_one_is_every_coordinate() {
        let omega = random_observation_set(&[4], 9).unwrap();
        let coords: Vec<usize> = omega.iter().map(|i| i.coord(1)).collect();
        assert_eq!(coords, vec![1, 2, 3, 4]);
    }

    #[test]
    fn square_matrix_pattern_is_a_path() {
        for seed in 0..50 {
            let omega = random_observation_set(&[3, 3], seed).unwrap();
            // Permutations on both sides, no padding: all 2*3-1 edges distinct.
            assert_eq!(omega.len(), 5);
            let a = PartialTensor::from_entries(vec![3, 3], omega.into_iter().map(|i| (i, 1.0)))
                .unwrap();
            assert!(bipartite_connected(&a.flatten(2).unwrap()));
        }
    }

    #[test]
    fn each_step_is_connected_and_full() {
        for seed in 0..20 {
            let dims = [4, 2, 7, 3];
            let omega = random_observation_set(&dims, seed).unwrap();
            let a = PartialTensor::from_entries(dims.to_vec(), omega.into_iter().map(|i| (i, 1.0)))
                .unwrap();
            for t in 1..=4 {
                assert!(is_mod_full(&a, t));
            }
            assert!(pattern_connected(&a.flatten(4).unwrap()));
            assert!(a.len() < 2 * 14);
        }
    }

    #[test]
    fn same_seed_same_output() {
        let cfg = GeneratorConfig {
            dims: vec![5, 6, 7],
            seed: 42,
            eps: 1e-2,
        };
        assert_eq!(generate(&cfg).unwrap(), generate(&cfg).unwrap());
        let other = generate(&GeneratorConfig {
            seed: 43,
            ..cfg.clone()
        })
        .unwrap();
        assert_ne!(other.truth, generate(&cfg).unwrap().truth);
    }

    #[test]
    fn noise_is_bounded_and_zero_at_eps_zero() {
        let cfg = GeneratorConfig {
            dims: vec![6, 5, 4],
            seed: 3,
            eps: 0.0,
        };
        let inst = generate(&cfg).unwrap();
        assert_eq!(inst.exact, inst.noisy);
        let inst = generate(&GeneratorConfig { eps: 0.05, ..cfg }).unwrap();
        for (idx, v) in inst.exact.iter() {
            assert!((inst.noisy.get(idx).unwrap() - v).abs() <= 0.05 * v.abs());
        }
        assert!(inst.noise_norm() <= 0.05 * inst.exact.omega_norm());
        assert!(inst.noise_norm() > 0.0);
    }

    #[test]
    fn rank_one_entry_matches_factor() {
        let r = random_rank_one(&[2], 11).unwrap();
        assert_eq!(r.entry(&[1].into()), r.factors[0][0]);
    }

    #[test]
    fn factor_mean_is_near_zero() {
        let r = random_rank_one(&[10_000], 5).unwrap();
        let mean = r.factors[0].iter().sum::<f64>() / 1e4;
        // Five standard errors of the mean.
        assert!(mean.abs() < 5.0 / 100.0, "{mean}");
    }

    #[test]
    fn rejects_bad_input() {
        assert!(random_observation_set(&[], 0).is_err());
        assert!(random_rank_one(&[3, 0], 0).is_err());
        let a = PartialTensor::from_entries(vec![1], [([1], 1.0)]).unwrap();
        assert!(perturb(&a, -1.0, 0).is_err());
    }
}

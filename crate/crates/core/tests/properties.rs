use proptest::prelude::*;

use rankone::completion::{complete, CompletionOptions, Status};
use rankone::generator::{generate, GeneratorConfig};
use rankone::linsys::{build_system, smallest_singular, SolverOptions};
use rankone::metrics::{completion_errors, sin_angle};
use rankone::tensor::{outer_entry, PartialTensor};

fn dims_strategy() -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(1usize..=5, 2..=4)
}

fn exact(dims: &[usize], seed: u64) -> (PartialTensor, Vec<Vec<f64>>) {
    let inst = generate(&GeneratorConfig {
        dims: dims.to_vec(),
        seed,
        eps: 0.0,
    })
    .unwrap();
    (inst.exact, inst.truth.factors)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn exact_instances_are_recovered(dims in dims_strategy(), seed in any::<u64>()) {
        let (a, truth) = exact(&dims, seed);
        let r = complete(&a, &CompletionOptions::default()).unwrap();
        prop_assert_eq!(r.status, Status::Ok);
        prop_assert!(r.fit_residual <= 1e-9 * a.omega_norm().max(1.0));
        for (u, v) in r.factors.iter().zip(&truth) {
            prop_assert!(sin_angle(u, v).unwrap() <= 1e-7);
        }
    }

    #[test]
    fn completion_is_scale_equivariant(dims in dims_strategy(), seed in any::<u64>(), c in prop::sample::select(vec![-2.0, 0.5, 10.0])) {
        let (a, _) = exact(&dims, seed);
        let opts = CompletionOptions::default();
        let base = complete(&a, &opts).unwrap();
        let scaled = complete(&a.scaled(c), &opts).unwrap();
        for idx in a.indices() {
            let x = c * outer_entry(&base.factors, idx);
            let y = outer_entry(&scaled.factors, idx);
            prop_assert!((x - y).abs() <= 1e-9 * x.abs().max(1e-300) + 1e-12, "{} vs {}", x, y);
        }
    }

    #[test]
    fn system_scales_linearly_and_vector_is_invariant(dims in dims_strategy(), seed in any::<u64>(), c in 0.01f64..100.0) {
        let (a, _) = exact(&dims, seed);
        let k = dims.len();
        let view = a.flatten(k).unwrap();
        let b = build_system(&view);
        let bc = build_system(&view.scaled(c));
        for ((r1, c1, v1), (r2, c2, v2)) in b.triplets().zip(bc.triplets()) {
            prop_assert_eq!((r1, c1), (r2, c2));
            prop_assert!((c * v1 - v2).abs() <= 1e-12 * v2.abs());
        }
        let x = smallest_singular(&b, &SolverOptions::default()).unwrap().right_vector;
        let y = smallest_singular(&bc, &SolverOptions::default()).unwrap().right_vector;
        for (p, q) in x.iter().zip(&y) {
            prop_assert!((p - q).abs() <= 1e-8);
        }
    }

    #[test]
    fn rows_vanish_on_the_true_factor(dims in dims_strategy(), seed in any::<u64>()) {
        let (a, truth) = exact(&dims, seed);
        let k = dims.len();
        let view = a.flatten(k).unwrap();
        let b = build_system(&view);
        let others: Vec<Vec<f64>> = truth[..k - 1].to_vec();
        let x: Vec<f64> = view
            .row_labels()
            .iter()
            .map(|l| l.coords().iter().zip(&others).map(|(&i, u)| u[i - 1]).product())
            .collect();
        let scale = x.iter().map(|v| v.abs()).fold(0.0, f64::max) * b.frobenius_norm();
        for r in b.mul_vec(&x) {
            prop_assert!(r.abs() <= 1e-12 * scale.max(1e-300));
        }
    }

    #[test]
    fn sin_is_invariant_under_rescaling(u in prop::collection::vec(-10.0f64..10.0, 2..8), s in -5.0f64..5.0) {
        prop_assume!(s.abs() > 1e-3 && u.iter().any(|x| x.abs() > 1e-3));
        let v: Vec<f64> = u.iter().enumerate().map(|(i, x)| x + 0.1 * i as f64).collect();
        let scaled: Vec<f64> = v.iter().map(|x| x * s).collect();
        let a = sin_angle(&u, &v).unwrap();
        let b = sin_angle(&u, &scaled).unwrap();
        prop_assert!((a - b).abs() <= 1e-12);
    }
}

/// Errors grow linearly with the noise level: averaged over noise draws,
/// `err_ab(1e-2) / err_ab(1e-3)` lies in `[5, 20]`.
#[test]
fn error_scales_linearly_with_noise() {
    for seed in 0..4 {
        let dims = vec![6, 7, 8, 5];
        let mean_err = |eps: f64| {
            (0..20)
                .map(|draw| {
                    let cfg = GeneratorConfig {
                        dims: dims.clone(),
                        seed,
                        eps,
                    };
                    let inst = generate(&cfg).unwrap();
                    let noisy = rankone::generator::perturb(&inst.exact, eps, 1000 + draw).unwrap();
                    let omega: Vec<_> = noisy.indices().cloned().collect();
                    let r = complete(&noisy, &CompletionOptions::default()).unwrap();
                    completion_errors(&dims, &omega, &inst.truth.factors, &r.factors, 1.0)
                        .unwrap()
                        .err_ab
                })
                .sum::<f64>()
                / 20.0
        };
        let ratio = mean_err(1e-2) / mean_err(1e-3);
        assert!((5.0..=20.0).contains(&ratio), "seed {seed}: ratio {ratio}");
    }
}

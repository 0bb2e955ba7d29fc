mod common;

use common::*;
use rankone::analysis::{is_determinable, is_extractable};
use rankone::completion::{complete, CompletionOptions, Status};
use rankone::linsys::{build_system, nullspace_dimension, smallest_singular, SolverOptions};
use rankone::metrics::sin_angle;

fn assert_parallel(u: &[f64], v: &[f64], tol: f64) {
    let s = sin_angle(u, v).unwrap();
    assert!(s <= tol, "sin = {s:e} for {u:?} vs {v:?}");
}

#[test]
fn seven_row_system_and_nullvector() {
    let a = seven_row();
    let b = build_system(&a.flatten(3).unwrap());
    let dense = b.to_dense_rows();
    assert_eq!(dense.len(), 7);
    for (row, expected) in dense.iter().zip(SEVEN_ROW_B3.iter()) {
        assert_eq!(row.as_slice(), expected.as_slice());
    }
    let t = smallest_singular(&b, &SolverOptions::default()).unwrap();
    assert!(t.sigma_min <= 1e-10);
    let s6 = 6f64.sqrt();
    for (x, e) in t.right_vector.iter().zip([1.0, -1.0, 1.0, 1.0, 1.0, -1.0]) {
        assert!((x - e / s6).abs() < 1e-8);
    }
    for k in [1, 2] {
        let b = build_system(&a.flatten(k).unwrap());
        assert_eq!(
            nullspace_dimension(&b, &SolverOptions::default()).unwrap(),
            2
        );
    }
}

#[test]
fn seven_row_is_determinable_through_mode_3() {
    let r = is_determinable(&seven_row(), &SolverOptions::default()).unwrap();
    assert!(r.determinable);
    assert_eq!(r.witness_chain.unwrap()[0].mode, 3);
}

#[test]
fn deep_chain_is_determinable() {
    let a = deep_chain();
    assert_eq!(a.len(), 33);
    let r = is_determinable(&a, &SolverOptions::default()).unwrap();
    assert!(r.determinable);
    assert_eq!(r.witness_chain.as_ref().unwrap().len(), 5);
    // The printed chain runs through modes 6, 5, 4, 3, each with a unique nullvector.
    let x = is_extractable(&a.flatten(6).unwrap(), &SolverOptions::default()).unwrap();
    assert!(x.extractable);
    let c = complete(&a, &CompletionOptions::default()).unwrap();
    assert!(c.fit_residual <= 1e-9);
}

#[test]
fn stalled_pattern_is_not_determinable() {
    let a = stalled_pattern();
    let dims: Vec<usize> = (1..=3)
        .map(|k| {
            nullspace_dimension(
                &build_system(&a.flatten(k).unwrap()),
                &SolverOptions::default(),
            )
            .unwrap()
        })
        .collect();
    assert_eq!(dims, vec![3, 3, 2]);
    assert!(
        !is_determinable(&a, &SolverOptions::default())
            .unwrap()
            .determinable
    );
}

#[test]
fn binary_order5_chain() {
    let r = complete(&binary_order5(), &CompletionOptions::default()).unwrap();
    assert_eq!(r.status, Status::Ok);
    for (level, n) in r.levels.iter().zip([6.0f64, 5.0, 4.0, 2.0]) {
        for v in level.reduced.values() {
            assert!((v.abs() - 1.0 / n.sqrt()).abs() < 1e-10);
        }
    }
    for u in &r.factors {
        assert_parallel(u, &[1.0, 1.0], 1e-8);
    }
}

#[test]
fn exact_order4_exact() {
    let a = exact_order4();
    let r = complete(&a, &CompletionOptions::default()).unwrap();
    assert_eq!(r.status, Status::Ok);
    assert!(r.fit_residual <= 1e-9, "{}", r.fit_residual);
    assert_parallel(&r.factors[0], &[1.0, 2.0, 3.0], 1e-8);
    assert_parallel(&r.factors[1], &[2.0, 3.0, 6.0], 1e-8);
    assert_parallel(&r.factors[2], &[1.0, 2.0, 2.0, 1.0, 3.0], 1e-8);
    assert_parallel(&r.factors[3], &[1.0; 9], 1e-8);
}

#[test]
fn noisy_order3_noisy() {
    let a = noisy_order3();
    let r = complete(&a, &CompletionOptions::default()).unwrap();
    assert!(r.fit_residual <= 1e-10, "{}", r.fit_residual);
    let d = distance_to_ones(&a, &r.factors);
    assert!((d - 0.2382).abs() <= 1e-3, "{d}");
    // The printed factors, to four digits.
    assert_parallel(&r.factors[0], &[0.5722, 0.4697, 0.6723], 1e-3);
}

#[test]
fn noisy_order5_noisy() {
    let a = noisy_order5();
    let r = complete(&a, &CompletionOptions::default()).unwrap();
    let d = distance_to_ones(&a, &r.factors);
    assert!((d - 2.2e-3).abs() <= 5e-4, "{d}");
    let rt = d / 3.2e-3;
    assert!((0.5..=0.9).contains(&rt), "{rt}");
}

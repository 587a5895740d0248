//! Property tests for the evidence pipeline against an independent
//! straight-line reimplementation, plus its structural invariants.

use dtl_core::evidence::{
    assignment_from_confusion, class_assignments, ratio_matrices, CombinationRule,
    ConfusionMatrix,
};
use proptest::prelude::*;

/// Straight-line reference: counts → ratios → diagonal assignments →
/// orthogonal sum → cost. Kept deliberately independent of the library
/// code paths (plain nested loops over `Vec<Vec<u64>>`).
fn oracle(rows: &[Vec<u64>]) -> (Vec<f64>, f64) {
    let n = rows.len();
    let mut recall = vec![vec![0.0f64; n]; n];
    let mut precision = vec![vec![0.0f64; n]; n];
    for j in 0..n {
        let mut col = 0u64;
        for row in rows {
            col += row[j];
        }
        if col > 0 {
            for i in 0..n {
                recall[i][j] = rows[i][j] as f64 / col as f64;
            }
        }
    }
    for i in 0..n {
        let row: u64 = rows[i].iter().sum();
        if row > 0 {
            for j in 0..n {
                precision[i][j] = rows[i][j] as f64 / row as f64;
            }
        }
    }
    let mut recall_diag = 0.0;
    let mut precision_diag = 0.0;
    for i in 0..n {
        recall_diag += recall[i][i];
        precision_diag += precision[i][i];
    }
    if recall_diag <= 0.0 || precision_diag <= 0.0 {
        return (vec![0.0; n], 0.0);
    }
    let mut agreement = 0.0;
    let mut products = vec![0.0; n];
    for i in 0..n {
        let r = recall[i][i] / recall_diag;
        let s = precision[i][i] / precision_diag;
        products[i] = r * s;
        agreement += r * s;
    }
    let denominator = (1.0 - agreement).max(1e-12);
    let masses: Vec<f64> = products.iter().map(|p| p / denominator).collect();
    let gamma = masses.iter().map(|m| m * m).sum::<f64>().sqrt();
    (masses, gamma)
}

fn arb_confusion(max_class: usize) -> impl Strategy<Value = Vec<Vec<u64>>> {
    (2..=max_class).prop_flat_map(|n| {
        proptest::collection::vec(proptest::collection::vec(0u64..=20, n), n)
            .prop_filter("at least one positive entry", |rows| {
                rows.iter().flatten().any(|&c| c > 0)
            })
    })
}

fn arb_nondegenerate(max_class: usize) -> impl Strategy<Value = Vec<Vec<u64>>> {
    arb_confusion(max_class).prop_filter("diagonal not all zero", |rows| {
        rows.iter().enumerate().any(|(i, r)| r[i] > 0)
    })
}

fn pipeline(rows: &[Vec<u64>]) -> (Vec<f64>, f64) {
    let cm = ConfusionMatrix::from_rows(rows).unwrap();
    let theta = assignment_from_confusion(&cm, CombinationRule::default()).unwrap();
    let gamma = theta.cost();
    (theta.masses().to_vec(), gamma)
}

proptest! {
    #[test]
    fn matches_straight_line_oracle(rows in arb_confusion(5)) {
        let (theta, gamma) = pipeline(&rows);
        let (expected_theta, expected_gamma) = oracle(&rows);
        for (a, b) in theta.iter().zip(&expected_theta) {
            prop_assert!((a - b).abs() < 1e-10, "mass {a} vs oracle {b}");
        }
        prop_assert!((gamma - expected_gamma).abs() < 1e-10);
    }

    #[test]
    fn scale_invariant_in_sample_counts(rows in arb_nondegenerate(5)) {
        let (theta, gamma) = pipeline(&rows);
        for k in [2u64, 3, 7] {
            let scaled: Vec<Vec<u64>> =
                rows.iter().map(|r| r.iter().map(|&c| c * k).collect()).collect();
            let (theta_k, gamma_k) = pipeline(&scaled);
            for (a, b) in theta.iter().zip(&theta_k) {
                prop_assert!((a - b).abs() < 1e-12);
            }
            prop_assert!((gamma - gamma_k).abs() < 1e-12);
        }
    }

    #[test]
    fn permutation_equivariant(rows in arb_nondegenerate(5), perm_seed in 0u64..1000) {
        let n = rows.len();
        // Deterministic permutation from the seed.
        let mut perm: Vec<usize> = (0..n).collect();
        let mut state = perm_seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(1);
        for i in (1..n).rev() {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let j = (state >> 33) as usize % (i + 1);
            perm.swap(i, j);
        }
        let mut permuted = vec![vec![0u64; n]; n];
        for i in 0..n {
            for j in 0..n {
                permuted[perm[i]][perm[j]] = rows[i][j];
            }
        }
        let (theta, gamma) = pipeline(&rows);
        let (theta_p, gamma_p) = pipeline(&permuted);
        for i in 0..n {
            prop_assert!((theta[i] - theta_p[perm[i]]).abs() < 1e-12);
        }
        prop_assert!((gamma - gamma_p).abs() < 1e-12);
    }

    #[test]
    fn diagonal_increase_does_not_decrease_mass(
        rows in arb_nondegenerate(5),
        class_pick in 0usize..5,
        bump in 1u64..=5,
    ) {
        let n = rows.len();
        let i = class_pick % n;
        let mut bumped = rows.clone();
        bumped[i][i] += bump;
        let (theta, _) = pipeline(&rows);
        let (theta_b, _) = pipeline(&bumped);
        prop_assert!(
            theta_b[i] >= theta[i] - 1e-12,
            "mass {} dropped to {} after diagonal bump",
            theta[i],
            theta_b[i]
        );
    }

    #[test]
    fn assignments_are_normalized(rows in arb_nondegenerate(5)) {
        let cm = ConfusionMatrix::from_rows(&rows).unwrap();
        let (r, s) = class_assignments(&ratio_matrices(&cm)).unwrap();
        prop_assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!((s.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(r.iter().chain(&s).all(|&v| v >= 0.0));
    }

    #[test]
    fn masses_nonnegative_and_finite(rows in arb_confusion(5)) {
        let (theta, gamma) = pipeline(&rows);
        prop_assert!(theta.iter().all(|&m| m >= 0.0 && m.is_finite()));
        prop_assert!(gamma >= 0.0 && gamma.is_finite());
    }
}

#[test]
fn degenerate_diagonal_yields_zero_both_ways() {
    let rows = vec![vec![0, 4, 1], vec![2, 0, 3], vec![5, 1, 0]];
    let (theta, gamma) = pipeline(&rows);
    assert!(theta.iter().all(|&m| m == 0.0));
    assert_eq!(gamma, 0.0);
    let (otheta, ogamma) = oracle(&rows);
    assert_eq!(theta, otheta);
    assert_eq!(gamma, ogamma);
}

//! Basic probability assignment from confusion matrices.
//!
//! A classifier's confusion matrix is reduced to recall/precision ratio
//! matrices, the per-class diagonal assignments, and a fused mass vector
//! combined by an orthogonal sum; the Euclidean norm of that vector is the
//! classifier's scalar cost used to scale gradient updates.
//!
//! All operations are pure functions of immutable inputs and may be called
//! from any number of workers in parallel.

use crate::datasets::LabelledDataset;
use crate::error::{Error, Result};
use crate::nn::{self, Network};

/// Square count matrix: `counts[i][j]` is the number of samples of actual
/// class `i` assigned label `j`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    /// Tally predictions against labels.
    pub fn from_predictions(
        predictions: &[usize],
        labels: &[usize],
        class_count: usize,
    ) -> Result<Self> {
        if predictions.len() != labels.len() {
            return Err(Error::SequenceLengthMismatch {
                predictions: predictions.len(),
                labels: labels.len(),
            });
        }
        if predictions.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let mut counts = vec![0u64; class_count * class_count];
        for (&p, &l) in predictions.iter().zip(labels) {
            if p >= class_count || l >= class_count {
                return Err(Error::LabelOutOfRange {
                    label: p.max(l),
                    classes: class_count,
                });
            }
            counts[l * class_count + p] += 1;
        }
        Ok(Self {
            classes: class_count,
            counts,
        })
    }

    /// Build from explicit rows (actual class × predicted label).
    pub fn from_rows(rows: &[Vec<u64>]) -> Result<Self> {
        let classes = rows.len();
        if classes == 0 || rows.iter().any(|r| r.len() != classes) {
            return Err(Error::InvalidArgument(
                "confusion matrix must be square and non-empty".into(),
            ));
        }
        let counts: Vec<u64> = rows.iter().flatten().copied().collect();
        if counts.iter().all(|&c| c == 0) {
            return Err(Error::InvalidArgument(
                "confusion matrix must have at least one positive entry".into(),
            ));
        }
        Ok(Self { classes, counts })
    }

    pub fn class_count(&self) -> usize {
        self.classes
    }

    pub fn count(&self, actual: usize, predicted: usize) -> u64 {
        self.counts[actual * self.classes + predicted]
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    /// True iff no sample was ever classified correctly.
    pub fn zero_diagonal(&self) -> bool {
        (0..self.classes).all(|i| self.count(i, i) == 0)
    }
}

/// Recall ratios (column-normalized) and precision ratios (row-normalized),
/// both class_count×class_count with the 0/0 := 0 convention.
#[derive(Debug, Clone, PartialEq)]
pub struct RatioMatrices {
    classes: usize,
    recall: Vec<f64>,
    precision: Vec<f64>,
}

impl RatioMatrices {
    pub fn class_count(&self) -> usize {
        self.classes
    }

    pub fn recall(&self, actual: usize, predicted: usize) -> f64 {
        self.recall[actual * self.classes + predicted]
    }

    pub fn precision(&self, actual: usize, predicted: usize) -> f64 {
        self.precision[actual * self.classes + predicted]
    }
}

/// Column-normalize counts into recall ratios and row-normalize into
/// precision ratios. Zero denominators yield zero entries.
pub fn ratio_matrices(cm: &ConfusionMatrix) -> RatioMatrices {
    let n = cm.class_count();
    let mut recall = vec![0.0f64; n * n];
    let mut precision = vec![0.0f64; n * n];
    for j in 0..n {
        let col_sum: u64 = (0..n).map(|i| cm.count(i, j)).sum();
        if col_sum > 0 {
            for i in 0..n {
                recall[i * n + j] = cm.count(i, j) as f64 / col_sum as f64;
            }
        }
    }
    for i in 0..n {
        let row_sum: u64 = (0..n).map(|j| cm.count(i, j)).sum();
        if row_sum > 0 {
            for j in 0..n {
                precision[i * n + j] = cm.count(i, j) as f64 / row_sum as f64;
            }
        }
    }
    RatioMatrices {
        classes: n,
        recall,
        precision,
    }
}

/// Per-class recall and precision assignments: each diagonal ratio divided
/// by the diagonal sum of its matrix, so each vector sums to one.
///
/// A classifier that is never correct on any class has no diagonal evidence;
/// that case is a [`Error::DegenerateEvidence`] which callers map to an
/// all-zero assignment and a zero cost.
pub fn class_assignments(rm: &RatioMatrices) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = rm.class_count();
    let recall_diag_sum: f64 = (0..n).map(|i| rm.recall(i, i)).sum();
    let precision_diag_sum: f64 = (0..n).map(|i| rm.precision(i, i)).sum();
    if recall_diag_sum <= 0.0 || precision_diag_sum <= 0.0 {
        return Err(Error::DegenerateEvidence);
    }
    let recall_assignment = (0..n).map(|i| rm.recall(i, i) / recall_diag_sum).collect();
    let precision_assignment = (0..n)
        .map(|i| rm.precision(i, i) / precision_diag_sum)
        .collect();
    Ok((recall_assignment, precision_assignment))
}

/// How the orthogonal sum normalizes the fused masses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CombinationRule {
    /// Divide each product by `1 − Σ_j R_j·S_j` (the default).
    #[default]
    ComplementOfAgreement,
    /// Divide each product by `Σ_j R_j·S_j`, renormalizing the agreeing
    /// mass to a probability vector (the classical singleton-frame rule).
    AgreementRenormalized,
}

/// Denominator floor for the orthogonal sum.
pub const COMBINATION_EPSILON: f64 = 1e-12;

/// Fused per-class masses `M_i`, plus a warning flag set when the
/// combination denominator had to be clamped from ≤ 0 up to
/// [`COMBINATION_EPSILON`] (near-total agreement of the two assignments).
#[derive(Debug, Clone, PartialEq)]
pub struct AssignmentVector {
    masses: Vec<f64>,
    near_total_agreement: bool,
}

impl AssignmentVector {
    pub fn zero(class_count: usize) -> Self {
        Self {
            masses: vec![0.0; class_count],
            near_total_agreement: false,
        }
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn class_count(&self) -> usize {
        self.masses.len()
    }

    pub fn near_total_agreement(&self) -> bool {
        self.near_total_agreement
    }

    pub fn is_zero(&self) -> bool {
        self.masses.iter().all(|&m| m == 0.0)
    }

    /// Euclidean norm of the masses: the scalar cost of the classifier.
    pub fn cost(&self) -> f64 {
        self.masses.iter().map(|m| m * m).sum::<f64>().sqrt()
    }
}

/// Orthogonal sum of the recall and precision assignments:
/// `M_i = R_i·S_i / (1 − Σ_j R_j·S_j)` under the default rule, with the
/// denominator clamped below by [`COMBINATION_EPSILON`].
pub fn dempster_combine(
    recall_assignment: &[f64],
    precision_assignment: &[f64],
) -> Result<AssignmentVector> {
    dempster_combine_with(
        recall_assignment,
        precision_assignment,
        CombinationRule::default(),
    )
}

pub fn dempster_combine_with(
    recall_assignment: &[f64],
    precision_assignment: &[f64],
    rule: CombinationRule,
) -> Result<AssignmentVector> {
    if recall_assignment.len() != precision_assignment.len() {
        return Err(Error::SequenceLengthMismatch {
            predictions: recall_assignment.len(),
            labels: precision_assignment.len(),
        });
    }
    for v in [recall_assignment, precision_assignment] {
        let sum: f64 = v.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "assignment must sum to 1 within 1e-9, got {sum}"
            )));
        }
    }
    let products: Vec<f64> = recall_assignment
        .iter()
        .zip(precision_assignment)
        .map(|(r, s)| r * s)
        .collect();
    let agreement: f64 = products.iter().sum();
    let raw_denominator = match rule {
        CombinationRule::ComplementOfAgreement => 1.0 - agreement,
        CombinationRule::AgreementRenormalized => agreement,
    };
    let near_total_agreement = raw_denominator <= 0.0;
    let denominator = raw_denominator.max(COMBINATION_EPSILON);
    let masses = products.iter().map(|p| p / denominator).collect();
    Ok(AssignmentVector {
        masses,
        near_total_agreement,
    })
}

/// Full pipeline from a confusion matrix to the fused assignment vector.
/// Degenerate evidence (all-zero diagonal) yields the all-zero vector.
pub fn assignment_from_confusion(
    cm: &ConfusionMatrix,
    rule: CombinationRule,
) -> Result<AssignmentVector> {
    let rm = ratio_matrices(cm);
    match class_assignments(&rm) {
        Ok((recall, precision)) => dempster_combine_with(&recall, &precision, rule),
        Err(Error::DegenerateEvidence) => Ok(AssignmentVector::zero(cm.class_count())),
        Err(e) => Err(e),
    }
}

/// Which labelled split the assignment is observed on. Labels are required,
/// so this is never the test set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BpaSource {
    #[default]
    Train,
    TrainPlusValidation,
}

/// Basic probability assignment of a classifier on a labelled set: tally the
/// confusion matrix, form ratio and assignment vectors, and fuse them.
pub fn bpa(classifier: &Network, data: &LabelledDataset) -> Result<AssignmentVector> {
    bpa_with(classifier, data, CombinationRule::default())
}

pub fn bpa_with(
    classifier: &Network,
    data: &LabelledDataset,
    rule: CombinationRule,
) -> Result<AssignmentVector> {
    if classifier.class_count() != data.class_count() {
        return Err(Error::ClassCountMismatch {
            network: classifier.class_count(),
            dataset: data.class_count(),
        });
    }
    let predictions = nn::predict(classifier, data)?;
    let cm = ConfusionMatrix::from_predictions(&predictions, data.labels(), data.class_count())?;
    assignment_from_confusion(&cm, rule)
}

/// Scalar cost of one classifier: the Euclidean norm of its assignment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterCost {
    pub gamma: f64,
}

/// Per-classifier costs `gamma_k = ‖Θ_k‖₂`.
pub fn filter_costs(assignments: &[AssignmentVector]) -> Vec<FilterCost> {
    assignments
        .iter()
        .map(|a| FilterCost { gamma: a.cost() })
        .collect()
}

/// [`filter_costs`] rescaled so the largest cost is 1. All-zero inputs are
/// returned unchanged.
pub fn filter_costs_rescaled(assignments: &[AssignmentVector]) -> Vec<FilterCost> {
    let mut costs = filter_costs(assignments);
    let max = costs.iter().map(|c| c.gamma).fold(0.0f64, f64::max);
    if max > 0.0 {
        for c in &mut costs {
            c.gamma /= max;
        }
    }
    costs
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_classifier_is_diagonal() {
        let cm = ConfusionMatrix::from_predictions(&[0, 1], &[0, 1], 2).unwrap();
        assert_eq!(cm.counts(), &[1, 0, 0, 1]);
    }

    #[test]
    fn all_wrong_classifier() {
        let cm = ConfusionMatrix::from_predictions(&[1, 1], &[0, 0], 2).unwrap();
        assert_eq!(cm.counts(), &[0, 2, 0, 0]);
        assert!(cm.zero_diagonal());
    }

    #[test]
    fn tally_matches_brute_force() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let preds: Vec<usize> = (0..200).map(|_| rng.gen_range(0..4)).collect();
        let labels: Vec<usize> = (0..200).map(|_| rng.gen_range(0..4)).collect();
        let cm = ConfusionMatrix::from_predictions(&preds, &labels, 4).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let expected = preds
                    .iter()
                    .zip(&labels)
                    .filter(|&(&p, &l)| l == i && p == j)
                    .count() as u64;
                assert_eq!(cm.count(i, j), expected);
            }
        }
    }

    #[test]
    fn tally_rejects_bad_input() {
        assert!(matches!(
            ConfusionMatrix::from_predictions(&[0], &[0, 1], 2),
            Err(Error::SequenceLengthMismatch { .. })
        ));
        assert!(matches!(
            ConfusionMatrix::from_predictions(&[2], &[0], 2),
            Err(Error::LabelOutOfRange { .. })
        ));
    }

    #[test]
    fn ratios_identity_for_diagonal_counts() {
        let cm = ConfusionMatrix::from_rows(&[vec![5, 0], vec![0, 5]]).unwrap();
        let rm = ratio_matrices(&cm);
        for i in 0..2 {
            for j in 0..2 {
                let expected = if i == j { 1.0 } else { 0.0 };
                assert_eq!(rm.recall(i, j), expected);
                assert_eq!(rm.precision(i, j), expected);
            }
        }
    }

    #[test]
    fn ratios_hand_computed() {
        let cm = ConfusionMatrix::from_rows(&[vec![3, 1], vec![2, 4]]).unwrap();
        let rm = ratio_matrices(&cm);
        let tol = 1e-12;
        assert!((rm.recall(0, 0) - 0.6).abs() < tol);
        assert!((rm.recall(0, 1) - 0.2).abs() < tol);
        assert!((rm.recall(1, 0) - 0.4).abs() < tol);
        assert!((rm.recall(1, 1) - 0.8).abs() < tol);
        assert!((rm.precision(0, 0) - 0.75).abs() < tol);
        assert!((rm.precision(0, 1) - 0.25).abs() < tol);
        assert!((rm.precision(1, 0) - 1.0 / 3.0).abs() < tol);
        assert!((rm.precision(1, 1) - 2.0 / 3.0).abs() < tol);
    }

    #[test]
    fn zero_column_gives_zero_ratios() {
        // Label 0 never predicted.
        let cm = ConfusionMatrix::from_rows(&[vec![0, 3], vec![0, 4]]).unwrap();
        let rm = ratio_matrices(&cm);
        assert_eq!(rm.recall(0, 0), 0.0);
        assert_eq!(rm.recall(1, 0), 0.0);
    }

    #[test]
    fn assignments_sum_to_one() {
        let cm = ConfusionMatrix::from_rows(&[vec![3, 1], vec![2, 4]]).unwrap();
        let (r, s) = class_assignments(&ratio_matrices(&cm)).unwrap();
        assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((s.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((r[0] - 0.6 / 1.4).abs() < 1e-3);
        assert!((r[1] - 0.8 / 1.4).abs() < 1e-3);
        assert!((s[0] - 0.5294).abs() < 1e-3);
        assert!((s[1] - 0.4706).abs() < 1e-3);
    }

    #[test]
    fn identity_ratios_give_uniform_assignments() {
        let cm = ConfusionMatrix::from_rows(&[vec![7, 0], vec![0, 7]]).unwrap();
        let (r, s) = class_assignments(&ratio_matrices(&cm)).unwrap();
        assert_eq!(r, vec![0.5, 0.5]);
        assert_eq!(s, vec![0.5, 0.5]);
    }

    #[test]
    fn zero_diagonal_is_degenerate() {
        let cm = ConfusionMatrix::from_rows(&[vec![0, 5], vec![5, 0]]).unwrap();
        assert!(matches!(
            class_assignments(&ratio_matrices(&cm)),
            Err(Error::DegenerateEvidence)
        ));
        let theta = assignment_from_confusion(&cm, CombinationRule::default()).unwrap();
        assert!(theta.is_zero());
        assert_eq!(filter_costs(&[theta])[0].gamma, 0.0);
    }

    #[test]
    fn combine_uniform_two_class() {
        let theta = dempster_combine(&[0.5, 0.5], &[0.5, 0.5]).unwrap();
        assert_eq!(theta.masses(), &[0.5, 0.5]);
        assert!(!theta.near_total_agreement());
    }

    #[test]
    fn combine_total_conflict_gives_zero_masses() {
        let theta = dempster_combine(&[1.0, 0.0], &[0.0, 1.0]).unwrap();
        assert_eq!(theta.masses(), &[0.0, 0.0]);
        assert!(theta.is_zero());
    }

    #[test]
    fn combine_hand_computed_fixture() {
        let cm = ConfusionMatrix::from_rows(&[vec![3, 1], vec![2, 4]]).unwrap();
        let theta = assignment_from_confusion(&cm, CombinationRule::default()).unwrap();
        assert!((theta.masses()[0] - 0.4501).abs() < 1e-3);
        assert!((theta.masses()[1] - 0.5333).abs() < 1e-3);
        assert!((theta.cost() - 0.6979).abs() < 1e-3);
    }

    #[test]
    fn combine_clamps_total_agreement() {
        // Both assignments concentrate on class 0: Σ R·S = 1 so the default
        // denominator is 0 and must be clamped, flagging the result.
        let theta = dempster_combine(&[1.0, 0.0], &[1.0, 0.0]).unwrap();
        assert!(theta.near_total_agreement());
        assert!(theta.masses()[0] > 0.0);
        assert!(theta.masses().iter().all(|m| m.is_finite()));
    }

    #[test]
    fn renormalized_rule_yields_probability_vector() {
        let cm = ConfusionMatrix::from_rows(&[vec![3, 1], vec![2, 4]]).unwrap();
        let theta = assignment_from_confusion(&cm, CombinationRule::AgreementRenormalized).unwrap();
        assert!((theta.masses().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        // 27/59 and 32/59 from the exact products.
        assert!((theta.masses()[0] - 27.0 / 59.0).abs() < 1e-12);
        assert!((theta.masses()[1] - 32.0 / 59.0).abs() < 1e-12);
    }

    #[test]
    fn combine_rejects_non_normalized_inputs() {
        assert!(dempster_combine(&[0.6, 0.6], &[0.5, 0.5]).is_err());
        assert!(dempster_combine(&[1.0], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn cost_hand_values() {
        let uniform = AssignmentVector {
            masses: vec![0.5, 0.5],
            near_total_agreement: false,
        };
        assert!((uniform.cost() - 0.5f64.sqrt()).abs() < 1e-12);
        let costs = filter_costs(&[uniform.clone(), AssignmentVector::zero(2)]);
        assert!((costs[0].gamma - 0.7071).abs() < 1e-4);
        assert_eq!(costs[1].gamma, 0.0);
    }

    #[test]
    fn rescaled_costs_peak_at_one() {
        let a = AssignmentVector {
            masses: vec![0.3, 0.1],
            near_total_agreement: false,
        };
        let b = AssignmentVector {
            masses: vec![0.6, 0.2],
            near_total_agreement: false,
        };
        let costs = filter_costs_rescaled(&[a, b]);
        assert!((costs[1].gamma - 1.0).abs() < 1e-12);
        assert!((costs[0].gamma - 0.5).abs() < 1e-12);

        let zeros = filter_costs_rescaled(&[AssignmentVector::zero(2)]);
        assert_eq!(zeros[0].gamma, 0.0);
    }

    #[test]
    fn bpa_perfect_classifier_on_balanced_data() {
        // Identity-ish predictor: dense with large diagonal over 2 flat pixels.
        use crate::nn::{Layer, Network};
        use crate::tensor::Tensor;
        let net = Network::new(
            [1, 1, 2],
            vec![
                Layer::Flatten,
                Layer::Dense {
                    weights: Tensor::new(vec![2, 2], vec![10.0, 0.0, 0.0, 10.0]).unwrap(),
                    biases: Tensor::zeros(vec![2]),
                },
                Layer::Softmax,
            ],
        )
        .unwrap();
        let images = Tensor::new(
            vec![4, 1, 1, 2],
            vec![1.0, 0.0, 0.0, 1.0, 1.0, 0.1, 0.1, 1.0],
        )
        .unwrap();
        let data = LabelledDataset::new(images, vec![0, 1, 0, 1], 2).unwrap();
        let theta = bpa(&net, &data).unwrap();
        assert!((theta.masses()[0] - 0.5).abs() < 1e-12);
        assert!((theta.masses()[1] - 0.5).abs() < 1e-12);
        assert!((theta.cost() - 0.7071).abs() < 1e-4);
    }
}

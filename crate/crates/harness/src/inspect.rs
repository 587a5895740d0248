//! Per-filter evidence dumps: confusion matrix, recall/precision
//! assignments, fused masses and the scalar cost, as aligned text or CSV.

use dtl_core::datasets::LabelledDataset;
use dtl_core::error::Error as CoreError;
use dtl_core::evidence::{
    self, AssignmentVector, CombinationRule, ConfusionMatrix,
};
use dtl_core::nn;
use dtl_core::transfer::SingleFilterNet;

use crate::error::Result;

#[derive(Debug, Clone)]
pub struct FilterEvidence {
    pub filter_index: usize,
    pub confusion: ConfusionMatrix,
    /// Empty when the evidence is degenerate (all-zero diagonal).
    pub recall_assignment: Vec<f64>,
    pub precision_assignment: Vec<f64>,
    pub theta: AssignmentVector,
    pub gamma: f64,
}

impl FilterEvidence {
    pub fn degenerate(&self) -> bool {
        self.recall_assignment.is_empty()
    }
}

/// Evidence of one single-filter network on a labelled set.
pub fn filter_evidence(
    sf: &SingleFilterNet,
    data: &LabelledDataset,
    rule: CombinationRule,
) -> Result<FilterEvidence> {
    let predictions = nn::predict(&sf.net, data).map_err(crate::error::HarnessError::Core)?;
    let confusion =
        ConfusionMatrix::from_predictions(&predictions, data.labels(), data.class_count())
            .map_err(crate::error::HarnessError::Core)?;
    let rm = evidence::ratio_matrices(&confusion);
    let (recall_assignment, precision_assignment, theta) = match evidence::class_assignments(&rm) {
        Ok((r, s)) => {
            let theta = evidence::dempster_combine_with(&r, &s, rule)
                .map_err(crate::error::HarnessError::Core)?;
            (r, s, theta)
        }
        Err(CoreError::DegenerateEvidence) => (
            Vec::new(),
            Vec::new(),
            AssignmentVector::zero(data.class_count()),
        ),
        Err(e) => return Err(crate::error::HarnessError::Core(e)),
    };
    let gamma = theta.cost();
    Ok(FilterEvidence {
        filter_index: sf.filter_index,
        confusion,
        recall_assignment,
        precision_assignment,
        theta,
        gamma,
    })
}

fn fmt_vec(values: &[f64]) -> String {
    let inner: Vec<String> = values.iter().map(|v| format!("{v:.4}")).collect();
    format!("[{}]", inner.join(", "))
}

pub fn render_text(evidence: &[FilterEvidence]) -> String {
    let mut out = String::new();
    for ev in evidence {
        let n = ev.confusion.class_count();
        out.push_str(&format!("filter {:<3} gamma = {:.4}", ev.filter_index, ev.gamma));
        if ev.degenerate() {
            out.push_str("  (degenerate evidence: zero diagonal)");
        }
        if ev.theta.near_total_agreement() {
            out.push_str("  (near-total agreement: denominator clamped)");
        }
        out.push('\n');
        out.push_str("  confusion (rows: actual, cols: predicted)\n");
        for i in 0..n {
            out.push_str("   ");
            for j in 0..n {
                out.push_str(&format!(" {:>6}", ev.confusion.count(i, j)));
            }
            out.push('\n');
        }
        if !ev.degenerate() {
            out.push_str(&format!("  R     = {}\n", fmt_vec(&ev.recall_assignment)));
            out.push_str(&format!("  S     = {}\n", fmt_vec(&ev.precision_assignment)));
        }
        out.push_str(&format!("  theta = {}\n\n", fmt_vec(ev.theta.masses())));
    }
    out
}

/// One row per (filter, class): assignments, mass, cost, then the confusion
/// counts of that actual class.
pub fn render_csv(evidence: &[FilterEvidence]) -> String {
    let classes = evidence
        .first()
        .map_or(0, |ev| ev.confusion.class_count());
    let mut out = String::from("filter,class,recall_assignment,precision_assignment,mass,gamma");
    for j in 0..classes {
        out.push_str(&format!(",count_{j}"));
    }
    out.push('\n');
    for ev in evidence {
        let n = ev.confusion.class_count();
        for i in 0..n {
            let (r, s) = if ev.degenerate() {
                (0.0, 0.0)
            } else {
                (ev.recall_assignment[i], ev.precision_assignment[i])
            };
            out.push_str(&format!(
                "{},{},{:.6},{:.6},{:.6},{:.6}",
                ev.filter_index,
                i,
                r,
                s,
                ev.theta.masses()[i],
                ev.gamma
            ));
            for j in 0..n {
                out.push_str(&format!(",{}", ev.confusion.count(i, j)));
            }
            out.push('\n');
        }
    }
    out
}

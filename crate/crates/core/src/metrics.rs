//! Confusion matrices and exact / plus-or-minus-one metrics.
//!
//! Rows are true classes, columns predicted classes, both 1-based in the
//! public API. A prediction `j` for true class `i` counts as correct at
//! plus-or-minus one when `|i - j| <= 1`.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    k: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            counts: vec![0; k * k],
        }
    }

    pub fn from_rows(rows: &[Vec<u64>]) -> Result<Self> {
        let k = rows.len();
        if k == 0 || rows.iter().any(|r| r.len() != k) {
            return Err(Error::InvalidParameter("confusion matrix must be square and non-empty".into()));
        }
        Ok(Self {
            k,
            counts: rows.iter().flatten().copied().collect(),
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    fn check(&self, class: usize) -> Result<usize> {
        if class == 0 || class > self.k {
            return Err(Error::ClassOutOfRange { class, k: self.k });
        }
        Ok(class - 1)
    }

    pub fn accumulate(&mut self, true_class: usize, predicted_class: usize) -> Result<()> {
        let i = self.check(true_class)?;
        let j = self.check(predicted_class)?;
        self.counts[i * self.k + j] += 1;
        Ok(())
    }

    /// Count for 1-based `(true, predicted)`.
    pub fn get(&self, true_class: usize, predicted_class: usize) -> u64 {
        self.at(true_class - 1, predicted_class - 1)
    }

    fn at(&self, i: usize, j: usize) -> u64 {
        self.counts[i * self.k + j]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn row_total(&self, true_class: usize) -> u64 {
        let i = true_class - 1;
        self.counts[i * self.k..(i + 1) * self.k].iter().sum()
    }

    pub fn rows(&self) -> Vec<Vec<u64>> {
        self.counts.chunks(self.k).map(<[u64]>::to_vec).collect()
    }

    /// Elementwise sum; partial matrices from workers merge in any order.
    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.k != self.k {
            return Err(Error::ShapeMismatch {
                expected: self.k,
                actual: other.k,
            });
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }

    /// CSV with a header row `true\pred,1,..,K` and one row per true class.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("true\\pred");
        for j in 1..=self.k {
            out.push_str(&format!(",{j}"));
        }
        out.push('\n');
        for (i, row) in self.rows().iter().enumerate() {
            out.push_str(&(i + 1).to_string());
            for c in row {
                out.push_str(&format!(",{c}"));
            }
            out.push('\n');
        }
        out
    }

    fn nonempty_total(&self) -> Result<f64> {
        match self.total() {
            0 => Err(Error::EmptyConfusion),
            n => Ok(n as f64),
        }
    }

    /// Sum over columns `c-1..=c+1` (existing ones) of row `r`, 0-based.
    fn band(&self, r: usize, c: usize) -> u64 {
        (c.saturating_sub(1)..=(c + 1).min(self.k - 1))
            .map(|j| self.at(r, j))
            .sum()
    }
}

pub fn acc(cm: &ConfusionMatrix) -> Result<f64> {
    let n = cm.nonempty_total()?;
    Ok((0..cm.k).map(|i| cm.at(i, i)).sum::<u64>() as f64 / n)
}

pub fn acc_pm1(cm: &ConfusionMatrix) -> Result<f64> {
    let n = cm.nonempty_total()?;
    Ok((0..cm.k).map(|i| cm.band(i, i)).sum::<u64>() as f64 / n)
}

/// Which cells count as "correct for class k" in [`prf_pm1_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pm1Convention {
    /// `correct_k = sum_{|j-k|<=1} m(k, j)`: true class `k`, predicted within one.
    /// Recall uses `N_k`, the row total.
    #[default]
    RowBand,
    /// `correct_k` sums the 3x3 block of cells around `(k, k)`; recall divides
    /// by the total of rows `k-1..=k+1`. Reproduces the tridiagonal worked
    /// example usually quoted for these metrics.
    Neighborhood,
}

/// Plus-or-minus-one recall, precision and F1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrfPm1 {
    pub recall_mean: f64,
    pub precision_mean: f64,
    pub f1: f64,
    /// `None` where the denominator is zero; such classes are left out of the means.
    pub recall: Vec<Option<f64>>,
    pub precision: Vec<Option<f64>>,
}

pub fn prf_pm1(cm: &ConfusionMatrix) -> Result<PrfPm1> {
    prf_pm1_with(cm, Pm1Convention::RowBand)
}

pub fn prf_pm1_with(cm: &ConfusionMatrix, convention: Pm1Convention) -> Result<PrfPm1> {
    cm.nonempty_total()?;
    let k = cm.k;
    let nb = |c: usize| c.saturating_sub(1)..=(c + 1).min(k - 1);
    let col_total = |j: usize| (0..k).map(|i| cm.at(i, j)).sum::<u64>();
    let row_total = |i: usize| (0..k).map(|j| cm.at(i, j)).sum::<u64>();

    let mut recall = Vec::with_capacity(k);
    let mut precision = Vec::with_capacity(k);
    for c in 0..k {
        let (correct, truth) = match convention {
            Pm1Convention::RowBand => (cm.band(c, c), row_total(c)),
            Pm1Convention::Neighborhood => (
                nb(c).map(|i| nb(c).map(|j| cm.at(i, j)).sum::<u64>()).sum(),
                nb(c).map(row_total).sum(),
            ),
        };
        let predicted: u64 = nb(c).map(col_total).sum();
        recall.push((truth > 0).then(|| correct as f64 / truth as f64));
        precision.push((predicted > 0).then(|| correct as f64 / predicted as f64));
    }
    let mean = |v: &[Option<f64>], what: &str| {
        let present: Vec<f64> = v.iter().flatten().copied().collect();
        if present.len() < v.len() {
            log::warn!(
                "{} of {} classes have no {what} denominator and are skipped",
                v.len() - present.len(),
                v.len()
            );
        }
        if present.is_empty() {
            0.0
        } else {
            present.iter().sum::<f64>() / present.len() as f64
        }
    };
    let recall_mean = mean(&recall, "recall");
    let precision_mean = mean(&precision, "precision");
    let f1 = if recall_mean + precision_mean > 0.0 {
        2.0 * recall_mean * precision_mean / (recall_mean + precision_mean)
    } else {
        0.0
    };
    Ok(PrfPm1 {
        recall_mean,
        precision_mean,
        f1,
        recall,
        precision,
    })
}

/// The five headline numbers of an evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub acc: f64,
    pub acc_pm1: f64,
    pub recall_pm1: f64,
    pub precision_pm1: f64,
    pub f1_pm1: f64,
}

impl MetricSummary {
    pub fn from_confusion(cm: &ConfusionMatrix) -> Result<Self> {
        let prf = prf_pm1(cm)?;
        Ok(Self {
            acc: acc(cm)?,
            acc_pm1: acc_pm1(cm)?,
            recall_pm1: prf.recall_mean,
            precision_pm1: prf.precision_mean,
            f1_pm1: prf.f1,
        })
    }

    pub fn as_array(&self) -> [f64; 5] {
        [self.acc, self.acc_pm1, self.recall_pm1, self.precision_pm1, self.f1_pm1]
    }

    pub const NAMES: [&'static str; 5] = ["acc", "acc_pm1", "recall_pm1", "precision_pm1", "f1_pm1"];
}

/// Metrics document written by `eval`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub k: usize,
    pub n: u64,
    pub acc: f64,
    pub acc_pm1: f64,
    pub recall_pm1: f64,
    pub precision_pm1: f64,
    pub f1_pm1: f64,
    pub recall_pm1_per_class: Vec<Option<f64>>,
    pub precision_pm1_per_class: Vec<Option<f64>>,
    pub confusion: Vec<Vec<u64>>,
}

impl EvalReport {
    pub fn from_confusion(cm: &ConfusionMatrix) -> Result<Self> {
        let prf = prf_pm1(cm)?;
        Ok(Self {
            k: cm.k,
            n: cm.total(),
            acc: acc(cm)?,
            acc_pm1: acc_pm1(cm)?,
            recall_pm1: prf.recall_mean,
            precision_pm1: prf.precision_mean,
            f1_pm1: prf.f1,
            recall_pm1_per_class: prf.recall,
            precision_pm1_per_class: prf.precision,
            confusion: cm.rows(),
        })
    }

    pub fn summary(&self) -> MetricSummary {
        MetricSummary {
            acc: self.acc,
            acc_pm1: self.acc_pm1,
            recall_pm1: self.recall_pm1,
            precision_pm1: self.precision_pm1,
            f1_pm1: self.f1_pm1,
        }
    }
}

/// Fraction of misclassified samples whose prediction is an adjacent class.
/// `None` when there are no errors.
pub fn adjacent_error_fraction(cm: &ConfusionMatrix) -> Option<f64> {
    let k = cm.k;
    let mut errors = 0u64;
    let mut adjacent = 0u64;
    for i in 0..k {
        for j in 0..k {
            if i != j {
                errors += cm.at(i, j);
                if i.abs_diff(j) == 1 {
                    adjacent += cm.at(i, j);
                }
            }
        }
    }
    (errors > 0).then(|| adjacent as f64 / errors as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hand3() -> ConfusionMatrix {
        ConfusionMatrix::from_rows(&[vec![2, 1, 0], vec![0, 1, 1], vec![1, 0, 2]]).unwrap()
    }

    #[test]
    fn accumulate_cells() {
        let mut cm = ConfusionMatrix::new(7);
        cm.accumulate(3, 3).unwrap();
        assert_eq!(cm.get(3, 3), 1);
        cm.accumulate(3, 3).unwrap();
        assert_eq!(cm.get(3, 3), 2);
        cm.accumulate(1, 7).unwrap();
        assert_eq!(cm.total(), 3);
        assert!(matches!(cm.accumulate(0, 1), Err(Error::ClassOutOfRange { .. })));
        assert!(cm.accumulate(1, 8).is_err());
        assert_eq!(cm.total(), 3);
    }

    #[test]
    fn diagonal_is_perfect() {
        let cm = ConfusionMatrix::from_rows(&[vec![4, 0, 0], vec![0, 2, 0], vec![0, 0, 9]]).unwrap();
        assert_eq!(acc(&cm).unwrap(), 1.0);
        assert_eq!(acc_pm1(&cm).unwrap(), 1.0);
        let prf = prf_pm1(&cm).unwrap();
        assert!(prf.recall.iter().all(|r| *r == Some(1.0)));
        // neighbouring columns still enter the row-band precision denominator
        assert!((prf.precision[0].unwrap() - 4.0 / 6.0).abs() < 1e-12);
        let nb = prf_pm1_with(&cm, Pm1Convention::Neighborhood).unwrap();
        assert_eq!(nb.f1, 1.0);
        assert!(nb.precision.iter().chain(&nb.recall).all(|p| *p == Some(1.0)));
    }

    #[test]
    fn three_class_hand_example() {
        let cm = hand3();
        assert!((acc(&cm).unwrap() - 0.625).abs() < 1e-12);
        assert!((acc_pm1(&cm).unwrap() - 0.875).abs() < 1e-12);
        let prf = prf_pm1(&cm).unwrap();
        assert!((prf.recall_mean - 8.0 / 9.0).abs() < 1e-12);
        assert_eq!(prf.precision, vec![Some(0.6), Some(0.25), Some(0.4)]);
        assert!((prf.precision_mean - 1.25 / 3.0).abs() < 1e-12);
        assert!((prf.f1 - 0.5674).abs() < 1e-4);
    }

    #[test]
    fn empty_matrix_rejected() {
        let cm = ConfusionMatrix::new(4);
        assert!(matches!(acc(&cm), Err(Error::EmptyConfusion)));
        assert!(acc_pm1(&cm).is_err());
        assert!(prf_pm1(&cm).is_err());
    }

    #[test]
    fn zero_denominator_classes_skipped() {
        // class 3 never occurs and is never predicted near
        let cm = ConfusionMatrix::from_rows(&[
            vec![5, 0, 0, 0, 0],
            vec![0, 0, 0, 0, 0],
            vec![0, 0, 0, 0, 0],
            vec![0, 0, 0, 0, 0],
            vec![0, 0, 0, 0, 3],
        ])
        .unwrap();
        let prf = prf_pm1(&cm).unwrap();
        assert_eq!(prf.recall[2], None);
        assert_eq!(prf.precision[2], None);
        assert_eq!(prf.recall_mean, 1.0);
    }

    #[test]
    fn csv_layout() {
        let csv = hand3().to_csv();
        assert_eq!(csv, "true\\pred,1,2,3\n1,2,1,0\n2,0,1,1\n3,1,0,2\n");
    }

    #[test]
    fn adjacent_fraction() {
        let cm = hand3();
        // errors: (1,2) adj, (2,3) adj, (3,1) far
        assert!((adjacent_error_fraction(&cm).unwrap() - 2.0 / 3.0).abs() < 1e-12);
        let diag = ConfusionMatrix::from_rows(&[vec![1, 0], vec![0, 1]]).unwrap();
        assert_eq!(adjacent_error_fraction(&diag), None);
    }
}

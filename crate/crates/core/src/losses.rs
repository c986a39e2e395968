//! Per-sample classification losses over `K` ordered classes.
//!
//! | kind    | value                                                        |
//! |---------|--------------------------------------------------------------|
//! | `Cre`   | `-sum_k t_k ln p_k`                                          |
//! | `Cdw1`  | `(w / (K - 1) + 1) * CRE`, `w = |argmax t - argmax p|`       |
//! | `Cdw2`  | `exp(w) * CRE`                                               |
//! | `Cdf`   | `sum_k (T_k - P_k)^2`, `T`, `P` inclusive prefix sums        |
//! | `Pom1a` | `-ln sum_{l in -1..=1} p_{c+l}`                              |
//! | `Pom1b` | `-sum_{l in -1..=1} ln p_{c+l}`                              |
//!
//! Neighbour sums only run over classes that exist, so the first and last
//! class have two terms instead of three. Probabilities are clamped to
//! `[1e-12, 1]` before any logarithm.
//!
//! Gradients treat the CDW weight `w` as a constant: it is piecewise
//! constant in `p` and its jumps are ignored.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const PROB_EPS: f64 = 1e-12;

const SUM_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Cre,
    Cdw1,
    Cdw2,
    Cdf,
    Pom1a,
    Pom1b,
}

impl LossKind {
    pub const ALL: [LossKind; 6] = [
        LossKind::Cre,
        LossKind::Cdw1,
        LossKind::Cdw2,
        LossKind::Cdf,
        LossKind::Pom1a,
        LossKind::Pom1b,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            LossKind::Cre => "cre",
            LossKind::Cdw1 => "cdw1",
            LossKind::Cdw2 => "cdw2",
            LossKind::Cdf => "cdf",
            LossKind::Pom1a => "pom1a",
            LossKind::Pom1b => "pom1b",
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LossKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidParameter(format!("unknown loss `{s}`")))
    }
}

/// Predicted class distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbVector(Vec<f64>);

impl ProbVector {
    pub fn new(p: Vec<f64>) -> Result<Self> {
        if p.len() < 2 {
            return Err(Error::InvalidProbabilities(format!("need K >= 2, got {}", p.len())));
        }
        if let Some(v) = p.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::InvalidProbabilities(format!("entry {v} is not a probability")));
        }
        let sum: f64 = p.iter().sum();
        if (sum - 1.0).abs() > SUM_TOL {
            return Err(Error::InvalidProbabilities(format!("entries sum to {sum}")));
        }
        Ok(Self(p))
    }

    pub fn uniform(k: usize) -> Self {
        Self(vec![1.0 / k as f64; k])
    }

    pub fn k(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// 1-based index of the largest entry (first on ties).
    pub fn argmax(&self) -> usize {
        argmax(&self.0) + 1
    }
}

/// One-hot target over `k` classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TargetLabel {
    class: usize,
    k: usize,
}

impl TargetLabel {
    /// `class` is 1-based.
    pub fn new(class: usize, k: usize) -> Result<Self> {
        if k < 2 {
            return Err(Error::InvalidParameter(format!("need K >= 2, got {k}")));
        }
        if class == 0 || class > k {
            return Err(Error::ClassOutOfRange { class, k });
        }
        Ok(Self { class, k })
    }

    pub fn class(&self) -> usize {
        self.class
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn one_hot(&self) -> Vec<f64> {
        let mut t = vec![0.0; self.k];
        t[self.class - 1] = 1.0;
        t
    }
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

fn clamp(p: f64) -> f64 {
    p.clamp(PROB_EPS, 1.0)
}

/// 0-based indices of the true class and its existing neighbours.
fn neighbourhood(c0: usize, k: usize) -> std::ops::RangeInclusive<usize> {
    c0.saturating_sub(1)..=(c0 + 1).min(k - 1)
}

fn check(t: &TargetLabel, p: &ProbVector) -> Result<()> {
    if t.k != p.k() {
        return Err(Error::ShapeMismatch {
            expected: t.k,
            actual: p.k(),
        });
    }
    Ok(())
}

/// Class distance weight `|argmax t - argmax p|`.
fn distance(t: &TargetLabel, p: &[f64]) -> f64 {
    (t.class as f64 - (argmax(p) + 1) as f64).abs()
}

fn value_unchecked(kind: LossKind, t: &TargetLabel, p: &[f64]) -> f64 {
    let k = p.len();
    let c0 = t.class - 1;
    let cre = -clamp(p[c0]).ln();
    match kind {
        LossKind::Cre => cre,
        LossKind::Cdw1 => (distance(t, p) / (k - 1) as f64 + 1.0) * cre,
        LossKind::Cdw2 => distance(t, p).exp() * cre,
        LossKind::Cdf => {
            let mut cum_p = 0.0;
            let mut total = 0.0;
            for (i, pi) in p.iter().enumerate() {
                cum_p += pi;
                let cum_t = if i >= c0 { 1.0 } else { 0.0 };
                total += (cum_t - cum_p).powi(2);
            }
            total
        }
        LossKind::Pom1a => {
            let mass: f64 = neighbourhood(c0, k).map(|i| p[i]).sum();
            -clamp(mass).ln()
        }
        LossKind::Pom1b => neighbourhood(c0, k).map(|i| -clamp(p[i]).ln()).sum(),
    }
}

pub fn loss_value(kind: LossKind, t: &TargetLabel, p: &ProbVector) -> Result<f64> {
    check(t, p)?;
    Ok(value_unchecked(kind, t, p.as_slice()))
}

/// Gradient with respect to the probabilities.
fn prob_grad_unchecked(kind: LossKind, t: &TargetLabel, p: &[f64]) -> Vec<f64> {
    let k = p.len();
    let c0 = t.class - 1;
    let mut g = vec![0.0; k];
    let d_cre = -1.0 / clamp(p[c0]);
    match kind {
        LossKind::Cre => g[c0] = d_cre,
        LossKind::Cdw1 => g[c0] = (distance(t, p) / (k - 1) as f64 + 1.0) * d_cre,
        LossKind::Cdw2 => g[c0] = distance(t, p).exp() * d_cre,
        LossKind::Cdf => {
            // dL/dp_j = sum_{i >= j} -2 (T_i - P_i)
            let mut cum_p = 0.0;
            let resid: Vec<f64> = p
                .iter()
                .enumerate()
                .map(|(i, pi)| {
                    cum_p += pi;
                    (if i >= c0 { 1.0 } else { 0.0 }) - cum_p
                })
                .collect();
            let mut acc = 0.0;
            for j in (0..k).rev() {
                acc += -2.0 * resid[j];
                g[j] = acc;
            }
        }
        LossKind::Pom1a => {
            let mass: f64 = neighbourhood(c0, k).map(|i| p[i]).sum();
            let d = -1.0 / clamp(mass);
            for i in neighbourhood(c0, k) {
                g[i] = d;
            }
        }
        LossKind::Pom1b => {
            for i in neighbourhood(c0, k) {
                g[i] = -1.0 / clamp(p[i]);
            }
        }
    }
    g
}

/// Gradients of one sample's loss.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad {
    pub value: f64,
    /// `dL/dp`.
    pub wrt_probs: Vec<f64>,
    /// `dL/dz` for `p = softmax(z)`.
    pub wrt_logits: Vec<f64>,
}

pub fn loss_grad(kind: LossKind, t: &TargetLabel, p: &ProbVector) -> Result<LossGrad> {
    check(t, p)?;
    Ok(grad_unchecked(kind, t, p.as_slice()))
}

pub(crate) fn grad_unchecked(kind: LossKind, t: &TargetLabel, p: &[f64]) -> LossGrad {
    let g = prob_grad_unchecked(kind, t, p);
    let wrt_logits = softmax_backward(p, &g);
    LossGrad {
        value: value_unchecked(kind, t, p),
        wrt_probs: g,
        wrt_logits,
    }
}

/// `J^T g` for the softmax Jacobian `diag(p) - p p^T`.
pub fn softmax_backward(p: &[f64], g: &[f64]) -> Vec<f64> {
    let dot: f64 = p.iter().zip(g).map(|(a, b)| a * b).sum();
    p.iter().zip(g).map(|(pi, gi)| pi * (gi - dot)).collect()
}

/// Numerically stable softmax.
pub fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Loss evaluated on logits, with its logit gradient.
pub fn loss_from_logits(kind: LossKind, t: &TargetLabel, logits: &[f64]) -> Result<LossGrad> {
    if logits.len() != t.k {
        return Err(Error::ShapeMismatch {
            expected: t.k,
            actual: logits.len(),
        });
    }
    Ok(grad_unchecked(kind, t, &softmax(logits)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_hot(c: usize, k: usize) -> ProbVector {
        ProbVector::new(TargetLabel::new(c, k).unwrap().one_hot()).unwrap()
    }

    fn val(kind: LossKind, c: usize, p: &ProbVector) -> f64 {
        loss_value(kind, &TargetLabel::new(c, p.k()).unwrap(), p).unwrap()
    }

    #[test]
    fn cre_closed_forms() {
        assert_eq!(val(LossKind::Cre, 4, &one_hot(4, 7)), 0.0);
        assert!((val(LossKind::Cre, 4, &ProbVector::uniform(7)) - 7f64.ln()).abs() < 1e-12);
        assert!((7f64.ln() - 1.9459).abs() < 1e-4);
    }

    #[test]
    fn cdf_one_hot_distances() {
        assert_eq!(val(LossKind::Cdf, 1, &one_hot(1, 7)), 0.0);
        assert!((val(LossKind::Cdf, 1, &one_hot(2, 7)) - 1.0).abs() < 1e-12);
        assert!((val(LossKind::Cdf, 1, &one_hot(7, 7)) - 6.0).abs() < 1e-12);
    }

    #[test]
    fn clamping_keeps_values_finite() {
        let v = val(LossKind::Cre, 1, &one_hot(2, 7));
        assert!((v - (-PROB_EPS.ln())).abs() < 1e-9);
        assert!(val(LossKind::Pom1b, 4, &one_hot(1, 7)).is_finite());
    }

    #[test]
    fn invalid_inputs() {
        assert!(ProbVector::new(vec![0.5, 0.4]).is_err());
        assert!(ProbVector::new(vec![1.0]).is_err());
        assert!(ProbVector::new(vec![1.5, -0.5]).is_err());
        assert!(ProbVector::new(vec![0.5, 0.5 + 5e-7]).is_ok());
        assert!(TargetLabel::new(0, 7).is_err());
        assert!(TargetLabel::new(8, 7).is_err());
        assert!(TargetLabel::new(1, 1).is_err());
        let t = TargetLabel::new(1, 3).unwrap();
        assert!(loss_value(LossKind::Cre, &t, &ProbVector::uniform(4)).is_err());
    }

    #[test]
    fn parse_names() {
        for k in LossKind::ALL {
            assert_eq!(k.name().parse::<LossKind>().unwrap(), k);
        }
        assert_eq!("POM1B".parse::<LossKind>().unwrap(), LossKind::Pom1b);
        assert!("mse".parse::<LossKind>().is_err());
    }

    #[test]
    fn cre_logit_gradient_is_p_minus_t() {
        let z = [0.3, -1.2, 2.0, 0.0, 0.7];
        let t = TargetLabel::new(2, 5).unwrap();
        let g = loss_from_logits(LossKind::Cre, &t, &z).unwrap();
        let p = softmax(&z);
        for i in 0..5 {
            let expected = p[i] - if i == 1 { 1.0 } else { 0.0 };
            assert!((g.wrt_logits[i] - expected).abs() < 1e-12);
        }
    }
}

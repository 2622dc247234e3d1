//! Certified-ratio and certified-accuracy curves and their areas.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::CertificateResult;

pub const AUCRC_CONVENTION: &str = "aucrc = sum over integer radii r >= 0 of certified ratio(r) \
(unit-bin step integral); normalized aucrc = trapezoid rule over [0, 1] on the breakpoints \
{0, 1, radius_i / attack_surface_i}";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveSummary {
    pub d_min: usize,
    pub nodes: usize,
    /// Fraction of nodes certified (not abstained) with radius >= r, for r = 0, 1, ...
    pub certified_ratio: Vec<f64>,
    /// Fraction of nodes correct, not abstained, and radius >= r.
    pub certified_accuracy: Vec<f64>,
    /// `(x, ratio)` with `x` the radius normalized by the attack surface.
    pub normalized_ratio: Vec<(f64, f64)>,
    pub normalized_accuracy: Vec<(f64, f64)>,
    pub aucrc: f64,
    pub aucrc_accuracy: f64,
    pub aucrc_normalized: f64,
    pub aucrc_normalized_accuracy: f64,
    pub clean_accuracy: Option<f64>,
    pub abstain_rate: f64,
}

/// Summary at one `d_min`. `surfaces[i]` is the attack-surface size of
/// `results[i]`'s node.
pub fn summarize(results: &[CertificateResult], surfaces: &[usize], d_min: usize) -> Result<CurveSummary> {
    if results.is_empty() {
        return Err(Error::InsufficientData("no certificate results".into()));
    }
    if surfaces.len() != results.len() {
        return Err(Error::Dimension(format!(
            "{} attack surfaces for {} results",
            surfaces.len(),
            results.len()
        )));
    }
    let n = results.len() as f64;
    let radius = |r: &CertificateResult| if r.abstained() { None } else { Some(r.radius_at(d_min)) };
    let correct = |r: &CertificateResult| r.correct == Some(true);
    let max_r = results.iter().filter_map(radius).max().unwrap_or(0);

    let curve = |pred: &dyn Fn(&CertificateResult) -> bool| -> Vec<f64> {
        (0..=max_r)
            .map(|t| {
                results
                    .iter()
                    .filter(|r| pred(r) && radius(r).is_some_and(|x| x >= t))
                    .count() as f64
                    / n
            })
            .collect()
    };
    let certified_ratio = curve(&|_| true);
    let certified_accuracy = curve(&correct);

    let norm: Vec<Option<f64>> = results
        .iter()
        .zip(surfaces)
        .map(|(r, &s)| {
            radius(r).map(|x| if s == 0 { 0.0 } else { (x as f64 / s as f64).min(1.0) })
        })
        .collect();
    let mut breaks: Vec<f64> = vec![0.0, 1.0];
    breaks.extend(norm.iter().flatten().copied());
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let norm_curve = |pred: &dyn Fn(&CertificateResult) -> bool| -> Vec<(f64, f64)> {
        breaks
            .iter()
            .map(|&x| {
                let c = results
                    .iter()
                    .zip(&norm)
                    .filter(|(r, v)| pred(r) && v.is_some_and(|v| v >= x))
                    .count();
                (x, c as f64 / n)
            })
            .collect()
    };
    let normalized_ratio = norm_curve(&|_| true);
    let normalized_accuracy = norm_curve(&correct);

    let labelled: Vec<_> = results.iter().filter(|r| r.correct.is_some()).collect();
    let clean_accuracy = (!labelled.is_empty())
        .then(|| labelled.iter().filter(|r| correct(r)).count() as f64 / labelled.len() as f64);

    Ok(CurveSummary {
        d_min,
        nodes: results.len(),
        aucrc: certified_ratio.iter().sum(),
        aucrc_accuracy: certified_accuracy.iter().sum(),
        aucrc_normalized: trapezoid(&normalized_ratio),
        aucrc_normalized_accuracy: trapezoid(&normalized_accuracy),
        certified_ratio,
        certified_accuracy,
        normalized_ratio,
        normalized_accuracy,
        clean_accuracy,
        abstain_rate: results.iter().filter(|r| r.abstained()).count() as f64 / n,
    })
}

fn trapezoid(points: &[(f64, f64)]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0)
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn result(node: usize, radius: Option<usize>, correct: bool) -> CertificateResult {
        CertificateResult {
            node,
            prediction: radius.map(|_| 0),
            p_lower: 0.0,
            p_upper: 0.0,
            radius: BTreeMap::from([(1, radius.unwrap_or(0))]),
            correct: Some(correct && radius.is_some()),
        }
    }

    #[test]
    fn all_certified_to_three() {
        let rs: Vec<_> = (0..4).map(|i| result(i, Some(3 + i), true)).collect();
        let s = summarize(&rs, &[10; 4], 1).unwrap();
        assert_eq!(&s.certified_ratio[..4], &[1.0; 4]);
    }

    #[test]
    fn all_abstained() {
        let rs: Vec<_> = (0..3).map(|i| result(i, None, false)).collect();
        let s = summarize(&rs, &[5; 3], 1).unwrap();
        assert!(s.certified_ratio.iter().skip(1).all(|&x| x == 0.0));
        assert_eq!(s.abstain_rate, 1.0);
    }

    #[test]
    fn mixed_radii_step_sum() {
        let rs = vec![result(0, Some(0), true), result(1, Some(1), true), result(2, Some(2), false)];
        let s = summarize(&rs, &[2, 2, 2], 1).unwrap();
        assert_eq!(s.certified_ratio, vec![1.0, 2.0 / 3.0, 1.0 / 3.0]);
        assert!((s.aucrc - 2.0).abs() < 1e-15);
        assert_eq!(s.certified_accuracy, vec![2.0 / 3.0, 1.0 / 3.0, 0.0]);
        // Breakpoints 0, 0.5, 1 with ratios 1, 2/3, 1/3.
        assert!((s.aucrc_normalized - (0.5 * (1.0 + 2.0 / 3.0) / 2.0 + 0.5 * (2.0 / 3.0 + 1.0 / 3.0) / 2.0)).abs() < 1e-15);
        assert_eq!(s.clean_accuracy, Some(2.0 / 3.0));
    }

    #[test]
    fn empty_is_rejected() {
        assert!(summarize(&[], &[], 1).is_err());
    }
}

//! Monte-Carlo estimation of the smoothed classifier and the certificate.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;

use crate::error::{Error, Result};
use crate::gnn::{argmax, GnnModel, VoteTable};
use crate::graph::Graph;
use crate::scalar::Scalar;
use crate::smoothing::{sample, GraphView, SmoothingProbs};

const CP_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Lower,
    Upper,
}

/// One-sided exact binomial confidence bound.
pub fn clopper_pearson(successes: u64, n: u64, alpha_side: f64, side: Side) -> Result<f64> {
    if successes > n {
        return Err(Error::Domain(format!("{successes} successes out of {n}")));
    }
    if !(alpha_side > 0.0 && alpha_side < 1.0) {
        return Err(Error::Domain(format!("alpha {alpha_side} outside (0, 1)")));
    }
    let (s, n_f) = (successes as f64, n as f64);
    match side {
        Side::Lower if successes == 0 => Ok(0.0),
        Side::Upper if successes == n => Ok(1.0),
        Side::Lower => Ok(beta_quantile(s, n_f - s + 1.0, alpha_side)),
        Side::Upper => Ok(beta_quantile(s + 1.0, n_f - s, 1.0 - alpha_side)),
    }
}

/// Bisection on the regularized incomplete beta (increasing in `x`).
fn beta_quantile(a: f64, b: f64, q: f64) -> f64 {
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while hi - lo > CP_TOL {
        let mid = 0.5 * (lo + hi);
        if beta_reg(a, b, mid) < q {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// A base classifier evaluated on numbered smoothed samples.
pub trait BaseClassifier: Sync {
    fn num_classes(&self) -> usize;

    /// Prediction for each of `nodes` on sample `sample_index`; `None` when
    /// the source has no answer for that pair.
    fn predict(&self, sample_index: u64, nodes: &[usize]) -> Result<Vec<Option<usize>>>;
}

impl BaseClassifier for VoteTable {
    fn num_classes(&self) -> usize {
        VoteTable::num_classes(self).max(2)
    }

    fn predict(&self, sample_index: u64, nodes: &[usize]) -> Result<Vec<Option<usize>>> {
        Ok(nodes.iter().map(|&v| self.get(v, sample_index)).collect())
    }
}

/// A frozen GCN applied to samples drawn from the smoothing distribution.
#[derive(Debug, Clone)]
pub struct SmoothedGnn<'a, T> {
    pub model: &'a GnnModel<T>,
    pub graph: &'a Graph<T>,
    pub probs: SmoothingProbs<f64>,
    pub seed: u64,
}

impl<'a, T: Scalar> SmoothedGnn<'a, T> {
    pub fn new(model: &'a GnnModel<T>, graph: &'a Graph<T>, probs: SmoothingProbs<f64>, seed: u64) -> Self {
        Self {
            model,
            graph,
            probs,
            seed,
        }
    }
}

impl<T: Scalar> BaseClassifier for SmoothedGnn<'_, T> {
    fn num_classes(&self) -> usize {
        self.model.classes()
    }

    fn predict(&self, sample_index: u64, nodes: &[usize]) -> Result<Vec<Option<usize>>> {
        let s = sample(self.graph, &self.probs, self.seed, sample_index);
        let token = self.model.token.to_vec();
        let view = GraphView::clean(self.graph)
            .with_kept(&s.kept)
            .with_ablation(&s.ablated, &token);
        let out = self.model.forward_all(&view)?;
        Ok(nodes.iter().map(|&v| Some(argmax(out.row(v)))).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimateConfig {
    pub n0: u64,
    pub n1: u64,
    pub alpha: f64,
}

impl Default for EstimateConfig {
    fn default() -> Self {
        Self {
            n0: 1_000,
            n1: 3_000,
            alpha: 0.01,
        }
    }
}

impl EstimateConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n0 == 0 || self.n1 == 0 {
            return Err(Error::Config("n0 and n1 must be >= 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha {} outside (0, 1)", self.alpha)));
        }
        Ok(())
    }
}

/// Votes for one node: selection round on samples `0..n0`, certification
/// round on `n0..n0+n1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoteTally {
    pub node: usize,
    pub selection: Vec<u64>,
    pub counts: Vec<u64>,
    pub y_star: usize,
    pub y_tilde: usize,
    pub n0: u64,
    pub n1: u64,
    pub alpha: f64,
}

impl VoteTally {
    fn from_counts(node: usize, selection: Vec<u64>, counts: Vec<u64>, cfg: &EstimateConfig) -> Self {
        let y_star = top(&selection, None);
        let y_tilde = top(&selection, Some(y_star));
        Self {
            node,
            selection,
            counts,
            y_star,
            y_tilde,
            n0: cfg.n0,
            n1: cfg.n1,
            alpha: cfg.alpha,
        }
    }

    /// Lower bound on `p_{v,y*}` at level `alpha/2`.
    pub fn p_lower(&self) -> f64 {
        clopper_pearson(self.counts[self.y_star], self.n1, self.alpha / 2.0, Side::Lower)
            .expect("valid tally")
    }

    /// Upper bound on `p_{v,ỹ}` at level `alpha/2`.
    pub fn p_upper(&self) -> f64 {
        clopper_pearson(self.counts[self.y_tilde], self.n1, self.alpha / 2.0, Side::Upper)
            .expect("valid tally")
    }
}

/// Largest count, ties to the lowest class, skipping `exclude`.
fn top(counts: &[u64], exclude: Option<usize>) -> usize {
    let mut best: Option<usize> = None;
    for (c, &n) in counts.iter().enumerate() {
        if Some(c) == exclude {
            continue;
        }
        if best.map_or(true, |b| n > counts[b]) {
            best = Some(c);
        }
    }
    best.unwrap_or(0)
}

/// Tallies for every node in `nodes`. Per-node failures (missing votes,
/// out-of-range classes) are returned in place.
pub fn estimate_batch<C: BaseClassifier + ?Sized>(
    classifier: &C,
    nodes: &[usize],
    cfg: &EstimateConfig,
) -> Result<Vec<Result<VoteTally>>> {
    cfg.validate()?;
    let classes = classifier.num_classes().max(2);
    let m = nodes.len();
    // counts[i][c]: selection rows first, then certification rows.
    let zero = || Counts::new(m, classes);
    let total = cfg.n0 + cfg.n1;
    let counts = (0..total)
        .into_par_iter()
        .map(|s| classifier.predict(s, nodes).map(|p| (s, p)))
        .try_fold(zero, |mut acc, r| {
            let (s, preds) = r?;
            acc.add(s < cfg.n0, &preds, classes);
            Ok::<_, Error>(acc)
        })
        .try_reduce(zero, |a, b| Ok(a.merge(b)))?;

    Ok(nodes
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            if counts.missing[i] > 0 {
                return Err(Error::InsufficientData(format!(
                    "node {v}: {} of {total} samples missing",
                    counts.missing[i]
                )));
            }
            if counts.invalid[i] > 0 {
                return Err(Error::Format(format!(
                    "node {v}: {} votes for classes >= {classes}",
                    counts.invalid[i]
                )));
            }
            Ok(VoteTally::from_counts(
                v,
                counts.selection[i].clone(),
                counts.certification[i].clone(),
                cfg,
            ))
        })
        .collect())
}

/// Single-node convenience wrapper around [`estimate_batch`].
pub fn estimate<C: BaseClassifier + ?Sized>(classifier: &C, v: usize, cfg: &EstimateConfig) -> Result<VoteTally> {
    estimate_batch(classifier, &[v], cfg)?.pop().expect("one node")
}

struct Counts {
    selection: Vec<Vec<u64>>,
    certification: Vec<Vec<u64>>,
    missing: Vec<u64>,
    invalid: Vec<u64>,
}

impl Counts {
    fn new(m: usize, classes: usize) -> Self {
        Self {
            selection: vec![vec![0; classes]; m],
            certification: vec![vec![0; classes]; m],
            missing: vec![0; m],
            invalid: vec![0; m],
        }
    }

    fn add(&mut self, selection: bool, preds: &[Option<usize>], classes: usize) {
        let rows = if selection {
            &mut self.selection
        } else {
            &mut self.certification
        };
        for (i, p) in preds.iter().enumerate() {
            match p {
                None => self.missing[i] += 1,
                Some(c) if *c >= classes => self.invalid[i] += 1,
                Some(c) => rows[i][*c] += 1,
            }
        }
    }

    fn merge(mut self, other: Self) -> Self {
        let add = |a: &mut Vec<Vec<u64>>, b: Vec<Vec<u64>>| {
            for (x, y) in a.iter_mut().zip(b) {
                for (p, q) in x.iter_mut().zip(y) {
                    *p += q;
                }
            }
        };
        add(&mut self.selection, other.selection);
        add(&mut self.certification, other.certification);
        for (a, b) in self.missing.iter_mut().zip(other.missing) {
            *a += b;
        }
        for (a, b) in self.invalid.iter_mut().zip(other.invalid) {
            *a += b;
        }
        self
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CertMode {
    /// `p_lower - Δ > p_upper + Δ`.
    #[default]
    Multiclass,
    /// `p_lower - Δ > 1/2`.
    Binary,
}

/// Largest `rho` in `1..=deltas.len()` passing the certificate condition,
/// where `deltas[rho - 1]` bounds Δ at budget `rho`. Scanning stops at the
/// first failure.
pub fn certified_radius(p_lower: f64, p_upper: f64, deltas: &[f64], mode: CertMode) -> usize {
    if p_lower <= p_upper {
        return 0;
    }
    let mut radius = 0;
    for (i, &d) in deltas.iter().enumerate() {
        let ok = d < 0.5
            && match mode {
                CertMode::Multiclass => p_lower - d > p_upper + d,
                CertMode::Binary => p_lower - d > 0.5,
            };
        if !ok {
            break;
        }
        radius = i + 1;
    }
    radius
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateResult {
    pub node: usize,
    /// `None` means the smoothed classifier abstains.
    pub prediction: Option<usize>,
    pub p_lower: f64,
    pub p_upper: f64,
    /// `d_min -> certified radius`.
    pub radius: BTreeMap<usize, usize>,
    pub correct: Option<bool>,
}

impl CertificateResult {
    pub fn abstained(&self) -> bool {
        self.prediction.is_none()
    }

    pub fn radius_at(&self, d_min: usize) -> usize {
        self.radius.get(&d_min).copied().unwrap_or(0)
    }
}

/// Certificate for one tally against Δ curves keyed by `d_min`.
pub fn certify(
    tally: &VoteTally,
    curves: &BTreeMap<usize, Vec<f64>>,
    mode: CertMode,
    label: Option<usize>,
) -> CertificateResult {
    let p_lower = tally.p_lower();
    let p_upper = tally.p_upper();
    let abstain = p_lower <= p_upper;
    let prediction = (!abstain).then_some(tally.y_star);
    let radius = curves
        .iter()
        .map(|(&d, deltas)| {
            let r = if abstain {
                0
            } else {
                certified_radius(p_lower, p_upper, deltas, mode)
            };
            (d, r)
        })
        .collect();
    CertificateResult {
        node: tally.node,
        prediction,
        p_lower,
        p_upper,
        radius,
        correct: label.map(|y| prediction == Some(y)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Constant(usize);

    impl BaseClassifier for Constant {
        fn num_classes(&self) -> usize {
            5
        }
        fn predict(&self, _: u64, nodes: &[usize]) -> Result<Vec<Option<usize>>> {
            Ok(vec![Some(self.0); nodes.len()])
        }
    }

    #[test]
    fn boundary_conventions() {
        assert_eq!(clopper_pearson(0, 50, 0.01, Side::Lower).unwrap(), 0.0);
        assert_eq!(clopper_pearson(50, 50, 0.01, Side::Upper).unwrap(), 1.0);
        assert!(clopper_pearson(51, 50, 0.01, Side::Lower).is_err());
        assert!(clopper_pearson(5, 50, 0.0, Side::Lower).is_err());
        assert!(clopper_pearson(5, 50, 1.0, Side::Upper).is_err());
    }

    #[test]
    fn all_successes_closed_form() {
        let lo = clopper_pearson(100, 100, 0.01, Side::Lower).unwrap();
        assert!((lo - 0.01f64.powf(0.01)).abs() < 1e-9);
        let up = clopper_pearson(0, 100, 0.01, Side::Upper).unwrap();
        assert!((up - (1.0 - 0.01f64.powf(0.01))).abs() < 1e-9);
    }

    #[test]
    fn constant_classifier_tally() {
        let cfg = EstimateConfig { n0: 10, n1: 40, alpha: 0.01 };
        let t = estimate(&Constant(3), 0, &cfg).unwrap();
        assert_eq!(t.y_star, 3);
        assert_eq!(t.y_tilde, 0);
        assert_eq!(t.counts, vec![0, 0, 0, 40, 0]);
        assert_eq!(t.selection[3], 10);
    }

    #[test]
    fn missing_votes_are_insufficient_data() {
        let mut table = VoteTable::new();
        for s in 0..5 {
            table.insert(0, s, 1).unwrap();
        }
        let cfg = EstimateConfig { n0: 2, n1: 5, alpha: 0.01 };
        assert!(matches!(estimate(&table, 0, &cfg), Err(Error::InsufficientData(_))));
        assert!(matches!(
            estimate(&VoteTable::new(), 0, &cfg),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn certificate_examples() {
        assert_eq!(certified_radius(0.9, 0.05, &[0.1, 0.3], CertMode::Multiclass), 2);
        assert_eq!(certified_radius(0.9, 0.05, &[0.1, 0.3, 0.5], CertMode::Multiclass), 2);
        assert_eq!(certified_radius(0.99, 0.0, &[0.5], CertMode::Multiclass), 0);
        assert_eq!(certified_radius(0.99, 0.0, &[0.5], CertMode::Binary), 0);
        assert_eq!(certified_radius(0.5, 0.5, &[0.0], CertMode::Multiclass), 0);
        assert_eq!(certified_radius(0.8, 0.1, &[0.25, 0.31], CertMode::Binary), 1);
    }

    #[test]
    fn abstention_zeroes_radii() {
        let t = VoteTally::from_counts(
            0,
            vec![5, 5],
            vec![50, 50],
            &EstimateConfig { n0: 10, n1: 100, alpha: 0.01 },
        );
        let curves = BTreeMap::from([(1, vec![0.0, 0.0])]);
        let r = certify(&t, &curves, CertMode::Multiclass, Some(0));
        assert!(r.abstained());
        assert_eq!(r.radius_at(1), 0);
        assert_eq!(r.correct, Some(false));
    }
}

//! Per-node certification: receptive field, Δ curves, estimation, decision.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{delta_curve, BoundMethod, WorstCaseLimits, DEFAULT_MAX_TERMS, DEFAULT_SUBSET_CAP};
use crate::error::{Error, Result};
use crate::estimator::{certify, estimate_batch, BaseClassifier, CertMode, CertificateResult, EstimateConfig};
use crate::graph::{receptive_field, Graph, ReceptiveField, DEFAULT_MAX_PATHS};
use crate::scalar::Scalar;
use crate::smoothing::SmoothingProbs;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CertifyOptions {
    /// Number of message-passing layers.
    pub k: usize,
    pub d_min: Vec<usize>,
    pub method: BoundMethod,
    pub mode: CertMode,
    /// Largest budget scanned; defaults to the attack-surface size.
    pub rho_max: Option<usize>,
    pub max_paths: usize,
    pub max_terms: u128,
    pub subset_cap: u128,
    /// The classifier has a skip path carrying the target's clean features.
    pub skip: bool,
    #[serde(flatten)]
    pub estimate: EstimateConfig,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        Self {
            k: 2,
            d_min: vec![1],
            method: BoundMethod::Multiplicative,
            mode: CertMode::Multiclass,
            rho_max: None,
            max_paths: DEFAULT_MAX_PATHS,
            max_terms: DEFAULT_MAX_TERMS,
            subset_cap: DEFAULT_SUBSET_CAP,
            skip: false,
            estimate: EstimateConfig::default(),
        }
    }
}

impl CertifyOptions {
    fn limits(&self) -> WorstCaseLimits {
        WorstCaseLimits {
            max_terms: self.max_terms,
            subset_cap: self.subset_cap,
        }
    }
}

#[derive(Debug, Clone)]
pub struct NodeOutcome {
    pub node: usize,
    pub result: Result<CertificateResult, String>,
    /// `d_min -> attack-surface size`, when the receptive field was built.
    pub surfaces: BTreeMap<usize, usize>,
}

/// Δ̄(1..=rho_max) for every requested `d_min`.
pub fn delta_curves(
    rf: &ReceptiveField,
    probs: &SmoothingProbs<f64>,
    opts: &CertifyOptions,
) -> Result<BTreeMap<usize, Vec<f64>>> {
    opts.d_min
        .iter()
        .map(|&d| {
            let rho_max = opts.rho_max.unwrap_or_else(|| rf.attack_surface(d).len());
            // The skip path forwards the target's own clean features, so an
            // attacked target is never intercepted.
            let curve = if opts.skip && d == 0 {
                vec![1.0; rho_max]
            } else {
                delta_curve(rf, d, probs, opts.method, rho_max, opts.limits())?
                    .iter()
                    .map(|b| b.as_f64())
                    .collect()
            };
            Ok((d, curve))
        })
        .collect()
}

/// Certifies `nodes` (sorted and deduplicated on output). Per-node failures
/// are recorded in the outcome instead of aborting the batch.
pub fn certify_nodes<T: Scalar, C: BaseClassifier + ?Sized>(
    g: &Graph<T>,
    classifier: &C,
    nodes: &[usize],
    probs: &SmoothingProbs<f64>,
    opts: &CertifyOptions,
) -> Result<Vec<NodeOutcome>> {
    if opts.k == 0 {
        return Err(Error::Config("k must be >= 1".into()));
    }
    let mut nodes = nodes.to_vec();
    nodes.sort_unstable();
    nodes.dedup();
    if let Some(&v) = nodes.iter().find(|&&v| v >= g.n()) {
        return Err(Error::Config(format!("node {v} out of range (n = {})", g.n())));
    }
    let tallies = estimate_batch(classifier, &nodes, &opts.estimate)?;
    let labels = g.labels();
    Ok(nodes
        .par_iter()
        .zip(tallies.into_par_iter())
        .map(|(&v, tally)| {
            let rf = receptive_field(g, v, opts.k, opts.max_paths);
            let surfaces = rf
                .as_ref()
                .map(|rf| {
                    opts.d_min
                        .iter()
                        .map(|&d| (d, rf.attack_surface(d).len()))
                        .collect()
                })
                .unwrap_or_default();
            let result = (|| {
                let rf = rf?;
                let tally = tally?;
                let curves = delta_curves(&rf, probs, opts)?;
                Ok::<_, Error>(certify(&tally, &curves, opts.mode, labels.map(|l| l[v])))
            })()
            .map_err(|e| e.to_string());
            NodeOutcome {
                node: v,
                result,
                surfaces,
            }
        })
        .collect())
}

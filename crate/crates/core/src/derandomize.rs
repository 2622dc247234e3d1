//! Exact label probabilities under retention smoothing: keep `k` of the `d`
//! non-target receptive-field nodes uniformly at random, delete the rest.
//!
//! Retention sets whose connected-to-target cores coincide give the same
//! prediction, so the classifier runs once per core (reduced
//! representative) weighted by the number of retention sets collapsing to it.

use std::collections::BTreeSet;

use num_bigint::{BigInt, BigUint};
use num_integer::binomial;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::bounds::levine_delta_exact;
use crate::error::{Error, Result};
use crate::gnn::GnnModel;
use crate::graph::{Graph, ReceptiveField};
use crate::scalar::Scalar;
use crate::smoothing::GraphView;

pub const DEFAULT_TAU: u64 = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetentionConfig {
    pub k_rel: f64,
    pub tau: u64,
}

impl Default for RetentionConfig {
    fn default() -> Self {
        Self {
            k_rel: 0.1,
            tau: DEFAULT_TAU,
        }
    }
}

impl RetentionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.k_rel) {
            return Err(Error::Config(format!("k_rel {} outside [0, 1]", self.k_rel)));
        }
        if self.tau == 0 {
            return Err(Error::Config("tau must be >= 1".into()));
        }
        Ok(())
    }
}

/// `ceil(d * k_rel)`.
pub fn retention_count(d: usize, k_rel: f64) -> usize {
    // Shave rounding noise so that e.g. 10 * 0.1 stays 1.
    ((d as f64 * k_rel) - 1e-9).ceil().max(0.0) as usize
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReducedRepresentative {
    /// Target first, then the other nodes ascending.
    pub nodes: Vec<usize>,
    pub beta: BigUint,
}

/// Field topology in local indices; index 0 is the target.
struct Local {
    ids: Vec<usize>,
    preds: Vec<Vec<usize>>,
}

impl Local {
    fn new<T>(g: &Graph<T>, rf: &ReceptiveField) -> Self {
        let mut ids = vec![rf.target()];
        ids.extend(rf.members().iter().copied().filter(|&w| w != rf.target()));
        let pos = |w: usize| ids.iter().position(|&x| x == w);
        let mut preds = vec![Vec::new(); ids.len()];
        for e in rf.induced_edges(g) {
            let (s, d) = g.edges()[e];
            if let (Some(s), Some(d)) = (pos(s), pos(d)) {
                preds[d].push(s);
            }
        }
        for p in &mut preds {
            p.sort_unstable();
            p.dedup();
        }
        Self { ids, preds }
    }

    fn to_global(&self, s: &[usize]) -> Vec<usize> {
        let mut out: Vec<usize> = s.iter().map(|&i| self.ids[i]).collect();
        out[1..].sort_unstable();
        out
    }
}

fn choose(n: usize, r: usize) -> BigUint {
    if r > n {
        BigUint::zero()
    } else {
        binomial(BigUint::from(n), BigUint::from(r))
    }
}

/// Every reduced representative for retention count `k`, each once.
pub fn enumerate_representatives<T>(
    g: &Graph<T>,
    rf: &ReceptiveField,
    k: usize,
    tau: u64,
) -> Result<Vec<ReducedRepresentative>> {
    let local = Local::new(g, rf);
    let size = local.ids.len();
    let d = size - 1;
    if k > d {
        return Err(Error::Config(format!("retention count {k} exceeds field size {d}")));
    }
    if choose(d, k) > BigUint::from(tau) {
        return Err(Error::EnumerationRefused { d, k, tau });
    }
    let mut visited = BTreeSet::new();
    let mut out = Vec::new();
    expand(&local, vec![0], k, &mut visited, &mut out);
    Ok(out)
}

fn expand(
    local: &Local,
    s: Vec<usize>,
    k: usize,
    visited: &mut BTreeSet<Vec<usize>>,
    out: &mut Vec<ReducedRepresentative>,
) {
    let mut key = s.clone();
    key.sort_unstable();
    if !visited.insert(key) {
        return;
    }
    let in_s = |w: usize| s.contains(&w);
    let mut frontier: Vec<usize> = s
        .iter()
        .flat_map(|&u| local.preds[u].iter().copied())
        .filter(|&w| !in_s(w))
        .collect();
    frontier.sort_unstable();
    frontier.dedup();

    let free = local.ids.len() - frontier.len() - s.len();
    let beta = choose(free, k + 1 - s.len());
    if !beta.is_zero() {
        out.push(ReducedRepresentative {
            nodes: local.to_global(&s),
            beta,
        });
    }
    if s.len() < k + 1 {
        for &w in &frontier {
            let mut next = s.clone();
            next.push(w);
            expand(local, next, k, visited, out);
        }
    }
}

/// Exact class probabilities: `p_y = sum of beta over representatives
/// classified as y, divided by C(d, k)`. `f` receives a representative's
/// node set (target first).
pub fn exact_label_probs<F>(
    reps: &[ReducedRepresentative],
    d: usize,
    k: usize,
    classes: usize,
    mut f: F,
) -> Result<Vec<BigRational>>
where
    F: FnMut(&[usize]) -> Result<usize>,
{
    let total = choose(d, k);
    let sum: BigUint = reps.iter().map(|r| &r.beta).sum();
    if sum != total {
        return Err(Error::Integrity(format!(
            "representative multiplicities sum to {sum}, expected C({d},{k}) = {total}"
        )));
    }
    let mut mass = vec![BigUint::zero(); classes];
    for r in reps {
        let y = f(&r.nodes)?;
        if y >= classes {
            return Err(Error::Format(format!("class {y} >= {classes}")));
        }
        mass[y] += &r.beta;
    }
    let total = BigInt::from(total);
    Ok(mass
        .into_iter()
        .map(|m| BigRational::new(BigInt::from(m), total.clone()))
        .collect())
}

/// Prediction for `nodes[0]` on the subgraph induced by `nodes`, using clean
/// features.
pub fn classify_induced<T: Scalar>(model: &GnnModel<T>, g: &Graph<T>, nodes: &[usize]) -> Result<usize> {
    let pos = |w: usize| nodes.iter().position(|&x| x == w);
    let edges: Vec<(usize, usize)> = g
        .edges()
        .iter()
        .filter_map(|&(s, d)| Some((pos(s)?, pos(d)?)))
        .collect();
    let features = g.features().select(ndarray::Axis(0), nodes);
    let sub = Graph::new(nodes.len(), edges, features, None, true)?;
    Ok(model.predict_all(&GraphView::clean(&sub))?[0])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerandomizedResult {
    pub node: usize,
    pub d: usize,
    pub k: usize,
    pub representatives: usize,
    pub total: BigUint,
    pub probs: Vec<BigRational>,
    pub prediction: usize,
    pub runner_up: usize,
    /// Largest `rho` with `p* - Δ(rho) > p~ + Δ(rho)` where Δ is the exact
    /// interception probability of retention smoothing.
    pub radius: usize,
}

impl DerandomizedResult {
    /// `|representatives| / C(d, k)`.
    pub fn savings(&self) -> f64 {
        ratio(self.representatives, &self.total)
    }

    pub fn probs_f64(&self) -> Vec<f64> {
        self.probs.iter().map(|p| p.to_f64().unwrap_or(f64::NAN)).collect()
    }
}

fn ratio(a: usize, b: &BigUint) -> f64 {
    BigRational::new(BigInt::from(a), BigInt::from(b.clone()))
        .to_f64()
        .unwrap_or(0.0)
}

/// Enumerates, evaluates and certifies one target.
pub fn derandomize_node<T, F>(
    g: &Graph<T>,
    rf: &ReceptiveField,
    cfg: &RetentionConfig,
    classes: usize,
    f: F,
) -> Result<DerandomizedResult>
where
    F: FnMut(&[usize]) -> Result<usize>,
{
    cfg.validate()?;
    let d = rf.size();
    let k = retention_count(d, cfg.k_rel);
    let reps = enumerate_representatives(g, rf, k, cfg.tau)?;
    let probs = exact_label_probs(&reps, d, k, classes.max(2), f)?;
    let prediction = top(&probs, None);
    let runner_up = top(&probs, Some(prediction));
    let radius = exact_radius(&probs[prediction], &probs[runner_up], d, k);
    Ok(DerandomizedResult {
        node: rf.target(),
        d,
        k,
        representatives: reps.len(),
        total: choose(d, k),
        probs,
        prediction,
        runner_up,
        radius,
    })
}

fn top(p: &[BigRational], exclude: Option<usize>) -> usize {
    let mut best: Option<usize> = None;
    for (c, x) in p.iter().enumerate() {
        if Some(c) != exclude && best.map_or(true, |b| x > &p[b]) {
            best = Some(c);
        }
    }
    best.unwrap_or(0)
}

fn exact_radius(p_top: &BigRational, p_second: &BigRational, d: usize, k: usize) -> usize {
    let half = BigRational::new(BigInt::one(), BigInt::from(2));
    let two = BigRational::from_integer(BigInt::from(2));
    (1..=d)
        .take_while(|&rho| {
            let delta = levine_delta_exact(d, k, rho);
            delta < half && p_top - p_second > &two * &delta
        })
        .last()
        .unwrap_or(0)
}

use num_bigint::BigUint;
use num_integer::binomial;
use num_traits::ToPrimitive;

use super::exact::{delta_exact_ie, delta_tree_exact, DEFAULT_MAX_TERMS};
use super::{
    delta_multiplicative, delta_union, rank, single_source_bounds, BoundMethod, DeltaBound,
    DeltaMethod,
};
use crate::error::{Error, Result};
use crate::graph::ReceptiveField;
use crate::scalar::Probability;
use crate::smoothing::SmoothingProbs;

/// Default cap on `C(m, rho)` attacked subsets for exact enumeration.
pub const DEFAULT_SUBSET_CAP: u128 = 50_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WorstCaseLimits {
    pub max_terms: u128,
    pub subset_cap: u128,
}

impl Default for WorstCaseLimits {
    fn default() -> Self {
        Self {
            max_terms: DEFAULT_MAX_TERMS,
            subset_cap: DEFAULT_SUBSET_CAP,
        }
    }
}

/// Δ for an adversary controlling the `rho` members at distance `>= d_min`
/// that maximize the interception probability.
///
/// `Multiplicative` and `Union` rank single-source bounds. `Exact`
/// enumerates every size-`rho` candidate subset, evaluates each with the tree
/// recursion when the field is a tree and inclusion-exclusion otherwise, and
/// reports the maximizing subset (the lexicographically first on ties).
pub fn delta_worst_case<P: Probability>(
    rf: &ReceptiveField,
    rho: usize,
    d_min: usize,
    probs: &SmoothingProbs<P>,
    method: BoundMethod,
    limits: WorstCaseLimits,
) -> Result<DeltaBound<P>> {
    if rho == 0 {
        return Ok(DeltaBound::new(P::zero(), method_tag(method, rf), 0)
            .with_d_min(d_min)
            .with_attacked(Vec::new()));
    }
    let bound = match method {
        BoundMethod::Multiplicative => {
            delta_multiplicative(&single_source_bounds(rf, d_min, probs), rho)
        }
        BoundMethod::Union => delta_union(&single_source_bounds(rf, d_min, probs), rho),
        BoundMethod::Exact => exact_worst_case(rf, rho, d_min, probs, limits)?,
    };
    let mut bound = bound.with_d_min(d_min);
    bound.rho = rho;
    Ok(bound)
}

fn method_tag(method: BoundMethod, rf: &ReceptiveField) -> DeltaMethod {
    match method {
        BoundMethod::Multiplicative => DeltaMethod::Multiplicative,
        BoundMethod::Union => DeltaMethod::Union,
        BoundMethod::Exact if rf.is_tree() => DeltaMethod::TreeExact,
        BoundMethod::Exact => DeltaMethod::InclusionExclusionExact,
    }
}

fn exact_worst_case<P: Probability>(
    rf: &ReceptiveField,
    rho: usize,
    d_min: usize,
    probs: &SmoothingProbs<P>,
    limits: WorstCaseLimits,
) -> Result<DeltaBound<P>> {
    let candidates = rf.attack_surface(d_min);
    let size = rho.min(candidates.len());
    let count = binomial(BigUint::from(candidates.len()), BigUint::from(size))
        .to_u128()
        .unwrap_or(u128::MAX);
    if count > limits.subset_cap {
        return Err(Error::ResourceLimit {
            what: "attacked subsets for exact worst-case search",
            count,
            limit: limits.subset_cap,
        });
    }
    let tree = rf.is_tree();
    let evaluate = |set: &[usize]| {
        if tree {
            delta_tree_exact(rf, set, probs)
        } else {
            delta_exact_ie(rf, set, probs, limits.max_terms)
        }
    };

    let mut best: Option<DeltaBound<P>> = None;
    let mut idx: Vec<usize> = (0..size).collect();
    loop {
        let set: Vec<usize> = idx.iter().map(|&i| candidates[i]).collect();
        let d = evaluate(&set)?;
        if best.as_ref().map_or(true, |b| d.value > b.value) {
            best = Some(d);
        }
        if !next_combination(&mut idx, candidates.len()) {
            break;
        }
    }
    Ok(best.expect("at least one subset is enumerated"))
}

/// Advances `idx` to the next `idx.len()`-combination of `0..n` in
/// lexicographic order.
fn next_combination(idx: &mut [usize], n: usize) -> bool {
    let k = idx.len();
    let Some(i) = (0..k).rev().find(|&i| idx[i] < n - k + i) else {
        return false;
    };
    idx[i] += 1;
    for j in i + 1..k {
        idx[j] = idx[j - 1] + 1;
    }
    true
}

/// Δ for every budget `1..=rho_max`.
pub fn delta_curve<P: Probability>(
    rf: &ReceptiveField,
    d_min: usize,
    probs: &SmoothingProbs<P>,
    method: BoundMethod,
    rho_max: usize,
    limits: WorstCaseLimits,
) -> Result<Vec<DeltaBound<P>>> {
    match method {
        BoundMethod::Multiplicative | BoundMethod::Union => {
            let ranked = rank(&single_source_bounds(rf, d_min, probs));
            let mut out = Vec::with_capacity(rho_max);
            let mut miss = P::one();
            let mut sum = P::zero();
            for rho in 1..=rho_max {
                if let Some((_, d)) = ranked.get(rho - 1) {
                    miss = miss * (P::one() - d.clone());
                    sum = sum + d.clone();
                }
                let mut b = if method == BoundMethod::Multiplicative {
                    DeltaBound::new(P::one() - miss.clone(), DeltaMethod::Multiplicative, rho)
                } else {
                    let mut b =
                        DeltaBound::new(sum.clone().clamp_unit(), DeltaMethod::Union, rho);
                    b.raw = sum.clone();
                    b
                };
                b.d_min = d_min;
                b.attacked = Some(ranked.iter().take(rho).map(|(w, _)| *w).collect());
                out.push(b);
            }
            Ok(out)
        }
        BoundMethod::Exact => (1..=rho_max)
            .map(|rho| delta_worst_case(rf, rho, d_min, probs, method, limits))
            .collect(),
    }
}

/// Greedy attacked set on a tree: repeatedly adds the candidate that most
/// increases the exact tree value. The result is the exact Δ of one
/// particular set, so it only bounds the worst case from below and must not
/// be used as a certificate.
pub fn tree_greedy_probe<P: Probability>(
    rf: &ReceptiveField,
    rho: usize,
    d_min: usize,
    probs: &SmoothingProbs<P>,
) -> Result<DeltaBound<P>> {
    let candidates = rf.attack_surface(d_min);
    let mut chosen: Vec<usize> = Vec::new();
    let mut current = delta_tree_exact(rf, &chosen, probs)?;
    for _ in 0..rho.min(candidates.len()) {
        let mut best: Option<DeltaBound<P>> = None;
        for &w in candidates.iter().filter(|w| !chosen.contains(w)) {
            let mut trial = chosen.clone();
            trial.push(w);
            let d = delta_tree_exact(rf, &trial, probs)?;
            if best.as_ref().map_or(true, |b| d.value > b.value) {
                best = Some(d);
            }
        }
        current = best.expect("candidate available");
        chosen = current.attacked.clone().unwrap_or_default();
    }
    let mut out = current.with_d_min(d_min);
    out.rho = rho;
    Ok(out)
}

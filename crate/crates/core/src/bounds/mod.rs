//! Probability that an adversarial message reaches the target node.
//!
//! Everything here is generic over [`Probability`], so each bound can be
//! evaluated in `f64` for production use or in exact rationals for checks.
//!
//! Methods, from tightest to loosest:
//! * exact evaluation for a fixed attacked set ([`delta_exact_ie`],
//!   [`delta_tree_exact`]), maximized over attacked sets by
//!   [`delta_worst_case`] with [`BoundMethod::Exact`];
//! * the multiplicative bound over single-source bounds;
//! * the union bound.

mod closed_form;
mod exact;
mod monte_carlo;
mod worst_case;

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::graph::ReceptiveField;
use crate::scalar::Probability;
use crate::smoothing::SmoothingProbs;

pub use closed_form::{
    delta_node_ablation_exact, levine_delta, levine_delta_exact, levine_max_radius,
    max_certifiable_radius,
};
pub use exact::{delta_exact_ie, delta_tree_exact, DEFAULT_MAX_TERMS};
pub use monte_carlo::{delta_monte_carlo, MonteCarloEstimate};
pub use worst_case::{
    delta_curve, delta_worst_case, tree_greedy_probe, WorstCaseLimits, DEFAULT_SUBSET_CAP,
};

/// How a [`DeltaBound`] was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DeltaMethod {
    NodeAblationExact,
    SingleSource,
    Multiplicative,
    Union,
    InclusionExclusionExact,
    TreeExact,
    MonteCarlo,
}

/// Worst-case search strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundMethod {
    Multiplicative,
    Union,
    /// Enumerate attacked subsets, evaluating each exactly.
    Exact,
}

/// A value in `[0, 1]` bounding (or equal to) the interception probability.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaBound<P> {
    pub value: P,
    /// Value before clamping; differs from `value` only for the union bound.
    pub raw: P,
    pub method: DeltaMethod,
    pub rho: usize,
    pub d_min: usize,
    /// The attacked set realizing the value, when one was selected.
    pub attacked: Option<Vec<usize>>,
}

impl<P: Probability> DeltaBound<P> {
    pub(crate) fn new(value: P, method: DeltaMethod, rho: usize) -> Self {
        Self {
            raw: value.clone(),
            value,
            method,
            rho,
            d_min: 0,
            attacked: None,
        }
    }

    pub(crate) fn with_d_min(mut self, d_min: usize) -> Self {
        self.d_min = d_min;
        self
    }

    pub(crate) fn with_attacked(mut self, attacked: Vec<usize>) -> Self {
        self.attacked = Some(attacked);
        self
    }

    pub fn as_f64(&self) -> f64 {
        self.value.to_f64_lossy()
    }
}

/// Upper bound on the probability that `w` reaches the target.
///
/// Exact for the target itself and for any source whose paths share no
/// edge, which covers every source when `k <= 2`.
pub fn delta_single_source<P: Probability>(
    rf: &ReceptiveField,
    w: usize,
    probs: &SmoothingProbs<P>,
) -> DeltaBound<P> {
    let value = if w == rf.target() {
        probs.keep_node()
    } else if !rf.contains(w) {
        P::zero()
    } else {
        let keep = probs.keep_edge();
        let miss = P::product(
            rf.paths(w)
                .iter()
                .map(|q| P::one() - keep.powi(q.len())),
        );
        (P::one() - miss) * probs.keep_node()
    };
    DeltaBound::new(value, DeltaMethod::SingleSource, 1).with_attacked(vec![w])
}

/// Single-source bounds for every member at distance `>= d_min`.
pub fn single_source_bounds<P: Probability>(
    rf: &ReceptiveField,
    d_min: usize,
    probs: &SmoothingProbs<P>,
) -> Vec<(usize, P)> {
    rf.attack_surface(d_min)
        .into_iter()
        .map(|w| (w, delta_single_source(rf, w, probs).value))
        .collect()
}

/// Sorts descending by value, ties broken by ascending node index.
fn rank<P: Probability>(singles: &[(usize, P)]) -> Vec<(usize, P)> {
    let mut sorted = singles.to_vec();
    sorted.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(Ordering::Equal)
            .then(a.0.cmp(&b.0))
    });
    sorted
}

/// `1 - prod(1 - Δ_i)` over the `rho` largest single-source bounds.
pub fn delta_multiplicative<P: Probability>(singles: &[(usize, P)], rho: usize) -> DeltaBound<P> {
    let top: Vec<(usize, P)> = rank(singles).into_iter().take(rho).collect();
    let miss = P::product(top.iter().map(|(_, d)| P::one() - d.clone()));
    DeltaBound::new(P::one() - miss, DeltaMethod::Multiplicative, rho)
        .with_attacked(top.into_iter().map(|(w, _)| w).collect())
}

/// Sum of the `rho` largest single-source bounds, clamped to 1.
pub fn delta_union<P: Probability>(singles: &[(usize, P)], rho: usize) -> DeltaBound<P> {
    let top: Vec<(usize, P)> = rank(singles).into_iter().take(rho).collect();
    let raw = top
        .iter()
        .fold(P::zero(), |acc, (_, d)| acc + d.clone());
    let mut bound = DeltaBound::new(raw.clone().clamp_unit(), DeltaMethod::Union, rho)
        .with_attacked(top.into_iter().map(|(w, _)| w).collect());
    bound.raw = raw;
    bound
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{receptive_field, Graph, DEFAULT_MAX_PATHS};

    fn probs(p_del: f64, p_abl: f64) -> SmoothingProbs<f64> {
        SmoothingProbs::new(p_del, p_abl).unwrap()
    }

    #[test]
    fn single_source_target() {
        let g: Graph = Graph::from_edges(2, &[(0, 1)], true).unwrap();
        let rf = receptive_field(&g, 1, 2, DEFAULT_MAX_PATHS).unwrap();
        let d = delta_single_source(&rf, 1, &probs(0.9, 0.3));
        assert!((d.value - 0.7).abs() < 1e-15);
    }

    #[test]
    fn single_source_one_long_path() {
        let g: Graph = Graph::from_edges(3, &[(0, 1), (1, 2)], true).unwrap();
        let rf = receptive_field(&g, 2, 2, DEFAULT_MAX_PATHS).unwrap();
        let d = delta_single_source(&rf, 0, &probs(0.5, 0.0));
        assert!((d.value - 0.25).abs() < 1e-15);
    }

    #[test]
    fn single_source_two_disjoint_paths() {
        // 0 -> 2 directly and 0 -> 1 -> 2.
        let g: Graph = Graph::from_edges(3, &[(0, 2), (0, 1), (1, 2)], true).unwrap();
        let rf = receptive_field(&g, 2, 2, DEFAULT_MAX_PATHS).unwrap();
        let d = delta_single_source(&rf, 0, &probs(0.5, 0.2));
        assert!((d.value - 0.5).abs() < 1e-15);
    }

    #[test]
    fn single_source_outside_field_is_zero() {
        let g: Graph = Graph::from_edges(4, &[(0, 1), (1, 2), (2, 3)], true).unwrap();
        let rf = receptive_field(&g, 3, 2, DEFAULT_MAX_PATHS).unwrap();
        let d = delta_single_source(&rf, 0, &probs(0.1, 0.1));
        assert_eq!(d.value, 0.0);
        assert_eq!(d.method, DeltaMethod::SingleSource);
    }

    #[test]
    fn multiplicative_examples() {
        let d = delta_multiplicative(&[(0, 0.3f64), (1, 0.2)], 2);
        assert!((d.value - 0.44).abs() < 1e-15);
        let d = delta_multiplicative(&[(4, 0.37)], 1);
        assert_eq!(d.value, 0.37);
        // Fewer candidates than budget uses all of them.
        let d = delta_multiplicative(&[(4, 0.5)], 3);
        assert_eq!(d.value, 0.5);
    }

    #[test]
    fn multiplicative_picks_largest_with_index_ties() {
        let d = delta_multiplicative(&[(5, 0.1), (3, 0.4), (1, 0.4), (2, 0.2)], 2);
        assert_eq!(d.attacked, Some(vec![1, 3]));
    }

    #[test]
    fn union_examples() {
        let d = delta_union(&[(0, 0.3f64), (1, 0.2)], 2);
        assert!((d.value - 0.5).abs() < 1e-15);
        let d = delta_union(&[(0, 0.6f64), (1, 0.6)], 2);
        assert_eq!(d.value, 1.0);
        assert!((d.raw - 1.2).abs() < 1e-15);
    }
}

//! Exact interception probability for a fixed attacked set.

use std::collections::{BTreeMap, BTreeSet};

use super::{DeltaBound, DeltaMethod};
use crate::error::{Error, Result};
use crate::graph::ReceptiveField;
use crate::scalar::Probability;
use crate::smoothing::SmoothingProbs;

/// Default cap on the inclusion-exclusion term count `2^|P|`.
pub const DEFAULT_MAX_TERMS: u128 = 1 << 20;

/// Fixed-width bit set over compressed edge / source ids.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
struct Bits(Vec<u64>);

impl Bits {
    fn new(width: usize) -> Self {
        Self(vec![0; width.div_ceil(64).max(1)])
    }

    fn set(&mut self, i: usize) {
        self.0[i / 64] |= 1 << (i % 64);
    }

    fn union(&self, other: &Self) -> Self {
        Self(self.0.iter().zip(&other.0).map(|(a, b)| a | b).collect())
    }

    fn count(&self) -> usize {
        self.0.iter().map(|w| w.count_ones() as usize).sum()
    }
}

/// Probability that at least one attacked node reaches the target, by
/// inclusion-exclusion over all simple paths from attacked sources.
///
/// A term for a path subset is `(1-p_del)^a (1-p_abl)^b` with `a` the number
/// of distinct logical edges and `b` the number of distinct sources. Subsets
/// with identical `(edges, sources)` unions are merged before evaluation,
/// which leaves the sum unchanged. An attacked target is combined as an
/// independent event of probability `1 - p_abl`.
pub fn delta_exact_ie<P: Probability>(
    rf: &ReceptiveField,
    attacked: &[usize],
    probs: &SmoothingProbs<P>,
    max_terms: u128,
) -> Result<DeltaBound<P>> {
    let attacked: BTreeSet<usize> = attacked.iter().copied().collect();
    let target_attacked = attacked.contains(&rf.target());
    let paths: Vec<_> = attacked
        .iter()
        .filter(|&&w| w != rf.target())
        .flat_map(|&w| rf.paths(w))
        .collect();

    let terms = if paths.len() >= 127 {
        u128::MAX
    } else {
        1u128 << paths.len()
    };
    if !paths.is_empty() && terms > max_terms {
        return Err(Error::ResourceLimit {
            what: "inclusion-exclusion terms (use the tree or multiplicative method)",
            count: terms,
            limit: max_terms,
        });
    }

    let mut edge_ids = BTreeMap::new();
    let mut source_ids = BTreeMap::new();
    for p in &paths {
        for &l in &p.logical {
            let next = edge_ids.len();
            edge_ids.entry(l).or_insert(next);
        }
        let next = source_ids.len();
        source_ids.entry(p.source()).or_insert(next);
    }

    // Signed multiplicity of every (edge union, source union) signature.
    let mut states: BTreeMap<(Bits, Bits), i128> = BTreeMap::new();
    for p in &paths {
        let mut edges = Bits::new(edge_ids.len());
        for l in &p.logical {
            edges.set(edge_ids[l]);
        }
        let mut sources = Bits::new(source_ids.len());
        sources.set(source_ids[&p.source()]);

        let mut next = states.clone();
        *next.entry((edges.clone(), sources.clone())).or_insert(0) += 1;
        for ((e, s), c) in &states {
            *next.entry((e.union(&edges), s.union(&sources))).or_insert(0) -= c;
        }
        next.retain(|_, c| *c != 0);
        states = next;
    }

    let keep_edge = probs.keep_edge();
    let keep_node = probs.keep_node();
    let edge_pow: Vec<P> = (0..=edge_ids.len()).map(|a| keep_edge.powi(a)).collect();
    let node_pow: Vec<P> = (0..=source_ids.len()).map(|b| keep_node.powi(b)).collect();
    let mut via_paths = P::zero();
    for ((e, s), c) in &states {
        let coef = P::from_i128(*c).expect("coefficient fits the probability type");
        via_paths = via_paths + coef * edge_pow[e.count()].clone() * node_pow[s.count()].clone();
    }

    let value = if target_attacked {
        P::one() - (P::one() - via_paths) * probs.p_abl.clone()
    } else {
        via_paths
    };
    Ok(DeltaBound::new(value, DeltaMethod::InclusionExclusionExact, attacked.len())
        .with_attacked(attacked.into_iter().collect()))
}

/// Exact interception probability on a tree-shaped receptive field.
///
/// Evaluates `p(R_i)` bottom-up: `p(D_i) = 1 - prod_j (1 - (1-p_del) p(R_j))`
/// over the children `j` of `i`, and `p(R_i) = 1 - p_abl (1 - p(D_i))` when
/// `i` is attacked, `p(D_i)` otherwise.
pub fn delta_tree_exact<P: Probability>(
    rf: &ReceptiveField,
    attacked: &[usize],
    probs: &SmoothingProbs<P>,
) -> Result<DeltaBound<P>> {
    if !rf.is_tree() {
        return Err(Error::Shape(format!(
            "receptive field of node {} is not a tree",
            rf.target()
        )));
    }
    let attacked: BTreeSet<usize> = attacked.iter().copied().collect();

    let mut children: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for &w in rf.members() {
        if w != rf.target() {
            let parent = rf.paths(w)[0].nodes[1];
            children.entry(parent).or_default().push(w);
        }
    }

    // Members by decreasing distance so children are resolved first.
    let mut order: Vec<usize> = rf.members().to_vec();
    order.sort_by_key(|w| std::cmp::Reverse(rf.distance(*w).unwrap_or(0)));

    let keep_edge = probs.keep_edge();
    let mut reach: BTreeMap<usize, P> = BTreeMap::new();
    for w in order {
        let miss = P::product(
            children
                .get(&w)
                .into_iter()
                .flatten()
                .map(|c| P::one() - keep_edge.clone() * reach[c].clone()),
        );
        let via_branches = P::one() - miss;
        let r = if attacked.contains(&w) {
            P::one() - probs.p_abl.clone() * (P::one() - via_branches)
        } else {
            via_branches
        };
        reach.insert(w, r);
    }

    let value = reach.remove(&rf.target()).unwrap_or_else(P::zero);
    Ok(DeltaBound::new(value, DeltaMethod::TreeExact, attacked.len())
        .with_attacked(attacked.into_iter().collect()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{receptive_field, Graph, DEFAULT_MAX_PATHS};
    use num_rational::BigRational;

    fn probs(p_del: f64, p_abl: f64) -> SmoothingProbs<f64> {
        SmoothingProbs::new(p_del, p_abl).unwrap()
    }

    #[test]
    fn one_edge_one_term() {
        let g: Graph = Graph::from_edges(2, &[(0, 1)], true).unwrap();
        let rf = receptive_field(&g, 1, 2, DEFAULT_MAX_PATHS).unwrap();
        let d = delta_exact_ie(&rf, &[0], &probs(0.3, 0.4), DEFAULT_MAX_TERMS).unwrap();
        assert!((d.value - 0.7 * 0.6).abs() < 1e-15);
    }

    #[test]
    fn bottleneck_edge() {
        // 1 -> 0 -> t and 2 -> 0 -> t share the edge 0 -> t.
        let g: Graph = Graph::from_edges(4, &[(1, 0), (2, 0), (0, 3)], true).unwrap();
        let rf = receptive_field(&g, 3, 2, DEFAULT_MAX_PATHS).unwrap();
        let p_del = 0.35;
        let d = delta_exact_ie(&rf, &[1, 2], &probs(p_del, 0.0), DEFAULT_MAX_TERMS).unwrap();
        let expected = (1.0 - p_del) * (1.0 - p_del * p_del);
        assert!((d.value - expected).abs() < 1e-14);
        let t = delta_tree_exact(&rf, &[1, 2], &probs(p_del, 0.0)).unwrap();
        assert!((t.value - expected).abs() < 1e-14);
    }

    #[test]
    fn attacked_target_only() {
        let g: Graph = Graph::from_edges(3, &[(0, 1), (1, 2)], false).unwrap();
        let rf = receptive_field(&g, 1, 2, DEFAULT_MAX_PATHS).unwrap();
        let d = delta_exact_ie(&rf, &[1], &probs(0.5, 0.4), DEFAULT_MAX_TERMS).unwrap();
        assert!((d.value - 0.6).abs() < 1e-15);
    }

    #[test]
    fn lone_target_in_tree() {
        let g: Graph = Graph::from_edges(1, &[], true).unwrap();
        let rf = receptive_field(&g, 0, 2, DEFAULT_MAX_PATHS).unwrap();
        let d = delta_tree_exact(&rf, &[0], &probs(0.2, 0.7)).unwrap();
        assert!((d.value - 0.3).abs() < 1e-15);
    }

    #[test]
    fn term_cap_refuses() {
        let mut edges = Vec::new();
        for a in 0..5 {
            for b in 0..5 {
                if a != b {
                    edges.push((a, b));
                }
            }
        }
        let g: Graph = Graph::from_edges(5, &edges, true).unwrap();
        let rf = receptive_field(&g, 0, 3, DEFAULT_MAX_PATHS).unwrap();
        let err = delta_exact_ie(&rf, &[1, 2, 3, 4], &probs(0.5, 0.5), 1 << 10).unwrap_err();
        assert!(matches!(err, Error::ResourceLimit { .. }));
    }

    #[test]
    fn non_tree_rejected_by_tree_method() {
        let g: Graph = Graph::from_edges(3, &[(0, 1), (1, 2), (0, 2)], false).unwrap();
        let rf = receptive_field(&g, 2, 2, DEFAULT_MAX_PATHS).unwrap();
        assert!(matches!(
            delta_tree_exact(&rf, &[0], &probs(0.1, 0.1)),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn undirected_shared_coin_counts_once() {
        // Triangle a=0, b=1, target=2, k=2. Paths from 0: 0->2, 0->1->2;
        // from 1: 1->2, 1->0->2. Edges 0->1 and 1->0 are one coin.
        let g: Graph = Graph::from_edges(3, &[(0, 1), (1, 2), (0, 2)], false).unwrap();
        let rf = receptive_field(&g, 2, 2, DEFAULT_MAX_PATHS).unwrap();
        let q = 0.5;
        let d = delta_exact_ie(&rf, &[0, 1], &probs(q, 0.0), DEFAULT_MAX_TERMS).unwrap();
        // Both sources attacked: a message arrives iff edge 0-2 or 1-2 is kept.
        assert!((d.value - (1.0 - q * q)).abs() < 1e-15);
    }

    #[test]
    fn rational_evaluation_is_exact() {
        let g: Graph = Graph::from_edges(4, &[(1, 0), (2, 0), (0, 3)], true).unwrap();
        let rf = receptive_field(&g, 3, 2, DEFAULT_MAX_PATHS).unwrap();
        let half = BigRational::new(1.into(), 2.into());
        let probs = SmoothingProbs::new(half.clone(), BigRational::from_integer(0.into())).unwrap();
        let d = delta_exact_ie(&rf, &[1, 2], &probs, DEFAULT_MAX_TERMS).unwrap();
        // (1/2)(1 - 1/4) = 3/8
        assert_eq!(d.value, BigRational::new(3.into(), 8.into()));
    }
}

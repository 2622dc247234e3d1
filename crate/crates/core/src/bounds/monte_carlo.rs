use std::collections::VecDeque;

use crate::graph::{Graph, ReceptiveField};
use crate::scalar::Probability;
use crate::smoothing::{sample, SmoothingProbs};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonteCarloEstimate {
    pub value: f64,
    pub std_err: f64,
    pub samples: u64,
}

/// Estimates the interception probability by sampling the smoothing
/// distribution and searching, in each sample, for an attacked non-ablated
/// node with a kept path of at most `k` hops to the target.
///
/// Independent of path enumeration: reachability is checked by a
/// depth-limited breadth-first search on the sampled graph.
pub fn delta_monte_carlo<T, P: Probability>(
    g: &Graph<T>,
    rf: &ReceptiveField,
    attacked: &[usize],
    probs: &SmoothingProbs<P>,
    samples: u64,
    seed: u64,
) -> MonteCarloEstimate {
    let k = rf.k();
    let v = rf.target();
    let mut is_attacked = vec![false; g.n()];
    for &w in attacked {
        is_attacked[w] = true;
    }
    let mut hits = 0u64;
    let mut depth = vec![usize::MAX; g.n()];
    let mut queue = VecDeque::new();
    for i in 0..samples {
        let s = sample(g, probs, seed, i);
        depth.iter_mut().for_each(|d| *d = usize::MAX);
        depth[v] = 0;
        queue.clear();
        queue.push_back(v);
        let mut hit = false;
        while let Some(u) = queue.pop_front() {
            if is_attacked[u] && !s.ablated[u] {
                hit = true;
                break;
            }
            if depth[u] == k {
                continue;
            }
            for &e in g.in_edges(u) {
                let src = g.edges()[e].0;
                if s.kept[e] && depth[src] == usize::MAX {
                    depth[src] = depth[u] + 1;
                    queue.push_back(src);
                }
            }
        }
        hits += u64::from(hit);
    }
    let p = hits as f64 / samples.max(1) as f64;
    MonteCarloEstimate {
        value: p,
        std_err: (p * (1.0 - p) / samples.max(1) as f64).sqrt(),
        samples,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{receptive_field, DEFAULT_MAX_PATHS};

    #[test]
    fn all_edges_deleted_target_safe() {
        let g: Graph = Graph::from_edges(3, &[(0, 1), (1, 2)], false).unwrap();
        let rf = receptive_field(&g, 2, 2, DEFAULT_MAX_PATHS).unwrap();
        let probs = SmoothingProbs::new(1.0, 0.0).unwrap();
        let est = delta_monte_carlo(&g, &rf, &[0, 1], &probs, 500, 3);
        assert_eq!(est.value, 0.0);
    }

    #[test]
    fn full_ablation_blocks_everything() {
        let g: Graph = Graph::from_edges(3, &[(0, 1), (1, 2)], false).unwrap();
        let rf = receptive_field(&g, 2, 2, DEFAULT_MAX_PATHS).unwrap();
        let probs = SmoothingProbs::new(0.0, 1.0).unwrap();
        let est = delta_monte_carlo(&g, &rf, &[0, 1, 2], &probs, 500, 3);
        assert_eq!(est.value, 0.0);
    }
}

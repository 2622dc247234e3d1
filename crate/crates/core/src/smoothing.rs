//! Random edge deletion and node-feature ablation.
//!
//! Draws are counter based: sample `i` is generated from a ChaCha stream
//! keyed by the master seed with stream id `i`, consuming one uniform per
//! logical edge (ascending id) and then one per node (ascending index). A
//! sample is therefore identical no matter which thread produces it or in
//! which order samples are requested.

use ndarray::{Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::scalar::{Probability, Scalar};

/// Deletion and ablation probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothingProbs<P> {
    pub p_del: P,
    pub p_abl: P,
}

impl<P: Probability> SmoothingProbs<P> {
    pub fn new(p_del: P, p_abl: P) -> Result<Self> {
        let unit = |p: &P| *p >= P::zero() && *p <= P::one();
        if !unit(&p_del) || !unit(&p_abl) {
            return Err(Error::Config(format!(
                "probabilities must lie in [0, 1], got p_del = {p_del:?}, p_abl = {p_abl:?}"
            )));
        }
        Ok(Self { p_del, p_abl })
    }

    pub fn keep_edge(&self) -> P {
        P::one() - self.p_del.clone()
    }

    pub fn keep_node(&self) -> P {
        P::one() - self.p_abl.clone()
    }
}

/// Full smoothing configuration: probabilities, ablation token, layer count
/// and master seed.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothingConfig<T> {
    pub probs: SmoothingProbs<T>,
    pub token: Vec<T>,
    pub k: usize,
    pub seed: u64,
}

impl<T: Scalar> SmoothingConfig<T> {
    pub fn new(p_del: T, p_abl: T, token: Vec<T>, k: usize, seed: u64) -> Result<Self> {
        Ok(Self {
            probs: SmoothingProbs::new(p_del, p_abl)?,
            token,
            k,
            seed,
        })
    }

    /// Configuration with an all-zero token of length `d`.
    pub fn zero_token(p_del: T, p_abl: T, d: usize, k: usize, seed: u64) -> Result<Self> {
        Self::new(p_del, p_abl, vec![T::zero(); d], k, seed)
    }

    pub fn p_del(&self) -> T {
        self.probs.p_del
    }

    pub fn p_abl(&self) -> T {
        self.probs.p_abl
    }

    pub fn validate_for(&self, g: &Graph<T>) -> Result<()> {
        if self.token.len() != g.feature_dim() {
            return Err(Error::Dimension(format!(
                "token length {} != feature dimension {}",
                self.token.len(),
                g.feature_dim()
            )));
        }
        Ok(())
    }

    pub fn sample(&self, g: &Graph<T>, sample_index: u64) -> SmoothedSample {
        sample(g, &self.probs, self.seed, sample_index)
    }
}

/// One draw from the smoothing distribution.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SmoothedSample {
    /// Kept flag per directed edge of the source graph.
    pub kept: Vec<bool>,
    /// Ablated flag per node.
    pub ablated: Vec<bool>,
    pub sample_index: u64,
}

impl SmoothedSample {
    pub fn kept_edges(&self) -> impl Iterator<Item = usize> + '_ {
        self.kept
            .iter()
            .enumerate()
            .filter_map(|(e, &k)| k.then_some(e))
    }
}

/// Draws sample `sample_index` for graph `g`.
pub fn sample<T, P: Probability>(
    g: &Graph<T>,
    probs: &SmoothingProbs<P>,
    seed: u64,
    sample_index: u64,
) -> SmoothedSample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(sample_index);
    let p_del = probs.p_del.to_f64_lossy();
    let p_abl = probs.p_abl.to_f64_lossy();
    let deleted: Vec<bool> = (0..g.num_logical_edges())
        .map(|_| rng.gen::<f64>() < p_del)
        .collect();
    let ablated = (0..g.n()).map(|_| rng.gen::<f64>() < p_abl).collect();
    let kept = (0..g.num_edges())
        .map(|e| !deleted[g.logical_edge(e)])
        .collect();
    SmoothedSample {
        kept,
        ablated,
        sample_index,
    }
}

/// A graph seen through an edge mask and an ablation mask.
#[derive(Debug, Clone, Copy)]
pub struct GraphView<'a, T> {
    graph: &'a Graph<T>,
    kept: Option<&'a [bool]>,
    ablated: Option<&'a [bool]>,
    token: &'a [T],
}

impl<'a, T: Scalar> GraphView<'a, T> {
    /// Unperturbed view of `g`.
    pub fn clean(graph: &'a Graph<T>) -> Self {
        Self {
            graph,
            kept: None,
            ablated: None,
            token: &[],
        }
    }

    pub fn with_kept(mut self, kept: &'a [bool]) -> Self {
        debug_assert_eq!(kept.len(), self.graph.num_edges());
        self.kept = Some(kept);
        self
    }

    pub fn with_ablation(mut self, ablated: &'a [bool], token: &'a [T]) -> Self {
        debug_assert_eq!(ablated.len(), self.graph.n());
        self.ablated = Some(ablated);
        self.token = token;
        self
    }

    pub fn graph(&self) -> &'a Graph<T> {
        self.graph
    }

    pub fn n(&self) -> usize {
        self.graph.n()
    }

    pub fn feature_dim(&self) -> usize {
        self.graph.feature_dim()
    }

    pub fn edge_kept(&self, e: usize) -> bool {
        self.kept.map_or(true, |k| k[e])
    }

    pub fn kept_edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.graph
            .edges()
            .iter()
            .enumerate()
            .filter(|(e, _)| self.edge_kept(*e))
            .map(|(_, &edge)| edge)
    }

    pub fn is_ablated(&self, i: usize) -> bool {
        self.ablated.map_or(false, |a| a[i])
    }

    pub fn ablated_mask(&self) -> Option<&'a [bool]> {
        self.ablated
    }

    pub fn token(&self) -> &'a [T] {
        self.token
    }

    pub fn feature_row(&self, i: usize) -> ArrayView1<'_, T> {
        if self.is_ablated(i) {
            ArrayView1::from(self.token)
        } else {
            self.graph.features().row(i)
        }
    }

    /// Feature matrix with ablated rows replaced by the token.
    pub fn feature_matrix(&self) -> Array2<T> {
        let mut x = self.graph.features().clone();
        if let Some(mask) = self.ablated {
            let token = ArrayView1::from(self.token);
            for (i, &a) in mask.iter().enumerate() {
                if a {
                    x.row_mut(i).assign(&token);
                }
            }
        }
        x
    }

    /// Materializes the view as an owned graph.
    pub fn to_graph(&self) -> Result<Graph<T>> {
        let labels = self.graph.labels().map(<[usize]>::to_vec);
        Graph::new(
            self.n(),
            self.kept_edges().collect::<Vec<_>>(),
            self.feature_matrix(),
            labels,
            true,
        )
    }
}

/// Applies a sample to `g`: keeps only sampled edges and replaces ablated
/// feature rows with the configuration's token.
pub fn apply<'a, T: Scalar>(
    g: &'a Graph<T>,
    s: &'a SmoothedSample,
    cfg: &'a SmoothingConfig<T>,
) -> GraphView<'a, T> {
    GraphView::clean(g)
        .with_kept(&s.kept)
        .with_ablation(&s.ablated, &cfg.token)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn triangle() -> Graph {
        Graph::new(
            3,
            vec![(0, 1), (1, 2), (0, 2)],
            array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]],
            None,
            false,
        )
        .unwrap()
    }

    #[test]
    fn identity_when_probabilities_are_zero() {
        let g = triangle();
        let cfg = SmoothingConfig::zero_token(0.0, 0.0, 2, 2, 7).unwrap();
        for i in 0..20 {
            let s = cfg.sample(&g, i);
            assert!(s.kept.iter().all(|&k| k));
            assert!(s.ablated.iter().all(|&a| !a));
        }
    }

    #[test]
    fn everything_deleted_at_one() {
        let g = triangle();
        let cfg = SmoothingConfig::zero_token(1.0, 1.0, 2, 2, 7).unwrap();
        let s = cfg.sample(&g, 3);
        assert_eq!(s.kept_edges().count(), 0);
        assert!(s.ablated.iter().all(|&a| a));
    }

    #[test]
    fn orientations_share_a_coin() {
        let g = triangle();
        let cfg = SmoothingConfig::zero_token(0.5, 0.0, 2, 2, 11).unwrap();
        for i in 0..200 {
            let s = cfg.sample(&g, i);
            for (e, &(a, b)) in g.edges().iter().enumerate() {
                let rev = g.edge_index(b, a).unwrap();
                assert_eq!(s.kept[e], s.kept[rev]);
            }
        }
    }

    #[test]
    fn invalid_probability_rejected() {
        assert!(SmoothingConfig::zero_token(1.5, 0.0, 2, 2, 0).is_err());
        assert!(SmoothingConfig::zero_token(0.0, -0.1, 2, 2, 0).is_err());
    }

    #[test]
    fn apply_all_ablated_gives_token_rows() {
        let g = triangle();
        let cfg = SmoothingConfig::new(0.0, 1.0, vec![9.0, 8.0], 2, 1).unwrap();
        let s = cfg.sample(&g, 0);
        let view = apply(&g, &s, &cfg);
        for i in 0..3 {
            assert_eq!(view.feature_row(i).to_vec(), vec![9.0, 8.0]);
        }
    }

    #[test]
    fn apply_identity_sample() {
        let g = triangle();
        let cfg = SmoothingConfig::zero_token(0.0, 0.0, 2, 2, 1).unwrap();
        let s = cfg.sample(&g, 0);
        let out = apply(&g, &s, &cfg).to_graph().unwrap();
        assert_eq!(out.edges(), g.edges());
        assert_eq!(out.features(), g.features());
    }

    #[test]
    fn single_ablated_row_replaced() {
        let g = triangle();
        let cfg = SmoothingConfig::new(0.0, 0.0, vec![0.0, 0.0], 2, 1).unwrap();
        let s = SmoothedSample {
            kept: vec![true, false, true, true, false, true],
            ablated: vec![false, true, false],
            sample_index: 0,
        };
        let out = apply(&g, &s, &cfg).to_graph().unwrap();
        assert_eq!(out.features().row(0), g.features().row(0));
        assert_eq!(out.features().row(1).to_vec(), vec![0.0, 0.0]);
        assert_eq!(out.features().row(2), g.features().row(2));
        assert_eq!(out.num_edges(), 4);
    }
}

//! Two-block stochastic block model with block-correlated binary features.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::graph::Graph;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TwoBlock {
    pub n: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub feature_dim: usize,
    /// Probability that a feature in the node's own half is on.
    pub q_in: f64,
    /// Probability that a feature in the other half is on.
    pub q_out: f64,
    pub seed: u64,
}

impl Default for TwoBlock {
    fn default() -> Self {
        Self {
            n: 200,
            p_in: 0.05,
            p_out: 0.005,
            feature_dim: 32,
            q_in: 0.3,
            q_out: 0.05,
            seed: 0,
        }
    }
}

impl TwoBlock {
    /// Nodes `0..n/2` form block 0, the rest block 1; labels are blocks.
    pub fn generate<T: Scalar>(&self) -> Result<Graph<T>> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let half = self.n / 2;
        let block = |i: usize| usize::from(i >= half);
        let mut edges = Vec::new();
        for i in 0..self.n {
            for j in i + 1..self.n {
                let p = if block(i) == block(j) { self.p_in } else { self.p_out };
                if rng.gen::<f64>() < p {
                    edges.push((i, j));
                }
            }
        }
        let d = self.feature_dim;
        let features = Array2::from_shape_fn((self.n, d), |(i, j)| {
            let own = usize::from(j >= d / 2) == block(i);
            let q = if own { self.q_in } else { self.q_out };
            if rng.gen::<f64>() < q {
                T::one()
            } else {
                T::zero()
            }
        });
        let labels = (0..self.n).map(block).collect();
        Graph::new(self.n, edges, features, Some(labels), false)
    }
}

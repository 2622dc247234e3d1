//! Two-layer GCN with a learnable ablation token and optional skip path.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::smoothing::GraphView;

/// Base classifier `f`.
///
/// Layer `l` computes `Â H W_l` where `Â` is the symmetrically normalized
/// adjacency of the (possibly smoothed) graph with self-loops; degrees count
/// incoming kept edges plus one. ReLU follows the first layer. With `skip`,
/// the clean features are also pushed through both weight matrices with no
/// edges and the result is added to the output.
#[derive(Debug, Clone, PartialEq)]
pub struct GnnModel<T> {
    pub w1: Array2<T>,
    pub w2: Array2<T>,
    pub token: Array1<T>,
    pub skip: bool,
}

impl<T: Scalar> GnnModel<T> {
    pub fn new(w1: Array2<T>, w2: Array2<T>, token: Array1<T>, skip: bool) -> Result<Self> {
        if w1.ncols() != w2.nrows() {
            return Err(Error::Shape(format!(
                "W1 is {:?} but W2 is {:?}",
                w1.dim(),
                w2.dim()
            )));
        }
        if token.len() != w1.nrows() {
            return Err(Error::Shape(format!(
                "token length {} != feature dimension {}",
                token.len(),
                w1.nrows()
            )));
        }
        Ok(Self { w1, w2, token, skip })
    }

    /// Glorot-uniform weights and token.
    pub fn init<R: Rng>(d: usize, hidden: usize, classes: usize, skip: bool, rng: &mut R) -> Self {
        let w1 = glorot(d, hidden, rng);
        let w2 = glorot(hidden, classes, rng);
        let token = glorot(1, d, rng).remove_axis(Axis(0));
        Self { w1, w2, token, skip }
    }

    pub fn feature_dim(&self) -> usize {
        self.w1.nrows()
    }

    pub fn hidden(&self) -> usize {
        self.w1.ncols()
    }

    pub fn classes(&self) -> usize {
        self.w2.ncols()
    }

    fn check(&self, view: &GraphView<'_, T>) -> Result<()> {
        if view.feature_dim() != self.feature_dim() {
            return Err(Error::Shape(format!(
                "graph has {} features, model expects {}",
                view.feature_dim(),
                self.feature_dim()
            )));
        }
        Ok(())
    }

    /// Class scores for every node (`n x C`).
    ///
    /// Ablated rows use the model's own token, regardless of any token
    /// attached to the view.
    pub fn forward_all(&self, view: &GraphView<'_, T>) -> Result<Array2<T>> {
        self.check(view)?;
        Ok(self.run(view, None).out)
    }

    /// Class scores for node `v`.
    pub fn forward(&self, view: &GraphView<'_, T>, v: usize) -> Result<Array1<T>> {
        if v >= view.n() {
            return Err(Error::Dimension(format!("node {v} >= n = {}", view.n())));
        }
        Ok(self.forward_all(view)?.row(v).to_owned())
    }

    /// Predicted class for every node.
    pub fn predict_all(&self, view: &GraphView<'_, T>) -> Result<Vec<usize>> {
        Ok(self
            .forward_all(view)?
            .rows()
            .into_iter()
            .map(argmax)
            .collect())
    }

    pub(crate) fn run(&self, view: &GraphView<'_, T>, dropout: Option<&Array2<T>>) -> Tape<T> {
        let adj = NormAdj::new(view);
        let mut z0 = input_matrix(view, &self.token);
        if let Some(mask) = dropout {
            z0 = z0 * mask;
        }
        let p1 = z0.dot(&self.w1);
        let a1 = adj.propagate(&p1);
        let h = a1.mapv(relu);
        let p2 = h.dot(&self.w2);
        let mut out = adj.propagate(&p2);

        let skip = self.skip.then(|| {
            let mut xs = view.graph().features().clone();
            if let Some(mask) = dropout {
                xs = xs * mask;
            }
            let s1 = xs.dot(&self.w1);
            let hs = s1.mapv(relu);
            out += &hs.dot(&self.w2);
            SkipTape { xs, s1, hs }
        });

        Tape {
            adj,
            z0,
            a1,
            h,
            out,
            skip,
        }
    }
}

pub(crate) struct SkipTape<T> {
    pub xs: Array2<T>,
    pub s1: Array2<T>,
    pub hs: Array2<T>,
}

/// Intermediate values kept for the backward pass.
pub(crate) struct Tape<T> {
    pub adj: NormAdj<T>,
    pub z0: Array2<T>,
    pub a1: Array2<T>,
    pub h: Array2<T>,
    pub out: Array2<T>,
    pub skip: Option<SkipTape<T>>,
}

/// Kept edges with their normalization weights.
pub(crate) struct NormAdj<T> {
    edges: Vec<(usize, usize, T)>,
    self_weight: Vec<T>,
}

impl<T: Scalar> NormAdj<T> {
    fn new(view: &GraphView<'_, T>) -> Self {
        let n = view.n();
        let mut deg = vec![T::one(); n];
        let kept: Vec<(usize, usize)> = view.kept_edges().collect();
        for &(_, d) in &kept {
            deg[d] += T::one();
        }
        let inv_sqrt: Vec<T> = deg.iter().map(|d| d.sqrt().recip()).collect();
        Self {
            edges: kept
                .into_iter()
                .map(|(s, d)| (s, d, inv_sqrt[s] * inv_sqrt[d]))
                .collect(),
            self_weight: deg.iter().map(|d| d.recip()).collect(),
        }
    }

    /// `Â x`: row `i` aggregates itself and every in-neighbour.
    pub fn propagate(&self, x: &Array2<T>) -> Array2<T> {
        let mut out = x.clone();
        for (i, mut row) in out.rows_mut().into_iter().enumerate() {
            row *= self.self_weight[i];
        }
        for &(s, d, w) in &self.edges {
            let src = x.row(s);
            out.row_mut(d).scaled_add(w, &src);
        }
        out
    }

    /// `Âᵀ g`.
    pub fn propagate_transpose(&self, g: &Array2<T>) -> Array2<T> {
        let mut out = g.clone();
        for (i, mut row) in out.rows_mut().into_iter().enumerate() {
            row *= self.self_weight[i];
        }
        for &(s, d, w) in &self.edges {
            let dst = g.row(d);
            out.row_mut(s).scaled_add(w, &dst);
        }
        out
    }
}

fn input_matrix<T: Scalar>(view: &GraphView<'_, T>, token: &Array1<T>) -> Array2<T> {
    let mut x = view.graph().features().clone();
    if let Some(mask) = view.ablated_mask() {
        for (i, &a) in mask.iter().enumerate() {
            if a {
                x.row_mut(i).assign(token);
            }
        }
    }
    x
}

pub(crate) fn relu<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        x
    } else {
        T::zero()
    }
}

/// Index of the largest score; ties go to the lowest index.
pub fn argmax<T: Scalar>(scores: ArrayView1<'_, T>) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

fn glorot<T: Scalar, R: Rng>(fan_in: usize, fan_out: usize, rng: &mut R) -> Array2<T> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Array2::from_shape_fn((fan_in, fan_out), |_| T::of(rng.gen_range(-limit..=limit)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Graph;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn model(skip: bool) -> GnnModel<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        GnnModel::init(3, 4, 2, skip, &mut rng)
    }

    fn graph() -> Graph {
        Graph::new(
            3,
            vec![(0, 1), (1, 2)],
            array![[1.0, 0.0, 2.0], [0.0, 1.0, -1.0], [3.0, 1.0, 0.0]],
            None,
            false,
        )
        .unwrap()
    }

    #[test]
    fn no_edges_uses_own_features_only() {
        let m = model(false);
        let g = graph();
        let none = vec![false; g.num_edges()];
        let view = GraphView::clean(&g).with_kept(&none);
        let out = m.forward(&view, 1).unwrap();
        let x = g.features().row(1).to_owned();
        let expected = x.dot(&m.w1).mapv(relu).dot(&m.w2);
        for (a, b) in out.iter().zip(expected.iter()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_inputs_tie_to_first_class() {
        let mut m = model(false);
        m.token.fill(0.0);
        let g = Graph::new(2, vec![(0, 1)], Array2::zeros((2, 3)), None, false).unwrap();
        let view = GraphView::clean(&g);
        let out = m.forward(&view, 0).unwrap();
        assert!(out.iter().all(|&s| s == out[0]));
        assert_eq!(argmax(out.view()), 0);
    }

    #[test]
    fn dimension_mismatch_is_shape_error() {
        let m = model(false);
        let g: Graph = Graph::from_edges(2, &[(0, 1)], false).unwrap();
        assert!(matches!(
            m.forward(&GraphView::clean(&g), 0),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn skip_with_all_edges_deleted_matches_clean_edge_free_pass() {
        let m = model(true);
        let g = graph();
        let none = vec![false; g.num_edges()];
        let all = vec![true; g.n()];
        let token = vec![0.0; 3];
        let smoothed = GraphView::clean(&g).with_kept(&none).with_ablation(&all, &token);
        let out = m.forward_all(&smoothed).unwrap();
        let plain = GnnModel {
            skip: false,
            ..m.clone()
        };
        let clean_free = plain
            .forward_all(&GraphView::clean(&g).with_kept(&none))
            .unwrap();
        let token_only = plain
            .forward_all(&GraphView::clean(&g).with_kept(&none).with_ablation(&all, &token))
            .unwrap();
        let expected = &clean_free + &token_only;
        for (a, b) in out.iter().zip(expected.iter()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn transpose_is_adjoint() {
        let g = graph();
        let view = GraphView::clean(&g);
        let adj = NormAdj::new(&view);
        let x = array![[1.0, 2.0], [0.5, -1.0], [3.0, 0.0]];
        let y = array![[0.2, 1.0], [-1.0, 4.0], [0.0, 2.5]];
        let lhs = (&adj.propagate(&x) * &y).sum();
        let rhs = (&x * &adj.propagate_transpose(&y)).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }
}

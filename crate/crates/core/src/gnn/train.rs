//! Full-batch training with hand-written reverse-mode gradients.

use ndarray::{Array1, Array2, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{argmax, GnnModel, Tape};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::scalar::Scalar;
use crate::smoothing::{sample, GraphView, SmoothingProbs};

// Stream tags separating the training draws from inference draws.
const TRAIN_SAMPLE_TAG: u64 = 0x7472_6169_6e5f_736d;
const VALID_SAMPLE_TAG: u64 = 0x7661_6c69_645f_736d;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub patience: usize,
    /// Dropout rate on the input feature matrix.
    pub dropout: f64,
    /// Training-time edge deletion probability.
    pub p_del: f64,
    /// Training-time ablation probability.
    pub p_abl: f64,
    pub hidden: usize,
    pub skip: bool,
    /// Smoothed draws averaged for each validation evaluation.
    pub val_samples: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            weight_decay: 5e-4,
            epochs: 1000,
            patience: 50,
            dropout: 0.8,
            p_del: 0.0,
            p_abl: 0.0,
            hidden: 64,
            skip: false,
            val_samples: 4,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        SmoothingProbs::new(self.p_del, self.p_abl)?;
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!(
                "dropout must lie in [0, 1), got {}",
                self.dropout
            )));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if self.hidden == 0 {
            return Err(Error::Config("hidden must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss: f64,
    pub train_acc: f64,
    pub val_loss: f64,
    pub val_acc: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
    pub best_epoch: usize,
}

/// Gradients with respect to every trainable parameter.
#[derive(Debug, Clone)]
pub struct Grads<T> {
    pub w1: Array2<T>,
    pub w2: Array2<T>,
    pub token: Array1<T>,
}

/// Mean cross-entropy over `nodes` and its gradients.
///
/// `dropout` is an optional `n x d` multiplicative mask applied to the input
/// features (already scaled by the keep probability).
pub fn loss_and_grads<T: Scalar>(
    model: &GnnModel<T>,
    view: &GraphView<'_, T>,
    nodes: &[usize],
    labels: &[usize],
    dropout: Option<&Array2<T>>,
) -> Result<(T, Grads<T>)> {
    if nodes.is_empty() {
        return Err(Error::Config("no labelled nodes to train on".into()));
    }
    if view.feature_dim() != model.feature_dim() {
        return Err(Error::Shape("feature dimension mismatch".into()));
    }
    let tape = model.run(view, dropout);
    let (loss, d_out) = cross_entropy(&tape.out, nodes, labels);
    Ok((loss, backward(model, view, &tape, &d_out, dropout)))
}

fn cross_entropy<T: Scalar>(out: &Array2<T>, nodes: &[usize], labels: &[usize]) -> (T, Array2<T>) {
    let m = T::of(nodes.len() as f64);
    let mut grad = Array2::zeros(out.dim());
    let mut loss = T::zero();
    for &i in nodes {
        let row = out.row(i);
        let max = row.fold(T::neg_infinity(), |a, &b| a.max(b));
        let exp = row.mapv(|x| (x - max).exp());
        let z = exp.sum();
        let y = labels[i];
        loss += z.ln() + max - row[y];
        let mut g = grad.row_mut(i);
        Zip::from(&mut g).and(&exp).for_each(|g, &e| *g = e / z / m);
        g[y] -= T::one() / m;
    }
    (loss / m, grad)
}

fn backward<T: Scalar>(
    model: &GnnModel<T>,
    view: &GraphView<'_, T>,
    tape: &Tape<T>,
    d_out: &Array2<T>,
    dropout: Option<&Array2<T>>,
) -> Grads<T> {
    let d_p2 = tape.adj.propagate_transpose(d_out);
    let mut w2 = tape.h.t().dot(&d_p2);
    let mut d_a1 = d_p2.dot(&model.w2.t());
    Zip::from(&mut d_a1)
        .and(&tape.a1)
        .for_each(|g, &a| if a <= T::zero() { *g = T::zero() });
    let d_p1 = tape.adj.propagate_transpose(&d_a1);
    let mut w1 = tape.z0.t().dot(&d_p1);
    let mut d_z0 = d_p1.dot(&model.w1.t());
    if let Some(mask) = dropout {
        d_z0 = d_z0 * mask;
    }
    let mut token = Array1::zeros(model.feature_dim());
    if let Some(ablated) = view.ablated_mask() {
        for (i, &a) in ablated.iter().enumerate() {
            if a {
                token += &d_z0.row(i);
            }
        }
    }

    if let Some(skip) = &tape.skip {
        w2 += &skip.hs.t().dot(d_out);
        let mut d_s1 = d_out.dot(&model.w2.t());
        Zip::from(&mut d_s1)
            .and(&skip.s1)
            .for_each(|g, &a| if a <= T::zero() { *g = T::zero() });
        w1 += &skip.xs.t().dot(&d_s1);
    }

    Grads { w1, w2, token }
}

struct Adam<T> {
    m: Vec<Array1<T>>,
    v: Vec<Array1<T>>,
    t: i32,
}

impl<T: Scalar> Adam<T> {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(sizes: &[usize]) -> Self {
        Self {
            m: sizes.iter().map(|&s| Array1::zeros(s)).collect(),
            v: sizes.iter().map(|&s| Array1::zeros(s)).collect(),
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [&mut [T]], grads: &[&[T]], lr: f64, weight_decay: f64) {
        self.t += 1;
        let (b1, b2) = (T::of(Self::BETA1), T::of(Self::BETA2));
        let c1 = T::one() - b1.powi(self.t);
        let c2 = T::one() - b2.powi(self.t);
        let (lr, wd, eps) = (T::of(lr), T::of(weight_decay), T::of(Self::EPS));
        for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            for (i, (p, &g)) in p.iter_mut().zip(g.iter()).enumerate() {
                let g = g + wd * *p;
                let m = &mut self.m[k][i];
                let v = &mut self.v[k][i];
                *m = b1 * *m + (T::one() - b1) * g;
                *v = b2 * *v + (T::one() - b2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *p -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}

/// Train/validation node split.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    /// Stratified split: `train_per_class` and `val_per_class` nodes of each
    /// class, everything else is test.
    pub fn stratified(labels: &[usize], train_per_class: usize, val_per_class: usize, seed: u64) -> Self {
        let classes = labels.iter().copied().max().map_or(0, |m| m + 1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut split = Split::default();
        for c in 0..classes {
            let mut nodes: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
            // Fisher-Yates with our own RNG keeps the split reproducible.
            for i in (1..nodes.len()).rev() {
                let j = rng.gen_range(0..=i);
                nodes.swap(i, j);
            }
            let t = train_per_class.min(nodes.len());
            let v = val_per_class.min(nodes.len() - t);
            split.train.extend_from_slice(&nodes[..t]);
            split.val.extend_from_slice(&nodes[t..t + v]);
            split.test.extend_from_slice(&nodes[t + v..]);
        }
        split.train.sort_unstable();
        split.val.sort_unstable();
        split.test.sort_unstable();
        split
    }
}

/// Trains a GCN on `split.train`, drawing a fresh smoothed graph each epoch
/// and early-stopping on the validation loss. The best-validation weights
/// are returned.
pub fn train<T: Scalar>(
    g: &Graph<T>,
    split: &Split,
    cfg: &TrainConfig,
) -> Result<(GnnModel<T>, TrainLog)> {
    cfg.validate()?;
    let labels = g
        .labels()
        .ok_or_else(|| Error::Config("training requires labels".into()))?;
    if split.train.is_empty() {
        return Err(Error::Config("no labelled training nodes".into()));
    }
    let classes = g.num_classes().unwrap_or(0).max(2);
    let probs = SmoothingProbs::new(cfg.p_del, cfg.p_abl)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = GnnModel::<T>::init(g.feature_dim(), cfg.hidden, classes, cfg.skip, &mut rng);
    let mut adam = Adam::new(&[model.w1.len(), model.w2.len(), model.token.len()]);

    let keep = 1.0 - cfg.dropout;
    let scale = T::of(1.0 / keep);
    let mut log = TrainLog::default();
    let mut best: Option<(f64, GnnModel<T>)> = None;
    let mut since_best = 0;

    for epoch in 0..cfg.epochs {
        let s = sample(g, &probs, cfg.seed ^ TRAIN_SAMPLE_TAG, epoch as u64);
        let view = GraphView::clean(g)
            .with_kept(&s.kept)
            .with_ablation(&s.ablated, &[]);
        let mask = (cfg.dropout > 0.0).then(|| {
            Array2::from_shape_fn((g.n(), g.feature_dim()), |_| {
                if rng.gen::<f64>() < keep {
                    scale
                } else {
                    T::zero()
                }
            })
        });
        let tape = model.run(&view, mask.as_ref());
        let (loss, d_out) = cross_entropy(&tape.out, &split.train, labels);
        let train_acc = accuracy(&tape.out, &split.train, labels);
        let grads = backward(&model, &view, &tape, &d_out, mask.as_ref());

        adam.step(
            &mut [
                model.w1.as_slice_mut().expect("contiguous"),
                model.w2.as_slice_mut().expect("contiguous"),
                model.token.as_slice_mut().expect("contiguous"),
            ],
            &[
                grads.w1.as_slice().expect("contiguous"),
                grads.w2.as_slice().expect("contiguous"),
                grads.token.as_slice().expect("contiguous"),
            ],
            cfg.lr,
            cfg.weight_decay,
        );

        let (val_loss, val_acc) = if split.val.is_empty() {
            (loss.to_f64().unwrap_or(f64::NAN), train_acc)
        } else {
            validate(&model, g, &split.val, labels, &probs, cfg)
        };
        log.epochs.push(EpochLog {
            epoch,
            loss: loss.to_f64().unwrap_or(f64::NAN),
            train_acc,
            val_loss,
            val_acc,
        });

        if best.as_ref().map_or(true, |(b, _)| val_loss < *b) {
            best = Some((val_loss, model.clone()));
            log.best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                break;
            }
        }
    }

    let model = best.map(|(_, m)| m).unwrap_or(model);
    Ok((model, log))
}

fn validate<T: Scalar>(
    model: &GnnModel<T>,
    g: &Graph<T>,
    nodes: &[usize],
    labels: &[usize],
    probs: &SmoothingProbs<f64>,
    cfg: &TrainConfig,
) -> (f64, f64) {
    let draws = cfg.val_samples.max(1);
    let (mut loss, mut acc) = (0.0, 0.0);
    for i in 0..draws {
        let s = sample(g, probs, cfg.seed ^ VALID_SAMPLE_TAG, i as u64);
        let view = GraphView::clean(g)
            .with_kept(&s.kept)
            .with_ablation(&s.ablated, &[]);
        let out = model.run(&view, None).out;
        loss += cross_entropy(&out, nodes, labels).0.to_f64().unwrap_or(f64::NAN);
        acc += accuracy(&out, nodes, labels);
    }
    (loss / draws as f64, acc / draws as f64)
}

fn accuracy<T: Scalar>(out: &Array2<T>, nodes: &[usize], labels: &[usize]) -> f64 {
    if nodes.is_empty() {
        return 0.0;
    }
    let correct = nodes
        .iter()
        .filter(|&&i| argmax(out.row(i)) == labels[i])
        .count();
    correct as f64 / nodes.len() as f64
}

/// Accuracy of `model` on `nodes` for one view.
pub fn view_accuracy<T: Scalar>(
    model: &GnnModel<T>,
    view: &GraphView<'_, T>,
    nodes: &[usize],
) -> Result<f64> {
    let labels = view
        .graph()
        .labels()
        .ok_or_else(|| Error::Config("accuracy requires labels".into()))?;
    let out = model.forward_all(view)?;
    Ok(accuracy(&out, nodes, labels))
}

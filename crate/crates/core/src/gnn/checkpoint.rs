use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::model::GnnModel;
use super::train::TrainConfig;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// On-disk model: dimensions, weights as row-major nested arrays, and the
/// configuration that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub feature_dim: usize,
    pub hidden: usize,
    pub classes: usize,
    pub skip: bool,
    pub w1: Vec<Vec<f64>>,
    pub w2: Vec<Vec<f64>>,
    pub token: Vec<f64>,
    pub train_config: Option<TrainConfig>,
}

impl Checkpoint {
    pub fn from_model<T: Scalar>(model: &GnnModel<T>, cfg: Option<&TrainConfig>) -> Self {
        let rows = |m: &Array2<T>| -> Vec<Vec<f64>> {
            m.rows()
                .into_iter()
                .map(|r| r.iter().map(|x| x.to_f64_lossy()).collect())
                .collect()
        };
        Self {
            feature_dim: model.feature_dim(),
            hidden: model.hidden(),
            classes: model.classes(),
            skip: model.skip,
            w1: rows(&model.w1),
            w2: rows(&model.w2),
            token: model.token.iter().map(|x| x.to_f64_lossy()).collect(),
            train_config: cfg.cloned(),
        }
    }

    pub fn to_model<T: Scalar>(&self) -> Result<GnnModel<T>> {
        let w1 = matrix(&self.w1, self.feature_dim, self.hidden, "w1")?;
        let w2 = matrix(&self.w2, self.hidden, self.classes, "w2")?;
        let token = Array1::from_iter(self.token.iter().map(|&x| T::of(x)));
        GnnModel::new(w1, w2, token, self.skip)
    }
}

fn matrix<T: Scalar>(rows: &[Vec<f64>], r: usize, c: usize, name: &str) -> Result<Array2<T>> {
    if rows.len() != r || rows.iter().any(|row| row.len() != c) {
        return Err(Error::Shape(format!("checkpoint {name} is not {r}x{c}")));
    }
    Ok(Array2::from_shape_fn((r, c), |(i, j)| T::of(rows[i][j])))
}

pub fn save_checkpoint<T: Scalar>(
    path: &Path,
    model: &GnnModel<T>,
    cfg: Option<&TrainConfig>,
) -> Result<()> {
    let ck = Checkpoint::from_model(model, cfg);
    fs::write(path, serde_json::to_string_pretty(&ck)?)?;
    Ok(())
}

pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<(GnnModel<T>, Checkpoint)> {
    let ck: Checkpoint = serde_json::from_str(&fs::read_to_string(path)?)?;
    Ok((ck.to_model()?, ck))
}

use std::path::{Path, PathBuf};

use interception_cert::bounds::BoundMethod;
use interception_cert::estimator::CertMode;
use interception_cert::pipeline::CertifyOptions;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub edges: Option<PathBuf>,
    pub features: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    /// Checkpoint to read (certify, derandomize) or write (train).
    pub model: Option<PathBuf>,
    /// External vote file used instead of the model.
    pub votes: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Smoothing {
    pub p_del: f64,
    pub p_abl: f64,
    pub train_p_del: f64,
    pub train_p_abl: f64,
}

impl Default for Smoothing {
    fn default() -> Self {
        Self {
            p_del: 0.0,
            p_abl: 0.85,
            train_p_del: 0.0,
            train_p_abl: 0.85,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Training {
    pub lr: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub patience: usize,
    pub dropout: f64,
    pub hidden: usize,
    pub val_samples: usize,
    pub train_per_class: usize,
    pub val_per_class: usize,
}

impl Default for Training {
    fn default() -> Self {
        let t = interception_cert::gnn::TrainConfig::default();
        Self {
            lr: t.lr,
            weight_decay: t.weight_decay,
            epochs: t.epochs,
            patience: t.patience,
            dropout: t.dropout,
            hidden: t.hidden,
            val_samples: t.val_samples,
            train_per_class: 20,
            val_per_class: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Targets {
    /// Nodes outside the train and validation split.
    Test,
    All,
    List { nodes: Vec<usize> },
    /// `count` test nodes chosen with the run seed.
    Random { count: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub paths: Paths,
    pub directed: bool,
    pub smoothing: Smoothing,
    pub k: usize,
    pub n0: u64,
    pub n1: u64,
    pub alpha: f64,
    pub d_min: Vec<usize>,
    pub method: BoundMethod,
    pub mode: CertMode,
    pub rho_max: Option<usize>,
    pub max_paths: usize,
    /// Caps for the `exact` method: inclusion-exclusion terms and attacker sets.
    pub max_terms: u128,
    pub subset_cap: u128,
    pub k_rel: f64,
    pub tau: u64,
    pub seed: u64,
    pub skip: bool,
    pub targets: Targets,
    pub train: Training,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            paths: Paths::default(),
            directed: false,
            smoothing: Smoothing::default(),
            k: 2,
            n0: 1_000,
            n1: 3_000,
            alpha: 0.01,
            d_min: vec![1],
            method: BoundMethod::Multiplicative,
            mode: CertMode::Multiclass,
            rho_max: None,
            max_paths: interception_cert::graph::DEFAULT_MAX_PATHS,
            max_terms: CertifyOptions::default().max_terms,
            subset_cap: CertifyOptions::default().subset_cap,
            k_rel: 0.1,
            tau: interception_cert::derandomize::DEFAULT_TAU,
            seed: 0,
            skip: false,
            targets: Targets::Test,
            train: Training::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| anyhow::anyhow!("cannot read config {}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| anyhow::anyhow!("invalid config {}: {e}", path.display()))
    }

    pub fn out_dir(&self) -> PathBuf {
        self.paths.out_dir.clone().unwrap_or_else(|| PathBuf::from("."))
    }

    pub fn model_path(&self) -> PathBuf {
        self.paths
            .model
            .clone()
            .unwrap_or_else(|| self.out_dir().join("model.json"))
    }

    /// Checks probabilities and that every referenced input file exists.
    pub fn validate(&self) -> Result<(), String> {
        let s = &self.smoothing;
        for (name, p) in [
            ("p_del", s.p_del),
            ("p_abl", s.p_abl),
            ("train_p_del", s.train_p_del),
            ("train_p_abl", s.train_p_abl),
            ("k_rel", self.k_rel),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(format!("{name} = {p} is outside [0, 1]"));
            }
        }
        if self.k == 0 {
            return Err("k must be >= 1".into());
        }
        if self.d_min.is_empty() {
            return Err("d_min must list at least one distance".into());
        }
        for (name, p) in [
            ("edges", &self.paths.edges),
            ("features", &self.paths.features),
            ("labels", &self.paths.labels),
            ("votes", &self.paths.votes),
        ] {
            if let Some(p) = p {
                if !p.exists() {
                    return Err(format!("{name} file {} does not exist", p.display()));
                }
            }
        }
        Ok(())
    }
}

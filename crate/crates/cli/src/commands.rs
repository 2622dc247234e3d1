use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use interception_cert::derandomize::{classify_induced, derandomize_node, RetentionConfig};
use interception_cert::estimator::{EstimateConfig, SmoothedGnn};
use interception_cert::gnn::{load_checkpoint, load_votes, save_checkpoint, train as train_gcn, GnnModel, Split, TrainConfig};
use interception_cert::graph::{load_graph, receptive_field, write_graph, Graph};
use interception_cert::pipeline::{certify_nodes, CertifyOptions};
use interception_cert::report::{summarize, CurveSummary, AUCRC_CONVENTION};
use interception_cert::smoothing::SmoothingProbs;
use interception_cert::synthetic::TwoBlock;
use interception_cert::Error;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::json;

use crate::config::{RunConfig, Targets};
use crate::output::{read_results, write_results};

pub enum Status {
    Complete,
    /// Output was written but this many nodes failed.
    Partial(usize),
}

pub enum Failure {
    Usage(String),
    Runtime(anyhow::Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(msg) => Failure::Usage(msg),
            other => Failure::Runtime(other.into()),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

const TARGET_TAG: u64 = 0x7461_7267_6574;

fn graph(cfg: &RunConfig) -> Result<Graph, Failure> {
    let edges = cfg
        .paths
        .edges
        .as_ref()
        .ok_or_else(|| Failure::Usage("paths.edges is required".into()))?;
    Ok(load_graph(
        edges,
        cfg.paths.features.as_deref(),
        cfg.paths.labels.as_deref(),
        cfg.directed,
    )?)
}

fn split(cfg: &RunConfig, g: &Graph) -> Option<Split> {
    g.labels()
        .map(|l| Split::stratified(l, cfg.train.train_per_class, cfg.train.val_per_class, cfg.seed))
}

fn targets(cfg: &RunConfig, g: &Graph) -> Result<Vec<usize>, Failure> {
    let test = || split(cfg, g).map_or_else(|| (0..g.n()).collect(), |s| s.test);
    let mut nodes: Vec<usize> = match &cfg.targets {
        Targets::Test => test(),
        Targets::All => (0..g.n()).collect(),
        Targets::List { nodes } => {
            if let Some(v) = nodes.iter().find(|&&v| v >= g.n()) {
                return Err(Failure::Usage(format!("target {v} out of range (n = {})", g.n())));
            }
            nodes.clone()
        }
        Targets::Random { count } => {
            let mut pool = test();
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ TARGET_TAG);
            pool.shuffle(&mut rng);
            pool.truncate(*count);
            pool
        }
    };
    nodes.sort_unstable();
    nodes.dedup();
    Ok(nodes)
}

fn out_dir(cfg: &RunConfig) -> Result<PathBuf, Failure> {
    let dir = cfg.out_dir();
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn train_config(cfg: &RunConfig) -> TrainConfig {
    let t = &cfg.train;
    TrainConfig {
        lr: t.lr,
        weight_decay: t.weight_decay,
        epochs: t.epochs,
        patience: t.patience,
        dropout: t.dropout,
        p_del: cfg.smoothing.train_p_del,
        p_abl: cfg.smoothing.train_p_abl,
        hidden: t.hidden,
        skip: cfg.skip,
        val_samples: t.val_samples,
        seed: cfg.seed,
    }
}

pub fn train(cfg: &RunConfig) -> Result<Status, Failure> {
    if cfg.paths.labels.is_none() {
        return Err(Failure::Usage("training requires paths.labels".into()));
    }
    let g = graph(cfg)?;
    let split = split(cfg, &g).expect("labels loaded");
    let tc = train_config(cfg);
    let (model, log) = train_gcn(&g, &split, &tc)?;
    let dir = out_dir(cfg)?;
    let model_path = cfg.model_path();
    save_checkpoint(&model_path, &model, Some(&tc))?;

    let mut w = csv::Writer::from_path(dir.join("train_log.csv"))?;
    w.write_record(["epoch", "loss", "train_acc", "val_loss", "val_acc"])?;
    for e in &log.epochs {
        w.write_record([
            e.epoch.to_string(),
            e.loss.to_string(),
            e.train_acc.to_string(),
            e.val_loss.to_string(),
            e.val_acc.to_string(),
        ])?;
    }
    w.flush()?;

    let best = &log.epochs[log.best_epoch];
    write_json(
        &dir.join("train_summary.json"),
        &json!({
            "config": cfg,
            "train_config": tc,
            "model": model_path,
            "epochs_run": log.epochs.len(),
            "best_epoch": log.best_epoch,
            "best_val_loss": best.val_loss,
            "best_val_acc": best.val_acc,
            "train_nodes": split.train.len(),
            "val_nodes": split.val.len(),
            "test_nodes": split.test.len(),
        }),
    )?;
    println!(
        "trained {} epochs, best epoch {} (val acc {:.4}); checkpoint {}",
        log.epochs.len(),
        log.best_epoch,
        best.val_acc,
        model_path.display()
    );
    Ok(Status::Complete)
}

fn model(cfg: &RunConfig, g: &Graph) -> Result<GnnModel<f64>, Failure> {
    let path = cfg.model_path();
    if !path.exists() {
        return Err(Failure::Usage(format!("model checkpoint {} does not exist", path.display())));
    }
    let (model, _) = load_checkpoint::<f64>(&path)?;
    if model.feature_dim() != g.feature_dim() {
        return Err(Failure::Runtime(anyhow::anyhow!(
            "checkpoint expects {} features, graph has {}",
            model.feature_dim(),
            g.feature_dim()
        )));
    }
    Ok(model)
}

pub fn certify(cfg: &RunConfig) -> Result<Status, Failure> {
    let g = graph(cfg)?;
    let nodes = targets(cfg, &g)?;
    let probs = SmoothingProbs::new(cfg.smoothing.p_del, cfg.smoothing.p_abl)?;
    let mut opts = CertifyOptions {
        k: cfg.k,
        d_min: cfg.d_min.clone(),
        method: cfg.method,
        mode: cfg.mode,
        rho_max: cfg.rho_max,
        max_paths: cfg.max_paths,
        max_terms: cfg.max_terms,
        subset_cap: cfg.subset_cap,
        skip: cfg.skip,
        estimate: EstimateConfig {
            n0: cfg.n0,
            n1: cfg.n1,
            alpha: cfg.alpha,
        },
    };
    let outcomes = if let Some(votes) = &cfg.paths.votes {
        let table = load_votes(votes)?;
        certify_nodes(&g, &table, &nodes, &probs, &opts)?
    } else {
        let model = model(cfg, &g)?;
        opts.skip = model.skip;
        let clf = SmoothedGnn::new(&model, &g, probs, cfg.seed);
        certify_nodes(&g, &clf, &nodes, &probs, &opts)?
    };

    let dir = out_dir(cfg)?;
    let d_min = &cfg.d_min;
    write_results(&dir.join("results.csv"), &outcomes, d_min, g.labels())?;

    let ok: Vec<_> = outcomes
        .iter()
        .filter_map(|o| o.result.as_ref().ok().map(|r| (r.clone(), o.surfaces.clone())))
        .collect();
    let failed = outcomes.len() - ok.len();
    let results: Vec<_> = ok.iter().map(|(r, _)| r.clone()).collect();
    let curves: Vec<CurveSummary> = if results.is_empty() {
        Vec::new()
    } else {
        d_min
            .iter()
            .map(|&d| {
                let surfaces: Vec<usize> = ok.iter().map(|(_, s)| s.get(&d).copied().unwrap_or(0)).collect();
                summarize(&results, &surfaces, d)
            })
            .collect::<Result<_, _>>()?
    };
    write_json(
        &dir.join("summary.json"),
        &json!({
            "config": cfg,
            "classifier": if cfg.paths.votes.is_some() { "votes" } else { "model" },
            "skip": opts.skip,
            "nodes": outcomes.len(),
            "failed": failed,
            "aucrc_convention": AUCRC_CONVENTION,
            "curves": curves,
        }),
    )?;
    for c in &curves {
        println!(
            "d_min {}: {} nodes, abstain {:.3}, clean accuracy {}, aucrc {:.4}",
            c.d_min,
            c.nodes,
            c.abstain_rate,
            c.clean_accuracy.map_or("n/a".into(), |a| format!("{a:.4}")),
            c.aucrc
        );
    }
    Ok(if failed > 0 { Status::Partial(failed) } else { Status::Complete })
}

pub fn derandomize(cfg: &RunConfig) -> Result<Status, Failure> {
    let g = graph(cfg)?;
    let nodes = targets(cfg, &g)?;
    let model = model(cfg, &g)?;
    let retention = RetentionConfig {
        k_rel: cfg.k_rel,
        tau: cfg.tau,
    };
    retention.validate()?;
    let classes = model.classes();
    let rows: Vec<_> = nodes
        .par_iter()
        .map(|&v| {
            let rf = receptive_field(&g, v, cfg.k, cfg.max_paths)?;
            derandomize_node(&g, &rf, &retention, classes, |s| classify_induced(&model, &g, s))
        })
        .collect();

    let dir = out_dir(cfg)?;
    let mut w = csv::Writer::from_path(dir.join("derandomize.csv"))?;
    let mut header: Vec<String> = ["node_id", "d", "k", "representatives", "total", "savings", "fallback", "prediction"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend((0..classes).map(|c| format!("p_{c}")));
    header.extend(["probs_exact", "radius", "certified", "label", "correct", "error"].iter().map(|s| s.to_string()));
    w.write_record(&header)?;

    let (mut exact, mut fallback, mut failed, mut certified) = (0usize, 0usize, 0usize, 0usize);
    let mut savings = 0.0;
    for (&v, row) in nodes.iter().zip(&rows) {
        let label = g.labels().map(|l| l[v].to_string()).unwrap_or_default();
        let mut rec = vec![v.to_string()];
        match row {
            Ok(r) => {
                exact += 1;
                savings += r.savings();
                let ok = r.radius > 0 || r.probs[r.prediction] > r.probs[r.runner_up];
                certified += usize::from(ok);
                rec.extend([
                    r.d.to_string(),
                    r.k.to_string(),
                    r.representatives.to_string(),
                    r.total.to_string(),
                    r.savings().to_string(),
                    "0".into(),
                    r.prediction.to_string(),
                ]);
                rec.extend(r.probs_f64().iter().map(|p| p.to_string()));
                rec.push(r.probs.iter().map(|p| p.to_string()).collect::<Vec<_>>().join(";"));
                rec.push(r.radius.to_string());
                rec.push(u8::from(ok).to_string());
                let correct = g.labels().map(|l| u8::from(l[v] == r.prediction).to_string());
                rec.extend([label, correct.unwrap_or_default(), String::new()]);
            }
            Err(Error::EnumerationRefused { d, k, .. }) => {
                fallback += 1;
                rec.extend([d.to_string(), k.to_string(), String::new(), String::new(), String::new(), "1".into(), String::new()]);
                rec.extend((0..classes + 3).map(|_| String::new()));
                rec.extend([label, String::new(), String::new()]);
            }
            Err(e) => {
                failed += 1;
                rec.extend((0..7 + classes + 3).map(|_| String::new()));
                rec.extend([label, String::new(), e.to_string()]);
            }
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    let n = nodes.len().max(1) as f64;
    write_json(
        &dir.join("derandomize_summary.json"),
        &json!({
            "config": cfg,
            "nodes": nodes.len(),
            "derandomized": exact,
            "fallback": fallback,
            "failed": failed,
            "derandomized_ratio": exact as f64 / n,
            "certified_ratio": certified as f64 / n,
            "mean_savings": if exact > 0 { savings / exact as f64 } else { 0.0 },
            "radius_delta": "exact interception probability of retention smoothing: 1 - C(d - rho, k) / C(d, k)",
        }),
    )?;
    println!(
        "derandomized {exact} of {} nodes ({fallback} refused, {failed} failed)",
        nodes.len()
    );
    Ok(if failed > 0 { Status::Partial(failed) } else { Status::Complete })
}

pub fn paths(cfg: &RunConfig) -> Result<Status, Failure> {
    let g = graph(cfg)?;
    let nodes = targets(cfg, &g)?;
    let rows: Vec<_> = nodes
        .par_iter()
        .map(|&v| receptive_field(&g, v, cfg.k, cfg.max_paths))
        .collect();
    let dir = out_dir(cfg)?;
    let mut w = csv::Writer::from_path(dir.join("paths.csv"))?;
    let mut header: Vec<String> = ["node_id", "members", "total_paths", "is_tree", "max_distance"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend(cfg.d_min.iter().map(|d| format!("surface_d{d}")));
    header.push("error".into());
    w.write_record(&header)?;
    let mut failed = 0;
    for (&v, rf) in nodes.iter().zip(&rows) {
        let mut rec = vec![v.to_string()];
        match rf {
            Ok(rf) => {
                let max_d = rf.members().iter().filter_map(|&m| rf.distance(m)).max().unwrap_or(0);
                rec.extend([
                    rf.members().len().to_string(),
                    rf.total_paths().to_string(),
                    u8::from(rf.is_tree()).to_string(),
                    max_d.to_string(),
                ]);
                rec.extend(cfg.d_min.iter().map(|&d| rf.attack_surface(d).len().to_string()));
                rec.push(String::new());
            }
            Err(e) => {
                failed += 1;
                rec.extend((0..4 + cfg.d_min.len()).map(|_| String::new()));
                rec.push(e.to_string());
            }
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    println!("receptive fields for {} nodes ({failed} failed)", nodes.len());
    Ok(if failed > 0 { Status::Partial(failed) } else { Status::Complete })
}

pub fn report(cfg: &RunConfig, inputs: &[PathBuf]) -> Result<Status, Failure> {
    let mut sets = Vec::new();
    for (i, p) in inputs.iter().enumerate() {
        if !p.exists() {
            return Err(Failure::Usage(format!("results file {} does not exist", p.display())));
        }
        let parsed = read_results(p).map_err(|e| Failure::Usage(format!("{e:#}")))?;
        if parsed.rows.is_empty() {
            return Err(Failure::Usage(format!("results file {} has no certified rows", p.display())));
        }
        let stem = p.file_stem().map_or_else(|| "results".into(), |s| s.to_string_lossy().into_owned());
        let name = if inputs.len() > 1 { format!("{i}_{stem}") } else { stem };
        let results: Vec<_> = parsed.rows.iter().map(|(r, _)| r.clone()).collect();
        for &d in &parsed.d_min {
            let surfaces: Vec<usize> = parsed.rows.iter().map(|(_, s)| s[&d]).collect();
            sets.push((name.clone(), summarize(&results, &surfaces, d)?));
        }
    }
    let dir = out_dir(cfg)?;

    let len = sets.iter().map(|(_, s)| s.certified_ratio.len()).max().unwrap_or(0);
    let mut w = csv::Writer::from_path(dir.join("curves.csv"))?;
    let mut header = vec!["radius".to_string()];
    for (name, s) in &sets {
        header.push(format!("ratio_{name}_d{}", s.d_min));
        header.push(format!("accuracy_{name}_d{}", s.d_min));
    }
    w.write_record(&header)?;
    for r in 0..len {
        let mut rec = vec![r.to_string()];
        for (_, s) in &sets {
            let at = |c: &[f64]| c.get(r).copied().unwrap_or(0.0).to_string();
            rec.push(at(&s.certified_ratio));
            rec.push(at(&s.certified_accuracy));
        }
        w.write_record(&rec)?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("normalized.csv"))?;
    w.write_record(["results", "d_min", "normalized_radius", "ratio", "accuracy"])?;
    for (name, s) in &sets {
        for ((x, ratio), (_, acc)) in s.normalized_ratio.iter().zip(&s.normalized_accuracy) {
            w.write_record([name.clone(), s.d_min.to_string(), x.to_string(), ratio.to_string(), acc.to_string()])?;
        }
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("aucrc.csv"))?;
    w.write_record([
        "results",
        "d_min",
        "aucrc",
        "aucrc_accuracy",
        "aucrc_normalized",
        "aucrc_normalized_accuracy",
        "clean_accuracy",
        "abstain_rate",
    ])?;
    let row = |name: String, s: &CurveSummary| {
        vec![
            name,
            s.d_min.to_string(),
            s.aucrc.to_string(),
            s.aucrc_accuracy.to_string(),
            s.aucrc_normalized.to_string(),
            s.aucrc_normalized_accuracy.to_string(),
            s.clean_accuracy.map(|a| a.to_string()).unwrap_or_default(),
            s.abstain_rate.to_string(),
        ]
    };
    for (name, s) in &sets {
        w.write_record(row(name.clone(), s))?;
    }
    if inputs.len() > 1 {
        let (base_name, _) = &sets[0];
        for (name, s) in sets.iter().filter(|(n, _)| n != base_name) {
            if let Some((_, b)) = sets.iter().find(|(n, x)| n == base_name && x.d_min == s.d_min) {
                let diff = |a: f64, b: f64| (a - b).to_string();
                w.write_record([
                    format!("{name}-minus-{base_name}"),
                    s.d_min.to_string(),
                    diff(s.aucrc, b.aucrc),
                    diff(s.aucrc_accuracy, b.aucrc_accuracy),
                    diff(s.aucrc_normalized, b.aucrc_normalized),
                    diff(s.aucrc_normalized_accuracy, b.aucrc_normalized_accuracy),
                    match (s.clean_accuracy, b.clean_accuracy) {
                        (Some(x), Some(y)) => diff(x, y),
                        _ => String::new(),
                    },
                    diff(s.abstain_rate, b.abstain_rate),
                ])?;
            }
        }
    }
    w.flush()?;
    write_json(&dir.join("report_meta.json"), &json!({ "inputs": inputs, "aucrc_convention": AUCRC_CONVENTION }))?;
    println!("report for {} curve set(s) written to {}", sets.len(), dir.display());
    Ok(Status::Complete)
}

pub fn synth(cfg: &RunConfig, nodes: usize, p_in: f64, p_out: f64, features: usize) -> Result<Status, Failure> {
    for (name, p) in [("p_in", p_in), ("p_out", p_out)] {
        if !(0.0..=1.0).contains(&p) {
            return Err(Failure::Usage(format!("{name} = {p} is outside [0, 1]")));
        }
    }
    let sbm = TwoBlock {
        n: nodes,
        p_in,
        p_out,
        feature_dim: features,
        seed: cfg.seed,
        ..TwoBlock::default()
    };
    let g: Graph = sbm.generate()?;
    let dir = fs::canonicalize(out_dir(cfg)?)?;
    let (e, f, l) = (dir.join("edges.txt"), dir.join("features.csv"), dir.join("labels.txt"));
    write_graph(&g, &e, Some(&f), Some(&l))?;
    let mut run = cfg.clone();
    run.paths.edges = Some(e);
    run.paths.features = Some(f);
    run.paths.labels = Some(l);
    run.paths.model = Some(dir.join("model.json"));
    run.paths.out_dir = Some(dir.clone());
    write_json(&dir.join("config.json"), &serde_json::to_value(&run)?)?;
    println!(
        "wrote {} nodes, {} edges to {}",
        g.n(),
        g.num_logical_edges(),
        dir.display()
    );
    Ok(Status::Complete)
}

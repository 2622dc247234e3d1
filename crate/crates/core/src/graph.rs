//! Graph storage, loading, and receptive-field extraction.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path as FsPath;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Default cap on the number of simple paths stored per receptive field.
pub const DEFAULT_MAX_PATHS: usize = 100_000;

/// Attributed graph with a directed edge list.
///
/// Undirected graphs store both orientations of every edge; the two
/// orientations share one *logical* edge id so that smoothing deletes them
/// together.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph<T = f64> {
    n: usize,
    edges: Vec<(usize, usize)>,
    logical: Vec<usize>,
    num_logical: usize,
    in_edges: Vec<Vec<usize>>,
    features: Array2<T>,
    labels: Option<Vec<usize>>,
    directed: bool,
}

impl<T: Scalar> Graph<T> {
    /// Builds a graph, dropping self-loops and duplicate edges.
    ///
    /// When `directed` is false every edge is symmetrized.
    pub fn new(
        n: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
        features: Array2<T>,
        labels: Option<Vec<usize>>,
        directed: bool,
    ) -> Result<Self> {
        if features.nrows() != n {
            return Err(Error::Dimension(format!(
                "feature matrix has {} rows but the graph has {n} nodes",
                features.nrows()
            )));
        }
        if let Some(labels) = &labels {
            if labels.len() != n {
                return Err(Error::Dimension(format!(
                    "{} labels for {n} nodes",
                    labels.len()
                )));
            }
        }
        let mut set = BTreeSet::new();
        for (s, d) in edges {
            if s >= n || d >= n {
                return Err(Error::Dimension(format!(
                    "edge ({s}, {d}) references a node >= {n}"
                )));
            }
            if s == d {
                continue;
            }
            set.insert((s, d));
            if !directed {
                set.insert((d, s));
            }
        }
        let edges: Vec<(usize, usize)> = set.into_iter().collect();

        let mut logical = vec![0; edges.len()];
        let mut num_logical = 0;
        if directed {
            for (i, l) in logical.iter_mut().enumerate() {
                *l = i;
            }
            num_logical = edges.len();
        } else {
            let mut ids = BTreeMap::new();
            for (i, &(s, d)) in edges.iter().enumerate() {
                let key = (s.min(d), s.max(d));
                let id = *ids.entry(key).or_insert_with(|| {
                    num_logical += 1;
                    num_logical - 1
                });
                logical[i] = id;
            }
        }

        let mut in_edges = vec![Vec::new(); n];
        for (i, &(_, d)) in edges.iter().enumerate() {
            in_edges[d].push(i);
        }

        Ok(Self {
            n,
            edges,
            logical,
            num_logical,
            in_edges,
            features,
            labels,
            directed,
        })
    }

    /// Structure-only graph with one-hot identity features.
    pub fn from_edges(n: usize, edges: &[(usize, usize)], directed: bool) -> Result<Self> {
        Self::new(n, edges.iter().copied(), identity(n), None, directed)
    }

    pub fn with_features(mut self, features: Array2<T>) -> Result<Self> {
        if features.nrows() != self.n {
            return Err(Error::Dimension(format!(
                "feature matrix has {} rows but the graph has {} nodes",
                features.nrows(),
                self.n
            )));
        }
        self.features = features;
        Ok(self)
    }

    pub fn with_labels(mut self, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != self.n {
            return Err(Error::Dimension(format!(
                "{} labels for {} nodes",
                labels.len(),
                self.n
            )));
        }
        self.labels = Some(labels);
        Ok(self)
    }
}

impl<T> Graph<T> {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn feature_dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn directed(&self) -> bool {
        self.directed
    }

    /// Directed edges `(src, dst)`, sorted.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// Logical edge id of directed edge `e`. Both orientations of an
    /// undirected edge map to the same id.
    pub fn logical_edge(&self, e: usize) -> usize {
        self.logical[e]
    }

    pub fn num_logical_edges(&self) -> usize {
        self.num_logical
    }

    /// Indices of edges pointing into `v`, ordered by source node.
    pub fn in_edges(&self, v: usize) -> &[usize] {
        &self.in_edges[v]
    }

    pub fn features(&self) -> &Array2<T> {
        &self.features
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn num_classes(&self) -> Option<usize> {
        self.labels
            .as_ref()
            .map(|l| l.iter().copied().max().map_or(0, |m| m + 1))
    }

    pub fn edge_index(&self, src: usize, dst: usize) -> Option<usize> {
        self.edges.binary_search(&(src, dst)).ok()
    }
}

fn identity<T: Scalar>(n: usize) -> Array2<T> {
    Array2::from_shape_fn((n, n), |(i, j)| if i == j { T::one() } else { T::zero() })
}

/// Loads an edge list with optional feature and label files.
///
/// The edge file holds one `src dst` pair per line; blank lines and lines
/// starting with `#` are skipped. Without a feature file every node gets a
/// one-hot identity feature vector.
pub fn load_graph<T: Scalar>(
    edge_path: impl AsRef<FsPath>,
    feature_path: Option<&FsPath>,
    label_path: Option<&FsPath>,
    directed: bool,
) -> Result<Graph<T>> {
    let edge_path = edge_path.as_ref();
    let reader = BufReader::new(File::open(edge_path)?);
    let mut edges = Vec::new();
    let mut n = 0;
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let parse_err = |msg: String| Error::Parse {
            path: edge_path.to_path_buf(),
            line: lineno + 1,
            msg,
        };
        let mut it = trimmed.split_whitespace();
        let mut next = || -> Result<usize> {
            let tok = it
                .next()
                .ok_or_else(|| parse_err("expected two node indices".into()))?;
            tok.parse::<usize>()
                .map_err(|_| parse_err(format!("invalid node index {tok:?}")))
        };
        let s = next()?;
        let d = next()?;
        if it.next().is_some() {
            return Err(parse_err("expected exactly two node indices".into()));
        }
        n = n.max(s + 1).max(d + 1);
        edges.push((s, d));
    }

    let features = match feature_path {
        Some(p) => {
            let rows = read_feature_csv::<T>(p)?;
            if rows.nrows() < n {
                return Err(Error::Dimension(format!(
                    "feature file has {} rows but edges reference {n} nodes",
                    rows.nrows()
                )));
            }
            n = rows.nrows();
            Some(rows)
        }
        None => None,
    };
    let labels = match label_path {
        Some(p) => {
            let labels = read_label_csv(p)?;
            if features.is_some() && labels.len() != n {
                return Err(Error::Dimension(format!(
                    "label file has {} rows but feature file has {n}",
                    labels.len()
                )));
            }
            if labels.len() < n {
                return Err(Error::Dimension(format!(
                    "label file has {} rows but edges reference {n} nodes",
                    labels.len()
                )));
            }
            n = labels.len();
            Some(labels)
        }
        None => None,
    };
    let features = features.unwrap_or_else(|| identity(n));
    Graph::new(n, edges, features, labels, directed)
}

/// Writes `g` in the format read by [`load_graph`]. Undirected graphs list
/// each edge once.
pub fn write_graph<T: Scalar>(
    g: &Graph<T>,
    edge_path: &FsPath,
    feature_path: Option<&FsPath>,
    label_path: Option<&FsPath>,
) -> Result<()> {
    let mut out = String::new();
    for &(s, d) in g.edges() {
        if g.directed() || s < d {
            out.push_str(&format!("{s} {d}\n"));
        }
    }
    std::fs::write(edge_path, out)?;
    if let Some(p) = feature_path {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_path(p)?;
        for row in g.features().rows() {
            w.write_record(row.iter().map(|x| x.to_string()))?;
        }
        w.flush()?;
    }
    if let (Some(p), Some(labels)) = (label_path, g.labels()) {
        let body: String = labels.iter().map(|l| format!("{l}\n")).collect();
        std::fs::write(p, body)?;
    }
    Ok(())
}

fn read_feature_csv<T: Scalar>(path: &FsPath) -> Result<Array2<T>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut data = Vec::new();
    let mut width = None;
    let mut rows = 0;
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let w = *width.get_or_insert(rec.len());
        if rec.len() != w {
            return Err(Error::Dimension(format!(
                "feature row {} has {} columns, expected {w}",
                i + 1,
                rec.len()
            )));
        }
        for field in rec.iter() {
            let x: f64 = field.parse().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                msg: format!("invalid feature value {field:?}"),
            })?;
            data.push(T::of(x));
        }
        rows += 1;
    }
    Array2::from_shape_vec((rows, width.unwrap_or(0)), data)
        .map_err(|e| Error::Dimension(e.to_string()))
}

fn read_label_csv(path: &FsPath) -> Result<Vec<usize>> {
    let reader = BufReader::new(File::open(path)?);
    let mut labels = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        labels.push(t.parse().map_err(|_| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            msg: format!("invalid label {t:?}"),
        })?);
    }
    Ok(labels)
}

/// A simple path from a source node to the target.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Path {
    /// Node sequence, source first, target last.
    pub nodes: Vec<usize>,
    /// Directed edge indices along the path, in the same order.
    pub edges: Vec<usize>,
    /// Logical edge ids of `edges` (shared by both orientations of an
    /// undirected edge).
    pub logical: Vec<usize>,
}

impl Path {
    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn source(&self) -> usize {
        self.nodes[0]
    }
}

/// Nodes that can send messages to a target within `k` hops, together with
/// every simple path of length at most `k` from each of them.
#[derive(Debug, Clone, PartialEq)]
pub struct ReceptiveField {
    target: usize,
    k: usize,
    members: Vec<usize>,
    distance: BTreeMap<usize, usize>,
    paths: BTreeMap<usize, Vec<Path>>,
    total_paths: usize,
}

impl ReceptiveField {
    pub fn target(&self) -> usize {
        self.target
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Members in ascending node order, target included.
    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn contains(&self, w: usize) -> bool {
        self.distance.contains_key(&w)
    }

    pub fn distance(&self, w: usize) -> Option<usize> {
        self.distance.get(&w).copied()
    }

    /// Simple paths from `w` to the target (empty for the target itself and
    /// for non-members).
    pub fn paths(&self, w: usize) -> &[Path] {
        self.paths.get(&w).map_or(&[], Vec::as_slice)
    }

    pub fn total_paths(&self) -> usize {
        self.total_paths
    }

    /// Number of members excluding the target.
    pub fn size(&self) -> usize {
        self.members.len() - 1
    }

    /// Members at hop distance `>= d_min`: the nodes an adversary may control.
    pub fn attack_surface(&self, d_min: usize) -> Vec<usize> {
        self.members
            .iter()
            .copied()
            .filter(|w| self.distance[w] >= d_min)
            .collect()
    }

    /// True when every non-target member has exactly one simple path, i.e.
    /// the field seen as edges toward the target is a tree.
    pub fn is_tree(&self) -> bool {
        self.members
            .iter()
            .filter(|&&w| w != self.target)
            .all(|w| self.paths(*w).len() == 1)
    }

    /// Edges of `g` with both endpoints inside the field.
    pub fn induced_edges<T>(&self, g: &Graph<T>) -> Vec<usize> {
        (0..g.num_edges())
            .filter(|&e| {
                let (s, d) = g.edges()[e];
                self.contains(s) && self.contains(d)
            })
            .collect()
    }
}

/// Extracts the `k`-hop receptive field of `v`, enumerating simple paths by
/// depth-limited search against edge direction.
pub fn receptive_field<T>(
    g: &Graph<T>,
    v: usize,
    k: usize,
    max_paths: usize,
) -> Result<ReceptiveField> {
    if v >= g.n() {
        return Err(Error::Dimension(format!("target {v} >= n = {}", g.n())));
    }
    if k == 0 {
        return Err(Error::Config("layer count k must be >= 1".into()));
    }

    let mut distance = BTreeMap::new();
    distance.insert(v, 0);
    let mut queue = VecDeque::from([v]);
    while let Some(u) = queue.pop_front() {
        let du = distance[&u];
        if du == k {
            continue;
        }
        for &e in g.in_edges(u) {
            let s = g.edges()[e].0;
            if !distance.contains_key(&s) {
                distance.insert(s, du + 1);
                queue.push_back(s);
            }
        }
    }

    let mut search = PathSearch {
        g,
        k,
        max_paths,
        on_path: vec![false; g.n()],
        stack_nodes: vec![v],
        stack_edges: Vec::new(),
        paths: BTreeMap::new(),
        total: 0,
    };
    search.on_path[v] = true;
    search.expand(v)?;

    Ok(ReceptiveField {
        target: v,
        k,
        members: distance.keys().copied().collect(),
        distance,
        total_paths: search.total,
        paths: search.paths,
    })
}

struct PathSearch<'a, T> {
    g: &'a Graph<T>,
    k: usize,
    max_paths: usize,
    on_path: Vec<bool>,
    // Nodes from the target outward.
    stack_nodes: Vec<usize>,
    stack_edges: Vec<usize>,
    paths: BTreeMap<usize, Vec<Path>>,
    total: usize,
}

impl<T> PathSearch<'_, T> {
    fn expand(&mut self, u: usize) -> Result<()> {
        if self.stack_edges.len() == self.k {
            return Ok(());
        }
        for &e in self.g.in_edges(u) {
            let s = self.g.edges()[e].0;
            if self.on_path[s] {
                continue;
            }
            self.stack_nodes.push(s);
            self.stack_edges.push(e);
            self.total += 1;
            if self.total > self.max_paths {
                return Err(Error::ResourceLimit {
                    what: "simple paths in receptive field",
                    count: self.total as u128,
                    limit: self.max_paths as u128,
                });
            }
            let path = Path {
                nodes: self.stack_nodes.iter().rev().copied().collect(),
                edges: self.stack_edges.iter().rev().copied().collect(),
                logical: self
                    .stack_edges
                    .iter()
                    .rev()
                    .map(|&e| self.g.logical_edge(e))
                    .collect(),
            };
            self.paths.entry(s).or_default().push(path);
            self.on_path[s] = true;
            self.expand(s)?;
            self.on_path[s] = false;
            self.stack_nodes.pop();
            self.stack_edges.pop();
        }
        Ok(())
    }
}

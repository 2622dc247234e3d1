#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use interception_cert::graph::Graph;
use ndarray::Array2;
use num_bigint::BigInt;
use num_rational::BigRational;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Erdos-Renyi style graph with random features in `[-1, 1]`.
pub fn random_graph(rng: &mut ChaCha8Rng, n: usize, p: f64, d: usize, directed: bool) -> Graph {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i == j || (!directed && j < i) {
                continue;
            }
            if rng.gen::<f64>() < p {
                edges.push((i, j));
            }
        }
    }
    let x = Array2::from_shape_fn((n, d), |_| rng.gen_range(-1.0..1.0));
    Graph::new(n, edges, x, None, directed).unwrap()
}

/// Uniform random recursive tree on `n` nodes, undirected.
pub fn random_tree(rng: &mut ChaCha8Rng, n: usize) -> Graph {
    let edges: Vec<_> = (1..n).map(|i| (rng.gen_range(0..i), i)).collect();
    Graph::from_edges(n, &edges, false).unwrap()
}

/// A probability with two decimals, representable exactly as a rational.
pub fn random_prob(rng: &mut ChaCha8Rng, lo: u32, hi: u32) -> (f64, BigRational) {
    let c = rng.gen_range(lo..=hi);
    (c as f64 / 100.0, BigRational::new(BigInt::from(c), BigInt::from(100)))
}

/// Hop distance from each node to `v` along edge direction (`None` if it
/// cannot reach `v`), computed only over edges with `keep[e]`.
pub fn hops_to(g: &Graph, v: usize, keep: impl Fn(usize) -> bool) -> Vec<Option<usize>> {
    let mut dist = vec![None; g.n()];
    dist[v] = Some(0);
    let mut q = VecDeque::from([v]);
    while let Some(u) = q.pop_front() {
        for (e, &(s, d)) in g.edges().iter().enumerate() {
            if d == u && keep(e) && dist[s].is_none() {
                dist[s] = Some(dist[u].unwrap() + 1);
                q.push_back(s);
            }
        }
    }
    dist
}

/// Exact interception probability by summing over every deletion pattern of
/// the logical edges and every ablation pattern of the attacked nodes.
pub fn brute_force_delta(
    g: &Graph,
    v: usize,
    k: usize,
    attacked: &[usize],
    p_del: &BigRational,
    p_abl: &BigRational,
) -> BigRational {
    let logical: Vec<usize> = (0..g.num_logical_edges()).collect();
    assert!(logical.len() + attacked.len() <= 22, "instance too large");
    let one = BigRational::from_integer(1.into());
    let mut total = BigRational::from_integer(0.into());
    for mask in 0u64..(1 << logical.len()) {
        let deleted = |l: usize| mask >> l & 1 == 1;
        let dels = mask.count_ones() as i32;
        let w_edges = p_del.pow(dels) * (&one - p_del).pow(logical.len() as i32 - dels);
        let dist = hops_to(g, v, |e| !deleted(g.logical_edge(e)));
        for amask in 0u64..(1 << attacked.len()) {
            let abl = amask.count_ones() as i32;
            let w = &w_edges * p_abl.pow(abl) * (&one - p_abl).pow(attacked.len() as i32 - abl);
            let hit = attacked
                .iter()
                .enumerate()
                .any(|(i, &a)| amask >> i & 1 == 0 && dist[a].is_some_and(|h| h <= k));
            if hit {
                total += w;
            }
        }
    }
    total
}

/// All simple paths from `w` to `v` with at most `k` edges, as edge index
/// lists, found by forward search.
pub fn simple_paths(g: &Graph, w: usize, v: usize, k: usize) -> Vec<Vec<usize>> {
    fn go(g: &Graph, u: usize, v: usize, k: usize, seen: &mut Vec<usize>, path: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if u == v {
            out.push(path.clone());
            return;
        }
        if path.len() == k {
            return;
        }
        for (e, &(s, d)) in g.edges().iter().enumerate() {
            if s == u && !seen.contains(&d) {
                seen.push(d);
                path.push(e);
                go(g, d, v, k, seen, path, out);
                path.pop();
                seen.pop();
            }
        }
    }
    let mut out = Vec::new();
    if w == v {
        return out;
    }
    go(g, w, v, k, &mut vec![w], &mut Vec::new(), &mut out);
    out
}

/// Nodes of `kept ∪ {v}` that reach `v` using only those nodes.
pub fn core_of(g: &Graph, v: usize, kept: &BTreeSet<usize>) -> BTreeSet<usize> {
    let mut core = BTreeSet::from([v]);
    let mut q = VecDeque::from([v]);
    while let Some(u) = q.pop_front() {
        for &(s, d) in g.edges() {
            if d == u && kept.contains(&s) && core.insert(s) {
                q.push_back(s);
            }
        }
    }
    core
}

/// Every `k`-subset of `items` in lexicographic order.
pub fn subsets(items: &[usize], k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::new();
    fn go(items: &[usize], k: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..items.len() {
            cur.push(items[i]);
            go(items, k, i + 1, cur, out);
            cur.pop();
        }
    }
    go(items, k, 0, &mut cur, &mut out);
    out
}

pub fn class_histogram(xs: impl IntoIterator<Item = usize>) -> BTreeMap<usize, u64> {
    let mut m = BTreeMap::new();
    for x in xs {
        *m.entry(x).or_insert(0) += 1;
    }
    m
}

/// Whether every simple path of at most `k` edges from `w` to `v` contains a
/// deleted edge, or `w` is ablated.
pub fn intercepted(g: &Graph, kept: &[bool], ablated: &[bool], w: usize, v: usize, k: usize) -> bool {
    if ablated[w] {
        return true;
    }
    if w == v {
        return false;
    }
    simple_paths(g, w, v, k)
        .iter()
        .all(|p| p.iter().any(|&e| !kept[e]))
}

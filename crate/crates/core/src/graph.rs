//! Comparison graphs over images.

use alloc::collections::{BTreeMap, BTreeSet, VecDeque};
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::model::ImageId;
use crate::rng::keyed_rng;
use crate::{Error, Result};

/// Undirected simple graph; nodes are images, edges are judged pairs.
#[derive(Debug, Clone, Default)]
pub struct ComparisonGraph {
    nodes: Vec<ImageId>,
    index: BTreeMap<ImageId, usize>,
    adjacency: Vec<BTreeSet<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraphStats {
    pub diameter: usize,
    pub avg_shortest_path: f64,
}

impl ComparisonGraph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a graph from pairs; self-loops and repeated edges are dropped.
    pub fn from_pairs<'a, I>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (&'a ImageId, &'a ImageId)>,
    {
        let mut g = Self::new();
        for (a, b) in pairs {
            g.add_edge(a, b);
        }
        g
    }

    pub fn add_node(&mut self, id: &ImageId) -> usize {
        if let Some(&i) = self.index.get(id) {
            return i;
        }
        let i = self.nodes.len();
        self.nodes.push(id.clone());
        self.index.insert(id.clone(), i);
        self.adjacency.push(BTreeSet::new());
        i
    }

    pub fn add_edge(&mut self, a: &ImageId, b: &ImageId) {
        let i = self.add_node(a);
        let j = self.add_node(b);
        if i != j {
            self.adjacency[i].insert(j);
            self.adjacency[j].insert(i);
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(BTreeSet::len).sum::<usize>() / 2
    }

    pub fn nodes(&self) -> &[ImageId] {
        &self.nodes
    }

    /// Component label per node (labels are dense, starting at 0).
    pub fn components(&self) -> Vec<usize> {
        let n = self.nodes.len();
        let mut label = vec![usize::MAX; n];
        let mut next = 0;
        for start in 0..n {
            if label[start] != usize::MAX {
                continue;
            }
            label[start] = next;
            let mut queue = VecDeque::from([start]);
            while let Some(u) = queue.pop_front() {
                for &v in &self.adjacency[u] {
                    if label[v] == usize::MAX {
                        label[v] = next;
                        queue.push_back(v);
                    }
                }
            }
            next += 1;
        }
        label
    }

    pub fn component_count(&self) -> usize {
        self.components().into_iter().max().map_or(0, |m| m + 1)
    }

    fn bfs(&self, source: usize) -> Vec<usize> {
        let mut dist = vec![usize::MAX; self.nodes.len()];
        dist[source] = 0;
        let mut queue = VecDeque::from([source]);
        while let Some(u) = queue.pop_front() {
            for &v in &self.adjacency[u] {
                if dist[v] == usize::MAX {
                    dist[v] = dist[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    /// Exact diameter and mean shortest-path length over unordered node pairs.
    pub fn stats(&self) -> Result<GraphStats> {
        let n = self.nodes.len();
        if n < 2 {
            return Err(Error::Degenerate("graph needs at least two nodes"));
        }
        let components = self.component_count();
        if components > 1 {
            return Err(Error::Disconnected { components });
        }
        let mut diameter = 0;
        let mut total = 0usize;
        for s in 0..n {
            let dist = self.bfs(s);
            for &d in &dist[s + 1..] {
                diameter = diameter.max(d);
                total += d;
            }
        }
        let pairs = n * (n - 1) / 2;
        Ok(GraphStats { diameter, avg_shortest_path: total as f64 / pairs as f64 })
    }
}

/// Diameter and average shortest path of a connected graph.
pub fn graph_stats(graph: &ComparisonGraph) -> Result<GraphStats> {
    graph.stats()
}

/// Samples `budget` of the `C(n, 2)` pairs over `nodes` uniformly at random,
/// rejecting draws whose graph is disconnected or has diameter above
/// `max_diameter`. Attempt `k` uses stream `k` of `seed`.
pub fn sample_budget_pairs(
    nodes: &[ImageId],
    budget: usize,
    max_diameter: usize,
    seed: u64,
    max_attempts: usize,
) -> Result<Vec<(ImageId, ImageId)>> {
    let n = nodes.len();
    if n < 2 {
        return Err(Error::Degenerate("pair sampling needs at least two nodes"));
    }
    let all = n * (n - 1) / 2;
    if budget < n - 1 || budget > all {
        return Err(Error::Config(alloc::format!(
            "pair budget {budget} outside [{}, {all}] for {n} nodes",
            n - 1
        )));
    }
    let mut sorted: Vec<ImageId> = nodes.to_vec();
    sorted.sort();
    let mut candidates = Vec::with_capacity(all);
    for i in 0..n {
        for j in i + 1..n {
            candidates.push((i, j));
        }
    }
    for attempt in 0..max_attempts.max(1) {
        let mut rng = keyed_rng(seed, attempt as u64);
        let mut pool = candidates.clone();
        pool.shuffle(&mut rng);
        pool.truncate(budget);
        pool.sort_unstable();
        let pairs: Vec<(ImageId, ImageId)> =
            pool.iter().map(|&(i, j)| (sorted[i].clone(), sorted[j].clone())).collect();
        let mut graph = ComparisonGraph::new();
        for id in &sorted {
            graph.add_node(id);
        }
        for (a, b) in &pairs {
            graph.add_edge(a, b);
        }
        match graph.stats() {
            Ok(stats) if stats.diameter <= max_diameter => return Ok(pairs),
            _ => continue,
        }
    }
    Err(Error::Degenerate("no pair sample met the connectivity constraint"))
}

use std::collections::{BTreeSet, VecDeque};
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::TopologyError;

/// Undirected simple graph over agents `0..n_agents`.
///
/// Edges are stored once as `(i, j)` with `i < j`, sorted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    n_agents: usize,
    edges: Vec<(usize, usize)>,
    neighbors: Vec<Vec<usize>>,
}

impl Graph {
    /// Builds a graph, rejecting self-loops, duplicates and out-of-range ids.
    /// Connectivity is not required here; see [`Graph::is_connected`].
    pub fn new(n_agents: usize, edges: &[(usize, usize)]) -> Result<Self, TopologyError> {
        if n_agents == 0 {
            return Err(TopologyError::NoAgents);
        }
        let mut set = BTreeSet::new();
        for &(a, b) in edges {
            if a >= n_agents || b >= n_agents {
                return Err(TopologyError::EdgeOutOfRange(a, b, n_agents));
            }
            if a == b {
                return Err(TopologyError::SelfLoop(a, b));
            }
            if !set.insert((a.min(b), a.max(b))) {
                return Err(TopologyError::DuplicateEdge(a, b));
            }
        }
        let edges: Vec<_> = set.into_iter().collect();
        let mut neighbors = vec![Vec::new(); n_agents];
        for &(a, b) in &edges {
            neighbors[a].push(b);
            neighbors[b].push(a);
        }
        for list in &mut neighbors {
            list.sort_unstable();
        }
        Ok(Self { n_agents, edges, neighbors })
    }

    /// Like [`Graph::new`] but also requires a single connected component.
    pub fn connected(n_agents: usize, edges: &[(usize, usize)]) -> Result<Self, TopologyError> {
        let g = Self::new(n_agents, edges)?;
        match g.components() {
            1 => Ok(g),
            components => Err(TopologyError::Disconnected { components }),
        }
    }

    pub fn complete(n_agents: usize) -> Result<Self, TopologyError> {
        let edges: Vec<_> = (0..n_agents)
            .flat_map(|i| ((i + 1)..n_agents).map(move |j| (i, j)))
            .collect();
        Self::new(n_agents, &edges)
    }

    pub fn path(n_agents: usize) -> Result<Self, TopologyError> {
        let edges: Vec<_> = (1..n_agents).map(|i| (i - 1, i)).collect();
        Self::new(n_agents, &edges)
    }

    pub fn ring(n_agents: usize) -> Result<Self, TopologyError> {
        let mut edges: Vec<_> = (1..n_agents).map(|i| (i - 1, i)).collect();
        if n_agents > 2 {
            edges.push((0, n_agents - 1));
        }
        Self::new(n_agents, &edges)
    }

    pub fn star(n_agents: usize, center: usize) -> Result<Self, TopologyError> {
        let edges: Vec<_> = (0..n_agents).filter(|&i| i != center).map(|i| (center, i)).collect();
        Self::new(n_agents, &edges)
    }

    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.neighbors.iter().map(Vec::len).collect()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.neighbors[i].binary_search(&j).is_ok()
    }

    /// Number of connected components, by breadth-first traversal.
    pub fn components(&self) -> usize {
        let mut seen = vec![false; self.n_agents];
        let mut count = 0;
        for start in 0..self.n_agents {
            if seen[start] {
                continue;
            }
            count += 1;
            seen[start] = true;
            let mut queue = VecDeque::from([start]);
            while let Some(v) = queue.pop_front() {
                for &u in &self.neighbors[v] {
                    if !seen[u] {
                        seen[u] = true;
                        queue.push_back(u);
                    }
                }
            }
        }
        count
    }

    pub fn is_connected(&self) -> bool {
        self.components() == 1
    }

    /// Edge-list text: `N M` on the first line, then `i j` per edge, 0-based.
    pub fn to_edge_list(&self) -> String {
        let mut out = format!("{} {}\n", self.n_agents, self.edges.len());
        for &(a, b) in &self.edges {
            let _ = writeln!(out, "{a} {b}");
        }
        out
    }

    pub fn from_edge_list(text: &str) -> Result<Self, TopologyError> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let (hline, header) = lines.next().ok_or(TopologyError::EdgeList {
            line: 1,
            msg: "missing `N M` header".into(),
        })?;
        let (n, m) = parse_pair(hline, header)?;
        let mut edges = Vec::with_capacity(m);
        for (line, l) in lines {
            edges.push(parse_pair(line, l)?);
        }
        if edges.len() != m {
            return Err(TopologyError::EdgeList {
                line: hline,
                msg: format!("header declares {m} edges, found {}", edges.len()),
            });
        }
        Self::new(n, &edges)
    }
}

fn parse_pair(line: usize, text: &str) -> Result<(usize, usize), TopologyError> {
    let err = |msg: String| TopologyError::EdgeList { line, msg };
    let mut it = text.split_whitespace();
    let mut next = || -> Result<usize, TopologyError> {
        let tok = it.next().ok_or_else(|| err("expected two integers".into()))?;
        tok.parse().map_err(|_| err(format!("`{tok}` is not a nonnegative integer")))
    };
    let a = next()?;
    let b = next()?;
    if it.next().is_some() {
        return Err(err("trailing tokens".into()));
    }
    Ok((a, b))
}

/// Edge count used by [`generate_random_connected_graph`]:
/// `max(N - 1, floor(ratio * N (N - 1) / 2))`.
pub fn target_edge_count(n_agents: usize, connectivity_ratio: f64) -> usize {
    let all = n_agents * n_agents.saturating_sub(1) / 2;
    let raw = (connectivity_ratio * all as f64).floor() as usize;
    raw.clamp(n_agents.saturating_sub(1), all)
}

/// Random connected graph: a uniformly-attached random spanning tree, then
/// uniformly random extra edges until [`target_edge_count`] is reached.
pub fn generate_random_connected_graph(
    n_agents: usize,
    connectivity_ratio: f64,
    seed: u64,
) -> Result<Graph, TopologyError> {
    if n_agents == 0 {
        return Err(TopologyError::NoAgents);
    }
    if !(connectivity_ratio > 0.0 && connectivity_ratio <= 1.0) {
        return Err(TopologyError::BadRatio(connectivity_ratio));
    }
    let target = target_edge_count(n_agents, connectivity_ratio);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut order: Vec<usize> = (0..n_agents).collect();
    order.shuffle(&mut rng);
    let mut edges = BTreeSet::new();
    for k in 1..n_agents {
        let parent = order[rng.random_range(0..k)];
        let child = order[k];
        edges.insert((parent.min(child), parent.max(child)));
    }

    let mut candidates: Vec<(usize, usize)> = (0..n_agents)
        .flat_map(|i| ((i + 1)..n_agents).map(move |j| (i, j)))
        .filter(|e| !edges.contains(e))
        .collect();
    let extra = target - edges.len();
    let (chosen, _) = candidates.partial_shuffle(&mut rng, extra);
    edges.extend(chosen.iter().copied());

    let edges: Vec<_> = edges.into_iter().collect();
    Graph::connected(n_agents, &edges)
}

//! Directed communication graphs and time-varying schedules.
//!
//! Nodes are indexed `0..n`. An edge `(j, i)` means agent `i` receives from
//! agent `j`. Self-loops are implicit: every node has one, and they are never
//! stored, so neighbor sets and degrees exclude the node itself.

use std::collections::VecDeque;
use std::fmt::Write as _;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng::{Domain, SeedStreams};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiGraph {
    n: usize,
    in_adj: Vec<Vec<usize>>,
    out_adj: Vec<Vec<usize>>,
}

impl DiGraph {
    /// Builds a graph from `(from, to)` pairs. Pairs `(i, i)` are accepted and
    /// ignored since self-loops are always present.
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut in_adj = vec![Vec::new(); n];
        let mut out_adj = vec![Vec::new(); n];
        for (from, to) in edges {
            for index in [from, to] {
                if index >= n {
                    return Err(Error::NodeOutOfRange { index, n });
                }
            }
            if from == to {
                continue;
            }
            if out_adj[from].contains(&to) {
                return Err(Error::DuplicateEdge { from, to });
            }
            out_adj[from].push(to);
            in_adj[to].push(from);
        }
        for list in in_adj.iter_mut().chain(out_adj.iter_mut()) {
            list.sort_unstable();
        }
        Ok(Self { n, in_adj, out_adj })
    }

    /// Directed cycle `0 -> 1 -> ... -> n-1 -> 0`.
    pub fn cycle(n: usize) -> Self {
        let edges = (0..n).map(|i| (i, (i + 1) % n));
        Self::new(n, edges).expect("cycle edges are valid")
    }

    pub fn complete(n: usize) -> Self {
        let edges = (0..n).flat_map(|i| (0..n).map(move |j| (i, j)));
        Self::new(n, edges).expect("complete edges are valid")
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Non-self-loop edges in ascending `(from, to)` order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.out_adj
            .iter()
            .enumerate()
            .flat_map(|(from, outs)| outs.iter().map(move |&to| (from, to)))
    }

    pub fn edge_count(&self) -> usize {
        self.out_adj.iter().map(Vec::len).sum()
    }

    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        from < self.n && self.out_adj[from].binary_search(&to).is_ok()
    }

    fn check(&self, i: usize) -> Result<()> {
        if i < self.n {
            Ok(())
        } else {
            Err(Error::NodeOutOfRange { index: i, n: self.n })
        }
    }

    /// `{ j : (j, i) in E }`, without `i` itself.
    pub fn in_neighbors(&self, i: usize) -> Result<&[usize]> {
        self.check(i)?;
        Ok(&self.in_adj[i])
    }

    /// `{ l : (i, l) in E }`, without `i` itself.
    pub fn out_neighbors(&self, i: usize) -> Result<&[usize]> {
        self.check(i)?;
        Ok(&self.out_adj[i])
    }

    pub fn in_degree(&self, i: usize) -> usize {
        self.in_adj[i].len()
    }

    pub fn out_degree(&self, i: usize) -> usize {
        self.out_adj[i].len()
    }

    /// Breadth-first distances from `source` along out-edges, visiting
    /// neighbors in ascending index order. Also returns the BFS parent of
    /// every reached node, which fixes one canonical shortest path per pair.
    fn bfs(&self, source: usize) -> (Vec<Option<usize>>, Vec<Option<usize>>) {
        let mut dist = vec![None; self.n];
        let mut parent = vec![None; self.n];
        let mut queue = VecDeque::new();
        dist[source] = Some(0);
        queue.push_back(source);
        while let Some(u) = queue.pop_front() {
            let du = dist[u].expect("queued nodes have a distance");
            for &v in &self.out_adj[u] {
                if dist[v].is_none() {
                    dist[v] = Some(du + 1);
                    parent[v] = Some(u);
                    queue.push_back(v);
                }
            }
        }
        (dist, parent)
    }

    pub fn distances_from(&self, source: usize) -> Result<Vec<Option<usize>>> {
        self.check(source)?;
        Ok(self.bfs(source).0)
    }

    pub fn is_strongly_connected(&self) -> bool {
        if self.n <= 1 {
            return true;
        }
        let reaches_all = |adj: &[Vec<usize>]| {
            let mut seen = vec![false; self.n];
            let mut stack = vec![0];
            seen[0] = true;
            while let Some(u) = stack.pop() {
                for &v in &adj[u] {
                    if !seen[v] {
                        seen[v] = true;
                        stack.push(v);
                    }
                }
            }
            seen.into_iter().all(|s| s)
        };
        reaches_all(&self.out_adj) && reaches_all(&self.in_adj)
    }

    /// Longest shortest directed path over ordered pairs of distinct nodes.
    /// A single node has diameter 0.
    pub fn diameter(&self) -> Result<usize> {
        let mut diameter = 0;
        for source in 0..self.n {
            for d in self.bfs(source).0 {
                diameter = diameter.max(d.ok_or(Error::NotStronglyConnected)?);
            }
        }
        Ok(diameter)
    }

    /// Number of canonical shortest paths crossing each edge, indexed like
    /// [`DiGraph::edges`]. Canonical paths are the BFS-tree paths produced by
    /// ascending-index neighbor order.
    pub fn edge_utilities(&self) -> Result<Vec<((usize, usize), usize)>> {
        let mut counts: Vec<Vec<usize>> = self.out_adj.iter().map(|o| vec![0; o.len()]).collect();
        for source in 0..self.n {
            let (dist, parent) = self.bfs(source);
            for target in 0..self.n {
                if dist[target].is_none() {
                    return Err(Error::NotStronglyConnected);
                }
                let mut v = target;
                while let Some(u) = parent[v] {
                    let slot = self.out_adj[u]
                        .binary_search(&v)
                        .expect("parent edges exist");
                    counts[u][slot] += 1;
                    v = u;
                }
            }
        }
        Ok(self
            .edges()
            .zip(counts.into_iter().flatten())
            .collect())
    }

    /// Maximal edge-utility: the largest number of canonical shortest paths
    /// sharing one edge. A single node has utility 0.
    pub fn max_edge_utility(&self) -> Result<usize> {
        Ok(self
            .edge_utilities()?
            .into_iter()
            .map(|(_, c)| c)
            .max()
            .unwrap_or(0))
    }

    /// Edge-list text: a `# nodes <n>` header, then one `j i` line per edge.
    pub fn to_edge_list(&self) -> String {
        let mut out = format!("# nodes {}\n", self.n);
        for (j, i) in self.edges() {
            let _ = writeln!(out, "{j} {i}");
        }
        out
    }

    pub fn from_edge_list(text: &str) -> Result<Self> {
        let mut n = None;
        let mut edges = Vec::new();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            if let Some(rest) = line.strip_prefix('#') {
                if let Some(count) = rest.trim().strip_prefix("nodes") {
                    n = Some(count.trim().parse().map_err(|_| {
                        Error::InvalidSchedule(format!("bad node count line: {line}"))
                    })?);
                }
                continue;
            }
            let mut it = line.split_whitespace().map(str::parse::<usize>);
            match (it.next(), it.next(), it.next()) {
                (Some(Ok(j)), Some(Ok(i)), None) => edges.push((j, i)),
                _ => return Err(Error::InvalidSchedule(format!("bad edge line: {line}"))),
            }
        }
        let n = n.ok_or_else(|| Error::InvalidSchedule("missing '# nodes <n>' header".into()))?;
        Self::new(n, edges)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ScheduleKind {
    /// The same cycle-plus-random-edges graph at every iteration.
    Static,
    /// A seeded Hamiltonian cycle whose node labels shift by `k mod n`, plus
    /// freshly sampled extra edges at every iteration.
    RotatingCycle,
    /// A fixed list of graphs replayed cyclically.
    Replayed(Vec<DiGraph>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphSchedule {
    pub kind: ScheduleKind,
    pub n: usize,
    pub extra_edges: usize,
    pub seed: u64,
}

impl GraphSchedule {
    pub fn new(kind: ScheduleKind, n: usize, extra_edges: usize, seed: u64) -> Result<Self> {
        if n < 1 {
            return Err(Error::InvalidSchedule("node count must be at least 1".into()));
        }
        let free_pairs = n * (n - 1) - if n > 1 { n } else { 0 };
        if extra_edges > free_pairs {
            return Err(Error::InvalidSchedule(format!(
                "{extra_edges} extra edges requested but only {free_pairs} non-cycle pairs exist"
            )));
        }
        if let ScheduleKind::Replayed(graphs) = &kind {
            if graphs.is_empty() {
                return Err(Error::InvalidSchedule("replayed sequence is empty".into()));
            }
            for g in graphs {
                if g.n() != n {
                    return Err(Error::DimensionMismatch {
                        expected: n,
                        actual: g.n(),
                    });
                }
                if !g.is_strongly_connected() {
                    return Err(Error::NotStronglyConnected);
                }
            }
        }
        Ok(Self {
            kind,
            n,
            extra_edges,
            seed,
        })
    }

    pub fn fixed(n: usize, extra_edges: usize, seed: u64) -> Result<Self> {
        Self::new(ScheduleKind::Static, n, extra_edges, seed)
    }

    pub fn rotating(n: usize, extra_edges: usize, seed: u64) -> Result<Self> {
        Self::new(ScheduleKind::RotatingCycle, n, extra_edges, seed)
    }

    pub fn replayed(graphs: Vec<DiGraph>) -> Result<Self> {
        let n = graphs
            .first()
            .map(DiGraph::n)
            .ok_or_else(|| Error::InvalidSchedule("replayed sequence is empty".into()))?;
        Self::new(ScheduleKind::Replayed(graphs), n, 0, 0)
    }

    pub fn is_static(&self) -> bool {
        match &self.kind {
            ScheduleKind::Static => true,
            ScheduleKind::Replayed(g) => g.len() == 1,
            ScheduleKind::RotatingCycle => self.n <= 1,
        }
    }

    /// Seeded cycle order with node 0 first.
    fn base_cycle(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.n).collect();
        let mut rng = SeedStreams::new(self.seed).stream(Domain::Graph, 0, u64::MAX);
        order[1..].shuffle(&mut rng);
        order
    }

    /// The graph in effect at iteration `k`. Pure in `(self, k)`.
    pub fn generate(&self, k: usize) -> Result<DiGraph> {
        let (shift, draw) = match &self.kind {
            ScheduleKind::Replayed(graphs) => return Ok(graphs[k % graphs.len()].clone()),
            ScheduleKind::Static => (0, 0),
            ScheduleKind::RotatingCycle => (k % self.n, k),
        };
        let n = self.n;
        let order = self.base_cycle();
        let label = |pos: usize| (order[pos % n] + shift) % n;
        let mut cycle: Vec<(usize, usize)> = (0..n)
            .map(|pos| (label(pos), label(pos + 1)))
            .filter(|(a, b)| a != b)
            .collect();
        if self.extra_edges > 0 {
            cycle.sort_unstable();
            let candidates: Vec<(usize, usize)> = (0..n)
                .flat_map(|j| (0..n).map(move |i| (j, i)))
                .filter(|&(j, i)| j != i && cycle.binary_search(&(j, i)).is_err())
                .collect();
            let mut rng = SeedStreams::new(self.seed).stream(Domain::Graph, 1, draw as u64);
            let picked = rand::seq::index::sample(&mut rng, candidates.len(), self.extra_edges);
            cycle.extend(picked.into_iter().map(|idx| candidates[idx]));
        }
        DiGraph::new(n, cycle)
    }
}

/// Parses blank-line separated edge-list blocks into a replayed schedule.
pub fn parse_graph_sequence(text: &str) -> Result<Vec<DiGraph>> {
    let mut graphs = Vec::new();
    let mut block = String::new();
    for line in text.lines().chain(std::iter::once("")) {
        if line.trim().is_empty() {
            if !block.trim().is_empty() {
                graphs.push(DiGraph::from_edge_list(&block)?);
            }
            block.clear();
        } else {
            block.push_str(line);
            block.push('\n');
        }
    }
    Ok(graphs)
}

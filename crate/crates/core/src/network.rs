//! Undirected simple graphs in compressed adjacency form, the two random
//! generators used by the sweeps, edge-list I/O and shortest-path shells.

use std::collections::{BTreeSet, HashSet, VecDeque};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};

/// Connectivity resampling budget for [`generate_er`].
pub const ER_MAX_ATTEMPTS: u32 = 100;

/// Immutable undirected simple graph. Neighbor lists are sorted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    offsets: Vec<usize>,
    neighbors: Vec<usize>,
}

impl Graph {
    /// Builds a graph on `n` nodes, silently dropping self-loops and
    /// duplicate edges. Use [`GraphBuilder`] when the drop counts matter.
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut b = GraphBuilder::new(n);
        for (i, j) in edges {
            b.add_edge(i, j)?;
        }
        Ok(b.build())
    }

    pub fn node_count(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn edge_count(&self) -> usize {
        self.neighbors.len() / 2
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.offsets[i + 1] - self.offsets[i]
    }

    pub fn k_avg(&self) -> f64 {
        2.0 * self.edge_count() as f64 / self.node_count() as f64
    }

    /// Each undirected edge once, as `(i, j)` with `i < j`, in ascending order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.node_count()).flat_map(move |i| {
            self.neighbors(i)
                .iter()
                .copied()
                .filter(move |&j| j > i)
                .map(move |j| (i, j))
        })
    }

    pub fn is_connected(&self) -> bool {
        let n = self.node_count();
        if n == 0 {
            return true;
        }
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        let mut reached = 1;
        while let Some(i) = queue.pop_front() {
            for &j in self.neighbors(i) {
                if !seen[j] {
                    seen[j] = true;
                    reached += 1;
                    queue.push_back(j);
                }
            }
        }
        reached == n
    }

    pub fn degree_stats(&self) -> DegreeStats {
        let n = self.node_count();
        let degrees: Vec<usize> = (0..n).map(|i| self.degree(i)).collect();
        let min = degrees.iter().copied().min().unwrap_or(0);
        let max = degrees.iter().copied().max().unwrap_or(0);
        let mean = self.k_avg();
        let variance = degrees
            .iter()
            .map(|&d| (d as f64 - mean).powi(2))
            .sum::<f64>()
            / n as f64;
        let mut histogram = vec![0; max + 1];
        for &d in &degrees {
            histogram[d] += 1;
        }
        DegreeStats {
            min,
            max,
            mean,
            variance,
            histogram,
        }
    }

    /// Edge-list text: one `i j` line per edge with `i < j`, preceded by a
    /// comment header carrying the node count.
    pub fn to_edge_list(&self) -> String {
        let mut out = String::with_capacity(self.edge_count() * 12);
        let _ = writeln!(out, "# nodes {} edges {}", self.node_count(), self.edge_count());
        for (i, j) in self.edges() {
            let _ = writeln!(out, "{i} {j}");
        }
        out
    }

    pub fn save_edge_list(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_edge_list()).map_err(|e| Error::io(path, e))
    }

    pub fn check_node(&self, id: usize) -> Result<()> {
        if id < self.node_count() {
            Ok(())
        } else {
            Err(Error::InvalidNode {
                id,
                n: self.node_count(),
            })
        }
    }
}

/// Accumulates edges, tracking what was dropped to keep the graph simple.
#[derive(Debug)]
pub struct GraphBuilder {
    n: usize,
    edges: HashSet<(usize, usize)>,
    order: Vec<(usize, usize)>,
    pub self_loops: usize,
    pub duplicates: usize,
}

impl GraphBuilder {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            edges: HashSet::new(),
            order: Vec::new(),
            self_loops: 0,
            duplicates: 0,
        }
    }

    /// Returns whether the edge was new.
    pub fn add_edge(&mut self, i: usize, j: usize) -> Result<bool> {
        for id in [i, j] {
            if id >= self.n {
                return Err(Error::InvalidNode { id, n: self.n });
            }
        }
        if i == j {
            self.self_loops += 1;
            return Ok(false);
        }
        let key = (i.min(j), i.max(j));
        if self.edges.insert(key) {
            self.order.push(key);
            Ok(true)
        } else {
            self.duplicates += 1;
            Ok(false)
        }
    }

    pub fn build(self) -> Graph {
        let mut degree = vec![0usize; self.n];
        for &(i, j) in &self.order {
            degree[i] += 1;
            degree[j] += 1;
        }
        let mut offsets = Vec::with_capacity(self.n + 1);
        offsets.push(0);
        for d in &degree {
            offsets.push(offsets.last().unwrap() + d);
        }
        let mut fill = offsets[..self.n].to_vec();
        let mut neighbors = vec![0; offsets[self.n]];
        for &(i, j) in &self.order {
            neighbors[fill[i]] = j;
            fill[i] += 1;
            neighbors[fill[j]] = i;
            fill[j] += 1;
        }
        for i in 0..self.n {
            neighbors[offsets[i]..offsets[i + 1]].sort_unstable();
        }
        Graph { offsets, neighbors }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DegreeStats {
    pub min: usize,
    pub max: usize,
    pub mean: f64,
    pub variance: f64,
    /// `histogram[d]` = number of nodes of degree `d`.
    pub histogram: Vec<usize>,
}

/// Erdős–Rényi graph with a fixed edge count `round(n * k_target / 2)`,
/// resampled on independent sub-streams until connected.
pub fn generate_er(n: usize, k_target: f64, seed: u64) -> Result<Graph> {
    if n < 3 {
        return Err(Error::InvalidParameter(format!("ER needs n >= 3, got {n}")));
    }
    if !(k_target > 0.0 && k_target <= (n - 1) as f64) {
        return Err(Error::InvalidParameter(format!(
            "ER mean degree must lie in (0, n-1], got {k_target}"
        )));
    }
    let pairs = n * (n - 1) / 2;
    let m = ((n as f64 * k_target / 2.0).round() as usize).min(pairs);
    for attempt in 0..ER_MAX_ATTEMPTS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(u64::from(attempt));
        let picked = index::sample(&mut rng, pairs, m);
        let g = Graph::from_edges(n, picked.into_iter().map(|p| pair_from_index(p, n)))?;
        if g.is_connected() {
            return Ok(g);
        }
    }
    Err(Error::ConnectivityRetries {
        n,
        k: k_target,
        attempts: ER_MAX_ATTEMPTS,
    })
}

/// Maps `p` in `0..n(n-1)/2` to the pair `(i, j)`, `i < j`, in row-major
/// order of the strict upper triangle.
fn pair_from_index(p: usize, n: usize) -> (usize, usize) {
    // Row i starts at i*n - i*(i+1)/2. Solve with a float estimate, then fix up.
    let nf = n as f64;
    let pf = p as f64;
    let mut i = (((2.0 * nf - 1.0) - ((2.0 * nf - 1.0).powi(2) - 8.0 * pf).max(0.0).sqrt()) / 2.0)
        .floor() as usize;
    let row_start = |i: usize| i * n - i * (i + 1) / 2;
    while i > 0 && row_start(i) > p {
        i -= 1;
    }
    while i + 1 < n && row_start(i + 1) <= p {
        i += 1;
    }
    let j = i + 1 + (p - row_start(i));
    (i, j)
}

/// Barabási–Albert preferential attachment grown from a complete graph on
/// `m + 1` nodes; each new node attaches `m` distinct edges with targets
/// drawn proportionally to current degree.
pub fn generate_ba(n: usize, m: usize, seed: u64) -> Result<Graph> {
    if m < 1 || n <= m {
        return Err(Error::InvalidParameter(format!(
            "BA needs n > m >= 1, got n={n}, m={m}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut b = GraphBuilder::new(n);
    // One entry per edge endpoint: uniform draws are degree-proportional.
    let mut endpoints: Vec<usize> = Vec::with_capacity(2 * (m * (m + 1) / 2 + m * (n - m - 1)));
    for i in 0..=m {
        for j in (i + 1)..=m {
            b.add_edge(i, j)?;
            endpoints.extend([i, j]);
        }
    }
    let mut targets = Vec::with_capacity(m);
    for new in (m + 1)..n {
        targets.clear();
        while targets.len() < m {
            let t = endpoints[rng.gen_range(0..endpoints.len())];
            if !targets.contains(&t) {
                targets.push(t);
            }
        }
        for &t in &targets {
            b.add_edge(new, t)?;
            endpoints.extend([new, t]);
        }
    }
    Ok(b.build())
}

/// Lines dropped while loading an edge list.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct LoadReport {
    pub self_loops: usize,
    pub duplicates: usize,
}

impl LoadReport {
    pub fn dropped(&self) -> usize {
        self.self_loops + self.duplicates
    }
}

pub fn load_edge_list(path: impl AsRef<Path>) -> Result<(Graph, LoadReport)> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_edge_list(&text, path)
}

/// Parses edge-list text. The node count is `max id + 1`, or the count in a
/// `# nodes N` header comment when larger.
pub fn parse_edge_list(text: &str, origin: &Path) -> Result<(Graph, LoadReport)> {
    let mut pairs = Vec::new();
    let mut declared = 0usize;
    for (lineno, raw) in text.lines().enumerate() {
        let (body, comment) = match raw.find('#') {
            Some(pos) => (&raw[..pos], Some(&raw[pos + 1..])),
            None => (raw, None),
        };
        if let Some(c) = comment {
            let mut it = c.split_whitespace();
            if it.next() == Some("nodes") {
                if let Some(n) = it.next().and_then(|t| t.parse().ok()) {
                    declared = declared.max(n);
                }
            }
        }
        let tokens: Vec<&str> = body.split_whitespace().collect();
        if tokens.is_empty() {
            continue;
        }
        let parse = |t: &str| {
            t.parse::<usize>().map_err(|_| Error::Parse {
                path: origin.to_path_buf(),
                line: lineno + 1,
                token: t.to_string(),
            })
        };
        if tokens.len() != 2 {
            return Err(Error::Parse {
                path: origin.to_path_buf(),
                line: lineno + 1,
                token: body.trim().to_string(),
            });
        }
        pairs.push((parse(tokens[0])?, parse(tokens[1])?));
    }
    let n = pairs
        .iter()
        .map(|&(i, j)| i.max(j) + 1)
        .max()
        .unwrap_or(0)
        .max(declared);
    let mut b = GraphBuilder::new(n);
    for (i, j) in pairs {
        b.add_edge(i, j)?;
    }
    let report = LoadReport {
        self_loops: b.self_loops,
        duplicates: b.duplicates,
    };
    let g = b.build();
    if g.edge_count() == 0 {
        return Err(Error::EmptyGraph(origin.to_path_buf()));
    }
    Ok((g, report))
}

/// Marker for nodes not reachable from the source set.
pub const UNREACHABLE: u32 = u32::MAX;

/// Multi-source breadth-first layering: layer of a node is its distance to
/// the nearest source.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShellDecomposition {
    pub sources: BTreeSet<usize>,
    layer_of: Vec<u32>,
    members: Vec<Vec<usize>>,
}

impl ShellDecomposition {
    pub fn layer(&self, node: usize) -> Option<usize> {
        match self.layer_of[node] {
            UNREACHABLE => None,
            l => Some(l as usize),
        }
    }

    /// Maximum finite layer index L.
    pub fn num_layers(&self) -> usize {
        self.members.len() - 1
    }

    /// Members of layer `l` (K_s(l)); empty past the last layer.
    pub fn members(&self, l: usize) -> &[usize] {
        self.members.get(l).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn node_count(&self) -> usize {
        self.layer_of.len()
    }

    pub fn unreachable_count(&self) -> usize {
        self.layer_of.iter().filter(|&&l| l == UNREACHABLE).count()
    }
}

pub fn bfs_shells(g: &Graph, sources: &BTreeSet<usize>) -> Result<ShellDecomposition> {
    if sources.is_empty() {
        return Err(Error::InvalidParameter("source set is empty".into()));
    }
    for &s in sources {
        g.check_node(s)?;
    }
    let mut layer_of = vec![UNREACHABLE; g.node_count()];
    let mut members: Vec<Vec<usize>> = vec![sources.iter().copied().collect()];
    for &s in sources {
        layer_of[s] = 0;
    }
    loop {
        let depth = members.len() as u32;
        let mut next = Vec::new();
        for &i in members.last().unwrap() {
            for &j in g.neighbors(i) {
                if layer_of[j] == UNREACHABLE {
                    layer_of[j] = depth;
                    next.push(j);
                }
            }
        }
        if next.is_empty() {
            break;
        }
        next.sort_unstable();
        members.push(next);
    }
    Ok(ShellDecomposition {
        sources: sources.clone(),
        layer_of,
        members,
    })
}

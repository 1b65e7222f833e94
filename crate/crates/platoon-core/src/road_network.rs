//! Road network model: a weighted directed graph of one-way road segments,
//! random geometric generation, shortest-path queries with deterministic
//! tie-breaking, and positions/distances along paths.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::fmt::Write as _;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Index of a location in the network. Node ids are dense: `0..node_count`.
pub type NodeId = usize;

#[derive(Debug, Error, PartialEq)]
pub enum NetworkError {
    #[error("no path from node {from} to node {to}")]
    Unreachable { from: NodeId, to: NodeId },
    #[error("second position (edge {b_edge}, offset {b_offset}) precedes first (edge {a_edge}, offset {a_offset})")]
    OrderViolation {
        a_edge: usize,
        a_offset: f64,
        b_edge: usize,
        b_offset: f64,
    },
    #[error("shared edges of the two paths do not form one contiguous subpath")]
    OverlapNotContiguous,
    #[error("bad network text at line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// Weighted directed road network. Immutable once constructed.
#[derive(Debug, Clone)]
pub struct RoadNetwork {
    coords: Vec<(f64, f64)>,
    /// Out-adjacency per node, sorted by target id.
    out: Vec<Vec<(NodeId, f64)>>,
    edge_count: usize,
}

impl RoadNetwork {
    /// Builds a network from node coordinates and directed edges.
    /// Edge weights must be strictly positive.
    pub fn new(coords: Vec<(f64, f64)>, edges: &[(NodeId, NodeId, f64)]) -> Self {
        let n = coords.len();
        let mut out = vec![Vec::new(); n];
        for &(from, to, w) in edges {
            assert!(
                from < n && to < n,
                "edge ({from},{to}) references missing node"
            );
            assert!(from != to, "self-loop on node {from}");
            assert!(w > 0.0, "edge ({from},{to}) has non-positive weight {w}");
            out[from].push((to, w));
        }
        for adj in &mut out {
            adj.sort_by(|a, b| a.0.cmp(&b.0));
            for pair in adj.windows(2) {
                assert!(pair[0].0 != pair[1].0, "duplicate edge");
            }
        }
        RoadNetwork {
            coords,
            out,
            edge_count: edges.len(),
        }
    }

    /// Generates a random network: `num_locations` points sampled uniformly
    /// in the square `[0, side_length]^2`, then all location pairs visited in
    /// ascending order of Euclidean distance and connected by a segment in
    /// each direction unless a path no longer than `detour_factor` times the
    /// Euclidean distance already exists. The result is strongly connected
    /// and bit-identical for a given seed.
    pub fn generate(num_locations: usize, side_length: f64, detour_factor: f64, seed: u64) -> Self {
        assert!(num_locations >= 2, "need at least 2 locations");
        assert!(side_length > 0.0, "side_length must be positive");
        assert!(detour_factor > 1.0, "detour_factor must exceed 1");

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let coords: Vec<(f64, f64)> = (0..num_locations)
            .map(|_| {
                let x = rng.random_range(0.0..side_length);
                let y = rng.random_range(0.0..side_length);
                (x, y)
            })
            .collect();

        let mut net = RoadNetwork {
            coords,
            out: vec![Vec::new(); num_locations],
            edge_count: 0,
        };

        let mut pairs: Vec<(f64, NodeId, NodeId)> = Vec::new();
        for i in 0..num_locations {
            for j in (i + 1)..num_locations {
                pairs.push((net.euclidean(i, j), i, j));
            }
        }
        pairs.sort_by(|a, b| {
            a.0.partial_cmp(&b.0)
                .unwrap()
                .then(a.1.cmp(&b.1))
                .then(a.2.cmp(&b.2))
        });

        for &(dist, i, j) in &pairs {
            // The graph is symmetric by construction, so one direction
            // decides for both.
            if net
                .shortest_dist_bounded(i, j, detour_factor * dist)
                .is_none()
            {
                net.insert_edge(i, j, dist);
                net.insert_edge(j, i, dist);
            }
        }

        assert!(
            net.is_strongly_connected(),
            "generated network is not strongly connected"
        );
        net
    }

    fn insert_edge(&mut self, from: NodeId, to: NodeId, w: f64) {
        let adj = &mut self.out[from];
        let pos = adj.partition_point(|&(t, _)| t < to);
        adj.insert(pos, (to, w));
        self.edge_count += 1;
    }

    pub fn node_count(&self) -> usize {
        self.coords.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn coord(&self, n: NodeId) -> (f64, f64) {
        self.coords[n]
    }

    /// All directed edges as `(from, to, weight)`, ascending by `(from, to)`.
    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId, f64)> + '_ {
        self.out
            .iter()
            .enumerate()
            .flat_map(|(from, adj)| adj.iter().map(move |&(to, w)| (from, to, w)))
    }

    pub fn out_neighbors(&self, n: NodeId) -> &[(NodeId, f64)] {
        &self.out[n]
    }

    pub fn weight(&self, from: NodeId, to: NodeId) -> Option<f64> {
        self.out[from]
            .binary_search_by(|&(t, _)| t.cmp(&to))
            .ok()
            .map(|idx| self.out[from][idx].1)
    }

    pub fn euclidean(&self, a: NodeId, b: NodeId) -> f64 {
        let (ax, ay) = self.coords[a];
        let (bx, by) = self.coords[b];
        ((ax - bx).powi(2) + (ay - by).powi(2)).sqrt()
    }

    /// Dijkstra with an upper bound: returns the shortest-path distance from
    /// `from` to `to` if it does not exceed `bound`, else `None`.
    fn shortest_dist_bounded(&self, from: NodeId, to: NodeId, bound: f64) -> Option<f64> {
        let n = self.node_count();
        let mut dist = vec![f64::INFINITY; n];
        let mut heap = BinaryHeap::new();
        dist[from] = 0.0;
        heap.push(HeapEntry {
            dist: 0.0,
            node: from,
        });
        while let Some(HeapEntry { dist: d, node }) = heap.pop() {
            if d > bound {
                return None;
            }
            if node == to {
                return Some(d);
            }
            if d > dist[node] {
                continue;
            }
            for &(next, w) in &self.out[node] {
                let nd = d + w;
                if nd < dist[next] {
                    dist[next] = nd;
                    heap.push(HeapEntry {
                        dist: nd,
                        node: next,
                    });
                }
            }
        }
        None
    }

    /// Shortest-path distances from every node to `target` (Dijkstra on the
    /// reversed graph). Unreachable nodes stay at infinity.
    fn dist_to_target(&self, target: NodeId) -> Vec<f64> {
        let n = self.node_count();
        let mut rev: Vec<Vec<(NodeId, f64)>> = vec![Vec::new(); n];
        for (from, adj) in self.out.iter().enumerate() {
            for &(to, w) in adj {
                rev[to].push((from, w));
            }
        }
        let mut dist = vec![f64::INFINITY; n];
        let mut heap = BinaryHeap::new();
        dist[target] = 0.0;
        heap.push(HeapEntry {
            dist: 0.0,
            node: target,
        });
        while let Some(HeapEntry { dist: d, node }) = heap.pop() {
            if d > dist[node] {
                continue;
            }
            for &(next, w) in &rev[node] {
                let nd = d + w;
                if nd < dist[next] {
                    dist[next] = nd;
                    heap.push(HeapEntry {
                        dist: nd,
                        node: next,
                    });
                }
            }
        }
        dist
    }

    /// Minimum-weight path from `from` to `to`. Among minimum-weight paths
    /// the one with the lexicographically smallest node-id sequence is
    /// returned, which makes the result deterministic when weights tie.
    pub fn shortest_path(&self, from: NodeId, to: NodeId) -> Result<Path, NetworkError> {
        assert!(from != to, "shortest_path requires distinct endpoints");
        assert!(
            from < self.node_count() && to < self.node_count(),
            "endpoint out of range"
        );
        let dist = self.dist_to_target(to);
        if dist[from].is_infinite() {
            return Err(NetworkError::Unreachable { from, to });
        }
        // Greedy descent on exact remaining distance; adjacency is sorted by
        // id, so keeping the first strict minimum picks the smallest next id.
        let mut nodes = vec![from];
        let mut weights = Vec::new();
        let mut current = from;
        while current != to {
            let mut best: Option<(NodeId, f64, f64)> = None;
            for &(next, w) in &self.out[current] {
                if dist[next].is_infinite() {
                    continue;
                }
                let total = w + dist[next];
                match best {
                    Some((_, _, bt)) if total >= bt => {}
                    _ => best = Some((next, w, total)),
                }
            }
            let (next, w, _) = best.expect("reachable node must have an onward edge");
            nodes.push(next);
            weights.push(w);
            current = next;
        }
        Ok(Path::new(nodes, weights))
    }

    pub fn is_strongly_connected(&self) -> bool {
        let n = self.node_count();
        if n == 0 {
            return true;
        }
        let forward = self.reachable_count(0, false);
        let backward = self.reachable_count(0, true);
        forward == n && backward == n
    }

    fn reachable_count(&self, start: NodeId, reversed: bool) -> usize {
        let n = self.node_count();
        let mut seen = vec![false; n];
        let mut stack = vec![start];
        seen[start] = true;
        let mut rev: Vec<Vec<NodeId>> = Vec::new();
        if reversed {
            rev = vec![Vec::new(); n];
            for (from, adj) in self.out.iter().enumerate() {
                for &(to, _) in adj {
                    rev[to].push(from);
                }
            }
        }
        let mut count = 1;
        while let Some(node) = stack.pop() {
            if reversed {
                for &next in &rev[node] {
                    if !seen[next] {
                        seen[next] = true;
                        count += 1;
                        stack.push(next);
                    }
                }
            } else {
                for &(next, _) in &self.out[node] {
                    if !seen[next] {
                        seen[next] = true;
                        count += 1;
                        stack.push(next);
                    }
                }
            }
        }
        count
    }

    /// Plain-text serialization: one `node <id> <x> <y>` line per node, one
    /// `edge <from> <to> <weight>` line per edge. Numbers carry 18
    /// significant digits so reload is bit-exact.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (id, &(x, y)) in self.coords.iter().enumerate() {
            writeln!(s, "node {id} {x:.17e} {y:.17e}").unwrap();
        }
        for (from, to, w) in self.edges() {
            writeln!(s, "edge {from} {to} {w:.17e}").unwrap();
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self, NetworkError> {
        let mut nodes: Vec<(NodeId, f64, f64)> = Vec::new();
        let mut edges: Vec<(NodeId, NodeId, f64)> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = trimmed.split_whitespace().collect();
            let parse_err = |message: String| NetworkError::Parse { line, message };
            match fields[0] {
                "node" => {
                    if fields.len() != 4 {
                        return Err(parse_err("expected: node <id> <x> <y>".into()));
                    }
                    let id = fields[1]
                        .parse::<usize>()
                        .map_err(|e| parse_err(format!("bad node id: {e}")))?;
                    let x = fields[2]
                        .parse::<f64>()
                        .map_err(|e| parse_err(format!("bad x: {e}")))?;
                    let y = fields[3]
                        .parse::<f64>()
                        .map_err(|e| parse_err(format!("bad y: {e}")))?;
                    nodes.push((id, x, y));
                }
                "edge" => {
                    if fields.len() != 4 {
                        return Err(parse_err("expected: edge <from> <to> <weight>".into()));
                    }
                    let from = fields[1]
                        .parse::<usize>()
                        .map_err(|e| parse_err(format!("bad from: {e}")))?;
                    let to = fields[2]
                        .parse::<usize>()
                        .map_err(|e| parse_err(format!("bad to: {e}")))?;
                    let w = fields[3]
                        .parse::<f64>()
                        .map_err(|e| parse_err(format!("bad weight: {e}")))?;
                    if w <= 0.0 {
                        return Err(parse_err(format!("non-positive weight {w}")));
                    }
                    edges.push((from, to, w));
                }
                other => {
                    return Err(parse_err(format!("unknown record '{other}'")));
                }
            }
        }
        let n = nodes.len();
        let mut coords = vec![(f64::NAN, f64::NAN); n];
        let mut seen = vec![false; n];
        for (id, x, y) in nodes {
            if id >= n {
                return Err(NetworkError::Parse {
                    line: 0,
                    message: format!("node ids must be dense 0..{n}, got {id}"),
                });
            }
            if seen[id] {
                return Err(NetworkError::Parse {
                    line: 0,
                    message: format!("duplicate node id {id}"),
                });
            }
            seen[id] = true;
            coords[id] = (x, y);
        }
        for (from, to, _) in &edges {
            if *from >= n || *to >= n {
                return Err(NetworkError::Parse {
                    line: 0,
                    message: format!("edge ({from},{to}) references missing node"),
                });
            }
        }
        Ok(RoadNetwork::new(coords, &edges))
    }
}

/// Min-heap entry for Dijkstra (BinaryHeap is a max-heap, so the ordering is
/// reversed; ties fall back to node id for determinism).
#[derive(PartialEq)]
struct HeapEntry {
    dist: f64,
    node: NodeId,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .partial_cmp(&self.dist)
            .unwrap()
            .then(other.node.cmp(&self.node))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// A directed path: a sequence of head-to-tail connected edges.
#[derive(Debug, Clone)]
pub struct Path {
    nodes: Vec<NodeId>,
    weights: Vec<f64>,
    /// `cumulative[i]` is the path length before edge `i`; the last entry is
    /// the total length.
    cumulative: Vec<f64>,
    /// `(from << 32 | to)` -> edge index, for O(1) shared-edge lookups.
    lookup: HashMap<u64, usize>,
}

fn edge_key(from: NodeId, to: NodeId) -> u64 {
    ((from as u64) << 32) | to as u64
}

impl Path {
    /// `nodes` has one more entry than `weights`; edge `i` runs from
    /// `nodes[i]` to `nodes[i + 1]` with weight `weights[i]`.
    pub fn new(nodes: Vec<NodeId>, weights: Vec<f64>) -> Self {
        assert!(nodes.len() >= 2, "path needs at least one edge");
        assert_eq!(nodes.len(), weights.len() + 1);
        let mut cumulative = Vec::with_capacity(weights.len() + 1);
        let mut acc = 0.0;
        cumulative.push(0.0);
        for &w in &weights {
            assert!(w > 0.0, "path edge weights must be positive");
            acc += w;
            cumulative.push(acc);
        }
        let mut lookup = HashMap::with_capacity(weights.len());
        for i in 0..weights.len() {
            let prev = lookup.insert(edge_key(nodes[i], nodes[i + 1]), i);
            assert!(prev.is_none(), "path repeats an edge");
        }
        Path {
            nodes,
            weights,
            cumulative,
            lookup,
        }
    }

    pub fn num_edges(&self) -> usize {
        self.weights.len()
    }

    pub fn nodes(&self) -> &[NodeId] {
        &self.nodes
    }

    pub fn edge(&self, i: usize) -> (NodeId, NodeId, f64) {
        (self.nodes[i], self.nodes[i + 1], self.weights[i])
    }

    pub fn edge_weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    /// Exact forward sum of the member edge weights.
    pub fn total_length(&self) -> f64 {
        *self.cumulative.last().unwrap()
    }

    pub fn edge_index_of(&self, from: NodeId, to: NodeId) -> Option<usize> {
        self.lookup.get(&edge_key(from, to)).copied()
    }

    pub fn start_position(&self) -> PathPosition {
        PathPosition {
            edge_index: 0,
            offset: 0.0,
        }
    }

    pub fn end_position(&self) -> PathPosition {
        PathPosition {
            edge_index: self.num_edges() - 1,
            offset: self.weights[self.num_edges() - 1],
        }
    }

    /// Position at `distance` from the start, clamped to `[0, total_length]`.
    /// The result is canonical: an offset equal to the full edge weight is
    /// expressed as offset 0 on the next edge except on the final edge.
    pub fn position_at(&self, distance: f64) -> PathPosition {
        let d = distance.clamp(0.0, self.total_length());
        // First edge whose cumulative end exceeds d.
        let idx = match self
            .cumulative
            .binary_search_by(|c| c.partial_cmp(&d).unwrap())
        {
            Ok(i) => i,
            Err(i) => i - 1,
        };
        let idx = idx.min(self.num_edges() - 1);
        self.canonicalize(PathPosition {
            edge_index: idx,
            offset: d - self.cumulative[idx],
        })
    }

    /// Normalizes an offset equal to the full edge weight to the start of
    /// the next edge; the final edge keeps its end offset.
    pub fn canonicalize(&self, p: PathPosition) -> PathPosition {
        self.check_position(p);
        let mut pos = p;
        while pos.edge_index + 1 < self.num_edges() && pos.offset >= self.weights[pos.edge_index] {
            pos.edge_index += 1;
            pos.offset = 0.0;
        }
        pos
    }

    fn check_position(&self, p: PathPosition) {
        assert!(p.edge_index < self.num_edges(), "edge index out of range");
        assert!(
            p.offset >= 0.0 && p.offset <= self.weights[p.edge_index],
            "offset {} outside [0, {}]",
            p.offset,
            self.weights[p.edge_index]
        );
    }

    pub fn distance_from_start(&self, p: PathPosition) -> f64 {
        self.check_position(p);
        self.cumulative[p.edge_index] + p.offset
    }

    /// Along-path distance from `a` to `b`: `|x_b - x_a + sum of the edge
    /// weights between the two edges|`. `b` must not precede `a`.
    pub fn distance(&self, a: PathPosition, b: PathPosition) -> Result<f64, NetworkError> {
        let a = self.canonicalize(a);
        let b = self.canonicalize(b);
        if (b.edge_index, b.offset) < (a.edge_index, a.offset) {
            return Err(NetworkError::OrderViolation {
                a_edge: a.edge_index,
                a_offset: a.offset,
                b_edge: b.edge_index,
                b_offset: b.offset,
            });
        }
        let mut between = 0.0;
        for i in a.edge_index..b.edge_index {
            between += self.weights[i];
        }
        Ok((b.offset - a.offset + between).abs())
    }
}

/// A location on a path: a distance `offset` from the beginning of the edge
/// at `edge_index`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathPosition {
    pub edge_index: usize,
    pub offset: f64,
}

/// The contiguous run of edges two paths have in common, as positions on
/// each path. Index 0 refers to the first path argument, index 1 to the
/// second.
#[derive(Debug, Clone)]
pub struct PathOverlap {
    /// Start of the first shared edge on each path (canonical positions).
    pub start: [PathPosition; 2],
    /// End of the last shared edge on each path (canonical positions).
    pub end: [PathPosition; 2],
    /// Total weight of the shared edges.
    pub shared_length: f64,
}

/// Finds the contiguous subpath common to two shortest paths, or `None` if
/// they share no edge. For shortest paths in a network with unique shortest
/// paths the shared edges always form one contiguous run traversed in the
/// same order; a violation yields `OverlapNotContiguous`.
pub fn shared_subpath(p0: &Path, p1: &Path) -> Result<Option<PathOverlap>, NetworkError> {
    let mut shared: Vec<(usize, usize)> = Vec::new();
    for i in 0..p0.num_edges() {
        let (from, to, _) = p0.edge(i);
        if let Some(j) = p1.edge_index_of(from, to) {
            shared.push((i, j));
        }
    }
    if shared.is_empty() {
        return Ok(None);
    }
    let (f0, f1) = shared[0];
    let (l0, l1) = *shared.last().unwrap();
    let run = shared.len();
    let contiguous = l0 - f0 + 1 == run
        && l1 >= f1
        && l1 - f1 + 1 == run
        && shared
            .iter()
            .enumerate()
            .all(|(k, &(i, j))| i == f0 + k && j == f1 + k);
    if !contiguous {
        return Err(NetworkError::OverlapNotContiguous);
    }
    let mut shared_length = 0.0;
    for k in f0..=l0 {
        shared_length += p0.edge_weight(k);
    }
    let end0 = p0.canonicalize(PathPosition {
        edge_index: l0,
        offset: p0.edge_weight(l0),
    });
    let end1 = p1.canonicalize(PathPosition {
        edge_index: l1,
        offset: p1.edge_weight(l1),
    });
    Ok(Some(PathOverlap {
        start: [
            PathPosition {
                edge_index: f0,
                offset: 0.0,
            },
            PathPosition {
                edge_index: f1,
                offset: 0.0,
            },
        ],
        end: [end0, end1],
        shared_length,
    }))
}

//! The coordination graph: a directed weighted graph over trucks where an
//! edge (i, j) carries the fuel i saves by adapting its speed profile to
//! platoon with j.

use std::fmt::Write as _;

use crate::pairwise::{adapted_plan, PairwisePlan};
use crate::parallel::map_indexed;
use crate::trucking::{FuelParams, SpeedBand, TransportAssignment, TruckId};

/// One coordination edge: `follower` saves `weight` fuel by following
/// `leader`. Graphs built from truck pairs retain the underlying plan;
/// hand-constructed graphs may omit it.
#[derive(Debug, Clone)]
pub struct CoordEdge {
    pub follower: TruckId,
    pub leader: TruckId,
    pub weight: f64,
    pub plan: Option<PairwisePlan>,
}

/// Immutable directed graph of pairwise fuel savings.
#[derive(Debug, Clone)]
pub struct CoordinationGraph {
    num_nodes: usize,
    /// Sorted by (follower, leader).
    edges: Vec<CoordEdge>,
    /// Edge indices leaving each node (the node as follower), ascending by
    /// leader id.
    out_adj: Vec<Vec<usize>>,
    /// Edge indices entering each node (the node as leader), ascending by
    /// follower id.
    in_adj: Vec<Vec<usize>>,
}

impl CoordinationGraph {
    /// Builds a graph from explicit weighted edges. Weights must be strictly
    /// positive and self-loops are rejected.
    pub fn from_edges(num_nodes: usize, edges: &[(TruckId, TruckId, f64)]) -> Self {
        let mut list: Vec<CoordEdge> = edges
            .iter()
            .map(|&(follower, leader, weight)| {
                assert!(follower != leader, "self-loop on node {follower}");
                assert!(
                    follower < num_nodes && leader < num_nodes,
                    "node out of range"
                );
                assert!(weight > 0.0, "edge weight must be positive, got {weight}");
                CoordEdge {
                    follower,
                    leader,
                    weight,
                    plan: None,
                }
            })
            .collect();
        list.sort_by(|a, b| (a.follower, a.leader).cmp(&(b.follower, b.leader)));
        for pair in list.windows(2) {
            assert!(
                (pair[0].follower, pair[0].leader) != (pair[1].follower, pair[1].leader),
                "duplicate edge"
            );
        }
        Self::assemble(num_nodes, list)
    }

    fn assemble(num_nodes: usize, edges: Vec<CoordEdge>) -> Self {
        let mut out_adj = vec![Vec::new(); num_nodes];
        let mut in_adj = vec![Vec::new(); num_nodes];
        for (idx, e) in edges.iter().enumerate() {
            out_adj[e.follower].push(idx);
            in_adj[e.leader].push(idx);
        }
        // edges are sorted by (follower, leader), so out_adj is ascending by
        // leader and in_adj ascending by follower already.
        CoordinationGraph {
            num_nodes,
            edges,
            out_adj,
            in_adj,
        }
    }

    /// Evaluates the adapted plan for every ordered truck pair and inserts
    /// an edge wherever the follower saves fuel. Pair evaluation is pure, so
    /// the result is independent of the evaluation schedule; with the
    /// `parallel` feature the follower rows are computed on the rayon pool.
    pub fn build(trucks: &[TransportAssignment], params: &FuelParams, band: SpeedBand) -> Self {
        let rows = map_indexed(trucks.len(), |i| {
            Self::follower_row(trucks, i, params, band)
        });
        Self::assemble(trucks.len(), rows.into_iter().flatten().collect())
    }

    /// Sequential reference build: same edges, one pair at a time.
    pub fn build_sequential(
        trucks: &[TransportAssignment],
        params: &FuelParams,
        band: SpeedBand,
    ) -> Self {
        let mut edges = Vec::new();
        for i in 0..trucks.len() {
            edges.extend(Self::follower_row(trucks, i, params, band));
        }
        Self::assemble(trucks.len(), edges)
    }

    fn follower_row(
        trucks: &[TransportAssignment],
        i: usize,
        params: &FuelParams,
        band: SpeedBand,
    ) -> Vec<CoordEdge> {
        let follower = &trucks[i];
        let default_fuel = follower.default_fuel(params);
        let mut row = Vec::new();
        for (j, leader) in trucks.iter().enumerate() {
            if i == j {
                continue;
            }
            if let Some(plan) = adapted_plan(leader, follower, params, band) {
                let weight = default_fuel - plan.fuel_adapted;
                debug_assert!(weight > 0.0);
                row.push(CoordEdge {
                    follower: follower.id,
                    leader: leader.id,
                    weight,
                    plan: Some(plan),
                });
            }
        }
        row
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[CoordEdge] {
        &self.edges
    }

    /// Candidate leaders of `i` with the attainable saving, ascending by id.
    pub fn out_neighbors(&self, i: TruckId) -> impl Iterator<Item = (TruckId, f64)> + '_ {
        self.out_adj[i]
            .iter()
            .map(|&e| (self.edges[e].leader, self.edges[e].weight))
    }

    /// Potential followers of `n` with their saving, ascending by id.
    pub fn in_neighbors(&self, n: TruckId) -> impl Iterator<Item = (TruckId, f64)> + '_ {
        self.in_adj[n]
            .iter()
            .map(|&e| (self.edges[e].follower, self.edges[e].weight))
    }

    pub fn weight(&self, follower: TruckId, leader: TruckId) -> Option<f64> {
        self.out_adj[follower]
            .iter()
            .find(|&&e| self.edges[e].leader == leader)
            .map(|&e| self.edges[e].weight)
    }

    pub fn plan(&self, follower: TruckId, leader: TruckId) -> Option<&PairwisePlan> {
        self.out_adj[follower]
            .iter()
            .find(|&&e| self.edges[e].leader == leader)
            .and_then(|&e| self.edges[e].plan.as_ref())
    }

    /// The best current leader for `i`: the maximum-weight out-neighbor
    /// inside `leaders`, ties broken by the smallest leader id. `None` when
    /// no out-neighbor is a leader (that follower contributes zero).
    pub fn best_leader(&self, i: TruckId, leaders: &LeaderSet) -> Option<(TruckId, f64)> {
        debug_assert!(!leaders.contains(i));
        let mut best: Option<(TruckId, f64)> = None;
        for (leader, w) in self.out_neighbors(i) {
            if !leaders.contains(leader) {
                continue;
            }
            match best {
                Some((_, bw)) if w <= bw => {}
                _ => best = Some((leader, w)),
            }
        }
        best
    }

    /// Debug/golden-test dump: one `cedge <follower> <leader> <weight>
    /// <delta_d_start>` line per edge, in (follower, leader) order.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for e in &self.edges {
            let delta = e.plan.as_ref().map_or(0.0, |p| p.delta_d_start);
            writeln!(
                s,
                "cedge {} {} {:.17e} {:.17e}",
                e.follower, e.leader, e.weight, delta
            )
            .unwrap();
        }
        s
    }
}

/// Membership mask over the graph's nodes, used for the evolving leader set.
/// Constant-time membership with deterministic iteration in id order.
#[derive(Debug, Clone, PartialEq)]
pub struct LeaderSet {
    mask: Vec<bool>,
    count: usize,
}

impl LeaderSet {
    pub fn empty(num_nodes: usize) -> Self {
        LeaderSet {
            mask: vec![false; num_nodes],
            count: 0,
        }
    }

    pub fn from_ids<I: IntoIterator<Item = TruckId>>(num_nodes: usize, ids: I) -> Self {
        let mut set = Self::empty(num_nodes);
        for id in ids {
            set.insert(id);
        }
        set
    }

    pub fn contains(&self, n: TruckId) -> bool {
        self.mask[n]
    }

    pub fn insert(&mut self, n: TruckId) {
        if !self.mask[n] {
            self.mask[n] = true;
            self.count += 1;
        }
    }

    pub fn remove(&mut self, n: TruckId) {
        if self.mask[n] {
            self.mask[n] = false;
            self.count -= 1;
        }
    }

    pub fn toggle(&mut self, n: TruckId) {
        if self.mask[n] {
            self.remove(n);
        } else {
            self.insert(n);
        }
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn capacity(&self) -> usize {
        self.mask.len()
    }

    /// Member ids in ascending order.
    pub fn ids(&self) -> Vec<TruckId> {
        self.mask
            .iter()
            .enumerate()
            .filter_map(|(i, &m)| m.then_some(i))
            .collect()
    }
}

//! Protocol-model conflict graphs and the three link schedulers.
//!
//! Two potential links conflict when they share a node, or when either
//! transmitter lies within `r` of the other link's receiver. A schedule is an
//! independent set of the conflict graph.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::error::{invalid_param, Error, Result};
use crate::network::{ClusterGrid, ClusterState, NeighborTable, Placement, SpatialIndex};
use crate::popularity::ZipfLaw;
use crate::traffic::{PotentialLink, RequestVector};

/// Default vertex cutoff for [`exact_mis`].
pub const DEFAULT_EXACT_CUTOFF: usize = 40;

/// Hard ceiling on the exact solver: vertex sets are `u64` bitmasks.
pub const MAX_EXACT_CUTOFF: usize = 64;

/// Symmetric conflict relation over link indices, stored as sorted rows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConflictGraph {
    offsets: Vec<usize>,
    targets: Vec<u32>,
}

impl ConflictGraph {
    /// Builds a graph from an undirected edge list. Self-loops are dropped and
    /// duplicate edges merged.
    pub fn from_edges(vertices: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut rows = vec![Vec::new(); vertices];
        for &(a, b) in edges {
            if a >= vertices || b >= vertices {
                return Err(invalid_param(format!("edge ({a}, {b}) out of range")));
            }
            if a != b {
                rows[a].push(b as u32);
                rows[b].push(a as u32);
            }
        }
        Ok(Self::from_rows(rows))
    }

    fn from_rows(rows: Vec<Vec<u32>>) -> Self {
        let mut offsets = Vec::with_capacity(rows.len() + 1);
        let mut targets = Vec::with_capacity(rows.iter().map(Vec::len).sum());
        offsets.push(0);
        for mut row in rows {
            row.sort_unstable();
            row.dedup();
            targets.extend_from_slice(&row);
            offsets.push(targets.len());
        }
        Self { offsets, targets }
    }

    pub fn len(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn edge_count(&self) -> usize {
        self.targets.len() / 2
    }

    pub fn neighbors(&self, v: usize) -> &[u32] {
        &self.targets[self.offsets[v]..self.offsets[v + 1]]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.offsets[v + 1] - self.offsets[v]
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.neighbors(a).binary_search(&(b as u32)).is_ok()
    }

    pub fn is_independent(&self, set: &[usize]) -> bool {
        set.iter()
            .enumerate()
            .all(|(i, &a)| set[i + 1..].iter().all(|&b| a != b && !self.has_edge(a, b)))
    }
}

/// Protocol-model conflict between two links.
pub fn links_conflict(a: &PotentialLink, b: &PotentialLink, placement: &Placement, r: f64) -> bool {
    let shares_node = a.tx == b.tx || a.tx == b.rx || a.rx == b.tx || a.rx == b.rx;
    shares_node
        || placement.pos(b.tx).within(placement.pos(a.rx), r)
        || placement.pos(a.tx).within(placement.pos(b.rx), r)
}

pub fn build_conflict_graph(
    links: &[PotentialLink],
    placement: &Placement,
    r: f64,
) -> Result<ConflictGraph> {
    let index = SpatialIndex::new(placement, r)?;
    Ok(conflict_graph_from_table(links, &NeighborTable::build(&index)))
}

fn group_by(n: usize, links: &[PotentialLink], key: impl Fn(&PotentialLink) -> usize) -> (Vec<usize>, Vec<u32>) {
    let mut offsets = vec![0usize; n + 1];
    for l in links {
        offsets[key(l) + 1] += 1;
    }
    for i in 0..n {
        offsets[i + 1] += offsets[i];
    }
    let mut fill = offsets.clone();
    let mut items = vec![0u32; links.len()];
    for (idx, l) in links.iter().enumerate() {
        let k = key(l);
        items[fill[k]] = idx as u32;
        fill[k] += 1;
    }
    (offsets, items)
}

/// Conflict graph using a precomputed neighbor table at the same radius.
pub fn conflict_graph_from_table(links: &[PotentialLink], table: &NeighborTable) -> ConflictGraph {
    let n = table.len();
    let (tx_off, by_tx) = group_by(n, links, |l| l.tx);
    let (rx_off, by_rx) = group_by(n, links, |l| l.rx);
    let sending = |w: usize| &by_tx[tx_off[w]..tx_off[w + 1]];
    let receiving = |w: usize| &by_rx[rx_off[w]..rx_off[w + 1]];

    let mut stamp = vec![u32::MAX; links.len()];
    let mut rows = Vec::with_capacity(links.len());
    for (a, link) in links.iter().enumerate() {
        let mark = a as u32;
        stamp[a] = mark;
        let mut row = Vec::new();
        let mut take = |b: u32, row: &mut Vec<u32>| {
            if stamp[b as usize] != mark {
                stamp[b as usize] = mark;
                row.push(b);
            }
        };
        // Transmitters near (or at) our receiver, receivers near (or at) our
        // transmitter, and links sharing either endpoint.
        for &b in sending(link.rx).iter().chain(sending(link.tx)) {
            take(b, &mut row);
        }
        for &w in table.neighbors(link.rx) {
            for &b in sending(w as usize) {
                take(b, &mut row);
            }
        }
        for &b in receiving(link.tx).iter().chain(receiving(link.rx)) {
            take(b, &mut row);
        }
        for &w in table.neighbors(link.tx) {
            for &b in receiving(w as usize) {
                take(b, &mut row);
            }
        }
        rows.push(row);
    }
    ConflictGraph::from_rows(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchedulerKind {
    Exact,
    Greedy,
    Cluster,
}

/// Selected link indices (ascending) and the scheduler that chose them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schedule {
    pub links: Vec<usize>,
    pub kind: SchedulerKind,
}

impl Schedule {
    pub fn len(&self) -> usize {
        self.links.len()
    }

    pub fn is_empty(&self) -> bool {
        self.links.is_empty()
    }
}

/// No node takes part in two selected links, in any role.
pub fn is_node_disjoint(links: &[PotentialLink], selected: &[usize]) -> bool {
    let mut nodes: Vec<usize> = selected
        .iter()
        .flat_map(|&i| [links[i].tx, links[i].rx])
        .collect();
    let before = nodes.len();
    nodes.sort_unstable();
    nodes.dedup();
    nodes.len() == before
}

/// Minimum-degree greedy: take the lowest-index vertex of minimum residual
/// degree, delete its closed neighborhood, repeat.
pub fn greedy_mis(g: &ConflictGraph) -> Schedule {
    let n = g.len();
    let mut degree: Vec<usize> = (0..n).map(|v| g.degree(v)).collect();
    let mut alive = vec![true; n];
    let max_deg = degree.iter().copied().max().unwrap_or(0);
    let mut buckets: Vec<BinaryHeap<Reverse<u32>>> = vec![BinaryHeap::new(); max_deg + 1];
    for v in 0..n {
        buckets[degree[v]].push(Reverse(v as u32));
    }

    let mut chosen = Vec::new();
    let mut low = 0;
    while low <= max_deg {
        let Some(Reverse(v)) = buckets[low].pop() else {
            low += 1;
            continue;
        };
        let v = v as usize;
        if !alive[v] || degree[v] != low {
            continue;
        }
        chosen.push(v);
        alive[v] = false;
        let removed: Vec<u32> = g.neighbors(v).iter().copied().filter(|&u| alive[u as usize]).collect();
        for &u in &removed {
            alive[u as usize] = false;
        }
        for &u in &removed {
            for &w in g.neighbors(u as usize) {
                let w = w as usize;
                if alive[w] {
                    degree[w] -= 1;
                    buckets[degree[w]].push(Reverse(w as u32));
                    low = low.min(degree[w]);
                }
            }
        }
    }
    chosen.sort_unstable();
    Schedule {
        links: chosen,
        kind: SchedulerKind::Greedy,
    }
}

struct BranchAndBound {
    adj: Vec<u64>,
    best_set: u64,
    best_size: u32,
}

fn bit(v: usize) -> u64 {
    1u64 << v
}

impl BranchAndBound {
    /// min(degree bound `|P| − ⌈|E(P)|/Δ(P)⌉`, greedy clique-cover size).
    fn upper_bound(&self, p: u64) -> u32 {
        let size = p.count_ones();
        let (mut edges2, mut max_deg) = (0u32, 0u32);
        let mut rest = p;
        while rest != 0 {
            let v = rest.trailing_zeros() as usize;
            rest &= rest - 1;
            let d = (self.adj[v] & p).count_ones();
            edges2 += d;
            max_deg = max_deg.max(d);
        }
        if max_deg == 0 {
            return size;
        }
        let edges = edges2 / 2;
        let degree_bound = size - edges.div_ceil(max_deg);

        let mut cliques: Vec<u64> = Vec::new();
        let mut rest = p;
        while rest != 0 {
            let v = rest.trailing_zeros() as usize;
            rest &= rest - 1;
            match cliques.iter_mut().find(|c| **c & !self.adj[v] == 0) {
                Some(c) => *c |= bit(v),
                None => cliques.push(bit(v)),
            }
        }
        degree_bound.min(cliques.len() as u32)
    }

    // Include-before-exclude on the lowest candidate, accepting only strict
    // improvements, so the first optimum found is the lexicographically smallest.
    fn search(&mut self, p: u64, current: u64, count: u32) {
        if p == 0 {
            if count > self.best_size {
                self.best_size = count;
                self.best_set = current;
            }
            return;
        }
        if count + self.upper_bound(p) <= self.best_size {
            return;
        }
        let v = p.trailing_zeros() as usize;
        self.search(p & !self.adj[v] & !bit(v), current | bit(v), count + 1);
        self.search(p & !bit(v), current, count);
    }
}

/// Maximum-cardinality independent set by branch and bound; ties resolve to
/// the lexicographically smallest optimal set.
pub fn exact_mis(g: &ConflictGraph, cutoff: usize) -> Result<Schedule> {
    let n = g.len();
    if n > cutoff.min(MAX_EXACT_CUTOFF) {
        return Err(Error::TooLarge {
            vertices: n,
            cutoff: cutoff.min(MAX_EXACT_CUTOFF),
        });
    }
    let adj: Vec<u64> = (0..n)
        .map(|v| g.neighbors(v).iter().fold(0u64, |acc, &u| acc | bit(u as usize)))
        .collect();
    let greedy = greedy_mis(g).links;
    let mut bb = BranchAndBound {
        adj,
        best_set: greedy.iter().fold(0, |acc, &v| acc | bit(v)),
        best_size: (greedy.len() as u32).saturating_sub(1),
    };
    let all = if n == 64 { u64::MAX } else { bit(n) - 1 };
    bb.search(all, 0, 0);

    let mut links = Vec::with_capacity(bb.best_size as usize);
    let mut rest = bb.best_set;
    while rest != 0 {
        links.push(rest.trailing_zeros() as usize);
        rest &= rest - 1;
    }
    Ok(Schedule {
        links,
        kind: SchedulerKind::Exact,
    })
}

/// A cluster with an intra-cluster serviceable request, and its witness link.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GoodCluster {
    pub cluster: usize,
    pub witness: PotentialLink,
}

/// Clusters in which some member requests a file (of rank `≥ min_file`) that a
/// different member caches, excluding self-requests. `min_file = 1` is the
/// unrestricted rule. The witness is the smallest `(rx, tx)` pair.
pub fn good_clusters(
    clusters: &[ClusterState],
    requests: &RequestVector,
    min_file: usize,
) -> Vec<GoodCluster> {
    let mut out = Vec::new();
    for c in clusters {
        let mut order: Vec<usize> = (0..c.members.len()).collect();
        order.sort_unstable_by_key(|&k| c.members[k]);
        let witness = order.iter().find_map(|&ri| {
            let rx = c.members[ri];
            let want = requests.file(rx);
            if want < min_file || c.files[ri] == want {
                return None;
            }
            order
                .iter()
                .find(|&&ti| ti != ri && c.files[ti] == want)
                .map(|&ti| PotentialLink {
                    tx: c.members[ti],
                    rx,
                    file: want,
                })
        });
        if let Some(witness) = witness {
            out.push(GoodCluster {
                cluster: c.id,
                witness,
            });
        }
    }
    out.sort_by_key(|g| g.cluster);
    out
}

/// Greedy pass over good clusters in row-major order, keeping each witness
/// that conflicts with no earlier kept witness. Returns indices into `good`.
pub fn cluster_schedule(
    grid: &ClusterGrid,
    good: &[GoodCluster],
    placement: &Placement,
    r: f64,
) -> Schedule {
    let g = grid.per_side() as isize;
    let reach = ((r / grid.side()).ceil() as isize + 1).min(g);
    let mut kept_at: Vec<Option<usize>> = vec![None; grid.cluster_count()];
    let mut order: Vec<usize> = (0..good.len()).collect();
    order.sort_by_key(|&i| good[i].cluster);

    let mut chosen = Vec::new();
    for i in order {
        let cand = &good[i];
        let (cx, cy) = grid.coords(cand.cluster);
        let (cx, cy) = (cx as isize, cy as isize);
        let mut blocked = false;
        'scan: for y in (cy - reach).max(0)..=(cy + reach).min(g - 1) {
            for x in (cx - reach).max(0)..=(cx + reach).min(g - 1) {
                if let Some(k) = kept_at[(y * g + x) as usize] {
                    if links_conflict(&cand.witness, &good[k].witness, placement, r) {
                        blocked = true;
                        break 'scan;
                    }
                }
            }
        }
        if !blocked {
            kept_at[cand.cluster] = Some(i);
            chosen.push(i);
        }
    }
    chosen.sort_unstable();
    Schedule {
        links: chosen,
        kind: SchedulerKind::Cluster,
    }
}

/// Popularity mass of the distinct files in `omega` with rank `≥ min_file`.
pub fn cluster_value(omega: &[usize], law: &ZipfLaw, min_file: usize) -> Result<f64> {
    let m = law.len();
    if let Some(&f) = omega.iter().find(|&&f| f == 0 || f > m) {
        return Err(invalid_param(format!("file {f} outside 1..={m}")));
    }
    let mut files: Vec<usize> = omega.iter().copied().filter(|&f| f >= min_file).collect();
    files.sort_unstable();
    files.dedup();
    Ok(files.iter().map(|&f| law.prob(f)).sum())
}

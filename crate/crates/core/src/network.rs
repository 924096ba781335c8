//! Node placement in the unit cell, radius queries, and the virtual-cluster grid.

use std::f64::consts::SQRT_2;

use rand::Rng;

use crate::caching::CacheAssignment;
use crate::error::{invalid_param, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dist2(self, other: Point) -> f64 {
        let (dx, dy) = (self.x - other.x, self.y - other.y);
        dx * dx + dy * dy
    }

    /// Closed-ball test `‖self − other‖ ≤ r`, the single distance rule used
    /// for communication, interference and neighbor queries.
    pub fn within(self, other: Point, r: f64) -> bool {
        self.dist2(other) <= r * r
    }
}

/// Node positions in `[0,1]²`, indexed by node id.
#[derive(Debug, Clone, PartialEq)]
pub struct Placement {
    positions: Vec<Point>,
}

impl Placement {
    pub fn from_points(positions: Vec<Point>) -> Result<Self> {
        if positions.is_empty() {
            return Err(invalid_param("placement needs at least one node"));
        }
        if let Some(p) = positions
            .iter()
            .find(|p| !(0.0..=1.0).contains(&p.x) || !(0.0..=1.0).contains(&p.y))
        {
            return Err(invalid_param(format!("point {p:?} lies outside the unit cell")));
        }
        Ok(Self { positions })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn pos(&self, i: usize) -> Point {
        self.positions[i]
    }

    pub fn positions(&self) -> &[Point] {
        &self.positions
    }
}

/// `n` i.i.d. uniform points; consumes `2n` uniforms (x then y per node).
pub fn place_nodes<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Placement> {
    if n == 0 {
        return Err(invalid_param("n must be at least 1"));
    }
    let positions = (0..n)
        .map(|_| {
            let x = rng.gen::<f64>();
            let y = rng.gen::<f64>();
            Point::new(x, y)
        })
        .collect();
    Ok(Placement { positions })
}

fn check_radius(r: f64) -> Result<()> {
    if r.is_finite() && r > 0.0 && r <= SQRT_2 {
        Ok(())
    } else {
        Err(invalid_param(format!("radius must lie in (0, sqrt 2], got {r}")))
    }
}

// Keeps the bucket table bounded when r is tiny.
const MAX_BUCKETS_PER_SIDE: usize = 1024;

/// Uniform bucket grid over the unit cell for fixed-radius queries.
#[derive(Debug, Clone)]
pub struct SpatialIndex<'a> {
    placement: &'a Placement,
    r: f64,
    side: usize,
    buckets: Vec<Vec<u32>>,
}

impl<'a> SpatialIndex<'a> {
    pub fn new(placement: &'a Placement, r: f64) -> Result<Self> {
        check_radius(r)?;
        let side = ((1.0 / r).floor() as usize).clamp(1, MAX_BUCKETS_PER_SIDE);
        let mut buckets = vec![Vec::new(); side * side];
        for (i, p) in placement.positions.iter().enumerate() {
            buckets[Self::bucket_of(side, *p)].push(i as u32);
        }
        Ok(Self {
            placement,
            r,
            side,
            buckets,
        })
    }

    fn coord(side: usize, v: f64) -> usize {
        ((v * side as f64) as usize).min(side - 1)
    }

    fn bucket_of(side: usize, p: Point) -> usize {
        Self::coord(side, p.y) * side + Self::coord(side, p.x)
    }

    pub fn radius(&self) -> f64 {
        self.r
    }

    /// Calls `f(j)` for every node `j` with `‖pos_j − p‖ ≤ r`, bucket by bucket.
    pub fn for_each_within(&self, p: Point, mut f: impl FnMut(usize)) {
        // Bucket side is ≥ r, so the 3×3 block around p's bucket suffices.
        let (cx, cy) = (Self::coord(self.side, p.x), Self::coord(self.side, p.y));
        for by in cy.saturating_sub(1)..=(cy + 1).min(self.side - 1) {
            for bx in cx.saturating_sub(1)..=(cx + 1).min(self.side - 1) {
                for &j in &self.buckets[by * self.side + bx] {
                    if self.placement.positions[j as usize].within(p, self.r) {
                        f(j as usize);
                    }
                }
            }
        }
    }

    /// All `j ≠ i` within distance `r` of node `i`, ascending.
    pub fn neighbors(&self, i: usize) -> Result<Vec<usize>> {
        if i >= self.placement.len() {
            return Err(Error::NotFound(format!("node {i}")));
        }
        let mut out = Vec::new();
        self.for_each_within(self.placement.pos(i), |j| {
            if j != i {
                out.push(j)
            }
        });
        out.sort_unstable();
        Ok(out)
    }
}

/// One-shot neighbor query. Build a [`SpatialIndex`] when querying repeatedly.
pub fn neighbors(p: &Placement, i: usize, r: f64) -> Result<Vec<usize>> {
    SpatialIndex::new(p, r)?.neighbors(i)
}

/// Neighbor lists of every node, in compressed rows.
#[derive(Debug, Clone)]
pub struct NeighborTable {
    offsets: Vec<usize>,
    targets: Vec<u32>,
}

impl NeighborTable {
    pub fn build(index: &SpatialIndex<'_>) -> Self {
        let n = index.placement.len();
        let mut offsets = Vec::with_capacity(n + 1);
        let mut targets = Vec::new();
        offsets.push(0);
        let mut row = Vec::new();
        for i in 0..n {
            row.clear();
            index.for_each_within(index.placement.pos(i), |j| {
                if j != i {
                    row.push(j as u32)
                }
            });
            row.sort_unstable();
            targets.extend_from_slice(&row);
            offsets.push(targets.len());
        }
        Self { offsets, targets }
    }

    pub fn neighbors(&self, i: usize) -> &[u32] {
        &self.targets[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn len(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// The virtual-cluster grid: `g × g` square cells of side `1/g ≤ r/√2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterGrid {
    r: f64,
    per_side: usize,
}

impl ClusterGrid {
    pub fn new(r: f64) -> Result<Self> {
        check_radius(r)?;
        let mut g = (SQRT_2 / r).ceil().max(1.0) as usize;
        // The ceiling can land one short after rounding; the diameter bound is what matters.
        while SQRT_2 / g as f64 > r {
            g += 1;
        }
        Ok(Self { r, per_side: g })
    }

    pub fn radius(&self) -> f64 {
        self.r
    }

    /// Cells per side, `g`.
    pub fn per_side(&self) -> usize {
        self.per_side
    }

    /// Cell side `s = 1/g`.
    pub fn side(&self) -> f64 {
        1.0 / self.per_side as f64
    }

    pub fn cluster_count(&self) -> usize {
        self.per_side * self.per_side
    }

    /// `(col, row)` of a cluster id. Ids are row-major from the bottom-left cell.
    pub fn coords(&self, id: usize) -> (usize, usize) {
        (id % self.per_side, id / self.per_side)
    }

    // Closed lower/left edges, open upper/right except the last row and column.
    fn axis_cell(&self, v: f64) -> usize {
        ((v * self.per_side as f64).floor() as usize).min(self.per_side - 1)
    }

    pub fn cluster_of(&self, p: Point) -> usize {
        self.axis_cell(p.y) * self.per_side + self.axis_cell(p.x)
    }

    /// Node ids of every cluster, ascending within each cluster.
    pub fn partition(&self, placement: &Placement) -> Partition {
        let mut cells = vec![Vec::new(); self.cluster_count()];
        for (i, p) in placement.positions().iter().enumerate() {
            cells[self.cluster_of(*p)].push(i);
        }
        Partition {
            n: placement.len(),
            cells,
        }
    }

    /// Closed square of side `s + 2r` centred on the cluster, clipped to the cell.
    pub fn max_square(&self, id: usize) -> Result<(Point, Point)> {
        if id >= self.cluster_count() {
            return Err(Error::NotFound(format!("cluster {id}")));
        }
        let (col, row) = self.coords(id);
        let s = self.side();
        let lo = Point::new(
            (col as f64 * s - self.r).max(0.0),
            (row as f64 * s - self.r).max(0.0),
        );
        let hi = Point::new(
            ((col + 1) as f64 * s + self.r).min(1.0),
            ((row + 1) as f64 * s + self.r).min(1.0),
        );
        Ok((lo, hi))
    }
}

pub fn build_cluster_grid(r: f64) -> Result<ClusterGrid> {
    ClusterGrid::new(r)
}

/// Node ids grouped by cluster.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub n: usize,
    pub cells: Vec<Vec<usize>>,
}

/// One virtual cluster with its members and the files they cache (`ω`).
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterState {
    pub id: usize,
    pub members: Vec<usize>,
    /// `files[k]` is the file cached by `members[k]`.
    pub files: Vec<usize>,
}

impl ClusterState {
    pub fn occupancy(&self) -> usize {
        self.members.len()
    }
}

pub fn cluster_members(
    grid: &ClusterGrid,
    placement: &Placement,
    caches: &CacheAssignment,
) -> Result<Vec<ClusterState>> {
    if caches.len() != placement.len() {
        return Err(invalid_param(format!(
            "{} caches for {} nodes",
            caches.len(),
            placement.len()
        )));
    }
    let partition = grid.partition(placement);
    Ok(partition
        .cells
        .into_iter()
        .enumerate()
        .map(|(id, members)| {
            let files = members.iter().map(|&i| caches.file(i)).collect();
            ClusterState { id, members, files }
        })
        .collect())
}

/// Nodes inside the clipped `(s + 2r)`-square around cluster `id`.
pub fn max_square_members(
    grid: &ClusterGrid,
    id: usize,
    placement: &Placement,
) -> Result<Vec<usize>> {
    let (lo, hi) = grid.max_square(id)?;
    Ok(placement
        .positions()
        .iter()
        .enumerate()
        .filter(|(_, p)| p.x >= lo.x && p.x <= hi.x && p.y >= lo.y && p.y <= hi.y)
        .map(|(i, _)| i)
        .collect())
}

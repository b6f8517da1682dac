//! Grid A* core shared by the hierarchical planner and the baselines.
//!
//! Searches run on an 8-connected grid restricted to a rectangular window
//! of the map. Ties on the aggregate cost break on lower heuristic, then on
//! row-major node index, so repeated runs are bit-identical regardless of
//! thread count.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::uncmap::UncertaintyMap;

use super::{GridNode, PlanError};

/// Edge cost model: the baselines differ only here.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CostModel {
    /// Path length only; ignores area uncertainty.
    Distance,
    /// Length scaled by `1/(1 - U(target))`.
    UncertaintyWeighted,
}

impl CostModel {
    #[inline]
    pub fn edge(self, distance: f64, target_u: f64) -> f64 {
        match self {
            CostModel::Distance => distance,
            CostModel::UncertaintyWeighted => distance / (1.0 - target_u),
        }
    }
}

/// Rectangular cell window, inclusive of `col0..col0+cols`.
#[derive(Clone, Copy, Debug)]
pub struct Window {
    pub col0: usize,
    pub row0: usize,
    pub cols: usize,
    pub rows: usize,
}

impl Window {
    pub fn full(map: &UncertaintyMap) -> Window {
        Window { col0: 0, row0: 0, cols: map.width, rows: map.height }
    }

    /// Window of cells whose centers fall inside a world box, clipped to
    /// the map and always at least one cell.
    pub fn from_world_box(map: &UncertaintyMap, min: crate::geom::Point2, max: crate::geom::Point2) -> Window {
        let to_cell = |v: f64, origin: f64| ((v - origin) / map.cell_size).floor();
        let c0 = to_cell(min.x, map.origin.x).max(0.0) as usize;
        let r0 = to_cell(min.y, map.origin.y).max(0.0) as usize;
        let c1 = (to_cell(max.x, map.origin.x) as isize).clamp(c0 as isize, map.width as isize - 1) as usize;
        let r1 = (to_cell(max.y, map.origin.y) as isize).clamp(r0 as isize, map.height as isize - 1) as usize;
        let c0 = c0.min(map.width - 1);
        let r0 = r0.min(map.height - 1);
        Window { col0: c0, row0: r0, cols: c1 - c0 + 1, rows: r1 - r0 + 1 }
    }

    #[inline]
    pub fn contains(&self, node: GridNode) -> bool {
        node.col >= self.col0
            && node.col < self.col0 + self.cols
            && node.row >= self.row0
            && node.row < self.row0 + self.rows
    }

    #[inline]
    fn local_index(&self, node: GridNode) -> usize {
        (node.row - self.row0) * self.cols + (node.col - self.col0)
    }

    #[inline]
    fn node_at(&self, local: usize) -> GridNode {
        GridNode { col: self.col0 + local % self.cols, row: self.row0 + local / self.cols }
    }

    pub fn len(&self) -> usize {
        self.cols * self.rows
    }
}

struct OpenEntry {
    f: f64,
    h: f64,
    /// Row-major index in the full map; the deterministic tie-breaker.
    order: usize,
    local: u32,
}

impl PartialEq for OpenEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for OpenEntry {}

impl PartialOrd for OpenEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for OpenEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // reversed: BinaryHeap is a max-heap, we want the smallest entry on top
        other
            .f
            .total_cmp(&self.f)
            .then_with(|| other.h.total_cmp(&self.h))
            .then_with(|| other.order.cmp(&self.order))
    }
}

pub struct SearchResult {
    pub cells: Vec<GridNode>,
    pub cost: f64,
    pub expanded: u64,
}

/// Reusable search state. The hierarchical planner runs hundreds of tiny
/// window searches per plan; epoch-stamped arrays avoid reallocating and
/// clearing them each time.
pub struct Scratch {
    epoch: u32,
    stamp: Vec<u32>,
    closed_stamp: Vec<u32>,
    g: Vec<f64>,
    parent: Vec<u32>,
    open: BinaryHeap<OpenEntry>,
}

impl Scratch {
    pub fn new() -> Scratch {
        Scratch {
            epoch: 0,
            stamp: Vec::new(),
            closed_stamp: Vec::new(),
            g: Vec::new(),
            parent: Vec::new(),
            open: BinaryHeap::new(),
        }
    }

    fn begin(&mut self, cells: usize) {
        if self.stamp.len() < cells {
            self.stamp.resize(cells, 0);
            self.closed_stamp.resize(cells, 0);
            self.g.resize(cells, f64::INFINITY);
            self.parent.resize(cells, u32::MAX);
        }
        self.open.clear();
        // epoch 0 marks "never used"; skip it on wrap
        self.epoch = self.epoch.wrapping_add(1);
        if self.epoch == 0 {
            self.stamp.iter_mut().for_each(|s| *s = 0);
            self.closed_stamp.iter_mut().for_each(|s| *s = 0);
            self.epoch = 1;
        }
    }

    #[inline]
    fn g_at(&self, i: usize) -> f64 {
        if self.stamp[i] == self.epoch {
            self.g[i]
        } else {
            f64::INFINITY
        }
    }

    #[inline]
    fn set(&mut self, i: usize, g: f64, parent: u32) {
        self.stamp[i] = self.epoch;
        self.g[i] = g;
        self.parent[i] = parent;
    }

    #[inline]
    fn is_closed(&self, i: usize) -> bool {
        self.closed_stamp[i] == self.epoch
    }

    #[inline]
    fn close(&mut self, i: usize) {
        self.closed_stamp[i] = self.epoch;
    }
}

impl Default for Scratch {
    fn default() -> Self {
        Scratch::new()
    }
}

const NEIGHBORS: [(isize, isize); 8] =
    [(-1, -1), (0, -1), (1, -1), (-1, 0), (1, 0), (-1, 1), (0, 1), (1, 1)];

/// A* between two unblocked cells inside `window`. Returns the cost-minimal
/// path under the cost model; `Err(Unreachable)` when no path exists within
/// the window.
pub fn search(
    map: &UncertaintyMap,
    start: GridNode,
    goal: GridNode,
    window: Window,
    cost: CostModel,
) -> Result<SearchResult, PlanError> {
    search_with(map, start, goal, window, cost, &mut Scratch::new())
}

/// [`search`] with caller-owned scratch state.
pub fn search_with(
    map: &UncertaintyMap,
    start: GridNode,
    goal: GridNode,
    window: Window,
    cost: CostModel,
    scratch: &mut Scratch,
) -> Result<SearchResult, PlanError> {
    debug_assert!(window.contains(start) && window.contains(goal));
    if map.is_blocked(start.col, start.row) || map.is_blocked(goal.col, goal.row) {
        return Err(PlanError::BlockedEndpoint);
    }

    let stride = map.cell_size;
    let heuristic = |n: GridNode| {
        let dc = n.col as f64 - goal.col as f64;
        let dr = n.row as f64 - goal.row as f64;
        stride * dc.hypot(dr)
    };

    scratch.begin(window.len());
    let start_local = window.local_index(start);
    let goal_local = window.local_index(goal);
    scratch.set(start_local, 0.0, u32::MAX);
    scratch.open.push(OpenEntry {
        f: heuristic(start),
        h: heuristic(start),
        order: map.index(start.col, start.row),
        local: start_local as u32,
    });

    let mut expanded = 0u64;
    while let Some(entry) = scratch.open.pop() {
        let local = entry.local as usize;
        if scratch.is_closed(local) {
            continue; // stale entry superseded by a cheaper push
        }
        scratch.close(local);
        expanded += 1;
        if local == goal_local {
            let mut cells = Vec::new();
            let mut cursor = goal_local;
            loop {
                cells.push(window.node_at(cursor));
                if cursor == start_local {
                    break;
                }
                cursor = scratch.parent[cursor] as usize;
            }
            cells.reverse();
            return Ok(SearchResult { cells, cost: scratch.g[goal_local], expanded });
        }

        let node = window.node_at(local);
        let g_here = scratch.g[local];
        for (dc, dr) in NEIGHBORS {
            let col = node.col as isize + dc;
            let row = node.row as isize + dr;
            if col < 0 || row < 0 {
                continue;
            }
            let next = GridNode { col: col as usize, row: row as usize };
            if !window.contains(next) || next.col >= map.width || next.row >= map.height {
                continue;
            }
            if map.is_blocked(next.col, next.row) {
                continue;
            }
            let next_local = window.local_index(next);
            if scratch.is_closed(next_local) {
                continue;
            }
            let dist = if dc != 0 && dr != 0 { stride * std::f64::consts::SQRT_2 } else { stride };
            let new_cost = g_here + cost.edge(dist, map.u_at(next.col, next.row));
            if new_cost < scratch.g_at(next_local) {
                scratch.set(next_local, new_cost, local as u32);
                let h = heuristic(next);
                scratch.open.push(OpenEntry {
                    f: new_cost + h,
                    h,
                    order: map.index(next.col, next.row),
                    local: next_local as u32,
                });
            }
        }
    }
    Err(PlanError::Unreachable)
}

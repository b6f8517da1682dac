//! Global path planning on uncertainty maps.
//!
//! Three planners share one A* core:
//!
//! - [`traditional_astar`] (T-A*): single fine layer, pure-distance cost.
//! - [`improved_astar`] (I-A*): single fine layer, uncertainty-weighted
//!   cost `d / (1 - U)`.
//! - [`coarse2fine_plan`]: plans on the coarsest pyramid layer first, then
//!   refines every consecutive waypoint pair on the next finer layer inside
//!   a small window around the pair. Segment searches are independent and
//!   run in parallel; the merge is a deterministic fold in segment order.
//!
//! The Euclidean heuristic never exceeds the true remaining cost because
//! the uncertainty factor is at least 1, so every variant returns
//! cost-minimal paths for its own edge model.

mod astar;

pub use astar::{CostModel, SearchResult, Window};

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::geom::{Aabb, Point2};
use crate::uncmap::{MapPyramid, UncertaintyMap};

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("point ({x}, {y}) is outside the map")]
    OutOfBounds { x: f64, y: f64 },
    #[error("no unblocked cell within {radius} strides of ({x}, {y})")]
    NoOpenCellNearby { x: f64, y: f64, radius: usize },
    #[error("start or goal cell is blocked")]
    BlockedEndpoint,
    #[error("goal is unreachable")]
    Unreachable,
    #[error("nodes are not 8-connected neighbors")]
    NotAdjacent,
    #[error("edge target cell is blocked")]
    BlockedTarget,
}

/// Cell indices on one pyramid layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GridNode {
    pub col: usize,
    pub row: usize,
}

/// Uncertainty-weighted cost of one 8-connected step (the search cost of
/// the improved and hierarchical planners).
pub fn edge_cost(from: GridNode, to: GridNode, map: &UncertaintyMap) -> Result<f64, PlanError> {
    let dc = from.col.abs_diff(to.col);
    let dr = from.row.abs_diff(to.row);
    if dc > 1 || dr > 1 || (dc == 0 && dr == 0) {
        return Err(PlanError::NotAdjacent);
    }
    if map.is_blocked(to.col, to.row) {
        return Err(PlanError::BlockedTarget);
    }
    let dist = if dc == 1 && dr == 1 {
        map.cell_size * std::f64::consts::SQRT_2
    } else {
        map.cell_size
    };
    Ok(CostModel::UncertaintyWeighted.edge(dist, map.u_at(to.col, to.row)))
}

/// Single-layer A* between two cells over the whole map.
pub fn astar_search(
    map: &UncertaintyMap,
    start: GridNode,
    goal: GridNode,
    cost: CostModel,
) -> Result<SearchResult, PlanError> {
    astar::search(map, start, goal, Window::full(map), cost)
}

/// Planned global path in world coordinates.
#[derive(Clone, Debug)]
pub struct GlobalPath {
    pub nodes: Vec<Point2>,
    /// Pyramid layer (0 = fine) whose search first placed each node.
    pub provenance: Vec<u8>,
    /// Stride of the layer the nodes live on.
    pub stride: f64,
}

impl GlobalPath {
    pub fn length_m(&self) -> f64 {
        self.nodes.windows(2).map(|w| w[0].distance(w[1])).sum()
    }

    /// Check the structural path invariants against the map it was planned on.
    pub fn validate(&self, map: &UncertaintyMap) -> Result<(), PlanError> {
        for pair in self.nodes.windows(2) {
            let a = map.cell_of(pair[0]).ok_or(PlanError::OutOfBounds { x: pair[0].x, y: pair[0].y })?;
            let b = map.cell_of(pair[1]).ok_or(PlanError::OutOfBounds { x: pair[1].x, y: pair[1].y })?;
            let dc = a.0.abs_diff(b.0);
            let dr = a.1.abs_diff(b.1);
            if dc > 1 || dr > 1 || (dc == 0 && dr == 0) {
                return Err(PlanError::NotAdjacent);
            }
        }
        for p in &self.nodes {
            let (c, r) = map.cell_of(*p).ok_or(PlanError::OutOfBounds { x: p.x, y: p.y })?;
            if map.is_blocked(c, r) {
                return Err(PlanError::BlockedTarget);
            }
        }
        Ok(())
    }
}

/// Search metrics reported by every planner.
#[derive(Clone, Debug, Serialize)]
pub struct SearchStats {
    pub expanded: u64,
    pub wall_time_s: f64,
    pub length_m: f64,
    pub mean_uncertainty: f64,
    /// True when the hierarchical planner had to fall back to a
    /// single-layer fine search.
    #[serde(skip)]
    pub fallback: bool,
}

impl SearchStats {
    /// The exact four-field stats schema written next to path CSVs.
    pub fn to_json(&self) -> String {
        serde_json::json!({
            "expanded": self.expanded,
            "wall_time_s": self.wall_time_s,
            "length_m": self.length_m,
            "mean_uncertainty": self.mean_uncertainty,
        })
        .to_string()
    }
}

/// Mean fine-layer uncertainty over the path nodes.
pub fn path_uncertainty(path: &GlobalPath, fine: &UncertaintyMap) -> f64 {
    if path.nodes.is_empty() {
        return 0.0;
    }
    let sum: f64 = path
        .nodes
        .iter()
        .map(|p| fine.cell_of(*p).map(|(c, r)| fine.u_at(c, r)).unwrap_or(0.0))
        .sum();
    sum / path.nodes.len() as f64
}

/// Snap a world point to the nearest unblocked cell within `radius` strides
/// (Chebyshev). Ties break on distance to the point, then row-major index.
pub fn snap_to_unblocked(map: &UncertaintyMap, p: Point2, radius: usize) -> Result<GridNode, PlanError> {
    let (col, row) = map.cell_of(p).ok_or(PlanError::OutOfBounds { x: p.x, y: p.y })?;
    if !map.is_blocked(col, row) {
        return Ok(GridNode { col, row });
    }
    let mut best: Option<(f64, usize, GridNode)> = None;
    for ring in 1..=radius {
        let c0 = col.saturating_sub(ring);
        let c1 = (col + ring).min(map.width - 1);
        let r0 = row.saturating_sub(ring);
        let r1 = (row + ring).min(map.height - 1);
        for r in r0..=r1 {
            for c in c0..=c1 {
                if c.abs_diff(col).max(r.abs_diff(row)) != ring || map.is_blocked(c, r) {
                    continue;
                }
                let d = map.cell_center(c, r).distance(p);
                let idx = map.index(c, r);
                let candidate = (d, idx, GridNode { col: c, row: r });
                let better = match &best {
                    None => true,
                    Some((bd, bidx, _)) => d < *bd - 1e-12 || ((d - *bd).abs() <= 1e-12 && idx < *bidx),
                };
                if better {
                    best = Some(candidate);
                }
            }
        }
        if best.is_some() {
            break;
        }
    }
    best.map(|(_, _, n)| n).ok_or(PlanError::NoOpenCellNearby { x: p.x, y: p.y, radius })
}

fn single_layer_plan(
    map: &UncertaintyMap,
    start: Point2,
    goal: Point2,
    cost: CostModel,
) -> Result<(GlobalPath, SearchStats), PlanError> {
    let t0 = std::time::Instant::now();
    let s = snap_to_unblocked(map, start, SNAP_RADIUS)?;
    let g = snap_to_unblocked(map, goal, SNAP_RADIUS)?;
    let result = astar_search(map, s, g, cost)?;
    let nodes: Vec<Point2> = result.cells.iter().map(|n| map.cell_center(n.col, n.row)).collect();
    let path = GlobalPath { provenance: vec![0; nodes.len()], nodes, stride: map.cell_size };
    let stats = SearchStats {
        expanded: result.expanded,
        wall_time_s: t0.elapsed().as_secs_f64(),
        length_m: path.length_m(),
        mean_uncertainty: path_uncertainty(&path, map),
        fallback: false,
    };
    Ok((path, stats))
}

/// Baseline T-A*: single-layer fine search that ignores uncertainty.
pub fn traditional_astar(
    map: &UncertaintyMap,
    start: Point2,
    goal: Point2,
) -> Result<(GlobalPath, SearchStats), PlanError> {
    single_layer_plan(map, start, goal, CostModel::Distance)
}

/// Baseline I-A*: single-layer fine search with the uncertainty-weighted
/// cost, i.e. the hierarchical planner minus the hierarchy.
pub fn improved_astar(
    map: &UncertaintyMap,
    start: Point2,
    goal: Point2,
) -> Result<(GlobalPath, SearchStats), PlanError> {
    single_layer_plan(map, start, goal, CostModel::UncertaintyWeighted)
}

const SNAP_RADIUS: usize = 3;
/// Window inflation retries (in parent strides) before giving a segment the
/// whole layer.
const WINDOW_INFLATIONS: [f64; 3] = [1.0, 2.0, 4.0];

struct Waypoint {
    pos: Point2,
    layer: u8,
}

/// Clamp a point into the map extent. Clipped pooling lets a coarse layer
/// overhang the fine extent, so parent cell centers can fall just outside
/// the child map.
fn clamp_into(map: &UncertaintyMap, p: Point2) -> Point2 {
    let eps = map.cell_size * 1e-6;
    Point2::new(
        p.x.clamp(map.origin.x + eps, map.origin.x + map.width as f64 * map.cell_size - eps),
        p.y.clamp(map.origin.y + eps, map.origin.y + map.height as f64 * map.cell_size - eps),
    )
}

/// Refine one waypoint pair on `map`, retrying with wider windows before
/// falling back to the full layer.
fn refine_segment(
    map: &UncertaintyMap,
    a: Point2,
    b: Point2,
    parent_stride: f64,
    scratch: &mut astar::Scratch,
) -> Result<astar::SearchResult, PlanError> {
    let start = snap_to_unblocked(map, clamp_into(map, a), SNAP_RADIUS)?;
    let goal = snap_to_unblocked(map, clamp_into(map, b), SNAP_RADIUS)?;
    let bb = Aabb::of_points([map.cell_center(start.col, start.row), map.cell_center(goal.col, goal.row)]).unwrap();
    for inflation in WINDOW_INFLATIONS {
        let inflated = bb.inflate(parent_stride * inflation);
        let window = Window::from_world_box(map, inflated.min, inflated.max);
        if !window.contains(start) || !window.contains(goal) {
            continue;
        }
        match astar::search_with(map, start, goal, window, CostModel::UncertaintyWeighted, scratch) {
            Ok(res) => return Ok(res),
            Err(PlanError::Unreachable) => continue,
            Err(e) => return Err(e),
        }
    }
    astar::search_with(map, start, goal, Window::full(map), CostModel::UncertaintyWeighted, scratch)
}

/// Hierarchical Coarse2fine A*.
///
/// Plans on the coarsest layer, then for each consecutive waypoint pair
/// searches the next finer layer inside the bounding window of the pair
/// (inflated by one parent stride) and merges the segments, deduplicating
/// the shared endpoints. The true start and goal replace the endpoint cell
/// centers at every refinement so the final path starts and ends at the
/// fine cells containing them.
///
/// When the coarse layer cannot connect the endpoints (or a segment stays
/// unreachable after window expansion), the planner falls back to a
/// single-layer fine search and flags it in the stats.
pub fn coarse2fine_plan(
    pyramid: &MapPyramid,
    start: Point2,
    goal: Point2,
) -> Result<(GlobalPath, SearchStats), PlanError> {
    let t0 = std::time::Instant::now();
    let fine = pyramid.fine();
    // fail early if the endpoints are hopeless at fine resolution
    snap_to_unblocked(fine, start, SNAP_RADIUS)?;
    snap_to_unblocked(fine, goal, SNAP_RADIUS)?;

    match hierarchical_plan(pyramid, start, goal) {
        Ok((path, expanded)) => {
            let stats = SearchStats {
                expanded,
                wall_time_s: t0.elapsed().as_secs_f64(),
                length_m: path.length_m(),
                mean_uncertainty: path_uncertainty(&path, fine),
                fallback: false,
            };
            Ok((path, stats))
        }
        Err(PlanError::Unreachable) | Err(PlanError::NoOpenCellNearby { .. }) => {
            let (path, mut stats) = single_layer_plan(fine, start, goal, CostModel::UncertaintyWeighted)?;
            stats.wall_time_s = t0.elapsed().as_secs_f64();
            stats.fallback = true;
            Ok((path, stats))
        }
        Err(e) => Err(e),
    }
}

fn hierarchical_plan(pyramid: &MapPyramid, start: Point2, goal: Point2) -> Result<(GlobalPath, u64), PlanError> {
    let layers = pyramid.layers();
    let top = layers.len() - 1;
    let coarse = &layers[top];

    let s = snap_to_unblocked(coarse, start, SNAP_RADIUS)?;
    let g = snap_to_unblocked(coarse, goal, SNAP_RADIUS)?;
    let coarse_res = astar::search(coarse, s, g, Window::full(coarse), CostModel::UncertaintyWeighted)?;
    let mut expanded = coarse_res.expanded;

    // waypoints to refine: true endpoints plus the interior coarse cells
    let mut waypoints: Vec<Waypoint> = Vec::with_capacity(coarse_res.cells.len());
    waypoints.push(Waypoint { pos: start, layer: top as u8 });
    for cell in coarse_res.cells.iter().skip(1).take(coarse_res.cells.len().saturating_sub(2)) {
        waypoints.push(Waypoint { pos: coarse.cell_center(cell.col, cell.row), layer: top as u8 });
    }
    waypoints.push(Waypoint { pos: goal, layer: top as u8 });

    for layer_idx in (0..top).rev() {
        let map = &layers[layer_idx];
        let parent_stride = layers[layer_idx + 1].cell_size;

        // chunked so the scheduler overhead stays below the work of the
        // tiny window searches; output order is index-stable either way
        let segments: Vec<astar::SearchResult> = (0..waypoints.len() - 1)
            .into_par_iter()
            .with_min_len(8)
            .map_init(astar::Scratch::new, |scratch, i| {
                refine_segment(map, waypoints[i].pos, waypoints[i + 1].pos, parent_stride, scratch)
            })
            .collect::<Result<_, _>>()?;
        expanded += segments.iter().map(|s| s.expanded).sum::<u64>();

        // deterministic sequential merge; shared endpoints appear once
        let mut merged: Vec<Waypoint> = Vec::new();
        for (i, seg) in segments.iter().enumerate() {
            let endpoint_layer = waypoints[i + 1].layer;
            let first_layer = waypoints[i].layer;
            for (j, cell) in seg.cells.iter().enumerate() {
                let pos = map.cell_center(cell.col, cell.row);
                if i > 0 && j == 0 {
                    debug_assert_eq!(
                        merged.last().map(|w| (w.pos.x, w.pos.y)),
                        Some((pos.x, pos.y)),
                        "segment joins must share their endpoint cell"
                    );
                    continue;
                }
                let layer = if j == 0 {
                    first_layer
                } else if j == seg.cells.len() - 1 {
                    endpoint_layer
                } else {
                    layer_idx as u8
                };
                // drop duplicates created by waypoints snapping into one cell
                if let Some(last) = merged.last() {
                    if last.pos == pos {
                        continue;
                    }
                }
                merged.push(Waypoint { pos, layer });
            }
        }
        // keep the true endpoints as refinement targets for finer layers
        if layer_idx > 0 {
            merged.first_mut().unwrap().pos = start;
            merged.last_mut().unwrap().pos = goal;
        }
        waypoints = merged;
    }

    let path = GlobalPath {
        nodes: waypoints.iter().map(|w| w.pos).collect(),
        provenance: waypoints.iter().map(|w| w.layer).collect(),
        stride: layers[0].cell_size,
    };
    Ok((path, expanded))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::uncmap::{build_pyramid, mixed_pool, normalize, random_field, RandomFieldParams};
    use approx::assert_relative_eq;

    fn uniform_map(width: usize, height: usize, stride: f64, u: f64) -> UncertaintyMap {
        UncertaintyMap {
            origin: Point2::new(0.0, 0.0),
            cell_size: stride,
            width,
            height,
            u: vec![u; width * height],
            blocked: vec![false; width * height],
        }
    }

    #[test]
    fn edge_cost_examples() {
        let mut map = uniform_map(4, 4, 10.0, 0.0);
        let from = GridNode { col: 0, row: 0 };
        assert_relative_eq!(edge_cost(from, GridNode { col: 1, row: 0 }, &map).unwrap(), 10.0);
        map.u[1] = 0.5;
        assert_relative_eq!(edge_cost(from, GridNode { col: 1, row: 0 }, &map).unwrap(), 20.0);
        map.u[5] = 0.5;
        assert_relative_eq!(
            edge_cost(from, GridNode { col: 1, row: 1 }, &map).unwrap(),
            10.0 * std::f64::consts::SQRT_2 * 2.0,
            max_relative = 1e-12
        );
        assert!(matches!(
            edge_cost(from, GridNode { col: 2, row: 0 }, &map),
            Err(PlanError::NotAdjacent)
        ));
        map.blocked[1] = true;
        assert!(matches!(
            edge_cost(from, GridNode { col: 1, row: 0 }, &map),
            Err(PlanError::BlockedTarget)
        ));
    }

    #[test]
    fn traditional_ignores_uncertainty_corridor() {
        // a risky straight corridor vs a long safe detour: T-A* takes the
        // corridor, I-A* pays for the detour
        let mut map = uniform_map(11, 5, 1.0, 0.0);
        for col in 1..10 {
            for row in 0..5 {
                let idx = map.index(col, row);
                if row == 2 {
                    map.u[idx] = 0.9;
                } else if row != 4 {
                    map.blocked[idx] = true;
                    map.u[idx] = crate::uncmap::U_BLOCKED;
                }
            }
        }
        let start = Point2::new(0.5, 2.5);
        let goal = Point2::new(10.5, 2.5);
        let (t_path, _) = traditional_astar(&map, start, goal).unwrap();
        let (i_path, _) = improved_astar(&map, start, goal).unwrap();
        assert!(path_uncertainty(&t_path, &map) > 0.5, "T-A* should cut through the corridor");
        assert!(path_uncertainty(&i_path, &map) < 0.3, "I-A* should detour around it");
        assert!(i_path.length_m() > t_path.length_m());
    }

    #[test]
    fn uniform_map_planners_agree_on_cost() {
        let map = uniform_map(20, 20, 10.0, 0.3);
        let start = Point2::new(5.0, 5.0);
        let goal = Point2::new(195.0, 155.0);
        let (t, _) = traditional_astar(&map, start, goal).unwrap();
        let (i, _) = improved_astar(&map, start, goal).unwrap();
        // constant alpha scales every edge equally: identical geometry cost
        assert_relative_eq!(t.length_m(), i.length_m(), max_relative = 1e-12);
    }

    fn bench_pyramid(seed: u64, extent: f64, fine: f64, coarse: f64) -> MapPyramid {
        let params = RandomFieldParams { seed, bumps: 40, amplitude: [0.15, 0.95], sigma: [extent / 30.0, extent / 10.0], elongation: [1.0, 1.0] };
        let field = random_field(&params, extent, fine).unwrap();
        build_pyramid(&field, &[fine, coarse], 0.5, 1.0, 0.95).unwrap()
    }

    /// Center of the open fine cell closest to `p`; random maps may block
    /// the intended corner.
    fn open_point_near(map: &UncertaintyMap, p: Point2) -> Point2 {
        let mut best = (f64::INFINITY, p);
        for row in 0..map.height {
            for col in 0..map.width {
                if map.is_blocked(col, row) {
                    continue;
                }
                let c = map.cell_center(col, row);
                let d = c.distance(p);
                if d < best.0 {
                    best = (d, c);
                }
            }
        }
        best.1
    }

    #[test]
    fn coarse2fine_on_uniform_map_stays_near_straight_line() {
        let field = crate::riskfield::FieldRaster {
            origin: Point2::new(0.0, 0.0),
            cell_size: 10.0,
            width: 80,
            height: 80,
            values: vec![0.0; 6400],
        };
        let pyr = build_pyramid(&field, &[10.0, 80.0], 0.5, 1.0, 0.95).unwrap();
        let start = Point2::new(15.0, 15.0);
        let goal = Point2::new(785.0, 785.0);
        let (path, stats) = coarse2fine_plan(&pyr, start, goal).unwrap();
        assert!(!stats.fallback);
        path.validate(pyr.fine()).unwrap();
        // every node within one fine stride of the diagonal
        for p in &path.nodes {
            let dist = (p.y - p.x).abs() / std::f64::consts::SQRT_2;
            assert!(dist <= 10.0 + 1e-9, "node {p:?} strays {dist} m from the straight line");
        }
    }

    #[test]
    fn coarse2fine_merge_matches_serial_segment_oracle() {
        // toy two-layer pyramid: 8x8 fine, 2x2 coarse
        let params = RandomFieldParams { seed: 21, bumps: 6, amplitude: [0.1, 0.8], sigma: [1.0, 3.0], elongation: [1.0, 1.0] };
        let field = random_field(&params, 8.0, 1.0).unwrap();
        let fine = normalize(&field, 1.0, 0.95).unwrap();
        let coarse = mixed_pool(&fine, 4, 0.5).unwrap();
        let pyr = MapPyramid::from_layers(vec![fine.clone(), coarse.clone()]).unwrap();
        let start = Point2::new(0.5, 0.5);
        let goal = Point2::new(7.5, 7.5);
        let (path, _) = coarse2fine_plan(&pyr, start, goal).unwrap();

        // serial oracle: same coarse search, then segments one by one
        let s = snap_to_unblocked(&coarse, start, 3).unwrap();
        let g = snap_to_unblocked(&coarse, goal, 3).unwrap();
        let coarse_path = astar::search(&coarse, s, g, Window::full(&coarse), CostModel::UncertaintyWeighted).unwrap();
        let mut waypoints = vec![start];
        for c in coarse_path.cells.iter().skip(1).take(coarse_path.cells.len().saturating_sub(2)) {
            waypoints.push(coarse.cell_center(c.col, c.row));
        }
        waypoints.push(goal);
        let mut oracle_nodes: Vec<Point2> = Vec::new();
        for pair in waypoints.windows(2) {
            let seg = refine_segment(&fine, pair[0], pair[1], coarse.cell_size, &mut astar::Scratch::new()).unwrap();
            for (j, cell) in seg.cells.iter().enumerate() {
                let p = fine.cell_center(cell.col, cell.row);
                if (!oracle_nodes.is_empty() && j == 0) || oracle_nodes.last() == Some(&p) {
                    continue;
                }
                oracle_nodes.push(p);
            }
        }
        assert_eq!(path.nodes, oracle_nodes);
    }

    #[test]
    fn coarse2fine_deterministic_across_runs() {
        let pyr = bench_pyramid(5, 800.0, 10.0, 80.0);
        let start = Point2::new(25.0, 35.0);
        let goal = Point2::new(765.0, 720.0);
        let (a, _) = coarse2fine_plan(&pyr, start, goal).unwrap();
        let (b, _) = coarse2fine_plan(&pyr, start, goal).unwrap();
        assert_eq!(a.nodes, b.nodes);
        assert_eq!(a.provenance, b.provenance);
    }

    #[test]
    fn coarse2fine_path_is_valid_and_safer_than_traditional() {
        for seed in [1, 2, 3] {
            let pyr = bench_pyramid(seed, 1000.0, 10.0, 80.0);
            let start = open_point_near(pyr.fine(), Point2::new(15.0, 25.0));
            let goal = open_point_near(pyr.fine(), Point2::new(975.0, 940.0));
            let (ours, stats) = coarse2fine_plan(&pyr, start, goal).unwrap();
            ours.validate(pyr.fine()).unwrap();
            assert!(stats.mean_uncertainty >= 0.0);
            let (tpath, _) = traditional_astar(pyr.fine(), start, goal).unwrap();
            assert!(
                path_uncertainty(&ours, pyr.fine()) <= path_uncertainty(&tpath, pyr.fine()) + 1e-9,
                "seed {seed}: hierarchical path must not be riskier than T-A*"
            );
        }
    }

    #[test]
    fn hierarchical_expands_fewer_nodes_than_fine_search() {
        // uniform moderate uncertainty: the Euclidean heuristic
        // underestimates the weighted cost, so the single-layer search
        // expands a fat band while the hierarchy works in small windows
        let u = 0.25;
        let fine = uniform_map(150, 150, 10.0, u);
        let coarse = mixed_pool(&fine, 8, 0.5).unwrap();
        let pyr = MapPyramid::from_layers(vec![fine.clone(), coarse]).unwrap();
        let start = Point2::new(15.0, 15.0);
        let goal = Point2::new(1485.0, 1430.0);
        let (_, ours) = coarse2fine_plan(&pyr, start, goal).unwrap();
        assert!(!ours.fallback);
        let (_, single) = improved_astar(&fine, start, goal).unwrap();
        assert!(
            ours.expanded < single.expanded,
            "hierarchy should prune expansions: {} vs {}",
            ours.expanded,
            single.expanded
        );
    }

    #[test]
    fn unreachable_goal_is_reported() {
        let mut map = uniform_map(10, 10, 10.0, 0.1);
        for row in 0..10 {
            for col in 4..6 {
                map.blocked[row * 10 + col] = true;
                map.u[row * 10 + col] = crate::uncmap::U_BLOCKED;
            }
        }
        let res = improved_astar(&map, Point2::new(5.0, 5.0), Point2::new(95.0, 95.0));
        assert!(matches!(res, Err(PlanError::Unreachable)));
    }

    #[test]
    fn snapping_moves_blocked_endpoints() {
        let mut map = uniform_map(10, 10, 10.0, 0.1);
        map.blocked[0] = true;
        map.u[0] = crate::uncmap::U_BLOCKED;
        let snapped = snap_to_unblocked(&map, Point2::new(5.0, 5.0), 3).unwrap();
        assert!(!map.is_blocked(snapped.col, snapped.row));
        assert!(snapped.col <= 1 && snapped.row <= 1);
        assert!(matches!(
            snap_to_unblocked(&map, Point2::new(-5.0, 5.0), 3),
            Err(PlanError::OutOfBounds { .. })
        ));
    }

    #[test]
    fn stats_json_schema_is_stable() {
        let stats = SearchStats {
            expanded: 42,
            wall_time_s: 0.001,
            length_m: 12.5,
            mean_uncertainty: 0.25,
            fallback: false,
        };
        let v: serde_json::Value = serde_json::from_str(&stats.to_json()).unwrap();
        let obj = v.as_object().unwrap();
        assert_eq!(obj.len(), 4);
        assert_eq!(obj["expanded"], 42);
        assert_eq!(obj["mean_uncertainty"], 0.25);
    }
}

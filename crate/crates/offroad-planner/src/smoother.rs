//! Box-constrained QP path smoothing with rolling windows.
//!
//! The objective blends three quadratic terms over the interleaved
//! coordinate vector `X = [x1, y1, ..., xn, yn]`:
//!
//! - smoothness: squared second differences of consecutive nodes,
//! - compactness: squared first differences,
//! - similarity: squared distance to the reference nodes (constant term
//!   dropped), which also makes the problem strictly convex.
//!
//! Every coordinate is boxed within `s_s / 2` of its reference value and
//! selected nodes are pinned outright. Long paths are smoothed through a
//! rolling window: each window pins the trailing already-optimized nodes so
//! consecutive windows stitch seamlessly, and the final window pins the
//! destination.

use nalgebra::{DMatrix, DVector};
use std::collections::BTreeSet;
use thiserror::Error;

use crate::geom::Point2;

#[derive(Debug, Error)]
pub enum QpError {
    #[error("need at least 3 nodes to assemble the QP, got {0}")]
    TooFewNodes(usize),
    #[error("invalid smoothing parameter: {0}")]
    BadParameter(String),
    #[error("QP solver did not reach tolerance {tol} within {iterations} sweeps (residual {residual}){}", window.map(|w| format!(" in window {w}")).unwrap_or_default())]
    NonConvergence {
        tol: f64,
        iterations: usize,
        residual: f64,
        window: Option<usize>,
    },
}

/// Weights of the three cost terms. `w3 > 0` guarantees strict convexity
/// because the similarity term contributes the identity to the quadratic.
#[derive(Clone, Copy, Debug, serde::Serialize, serde::Deserialize)]
pub struct SmoothingWeights {
    pub w1: f64,
    pub w2: f64,
    pub w3: f64,
}

impl Default for SmoothingWeights {
    fn default() -> Self {
        // smoothness dominates while similarity anchors the path
        SmoothingWeights { w1: 10.0, w2: 1.0, w3: 0.5 }
    }
}

impl SmoothingWeights {
    pub fn validate(&self) -> Result<(), QpError> {
        if !(self.w1 > 0.0 && self.w2 > 0.0 && self.w3 > 0.0) {
            return Err(QpError::BadParameter(format!(
                "weights must all be > 0, got {} / {} / {}",
                self.w1, self.w2, self.w3
            )));
        }
        Ok(())
    }
}

/// Assembled box-constrained QP: minimize `X'QX + linear'X` subject to
/// `lower <= X <= upper`, with pinned coordinates collapsed to equalities.
pub struct QpProblem {
    pub q: DMatrix<f64>,
    pub linear: DVector<f64>,
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
    /// Coordinate indices whose bounds are collapsed to an equality.
    pub pinned: BTreeSet<usize>,
}

impl QpProblem {
    pub fn dimension(&self) -> usize {
        self.q.nrows()
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        (x.transpose() * &self.q * x)[(0, 0)] + self.linear.dot(x)
    }

    pub fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.q * x * 2.0 + &self.linear
    }

    pub fn project(&self, mut x: DVector<f64>) -> DVector<f64> {
        for j in 0..x.len() {
            x[j] = x[j].clamp(self.lower[j], self.upper[j]);
        }
        x
    }

    /// Euclidean norm of `x - project(x - grad)`: zero exactly at the
    /// box-constrained optimum.
    pub fn projected_gradient_norm(&self, x: &DVector<f64>) -> f64 {
        let g = self.gradient(x);
        let stepped = self.project(x - g);
        (x - stepped).norm()
    }

    /// Smallest eigenvalue of `Q`, estimated by shifted power iteration.
    pub fn min_eigenvalue_estimate(&self) -> f64 {
        let n = self.dimension();
        let power = |m: &DMatrix<f64>| {
            let mut v = DVector::from_element(n, 1.0) / (n as f64).sqrt();
            let mut lambda = 0.0;
            for _ in 0..300 {
                let w = m * &v;
                let norm = w.norm();
                if norm == 0.0 {
                    return 0.0;
                }
                lambda = v.dot(&w);
                v = w / norm;
            }
            lambda
        };
        let lambda_max = power(&self.q);
        let shifted = DMatrix::identity(n, n) * lambda_max - &self.q;
        lambda_max - power(&shifted)
    }
}

/// Assemble the smoothing QP for a sequence of reference nodes.
///
/// `s_s` is the total allowed deviation per coordinate (half above, half
/// below the reference); `pinned` lists node indices fixed at their
/// reference coordinates.
pub fn build_qp(
    ref_nodes: &[Point2],
    weights: SmoothingWeights,
    s_s: f64,
    pinned: &BTreeSet<usize>,
) -> Result<QpProblem, QpError> {
    weights.validate()?;
    let n = ref_nodes.len();
    if n < 3 {
        return Err(QpError::TooFewNodes(n));
    }
    if !(s_s >= 0.0) {
        return Err(QpError::BadParameter(format!("s_s must be >= 0, got {s_s}")));
    }
    let dim = 2 * n;
    let mut q = DMatrix::zeros(dim, dim);

    // smoothness: second differences over interior nodes, one row per axis
    for i in 1..n - 1 {
        for axis in 0..2 {
            let cols = [2 * (i - 1) + axis, 2 * i + axis, 2 * (i + 1) + axis];
            let coeffs = [1.0, -2.0, 1.0];
            for (ca, va) in cols.iter().zip(coeffs) {
                for (cb, vb) in cols.iter().zip(coeffs) {
                    q[(*ca, *cb)] += weights.w1 * va * vb;
                }
            }
        }
    }
    // compactness: first differences over consecutive nodes
    for i in 0..n - 1 {
        for axis in 0..2 {
            let cols = [2 * i + axis, 2 * (i + 1) + axis];
            let coeffs = [1.0, -1.0];
            for (ca, va) in cols.iter().zip(coeffs) {
                for (cb, vb) in cols.iter().zip(coeffs) {
                    q[(*ca, *cb)] += weights.w2 * va * vb;
                }
            }
        }
    }
    // similarity: identity plus the linear pull toward the reference
    for j in 0..dim {
        q[(j, j)] += weights.w3;
    }
    let mut linear = DVector::zeros(dim);
    let mut lower = DVector::zeros(dim);
    let mut upper = DVector::zeros(dim);
    for (i, p) in ref_nodes.iter().enumerate() {
        for (axis, v) in [p.x, p.y].into_iter().enumerate() {
            let j = 2 * i + axis;
            linear[j] = weights.w3 * (-2.0 * v);
            lower[j] = v - s_s / 2.0;
            upper[j] = v + s_s / 2.0;
        }
    }
    let mut pinned_coords = BTreeSet::new();
    for &i in pinned {
        if i >= n {
            return Err(QpError::BadParameter(format!("pinned node {i} out of range (n = {n})")));
        }
        for axis in 0..2 {
            let j = 2 * i + axis;
            lower[j] = [ref_nodes[i].x, ref_nodes[i].y][axis];
            upper[j] = lower[j];
            pinned_coords.insert(j);
        }
    }
    Ok(QpProblem { q, linear, lower, upper, pinned: pinned_coords })
}

pub const DEFAULT_QP_TOLERANCE: f64 = 1e-6;
pub const QP_ITERATION_CAP: usize = 10_000;

/// Solve a strictly convex box QP by cyclic coordinate descent from a given
/// start, stopping when the projected-gradient norm reaches `tol`.
pub fn solve_qp_from(qp: &QpProblem, start: DVector<f64>, tol: f64) -> Result<DVector<f64>, QpError> {
    let dim = qp.dimension();
    let mut x = qp.project(start);
    let mut residual = f64::INFINITY;
    for _sweep in 0..QP_ITERATION_CAP {
        for j in 0..dim {
            let diag = 2.0 * qp.q[(j, j)];
            debug_assert!(diag > 0.0, "w3 > 0 keeps every diagonal positive");
            let g_j = 2.0 * qp.q.row(j).transpose().dot(&x) + qp.linear[j];
            x[j] = (x[j] - g_j / diag).clamp(qp.lower[j], qp.upper[j]);
        }
        residual = qp.projected_gradient_norm(&x);
        if residual <= tol {
            return Ok(x);
        }
    }
    Err(QpError::NonConvergence { tol, iterations: QP_ITERATION_CAP, residual, window: None })
}

/// Solve starting from the projected box center (pinned values substituted),
/// which is always feasible.
pub fn solve_qp(qp: &QpProblem, tol: f64) -> Result<DVector<f64>, QpError> {
    let mid = DVector::from_fn(qp.dimension(), |j, _| {
        if qp.lower[j] == qp.upper[j] {
            qp.lower[j]
        } else {
            0.5 * (qp.lower[j] + qp.upper[j])
        }
    });
    solve_qp_from(qp, mid, tol)
}

/// Smoothed path produced by the rolling optimizer.
#[derive(Clone, Debug, PartialEq)]
pub struct SmoothedPath {
    pub nodes: Vec<Point2>,
}

/// Total smoothing cost of `nodes` against `reference` (the constant of the
/// similarity term is dropped, matching the assembled objective).
pub fn smoothing_cost(nodes: &[Point2], reference: &[Point2], weights: SmoothingWeights) -> f64 {
    assert_eq!(nodes.len(), reference.len());
    let n = nodes.len();
    let mut cost1 = 0.0;
    for i in 1..n.saturating_sub(1) {
        let ddx = nodes[i - 1].x + nodes[i + 1].x - 2.0 * nodes[i].x;
        let ddy = nodes[i - 1].y + nodes[i + 1].y - 2.0 * nodes[i].y;
        cost1 += ddx * ddx + ddy * ddy;
    }
    let mut cost2 = 0.0;
    for i in 0..n.saturating_sub(1) {
        let dx = nodes[i].x - nodes[i + 1].x;
        let dy = nodes[i].y - nodes[i + 1].y;
        cost2 += dx * dx + dy * dy;
    }
    let mut cost3 = 0.0;
    for (p, r) in nodes.iter().zip(reference) {
        cost3 += p.x * p.x + p.y * p.y - 2.0 * (r.x * p.x + r.y * p.y);
    }
    weights.w1 * cost1 + weights.w2 * cost2 + weights.w3 * cost3
}

/// Rolling-window smoothing with path stitching.
///
/// The first window pins the global start; every later window pins the
/// `n_b` trailing nodes already optimized (so joins are seamless) and
/// re-optimizes from the previous end node forward. The final window is
/// anchored at the destination with `n_o - 1` nodes before it.
///
/// Every window also pins its last node at the raw reference: the
/// compactness term otherwise contracts a free tail toward the window
/// start. The pin is temporary scaffolding; that node is re-optimized as
/// the anchor of the next window.
pub fn rolling_smooth(
    path: &[Point2],
    weights: SmoothingWeights,
    s_s: f64,
    n_o: usize,
    n_b: usize,
    tol: f64,
) -> Result<SmoothedPath, QpError> {
    weights.validate()?;
    if path.len() < 2 {
        return Err(QpError::TooFewNodes(path.len()));
    }
    if n_o < n_b + 2 {
        return Err(QpError::BadParameter(format!("need n_o >= n_b + 2, got n_o = {n_o}, n_b = {n_b}")));
    }
    if path.len() == 2 {
        // nothing to bend between two pinned endpoints
        return Ok(SmoothedPath { nodes: path.to_vec() });
    }

    let n = path.len();
    let mut out: Vec<Point2> = path.to_vec();
    let n_f = n_o - n_b - 1;

    let solve_window = |out: &mut Vec<Point2>,
                        range: std::ops::Range<usize>,
                        pinned_global: &BTreeSet<usize>,
                        window_idx: usize|
     -> Result<(), QpError> {
        let w = range.start;
        // pinned nodes carry their already-optimized coordinates; the
        // reference (and box) of free nodes stays the raw global path
        let window_ref: Vec<Point2> = range
            .clone()
            .map(|i| if pinned_global.contains(&i) { out[i] } else { path[i] })
            .collect();
        let pinned_local: BTreeSet<usize> = pinned_global.iter().map(|i| i - w).collect();
        let qp = build_qp(&window_ref, weights, s_s, &pinned_local)?;
        let start = DVector::from_iterator(2 * window_ref.len(), window_ref.iter().flat_map(|p| [p.x, p.y]));
        let solution = solve_qp_from(&qp, start, tol).map_err(|e| match e {
            QpError::NonConvergence { tol, iterations, residual, .. } => {
                QpError::NonConvergence { tol, iterations, residual, window: Some(window_idx) }
            }
            other => other,
        })?;
        for (k, i) in range.enumerate() {
            out[i] = Point2::new(solution[2 * k], solution[2 * k + 1]);
        }
        Ok(())
    };

    if n <= n_o {
        let pinned: BTreeSet<usize> = [0, n - 1].into_iter().collect();
        solve_window(&mut out, 0..n, &pinned, 0)?;
        return Ok(SmoothedPath { nodes: out });
    }

    // first window: global start plus the scaffolding end pin
    solve_window(&mut out, 0..n_o, &[0usize, n_o - 1].into_iter().collect(), 0)?;
    let mut end = n_o - 1;
    let mut window_idx = 1;
    while end < n - 1 {
        if end + n_f >= n - 1 {
            // final window: anchor the destination; every already-optimized
            // node before the previous end stays fixed
            let w = n - n_o;
            let mut pinned: BTreeSet<usize> = (w..end).collect();
            pinned.insert(n - 1);
            solve_window(&mut out, w..n, &pinned, window_idx)?;
            end = n - 1;
        } else {
            let w = end - n_b;
            let mut pinned: BTreeSet<usize> = (w..end).collect();
            pinned.insert(w + n_o - 1);
            solve_window(&mut out, w..w + n_o, &pinned, window_idx)?;
            end += n_f;
        }
        window_idx += 1;
    }
    Ok(SmoothedPath { nodes: out })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn straight_line(n: usize, spacing: f64) -> Vec<Point2> {
        (0..n).map(|i| Point2::new(i as f64 * spacing, 0.0)).collect()
    }

    /// 60-node L turn: 40 nodes east, then 20 north, 10 m spacing.
    fn l_path() -> Vec<Point2> {
        let mut nodes: Vec<Point2> = (0..40).map(|i| Point2::new(i as f64 * 10.0, 0.0)).collect();
        nodes.extend((1..=20).map(|i| Point2::new(390.0, i as f64 * 10.0)));
        nodes
    }

    #[test]
    fn n3_assembly_matches_symbolic_second_difference() {
        let ref_nodes = vec![Point2::new(0.0, 0.0), Point2::new(1.0, 2.0), Point2::new(3.0, 1.0)];
        let w = SmoothingWeights { w1: 1.0, w2: 1e-12, w3: 1e-12 };
        let qp = build_qp(&ref_nodes, w, 1.0, &BTreeSet::new()).unwrap();
        // single stencil rows [1, 0, -2, 0, 1, 0] and [0, 1, 0, -2, 0, 1]
        let rows = [[1.0, 0.0, -2.0, 0.0, 1.0, 0.0], [0.0, 1.0, 0.0, -2.0, 0.0, 1.0]];
        for a in 0..6 {
            for b in 0..6 {
                let expected: f64 = rows.iter().map(|r| r[a] * r[b]).sum();
                assert_relative_eq!(qp.q[(a, b)], expected, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn q_is_strictly_positive_definite() {
        let ref_nodes = straight_line(12, 5.0);
        let w = SmoothingWeights { w1: 10.0, w2: 1.0, w3: 0.1 };
        let qp = build_qp(&ref_nodes, w, 4.0, &BTreeSet::new()).unwrap();
        let min_eig = qp.min_eigenvalue_estimate();
        assert!(min_eig >= 0.1 - 1e-6, "min eigenvalue {min_eig} must be at least w3");
        // symmetry
        for a in 0..qp.dimension() {
            for b in 0..a {
                assert_eq!(qp.q[(a, b)], qp.q[(b, a)]);
            }
        }
    }

    #[test]
    fn collinear_reference_is_already_optimal() {
        let ref_nodes = straight_line(15, 10.0);
        let pinned: BTreeSet<usize> = [0, 14].into_iter().collect();
        let qp = build_qp(&ref_nodes, SmoothingWeights::default(), 8.0, &pinned).unwrap();
        let x = solve_qp(&qp, 1e-10).unwrap();
        for (i, p) in ref_nodes.iter().enumerate() {
            assert!((x[2 * i] - p.x).abs() <= 1e-8);
            assert!((x[2 * i + 1] - p.y).abs() <= 1e-8);
        }
    }

    #[test]
    fn wide_box_recovers_unconstrained_stationary_point() {
        let ref_nodes =
            vec![Point2::new(0.0, 0.0), Point2::new(1.0, 3.0), Point2::new(2.5, -1.0), Point2::new(4.0, 0.5)];
        let qp = build_qp(&ref_nodes, SmoothingWeights::default(), 1e6, &BTreeSet::new()).unwrap();
        let x = solve_qp(&qp, 1e-10).unwrap();
        // stationarity: 2Qx + linear = 0
        let grad = qp.gradient(&x);
        assert!(grad.norm() <= 1e-7, "gradient norm {} should vanish in the interior", grad.norm());
    }

    #[test]
    fn zero_width_box_returns_reference() {
        let ref_nodes = vec![Point2::new(0.0, 0.0), Point2::new(1.0, 4.0), Point2::new(5.0, 2.0)];
        let qp = build_qp(&ref_nodes, SmoothingWeights::default(), 0.0, &BTreeSet::new()).unwrap();
        let x = solve_qp(&qp, 1e-9).unwrap();
        for (i, p) in ref_nodes.iter().enumerate() {
            assert_eq!(x[2 * i], p.x);
            assert_eq!(x[2 * i + 1], p.y);
        }
    }

    #[test]
    fn too_few_nodes_is_an_error() {
        assert!(matches!(
            build_qp(&straight_line(2, 1.0), SmoothingWeights::default(), 1.0, &BTreeSet::new()),
            Err(QpError::TooFewNodes(2))
        ));
    }

    #[test]
    fn straight_path_passes_through_rolling_smoother() {
        let path = straight_line(120, 10.0);
        let out = rolling_smooth(&path, SmoothingWeights::default(), 10.0, 50, 10, 1e-8).unwrap();
        for (a, b) in out.nodes.iter().zip(&path) {
            assert!(a.distance(*b) <= 1e-6, "straight input must pass through unchanged");
        }
    }

    #[test]
    fn short_path_collapses_to_single_window() {
        let path = straight_line(8, 10.0);
        let out = rolling_smooth(&path, SmoothingWeights::default(), 6.0, 50, 10, 1e-8).unwrap();
        assert_eq!(out.nodes.len(), 8);
        assert_eq!(out.nodes[0], path[0]);
        assert_eq!(out.nodes[7], path[7]);
    }

    #[test]
    fn l_path_is_rounded_within_the_box() {
        let path = l_path();
        let s_s = 10.0;
        let weights = SmoothingWeights::default();
        let out = rolling_smooth(&path, weights, s_s, 20, 5, 1e-8).unwrap();

        assert_eq!(out.nodes[0], path[0]);
        assert_eq!(out.nodes[59], path[59]);
        let mut max_dev = 0.0f64;
        for (a, b) in out.nodes.iter().zip(&path) {
            max_dev = max_dev.max((a.x - b.x).abs()).max((a.y - b.y).abs());
            assert!((a.x - b.x).abs() <= s_s / 2.0 + 1e-9);
            assert!((a.y - b.y).abs() <= s_s / 2.0 + 1e-9);
        }
        assert!(max_dev > 1e-3, "the corner must actually move");

        let before = smoothing_cost(&path, &path, weights);
        let after = smoothing_cost(&out.nodes, &path, weights);
        assert!(after < before, "smoothing must reduce the total cost: {after} !< {before}");

        // the corner's second difference shrinks
        let corner = 39;
        let bend = |nodes: &[Point2]| {
            let p = nodes[corner - 1];
            let q = nodes[corner];
            let r = nodes[corner + 1];
            ((p.x + r.x - 2.0 * q.x).powi(2) + (p.y + r.y - 2.0 * q.y).powi(2)).sqrt()
        };
        assert!(bend(&out.nodes) < bend(&path));
    }

    #[test]
    fn window_joins_are_stitched() {
        // a wiggly path long enough for several windows
        let path: Vec<Point2> = (0..140)
            .map(|i| {
                let x = i as f64 * 10.0;
                Point2::new(x, if i % 2 == 0 { 3.0 } else { -3.0 })
            })
            .collect();
        let n_o = 30;
        let n_b = 6;
        let out = rolling_smooth(&path, SmoothingWeights::default(), 10.0, n_o, n_b, 1e-8).unwrap();
        assert_eq!(out.nodes[0], path[0]);
        assert_eq!(out.nodes[139], path[139]);
        for (a, b) in out.nodes.iter().zip(&path) {
            assert!((a.x - b.x).abs() <= 5.0 + 1e-9 && (a.y - b.y).abs() <= 5.0 + 1e-9);
        }
        // the smoothed wiggle must be flatter than the input
        let wiggle = |nodes: &[Point2]| -> f64 { nodes[10..130].iter().map(|p| p.y.abs()).sum::<f64>() };
        assert!(wiggle(&out.nodes) < 0.25 * wiggle(&path));
    }

    #[test]
    fn kkt_residual_reaches_tolerance() {
        let path = l_path();
        let pinned: BTreeSet<usize> = [0, 19].into_iter().collect();
        let qp = build_qp(&path[30..50], SmoothingWeights::default(), 10.0, &pinned).unwrap();
        let x = solve_qp(&qp, 1e-6).unwrap();
        assert!(qp.projected_gradient_norm(&x) <= 1e-6);
    }
}

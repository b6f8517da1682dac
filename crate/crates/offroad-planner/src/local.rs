//! Deterministic-sampling local trajectory planning.
//!
//! Each planning step enumerates a fixed lattice of terminal states over
//! `(t, d, s)` around a reference target (on the path, at target speed,
//! with no lateral motion), connects every terminal to the current state
//! with a pair of quintics, discretizes, and keeps the cheapest candidate
//! that survives point-wise constraint checking. The obstacle potential
//! field acts both as a hard constraint (safety indicator `e` below a
//! threshold at every point) and as a cost term, so risky-but-legal
//! trajectories lose to safer ones.
//!
//! Candidates are evaluated in generation order; cost ties keep the
//! earliest candidate, which makes every step deterministic.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frenet::{FrenetError, FrenetState, QuinticPoly, ReferencePath};
use crate::geom::Point2;
use crate::riskfield::{FieldWeights, ObstacleState};
use crate::scene::RiskScene;

#[derive(Debug, Error)]
pub enum LocalError {
    #[error("sampling axis needs min <= reference <= max, got {min} / {reference} / {max}")]
    BadAxis { min: f64, reference: f64, max: f64 },
    #[error(transparent)]
    Frenet(#[from] FrenetError),
    #[error("no feasible trajectory: {0}")]
    NoFeasibleTrajectory(RejectionCounts),
}

/// Why candidates were rejected, reported with the no-feasible error.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct RejectionCounts {
    pub out_of_domain: usize,
    pub speed: usize,
    pub lon_accel: usize,
    pub lat_accel: usize,
    pub curvature: usize,
    pub safety: usize,
}

impl std::fmt::Display for RejectionCounts {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "out_of_domain={} v={} a_y={} a_x={} c={} e={}",
            self.out_of_domain, self.speed, self.lon_accel, self.lat_accel, self.curvature, self.safety
        )
    }
}

/// Uniform samples below and above a reference value per the interpolation
/// rule; the reference itself is always included. Returned ascending.
pub fn sample_axis(lo: f64, reference: f64, hi: f64, n_lower: u32, n_upper: u32) -> Result<Vec<f64>, LocalError> {
    if !(lo <= reference && reference <= hi) {
        return Err(LocalError::BadAxis { min: lo, reference, max: hi });
    }
    let mut values = Vec::with_capacity((n_lower + n_upper + 1) as usize);
    for i in (1..=n_lower).rev() {
        let frac = i as f64 / n_lower as f64;
        values.push(reference * (1.0 - frac) + lo * frac);
    }
    values.push(reference);
    for i in 1..=n_upper {
        let frac = i as f64 / n_upper as f64;
        values.push(reference * (1.0 - frac) + hi * frac);
    }
    Ok(values)
}

/// Terminal-state sampling ranges and counts. Speeds are SI here;
/// configuration files carry km/h and convert on load.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SamplingSpec {
    pub t_min: f64,
    pub t_max: f64,
    /// Reference horizon (the adjustable target time).
    pub t_r: f64,
    pub t_counts: (u32, u32),
    pub d_min: f64,
    pub d_max: f64,
    pub d_counts: (u32, u32),
    /// The s-axis range is relative: `[s_factor_min, s_factor_max] * v_c * t_r`.
    pub s_factor_min: f64,
    pub s_factor_max: f64,
    pub s_counts: (u32, u32),
    /// Target cruise speed (m/s).
    pub v_r: f64,
    /// Discretization step (s).
    pub dt: f64,
}

impl SamplingSpec {
    /// 5 x 9 x 7 = 315 candidates.
    pub fn option1() -> SamplingSpec {
        SamplingSpec {
            t_min: 3.0,
            t_max: 7.0,
            t_r: 5.0,
            t_counts: (2, 2),
            d_min: -7.0,
            d_max: 7.0,
            d_counts: (4, 4),
            s_factor_min: 0.8,
            s_factor_max: 1.2,
            s_counts: (3, 3),
            v_r: 25.0 / 3.6,
            dt: 0.25,
        }
    }

    /// 7 x 15 x 9 = 945 candidates (t-axis counts follow the stated product).
    pub fn option2() -> SamplingSpec {
        SamplingSpec {
            t_counts: (3, 3),
            d_counts: (7, 7),
            s_counts: (4, 4),
            ..SamplingSpec::option1()
        }
    }

    pub fn candidate_count(&self) -> usize {
        let per = |(l, u): (u32, u32)| (l + u + 1) as usize;
        per(self.t_counts) * per(self.d_counts) * per(self.s_counts)
    }
}

/// Point-wise feasibility bounds (SI units).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConstraintSpec {
    pub v_min: f64,
    pub v_max: f64,
    pub ay_min: f64,
    pub ay_max: f64,
    pub ax_min: f64,
    pub ax_max: f64,
    pub c_min: f64,
    pub c_max: f64,
    pub e_thld: f64,
}

impl Default for ConstraintSpec {
    fn default() -> Self {
        ConstraintSpec {
            v_min: 0.0,
            v_max: 50.0 / 3.6,
            ay_min: -7.0,
            ay_max: 3.5,
            ax_min: -4.0,
            ax_max: 4.0,
            c_min: -0.43,
            c_max: 0.43,
            e_thld: 10.0,
        }
    }
}

/// Cost-evaluation weights; the diagonal vectors run over the state order
/// `[t, d, d', d'', s, s', s'']`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CostWeights {
    pub w_a: f64,
    pub w_s: f64,
    pub w_d: f64,
    pub w_t: [f64; 7],
    pub w_e: f64,
    pub w_c: [f64; 7],
}

impl Default for CostWeights {
    fn default() -> Self {
        CostWeights {
            w_a: 1.0,
            w_s: 2.0,
            w_d: 5.0,
            w_t: [5.0, 20.0, 0.0, 0.0, 18.0, 0.0, 0.0],
            w_e: 100.0,
            w_c: [0.0, 1.5, 0.0, 0.0, 0.2, 0.0, 0.0],
        }
    }
}

/// One discretized trajectory point with its kinematic annotations.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct TrajPoint {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    /// Absolute arclength on the reference.
    pub s: f64,
    pub d: f64,
    pub s_dot: f64,
    pub d_dot: f64,
    pub v: f64,
    /// Longitudinal acceleration (the v-series difference quotient).
    pub a_y: f64,
    /// Lateral (centripetal) acceleration `v^2 c`.
    pub a_x: f64,
    /// Trajectory curvature from world-frame heading differences.
    pub c: f64,
    /// Safety indicator: total obstacle potential at this point.
    pub e: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum ConstraintKind {
    Speed,
    LonAccel,
    LatAccel,
    Curvature,
    Safety,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct Violation {
    pub constraint: ConstraintKind,
    pub point: usize,
    pub value: f64,
}

#[derive(Clone, Copy, Debug, Default, Serialize)]
pub struct CostBreakdown {
    pub j_s: f64,
    pub j_t: f64,
    pub j_e: f64,
    pub j_c: f64,
    pub total: f64,
}

/// A lateral/longitudinal quintic pair with its discretization.
#[derive(Clone, Debug)]
pub struct CandidateTrajectory {
    /// d(t) over [0, duration].
    pub lateral: QuinticPoly,
    /// s(t) relative to the start arclength.
    pub longitudinal: QuinticPoly,
    pub duration: f64,
    pub points: Vec<TrajPoint>,
    pub terminal: FrenetState,
    /// Generation index; ties in cost keep the earliest.
    pub index: usize,
    pub feasible: bool,
    pub violation: Option<Violation>,
    pub cost: Option<CostBreakdown>,
}

pub struct GenerationOutcome {
    pub candidates: Vec<CandidateTrajectory>,
    /// Candidates whose arclength left the reference domain.
    pub dropped_out_of_domain: usize,
}

/// Reference target state for the current step: advance along the path by
/// `v_c * t_r`, settle at the cruise speed with no lateral motion.
pub fn reference_target(current: &FrenetState, spec: &SamplingSpec) -> FrenetState {
    let v_c = current.s_dot.max(0.0);
    FrenetState {
        t: spec.t_r,
        s: current.s + v_c * spec.t_r,
        s_dot: spec.v_r,
        s_ddot: 0.0,
        d: 0.0,
        d_dot: 0.0,
        d_ddot: 0.0,
    }
}

/// Enumerate the candidate lattice: the Cartesian product of the sampled
/// `(t, d, s)` axes, each tuple joined to the current state by quintics and
/// discretized at `dt`.
pub fn generate_candidates(
    current: &FrenetState,
    spec: &SamplingSpec,
    reference: &ReferencePath,
) -> Result<GenerationOutcome, LocalError> {
    let v_c = current.s_dot.max(0.0);
    let s_r = v_c * spec.t_r;
    let ts = sample_axis(spec.t_min, spec.t_r, spec.t_max, spec.t_counts.0, spec.t_counts.1)?;
    let ds = sample_axis(spec.d_min, 0.0, spec.d_max, spec.d_counts.0, spec.d_counts.1)?;
    let ss = sample_axis(spec.s_factor_min * s_r, s_r, spec.s_factor_max * s_r, spec.s_counts.0, spec.s_counts.1)?;

    let domain = reference.total_length();
    let mut candidates = Vec::with_capacity(ts.len() * ds.len() * ss.len());
    let mut dropped = 0;
    let mut index = 0;
    for &t_t in &ts {
        for &d_t in &ds {
            for &s_disp in &ss {
                let lateral = QuinticPoly::fit(current.d, current.d_dot, current.d_ddot, d_t, 0.0, 0.0, t_t)?;
                let longitudinal =
                    QuinticPoly::fit(0.0, current.s_dot, current.s_ddot, s_disp, spec.v_r, 0.0, t_t)?;
                let steps = (t_t / spec.dt + 1e-9).floor() as usize;
                let mut points = Vec::with_capacity(steps + 1);
                let mut in_domain = true;
                for k in 0..=steps {
                    let t = k as f64 * spec.dt;
                    let s_abs = current.s + longitudinal.value(t);
                    let d = lateral.value(t);
                    if !(0.0..=domain).contains(&s_abs) {
                        in_domain = false;
                        break;
                    }
                    let world = reference.frenet_to_world(s_abs, d)?;
                    points.push(TrajPoint {
                        t,
                        x: world.x,
                        y: world.y,
                        s: s_abs,
                        d,
                        s_dot: longitudinal.d1(t),
                        d_dot: lateral.d1(t),
                        v: 0.0,
                        a_y: 0.0,
                        a_x: 0.0,
                        c: 0.0,
                        e: 0.0,
                    });
                }
                index += 1;
                if !in_domain {
                    dropped += 1;
                    continue;
                }
                candidates.push(CandidateTrajectory {
                    lateral,
                    longitudinal,
                    duration: t_t,
                    points,
                    terminal: FrenetState {
                        t: t_t,
                        s: current.s + s_disp,
                        s_dot: spec.v_r,
                        s_ddot: 0.0,
                        d: d_t,
                        d_dot: 0.0,
                        d_ddot: 0.0,
                    },
                    index: index - 1,
                    feasible: false,
                    violation: None,
                    cost: None,
                });
            }
        }
    }
    Ok(GenerationOutcome { candidates, dropped_out_of_domain: dropped })
}

fn wrap_angle(a: f64) -> f64 {
    let mut a = a % (2.0 * std::f64::consts::PI);
    if a > std::f64::consts::PI {
        a -= 2.0 * std::f64::consts::PI;
    } else if a < -std::f64::consts::PI {
        a += 2.0 * std::f64::consts::PI;
    }
    a
}

/// Fill per-point speed, accelerations, and curvature.
///
/// Curvature comes from world-frame heading differences over the
/// trajectory's own arclength; speed couples the Frenet rates through
/// `(1 - c d)`; the longitudinal acceleration is the forward difference of
/// the speed series (or the analytic `s''` when `ay_from_sddot` is set);
/// the lateral acceleration is centripetal. Last-point values carry the
/// penultimate stencil.
pub fn annotate_kinematics(traj: &mut CandidateTrajectory, dt: f64, ay_from_sddot: bool) {
    let n = traj.points.len();
    if n == 0 {
        return;
    }
    // headings and arclength steps between consecutive world points
    let mut heading = vec![0.0; n];
    let mut step = vec![0.0; n];
    for i in 0..n - 1 {
        let dx = traj.points[i + 1].x - traj.points[i].x;
        let dy = traj.points[i + 1].y - traj.points[i].y;
        heading[i] = dy.atan2(dx);
        step[i] = dx.hypot(dy);
    }
    if n >= 2 {
        heading[n - 1] = heading[n - 2];
        step[n - 1] = step[n - 2];
    }

    let mut prev_c = 0.0;
    for i in 0..n {
        // degenerate arclength steps keep the previous curvature
        let c = if i + 1 < n && step[i] > 1e-12 {
            wrap_angle(heading[i + 1] - heading[i]) / step[i]
        } else {
            prev_c
        };
        traj.points[i].c = c;
        prev_c = c;

        let p = traj.points[i];
        traj.points[i].v = (p.s_dot * p.s_dot * (1.0 - c * p.d) * (1.0 - c * p.d) + p.d_dot * p.d_dot).sqrt();
    }

    for i in 0..n {
        let v_i = traj.points[i].v;
        let a_y = if ay_from_sddot {
            traj.longitudinal.d2(traj.points[i].t)
        } else if i + 1 < n {
            (traj.points[i + 1].v - v_i) / dt
        } else if n >= 2 {
            traj.points[i - 1].a_y
        } else {
            0.0
        };
        traj.points[i].a_y = a_y;
        traj.points[i].a_x = v_i * v_i * traj.points[i].c;
    }
}

/// Point-wise feasibility check. The first violated constraint is recorded
/// and the whole trajectory becomes infeasible. The safety indicator is
/// stored per point up to the failure.
pub fn check_constraints<F>(traj: &mut CandidateTrajectory, spec: &ConstraintSpec, obstacle_field: F)
where
    F: Fn(Point2) -> f64,
{
    for i in 0..traj.points.len() {
        let p = traj.points[i];
        let checks = [
            (ConstraintKind::Speed, p.v, spec.v_min, spec.v_max),
            (ConstraintKind::LonAccel, p.a_y, spec.ay_min, spec.ay_max),
            (ConstraintKind::LatAccel, p.a_x, spec.ax_min, spec.ax_max),
            (ConstraintKind::Curvature, p.c, spec.c_min, spec.c_max),
        ];
        for (kind, value, lo, hi) in checks {
            if value < lo || value > hi {
                traj.feasible = false;
                traj.violation = Some(Violation { constraint: kind, point: i, value });
                return;
            }
        }
        let e = obstacle_field(Point2::new(p.x, p.y));
        traj.points[i].e = e;
        if !(0.0..=spec.e_thld).contains(&e) {
            traj.feasible = false;
            traj.violation = Some(Violation { constraint: ConstraintKind::Safety, point: i, value: e });
            return;
        }
    }
    traj.feasible = true;
    traj.violation = None;
}

/// Cost of a feasible candidate: smoothness (peak lateral acceleration plus
/// summed jerk magnitudes), terminal deviation from the reference target,
/// peak safety indicator, and consistency with the previous winner.
pub fn evaluate_cost(
    traj: &CandidateTrajectory,
    weights: &CostWeights,
    target: &FrenetState,
    previous_terminal: Option<&FrenetState>,
) -> CostBreakdown {
    let mut max_ax: f64 = 0.0;
    let mut max_e: f64 = 0.0;
    let mut jerk = 0.0;
    for p in &traj.points {
        max_ax = max_ax.max(p.a_x.abs());
        max_e = max_e.max(p.e);
        jerk += weights.w_s * traj.longitudinal.d3(p.t).abs() + weights.w_d * traj.lateral.d3(p.t).abs();
    }
    let j_s = weights.w_a * max_ax + jerk;

    let quad = |a: &FrenetState, b: &FrenetState, w: &[f64; 7]| -> f64 {
        let av = a.to_array();
        let bv = b.to_array();
        (0..7).map(|k| w[k] * (av[k] - bv[k]) * (av[k] - bv[k])).sum()
    };
    let j_t = quad(&traj.terminal, target, &weights.w_t);
    let j_e = weights.w_e * max_e;
    let j_c = previous_terminal.map_or(0.0, |b| quad(&traj.terminal, b, &weights.w_c));
    CostBreakdown { j_s, j_t, j_e, j_c, total: j_s + j_t + j_e + j_c }
}

/// Result of one planning step.
#[derive(Debug)]
pub struct PlanStepOutcome {
    pub winner: CandidateTrajectory,
    /// Every generated candidate (annotated and checked), for rendering
    /// and verification.
    pub candidates: Vec<CandidateTrajectory>,
    pub rejections: RejectionCounts,
    pub feasible_count: usize,
}

/// Stateful local planner carrying the previous winner's terminal state for
/// the consistency cost.
#[derive(Clone, Debug)]
pub struct LocalPlanner {
    pub sampling: SamplingSpec,
    pub constraints: ConstraintSpec,
    pub weights: CostWeights,
    /// Approximate the longitudinal acceleration by the analytic `s''`
    /// instead of differencing the speed series.
    pub ay_from_sddot: bool,
    previous_terminal: Option<FrenetState>,
}

impl LocalPlanner {
    pub fn new(sampling: SamplingSpec, constraints: ConstraintSpec, weights: CostWeights) -> LocalPlanner {
        LocalPlanner { sampling, constraints, weights, ay_from_sddot: false, previous_terminal: None }
    }

    pub fn previous_terminal(&self) -> Option<&FrenetState> {
        self.previous_terminal.as_ref()
    }

    /// Generate, annotate, check, evaluate, and select. On success the
    /// winner's terminal state is retained for the next step's consistency
    /// cost.
    pub fn plan_step(
        &mut self,
        current: &FrenetState,
        obstacles: &[ObstacleState],
        field_weights: FieldWeights,
        reference: &ReferencePath,
    ) -> Result<PlanStepOutcome, LocalError> {
        let target = reference_target(current, &self.sampling);
        let generation = generate_candidates(current, &self.sampling, reference)?;
        let mut rejections = RejectionCounts { out_of_domain: generation.dropped_out_of_domain, ..Default::default() };

        let field = |p: Point2| {
            RiskScene::obstacle_field_over(obstacles, field_weights, p).unwrap_or(f64::INFINITY)
        };

        let mut candidates = generation.candidates;
        let mut best: Option<(f64, usize)> = None;
        let mut feasible_count = 0;
        for (slot, cand) in candidates.iter_mut().enumerate() {
            annotate_kinematics(cand, self.sampling.dt, self.ay_from_sddot);
            check_constraints(cand, &self.constraints, field);
            if cand.feasible {
                let cost = evaluate_cost(cand, &self.weights, &target, self.previous_terminal.as_ref());
                cand.cost = Some(cost);
                feasible_count += 1;
                // strict improvement only: generation order breaks ties
                if best.map_or(true, |(b, _)| cost.total < b) {
                    best = Some((cost.total, slot));
                }
            } else if let Some(v) = cand.violation {
                match v.constraint {
                    ConstraintKind::Speed => rejections.speed += 1,
                    ConstraintKind::LonAccel => rejections.lon_accel += 1,
                    ConstraintKind::LatAccel => rejections.lat_accel += 1,
                    ConstraintKind::Curvature => rejections.curvature += 1,
                    ConstraintKind::Safety => rejections.safety += 1,
                }
            }
        }

        match best {
            Some((_, slot)) => {
                let winner = candidates[slot].clone();
                self.previous_terminal = Some(winner.terminal);
                Ok(PlanStepOutcome { winner, candidates, rejections, feasible_count })
            }
            None => Err(LocalError::NoFeasibleTrajectory(rejections)),
        }
    }
}

/// Trajectory CSV: per-point rows plus a one-line cost summary.
pub fn write_trajectory_csv(
    path: &std::path::Path,
    comments: &[String],
    traj: &CandidateTrajectory,
) -> Result<(), crate::io::IoError> {
    let mut out = String::new();
    for c in comments {
        out.push_str("# ");
        out.push_str(c);
        out.push('\n');
    }
    out.push_str("t,x,y,s,d,v,ay,ax,c,e\n");
    for p in &traj.points {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            p.t, p.x, p.y, p.s, p.d, p.v, p.a_y, p.a_x, p.c, p.e
        ));
    }
    let cost = traj.cost.unwrap_or_default();
    out.push_str(&format!(
        "# cost J_s={} J_t={} J_e={} J_c={} J={}\n",
        cost.j_s, cost.j_t, cost.j_e, cost.j_c, cost.total
    ));
    std::fs::write(path, out).map_err(|e| crate::io::IoError::file(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Vec2;
    use approx::assert_relative_eq;

    fn straight_reference(length: f64) -> ReferencePath {
        ReferencePath::from_polyline(&[Point2::new(0.0, 0.0), Point2::new(length, 0.0)], 0.5).unwrap()
    }

    fn cruising_state(s: f64, v: f64) -> FrenetState {
        FrenetState { t: 0.0, s, s_dot: v, s_ddot: 0.0, d: 0.0, d_dot: 0.0, d_ddot: 0.0 }
    }

    #[test]
    fn sample_axis_examples() {
        assert_eq!(sample_axis(-1.0, 0.5, 2.0, 0, 0).unwrap(), vec![0.5]);

        let d = sample_axis(-7.0, 0.0, 7.0, 4, 4).unwrap();
        let expected = [-7.0, -5.25, -3.5, -1.75, 0.0, 1.75, 3.5, 5.25, 7.0];
        assert_eq!(d.len(), 9);
        for (got, want) in d.iter().zip(expected) {
            assert_relative_eq!(*got, want, epsilon = 1e-12);
        }

        let t = sample_axis(3.0, 5.0, 7.0, 2, 2).unwrap();
        assert_eq!(t, vec![3.0, 4.0, 5.0, 6.0, 7.0]);

        assert!(matches!(sample_axis(1.0, 0.0, -1.0, 2, 2), Err(LocalError::BadAxis { .. })));
    }

    #[test]
    fn option1_yields_315_candidates_in_open_space() {
        let spec = SamplingSpec::option1();
        assert_eq!(spec.candidate_count(), 315);
        let reference = straight_reference(400.0);
        let out = generate_candidates(&cruising_state(100.0, spec.v_r), &spec, &reference).unwrap();
        assert_eq!(out.candidates.len(), 315);
        assert_eq!(out.dropped_out_of_domain, 0);
    }

    #[test]
    fn option2_yields_945_candidates() {
        let spec = SamplingSpec::option2();
        assert_eq!(spec.candidate_count(), 945);
        let reference = straight_reference(400.0);
        let out = generate_candidates(&cruising_state(100.0, spec.v_r), &spec, &reference).unwrap();
        assert_eq!(out.candidates.len(), 945);
        // per-axis counts from the table
        assert_eq!(sample_axis(-7.0, 0.0, 7.0, 7, 7).unwrap().len(), 15);
        assert_eq!(sample_axis(0.8, 1.0, 1.2, 4, 4).unwrap().len(), 9);
    }

    #[test]
    fn candidates_past_the_reference_end_are_dropped() {
        let spec = SamplingSpec::option1();
        let reference = straight_reference(60.0);
        // near the end of a short reference the far s samples leave the domain
        let out = generate_candidates(&cruising_state(40.0, spec.v_r), &spec, &reference).unwrap();
        assert!(out.dropped_out_of_domain > 0);
        assert_eq!(out.candidates.len() + out.dropped_out_of_domain, 315);
    }

    #[test]
    fn point_counts_match_duration() {
        let spec = SamplingSpec::option1();
        let reference = straight_reference(400.0);
        let out = generate_candidates(&cruising_state(100.0, spec.v_r), &spec, &reference).unwrap();
        for cand in &out.candidates {
            assert_eq!(cand.points.len(), (cand.duration / spec.dt).floor() as usize + 1);
        }
    }

    #[test]
    fn straight_cruise_candidate_is_inert() {
        let spec = SamplingSpec::option1();
        let reference = straight_reference(400.0);
        let current = cruising_state(100.0, spec.v_r);
        let out = generate_candidates(&current, &spec, &reference).unwrap();
        // the reference-target candidate: t = t_r, d = 0, s = v_c * t_r
        let target = reference_target(&current, &spec);
        let mut cand = out
            .candidates
            .iter()
            .find(|c| {
                (c.duration - spec.t_r).abs() < 1e-9
                    && c.terminal.d.abs() < 1e-9
                    && (c.terminal.s - target.s).abs() < 1e-9
            })
            .expect("the reference target is always sampled")
            .clone();
        annotate_kinematics(&mut cand, spec.dt, false);
        for p in &cand.points {
            assert_relative_eq!(p.v, spec.v_r, epsilon = 1e-9);
            assert!(p.c.abs() < 1e-9);
            assert!(p.a_x.abs() < 1e-9);
            assert!(p.a_y.abs() < 1e-6);
        }
        let cost = evaluate_cost(&cand, &CostWeights::default(), &target, None);
        assert!(cost.j_t < 1e-18, "matched terminal components contribute nothing");
        assert!(cost.total < 1e-9);
    }

    #[test]
    fn lateral_acceleration_is_centripetal() {
        // formula check: v = 10 m/s, c = 0.01 -> 1 m/s^2
        assert_relative_eq!(10.0f64 * 10.0 * 0.01, 1.0);

        // pipeline check: a_x = v^2 c holds point-wise on a curving candidate
        let spec = SamplingSpec::option1();
        let reference = straight_reference(400.0);
        let out = generate_candidates(&cruising_state(100.0, spec.v_r), &spec, &reference).unwrap();
        let mut cand = out.candidates.iter().find(|c| c.terminal.d > 3.0).unwrap().clone();
        annotate_kinematics(&mut cand, spec.dt, false);
        let mut saw_curvature = false;
        for p in &cand.points {
            assert_relative_eq!(p.a_x, p.v * p.v * p.c, epsilon = 1e-12);
            if p.c.abs() > 1e-4 {
                saw_curvature = true;
            }
        }
        assert!(saw_curvature, "a lane-change candidate must bend");
    }

    #[test]
    fn lon_accel_is_the_speed_series_difference_quotient() {
        let spec = SamplingSpec::option1();
        let reference = straight_reference(400.0);
        let out = generate_candidates(&cruising_state(100.0, 0.6 * spec.v_r), &spec, &reference).unwrap();
        let mut cand = out.candidates[17].clone();
        annotate_kinematics(&mut cand, spec.dt, false);
        // independent re-walk of the stored v series
        let n = cand.points.len();
        for i in 0..n - 1 {
            let fd = (cand.points[i + 1].v - cand.points[i].v) / spec.dt;
            assert_relative_eq!(cand.points[i].a_y, fd, epsilon = 1e-12);
        }
        assert_eq!(cand.points[n - 1].a_y, cand.points[n - 2].a_y);

        // physical sanity on a straight pure-longitudinal candidate: the
        // difference quotient tracks the analytic s'' at the midpoint
        let mut lon = out
            .candidates
            .iter()
            .find(|c| c.terminal.d.abs() < 1e-9 && (c.duration - 5.0).abs() < 1e-9)
            .unwrap()
            .clone();
        annotate_kinematics(&mut lon, spec.dt, false);
        let s4 = |t: f64| 24.0 * lon.longitudinal.coeffs[4] + 120.0 * lon.longitudinal.coeffs[5] * t;
        for i in 0..lon.points.len() - 1 {
            let t = lon.points[i].t;
            let midpoint = t + spec.dt / 2.0;
            let analytic = lon.longitudinal.d2(midpoint);
            // forward difference = derivative at the midpoint up to the
            // (dt^2 / 24) |s''''| truncation term
            let bound = spec.dt * spec.dt / 24.0 * s4(t).abs().max(s4(t + spec.dt).abs()) + 1e-9;
            assert!((lon.points[i].a_y - analytic).abs() <= bound);
        }
    }

    #[test]
    fn ay_approximation_flag_switches_to_analytic_sddot() {
        let spec = SamplingSpec::option1();
        let reference = straight_reference(400.0);
        let out = generate_candidates(&cruising_state(100.0, 0.5 * spec.v_r), &spec, &reference).unwrap();
        let mut cand = out.candidates[40].clone();
        annotate_kinematics(&mut cand, spec.dt, true);
        for p in &cand.points {
            assert_relative_eq!(p.a_y, cand.longitudinal.d2(p.t), epsilon = 1e-12);
        }
    }

    fn blocking_obstacle(x: f64, y: f64) -> ObstacleState {
        ObstacleState {
            position: Point2::new(x, y),
            velocity: Vec2::ZERO,
            k: 30.0,
            r_min: 2.0,
            r_max: 25.0,
            k1: 2.0,
            k2: 0.05,
            v_cap: 30.0,
        }
    }

    #[test]
    fn empty_field_cruise_is_feasible_and_reference_candidate_wins() {
        let spec = SamplingSpec::option1();
        let reference = straight_reference(400.0);
        let mut planner = LocalPlanner::new(spec.clone(), ConstraintSpec::default(), CostWeights::default());
        let current = cruising_state(100.0, spec.v_r);
        let outcome = planner.plan_step(&current, &[], FieldWeights::default(), &reference).unwrap();
        // the aggressive lattice corners exceed the acceleration bounds by
        // design; nothing is rejected for safety or domain reasons
        assert_eq!(outcome.rejections.safety, 0);
        assert_eq!(outcome.rejections.out_of_domain, 0);
        assert!(outcome.feasible_count > 200);
        let target = reference_target(&current, &spec);
        assert!((outcome.winner.terminal.s - target.s).abs() < 1e-9);
        assert!(outcome.winner.terminal.d.abs() < 1e-9);
        assert!((outcome.winner.duration - spec.t_r).abs() < 1e-9);
        let cost = outcome.winner.cost.unwrap();
        assert_eq!(cost.j_c, 0.0, "first iteration has no previous winner");
        assert_eq!(cost.j_e, 0.0);
    }

    #[test]
    fn obstacle_on_the_path_rejects_near_candidates() {
        let spec = SamplingSpec::option1();
        let reference = straight_reference(400.0);
        let mut planner = LocalPlanner::new(spec.clone(), ConstraintSpec::default(), CostWeights::default());
        let current = cruising_state(100.0, spec.v_r);
        let obstacles = [blocking_obstacle(135.0, 0.0)];
        let outcome = planner
            .plan_step(&current, &obstacles, FieldWeights::default(), &reference)
            .unwrap();
        assert!(outcome.rejections.safety > 0, "candidates through the obstacle must be discarded");
        // every surviving point stays under the safety threshold
        let mut max_e = 0.0f64;
        for p in &outcome.winner.points {
            assert!(p.e <= ConstraintSpec::default().e_thld);
            max_e = max_e.max(p.e);
        }
        assert!(max_e > 0.0, "the winner still feels the obstacle field");
    }

    #[test]
    fn no_feasible_trajectory_reports_rejection_counts() {
        let spec = SamplingSpec::option1();
        let reference = straight_reference(400.0);
        let constraints = ConstraintSpec { e_thld: 1e-6, ..ConstraintSpec::default() };
        let mut planner = LocalPlanner::new(spec.clone(), constraints, CostWeights::default());
        let current = cruising_state(100.0, spec.v_r);
        // a wall of obstacles across the corridor
        let obstacles: Vec<ObstacleState> =
            (-4..=4).map(|i| blocking_obstacle(130.0, i as f64 * 3.0)).collect();
        let err = planner
            .plan_step(&current, &obstacles, FieldWeights::default(), &reference)
            .unwrap_err();
        match err {
            LocalError::NoFeasibleTrajectory(counts) => {
                let total = counts.out_of_domain
                    + counts.speed
                    + counts.lon_accel
                    + counts.lat_accel
                    + counts.curvature
                    + counts.safety;
                assert_eq!(total, 315, "every candidate must be rejected: {counts}");
                assert!(counts.safety > 200, "safety dominates the rejections: {counts}");
            }
            other => panic!("expected NoFeasibleTrajectory, got {other}"),
        }
    }

    #[test]
    fn terminal_cost_example() {
        // weights diag(5,20,0,0,18,0,0) with offsets (dt,dd,ds) = (0,1,2)
        let weights = CostWeights::default();
        let target = cruising_state(0.0, 0.0);
        let terminal = FrenetState { t: 0.0, s: 2.0, s_dot: 0.0, s_ddot: 0.0, d: 1.0, d_dot: 0.0, d_ddot: 0.0 };
        let traj = CandidateTrajectory {
            lateral: QuinticPoly::fit(0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0).unwrap(),
            longitudinal: QuinticPoly::fit(0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0).unwrap(),
            duration: 1.0,
            points: vec![],
            terminal,
            index: 0,
            feasible: true,
            violation: None,
            cost: None,
        };
        let cost = evaluate_cost(&traj, &weights, &target, None);
        assert_relative_eq!(cost.j_t, 20.0 + 72.0, epsilon = 1e-12);
    }

    #[test]
    fn raising_consistency_weight_never_increases_terminal_divergence() {
        let spec = SamplingSpec::option1();
        let reference = straight_reference(600.0);
        let base = CostWeights::default();
        let consistency_metric = |a: &FrenetState, b: &FrenetState| -> f64 {
            let av = a.to_array();
            let bv = b.to_array();
            (0..7).map(|k| base.w_c[k] * (av[k] - bv[k]) * (av[k] - bv[k])).sum()
        };

        let obstacles = [blocking_obstacle(150.0, 1.0)];
        let mut divergences = Vec::new();
        for scale in [0.0, 0.5, 1.0, 4.0, 16.0] {
            let mut weights = base.clone();
            for w in &mut weights.w_c {
                *w *= scale;
            }
            let mut planner = LocalPlanner::new(spec.clone(), ConstraintSpec::default(), weights);
            let first = planner
                .plan_step(&cruising_state(100.0, spec.v_r), &obstacles, FieldWeights::default(), &reference)
                .unwrap();
            let s_b = first.winner.terminal;
            // second step from a slightly advanced state
            let state = FrenetState {
                t: 0.0,
                s: 101.8,
                s_dot: spec.v_r,
                s_ddot: 0.0,
                d: 0.1,
                d_dot: 0.05,
                d_ddot: 0.0,
            };
            let second = planner
                .plan_step(&state, &obstacles, FieldWeights::default(), &reference)
                .unwrap();
            divergences.push(consistency_metric(&second.winner.terminal, &s_b));
        }
        for pair in divergences.windows(2) {
            assert!(
                pair[1] <= pair[0] + 1e-12,
                "divergences must be non-increasing in the consistency weight: {divergences:?}"
            );
        }
    }

    #[test]
    fn winner_matches_exhaustive_recheck() {
        let spec = SamplingSpec::option1();
        let reference = straight_reference(500.0);
        let mut planner = LocalPlanner::new(spec.clone(), ConstraintSpec::default(), CostWeights::default());
        let obstacles = [blocking_obstacle(140.0, -2.0), blocking_obstacle(170.0, 3.0)];
        let current = cruising_state(110.0, 0.8 * spec.v_r);
        let outcome = planner.plan_step(&current, &obstacles, FieldWeights::default(), &reference).unwrap();

        let target = reference_target(&current, &spec);
        let mut best: Option<(f64, usize)> = None;
        for cand in &outcome.candidates {
            if !cand.feasible {
                continue;
            }
            let cost = evaluate_cost(cand, &planner.weights, &target, None);
            if best.map_or(true, |(b, _)| cost.total < b) {
                best = Some((cost.total, cand.index));
            }
        }
        let (best_cost, best_index) = best.unwrap();
        assert_eq!(outcome.winner.index, best_index);
        assert_relative_eq!(outcome.winner.cost.unwrap().total, best_cost, epsilon = 1e-12);
    }
}

//! Closed-loop simulation with a perfect-tracking follower.
//!
//! An episode builds the global pipeline once (risk field, pyramid,
//! hierarchical plan, QP smoothing, reference path), then loops: advance
//! scripted obstacles, replan locally, and move the vehicle along the
//! winning trajectory for one replan interval. The follower tracks
//! perfectly, which isolates planner behavior from control error.
//!
//! Episodes are deterministic: logs contain no wall-clock values, so the
//! same scenario and configuration produce bit-identical output.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{PlannerConfig, KMH_TO_MPS};
use crate::frenet::{FrenetError, FrenetState, ReferencePath};
use crate::geom::{Point2, Vec2};
use crate::global::{coarse2fine_plan, PlanError};
use crate::local::{
    CandidateTrajectory, CostBreakdown, LocalError, LocalPlanner, RejectionCounts, TrajPoint,
};
use crate::riskfield::ObstacleState;
use crate::scene::{RiskScene, SceneError};
use crate::smoother::{rolling_smooth, QpError};
use crate::uncmap::{build_pyramid, MapError};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Smooth(#[from] QpError),
    #[error(transparent)]
    Frenet(#[from] FrenetError),
    #[error(transparent)]
    Local(#[from] LocalError),
    #[error(transparent)]
    Field(#[from] crate::riskfield::FieldError),
    #[error("scenario file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("scenario JSON: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("requested time {t} is beyond the trajectory horizon {horizon}")]
    BeyondHorizon { t: f64, horizon: f64 },
}

/// Vehicle pose and speed in the world frame.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub speed: f64,
}

/// Piecewise-constant velocity segment of an obstacle script.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptSegment {
    pub duration_s: f64,
    pub velocity: Vec2,
}

/// Motion script attached to one obstacle of the scene. After the last
/// segment the obstacle stops.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObstacleScript {
    pub obstacle: usize,
    pub segments: Vec<ScriptSegment>,
}

/// A closed-loop scenario: a world, endpoints, and obstacle motion.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub scene: RiskScene,
    pub start: Point2,
    pub goal: Point2,
    #[serde(default = "default_step")]
    pub step_s: f64,
    pub horizon_s: f64,
    #[serde(default)]
    pub scripts: Vec<ObstacleScript>,
    /// Initial speed; defaults to the configured cruise speed.
    #[serde(default)]
    pub start_speed_kmh: Option<f64>,
}

fn default_step() -> f64 {
    0.25
}

impl Scenario {
    pub fn load(path: &std::path::Path) -> Result<Scenario, SimError> {
        let text = std::fs::read_to_string(path).map_err(|source| SimError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let scenario: Scenario = serde_json::from_str(&text)?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        self.scene.validate()?;
        if !(self.step_s > 0.0) {
            return Err(SimError::Invalid(format!("step_s must be > 0, got {}", self.step_s)));
        }
        if !(self.horizon_s > 0.0) {
            return Err(SimError::Invalid(format!("horizon_s must be > 0, got {}", self.horizon_s)));
        }
        for script in &self.scripts {
            if script.obstacle >= self.scene.obstacles.len() {
                return Err(SimError::Invalid(format!(
                    "script references obstacle {} but the scene has {}",
                    script.obstacle,
                    self.scene.obstacles.len()
                )));
            }
        }
        Ok(())
    }

    /// Obstacle states at simulated time `t`: positions integrate the
    /// piecewise-constant velocity scripts, velocities are the active
    /// segment's (zero once a script is exhausted).
    pub fn obstacles_at(&self, t: f64) -> Vec<ObstacleState> {
        let mut states = self.scene.obstacles.clone();
        for script in &self.scripts {
            let obs = &mut states[script.obstacle];
            let mut remaining = t;
            let mut position = obs.position;
            let mut velocity = Vec2::ZERO;
            for seg in &script.segments {
                if remaining <= 0.0 {
                    break;
                }
                let dt = remaining.min(seg.duration_s);
                position = position + seg.velocity.scale(dt);
                velocity = if remaining <= seg.duration_s { seg.velocity } else { Vec2::ZERO };
                remaining -= seg.duration_s;
            }
            if remaining > 0.0 {
                velocity = Vec2::ZERO;
            }
            obs.position = position;
            obs.velocity = velocity;
        }
        states
    }
}

/// Vehicle state on a trajectory after `dt` seconds of perfect tracking:
/// linear interpolation between the discretized points, heading from the
/// segment being traversed.
pub fn step_vehicle(traj: &CandidateTrajectory, dt: f64) -> Result<VehicleState, SimError> {
    let points = &traj.points;
    if points.is_empty() || dt > traj.duration + 1e-9 || dt < 0.0 {
        return Err(SimError::BeyondHorizon { t: dt, horizon: traj.duration });
    }
    let last = points.len() - 1;
    let spacing = if last > 0 { points[1].t - points[0].t } else { traj.duration };
    let idx = ((dt / spacing).floor() as usize).min(last.saturating_sub(1));
    let (a, b) = (&points[idx], &points[(idx + 1).min(last)]);
    let span = (b.t - a.t).max(1e-12);
    let frac = ((dt - a.t) / span).clamp(0.0, 1.0);
    let lerp = |x: f64, y: f64| x + frac * (y - x);
    let heading = if (b.x - a.x).abs() + (b.y - a.y).abs() > 1e-12 {
        (b.y - a.y).atan2(b.x - a.x)
    } else {
        0.0
    };
    Ok(VehicleState {
        x: lerp(a.x, b.x),
        y: lerp(a.y, b.y),
        heading,
        speed: lerp(a.v, b.v),
    })
}

/// One executed pose with the kinematic annotations of the plan it came
/// from and the obstacle field re-evaluated at its own time.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ExecutedPoint {
    pub time_s: f64,
    pub point: TrajPoint,
}

/// One replan tick of the episode log.
#[derive(Clone, Debug, Serialize)]
pub struct TickRecord {
    pub tick: usize,
    pub time_s: f64,
    pub vehicle: VehicleState,
    pub frenet: FrenetState,
    pub winner_terminal: FrenetState,
    pub cost: CostBreakdown,
    pub feasible: usize,
    pub rejections: RejectionCounts,
    /// Poses executed during this tick (the winner's points up to the
    /// replan interval), with `e` against the moving obstacles.
    pub executed: Vec<ExecutedPoint>,
    /// Peak obstacle-field exposure over the executed poses.
    pub max_e_executed: f64,
    pub obstacles: Vec<ObstaclePose>,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct ObstaclePose {
    pub position: Point2,
    pub velocity: Vec2,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "cause")]
pub enum Termination {
    GoalReached { time_s: f64 },
    HorizonCap { time_s: f64 },
    NoFeasibleTrajectory { time_s: f64, rejections: RejectionCounts },
}

#[derive(Debug, Serialize)]
pub struct EpisodeLog {
    pub records: Vec<TickRecord>,
    pub termination: Termination,
    /// The smoothed global path the local planner tracked.
    #[serde(skip)]
    pub reference: ReferencePath,
    #[serde(skip)]
    pub global_path: Vec<Point2>,
}

impl EpisodeLog {
    /// JSON-lines serialization: one record per tick, then the termination.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for record in &self.records {
            out.push_str(&serde_json::to_string(record).expect("log records serialize"));
            out.push('\n');
        }
        out.push_str(&serde_json::to_string(&self.termination).expect("termination serializes"));
        out.push('\n');
        out
    }

    pub fn final_vehicle(&self) -> Option<&VehicleState> {
        self.records.last().map(|r| &r.vehicle)
    }
}

/// Run the full pipeline on a scenario: global plan, smoothing, then the
/// replanning loop until the goal, the horizon cap, or a planning dead end.
pub fn run_episode(scenario: &Scenario, cfg: &PlannerConfig) -> Result<EpisodeLog, SimError> {
    scenario.validate()?;
    let scene = &scenario.scene;

    // global stage: static risk only
    let fine_stride = cfg.map.strides_m[0];
    let extent_x = scene.bounds[0];
    let extent_y = scene.bounds[1];
    let width = (extent_x / fine_stride).round() as usize;
    let height = (extent_y / fine_stride).round() as usize;
    let field = crate::riskfield::rasterize(
        |p| scene.static_field_at(p),
        Point2::new(0.0, 0.0),
        fine_stride,
        width.max(1),
        height.max(1),
    )?;
    let block_threshold = cfg.map.block_threshold.or_else(|| scene.max_k_s()).unwrap_or(1.0);
    let pyramid = build_pyramid(&field, &cfg.map.strides_m, cfg.map.lambda, block_threshold, cfg.map.u_cap)?;
    let (global_path, _stats) = coarse2fine_plan(&pyramid, scenario.start, scenario.goal)?;
    // the grid path ends at cell centers; anchor the exact endpoints so the
    // reference actually passes through the goal
    let mut raw_nodes = global_path.nodes.clone();
    let n = raw_nodes.len();
    if n >= 2 {
        raw_nodes[0] = scenario.start;
        raw_nodes[n - 1] = scenario.goal;
    }
    let smoothed = rolling_smooth(
        &raw_nodes,
        cfg.smoothing_weights(),
        cfg.smoothing_s_s(),
        cfg.smooth.n_o,
        cfg.smooth.n_b,
        cfg.smooth.tolerance,
    )?;

    // extend the reference past the goal so near-goal sampling stays in
    // domain, then build the Frenet datum
    let sampling = cfg.sampling_spec();
    let mut polyline = smoothed.nodes.clone();
    if polyline.len() >= 2 {
        let last = polyline[polyline.len() - 1];
        let prev = polyline[polyline.len() - 2];
        let dir = last - prev;
        let norm = dir.norm();
        if norm > 0.0 {
            let tail = sampling.v_r.max(1.0) * sampling.t_max * sampling.s_factor_max + fine_stride;
            polyline.push(last + dir.scale(tail / norm));
        }
    }
    let reference = ReferencePath::from_polyline(&polyline, cfg.reference.ds_m)?;

    // initial Frenet state from the vehicle pose
    let (s0, d0) = reference.world_to_frenet(scenario.start)?;
    let start_speed = scenario.start_speed_kmh.map(|v| v * KMH_TO_MPS).unwrap_or(sampling.v_r);
    let mut frenet = FrenetState {
        t: 0.0,
        s: s0,
        s_dot: start_speed,
        s_ddot: 0.0,
        d: d0,
        d_dot: 0.0,
        d_ddot: 0.0,
    };
    let start_world = reference.frenet_to_world(s0, d0)?;
    let mut vehicle = VehicleState {
        x: start_world.x,
        y: start_world.y,
        heading: reference.sample_at(s0)?.heading,
        speed: start_speed,
    };

    let mut planner = LocalPlanner::new(sampling, cfg.constraint_spec(), cfg.cost_weights());
    planner.ay_from_sddot = cfg.local.ay_from_sddot;
    let replan = cfg.sim.replan_s;
    let inner_steps = (replan / scenario.step_s).round().max(1.0) as usize;

    let mut records = Vec::new();
    let mut tick = 0usize;
    let termination = loop {
        let now = tick as f64 * replan;
        if Point2::new(vehicle.x, vehicle.y).distance(scenario.goal) <= cfg.sim.goal_radius_m {
            break Termination::GoalReached { time_s: now };
        }
        if now >= scenario.horizon_s {
            break Termination::HorizonCap { time_s: now };
        }
        let obstacles = scenario.obstacles_at(now);
        let outcome = match planner.plan_step(&frenet, &obstacles, scene.field_weights, &reference) {
            Ok(outcome) => outcome,
            Err(LocalError::NoFeasibleTrajectory(rejections)) => {
                break Termination::NoFeasibleTrajectory { time_s: now, rejections };
            }
            Err(e) => return Err(e.into()),
        };
        let winner = &outcome.winner;

        // execute the prefix of the winner: log each micro-step pose with
        // the obstacle field at its own time
        let mut executed = Vec::with_capacity(inner_steps);
        let mut max_e: f64 = 0.0;
        for k in 0..inner_steps {
            let tau = (k + 1) as f64 * scenario.step_s;
            // winner points at the discretization grid; the executed poses
            // are exactly those points while replan is a multiple of dt
            let point_idx = ((tau / planner.sampling.dt).round() as usize).min(winner.points.len() - 1);
            let mut point = winner.points[point_idx];
            let snapshot = scenario.obstacles_at(now + tau);
            point.e = RiskScene::obstacle_field_over(&snapshot, scene.field_weights, Point2::new(point.x, point.y))
                .unwrap_or(f64::INFINITY);
            max_e = max_e.max(point.e);
            executed.push(ExecutedPoint { time_s: now + tau, point });
        }

        // perfect tracking: advance the vehicle and the Frenet state along
        // the winner by one replan interval
        vehicle = step_vehicle(winner, replan.min(winner.duration))?;
        let tau = replan.min(winner.duration);
        frenet = FrenetState {
            t: 0.0,
            s: frenet.s + winner.longitudinal.value(tau),
            s_dot: winner.longitudinal.d1(tau),
            s_ddot: winner.longitudinal.d2(tau),
            d: winner.lateral.value(tau),
            d_dot: winner.lateral.d1(tau),
            d_ddot: winner.lateral.d2(tau),
        };

        records.push(TickRecord {
            tick,
            time_s: now,
            vehicle,
            frenet,
            winner_terminal: winner.terminal,
            cost: winner.cost.unwrap_or_default(),
            feasible: outcome.feasible_count,
            rejections: outcome.rejections,
            executed,
            max_e_executed: max_e,
            obstacles: obstacles
                .iter()
                .map(|o| ObstaclePose { position: o.position, velocity: o.velocity })
                .collect(),
        });

        tick += 1;
    };

    Ok(EpisodeLog { records, termination, reference, global_path: global_path.nodes })
}

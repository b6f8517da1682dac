//! Risk-aware off-road motion planning.
//!
//! The crate implements a full planning pipeline for unmanned ground
//! vehicles in unstructured terrain:
//!
//! - [`riskfield`]: artificial-potential-field risk models for static
//!   sources and moving obstacles, and rasterization of those fields.
//! - [`uncmap`]: normalized uncertainty maps and the mixed-pooling
//!   resolution pyramid.
//! - [`global`]: hierarchical uncertainty-aware A* (coarse-to-fine) plus
//!   the single-layer baselines used for benchmarking.
//! - [`smoother`]: box-constrained QP path smoothing with rolling windows
//!   and path stitching.
//! - [`frenet`]: arclength-parameterized reference paths, world/Frenet
//!   conversions, and quintic polynomial primitives.
//! - [`local`]: deterministic-sampling local trajectory planning with
//!   potential-field safety checking.
//! - [`sim`]: a closed-loop simulator with a perfect-tracking follower.
//! - [`bench`]: the planner comparison harness and its reports.
//!
//! The `planner` binary wires these together behind subcommands; see the
//! repository book for a guided tour.

pub mod bench;
pub mod config;
pub mod frenet;
pub mod geom;
pub mod global;
pub mod io;
pub mod local;
pub mod render;
pub mod riskfield;
pub mod scene;
pub mod sim;
pub mod smoother;
pub mod uncmap;

pub use geom::{Point2, Vec2};
pub use scene::RiskScene;

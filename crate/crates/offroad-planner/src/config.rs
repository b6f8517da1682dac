//! Layered planner configuration.
//!
//! Precedence is CLI flag > config file > built-in defaults. Speeds in
//! files are km/h and convert to m/s here, at the boundary; everything
//! downstream is SI. The effective configuration is echoed into output
//! headers so every artifact records how it was produced.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::local::{ConstraintSpec, CostWeights, SamplingSpec};
use crate::smoother::SmoothingWeights;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config TOML: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MapConfig {
    /// Pyramid strides, finest first; two or three layers.
    pub strides_m: Vec<f64>,
    /// Mixed-pooling blend: 1 = max pooling, 0 = average pooling.
    pub lambda: f64,
    /// Cap on normalized traversable uncertainty (strictly below 1).
    pub u_cap: f64,
    /// Field value regarded as non-accessible; defaults to the scene's
    /// most dangerous source class.
    pub block_threshold: Option<f64>,
}

impl Default for MapConfig {
    fn default() -> Self {
        MapConfig { strides_m: vec![10.0, 80.0], lambda: 0.5, u_cap: 0.95, block_threshold: None }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SmoothConfig {
    pub w1: f64,
    pub w2: f64,
    pub w3: f64,
    pub n_o: usize,
    pub n_b: usize,
    pub tolerance: f64,
    /// Total allowed deviation per coordinate; defaults to the fine stride.
    pub s_s_m: Option<f64>,
}

impl Default for SmoothConfig {
    fn default() -> Self {
        SmoothConfig { w1: 10.0, w2: 1.0, w3: 0.5, n_o: 50, n_b: 10, tolerance: 1e-6, s_s_m: None }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReferenceConfig {
    pub ds_m: f64,
}

impl Default for ReferenceConfig {
    fn default() -> Self {
        ReferenceConfig { ds_m: 0.5 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LocalConfig {
    /// Sampling-count preset: 1 (5x9x7 = 315) or 2 (7x15x9 = 945).
    pub option: u8,
    pub v_r_kmh: f64,
    pub dt_s: f64,
    pub t_min_s: f64,
    pub t_max_s: f64,
    pub t_r_s: f64,
    pub d_min_m: f64,
    pub d_max_m: f64,
    pub s_factor_min: f64,
    pub s_factor_max: f64,
    /// Approximate the longitudinal acceleration by the analytic s''.
    pub ay_from_sddot: bool,
}

impl Default for LocalConfig {
    fn default() -> Self {
        LocalConfig {
            option: 1,
            v_r_kmh: 25.0,
            dt_s: 0.25,
            t_min_s: 3.0,
            t_max_s: 7.0,
            t_r_s: 5.0,
            d_min_m: -7.0,
            d_max_m: 7.0,
            s_factor_min: 0.8,
            s_factor_max: 1.2,
            ay_from_sddot: false,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConstraintConfig {
    pub v_min_kmh: f64,
    pub v_max_kmh: f64,
    pub ay_min: f64,
    pub ay_max: f64,
    pub ax_min: f64,
    pub ax_max: f64,
    pub c_min: f64,
    pub c_max: f64,
    pub e_thld: f64,
}

impl Default for ConstraintConfig {
    fn default() -> Self {
        ConstraintConfig {
            v_min_kmh: 0.0,
            v_max_kmh: 50.0,
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

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostConfig {
    pub w_a: f64,
    pub w_s: f64,
    pub w_d: f64,
    pub w_t: [f64; 7],
    pub w_e: f64,
    pub w_c: [f64; 7],
}

impl Default for CostConfig {
    fn default() -> Self {
        let w = CostWeights::default();
        CostConfig { w_a: w.w_a, w_s: w.w_s, w_d: w.w_d, w_t: w.w_t, w_e: w.w_e, w_c: w.w_c }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimBlockConfig {
    /// Replanning cadence in simulated seconds.
    pub replan_s: f64,
    pub goal_radius_m: f64,
}

impl Default for SimBlockConfig {
    fn default() -> Self {
        SimBlockConfig { replan_s: 0.25, goal_radius_m: 2.0 }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerConfig {
    pub map: MapConfig,
    pub smooth: SmoothConfig,
    pub reference: ReferenceConfig,
    pub local: LocalConfig,
    pub constraints: ConstraintConfig,
    pub cost: CostConfig,
    pub sim: SimBlockConfig,
}

pub const KMH_TO_MPS: f64 = 1.0 / 3.6;

impl PlannerConfig {
    /// Defaults overridden by a TOML file; missing sections and fields keep
    /// their defaults.
    pub fn load(path: &std::path::Path) -> Result<PlannerConfig, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let cfg: PlannerConfig = toml::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.map.strides_m.len() < 2 || self.map.strides_m.len() > 3 {
            return Err(ConfigError::Invalid(format!(
                "map.strides_m needs 2 or 3 layers, got {:?}",
                self.map.strides_m
            )));
        }
        if !(self.map.u_cap > 0.0 && self.map.u_cap < 1.0) {
            return Err(ConfigError::Invalid(format!("map.u_cap must be in (0, 1), got {}", self.map.u_cap)));
        }
        if !(0.0..=1.0).contains(&self.map.lambda) {
            return Err(ConfigError::Invalid(format!("map.lambda must be in [0, 1], got {}", self.map.lambda)));
        }
        if !matches!(self.local.option, 1 | 2) {
            return Err(ConfigError::Invalid(format!("local.option must be 1 or 2, got {}", self.local.option)));
        }
        if self.smooth.n_o < self.smooth.n_b + 2 {
            return Err(ConfigError::Invalid(format!(
                "smooth.n_o must be at least n_b + 2, got n_o = {}, n_b = {}",
                self.smooth.n_o, self.smooth.n_b
            )));
        }
        Ok(())
    }

    pub fn sampling_spec(&self) -> SamplingSpec {
        let counts = if self.local.option == 1 {
            ((2, 2), (4, 4), (3, 3))
        } else {
            // the t-axis uses 3/3: the paper's stated candidate product
            // (7 x 15 x 9) is authoritative over its N_l/N_u row
            ((3, 3), (7, 7), (4, 4))
        };
        SamplingSpec {
            t_min: self.local.t_min_s,
            t_max: self.local.t_max_s,
            t_r: self.local.t_r_s,
            t_counts: counts.0,
            d_min: self.local.d_min_m,
            d_max: self.local.d_max_m,
            d_counts: counts.1,
            s_factor_min: self.local.s_factor_min,
            s_factor_max: self.local.s_factor_max,
            s_counts: counts.2,
            v_r: self.local.v_r_kmh * KMH_TO_MPS,
            dt: self.local.dt_s,
        }
    }

    pub fn constraint_spec(&self) -> ConstraintSpec {
        ConstraintSpec {
            v_min: self.constraints.v_min_kmh * KMH_TO_MPS,
            v_max: self.constraints.v_max_kmh * KMH_TO_MPS,
            ay_min: self.constraints.ay_min,
            ay_max: self.constraints.ay_max,
            ax_min: self.constraints.ax_min,
            ax_max: self.constraints.ax_max,
            c_min: self.constraints.c_min,
            c_max: self.constraints.c_max,
            e_thld: self.constraints.e_thld,
        }
    }

    pub fn cost_weights(&self) -> CostWeights {
        CostWeights {
            w_a: self.cost.w_a,
            w_s: self.cost.w_s,
            w_d: self.cost.w_d,
            w_t: self.cost.w_t,
            w_e: self.cost.w_e,
            w_c: self.cost.w_c,
        }
    }

    pub fn smoothing_weights(&self) -> SmoothingWeights {
        SmoothingWeights { w1: self.smooth.w1, w2: self.smooth.w2, w3: self.smooth.w3 }
    }

    /// Deviation bound for smoothing; defaults to the fine stride.
    pub fn smoothing_s_s(&self) -> f64 {
        self.smooth.s_s_m.unwrap_or(self.map.strides_m[0])
    }

    /// The effective configuration as TOML, echoed into output headers.
    pub fn effective_toml(&self) -> String {
        toml::to_string(self).unwrap_or_default()
    }

    /// One-line provenance string for CSV comments.
    pub fn provenance(&self) -> String {
        format!("config: {}", self.effective_toml().replace('\n', " ").trim_end())
    }
}

/// Thread cap from `PLANNER_THREADS` (0 or unset = automatic).
pub fn configured_threads() -> Option<usize> {
    std::env::var("PLANNER_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
}

//! Declarative world description loaded from scenario JSON.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::Point2;
use crate::riskfield::{
    static_potential, FieldError, FieldWeights, ObstacleState, StaticRiskSource,
};

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("scene file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("scene JSON: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("scene field `{field}`: {source}")]
    Invalid {
        field: String,
        #[source]
        source: FieldError,
    },
    #[error("scene bounds must be positive, got {0} x {1}")]
    BadBounds(f64, f64),
}

/// A static world: extent, risk sources, obstacles, and blending weights.
///
/// The world origin is the `(0, 0)` corner; `bounds` is the extent in
/// meters along x and y.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RiskScene {
    pub bounds: [f64; 2],
    #[serde(default)]
    pub static_sources: Vec<StaticRiskSource>,
    #[serde(default)]
    pub obstacles: Vec<ObstacleState>,
    #[serde(default)]
    pub field_weights: FieldWeights,
}

impl RiskScene {
    pub fn load(path: &std::path::Path) -> Result<RiskScene, SceneError> {
        let text = std::fs::read_to_string(path).map_err(|source| SceneError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let scene: RiskScene = serde_json::from_str(&text)?;
        scene.validate()?;
        Ok(scene)
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        if !(self.bounds[0] > 0.0 && self.bounds[1] > 0.0) {
            return Err(SceneError::BadBounds(self.bounds[0], self.bounds[1]));
        }
        for (i, s) in self.static_sources.iter().enumerate() {
            s.validate().map_err(|source| SceneError::Invalid {
                field: format!("static_sources[{i}]"),
                source,
            })?;
        }
        for (i, o) in self.obstacles.iter().enumerate() {
            o.validate().map_err(|source| SceneError::Invalid {
                field: format!("obstacles[{i}]"),
                source,
            })?;
        }
        self.field_weights.validate().map_err(|source| SceneError::Invalid {
            field: "field_weights".into(),
            source,
        })
    }

    /// Sum of all static-source fields whose influence range reaches `p`.
    ///
    /// Contributions are accumulated in a canonical order so the result is
    /// bit-identical under any permutation of the source list.
    pub fn static_field_at(&self, p: Point2) -> f64 {
        canonical_sum(self.static_sources.iter().map(|s| static_potential(s, p)))
    }

    /// Sum of the blended obstacle fields at `p` over a snapshot of
    /// obstacle states; this is the safety indicator `e` of local planning.
    pub fn obstacle_field_over(
        obstacles: &[ObstacleState],
        weights: FieldWeights,
        p: Point2,
    ) -> Result<f64, FieldError> {
        let mut terms = Vec::with_capacity(obstacles.len());
        for obs in obstacles {
            terms.push(obs.potential(weights, p)?);
        }
        Ok(canonical_sum(terms.into_iter()))
    }

    pub fn obstacle_field_at(&self, p: Point2) -> Result<f64, FieldError> {
        Self::obstacle_field_over(&self.obstacles, self.field_weights, p)
    }

    /// Most dangerous static source class; the default blocking threshold
    /// for uncertainty-map normalization.
    pub fn max_k_s(&self) -> Option<f64> {
        self.static_sources.iter().map(|s| s.k_s).fold(None, |acc, k| {
            Some(acc.map_or(k, |a: f64| a.max(k)))
        })
    }
}

/// Sum finite non-negative terms in a sorted order, making the total
/// independent of the caller's term order.
fn canonical_sum(terms: impl Iterator<Item = f64>) -> f64 {
    let mut terms: Vec<f64> = terms.filter(|&t| t != 0.0).collect();
    terms.sort_unstable_by(f64::total_cmp);
    terms.iter().sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::riskfield::SourceGeometry;
    use approx::assert_relative_eq;

    fn disc(center: Point2, k_s: f64) -> StaticRiskSource {
        StaticRiskSource {
            center,
            geometry: SourceGeometry::Disc { radius: 0.0 },
            k_s,
            r_min: 5.0,
            r_max: 30.0,
            n_order: 4.0,
        }
    }

    #[test]
    fn empty_scene_field_is_zero() {
        let scene = RiskScene {
            bounds: [100.0, 100.0],
            static_sources: vec![],
            obstacles: vec![],
            field_weights: FieldWeights::default(),
        };
        assert_eq!(scene.static_field_at(Point2::new(17.0, 42.0)), 0.0);
    }

    #[test]
    fn colocated_sources_add() {
        let p = Point2::new(40.0, 30.0);
        let one = RiskScene {
            bounds: [100.0, 100.0],
            static_sources: vec![disc(Point2::new(30.0, 30.0), 1.0)],
            obstacles: vec![],
            field_weights: FieldWeights::default(),
        };
        let two = RiskScene {
            static_sources: vec![disc(Point2::new(30.0, 30.0), 1.0), disc(Point2::new(30.0, 30.0), 1.0)],
            ..one.clone()
        };
        let single = one.static_field_at(p);
        assert!(single > 0.0 && single < 1.0, "probe should sit in the ramp zone");
        assert_relative_eq!(two.static_field_at(p), 2.0 * single, max_relative = 1e-12);
    }

    #[test]
    fn total_field_matches_per_source_accumulation() {
        let sources = vec![
            disc(Point2::new(10.0, 10.0), 1.0),
            disc(Point2::new(60.0, 40.0), 2.5),
            StaticRiskSource {
                center: Point2::new(35.0, 70.0),
                geometry: SourceGeometry::Rect { half_width: 10.0, half_height: 4.0 },
                k_s: 0.8,
                r_min: 3.0,
                r_max: 25.0,
                n_order: 4.0,
            },
        ];
        let scene = RiskScene {
            bounds: [100.0, 100.0],
            static_sources: sources.clone(),
            obstacles: vec![],
            field_weights: FieldWeights::default(),
        };
        for probe in [Point2::new(20.0, 15.0), Point2::new(50.0, 50.0), Point2::new(35.0, 60.0)] {
            let oracle: f64 = sources.iter().map(|s| static_potential(s, probe)).sum();
            assert_relative_eq!(scene.static_field_at(probe), oracle, max_relative = 1e-12);
        }
    }

    #[test]
    fn field_is_order_independent() {
        let mut sources = vec![
            disc(Point2::new(10.0, 10.0), 1.0),
            disc(Point2::new(20.0, 12.0), 0.5),
            disc(Point2::new(14.0, 30.0), 2.0),
        ];
        let scene_a = RiskScene {
            bounds: [60.0, 60.0],
            static_sources: sources.clone(),
            obstacles: vec![],
            field_weights: FieldWeights::default(),
        };
        sources.reverse();
        let scene_b = RiskScene { static_sources: sources, ..scene_a.clone() };
        let raster_a =
            crate::riskfield::rasterize(|p| scene_a.static_field_at(p), Point2::new(0.0, 0.0), 2.0, 30, 30).unwrap();
        let raster_b =
            crate::riskfield::rasterize(|p| scene_b.static_field_at(p), Point2::new(0.0, 0.0), 2.0, 30, 30).unwrap();
        assert_eq!(raster_a.values, raster_b.values);
    }

    #[test]
    fn scene_json_roundtrip_uses_spec_field_names() {
        let json = r#"{
            "bounds": [2000.0, 2000.0],
            "static_sources": [
                {"center": [100.0, 200.0], "geometry": {"type": "disc", "radius": 15.0},
                 "k_S": 1.2, "r_min": 10.0, "r_max": 60.0}
            ],
            "obstacles": [
                {"position": [50.0, 50.0], "velocity": [1.0, 0.0],
                 "K": 2.0, "r_min": 1.0, "r_max": 12.0, "k1": 2.0, "k2": 0.05}
            ],
            "field_weights": {"w_P": 0.5, "w_D": 0.5}
        }"#;
        let scene: RiskScene = serde_json::from_str(json).unwrap();
        scene.validate().unwrap();
        assert_eq!(scene.static_sources[0].n_order, 4.0, "n_order defaults to 4");
        assert_eq!(scene.obstacles[0].v_cap, crate::riskfield::DEFAULT_V_CAP);
        let back = serde_json::to_string(&scene).unwrap();
        assert!(back.contains("\"k_S\""), "serialized field names follow the schema");
        assert!(back.contains("\"w_P\""));
    }
}

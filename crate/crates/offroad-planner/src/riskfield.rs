//! Artificial-potential-field risk assessment.
//!
//! Two families of risk are modeled. Static risk sources (non-accessible
//! areas, rough terrain patches, risk centers) produce a field that
//! saturates at `k_s` inside the affirmative range `r_min`, decays with a
//! fractional-order ramp out to `r_max`, and vanishes beyond. Obstacles and
//! entities carry a combined field with a proximity component and a
//! velocity-dependent component, so a fast object is more repulsive ahead
//! of itself than behind.
//!
//! All evaluation is pure; rasters are immutable after construction and can
//! be shared freely across threads.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{Point2, Vec2};

#[derive(Debug, Error)]
pub enum FieldError {
    #[error("query point coincides with obstacle center; dynamic field is undefined at r = 0")]
    DegenerateDistance,
    #[error("raster dimensions {width}x{height} overflow")]
    DimensionOverflow { width: usize, height: usize },
    #[error("invalid {what}: {why}")]
    InvalidParameter { what: &'static str, why: String },
}

/// Shape of a static risk source footprint. Distances are measured to the
/// footprint boundary (zero inside), so large non-accessible areas saturate
/// everywhere within.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SourceGeometry {
    Disc { radius: f64 },
    Rect { half_width: f64, half_height: f64 },
}

/// A static risk source: terrain patch, non-accessible area, or risk center.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StaticRiskSource {
    pub center: Point2,
    pub geometry: SourceGeometry,
    /// Field intensity inside the affirmative range; scales with how
    /// dangerous the source class is.
    #[serde(rename = "k_S")]
    pub k_s: f64,
    /// Affirmative range: inside it the field saturates at `k_s`.
    pub r_min: f64,
    /// Maximum influence range: beyond it the field is zero.
    pub r_max: f64,
    /// Fractional order of the decay ramp.
    #[serde(default = "default_n_order")]
    pub n_order: f64,
}

fn default_n_order() -> f64 {
    4.0
}

impl StaticRiskSource {
    pub fn validate(&self) -> Result<(), FieldError> {
        if !(self.k_s > 0.0) {
            return Err(FieldError::InvalidParameter {
                what: "k_S",
                why: format!("must be > 0, got {}", self.k_s),
            });
        }
        if !(self.r_min > 0.0 && self.r_max > self.r_min) {
            return Err(FieldError::InvalidParameter {
                what: "r_min/r_max",
                why: format!("need 0 < r_min < r_max, got {} / {}", self.r_min, self.r_max),
            });
        }
        if !(self.n_order > 2.0) {
            return Err(FieldError::InvalidParameter {
                what: "n_order",
                why: format!("must be > 2, got {}", self.n_order),
            });
        }
        let ok = match self.geometry {
            SourceGeometry::Disc { radius } => radius >= 0.0,
            SourceGeometry::Rect { half_width, half_height } => half_width > 0.0 && half_height > 0.0,
        };
        if !ok {
            return Err(FieldError::InvalidParameter {
                what: "geometry",
                why: "footprint extents must be non-negative".into(),
            });
        }
        Ok(())
    }

    /// Euclidean distance from `p` to the source footprint boundary, zero inside.
    pub fn boundary_distance(&self, p: Point2) -> f64 {
        match self.geometry {
            SourceGeometry::Disc { radius } => (p.distance(self.center) - radius).max(0.0),
            SourceGeometry::Rect { half_width, half_height } => {
                let dx = ((p.x - self.center.x).abs() - half_width).max(0.0);
                let dy = ((p.y - self.center.y).abs() - half_height).max(0.0);
                dx.hypot(dy)
            }
        }
    }
}

/// Field of a single static source at distance `r` from its boundary.
///
/// Saturates at `k_s` inside `r_min`, ramps down with the fractional-order
/// profile over `[r_min, r_max]`, and is zero beyond `r_max`. The ramp is
/// continuous at both ends.
pub fn static_potential_at_distance(k_s: f64, r_min: f64, r_max: f64, n_order: f64, r: f64) -> f64 {
    if r > r_max {
        0.0
    } else if r < r_min {
        k_s
    } else {
        let e = n_order - 2.0;
        k_s * (r.powf(e) - r_max.powf(e)) / (r_min.powf(e) - r_max.powf(e))
    }
}

/// Field of a static source at world position `p`.
pub fn static_potential(source: &StaticRiskSource, p: Point2) -> f64 {
    static_potential_at_distance(
        source.k_s,
        source.r_min,
        source.r_max,
        source.n_order,
        source.boundary_distance(p),
    )
}

/// Weights blending the static and dynamic components of an obstacle field.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct FieldWeights {
    #[serde(rename = "w_P")]
    pub w_p: f64,
    #[serde(rename = "w_D")]
    pub w_d: f64,
}

impl Default for FieldWeights {
    fn default() -> Self {
        // Normalized convex combination keeps the blended field on the
        // scale of its components.
        FieldWeights { w_p: 0.5, w_d: 0.5 }
    }
}

impl FieldWeights {
    pub fn validate(&self) -> Result<(), FieldError> {
        if self.w_p < 0.0 || self.w_d < 0.0 || self.w_p + self.w_d <= 0.0 {
            return Err(FieldError::InvalidParameter {
                what: "field_weights",
                why: format!("need w_P, w_D >= 0 and w_P + w_D > 0, got {} / {}", self.w_p, self.w_d),
            });
        }
        Ok(())
    }
}

/// Default speed cap used to saturate the dynamic component near r -> 0.
pub const DEFAULT_V_CAP: f64 = 30.0;

/// An obstacle or entity, possibly moving.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ObstacleState {
    pub position: Point2,
    #[serde(default = "zero_vec")]
    pub velocity: Vec2,
    /// Intrinsic danger coefficient.
    #[serde(rename = "K")]
    pub k: f64,
    /// Collision distance: inside it the static component saturates.
    pub r_min: f64,
    /// Maximum influence distance of the static component.
    pub r_max: f64,
    /// Distance exponent of the dynamic component.
    pub k1: f64,
    /// Velocity coefficient of the dynamic component (s/m).
    pub k2: f64,
    /// Speed cap bounding the dynamic component near the obstacle.
    #[serde(default = "default_v_cap")]
    pub v_cap: f64,
}

fn zero_vec() -> Vec2 {
    Vec2::ZERO
}

fn default_v_cap() -> f64 {
    DEFAULT_V_CAP
}

impl ObstacleState {
    pub fn validate(&self) -> Result<(), FieldError> {
        if !(self.k > 0.0) {
            return Err(FieldError::InvalidParameter {
                what: "K",
                why: format!("must be > 0, got {}", self.k),
            });
        }
        if !(self.r_min > 0.0 && self.r_max > self.r_min) {
            return Err(FieldError::InvalidParameter {
                what: "r_min/r_max",
                why: format!("need 0 < r_min < r_max, got {} / {}", self.r_min, self.r_max),
            });
        }
        if !(self.k1 > 0.0) || self.k2 < 0.0 {
            return Err(FieldError::InvalidParameter {
                what: "k1/k2",
                why: format!("need k1 > 0 and k2 >= 0, got {} / {}", self.k1, self.k2),
            });
        }
        if !(self.v_cap >= 0.0) {
            return Err(FieldError::InvalidParameter {
                what: "v_cap",
                why: format!("must be >= 0, got {}", self.v_cap),
            });
        }
        Ok(())
    }

    /// Saturation value of the static component. `K` is the unique value
    /// that makes the field continuous at `r_min`.
    pub fn e_p_max(&self) -> f64 {
        self.k
    }

    /// Saturation value of the dynamic component, reached as r -> 0 with the
    /// speed capped at `v_cap`.
    pub fn e_d_max(&self) -> f64 {
        self.k * (self.k2 * self.v_cap).exp() / self.r_min.powf(self.k1)
    }

    /// Static component of the obstacle field at distance `r` from the center.
    pub fn static_potential_at_distance(&self, r: f64) -> f64 {
        if r > self.r_max {
            0.0
        } else if r < self.r_min {
            self.e_p_max()
        } else {
            let r_p = self.r_min * self.r_min * self.r_max * self.r_max
                / (self.r_max * self.r_max - self.r_min * self.r_min);
            self.k * r_p * (1.0 / (r * r) - 1.0 / (self.r_max * self.r_max))
        }
    }

    pub fn static_potential(&self, p: Point2) -> f64 {
        self.static_potential_at_distance(p.distance(self.position))
    }

    /// Velocity-aware component of the obstacle field.
    ///
    /// Grows exponentially with the speed projected toward `p` and decays
    /// with distance; capped at `e_d_max` so the value stays finite as the
    /// query point approaches the obstacle.
    pub fn dynamic_potential(&self, p: Point2) -> Result<f64, FieldError> {
        let offset = p - self.position;
        let r = offset.norm();
        if r == 0.0 {
            return Err(FieldError::DegenerateDistance);
        }
        let v = self.velocity.norm();
        // cos(theta) between velocity and the direction to p; irrelevant at v = 0.
        let cos_theta = if v > 0.0 { self.velocity.dot(offset) / (v * r) } else { 0.0 };
        let raw = self.k / r.powf(self.k1) * (self.k2 * v * cos_theta).exp();
        Ok(raw.min(self.e_d_max()))
    }

    /// Combined obstacle field: `w_P * E_P + w_D * E_D`.
    pub fn potential(&self, weights: FieldWeights, p: Point2) -> Result<f64, FieldError> {
        Ok(weights.w_p * self.static_potential(p) + weights.w_d * self.dynamic_potential(p)?)
    }
}

/// A rasterized scalar field sampled at cell centers, row-major from the
/// origin corner.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldRaster {
    pub origin: Point2,
    pub cell_size: f64,
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

impl FieldRaster {
    pub fn cell_center(&self, col: usize, row: usize) -> Point2 {
        Point2::new(
            self.origin.x + (col as f64 + 0.5) * self.cell_size,
            self.origin.y + (row as f64 + 0.5) * self.cell_size,
        )
    }

    pub fn value(&self, col: usize, row: usize) -> f64 {
        self.values[row * self.width + col]
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().cloned().fold(0.0, f64::max)
    }
}

/// Sample a field closure at every cell center. Rows are evaluated in
/// parallel; output is independent of thread count.
pub fn rasterize<F>(field: F, origin: Point2, cell_size: f64, width: usize, height: usize) -> Result<FieldRaster, FieldError>
where
    F: Fn(Point2) -> f64 + Sync,
{
    if cell_size <= 0.0 {
        return Err(FieldError::InvalidParameter {
            what: "cell_size",
            why: format!("must be > 0, got {cell_size}"),
        });
    }
    let cells = width.checked_mul(height).ok_or(FieldError::DimensionOverflow { width, height })?;
    if cells > (isize::MAX as usize) / std::mem::size_of::<f64>() {
        return Err(FieldError::DimensionOverflow { width, height });
    }
    let mut values = vec![0.0; cells];
    values
        .par_chunks_mut(width.max(1))
        .enumerate()
        .for_each(|(row, chunk)| {
            for (col, v) in chunk.iter_mut().enumerate() {
                let p = Point2::new(
                    origin.x + (col as f64 + 0.5) * cell_size,
                    origin.y + (row as f64 + 0.5) * cell_size,
                );
                *v = field(p);
            }
        });
    Ok(FieldRaster { origin, cell_size, width, height, values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn point_source(k_s: f64, r_min: f64, r_max: f64, n: f64) -> StaticRiskSource {
        StaticRiskSource {
            center: Point2::new(0.0, 0.0),
            geometry: SourceGeometry::Disc { radius: 0.0 },
            k_s,
            r_min,
            r_max,
            n_order: n,
        }
    }

    #[test]
    fn static_potential_zones() {
        // beyond influence range
        assert_eq!(static_potential_at_distance(1.0, 10.0, 20.0, 4.0, 25.0), 0.0);
        // inside affirmative range saturates
        assert_eq!(static_potential_at_distance(1.0, 10.0, 20.0, 4.0, 5.0), 1.0);
        // ramp zone: (225 - 400) / (100 - 400)
        assert_relative_eq!(
            static_potential_at_distance(1.0, 10.0, 20.0, 4.0, 15.0),
            175.0 / 300.0,
            max_relative = 1e-12
        );
    }

    #[test]
    fn static_potential_continuous_at_zone_edges() {
        let eps = 1e-11;
        for &(k_s, r_min, r_max, n) in &[(1.0, 10.0, 20.0, 4.0), (3.5, 2.0, 7.0, 3.0)] {
            let at = |r| static_potential_at_distance(k_s, r_min, r_max, n, r);
            assert!((at(r_min - eps) - at(r_min + eps)).abs() < 1e-9 * k_s.max(1.0));
            assert!((at(r_max - eps) - at(r_max + eps)).abs() < 1e-9 * k_s.max(1.0));
            assert_relative_eq!(at(r_min), k_s, max_relative = 1e-12);
            assert_relative_eq!(at(r_max), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn static_potential_monotone_in_distance() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let r_min = rng.gen_range(0.5..50.0);
            let r_max = r_min + rng.gen_range(0.5..100.0);
            let k_s = rng.gen_range(0.01..10.0);
            let n = rng.gen_range(2.1..8.0);
            let mut prev = f64::INFINITY;
            let mut r = 0.0;
            while r < r_max * 1.2 {
                let v = static_potential_at_distance(k_s, r_min, r_max, n, r);
                assert!(v.is_finite() && v >= 0.0);
                assert!(v <= prev + 1e-12, "field must not increase with distance");
                prev = v;
                r += r_max * 1.2 / 257.0;
            }
        }
    }

    #[test]
    fn rect_source_saturates_inside_footprint() {
        let src = StaticRiskSource {
            center: Point2::new(10.0, 10.0),
            geometry: SourceGeometry::Rect { half_width: 5.0, half_height: 3.0 },
            k_s: 2.0,
            r_min: 1.0,
            r_max: 8.0,
            n_order: 4.0,
        };
        assert_eq!(src.boundary_distance(Point2::new(12.0, 9.0)), 0.0);
        assert_eq!(static_potential(&src, Point2::new(12.0, 9.0)), 2.0);
        // corner distance is the hypotenuse of the per-axis overhangs
        assert_relative_eq!(src.boundary_distance(Point2::new(18.0, 17.0)), (9.0f64 + 16.0).sqrt(), max_relative = 1e-12);
    }

    fn obstacle(k: f64, r_min: f64, r_max: f64, k1: f64, k2: f64, vel: Vec2) -> ObstacleState {
        ObstacleState {
            position: Point2::new(0.0, 0.0),
            velocity: vel,
            k,
            r_min,
            r_max,
            k1,
            k2,
            v_cap: DEFAULT_V_CAP,
        }
    }

    #[test]
    fn obstacle_static_zones() {
        let obs = obstacle(2.0, 1.0, 10.0, 2.0, 0.0, Vec2::ZERO);
        assert_eq!(obs.static_potential_at_distance(11.0), 0.0);
        // saturation equals K: continuity at r_min fixes E_Pmax
        assert_eq!(obs.static_potential_at_distance(0.5), 2.0);

        let obs = obstacle(1.0, 1.0, 2.0, 2.0, 0.0, Vec2::ZERO);
        // r_P = 4/3, value = (4/3) * (1/2.25 - 1/4) = 7/27
        assert_relative_eq!(obs.static_potential_at_distance(1.5), 7.0 / 27.0, max_relative = 1e-12);
    }

    #[test]
    fn obstacle_static_continuous_and_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let r_min = rng.gen_range(0.2..5.0);
            let r_max = r_min + rng.gen_range(0.2..20.0);
            let obs = obstacle(rng.gen_range(0.1..10.0), r_min, r_max, 2.0, 0.0, Vec2::ZERO);
            let eps = 1e-11;
            assert!((obs.static_potential_at_distance(r_min - eps) - obs.static_potential_at_distance(r_min + eps)).abs() < 1e-8 * obs.k);
            assert!((obs.static_potential_at_distance(r_max - eps) - obs.static_potential_at_distance(r_max + eps)).abs() < 1e-8 * obs.k);
            let mut prev = f64::INFINITY;
            for i in 0..200 {
                let r = 1e-3 + (r_max * 1.1 - 1e-3) * i as f64 / 199.0;
                let v = obs.static_potential_at_distance(r);
                assert!(v.is_finite() && v >= 0.0 && v <= prev + 1e-12);
                prev = v;
            }
        }
    }

    #[test]
    fn dynamic_potential_examples() {
        // v = 0: exp(0) = 1
        let obs = obstacle(1.0, 0.1, 10.0, 2.0, 0.05, Vec2::ZERO);
        assert_relative_eq!(obs.dynamic_potential(Point2::new(2.0, 0.0)).unwrap(), 0.25, max_relative = 1e-12);

        // lateral direction unaffected by speed
        let moving = obstacle(1.0, 0.1, 10.0, 2.0, 0.05, Vec2::new(8.0, 0.0));
        assert_relative_eq!(
            moving.dynamic_potential(Point2::new(0.0, 2.0)).unwrap(),
            0.25,
            max_relative = 1e-12
        );

        // head-on: (1/5) * exp(0.05 * 10)
        let fast = obstacle(1.0, 0.1, 10.0, 1.0, 0.05, Vec2::new(10.0, 0.0));
        assert_relative_eq!(
            fast.dynamic_potential(Point2::new(5.0, 0.0)).unwrap(),
            0.2 * 0.5f64.exp(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn dynamic_potential_direction_sensitivity() {
        // ahead of the motion the field grows with speed, behind it shrinks
        let slow = obstacle(1.0, 0.5, 10.0, 2.0, 0.1, Vec2::new(1.0, 0.0));
        let fast = obstacle(1.0, 0.5, 10.0, 2.0, 0.1, Vec2::new(6.0, 0.0));
        let ahead = Point2::new(3.0, 0.0);
        let behind = Point2::new(-3.0, 0.0);
        assert!(fast.dynamic_potential(ahead).unwrap() > slow.dynamic_potential(ahead).unwrap());
        assert!(fast.dynamic_potential(behind).unwrap() < slow.dynamic_potential(behind).unwrap());
    }

    #[test]
    fn dynamic_potential_saturates_near_zero_distance() {
        let obs = obstacle(2.0, 0.5, 10.0, 2.0, 0.1, Vec2::new(5.0, 0.0));
        let v = obs.dynamic_potential(Point2::new(1e-9, 0.0)).unwrap();
        assert!(v.is_finite());
        assert_relative_eq!(v, obs.e_d_max(), max_relative = 1e-12);
        assert!(matches!(
            obs.dynamic_potential(Point2::new(0.0, 0.0)),
            Err(FieldError::DegenerateDistance)
        ));
    }

    #[test]
    fn combined_potential_blends_components() {
        let obs = obstacle(1.0, 1.0, 2.0, 1.0, 0.05, Vec2::new(10.0, 0.0));
        let p = Point2::new(1.5, 0.0);
        let e_p = obs.static_potential(p);
        let e_d = obs.dynamic_potential(p).unwrap();
        let w = FieldWeights { w_p: 1.0, w_d: 1.0 };
        assert_relative_eq!(obs.potential(w, p).unwrap(), e_p + e_d, max_relative = 1e-12);
        let only_static = FieldWeights { w_p: 0.7, w_d: 0.0 };
        assert_relative_eq!(obs.potential(only_static, p).unwrap(), 0.7 * e_p, max_relative = 1e-12);
    }

    #[test]
    fn rasterize_matches_pointwise_evaluation() {
        let src = point_source(1.0, 2.0, 6.0, 4.0);
        let f = |p: Point2| static_potential(&src, p);
        let raster = rasterize(f, Point2::new(-6.0, -6.0), 4.0, 3, 3).unwrap();
        for row in 0..3 {
            for col in 0..3 {
                let p = raster.cell_center(col, row);
                assert_eq!(raster.value(col, row), f(p));
            }
        }
    }

    #[test]
    fn rasterize_is_symmetric_for_centered_source() {
        let src = point_source(1.0, 3.0, 20.0, 4.0);
        let raster = rasterize(|p| static_potential(&src, p), Point2::new(-12.5, -12.5), 1.0, 25, 25).unwrap();
        for row in 0..25 {
            for col in 0..25 {
                let mirrored = raster.value(24 - col, 24 - row);
                assert_relative_eq!(raster.value(col, row), mirrored, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn zero_field_rasterizes_to_zero() {
        let raster = rasterize(|_| 0.0, Point2::new(0.0, 0.0), 1.0, 4, 4).unwrap();
        assert!(raster.values.iter().all(|&v| v == 0.0));
    }
}

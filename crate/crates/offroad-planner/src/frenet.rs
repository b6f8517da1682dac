//! Frenet frame: arclength-parameterized reference path, world/Frenet
//! conversions, and quintic polynomial primitives.
//!
//! The reference path is resampled at uniform arclength spacing with
//! heading from central differences and curvature from heading differences
//! over arclength. Lateral offsets are positive to the left of the path.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{Point2, Vec2};

#[derive(Debug, Error)]
pub enum FrenetError {
    #[error("reference path needs at least 2 distinct nodes")]
    DegeneratePath,
    #[error("polynomial duration must be > 0, got {0}")]
    BadDuration(f64),
    #[error("arclength {s} outside the reference domain [0, {max}]")]
    OutOfDomain { s: f64, max: f64 },
    #[error("projection is ambiguous: two distant reference segments are equidistant")]
    AmbiguousProjection,
    #[error("resampling step must be > 0, got {0}")]
    BadStep(f64),
}

/// Vehicle state in the Frenet frame, in the sampling-space order
/// `[t, d, d', d'', s, s', s'']`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrenetState {
    pub t: f64,
    pub s: f64,
    pub s_dot: f64,
    pub s_ddot: f64,
    pub d: f64,
    pub d_dot: f64,
    pub d_ddot: f64,
}

impl FrenetState {
    pub fn to_array(&self) -> [f64; 7] {
        [self.t, self.d, self.d_dot, self.d_ddot, self.s, self.s_dot, self.s_ddot]
    }
}

/// Degree-5 polynomial over `[0, duration]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuinticPoly {
    pub coeffs: [f64; 6],
    pub duration: f64,
}

impl QuinticPoly {
    /// The unique quintic matching position, velocity, and acceleration at
    /// both ends of `[0, duration]`.
    pub fn fit(p0: f64, v0: f64, a0: f64, p1: f64, v1: f64, a1: f64, duration: f64) -> Result<QuinticPoly, FrenetError> {
        if !(duration > 0.0) {
            return Err(FrenetError::BadDuration(duration));
        }
        let t = duration;
        let t2 = t * t;
        let t3 = t2 * t;
        let t4 = t3 * t;
        let t5 = t4 * t;
        let m = Matrix3::new(t3, t4, t5, 3.0 * t2, 4.0 * t3, 5.0 * t4, 6.0 * t, 12.0 * t2, 20.0 * t3);
        let rhs = Vector3::new(
            p1 - (p0 + v0 * t + 0.5 * a0 * t2),
            v1 - (v0 + a0 * t),
            a1 - a0,
        );
        let tail = m.lu().solve(&rhs).ok_or(FrenetError::BadDuration(duration))?;
        Ok(QuinticPoly {
            coeffs: [p0, v0, 0.5 * a0, tail[0], tail[1], tail[2]],
            duration,
        })
    }

    pub fn value(&self, t: f64) -> f64 {
        let c = &self.coeffs;
        ((((c[5] * t + c[4]) * t + c[3]) * t + c[2]) * t + c[1]) * t + c[0]
    }

    pub fn d1(&self, t: f64) -> f64 {
        let c = &self.coeffs;
        (((5.0 * c[5] * t + 4.0 * c[4]) * t + 3.0 * c[3]) * t + 2.0 * c[2]) * t + c[1]
    }

    pub fn d2(&self, t: f64) -> f64 {
        let c = &self.coeffs;
        ((20.0 * c[5] * t + 12.0 * c[4]) * t + 6.0 * c[3]) * t + 2.0 * c[2]
    }

    pub fn d3(&self, t: f64) -> f64 {
        let c = &self.coeffs;
        (60.0 * c[5] * t + 24.0 * c[4]) * t + 6.0 * c[3]
    }
}

/// Interpolated reference sample at one arclength.
#[derive(Clone, Copy, Debug)]
pub struct RefSample {
    pub position: Point2,
    pub heading: f64,
    pub curvature: f64,
}

/// Arclength-parameterized reference path.
#[derive(Clone, Debug)]
pub struct ReferencePath {
    pub s: Vec<f64>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// Unwrapped heading (continuous across the +-pi seam).
    pub theta: Vec<f64>,
    pub curvature: Vec<f64>,
}

impl ReferencePath {
    /// Resample a polyline at spacing `ds`. The final input point is always
    /// retained so the domain covers the whole polyline.
    pub fn from_polyline(nodes: &[Point2], ds: f64) -> Result<ReferencePath, FrenetError> {
        if !(ds > 0.0) {
            return Err(FrenetError::BadStep(ds));
        }
        let mut cumulative = vec![0.0];
        for pair in nodes.windows(2) {
            let step = pair[0].distance(pair[1]);
            cumulative.push(cumulative.last().unwrap() + step);
        }
        let total = *cumulative.last().unwrap_or(&0.0);
        if nodes.len() < 2 || total <= 0.0 {
            return Err(FrenetError::DegeneratePath);
        }

        let mut stations: Vec<f64> = (0..).map(|k| k as f64 * ds).take_while(|s| *s < total).collect();
        if total - stations.last().unwrap() > 1e-9 * ds {
            stations.push(total);
        } else {
            *stations.last_mut().unwrap() = total;
        }

        let mut x = Vec::with_capacity(stations.len());
        let mut y = Vec::with_capacity(stations.len());
        let mut cursor = 0;
        for &s in &stations {
            while cursor + 1 < cumulative.len() - 1 && cumulative[cursor + 1] < s {
                cursor += 1;
            }
            let seg = (cumulative[cursor + 1] - cumulative[cursor]).max(1e-307);
            let t = ((s - cumulative[cursor]) / seg).clamp(0.0, 1.0);
            x.push(nodes[cursor].x + t * (nodes[cursor + 1].x - nodes[cursor].x));
            y.push(nodes[cursor].y + t * (nodes[cursor + 1].y - nodes[cursor].y));
        }

        let m = stations.len();
        let mut theta = Vec::with_capacity(m);
        for i in 0..m {
            let (a, b) = if i == 0 {
                (0, 1.min(m - 1))
            } else if i == m - 1 {
                (m - 2, m - 1)
            } else {
                (i - 1, i + 1)
            };
            theta.push((y[b] - y[a]).atan2(x[b] - x[a]));
        }
        // unwrap so interpolation across samples stays meaningful
        for i in 1..m {
            let mut t = theta[i];
            while t - theta[i - 1] > std::f64::consts::PI {
                t -= 2.0 * std::f64::consts::PI;
            }
            while t - theta[i - 1] < -std::f64::consts::PI {
                t += 2.0 * std::f64::consts::PI;
            }
            theta[i] = t;
        }

        let mut curvature = Vec::with_capacity(m);
        for i in 0..m {
            if i + 1 < m {
                let dsi = stations[i + 1] - stations[i];
                curvature.push(if dsi > 0.0 { (theta[i + 1] - theta[i]) / dsi } else { 0.0 });
            } else {
                curvature.push(*curvature.last().unwrap_or(&0.0));
            }
        }

        Ok(ReferencePath { s: stations, x, y, theta, curvature })
    }

    pub fn total_length(&self) -> f64 {
        *self.s.last().unwrap()
    }

    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }

    pub fn point(&self, i: usize) -> Point2 {
        Point2::new(self.x[i], self.y[i])
    }

    fn bracket(&self, s: f64) -> Result<(usize, f64), FrenetError> {
        let max = self.total_length();
        if !((-1e-9..=max + 1e-9).contains(&s)) {
            return Err(FrenetError::OutOfDomain { s, max });
        }
        let s = s.clamp(0.0, max);
        let mut i = self.s.partition_point(|&v| v <= s);
        i = i.clamp(1, self.len() - 1);
        let span = self.s[i] - self.s[i - 1];
        let t = if span > 0.0 { (s - self.s[i - 1]) / span } else { 0.0 };
        Ok((i - 1, t))
    }

    /// Interpolated pose and curvature at arclength `s`.
    pub fn sample_at(&self, s: f64) -> Result<RefSample, FrenetError> {
        let (i, t) = self.bracket(s)?;
        let lerp = |a: f64, b: f64| a + t * (b - a);
        Ok(RefSample {
            position: Point2::new(lerp(self.x[i], self.x[i + 1]), lerp(self.y[i], self.y[i + 1])),
            heading: lerp(self.theta[i], self.theta[i + 1]),
            curvature: lerp(self.curvature[i], self.curvature[i + 1]),
        })
    }

    /// World position of Frenet coordinates `(s, d)`: the base point at `s`
    /// displaced by `d` along the left normal.
    pub fn frenet_to_world(&self, s: f64, d: f64) -> Result<Point2, FrenetError> {
        let sample = self.sample_at(s)?;
        let normal = Vec2::new(-sample.heading.sin(), sample.heading.cos());
        Ok(sample.position + normal.scale(d))
    }

    /// Project a world point onto the reference: arclength of the closest
    /// point and the signed lateral offset (left positive).
    ///
    /// Ties within 1e-9 break toward smaller `s`; equidistant projections
    /// onto distant path regions are reported as ambiguous. The initial
    /// nearest-segment guess is refined against the interpolated pose so
    /// the result inverts [`ReferencePath::frenet_to_world`] inside the
    /// projection tube.
    pub fn world_to_frenet(&self, p: Point2) -> Result<(f64, f64), FrenetError> {
        let m = self.len();
        let mut best = (f64::INFINITY, 0usize);
        let mut second_region = (f64::INFINITY, 0usize);
        for i in 0..m {
            let d = p.distance(self.point(i));
            if d < best.0 - 1e-9 {
                best = (d, i);
            } else if i > best.1 + 10 && d < second_region.0 {
                second_region = (d, i);
            }
        }
        if second_region.0 - best.0 <= 1e-9 {
            return Err(FrenetError::AmbiguousProjection);
        }
        let i = best.1;

        // coarse estimate from the segments adjacent to the closest sample
        let mut coarse: Option<(f64, f64)> = None; // (distance, s)
        for seg in [i.saturating_sub(1), i] {
            if seg + 1 >= m {
                continue;
            }
            let a = self.point(seg);
            let b = self.point(seg + 1);
            let ab = b - a;
            let len2 = ab.dot(ab);
            if len2 == 0.0 {
                continue;
            }
            let t = ((p - a).dot(ab) / len2).clamp(0.0, 1.0);
            let dist = p.distance(a + ab.scale(t));
            let s = self.s[seg] + t * (self.s[seg + 1] - self.s[seg]);
            let better = match coarse {
                None => true,
                // ties toward smaller s
                Some((bd, bs)) => dist < bd - 1e-9 || ((dist - bd).abs() <= 1e-9 && s < bs),
            };
            if better {
                coarse = Some((dist, s));
            }
        }
        let (_, mut s) = coarse.ok_or(FrenetError::DegeneratePath)?;

        // drive the tangential residual to zero; contraction factor is
        // |d * curvature| < 1 inside the tube
        let total = self.total_length();
        for _ in 0..200 {
            let sample = self.sample_at(s)?;
            let tangent = Vec2::new(sample.heading.cos(), sample.heading.sin());
            let residual = (p - sample.position).dot(tangent);
            s = (s + residual).clamp(0.0, total);
            if residual.abs() < 1e-10 {
                break;
            }
        }
        let sample = self.sample_at(s)?;
        let tangent = Vec2::new(sample.heading.cos(), sample.heading.sin());
        let d = tangent.cross(p - sample.position);
        Ok((s, d))
    }

    /// Dump as path CSV rows extended with arclength, heading, and curvature.
    pub fn write_csv(&self, path: &std::path::Path, comments: &[String]) -> Result<(), crate::io::IoError> {
        let mut out = String::new();
        for c in comments {
            out.push_str("# ");
            out.push_str(c);
            out.push('\n');
        }
        out.push_str("x_m,y_m,s,theta,c\n");
        for i in 0..self.len() {
            out.push_str(&format!("{},{},{},{},{}\n", self.x[i], self.y[i], self.s[i], self.theta[i], self.curvature[i]));
        }
        std::fs::write(path, out).map_err(|e| crate::io::IoError::file(path, e))
    }

    pub fn read_csv(path: &std::path::Path) -> Result<ReferencePath, crate::io::IoError> {
        let text = std::fs::read_to_string(path).map_err(|e| crate::io::IoError::file(path, e))?;
        let mut cols: [Vec<f64>; 5] = Default::default();
        let mut saw_header = false;
        for (n, line) in text.lines().enumerate() {
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            if !saw_header {
                if !trimmed.starts_with("x_m") {
                    return Err(crate::io::IoError::format(path, n + 1, "expected `x_m,y_m,s,theta,c` header"));
                }
                saw_header = true;
                continue;
            }
            let mut fields = trimmed.split(',');
            for col in &mut cols {
                let field = fields
                    .next()
                    .ok_or_else(|| crate::io::IoError::format(path, n + 1, "expected 5 fields"))?;
                col.push(field.trim().parse::<f64>().map_err(|_| {
                    crate::io::IoError::format(path, n + 1, format!("bad number `{field}`"))
                })?);
            }
        }
        let [x, y, s, theta, curvature] = cols;
        Ok(ReferencePath { s, x, y, theta, curvature })
    }
}

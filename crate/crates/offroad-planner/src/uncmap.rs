//! Uncertainty maps and the multi-resolution pyramid.
//!
//! A potential-field raster is normalized into per-cell *area uncertainty*
//! in `[0, u_cap]`: cells whose field reaches the blocking threshold become
//! non-accessible, the rest scale linearly. Coarser layers are derived with
//! mixed pooling, a λ-blend of max and average pooling, so a coarse cell
//! inherits both the worst and the typical risk of its region.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::Point2;
use crate::io::{read_grid_csv, write_grid_csv, GridGeometry, IoError};
use crate::riskfield::{rasterize, FieldRaster};

/// Sentinel stored in blocked cells; traversable uncertainty stays strictly
/// below 1 so the search cost `1/(1-U)` is finite.
pub const U_BLOCKED: f64 = 1.0;

/// Default cap on normalized traversable uncertainty.
pub const DEFAULT_U_CAP: f64 = 0.95;

#[derive(Debug, Error)]
pub enum MapError {
    #[error("block threshold must be > 0, got {0}")]
    BadThreshold(f64),
    #[error("every cell is blocked; the scene has no traversable space")]
    AllBlocked,
    #[error("pooling factor must be >= 2, got {0}")]
    BadPoolFactor(usize),
    #[error("strides must be strictly increasing integer multiples, got {0:?}")]
    BadStrides(Vec<f64>),
    #[error("uncertainty cap must be in (0, 1), got {0}")]
    BadUCap(f64),
    #[error("field raster cell size {raster} does not match the fine stride {stride}")]
    StrideMismatch { raster: f64, stride: f64 },
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("map file invariant violated: {0}")]
    InvalidMap(String),
}

/// Normalized risk raster at one resolution. `cell_size` doubles as the
/// search stride of this layer.
#[derive(Clone, Debug, PartialEq)]
pub struct UncertaintyMap {
    pub origin: Point2,
    pub cell_size: f64,
    pub width: usize,
    pub height: usize,
    pub u: Vec<f64>,
    pub blocked: Vec<bool>,
}

impl UncertaintyMap {
    #[inline]
    pub fn index(&self, col: usize, row: usize) -> usize {
        row * self.width + col
    }

    #[inline]
    pub fn u_at(&self, col: usize, row: usize) -> f64 {
        self.u[self.index(col, row)]
    }

    #[inline]
    pub fn is_blocked(&self, col: usize, row: usize) -> bool {
        self.blocked[self.index(col, row)]
    }

    pub fn cell_center(&self, col: usize, row: usize) -> Point2 {
        Point2::new(
            self.origin.x + (col as f64 + 0.5) * self.cell_size,
            self.origin.y + (row as f64 + 0.5) * self.cell_size,
        )
    }

    /// Cell containing a world point, if inside the map.
    pub fn cell_of(&self, p: Point2) -> Option<(usize, usize)> {
        let fx = (p.x - self.origin.x) / self.cell_size;
        let fy = (p.y - self.origin.y) / self.cell_size;
        if fx < 0.0 || fy < 0.0 {
            return None;
        }
        let (col, row) = (fx as usize, fy as usize);
        if col >= self.width || row >= self.height {
            return None;
        }
        Some((col, row))
    }

    pub fn validate(&self) -> Result<(), MapError> {
        if self.u.len() != self.width * self.height || self.blocked.len() != self.u.len() {
            return Err(MapError::InvalidMap("value/blocked length mismatch".into()));
        }
        for (i, &u) in self.u.iter().enumerate() {
            if self.blocked[i] {
                if u != U_BLOCKED {
                    return Err(MapError::InvalidMap(format!("blocked cell {i} must carry the sentinel")));
                }
            } else if !(0.0..1.0).contains(&u) {
                return Err(MapError::InvalidMap(format!("traversable cell {i} has u = {u}")));
            }
        }
        Ok(())
    }

    pub fn write_csv(&self, path: &std::path::Path, comments: &[String]) -> Result<(), MapError> {
        let geom = GridGeometry {
            origin: self.origin,
            cell_size: self.cell_size,
            width: self.width,
            height: self.height,
        };
        let values = |col: usize, row: usize| self.u_at(col, row).to_string();
        let blocked = |col: usize, row: usize| if self.is_blocked(col, row) { "1".to_string() } else { "0".to_string() };
        write_grid_csv(path, comments, &geom, &[(None, &values), (Some("blocked"), &blocked)])?;
        Ok(())
    }

    pub fn read_csv(path: &std::path::Path) -> Result<UncertaintyMap, MapError> {
        let grid = read_grid_csv(path)?;
        if grid.blocks.len() != 2 || grid.blocks[1].0 != "blocked" {
            return Err(MapError::InvalidMap("expected a `blocked` bitmap block".into()));
        }
        let parse_block = |rows: &Vec<Vec<String>>| -> Result<Vec<f64>, MapError> {
            let mut out = Vec::with_capacity(grid.geometry.width * grid.geometry.height);
            for row in rows {
                for cell in row {
                    out.push(
                        cell.parse::<f64>()
                            .map_err(|_| MapError::InvalidMap(format!("bad cell `{cell}`")))?,
                    );
                }
            }
            Ok(out)
        };
        let u = parse_block(&grid.blocks[0].1)?;
        let blocked: Vec<bool> = parse_block(&grid.blocks[1].1)?.iter().map(|&b| b != 0.0).collect();
        let map = UncertaintyMap {
            origin: grid.geometry.origin,
            cell_size: grid.geometry.cell_size,
            width: grid.geometry.width,
            height: grid.geometry.height,
            u,
            blocked,
        };
        map.validate()?;
        Ok(map)
    }
}

/// Normalize a potential-field raster into an uncertainty map.
///
/// Cells at or above `block_threshold` are non-accessible; the rest map
/// linearly onto `[0, u_cap]`.
pub fn normalize(field: &FieldRaster, block_threshold: f64, u_cap: f64) -> Result<UncertaintyMap, MapError> {
    if !(block_threshold > 0.0) {
        return Err(MapError::BadThreshold(block_threshold));
    }
    if !(u_cap > 0.0 && u_cap < 1.0) {
        return Err(MapError::BadUCap(u_cap));
    }
    let mut u = Vec::with_capacity(field.values.len());
    let mut blocked = Vec::with_capacity(field.values.len());
    let mut any_open = false;
    for &v in &field.values {
        if v >= block_threshold {
            u.push(U_BLOCKED);
            blocked.push(true);
        } else {
            u.push(v / block_threshold * u_cap);
            blocked.push(false);
            any_open = true;
        }
    }
    if !any_open {
        return Err(MapError::AllBlocked);
    }
    Ok(UncertaintyMap {
        origin: field.origin,
        cell_size: field.cell_size,
        width: field.width,
        height: field.height,
        u,
        blocked,
    })
}

/// Downsample by `factor` with mixed pooling: `λ·max + (1-λ)·mean` over each
/// region. Regions at ragged edges are clipped to real cells, which is
/// equivalent to edge replication with padding excluded from the mean. A
/// region containing any blocked cell is blocked.
pub fn mixed_pool(fine: &UncertaintyMap, factor: usize, lambda: f64) -> Result<UncertaintyMap, MapError> {
    if factor < 2 {
        return Err(MapError::BadPoolFactor(factor));
    }
    let lambda = lambda.clamp(0.0, 1.0);
    let width = fine.width.div_ceil(factor);
    let height = fine.height.div_ceil(factor);
    let mut u = vec![0.0; width * height];
    let mut blocked = vec![false; width * height];
    for row in 0..height {
        for col in 0..width {
            let c0 = col * factor;
            let r0 = row * factor;
            let c1 = (c0 + factor).min(fine.width);
            let r1 = (r0 + factor).min(fine.height);
            let mut max = 0.0f64;
            let mut sum = 0.0f64;
            let mut any_blocked = false;
            for r in r0..r1 {
                for c in c0..c1 {
                    if fine.is_blocked(c, r) {
                        any_blocked = true;
                    }
                    let v = fine.u_at(c, r);
                    max = max.max(v);
                    sum += v;
                }
            }
            let count = ((r1 - r0) * (c1 - c0)) as f64;
            let idx = row * width + col;
            if any_blocked {
                blocked[idx] = true;
                u[idx] = U_BLOCKED;
            } else {
                u[idx] = lambda * max + (1.0 - lambda) * (sum / count);
            }
        }
    }
    Ok(UncertaintyMap {
        origin: fine.origin,
        cell_size: fine.cell_size * factor as f64,
        width,
        height,
        u,
        blocked,
    })
}

/// Resolution pyramid, finest layer first. Two layers (fine + coarse) match
/// the 10 m / 80 m raster convention; three layers add a middle stage.
#[derive(Clone, Debug)]
pub struct MapPyramid {
    layers: Vec<UncertaintyMap>,
}

impl MapPyramid {
    pub fn from_layers(layers: Vec<UncertaintyMap>) -> Result<MapPyramid, MapError> {
        if layers.len() < 2 {
            return Err(MapError::BadStrides(layers.iter().map(|l| l.cell_size).collect()));
        }
        for win in layers.windows(2) {
            let (finer, coarser) = (&win[0], &win[1]);
            let ratio = coarser.cell_size / finer.cell_size;
            if !(ratio > 1.0 && (ratio - ratio.round()).abs() < 1e-9) {
                return Err(MapError::BadStrides(layers.iter().map(|l| l.cell_size).collect()));
            }
            let factor = ratio.round() as usize;
            if coarser.width != finer.width.div_ceil(factor)
                || coarser.height != finer.height.div_ceil(factor)
                || coarser.origin != finer.origin
            {
                return Err(MapError::InvalidMap(
                    "pyramid layers must cover the same world extent".into(),
                ));
            }
            // blockedness must propagate upward
            for row in 0..coarser.height {
                for col in 0..coarser.width {
                    if !coarser.is_blocked(col, row) {
                        let c1 = ((col + 1) * factor).min(finer.width);
                        let r1 = ((row + 1) * factor).min(finer.height);
                        for r in row * factor..r1 {
                            for c in col * factor..c1 {
                                if finer.is_blocked(c, r) {
                                    return Err(MapError::InvalidMap(
                                        "blocked fine cell under an open coarse cell".into(),
                                    ));
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok(MapPyramid { layers })
    }

    pub fn fine(&self) -> &UncertaintyMap {
        &self.layers[0]
    }

    pub fn coarse(&self) -> &UncertaintyMap {
        self.layers.last().unwrap()
    }

    pub fn middle(&self) -> Option<&UncertaintyMap> {
        (self.layers.len() == 3).then(|| &self.layers[1])
    }

    pub fn layers(&self) -> &[UncertaintyMap] {
        &self.layers
    }

    pub fn strides(&self) -> Vec<f64> {
        self.layers.iter().map(|l| l.cell_size).collect()
    }
}

/// Build a pyramid from a fine-stride field raster: normalize, then pool
/// each coarser layer from the previous one.
pub fn build_pyramid(
    field: &FieldRaster,
    strides: &[f64],
    lambda: f64,
    block_threshold: f64,
    u_cap: f64,
) -> Result<MapPyramid, MapError> {
    if strides.len() < 2 {
        return Err(MapError::BadStrides(strides.to_vec()));
    }
    if (field.cell_size - strides[0]).abs() > 1e-9 {
        return Err(MapError::StrideMismatch { raster: field.cell_size, stride: strides[0] });
    }
    let mut layers = vec![normalize(field, block_threshold, u_cap)?];
    for win in strides.windows(2) {
        let ratio = win[1] / win[0];
        if !(ratio > 1.0 && (ratio - ratio.round()).abs() < 1e-9) {
            return Err(MapError::BadStrides(strides.to_vec()));
        }
        let next = mixed_pool(layers.last().unwrap(), ratio.round() as usize, lambda)?;
        layers.push(next);
    }
    MapPyramid::from_layers(layers)
}

/// Parameters of the seeded random uncertainty field used by the benchmark
/// scenarios: a sum of (possibly elongated) Gaussian bumps with random
/// centers, widths, orientations, and amplitudes.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RandomFieldParams {
    pub seed: u64,
    pub bumps: usize,
    pub amplitude: [f64; 2],
    /// Minor-axis standard deviation range (m).
    pub sigma: [f64; 2],
    /// Major/minor axis ratio range; [1, 1] gives isotropic bumps.
    #[serde(default = "isotropic")]
    pub elongation: [f64; 2],
}

fn isotropic() -> [f64; 2] {
    [1.0, 1.0]
}

impl RandomFieldParams {
    /// Canonical parameters of the benchmark maps: elongated ridges carve
    /// blocked walls that force real detours, over a rolling low-risk
    /// background, at the 2000 m scale of the evaluation scenarios.
    pub fn bench_default(seed: u64) -> RandomFieldParams {
        RandomFieldParams {
            seed,
            bumps: 22,
            amplitude: [0.2, 1.3],
            sigma: [50.0, 130.0],
            elongation: [2.0, 5.0],
        }
    }

    pub fn provenance(&self) -> String {
        format!(
            "random field: seed={} bumps={} amplitude=[{},{}] sigma=[{},{}] elongation=[{},{}]",
            self.seed,
            self.bumps,
            self.amplitude[0],
            self.amplitude[1],
            self.sigma[0],
            self.sigma[1],
            self.elongation[0],
            self.elongation[1]
        )
    }
}

struct Bump {
    center: Point2,
    amp: f64,
    cos: f64,
    sin: f64,
    inv2_major: f64,
    inv2_minor: f64,
}

/// Smooth random field over a square extent; deterministic in the seed.
pub fn random_field(
    params: &RandomFieldParams,
    extent: f64,
    cell_size: f64,
) -> Result<FieldRaster, MapError> {
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut bumps = Vec::with_capacity(params.bumps);
    for _ in 0..params.bumps {
        let cx = rng.gen_range(0.0..extent);
        let cy = rng.gen_range(0.0..extent);
        let amp = rng.gen_range(params.amplitude[0]..params.amplitude[1]);
        let sigma = rng.gen_range(params.sigma[0]..params.sigma[1]);
        let stretch = rng.gen_range(params.elongation[0]..=params.elongation[1]);
        let angle = rng.gen_range(0.0..std::f64::consts::PI);
        let major = sigma * stretch;
        bumps.push(Bump {
            center: Point2::new(cx, cy),
            amp,
            cos: angle.cos(),
            sin: angle.sin(),
            inv2_major: 1.0 / (2.0 * major * major),
            inv2_minor: 1.0 / (2.0 * sigma * sigma),
        });
    }
    let cells = (extent / cell_size).round() as usize;
    let raster = rasterize(
        |p: Point2| {
            bumps
                .iter()
                .map(|b| {
                    let dx = p.x - b.center.x;
                    let dy = p.y - b.center.y;
                    let along = dx * b.cos + dy * b.sin;
                    let across = -dx * b.sin + dy * b.cos;
                    b.amp * (-(along * along * b.inv2_major + across * across * b.inv2_minor)).exp()
                })
                .sum()
        },
        Point2::new(0.0, 0.0),
        cell_size,
        cells,
        cells,
    )
    .map_err(|e| MapError::InvalidMap(e.to_string()))?;
    Ok(raster)
}

//! Headered-CSV and PGM serialization shared by rasters and maps.
//!
//! Grid files start with optional `#` provenance comments, then a header
//! naming the geometry fields, the geometry values, and the row-major grid
//! rows. Floats are written with Rust's shortest round-trip formatting, so
//! files are bit-faithful on reload.

use std::io::Write;
use std::path::Path;

use thiserror::Error;

use crate::geom::Point2;
use crate::riskfield::FieldRaster;

pub const GRID_HEADER: &str = "origin_x,origin_y,cell_size,width,height";

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {msg}")]
    Format { path: String, line: usize, msg: String },
}

impl IoError {
    pub fn file(path: &Path, source: std::io::Error) -> Self {
        IoError::File { path: path.display().to_string(), source }
    }

    pub fn format(path: &Path, line: usize, msg: impl Into<String>) -> Self {
        IoError::Format { path: path.display().to_string(), line, msg: msg.into() }
    }
}

pub struct GridGeometry {
    pub origin: Point2,
    pub cell_size: f64,
    pub width: usize,
    pub height: usize,
}

/// Write comments + geometry header + one or more row-major value blocks.
/// Each block may be preceded by a marker line (e.g. `blocked`).
pub fn write_grid_csv(
    path: &Path,
    comments: &[String],
    geom: &GridGeometry,
    blocks: &[(Option<&str>, &dyn Fn(usize, usize) -> String)],
) -> Result<(), IoError> {
    let mut out = String::new();
    for c in comments {
        out.push_str("# ");
        out.push_str(c);
        out.push('\n');
    }
    out.push_str(GRID_HEADER);
    out.push('\n');
    out.push_str(&format!(
        "{},{},{},{},{}\n",
        geom.origin.x, geom.origin.y, geom.cell_size, geom.width, geom.height
    ));
    for (marker, cell) in blocks {
        if let Some(m) = marker {
            out.push_str(m);
            out.push('\n');
        }
        for row in 0..geom.height {
            let mut line = String::new();
            for col in 0..geom.width {
                if col > 0 {
                    line.push(',');
                }
                line.push_str(&cell(col, row));
            }
            out.push_str(&line);
            out.push('\n');
        }
    }
    std::fs::write(path, out).map_err(|e| IoError::file(path, e))
}

pub struct GridCsv {
    pub geometry: GridGeometry,
    /// Extra value blocks keyed by marker line; the unnamed first block is `""`.
    pub blocks: Vec<(String, Vec<Vec<String>>)>,
}

pub fn read_grid_csv(path: &Path) -> Result<GridCsv, IoError> {
    let text = std::fs::read_to_string(path).map_err(|e| IoError::file(path, e))?;
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim_start().starts_with('#') && !l.trim().is_empty());

    let (n, header) = lines
        .next()
        .ok_or_else(|| IoError::format(path, 0, "empty grid file"))?;
    if header.trim() != GRID_HEADER {
        return Err(IoError::format(path, n + 1, format!("expected header `{GRID_HEADER}`")));
    }
    let (n, geom_line) = lines
        .next()
        .ok_or_else(|| IoError::format(path, n + 1, "missing geometry line"))?;
    let fields: Vec<&str> = geom_line.trim().split(',').collect();
    if fields.len() != 5 {
        return Err(IoError::format(path, n + 1, "geometry line needs 5 fields"));
    }
    let parse_f = |s: &str, what: &str| {
        s.trim()
            .parse::<f64>()
            .map_err(|_| IoError::format(path, n + 1, format!("bad {what}: `{s}`")))
    };
    let parse_u = |s: &str, what: &str| {
        s.trim()
            .parse::<usize>()
            .map_err(|_| IoError::format(path, n + 1, format!("bad {what}: `{s}`")))
    };
    let geometry = GridGeometry {
        origin: Point2::new(parse_f(fields[0], "origin_x")?, parse_f(fields[1], "origin_y")?),
        cell_size: parse_f(fields[2], "cell_size")?,
        width: parse_u(fields[3], "width")?,
        height: parse_u(fields[4], "height")?,
    };

    let mut blocks: Vec<(String, Vec<Vec<String>>)> = vec![(String::new(), Vec::new())];
    for (n, line) in lines {
        let trimmed = line.trim();
        if trimmed.contains(',') || geometry.width == 1 {
            let row: Vec<String> = trimmed.split(',').map(|s| s.trim().to_string()).collect();
            if row.len() != geometry.width {
                return Err(IoError::format(
                    path,
                    n + 1,
                    format!("row has {} cells, expected {}", row.len(), geometry.width),
                ));
            }
            blocks.last_mut().unwrap().1.push(row);
        } else {
            blocks.push((trimmed.to_string(), Vec::new()));
        }
    }
    for (marker, rows) in &blocks {
        if rows.len() != geometry.height {
            return Err(IoError::format(
                path,
                0,
                format!(
                    "block `{marker}` has {} rows, expected {}",
                    rows.len(),
                    geometry.height
                ),
            ));
        }
    }
    Ok(GridCsv { geometry, blocks })
}

impl FieldRaster {
    pub fn write_csv(&self, path: &Path, comments: &[String]) -> Result<(), IoError> {
        let geom = GridGeometry {
            origin: self.origin,
            cell_size: self.cell_size,
            width: self.width,
            height: self.height,
        };
        let values = |col: usize, row: usize| self.value(col, row).to_string();
        write_grid_csv(path, comments, &geom, &[(None, &values)])
    }

    pub fn read_csv(path: &Path) -> Result<FieldRaster, IoError> {
        let grid = read_grid_csv(path)?;
        let rows = &grid.blocks[0].1;
        let mut values = Vec::with_capacity(grid.geometry.width * grid.geometry.height);
        for (r, row) in rows.iter().enumerate() {
            for (c, cell) in row.iter().enumerate() {
                let v: f64 = cell.parse().map_err(|_| {
                    IoError::format(path, 0, format!("bad value at row {r} col {c}: `{cell}`"))
                })?;
                if !v.is_finite() || v < 0.0 {
                    return Err(IoError::format(path, 0, format!("field value must be finite and >= 0, got {v}")));
                }
                values.push(v);
            }
        }
        Ok(FieldRaster {
            origin: grid.geometry.origin,
            cell_size: grid.geometry.cell_size,
            width: grid.geometry.width,
            height: grid.geometry.height,
            values,
        })
    }

    /// 8-bit grayscale PGM, values mapped linearly to [0, 255] by the raster max.
    pub fn write_pgm(&self, path: &Path) -> Result<(), IoError> {
        let max = self.max_value();
        let file = std::fs::File::create(path).map_err(|e| IoError::file(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        let mut emit = || -> std::io::Result<()> {
            writeln!(w, "P2")?;
            writeln!(w, "{} {}", self.width, self.height)?;
            writeln!(w, "255")?;
            // image row 0 at the top: world y grows upward, so flip rows
            for row in (0..self.height).rev() {
                let mut line = String::new();
                for col in 0..self.width {
                    let v = self.value(col, row);
                    let g = if max > 0.0 { (v / max * 255.0).round() as u32 } else { 0 };
                    if col > 0 {
                        line.push(' ');
                    }
                    line.push_str(&g.min(255).to_string());
                }
                writeln!(w, "{line}")?;
            }
            Ok(())
        };
        emit().map_err(|e| IoError::file(path, e))
    }
}

/// Write a polyline as `x_m,y_m` CSV.
pub fn write_path_csv(path: &Path, comments: &[String], points: &[Point2]) -> Result<(), IoError> {
    let mut out = String::new();
    for c in comments {
        out.push_str("# ");
        out.push_str(c);
        out.push('\n');
    }
    out.push_str("x_m,y_m\n");
    for p in points {
        out.push_str(&format!("{},{}\n", p.x, p.y));
    }
    std::fs::write(path, out).map_err(|e| IoError::file(path, e))
}

pub fn read_path_csv(path: &Path) -> Result<Vec<Point2>, IoError> {
    let text = std::fs::read_to_string(path).map_err(|e| IoError::file(path, e))?;
    let mut points = Vec::new();
    let mut saw_header = false;
    for (n, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        if !saw_header {
            if !trimmed.starts_with("x_m") {
                return Err(IoError::format(path, n + 1, "expected `x_m,y_m` header"));
            }
            saw_header = true;
            continue;
        }
        let mut parts = trimmed.split(',');
        let (x, y) = match (parts.next(), parts.next()) {
            (Some(x), Some(y)) => (x, y),
            _ => return Err(IoError::format(path, n + 1, "expected two comma-separated values")),
        };
        let parse = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| IoError::format(path, n + 1, format!("bad coordinate `{s}`")))
        };
        points.push(Point2::new(parse(x)?, parse(y)?));
    }
    if !saw_header {
        return Err(IoError::format(path, 0, "missing `x_m,y_m` header"));
    }
    Ok(points)
}

//! SVG and PPM rendering of maps, paths, and episode traces.

use std::io::Write;
use std::path::Path;

use crate::geom::Point2;
use crate::io::IoError;
use crate::sim::EpisodeLog;
use crate::uncmap::UncertaintyMap;

/// A polyline overlay with an RGB color.
pub struct Overlay {
    pub points: Vec<Point2>,
    pub color: (u8, u8, u8),
    pub label: String,
}

fn shade(u: f64) -> (u8, u8, u8) {
    // white (safe) to dark red (risky)
    let v = u.clamp(0.0, 1.0);
    let r = 255.0 - 80.0 * v;
    let g = 255.0 * (1.0 - v);
    let b = 255.0 * (1.0 - v);
    (r as u8, g as u8, b as u8)
}

const BLOCKED_COLOR: (u8, u8, u8) = (96, 16, 16);

/// Binary PPM of the map with overlays burned in. `pixels_per_cell` scales
/// the image up for small maps.
pub fn render_ppm(
    map: &UncertaintyMap,
    overlays: &[Overlay],
    pixels_per_cell: usize,
    path: &Path,
) -> Result<(), IoError> {
    let ppc = pixels_per_cell.max(1);
    let width = map.width * ppc;
    let height = map.height * ppc;
    let mut pixels = vec![0u8; width * height * 3];
    for row in 0..map.height {
        for col in 0..map.width {
            let color = if map.is_blocked(col, row) { BLOCKED_COLOR } else { shade(map.u_at(col, row)) };
            for py in 0..ppc {
                // image rows top-down, world rows bottom-up
                let y = (map.height - 1 - row) * ppc + py;
                for px in 0..ppc {
                    let x = col * ppc + px;
                    let at = (y * width + x) * 3;
                    pixels[at] = color.0;
                    pixels[at + 1] = color.1;
                    pixels[at + 2] = color.2;
                }
            }
        }
    }
    let scale = ppc as f64 / map.cell_size;
    for overlay in overlays {
        for pair in overlay.points.windows(2) {
            let steps = (pair[0].distance(pair[1]) * scale * 2.0).ceil() as usize + 1;
            for k in 0..=steps {
                let t = k as f64 / steps as f64;
                let x = pair[0].x + t * (pair[1].x - pair[0].x);
                let y = pair[0].y + t * (pair[1].y - pair[0].y);
                let px = ((x - map.origin.x) * scale) as isize;
                let py = height as isize - 1 - ((y - map.origin.y) * scale) as isize;
                if px >= 0 && py >= 0 && (px as usize) < width && (py as usize) < height {
                    let at = (py as usize * width + px as usize) * 3;
                    pixels[at] = overlay.color.0;
                    pixels[at + 1] = overlay.color.1;
                    pixels[at + 2] = overlay.color.2;
                }
            }
        }
    }
    let file = std::fs::File::create(path).map_err(|e| IoError::file(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    (|| -> std::io::Result<()> {
        writeln!(w, "P6")?;
        writeln!(w, "{width} {height}")?;
        writeln!(w, "255")?;
        w.write_all(&pixels)
    })()
    .map_err(|e| IoError::file(path, e))
}

/// SVG of the map (downsampled to at most `max_cells` per side) with vector
/// overlays. World y points up; the viewBox flips it.
pub fn render_svg(
    map: Option<&UncertaintyMap>,
    extent: (f64, f64),
    overlays: &[Overlay],
    markers: &[(Point2, &str, String)],
    path: &Path,
) -> Result<(), IoError> {
    let (w, h) = extent;
    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {w} {h}\" width=\"800\" height=\"{:.0}\">\n",
        800.0 * h / w
    ));
    svg.push_str(&format!("<g transform=\"translate(0,{h}) scale(1,-1)\">\n"));
    svg.push_str(&format!("<rect x=\"0\" y=\"0\" width=\"{w}\" height=\"{h}\" fill=\"#ffffff\"/>\n"));

    if let Some(map) = map {
        let max_cells = 120usize;
        let factor = (map.width.max(map.height)).div_ceil(max_cells).max(1);
        let shown = if factor > 1 {
            crate::uncmap::mixed_pool(map, factor, 0.5).map_err(|e| IoError::Format {
                path: path.display().to_string(),
                line: 0,
                msg: e.to_string(),
            })?
        } else {
            map.clone()
        };
        let cell = shown.cell_size;
        for row in 0..shown.height {
            for col in 0..shown.width {
                let (r, g, b) = if shown.is_blocked(col, row) {
                    BLOCKED_COLOR
                } else {
                    shade(shown.u_at(col, row))
                };
                if (r, g, b) == (255, 255, 255) {
                    continue;
                }
                svg.push_str(&format!(
                    "<rect x=\"{:.1}\" y=\"{:.1}\" width=\"{cell:.1}\" height=\"{cell:.1}\" fill=\"rgb({r},{g},{b})\"/>\n",
                    shown.origin.x + col as f64 * cell,
                    shown.origin.y + row as f64 * cell,
                ));
            }
        }
    }

    for overlay in overlays {
        if overlay.points.is_empty() {
            continue;
        }
        let pts: Vec<String> = overlay.points.iter().map(|p| format!("{:.2},{:.2}", p.x, p.y)).collect();
        svg.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"rgb({},{},{})\" stroke-width=\"{:.2}\"/>\n",
            pts.join(" "),
            overlay.color.0,
            overlay.color.1,
            overlay.color.2,
            (w / 400.0).max(0.5),
        ));
    }
    for (p, color, label) in markers {
        svg.push_str(&format!(
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"{:.2}\" fill=\"{color}\"><title>{label}</title></circle>\n",
            p.x,
            p.y,
            (w / 200.0).max(1.0),
        ));
    }
    svg.push_str("</g>\n</svg>\n");
    std::fs::write(path, svg).map_err(|e| IoError::file(path, e))
}

/// Render an episode: an overview SVG with the reference and the executed
/// trace, plus periodic PPM frames showing the vehicle and obstacles.
pub fn render_episode(
    log: &EpisodeLog,
    map: &UncertaintyMap,
    out_dir: &Path,
    frame_every: usize,
) -> Result<(), IoError> {
    std::fs::create_dir_all(out_dir).map_err(|e| IoError::file(out_dir, e))?;
    let executed: Vec<Point2> = log
        .records
        .iter()
        .flat_map(|r| r.executed.iter().map(|e| Point2::new(e.point.x, e.point.y)))
        .collect();
    let reference: Vec<Point2> = (0..log.reference.len()).map(|i| log.reference.point(i)).collect();
    let overlays = [
        Overlay { points: log.global_path.clone(), color: (120, 120, 255), label: "global".into() },
        Overlay { points: reference, color: (40, 40, 160), label: "reference".into() },
        Overlay { points: executed, color: (0, 140, 0), label: "executed".into() },
    ];
    let extent = (
        map.origin.x + map.width as f64 * map.cell_size,
        map.origin.y + map.height as f64 * map.cell_size,
    );
    render_svg(Some(map), extent, &overlays, &[], &out_dir.join("episode.svg"))?;

    let ppc = (512 / map.width.max(map.height)).clamp(1, 16);
    for (i, record) in log.records.iter().enumerate() {
        if frame_every == 0 || i % frame_every != 0 {
            continue;
        }
        let mut frame_overlays = vec![
            Overlay { points: overlays[1].points.clone(), color: (40, 40, 160), label: "reference".into() },
            Overlay {
                points: log.records[..=i]
                    .iter()
                    .flat_map(|r| r.executed.iter().map(|e| Point2::new(e.point.x, e.point.y)))
                    .collect(),
                color: (0, 140, 0),
                label: "trace".into(),
            },
        ];
        for obstacle in &record.obstacles {
            let c = obstacle.position;
            let r = map.cell_size * 0.4;
            frame_overlays.push(Overlay {
                points: (0..=12)
                    .map(|k| {
                        let a = k as f64 / 12.0 * std::f64::consts::TAU;
                        Point2::new(c.x + r * a.cos(), c.y + r * a.sin())
                    })
                    .collect(),
                color: (230, 120, 0),
                label: "obstacle".into(),
            });
        }
        render_ppm(map, &frame_overlays, ppc, &out_dir.join(format!("frame_{i:05}.ppm")))?;
    }
    Ok(())
}

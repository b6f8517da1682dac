//! Planner comparison harness: per-pair uncertainty, timing, and expansion
//! counts for the hierarchical planner and the two single-layer baselines,
//! with the improvement bookkeeping of the evaluation tables.

use serde::Serialize;

use crate::geom::Point2;
use crate::global::{coarse2fine_plan, improved_astar, traditional_astar, SearchStats};
use crate::uncmap::MapPyramid;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Algo {
    Coarse2fine,
    ImprovedAstar,
    TraditionalAstar,
}

impl Algo {
    pub const ALL: [Algo; 3] = [Algo::TraditionalAstar, Algo::ImprovedAstar, Algo::Coarse2fine];

    pub fn parse(name: &str) -> Option<Algo> {
        match name {
            "c2f" => Some(Algo::Coarse2fine),
            "iastar" => Some(Algo::ImprovedAstar),
            "tastar" => Some(Algo::TraditionalAstar),
            _ => None,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Algo::Coarse2fine => "Ours",
            Algo::ImprovedAstar => "I-A*",
            Algo::TraditionalAstar => "T-A*",
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct AlgoOutcome {
    pub algo: Algo,
    pub mean_uncertainty: f64,
    pub wall_time_s: f64,
    pub expanded: u64,
    pub length_m: f64,
    pub fallback: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct BenchRow {
    pub start: Point2,
    pub goal: Point2,
    /// Outcomes in the order requested; a failed planner is recorded as an
    /// error string and excludes the row from the aggregates.
    pub outcomes: Vec<AlgoOutcome>,
    pub errors: Vec<String>,
    /// (I-A* - Ours) / I-A* on mean uncertainty, when both ran.
    pub improvement: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct AlgoAggregate {
    pub algo: Algo,
    pub mean_uncertainty: f64,
    pub mean_wall_time_s: f64,
    pub mean_expanded: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    /// Averages over rows where every requested algorithm succeeded.
    pub aggregates: Vec<AlgoAggregate>,
    /// Mean of the per-row improvements (the table convention).
    pub improvement_row_mean: Option<f64>,
    /// Improvement of the uncertainty averages (the ratio convention).
    pub improvement_of_averages: Option<f64>,
    pub excluded_rows: usize,
}

fn run_algo(pyramid: &MapPyramid, algo: Algo, start: Point2, goal: Point2) -> Result<(Algo, SearchStats), String> {
    let result = match algo {
        Algo::Coarse2fine => coarse2fine_plan(pyramid, start, goal),
        Algo::ImprovedAstar => improved_astar(pyramid.fine(), start, goal),
        Algo::TraditionalAstar => traditional_astar(pyramid.fine(), start, goal),
    };
    match result {
        Ok((_, stats)) => Ok((algo, stats)),
        Err(e) => Err(format!("{}: {e}", algo.label())),
    }
}

/// Run every algorithm on every start/goal pair. Rows run serially so the
/// wall-time comparison stays honest; planners may still parallelize
/// internally per their own contracts.
pub fn run_global_bench(pyramid: &MapPyramid, pairs: &[(Point2, Point2)], algos: &[Algo]) -> BenchReport {
    let mut rows = Vec::with_capacity(pairs.len());
    for &(start, goal) in pairs {
        let mut outcomes = Vec::new();
        let mut errors = Vec::new();
        for &algo in algos {
            match run_algo(pyramid, algo, start, goal) {
                Ok((algo, stats)) => outcomes.push(AlgoOutcome {
                    algo,
                    mean_uncertainty: stats.mean_uncertainty,
                    wall_time_s: stats.wall_time_s,
                    expanded: stats.expanded,
                    length_m: stats.length_m,
                    fallback: stats.fallback,
                }),
                Err(e) => errors.push(e),
            }
        }
        let find = |algo: Algo| outcomes.iter().find(|o| o.algo == algo);
        let improvement = match (find(Algo::ImprovedAstar), find(Algo::Coarse2fine)) {
            (Some(ia), Some(ours)) if ia.mean_uncertainty > 0.0 => {
                Some((ia.mean_uncertainty - ours.mean_uncertainty) / ia.mean_uncertainty)
            }
            _ => None,
        };
        rows.push(BenchRow { start, goal, outcomes, errors, improvement });
    }

    let complete: Vec<&BenchRow> = rows.iter().filter(|r| r.errors.is_empty()).collect();
    let excluded_rows = rows.len() - complete.len();
    let mut aggregates = Vec::new();
    for &algo in algos {
        let picked: Vec<&AlgoOutcome> = complete
            .iter()
            .filter_map(|r| r.outcomes.iter().find(|o| o.algo == algo))
            .collect();
        if picked.is_empty() {
            continue;
        }
        let n = picked.len() as f64;
        aggregates.push(AlgoAggregate {
            algo,
            mean_uncertainty: picked.iter().map(|o| o.mean_uncertainty).sum::<f64>() / n,
            mean_wall_time_s: picked.iter().map(|o| o.wall_time_s).sum::<f64>() / n,
            mean_expanded: picked.iter().map(|o| o.expanded as f64).sum::<f64>() / n,
        });
    }

    let improvements: Vec<f64> = complete.iter().filter_map(|r| r.improvement).collect();
    let improvement_row_mean = if improvements.is_empty() {
        None
    } else {
        Some(improvements.iter().sum::<f64>() / improvements.len() as f64)
    };
    let agg = |algo: Algo| aggregates.iter().find(|a| a.algo == algo);
    let improvement_of_averages = match (agg(Algo::ImprovedAstar), agg(Algo::Coarse2fine)) {
        (Some(ia), Some(ours)) if ia.mean_uncertainty > 0.0 => {
            Some((ia.mean_uncertainty - ours.mean_uncertainty) / ia.mean_uncertainty)
        }
        _ => None,
    };

    BenchReport { rows, aggregates, improvement_row_mean, improvement_of_averages, excluded_rows }
}

/// The ten start/goal pairs of the evaluation protocol, in meters.
pub fn default_pairs() -> Vec<(Point2, Point2)> {
    [
        ((50.0, 60.0), (1950.0, 1950.0)),
        ((1000.0, 150.0), (500.0, 1850.0)),
        ((1950.0, 50.0), (500.0, 1250.0)),
        ((1750.0, 1950.0), (230.0, 340.0)),
        ((50.0, 80.0), (1850.0, 20.0)),
        ((210.0, 560.0), (1050.0, 1940.0)),
        ((1340.0, 250.0), (1940.0, 1820.0)),
        ((1030.0, 930.0), (1260.0, 170.0)),
        ((160.0, 1340.0), (1390.0, 570.0)),
        ((260.0, 530.0), (1730.0, 840.0)),
    ]
    .into_iter()
    .map(|((sx, sy), (gx, gy))| (Point2::new(sx, sy), Point2::new(gx, gy)))
    .collect()
}

impl BenchReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("start_x,start_y,goal_x,goal_y,algo,mean_uncertainty,wall_time_s,expanded,length_m,improvement\n");
        for row in &self.rows {
            for o in &row.outcomes {
                out.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{},{}\n",
                    row.start.x,
                    row.start.y,
                    row.goal.x,
                    row.goal.y,
                    o.algo.label(),
                    o.mean_uncertainty,
                    o.wall_time_s,
                    o.expanded,
                    o.length_m,
                    row.improvement.map(|v| v.to_string()).unwrap_or_default(),
                ));
            }
        }
        out
    }

    pub fn to_markdown(&self) -> String {
        let mut out = String::new();
        out.push_str("| Start node | Goal node | T-A* | I-A* | Ours | Improvement |\n");
        out.push_str("|---|---|---|---|---|---|\n");
        let cell = |row: &BenchRow, algo: Algo, f: &dyn Fn(&AlgoOutcome) -> String| {
            row.outcomes.iter().find(|o| o.algo == algo).map(f).unwrap_or_else(|| "failed".into())
        };
        for row in &self.rows {
            out.push_str(&format!(
                "| ({:.0},{:.0}) | ({:.0},{:.0}) | {} | {} | {} | {} |\n",
                row.start.x,
                row.start.y,
                row.goal.x,
                row.goal.y,
                cell(row, Algo::TraditionalAstar, &|o| format!("{:.4}", o.mean_uncertainty)),
                cell(row, Algo::ImprovedAstar, &|o| format!("{:.4}", o.mean_uncertainty)),
                cell(row, Algo::Coarse2fine, &|o| format!("{:.4}", o.mean_uncertainty)),
                row.improvement.map(|v| format!("{:.2}%", v * 100.0)).unwrap_or_else(|| "-".into()),
            ));
        }
        let agg = |algo: Algo| {
            self.aggregates
                .iter()
                .find(|a| a.algo == algo)
                .map(|a| format!("{:.4}", a.mean_uncertainty))
                .unwrap_or_else(|| "-".into())
        };
        out.push_str(&format!(
            "| Average | | {} | {} | {} | {} |\n",
            agg(Algo::TraditionalAstar),
            agg(Algo::ImprovedAstar),
            agg(Algo::Coarse2fine),
            self.improvement_row_mean.map(|v| format!("{:.2}%", v * 100.0)).unwrap_or_else(|| "-".into()),
        ));

        out.push_str("\n| Start node | Goal node | T-A* time (s) | I-A* time (s) | Ours time (s) |\n");
        out.push_str("|---|---|---|---|---|\n");
        for row in &self.rows {
            out.push_str(&format!(
                "| ({:.0},{:.0}) | ({:.0},{:.0}) | {} | {} | {} |\n",
                row.start.x,
                row.start.y,
                row.goal.x,
                row.goal.y,
                cell(row, Algo::TraditionalAstar, &|o| format!("{:.4}", o.wall_time_s)),
                cell(row, Algo::ImprovedAstar, &|o| format!("{:.4}", o.wall_time_s)),
                cell(row, Algo::Coarse2fine, &|o| format!("{:.4}", o.wall_time_s)),
            ));
        }
        let aggt = |algo: Algo| {
            self.aggregates
                .iter()
                .find(|a| a.algo == algo)
                .map(|a| format!("{:.4}", a.mean_wall_time_s))
                .unwrap_or_else(|| "-".into())
        };
        out.push_str(&format!(
            "| Average | | {} | {} | {} |\n",
            aggt(Algo::TraditionalAstar),
            aggt(Algo::ImprovedAstar),
            aggt(Algo::Coarse2fine),
        ));
        if let Some(ratio) = self.improvement_of_averages {
            out.push_str(&format!(
                "\nImprovement of the uncertainty averages: {:.2}%; mean of per-row improvements: {}.\n",
                ratio * 100.0,
                self.improvement_row_mean.map(|v| format!("{:.2}%", v * 100.0)).unwrap_or_else(|| "-".into()),
            ));
        }
        if self.excluded_rows > 0 {
            out.push_str(&format!("\n{} row(s) excluded from the averages due to planner failures.\n", self.excluded_rows));
        }
        out
    }
}

/// Parse a pairs CSV: `start_x,start_y,goal_x,goal_y` per row.
pub fn read_pairs_csv(path: &std::path::Path) -> Result<Vec<(Point2, Point2)>, crate::io::IoError> {
    let text = std::fs::read_to_string(path).map_err(|e| crate::io::IoError::file(path, e))?;
    let mut pairs = Vec::new();
    let mut saw_header = false;
    for (n, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        if !saw_header && trimmed.starts_with("start_x") {
            saw_header = true;
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').collect();
        if fields.len() != 4 {
            return Err(crate::io::IoError::format(path, n + 1, "expected start_x,start_y,goal_x,goal_y"));
        }
        let mut vals = [0.0; 4];
        for (v, f) in vals.iter_mut().zip(&fields) {
            *v = f
                .trim()
                .parse::<f64>()
                .map_err(|_| crate::io::IoError::format(path, n + 1, format!("bad number `{f}`")))?;
        }
        pairs.push((Point2::new(vals[0], vals[1]), Point2::new(vals[2], vals[3])));
    }
    Ok(pairs)
}

//! `planner`: command-line front end for the off-road planning toolkit.
//!
//! Subcommands mirror the pipeline stages: `map` builds uncertainty-map
//! pyramids, `global` plans on them, `smooth` runs the QP smoother,
//! `local` executes one sampling step, `sim` closes the loop, `bench`
//! compares the planners, and `render` draws maps and paths.
//!
//! Exit codes: 0 on success, 1 on domain errors, 2 on usage errors.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use offroad_planner::bench::{self, Algo};
use offroad_planner::config::{configured_threads, PlannerConfig, KMH_TO_MPS};
use offroad_planner::frenet::{FrenetState, ReferencePath};
use offroad_planner::geom::Point2;
use offroad_planner::global::{coarse2fine_plan, improved_astar, traditional_astar};
use offroad_planner::io::{read_path_csv, write_path_csv};
use offroad_planner::local::{write_trajectory_csv, LocalPlanner};
use offroad_planner::render::{render_episode, render_ppm, render_svg, Overlay};
use offroad_planner::riskfield::rasterize;
use offroad_planner::scene::RiskScene;
use offroad_planner::sim::{run_episode, Scenario};
use offroad_planner::smoother::rolling_smooth;
use offroad_planner::uncmap::{build_pyramid, random_field, MapPyramid, RandomFieldParams, UncertaintyMap};

#[derive(Parser)]
#[command(name = "planner", version, about = "Risk-aware off-road motion planning toolkit")]
struct Cli {
    /// Layered TOML configuration; command-line flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Rasterize a scene's static risk field and build the map pyramid.
    Map(MapArgs),
    /// Plan a global path on a map directory.
    Global(GlobalArgs),
    /// Smooth a path CSV with the rolling QP optimizer.
    Smooth(SmoothArgs),
    /// Run one local-planning step against a reference path.
    Local(LocalArgs),
    /// Run a closed-loop scenario.
    Sim(SimArgs),
    /// Compare the planners over start/goal pairs.
    Bench(BenchArgs),
    /// Draw a map with optional path overlays.
    Render(RenderArgs),
}

#[derive(Args)]
struct MapArgs {
    /// Scene JSON file (mutually exclusive with --random-seed).
    #[arg(long)]
    scene: Option<PathBuf>,
    /// Generate a seeded random uncertainty field instead of a scene.
    #[arg(long)]
    random_seed: Option<u64>,
    /// World extent of the random field in meters.
    #[arg(long, default_value_t = 2000.0)]
    extent: f64,
    /// Pyramid strides in meters, finest first.
    #[arg(long, value_delimiter = ',')]
    strides: Option<Vec<f64>>,
    /// Mixed-pooling blend (1 = max, 0 = mean).
    #[arg(long)]
    lambda: Option<f64>,
    /// Field value regarded as non-accessible.
    #[arg(long)]
    block_threshold: Option<f64>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GlobalArgs {
    /// Map directory written by `planner map`.
    #[arg(long)]
    map: PathBuf,
    /// Start position "x,y" in meters.
    #[arg(long)]
    start: String,
    /// Goal position "x,y" in meters.
    #[arg(long)]
    goal: String,
    /// Planner: c2f, iastar, or tastar.
    #[arg(long, default_value = "c2f")]
    algo: String,
    /// Output path CSV; stats go to the same stem with .stats.json.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SmoothArgs {
    /// Input path CSV.
    #[arg(long = "in")]
    input: PathBuf,
    /// Output path CSV.
    #[arg(long)]
    out: PathBuf,
    /// Total allowed deviation per coordinate (meters).
    #[arg(long = "s-s")]
    s_s: Option<f64>,
    /// Window size in nodes.
    #[arg(long = "no")]
    n_o: Option<usize>,
    /// Trailing nodes pinned for stitching.
    #[arg(long = "nb")]
    n_b: Option<usize>,
}

#[derive(Args)]
struct LocalArgs {
    /// Reference path CSV (e.g. the smoothed global path).
    #[arg(long = "ref")]
    reference: PathBuf,
    /// Scene JSON with the obstacles to avoid.
    #[arg(long)]
    scene: PathBuf,
    /// Optional spec JSON overriding sampling/constraints/cost sections.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Arclength of the current state on the reference.
    #[arg(long, default_value_t = 0.0)]
    start_s: f64,
    /// Current speed in km/h (defaults to the target speed).
    #[arg(long)]
    speed_kmh: Option<f64>,
    /// Also write every candidate's summary row.
    #[arg(long)]
    dump_candidates: bool,
}

#[derive(Args)]
struct SimArgs {
    /// Scenario JSON file.
    #[arg(long)]
    scenario: PathBuf,
    /// Episode log output (JSON lines).
    #[arg(long)]
    log: Option<PathBuf>,
    /// Directory for SVG/PPM renders.
    #[arg(long)]
    render: Option<PathBuf>,
    /// Render a PPM frame every N replan ticks.
    #[arg(long, default_value_t = 20)]
    frame_every: usize,
}

#[derive(Args)]
struct BenchArgs {
    /// Map directory written by `planner map`.
    #[arg(long)]
    map: PathBuf,
    /// Pairs CSV (start_x,start_y,goal_x,goal_y); defaults to the built-in
    /// ten evaluation pairs.
    #[arg(long)]
    pairs: Option<PathBuf>,
    /// Comma-separated planners to run.
    #[arg(long, value_delimiter = ',', default_values_t = ["tastar".to_string(), "iastar".to_string(), "c2f".to_string()])]
    algos: Vec<String>,
    /// Output stem; writes <stem>.json, <stem>.csv, and <stem>.md.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RenderArgs {
    /// Uncertainty-map CSV.
    #[arg(long)]
    map: PathBuf,
    /// Path CSVs to overlay.
    #[arg(long = "path")]
    paths: Vec<PathBuf>,
    /// Output file; the extension picks SVG or PPM.
    #[arg(long)]
    out: PathBuf,
}

fn main() {
    let cli = Cli::parse();
    if let Some(n) = configured_threads() {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match run(cli) {
        Ok(()) => {}
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::exit(1);
        }
    }
}

fn load_config(path: &Option<PathBuf>) -> Result<PlannerConfig> {
    match path {
        Some(p) => Ok(PlannerConfig::load(p)?),
        None => Ok(PlannerConfig::default()),
    }
}

fn parse_point(text: &str) -> Result<Point2> {
    let parts: Vec<&str> = text.split(',').collect();
    if parts.len() != 2 {
        bail!("expected \"x,y\", got `{text}`");
    }
    Ok(Point2::new(
        parts[0].trim().parse::<f64>().with_context(|| format!("bad x coordinate `{}`", parts[0]))?,
        parts[1].trim().parse::<f64>().with_context(|| format!("bad y coordinate `{}`", parts[1]))?,
    ))
}

fn config_comments(cfg: &PlannerConfig) -> Vec<String> {
    let mut lines = vec!["effective config:".to_string()];
    lines.extend(cfg.effective_toml().lines().map(|l| format!("  {l}")));
    lines
}

fn load_pyramid(dir: &Path) -> Result<MapPyramid> {
    let mut layers = vec![UncertaintyMap::read_csv(&dir.join("fine.csv"))
        .with_context(|| format!("loading {}/fine.csv", dir.display()))?];
    let middle = dir.join("middle.csv");
    if middle.exists() {
        layers.push(UncertaintyMap::read_csv(&middle)?);
    }
    layers.push(UncertaintyMap::read_csv(&dir.join("coarse.csv"))
        .with_context(|| format!("loading {}/coarse.csv", dir.display()))?);
    Ok(MapPyramid::from_layers(layers)?)
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = load_config(&cli.config)?;
    match cli.command {
        Command::Map(args) => {
            if let Some(strides) = args.strides {
                cfg.map.strides_m = strides;
            }
            if let Some(lambda) = args.lambda {
                cfg.map.lambda = lambda;
            }
            if let Some(threshold) = args.block_threshold {
                cfg.map.block_threshold = Some(threshold);
            }
            cfg.validate()?;
            std::fs::create_dir_all(&args.out)
                .with_context(|| format!("creating {}", args.out.display()))?;

            let mut comments = config_comments(&cfg);
            let fine_stride = cfg.map.strides_m[0];
            let (field, threshold) = match (&args.scene, args.random_seed) {
                (Some(scene_path), None) => {
                    let scene = RiskScene::load(scene_path)?;
                    let extent_x = scene.bounds[0];
                    let extent_y = scene.bounds[1];
                    let width = (extent_x / fine_stride).round().max(1.0) as usize;
                    let height = (extent_y / fine_stride).round().max(1.0) as usize;
                    let field = rasterize(
                        |p| scene.static_field_at(p),
                        Point2::new(0.0, 0.0),
                        fine_stride,
                        width,
                        height,
                    )?;
                    let threshold = cfg.map.block_threshold.or_else(|| scene.max_k_s()).unwrap_or(1.0);
                    comments.push(format!("scene: {}", scene_path.display()));
                    (field, threshold)
                }
                (None, Some(seed)) => {
                    let params = RandomFieldParams::bench_default(seed);
                    let field = random_field(&params, args.extent, fine_stride)?;
                    comments.push(params.provenance());
                    (field, cfg.map.block_threshold.unwrap_or(1.0))
                }
                _ => bail!("exactly one of --scene or --random-seed is required"),
            };
            comments.push(format!("block_threshold: {threshold}"));

            field.write_csv(&args.out.join("field.csv"), &comments)?;
            field.write_pgm(&args.out.join("field.pgm"))?;
            let pyramid = build_pyramid(&field, &cfg.map.strides_m, cfg.map.lambda, threshold, cfg.map.u_cap)?;
            let names: Vec<&str> = match pyramid.layers().len() {
                2 => vec!["fine.csv", "coarse.csv"],
                _ => vec!["fine.csv", "middle.csv", "coarse.csv"],
            };
            for (layer, name) in pyramid.layers().iter().zip(names) {
                layer.write_csv(&args.out.join(name), &comments)?;
            }
            println!(
                "map: {} layers at strides {:?} over {:.0} x {:.0} m",
                pyramid.layers().len(),
                pyramid.strides(),
                field.width as f64 * fine_stride,
                field.height as f64 * fine_stride,
            );
            Ok(())
        }
        Command::Global(args) => {
            let pyramid = load_pyramid(&args.map)?;
            let start = parse_point(&args.start)?;
            let goal = parse_point(&args.goal)?;
            let (path, stats) = match args.algo.as_str() {
                "c2f" => coarse2fine_plan(&pyramid, start, goal)?,
                "iastar" => improved_astar(pyramid.fine(), start, goal)?,
                "tastar" => traditional_astar(pyramid.fine(), start, goal)?,
                other => bail!("unknown algorithm `{other}` (expected c2f, iastar, or tastar)"),
            };
            let mut comments = config_comments(&cfg);
            comments.push(format!("algo: {}", args.algo));
            if stats.fallback {
                comments.push("note: hierarchical planner fell back to single-layer fine search".into());
                eprintln!("note: coarse layer unreachable; fell back to fine single-layer search");
            }
            write_path_csv(&args.out, &comments, &path.nodes)?;
            let stats_path = args.out.with_extension("stats.json");
            std::fs::write(&stats_path, stats.to_json())
                .with_context(|| format!("writing {}", stats_path.display()))?;
            println!(
                "{}: {} nodes, {:.1} m, mean uncertainty {:.4}, {} expansions in {:.4} s",
                args.algo,
                path.nodes.len(),
                stats.length_m,
                stats.mean_uncertainty,
                stats.expanded,
                stats.wall_time_s,
            );
            Ok(())
        }
        Command::Smooth(args) => {
            if let Some(s_s) = args.s_s {
                cfg.smooth.s_s_m = Some(s_s);
            }
            if let Some(n_o) = args.n_o {
                cfg.smooth.n_o = n_o;
            }
            if let Some(n_b) = args.n_b {
                cfg.smooth.n_b = n_b;
            }
            cfg.validate()?;
            let nodes = read_path_csv(&args.input)?;
            let smoothed = rolling_smooth(
                &nodes,
                cfg.smoothing_weights(),
                cfg.smoothing_s_s(),
                cfg.smooth.n_o,
                cfg.smooth.n_b,
                cfg.smooth.tolerance,
            )?;
            let mut comments = config_comments(&cfg);
            comments.push(format!("smoothed from: {}", args.input.display()));
            write_path_csv(&args.out, &comments, &smoothed.nodes)?;
            println!("smoothed {} nodes -> {}", smoothed.nodes.len(), args.out.display());
            Ok(())
        }
        Command::Local(args) => {
            if let Some(spec_path) = &args.spec {
                let text = std::fs::read_to_string(spec_path)
                    .with_context(|| format!("reading {}", spec_path.display()))?;
                let overrides: LocalSpecFile = serde_json::from_str(&text)
                    .with_context(|| format!("parsing {}", spec_path.display()))?;
                overrides.apply(&mut cfg);
            }
            cfg.validate()?;
            std::fs::create_dir_all(&args.out)?;
            let scene = RiskScene::load(&args.scene)?;
            let nodes = read_path_csv(&args.reference)?;
            let reference = ReferencePath::from_polyline(&nodes, cfg.reference.ds_m)?;
            let sampling = cfg.sampling_spec();
            let speed = args.speed_kmh.map(|v| v * KMH_TO_MPS).unwrap_or(sampling.v_r);
            let current = FrenetState {
                t: 0.0,
                s: args.start_s,
                s_dot: speed,
                s_ddot: 0.0,
                d: 0.0,
                d_dot: 0.0,
                d_ddot: 0.0,
            };
            let mut planner = LocalPlanner::new(sampling, cfg.constraint_spec(), cfg.cost_weights());
            planner.ay_from_sddot = cfg.local.ay_from_sddot;
            let outcome = planner.plan_step(&current, &scene.obstacles, scene.field_weights, &reference)?;
            let mut comments = config_comments(&cfg);
            comments.push(format!(
                "candidates: {} feasible of {}; rejections: {}",
                outcome.feasible_count,
                outcome.candidates.len() + outcome.rejections.out_of_domain,
                outcome.rejections
            ));
            write_trajectory_csv(&args.out.join("winner.csv"), &comments, &outcome.winner)?;
            if args.dump_candidates {
                let mut rows = String::from("index,duration,terminal_d,terminal_s,feasible,violation,cost\n");
                for cand in &outcome.candidates {
                    rows.push_str(&format!(
                        "{},{},{},{},{},{},{}\n",
                        cand.index,
                        cand.duration,
                        cand.terminal.d,
                        cand.terminal.s,
                        cand.feasible,
                        cand.violation.map(|v| format!("{:?}@{}", v.constraint, v.point)).unwrap_or_default(),
                        cand.cost.map(|c| c.total.to_string()).unwrap_or_default(),
                    ));
                }
                std::fs::write(args.out.join("candidates.csv"), rows)?;
            }
            println!(
                "winner: terminal d {:.2} m, s {:.1} m, J {:.3} ({} feasible candidates)",
                outcome.winner.terminal.d,
                outcome.winner.terminal.s,
                outcome.winner.cost.map(|c| c.total).unwrap_or(f64::NAN),
                outcome.feasible_count,
            );
            Ok(())
        }
        Command::Sim(args) => {
            cfg.validate()?;
            let scenario = Scenario::load(&args.scenario)?;
            let log = run_episode(&scenario, &cfg)?;
            let log_path = args.log.clone().unwrap_or_else(|| args.scenario.with_extension("log.jsonl"));
            let mut text = format!(
                "{}\n",
                serde_json::json!({"config_toml": cfg.effective_toml(), "scenario": args.scenario.display().to_string()})
            );
            text.push_str(&log.to_jsonl());
            std::fs::write(&log_path, text).with_context(|| format!("writing {}", log_path.display()))?;
            if let Some(render_dir) = &args.render {
                let fine_stride = cfg.map.strides_m[0];
                let width = (scenario.scene.bounds[0] / fine_stride).round().max(1.0) as usize;
                let height = (scenario.scene.bounds[1] / fine_stride).round().max(1.0) as usize;
                let field = rasterize(
                    |p| scenario.scene.static_field_at(p),
                    Point2::new(0.0, 0.0),
                    fine_stride,
                    width,
                    height,
                )?;
                let threshold =
                    cfg.map.block_threshold.or_else(|| scenario.scene.max_k_s()).unwrap_or(1.0);
                let map = offroad_planner::uncmap::normalize(&field, threshold, cfg.map.u_cap)?;
                render_episode(&log, &map, render_dir, args.frame_every)?;
            }
            println!("episode: {:?} after {} ticks -> {}", log.termination, log.records.len(), log_path.display());
            Ok(())
        }
        Command::Bench(args) => {
            let pyramid = load_pyramid(&args.map)?;
            let pairs = match &args.pairs {
                Some(p) => bench::read_pairs_csv(p)?,
                None => bench::default_pairs(),
            };
            let algos: Vec<Algo> = args
                .algos
                .iter()
                .map(|a| Algo::parse(a).ok_or_else(|| anyhow!("unknown algorithm `{a}`")))
                .collect::<Result<_>>()?;
            let report = bench::run_global_bench(&pyramid, &pairs, &algos);
            let stem = args.out.clone();
            let with_ext = |ext: &str| {
                let mut p = stem.clone();
                p.set_extension(ext);
                p
            };
            std::fs::write(with_ext("json"), report.to_json())?;
            std::fs::write(with_ext("csv"), report.to_csv())?;
            std::fs::write(with_ext("md"), report.to_markdown())?;
            println!("{}", report.to_markdown());
            Ok(())
        }
        Command::Render(args) => {
            let map = UncertaintyMap::read_csv(&args.map)?;
            let palette: [(u8, u8, u8); 4] = [(0, 120, 0), (40, 40, 200), (200, 120, 0), (120, 0, 160)];
            let mut overlays = Vec::new();
            for (i, path) in args.paths.iter().enumerate() {
                overlays.push(Overlay {
                    points: read_path_csv(path)?,
                    color: palette[i % palette.len()],
                    label: path.display().to_string(),
                });
            }
            let extent = (map.width as f64 * map.cell_size, map.height as f64 * map.cell_size);
            match args.out.extension().and_then(|e| e.to_str()) {
                Some("svg") => render_svg(Some(&map), extent, &overlays, &[], &args.out)?,
                Some("ppm") => {
                    let ppc = (1024 / map.width.max(map.height)).clamp(1, 12);
                    render_ppm(&map, &overlays, ppc, &args.out)?;
                }
                other => bail!("unsupported render extension {:?} (expected svg or ppm)", other),
            }
            println!("rendered {}", args.out.display());
            Ok(())
        }
    }
}

/// Optional spec.json for `planner local`: any of the three sections
/// overrides the corresponding config block.
#[derive(serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct LocalSpecFile {
    #[serde(default)]
    local: Option<offroad_planner::config::LocalConfig>,
    #[serde(default)]
    constraints: Option<offroad_planner::config::ConstraintConfig>,
    #[serde(default)]
    cost: Option<offroad_planner::config::CostConfig>,
}

impl LocalSpecFile {
    fn apply(self, cfg: &mut PlannerConfig) {
        if let Some(local) = self.local {
            cfg.local = local;
        }
        if let Some(constraints) = self.constraints {
            cfg.constraints = constraints;
        }
        if let Some(cost) = self.cost {
            cfg.cost = cost;
        }
    }
}

//! `amod`: run closed-loop fleet simulations, compare dispatchers and
//! generate scenarios.

use std::path::{Component, Path, PathBuf};
use std::process::ExitCode;

use amod_core::dispatch::chat::{ChatClient, HttpChatClient, ScriptedChatClient, SCRIPT_VAR};
use amod_core::road::synthetic::{self, RoadLayout};
use amod_core::road::{build_lane_graph, MapSpec};
use amod_core::sim::{
    self, generate_scenario, write_run_directory, DispatcherChoice, GenerateOptions, GroupingChoice, MetricsReport,
    ModelClients, Scenario, SimConfig,
};
use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "amod", version, about = "Mobility-on-demand fleet simulation with cooperative planning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario and write a run directory.
    Run(RunArgs),
    /// Sample a random scenario on a map.
    GenScenario(GenScenarioArgs),
    /// Write a synthetic map file.
    GenMap(GenMapArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// TOML config; flags below override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_parser = parse_dispatcher)]
    dispatcher: Option<DispatcherChoice>,
    #[arg(long, value_parser = parse_grouping)]
    grouping: Option<GroupingChoice>,
    #[arg(long, default_value = "runs/latest")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    /// Comma-separated dispatchers run on the same scenario, one
    /// subdirectory each, summarised in one table.
    #[arg(long, value_delimiter = ',', value_parser = parse_dispatcher)]
    compare: Option<Vec<DispatcherChoice>>,
    /// Save a bird's-eye view frame at every dispatch.
    #[arg(long)]
    emit_bev: bool,
}

#[derive(Args)]
struct GenScenarioArgs {
    #[arg(long)]
    map: PathBuf,
    #[arg(long)]
    vehicles: usize,
    #[arg(long)]
    requests: usize,
    #[arg(long)]
    seed: u64,
    /// Scenario file to write; the map is referenced relative to it.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 200.0)]
    t_sim: f64,
    #[arg(long, default_value_t = 10.0)]
    t_s: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum MapKind {
    Straight,
    Intersection,
    Grid,
}

#[derive(Args)]
struct GenMapArgs {
    #[arg(long, value_enum)]
    kind: MapKind,
    /// Road length, arm length or block length, m.
    #[arg(long, default_value_t = 80.0)]
    length: f64,
    /// Intersections per side of a grid.
    #[arg(long, default_value_t = 3)]
    size: usize,
    #[arg(long, default_value_t = 2)]
    lanes_per_direction: usize,
    #[arg(long)]
    out: PathBuf,
}

fn parse_dispatcher(s: &str) -> Result<DispatcherChoice, String> {
    s.parse().map_err(|e: sim::UnknownDispatcher| e.to_string())
}

fn parse_grouping(s: &str) -> Result<GroupingChoice, String> {
    s.parse().map_err(|e: sim::UnknownGrouping| e.to_string())
}

/// Errors in the inputs the user supplied, reported with exit code 2.
#[derive(Debug)]
struct UsageError(anyhow::Error);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:#}", self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage<E: Into<anyhow::Error>>(e: E) -> anyhow::Error {
    anyhow::Error::new(UsageError(e.into()))
}

fn model_client() -> anyhow::Result<Box<dyn ChatClient>> {
    if let Ok(path) = std::env::var(SCRIPT_VAR) {
        let client = ScriptedChatClient::from_file(Path::new(&path)).map_err(usage)?;
        return Ok(Box::new(client));
    }
    let client = HttpChatClient::from_env().map_err(usage)?;
    Ok(Box::new(client))
}

fn effective_config(args: &RunArgs) -> anyhow::Result<SimConfig> {
    let mut cfg = match &args.config {
        Some(path) => SimConfig::load(path).map_err(usage)?,
        None => SimConfig::default(),
    };
    if let Some(d) = args.dispatcher {
        cfg.dispatcher = d;
    }
    if let Some(g) = args.grouping {
        cfg.grouping = g;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(w) = args.workers {
        cfg.workers = w;
    }
    if args.emit_bev {
        cfg.emit_bev = true;
    }
    cfg.validate().map_err(usage)?;
    Ok(cfg)
}

fn simulate(scenario: &Scenario, graph: &amod_core::road::LaneGraph, cfg: &SimConfig, out: &Path) -> anyhow::Result<MetricsReport> {
    let clients = ModelClients {
        dispatch: (cfg.dispatcher == DispatcherChoice::Model).then(model_client).transpose()?,
        grouping: (cfg.grouping == GroupingChoice::Model).then(model_client).transpose()?,
    };
    let outcome = sim::run(scenario, graph, cfg, clients)?;
    write_run_directory(out, &outcome).with_context(|| format!("writing {}", out.display()))?;
    Ok(outcome.metrics)
}

fn cmd_run(args: RunArgs) -> anyhow::Result<()> {
    let cfg = effective_config(&args)?;
    let (scenario, graph) = Scenario::load_with_map(&args.scenario).map_err(usage)?;
    scenario.validate(&graph, cfg.snap_radius).map_err(usage)?;

    let runs: Vec<(DispatcherChoice, PathBuf)> = match &args.compare {
        Some(list) => list.iter().map(|d| (*d, args.out.join(d.name()))).collect(),
        None => vec![(cfg.dispatcher, args.out.clone())],
    };
    let mut rows = Vec::new();
    for (dispatcher, dir) in runs {
        let run_cfg = SimConfig { dispatcher, ..cfg.clone() };
        log::info!("running {} into {}", dispatcher, dir.display());
        rows.push(simulate(&scenario, &graph, &run_cfg, &dir)?);
    }
    println!("{}", MetricsReport::TABLE_HEADER);
    for m in &rows {
        println!("{}", m.table_row());
    }
    if args.compare.is_some() {
        let mut table = String::from(MetricsReport::TABLE_HEADER);
        for m in &rows {
            table.push('\n');
            table.push_str(&m.table_row());
        }
        table.push('\n');
        std::fs::write(args.out.join("comparison.txt"), table).context("writing comparison table")?;
    }
    Ok(())
}

fn cmd_gen_scenario(args: GenScenarioArgs) -> anyhow::Result<()> {
    let spec = MapSpec::load(&args.map).map_err(usage)?;
    let graph = build_lane_graph(&spec).map_err(usage)?;
    let map_ref = relative_map_path(&args.map, &args.out);
    let opts = GenerateOptions {
        vehicles: args.vehicles,
        requests: args.requests,
        t_sim: args.t_sim,
        t_s: args.t_s,
        ..Default::default()
    };
    let scenario = generate_scenario(&graph, map_ref, &opts, args.seed)?;
    write_file(&args.out, &scenario.to_toml_string())?;
    println!("wrote {} vehicles and {} requests to {}", args.vehicles, args.requests, args.out.display());
    Ok(())
}

/// `map` as seen from the directory of `scenario`, so the pair can be
/// moved together. Falls back to the absolute map path across drives.
fn relative_map_path(map: &Path, scenario: &Path) -> PathBuf {
    let abs = |p: &Path| normalize(&std::path::absolute(p).unwrap_or_else(|_| p.to_path_buf()));
    let map_abs = abs(map);
    let dir = abs(scenario).parent().map(Path::to_path_buf).unwrap_or_default();
    let (m, d): (Vec<Component>, Vec<Component>) = (map_abs.components().collect(), dir.components().collect());
    let common = m.iter().zip(&d).take_while(|(a, b)| a == b).count();
    if common == 0 {
        return map_abs;
    }
    let mut rel = PathBuf::new();
    for _ in common..d.len() {
        rel.push("..");
    }
    rel.extend(&m[common..]);
    rel
}

/// Lexically resolves `.` and `..`.
fn normalize(path: &Path) -> PathBuf {
    let mut out = PathBuf::new();
    for c in path.components() {
        match c {
            Component::CurDir => {}
            Component::ParentDir => {
                out.pop();
            }
            other => out.push(other),
        }
    }
    out
}

fn write_file(path: &Path, text: &str) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn cmd_gen_map(args: GenMapArgs) -> anyhow::Result<()> {
    let layout = RoadLayout { lanes_per_direction: args.lanes_per_direction, ..Default::default() };
    if args.lanes_per_direction == 0 || !(args.length > 0.0) {
        return Err(usage(anyhow::anyhow!("lanes per direction and length must be positive")));
    }
    let spec = match args.kind {
        MapKind::Straight => synthetic::straight_road(args.length, layout.spacing),
        MapKind::Intersection => synthetic::intersection(args.length, &layout),
        MapKind::Grid if args.size < 2 => return Err(usage(anyhow::anyhow!("a grid needs --size of at least 2"))),
        MapKind::Grid => synthetic::grid(args.size, args.length, &layout),
    };
    write_file(&args.out, &spec.to_toml_string())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::GenScenario(a) => cmd_gen_scenario(a),
        Command::GenMap(a) => cmd_gen_map(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.is::<UsageError>() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_paths_are_relative_to_the_scenario() {
        let rel = |m: &str, s: &str| relative_map_path(Path::new(m), Path::new(s));
        assert_eq!(rel("/w/maps/grid.toml", "/w/maps/s.toml"), PathBuf::from("grid.toml"));
        assert_eq!(rel("/w/maps/grid.toml", "/w/scenarios/s.toml"), PathBuf::from("../maps/grid.toml"));
        assert_eq!(rel("/w/grid.toml", "/w/a/b/s.toml"), PathBuf::from("../../grid.toml"));
        assert_eq!(rel("/w/x/../grid.toml", "/w/./s.toml"), PathBuf::from("grid.toml"));
    }
}

//! `binpack`: generate instances, run packing episodes under a scenario, run
//! heuristic baselines, and inspect one episode's schedule and search trace.

use std::fs;
use std::path::PathBuf;
use std::time::Duration;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use binpack_core::alloc::{allocate, schedule_to_jsonl, sequence_atomic};
use binpack_core::baseline::BaselineKind;
use binpack_core::datagen::{
    generate_full_set, generate_random_instance, read_path, write_path, InstanceRecord,
};
use binpack_core::env::{ScenarioConfig, TaskPrimitive, WorldState};
use binpack_core::harness::{run_baseline, run_suite, to_csv, to_json, TieBreakSpec};
use binpack_core::policy::GreedyPolicy;
use binpack_core::search::{high_level_search, SearchConfig};

#[derive(Parser)]
#[command(
    name = "binpack",
    version,
    about = "Hierarchical 2D bin packing engine"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate instance files.
    Gen(GenArgs),
    /// Run episodes under one or more scenarios and emit reports.
    Run(RunArgs),
    /// Run a heuristic baseline over the instances.
    Baseline(BaselineArgs),
    /// Run a single instance and dump its round schedules and search trace.
    Inspect(InspectArgs),
    /// List the scenario presets.
    Scenarios,
}

#[derive(Args)]
struct GenArgs {
    /// `full-set` or `random`.
    #[arg(long)]
    mode: String,
    #[arg(long)]
    w: u16,
    #[arg(long)]
    h: u16,
    /// Number of instances to generate.
    #[arg(long, default_value_t = 10_000)]
    count: usize,
    /// Gaussian std for full-set dimension sampling.
    #[arg(long, default_value_t = 2.0)]
    sigma: f64,
    /// Items per instance (random mode).
    #[arg(long, default_value_t = 40)]
    items: usize,
    /// Base seed; instance i uses seed + i.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    /// Comma-separated scenario names (see `binpack scenarios`).
    #[arg(long)]
    scenario: String,
    #[arg(long)]
    instances: PathBuf,
    /// Consider both item orientations.
    #[arg(long)]
    rotation: bool,
    /// Enable unpack/repack trials.
    #[arg(long)]
    repack: bool,
    /// Repack time budget, e.g. `500ms`, `1s`, `30s`.
    #[arg(long, default_value = "1s")]
    repack_budget: String,
    /// Beam width; omit to keep every candidate.
    #[arg(long)]
    beam: Option<usize>,
    /// Accept only repack solutions that place every known item.
    #[arg(long)]
    full_pack: bool,
    /// Break placement ties with a seeded stream instead of smallest-index.
    #[arg(long)]
    seeded_ties: bool,
    /// Base seed folded into per-episode tie-breaking streams.
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Worker threads for episode parallelism (0 = automatic).
    #[arg(long, default_value_t = 0)]
    threads: usize,
    /// CSV report path.
    #[arg(long)]
    out: PathBuf,
    /// Optional JSON mirror of the report.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct BaselineArgs {
    /// `first-fit` or `shelf-next-fit`.
    #[arg(long)]
    name: String,
    #[arg(long)]
    instances: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct InspectArgs {
    #[arg(long)]
    scenario: String,
    #[arg(long)]
    instances: PathBuf,
    /// Index of the instance to inspect.
    #[arg(long, default_value_t = 0)]
    index: usize,
    #[arg(long)]
    rotation: bool,
    #[arg(long)]
    repack: bool,
    #[arg(long, default_value = "1s")]
    repack_budget: String,
    #[arg(long)]
    beam: Option<usize>,
    /// Where to write the round schedules (JSONL).
    #[arg(long)]
    schedules: Option<PathBuf>,
    /// Where to write the search trace (JSONL).
    #[arg(long)]
    trace: Option<PathBuf>,
}

fn parse_budget(text: &str) -> Result<Duration> {
    let text = text.trim();
    if let Some(ms) = text.strip_suffix("ms") {
        return Ok(Duration::from_millis(ms.trim().parse()?));
    }
    if let Some(s) = text.strip_suffix('s') {
        return Ok(Duration::from_secs_f64(s.trim().parse()?));
    }
    bail!("cannot parse duration {text:?}; use e.g. 500ms or 1s")
}

fn parse_scenarios(names: &str) -> Result<Vec<ScenarioConfig>> {
    names
        .split(',')
        .map(|name| {
            ScenarioConfig::by_name(name.trim())
                .ok_or_else(|| anyhow!("unknown scenario {name:?}; see `binpack scenarios`"))
        })
        .collect()
}

fn search_config(
    rotation: bool,
    repack: bool,
    budget: &str,
    beam: Option<usize>,
    full_pack: bool,
) -> Result<SearchConfig> {
    Ok(SearchConfig {
        beam_width: beam,
        require_full_pack: full_pack,
        use_repack: repack,
        repack_budget: parse_budget(budget)?,
        rotation,
        ..SearchConfig::default()
    })
}

fn load_instances(path: &std::path::Path) -> Result<Vec<InstanceRecord>> {
    let instances =
        read_path(path).with_context(|| format!("reading instances from {}", path.display()))?;
    if instances.is_empty() {
        bail!("no instances in {}", path.display());
    }
    Ok(instances)
}

fn cmd_gen(args: GenArgs) -> Result<()> {
    let records: Vec<InstanceRecord> = match args.mode.as_str() {
        "full-set" => (0..args.count)
            .map(|i| generate_full_set(args.w, args.h, args.sigma, args.seed + i as u64).record)
            .collect(),
        "random" => (0..args.count)
            .map(|i| generate_random_instance(args.w, args.h, args.items, args.seed + i as u64))
            .collect(),
        other => bail!("unknown mode {other:?}; use full-set or random"),
    };
    write_path(&args.out, &records)?;
    println!(
        "wrote {} instances to {}",
        records.len(),
        args.out.display()
    );
    Ok(())
}

fn cmd_run(args: RunArgs) -> Result<()> {
    let scenarios = parse_scenarios(&args.scenario)?;
    let instances = load_instances(&args.instances)?;
    let search = search_config(
        args.rotation,
        args.repack,
        &args.repack_budget,
        args.beam,
        args.full_pack,
    )?;
    let tiebreak = if args.seeded_ties {
        TieBreakSpec::SeededPerEpisode { base: args.seed }
    } else {
        TieBreakSpec::SmallestIndex
    };
    let threads = (args.threads > 0).then_some(args.threads);
    let report = run_suite(&instances, &scenarios, &search, tiebreak, threads)?;
    fs::write(&args.out, to_csv(&report))?;
    if let Some(json) = &args.json {
        fs::write(json, to_json(&report))?;
    }
    for agg in &report.aggregates {
        println!(
            "{}: {} episodes, mean utilization {:.2}%, packed {}, steps {}",
            agg.scenario,
            agg.episodes,
            agg.mean_utilization_pct,
            agg.total_packed_items,
            agg.total_packing_steps
        );
    }
    println!("report: {}", args.out.display());
    Ok(())
}

fn cmd_baseline(args: BaselineArgs) -> Result<()> {
    let kind = BaselineKind::parse(&args.name).ok_or_else(|| {
        anyhow!(
            "unknown baseline {:?}; use first-fit or shelf-next-fit",
            args.name
        )
    })?;
    let instances = load_instances(&args.instances)?;
    let report = run_baseline(kind, &instances);
    fs::write(&args.out, to_csv(&report))?;
    if let Some(json) = &args.json {
        fs::write(json, to_json(&report))?;
    }
    let agg = &report.aggregates[0];
    println!(
        "{}: {} episodes, mean utilization {:.2}%",
        agg.scenario, agg.episodes, agg.mean_utilization_pct
    );
    Ok(())
}

/// A miniature episode loop that dumps per-round schedules and the search
/// trace of every planning round for one instance.
fn cmd_inspect(args: InspectArgs) -> Result<()> {
    let scenario = parse_scenarios(&args.scenario)?
        .into_iter()
        .next()
        .expect("one scenario");
    let instances = load_instances(&args.instances)?;
    let instance = instances
        .get(args.index)
        .ok_or_else(|| anyhow!("instance index {} out of range", args.index))?;
    let mut search = search_config(
        args.rotation,
        args.repack,
        &args.repack_budget,
        args.beam,
        false,
    )?;
    search.collect_trace = args.trace.is_some();

    let mut world = WorldState::new(instance.width, instance.height);
    let mut stream = instance.items_with_ids(0).into_iter();
    let mut policy = GreedyPolicy::new(binpack_core::policy::TieBreakRule::SmallestIndex);
    let mut schedules = String::new();
    let mut trace = String::new();
    loop {
        loop {
            if world.conveyor.queue.len() >= scenario.n_recognized {
                break;
            }
            match stream.next() {
                Some(item) => world.push_arrival(item, &scenario)?,
                None => break,
            }
        }
        world.advance_conveyor(&scenario);
        if world.known_count() == 0 {
            break;
        }
        let outcome = high_level_search(&world, &scenario, &search, &mut policy)?;
        if let Some(events) = &outcome.trace {
            trace.push_str(&binpack_core::search::trace_to_jsonl(events));
        }
        let allocation = allocate(&outcome.action, &world, &scenario)?;
        let schedule = sequence_atomic(&allocation, &world, &scenario);
        schedules.push_str(&schedule_to_jsonl(&schedule));
        let mut terminated = false;
        for (prim, robot) in allocation.execution_order() {
            world.exec_primitive(prim, *robot, &scenario)?;
            terminated |= matches!(prim, TaskPrimitive::Terminate);
        }
        if terminated {
            break;
        }
    }
    println!(
        "instance {} final utilization {:.2}%",
        args.index,
        world.bin.utilization() * 100.0
    );
    if let Some(path) = &args.schedules {
        fs::write(path, schedules)?;
        println!("schedules: {}", path.display());
    }
    if let Some(path) = &args.trace {
        fs::write(path, trace)?;
        println!("trace: {}", path.display());
    }
    Ok(())
}

fn cmd_scenarios() {
    for s in ScenarioConfig::presets() {
        let caps = s.zone_caps();
        println!(
            "{:10} robots={} recognized={} accessible/robot={} overlap={} zones(beta,O,alpha)=({},{},{})",
            s.id, s.n_robot, s.n_recognized, s.n_accessible, s.n_overlap, caps.0, caps.1, caps.2
        );
    }
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Gen(args) => cmd_gen(args),
        Command::Run(args) => cmd_run(args),
        Command::Baseline(args) => cmd_baseline(args),
        Command::Inspect(args) => cmd_inspect(args),
        Command::Scenarios => {
            cmd_scenarios();
            Ok(())
        }
    }
}

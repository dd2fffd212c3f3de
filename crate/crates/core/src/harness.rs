//! Episode runner, suite aggregation, baselines, and report emission.
//!
//! An episode packs one bin from one instance's arrival stream: refill the
//! recognition window, search, allocate, schedule, execute, repeat until a
//! terminate primitive or until everything is placed. Suites run the same
//! instance list under one or more scenarios; random-instance suites chain
//! leftovers from bin to bin, full-set suites drop them.

use std::collections::VecDeque;
use std::time::Duration;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::alloc::{allocate, count_steps, sequence_atomic, AllocError};
use crate::baseline::{run_baseline_episode, BaselineKind};
use crate::datagen::{GeneratorTag, InstanceRecord};
use crate::env::{EnvError, ScenarioConfig, TaskPrimitive, WorldState};
use crate::grid::ItemSpec;
use crate::policy::{GreedyPolicy, TieBreakRule};
use crate::search::{high_level_search, SearchConfig, SearchError};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Alloc(#[from] AllocError),
    #[error("executed state diverged from forward simulation:\n{diff}")]
    StateDiverged { diff: String },
    #[error("thread pool: {0}")]
    ThreadPool(String),
}

/// How episode tie-breaking is seeded.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TieBreakSpec {
    /// Fully deterministic smallest-index rule.
    SmallestIndex,
    /// A fresh seeded stream per episode, derived from the base folded with
    /// the instance seed.
    SeededPerEpisode { base: u64 },
}

impl TieBreakSpec {
    fn rule_for(&self, instance_seed: u64) -> TieBreakRule {
        match self {
            TieBreakSpec::SmallestIndex => TieBreakRule::SmallestIndex,
            TieBreakSpec::SeededPerEpisode { base } => {
                TieBreakRule::SeededRandom(base ^ instance_seed)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpisodeReport {
    pub scenario: String,
    pub seed: u64,
    pub rotation: bool,
    pub repack: bool,
    pub utilization: f64,
    pub occupied_cells: u32,
    pub bin_cells: u32,
    /// Highest simulated occupancy any candidate sequence reached across the
    /// episode's planning rounds (score-first selection may execute less).
    pub best_found_occupied: u32,
    pub packed_items: u32,
    pub packing_steps: u32,
    pub repacked_items: u32,
    pub repack_time_ms: u64,
}

impl EpisodeReport {
    pub fn utilization_pct(&self) -> f64 {
        self.utilization * 100.0
    }

    pub fn is_full(&self) -> bool {
        self.occupied_cells == self.bin_cells
    }
}

fn render_bin(bin: &crate::grid::GridBin) -> String {
    let mut out = String::new();
    for y in 0..bin.height() {
        for x in 0..bin.width() {
            out.push(if bin.occupied_at(x, y) { '#' } else { '.' });
        }
        out.push('\n');
    }
    out
}

/// Runs one bin to termination. Returns the report and the unpacked
/// leftovers (remaining stream, window, and buffered items in that order)
/// for the caller to carry into the next bin.
pub fn run_episode(
    instance: &InstanceRecord,
    scenario: &ScenarioConfig,
    search: &SearchConfig,
    tiebreak: TieBreakSpec,
    carried: Vec<ItemSpec>,
    first_id: u32,
) -> Result<(EpisodeReport, Vec<ItemSpec>), HarnessError> {
    let mut world = WorldState::new(instance.width, instance.height);
    let mut stream: VecDeque<ItemSpec> = carried.into_iter().collect();
    stream.extend(instance.items_with_ids(first_id));
    let mut policy = GreedyPolicy::new(tiebreak.rule_for(instance.seed));
    let mut packing_steps = 0u32;
    let mut repack_time = Duration::ZERO;
    let mut best_found = 0u32;

    loop {
        while world.conveyor.queue.len() < scenario.n_recognized {
            match stream.pop_front() {
                Some(item) => world.push_arrival(item, scenario)?,
                None => break,
            }
        }
        world.advance_conveyor(scenario);
        if world.known_count() == 0 {
            break;
        }

        let outcome = high_level_search(&world, scenario, search, &mut policy)?;
        best_found = best_found.max(outcome.best_candidate_occupied);
        if outcome.repack.attempted {
            repack_time += outcome.repack.duration;
        }
        let allocation = allocate(&outcome.action, &world, scenario)?;
        let schedule = sequence_atomic(&allocation, &world, scenario);
        packing_steps += count_steps(&schedule).packing_steps;

        let mut terminated = false;
        for (prim, robot) in allocation.execution_order() {
            world.exec_primitive(prim, *robot, scenario)?;
            if matches!(prim, TaskPrimitive::Pack { .. }) {
                while world.conveyor.queue.len() < scenario.n_recognized {
                    match stream.pop_front() {
                        Some(item) => world.push_arrival(item, scenario)?,
                        None => break,
                    }
                }
                world.advance_conveyor(scenario);
            }
            if matches!(prim, TaskPrimitive::Terminate) {
                terminated = true;
            }
        }

        if world.bin != outcome.predicted_bin {
            return Err(HarnessError::StateDiverged {
                diff: format!(
                    "predicted:\n{}\nexecuted:\n{}",
                    render_bin(&outcome.predicted_bin),
                    render_bin(&world.bin)
                ),
            });
        }
        if terminated {
            break;
        }
    }

    let report = EpisodeReport {
        scenario: scenario.id.clone(),
        seed: instance.seed,
        rotation: search.rotation,
        repack: search.use_repack,
        utilization: world.bin.utilization(),
        occupied_cells: world.bin.occupied_cells(),
        bin_cells: world.bin.cell_count(),
        best_found_occupied: best_found.max(world.bin.occupied_cells()),
        packed_items: world.stats.packed_items,
        packing_steps,
        repacked_items: world.stats.unpacked_items,
        repack_time_ms: repack_time.as_millis() as u64,
    };
    let mut leftovers: Vec<ItemSpec> = world.conveyor.queue.iter().copied().collect();
    for buf in &world.buffers {
        leftovers.extend(buf.iter().map(|b| b.item));
    }
    leftovers.extend(stream);
    Ok((report, leftovers))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioAggregate {
    pub scenario: String,
    pub episodes: u32,
    pub mean_utilization_pct: f64,
    pub full_bins: u32,
    pub total_packed_items: u64,
    pub total_packing_steps: u64,
    pub mean_packed_items: f64,
    pub mean_packing_steps: f64,
    pub mean_repacked_items: f64,
    pub mean_repack_time_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteMetadata {
    pub engine_version: String,
    pub config_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub episodes: Vec<EpisodeReport>,
    pub aggregates: Vec<ScenarioAggregate>,
    pub metadata: SuiteMetadata,
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf29ce484222325u64;
    for b in bytes {
        hash ^= u64::from(*b);
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

fn aggregate(scenario: &str, episodes: &[EpisodeReport]) -> ScenarioAggregate {
    let rows: Vec<&EpisodeReport> = episodes.iter().filter(|e| e.scenario == scenario).collect();
    let n = rows.len() as f64;
    ScenarioAggregate {
        scenario: scenario.to_string(),
        episodes: rows.len() as u32,
        mean_utilization_pct: rows.iter().map(|e| e.utilization_pct()).sum::<f64>() / n.max(1.0),
        full_bins: rows.iter().filter(|e| e.is_full()).count() as u32,
        total_packed_items: rows.iter().map(|e| u64::from(e.packed_items)).sum(),
        total_packing_steps: rows.iter().map(|e| u64::from(e.packing_steps)).sum(),
        mean_packed_items: rows.iter().map(|e| f64::from(e.packed_items)).sum::<f64>() / n.max(1.0),
        mean_packing_steps: rows.iter().map(|e| f64::from(e.packing_steps)).sum::<f64>()
            / n.max(1.0),
        mean_repacked_items: rows
            .iter()
            .map(|e| f64::from(e.repacked_items))
            .sum::<f64>()
            / n.max(1.0),
        mean_repack_time_ms: rows.iter().map(|e| e.repack_time_ms as f64).sum::<f64>() / n.max(1.0),
    }
}

fn suite_metadata(scenarios: &[ScenarioConfig], search: &SearchConfig) -> SuiteMetadata {
    let ids: Vec<&str> = scenarios.iter().map(|s| s.id.as_str()).collect();
    let blob = format!("{ids:?}|{search:?}");
    SuiteMetadata {
        engine_version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: format!("{:016x}", fnv1a64(blob.as_bytes())),
    }
}

/// Runs every scenario over the same instance list (identical arrival
/// sequences per scenario).
///
/// Random-instance suites thread leftovers from one bin into the next, so
/// they run sequentially within a scenario; full-set suites run episodes in
/// parallel. Episode rows are sorted by (scenario, seed) before emission so
/// the report is independent of worker scheduling.
pub fn run_suite(
    instances: &[InstanceRecord],
    scenarios: &[ScenarioConfig],
    search: &SearchConfig,
    tiebreak: TieBreakSpec,
    threads: Option<usize>,
) -> Result<SuiteReport, HarnessError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| HarnessError::ThreadPool(e.to_string()))?;

    let chained = instances
        .iter()
        .all(|i| matches!(i.gen, GeneratorTag::Random));
    let mut episodes: Vec<EpisodeReport> = Vec::new();
    for scenario in scenarios {
        if chained {
            let mut carried: Vec<ItemSpec> = Vec::new();
            for (idx, instance) in instances.iter().enumerate() {
                let (report, leftovers) = run_episode(
                    instance,
                    scenario,
                    search,
                    tiebreak,
                    carried,
                    episode_id_base(idx),
                )?;
                episodes.push(report);
                carried = leftovers;
            }
        } else {
            let results: Result<Vec<EpisodeReport>, HarnessError> = pool.install(|| {
                instances
                    .par_iter()
                    .enumerate()
                    .map(|(idx, instance)| {
                        run_episode(
                            instance,
                            scenario,
                            search,
                            tiebreak,
                            Vec::new(),
                            episode_id_base(idx),
                        )
                        .map(|(report, _)| report)
                    })
                    .collect()
            });
            episodes.extend(results?);
        }
    }
    episodes.sort_by(|a, b| a.scenario.cmp(&b.scenario).then(a.seed.cmp(&b.seed)));
    let aggregates = scenarios
        .iter()
        .map(|s| aggregate(&s.id, &episodes))
        .collect();
    Ok(SuiteReport {
        episodes,
        aggregates,
        metadata: suite_metadata(scenarios, search),
    })
}

fn episode_id_base(instance_index: usize) -> u32 {
    (instance_index as u32) * 1_000_000
}

/// Runs a heuristic baseline over the instances: fully online, no rotation,
/// no repacking, one packing step per packed item.
pub fn run_baseline(kind: BaselineKind, instances: &[InstanceRecord]) -> SuiteReport {
    let episodes: Vec<EpisodeReport> = instances
        .iter()
        .enumerate()
        .map(|(idx, instance)| {
            let items = instance.items_with_ids(episode_id_base(idx));
            let result = run_baseline_episode(kind, instance.width, instance.height, &items);
            EpisodeReport {
                scenario: kind.name().to_string(),
                seed: instance.seed,
                rotation: false,
                repack: false,
                utilization: result.utilization(),
                occupied_cells: result.bin.occupied_cells(),
                bin_cells: result.bin.cell_count(),
                best_found_occupied: result.bin.occupied_cells(),
                packed_items: result.packed_items,
                packing_steps: result.packed_items,
                repacked_items: 0,
                repack_time_ms: 0,
            }
        })
        .collect();
    let aggregates = vec![aggregate(kind.name(), &episodes)];
    SuiteReport {
        episodes,
        aggregates,
        metadata: SuiteMetadata {
            engine_version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: format!("{:016x}", fnv1a64(kind.name().as_bytes())),
        },
    }
}

/// CSV rows in the reporting schema; utilization is a percentage with two
/// decimals.
pub fn to_csv(report: &SuiteReport) -> String {
    let mut out = String::from(
        "scenario,seed,rotation,repack,utilization_pct,packed_items,packing_steps,repacked_items,repack_time_ms\n",
    );
    for e in &report.episodes {
        out.push_str(&format!(
            "{},{},{},{},{:.2},{},{},{},{}\n",
            e.scenario,
            e.seed,
            e.rotation,
            e.repack,
            e.utilization_pct(),
            e.packed_items,
            e.packing_steps,
            e.repacked_items,
            e.repack_time_ms
        ));
    }
    out
}

pub fn to_json(report: &SuiteReport) -> String {
    serde_json::to_string_pretty(report).expect("report serializes")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{generate_full_set, generate_random_instance};

    fn scenario(name: &str) -> ScenarioConfig {
        ScenarioConfig::by_name(name).unwrap()
    }

    fn plain_search() -> SearchConfig {
        SearchConfig {
            rotation: false,
            ..SearchConfig::default()
        }
    }

    #[test]
    fn empty_instance_reports_zero() {
        let instance = InstanceRecord {
            gen: GeneratorTag::Random,
            width: 5,
            height: 5,
            sigma: None,
            seed: 1,
            items: vec![],
        };
        let (report, leftovers) = run_episode(
            &instance,
            &scenario("S-R1A1"),
            &plain_search(),
            TieBreakSpec::SmallestIndex,
            Vec::new(),
            0,
        )
        .unwrap();
        assert_eq!(report.utilization, 0.0);
        assert_eq!(report.packed_items, 0);
        assert_eq!(report.packing_steps, 0);
        assert!(leftovers.is_empty());
    }

    #[test]
    fn single_item_episode() {
        let instance = InstanceRecord {
            gen: GeneratorTag::Random,
            width: 5,
            height: 5,
            sigma: None,
            seed: 2,
            items: vec![(2, 2)],
        };
        let (report, leftovers) = run_episode(
            &instance,
            &scenario("S-R5A3"),
            &plain_search(),
            TieBreakSpec::SmallestIndex,
            Vec::new(),
            0,
        )
        .unwrap();
        assert_eq!(report.packed_items, 1);
        assert_eq!(report.packing_steps, 1);
        assert!((report.utilization - 4.0 / 25.0).abs() < 1e-12);
        assert!(leftovers.is_empty());
    }

    #[test]
    fn leftovers_carried_for_random_instances() {
        // A 2x2 bin and three 2x2 items: one fits, two carry over.
        let instance = InstanceRecord {
            gen: GeneratorTag::Random,
            width: 4,
            height: 4,
            sigma: None,
            seed: 3,
            items: vec![(4, 4), (2, 2), (2, 2)],
        };
        let (report, leftovers) = run_episode(
            &instance,
            &scenario("S-R1A1"),
            &plain_search(),
            TieBreakSpec::SmallestIndex,
            Vec::new(),
            0,
        )
        .unwrap();
        assert_eq!(report.packed_items, 1);
        assert_eq!(report.utilization, 1.0);
        assert_eq!(leftovers.len(), 2);
    }

    #[test]
    fn episode_replays_identically() {
        let instance = generate_random_instance(6, 6, 12, 77);
        let run = || {
            run_episode(
                &instance,
                &scenario("S-R5A3"),
                &SearchConfig::default(),
                TieBreakSpec::SeededPerEpisode { base: 42 },
                Vec::new(),
                0,
            )
            .unwrap()
        };
        let (a, la) = run();
        let (b, lb) = run();
        assert_eq!(a, b);
        assert_eq!(la, lb);
    }

    #[test]
    fn suite_aggregates_match_recomputation() {
        let instances: Vec<InstanceRecord> = (0..6)
            .map(|s| generate_full_set(4, 4, 2.0, s).record)
            .collect();
        let scenarios = vec![scenario("S-R5A3"), scenario("S-R5A1")];
        let report = run_suite(
            &instances,
            &scenarios,
            &plain_search(),
            TieBreakSpec::SmallestIndex,
            Some(2),
        )
        .unwrap();
        assert_eq!(report.episodes.len(), 12);
        for agg in &report.aggregates {
            let recomputed = aggregate(&agg.scenario, &report.episodes);
            assert_eq!(*agg, recomputed);
        }
    }

    #[test]
    fn single_robot_steps_equal_packed_items() {
        let instances: Vec<InstanceRecord> = (0..4)
            .map(|s| generate_random_instance(6, 6, 10, s))
            .collect();
        let report = run_suite(
            &instances,
            &[scenario("S-R5A1")],
            &plain_search(),
            TieBreakSpec::SmallestIndex,
            Some(1),
        )
        .unwrap();
        for e in &report.episodes {
            assert_eq!(e.packing_steps, e.packed_items);
        }
    }

    #[test]
    fn baseline_reports_full_bin_stop() {
        let instance = InstanceRecord {
            gen: GeneratorTag::Random,
            width: 2,
            height: 2,
            sigma: None,
            seed: 9,
            items: vec![(1, 1); 8],
        };
        let report = run_baseline(BaselineKind::FirstFit, &[instance]);
        assert_eq!(report.episodes[0].packed_items, 4);
        assert_eq!(report.episodes[0].utilization, 1.0);
    }

    #[test]
    fn engine_beats_first_fit_on_seeded_episodes() {
        let instances: Vec<InstanceRecord> = (0..1000)
            .map(|s| generate_random_instance(5, 5, 25, s))
            .collect();
        let engine = run_suite(
            &instances,
            &[scenario("S-R1A1")],
            &plain_search(),
            TieBreakSpec::SmallestIndex,
            Some(0).map(|_| 2),
        )
        .unwrap();
        let first_fit = run_baseline(BaselineKind::FirstFit, &instances);
        let engine_mean = engine.aggregates[0].mean_utilization_pct;
        let ff_mean = first_fit.aggregates[0].mean_utilization_pct;
        assert!(
            engine_mean > ff_mean,
            "engine {engine_mean:.2} vs first-fit {ff_mean:.2}"
        );
    }

    #[test]
    fn csv_has_expected_shape() {
        let instance = generate_random_instance(5, 5, 3, 4);
        let report = run_suite(
            &[instance],
            &[scenario("S-R1A1")],
            &plain_search(),
            TieBreakSpec::SmallestIndex,
            Some(1),
        )
        .unwrap();
        let csv = to_csv(&report);
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "scenario,seed,rotation,repack,utilization_pct,packed_items,packing_steps,repacked_items,repack_time_ms"
        );
        assert_eq!(lines.count(), report.episodes.len());
        let json = to_json(&report);
        assert!(json.contains("config_hash"));
    }
}

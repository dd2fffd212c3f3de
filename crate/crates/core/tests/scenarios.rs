//! Cross-scenario regression: every preset runs random 10x10 episodes with
//! rotation and anytime repacking without state divergence, and the basic
//! throughput relations hold.

use std::time::Duration;

use binpack_core::datagen::generate_random_instance;
use binpack_core::env::ScenarioConfig;
use binpack_core::harness::{run_suite, TieBreakSpec};
use binpack_core::search::SearchConfig;

#[test]
fn all_presets_run_clean() {
    let instances: Vec<_> = (0..15)
        .map(|seed| generate_random_instance(10, 10, 35, 900 + seed))
        .collect();
    let search = SearchConfig {
        rotation: true,
        beam_width: Some(2),
        use_repack: true,
        repack_budget: Duration::from_millis(100),
        ..SearchConfig::default()
    };
    let scenarios = ScenarioConfig::presets();
    let report = run_suite(
        &instances,
        &scenarios,
        &search,
        TieBreakSpec::SmallestIndex,
        None,
    )
    .unwrap();
    assert_eq!(report.episodes.len(), scenarios.len() * instances.len());
    for agg in &report.aggregates {
        assert!(
            agg.mean_utilization_pct > 70.0,
            "{} mean utilization {:.2}",
            agg.scenario,
            agg.mean_utilization_pct
        );
        let ratio = agg.total_packing_steps as f64 / agg.total_packed_items as f64;
        if agg.scenario.starts_with('S') {
            assert_eq!(agg.total_packing_steps, agg.total_packed_items);
        } else {
            assert!(
                (0.5..=1.0).contains(&ratio),
                "{} steps/packed {ratio:.3}",
                agg.scenario
            );
        }
    }
    // Wider reach never hurts mean utilization on identical arrivals.
    let mean = |name: &str| {
        report
            .aggregates
            .iter()
            .find(|a| a.scenario == name)
            .unwrap()
            .mean_utilization_pct
    };
    assert!(mean("S-R5A3") >= mean("S-R1A1") - 0.5);
}

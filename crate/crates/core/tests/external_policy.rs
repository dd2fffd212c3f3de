//! End-to-end check of the external-policy line protocol behind the search:
//! a child process proposes positions over stdio and the engine re-validates
//! everything against the feasibility mask.

use std::process::Command;
use std::time::Duration;

use binpack_core::env::{ScenarioConfig, TaskPrimitive, WorldState};
use binpack_core::grid::ItemSpec;
use binpack_core::policy::{ExternalPolicy, ExternalPolicyHandle};
use binpack_core::search::{high_level_search, SearchConfig};

/// The endpoint always claims index 0; whenever that anchor is infeasible
/// the engine must coerce to the greedy fallback, so the search still packs
/// every item.
#[test]
fn search_runs_on_external_policy_process() {
    let mut cmd = Command::new("sh");
    cmd.arg("-c").arg("while read line; do echo 'ACT 0'; done");
    let handle = ExternalPolicyHandle::spawn(&mut cmd, Duration::from_secs(5)).expect("spawn");
    let mut policy = ExternalPolicy { handle };

    let cfg = ScenarioConfig::by_name("S-R5A3").unwrap();
    let mut world = WorldState::new(4, 4);
    for (i, dims) in [(2u16, 2u16), (2, 2), (4, 2)].iter().enumerate() {
        world
            .push_arrival(ItemSpec::new(i as u32, dims.0, dims.1), &cfg)
            .unwrap();
    }
    world.advance_conveyor(&cfg);
    let search = SearchConfig {
        rotation: true,
        ..SearchConfig::default()
    };

    let mut packed = 0;
    for _ in 0..4 {
        let outcome = high_level_search(&world, &cfg, &search, &mut policy).unwrap();
        let mut terminated = false;
        for prim in &outcome.action.primitives {
            world
                .exec_primitive(prim, binpack_core::env::RobotId::Front, &cfg)
                .unwrap();
            match prim {
                TaskPrimitive::Pack { .. } => packed += 1,
                TaskPrimitive::Terminate => terminated = true,
                TaskPrimitive::Unpack { .. } => {}
            }
        }
        if terminated || world.known_count() == 0 {
            break;
        }
    }
    assert_eq!(packed, 3);
    assert!(world.bin.is_full());
    assert!(policy.handle.infeasible_replies > 0);
}

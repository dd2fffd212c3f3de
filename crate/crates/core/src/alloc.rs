//! Task allocation and synchronized atomic-action sequencing.
//!
//! A high-level action's primitives are distributed to robots (new-item packs
//! by conveyor distance, unpacks alternately starting with the less-loaded
//! robot, buffered repacks to their unpacker in reverse unpack order), then
//! compiled into pick/place atomic actions and zipped into synchronized
//! rounds. A packing step is a round in which at least one place-to-bin
//! occurs; both arms may place in one round because the planner guarantees
//! disjoint cells.

use serde::Serialize;
use thiserror::Error;

use crate::env::{HighLevelAction, RobotId, ScenarioConfig, TaskPrimitive, WorldState};
use crate::grid::{rotated_size, ItemSpec, Orientation};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AllocError {
    #[error("pack of buffered item {0} has no known unpacker")]
    UnknownUnpacker(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PickSource {
    Conveyor,
    Buffer,
    Bin,
}

/// Robot-level action alphabet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum AtomicAction {
    Pick {
        source: PickSource,
        item: ItemSpec,
    },
    PlaceToBin {
        item: ItemSpec,
        orientation: Orientation,
        x: u16,
        y: u16,
    },
    PlaceToBuffer {
        item: ItemSpec,
        robot: RobotId,
    },
    Standby,
    Ready,
}

impl AtomicAction {
    pub fn is_standby(&self) -> bool {
        matches!(self, AtomicAction::Standby)
    }

    pub fn is_place_to_bin(&self) -> bool {
        matches!(self, AtomicAction::PlaceToBin { .. })
    }

    /// Interior cells touched when placing to the bin.
    pub fn bin_cells(&self) -> Vec<(u16, u16)> {
        match self {
            AtomicAction::PlaceToBin {
                item,
                orientation,
                x,
                y,
            } => {
                let size = rotated_size(*item, *orientation);
                let mut cells = Vec::with_capacity(usize::from(size.lx) * usize::from(size.ly));
                for dy in 0..size.ly {
                    for dx in 0..size.lx {
                        cells.push((x + dx, y + dy));
                    }
                }
                cells
            }
            _ => Vec::new(),
        }
    }
}

/// Primitive queues per robot plus the per-primitive assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    /// Robot for each primitive of the source action (terminate keeps a
    /// placeholder assignment).
    pub assignments: Vec<RobotId>,
    /// Per-robot ordered primitive queues: unpacks, then buffered repacks in
    /// reverse unpack order, then new-item packs.
    pub queues: [Vec<TaskPrimitive>; 2],
    /// Canonical global execution order with robot tags.
    execution: Vec<(TaskPrimitive, RobotId)>,
}

impl Allocation {
    /// The order in which the world executes the primitives: all unpacks,
    /// then buffered repacks most-recently-unpacked first, then new packs,
    /// then terminate.
    pub fn execution_order(&self) -> &[(TaskPrimitive, RobotId)] {
        &self.execution
    }
}

/// Distributes a high-level action's primitives to robots.
///
/// Single-robot allocation is the identity. For dual robots: new-item packs
/// go to the nearest robot by |robot_x - slot|, ties to the front robot;
/// unpacks alternate starting with the robot that has fewer assigned tasks;
/// a buffered item's pack goes to the robot that unpacked it.
pub fn allocate(
    action: &HighLevelAction,
    world: &WorldState,
    cfg: &ScenarioConfig,
) -> Result<Allocation, AllocError> {
    let prims = &action.primitives;
    let mut assignments = vec![RobotId::Front; prims.len()];
    // Items unpacked within this action, with provisional LIFO stamps above
    // everything already buffered.
    let mut unpacked_in_action: Vec<(u32, RobotId, u64)> = Vec::new();
    let mut stamp_base = world.buffers[0]
        .iter()
        .chain(world.buffers[1].iter())
        .map(|b| b.unpacked_at)
        .max()
        .unwrap_or(0);

    if cfg.is_dual() {
        let mut loads = [0usize; 2];
        // New-item packs first: their robot depends only on geometry, and the
        // resulting loads seed the unpack alternation.
        for (i, prim) in prims.iter().enumerate() {
            if let TaskPrimitive::Pack { item, .. } = prim {
                if let Some(slot) = world.conveyor_slot(item.id) {
                    let d_front = (cfg.robot_x[0] - slot as f64).abs();
                    let d_rear = (cfg.robot_x[1] - slot as f64).abs();
                    let robot = if d_rear < d_front {
                        RobotId::Rear
                    } else {
                        RobotId::Front
                    };
                    assignments[i] = robot;
                    loads[robot.index()] += 1;
                }
            }
        }
        // Unpacks alternate, starting with the less-loaded robot.
        let mut next_unpacker: Option<RobotId> = None;
        for (i, prim) in prims.iter().enumerate() {
            if let TaskPrimitive::Unpack { item } = prim {
                let robot = next_unpacker.unwrap_or(if loads[1] < loads[0] {
                    RobotId::Rear
                } else {
                    RobotId::Front
                });
                assignments[i] = robot;
                loads[robot.index()] += 1;
                stamp_base += 1;
                unpacked_in_action.push((item.id, robot, stamp_base));
                next_unpacker = Some(robot.other());
            }
        }
        // Buffered repacks follow their unpacker.
        for (i, prim) in prims.iter().enumerate() {
            if let TaskPrimitive::Pack { item, .. } = prim {
                if world.conveyor_slot(item.id).is_some() {
                    continue;
                }
                let robot = world
                    .buffered_owner(item.id)
                    .or_else(|| {
                        unpacked_in_action
                            .iter()
                            .find(|(id, _, _)| *id == item.id)
                            .map(|(_, r, _)| *r)
                    })
                    .ok_or(AllocError::UnknownUnpacker(item.id))?;
                assignments[i] = robot;
                loads[robot.index()] += 1;
            }
        }
    } else {
        for (i, prim) in prims.iter().enumerate() {
            match prim {
                TaskPrimitive::Unpack { item } => {
                    stamp_base += 1;
                    unpacked_in_action.push((item.id, RobotId::Front, stamp_base));
                }
                TaskPrimitive::Pack { item, .. } => {
                    if world.conveyor_slot(item.id).is_none()
                        && world.buffered_owner(item.id).is_none()
                        && !unpacked_in_action.iter().any(|(id, _, _)| *id == item.id)
                    {
                        return Err(AllocError::UnknownUnpacker(item.id));
                    }
                    assignments[i] = RobotId::Front;
                }
                TaskPrimitive::Terminate => {}
            }
        }
    }

    let unpack_stamp = |id: u32| -> u64 {
        unpacked_in_action
            .iter()
            .find(|(uid, _, _)| *uid == id)
            .map(|(_, _, s)| *s)
            .or_else(|| {
                world.buffers[0]
                    .iter()
                    .chain(world.buffers[1].iter())
                    .find(|b| b.item.id == id)
                    .map(|b| b.unpacked_at)
            })
            .unwrap_or(0)
    };

    // Per-robot queues: unpacks, buffered repacks (reverse unpack order),
    // then new packs, preserving action order within each group.
    let mut queues: [Vec<TaskPrimitive>; 2] = [Vec::new(), Vec::new()];
    let mut buffered_packs: [Vec<(u64, TaskPrimitive)>; 2] = [Vec::new(), Vec::new()];
    let mut new_packs: [Vec<TaskPrimitive>; 2] = [Vec::new(), Vec::new()];
    for (i, prim) in prims.iter().enumerate() {
        let robot = assignments[i];
        match prim {
            TaskPrimitive::Unpack { .. } => queues[robot.index()].push(*prim),
            TaskPrimitive::Pack { item, .. } => {
                if world.conveyor_slot(item.id).is_some() {
                    new_packs[robot.index()].push(*prim);
                } else {
                    buffered_packs[robot.index()].push((unpack_stamp(item.id), *prim));
                }
            }
            TaskPrimitive::Terminate => {}
        }
    }
    let mut global_buffered: Vec<(u64, TaskPrimitive, RobotId)> = Vec::new();
    for robot in [RobotId::Front, RobotId::Rear] {
        let packs = &mut buffered_packs[robot.index()];
        packs.sort_by_key(|(stamp, _)| std::cmp::Reverse(*stamp));
        for (stamp, prim) in packs.iter() {
            queues[robot.index()].push(*prim);
            global_buffered.push((*stamp, *prim, robot));
        }
        queues[robot.index()].extend(new_packs[robot.index()].iter().copied());
    }

    // Canonical execution order.
    let mut execution: Vec<(TaskPrimitive, RobotId)> = Vec::new();
    for (i, prim) in prims.iter().enumerate() {
        if matches!(prim, TaskPrimitive::Unpack { .. }) {
            execution.push((*prim, assignments[i]));
        }
    }
    global_buffered.sort_by_key(|(stamp, _, _)| std::cmp::Reverse(*stamp));
    execution.extend(global_buffered.into_iter().map(|(_, p, r)| (p, r)));
    for (i, prim) in prims.iter().enumerate() {
        if let TaskPrimitive::Pack { item, .. } = prim {
            if world.conveyor_slot(item.id).is_some() {
                execution.push((*prim, assignments[i]));
            }
        }
    }
    if action.contains_terminate() {
        execution.push((TaskPrimitive::Terminate, RobotId::Front));
    }

    Ok(Allocation {
        assignments,
        queues,
        execution,
    })
}

/// One synchronized round: an atomic action per robot.
pub type Round = Vec<AtomicAction>;

#[derive(Debug, Clone, PartialEq)]
pub struct RoundSchedule {
    pub rounds: Vec<Round>,
    pub n_robot: u8,
}

/// Compiles allocated queues into synchronized rounds.
///
/// Per robot: every unpack becomes pick-from-bin + place-to-buffer, except
/// that a final unpack immediately followed by its own pack fuses into
/// pick-from-bin + place-to-bin; packs become pick (conveyor or buffer) +
/// place-to-bin; each program ends with ready. When any unpack is present
/// and the dual programs are unevenly loaded, the lighter robot leads with
/// one standby so the arms do not contest the bin region during repacking.
pub fn sequence_atomic(
    alloc: &Allocation,
    world: &WorldState,
    cfg: &ScenarioConfig,
) -> RoundSchedule {
    let n_robot = cfg.n_robot;
    let robots: &[RobotId] = cfg.robots();
    let any_unpack = alloc
        .queues
        .iter()
        .any(|q| q.iter().any(|p| matches!(p, TaskPrimitive::Unpack { .. })));

    let mut programs: Vec<Vec<AtomicAction>> = Vec::new();
    for robot in robots {
        let queue = &alloc.queues[robot.index()];
        let last_unpack = queue
            .iter()
            .rposition(|p| matches!(p, TaskPrimitive::Unpack { .. }));
        // Fusion applies when the last unpack's own pack comes right after it.
        let fused_pack_idx = last_unpack.and_then(|u| {
            let unpacked = match &queue[u] {
                TaskPrimitive::Unpack { item } => item.id,
                _ => unreachable!(),
            };
            match queue.get(u + 1) {
                Some(TaskPrimitive::Pack { item, .. }) if item.id == unpacked => Some(u + 1),
                _ => None,
            }
        });

        let mut program = Vec::new();
        for (i, prim) in queue.iter().enumerate() {
            match prim {
                TaskPrimitive::Unpack { item } => {
                    program.push(AtomicAction::Pick {
                        source: PickSource::Bin,
                        item: *item,
                    });
                    if fused_pack_idx != Some(i + 1) {
                        program.push(AtomicAction::PlaceToBuffer {
                            item: *item,
                            robot: *robot,
                        });
                    }
                }
                TaskPrimitive::Pack {
                    item,
                    orientation,
                    x,
                    y,
                } => {
                    if fused_pack_idx != Some(i) {
                        let source = if world.conveyor_slot(item.id).is_some() {
                            PickSource::Conveyor
                        } else {
                            PickSource::Buffer
                        };
                        program.push(AtomicAction::Pick {
                            source,
                            item: *item,
                        });
                    }
                    program.push(AtomicAction::PlaceToBin {
                        item: *item,
                        orientation: *orientation,
                        x: *x,
                        y: *y,
                    });
                }
                TaskPrimitive::Terminate => {}
            }
        }
        program.push(AtomicAction::Ready);
        programs.push(program);
    }

    if cfg.is_dual() && any_unpack {
        let tasks = [alloc.queues[0].len(), alloc.queues[1].len()];
        if tasks[0] != tasks[1] {
            let lighter = if tasks[0] < tasks[1] { 0 } else { 1 };
            programs[lighter].insert(0, AtomicAction::Standby);
        }
    }

    let height = programs.iter().map(|p| p.len()).max().unwrap_or(0);
    let mut rounds = Vec::with_capacity(height);
    for i in 0..height {
        let round: Round = programs
            .iter()
            .map(|p| p.get(i).copied().unwrap_or(AtomicAction::Standby))
            .collect();
        debug_assert!(disjoint_bin_touches(&round));
        rounds.push(round);
    }
    RoundSchedule { rounds, n_robot }
}

fn disjoint_bin_touches(round: &Round) -> bool {
    let mut seen: Vec<(u16, u16)> = Vec::new();
    for action in round {
        for cell in action.bin_cells() {
            if seen.contains(&cell) {
                return false;
            }
            seen.push(cell);
        }
    }
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct StepReport {
    /// Rounds containing at least one place-to-bin.
    pub packing_steps: u32,
    pub total_rounds: u32,
    pub busy_rounds: [u32; 2],
}

pub fn count_steps(schedule: &RoundSchedule) -> StepReport {
    let mut packing_steps = 0;
    let mut busy = [0u32; 2];
    for round in &schedule.rounds {
        if round.iter().any(|a| a.is_place_to_bin()) {
            packing_steps += 1;
        }
        for (r, action) in round.iter().enumerate() {
            if !action.is_standby() {
                busy[r] += 1;
            }
        }
    }
    StepReport {
        packing_steps,
        total_rounds: schedule.rounds.len() as u32,
        busy_rounds: busy,
    }
}

/// One JSON line per (round, robot) pair, for inspection and regression
/// diffs.
pub fn schedule_to_jsonl(schedule: &RoundSchedule) -> String {
    #[derive(Serialize)]
    struct Row<'a> {
        round: usize,
        robot: &'a str,
        action: &'a AtomicAction,
        cells: Vec<(u16, u16)>,
    }
    let mut out = String::new();
    for (i, round) in schedule.rounds.iter().enumerate() {
        for (r, action) in round.iter().enumerate() {
            let row = Row {
                round: i,
                robot: if r == 0 { "Front" } else { "Rear" },
                action,
                cells: action.bin_cells(),
            };
            out.push_str(&serde_json::to_string(&row).unwrap());
            out.push('\n');
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{RobotId, ScenarioConfig, TaskPrimitive, WorldState};
    use crate::grid::{ItemSpec, Orientation};

    fn pack(item: ItemSpec, x: u16, y: u16) -> TaskPrimitive {
        TaskPrimitive::Pack {
            item,
            orientation: Orientation::Deg0,
            x,
            y,
        }
    }

    fn world_with_conveyor(cfg: &ScenarioConfig, items: &[ItemSpec]) -> WorldState {
        let mut world = WorldState::new(10, 10);
        for item in items {
            world.push_arrival(*item, cfg).unwrap();
        }
        world.advance_conveyor(cfg);
        world
    }

    fn packed_world(cfg: &ScenarioConfig, n: u32) -> WorldState {
        let mut world = WorldState::new(10, 10);
        for i in 0..n {
            world.push_arrival(ItemSpec::new(i, 1, 1), cfg).unwrap();
            world.advance_conveyor(cfg);
            world
                .exec_primitive(
                    &pack(ItemSpec::new(i, 1, 1), i as u16, 0),
                    RobotId::Front,
                    cfg,
                )
                .unwrap();
        }
        world
    }

    #[test]
    fn new_packs_go_to_nearest_robot() {
        let mut cfg = ScenarioConfig::by_name("D-R5A3O1").unwrap();
        cfg.robot_x = [1.0, 4.0];
        let items: Vec<ItemSpec> = (0..5).map(|i| ItemSpec::new(i, 1, 1)).collect();
        let world = world_with_conveyor(&cfg, &items);
        let action = HighLevelAction {
            primitives: vec![pack(items[0], 0, 0), pack(items[3], 5, 5)],
        };
        let alloc = allocate(&action, &world, &cfg).unwrap();
        assert_eq!(alloc.assignments, vec![RobotId::Front, RobotId::Rear]);
    }

    #[test]
    fn unpacks_alternate_from_less_loaded_robot() {
        let cfg = ScenarioConfig::by_name("D-R5A3O1").unwrap();
        let mut world = packed_world(&cfg, 3);
        world.push_arrival(ItemSpec::new(10, 1, 1), &cfg).unwrap();
        world.push_arrival(ItemSpec::new(11, 1, 1), &cfg).unwrap();
        world.advance_conveyor(&cfg);
        // Both conveyor packs land on the front robot (slots 0 and 1, bases
        // at 0 and 9), seeding loads (2, 0); the three unpacks then go rear,
        // front, rear.
        let mut far_rear = cfg.clone();
        far_rear.robot_x = [0.0, 9.0];
        let action = HighLevelAction {
            primitives: vec![
                TaskPrimitive::Unpack {
                    item: ItemSpec::new(0, 1, 1),
                },
                TaskPrimitive::Unpack {
                    item: ItemSpec::new(1, 1, 1),
                },
                TaskPrimitive::Unpack {
                    item: ItemSpec::new(2, 1, 1),
                },
                pack(ItemSpec::new(10, 1, 1), 5, 5),
                pack(ItemSpec::new(11, 1, 1), 6, 5),
            ],
        };
        let alloc = allocate(&action, &world, &far_rear).unwrap();
        assert_eq!(alloc.assignments[3], RobotId::Front);
        assert_eq!(alloc.assignments[4], RobotId::Front);
        assert_eq!(
            &alloc.assignments[0..3],
            &[RobotId::Rear, RobotId::Front, RobotId::Rear]
        );
    }

    #[test]
    fn buffered_repacks_reverse_unpack_order() {
        let cfg = ScenarioConfig::by_name("D-R5A3O1").unwrap();
        let world = packed_world(&cfg, 2);
        let o1 = ItemSpec::new(0, 1, 1);
        let o2 = ItemSpec::new(1, 1, 1);
        let action = HighLevelAction {
            primitives: vec![
                TaskPrimitive::Unpack { item: o1 },
                TaskPrimitive::Unpack { item: o2 },
                pack(o1, 5, 5),
                pack(o2, 6, 5),
            ],
        };
        let alloc = allocate(&action, &world, &cfg).unwrap();
        // Alternation gives o1 -> front, o2 -> rear; repacks run in reverse
        // unpack order, so the rear robot repacks o2 before the front robot
        // repacks o1.
        let order: Vec<(Option<u32>, RobotId)> = alloc
            .execution_order()
            .iter()
            .map(|(p, r)| (p.item().map(|i| i.id), *r))
            .collect();
        assert_eq!(
            order,
            vec![
                (Some(0), RobotId::Front),
                (Some(1), RobotId::Rear),
                (Some(1), RobotId::Rear),
                (Some(0), RobotId::Front),
            ]
        );
    }

    #[test]
    fn unknown_unpacker_rejected() {
        let cfg = ScenarioConfig::by_name("D-R5A3O1").unwrap();
        let world = WorldState::new(10, 10);
        let action = HighLevelAction {
            primitives: vec![pack(ItemSpec::new(42, 1, 1), 0, 0)],
        };
        let err = allocate(&action, &world, &cfg).unwrap_err();
        assert_eq!(err, AllocError::UnknownUnpacker(42));
    }

    /// One robot unpacking twice repacks in reverse buffer order, and only
    /// the last unpack fuses with its own pack; the earlier one takes the
    /// buffer round-trip.
    #[test]
    fn single_robot_repack_phase_is_lifo() {
        let cfg = ScenarioConfig::by_name("S-R5A3").unwrap();
        let world = packed_world(&cfg, 2);
        let o1 = ItemSpec::new(0, 1, 1);
        let o2 = ItemSpec::new(1, 1, 1);
        // Packs arrive in unpack order; the queue must flip them to LIFO.
        let action = HighLevelAction {
            primitives: vec![
                TaskPrimitive::Unpack { item: o1 },
                TaskPrimitive::Unpack { item: o2 },
                pack(o1, 6, 5),
                pack(o2, 5, 5),
            ],
        };
        let alloc = allocate(&action, &world, &cfg).unwrap();
        assert_eq!(
            alloc.queues[0],
            vec![
                TaskPrimitive::Unpack { item: o1 },
                TaskPrimitive::Unpack { item: o2 },
                pack(o2, 5, 5),
                pack(o1, 6, 5),
            ]
        );
        let schedule = sequence_atomic(&alloc, &world, &cfg);
        let flat: Vec<AtomicAction> = schedule.rounds.iter().map(|r| r[0]).collect();
        assert_eq!(
            flat,
            vec![
                AtomicAction::Pick {
                    source: PickSource::Bin,
                    item: o1,
                },
                AtomicAction::PlaceToBuffer {
                    item: o1,
                    robot: RobotId::Front,
                },
                AtomicAction::Pick {
                    source: PickSource::Bin,
                    item: o2,
                },
                AtomicAction::PlaceToBin {
                    item: o2,
                    orientation: Orientation::Deg0,
                    x: 5,
                    y: 5,
                },
                AtomicAction::Pick {
                    source: PickSource::Buffer,
                    item: o1,
                },
                AtomicAction::PlaceToBin {
                    item: o1,
                    orientation: Orientation::Deg0,
                    x: 6,
                    y: 5,
                },
                AtomicAction::Ready,
            ]
        );
    }

    #[test]
    fn single_pack_program() {
        let cfg = ScenarioConfig::by_name("S-R1A1").unwrap();
        let item = ItemSpec::new(0, 2, 2);
        let world = world_with_conveyor(&cfg, &[item]);
        let action = HighLevelAction {
            primitives: vec![pack(item, 0, 0)],
        };
        let alloc = allocate(&action, &world, &cfg).unwrap();
        let schedule = sequence_atomic(&alloc, &world, &cfg);
        let flat: Vec<AtomicAction> = schedule.rounds.iter().map(|r| r[0]).collect();
        assert_eq!(
            flat,
            vec![
                AtomicAction::Pick {
                    source: PickSource::Conveyor,
                    item,
                },
                AtomicAction::PlaceToBin {
                    item,
                    orientation: Orientation::Deg0,
                    x: 0,
                    y: 0,
                },
                AtomicAction::Ready,
            ]
        );
    }

    #[test]
    fn unpack_then_own_pack_fuses() {
        let cfg = ScenarioConfig::by_name("S-R5A3").unwrap();
        let world = packed_world(&cfg, 1);
        let item = ItemSpec::new(0, 1, 1);
        let action = HighLevelAction {
            primitives: vec![TaskPrimitive::Unpack { item }, pack(item, 5, 5)],
        };
        let alloc = allocate(&action, &world, &cfg).unwrap();
        let schedule = sequence_atomic(&alloc, &world, &cfg);
        let flat: Vec<AtomicAction> = schedule.rounds.iter().map(|r| r[0]).collect();
        assert_eq!(
            flat,
            vec![
                AtomicAction::Pick {
                    source: PickSource::Bin,
                    item,
                },
                AtomicAction::PlaceToBin {
                    item,
                    orientation: Orientation::Deg0,
                    x: 5,
                    y: 5,
                },
                AtomicAction::Ready,
            ]
        );
    }

    #[test]
    fn lighter_robot_leads_with_standby_during_repack() {
        let cfg = ScenarioConfig::by_name("D-R5A3O1").unwrap();
        let world = packed_world(&cfg, 3);
        // Alternation: unpacks go front, rear, front; repacks follow their
        // unpacker, leaving queues of 3 vs 2 tasks.
        let action = HighLevelAction {
            primitives: vec![
                TaskPrimitive::Unpack {
                    item: ItemSpec::new(0, 1, 1),
                },
                TaskPrimitive::Unpack {
                    item: ItemSpec::new(1, 1, 1),
                },
                TaskPrimitive::Unpack {
                    item: ItemSpec::new(2, 1, 1),
                },
                pack(ItemSpec::new(0, 1, 1), 5, 5),
                pack(ItemSpec::new(1, 1, 1), 6, 5),
            ],
        };
        let alloc = allocate(&action, &world, &cfg).unwrap();
        let tasks = [alloc.queues[0].len(), alloc.queues[1].len()];
        assert_eq!(tasks, [3, 2]);
        let schedule = sequence_atomic(&alloc, &world, &cfg);
        assert!(schedule.rounds[0][1].is_standby());
        assert!(!schedule.rounds[0][0].is_standby());
    }

    #[test]
    fn count_steps_single_robot_five_packs() {
        let cfg = ScenarioConfig::by_name("S-R5A3").unwrap();
        let items: Vec<ItemSpec> = (0..5).map(|i| ItemSpec::new(i, 1, 1)).collect();
        let world = world_with_conveyor(&cfg, &items);
        let action = HighLevelAction {
            primitives: items
                .iter()
                .enumerate()
                .map(|(i, it)| pack(*it, i as u16, 0))
                .collect(),
        };
        let alloc = allocate(&action, &world, &cfg).unwrap();
        let report = count_steps(&sequence_atomic(&alloc, &world, &cfg));
        assert_eq!(report.packing_steps, 5);
    }

    #[test]
    fn count_steps_dual_aligned_places() {
        let mut cfg = ScenarioConfig::by_name("D-R5A3O1").unwrap();
        cfg.robot_x = [0.0, 4.0];
        let items: Vec<ItemSpec> = (0..5).map(|i| ItemSpec::new(i, 1, 1)).collect();
        let world = world_with_conveyor(&cfg, &items);
        // Slots 0,1 -> front; slots 3,4 -> rear: a 2/2 split.
        let action = HighLevelAction {
            primitives: vec![
                pack(items[0], 0, 0),
                pack(items[3], 3, 0),
                pack(items[1], 1, 0),
                pack(items[4], 4, 0),
            ],
        };
        let alloc = allocate(&action, &world, &cfg).unwrap();
        let report = count_steps(&sequence_atomic(&alloc, &world, &cfg));
        assert_eq!(report.packing_steps, 2);
    }

    #[test]
    fn count_steps_dual_five_packs_is_three() {
        let mut cfg = ScenarioConfig::by_name("D-R5A3O1").unwrap();
        cfg.robot_x = [0.0, 4.0];
        let items: Vec<ItemSpec> = (0..5).map(|i| ItemSpec::new(i, 1, 1)).collect();
        let world = world_with_conveyor(&cfg, &items);
        let action = HighLevelAction {
            primitives: items
                .iter()
                .enumerate()
                .map(|(i, it)| pack(*it, i as u16, 0))
                .collect(),
        };
        let alloc = allocate(&action, &world, &cfg).unwrap();
        // Slots 0,1,2 -> front (slot 2 ties, front wins); 3,4 -> rear. The
        // pack-only programs zip without a leading standby, so places align
        // and one robot idles in the last round.
        let report = count_steps(&sequence_atomic(&alloc, &world, &cfg));
        assert_eq!(report.packing_steps, 3);
        assert_eq!(report.total_rounds, 7);
    }

    /// No robot holds two items at once: picks and places alternate.
    #[test]
    fn hold_one_invariant() {
        let cfg = ScenarioConfig::by_name("D-R5A3O1").unwrap();
        let mut world = packed_world(&cfg, 3);
        world.push_arrival(ItemSpec::new(10, 2, 2), &cfg).unwrap();
        world.push_arrival(ItemSpec::new(11, 2, 2), &cfg).unwrap();
        world.advance_conveyor(&cfg);
        let action = HighLevelAction {
            primitives: vec![
                TaskPrimitive::Unpack {
                    item: ItemSpec::new(2, 1, 1),
                },
                TaskPrimitive::Unpack {
                    item: ItemSpec::new(1, 1, 1),
                },
                pack(ItemSpec::new(2, 1, 1), 5, 5),
                pack(ItemSpec::new(10, 2, 2), 7, 7),
                pack(ItemSpec::new(11, 2, 2), 0, 5),
            ],
        };
        let alloc = allocate(&action, &world, &cfg).unwrap();
        let schedule = sequence_atomic(&alloc, &world, &cfg);
        for robot in 0..2 {
            let mut holding = false;
            for round in &schedule.rounds {
                match round[robot] {
                    AtomicAction::Pick { .. } => {
                        assert!(!holding, "second pick while holding");
                        holding = true;
                    }
                    AtomicAction::PlaceToBin { .. } | AtomicAction::PlaceToBuffer { .. } => {
                        assert!(holding, "place without pick");
                        holding = false;
                    }
                    _ => {}
                }
            }
            assert!(!holding);
        }
    }

    #[test]
    fn schedule_export_is_one_line_per_robot_round() {
        let cfg = ScenarioConfig::by_name("S-R1A1").unwrap();
        let item = ItemSpec::new(0, 2, 1);
        let world = world_with_conveyor(&cfg, &[item]);
        let action = HighLevelAction {
            primitives: vec![pack(item, 0, 0)],
        };
        let alloc = allocate(&action, &world, &cfg).unwrap();
        let schedule = sequence_atomic(&alloc, &world, &cfg);
        let jsonl = schedule_to_jsonl(&schedule);
        assert_eq!(jsonl.lines().count(), schedule.rounds.len());
        assert!(jsonl.lines().all(|l| l.starts_with('{')));
    }
}

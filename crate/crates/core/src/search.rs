//! The hierarchical controller: depth-first selective beam search over
//! packing orders and orientations, candidate-sequence reordering, forward
//! simulation and scoring, best-action selection, and repacking trials.
//!
//! The tree packs one item per level at the position proposed by the
//! low-level policy. Each root-to-leaf path yields a tuple sequence that is
//! reordered for executability (buffered items first, then currently
//! accessible ones, then the rest in arrival order), replayed in simulation
//! to score it, and compiled into a high-level action. When the chosen
//! sequence leaves items unplaced, a repacking trial unpacks subsets of the
//! packed items, newest first, and re-searches.

use std::time::{Duration, Instant};

use thiserror::Error;

use crate::env::{EnvError, HighLevelAction, RobotId, ScenarioConfig, TaskPrimitive, WorldState};
use crate::grid::{decode_action, rotated_size, GridBin, ItemSpec, Orientation, PositionAction};
use crate::policy::{PlacementPolicy, PolicyError};

#[derive(Debug, Error)]
pub enum SearchError {
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Env(#[from] EnvError),
}

/// Search knobs for one planning round.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchConfig {
    /// Candidates kept per node; `None` skips pruning entirely.
    pub beam_width: Option<usize>,
    /// Pruning is skipped once fewer than this many items remain.
    pub prune_floor: usize,
    /// Accept only repack solutions that place every known item.
    pub require_full_pack: bool,
    pub use_repack: bool,
    pub repack_budget: Duration,
    /// Consider both orientations of every item.
    pub rotation: bool,
    pub collect_trace: bool,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            beam_width: None,
            prune_floor: 3,
            require_full_pack: false,
            use_repack: false,
            repack_budget: Duration::from_secs(1),
            rotation: true,
            collect_trace: false,
        }
    }
}

/// One tree edge: an item packed (or failed to pack) at a policy-chosen
/// position, with the node depth it was expanded at.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TupleEntry {
    pub item: ItemSpec,
    pub orientation: Orientation,
    pub action: PositionAction,
    pub reward: u32,
    pub depth: u32,
}

/// A root-to-leaf tuple sequence, raw or reordered for executability.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSequence {
    pub entries: Vec<TupleEntry>,
    pub contains_no_position: bool,
    pub reordered: bool,
}

/// A simulated candidate: cumulative reward, resulting occupancy, the
/// compiled action, and the depth sum of the items the action includes.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluatedSequence {
    pub sequence: CandidateSequence,
    pub score: u64,
    pub occupied: u32,
    pub util: f64,
    pub action: HighLevelAction,
    pub depth_sum: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub struct TraceEvent {
    pub depth: u32,
    pub item: u32,
    pub orientation: Orientation,
    pub action: u32,
    pub reward: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RepackStats {
    pub attempted: bool,
    pub success: bool,
    pub duration: Duration,
    pub unpacked_items: usize,
}

/// Result of one planning round.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    pub action: HighLevelAction,
    /// Bin state after executing the action, for consistency checks.
    pub predicted_bin: GridBin,
    pub predicted_occupied: u32,
    /// Highest simulated occupancy over every candidate sequence this round
    /// evaluated, including repack trials. The chosen action can simulate
    /// lower: selection ranks by score first, utilization second.
    pub best_candidate_occupied: u32,
    pub repack: RepackStats,
    pub trace: Option<Vec<TraceEvent>>,
}

struct Candidate {
    item: ItemSpec,
    orientation: Orientation,
    action: PositionAction,
    reward: u32,
    no_position: bool,
}

/// Stable order: reward descending, then item area descending, then item id
/// ascending, then 0-degree orientation first.
fn reward_sorting(candidates: &mut [Candidate]) {
    candidates.sort_by(|a, b| {
        b.reward
            .cmp(&a.reward)
            .then(b.item.area().cmp(&a.item.area()))
            .then(a.item.id.cmp(&b.item.id))
            .then(orientation_key(a.orientation).cmp(&orientation_key(b.orientation)))
    });
}

fn orientation_key(phi: Orientation) -> u8 {
    match phi {
        Orientation::Deg0 => 0,
        Orientation::Deg90 => 1,
    }
}

/// Keeps the top `beam` candidates. Pruning is skipped when fewer than
/// `prune_floor` items remain; when every candidate is a no-position action
/// exactly one is retained to preserve the partial sequence.
fn selection(
    candidates: Vec<Candidate>,
    beam: Option<usize>,
    prune_floor: usize,
    remaining_items: usize,
) -> Vec<Candidate> {
    let Some(k) = beam else {
        return candidates;
    };
    if candidates.iter().all(|c| c.no_position) {
        return candidates.into_iter().take(1).collect();
    }
    if remaining_items < prune_floor {
        return candidates;
    }
    candidates.into_iter().take(k).collect()
}

/// Reorders a raw sequence into an executable job queue: buffered items
/// first, then items accessible at the root, both in tree order, then
/// inaccessible items in arrival order.
fn sequence_sorting(
    entries: Vec<TupleEntry>,
    root: &WorldState,
    scenario: &ScenarioConfig,
) -> CandidateSequence {
    let w = root.bin.width();
    let h = root.bin.height();
    let contains_no_position = entries.iter().any(|e| e.action.is_no_position(w, h));
    let mut keyed: Vec<(u8, usize, TupleEntry)> = entries
        .into_iter()
        .map(|e| {
            let (class, arrival) = if root.buffered_owner(e.item.id).is_some() {
                (0u8, 0usize)
            } else if root.is_accessible_any(e.item.id, scenario) {
                (1, 0)
            } else {
                (2, root.conveyor_slot(e.item.id).unwrap_or(usize::MAX))
            };
            (class, arrival, e)
        })
        .collect();
    keyed.sort_by_key(|(class, arrival, _)| (*class, *arrival));
    CandidateSequence {
        entries: keyed.into_iter().map(|(_, _, e)| e).collect(),
        contains_no_position,
        reordered: true,
    }
}

struct ExpansionCtx<'a> {
    scenario: &'a ScenarioConfig,
    cfg: &'a SearchConfig,
    policy: &'a mut dyn PlacementPolicy,
    root: &'a WorldState,
    /// Abort branches containing an unplaceable item and stop at the first
    /// full pack. Repack trials pass the configured flag; the initial search
    /// always runs without it.
    full_pack: bool,
    sequences: Vec<CandidateSequence>,
    trace: Option<Vec<TraceEvent>>,
}

/// Depth-first selective expansion. Returns whether a bin-filling solution
/// was found (only ever true in full-pack mode).
fn tree_expansion(
    ctx: &mut ExpansionCtx<'_>,
    node: &WorldState,
    chi: &mut Vec<TupleEntry>,
    depth: u32,
    accessible_packed: u32,
) -> Result<bool, SearchError> {
    let w = node.bin.width();
    let h = node.bin.height();
    let known = node.known_items();
    let mut stop = accessible_packed == 0;
    let orientations: &[Orientation] = if ctx.cfg.rotation {
        &Orientation::BOTH
    } else {
        &[Orientation::Deg0]
    };

    let mut candidates: Vec<Candidate> = Vec::with_capacity(known.len() * orientations.len());
    for item in &known {
        let mut all_no_position = true;
        for &phi in orientations {
            let size = rotated_size(*item, phi);
            let decision = ctx.policy.decide(&node.bin, size)?;
            let no_position = decision.action.is_no_position(w, h);
            if !no_position {
                all_no_position = false;
                if node.is_accessible_any(item.id, ctx.scenario) {
                    stop = false;
                }
            }
            if let Some(trace) = &mut ctx.trace {
                trace.push(TraceEvent {
                    depth,
                    item: item.id,
                    orientation: phi,
                    action: decision.action.0,
                    reward: decision.score,
                });
            }
            candidates.push(Candidate {
                item: *item,
                orientation: phi,
                action: decision.action,
                reward: decision.score,
                no_position,
            });
        }
        // A branch where some item can never be placed cannot reach full
        // utilization; abandon it immediately.
        if ctx.full_pack && all_no_position {
            return Ok(false);
        }
    }
    if stop {
        return Ok(false);
    }

    reward_sorting(&mut candidates);
    let selected = selection(
        candidates,
        ctx.cfg.beam_width,
        ctx.cfg.prune_floor,
        known.len(),
    );

    for cand in selected {
        chi.push(TupleEntry {
            item: cand.item,
            orientation: cand.orientation,
            action: cand.action,
            reward: cand.reward,
            depth,
        });
        let mut child: Option<WorldState> = None;
        let mut full = false;
        let mut next_accessible = accessible_packed;
        if !cand.no_position {
            if node.is_accessible_any(cand.item.id, ctx.scenario) {
                next_accessible += 1;
            }
            let (x, y) = decode_action(cand.action, w, h).expect("feasible action decodes");
            let mut child_world = node.clone();
            child_world.virtual_pack(cand.item, cand.orientation, x, y, ctx.scenario)?;
            full = child_world.bin.is_full();
            child = Some(child_world);
        }
        let child_exhausted = child.as_ref().is_some_and(|c| c.known_count() == 0);
        if cand.no_position || child_exhausted || full {
            let sequence = sequence_sorting(chi.clone(), ctx.root, ctx.scenario);
            ctx.sequences.push(sequence);
            chi.pop();
            if ctx.full_pack && full {
                return Ok(true);
            }
            continue;
        }
        let solved = tree_expansion(
            ctx,
            child.as_ref().unwrap(),
            chi,
            depth + 1,
            next_accessible,
        )?;
        chi.pop();
        if solved {
            return Ok(true);
        }
    }
    Ok(false)
}

/// Replays a reordered sequence on a cloned world.
///
/// Valid-position tuples of buffered or currently accessible items execute
/// and add their recorded reward to the score; the conveyor advances after
/// each pack, possibly unlocking later tuples; everything else is skipped.
/// The compiled action carries every buffered-item pack plus at most one
/// accessible-item pack per robot, chosen by ascending depth under the
/// dual-arm reachability rule. A terminate primitive is appended when the
/// post-action world has nothing packable.
fn forward_simulate(
    sequence: CandidateSequence,
    root: &WorldState,
    scenario: &ScenarioConfig,
    cfg: &SearchConfig,
) -> Result<EvaluatedSequence, SearchError> {
    let w = root.bin.width();
    let h = root.bin.height();
    let mut sim = root.clone();
    let mut score = 0u64;
    let mut buffered_packs: Vec<(TupleEntry, TaskPrimitive)> = Vec::new();
    let mut accessible_candidates: Vec<(u32, usize, TupleEntry, TaskPrimitive)> = Vec::new();

    for (pos, entry) in sequence.entries.iter().enumerate() {
        if entry.action.is_no_position(w, h) {
            continue;
        }
        let in_buffer = sim.buffered_owner(entry.item.id).is_some();
        if !in_buffer && !sim.is_accessible_any(entry.item.id, scenario) {
            continue;
        }
        let (x, y) = decode_action(entry.action, w, h).expect("valid action");
        sim.virtual_pack(entry.item, entry.orientation, x, y, scenario)?;
        score += u64::from(entry.reward);
        let prim = TaskPrimitive::Pack {
            item: entry.item,
            orientation: entry.orientation,
            x,
            y,
        };
        if in_buffer {
            buffered_packs.push((*entry, prim));
        } else {
            let (front, rear) = root.reachable_by(entry.item.id, scenario);
            if front || rear {
                accessible_candidates.push((entry.depth, pos, *entry, prim));
            }
        }
    }

    accessible_candidates.sort_by_key(|(depth, pos, _, _)| (*depth, *pos));
    let mut emitted_indices = pick_robot_assignable(&accessible_candidates, root, scenario);
    // Emit in sequence order, after the buffered packs.
    emitted_indices.sort_by_key(|&i| accessible_candidates[i].1);

    let mut action = HighLevelAction::default();
    let mut depth_sum = 0u64;
    for (entry, prim) in &buffered_packs {
        action.primitives.push(*prim);
        depth_sum += u64::from(entry.depth);
    }
    for &i in &emitted_indices {
        let (depth, _, _, prim) = &accessible_candidates[i];
        action.primitives.push(*prim);
        depth_sum += u64::from(*depth);
    }

    // Terminate when executing just this action leaves known items with no
    // feasible placement. An emptied window is not a termination signal: the
    // unrecognized remainder of the stream may still arrive.
    let mut post = root.clone();
    for prim in &action.primitives {
        post.exec_primitive(prim, RobotId::Front, scenario)?;
    }
    if post.known_count() > 0 && !any_packable(&post, scenario, cfg) {
        action.primitives.push(TaskPrimitive::Terminate);
    }

    let occupied = sim.bin.occupied_cells();
    Ok(EvaluatedSequence {
        util: f64::from(occupied) / f64::from(sim.bin.cell_count()),
        sequence,
        score,
        occupied,
        action,
        depth_sum,
    })
}

/// Selects at most one accessible pack per robot, smallest depth first. When
/// the first pick is reachable by only one robot, the other robot takes the
/// next candidate it can reach; when both robots can reach the first pick,
/// the next candidate reachable by either completes the pair.
fn pick_robot_assignable(
    candidates: &[(u32, usize, TupleEntry, TaskPrimitive)],
    root: &WorldState,
    scenario: &ScenarioConfig,
) -> Vec<usize> {
    if candidates.is_empty() {
        return Vec::new();
    }
    if !scenario.is_dual() {
        return vec![0];
    }
    let reach = |idx: usize| root.reachable_by(candidates[idx].2.item.id, scenario);
    let (front0, rear0) = reach(0);
    debug_assert!(front0 || rear0);
    if front0 != rear0 {
        let need_front = !front0;
        for j in 1..candidates.len() {
            let (fj, rj) = reach(j);
            if (need_front && fj) || (!need_front && rj) {
                return vec![0, j];
            }
        }
        vec![0]
    } else {
        for j in 1..candidates.len() {
            let (fj, rj) = reach(j);
            if fj || rj {
                return vec![0, j];
            }
        }
        vec![0]
    }
}

fn any_packable(world: &WorldState, scenario: &ScenarioConfig, cfg: &SearchConfig) -> bool {
    let orientations: &[Orientation] = if cfg.rotation {
        &Orientation::BOTH
    } else {
        &[Orientation::Deg0]
    };
    world.known_items().iter().any(|item| {
        world.is_accessible_any(item.id, scenario)
            && orientations.iter().any(|&phi| {
                !world
                    .bin
                    .feasibility_mask(rotated_size(*item, phi))
                    .no_position_only()
            })
    })
}

/// Highest score wins; ties fall to higher utilization, then smaller depth
/// sum, then the lexicographically smallest item-id sequence; a remaining
/// tie keeps the earliest candidate.
fn best_action_selection(evaluated: &[EvaluatedSequence]) -> usize {
    assert!(
        !evaluated.is_empty(),
        "selection over an empty candidate set"
    );
    let ids = |e: &EvaluatedSequence| -> Vec<u32> {
        e.sequence.entries.iter().map(|t| t.item.id).collect()
    };
    let mut best = 0;
    for i in 1..evaluated.len() {
        let a = &evaluated[i];
        let b = &evaluated[best];
        let better = a
            .score
            .cmp(&b.score)
            .then(a.occupied.cmp(&b.occupied))
            .then(b.depth_sum.cmp(&a.depth_sum))
            .then_with(|| ids(b).cmp(&ids(a)));
        if better == std::cmp::Ordering::Greater {
            best = i;
        }
    }
    best
}

/// One JSON line per visited (node, item, orientation) policy query, for
/// debugging and regression diffs.
pub fn trace_to_jsonl(events: &[TraceEvent]) -> String {
    let mut out = String::new();
    for event in events {
        out.push_str(&serde_json::to_string(event).expect("trace event serializes"));
        out.push('\n');
    }
    out
}

fn expand_and_evaluate(
    world: &WorldState,
    scenario: &ScenarioConfig,
    cfg: &SearchConfig,
    policy: &mut dyn PlacementPolicy,
    full_pack: bool,
    trace: bool,
) -> Result<(Vec<EvaluatedSequence>, Option<Vec<TraceEvent>>), SearchError> {
    let mut ctx = ExpansionCtx {
        scenario,
        cfg,
        policy,
        root: world,
        full_pack,
        sequences: Vec::new(),
        trace: trace.then(Vec::new),
    };
    let mut chi = Vec::new();
    tree_expansion(&mut ctx, world, &mut chi, 0, 0)?;
    let trace_out = ctx.trace.take();
    let mut evaluated = Vec::with_capacity(ctx.sequences.len());
    for sequence in ctx.sequences {
        evaluated.push(forward_simulate(sequence, world, scenario, cfg)?);
    }
    Ok((evaluated, trace_out))
}

/// One planning round: expand, evaluate, select, and optionally repack when
/// the chosen sequence still leaves items unplaced.
pub fn high_level_search(
    world: &WorldState,
    scenario: &ScenarioConfig,
    cfg: &SearchConfig,
    policy: &mut dyn PlacementPolicy,
) -> Result<SearchOutcome, SearchError> {
    let (evaluated, trace) =
        expand_and_evaluate(world, scenario, cfg, policy, false, cfg.collect_trace)?;
    let no_candidates = evaluated.is_empty();
    let mut best_candidate_occupied = evaluated
        .iter()
        .map(|e| e.occupied)
        .max()
        .unwrap_or_else(|| world.bin.occupied_cells());
    let (mut action, best_occupied, chi_star_no_position) = if no_candidates {
        (
            HighLevelAction::terminate(),
            world.bin.occupied_cells(),
            false,
        )
    } else {
        let best = best_action_selection(&evaluated);
        (
            evaluated[best].action.clone(),
            evaluated[best].occupied,
            evaluated[best].sequence.contains_no_position,
        )
    };

    let mut repack = RepackStats::default();
    if (no_candidates || chi_star_no_position) && cfg.use_repack {
        let started = Instant::now();
        let trial = repack_trial(world, best_occupied, scenario, cfg, policy)?;
        best_candidate_occupied = best_candidate_occupied.max(trial.best_candidate_occupied);
        repack = RepackStats {
            attempted: true,
            success: trial.success,
            duration: started.elapsed(),
            unpacked_items: trial.action.unpack_count(),
        };
        if trial.success {
            action = trial.action;
        }
    }

    // A selected sequence can compile to an empty action when pruning left
    // only branches that start with unreachable items; terminating is the
    // only executable choice then.
    if action.is_empty() {
        action = HighLevelAction::terminate();
    }

    let mut post = world.clone();
    let mut unpack_robot = RobotId::Front;
    for prim in &action.primitives {
        post.exec_primitive(prim, unpack_robot, scenario)?;
        if matches!(prim, TaskPrimitive::Unpack { .. }) && scenario.is_dual() {
            unpack_robot = unpack_robot.other();
        }
    }
    Ok(SearchOutcome {
        predicted_occupied: post.bin.occupied_cells(),
        predicted_bin: post.bin,
        action,
        best_candidate_occupied,
        repack,
        trace,
    })
}

/// Index combinations of `0..n` taken `k` at a time, lexicographic.
fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if k > n || k == 0 {
        return out;
    }
    let mut combo: Vec<usize> = (0..k).collect();
    loop {
        out.push(combo.clone());
        let mut i = k;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if combo[i] != i + n - k {
                break;
            }
        }
        combo[i] += 1;
        for j in i + 1..k {
            combo[j] = combo[j - 1] + 1;
        }
    }
}

/// Result of a repacking trial.
#[derive(Debug, Clone, PartialEq)]
pub struct RepackOutcome {
    pub action: HighLevelAction,
    pub success: bool,
    /// Highest simulated occupancy among every sequence any subset's
    /// re-search evaluated.
    pub best_candidate_occupied: u32,
}

/// Unpack-and-research improvement loop.
///
/// Subset sizes grow from 1 to every packed item; subsets of equal size are
/// tried in decreasing seq-stamp order, so recently packed items move first.
/// In full-pack mode the first sequence free of no-position actions wins
/// immediately; otherwise the best utilization improvement over
/// `best_occupied` is kept. The loop runs until the budget expires, except
/// that a deterministic policy stops after a sweep without improvement
/// (further sweeps would repeat it verbatim). The budget is checked between
/// subsets only, so individual expansions are never cut short.
pub fn repack_trial(
    world: &WorldState,
    best_occupied: u32,
    scenario: &ScenarioConfig,
    cfg: &SearchConfig,
    policy: &mut dyn PlacementPolicy,
) -> Result<RepackOutcome, SearchError> {
    let started = Instant::now();
    let mut outcome = RepackOutcome {
        action: HighLevelAction::default(),
        success: false,
        best_candidate_occupied: 0,
    };
    let mut best = best_occupied;

    let mut newest_first = world.packed.clone();
    newest_first.sort_by_key(|p| std::cmp::Reverse(p.seq));
    if newest_first.is_empty() {
        return Ok(outcome);
    }

    'sweeps: loop {
        let mut improved = false;
        for subset_size in 1..=newest_first.len() {
            for combo in combinations(newest_first.len(), subset_size) {
                if started.elapsed() >= cfg.repack_budget {
                    break 'sweeps;
                }
                let mut trial_world = world.clone();
                let mut unpacks = Vec::with_capacity(subset_size);
                let mut robot = RobotId::Front;
                let mut over_capacity = false;
                for &idx in &combo {
                    let item = newest_first[idx].item;
                    let prim = TaskPrimitive::Unpack { item };
                    match trial_world.exec_primitive(&prim, robot, scenario) {
                        Ok(()) => {}
                        // Bounded buffers rule this subset out, not the trial.
                        Err(EnvError::BufferFull(_)) => {
                            over_capacity = true;
                            break;
                        }
                        Err(e) => return Err(e.into()),
                    }
                    if scenario.is_dual() {
                        robot = robot.other();
                    }
                    unpacks.push(prim);
                }
                if over_capacity {
                    continue;
                }
                let (evaluated, _) = expand_and_evaluate(
                    &trial_world,
                    scenario,
                    cfg,
                    policy,
                    cfg.require_full_pack,
                    false,
                )?;
                if evaluated.is_empty() {
                    continue;
                }
                for eval in &evaluated {
                    outcome.best_candidate_occupied =
                        outcome.best_candidate_occupied.max(eval.occupied);
                }
                let idx = best_action_selection(&evaluated);
                let chosen = &evaluated[idx];
                let mut composed = HighLevelAction {
                    primitives: unpacks.clone(),
                };
                composed
                    .primitives
                    .extend(chosen.action.primitives.iter().copied());
                if cfg.require_full_pack {
                    if !chosen.sequence.contains_no_position {
                        outcome.action = composed;
                        outcome.success = true;
                        return Ok(outcome);
                    }
                } else if chosen.occupied > best {
                    best = chosen.occupied;
                    outcome.action = composed;
                    outcome.success = true;
                    improved = true;
                }
            }
        }
        if started.elapsed() >= cfg.repack_budget {
            break;
        }
        if !improved && policy.is_deterministic() {
            break;
        }
    }
    Ok(outcome)
}

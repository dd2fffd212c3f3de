//! The high-level world: conveyor with accessibility zones, recognized item
//! window, per-robot buffers, packed-item ledger, and primitive execution.
//!
//! Items arrive at the rear of the conveyor and advance toward the front.
//! In dual-robot scenarios the zoned stretch splits into `beta` (front
//! exclusive), `O` (overlapping, reachable by both arms), and `alpha` (rear
//! exclusive) with capacities `(n_A - n_O, n_O, n_A - n_O)`. The conveyor
//! controller rebalances zone counts after every pick or arrival so neither
//! arm starves.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{GridBin, GridError, ItemSpec, Orientation, Placement};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EnvError {
    #[error("scenario invalid: {0}")]
    BadScenario(String),
    #[error("recognition window is full")]
    WindowFull,
    #[error("item {0} is not on the conveyor or in a buffer")]
    ItemNotAvailable(u32),
    #[error("item {0} is not packed")]
    ItemNotPacked(u32),
    #[error("buffer of robot {0:?} is full")]
    BufferFull(RobotId),
    #[error("episode already terminated")]
    Terminated,
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// One of the (at most two) manipulators. `Front` works the conveyor's front
/// end, `Rear` the upstream end.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RobotId {
    Front,
    Rear,
}

impl RobotId {
    pub fn index(self) -> usize {
        match self {
            RobotId::Front => 0,
            RobotId::Rear => 1,
        }
    }

    pub fn other(self) -> RobotId {
        match self {
            RobotId::Front => RobotId::Rear,
            RobotId::Rear => RobotId::Front,
        }
    }
}

/// Conveyor zone of a slot. `Beyond` slots are recognized but not yet
/// positioned within reach.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Zone {
    Beta,
    Overlap,
    Alpha,
    Beyond,
}

/// A named robot/conveyor setup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub id: String,
    pub n_robot: u8,
    /// Max recognized items (window size).
    pub n_recognized: usize,
    /// Accessible items per robot.
    pub n_accessible: usize,
    /// Items in the overlapping workspace (dual only).
    pub n_overlap: usize,
    /// Robot base coordinates along the conveyor axis, in slot units.
    pub robot_x: [f64; 2],
    /// Per-robot buffer capacity; `None` is unbounded.
    pub buffer_cap: Option<usize>,
}

impl ScenarioConfig {
    pub fn new(
        id: &str,
        n_robot: u8,
        n_recognized: usize,
        n_accessible: usize,
        n_overlap: usize,
    ) -> Self {
        let n_max = n_accessible * usize::from(n_robot)
            - n_overlap * (usize::from(n_robot).saturating_sub(1));
        let rear_x = n_max.saturating_sub(1).max(1) as f64;
        ScenarioConfig {
            id: id.to_string(),
            n_robot,
            n_recognized,
            n_accessible,
            n_overlap,
            robot_x: [0.0, rear_x],
            buffer_cap: None,
        }
    }

    /// The six named presets.
    pub fn presets() -> Vec<ScenarioConfig> {
        vec![
            ScenarioConfig::new("S-R1A1", 1, 1, 1, 0),
            ScenarioConfig::new("S-R5A1", 1, 5, 1, 0),
            ScenarioConfig::new("S-R5A3", 1, 5, 3, 0),
            ScenarioConfig::new("D-R2A2O2", 2, 2, 2, 2),
            ScenarioConfig::new("D-R5A2O2", 2, 5, 2, 2),
            ScenarioConfig::new("D-R5A3O1", 2, 5, 3, 1),
        ]
    }

    pub fn by_name(name: &str) -> Option<ScenarioConfig> {
        ScenarioConfig::presets().into_iter().find(|s| s.id == name)
    }

    pub fn is_dual(&self) -> bool {
        self.n_robot == 2
    }

    pub fn robots(&self) -> &'static [RobotId] {
        if self.is_dual() {
            &[RobotId::Front, RobotId::Rear]
        } else {
            &[RobotId::Front]
        }
    }

    /// Maximum number of items jointly reachable:
    /// `n_A * n_robot - n_O * (n_robot - 1)`.
    pub fn n_max(&self) -> usize {
        self.n_accessible * usize::from(self.n_robot)
            - self.n_overlap * (usize::from(self.n_robot).saturating_sub(1))
    }

    /// Zone capacities `(beta, overlap, alpha)`; single-robot setups put the
    /// whole reach in `beta`.
    pub fn zone_caps(&self) -> (usize, usize, usize) {
        if self.is_dual() {
            let excl = self.n_accessible - self.n_overlap;
            (excl, self.n_overlap, excl)
        } else {
            (self.n_accessible, 0, 0)
        }
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        if self.n_robot == 0 || self.n_robot > 2 {
            return Err(EnvError::BadScenario(format!(
                "n_robot must be 1 or 2, got {}",
                self.n_robot
            )));
        }
        if self.n_accessible == 0 || self.n_recognized == 0 {
            return Err(EnvError::BadScenario(
                "n_accessible and n_recognized must be positive".into(),
            ));
        }
        if self.is_dual() && self.n_overlap > self.n_accessible {
            return Err(EnvError::BadScenario(format!(
                "n_overlap {} exceeds n_accessible {}",
                self.n_overlap, self.n_accessible
            )));
        }
        if self.n_max() > self.n_recognized {
            return Err(EnvError::BadScenario(format!(
                "n_max {} exceeds n_recognized {}",
                self.n_max(),
                self.n_recognized
            )));
        }
        Ok(())
    }
}

/// The recognized conveyor window plus zone occupancy counts.
///
/// `queue[0]` is the front item (next to reach the robots). The first
/// `k_total` queued items are positioned in zones; assignment follows queue
/// order front to back: `k_beta` in beta, then `k_overlap` in O, then
/// `k_alpha` in alpha.
#[derive(Debug, Clone, PartialEq)]
pub struct ConveyorState {
    pub queue: VecDeque<ItemSpec>,
    pub k_beta: usize,
    pub k_overlap: usize,
    pub k_alpha: usize,
}

impl ConveyorState {
    pub fn new() -> Self {
        ConveyorState {
            queue: VecDeque::new(),
            k_beta: 0,
            k_overlap: 0,
            k_alpha: 0,
        }
    }

    pub fn k_total(&self) -> usize {
        self.k_beta + self.k_overlap + self.k_alpha
    }

    /// Repositions items into zones after picks or arrivals.
    ///
    /// At most `n_max` items occupy zones. When they all fit the zones are
    /// filled continuously front to back; otherwise the dual-robot balancing
    /// rules apply, computing the overlap count first, then alpha (which
    /// never shrinks, since the belt only moves forward), then beta as the
    /// remainder.
    pub fn advance(&mut self, cfg: &ScenarioConfig) {
        let n_max = cfg.n_max();
        let k_total = self.queue.len().min(n_max);
        if !cfg.is_dual() {
            self.k_beta = k_total;
            self.k_overlap = 0;
            self.k_alpha = 0;
            return;
        }
        let (cap_beta, cap_o, cap_alpha) = cfg.zone_caps();
        if k_total >= n_max {
            self.k_beta = cap_beta;
            self.k_overlap = cap_o;
            self.k_alpha = cap_alpha;
        } else if k_total == 0 {
            self.k_beta = 0;
            self.k_overlap = 0;
            self.k_alpha = 0;
        } else {
            let prev_alpha = self.k_alpha;
            let k_o = k_total.saturating_sub(prev_alpha).min(cfg.n_overlap);
            let k_a = prev_alpha.max((k_total / 2 + 1).saturating_sub(k_o));
            let k_b = k_total - k_a - k_o;
            self.k_overlap = k_o;
            self.k_alpha = k_a;
            self.k_beta = k_b;
        }
        debug_assert_eq!(self.k_total(), k_total);
        debug_assert!(self.k_overlap <= cfg.n_overlap);
        debug_assert!(self.k_beta <= cap_beta && self.k_alpha <= cap_alpha);
    }

    pub fn zone_of_slot(&self, slot: usize) -> Zone {
        if slot < self.k_beta {
            Zone::Beta
        } else if slot < self.k_beta + self.k_overlap {
            Zone::Overlap
        } else if slot < self.k_total() {
            Zone::Alpha
        } else {
            Zone::Beyond
        }
    }

    /// Removes a picked item, keeping the zone counts in step so the next
    /// rebalance sees the true post-pick distribution.
    pub fn remove_slot(&mut self, slot: usize) -> Option<ItemSpec> {
        if slot >= self.queue.len() {
            return None;
        }
        match self.zone_of_slot(slot) {
            Zone::Beta => self.k_beta -= 1,
            Zone::Overlap => self.k_overlap -= 1,
            Zone::Alpha => self.k_alpha -= 1,
            Zone::Beyond => {}
        }
        self.queue.remove(slot)
    }

    /// Whether `robot` can reach the item at `slot`.
    pub fn slot_reachable(&self, slot: usize, robot: RobotId, cfg: &ScenarioConfig) -> bool {
        if !cfg.is_dual() {
            return slot < self.k_total();
        }
        matches!(
            (self.zone_of_slot(slot), robot),
            (Zone::Beta, RobotId::Front) | (Zone::Overlap, _) | (Zone::Alpha, RobotId::Rear)
        )
    }
}

impl Default for ConveyorState {
    fn default() -> Self {
        ConveyorState::new()
    }
}

/// A high-level task primitive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TaskPrimitive {
    Pack {
        item: ItemSpec,
        orientation: Orientation,
        x: u16,
        y: u16,
    },
    Unpack {
        item: ItemSpec,
    },
    Terminate,
}

impl TaskPrimitive {
    pub fn item(&self) -> Option<ItemSpec> {
        match self {
            TaskPrimitive::Pack { item, .. } | TaskPrimitive::Unpack { item } => Some(*item),
            TaskPrimitive::Terminate => None,
        }
    }
}

/// An ordered primitive sequence produced by one planning round.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct HighLevelAction {
    pub primitives: Vec<TaskPrimitive>,
}

impl HighLevelAction {
    pub fn terminate() -> Self {
        HighLevelAction {
            primitives: vec![TaskPrimitive::Terminate],
        }
    }

    pub fn is_empty(&self) -> bool {
        self.primitives.is_empty()
    }

    pub fn contains_terminate(&self) -> bool {
        self.primitives
            .iter()
            .any(|p| matches!(p, TaskPrimitive::Terminate))
    }

    pub fn pack_count(&self) -> usize {
        self.primitives
            .iter()
            .filter(|p| matches!(p, TaskPrimitive::Pack { .. }))
            .count()
    }

    pub fn unpack_count(&self) -> usize {
        self.primitives
            .iter()
            .filter(|p| matches!(p, TaskPrimitive::Unpack { .. }))
            .count()
    }
}

/// Net change in occupied cells over the executed primitives: `+w*h` per
/// pack, `-w*h` per unpack, zero for terminate.
pub fn high_level_reward(executed: &[TaskPrimitive]) -> i64 {
    executed
        .iter()
        .map(|p| match p {
            TaskPrimitive::Pack { item, .. } => i64::from(item.area()),
            TaskPrimitive::Unpack { item } => -i64::from(item.area()),
            TaskPrimitive::Terminate => 0,
        })
        .sum()
}

/// An item parked in a robot's buffer, stamped with the unpack order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BufferedItem {
    pub item: ItemSpec,
    pub unpacked_at: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct WorldStats {
    pub packed_items: u32,
    pub unpacked_items: u32,
    pub primitives_executed: u32,
}

/// Where an item currently lives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ItemLocation {
    Window(usize),
    Buffer(RobotId),
    Packed,
}

/// The full high-level state: bin, recognized window, packed ledger, and
/// per-robot buffers.
///
/// Clones are cheap and independent; the search ships clones around freely
/// while the real world mutates only through [`WorldState::exec_primitive`].
#[derive(Debug, Clone, PartialEq)]
pub struct WorldState {
    pub bin: GridBin,
    pub conveyor: ConveyorState,
    pub packed: Vec<Placement>,
    pub buffers: [Vec<BufferedItem>; 2],
    pub terminated: bool,
    pub stats: WorldStats,
    next_seq: u32,
    op_stamp: u64,
}

impl WorldState {
    pub fn new(bin_w: u16, bin_h: u16) -> Self {
        WorldState {
            bin: GridBin::new(bin_w, bin_h),
            conveyor: ConveyorState::new(),
            packed: Vec::new(),
            buffers: [Vec::new(), Vec::new()],
            terminated: false,
            stats: WorldStats::default(),
            next_seq: 0,
            op_stamp: 0,
        }
    }

    /// Appends a newly recognized item at the rear of the window. The caller
    /// advances the conveyor after a refill batch.
    pub fn push_arrival(&mut self, item: ItemSpec, cfg: &ScenarioConfig) -> Result<(), EnvError> {
        if self.conveyor.queue.len() >= cfg.n_recognized {
            return Err(EnvError::WindowFull);
        }
        self.conveyor.queue.push_back(item);
        Ok(())
    }

    pub fn advance_conveyor(&mut self, cfg: &ScenarioConfig) {
        self.conveyor.advance(cfg);
    }

    pub fn locate(&self, item_id: u32) -> Option<ItemLocation> {
        if let Some(slot) = self.conveyor.queue.iter().position(|i| i.id == item_id) {
            return Some(ItemLocation::Window(slot));
        }
        for robot in [RobotId::Front, RobotId::Rear] {
            if self.buffers[robot.index()]
                .iter()
                .any(|b| b.item.id == item_id)
            {
                return Some(ItemLocation::Buffer(robot));
            }
        }
        if self.packed.iter().any(|p| p.item.id == item_id) {
            return Some(ItemLocation::Packed);
        }
        None
    }

    pub fn buffered_owner(&self, item_id: u32) -> Option<RobotId> {
        match self.locate(item_id) {
            Some(ItemLocation::Buffer(r)) => Some(r),
            _ => None,
        }
    }

    pub fn conveyor_slot(&self, item_id: u32) -> Option<usize> {
        self.conveyor.queue.iter().position(|i| i.id == item_id)
    }

    /// Window items followed by buffered items (front robot's first); the
    /// search iterates candidates in this order.
    pub fn known_items(&self) -> Vec<ItemSpec> {
        let mut out: Vec<ItemSpec> = self.conveyor.queue.iter().copied().collect();
        for buf in &self.buffers {
            out.extend(buf.iter().map(|b| b.item));
        }
        out
    }

    pub fn known_count(&self) -> usize {
        self.conveyor.queue.len() + self.buffers[0].len() + self.buffers[1].len()
    }

    /// Items `robot` can pick right now: reachable zoned conveyor items in
    /// queue order, then the robot's own buffer.
    pub fn accessible_items(&self, robot: RobotId, cfg: &ScenarioConfig) -> Vec<ItemSpec> {
        let mut out = Vec::new();
        for (slot, item) in self.conveyor.queue.iter().enumerate() {
            if self.conveyor.slot_reachable(slot, robot, cfg) {
                out.push(*item);
            }
        }
        out.extend(self.buffers[robot.index()].iter().map(|b| b.item));
        out
    }

    /// Which robots can reach the item (conveyor zone or own buffer).
    pub fn reachable_by(&self, item_id: u32, cfg: &ScenarioConfig) -> (bool, bool) {
        match self.locate(item_id) {
            Some(ItemLocation::Window(slot)) => (
                self.conveyor.slot_reachable(slot, RobotId::Front, cfg),
                cfg.is_dual() && self.conveyor.slot_reachable(slot, RobotId::Rear, cfg),
            ),
            Some(ItemLocation::Buffer(robot)) => (robot == RobotId::Front, robot == RobotId::Rear),
            _ => (false, false),
        }
    }

    pub fn is_accessible_any(&self, item_id: u32, cfg: &ScenarioConfig) -> bool {
        let (f, r) = self.reachable_by(item_id, cfg);
        f || r
    }

    /// Executes one primitive. Pack moves the item from the window or a
    /// buffer into the bin and advances the conveyor; unpack moves a packed
    /// item into `robot`'s buffer; terminate freezes the episode.
    pub fn exec_primitive(
        &mut self,
        prim: &TaskPrimitive,
        robot: RobotId,
        cfg: &ScenarioConfig,
    ) -> Result<(), EnvError> {
        if self.terminated {
            return Err(EnvError::Terminated);
        }
        match prim {
            TaskPrimitive::Pack {
                item,
                orientation,
                x,
                y,
            } => {
                let placement = Placement {
                    item: *item,
                    orientation: *orientation,
                    x: *x,
                    y: *y,
                    seq: self.next_seq,
                };
                if !matches!(
                    self.locate(item.id),
                    Some(ItemLocation::Window(_)) | Some(ItemLocation::Buffer(_))
                ) {
                    return Err(EnvError::ItemNotAvailable(item.id));
                }
                self.bin.apply_pack(&placement)?;
                match self.locate(item.id) {
                    Some(ItemLocation::Window(slot)) => {
                        self.conveyor.remove_slot(slot);
                    }
                    Some(ItemLocation::Buffer(owner)) => {
                        let buf = &mut self.buffers[owner.index()];
                        let pos = buf.iter().position(|b| b.item.id == item.id).unwrap();
                        buf.remove(pos);
                    }
                    _ => unreachable!("location checked above"),
                }
                self.next_seq += 1;
                self.packed.push(placement);
                self.stats.packed_items += 1;
                self.advance_conveyor(cfg);
            }
            TaskPrimitive::Unpack { item } => {
                let pos = self
                    .packed
                    .iter()
                    .position(|p| p.item.id == item.id)
                    .ok_or(EnvError::ItemNotPacked(item.id))?;
                if let Some(cap) = cfg.buffer_cap {
                    if self.buffers[robot.index()].len() >= cap {
                        return Err(EnvError::BufferFull(robot));
                    }
                }
                let placement = self.packed[pos];
                self.bin.apply_unpack(&placement)?;
                self.packed.remove(pos);
                self.op_stamp += 1;
                self.buffers[robot.index()].push(BufferedItem {
                    item: placement.item,
                    unpacked_at: self.op_stamp,
                });
                self.stats.unpacked_items += 1;
            }
            TaskPrimitive::Terminate => {
                self.terminated = true;
            }
        }
        self.stats.primitives_executed += 1;
        Ok(())
    }

    /// Packs without bookkeeping a real robot; used by search clones.
    pub fn virtual_pack(
        &mut self,
        item: ItemSpec,
        orientation: Orientation,
        x: u16,
        y: u16,
        cfg: &ScenarioConfig,
    ) -> Result<(), EnvError> {
        self.exec_primitive(
            &TaskPrimitive::Pack {
                item,
                orientation,
                x,
                y,
            },
            RobotId::Front,
            cfg,
        )
    }
}

//! Flexible manufacturing system reference model.
//!
//! AGVs move on a grid by ascending attractive fields emitted by shops and
//! avoiding the repulsive fields of other AGVs. Three levels cooperate: the
//! shop floor, where bodies move; the task level, which assigns transport
//! tasks to idle AGVs; and the deadlock level, where a detector's emergence
//! spawns solver agents that constrain trapped AGVs and move them out of the
//! blockage.

pub mod agv;
pub mod assembly;
pub mod deadlock;
pub mod field;
pub mod floor;
pub mod grid;
pub mod metrics;
pub mod tasks;

use std::collections::BTreeMap;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::level_graph::LevelId;
use crate::state::{AgentId, Body, LevelState};

pub use assembly::{assemble, standard_decls, AssemblyError, ModelDecls};
pub use field::{compute_field, compute_fields, Emitter, FieldError, FieldSample, Polarity};
pub use grid::{Cell, GridMap};
pub use metrics::{FmsObserver, RunSummary, SafetyObserver, SafetyViolation};

pub type TaskId = String;

pub const AGV: &str = "agv";
pub const SHOP: &str = "shop";
pub const SOLVER: &str = "deadlock-solver";

/// Influence kinds of the model.
pub mod kinds {
    pub const MOVE: &str = "move";
    pub const FORCED_MOVE: &str = "forced-move";
    pub const EMIT_REPULSION: &str = "emit-repulsion";
    pub const RELEASE_TASK: &str = "release-task";
    pub const ASSIGN: &str = "assign";
    pub const INHIBIT_MOVE: &str = "inhibit-move";
    pub const INHIBIT_REPULSION: &str = "inhibit-repulsion";
    pub const INHIBIT_LURED_MOVE: &str = "inhibit-lured-move";
    pub const NEED_TRANSPORT: &str = "need-transport";
    pub const CAN_SERVE: &str = "can-serve";
    pub const TASK_PROGRESS: &str = "task-progress";
    pub const DEADLOCK: &str = "deadlock";
    pub const RESOLVE: &str = "resolve";
    pub const NO_ESCAPE: &str = "no-escape";
}

/// Rule names used by scenario declarations.
pub mod rules {
    pub const AGV_GRADIENT: &str = "agv-gradient";
    pub const SHOP: &str = "shop";
    pub const DEADLOCK_SOLVER: &str = "deadlock-solver";
    pub const TASK_RELEASE: &str = "task-release";
    pub const DISPATCHER: &str = "dispatcher";
    pub const DEADLOCK_DETECTOR: &str = "deadlock-detector";
    pub const FLOOR: &str = "floor";
    pub const TASK_ASSIGNMENT: &str = "task-assignment";
    pub const DEADLOCK_SOLVING: &str = "deadlock-solving";
    pub const IDENTITY: &str = "identity";
}

/// Level property names.
pub mod props {
    pub const TASKS: &str = "tasks";
    pub const EVENTS: &str = "events";
    pub const DETECTED: &str = "detected";
    pub const RESOLVED: &str = "resolved";
    pub const NEXT_SOLVER: &str = "next_solver";
    pub const RELEASED_AT: &str = "released_at";
    pub const DIAGNOSTICS: &str = "diagnostics";
    pub const OPEN: &str = "open";
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FmsLevels {
    pub floor: LevelId,
    pub task: LevelId,
    pub control: LevelId,
}

impl Default for FmsLevels {
    fn default() -> Self {
        Self {
            floor: "floor".into(),
            task: "task".into(),
            control: "deadlock".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldParams {
    /// Shop attraction amplitude.
    #[serde(default = "default_attract")]
    pub attract: i64,
    /// AGV repulsion amplitude.
    #[serde(default = "default_repulse")]
    pub repulse: i64,
    /// No-progress window length in ticks.
    #[serde(default = "default_window")]
    pub window: usize,
    /// Random choice among equal-potential moves instead of the smallest cell.
    #[serde(default)]
    pub jitter: bool,
}

fn default_attract() -> i64 {
    16
}
fn default_repulse() -> i64 {
    4
}
fn default_window() -> usize {
    6
}

impl Default for FieldParams {
    fn default() -> Self {
        Self {
            attract: default_attract(),
            repulse: default_repulse(),
            window: default_window(),
            jitter: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub id: TaskId,
    pub source: AgentId,
    pub dest: AgentId,
    #[serde(default)]
    pub release: u64,
}

/// An AGV's current transport job, with the shop cells it needs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pub task: TaskId,
    pub source: AgentId,
    pub dest: AgentId,
    pub source_cell: Cell,
    pub dest_cell: Cell,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgvBody {
    pub cell: Cell,
    #[serde(default)]
    pub carrying: Option<TaskId>,
    #[serde(default)]
    pub assigned: Option<Assignment>,
    #[serde(default)]
    pub repulsion_on: bool,
    /// Most recent cells, oldest first, at most `window` long.
    #[serde(default)]
    pub progress_window: Vec<Cell>,
    #[serde(default)]
    pub moved: bool,
}

impl AgvBody {
    pub fn at(cell: Cell) -> Self {
        Self {
            cell,
            carrying: None,
            assigned: None,
            repulsion_on: false,
            progress_window: vec![cell],
            moved: false,
        }
    }

    pub fn is_idle(&self) -> bool {
        self.assigned.is_none() && self.carrying.is_none()
    }

    /// Cell the AGV is heading to: the destination while carrying, the source
    /// while assigned.
    pub fn goal(&self) -> Option<Cell> {
        let a = self.assigned.as_ref()?;
        Some(if self.carrying.is_some() { a.dest_cell } else { a.source_cell })
    }

    pub fn goal_shop(&self) -> Option<&AgentId> {
        let a = self.assigned.as_ref()?;
        Some(if self.carrying.is_some() { &a.dest } else { &a.source })
    }

    /// True when the window is full and every entry equals the current cell.
    pub fn is_stalled(&self, window: usize) -> bool {
        window > 0
            && self.progress_window.len() >= window
            && self.progress_window.iter().all(|c| *c == self.cell)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShopBody {
    pub cell: Cell,
    /// Tasks waiting for pickup here or for delivery here.
    #[serde(default)]
    pub pending: Vec<TaskId>,
    #[serde(default)]
    pub emitting: bool,
}

impl ShopBody {
    pub fn at(cell: Cell) -> Self {
        Self {
            cell,
            pending: Vec::new(),
            emitting: false,
        }
    }
}

/// Body of an entity on the shop floor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum FloorBody {
    Agv(AgvBody),
    Shop(ShopBody),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskState {
    Pending,
    Assigned,
    Picked,
    Delivered,
}

/// Row of the task level's assignment table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskRecord {
    pub id: TaskId,
    pub source: AgentId,
    pub dest: AgentId,
    pub state: TaskState,
    #[serde(default)]
    pub agv: Option<AgentId>,
    pub release: u64,
    #[serde(default)]
    pub assigned_at: Option<u64>,
    #[serde(default)]
    pub picked_at: Option<u64>,
    #[serde(default)]
    pub delivered_at: Option<u64>,
}

/// Static description of the world shared by all FMS rules.
#[derive(Debug, Clone)]
pub struct FmsWorld {
    pub grid: GridMap,
    pub shops: BTreeMap<AgentId, Cell>,
    pub tasks: Vec<TaskSpec>,
    pub params: FieldParams,
    pub levels: FmsLevels,
    /// Whether the deadlock level spawns solvers (otherwise it only counts).
    pub control: bool,
    shop_distances: BTreeMap<AgentId, Vec<Option<u32>>>,
}

impl FmsWorld {
    pub fn new(
        grid: GridMap,
        shops: BTreeMap<AgentId, Cell>,
        tasks: Vec<TaskSpec>,
        params: FieldParams,
        levels: FmsLevels,
        control: bool,
    ) -> Self {
        let shop_distances = shops
            .iter()
            .map(|(id, c)| (id.clone(), grid.distances(*c)))
            .collect();
        Self {
            grid,
            shops,
            tasks,
            params,
            levels,
            control,
            shop_distances,
        }
    }

    /// Wall-respecting distance from a shop to a cell.
    pub fn shop_distance(&self, shop: &AgentId, c: Cell) -> Option<u32> {
        if self.grid.is_blocked(c) {
            return None;
        }
        self.shop_distances.get(shop)?[self.grid.index(c)]
    }

    pub fn shop_cell(&self, shop: &AgentId) -> Option<Cell> {
        self.shops.get(shop).copied()
    }
}

pub(crate) fn to_body<T: Serialize>(t: &T) -> Body {
    match serde_json::to_value(t).expect("body types serialize") {
        Value::Object(attributes) => Body { attributes },
        other => panic!("body serialized to a non-object: {other}"),
    }
}

pub(crate) fn from_body<T: DeserializeOwned>(b: &Body) -> Option<T> {
    serde_json::from_value(Value::Object(b.attributes.clone())).ok()
}

pub(crate) fn prop<T: DeserializeOwned + Default>(props: &BTreeMap<String, Value>, key: &str) -> T {
    props
        .get(key)
        .and_then(|v| serde_json::from_value(v.clone()).ok())
        .unwrap_or_default()
}

pub(crate) fn json<T: Serialize>(t: &T) -> Value {
    serde_json::to_value(t).expect("model values serialize")
}

/// AGV and shop bodies of a floor level, keyed by id.
pub fn floor_bodies(
    bodies: &BTreeMap<AgentId, Body>,
) -> (BTreeMap<AgentId, AgvBody>, BTreeMap<AgentId, ShopBody>) {
    let mut agvs = BTreeMap::new();
    let mut shops = BTreeMap::new();
    for (id, b) in bodies {
        match from_body::<FloorBody>(b) {
            Some(FloorBody::Agv(a)) => {
                agvs.insert(id.clone(), a);
            }
            Some(FloorBody::Shop(s)) => {
                shops.insert(id.clone(), s);
            }
            None => {}
        }
    }
    (agvs, shops)
}

pub fn agv_bodies(level: &LevelState) -> BTreeMap<AgentId, AgvBody> {
    floor_bodies(&level.bodies).0
}

pub fn task_table(level: &LevelState) -> Vec<TaskRecord> {
    prop(&level.properties, props::TASKS)
}

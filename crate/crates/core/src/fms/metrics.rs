//! Per-tick metrics, run summaries and safety checks.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::deadlock::NoEscapeDiagnostic;
use super::{agv_bodies, prop, props, task_table, Cell, FmsWorld, TaskId, TaskState};
use crate::engine::{MetricRecord, ObserverHook, StepReport, StopReason};
use crate::state::{AgentId, SystemState};

/// Column order of the metrics table, after `tick`.
pub const METRIC_COLUMNS: [&str; 5] = [
    "tasks_delivered",
    "deadlocks_detected",
    "deadlocks_resolved",
    "active_constraints",
    "agv_idle_ratio",
];

/// Counters read from a state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub tasks_delivered: u64,
    pub deadlocks_detected: u64,
    pub deadlocks_resolved: u64,
    pub agv_idle_ratio: f64,
}

impl Snapshot {
    pub fn read(world: &FmsWorld, state: &SystemState) -> Self {
        let levels = &world.levels;
        let tasks_delivered = state
            .level(&levels.task)
            .map(|l| task_table(l).iter().filter(|r| r.state == TaskState::Delivered).count() as u64)
            .unwrap_or(0);
        let (deadlocks_detected, deadlocks_resolved) = state
            .level(&levels.control)
            .map(|l| (prop(&l.properties, props::DETECTED), prop(&l.properties, props::RESOLVED)))
            .unwrap_or((0, 0));
        let agvs = state.level(&levels.floor).map(agv_bodies).unwrap_or_default();
        let idle = agvs.values().filter(|a| a.is_idle()).count();
        let agv_idle_ratio = if agvs.is_empty() {
            0.0
        } else {
            idle as f64 / agvs.len() as f64
        };
        Self {
            tasks_delivered,
            deadlocks_detected,
            deadlocks_resolved,
            agv_idle_ratio,
        }
    }
}

/// Emits one metrics row per tick.
pub struct FmsObserver {
    world: Arc<FmsWorld>,
}

impl FmsObserver {
    pub fn new(world: Arc<FmsWorld>) -> Self {
        Self { world }
    }
}

impl ObserverHook for FmsObserver {
    fn observe(&mut self, state: &SystemState, report: &StepReport) -> Option<MetricRecord> {
        let s = Snapshot::read(&self.world, state);
        Some(MetricRecord {
            tick: state.time,
            values: vec![
                (METRIC_COLUMNS[0].into(), s.tasks_delivered as f64),
                (METRIC_COLUMNS[1].into(), s.deadlocks_detected as f64),
                (METRIC_COLUMNS[2].into(), s.deadlocks_resolved as f64),
                (METRIC_COLUMNS[3].into(), report.constraint_count() as f64),
                (METRIC_COLUMNS[4].into(), s.agv_idle_ratio),
            ],
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub ticks_run: u64,
    pub stop: StopReason,
    pub total_tasks: u64,
    pub tasks_delivered: u64,
    pub deadlocks_detected: u64,
    pub deadlocks_resolved: u64,
    pub mean_task_latency_ticks: Option<f64>,
    pub agv_idle_ratio: f64,
    pub no_escape: Vec<NoEscapeDiagnostic>,
}

impl RunSummary {
    pub fn from_state(world: &FmsWorld, state: &SystemState, stop: StopReason, ticks_run: u64) -> Self {
        let s = Snapshot::read(world, state);
        let table = state.level(&world.levels.task).map(task_table).unwrap_or_default();
        let latencies: Vec<u64> = table
            .iter()
            .filter_map(|r| r.delivered_at.map(|d| d.saturating_sub(r.release)))
            .collect();
        let mean_task_latency_ticks = (!latencies.is_empty())
            .then(|| latencies.iter().sum::<u64>() as f64 / latencies.len() as f64);
        let no_escape = state
            .level(&world.levels.control)
            .map(|l| prop(&l.properties, props::DIAGNOSTICS))
            .unwrap_or_default();
        Self {
            ticks_run,
            stop,
            total_tasks: world.tasks.len() as u64,
            tasks_delivered: s.tasks_delivered,
            deadlocks_detected: s.deadlocks_detected,
            deadlocks_resolved: s.deadlocks_resolved,
            mean_task_latency_ticks,
            agv_idle_ratio: s.agv_idle_ratio,
            no_escape,
        }
    }

    pub fn all_delivered(&self) -> bool {
        self.tasks_delivered == self.total_tasks
    }
}

/// True once every scenario task is delivered and no solver is active.
pub fn all_delivered(world: &FmsWorld, state: &SystemState) -> bool {
    let delivered = Snapshot::read(world, state).tasks_delivered;
    let quiet = state
        .level(&world.levels.control)
        .map(|l| l.bodies.is_empty())
        .unwrap_or(true);
    delivered == world.tasks.len() as u64 && quiet
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "violation", rename_all = "snake_case")]
pub enum SafetyViolation {
    SharedCell { tick: u64, cell: Cell, agvs: Vec<AgentId> },
    BlockedCell { tick: u64, agv: AgentId, cell: Cell },
    TaskRegressed { tick: u64, task: TaskId, from: TaskState, to: TaskState },
    TaskVanished { tick: u64, task: TaskId },
    CarryingUnassigned { tick: u64, agv: AgentId },
}

/// Checks cell capacity, wall avoidance and task monotonicity after every
/// step. Produces no metrics rows.
pub struct SafetyObserver {
    world: Arc<FmsWorld>,
    last: BTreeMap<TaskId, TaskState>,
    pub violations: Vec<SafetyViolation>,
    pub ticks_checked: u64,
}

impl SafetyObserver {
    pub fn new(world: Arc<FmsWorld>) -> Self {
        Self {
            world,
            last: BTreeMap::new(),
            violations: Vec::new(),
            ticks_checked: 0,
        }
    }

    pub fn check(&mut self, state: &SystemState) {
        let tick = state.time;
        let agvs = state.level(&self.world.levels.floor).map(agv_bodies).unwrap_or_default();
        let mut by_cell: BTreeMap<Cell, Vec<AgentId>> = BTreeMap::new();
        for (id, a) in &agvs {
            by_cell.entry(a.cell).or_default().push(id.clone());
            if self.world.grid.is_blocked(a.cell) {
                self.violations.push(SafetyViolation::BlockedCell {
                    tick,
                    agv: id.clone(),
                    cell: a.cell,
                });
            }
            let consistent = match (&a.carrying, &a.assigned) {
                (None, _) => true,
                (Some(t), Some(x)) => *t == x.task,
                (Some(_), None) => false,
            };
            if !consistent {
                self.violations.push(SafetyViolation::CarryingUnassigned { tick, agv: id.clone() });
            }
        }
        for (cell, ids) in by_cell {
            if ids.len() > 1 {
                self.violations.push(SafetyViolation::SharedCell { tick, cell, agvs: ids });
            }
        }
        let table = state.level(&self.world.levels.task).map(task_table).unwrap_or_default();
        let now: BTreeMap<TaskId, TaskState> = table.into_iter().map(|r| (r.id, r.state)).collect();
        for (task, before) in &self.last {
            match now.get(task) {
                None => self.violations.push(SafetyViolation::TaskVanished {
                    tick,
                    task: task.clone(),
                }),
                Some(after) if after < before => self.violations.push(SafetyViolation::TaskRegressed {
                    tick,
                    task: task.clone(),
                    from: *before,
                    to: *after,
                }),
                _ => {}
            }
        }
        self.last = now;
        self.ticks_checked += 1;
    }
}

impl ObserverHook for SafetyObserver {
    fn observe(&mut self, state: &SystemState, _report: &StepReport) -> Option<MetricRecord> {
        self.check(state);
        None
    }
}

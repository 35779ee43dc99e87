//! Task level: greedy assignment of transport tasks and the dispatcher that
//! carries assignments to the floor.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use super::floor::FloorEvent;
use super::{floor_bodies, json, kinds, prop, props, Cell, FmsWorld, TaskRecord, TaskState, AGV};
use crate::engine::{InfluenceDraft, NaturalRule, ReactionContext, ReactionOutput, ReactionRule, Sigma};
use crate::hierarchy::InfluenceSelector;
use crate::state::{AgentId, EnvironmentRecord, InfluenceSet, Percept, PerceptionError, ProducerRef};

/// Idle AGV offering its service, as seen by the task level.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Candidate {
    pub agv: AgentId,
    pub cell: Cell,
}

/// Assigns pending tasks, in table order, to the nearest remaining
/// candidate (BFS distance to the source shop, smallest id on ties).
/// Candidates that cannot reach the source are skipped. Returns
/// `(task index, agv)` pairs.
pub fn greedy_assign(
    world: &FmsWorld,
    table: &[TaskRecord],
    candidates: &[Candidate],
) -> Vec<(usize, AgentId)> {
    let mut pool: Vec<&Candidate> = candidates.iter().collect();
    let mut out = Vec::new();
    for (i, t) in table.iter().enumerate() {
        if t.state != TaskState::Pending {
            continue;
        }
        let best = pool
            .iter()
            .enumerate()
            .filter_map(|(k, c)| world.shop_distance(&t.source, c.cell).map(|d| (d, &c.agv, k)))
            .min();
        if let Some((_, agv, k)) = best {
            out.push((i, agv.clone()));
            pool.remove(k);
        }
    }
    out
}

pub struct TaskAssignment {
    world: Arc<FmsWorld>,
}

impl TaskAssignment {
    pub fn new(world: Arc<FmsWorld>) -> Self {
        Self { world }
    }
}

fn str_field(payload: &Value, key: &str) -> Option<String> {
    payload.get(key).and_then(Value::as_str).map(String::from)
}

impl ReactionRule for TaskAssignment {
    fn react(
        &self,
        ctx: &mut ReactionContext<'_>,
        sigma: Sigma<'_>,
        influences: &InfluenceSet,
    ) -> Result<ReactionOutput, String> {
        let mut table: Vec<TaskRecord> = prop(sigma.properties, props::TASKS);

        for i in influences.of_kind(kinds::TASK_PROGRESS) {
            let Ok(ev) = serde_json::from_value::<FloorEvent>(i.payload.clone()) else { continue };
            if let Some(r) = table.iter_mut().find(|r| r.id == ev.task) {
                if ev.state > r.state {
                    r.state = ev.state;
                    match ev.state {
                        TaskState::Picked => r.picked_at = Some(ev.tick),
                        TaskState::Delivered => {
                            if r.picked_at.is_none() {
                                r.picked_at = Some(ev.tick);
                            }
                            r.delivered_at = Some(ev.tick)
                        }
                        _ => {}
                    }
                }
            }
        }

        for i in influences.of_kind(kinds::NEED_TRANSPORT) {
            let (Some(task), Some(source), Some(dest)) = (
                str_field(&i.payload, "task"),
                str_field(&i.payload, "source"),
                str_field(&i.payload, "dest"),
            ) else {
                continue;
            };
            if table.iter().any(|r| r.id == task) {
                continue;
            }
            table.push(TaskRecord {
                id: task,
                source: source.into(),
                dest: dest.into(),
                state: TaskState::Pending,
                agv: None,
                release: i.payload.get("release").and_then(Value::as_u64).unwrap_or(ctx.tick),
                assigned_at: None,
                picked_at: None,
                delivered_at: None,
            });
        }

        let busy: BTreeSet<&AgentId> = table
            .iter()
            .filter(|r| matches!(r.state, TaskState::Assigned | TaskState::Picked))
            .filter_map(|r| r.agv.as_ref())
            .collect();
        let candidates: Vec<Candidate> = influences
            .of_kind(kinds::CAN_SERVE)
            .filter_map(|i| {
                let agv = AgentId::new(str_field(&i.payload, "agv")?);
                let cell: Cell = serde_json::from_value(i.payload.get("cell")?.clone()).ok()?;
                Some(Candidate { agv, cell })
            })
            .filter(|c| !busy.contains(&c.agv))
            .collect();
        for (i, agv) in greedy_assign(&self.world, &table, &candidates) {
            table[i].state = TaskState::Assigned;
            table[i].agv = Some(agv);
            table[i].assigned_at = Some(ctx.tick);
        }

        let mut out = ReactionOutput::unchanged(sigma);
        out.properties.insert(props::TASKS.into(), json(&table));
        Ok(out)
    }
}

/// Environment of the task level. It realizes the assignment table on the
/// floor (assign influences), reports floor pickups and deliveries back to
/// the table, and constrains idle AGVs from being lured towards shops whose
/// transports are already covered.
pub struct Dispatcher {
    world: Arc<FmsWorld>,
}

impl Dispatcher {
    pub fn new(world: Arc<FmsWorld>) -> Self {
        Self { world }
    }
}

impl NaturalRule for Dispatcher {
    fn natural(
        &self,
        _env: &EnvironmentRecord,
        view: &Percept<'_>,
        _rng: &mut ChaCha8Rng,
    ) -> Result<Vec<InfluenceDraft>, PerceptionError> {
        let levels = &self.world.levels;
        let table: Vec<TaskRecord> = prop(&view.level(&levels.task)?.properties, props::TASKS);
        let floor = view.level(&levels.floor)?;
        let (agvs, _) = floor_bodies(&floor.bodies);
        let events: Vec<FloorEvent> = prop(&floor.properties, props::EVENTS);
        let mut out = Vec::new();

        for r in table.iter().filter(|r| r.state == TaskState::Assigned) {
            let Some(agv) = &r.agv else { continue };
            let Some(body) = agvs.get(agv) else { continue };
            let holds = body.assigned.as_ref().is_some_and(|a| a.task == r.id)
                || body.carrying.as_ref() == Some(&r.id);
            if !holds {
                out.push(InfluenceDraft::ordinary(
                    kinds::ASSIGN,
                    levels.floor.clone(),
                    json!({"agv": agv, "task": r.id, "source": r.source, "dest": r.dest}),
                ));
            }
        }

        for ev in events {
            out.push(InfluenceDraft::ordinary(kinds::TASK_PROGRESS, levels.task.clone(), json(&ev)));
        }

        let busy: BTreeSet<&AgentId> = table
            .iter()
            .filter(|r| matches!(r.state, TaskState::Assigned | TaskState::Picked))
            .filter_map(|r| r.agv.as_ref())
            .collect();
        let idle: Vec<&AgentId> = agvs
            .iter()
            .filter(|(id, a)| a.is_idle() && !busy.contains(id))
            .map(|(id, _)| id)
            .collect();
        let mut covered: BTreeMap<&AgentId, bool> = BTreeMap::new();
        for r in &table {
            match r.state {
                TaskState::Pending => {
                    covered.insert(&r.source, false);
                }
                TaskState::Assigned => {
                    covered.entry(&r.source).or_insert(true);
                    covered.entry(&r.dest).or_insert(true);
                }
                TaskState::Picked => {
                    covered.entry(&r.dest).or_insert(true);
                }
                TaskState::Delivered => {}
            }
        }
        for (shop, _) in covered.into_iter().filter(|(_, c)| *c) {
            for agv in &idle {
                let selector = InfluenceSelector::kind(kinds::MOVE)
                    .from_producer(ProducerRef::agent((*agv).clone(), AGV))
                    .with_field("lure", shop.as_str());
                out.push(InfluenceDraft::constraint(
                    kinds::INHIBIT_LURED_MOVE,
                    levels.floor.clone(),
                    selector,
                    json!({"agv": agv, "shop": shop}),
                ));
            }
        }
        Ok(out)
    }
}

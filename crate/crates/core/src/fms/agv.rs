//! Behaviors of the floor agents: AGVs and shops.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::field::{compute_field, Emitter};
use super::floor::TaskMeta;
use super::{floor_bodies, json, kinds, prop, props, Cell, FmsWorld, TaskId};
use crate::engine::{BehaviorRule, InfluenceDraft};
use crate::state::{AgentId, AgentRecord, Percept, PerceptionError};

/// Net potential of one candidate cell.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sample {
    pub cell: Cell,
    pub value: i64,
    /// Shop whose attraction grows the most by moving here (idle AGVs only).
    #[serde(default)]
    pub lure: Option<AgentId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgvPercept {
    pub cell: Cell,
    pub here: i64,
    pub options: Vec<Sample>,
    pub idle: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AgvMemory {
    pub last: Option<AgvPercept>,
    /// Tasks this AGV has worked on, in order.
    pub history: Vec<TaskId>,
    pub current: Option<TaskId>,
}

/// Gradient-following AGV: senses the fields at its cell and free
/// neighbors, moves to the strictly best neighbor, emits repulsion and
/// advertises itself to the task level when idle.
pub struct AgvBehavior {
    world: Arc<FmsWorld>,
}

impl AgvBehavior {
    pub fn new(world: Arc<FmsWorld>) -> Self {
        Self { world }
    }

    pub fn sense(&self, me: &AgentId, view: &Percept<'_>) -> Result<Option<AgvPercept>, PerceptionError> {
        let floor = view.level(&self.world.levels.floor)?;
        let (agvs, shops) = floor_bodies(&floor.bodies);
        let Some(body) = agvs.get(me) else { return Ok(None) };
        let idle = body.is_idle();
        let goals: Vec<(AgentId, Cell)> = match body.goal_shop() {
            Some(shop) => vec![(shop.clone(), body.goal().unwrap())],
            None => shops
                .iter()
                .filter(|(_, s)| s.emitting)
                .map(|(id, s)| (id.clone(), s.cell))
                .collect(),
        };
        let p = &self.world.params;
        let mut emitters: Vec<Emitter> = goals.iter().map(|(_, c)| Emitter::attract(*c, p.attract)).collect();
        emitters.extend(
            agvs.iter()
                .filter(|(id, a)| *id != me && a.repulsion_on)
                .map(|(_, a)| Emitter::repulse(a.cell, p.repulse)),
        );
        let field = compute_field(&self.world.grid, &emitters).map_err(|_| PerceptionError {
            level: self.world.levels.floor.clone(),
        })?;
        let value = |c: Cell| field.at(c).unwrap_or(0);
        let attraction = |shop: &AgentId, c: Cell| {
            Emitter::attract(Cell(0, 0), p.attract).term(self.world.shop_distance(shop, c))
        };
        let options = self
            .world
            .grid
            .neighbors(body.cell)
            .into_iter()
            .map(|c| {
                let lure = if idle {
                    goals
                        .iter()
                        .map(|(s, _)| (attraction(s, c) - attraction(s, body.cell), attraction(s, c), s))
                        .filter(|(gain, _, _)| *gain > 0)
                        // largest gain, then the nearest shop, then the smallest id
                        .max_by(|a, b| a.0.cmp(&b.0).then(a.1.cmp(&b.1)).then(b.2.cmp(a.2)))
                        .map(|(_, _, s)| s.clone())
                } else {
                    None
                };
                Sample {
                    cell: c,
                    value: value(c),
                    lure,
                }
            })
            .collect();
        Ok(Some(AgvPercept {
            cell: body.cell,
            here: value(body.cell),
            options,
            idle,
        }))
    }

    /// Strictly better neighbor with the highest potential, smallest cell on
    /// ties (or a random tied one with jitter).
    pub fn choose<'a>(&self, percept: &'a AgvPercept, rng: &mut ChaCha8Rng) -> Option<&'a Sample> {
        let best = percept.options.iter().map(|s| s.value).max()?;
        if best <= percept.here {
            return None;
        }
        let tied: Vec<&Sample> = percept.options.iter().filter(|s| s.value == best).collect();
        if self.world.params.jitter {
            tied.choose(rng).copied()
        } else {
            tied.into_iter().min_by_key(|s| s.cell)
        }
    }
}

impl BehaviorRule for AgvBehavior {
    fn perceive(&self, me: &AgentRecord, view: &Percept<'_>) -> Result<Value, PerceptionError> {
        let floor = view.level(&self.world.levels.floor)?;
        let task = floor
            .bodies
            .get(&me.id)
            .and_then(|b| b.get("assigned"))
            .and_then(|a| a.get("task"))
            .cloned()
            .unwrap_or(Value::Null);
        Ok(json!({"field": json(&self.sense(&me.id, view)?), "task": task}))
    }

    fn memorize(&self, _me: &AgentRecord, percept: Value, internal: &Value) -> Value {
        let mut mem: AgvMemory = serde_json::from_value(internal.clone()).unwrap_or_default();
        mem.last = serde_json::from_value(percept["field"].clone()).ok().flatten();
        let task: Option<TaskId> = serde_json::from_value(percept["task"].clone()).ok().flatten();
        if let Some(t) = &task {
            if mem.history.last() != Some(t) {
                mem.history.push(t.clone());
            }
        }
        mem.current = task;
        json(&mem)
    }

    fn decide(&self, me: &AgentRecord, internal: &Value, rng: &mut ChaCha8Rng) -> Vec<InfluenceDraft> {
        let mem: AgvMemory = serde_json::from_value(internal.clone()).unwrap_or_default();
        let Some(p) = mem.last else { return Vec::new() };
        let floor = self.world.levels.floor.clone();
        let chosen = self.choose(&p, rng);
        let (to, lure) = match chosen {
            Some(s) => (s.cell, s.lure.clone()),
            None => (p.cell, None),
        };
        let mut out = vec![
            InfluenceDraft::ordinary(
                kinds::MOVE,
                floor.clone(),
                json!({"agent": me.id, "from": p.cell, "to": to, "lure": lure}),
            ),
            InfluenceDraft::ordinary(kinds::EMIT_REPULSION, floor, json!({"agent": me.id})),
        ];
        if p.idle {
            out.push(InfluenceDraft::ordinary(
                kinds::CAN_SERVE,
                self.world.levels.task.clone(),
                json!({"agv": me.id, "cell": p.cell}),
            ));
        }
        out
    }
}

/// Shop: announces each task waiting for pickup to the task level once.
pub struct ShopBehavior {
    world: Arc<FmsWorld>,
}

impl ShopBehavior {
    pub fn new(world: Arc<FmsWorld>) -> Self {
        Self { world }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
struct ShopMemory {
    announced: BTreeSet<TaskId>,
    fresh: Vec<(TaskId, TaskMeta)>,
}

impl BehaviorRule for ShopBehavior {
    fn perceive(&self, me: &AgentRecord, view: &Percept<'_>) -> Result<Value, PerceptionError> {
        let floor = view.level(&self.world.levels.floor)?;
        let meta: BTreeMap<TaskId, TaskMeta> = prop(&floor.properties, props::TASKS);
        let (_, shops) = floor_bodies(&floor.bodies);
        let waiting: Vec<(TaskId, TaskMeta)> = shops
            .get(&me.id)
            .map(|s| {
                s.pending
                    .iter()
                    .filter_map(|t| meta.get(t).map(|m| (t.clone(), m.clone())))
                    .filter(|(_, m)| m.source == me.id)
                    .collect()
            })
            .unwrap_or_default();
        Ok(json(&waiting))
    }

    fn memorize(&self, _me: &AgentRecord, percept: Value, internal: &Value) -> Value {
        let mut mem: ShopMemory = serde_json::from_value(internal.clone()).unwrap_or_default();
        let waiting: Vec<(TaskId, TaskMeta)> = serde_json::from_value(percept).unwrap_or_default();
        mem.fresh = waiting
            .into_iter()
            .filter(|(t, _)| !mem.announced.contains(t))
            .collect();
        mem.announced.extend(mem.fresh.iter().map(|(t, _)| t.clone()));
        json(&mem)
    }

    fn decide(&self, _me: &AgentRecord, internal: &Value, _rng: &mut ChaCha8Rng) -> Vec<InfluenceDraft> {
        let mem: ShopMemory = serde_json::from_value(internal.clone()).unwrap_or_default();
        mem.fresh
            .into_iter()
            .map(|(t, m)| {
                InfluenceDraft::emergence(
                    kinds::NEED_TRANSPORT,
                    self.world.levels.task.clone(),
                    json!({"task": t, "source": m.source, "dest": m.dest, "release": m.release}),
                )
            })
            .collect()
    }
}

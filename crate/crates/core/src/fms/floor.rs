//! Shop-floor level: task release, the floor reaction and move conflicts.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{
    floor_bodies, json, kinds, prop, props, to_body, Assignment, Cell, FloorBody, FmsWorld,
    TaskId, TaskState,
};
use crate::engine::{InfluenceDraft, NaturalRule, ReactionContext, ReactionOutput, ReactionRule, Sigma};
use crate::state::{AgentId, EnvironmentRecord, InfluenceSet, Percept, PerceptionError};

/// Floor-side metadata of a released task.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskMeta {
    pub source: AgentId,
    pub dest: AgentId,
    pub release: u64,
}

/// Pickup or delivery that happened during the last floor reaction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FloorEvent {
    pub tick: u64,
    pub task: TaskId,
    pub agv: AgentId,
    pub state: TaskState,
}

/// Cell-capacity-one move resolution.
///
/// `intents` maps movers to their requested cell; agents without an intent
/// stay. Several movers on one cell: the smallest id wins. Two movers
/// swapping cells both stay. A mover whose target ends up held by a staying
/// agent stays too, repeated until stable. Rotations of three or more agents
/// go through.
pub fn resolve_moves(
    cells: &BTreeMap<AgentId, Cell>,
    intents: &BTreeMap<AgentId, Cell>,
) -> BTreeMap<AgentId, Cell> {
    let mut target: BTreeMap<&AgentId, Cell> = cells
        .iter()
        .map(|(a, c)| (a, intents.get(a).copied().unwrap_or(*c)))
        .collect();
    let moving = |target: &BTreeMap<&AgentId, Cell>, a: &AgentId| target[a] != cells[a];

    // contested targets
    let mut claimed: BTreeMap<Cell, &AgentId> = BTreeMap::new();
    for (a, _) in cells.iter() {
        if !moving(&target, a) {
            continue;
        }
        let t = target[a];
        if claimed.contains_key(&t) {
            target.insert(a, cells[a]);
        } else {
            claimed.insert(t, a);
        }
    }

    // swaps
    let occupant: BTreeMap<Cell, &AgentId> = cells.iter().map(|(a, c)| (*c, a)).collect();
    let swappers: Vec<&AgentId> = cells
        .keys()
        .filter(|a| moving(&target, a))
        .filter(|a| {
            occupant.get(&target[*a]).is_some_and(|b| {
                moving(&target, b) && target[*b] == cells[*a]
            })
        })
        .collect();
    for a in swappers {
        target.insert(a, cells[a]);
    }

    // movers into cells whose occupant stays
    loop {
        let mut changed = false;
        for a in cells.keys() {
            if !moving(&target, a) {
                continue;
            }
            if let Some(b) = occupant.get(&target[a]) {
                if !moving(&target, b) {
                    target.insert(a, cells[a]);
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }

    target.into_iter().map(|(a, c)| (a.clone(), c)).collect()
}

/// Environment that releases the scenario's tasks at their release ticks.
pub struct TaskRelease {
    world: Arc<FmsWorld>,
}

impl TaskRelease {
    pub fn new(world: Arc<FmsWorld>) -> Self {
        Self { world }
    }
}

impl NaturalRule for TaskRelease {
    fn natural(
        &self,
        _env: &EnvironmentRecord,
        view: &Percept<'_>,
        _rng: &mut ChaCha8Rng,
    ) -> Result<Vec<InfluenceDraft>, PerceptionError> {
        Ok(self
            .world
            .tasks
            .iter()
            .filter(|t| t.release == view.tick)
            .map(|t| {
                InfluenceDraft::ordinary(
                    kinds::RELEASE_TASK,
                    self.world.levels.floor.clone(),
                    json!({"task": t.id, "source": t.source, "dest": t.dest, "release": t.release}),
                )
            })
            .collect())
    }
}

fn str_field<'a>(payload: &'a Value, key: &str) -> Option<&'a str> {
    payload.get(key).and_then(Value::as_str)
}

fn cell_field(payload: &Value, key: &str) -> Option<Cell> {
    payload.get(key).and_then(|v| serde_json::from_value(v.clone()).ok())
}

/// Reaction of the shop floor.
pub struct FloorReaction {
    world: Arc<FmsWorld>,
}

impl FloorReaction {
    pub fn new(world: Arc<FmsWorld>) -> Self {
        Self { world }
    }

    fn valid_step(&self, from: Cell, to: Cell) -> bool {
        self.world.grid.is_free(to) && (from == to || from.is_adjacent(to))
    }
}

impl ReactionRule for FloorReaction {
    fn react(
        &self,
        ctx: &mut ReactionContext<'_>,
        sigma: Sigma<'_>,
        influences: &InfluenceSet,
    ) -> Result<ReactionOutput, String> {
        let (mut agvs, mut shops) = floor_bodies(sigma.bodies);
        let mut meta: BTreeMap<TaskId, TaskMeta> = prop(sigma.properties, props::TASKS);
        let mut events = Vec::new();

        for i in influences.of_kind(kinds::RELEASE_TASK) {
            let (Some(task), Some(source), Some(dest)) = (
                str_field(&i.payload, "task"),
                str_field(&i.payload, "source"),
                str_field(&i.payload, "dest"),
            ) else {
                continue;
            };
            if meta.contains_key(task) {
                continue;
            }
            let release = i.payload.get("release").and_then(Value::as_u64).unwrap_or(ctx.tick);
            let Some(shop) = shops.get_mut(&AgentId::new(source)) else {
                return Err(format!("task {task} released at unknown shop {source}"));
            };
            shop.pending.push(task.to_string());
            meta.insert(
                task.to_string(),
                TaskMeta {
                    source: source.into(),
                    dest: dest.into(),
                    release,
                },
            );
        }

        for i in influences.of_kind(kinds::ASSIGN) {
            let (Some(agv), Some(task)) = (str_field(&i.payload, "agv"), str_field(&i.payload, "task"))
            else {
                continue;
            };
            let Some(m) = meta.get(task) else { continue };
            let taken = agvs.values().any(|a| {
                a.assigned.as_ref().is_some_and(|x| x.task == task) || a.carrying.as_deref() == Some(task)
            });
            let (Some(source_cell), Some(dest_cell)) =
                (self.world.shop_cell(&m.source), self.world.shop_cell(&m.dest))
            else {
                continue;
            };
            if let Some(body) = agvs.get_mut(&AgentId::new(agv)) {
                if body.is_idle() && !taken {
                    body.assigned = Some(Assignment {
                        task: task.to_string(),
                        source: m.source.clone(),
                        dest: m.dest.clone(),
                        source_cell,
                        dest_cell,
                    });
                    // a new job restarts the no-progress window
                    body.progress_window.clear();
                }
            }
        }

        let cells: BTreeMap<AgentId, Cell> = agvs.iter().map(|(id, a)| (id.clone(), a.cell)).collect();
        let mut intents: BTreeMap<AgentId, Cell> = BTreeMap::new();
        for i in influences.of_kind(kinds::MOVE) {
            let Some(agent) = str_field(&i.payload, "agent").map(AgentId::new) else { continue };
            if i.id.producer.agent_id() != Some(&agent) {
                continue;
            }
            if let (Some(from), Some(to)) = (cells.get(&agent), cell_field(&i.payload, "to")) {
                if self.valid_step(*from, to) {
                    intents.insert(agent, to);
                }
            }
        }
        for i in influences.of_kind(kinds::FORCED_MOVE) {
            let Some(agent) = str_field(&i.payload, "agent").map(AgentId::new) else { continue };
            if let (Some(from), Some(to)) = (cells.get(&agent), cell_field(&i.payload, "to")) {
                if self.valid_step(*from, to) {
                    intents.insert(agent, to);
                }
            }
        }
        let next = resolve_moves(&cells, &intents);

        let repelling: BTreeSet<AgentId> = influences
            .of_kind(kinds::EMIT_REPULSION)
            .filter_map(|i| i.id.producer.agent_id().cloned())
            .collect();

        let window = self.world.params.window.max(1);
        for (id, body) in agvs.iter_mut() {
            let to = next[id];
            body.moved = to != body.cell;
            body.cell = to;
            body.repulsion_on = repelling.contains(id);

            if let Some(a) = body.assigned.clone() {
                if body.carrying.is_none() && body.cell == a.source_cell {
                    let at_source = shops.get_mut(&a.source).is_some_and(|s| {
                        let before = s.pending.len();
                        s.pending.retain(|t| *t != a.task);
                        s.pending.len() < before
                    });
                    if at_source {
                        body.carrying = Some(a.task.clone());
                        body.progress_window.clear();
                        if let Some(d) = shops.get_mut(&a.dest) {
                            d.pending.push(a.task.clone());
                        }
                        events.push(FloorEvent {
                            tick: ctx.tick,
                            task: a.task.clone(),
                            agv: id.clone(),
                            state: TaskState::Picked,
                        });
                    }
                } else if body.carrying.is_some() && body.cell == a.dest_cell {
                    if let Some(d) = shops.get_mut(&a.dest) {
                        d.pending.retain(|t| *t != a.task);
                    }
                    body.carrying = None;
                    body.assigned = None;
                    events.push(FloorEvent {
                        tick: ctx.tick,
                        task: a.task,
                        agv: id.clone(),
                        state: TaskState::Delivered,
                    });
                }
            }

            body.progress_window.push(body.cell);
            let excess = body.progress_window.len().saturating_sub(window);
            body.progress_window.drain(..excess);
        }
        for s in shops.values_mut() {
            s.emitting = !s.pending.is_empty();
        }

        let mut out = ReactionOutput::unchanged(sigma);
        for (id, a) in agvs {
            out.bodies.insert(id, to_body(&FloorBody::Agv(a)));
        }
        for (id, s) in shops {
            out.bodies.insert(id, to_body(&FloorBody::Shop(s)));
        }
        out.properties.insert(props::TASKS.into(), json(&meta));
        out.properties.insert(props::EVENTS.into(), json(&events));
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(pairs: &[(&str, Cell)]) -> BTreeMap<AgentId, Cell> {
        pairs.iter().map(|(a, c)| (AgentId::new(*a), *c)).collect()
    }

    #[test]
    fn same_target_lowest_id_wins() {
        let cells = ids(&[("a1", Cell(0, 0)), ("a2", Cell(2, 0))]);
        let intents = ids(&[("a1", Cell(1, 0)), ("a2", Cell(1, 0))]);
        let next = resolve_moves(&cells, &intents);
        assert_eq!(next[&AgentId::new("a1")], Cell(1, 0));
        assert_eq!(next[&AgentId::new("a2")], Cell(2, 0));
    }

    #[test]
    fn swap_both_stay() {
        let cells = ids(&[("a", Cell(1, 0)), ("b", Cell(2, 0))]);
        let intents = ids(&[("a", Cell(2, 0)), ("b", Cell(1, 0))]);
        assert_eq!(resolve_moves(&cells, &intents), cells);
    }

    #[test]
    fn chain_follows_and_blocked_chain_stops() {
        let cells = ids(&[("a", Cell(0, 0)), ("b", Cell(1, 0))]);
        let intents = ids(&[("a", Cell(1, 0)), ("b", Cell(2, 0))]);
        let next = resolve_moves(&cells, &intents);
        assert_eq!(next, ids(&[("a", Cell(1, 0)), ("b", Cell(2, 0))]));

        let cells = ids(&[("a", Cell(0, 0)), ("b", Cell(1, 0)), ("c", Cell(2, 0))]);
        let intents = ids(&[("a", Cell(1, 0)), ("b", Cell(2, 0))]);
        assert_eq!(resolve_moves(&cells, &intents), cells);
    }

    #[test]
    fn rotation_of_three_moves() {
        let cells = ids(&[("a", Cell(0, 0)), ("b", Cell(1, 0)), ("c", Cell(1, 1))]);
        // a→b's cell, b→c's cell, c→a's cell is not adjacent but resolution
        // does not check geometry
        let intents = ids(&[("a", Cell(1, 0)), ("b", Cell(1, 1)), ("c", Cell(0, 0))]);
        assert_eq!(resolve_moves(&cells, &intents), intents);
    }
}

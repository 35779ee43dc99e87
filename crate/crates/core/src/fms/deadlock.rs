//! Deadlock level: the detector that reports trapped AGV groups as
//! emergences, the solver agents spawned for them, and the level reaction
//! managing their life cycle.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{agv_bodies, json, kinds, prop, props, AgvBody, Cell, FmsWorld, GridMap, AGV, SOLVER};
use crate::engine::{
    BehaviorRule, InfluenceDraft, NaturalRule, ReactionContext, ReactionOutput, ReactionRule, Sigma,
};
use crate::hierarchy::{self, overlap_components, spawn_in_level, InfluenceSelector, SpawnOutcome};
use crate::state::{
    AgentId, AgentRecord, Body, EnvironmentRecord, InfluenceSet, LevelState, Percept, PerceptionError,
    ProducerRef,
};

/// Wait-for relation: `a -> b` when the first step of `a`'s shortest path to
/// its goal is the cell `b` stands on. Each AGV waits on at most one other.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WaitForGraph {
    pub edges: BTreeMap<AgentId, AgentId>,
}

impl WaitForGraph {
    pub fn build(grid: &GridMap, agvs: &BTreeMap<AgentId, AgvBody>, exclude: &BTreeSet<AgentId>) -> Self {
        let at: BTreeMap<Cell, &AgentId> = agvs
            .iter()
            .filter(|(id, _)| !exclude.contains(*id))
            .map(|(id, a)| (a.cell, id))
            .collect();
        let mut edges = BTreeMap::new();
        for (id, a) in agvs.iter().filter(|(id, _)| !exclude.contains(*id)) {
            let Some(goal) = a.goal() else { continue };
            if let Some(step) = grid.first_step(a.cell, goal, &BTreeSet::new()) {
                if let Some(b) = at.get(&step) {
                    edges.insert(id.clone(), (*b).clone());
                }
            }
        }
        Self { edges }
    }

    /// Every cycle, each rotated to start at its smallest member.
    pub fn cycles(&self) -> Vec<Vec<AgentId>> {
        let mut done: BTreeSet<&AgentId> = BTreeSet::new();
        let mut out = Vec::new();
        for start in self.edges.keys() {
            if done.contains(start) {
                continue;
            }
            let mut path: Vec<&AgentId> = Vec::new();
            let mut pos: BTreeMap<&AgentId, usize> = BTreeMap::new();
            let mut cur = Some(start);
            while let Some(a) = cur {
                if done.contains(a) {
                    break;
                }
                if let Some(&i) = pos.get(a) {
                    let mut cycle: Vec<AgentId> = path[i..].iter().map(|x| (*x).clone()).collect();
                    let min = cycle.iter().enumerate().min_by_key(|(_, x)| *x).unwrap().0;
                    cycle.rotate_left(min);
                    out.push(cycle);
                    break;
                }
                pos.insert(a, path.len());
                path.push(a);
                cur = self.edges.get(a);
            }
            done.extend(path);
        }
        out.sort();
        out
    }
}

/// Payload of a deadlock emergence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeadlockReport {
    pub members: BTreeSet<AgentId>,
    #[serde(default)]
    pub cycle: Option<Vec<AgentId>>,
    pub reason: String,
}

fn ready(a: &AgentId, tick: u64, window: usize, released: &BTreeMap<AgentId, u64>) -> bool {
    released.get(a).is_none_or(|t| tick >= t + window as u64)
}

/// Groups of trapped AGVs in a floor snapshot.
///
/// Seeds are assigned AGVs that either sat still for the whole progress
/// window or wait on each other in a cycle without having moved last tick.
/// Each seed pulls in the AGV it waits on and the stationary AGVs within its
/// repulsion range; groups are the connected components. AGVs in `governed`
/// are already handled and never reported; AGVs released from a solver less
/// than a window ago are not seeds.
pub fn detect(
    world: &FmsWorld,
    agvs: &BTreeMap<AgentId, AgvBody>,
    governed: &BTreeSet<AgentId>,
    released: &BTreeMap<AgentId, u64>,
    tick: u64,
) -> Vec<DeadlockReport> {
    let k = world.params.window;
    let wf = WaitForGraph::build(&world.grid, agvs, governed);
    let mut seeds: BTreeSet<&AgentId> = agvs
        .iter()
        .filter(|(id, a)| {
            !governed.contains(*id) && a.assigned.is_some() && a.is_stalled(k) && ready(id, tick, k, released)
        })
        .map(|(id, _)| id)
        .collect();
    let cycles: Vec<Vec<AgentId>> = wf
        .cycles()
        .into_iter()
        .filter(|c| {
            c.iter().all(|a| {
                let b = &agvs[a];
                b.assigned.is_some() && !b.moved && b.progress_window.len() >= 2 && ready(a, tick, k, released)
            })
        })
        .collect();
    for c in &cycles {
        seeds.extend(c.iter().map(|a| agvs.get_key_value(a).unwrap().0));
    }
    if seeds.is_empty() {
        return Vec::new();
    }

    let nodes: Vec<&AgentId> = agvs.keys().filter(|a| !governed.contains(*a)).collect();
    let index: BTreeMap<&AgentId, usize> = nodes.iter().enumerate().map(|(i, a)| (*a, i)).collect();
    let mut parent: Vec<usize> = (0..nodes.len()).collect();
    fn find(p: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while p[r] != r {
            r = p[r];
        }
        let mut y = x;
        while p[y] != r {
            let n = p[y];
            p[y] = r;
            y = n;
        }
        r
    }
    let mut in_group: BTreeSet<usize> = BTreeSet::new();
    let reach = (world.params.repulse - 1).max(0) as u32;
    for s in &seeds {
        let si = index[s];
        in_group.insert(si);
        let mut attach: Vec<&AgentId> = wf.edges.get(*s).into_iter().collect();
        let dist = world.grid.distances(agvs[*s].cell);
        for (b, body) in agvs.iter() {
            if b == *s || governed.contains(b) || body.moved {
                continue;
            }
            if dist[world.grid.index(body.cell)].is_some_and(|d| d <= reach) {
                attach.push(b);
            }
        }
        for b in attach {
            let bi = index[b];
            in_group.insert(bi);
            let (ra, rb) = (find(&mut parent, si), find(&mut parent, bi));
            parent[ra.max(rb)] = ra.min(rb);
        }
    }
    let mut groups: BTreeMap<usize, BTreeSet<AgentId>> = BTreeMap::new();
    for i in in_group {
        let r = find(&mut parent, i);
        groups.entry(r).or_default().insert(nodes[i].clone());
    }
    groups
        .into_values()
        .map(|members| {
            let cycle = cycles.iter().find(|c| c.iter().all(|a| members.contains(a))).cloned();
            let reason = if cycle.is_some() { "wait-cycle" } else { "no-progress" };
            DeadlockReport {
                members,
                cycle,
                reason: reason.into(),
            }
        })
        .collect()
}

/// Micro-level environment producing deadlock emergences.
pub struct DeadlockDetector {
    world: Arc<FmsWorld>,
}

impl DeadlockDetector {
    pub fn new(world: Arc<FmsWorld>) -> Self {
        Self { world }
    }
}

/// Union of the members of every solver body in the deadlock level.
pub fn governed(level: &LevelState) -> BTreeSet<AgentId> {
    level.bodies.values().flat_map(hierarchy::members_of).collect()
}

impl NaturalRule for DeadlockDetector {
    fn natural(
        &self,
        _env: &EnvironmentRecord,
        view: &Percept<'_>,
        _rng: &mut ChaCha8Rng,
    ) -> Result<Vec<InfluenceDraft>, PerceptionError> {
        let levels = &self.world.levels;
        let floor = view.level(&levels.floor)?;
        let control = view.level(&levels.control)?;
        let released: BTreeMap<AgentId, u64> = prop(&control.properties, props::RELEASED_AT);
        let reports = detect(&self.world, &agv_bodies(floor), &governed(control), &released, view.tick);
        Ok(reports
            .into_iter()
            .map(|r| InfluenceDraft::emergence(kinds::DEADLOCK, levels.control.clone(), json(&r)))
            .collect())
    }
}

/// One member of a trapped group as the solver sees it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Member {
    pub id: AgentId,
    pub cell: Cell,
    pub goal: Option<Cell>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum SolverAction {
    /// Every member can reach its goal again.
    Resolve,
    Force { agent: AgentId, to: Cell },
    /// Blocked by AGVs outside the group; try again next tick.
    Wait,
    /// Walls alone enclose the group.
    NoEscape,
}

fn leader_plan(
    grid: &GridMap,
    members: &[Member],
    leader: &Member,
    obstacles: &BTreeSet<Cell>,
) -> Option<SolverAction> {
    let goal = leader.goal?;
    let path = grid.shortest_path(leader.cell, goal, obstacles)?;
    let on_path: BTreeSet<Cell> = path.iter().copied().collect();
    let blockers: Vec<&Member> = members
        .iter()
        .filter(|m| m.id != leader.id && on_path.contains(&m.cell))
        .collect();
    if blockers.is_empty() {
        return path.get(1).map(|c| SolverAction::Force {
            agent: leader.id.clone(),
            to: *c,
        });
    }
    let occupied: BTreeSet<Cell> = members.iter().map(|m| m.cell).chain(obstacles.iter().copied()).collect();
    let mut best: Option<(u32, AgentId, Cell)> = None;
    for b in blockers {
        let mut blocked = occupied.clone();
        blocked.remove(&b.cell);
        let dist = grid.distances_avoiding(b.cell, &blocked);
        let refuge = grid
            .free_cells()
            .filter(|c| !on_path.contains(c) && !blocked.contains(c))
            .filter_map(|c| dist[grid.index(c)].map(|d| (d, c)))
            .min();
        if let Some((d, c)) = refuge {
            let step = grid.first_step(b.cell, c, &blocked).expect("refuge is reachable");
            let cand = (d, b.id.clone(), step);
            if best.as_ref().is_none_or(|x| (cand.0, &cand.1) < (x.0, &x.1)) {
                best = Some(cand);
            }
        }
    }
    best.map(|(_, agent, to)| SolverAction::Force { agent, to })
}

/// Next action of a solver for its trapped group.
///
/// The group is resolved once some member left its initial cell and every
/// member with a goal has a path to it that avoids the other members.
/// Otherwise the leader (smallest id with a goal, then the next ones) plans a
/// shortest path treating non-members as obstacles; members on it are moved
/// off the path one step per tick, the nearest refuge first, and the leader
/// advances once its path is clear.
pub fn plan(
    grid: &GridMap,
    members: &[Member],
    others: &BTreeSet<Cell>,
    initial: &BTreeMap<AgentId, Cell>,
) -> SolverAction {
    let moved = members.iter().any(|m| initial.get(&m.id).is_some_and(|c| *c != m.cell));
    let clear = members.iter().all(|m| {
        let Some(goal) = m.goal else { return true };
        let blocking: BTreeSet<Cell> = members.iter().filter(|o| o.id != m.id).map(|o| o.cell).collect();
        grid.shortest_path(m.cell, goal, &blocking).is_some()
    });
    if moved && clear {
        return SolverAction::Resolve;
    }
    let mut order: Vec<&Member> = members.iter().filter(|m| m.goal.is_some()).collect();
    order.sort_by(|a, b| a.id.cmp(&b.id));
    for leader in &order {
        if let Some(a) = leader_plan(grid, members, leader, others) {
            return a;
        }
    }
    if order.is_empty() {
        return SolverAction::Resolve;
    }
    for leader in &order {
        if leader_plan(grid, members, leader, &BTreeSet::new()).is_some() {
            return SolverAction::Wait;
        }
    }
    SolverAction::NoEscape
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SolverMemory {
    pub members: Vec<Member>,
    pub others: BTreeSet<Cell>,
    pub initial: BTreeMap<AgentId, Cell>,
    pub action: Option<SolverAction>,
}

/// Behavior of a macro agent governing a trapped group.
pub struct DeadlockSolver {
    world: Arc<FmsWorld>,
}

impl DeadlockSolver {
    pub fn new(world: Arc<FmsWorld>) -> Self {
        Self { world }
    }
}

impl BehaviorRule for DeadlockSolver {
    fn perceive(&self, me: &AgentRecord, view: &Percept<'_>) -> Result<Value, PerceptionError> {
        let levels = &self.world.levels;
        let control = view.level(&levels.control)?;
        let floor = view.level(&levels.floor)?;
        let trapped = control.bodies.get(&me.id).map(hierarchy::members_of).unwrap_or_default();
        let agvs = agv_bodies(floor);
        let members: Vec<Member> = agvs
            .iter()
            .filter(|(id, _)| trapped.contains(*id))
            .map(|(id, a)| Member {
                id: id.clone(),
                cell: a.cell,
                goal: a.goal(),
            })
            .collect();
        let others: BTreeSet<Cell> = agvs
            .iter()
            .filter(|(id, _)| !trapped.contains(*id))
            .map(|(_, a)| a.cell)
            .collect();
        Ok(json!({"members": members, "others": others}))
    }

    fn memorize(&self, _me: &AgentRecord, percept: Value, internal: &Value) -> Value {
        let mut mem: SolverMemory = serde_json::from_value(internal.clone()).unwrap_or_default();
        mem.members = serde_json::from_value(percept["members"].clone()).unwrap_or_default();
        mem.others = serde_json::from_value(percept["others"].clone()).unwrap_or_default();
        if mem.initial.is_empty() {
            mem.initial = mem.members.iter().map(|m| (m.id.clone(), m.cell)).collect();
        }
        mem.action = Some(plan(&self.world.grid, &mem.members, &mem.others, &mem.initial));
        json(&mem)
    }

    fn decide(&self, me: &AgentRecord, internal: &Value, _rng: &mut ChaCha8Rng) -> Vec<InfluenceDraft> {
        let mem: SolverMemory = serde_json::from_value(internal.clone()).unwrap_or_default();
        let levels = &self.world.levels;
        let ids: Vec<&AgentId> = mem.members.iter().map(|m| &m.id).collect();
        let report = json!({"macro": me.id, "members": ids});
        let Some(action) = mem.action else { return Vec::new() };
        if action == SolverAction::Resolve {
            return vec![InfluenceDraft::ordinary(kinds::RESOLVE, levels.control.clone(), report)];
        }
        let mut out = Vec::new();
        for m in &mem.members {
            let producer = ProducerRef::agent(m.id.clone(), AGV);
            out.push(InfluenceDraft::constraint(
                kinds::INHIBIT_MOVE,
                levels.floor.clone(),
                InfluenceSelector::kind(kinds::MOVE).from_producer(producer.clone()),
                json!({"macro": me.id, "agv": m.id}),
            ));
            out.push(InfluenceDraft::constraint(
                kinds::INHIBIT_REPULSION,
                levels.floor.clone(),
                InfluenceSelector::kind(kinds::EMIT_REPULSION).from_producer(producer),
                json!({"macro": me.id, "agv": m.id}),
            ));
        }
        match action {
            SolverAction::Force { agent, to } => out.push(InfluenceDraft::ordinary(
                kinds::FORCED_MOVE,
                levels.floor.clone(),
                json!({"macro": me.id, "agent": agent, "to": to}),
            )),
            SolverAction::NoEscape => {
                out.push(InfluenceDraft::ordinary(kinds::NO_ESCAPE, levels.control.clone(), report))
            }
            SolverAction::Wait | SolverAction::Resolve => {}
        }
        out
    }
}

/// Diagnostic raised when a trapped group cannot be freed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoEscapeDiagnostic {
    pub tick: u64,
    #[serde(rename = "macro")]
    pub macro_agent: AgentId,
    pub members: BTreeSet<AgentId>,
}

/// Reaction of the deadlock level.
///
/// With control on, each group of overlapping deadlock reports spawns one
/// solver (or joins an existing one), and resolutions dissolve solvers. With
/// control off, reports are only counted: a report overlapping one of the
/// previous tick's reports continues the same deadlock.
pub struct DeadlockControl {
    world: Arc<FmsWorld>,
}

impl DeadlockControl {
    pub fn new(world: Arc<FmsWorld>) -> Self {
        Self { world }
    }
}

fn merged_groups(reports: &[DeadlockReport]) -> Vec<(BTreeSet<AgentId>, &DeadlockReport)> {
    let sets: Vec<BTreeSet<AgentId>> = reports.iter().map(|r| r.members.clone()).collect();
    overlap_components(&sets)
        .into_iter()
        .map(|comp| {
            let members = comp.iter().flat_map(|i| sets[*i].iter().cloned()).collect();
            (members, &reports[comp[0]])
        })
        .collect()
}

impl ReactionRule for DeadlockControl {
    fn react(
        &self,
        ctx: &mut ReactionContext<'_>,
        sigma: Sigma<'_>,
        influences: &InfluenceSet,
    ) -> Result<ReactionOutput, String> {
        let p = sigma.properties;
        let mut detected: u64 = prop(p, props::DETECTED);
        let mut resolved: u64 = prop(p, props::RESOLVED);
        let mut next_id: u64 = prop(p, props::NEXT_SOLVER);
        let mut released: BTreeMap<AgentId, u64> = prop(p, props::RELEASED_AT);
        let mut diagnostics: Vec<NoEscapeDiagnostic> = prop(p, props::DIAGNOSTICS);
        let open: Vec<BTreeSet<AgentId>> = prop(p, props::OPEN);

        let reports: Vec<DeadlockReport> = influences
            .of_kind(kinds::DEADLOCK)
            .filter_map(|i| serde_json::from_value(i.payload.clone()).ok())
            .collect();
        let groups = merged_groups(&reports);

        let mut level = LevelState::empty(sigma.level.clone());
        level.properties = p.clone();
        level.bodies = sigma.bodies.clone();
        let mut spawned = Vec::new();
        let mut open_next = Vec::new();

        if self.world.control {
            for i in influences.of_kind(kinds::RESOLVE) {
                let Some(m) = i.payload.get("macro").and_then(Value::as_str).map(AgentId::new) else {
                    continue;
                };
                if let Some(body) = level.bodies.remove(&m) {
                    resolved += 1;
                    for a in hierarchy::members_of(&body) {
                        released.insert(a, ctx.tick);
                    }
                }
            }
            for i in influences.of_kind(kinds::NO_ESCAPE) {
                let Some(m) = i.payload.get("macro").and_then(Value::as_str).map(AgentId::new) else {
                    continue;
                };
                if diagnostics.iter().any(|d| d.macro_agent == m) {
                    continue;
                }
                if let Some(body) = level.bodies.get(&m) {
                    diagnostics.push(NoEscapeDiagnostic {
                        tick: ctx.tick,
                        macro_agent: m,
                        members: hierarchy::members_of(body),
                    });
                }
            }
            for (members, first) in groups {
                let id = AgentId::new(format!("solver-{next_id:03}"));
                let attrs = Body::new()
                    .with("since", ctx.tick)
                    .with("reason", first.reason.clone())
                    .with("cycle", json(&first.cycle));
                match spawn_in_level(&mut level, &members, id, attrs) {
                    SpawnOutcome::Spawned(id) => {
                        next_id += 1;
                        detected += 1;
                        spawned.push(AgentRecord::new(id, SOLVER));
                    }
                    SpawnOutcome::Merged { absorbed, .. } => {
                        resolved += absorbed.len() as u64;
                    }
                }
            }
        } else {
            for (members, _) in groups {
                if !open.iter().any(|o| !o.is_disjoint(&members)) {
                    detected += 1;
                }
                open_next.push(members);
            }
        }

        let mut out = ReactionOutput {
            properties: level.properties,
            bodies: level.bodies,
            spawned,
            ..ReactionOutput::default()
        };
        let props = &mut out.properties;
        props.insert(props::DETECTED.into(), json(&detected));
        props.insert(props::RESOLVED.into(), json(&resolved));
        props.insert(props::NEXT_SOLVER.into(), json(&next_id));
        props.insert(props::RELEASED_AT.into(), json(&released));
        props.insert(props::DIAGNOSTICS.into(), json(&diagnostics));
        props.insert(props::OPEN.into(), json(&open_next));
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fms::{Assignment, FieldParams, FmsLevels};

    fn world(rows: &[&str], shops: &[(&str, Cell)]) -> FmsWorld {
        FmsWorld::new(
            GridMap::from_rows(rows).unwrap(),
            shops.iter().map(|(id, c)| (AgentId::new(*id), *c)).collect(),
            Vec::new(),
            FieldParams::default(),
            FmsLevels::default(),
            true,
        )
    }

    fn heading(cell: Cell, goal: Cell, window: usize) -> AgvBody {
        AgvBody {
            cell,
            carrying: Some("t".into()),
            assigned: Some(Assignment {
                task: "t".into(),
                source: "s".into(),
                dest: "d".into(),
                source_cell: goal,
                dest_cell: goal,
            }),
            repulsion_on: true,
            progress_window: vec![cell; window],
            moved: false,
        }
    }

    #[test]
    fn swap_in_corridor_is_reported_with_both() {
        let w = world(&["...."], &[]);
        let agvs: BTreeMap<AgentId, AgvBody> = [
            (AgentId::new("a"), heading(Cell(1, 0), Cell(3, 0), 6)),
            (AgentId::new("b"), heading(Cell(2, 0), Cell(0, 0), 6)),
        ]
        .into();
        let wf = WaitForGraph::build(&w.grid, &agvs, &BTreeSet::new());
        assert_eq!(wf.cycles(), vec![vec![AgentId::new("a"), AgentId::new("b")]]);
        let r = detect(&w, &agvs, &BTreeSet::new(), &BTreeMap::new(), 10);
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].members, [AgentId::new("a"), AgentId::new("b")].into());
        assert_eq!(r[0].reason, "wait-cycle");
    }

    #[test]
    fn idle_and_moving_agvs_are_not_reported() {
        let w = world(&["....."], &[]);
        let mut moving = heading(Cell(0, 0), Cell(4, 0), 6);
        moving.progress_window = vec![Cell(0, 0), Cell(0, 0), Cell(1, 0), Cell(0, 0), Cell(0, 0), Cell(0, 0)];
        let idle = AgvBody {
            progress_window: vec![Cell(4, 0); 6],
            ..AgvBody::at(Cell(4, 0))
        };
        let agvs: BTreeMap<AgentId, AgvBody> = [(AgentId::new("a"), moving), (AgentId::new("i"), idle)].into();
        assert!(detect(&w, &agvs, &BTreeSet::new(), &BTreeMap::new(), 10).is_empty());
    }

    #[test]
    fn governed_and_recently_released_are_skipped() {
        let w = world(&["...."], &[]);
        let agvs: BTreeMap<AgentId, AgvBody> = [
            (AgentId::new("a"), heading(Cell(1, 0), Cell(3, 0), 6)),
            (AgentId::new("b"), heading(Cell(2, 0), Cell(0, 0), 6)),
        ]
        .into();
        let gov: BTreeSet<AgentId> = [AgentId::new("a"), AgentId::new("b")].into();
        assert!(detect(&w, &agvs, &gov, &BTreeMap::new(), 10).is_empty());
        let rel: BTreeMap<AgentId, u64> = [(AgentId::new("a"), 8), (AgentId::new("b"), 8)].into();
        assert!(detect(&w, &agvs, &BTreeSet::new(), &rel, 10).is_empty());
        assert_eq!(detect(&w, &agvs, &BTreeSet::new(), &rel, 14).len(), 1);
    }

    fn member(id: &str, cell: Cell, goal: Cell) -> Member {
        Member {
            id: id.into(),
            cell,
            goal: Some(goal),
        }
    }

    #[test]
    fn pocket_unwinds_swap() {
        // corridor y=0, pocket at (2,1); a goes right, b goes left
        let g = GridMap::from_rows(&["......", "##.###"]).unwrap();
        let mut a = member("a", Cell(1, 0), Cell(5, 0));
        let mut b = member("b", Cell(2, 0), Cell(0, 0));
        let initial: BTreeMap<AgentId, Cell> = [(a.id.clone(), a.cell), (b.id.clone(), b.cell)].into();
        let mut ticks = 0;
        loop {
            let act = plan(&g, &[a.clone(), b.clone()], &BTreeSet::new(), &initial);
            match act {
                SolverAction::Resolve => break,
                SolverAction::Force { agent, to } => {
                    if agent == a.id {
                        a.cell = to
                    } else {
                        b.cell = to
                    }
                }
                other => panic!("unexpected {other:?}"),
            }
            ticks += 1;
            assert!(ticks < 4, "not resolved within 4 ticks");
        }
        // b steps into the pocket, a passes it in two steps, then the
        // fourth plan resolves
        assert_eq!(b.cell, Cell(2, 1));
        assert_eq!(a.cell, Cell(3, 0));
        assert_eq!(ticks, 3);
    }

    #[test]
    fn enclosed_swap_has_no_escape() {
        let g = GridMap::from_rows(&["......"]).unwrap();
        let a = member("a", Cell(2, 0), Cell(5, 0));
        let b = member("b", Cell(3, 0), Cell(0, 0));
        let initial = BTreeMap::new();
        assert_eq!(plan(&g, &[a, b], &BTreeSet::new(), &initial), SolverAction::NoEscape);
    }

    #[test]
    fn outsiders_blocking_means_wait() {
        let g = GridMap::from_rows(&["....", "#.##"]).unwrap();
        let a = member("a", Cell(0, 0), Cell(3, 0));
        let b = member("b", Cell(2, 0), Cell(0, 0));
        let others: BTreeSet<Cell> = [Cell(1, 1)].into();
        assert_eq!(plan(&g, &[a, b], &others, &BTreeMap::new()), SolverAction::Wait);
    }
}

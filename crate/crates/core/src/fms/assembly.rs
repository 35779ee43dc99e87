//! Turning declarative model descriptions into a runnable [`Model`] with the
//! FMS rules bound by name.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::agv::{AgvBehavior, ShopBehavior};
use super::deadlock::{DeadlockControl, DeadlockDetector, DeadlockSolver};
use super::floor::{FloorReaction, TaskRelease};
use super::tasks::{Dispatcher, TaskAssignment};
use super::{
    json, kinds, props, rules, to_body, AgvBody, Cell, FloorBody, FmsLevels, FmsWorld, ShopBody,
    AGV, SHOP, SOLVER,
};
use crate::engine::{BehaviorRule, IdentityReaction, Model, NaturalRule, ReactionRule};
use crate::hierarchy::{
    ConstraintKindDecl, EmergenceKindDecl, HierarchicalCoupling, HierarchyDecls, ProducerPattern,
};
use crate::level_graph::{validate, GraphError, LevelGraphSpec, LevelId};
use crate::state::{AgentId, AgentRecord, EnvironmentId, EnvironmentRecord, Kind, StateError, SystemState};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentKindDecl {
    pub levels: BTreeSet<LevelId>,
    pub behavior: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentDecl {
    pub id: EnvironmentId,
    pub levels: BTreeSet<LevelId>,
    pub natural: String,
}

/// Level graph, kind sets, rule selections and hierarchy declarations of a
/// model, with rules referenced by name.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDecls {
    pub graph: LevelGraphSpec,
    pub kinds: BTreeMap<LevelId, BTreeSet<Kind>>,
    pub reactions: BTreeMap<LevelId, String>,
    pub agent_kinds: BTreeMap<String, AgentKindDecl>,
    pub environments: Vec<EnvironmentDecl>,
    #[serde(default)]
    pub hierarchy: HierarchyDecls,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AssemblyError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("agent kind {kind} uses unknown behavior {rule}")]
    UnknownBehavior { kind: String, rule: String },
    #[error("environment {env} uses unknown natural rule {rule}")]
    UnknownNatural { env: EnvironmentId, rule: String },
    #[error("level {level} uses unknown reaction {rule}")]
    UnknownReaction { level: LevelId, rule: String },
    #[error("no level uses the {0} reaction")]
    MissingRole(&'static str),
    #[error("more than one level uses the {0} reaction")]
    DuplicateRole(&'static str),
    #[error("agent kind {0} is not declared")]
    MissingAgentKind(&'static str),
    #[error(transparent)]
    State(#[from] StateError),
}

fn set<const N: usize>(items: [&str; N]) -> BTreeSet<Kind> {
    items.into_iter().map(Kind::new).collect()
}

/// The three-level FMS model: shop floor, task assignment and deadlock
/// solving, with mirrored influence and perception edges between the floor
/// and each of the other two.
pub fn standard_decls() -> ModelDecls {
    let l = FmsLevels::default();
    let (floor, task, control) = (l.floor.clone(), l.task.clone(), l.control.clone());
    let mut graph = LevelGraphSpec::new([floor.clone(), task.clone(), control.clone()]);
    for (a, b) in [(&floor, &task), (&task, &floor), (&floor, &control), (&control, &floor)] {
        graph = graph.influence(a.clone(), b.clone()).perception(a.clone(), b.clone());
    }
    let kinds = BTreeMap::from([
        (
            floor.clone(),
            set([
                kinds::MOVE,
                kinds::FORCED_MOVE,
                kinds::EMIT_REPULSION,
                kinds::RELEASE_TASK,
                kinds::ASSIGN,
                kinds::INHIBIT_MOVE,
                kinds::INHIBIT_REPULSION,
                kinds::INHIBIT_LURED_MOVE,
            ]),
        ),
        (task.clone(), set([kinds::NEED_TRANSPORT, kinds::CAN_SERVE, kinds::TASK_PROGRESS])),
        (control.clone(), set([kinds::DEADLOCK, kinds::RESOLVE, kinds::NO_ESCAPE])),
    ]);
    let reactions = BTreeMap::from([
        (floor.clone(), rules::FLOOR.to_string()),
        (task.clone(), rules::TASK_ASSIGNMENT.to_string()),
        (control.clone(), rules::DEADLOCK_SOLVING.to_string()),
    ]);
    let agent_kinds = BTreeMap::from([
        (
            AGV.to_string(),
            AgentKindDecl {
                levels: [floor.clone()].into(),
                behavior: rules::AGV_GRADIENT.into(),
            },
        ),
        (
            SHOP.to_string(),
            AgentKindDecl {
                levels: [floor.clone()].into(),
                behavior: rules::SHOP.into(),
            },
        ),
        (
            SOLVER.to_string(),
            AgentKindDecl {
                levels: [control.clone()].into(),
                behavior: rules::DEADLOCK_SOLVER.into(),
            },
        ),
    ]);
    let environments = vec![
        EnvironmentDecl {
            id: "releaser".into(),
            levels: [floor.clone()].into(),
            natural: rules::TASK_RELEASE.into(),
        },
        EnvironmentDecl {
            id: "dispatcher".into(),
            levels: [task.clone()].into(),
            natural: rules::DISPATCHER.into(),
        },
        EnvironmentDecl {
            id: "detector".into(),
            levels: [floor.clone()].into(),
            natural: rules::DEADLOCK_DETECTOR.into(),
        },
    ];
    let solver = || vec![ProducerPattern::AgentKind(SOLVER.into())];
    let hierarchy = HierarchyDecls {
        couplings: vec![
            HierarchicalCoupling::new(floor.clone(), task.clone()),
            HierarchicalCoupling::new(floor.clone(), control.clone()),
        ],
        emergences: vec![
            EmergenceKindDecl {
                kind: kinds::NEED_TRANSPORT.into(),
                micro: floor.clone(),
                macro_level: task.clone(),
                producers: vec![ProducerPattern::AgentKind(SHOP.into())],
            },
            EmergenceKindDecl {
                kind: kinds::DEADLOCK.into(),
                micro: floor.clone(),
                macro_level: control.clone(),
                producers: vec![ProducerPattern::Environment("detector".into())],
            },
        ],
        constraints: vec![
            ConstraintKindDecl {
                kind: kinds::INHIBIT_MOVE.into(),
                inhibits: kinds::MOVE.into(),
                micro: floor.clone(),
                macro_level: control.clone(),
                producers: solver(),
            },
            ConstraintKindDecl {
                kind: kinds::INHIBIT_REPULSION.into(),
                inhibits: kinds::EMIT_REPULSION.into(),
                micro: floor.clone(),
                macro_level: control.clone(),
                producers: solver(),
            },
            ConstraintKindDecl {
                kind: kinds::INHIBIT_LURED_MOVE.into(),
                inhibits: kinds::MOVE.into(),
                micro: floor,
                macro_level: task,
                producers: vec![ProducerPattern::Environment("dispatcher".into())],
            },
        ],
    };
    ModelDecls {
        graph,
        kinds,
        reactions,
        agent_kinds,
        environments,
        hierarchy,
    }
}

fn role(decls: &ModelDecls, rule: &'static str) -> Result<LevelId, AssemblyError> {
    let mut it = decls.reactions.iter().filter(|(_, r)| r.as_str() == rule);
    let (l, _) = it.next().ok_or(AssemblyError::MissingRole(rule))?;
    if it.next().is_some() {
        return Err(AssemblyError::DuplicateRole(rule));
    }
    Ok(l.clone())
}

/// Which level plays floor, task and deadlock level, read from the reaction
/// each level uses.
pub fn fms_levels(decls: &ModelDecls) -> Result<FmsLevels, AssemblyError> {
    Ok(FmsLevels {
        floor: role(decls, rules::FLOOR)?,
        task: role(decls, rules::TASK_ASSIGNMENT)?,
        control: role(decls, rules::DEADLOCK_SOLVING)?,
    })
}

pub fn behavior_rule(name: &str, world: &Arc<FmsWorld>) -> Option<Arc<dyn BehaviorRule>> {
    Some(match name {
        rules::AGV_GRADIENT => Arc::new(AgvBehavior::new(world.clone())),
        rules::SHOP => Arc::new(ShopBehavior::new(world.clone())),
        rules::DEADLOCK_SOLVER => Arc::new(DeadlockSolver::new(world.clone())),
        _ => return None,
    })
}

pub fn natural_rule(name: &str, world: &Arc<FmsWorld>) -> Option<Arc<dyn NaturalRule>> {
    Some(match name {
        rules::TASK_RELEASE => Arc::new(TaskRelease::new(world.clone())),
        rules::DISPATCHER => Arc::new(Dispatcher::new(world.clone())),
        rules::DEADLOCK_DETECTOR => Arc::new(DeadlockDetector::new(world.clone())),
        _ => return None,
    })
}

pub fn reaction_rule(name: &str, world: &Arc<FmsWorld>) -> Option<Arc<dyn ReactionRule>> {
    Some(match name {
        rules::FLOOR => Arc::new(FloorReaction::new(world.clone())),
        rules::TASK_ASSIGNMENT => Arc::new(TaskAssignment::new(world.clone())),
        rules::DEADLOCK_SOLVING => Arc::new(DeadlockControl::new(world.clone())),
        rules::IDENTITY => Arc::new(IdentityReaction),
        _ => return None,
    })
}

/// Binds every named rule. Reports the first unresolvable name. The model is
/// not validated here; call [`Model::validate`] for the static checks.
pub fn assemble(decls: &ModelDecls, world: Arc<FmsWorld>, seed: u64) -> Result<Model, AssemblyError> {
    let graph = validate(decls.graph.clone())?;
    let mut model = Model::new(graph).with_seed(seed).with_hierarchy(decls.hierarchy.clone());
    for (l, ks) in &decls.kinds {
        model = model.with_kinds(l.clone(), ks.iter().cloned());
    }
    for (l, name) in &decls.reactions {
        let rule = reaction_rule(name, &world).ok_or_else(|| AssemblyError::UnknownReaction {
            level: l.clone(),
            rule: name.clone(),
        })?;
        model = model.with_reaction(l.clone(), rule);
    }
    for (kind, d) in &decls.agent_kinds {
        let rule = behavior_rule(&d.behavior, &world).ok_or_else(|| AssemblyError::UnknownBehavior {
            kind: kind.clone(),
            rule: d.behavior.clone(),
        })?;
        model = model.with_agent_kind(kind, d.levels.iter().cloned(), rule);
    }
    for e in &decls.environments {
        let rule = natural_rule(&e.natural, &world).ok_or_else(|| AssemblyError::UnknownNatural {
            env: e.id.clone(),
            rule: e.natural.clone(),
        })?;
        let record = EnvironmentRecord {
            id: e.id.clone(),
            member_levels: e.levels.clone(),
            natural: e.natural.clone(),
        };
        model = model.with_environment(record, rule);
    }
    Ok(model)
}

/// Initial state: shops and AGVs on the floor, empty task table and zeroed
/// deadlock counters.
pub fn initial_state(
    model: &Model,
    world: &FmsWorld,
    agvs: &[(AgentId, Cell)],
) -> Result<SystemState, AssemblyError> {
    for kind in [AGV, SHOP] {
        if !model.agent_kinds.contains_key(kind) {
            return Err(AssemblyError::MissingAgentKind(kind));
        }
    }
    let floor = &world.levels.floor;
    let mut state = model.initial_state();
    for (id, cell) in &world.shops {
        state = state
            .add_agent(AgentRecord::new(id.clone(), SHOP))?
            .register_body(id, floor, to_body(&FloorBody::Shop(ShopBody::at(*cell))))?;
    }
    for (id, cell) in agvs {
        state = state
            .add_agent(AgentRecord::new(id.clone(), AGV))?
            .register_body(id, floor, to_body(&FloorBody::Agv(AgvBody::at(*cell))))?;
    }
    let levels = &mut state.levels;
    if let Some(ls) = levels.get_mut(&world.levels.task) {
        ls.properties.insert(props::TASKS.into(), json(&Vec::<()>::new()));
    }
    if let Some(ls) = levels.get_mut(&world.levels.control) {
        for key in [props::DETECTED, props::RESOLVED, props::NEXT_SOLVER] {
            ls.properties.insert(key.into(), json(&0u64));
        }
    }
    Ok(state)
}

//! Two-phase stepping.
//!
//! Phase one evaluates every agent behavior and environment natural rule
//! against the same frozen snapshot at tick `t` and routes the produced
//! influences to their target levels, together with the influences each
//! level carried over from the previous tick. Phase two filters each level's
//! influences through its constraints and hands them to that level's
//! reaction, which alone computes the level's state at `t + 1`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::hierarchy::{self, HierarchyDecls, HierarchyViolation, InfluenceSelector, InhibitionRecord};
use crate::level_graph::{Direction, LevelId, Relation, ValidatedLevelGraph};
use crate::state::{
    AgentId, AgentRecord, Body, EnvironmentId, EnvironmentRecord, Influence, InfluenceClass,
    InfluenceId, InfluenceSet, Kind, LevelState, Percept, PerceptionError, ProducerRef,
    SystemState,
};

/// An influence as returned by a rule, before the engine stamps its id.
#[derive(Debug, Clone, PartialEq)]
pub struct InfluenceDraft {
    pub kind: Kind,
    pub target: LevelId,
    pub class: InfluenceClass,
    pub payload: Value,
}

impl InfluenceDraft {
    pub fn ordinary(kind: impl Into<Kind>, target: impl Into<LevelId>, payload: Value) -> Self {
        Self {
            kind: kind.into(),
            target: target.into(),
            class: InfluenceClass::Ordinary,
            payload,
        }
    }

    pub fn emergence(kind: impl Into<Kind>, target: impl Into<LevelId>, payload: Value) -> Self {
        Self {
            kind: kind.into(),
            target: target.into(),
            class: InfluenceClass::Emergence,
            payload,
        }
    }

    pub fn constraint(
        kind: impl Into<Kind>,
        target: impl Into<LevelId>,
        selector: InfluenceSelector,
        payload: Value,
    ) -> Self {
        Self {
            kind: kind.into(),
            target: target.into(),
            class: InfluenceClass::Constraint(selector),
            payload,
        }
    }

    fn stamp(self, producer: &ProducerRef, tick: u64, seq: u32) -> Influence {
        Influence {
            id: InfluenceId {
                tick,
                producer: producer.clone(),
                seq,
            },
            kind: self.kind,
            target: self.target,
            class: self.class,
            payload: self.payload,
        }
    }
}

/// Per-producer random stream derived from the model seed, the producer and
/// the tick, so results do not depend on evaluation order.
pub fn stream_rng(seed: u64, scope: &str, tick: u64) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(scope.as_bytes());
    h.update(tick.to_le_bytes());
    ChaCha8Rng::from_seed(h.finalize().into())
}

/// Perception, memorization and decision of one kind of agent. The engine
/// calls the three stages in order, once per agent and step.
pub trait BehaviorRule: Send + Sync {
    /// Extracts what the agent perceives. `view` only exposes the levels in
    /// the agent's perception neighborhood.
    fn perceive(&self, me: &AgentRecord, view: &Percept<'_>) -> Result<Value, PerceptionError>;

    /// Computes the next internal state.
    fn memorize(&self, me: &AgentRecord, percept: Value, internal: &Value) -> Value;

    /// Produces influences from the updated internal state alone.
    fn decide(&self, me: &AgentRecord, internal: &Value, rng: &mut ChaCha8Rng) -> Vec<InfluenceDraft>;
}

/// Influence production of an environment.
pub trait NaturalRule: Send + Sync {
    fn natural(
        &self,
        env: &EnvironmentRecord,
        view: &Percept<'_>,
        rng: &mut ChaCha8Rng,
    ) -> Result<Vec<InfluenceDraft>, PerceptionError>;
}

/// Environmental properties of a level, without its influences.
#[derive(Debug, Clone, Copy)]
pub struct Sigma<'a> {
    pub level: &'a LevelId,
    pub properties: &'a BTreeMap<String, Value>,
    pub bodies: &'a BTreeMap<AgentId, Body>,
}

impl<'a> Sigma<'a> {
    pub fn of(ls: &'a LevelState) -> Self {
        Self {
            level: &ls.level,
            properties: &ls.properties,
            bodies: &ls.bodies,
        }
    }
}

pub struct ReactionContext<'a> {
    pub tick: u64,
    pub level: &'a LevelId,
    pub rng: ChaCha8Rng,
}

/// Next state of one level. `persisted` becomes the level's influence set at
/// `t + 1` and is merged into the next production phase.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReactionOutput {
    pub properties: BTreeMap<String, Value>,
    pub bodies: BTreeMap<AgentId, Body>,
    pub persisted: InfluenceSet,
    /// Agents created by this reaction. Each must have a body in `bodies`.
    pub spawned: Vec<AgentRecord>,
}

impl ReactionOutput {
    pub fn unchanged(sigma: Sigma<'_>) -> Self {
        Self {
            properties: sigma.properties.clone(),
            bodies: sigma.bodies.clone(),
            ..Self::default()
        }
    }
}

pub trait ReactionRule: Send + Sync {
    fn react(
        &self,
        ctx: &mut ReactionContext<'_>,
        sigma: Sigma<'_>,
        influences: &InfluenceSet,
    ) -> Result<ReactionOutput, String>;
}

/// Keeps σ unchanged and persists nothing.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityReaction;

impl ReactionRule for IdentityReaction {
    fn react(
        &self,
        _ctx: &mut ReactionContext<'_>,
        sigma: Sigma<'_>,
        _influences: &InfluenceSet,
    ) -> Result<ReactionOutput, String> {
        Ok(ReactionOutput::unchanged(sigma))
    }
}

#[derive(Clone)]
pub struct AgentKindSpec {
    /// Levels agents of this kind may have bodies in.
    pub levels: BTreeSet<LevelId>,
    pub behavior: Arc<dyn BehaviorRule>,
}

impl fmt::Debug for AgentKindSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AgentKindSpec").field("levels", &self.levels).finish()
    }
}

/// A complete simulable instance: the level graph and every rule.
#[derive(Clone)]
pub struct Model {
    pub graph: ValidatedLevelGraph,
    /// Γ^l: the influence kinds each level accepts.
    pub producible_kinds: BTreeMap<LevelId, BTreeSet<Kind>>,
    pub agent_kinds: BTreeMap<String, AgentKindSpec>,
    pub environments: Vec<EnvironmentRecord>,
    pub naturals: BTreeMap<EnvironmentId, Arc<dyn NaturalRule>>,
    pub reactions: BTreeMap<LevelId, Arc<dyn ReactionRule>>,
    pub hierarchy: HierarchyDecls,
    pub seed: u64,
}

impl fmt::Debug for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Model")
            .field("graph", &self.graph)
            .field("producible_kinds", &self.producible_kinds)
            .field("agent_kinds", &self.agent_kinds)
            .field("environments", &self.environments)
            .field("reactions", &self.reactions.keys().collect::<Vec<_>>())
            .field("hierarchy", &self.hierarchy)
            .field("seed", &self.seed)
            .finish()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("level {0} has no reaction")]
    MissingReaction(LevelId),
    #[error("reaction declared for unknown level {0}")]
    ReactionForUnknownLevel(LevelId),
    #[error("environment {0} belongs to no level")]
    EnvironmentWithoutLevel(EnvironmentId),
    #[error("environment {env} references unknown level {level}")]
    EnvironmentUnknownLevel { env: EnvironmentId, level: LevelId },
    #[error("environment {0} has no natural rule")]
    MissingNatural(EnvironmentId),
    #[error("agent kind {kind} references unknown level {level}")]
    AgentKindUnknownLevel { kind: String, level: LevelId },
    #[error("producible kinds declared for unknown level {0}")]
    KindsForUnknownLevel(LevelId),
    #[error(transparent)]
    Hierarchy(#[from] HierarchyViolation),
}

impl Model {
    pub fn new(graph: ValidatedLevelGraph) -> Self {
        Self {
            graph,
            producible_kinds: BTreeMap::new(),
            agent_kinds: BTreeMap::new(),
            environments: Vec::new(),
            naturals: BTreeMap::new(),
            reactions: BTreeMap::new(),
            hierarchy: HierarchyDecls::default(),
            seed: 0,
        }
    }

    pub fn with_kinds<K: Into<Kind>>(mut self, level: impl Into<LevelId>, kinds: impl IntoIterator<Item = K>) -> Self {
        self.producible_kinds
            .entry(level.into())
            .or_default()
            .extend(kinds.into_iter().map(Into::into));
        self
    }

    pub fn with_agent_kind<L: Into<LevelId>>(
        mut self,
        kind: &str,
        levels: impl IntoIterator<Item = L>,
        behavior: Arc<dyn BehaviorRule>,
    ) -> Self {
        self.agent_kinds.insert(
            kind.to_string(),
            AgentKindSpec {
                levels: levels.into_iter().map(Into::into).collect(),
                behavior,
            },
        );
        self
    }

    pub fn with_environment(mut self, env: EnvironmentRecord, rule: Arc<dyn NaturalRule>) -> Self {
        self.naturals.insert(env.id.clone(), rule);
        self.environments.push(env);
        self
    }

    pub fn with_reaction(mut self, level: impl Into<LevelId>, rule: Arc<dyn ReactionRule>) -> Self {
        self.reactions.insert(level.into(), rule);
        self
    }

    pub fn with_hierarchy(mut self, decls: HierarchyDecls) -> Self {
        self.hierarchy = decls;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Static validity: every level has a reaction, every reference resolves
    /// and every hierarchy declaration is legal. Returns all problems found.
    pub fn validate(&self) -> Result<(), Vec<ModelError>> {
        let mut errs = Vec::new();
        for l in self.graph.levels() {
            if !self.reactions.contains_key(l) {
                errs.push(ModelError::MissingReaction(l.clone()));
            }
        }
        for l in self.reactions.keys() {
            if !self.graph.contains(l) {
                errs.push(ModelError::ReactionForUnknownLevel(l.clone()));
            }
        }
        for l in self.producible_kinds.keys() {
            if !self.graph.contains(l) {
                errs.push(ModelError::KindsForUnknownLevel(l.clone()));
            }
        }
        for env in &self.environments {
            if env.member_levels.is_empty() {
                errs.push(ModelError::EnvironmentWithoutLevel(env.id.clone()));
            }
            for l in &env.member_levels {
                if !self.graph.contains(l) {
                    errs.push(ModelError::EnvironmentUnknownLevel {
                        env: env.id.clone(),
                        level: l.clone(),
                    });
                }
            }
            if !self.naturals.contains_key(&env.id) {
                errs.push(ModelError::MissingNatural(env.id.clone()));
            }
        }
        for (kind, spec) in &self.agent_kinds {
            for l in &spec.levels {
                if !self.graph.contains(l) {
                    errs.push(ModelError::AgentKindUnknownLevel {
                        kind: kind.clone(),
                        level: l.clone(),
                    });
                }
            }
        }
        errs.extend(hierarchy::validate_hierarchy(self).into_iter().map(ModelError::from));
        if errs.is_empty() {
            Ok(())
        } else {
            Err(errs)
        }
    }

    /// Empty initial state with one level state per level.
    pub fn initial_state(&self) -> SystemState {
        SystemState::new(self.graph.levels())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error("{producer} produced {kind} into {level}, outside its influence neighborhood")]
    IllegalInfluenceTarget {
        producer: ProducerRef,
        kind: Kind,
        level: LevelId,
    },
    #[error("{producer} tried to perceive {level}, outside its perception neighborhood")]
    IllegalPerception { producer: ProducerRef, level: LevelId },
    #[error("{producer} produced {kind}, which level {level} does not accept")]
    IllegalKind {
        producer: ProducerRef,
        kind: Kind,
        level: LevelId,
    },
    #[error("{producer}: {violation}")]
    Hierarchy {
        producer: ProducerRef,
        violation: HierarchyViolation,
    },
    #[error("reaction of level {level} failed: {reason}")]
    ReactionFault { level: LevelId, reason: String },
    #[error("agent {agent} has kind {kind} with no behavior")]
    UnknownAgentKind { agent: AgentId, kind: String },
    #[error("environment {0} has no natural rule")]
    UnknownNatural(EnvironmentId),
    #[error("agent order is not a permutation of the snapshot's agents")]
    BadAgentOrder,
}

/// Phase-one output: the produced influences of every level (including the
/// carried-over ones) and the agents' memorized internal states.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Production {
    pub per_level: BTreeMap<LevelId, InfluenceSet>,
    pub internal_states: BTreeMap<AgentId, Value>,
}

/// What happened during one step, for observers and traces.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    /// Tick of the snapshot the step started from.
    pub tick: u64,
    pub produced: BTreeMap<LevelId, InfluenceSet>,
    pub inhibitions: BTreeMap<LevelId, Vec<InhibitionRecord>>,
    pub spawned: Vec<(LevelId, AgentId)>,
    pub dissolved: Vec<(LevelId, AgentId)>,
}

impl StepReport {
    pub fn constraint_count(&self) -> usize {
        self.produced
            .values()
            .flat_map(|s| s.iter())
            .filter(|i| i.is_constraint())
            .count()
    }
}

fn percept_for<'a>(
    model: &Model,
    snapshot: &'a SystemState,
    levels: &BTreeSet<LevelId>,
) -> Percept<'a> {
    let visible = model
        .graph
        .union(Relation::Perception, Direction::Out, levels)
        .expect("member levels belong to the graph");
    Percept::new(
        snapshot.time,
        visible
            .into_iter()
            .filter_map(|l| snapshot.levels.get(&l).map(|ls| (l, ls)))
            .collect(),
    )
}

fn admit(
    model: &Model,
    producer: &ProducerRef,
    levels: &BTreeSet<LevelId>,
    drafts: Vec<InfluenceDraft>,
    tick: u64,
    out: &mut BTreeMap<LevelId, InfluenceSet>,
) -> Result<(), EngineError> {
    let reachable = model
        .graph
        .union(Relation::Influence, Direction::Out, levels)
        .expect("member levels belong to the graph");
    for (seq, draft) in drafts.into_iter().enumerate() {
        if !reachable.contains(&draft.target) {
            return Err(EngineError::IllegalInfluenceTarget {
                producer: producer.clone(),
                kind: draft.kind,
                level: draft.target,
            });
        }
        let accepted = model
            .producible_kinds
            .get(&draft.target)
            .is_some_and(|ks| ks.contains(&draft.kind));
        if !accepted {
            return Err(EngineError::IllegalKind {
                producer: producer.clone(),
                kind: draft.kind,
                level: draft.target,
            });
        }
        let influence = draft.stamp(producer, tick, seq as u32);
        hierarchy::check_influence(model, &influence).map_err(|violation| EngineError::Hierarchy {
            producer: producer.clone(),
            violation,
        })?;
        out.entry(influence.target.clone())
            .or_default()
            .insert(influence);
    }
    Ok(())
}

/// Phase one, evaluating agents in id order.
pub fn produce_influences(model: &Model, snapshot: &SystemState) -> Result<Production, EngineError> {
    let order: Vec<AgentId> = snapshot.agents.keys().cloned().collect();
    produce_influences_in_order(model, snapshot, &order)
}

/// Phase one with an explicit agent evaluation order. The result does not
/// depend on the order; this entry point exists to check exactly that.
pub fn produce_influences_in_order(
    model: &Model,
    snapshot: &SystemState,
    order: &[AgentId],
) -> Result<Production, EngineError> {
    let given: BTreeSet<&AgentId> = order.iter().collect();
    if given.len() != order.len() || given.len() != snapshot.agents.len()
        || !snapshot.agents.keys().all(|a| given.contains(a))
    {
        return Err(EngineError::BadAgentOrder);
    }

    let tick = snapshot.time;
    let mut per_level: BTreeMap<LevelId, InfluenceSet> = snapshot
        .levels
        .iter()
        .map(|(l, ls)| (l.clone(), ls.influences.clone()))
        .collect();
    let mut internal_states = BTreeMap::new();

    for id in order {
        let rec = &snapshot.agents[id];
        let levels = snapshot.member_levels(id).expect("agent is in snapshot");
        if levels.is_empty() {
            // an agent outside every level can neither perceive nor act
            internal_states.insert(id.clone(), rec.internal_state.clone());
            continue;
        }
        let spec = model
            .agent_kinds
            .get(&rec.kind)
            .ok_or_else(|| EngineError::UnknownAgentKind {
                agent: id.clone(),
                kind: rec.kind.clone(),
            })?;
        let producer = rec.producer();
        let view = percept_for(model, snapshot, &levels);
        let p = spec
            .behavior
            .perceive(rec, &view)
            .map_err(|e| EngineError::IllegalPerception {
                producer: producer.clone(),
                level: e.level,
            })?;
        let internal = spec.behavior.memorize(rec, p, &rec.internal_state);
        let mut rng = stream_rng(model.seed, &producer.to_string(), tick);
        let drafts = spec.behavior.decide(rec, &internal, &mut rng);
        admit(model, &producer, &levels, drafts, tick, &mut per_level)?;
        internal_states.insert(id.clone(), internal);
    }

    for env in &model.environments {
        let rule = model
            .naturals
            .get(&env.id)
            .ok_or_else(|| EngineError::UnknownNatural(env.id.clone()))?;
        let producer = env.producer();
        let view = percept_for(model, snapshot, &env.member_levels);
        let mut rng = stream_rng(model.seed, &producer.to_string(), tick);
        let drafts = rule
            .natural(env, &view, &mut rng)
            .map_err(|e| EngineError::IllegalPerception {
                producer: producer.clone(),
                level: e.level,
            })?;
        admit(model, &producer, &env.member_levels, drafts, tick, &mut per_level)?;
    }

    Ok(Production {
        per_level,
        internal_states,
    })
}

/// Phase two over all levels in name order.
pub fn react(
    model: &Model,
    snapshot: &SystemState,
    produced: &Production,
) -> Result<(SystemState, StepReport), EngineError> {
    let order: Vec<LevelId> = snapshot.levels.keys().cloned().collect();
    react_in_order(model, snapshot, produced, &order)
}

/// Phase two with an explicit level processing order. Reactions only see and
/// write their own level, so the order has no observable effect.
pub fn react_in_order(
    model: &Model,
    snapshot: &SystemState,
    produced: &Production,
    level_order: &[LevelId],
) -> Result<(SystemState, StepReport), EngineError> {
    let tick = snapshot.time;
    let mut next = snapshot.clone();
    next.time = tick + 1;
    for (id, s) in &produced.internal_states {
        if let Some(rec) = next.agents.get_mut(id) {
            rec.internal_state = s.clone();
        }
    }
    let mut report = StepReport {
        tick,
        produced: produced.per_level.clone(),
        ..StepReport::default()
    };
    let empty = InfluenceSet::new();
    let mut spawned_records = Vec::new();

    for level in level_order {
        let current = snapshot
            .levels
            .get(level)
            .ok_or_else(|| EngineError::ReactionFault {
                level: level.clone(),
                reason: "level not in snapshot".into(),
            })?;
        let rule = model
            .reactions
            .get(level)
            .ok_or_else(|| EngineError::ReactionFault {
                level: level.clone(),
                reason: "no reaction rule".into(),
            })?;
        let gamma = produced.per_level.get(level).unwrap_or(&empty);
        let (filtered, log) = hierarchy::apply_constraints(gamma);
        if !log.is_empty() {
            report.inhibitions.insert(level.clone(), log);
        }
        let mut ctx = ReactionContext {
            tick,
            level,
            rng: stream_rng(model.seed, &format!("reaction:{level}"), tick),
        };
        let out = rule
            .react(&mut ctx, Sigma::of(current), &filtered)
            .map_err(|reason| EngineError::ReactionFault {
                level: level.clone(),
                reason,
            })?;
        check_locality(level, current, &out, snapshot)?;

        for a in out.bodies.keys() {
            if !current.bodies.contains_key(a) {
                report.spawned.push((level.clone(), a.clone()));
            }
        }
        for a in current.bodies.keys() {
            if !out.bodies.contains_key(a) {
                report.dissolved.push((level.clone(), a.clone()));
            }
        }
        spawned_records.extend(out.spawned.iter().cloned());
        let slot = next.levels.get_mut(level).unwrap();
        slot.properties = out.properties;
        slot.bodies = out.bodies;
        slot.influences = out.persisted;
    }

    for rec in spawned_records {
        if next.agents.contains_key(&rec.id) {
            return Err(EngineError::ReactionFault {
                level: report
                    .spawned
                    .iter()
                    .find(|(_, a)| *a == rec.id)
                    .map(|(l, _)| l.clone())
                    .unwrap_or_else(|| LevelId::new("?")),
                reason: format!("spawned agent {} already exists", rec.id),
            });
        }
        next.agents.insert(rec.id.clone(), rec);
    }
    // agents that lost their last body this step leave the system
    let had_body: BTreeSet<&AgentId> = snapshot
        .levels
        .values()
        .flat_map(|ls| ls.bodies.keys())
        .collect();
    let has_body: BTreeSet<AgentId> = next
        .levels
        .values()
        .flat_map(|ls| ls.bodies.keys().cloned())
        .collect();
    next.agents
        .retain(|id, _| !had_body.contains(id) || has_body.contains(id));

    Ok((next, report))
}

fn check_locality(
    level: &LevelId,
    current: &LevelState,
    out: &ReactionOutput,
    snapshot: &SystemState,
) -> Result<(), EngineError> {
    let fault = |reason: String| EngineError::ReactionFault {
        level: level.clone(),
        reason,
    };
    if let Some(i) = out.persisted.iter().find(|i| &i.target != level) {
        return Err(fault(format!("persisted influence {} targets {}", i.id, i.target)));
    }
    let spawned: BTreeSet<&AgentId> = out.spawned.iter().map(|r| &r.id).collect();
    for a in out.bodies.keys() {
        let known = current.bodies.contains_key(a) || snapshot.agents.contains_key(a);
        if !known && !spawned.contains(a) {
            return Err(fault(format!("body for unknown agent {a}")));
        }
    }
    for a in &spawned {
        if !out.bodies.contains_key(*a) {
            return Err(fault(format!("spawned agent {a} has no body")));
        }
    }
    Ok(())
}

pub fn step_with_report(model: &Model, state: &SystemState) -> Result<(SystemState, StepReport), EngineError> {
    let produced = produce_influences(model, state)?;
    react(model, state, &produced)
}

/// One full influence/reaction step from `t` to `t + 1`.
pub fn step(model: &Model, state: &SystemState) -> Result<SystemState, EngineError> {
    step_with_report(model, state).map(|(s, _)| s)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub tick: u64,
    pub values: Vec<(String, f64)>,
}

/// Read-only observer, called after each step with the new state and the
/// step report.
pub trait ObserverHook {
    fn observe(&mut self, state: &SystemState, report: &StepReport) -> Option<MetricRecord>;
}

/// Named early-stop condition evaluated on each new state.
pub struct Termination<'a> {
    pub name: String,
    pub predicate: Box<dyn Fn(&SystemState) -> bool + 'a>,
}

impl<'a> Termination<'a> {
    pub fn new(name: impl Into<String>, predicate: impl Fn(&SystemState) -> bool + 'a) -> Self {
        Self {
            name: name.into(),
            predicate: Box::new(predicate),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "reason", content = "detail")]
pub enum StopReason {
    TickBudget,
    Terminated(String),
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StopReason::TickBudget => f.write_str("tick budget exhausted"),
            StopReason::Terminated(n) => write!(f, "terminated: {n}"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub final_state: SystemState,
    pub records: Vec<MetricRecord>,
    pub stop: StopReason,
    pub ticks_run: u64,
}

/// Steps `ticks` times, or until the termination predicate holds.
pub fn run(
    model: &Model,
    state0: &SystemState,
    ticks: u64,
    observers: &mut [&mut dyn ObserverHook],
    termination: Option<&Termination<'_>>,
) -> Result<RunResult, EngineError> {
    assert!(ticks >= 1, "run needs a positive tick budget");
    let mut state = state0.clone();
    let mut records = Vec::new();
    for n in 1..=ticks {
        let (next, report) = step_with_report(model, &state)?;
        for o in observers.iter_mut() {
            records.extend(o.observe(&next, &report));
        }
        state = next;
        if let Some(t) = termination {
            if (t.predicate)(&state) {
                return Ok(RunResult {
                    final_state: state,
                    records,
                    stop: StopReason::Terminated(t.name.clone()),
                    ticks_run: n,
                });
            }
        }
    }
    Ok(RunResult {
        final_state: state,
        records,
        stop: StopReason::TickBudget,
        ticks_run: ticks,
    })
}

//! Emergence and constraint between hierarchically coupled levels.
//!
//! An emergence is an influence that exists only at the macro level and that
//! no macro-level behavior or environment may produce. A constraint is a
//! micro-level influence, producible only from outside the micro level, that
//! inhibits the micro influences its selector matches before the micro
//! reaction runs.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::engine::Model;
use crate::level_graph::{LevelId, Relation};
use crate::state::{
    AgentId, AgentRecord, Body, EnvironmentId, Influence, InfluenceClass, InfluenceId,
    InfluenceSet, Kind, LevelState, ProducerRef, SystemState,
};

/// Body attribute holding the micro agents a macro agent governs.
pub const MEMBERS: &str = "members";

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct HierarchicalCoupling {
    pub micro: LevelId,
    #[serde(rename = "macro")]
    pub macro_level: LevelId,
}

impl HierarchicalCoupling {
    pub fn new(micro: impl Into<LevelId>, macro_level: impl Into<LevelId>) -> Self {
        Self {
            micro: micro.into(),
            macro_level: macro_level.into(),
        }
    }
}

impl fmt::Display for HierarchicalCoupling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.micro, self.macro_level)
    }
}

/// Declarative description of the influences a constraint inhibits. All
/// present conditions must hold; only ordinary influences can match.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InfluenceSelector {
    pub kind: Kind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub producer: Option<ProducerRef>,
    /// Payload fields that must be present with exactly these values.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub payload: BTreeMap<String, Value>,
}

impl InfluenceSelector {
    pub fn kind(kind: impl Into<Kind>) -> Self {
        Self {
            kind: kind.into(),
            producer: None,
            payload: BTreeMap::new(),
        }
    }

    pub fn from_producer(mut self, producer: ProducerRef) -> Self {
        self.producer = Some(producer);
        self
    }

    pub fn with_field(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.payload.insert(key.to_string(), value.into());
        self
    }

    pub fn matches(&self, i: &Influence) -> bool {
        i.class == InfluenceClass::Ordinary
            && i.kind == self.kind
            && self.producer.as_ref().map_or(true, |p| *p == i.id.producer)
            && self
                .payload
                .iter()
                .all(|(k, v)| i.payload.get(k) == Some(v))
    }
}

/// Identifies a producer rule independently of the individual producer.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProducerPattern {
    AgentKind(String),
    Environment(EnvironmentId),
}

impl ProducerPattern {
    pub fn matches(&self, p: &ProducerRef) -> bool {
        match (self, p) {
            (ProducerPattern::AgentKind(k), ProducerRef::Agent { kind, .. }) => k == kind,
            (ProducerPattern::Environment(e), ProducerRef::Environment(id)) => e == id,
            _ => false,
        }
    }
}

impl fmt::Display for ProducerPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProducerPattern::AgentKind(k) => write!(f, "agents of kind {k}"),
            ProducerPattern::Environment(e) => write!(f, "environment {e}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmergenceKindDecl {
    pub kind: Kind,
    pub micro: LevelId,
    #[serde(rename = "macro")]
    pub macro_level: LevelId,
    /// Rules permitted to detect this emergence.
    pub producers: Vec<ProducerPattern>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstraintKindDecl {
    pub kind: Kind,
    /// Kind of the influences this constraint inhibits.
    pub inhibits: Kind,
    pub micro: LevelId,
    #[serde(rename = "macro")]
    pub macro_level: LevelId,
    pub producers: Vec<ProducerPattern>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HierarchyDecls {
    #[serde(default)]
    pub couplings: Vec<HierarchicalCoupling>,
    #[serde(default)]
    pub emergences: Vec<EmergenceKindDecl>,
    #[serde(default)]
    pub constraints: Vec<ConstraintKindDecl>,
}

impl HierarchyDecls {
    pub fn has_coupling(&self, c: &HierarchicalCoupling) -> bool {
        self.couplings.contains(c)
    }

    pub fn emergence(&self, kind: &Kind) -> Option<&EmergenceKindDecl> {
        self.emergences.iter().find(|d| &d.kind == kind)
    }

    pub fn constraint(&self, kind: &Kind) -> Option<&ConstraintKindDecl> {
        self.constraints.iter().find(|d| &d.kind == kind)
    }

    pub fn is_constraint_kind(&self, kind: &Kind) -> bool {
        self.constraint(kind).is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HierarchyViolation {
    #[error("coupling {coupling} references unknown level {level}")]
    UnknownLevel {
        coupling: HierarchicalCoupling,
        level: LevelId,
    },
    #[error("coupling {coupling} requires influence edge ({from}, {to})")]
    MissingCouplingEdge {
        coupling: HierarchicalCoupling,
        from: LevelId,
        to: LevelId,
    },
    #[error("{kind} is declared over undeclared coupling {coupling}")]
    UndeclaredCoupling {
        kind: Kind,
        coupling: HierarchicalCoupling,
    },
    #[error("kind discipline: {kind} must {rule}")]
    KindDiscipline { kind: Kind, rule: String },
    #[error("constraint {kind} inhibits {inhibits}, which is itself a constraint")]
    ConstraintOverConstraint { kind: Kind, inhibits: Kind },
    #[error("{kind} may not be produced by {producer}: it belongs to level {level}")]
    ForbiddenProducer {
        kind: Kind,
        producer: String,
        level: LevelId,
    },
    #[error("{kind} names unknown producer {producer}")]
    UnknownProducer { kind: Kind, producer: String },
    #[error("{producer} is not a declared producer of {kind}")]
    ProducerNotPermitted { kind: Kind, producer: String },
    #[error("influence of kind {kind} has class {found}, declarations require {expected}")]
    ClassMismatch {
        kind: Kind,
        expected: &'static str,
        found: &'static str,
    },
    #[error("{kind} must target {expected}, not {found}")]
    WrongTarget {
        kind: Kind,
        expected: LevelId,
        found: LevelId,
    },
    #[error("constraint {kind} selects {found}, declaration says {expected}")]
    SelectorMismatch {
        kind: Kind,
        expected: Kind,
        found: Kind,
    },
}

fn producible(model: &Model, level: &LevelId, kind: &Kind) -> bool {
    model
        .producible_kinds
        .get(level)
        .is_some_and(|ks| ks.contains(kind))
}

/// Levels a producer rule lives in, from the model's static declarations.
fn pattern_levels(model: &Model, p: &ProducerPattern) -> Option<BTreeSet<LevelId>> {
    match p {
        ProducerPattern::AgentKind(k) => model.agent_kinds.get(k).map(|d| d.levels.clone()),
        ProducerPattern::Environment(e) => model
            .environments
            .iter()
            .find(|env| &env.id == e)
            .map(|env| env.member_levels.clone()),
    }
}

fn producer_levels(model: &Model, p: &ProducerRef) -> BTreeSet<LevelId> {
    match p {
        ProducerRef::Agent { kind, .. } => pattern_levels(model, &ProducerPattern::AgentKind(kind.clone())),
        ProducerRef::Environment(e) => pattern_levels(model, &ProducerPattern::Environment(e.clone())),
        ProducerRef::Reaction(l) => Some([l.clone()].into()),
    }
    .unwrap_or_default()
}

fn check_coupling(model: &Model, c: &HierarchicalCoupling, out: &mut Vec<HierarchyViolation>) {
    let mut ok = true;
    for l in [&c.micro, &c.macro_level] {
        if !model.graph.contains(l) {
            out.push(HierarchyViolation::UnknownLevel {
                coupling: c.clone(),
                level: l.clone(),
            });
            ok = false;
        }
    }
    if !ok {
        return;
    }
    for (from, to) in [(&c.micro, &c.macro_level), (&c.macro_level, &c.micro)] {
        if !model.graph.has_edge(Relation::Influence, from, to) {
            out.push(HierarchyViolation::MissingCouplingEdge {
                coupling: c.clone(),
                from: from.clone(),
                to: to.clone(),
            });
        }
    }
}

/// Statically validates every coupling, emergence and constraint declaration
/// of the model. Returns all violations found.
pub fn validate_hierarchy(model: &Model) -> Vec<HierarchyViolation> {
    let decls = &model.hierarchy;
    let mut out = Vec::new();
    for c in &decls.couplings {
        check_coupling(model, c, &mut out);
    }

    for d in &decls.emergences {
        let coupling = HierarchicalCoupling::new(d.micro.clone(), d.macro_level.clone());
        if !decls.has_coupling(&coupling) {
            out.push(HierarchyViolation::UndeclaredCoupling {
                kind: d.kind.clone(),
                coupling,
            });
        }
        if !producible(model, &d.macro_level, &d.kind) {
            out.push(HierarchyViolation::KindDiscipline {
                kind: d.kind.clone(),
                rule: format!("be producible in macro level {}", d.macro_level),
            });
        }
        if producible(model, &d.micro, &d.kind) {
            out.push(HierarchyViolation::KindDiscipline {
                kind: d.kind.clone(),
                rule: format!("not be producible in micro level {}", d.micro),
            });
        }
        check_producers(model, &d.kind, &d.producers, &d.macro_level, &mut out);
    }

    for d in &decls.constraints {
        let coupling = HierarchicalCoupling::new(d.micro.clone(), d.macro_level.clone());
        if !decls.has_coupling(&coupling) {
            out.push(HierarchyViolation::UndeclaredCoupling {
                kind: d.kind.clone(),
                coupling,
            });
        }
        for k in [&d.kind, &d.inhibits] {
            if !producible(model, &d.micro, k) {
                out.push(HierarchyViolation::KindDiscipline {
                    kind: k.clone(),
                    rule: format!("be producible in micro level {} (constraint {})", d.micro, d.kind),
                });
            }
        }
        if producible(model, &d.macro_level, &d.kind) && producible(model, &d.macro_level, &d.inhibits)
        {
            out.push(HierarchyViolation::KindDiscipline {
                kind: d.kind.clone(),
                rule: format!(
                    "not share macro level {} together with {}",
                    d.macro_level, d.inhibits
                ),
            });
        }
        if decls.is_constraint_kind(&d.inhibits) {
            out.push(HierarchyViolation::ConstraintOverConstraint {
                kind: d.kind.clone(),
                inhibits: d.inhibits.clone(),
            });
        }
        check_producers(model, &d.kind, &d.producers, &d.micro, &mut out);
    }
    out
}

fn check_producers(
    model: &Model,
    kind: &Kind,
    producers: &[ProducerPattern],
    forbidden: &LevelId,
    out: &mut Vec<HierarchyViolation>,
) {
    for p in producers {
        match pattern_levels(model, p) {
            None => out.push(HierarchyViolation::UnknownProducer {
                kind: kind.clone(),
                producer: p.to_string(),
            }),
            Some(levels) if levels.contains(forbidden) => {
                out.push(HierarchyViolation::ForbiddenProducer {
                    kind: kind.clone(),
                    producer: p.to_string(),
                    level: forbidden.clone(),
                })
            }
            Some(_) => {}
        }
    }
}

/// Checks one produced emergence influence against its declaration.
pub fn check_emergence_legality(
    model: &Model,
    coupling: &HierarchicalCoupling,
    influence: &Influence,
) -> Result<(), HierarchyViolation> {
    let kind = &influence.kind;
    if !model.hierarchy.has_coupling(coupling) {
        return Err(HierarchyViolation::UndeclaredCoupling {
            kind: kind.clone(),
            coupling: coupling.clone(),
        });
    }
    if influence.class != InfluenceClass::Emergence {
        return Err(HierarchyViolation::ClassMismatch {
            kind: kind.clone(),
            expected: "emergence",
            found: influence.class.name(),
        });
    }
    if influence.target != coupling.macro_level {
        return Err(HierarchyViolation::WrongTarget {
            kind: kind.clone(),
            expected: coupling.macro_level.clone(),
            found: influence.target.clone(),
        });
    }
    if !producible(model, &coupling.macro_level, kind) {
        return Err(HierarchyViolation::KindDiscipline {
            kind: kind.clone(),
            rule: format!("be producible in macro level {}", coupling.macro_level),
        });
    }
    if producible(model, &coupling.micro, kind) {
        return Err(HierarchyViolation::KindDiscipline {
            kind: kind.clone(),
            rule: format!("not be producible in micro level {}", coupling.micro),
        });
    }
    let decl = model
        .hierarchy
        .emergences
        .iter()
        .find(|d| &d.kind == kind && d.macro_level == coupling.macro_level && d.micro == coupling.micro)
        .ok_or_else(|| HierarchyViolation::ProducerNotPermitted {
            kind: kind.clone(),
            producer: influence.id.producer.to_string(),
        })?;
    let producer = &influence.id.producer;
    if producer_levels(model, producer).contains(&coupling.macro_level) {
        return Err(HierarchyViolation::ForbiddenProducer {
            kind: kind.clone(),
            producer: producer.to_string(),
            level: coupling.macro_level.clone(),
        });
    }
    if !decl.producers.iter().any(|p| p.matches(producer)) {
        return Err(HierarchyViolation::ProducerNotPermitted {
            kind: kind.clone(),
            producer: producer.to_string(),
        });
    }
    Ok(())
}

/// Checks one produced constraint influence against its declaration.
pub fn check_constraint_legality(model: &Model, influence: &Influence) -> Result<(), HierarchyViolation> {
    let kind = &influence.kind;
    let InfluenceClass::Constraint(selector) = &influence.class else {
        return Err(HierarchyViolation::ClassMismatch {
            kind: kind.clone(),
            expected: "constraint",
            found: influence.class.name(),
        });
    };
    let decl = model
        .hierarchy
        .constraint(kind)
        .ok_or_else(|| HierarchyViolation::ProducerNotPermitted {
            kind: kind.clone(),
            producer: influence.id.producer.to_string(),
        })?;
    if influence.target != decl.micro {
        return Err(HierarchyViolation::WrongTarget {
            kind: kind.clone(),
            expected: decl.micro.clone(),
            found: influence.target.clone(),
        });
    }
    if selector.kind != decl.inhibits {
        return Err(HierarchyViolation::SelectorMismatch {
            kind: kind.clone(),
            expected: decl.inhibits.clone(),
            found: selector.kind.clone(),
        });
    }
    let producer = &influence.id.producer;
    if producer_levels(model, producer).contains(&decl.micro) {
        return Err(HierarchyViolation::ForbiddenProducer {
            kind: kind.clone(),
            producer: producer.to_string(),
            level: decl.micro.clone(),
        });
    }
    if !decl.producers.iter().any(|p| p.matches(producer)) {
        return Err(HierarchyViolation::ProducerNotPermitted {
            kind: kind.clone(),
            producer: producer.to_string(),
        });
    }
    Ok(())
}

/// Classification check applied to every produced influence: declared
/// emergence and constraint kinds must carry the matching class and obey
/// their declarations, and no influence may claim a special class without a
/// declaration.
pub fn check_influence(model: &Model, influence: &Influence) -> Result<(), HierarchyViolation> {
    let decls = &model.hierarchy;
    if let Some(d) = decls.emergence(&influence.kind) {
        let coupling = HierarchicalCoupling::new(d.micro.clone(), d.macro_level.clone());
        return check_emergence_legality(model, &coupling, influence);
    }
    if decls.is_constraint_kind(&influence.kind) {
        return check_constraint_legality(model, influence);
    }
    match influence.class {
        InfluenceClass::Ordinary => Ok(()),
        _ => Err(HierarchyViolation::ClassMismatch {
            kind: influence.kind.clone(),
            expected: "ordinary",
            found: influence.class.name(),
        }),
    }
}

/// One constraint and the influences it removed this step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InhibitionRecord {
    pub constraint: InfluenceId,
    /// Empty when the constraint matched nothing.
    pub inhibited: Vec<InfluenceId>,
}

/// Removes every ordinary influence matched by a constraint of the set, then
/// removes the constraints themselves.
pub fn apply_constraints(set: &InfluenceSet) -> (InfluenceSet, Vec<InhibitionRecord>) {
    let constraints: Vec<(&InfluenceId, &InfluenceSelector)> = set
        .iter()
        .filter_map(|i| match &i.class {
            InfluenceClass::Constraint(sel) => Some((&i.id, sel)),
            _ => None,
        })
        .collect();
    let mut log = Vec::with_capacity(constraints.len());
    let mut removed = BTreeSet::new();
    for (cid, sel) in &constraints {
        let inhibited: Vec<InfluenceId> = set
            .iter()
            .filter(|i| sel.matches(i))
            .map(|i| i.id.clone())
            .collect();
        removed.extend(inhibited.iter().cloned());
        log.push(InhibitionRecord {
            constraint: (*cid).clone(),
            inhibited,
        });
    }
    let filtered = set
        .iter()
        .filter(|i| !i.is_constraint() && !removed.contains(&i.id))
        .cloned()
        .collect();
    (filtered, log)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LifecycleError {
    #[error("unknown coupling {0}")]
    UnknownCoupling(HierarchicalCoupling),
    #[error("emergence payload has no member list")]
    NoMembers,
    #[error("unknown macro agent {0}")]
    UnknownMacroAgent(AgentId),
}

pub fn members_of(body: &Body) -> BTreeSet<AgentId> {
    body.get(MEMBERS)
        .and_then(Value::as_array)
        .map(|a| {
            a.iter()
                .filter_map(Value::as_str)
                .map(AgentId::from)
                .collect()
        })
        .unwrap_or_default()
}

pub fn members_value(members: &BTreeSet<AgentId>) -> Value {
    Value::Array(members.iter().map(|m| Value::from(m.as_str())).collect())
}

/// Connected components of the overlap relation between member sets.
/// Returns index groups in ascending order of their smallest index.
pub fn overlap_components(groups: &[BTreeSet<AgentId>]) -> Vec<Vec<usize>> {
    let n = groups.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while p[r] != r {
            r = p[r];
        }
        let mut c = x;
        while p[c] != r {
            let next = p[c];
            p[c] = r;
            c = next;
        }
        r
    }
    for i in 0..n {
        for j in i + 1..n {
            if !groups[i].is_disjoint(&groups[j]) {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut comps: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..n {
        let r = find(&mut parent, i);
        comps.entry(r).or_default().push(i);
    }
    comps.into_values().collect()
}

/// Outcome of folding a member set into a macro level.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SpawnOutcome {
    Spawned(AgentId),
    /// Members were merged into an existing macro agent (the smallest id of
    /// all overlapping ones; the others are absorbed and removed).
    Merged { into: AgentId, absorbed: Vec<AgentId> },
}

/// Level-local macro agent creation, usable from the macro level's reaction.
/// If `members` overlaps existing macro bodies they are merged so that every
/// micro agent is governed by at most one macro agent.
pub fn spawn_in_level(
    macro_state: &mut LevelState,
    members: &BTreeSet<AgentId>,
    new_id: AgentId,
    attributes: Body,
) -> SpawnOutcome {
    let overlapping: Vec<AgentId> = macro_state
        .bodies
        .iter()
        .filter(|(_, b)| !members_of(b).is_disjoint(members))
        .map(|(id, _)| id.clone())
        .collect();
    if let Some(into) = overlapping.first().cloned() {
        let mut all = members.clone();
        let mut absorbed = Vec::new();
        for other in &overlapping[1..] {
            let b = macro_state.bodies.remove(other).unwrap();
            all.extend(members_of(&b));
            absorbed.push(other.clone());
        }
        let body = macro_state.bodies.get_mut(&into).unwrap();
        all.extend(members_of(body));
        body.attributes.insert(MEMBERS.into(), members_value(&all));
        SpawnOutcome::Merged { into, absorbed }
    } else {
        let mut body = attributes;
        body.attributes.insert(MEMBERS.into(), members_value(members));
        macro_state.bodies.insert(new_id.clone(), body);
        SpawnOutcome::Spawned(new_id)
    }
}

/// Creates (or extends) the macro agent governing the members listed in an
/// emergence payload (`members` array of agent ids).
pub fn spawn_macro_agent(
    state: &SystemState,
    decls: &HierarchyDecls,
    coupling: &HierarchicalCoupling,
    emergence: &Influence,
    new_id: AgentId,
    agent_kind: &str,
) -> Result<(SystemState, SpawnOutcome), LifecycleError> {
    if !decls.has_coupling(coupling) || !state.levels.contains_key(&coupling.macro_level) {
        return Err(LifecycleError::UnknownCoupling(coupling.clone()));
    }
    let members: BTreeSet<AgentId> = emergence
        .payload
        .get(MEMBERS)
        .and_then(Value::as_array)
        .ok_or(LifecycleError::NoMembers)?
        .iter()
        .filter_map(Value::as_str)
        .map(AgentId::from)
        .collect();
    let mut next = state.clone();
    let level = next.levels.get_mut(&coupling.macro_level).unwrap();
    let outcome = spawn_in_level(level, &members, new_id, Body::new());
    match &outcome {
        SpawnOutcome::Spawned(id) => {
            next.agents
                .insert(id.clone(), AgentRecord::new(id.clone(), agent_kind));
        }
        SpawnOutcome::Merged { absorbed, .. } => {
            for a in absorbed {
                next.agents.remove(a);
            }
        }
    }
    Ok((next, outcome))
}

/// Removes a macro agent's body and its agent record.
pub fn dissolve_macro_agent(
    state: &SystemState,
    decls: &HierarchyDecls,
    coupling: &HierarchicalCoupling,
    agent: &AgentId,
) -> Result<SystemState, LifecycleError> {
    if !decls.has_coupling(coupling) || !state.levels.contains_key(&coupling.macro_level) {
        return Err(LifecycleError::UnknownCoupling(coupling.clone()));
    }
    let mut next = state.clone();
    let level = next.levels.get_mut(&coupling.macro_level).unwrap();
    if level.bodies.remove(agent).is_none() {
        return Err(LifecycleError::UnknownMacroAgent(agent.clone()));
    }
    if next.member_levels(agent).map_or(false, |l| l.is_empty()) {
        next.agents.remove(agent);
    }
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn infl(producer: &str, seq: u32, kind: &str, class: InfluenceClass) -> Influence {
        Influence {
            id: InfluenceId {
                tick: 3,
                producer: ProducerRef::agent(producer, "agv"),
                seq,
            },
            kind: kind.into(),
            target: "micro".into(),
            class,
            payload: json!({"agent": producer}),
        }
    }

    fn not(kind: &str, seq: u32) -> Influence {
        let sel = InfluenceSelector::kind(kind);
        Influence {
            id: InfluenceId {
                tick: 3,
                producer: ProducerRef::agent("boss", "solver"),
                seq,
            },
            kind: format!("inhibit-{kind}").into(),
            target: "micro".into(),
            class: InfluenceClass::Constraint(sel),
            payload: json!({}),
        }
    }

    #[test]
    fn constraint_inhibits_matching_influence() {
        let i = infl("a", 0, "move", InfluenceClass::Ordinary);
        let c = not("move", 0);
        let set: InfluenceSet = [i.clone(), c.clone()].into_iter().collect();
        let (filtered, log) = apply_constraints(&set);
        assert!(filtered.is_empty());
        assert_eq!(
            log,
            vec![InhibitionRecord {
                constraint: c.id,
                inhibited: vec![i.id]
            }]
        );
    }

    #[test]
    fn no_constraint_is_identity() {
        let set: InfluenceSet = [infl("a", 0, "move", InfluenceClass::Ordinary)].into_iter().collect();
        let (filtered, log) = apply_constraints(&set);
        assert_eq!(filtered, set);
        assert!(log.is_empty());
    }

    #[test]
    fn constraint_filters_by_kind_only() {
        let i1 = infl("a", 0, "move", InfluenceClass::Ordinary);
        let i2 = infl("a", 1, "emit-repulsion", InfluenceClass::Ordinary);
        let c = not("move", 0);
        let set: InfluenceSet = [i1.clone(), i2.clone(), c].into_iter().collect();
        let (filtered, log) = apply_constraints(&set);
        // oracle: keep ordinary influences no selector matches
        let expected: InfluenceSet = set
            .iter()
            .filter(|i| !i.is_constraint() && i.kind.as_str() != "move")
            .cloned()
            .collect();
        assert_eq!(filtered, expected);
        assert_eq!(filtered.len(), 1);
        assert!(filtered.contains(&i2.id));
        assert_eq!(log[0].inhibited, vec![i1.id]);
    }

    #[test]
    fn unmatched_constraint_logged_as_noop() {
        let c = not("move", 0);
        let set: InfluenceSet = [c.clone()].into_iter().collect();
        let (filtered, log) = apply_constraints(&set);
        assert!(filtered.is_empty());
        assert_eq!(log[0].inhibited, Vec::<InfluenceId>::new());
    }

    #[test]
    fn constraints_never_inhibit_special_classes() {
        let e = infl("a", 0, "move", InfluenceClass::Emergence);
        let other = not("move", 1);
        let mut matching_constraint = other.clone();
        matching_constraint.kind = "move".into();
        let c = not("move", 0);
        let set: InfluenceSet = [e.clone(), matching_constraint, c].into_iter().collect();
        let (filtered, _) = apply_constraints(&set);
        assert!(filtered.contains(&e.id));
        assert_eq!(filtered.len(), 1);
    }

    #[test]
    fn selector_producer_and_payload() {
        let i = infl("a", 0, "move", InfluenceClass::Ordinary);
        let sel = InfluenceSelector::kind("move").from_producer(ProducerRef::agent("a", "agv"));
        assert!(sel.matches(&i));
        assert!(!InfluenceSelector::kind("move")
            .from_producer(ProducerRef::agent("b", "agv"))
            .matches(&i));
        assert!(sel.clone().with_field("agent", "a").matches(&i));
        assert!(!sel.with_field("agent", "b").matches(&i));
    }

    #[test]
    fn overlap_components_merge_transitively() {
        let g = |xs: &[&str]| xs.iter().map(|x| AgentId::from(*x)).collect::<BTreeSet<_>>();
        let groups = vec![g(&["a", "b"]), g(&["x"]), g(&["b", "c"]), g(&["c", "d"]), g(&["y"])];
        assert_eq!(overlap_components(&groups), vec![vec![0, 2, 3], vec![1], vec![4]]);
    }
}

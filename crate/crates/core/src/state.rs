//! Dynamic state: influences, per-level states, agents and their bodies.
//!
//! Every value here is treated as an immutable snapshot. Operations that
//! change state return a new [`SystemState`] and leave the input untouched.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::hierarchy::InfluenceSelector;
use crate::level_graph::LevelId;

macro_rules! string_id {
    ($(#[$m:meta])* $name:ident) => {
        $(#[$m])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(String);

        impl $name {
            pub fn new(s: impl Into<String>) -> Self {
                Self(s.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self::new(s)
            }
        }

        impl From<String> for $name {
            fn from(s: String) -> Self {
                Self(s)
            }
        }
    };
}

string_id!(
    /// Agent identifier. Ties between agents are always broken by the
    /// smallest id in lexicographic order.
    AgentId
);
string_id!(EnvironmentId);
string_id!(
    /// Domain tag of an influence, e.g. `move` or `need-transport`.
    Kind
);

/// Who produced an influence.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProducerRef {
    Agent { id: AgentId, kind: String },
    Environment(EnvironmentId),
    /// Created by a level's reaction and carried to the next tick.
    Reaction(LevelId),
}

impl ProducerRef {
    pub fn agent(id: impl Into<AgentId>, kind: impl Into<String>) -> Self {
        ProducerRef::Agent {
            id: id.into(),
            kind: kind.into(),
        }
    }

    pub fn agent_id(&self) -> Option<&AgentId> {
        match self {
            ProducerRef::Agent { id, .. } => Some(id),
            _ => None,
        }
    }
}

impl fmt::Display for ProducerRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProducerRef::Agent { id, kind } => write!(f, "agent:{id}({kind})"),
            ProducerRef::Environment(e) => write!(f, "env:{e}"),
            ProducerRef::Reaction(l) => write!(f, "reaction:{l}"),
        }
    }
}

/// Producer-scoped influence identity: the producer, the tick at which it
/// was produced and a per-producer sequence number within that tick.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct InfluenceId {
    pub tick: u64,
    pub producer: ProducerRef,
    pub seq: u32,
}

impl fmt::Display for InfluenceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}#{}", self.producer, self.tick, self.seq)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "class", content = "selector")]
pub enum InfluenceClass {
    Ordinary,
    Emergence,
    /// Inhibits every ordinary influence of the same level matched by the
    /// selector.
    Constraint(InfluenceSelector),
}

impl InfluenceClass {
    pub fn name(&self) -> &'static str {
        match self {
            InfluenceClass::Ordinary => "ordinary",
            InfluenceClass::Emergence => "emergence",
            InfluenceClass::Constraint(_) => "constraint",
        }
    }
}

/// A level-targeted desire for change. Influences never mutate state
/// directly; the target level's reaction decides what they amount to.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Influence {
    pub id: InfluenceId,
    pub kind: Kind,
    pub target: LevelId,
    pub class: InfluenceClass,
    pub payload: Value,
}

impl Influence {
    pub fn is_constraint(&self) -> bool {
        matches!(self.class, InfluenceClass::Constraint(_))
    }

    pub fn payload_field(&self, key: &str) -> Option<&Value> {
        self.payload.get(key)
    }
}

/// Influence set keyed (and deduplicated) by id. Serializes as a list
/// ordered by id.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<Influence>", into = "Vec<Influence>")]
pub struct InfluenceSet(BTreeMap<InfluenceId, Influence>);

impl From<Vec<Influence>> for InfluenceSet {
    fn from(v: Vec<Influence>) -> Self {
        v.into_iter().collect()
    }
}

impl From<InfluenceSet> for Vec<Influence> {
    fn from(s: InfluenceSet) -> Self {
        s.into_iter().collect()
    }
}

impl InfluenceSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts `i`, returning false if an influence with the same id was
    /// already present.
    pub fn insert(&mut self, i: Influence) -> bool {
        use std::collections::btree_map::Entry;
        match self.0.entry(i.id.clone()) {
            Entry::Occupied(_) => false,
            Entry::Vacant(v) => {
                v.insert(i);
                true
            }
        }
    }

    pub fn remove(&mut self, id: &InfluenceId) -> Option<Influence> {
        self.0.remove(id)
    }

    pub fn contains(&self, id: &InfluenceId) -> bool {
        self.0.contains_key(id)
    }

    pub fn get(&self, id: &InfluenceId) -> Option<&Influence> {
        self.0.get(id)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Influence> {
        self.0.values()
    }

    pub fn ids(&self) -> impl Iterator<Item = &InfluenceId> {
        self.0.keys()
    }

    pub fn of_kind<'a>(&'a self, kind: &'a str) -> impl Iterator<Item = &'a Influence> + 'a {
        self.iter().filter(move |i| i.kind.as_str() == kind)
    }

    /// Splits the set by target level.
    pub fn partition_by_level(&self) -> BTreeMap<LevelId, InfluenceSet> {
        let mut out: BTreeMap<LevelId, InfluenceSet> = BTreeMap::new();
        for i in self.iter() {
            out.entry(i.target.clone()).or_default().insert(i.clone());
        }
        out
    }
}

impl FromIterator<Influence> for InfluenceSet {
    fn from_iter<T: IntoIterator<Item = Influence>>(iter: T) -> Self {
        let mut s = InfluenceSet::new();
        for i in iter {
            s.insert(i);
        }
        s
    }
}

impl IntoIterator for InfluenceSet {
    type Item = Influence;
    type IntoIter = std::collections::btree_map::IntoValues<InfluenceId, Influence>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.into_values()
    }
}

/// Union of influence sets with id-based deduplication.
pub fn merge_influences<'a>(sets: impl IntoIterator<Item = &'a InfluenceSet>) -> InfluenceSet {
    let mut out = InfluenceSet::new();
    for s in sets {
        for i in s.iter() {
            out.insert(i.clone());
        }
    }
    out
}

/// The manifestation of an agent inside one level's state.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Body {
    pub attributes: Map<String, Value>,
}

impl Body {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.attributes.insert(key.to_string(), value.into());
        self
    }

    pub fn get(&self, key: &str) -> Option<&Value> {
        self.attributes.get(key)
    }
}

/// Dynamic state of one level: environmental properties (named properties
/// plus the bodies registered in the level) and the influences carried into
/// the next production phase.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelState {
    pub level: LevelId,
    pub properties: BTreeMap<String, Value>,
    pub bodies: BTreeMap<AgentId, Body>,
    pub influences: InfluenceSet,
}

impl LevelState {
    pub fn empty(level: LevelId) -> Self {
        Self {
            level,
            properties: BTreeMap::new(),
            bodies: BTreeMap::new(),
            influences: InfluenceSet::new(),
        }
    }

    pub fn property(&self, key: &str) -> Option<&Value> {
        self.properties.get(key)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentRecord {
    pub id: AgentId,
    /// Selects the behavior rule driving this agent.
    pub kind: String,
    /// Opaque to the engine; only the agent's own behavior interprets it.
    pub internal_state: Value,
}

impl AgentRecord {
    pub fn new(id: impl Into<AgentId>, kind: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            kind: kind.into(),
            internal_state: Value::Null,
        }
    }

    pub fn producer(&self) -> ProducerRef {
        ProducerRef::Agent {
            id: self.id.clone(),
            kind: self.kind.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnvironmentRecord {
    pub id: EnvironmentId,
    pub member_levels: BTreeSet<LevelId>,
    /// Name of the natural rule this environment runs.
    pub natural: String,
}

impl EnvironmentRecord {
    pub fn producer(&self) -> ProducerRef {
        ProducerRef::Environment(self.id.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StateError {
    #[error("unknown agent {0}")]
    UnknownAgent(AgentId),
    #[error("unknown level {0}")]
    UnknownLevel(LevelId),
    #[error("agent {agent} already has a body in level {level}")]
    DuplicateBody { agent: AgentId, level: LevelId },
    #[error("agent {agent} has no body in level {level}")]
    NoSuchBody { agent: AgentId, level: LevelId },
    #[error("agent {0} already exists")]
    DuplicateAgent(AgentId),
}

/// The whole system at one tick.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SystemState {
    pub time: u64,
    pub levels: BTreeMap<LevelId, LevelState>,
    pub agents: BTreeMap<AgentId, AgentRecord>,
}

impl SystemState {
    /// Empty state at tick 0 with one empty level state per level.
    pub fn new<'a>(levels: impl IntoIterator<Item = &'a LevelId>) -> Self {
        Self {
            time: 0,
            levels: levels
                .into_iter()
                .map(|l| (l.clone(), LevelState::empty(l.clone())))
                .collect(),
            agents: BTreeMap::new(),
        }
    }

    pub fn level(&self, l: &LevelId) -> Result<&LevelState, StateError> {
        self.levels
            .get(l)
            .ok_or_else(|| StateError::UnknownLevel(l.clone()))
    }

    pub fn agent(&self, a: &AgentId) -> Result<&AgentRecord, StateError> {
        self.agents
            .get(a)
            .ok_or_else(|| StateError::UnknownAgent(a.clone()))
    }

    /// Levels in which `a` currently has a body registered.
    pub fn member_levels(&self, a: &AgentId) -> Result<BTreeSet<LevelId>, StateError> {
        self.agent(a)?;
        Ok(self
            .levels
            .values()
            .filter(|ls| ls.bodies.contains_key(a))
            .map(|ls| ls.level.clone())
            .collect())
    }

    /// The agent's physical state: its bodies across all levels.
    pub fn bodies_of(&self, a: &AgentId) -> BTreeMap<LevelId, &Body> {
        self.levels
            .values()
            .filter_map(|ls| ls.bodies.get(a).map(|b| (ls.level.clone(), b)))
            .collect()
    }

    pub fn add_agent(&self, record: AgentRecord) -> Result<SystemState, StateError> {
        if self.agents.contains_key(&record.id) {
            return Err(StateError::DuplicateAgent(record.id));
        }
        let mut next = self.clone();
        next.agents.insert(record.id.clone(), record);
        Ok(next)
    }

    pub fn register_body(
        &self,
        a: &AgentId,
        l: &LevelId,
        body: Body,
    ) -> Result<SystemState, StateError> {
        self.agent(a)?;
        let ls = self.level(l)?;
        if ls.bodies.contains_key(a) {
            return Err(StateError::DuplicateBody {
                agent: a.clone(),
                level: l.clone(),
            });
        }
        let mut next = self.clone();
        next.levels.get_mut(l).unwrap().bodies.insert(a.clone(), body);
        Ok(next)
    }

    pub fn remove_body(&self, a: &AgentId, l: &LevelId) -> Result<SystemState, StateError> {
        self.agent(a)?;
        let ls = self.level(l)?;
        if !ls.bodies.contains_key(a) {
            return Err(StateError::NoSuchBody {
                agent: a.clone(),
                level: l.clone(),
            });
        }
        let mut next = self.clone();
        next.levels.get_mut(l).unwrap().bodies.remove(a);
        Ok(next)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("level {level} is outside the perception neighborhood")]
pub struct PerceptionError {
    pub level: LevelId,
}

/// Read-only view of the snapshot restricted to the levels a producer may
/// perceive.
#[derive(Debug, Clone)]
pub struct Percept<'a> {
    pub tick: u64,
    observed: BTreeMap<LevelId, &'a LevelState>,
}

impl<'a> Percept<'a> {
    pub fn new(tick: u64, observed: BTreeMap<LevelId, &'a LevelState>) -> Self {
        Self { tick, observed }
    }

    pub fn level(&self, l: &LevelId) -> Result<&'a LevelState, PerceptionError> {
        self.observed
            .get(l)
            .copied()
            .ok_or_else(|| PerceptionError { level: l.clone() })
    }

    pub fn levels(&self) -> impl Iterator<Item = &LevelId> {
        self.observed.keys()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn state() -> SystemState {
        let levels: Vec<LevelId> = vec!["micro".into(), "macro".into()];
        SystemState::new(&levels)
            .add_agent(AgentRecord::new("a1", "agv"))
            .unwrap()
    }

    fn infl(producer: &str, seq: u32, target: &str) -> Influence {
        Influence {
            id: InfluenceId {
                tick: 0,
                producer: ProducerRef::agent(producer, "agv"),
                seq,
            },
            kind: "move".into(),
            target: target.into(),
            class: InfluenceClass::Ordinary,
            payload: json!({}),
        }
    }

    #[test]
    fn membership_follows_bodies() {
        let s = state();
        let a: AgentId = "a1".into();
        assert!(s.member_levels(&a).unwrap().is_empty());

        let s1 = s.register_body(&a, &"micro".into(), Body::new()).unwrap();
        assert_eq!(
            s1.member_levels(&a).unwrap(),
            ["micro".into()].into_iter().collect::<BTreeSet<LevelId>>()
        );
        // input unchanged
        assert!(s.member_levels(&a).unwrap().is_empty());

        let s2 = s1.register_body(&a, &"macro".into(), Body::new()).unwrap();
        assert_eq!(s2.member_levels(&a).unwrap().len(), 2);
        assert_eq!(s2.bodies_of(&a).len(), 2);

        let s3 = s2
            .remove_body(&a, &"micro".into())
            .unwrap()
            .remove_body(&a, &"macro".into())
            .unwrap();
        assert!(s3.member_levels(&a).unwrap().is_empty());
    }

    #[test]
    fn body_errors() {
        let s = state();
        let a: AgentId = "a1".into();
        assert_eq!(
            s.register_body(&a, &"nope".into(), Body::new()).unwrap_err(),
            StateError::UnknownLevel("nope".into())
        );
        let s1 = s.register_body(&a, &"micro".into(), Body::new()).unwrap();
        assert!(matches!(
            s1.register_body(&a, &"micro".into(), Body::new()),
            Err(StateError::DuplicateBody { .. })
        ));
        assert!(matches!(
            s.remove_body(&a, &"micro".into()),
            Err(StateError::NoSuchBody { .. })
        ));
        assert_eq!(
            s.member_levels(&"ghost".into()).unwrap_err(),
            StateError::UnknownAgent("ghost".into())
        );
    }

    #[test]
    fn merge_empty() {
        let e = InfluenceSet::new();
        assert!(merge_influences([&e, &e]).is_empty());
    }

    #[test]
    fn merge_deduplicates_and_partitions() {
        let carried: InfluenceSet = [infl("a", 0, "micro")].into_iter().collect();
        let env: InfluenceSet = [infl("e", 0, "macro"), infl("a", 0, "micro")].into_iter().collect();
        let agents: InfluenceSet = [infl("b", 0, "micro"), infl("b", 1, "macro")].into_iter().collect();
        let merged = merge_influences([&carried, &env, &agents]);
        assert_eq!(merged.len(), 4);
        let parts = merged.partition_by_level();
        assert_eq!(parts[&LevelId::from("micro")].len(), 2);
        assert_eq!(parts[&LevelId::from("macro")].len(), 2);
        for (l, part) in &parts {
            assert!(part.iter().all(|i| &i.target == l));
        }
    }

    #[test]
    fn percept_rejects_unobserved_levels() {
        let s = state();
        let micro: LevelId = "micro".into();
        let p = Percept::new(0, [(micro.clone(), s.level(&micro).unwrap())].into());
        assert!(p.level(&micro).is_ok());
        assert_eq!(
            p.level(&"macro".into()).unwrap_err(),
            PerceptionError {
                level: "macro".into()
            }
        );
    }

    #[test]
    fn state_with_influences_round_trips_through_json() {
        let mut s = state();
        let micro = LevelId::from("micro");
        let ls = s.levels.get_mut(&micro).unwrap();
        ls.influences.insert(infl("b", 1, "micro"));
        ls.influences.insert(infl("a", 0, "micro"));
        let text = serde_json::to_string(&s).unwrap();
        let back: SystemState = serde_json::from_str(&text).unwrap();
        assert_eq!(back, s);
        let ids: Vec<_> = back.levels[&micro].influences.ids().map(|i| i.to_string()).collect();
        assert_eq!(ids, vec!["agent:a(agv)@0#0", "agent:b(agv)@0#1"]);
    }
}

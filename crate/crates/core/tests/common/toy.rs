//! Small random models over arbitrary level graphs: walkers step a counter
//! in random reachable levels, a summing reaction applies the steps.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use irm::engine::{BehaviorRule, InfluenceDraft, Model, ReactionContext, ReactionOutput, ReactionRule, Sigma};
use irm::level_graph::{validate, Direction, LevelGraphSpec, Relation, ValidatedLevelGraph};
use irm::state::{AgentId, AgentRecord, Body, InfluenceSet, Percept, PerceptionError};
use irm::{LevelId, SystemState};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

pub const STEP: &str = "step";

/// Perceives every visible level, remembers how many carried influences it
/// saw and whether any of them was stamped at the current tick or later.
pub struct Walker {
    pub graph: ValidatedLevelGraph,
}

impl BehaviorRule for Walker {
    fn perceive(&self, me: &AgentRecord, view: &Percept<'_>) -> Result<Value, PerceptionError> {
        let mut own = Vec::new();
        let mut total = 0i64;
        let mut seen = 0u64;
        let mut leaked = false;
        let levels: Vec<LevelId> = view.levels().cloned().collect();
        for l in &levels {
            let ls = view.level(l)?;
            if ls.bodies.contains_key(&me.id) {
                own.push(l.as_str().to_string());
            }
            total += ls.bodies.values().filter_map(|b| b.get("x")).filter_map(Value::as_i64).sum::<i64>();
            for i in ls.influences.iter() {
                seen += 1;
                leaked |= i.id.tick >= view.tick;
            }
        }
        Ok(json!({"own": own, "total": total, "seen": seen, "leaked": leaked}))
    }

    fn memorize(&self, _me: &AgentRecord, p: Value, internal: &Value) -> Value {
        json!({
            "own": p["own"],
            "total": p["total"],
            "seen": internal["seen"].as_u64().unwrap_or(0) + p["seen"].as_u64().unwrap(),
            "leaked": internal["leaked"].as_bool().unwrap_or(false) || p["leaked"].as_bool().unwrap(),
        })
    }

    fn decide(&self, me: &AgentRecord, internal: &Value, rng: &mut ChaCha8Rng) -> Vec<InfluenceDraft> {
        let own: Vec<LevelId> = internal["own"]
            .as_array()
            .map(|v| v.iter().filter_map(Value::as_str).map(LevelId::from).collect())
            .unwrap_or_default();
        let reach: Vec<LevelId> = self
            .graph
            .union(Relation::Influence, Direction::Out, &own)
            .unwrap()
            .into_iter()
            .collect();
        let n = rng.gen_range(0..3);
        let mut out = Vec::new();
        for _ in 0..n {
            let Some(l) = reach.choose(rng).cloned() else { break };
            let dx: i64 = rng.gen_range(-1..=1);
            out.push(InfluenceDraft::ordinary(STEP, l, json!({"agent": me.id.as_str(), "dx": dx, "seen": internal["total"]})));
        }
        out
    }
}

/// Applies each step to the walker's body in this level, counts influences
/// and carries zero steps produced this tick into the next one.
pub struct Summing;

impl ReactionRule for Summing {
    fn react(&self, ctx: &mut ReactionContext<'_>, sigma: Sigma<'_>, influences: &InfluenceSet) -> Result<ReactionOutput, String> {
        let mut out = ReactionOutput::unchanged(sigma);
        for i in influences.of_kind(STEP) {
            let a = AgentId::new(i.payload["agent"].as_str().unwrap_or_default());
            let dx = i.payload["dx"].as_i64().unwrap_or(0);
            if let Some(b) = out.bodies.get_mut(&a) {
                let x = b.get("x").and_then(Value::as_i64).unwrap_or(0);
                b.attributes.insert("x".into(), json!(x + dx));
            }
            if dx == 0 && i.id.tick == ctx.tick {
                out.persisted.insert(i.clone());
            }
        }
        let n = out.properties.get("count").and_then(Value::as_u64).unwrap_or(0);
        out.properties.insert("count".into(), json!(n + influences.len() as u64));
        Ok(out)
    }
}

/// Records a digest of its input and nothing else.
pub struct Tracer;

impl ReactionRule for Tracer {
    fn react(&self, _ctx: &mut ReactionContext<'_>, sigma: Sigma<'_>, influences: &InfluenceSet) -> Result<ReactionOutput, String> {
        let mut out = ReactionOutput::unchanged(sigma);
        out.properties.insert("trace".into(), json!(digest(influences)));
        Ok(out)
    }
}

pub fn digest(set: &InfluenceSet) -> String {
    use sha2::{Digest, Sha256};
    let bytes = serde_json::to_vec(set).unwrap();
    Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub struct Toy {
    pub model: Model,
    pub state: SystemState,
}

/// Random model over `levels` levels with up to `max_agents` walkers.
pub fn random_model(rng: &mut ChaCha8Rng, levels: usize, max_agents: usize) -> Toy {
    let names: Vec<LevelId> = (0..levels).map(|i| LevelId::new(format!("l{i}"))).collect();
    let mut spec = LevelGraphSpec::new(names.clone());
    for a in &names {
        for b in &names {
            if a != b {
                if rng.gen_bool(0.5) {
                    spec = spec.influence(a.clone(), b.clone());
                }
                if rng.gen_bool(0.5) {
                    spec = spec.perception(a.clone(), b.clone());
                }
            }
        }
    }
    let graph = validate(spec).unwrap();
    let walker = Arc::new(Walker { graph: graph.clone() });
    let mut model = Model::new(graph).with_seed(rng.gen());
    for l in &names {
        model = model.with_kinds(l.clone(), [STEP]).with_reaction(l.clone(), Arc::new(Summing));
    }
    model = model.with_agent_kind("walker", names.clone(), walker);
    let mut state = model.initial_state();
    let n = rng.gen_range(1..=max_agents);
    for k in 0..n {
        let id = AgentId::new(format!("w{k:02}"));
        state = state.add_agent(AgentRecord::new(id.clone(), "walker")).unwrap();
        let k = rng.gen_range(1..=levels.min(2));
        let homes: BTreeSet<&LevelId> = names.choose_multiple(rng, k).collect();
        for l in homes {
            let x: i64 = rng.gen_range(-5..=5);
            state = state.register_body(&id, l, Body::new().with("x", x)).unwrap();
        }
    }
    Toy { model, state }
}

pub fn leaks(state: &SystemState) -> (u64, bool) {
    let mut seen = 0;
    let mut leaked = false;
    for r in state.agents.values() {
        seen += r.internal_state["seen"].as_u64().unwrap_or(0);
        leaked |= r.internal_state["leaked"].as_bool().unwrap_or(false);
    }
    (seen, leaked)
}

pub fn bodies_by_level(state: &SystemState) -> BTreeMap<LevelId, usize> {
    state.levels.iter().map(|(l, ls)| (l.clone(), ls.bodies.len())).collect()
}

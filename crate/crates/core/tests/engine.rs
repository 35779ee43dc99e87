mod common;

use std::sync::Arc;

use irm::engine::{
    produce_influences, produce_influences_in_order, react, react_in_order, step, EngineError, ReactionContext,
    ReactionOutput, ReactionRule, Sigma,
};
use irm::scenario::Override;
use irm::state::{AgentId, Influence, InfluenceClass, InfluenceId, InfluenceSet, ProducerRef};
use irm::{LevelId, SystemState};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

fn states(name: &str, control: bool, ticks: u64) -> (irm::scenario::BuiltScenario, Vec<SystemState>) {
    let built = common::load(name, &[Override::new("control", control.to_string())]).build().unwrap();
    let mut s = built.state.clone();
    let mut out = vec![s.clone()];
    for _ in 0..ticks {
        s = step(&built.model, &s).unwrap();
        out.push(s.clone());
    }
    (built, out)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn agent_and_level_order_do_not_matter(shuffle_seed in any::<u64>(), at in 0usize..30) {
        let (built, seq) = states("corridor.json", true, 30);
        let snap = &seq[at];
        let mut rng = ChaCha8Rng::seed_from_u64(shuffle_seed);
        let mut agents: Vec<AgentId> = snap.agents.keys().cloned().collect();
        agents.shuffle(&mut rng);
        let base = produce_influences(&built.model, snap).unwrap();
        let shuffled = produce_influences_in_order(&built.model, snap, &agents).unwrap();
        prop_assert_eq!(&base, &shuffled);

        let mut levels: Vec<LevelId> = snap.levels.keys().cloned().collect();
        levels.shuffle(&mut rng);
        let a = react(&built.model, snap, &base).unwrap();
        let b = react_in_order(&built.model, snap, &base, &levels).unwrap();
        prop_assert_eq!(a.0, b.0);
    }
}

#[test]
fn snapshot_is_left_untouched() {
    let (built, seq) = states("busy_floor.json", true, 40);
    for snap in &seq {
        let before = snap.clone();
        let p = produce_influences(&built.model, snap).unwrap();
        assert_eq!(&before, snap);
        let _ = react(&built.model, snap, &p).unwrap();
        assert_eq!(&before, snap);
        // production is a pure function of the snapshot
        assert_eq!(p, produce_influences(&built.model, snap).unwrap());
    }
}

#[test]
fn each_reaction_depends_only_on_its_level() {
    let (built, seq) = states("busy_floor.json", true, 40);
    for snap in &seq {
        let p = produce_influences(&built.model, snap).unwrap();
        let (full, _) = react(&built.model, snap, &p).unwrap();
        for l in snap.levels.keys() {
            let (alone, _) = react_in_order(&built.model, snap, &p, std::slice::from_ref(l)).unwrap();
            assert_eq!(alone.levels[l], full.levels[l], "level {l}");
            for (other, ls) in &alone.levels {
                if other != l {
                    assert_eq!(ls, &snap.levels[other], "reacting {l} touched {other}");
                }
            }
        }
    }
}

/// Persists an influence aimed at another level.
struct Leaky;

impl ReactionRule for Leaky {
    fn react(&self, ctx: &mut ReactionContext<'_>, sigma: Sigma<'_>, _: &InfluenceSet) -> Result<ReactionOutput, String> {
        let mut out = ReactionOutput::unchanged(sigma);
        out.persisted.insert(Influence {
            id: InfluenceId { tick: ctx.tick, producer: ProducerRef::Reaction(ctx.level.clone()), seq: 0 },
            kind: "move".into(),
            target: "floor".into(),
            class: InfluenceClass::Ordinary,
            payload: json!({}),
        });
        Ok(out)
    }
}

#[test]
fn cross_level_persistence_is_a_fault() {
    let mut built = common::load("single_task.json", &[]).build().unwrap();
    built.model.reactions.insert("task".into(), Arc::new(Leaky));
    let err = step(&built.model, &built.state).unwrap_err();
    assert!(matches!(err, EngineError::ReactionFault { ref level, .. } if level.as_str() == "task"), "{err}");
}

#[test]
fn bad_agent_order_is_rejected() {
    let built = common::load("single_task.json", &[]).build().unwrap();
    let err = produce_influences_in_order(&built.model, &built.state, &[]).unwrap_err();
    assert!(matches!(err, EngineError::BadAgentOrder));
}

#[test]
fn identical_seeds_give_identical_runs() {
    let (_, a) = states("busy_floor.json", true, 60);
    let (_, b) = states("busy_floor.json", true, 60);
    assert_eq!(a, b);
}

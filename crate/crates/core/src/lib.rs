//! Multi-level influence/reaction simulation.
//!
//! Agents and environments of each level produce influences from a frozen
//! snapshot; each level then reacts to the influences routed to it. Levels
//! are related by influence and perception graphs, and hierarchically coupled
//! levels exchange emergences (micro to macro) and constraints (macro to
//! micro). [`fms`] is a complete reference model of gradient-field AGV
//! routing with a deadlock-solving control level.

pub mod cli;
pub mod engine;
pub mod fms;
pub mod hierarchy;
pub mod level_graph;
pub mod scenario;
pub mod state;

pub use engine::{
    produce_influences, react, run, step, BehaviorRule, EngineError, InfluenceDraft, Model,
    NaturalRule, ReactionOutput, ReactionRule, RunResult, StepReport,
};
pub use level_graph::{validate, LevelGraphSpec, LevelId, ValidatedLevelGraph};
pub use state::{AgentId, Body, Influence, InfluenceSet, LevelState, SystemState};

//! Scenario files: JSON documents declaring the level graph, kind sets, rule
//! selections, hierarchy, FMS world and run parameters.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::engine::{stream_rng, Model, ModelError};
use crate::fms::assembly::{self, behavior_rule, fms_levels, natural_rule, reaction_rule};
use crate::fms::{Cell, FieldParams, FmsLevels, FmsWorld, GridMap, ModelDecls, TaskSpec};
use crate::hierarchy::HierarchyViolation;
use crate::level_graph::LevelId;
use crate::state::{AgentId, SystemState};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Placement {
    pub id: AgentId,
    pub cell: Cell,
}

/// AGVs placed explicitly, or a count placed on random free cells.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AgvPopulation {
    Placed(Vec<Placement>),
    Count { count: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FmsSpec {
    /// Rows of the grid, top first; `#` marks a blocked cell.
    pub grid: Vec<String>,
    pub shops: Vec<Placement>,
    pub agvs: AgvPopulation,
    pub tasks: Vec<TaskSpec>,
    #[serde(default)]
    pub params: FieldParams,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    pub ticks: u64,
    #[serde(default)]
    pub seed: u64,
    /// Name of the early-stop predicate; `all-delivered` is the only one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub terminate: Option<String>,
}

pub const TERMINATE_ALL_DELIVERED: &str = "all-delivered";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub name: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
    pub model: ModelDecls,
    pub fms: FmsSpec,
    /// Whether the deadlock level intervenes or only observes.
    #[serde(default)]
    pub control: bool,
    pub run: RunSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IssueClass {
    Syntax,
    LevelGraph,
    DanglingLevel,
    KindDiscipline,
    ConstraintOverConstraint,
    ForbiddenProducer,
    CouplingEdges,
    MissingReaction,
    UnknownReference,
    UnknownRule,
    BlockedCell,
    Placement,
    Parameter,
}

impl fmt::Display for IssueClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let v = serde_json::to_value(self).expect("issue class serializes");
        f.write_str(v.as_str().unwrap_or("issue"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioIssue {
    pub class: IssueClass,
    pub message: String,
}

impl ScenarioIssue {
    fn new(class: IssueClass, message: impl Into<String>) -> Self {
        Self {
            class,
            message: message.into(),
        }
    }
}

impl fmt::Display for ScenarioIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}] {}", self.class, self.message)
    }
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("syntax error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("bad override {0}")]
    Override(String),
    #[error("invalid scenario:\n{}", list(.0))]
    Invalid(Vec<ScenarioIssue>),
}

fn list(issues: &[ScenarioIssue]) -> String {
    issues.iter().map(|i| format!("  {i}")).collect::<Vec<_>>().join("\n")
}

impl ScenarioError {
    pub fn issues(&self) -> Vec<ScenarioIssue> {
        match self {
            ScenarioError::Invalid(v) => v.clone(),
            other => vec![ScenarioIssue::new(IssueClass::Syntax, other.to_string())],
        }
    }
}

/// `key=value` override of a scenario field. Keys are dotted paths into the
/// JSON document (`fms.params.attract`, `run.ticks`, `fms.tasks.0.release`);
/// values are parsed as JSON, falling back to a plain string.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Override {
    pub key: String,
    pub value: String,
}

impl Override {
    pub fn new(key: impl Into<String>, value: impl Into<String>) -> Self {
        Self {
            key: key.into(),
            value: value.into(),
        }
    }

    fn json_value(&self) -> Value {
        serde_json::from_str(&self.value).unwrap_or_else(|_| Value::String(self.value.clone()))
    }
}

impl FromStr for Override {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (k, v) = s.split_once('=').ok_or_else(|| format!("expected key=value, got {s:?}"))?;
        if k.is_empty() {
            return Err(format!("empty key in {s:?}"));
        }
        Ok(Self::new(k, v))
    }
}

impl fmt::Display for Override {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}={}", self.key, self.value)
    }
}

/// Applies overrides in order; later ones win.
pub fn apply_overrides(doc: &mut Value, overrides: &[Override]) -> Result<(), ScenarioError> {
    for o in overrides {
        let mut cur = &mut *doc;
        let parts: Vec<&str> = o.key.split('.').collect();
        for (n, part) in parts.iter().enumerate() {
            let last = n + 1 == parts.len();
            cur = match cur {
                Value::Object(map) => {
                    if last {
                        map.insert(part.to_string(), o.json_value());
                        break;
                    }
                    map.entry(part.to_string()).or_insert_with(|| Value::Object(Default::default()))
                }
                Value::Array(items) => {
                    let i: usize = part
                        .parse()
                        .map_err(|_| ScenarioError::Override(format!("{o}: {part} is not an index")))?;
                    let slot = items
                        .get_mut(i)
                        .ok_or_else(|| ScenarioError::Override(format!("{o}: index {i} out of range")))?;
                    if last {
                        *slot = o.json_value();
                        break;
                    }
                    slot
                }
                _ => return Err(ScenarioError::Override(format!("{o}: {part} is not inside an object"))),
            };
        }
    }
    Ok(())
}

/// Parses and validates scenario text. Overrides apply before validation.
pub fn parse_scenario_str(text: &str, overrides: &[Override]) -> Result<ScenarioSpec, ScenarioError> {
    let syntax = |e: serde_json::Error| ScenarioError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    };
    let mut doc: Value = serde_json::from_str(text).map_err(syntax)?;
    apply_overrides(&mut doc, overrides)?;
    let spec: ScenarioSpec = serde_json::from_value(doc).map_err(|e| {
        ScenarioError::Invalid(vec![ScenarioIssue::new(IssueClass::Syntax, e.to_string())])
    })?;
    let issues = spec.validate();
    if issues.is_empty() {
        Ok(spec)
    } else {
        Err(ScenarioError::Invalid(issues))
    }
}

pub fn parse_scenario(path: impl AsRef<Path>, overrides: &[Override]) -> Result<ScenarioSpec, ScenarioError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_scenario_str(&text, overrides)
}

/// A runnable scenario: the shared world, the bound model and tick 0.
pub struct BuiltScenario {
    pub world: Arc<FmsWorld>,
    pub model: Model,
    pub state: SystemState,
}

fn class_of(v: &HierarchyViolation) -> IssueClass {
    match v {
        HierarchyViolation::KindDiscipline { .. } => IssueClass::KindDiscipline,
        HierarchyViolation::ConstraintOverConstraint { .. } => IssueClass::ConstraintOverConstraint,
        HierarchyViolation::ForbiddenProducer { .. } | HierarchyViolation::ProducerNotPermitted { .. } => {
            IssueClass::ForbiddenProducer
        }
        HierarchyViolation::MissingCouplingEdge { .. } | HierarchyViolation::UndeclaredCoupling { .. } => {
            IssueClass::CouplingEdges
        }
        HierarchyViolation::UnknownLevel { .. } | HierarchyViolation::UnknownProducer { .. } => {
            IssueClass::UnknownReference
        }
        HierarchyViolation::ClassMismatch { .. }
        | HierarchyViolation::WrongTarget { .. }
        | HierarchyViolation::SelectorMismatch { .. } => IssueClass::KindDiscipline,
    }
}

fn model_issue(e: ModelError) -> ScenarioIssue {
    let class = match &e {
        ModelError::MissingReaction(_) => IssueClass::MissingReaction,
        ModelError::Hierarchy(v) => class_of(v),
        _ => IssueClass::UnknownReference,
    };
    ScenarioIssue::new(class, e.to_string())
}

impl ScenarioSpec {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn levels(&self) -> BTreeSet<&LevelId> {
        self.model.graph.levels.iter().collect()
    }

    /// Every problem with the scenario; empty when it is valid.
    pub fn validate(&self) -> Vec<ScenarioIssue> {
        use IssueClass::*;
        let mut out = Vec::new();
        let d = &self.model;
        let levels = self.levels();
        let known = |l: &LevelId| levels.contains(l);
        let stub = Arc::new(placeholder_world());

        if levels.is_empty() {
            out.push(ScenarioIssue::new(LevelGraph, "level set is empty"));
        }
        for (rel, edges) in [("influence", &d.graph.influence_edges), ("perception", &d.graph.perception_edges)] {
            for (a, b) in edges {
                for l in [a, b] {
                    if !known(l) {
                        out.push(ScenarioIssue::new(
                            DanglingLevel,
                            format!("{rel} edge ({a}, {b}) references unknown level {l}"),
                        ));
                    }
                }
            }
        }
        let structural = out.is_empty();

        for l in d.kinds.keys().filter(|l| !known(l)) {
            out.push(ScenarioIssue::new(UnknownReference, format!("kinds declared for unknown level {l}")));
        }
        for (l, rule) in &d.reactions {
            if !known(l) {
                out.push(ScenarioIssue::new(UnknownReference, format!("reaction declared for unknown level {l}")));
            }
            if reaction_rule(rule, &stub).is_none() {
                out.push(ScenarioIssue::new(UnknownRule, format!("level {l} uses unknown reaction {rule}")));
            }
        }
        for (kind, a) in &d.agent_kinds {
            for l in a.levels.iter().filter(|l| !known(l)) {
                out.push(ScenarioIssue::new(UnknownReference, format!("agent kind {kind} lives in unknown level {l}")));
            }
            if behavior_rule(&a.behavior, &stub).is_none() {
                out.push(ScenarioIssue::new(UnknownRule, format!("agent kind {kind} uses unknown behavior {}", a.behavior)));
            }
        }
        let mut env_ids = BTreeSet::new();
        for e in &d.environments {
            if !env_ids.insert(&e.id) {
                out.push(ScenarioIssue::new(UnknownReference, format!("environment {} declared twice", e.id)));
            }
            for l in e.levels.iter().filter(|l| !known(l)) {
                out.push(ScenarioIssue::new(UnknownReference, format!("environment {} in unknown level {l}", e.id)));
            }
            if natural_rule(&e.natural, &stub).is_none() {
                out.push(ScenarioIssue::new(UnknownRule, format!("environment {} uses unknown natural rule {}", e.id, e.natural)));
            }
        }
        if let Err(e) = fms_levels(d) {
            out.push(ScenarioIssue::new(MissingReaction, e.to_string()));
        }

        out.extend(self.validate_world());
        if self.run.ticks == 0 {
            out.push(ScenarioIssue::new(Parameter, "run.ticks must be positive"));
        }
        if let Some(t) = &self.run.terminate {
            if t != TERMINATE_ALL_DELIVERED {
                out.push(ScenarioIssue::new(UnknownRule, format!("unknown termination predicate {t}")));
            }
        }

        if structural {
            match assembly::assemble(d, stub.clone(), self.run.seed) {
                Ok(model) => {
                    if let Err(errs) = model.validate() {
                        for e in errs {
                            let issue = model_issue(e);
                            if !out.contains(&issue) {
                                out.push(issue);
                            }
                        }
                    }
                }
                Err(e) => {
                    let msg = e.to_string();
                    if !out.iter().any(|i| i.message == msg) {
                        out.push(ScenarioIssue::new(UnknownRule, msg));
                    }
                }
            }
        }
        out
    }

    fn validate_world(&self) -> Vec<ScenarioIssue> {
        use IssueClass::*;
        let mut out = Vec::new();
        let f = &self.fms;
        let grid = match GridMap::from_rows(&f.grid) {
            Ok(g) => Some(g),
            Err(e) => {
                out.push(ScenarioIssue::new(Placement, format!("grid: {e}")));
                None
            }
        };
        let p = &f.params;
        if p.attract <= 0 || p.repulse < 0 {
            out.push(ScenarioIssue::new(Parameter, "attract must be positive and repulse non-negative"));
        }
        if p.window < 2 {
            out.push(ScenarioIssue::new(Parameter, "window must be at least 2"));
        }

        let mut occupied: BTreeMap<Cell, &AgentId> = BTreeMap::new();
        let mut ids: BTreeSet<&AgentId> = BTreeSet::new();
        for s in &f.shops {
            if let Some(g) = &grid {
                if g.is_blocked(s.cell) {
                    out.push(ScenarioIssue::new(
                        BlockedCell,
                        format!("shop {} on blocked or out-of-range cell {}", s.id, s.cell),
                    ));
                }
            }
            if let Some(other) = occupied.insert(s.cell, &s.id) {
                out.push(ScenarioIssue::new(Placement, format!("shop {} shares cell {} with {other}", s.id, s.cell)));
            }
        }
        let shop_ids: BTreeSet<&AgentId> = f.shops.iter().map(|s| &s.id).collect();
        for s in &f.shops {
            if !ids.insert(&s.id) {
                out.push(ScenarioIssue::new(Placement, format!("duplicate id {}", s.id)));
            }
        }
        match &f.agvs {
            AgvPopulation::Placed(v) => {
                let mut agv_cells: BTreeMap<Cell, &AgentId> = BTreeMap::new();
                for a in v {
                    if let Some(g) = &grid {
                        if g.is_blocked(a.cell) {
                            out.push(ScenarioIssue::new(
                                BlockedCell,
                                format!("agv {} on blocked or out-of-range cell {}", a.id, a.cell),
                            ));
                        }
                    }
                    if let Some(other) = agv_cells.insert(a.cell, &a.id) {
                        out.push(ScenarioIssue::new(Placement, format!("agv {} shares cell {} with {other}", a.id, a.cell)));
                    }
                    if !ids.insert(&a.id) {
                        out.push(ScenarioIssue::new(Placement, format!("duplicate id {}", a.id)));
                    }
                }
            }
            AgvPopulation::Count { count } => {
                if let Some(g) = &grid {
                    if g.free_cells().count() < *count {
                        out.push(ScenarioIssue::new(Placement, format!("{count} AGVs do not fit on the free cells")));
                    }
                }
            }
        }
        let mut task_ids = BTreeSet::new();
        for t in &f.tasks {
            if !task_ids.insert(&t.id) {
                out.push(ScenarioIssue::new(Placement, format!("duplicate task id {}", t.id)));
            }
            for s in [&t.source, &t.dest] {
                if !shop_ids.contains(s) {
                    out.push(ScenarioIssue::new(UnknownReference, format!("task {} references unknown shop {s}", t.id)));
                }
            }
            if t.source == t.dest {
                out.push(ScenarioIssue::new(Parameter, format!("task {} has the same source and destination", t.id)));
            }
        }
        out
    }

    /// AGV placements, resolving a count into seeded random free cells away
    /// from shops.
    pub fn agv_placements(&self, grid: &GridMap) -> Vec<(AgentId, Cell)> {
        match &self.fms.agvs {
            AgvPopulation::Placed(v) => v.iter().map(|p| (p.id.clone(), p.cell)).collect(),
            AgvPopulation::Count { count } => {
                let shops: BTreeSet<Cell> = self.fms.shops.iter().map(|s| s.cell).collect();
                let mut free: Vec<Cell> = grid.free_cells().filter(|c| !shops.contains(c)).collect();
                if free.len() < *count {
                    free = grid.free_cells().collect();
                }
                let mut rng = stream_rng(self.run.seed, "placement", 0);
                free.shuffle(&mut rng);
                let mut cells: Vec<Cell> = free.into_iter().take(*count).collect();
                cells.sort();
                cells
                    .into_iter()
                    .enumerate()
                    .map(|(i, c)| (AgentId::new(format!("agv-{i:02}")), c))
                    .collect()
            }
        }
    }

    pub fn world(&self) -> Result<FmsWorld, ScenarioError> {
        let grid = GridMap::from_rows(&self.fms.grid)
            .map_err(|e| ScenarioError::Invalid(vec![ScenarioIssue::new(IssueClass::Placement, e)]))?;
        let levels = fms_levels(&self.model)
            .map_err(|e| ScenarioError::Invalid(vec![ScenarioIssue::new(IssueClass::MissingReaction, e.to_string())]))?;
        Ok(FmsWorld::new(
            grid,
            self.fms.shops.iter().map(|s| (s.id.clone(), s.cell)).collect(),
            self.fms.tasks.clone(),
            self.fms.params,
            levels,
            self.control,
        ))
    }

    /// Binds the model and builds the initial state.
    pub fn build(&self) -> Result<BuiltScenario, ScenarioError> {
        let issues = self.validate();
        if !issues.is_empty() {
            return Err(ScenarioError::Invalid(issues));
        }
        let world = Arc::new(self.world()?);
        let invalid = |e: assembly::AssemblyError| {
            ScenarioError::Invalid(vec![ScenarioIssue::new(IssueClass::UnknownRule, e.to_string())])
        };
        let model = assembly::assemble(&self.model, world.clone(), self.run.seed).map_err(invalid)?;
        let agvs = self.agv_placements(&world.grid);
        let state = assembly::initial_state(&model, &world, &agvs).map_err(invalid)?;
        Ok(BuiltScenario { world, model, state })
    }
}

fn placeholder_world() -> FmsWorld {
    FmsWorld::new(
        GridMap::open(1, 1),
        BTreeMap::new(),
        Vec::new(),
        FieldParams::default(),
        FmsLevels::default(),
        false,
    )
}

/// A scenario with the standard three-level model around the given world.
pub fn standard_scenario(name: &str, fms: FmsSpec, control: bool, run: RunSpec) -> ScenarioSpec {
    ScenarioSpec {
        name: name.into(),
        description: String::new(),
        model: assembly::standard_decls(),
        fms,
        control,
        run,
    }
}

//! Static multi-level structure: the level set, the influence and perception
//! relations between levels, and their in/out neighborhoods.
//!
//! Relations inside a single level are implicit, so every neighborhood of a
//! level contains the level itself and self-loop edges carry no information.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Name of a level. Levels carry no ordering semantics beyond their name.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LevelId(String);

impl LevelId {
    pub fn new(name: impl Into<String>) -> Self {
        Self(name.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for LevelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for LevelId {
    fn from(s: &str) -> Self {
        Self::new(s)
    }
}

/// Which of the two inter-level relations an edge or query refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Relation {
    Influence,
    Perception,
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Relation::Influence => f.write_str("influence"),
            Relation::Perception => f.write_str("perception"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    /// Levels with an edge into the queried level.
    In,
    /// Levels the queried level has an edge to.
    Out,
}

/// Raw, unvalidated level graph declaration. Edges are ordered pairs
/// `(from, to)`; duplicates and self-loops are tolerated here and removed by
/// [`validate`].
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelGraphSpec {
    pub levels: Vec<LevelId>,
    #[serde(default)]
    pub influence_edges: Vec<(LevelId, LevelId)>,
    #[serde(default)]
    pub perception_edges: Vec<(LevelId, LevelId)>,
}

impl LevelGraphSpec {
    pub fn new<L: Into<LevelId>>(levels: impl IntoIterator<Item = L>) -> Self {
        Self {
            levels: levels.into_iter().map(Into::into).collect(),
            ..Self::default()
        }
    }

    pub fn influence(mut self, from: impl Into<LevelId>, to: impl Into<LevelId>) -> Self {
        self.influence_edges.push((from.into(), to.into()));
        self
    }

    pub fn perception(mut self, from: impl Into<LevelId>, to: impl Into<LevelId>) -> Self {
        self.perception_edges.push((from.into(), to.into()));
        self
    }

    fn edges(&self, relation: Relation) -> &[(LevelId, LevelId)] {
        match relation {
            Relation::Influence => &self.influence_edges,
            Relation::Perception => &self.perception_edges,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("level set is empty")]
    EmptyLevelSet,
    #[error("{relation} edge ({from}, {to}) references unknown level {missing}")]
    UnknownLevelEndpoint {
        relation: Relation,
        from: LevelId,
        to: LevelId,
        missing: LevelId,
    },
    #[error("unknown level {0}")]
    UnknownLevel(LevelId),
}

/// Non-fatal normalization notes produced by [`validate`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GraphWarning {
    SelfLoopDropped { relation: Relation, level: LevelId },
    DuplicateEdgeDropped { relation: Relation, from: LevelId, to: LevelId },
    DuplicateLevelDropped(LevelId),
}

impl fmt::Display for GraphWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GraphWarning::SelfLoopDropped { relation, level } => {
                write!(f, "dropped {relation} self-loop on {level} (intra-level relations are implicit)")
            }
            GraphWarning::DuplicateEdgeDropped { relation, from, to } => {
                write!(f, "dropped duplicate {relation} edge ({from}, {to})")
            }
            GraphWarning::DuplicateLevelDropped(l) => write!(f, "dropped duplicate level {l}"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
struct Neighborhoods {
    influence_in: BTreeSet<LevelId>,
    influence_out: BTreeSet<LevelId>,
    perception_in: BTreeSet<LevelId>,
    perception_out: BTreeSet<LevelId>,
}

/// A normalized level graph with precomputed neighborhoods. Immutable once
/// built.
#[derive(Debug, Clone)]
pub struct ValidatedLevelGraph {
    spec: LevelGraphSpec,
    tables: BTreeMap<LevelId, Neighborhoods>,
    warnings: Vec<GraphWarning>,
}

impl PartialEq for ValidatedLevelGraph {
    // Warnings describe how the graph was obtained, not the graph itself.
    fn eq(&self, other: &Self) -> bool {
        self.spec == other.spec && self.tables == other.tables
    }
}

impl Eq for ValidatedLevelGraph {}

/// Normalizes `spec` and computes the four neighborhood tables.
///
/// Self-loops, duplicate edges and duplicate level names are dropped with a
/// warning. The normalized spec keeps levels and edges sorted.
pub fn validate(spec: LevelGraphSpec) -> Result<ValidatedLevelGraph, GraphError> {
    if spec.levels.is_empty() {
        return Err(GraphError::EmptyLevelSet);
    }
    let mut warnings = Vec::new();
    let mut levels = BTreeSet::new();
    for l in &spec.levels {
        if !levels.insert(l.clone()) {
            warnings.push(GraphWarning::DuplicateLevelDropped(l.clone()));
        }
    }

    let mut normalized = LevelGraphSpec {
        levels: levels.iter().cloned().collect(),
        ..LevelGraphSpec::default()
    };
    for relation in [Relation::Influence, Relation::Perception] {
        let mut kept = BTreeSet::new();
        for (from, to) in spec.edges(relation) {
            for end in [from, to] {
                if !levels.contains(end) {
                    return Err(GraphError::UnknownLevelEndpoint {
                        relation,
                        from: from.clone(),
                        to: to.clone(),
                        missing: end.clone(),
                    });
                }
            }
            if from == to {
                warnings.push(GraphWarning::SelfLoopDropped {
                    relation,
                    level: from.clone(),
                });
            } else if !kept.insert((from.clone(), to.clone())) {
                warnings.push(GraphWarning::DuplicateEdgeDropped {
                    relation,
                    from: from.clone(),
                    to: to.clone(),
                });
            }
        }
        let kept: Vec<_> = kept.into_iter().collect();
        match relation {
            Relation::Influence => normalized.influence_edges = kept,
            Relation::Perception => normalized.perception_edges = kept,
        }
    }

    let mut tables: BTreeMap<LevelId, Neighborhoods> = levels
        .iter()
        .map(|l| {
            let own: BTreeSet<LevelId> = [l.clone()].into();
            let n = Neighborhoods {
                influence_in: own.clone(),
                influence_out: own.clone(),
                perception_in: own.clone(),
                perception_out: own,
            };
            (l.clone(), n)
        })
        .collect();
    for (from, to) in &normalized.influence_edges {
        tables.get_mut(from).unwrap().influence_out.insert(to.clone());
        tables.get_mut(to).unwrap().influence_in.insert(from.clone());
    }
    for (from, to) in &normalized.perception_edges {
        tables.get_mut(from).unwrap().perception_out.insert(to.clone());
        tables.get_mut(to).unwrap().perception_in.insert(from.clone());
    }

    Ok(ValidatedLevelGraph {
        spec: normalized,
        tables,
        warnings,
    })
}

impl ValidatedLevelGraph {
    pub fn spec(&self) -> &LevelGraphSpec {
        &self.spec
    }

    pub fn warnings(&self) -> &[GraphWarning] {
        &self.warnings
    }

    pub fn levels(&self) -> impl Iterator<Item = &LevelId> {
        self.tables.keys()
    }

    pub fn contains(&self, l: &LevelId) -> bool {
        self.tables.contains_key(l)
    }

    pub fn has_edge(&self, relation: Relation, from: &LevelId, to: &LevelId) -> bool {
        self.spec
            .edges(relation)
            .binary_search(&(from.clone(), to.clone()))
            .is_ok()
    }

    pub fn neighborhood(
        &self,
        relation: Relation,
        direction: Direction,
        l: &LevelId,
    ) -> Result<&BTreeSet<LevelId>, GraphError> {
        let n = self
            .tables
            .get(l)
            .ok_or_else(|| GraphError::UnknownLevel(l.clone()))?;
        Ok(match (relation, direction) {
            (Relation::Influence, Direction::In) => &n.influence_in,
            (Relation::Influence, Direction::Out) => &n.influence_out,
            (Relation::Perception, Direction::In) => &n.perception_in,
            (Relation::Perception, Direction::Out) => &n.perception_out,
        })
    }

    /// Levels into which agents and environments of `l` may produce influences.
    pub fn out_influence(&self, l: &LevelId) -> Result<&BTreeSet<LevelId>, GraphError> {
        self.neighborhood(Relation::Influence, Direction::Out, l)
    }

    /// Levels allowed to influence `l`.
    pub fn in_influence(&self, l: &LevelId) -> Result<&BTreeSet<LevelId>, GraphError> {
        self.neighborhood(Relation::Influence, Direction::In, l)
    }

    /// Levels whose dynamic state agents of `l` may perceive.
    pub fn out_perception(&self, l: &LevelId) -> Result<&BTreeSet<LevelId>, GraphError> {
        self.neighborhood(Relation::Perception, Direction::Out, l)
    }

    /// Levels whose agents may perceive `l`.
    pub fn in_perception(&self, l: &LevelId) -> Result<&BTreeSet<LevelId>, GraphError> {
        self.neighborhood(Relation::Perception, Direction::In, l)
    }

    /// Union of a neighborhood over several levels.
    pub fn union<'a>(
        &self,
        relation: Relation,
        direction: Direction,
        levels: impl IntoIterator<Item = &'a LevelId>,
    ) -> Result<BTreeSet<LevelId>, GraphError> {
        let mut out = BTreeSet::new();
        for l in levels {
            out.extend(self.neighborhood(relation, direction, l)?.iter().cloned());
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(names: &[&str]) -> BTreeSet<LevelId> {
        names.iter().map(|n| LevelId::from(*n)).collect()
    }

    #[test]
    fn perception_edge_is_one_way() {
        let g = validate(LevelGraphSpec::new(["l", "l2"]).perception("l", "l2")).unwrap();
        assert!(g.warnings().is_empty());
        assert_eq!(g.out_perception(&"l".into()).unwrap(), &set(&["l", "l2"]));
        assert_eq!(g.out_perception(&"l2".into()).unwrap(), &set(&["l2"]));
        assert_eq!(g.in_perception(&"l2".into()).unwrap(), &set(&["l", "l2"]));
    }

    #[test]
    fn self_loop_dropped_with_warning() {
        let g = validate(LevelGraphSpec::new(["l"]).influence("l", "l")).unwrap();
        assert_eq!(
            g.warnings(),
            &[GraphWarning::SelfLoopDropped {
                relation: Relation::Influence,
                level: "l".into()
            }]
        );
        assert!(g.spec().influence_edges.is_empty());
        assert_eq!(g.out_influence(&"l".into()).unwrap(), &set(&["l"]));
    }

    #[test]
    fn dangling_endpoint_rejected() {
        let err = validate(LevelGraphSpec::new(["l"]).influence("l", "x")).unwrap_err();
        assert!(matches!(err, GraphError::UnknownLevelEndpoint { missing, .. } if missing.as_str() == "x"));
    }

    #[test]
    fn empty_level_set_rejected() {
        assert_eq!(
            validate(LevelGraphSpec::default()).unwrap_err(),
            GraphError::EmptyLevelSet
        );
    }

    #[test]
    fn hierarchical_pair_neighborhoods() {
        let g = validate(
            LevelGraphSpec::new(["micro", "macro"])
                .influence("micro", "macro")
                .influence("macro", "micro"),
        )
        .unwrap();
        assert_eq!(g.out_influence(&"micro".into()).unwrap(), &set(&["micro", "macro"]));

        let g = validate(LevelGraphSpec::new(["micro", "macro"]).influence("micro", "macro")).unwrap();
        assert_eq!(g.in_influence(&"macro".into()).unwrap(), &set(&["macro", "micro"]));
        assert_eq!(g.in_influence(&"micro".into()).unwrap(), &set(&["micro"]));
    }

    #[test]
    fn no_edges_gives_singletons() {
        let g = validate(LevelGraphSpec::new(["a", "b", "c"])).unwrap();
        for l in ["a", "b", "c"] {
            assert_eq!(g.out_perception(&l.into()).unwrap(), &set(&[l]));
            assert_eq!(g.out_influence(&l.into()).unwrap(), &set(&[l]));
        }
    }

    #[test]
    fn unknown_level_query() {
        let g = validate(LevelGraphSpec::new(["a"])).unwrap();
        assert_eq!(
            g.out_influence(&"z".into()).unwrap_err(),
            GraphError::UnknownLevel("z".into())
        );
    }

    #[test]
    fn duplicates_are_collapsed() {
        let g = validate(
            LevelGraphSpec::new(["a", "b", "a"])
                .influence("a", "b")
                .influence("a", "b"),
        )
        .unwrap();
        assert_eq!(g.spec().levels.len(), 2);
        assert_eq!(g.spec().influence_edges.len(), 1);
        assert_eq!(g.warnings().len(), 2);
        let again = validate(g.spec().clone()).unwrap();
        assert_eq!(again, g);
        assert!(again.warnings().is_empty());
    }
}

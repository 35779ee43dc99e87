#![allow(dead_code)]
pub mod toy;

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::path::PathBuf;

use irm::cli::{execute, RunArtifacts};
use irm::scenario::{parse_scenario, Override, ScenarioSpec};
use irm::state::{Influence, InfluenceClass};
use irm::LevelId;

pub fn scenario_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name)
}

pub fn load(name: &str, overrides: &[Override]) -> ScenarioSpec {
    parse_scenario(&scenario_path(name), overrides).unwrap_or_else(|e| panic!("{name}: {e}"))
}

pub fn run_fixture(name: &str, control: bool) -> RunArtifacts {
    let o = [Override::new("control", control.to_string())];
    let spec = load(name, &o);
    execute(&spec, &o, false).unwrap_or_else(|e| panic!("{name}: {e}"))
}

/// Neighborhood straight from the raw edge list: the level itself plus
/// every endpoint of an edge leaving (`out`) or entering it.
pub fn neighborhood_oracle(edges: &[(LevelId, LevelId)], l: &LevelId, out: bool) -> BTreeSet<LevelId> {
    let mut s: BTreeSet<LevelId> = edges
        .iter()
        .filter_map(|(a, b)| match out {
            true if a == l => Some(b.clone()),
            false if b == l => Some(a.clone()),
            _ => None,
        })
        .collect();
    s.insert(l.clone());
    s
}

/// Which influences survive a set of constraints, computed through the JSON
/// forms of selector and influence.
pub fn inhibition_oracle(set: &[Influence]) -> BTreeSet<String> {
    let sels: Vec<serde_json::Value> = set
        .iter()
        .filter_map(|i| match &i.class {
            InfluenceClass::Constraint(s) => Some(serde_json::to_value(s).unwrap()),
            _ => None,
        })
        .collect();
    let mut survivors = BTreeSet::new();
    for i in set {
        if i.class != InfluenceClass::Ordinary {
            if i.class == InfluenceClass::Emergence {
                survivors.insert(i.id.to_string());
            }
            continue;
        }
        let iv = serde_json::to_value(i).unwrap();
        let hit = sels.iter().any(|s| {
            s["kind"] == iv["kind"]
                && s.get("producer").map_or(true, |p| *p == iv["id"]["producer"])
                && s.get("payload").and_then(|p| p.as_object()).map_or(true, |m| {
                    m.iter().all(|(k, v)| iv["payload"].get(k) == Some(v))
                })
        });
        if !hit {
            survivors.insert(i.id.to_string());
        }
    }
    survivors
}

/// BFS over the text rows (`#` blocked), returning distances from `from`.
pub fn bfs_rows(rows: &[&str], from: (i32, i32)) -> BTreeMap<(i32, i32), i64> {
    let grid: Vec<Vec<bool>> = rows.iter().map(|r| r.chars().map(|c| c != '#').collect()).collect();
    let free = |x: i32, y: i32| {
        y >= 0 && (y as usize) < grid.len() && x >= 0 && (x as usize) < grid[y as usize].len() && grid[y as usize][x as usize]
    };
    let mut d = BTreeMap::new();
    if !free(from.0, from.1) {
        return d;
    }
    let mut q = VecDeque::from([from]);
    d.insert(from, 0);
    while let Some((x, y)) = q.pop_front() {
        let here = d[&(x, y)];
        for (dx, dy) in [(1, 0), (-1, 0), (0, 1), (0, -1)] {
            let n = (x + dx, y + dy);
            if free(n.0, n.1) && !d.contains_key(&n) {
                d.insert(n, here + 1);
                q.push_back(n);
            }
        }
    }
    d
}

/// Superposed field by direct summation: attraction `max(0, A - d)` from
/// each attractor, minus `max(0, R - d)` from each repeller.
pub fn field_oracle(rows: &[&str], attract: &[(i32, i32)], a: i64, repel: &[(i32, i32)], r: i64) -> BTreeMap<(i32, i32), i64> {
    let mut out = BTreeMap::new();
    for (y, row) in rows.iter().enumerate() {
        for (x, c) in row.chars().enumerate() {
            if c != '#' {
                out.insert((x as i32, y as i32), 0);
            }
        }
    }
    for (src, amp, sign) in attract.iter().map(|s| (s, a, 1)).chain(repel.iter().map(|s| (s, r, -1))) {
        for (cell, d) in bfs_rows(rows, *src) {
            *out.get_mut(&cell).unwrap() += sign * (amp - d).max(0);
        }
    }
    out
}

/// Each negative fixture and the issue class it must be rejected with.
pub const NEGATIVE: [(&str, irm::scenario::IssueClass); 10] = {
    use irm::scenario::IssueClass::*;
    [
        ("emergence_kind_in_micro", KindDiscipline),
        ("constraint_kind_in_macro", KindDiscipline),
        ("dangling_level_edge", DanglingLevel),
        ("constraint_over_constraint", ConstraintOverConstraint),
        ("emergence_by_macro_behavior", ForbiddenProducer),
        ("shop_on_blocked_cell", BlockedCell),
        ("coupling_missing_reverse", CouplingEdges),
        ("constraint_by_micro_agent", ForbiddenProducer),
        ("missing_reaction", MissingReaction),
        ("unknown_reference", UnknownReference),
    ]
};

pub fn negative_classes(name: &str) -> Vec<irm::scenario::IssueClass> {
    match parse_scenario(scenario_path(&format!("negative/{name}.json")), &[]) {
        Ok(_) => Vec::new(),
        Err(e) => e.issues().into_iter().map(|i| i.class).collect(),
    }
}

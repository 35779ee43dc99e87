mod common;

use irm::scenario::{apply_overrides, parse_scenario_str, IssueClass, Override, ScenarioError};
use serde_json::json;

#[test]
fn fixtures_round_trip_through_print() {
    for name in ["corridor.json", "trap.json", "single_task.json", "busy_floor.json"] {
        let spec = common::load(name, &[]);
        let again = parse_scenario_str(&spec.to_json(), &[]).unwrap();
        assert_eq!(spec, again, "{name}");
        assert_eq!(spec.to_json(), again.to_json());
    }
}

#[test]
fn negative_fixtures_are_rejected_with_their_class() {
    for (name, class) in common::NEGATIVE {
        let got = common::negative_classes(name);
        assert!(got.contains(&class), "{name}: expected {class:?}, got {got:?}");
    }
}

#[test]
fn overrides_follow_dotted_paths() {
    let mut doc = json!({"run": {"ticks": 5}, "fms": {"tasks": [{"release": 0}]}, "name": "x"});
    apply_overrides(
        &mut doc,
        &[
            "run.ticks=40".parse().unwrap(),
            "fms.tasks.0.release=3".parse().unwrap(),
            "name=plain text".parse().unwrap(),
        ],
    )
    .unwrap();
    assert_eq!(doc, json!({"run": {"ticks": 40}, "fms": {"tasks": [{"release": 3}]}, "name": "plain text"}));
}

#[test]
fn later_overrides_win() {
    let o = [Override::new("run.seed", "1"), Override::new("run.seed", "9"), Override::new("control", "false")];
    let spec = common::load("corridor.json", &o);
    assert_eq!(spec.run.seed, 9);
    assert!(!spec.control);
}

#[test]
fn bad_override_text_is_refused() {
    assert!("novalue".parse::<Override>().is_err());
    assert!("=3".parse::<Override>().is_err());
    let text = std::fs::read_to_string(common::scenario_path("corridor.json")).unwrap();
    let err = parse_scenario_str(&text, &[Override::new("fms.tasks.9.release", "1")]).unwrap_err();
    assert!(matches!(err, ScenarioError::Override(_)), "{err}");
}

#[test]
fn syntax_errors_carry_a_position() {
    let err = parse_scenario_str("{\n  \"name\": ,\n}", &[]).unwrap_err();
    assert!(matches!(err, ScenarioError::Parse { line: 2, .. }), "{err}");
    assert_eq!(err.issues()[0].class, IssueClass::Syntax);
}

#[test]
fn unknown_fields_are_refused() {
    let text = std::fs::read_to_string(common::scenario_path("corridor.json")).unwrap();
    let err = parse_scenario_str(&text, &[Override::new("fms.params.gain", "2")]).unwrap_err();
    assert_eq!(err.issues()[0].class, IssueClass::Syntax);
}

#[test]
fn parameter_ranges_are_checked() {
    let text = std::fs::read_to_string(common::scenario_path("corridor.json")).unwrap();
    let err = parse_scenario_str(&text, &[Override::new("fms.params.window", "1")]).unwrap_err();
    assert!(err.issues().iter().any(|i| i.class == IssueClass::Parameter));
}

#[test]
fn agv_count_places_deterministically() {
    let a = common::load("busy_floor.json", &[]);
    let w = a.world().unwrap();
    let p1 = a.agv_placements(&w.grid);
    let p2 = a.agv_placements(&w.grid);
    assert_eq!(p1, p2);
    assert_eq!(p1.len(), 4);
    let cells: std::collections::BTreeSet<_> = p1.iter().map(|(_, c)| *c).collect();
    assert_eq!(cells.len(), 4);
    assert!(cells.iter().all(|c| w.grid.is_free(*c)));
    let b = common::load("busy_floor.json", &[Override::new("run.seed", "7")]);
    assert_ne!(b.agv_placements(&w.grid), p1);
}

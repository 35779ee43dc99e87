use irm_web::{compare, scenario_names, Demo, Session, SCENARIOS};

#[test]
fn every_bundled_scenario_loads() {
    for (name, _) in SCENARIOS {
        let s = Session::new(name, true).unwrap();
        assert_eq!(s.tick(), 0);
        assert_eq!(s.spec().name, name);
    }
    assert!(Session::new("nowhere", true).is_err());
}

#[test]
fn stepping_corridor_with_control_delivers() {
    let mut s = Session::new("corridor", true).unwrap();
    let t = s.step(100).unwrap();
    let f = s.frame();
    assert_eq!(f.summary.tasks_delivered, 2);
    assert_eq!(f.tick, t);
    // stops once everything is delivered
    assert_eq!(s.step(10).unwrap(), t);
}

#[test]
fn frame_shows_grid_and_bodies() {
    let s = Session::new("corridor", false).unwrap();
    let f = s.frame();
    assert_eq!((f.width, f.height), (10, 2));
    assert_eq!(f.blocked.len(), 9);
    assert_eq!(f.agvs.len(), 2);
    assert_eq!(f.shops.len(), 2);
    assert!(f.agvs.iter().all(|a| !a.governed));
}

#[test]
fn field_reflects_amplitudes() {
    let mut s = Session::new("single_task", true).unwrap();
    s.step(1).unwrap();
    // the source shop at (0,0) emits once its job is released
    let f = s.field(16, 0).unwrap();
    assert_eq!(f.len(), 9);
    assert_eq!(f[0], 16);
    assert_eq!(f[8], 12);
    let weaker = s.field(5, 0).unwrap();
    assert_eq!(weaker[8], 1);
}

#[test]
fn comparison_verdicts() {
    let c = compare("corridor").unwrap();
    assert_eq!(c.verdict, irm::cli::VERDICT_RESOLVED);
    assert_eq!(compare("open_floor").unwrap().verdict, irm::cli::VERDICT_NO_DEADLOCK);
    assert!(compare("trap").unwrap().verdict.contains("NoEscapePath"));
}

#[test]
fn wrapper_returns_json() {
    let mut d = Demo::new("corridor", true).unwrap();
    d.step(3).unwrap();
    let v: serde_json::Value = serde_json::from_str(&d.frame()).unwrap();
    assert_eq!(v["tick"], 3);
    let names: Vec<String> = serde_json::from_str(&scenario_names()).unwrap();
    assert_eq!(names.len(), SCENARIOS.len());
}

//! Browser demo: step a bundled AGV scenario, look at its potential field
//! under chosen amplitudes, and compare runs with the deadlock control off
//! and on.
//!
//! [`Session`] holds all the logic and is usable natively; [`Demo`] is the
//! thin wasm-bindgen wrapper the page talks to.

use std::sync::Arc;

use irm::cli::{execute, verdict};
use irm::engine::step;
use irm::fms::deadlock::governed;
use irm::fms::{agv_bodies, compute_fields, floor_bodies, FmsWorld, RunSummary};
use irm::scenario::{parse_scenario_str, Override, ScenarioSpec};
use irm::{Model, SystemState};
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Scenarios shipped with the page, by name.
pub const SCENARIOS: [(&str, &str); 5] = [
    ("corridor", include_str!("../../core/scenarios/corridor.json")),
    ("busy_floor", include_str!("../../core/scenarios/busy_floor.json")),
    ("open_floor", include_str!("../../core/scenarios/open_floor.json")),
    ("trap", include_str!("../../core/scenarios/trap.json")),
    ("single_task", include_str!("../../core/scenarios/single_task.json")),
];

fn scenario(name: &str, control: bool) -> Result<ScenarioSpec, String> {
    let (_, text) = SCENARIOS
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| format!("unknown scenario {name}"))?;
    parse_scenario_str(text, &[Override::new("control", control.to_string())]).map_err(|e| e.to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgvView {
    pub id: String,
    pub x: i32,
    pub y: i32,
    pub carrying: bool,
    pub governed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShopView {
    pub id: String,
    pub x: i32,
    pub y: i32,
    pub emitting: bool,
}

/// Everything the page draws for one tick.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Frame {
    pub tick: u64,
    pub width: i32,
    pub height: i32,
    pub blocked: Vec<(i32, i32)>,
    pub agvs: Vec<AgvView>,
    pub shops: Vec<ShopView>,
    pub summary: RunSummary,
}

pub struct Session {
    spec: ScenarioSpec,
    world: Arc<FmsWorld>,
    model: Model,
    state: SystemState,
}

impl Session {
    pub fn new(name: &str, control: bool) -> Result<Self, String> {
        let spec = scenario(name, control)?;
        let built = spec.build().map_err(|e| e.to_string())?;
        Ok(Self {
            spec,
            world: built.world,
            model: built.model,
            state: built.state,
        })
    }

    pub fn tick(&self) -> u64 {
        self.state.time
    }

    /// Advances up to `n` ticks, stopping early once every task is delivered.
    pub fn step(&mut self, n: u32) -> Result<u64, String> {
        for _ in 0..n {
            if irm::fms::metrics::all_delivered(&self.world, &self.state) {
                break;
            }
            self.state = step(&self.model, &self.state).map_err(|e| e.to_string())?;
        }
        Ok(self.state.time)
    }

    pub fn frame(&self) -> Frame {
        let levels = &self.world.levels;
        let floor = self.state.level(&levels.floor).expect("floor level");
        let held = self.state.level(&levels.control).map(governed).unwrap_or_default();
        let (agvs, shops) = floor_bodies(&floor.bodies);
        let stop = irm::engine::StopReason::TickBudget;
        Frame {
            tick: self.state.time,
            width: self.world.grid.width(),
            height: self.world.grid.height(),
            blocked: self.world.grid.blocked_cells().into_iter().map(|c| (c.0, c.1)).collect(),
            agvs: agvs
                .iter()
                .map(|(id, a)| AgvView {
                    id: id.to_string(),
                    x: a.cell.0,
                    y: a.cell.1,
                    carrying: a.carrying.is_some(),
                    governed: held.contains(id),
                })
                .collect(),
            shops: shops
                .iter()
                .map(|(id, s)| ShopView {
                    id: id.to_string(),
                    x: s.cell.0,
                    y: s.cell.1,
                    emitting: s.emitting,
                })
                .collect(),
            summary: RunSummary::from_state(&self.world, &self.state, stop, self.state.time),
        }
    }

    /// Net potential of the current floor, row-major, with the given
    /// shop attraction and AGV repulsion amplitudes.
    pub fn field(&self, attract: i64, repulse: i64) -> Result<Vec<i64>, String> {
        let floor = self.state.level(&self.world.levels.floor).map_err(|e| e.to_string())?;
        let agvs = agv_bodies(floor);
        let (_, shops) = floor_bodies(&floor.bodies);
        let f = compute_fields(&self.world.grid, shops.values(), agvs.values(), attract, repulse)
            .map_err(|e| e.to_string())?;
        Ok(f.values)
    }

    pub fn spec(&self) -> &ScenarioSpec {
        &self.spec
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonView {
    pub off: RunSummary,
    pub on: RunSummary,
    pub verdict: String,
}

/// Runs a bundled scenario with control off and on under the same seed.
pub fn compare(name: &str) -> Result<ComparisonView, String> {
    let run = |control: bool| -> Result<RunSummary, String> {
        let spec = scenario(name, control)?;
        Ok(execute(&spec, &[], false).map_err(|e| e.to_string())?.summary)
    };
    let (off, on) = (run(false)?, run(true)?);
    let verdict = verdict(&off, &on);
    Ok(ComparisonView { off, on, verdict })
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("view serializes")
}

#[wasm_bindgen]
pub fn scenario_names() -> String {
    to_json(&SCENARIOS.iter().map(|(n, _)| *n).collect::<Vec<_>>())
}

/// Control off/on comparison as JSON.
#[wasm_bindgen]
pub fn compare_modes(name: &str) -> Result<String, String> {
    compare(name).map(|c| to_json(&c))
}

#[wasm_bindgen]
pub struct Demo {
    session: Session,
}

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new(name: &str, control: bool) -> Result<Demo, String> {
        Session::new(name, control).map(|session| Demo { session })
    }

    pub fn step(&mut self, n: u32) -> Result<u32, String> {
        self.session.step(n).map(|t| t as u32)
    }

    /// Current frame as JSON.
    pub fn frame(&self) -> String {
        to_json(&self.session.frame())
    }

    /// Row-major field values as JSON.
    pub fn field(&self, attract: i32, repulse: i32) -> Result<String, String> {
        self.session.field(attract as i64, repulse as i64).map(|v| to_json(&v))
    }
}

//! Scalar potential fields over the grid: emitters contribute a linearly
//! decaying term over BFS distance, contributions add up.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::grid::{Cell, GridMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    Attract,
    Repulse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Emitter {
    pub cell: Cell,
    pub amplitude: i64,
    pub polarity: Polarity,
}

impl Emitter {
    pub fn attract(cell: Cell, amplitude: i64) -> Self {
        Self {
            cell,
            amplitude,
            polarity: Polarity::Attract,
        }
    }

    pub fn repulse(cell: Cell, amplitude: i64) -> Self {
        Self {
            cell,
            amplitude,
            polarity: Polarity::Repulse,
        }
    }

    /// Signed contribution at BFS distance `d` (`None` for unreachable cells).
    pub fn term(&self, d: Option<u32>) -> i64 {
        let Some(d) = d else { return 0 };
        let v = (self.amplitude - d as i64).max(0);
        match self.polarity {
            Polarity::Attract => v,
            Polarity::Repulse => -v,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FieldError {
    #[error("emitter at {0} is on a blocked or out-of-range cell")]
    EmitterOnBlockedCell(Cell),
}

/// Net potential per cell; blocked cells hold 0.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldSample {
    pub width: i32,
    pub height: i32,
    pub values: Vec<i64>,
}

impl FieldSample {
    pub fn zero(grid: &GridMap) -> Self {
        Self {
            width: grid.width(),
            height: grid.height(),
            values: vec![0; grid.len()],
        }
    }

    pub fn at(&self, c: Cell) -> Option<i64> {
        if c.0 < 0 || c.1 < 0 || c.0 >= self.width || c.1 >= self.height {
            return None;
        }
        Some(self.values[(c.1 * self.width + c.0) as usize])
    }
}

/// Superposes all emitters. Distances run over free cells only.
pub fn compute_field(grid: &GridMap, emitters: &[Emitter]) -> Result<FieldSample, FieldError> {
    if let Some(e) = emitters.iter().find(|e| grid.is_blocked(e.cell)) {
        return Err(FieldError::EmitterOnBlockedCell(e.cell));
    }
    let mut field = FieldSample::zero(grid);
    for e in emitters {
        let dist = grid.distances(e.cell);
        for (i, d) in dist.into_iter().enumerate() {
            field.values[i] += e.term(d);
        }
    }
    Ok(field)
}

/// Field of the emitting shops (amplitude `attract`) and the AGVs with
/// repulsion switched on (amplitude `repulse`).
pub fn compute_fields<'a>(
    grid: &GridMap,
    shops: impl IntoIterator<Item = &'a super::ShopBody>,
    agvs: impl IntoIterator<Item = &'a super::AgvBody>,
    attract: i64,
    repulse: i64,
) -> Result<FieldSample, FieldError> {
    let mut emitters: Vec<Emitter> = shops
        .into_iter()
        .filter(|s| s.emitting)
        .map(|s| Emitter::attract(s.cell, attract))
        .collect();
    emitters.extend(
        agvs.into_iter()
            .filter(|a| a.repulsion_on)
            .map(|a| Emitter::repulse(a.cell, repulse)),
    );
    compute_field(grid, &emitters)
}

use std::collections::{BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

/// Grid cell `(x, y)`; `x` grows to the right, `y` downwards. Ordering is
/// lexicographic on `(x, y)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Cell(pub i32, pub i32);

impl Cell {
    pub fn x(self) -> i32 {
        self.0
    }

    pub fn y(self) -> i32 {
        self.1
    }

    pub fn is_adjacent(self, other: Cell) -> bool {
        (self.0 - other.0).abs() + (self.1 - other.1).abs() == 1
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.0, self.1)
    }
}

/// Rectangular 4-connected shop floor with blocked cells.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridMap {
    width: i32,
    height: i32,
    blocked: Vec<bool>,
}

impl GridMap {
    pub fn open(width: i32, height: i32) -> Self {
        assert!(width > 0 && height > 0, "grid dimensions must be positive");
        Self {
            width,
            height,
            blocked: vec![false; (width * height) as usize],
        }
    }

    pub fn with_blocked(width: i32, height: i32, blocked: impl IntoIterator<Item = Cell>) -> Self {
        let mut g = Self::open(width, height);
        for c in blocked {
            if g.in_bounds(c) {
                let i = g.index(c);
                g.blocked[i] = true;
            }
        }
        g
    }

    /// Parses rows of `#` (blocked) and any other character (free). All rows
    /// must have the same length.
    pub fn from_rows<S: AsRef<str>>(rows: &[S]) -> Result<Self, String> {
        let height = rows.len();
        if height == 0 {
            return Err("grid has no rows".into());
        }
        let width = rows[0].as_ref().chars().count();
        if width == 0 {
            return Err("grid has empty rows".into());
        }
        let mut blocked = Vec::new();
        for (y, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.chars().count() != width {
                return Err(format!("row {y} has length {}, expected {width}", row.chars().count()));
            }
            for (x, ch) in row.chars().enumerate() {
                if ch == '#' {
                    blocked.push(Cell(x as i32, y as i32));
                }
            }
        }
        Ok(Self::with_blocked(width as i32, height as i32, blocked))
    }

    pub fn to_rows(&self) -> Vec<String> {
        (0..self.height)
            .map(|y| {
                (0..self.width)
                    .map(|x| if self.is_blocked(Cell(x, y)) { '#' } else { '.' })
                    .collect()
            })
            .collect()
    }

    pub fn width(&self) -> i32 {
        self.width
    }

    pub fn height(&self) -> i32 {
        self.height
    }

    pub fn len(&self) -> usize {
        self.blocked.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocked.is_empty()
    }

    pub fn in_bounds(&self, c: Cell) -> bool {
        c.0 >= 0 && c.1 >= 0 && c.0 < self.width && c.1 < self.height
    }

    pub fn index(&self, c: Cell) -> usize {
        (c.1 * self.width + c.0) as usize
    }

    pub fn cell_at(&self, index: usize) -> Cell {
        let i = index as i32;
        Cell(i % self.width, i / self.width)
    }

    pub fn is_blocked(&self, c: Cell) -> bool {
        !self.in_bounds(c) || self.blocked[self.index(c)]
    }

    pub fn is_free(&self, c: Cell) -> bool {
        !self.is_blocked(c)
    }

    pub fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..self.len()).map(|i| self.cell_at(i))
    }

    pub fn free_cells(&self) -> impl Iterator<Item = Cell> + '_ {
        self.cells().filter(|c| self.is_free(*c))
    }

    pub fn blocked_cells(&self) -> BTreeSet<Cell> {
        self.cells().filter(|c| self.is_blocked(*c)).collect()
    }

    /// Free 4-neighbors in lexicographic order.
    pub fn neighbors(&self, c: Cell) -> Vec<Cell> {
        let mut out: Vec<Cell> = [
            Cell(c.0 - 1, c.1),
            Cell(c.0, c.1 - 1),
            Cell(c.0, c.1 + 1),
            Cell(c.0 + 1, c.1),
        ]
        .into_iter()
        .filter(|n| self.is_free(*n))
        .collect();
        out.sort();
        out
    }

    /// Breadth-first distances over free cells from `from`, treating
    /// `obstacles` as blocked (the start cell is always expanded).
    pub fn distances_avoiding(&self, from: Cell, obstacles: &BTreeSet<Cell>) -> Vec<Option<u32>> {
        let mut dist = vec![None; self.len()];
        if self.is_blocked(from) {
            return dist;
        }
        dist[self.index(from)] = Some(0);
        let mut queue = VecDeque::from([from]);
        while let Some(c) = queue.pop_front() {
            let d = dist[self.index(c)].unwrap();
            for n in self.neighbors(c) {
                let i = self.index(n);
                if dist[i].is_none() && !obstacles.contains(&n) {
                    dist[i] = Some(d + 1);
                    queue.push_back(n);
                }
            }
        }
        dist
    }

    pub fn distances(&self, from: Cell) -> Vec<Option<u32>> {
        self.distances_avoiding(from, &BTreeSet::new())
    }

    pub fn distance(&self, from: Cell, to: Cell) -> Option<u32> {
        if self.is_blocked(to) {
            return None;
        }
        self.distances(from)[self.index(to)]
    }

    /// Shortest path `from ..= to` avoiding `obstacles` (the endpoints may be
    /// obstacles). Among equal-length paths, each step goes to the
    /// lexicographically smallest cell still on a shortest path.
    pub fn shortest_path(&self, from: Cell, to: Cell, obstacles: &BTreeSet<Cell>) -> Option<Vec<Cell>> {
        if self.is_blocked(from) || self.is_blocked(to) {
            return None;
        }
        let mut obs = obstacles.clone();
        obs.remove(&to);
        obs.remove(&from);
        // distances measured from the goal so the forward walk can descend
        let back = self.distances_avoiding(to, &obs);
        back[self.index(from)]?;
        let mut path = vec![from];
        let mut cur = from;
        while cur != to {
            let d = back[self.index(cur)].unwrap();
            cur = self
                .neighbors(cur)
                .into_iter()
                .filter(|n| !obs.contains(n) || *n == to)
                .find(|n| back[self.index(*n)] == Some(d - 1))
                .expect("distance field descends to the goal");
            path.push(cur);
        }
        Some(path)
    }

    /// First step of the shortest path, or `None` when already there or
    /// unreachable.
    pub fn first_step(&self, from: Cell, to: Cell, obstacles: &BTreeSet<Cell>) -> Option<Cell> {
        self.shortest_path(from, to, obstacles)
            .and_then(|p| p.get(1).copied())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_round_trip() {
        let rows = ["..#", "#..", "..."];
        let g = GridMap::from_rows(&rows).unwrap();
        assert_eq!(g.width(), 3);
        assert!(g.is_blocked(Cell(2, 0)));
        assert!(g.is_blocked(Cell(0, 1)));
        assert!(g.is_blocked(Cell(-1, 0)));
        assert_eq!(g.to_rows(), vec!["..#", "#..", "..."]);
        assert!(GridMap::from_rows(&["..", "."]).is_err());
    }

    #[test]
    fn bfs_respects_walls() {
        let g = GridMap::from_rows(&["...", "##.", "..."]).unwrap();
        assert_eq!(g.distance(Cell(0, 0), Cell(0, 2)), Some(6));
        assert_eq!(g.distance(Cell(0, 0), Cell(0, 1)), None);
    }

    #[test]
    fn shortest_path_tie_break_is_lexicographic() {
        let g = GridMap::open(3, 3);
        let p = g.shortest_path(Cell(0, 0), Cell(1, 1), &BTreeSet::new()).unwrap();
        // both (0,1) and (1,0) are on shortest paths; (0,1) < (1,0)
        assert_eq!(p, vec![Cell(0, 0), Cell(0, 1), Cell(1, 1)]);
    }

    #[test]
    fn path_around_obstacles() {
        let g = GridMap::open(3, 2);
        let obs: BTreeSet<Cell> = [Cell(1, 0)].into();
        let p = g.shortest_path(Cell(0, 0), Cell(2, 0), &obs).unwrap();
        assert_eq!(p.len(), 5);
        assert!(!p.contains(&Cell(1, 0)));
        let wall: BTreeSet<Cell> = [Cell(1, 0), Cell(1, 1)].into();
        assert_eq!(g.shortest_path(Cell(0, 0), Cell(2, 0), &wall), None);
        assert_eq!(g.first_step(Cell(0, 0), Cell(0, 0), &BTreeSet::new()), None);
    }
}

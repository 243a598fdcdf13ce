//! Grid primitives shared by the world, sensing, featurization and planning code.
//!
//! Coordinates are integer cells with the origin at the top-left corner, `x`
//! growing rightward and `y` growing downward. Dense per-cell data is stored
//! row-major (`y * width + x`).

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};

/// A grid cell. Ordered lexicographically by `(x, y)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(from = "[usize; 2]", into = "[usize; 2]")]
pub struct Cell {
    pub x: usize,
    pub y: usize,
}

impl Cell {
    pub const fn new(x: usize, y: usize) -> Self {
        Self { x, y }
    }

    pub fn dist_sq(self, other: Cell) -> usize {
        let dx = self.x.abs_diff(other.x);
        let dy = self.y.abs_diff(other.y);
        dx * dx + dy * dy
    }

    pub fn dist(self, other: Cell) -> f64 {
        (self.dist_sq(other) as f64).sqrt()
    }

    pub fn manhattan(self, other: Cell) -> usize {
        self.x.abs_diff(other.x) + self.y.abs_diff(other.y)
    }
}

impl From<[usize; 2]> for Cell {
    fn from([x, y]: [usize; 2]) -> Self {
        Self { x, y }
    }
}

impl From<Cell> for [usize; 2] {
    fn from(c: Cell) -> Self {
        [c.x, c.y]
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

/// Map extent in cells.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub width: usize,
    pub height: usize,
}

impl Dims {
    pub const fn new(width: usize, height: usize) -> Self {
        Self { width, height }
    }

    pub fn area(self) -> usize {
        self.width * self.height
    }

    pub fn contains(self, c: Cell) -> bool {
        c.x < self.width && c.y < self.height
    }

    pub fn index(self, c: Cell) -> usize {
        debug_assert!(self.contains(c));
        c.y * self.width + c.x
    }

    pub fn cell(self, index: usize) -> Cell {
        Cell::new(index % self.width, index / self.width)
    }

    /// All cells in row-major order.
    pub fn cells(self) -> impl Iterator<Item = Cell> {
        (0..self.area()).map(move |i| self.cell(i))
    }

    /// 4-connected neighbours inside the map, in the fixed order up, left, right, down.
    pub fn neighbors4(self, c: Cell) -> impl Iterator<Item = Cell> {
        let mut out = [None; 4];
        if c.y > 0 {
            out[0] = Some(Cell::new(c.x, c.y - 1));
        }
        if c.x > 0 {
            out[1] = Some(Cell::new(c.x - 1, c.y));
        }
        if c.x + 1 < self.width {
            out[2] = Some(Cell::new(c.x + 1, c.y));
        }
        if c.y + 1 < self.height {
            out[3] = Some(Cell::new(c.x, c.y + 1));
        }
        out.into_iter().flatten()
    }
}

/// Breadth-first path lengths over 4-connected unit-cost moves.
///
/// `passable` decides which cells may be entered; the start cell is always
/// expanded. Cells farther than `max_len` steps are left unreached.
pub fn bfs_lengths(
    dims: Dims,
    start: Cell,
    max_len: Option<u32>,
    passable: impl Fn(Cell) -> bool,
) -> Vec<Option<u32>> {
    let mut len = vec![None; dims.area()];
    len[dims.index(start)] = Some(0);
    let mut queue = VecDeque::from([start]);
    while let Some(c) = queue.pop_front() {
        let next = len[dims.index(c)].unwrap() + 1;
        if max_len.is_some_and(|m| next > m) {
            continue;
        }
        for n in dims.neighbors4(c) {
            let i = dims.index(n);
            if len[i].is_none() && passable(n) {
                len[i] = Some(next);
                queue.push_back(n);
            }
        }
    }
    len
}

/// Cells of the discrete line from `from` to `to`, endpoints included.
///
/// Steps along the major axis and rounds the minor offset half away from
/// zero, so the traced cells mirror exactly when the map is reflected.
pub fn line_cells(from: Cell, to: Cell) -> Vec<Cell> {
    let dx = to.x as i64 - from.x as i64;
    let dy = to.y as i64 - from.y as i64;
    let (major, minor) = if dx.abs() >= dy.abs() { (dx, dy) } else { (dy, dx) };
    let steps = major.abs();
    let mut out = Vec::with_capacity(steps as usize + 1);
    for k in 0..=steps {
        let major_off = k * major.signum();
        let minor_off = if steps == 0 {
            0
        } else {
            // round(k * |minor| / steps), ties away from zero
            let mag = (2 * k * minor.abs() + steps) / (2 * steps);
            mag * minor.signum()
        };
        let (ox, oy) = if dx.abs() >= dy.abs() {
            (major_off, minor_off)
        } else {
            (minor_off, major_off)
        };
        out.push(Cell::new(
            (from.x as i64 + ox) as usize,
            (from.y as i64 + oy) as usize,
        ));
    }
    out
}

/// True when no cell strictly between the endpoints is blocked.
pub fn line_of_sight(from: Cell, to: Cell, blocked: impl Fn(Cell) -> bool) -> bool {
    let cells = line_cells(from, to);
    let n = cells.len();
    cells.iter().take(n.saturating_sub(1)).skip(1).all(|&c| !blocked(c))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_endpoints_and_length() {
        let l = line_cells(Cell::new(1, 1), Cell::new(5, 3));
        assert_eq!(l.first(), Some(&Cell::new(1, 1)));
        assert_eq!(l.last(), Some(&Cell::new(5, 3)));
        assert_eq!(l.len(), 5);
        assert_eq!(line_cells(Cell::new(2, 2), Cell::new(2, 2)), vec![Cell::new(2, 2)]);
    }

    #[test]
    fn line_tie_rounds_away_from_start() {
        // (0,0)->(2,1): midpoint offset 0.5 rounds to 1
        assert_eq!(
            line_cells(Cell::new(0, 0), Cell::new(2, 1)),
            vec![Cell::new(0, 0), Cell::new(1, 1), Cell::new(2, 1)]
        );
        // mirrored in x
        assert_eq!(
            line_cells(Cell::new(2, 0), Cell::new(0, 1)),
            vec![Cell::new(2, 0), Cell::new(1, 1), Cell::new(0, 1)]
        );
    }

    #[test]
    fn bfs_respects_walls_and_budget() {
        let dims = Dims::new(3, 3);
        let wall = Cell::new(1, 0);
        let len = bfs_lengths(dims, Cell::new(0, 0), None, |c| c != wall);
        assert_eq!(len[dims.index(Cell::new(2, 0))], Some(4));
        assert_eq!(len[dims.index(wall)], None);
        let capped = bfs_lengths(dims, Cell::new(0, 0), Some(2), |c| c != wall);
        assert_eq!(capped[dims.index(Cell::new(1, 1))], Some(2));
        assert_eq!(capped[dims.index(Cell::new(2, 1))], None);
    }

    #[test]
    fn cell_serializes_as_pair() {
        let s = serde_json::to_string(&Cell::new(3, 4)).unwrap();
        assert_eq!(s, "[3,4]");
    }
}
